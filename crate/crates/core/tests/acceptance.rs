//! Acceptance suite. Each criterion prints one PASS/FAIL line; the process
//! exits with status 1 if any fails.

mod common;

use std::error::Error as StdError;
use std::time::Instant;

use aggcausal::aggregation::consistency_check_example1;
use aggcausal::confounding::{
    check_representability, classify_realization, structural_equation_report, Verdict, EXACT_TOL,
};
use aggcausal::graph_criteria::{backdoor_check, chain_check, generalized_backdoor};
use aggcausal::scenarios::{self, Scenario, ScenarioName};
use aggcausal::synthesis::{
    cdf_noise, construct_h, discrete_kernel_construction, from_delta, ks_uniformity,
    random_masked_spec, reconstruct_on_samples, shift_equivalence_check,
    synthesize_gaussian_inhibitor, theorem2_instance, GaussianInhibitorProblem, ScalarLinearModel,
};
use aggcausal::{AggregatedModel, Distribution, MacroValue, MicroRealization};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

type Outcome = Result<String, Box<dyn StdError>>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), Box<dyn StdError>> {
    if cond {
        Ok(())
    } else {
        Err(msg.into().into())
    }
}

fn ones(n: usize) -> DVector<f64> {
    DVector::from_element(n, 1.0)
}

// Gaussian P(Ȳ | x̄) for X ~ N(mx, Cx), Y = B X + U, U ~ N(my, Cy), both summed.
fn summed_conditional(
    mx: &DVector<f64>,
    cx: &DMatrix<f64>,
    b: &DMatrix<f64>,
    my: &DVector<f64>,
    cy: &DMatrix<f64>,
    xbar: f64,
) -> (f64, f64) {
    let (ex, ey) = (ones(mx.len()), ones(my.len()));
    let m_x = ex.dot(mx);
    let m_y = ey.dot(&(b * mx + my));
    let v_x = (ex.transpose() * cx * &ex)[(0, 0)];
    let c_xy = (ex.transpose() * cx * b.transpose() * &ey)[(0, 0)];
    let v_y = (ey.transpose() * (b * cx * b.transpose() + cy) * &ey)[(0, 0)];
    (m_y + c_xy / v_x * (xbar - m_x), v_y - c_xy * c_xy / v_x)
}

fn natural_inhibits() -> Outcome {
    let natural = MicroRealization::natural("Xbar");
    let mut worst = 0.0f64;
    let mut oracle_gap = 0.0f64;
    for i in 0..20u64 {
        let n = [2, 3, 5][i as usize % 3];
        let m = common::unconfounded_gaussian(1000 + i, n);
        let rep = classify_realization(&m, &natural, "Ybar", None, EXACT_TOL)?;
        ensure(
            rep.verdict == Verdict::Inhibiting,
            format!("gaussian seed {i}: {}", rep.verdict),
        )?;
        worst = worst.max(rep.max_discrepancy);
        let lin = m.scm().as_linear()?;
        let b = lin.coefficient("X", "Y").ok_or("missing edge")?;
        let (ux, uy) = (&lin.noise()[0], &lin.noise()[1]);
        for (x, obs) in rep.grid.iter().zip(&rep.observational) {
            let (mean, var) =
                summed_conditional(&ux.mean, &ux.cov, b, &uy.mean, &uy.cov, x.as_real());
            let g = obs.as_gaussian()?;
            oracle_gap = oracle_gap
                .max((g.mean[0] - mean).abs() / mean.abs().max(1.0))
                .max((g.cov[(0, 0)] - var).abs() / var.abs().max(1.0));
        }
    }
    for i in 0..20u64 {
        let m = common::unconfounded_categorical(2000 + i);
        let rep = classify_realization(&m, &natural, "Ybar", None, EXACT_TOL)?;
        ensure(
            rep.verdict == Verdict::Inhibiting,
            format!("categorical seed {i}: {}", rep.verdict),
        )?;
        worst = worst.max(rep.max_discrepancy);
        oracle_gap = oracle_gap.max(categorical_oracle_gap(&m, &rep.grid, &rep.observational)?);
    }
    ensure(worst <= 1e-8, format!("max discrepancy {worst:e}"))?;
    ensure(
        oracle_gap <= 1e-10,
        format!("observational conditional off oracle by {oracle_gap:e}"),
    )?;
    Ok(format!(
        "40 models, max discrepancy {worst:.1e}, oracle gap {oracle_gap:.1e}"
    ))
}

// Direct CPT sums for P(Ȳ | x̄) in `X → Y`.
fn categorical_oracle_gap(
    m: &AggregatedModel,
    grid: &[MacroValue],
    observational: &[Distribution],
) -> Result<f64, Box<dyn StdError>> {
    let scm = m.scm().as_categorical()?;
    let (px, py_x) = (scm.cpt(0), scm.cpt(1));
    let (nx, ny) = (scm.states(0), scm.states(1));
    let ky = m.macro_card("Ybar")?;
    let mut gap = 0.0f64;
    for (v, obs) in grid.iter().zip(observational) {
        let c = v.as_category()?;
        let mut p = vec![0.0; ky];
        for x in 0..nx {
            if m.macro_of_state("Xbar", x)? != c {
                continue;
            }
            for y in 0..ny {
                p[m.macro_of_state("Ybar", y)?] += px[x] * py_x[x * ny + y];
            }
        }
        let total: f64 = p.iter().sum();
        let got = &obs.as_categorical()?.probs;
        for (a, b) in p.iter().zip(got) {
            gap = gap.max((a / total - b).abs());
        }
    }
    Ok(gap)
}

fn shops_slopes() -> Outcome {
    // Cov(X̄, Ȳ) / Var(X̄) = (2·1 + 5·4) / 5 and the slope of shop B's experiment.
    const NATURAL: f64 = 4.4;
    const SEQUENTIAL: f64 = 5.0;
    let m = scenarios::shops_model([2.0, 5.0], [10.0, 20.0], [1.0, 4.0])?;
    let nat = structural_equation_report(&m, &MicroRealization::natural("Xbar"), "Ybar")?;
    let seq = structural_equation_report(
        &m,
        &MicroRealization::sequential("Xbar", vec![0, 1]),
        "Ybar",
    )?;
    ensure(
        (nat.beta - NATURAL).abs() <= 1e-10,
        format!("natural slope {}", nat.beta),
    )?;
    ensure(
        (seq.beta - SEQUENTIAL).abs() <= 1e-10,
        format!("sequential slope {}", seq.beta),
    )?;
    let rep = scenarios::run(&Scenario::new(ScenarioName::Shops), 0)?;
    let mc: Vec<_> = rep
        .rows
        .iter()
        .filter(|r| r.quantity.starts_with("Monte-Carlo"))
        .collect();
    ensure(mc.len() == 2, "missing Monte-Carlo rows")?;
    for r in &mc {
        ensure(
            r.ok,
            format!("{} = {} (expected {})", r.quantity, r.value, r.expected),
        )?;
    }
    ensure(rep.pass, format!("shops scenario failed:\n{rep}"))?;
    Ok(format!(
        "natural {:.12}, sequential {:.12}, Monte-Carlo {} / {}",
        nat.beta, seq.beta, mc[0].value, mc[1].value
    ))
}

fn micro_intervention_consistency() -> Outcome {
    let (m, ivs) = scenarios::micro_intervention_model([2.0, 5.0])?;
    let v = consistency_check_example1(&m, &ivs, 1e-10)?;
    ensure(!v.consistent, "distinct prices reported CONSISTENT")?;
    let w = v.witness.ok_or("no witness")?;
    ensure(
        (w.macro_values["Xbar"] - 1.0).abs() <= 1e-12,
        "witness is not at xbar = 1",
    )?;
    let mut effects: Vec<f64> = Vec::new();
    for d in &w.effects {
        effects.push(d.marginal(&["Ybar"])?.as_gaussian()?.mean[0]);
    }
    effects.sort_by(f64::total_cmp);
    ensure(
        (effects[0] - 2.0).abs() <= 1e-10 && (effects[1] - 5.0).abs() <= 1e-10,
        format!("witness effects {effects:?}"),
    )?;
    let (m, ivs) = scenarios::micro_intervention_model([3.0, 3.0])?;
    let eq = consistency_check_example1(&m, &ivs, 1e-10)?;
    ensure(eq.consistent, "equal prices reported INCONSISTENT")?;
    Ok(format!(
        "INCONSISTENT with effects {effects:?} at xbar = 1; CONSISTENT for equal prices"
    ))
}

fn gaussian_inhibitor() -> Outcome {
    let grid = vec![-2.0, 0.0, 1.5, 4.0];
    let (mut found, mut seed, mut worst, mut route) = (0, 0u64, 0.0f64, 0.0f64);
    while found < 20 && seed < 500 {
        seed += 1;
        let n = 2 + (seed % 2) as usize;
        let m = common::confounded_gaussian(3000 + seed, n);
        let p = GaussianInhibitorProblem::from_model(&m, "Xbar", "Ybar", grid.clone())?;
        let mean = p.alpha.iter().sum::<f64>() / n as f64;
        let spread: f64 = p.alpha.iter().map(|a| (a - mean).powi(2)).sum();
        let v = synthesize_gaussian_inhibitor(&m, "Xbar", "Ybar", grid.clone())?;
        if spread <= 1e-6 || v.solution.slack <= 1e-6 {
            continue;
        }
        found += 1;
        let rep = v
            .report
            .ok_or("feasible instance without a classification")?;
        ensure(
            rep.verdict == Verdict::Inhibiting,
            format!("seed {seed}: {}", rep.verdict),
        )?;
        worst = worst.max(rep.max_discrepancy);
        let noise_var = p.joint.cov[(n, n)];
        let geometric = p.conditional_variance_geometric()? - noise_var;
        route = route.max((geometric - v.solution.slack).abs() / v.solution.slack.abs().max(1.0));
    }
    ensure(
        found == 20,
        format!("only {found} instances with positive slack"),
    )?;
    ensure(worst <= 1e-8, format!("max discrepancy {worst:e}"))?;
    ensure(route <= 1e-8, format!("slack routes differ by {route:e}"))?;
    let mut r = common::rng(7);
    for _ in 0..10 {
        let a = r.random_range(-4.0..4.0);
        let g = [r.random_range(-2.0..2.0), r.random_range(-2.0..2.0)];
        let m = scenarios::promotion_model([a, a], g)?;
        let v = synthesize_gaussian_inhibitor(&m, "Xbar", "Ybar", grid.clone())?;
        ensure(
            !v.solution.feasible,
            format!("alpha = ({a}, {a}) reported feasible"),
        )?;
    }
    Ok(format!(
        "20 instances (tried {seed}), max discrepancy {worst:.1e}, slack routes {route:.1e}; 10 parallel cases infeasible"
    ))
}

// Exact P(Y | x), P(Y | do(x)) and the macro pair by summing CPT entries.
fn enumeration_oracle(
    m: &AggregatedModel,
    pi_x: &[usize],
    pi_y: &[usize],
    realization: &[Vec<f64>],
) -> Result<(f64, f64, f64), Box<dyn StdError>> {
    let scm = m.scm().as_categorical()?;
    let (nz, nx, ny) = (scm.states(0), scm.states(1), scm.states(2));
    let (pz, px_z, py_xz) = (scm.cpt(0), scm.cpt(1), scm.cpt(2));
    let kx = pi_x.iter().max().map_or(0, |m| m + 1);
    let ky = pi_y.iter().max().map_or(0, |m| m + 1);
    let pxz = |x: usize, z: usize| pz[z] * px_z[z * nx + x];
    let py = |y: usize, x: usize, z: usize| py_xz[(z * nx + x) * ny + y];
    let px: Vec<f64> = (0..nx).map(|x| (0..nz).map(|z| pxz(x, z)).sum()).collect();
    let obs: Vec<Vec<f64>> = (0..nx)
        .map(|x| {
            (0..ny)
                .map(|y| (0..nz).map(|z| pxz(x, z) * py(y, x, z)).sum::<f64>() / px[x])
                .collect()
        })
        .collect();
    let dox: Vec<Vec<f64>> = (0..nx)
        .map(|x| {
            (0..ny)
                .map(|y| (0..nz).map(|z| pz[z] * py(y, x, z)).sum())
                .collect()
        })
        .collect();
    let coarse = |p: &[f64]| {
        let mut q = vec![0.0; ky];
        for (y, v) in p.iter().enumerate() {
            q[pi_y[y]] += v;
        }
        q
    };
    let tv = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| (p - q).abs()).sum::<f64>() / 2.0;
    let (mut xy, mut xybar, mut mac) = (0.0f64, 0.0f64, 0.0f64);
    for x in 0..nx {
        xy = xy.max(tv(&obs[x], &dox[x]));
        xybar = xybar.max(tv(&coarse(&obs[x]), &coarse(&dox[x])));
    }
    for c in 0..kx {
        let fibre: Vec<usize> = (0..nx).filter(|&x| pi_x[x] == c).collect();
        let mass: f64 = fibre.iter().map(|&x| px[x]).sum();
        let (mut o, mut d) = (vec![0.0; ky], vec![0.0; ky]);
        for &x in &fibre {
            let (co, cd) = (coarse(&obs[x]), coarse(&dox[x]));
            for k in 0..ky {
                o[k] += px[x] / mass * co[k];
                d[k] += realization[c][x] * cd[k];
            }
        }
        mac = mac.max(tv(&o, &d));
    }
    Ok((xy, xybar, mac))
}

fn masked_instances() -> Outcome {
    let (mut min_xy, mut min_xybar, mut max_mac) = (f64::INFINITY, f64::INFINITY, 0.0f64);
    for seed in 0..10u64 {
        let spec = random_masked_spec(3, 3, 4, 2, 2, seed)?;
        let inst = theorem2_instance(&spec, seed)?;
        let (xy, xybar, mac) =
            enumeration_oracle(&inst.model, &spec.pi_x, &spec.pi_y, &spec.realization)?;
        ensure(
            xy > 1e-9 && xybar > 1e-9,
            format!("seed {seed}: not confounded ({xy:e}, {xybar:e})"),
        )?;
        ensure(mac <= 1e-12, format!("seed {seed}: macro gap {mac:e}"))?;
        ensure(
            (xy - inst.xy_gap).abs() <= 1e-12 && (xybar - inst.xybar_gap).abs() <= 1e-12,
            format!("seed {seed}: engine gaps differ from CPT sums"),
        )?;
        min_xy = min_xy.min(xy);
        min_xybar = min_xybar.min(xybar);
        max_mac = max_mac.max(mac);
    }
    Ok(format!(
        "10 seeds, min TV(X,Y) {min_xy:.2e}, min TV(X,Ybar) {min_xybar:.2e}, max macro TV {max_mac:.1e}"
    ))
}

fn kernel_tables() -> Outcome {
    let mut r = common::rng(11);
    let (mut resid, mut min_gap) = (0.0f64, f64::INFINITY);
    for case in 0..10 {
        let (rows, cols, k) = (
            r.random_range(3..6),
            r.random_range(2..5),
            r.random_range(2..5),
        );
        let mut v = common::matrix(&mut r, rows, cols);
        let mean = v.sum() / (rows * cols) as f64;
        v.add_scalar_mut(-mean);
        let mut u = common::matrix(&mut r, rows, cols);
        for mut row in u.row_iter_mut() {
            let m = row.sum() / cols as f64;
            row.add_scalar_mut(-m);
        }
        let t = discrete_kernel_construction(&v, &u, k)?;
        let mut total = vec![0.0; k];
        for i in 0..rows {
            let mut g = vec![0.0; k];
            for j in 0..cols {
                let p = &t.rows[i][j];
                ensure(
                    p.len() == k && p.iter().all(|&q| q >= 0.0),
                    format!("case {case}: bad row"),
                )?;
                ensure(
                    (p.iter().sum::<f64>() - 1.0).abs() <= 1e-12,
                    format!("case {case}: row sum"),
                )?;
                for c in 0..k {
                    total[c] += p[c] * v[(i, j)];
                    g[c] += p[c] * u[(i, j)];
                }
            }
            min_gap = min_gap.min(g.iter().fold(0.0f64, |m, x| m.max(x.abs())));
        }
        resid = resid.max(total.iter().fold(0.0f64, |m, x| m.max(x.abs())));
    }
    ensure(
        resid <= 1e-12,
        format!("null combination residual {resid:e}"),
    )?;
    ensure(min_gap > 1e-9, format!("a row gap vanished ({min_gap:e})"))?;
    Ok(format!(
        "10 tables, residual {resid:.1e}, smallest row gap {min_gap:.2e}"
    ))
}

// Partial covariance of (X̄, Z̄) given Ȳ from the chain's coefficient matrices.
fn chain_partial_cov(m: &AggregatedModel) -> Result<(f64, f64), Box<dyn StdError>> {
    let lin = m.scm().as_linear()?;
    let a = lin.coefficient("X", "Y").ok_or("missing X -> Y")?;
    let b = lin.coefficient("Y", "Z").ok_or("missing Y -> Z")?;
    let (cx, cy, cz) = (
        &lin.noise()[0].cov,
        &lin.noise()[1].cov,
        &lin.noise()[2].cov,
    );
    let vy = a * cx * a.transpose() + cy;
    let vz = b * &vy * b.transpose() + cz;
    let (ex, ey, ez) = (ones(cx.nrows()), ones(cy.nrows()), ones(cz.nrows()));
    let s = |l: &DVector<f64>, c: &DMatrix<f64>, r: &DVector<f64>| (l.transpose() * c * r)[(0, 0)];
    let c_xy = s(&ex, &(cx * a.transpose()), &ey);
    let c_xz = s(&ex, &(cx * a.transpose() * b.transpose()), &ez);
    let c_yz = s(&ey, &(&vy * b.transpose()), &ez);
    let v_y = s(&ey, &vy, &ey);
    let scale = s(&ex, cx, &ex).max(s(&ez, &vz, &ez)).max(1.0);
    Ok((c_xz - c_xy * c_yz / v_y, scale))
}

fn chain_iff() -> Outcome {
    let mut cases: Vec<(String, AggregatedModel, bool)> = (0..20u64)
        .map(|i| {
            (
                format!("random {i}"),
                common::chain(4000 + i, i % 2 == 0),
                i % 2 == 0,
            )
        })
        .collect();
    cases.push((
        "constructed through".into(),
        scenarios::chain_model(true)?,
        true,
    ));
    cases.push((
        "constructed generic".into(),
        scenarios::chain_model(false)?,
        false,
    ));
    let mut n_indep = 0;
    for (name, m, through) in &cases {
        let v = chain_check(m, "Xbar", "Ybar", "Zbar", None, None, EXACT_TOL)?;
        let gap_says = v.effect_gap <= EXACT_TOL;
        ensure(
            v.independence_holds == gap_says,
            format!("{name}: verdicts disagree"),
        )?;
        let (pc, scale) = chain_partial_cov(m)?;
        let oracle = pc.abs() <= 1e-9 * scale;
        ensure(
            oracle == v.independence_holds,
            format!("{name}: partial covariance {pc:e} vs verdict"),
        )?;
        ensure(
            oracle == *through,
            format!("{name}: independence {oracle} but through = {through}"),
        )?;
        n_indep += usize::from(oracle);
    }
    Ok(format!(
        "{} chains agree ({n_indep} independent)",
        cases.len()
    ))
}

fn backdoor_adjustment() -> Outcome {
    let mut worst = 0.0f64;
    let mut models = vec![scenarios::backdoor_model(true)?];
    models.extend((0..10u64).map(|i| common::blocking_backdoor(5000 + i)));
    for (i, m) in models.iter().enumerate() {
        let v = backdoor_check(m, "Xbar", "Ybar", "Zbar", None, EXACT_TOL)?;
        ensure(
            v.blocking_condition,
            format!("instance {i}: blocking condition fails"),
        )?;
        worst = worst.max(v.adjustment_gap);
    }
    ensure(worst <= 1e-8, format!("adjustment gap {worst:e}"))?;
    let m = scenarios::two_sets_model()?;
    let grid: Vec<MacroValue> = [-1.0, 0.5, 2.0].map(MacroValue::Real).to_vec();
    let c = generalized_backdoor(&m, "Tbar", "Ybar", &["Cbar"], None, Some(&grid), EXACT_TOL)?;
    let w = generalized_backdoor(&m, "Tbar", "Ybar", &["Wbar"], None, Some(&grid), EXACT_TOL)?;
    for v in [&c, &w] {
        ensure(
            v.no_descendants && v.blocks_backdoor_paths && v.blocking_condition,
            format!("{:?} is not a valid adjustment set", v.adjustment),
        )?;
    }
    let mut agree = 0.0f64;
    for ((_, a), (_, b)) in c.effects.iter().zip(&w.effects) {
        agree = agree.max(a.discrepancy(b)?);
    }
    ensure(agree <= 1e-8, format!("sets disagree by {agree:e}"))?;
    Ok(format!(
        "{} instances, max gap {worst:.1e}; sets agree to {agree:.1e}",
        models.len()
    ))
}

fn shift_route() -> Outcome {
    let mut r = common::rng(13);
    let mut unconfounded = 0;
    for i in 0..20 {
        let x_var: f64 = r.random_range(0.2..4.0);
        let n_var = r.random_range(0.2..4.0);
        let cov_xn = if i % 2 == 0 {
            0.0
        } else {
            let rho: f64 = r.random_range(0.1..0.9) * if r.random_bool(0.5) { 1.0 } else { -1.0 };
            rho * (x_var * n_var).sqrt()
        };
        let m = ScalarLinearModel {
            a: r.random_range(-3.0..3.0),
            x_mean: r.random_range(-2.0..2.0),
            x_var,
            n_mean: r.random_range(-2.0..2.0),
            n_var,
            cov_xn,
        };
        let v = shift_equivalence_check(&m, &[-1.0, 0.0, 0.7, 2.5], &[0.5, -1.25], 1e-10)?;
        ensure(v.atomic == v.shift, format!("model {i}: routes disagree"))?;
        ensure(
            v.atomic == (cov_xn == 0.0),
            format!("model {i}: verdict {} with Cov(X, N) = {cov_xn}", v.atomic),
        )?;
        unconfounded += usize::from(v.atomic);
    }
    Ok(format!("20 models agree ({unconfounded} unconfounded)"))
}

fn coordinate_change() -> Outcome {
    let mut r = common::rng(17);
    let (mut worst_res, mut worst_beta) = (0.0f64, 0.0f64);
    for i in 0..20 {
        let n = r.random_range(2..7);
        let alpha = common::vector(&mut r, n);
        let c = r.random_range(-10.0..10.0);
        let h = construct_h(&alpha, c)?;
        let (hm, hi) = (h.h_matrix(), h.h_inv_matrix());
        ensure(
            hm.row(0).iter().all(|&x| (x - 1.0).abs() <= 1e-12),
            format!("case {i}: first row"),
        )?;
        let res = (&hm * &hi - DMatrix::identity(n, n)).abs().max();
        let beta: f64 = alpha.iter().zip(&h.delta).map(|(a, d)| a * d).sum();
        worst_res = worst_res.max(res);
        worst_beta = worst_beta.max((beta - c).abs());
    }
    ensure(worst_res <= 1e-10, format!("H H^-1 residual {worst_res:e}"))?;
    ensure(
        worst_beta <= 1e-10,
        format!("alpha . delta off by {worst_beta:e}"),
    )?;
    let d = from_delta(&[2.0, 5.0], &[0.2, 0.8])?;
    let shops = scenarios::shops_model([2.0, 5.0], [10.0, 20.0], [1.0, 4.0])?;
    let nat = structural_equation_report(&shops, &MicroRealization::natural("Xbar"), "Ybar")?;
    ensure(
        (d.beta - 4.4).abs() <= 1e-10,
        format!("beta for (0.2, 0.8) is {}", d.beta),
    )?;
    ensure(
        (nat.beta - 4.4).abs() <= 1e-10,
        format!("natural beta is {}", nat.beta),
    )?;
    Ok(format!(
        "20 cases, residual {worst_res:.1e}, target error {worst_beta:.1e}; beta 4.4"
    ))
}

fn deterministic_allocation() -> Outcome {
    // (α1 - α2)² σ1² σ2² / (σ1² + σ2²) = 9 · 4 / 5.
    const COND_VAR: f64 = 7.2;
    let m = scenarios::shops_model([2.0, 5.0], [10.0, 20.0], [1.0, 4.0])?;
    let det = MicroRealization::deterministic("Xbar", vec![0.2, 0.8]);
    let rep = classify_realization(&m, &det, "Ybar", None, EXACT_TOL)?;
    for (x, (d, o)) in rep
        .grid
        .iter()
        .zip(rep.interventional.iter().zip(&rep.observational))
    {
        ensure(
            d.is_degenerate(1e-10),
            format!("do({x:?}) is not degenerate"),
        )?;
        let var = o.as_gaussian()?.cov[(0, 0)];
        ensure(
            (var - COND_VAR).abs() <= 1e-10,
            format!("Var(Ybar | {x:?}) = {var}"),
        )?;
    }
    let r = check_representability(&m, &det, "Ybar", None)?;
    ensure(
        !r.representable,
        "deterministic allocation reported representable",
    )?;
    Ok(format!(
        "do-distribution degenerate at {} points, Var(Ybar | xbar) = 7.2, representable = false",
        rep.grid.len()
    ))
}

fn cdf_noise_uniformity() -> Outcome {
    let m = scenarios::shops_model([2.0, 5.0], [10.0, 20.0], [1.0, 4.0])?;
    let noise = cdf_noise(&m, "Xbar", "Ybar", 0)?;
    let sd = 5f64.sqrt();
    let xbars: Vec<f64> = (-2..=2).map(|k| 30.0 + k as f64 * sd).collect();
    let ks = ks_uniformity(&m, "Xbar", &noise, &xbars, 100_000, 1)?;
    let worst = ks
        .iter()
        .map(|s| s.statistic / s.critical)
        .fold(0.0, f64::max);
    ensure(
        ks.len() == 5 && ks.iter().all(|s| s.pass),
        format!("KS statistic / critical {worst:.3}"),
    )?;
    let rec = reconstruct_on_samples(&m, "Xbar", "Ybar", &noise, 100_000, 2)?;
    ensure(
        rec.max_error <= 1e-8,
        format!("reconstruction error {:e}", rec.max_error),
    )?;
    Ok(format!(
        "5 slices, max KS / critical {worst:.3}, reconstruction error {:.1e}",
        rec.max_error
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        (
            "natural realization inhibits on unconfounded models",
            natural_inhibits,
        ),
        ("shops natural and sequential slopes", shops_slopes),
        (
            "micro-intervention consistency check",
            micro_intervention_consistency,
        ),
        ("gaussian inhibitor synthesis", gaussian_inhibitor),
        (
            "confounded micro pairs with unconfounded macro pair",
            masked_instances,
        ),
        ("kernel table construction", kernel_tables),
        ("chain independence iff zero effect gap", chain_iff),
        ("backdoor adjustment and set agreement", backdoor_adjustment),
        ("atomic and shift intervention routes agree", shift_route),
        ("coordinate change construction", coordinate_change),
        (
            "deterministic allocation is not representable",
            deterministic_allocation,
        ),
        (
            "cdf noise uniformity and reconstruction",
            cdf_noise_uniformity,
        ),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name} [{secs:.2}s]: {detail}", i + 1),
            Err(e) => {
                failed += 1;
                println!("FAIL {:>2} {name} [{secs:.2}s]: {e}", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
