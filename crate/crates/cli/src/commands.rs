use std::path::Path;

use aggcausal::confounding::{check_representability, classify_realization, default_grid, Verdict};
use aggcausal::graph_criteria::{backdoor_check, chain_check, generalized_backdoor};
use aggcausal::io::{
    load_aggregations, load_model, load_realization, model_to_json, realization_to_json,
};
use aggcausal::model::sample;
use aggcausal::scenarios::{self, Scenario, ScenarioName};
use aggcausal::synthesis::{
    cdf_noise, construct_h, ks_uniformity, random_masked_spec, reconstruct_on_samples,
    synthesize_gaussian_inhibitor, theorem2_instance, total_effects, CdfNoiseModel,
};
use aggcausal::{
    AggregatedModel, AggregationKind, Error, MacroValue, MicroRealization, RealizationFamily,
};
use serde_json::json;

use crate::output::{describe, emit, sci, write_file, Format, Report};
use crate::{CheckKind, Cli, CliResult, Command, ModelArgs, Status, SynthKind, Target};

pub fn run(cli: &Cli) -> CliResult<Status> {
    match &cli.command {
        Command::Simulate { model, n } => simulate(cli, model, *n),
        Command::Intervene {
            model,
            realization,
            target,
        } => intervene(cli, model, realization.as_deref(), target),
        Command::Check {
            kind,
            model,
            realization,
            target,
            nodes,
            adjust,
            tol,
        } => {
            let m = load(&model.model, model.agg.as_deref())?;
            match kind {
                CheckKind::Confounding | CheckKind::Representability => {
                    check_realization(cli, *kind, &m, realization.as_deref(), target, *tol)
                }
                CheckKind::Chain => check_chain(cli, &m, nodes.as_deref(), target, *tol),
                CheckKind::Backdoor => match adjust {
                    Some(set) => check_adjustment(cli, &m, target, set, *tol),
                    None => check_backdoor(cli, &m, nodes.as_deref(), target, *tol),
                },
            }
        }
        Command::Synth {
            kind,
            model,
            agg,
            target,
            cards,
            realization_out,
            alpha,
            c,
            n,
            resolution,
        } => {
            let loaded = match model {
                Some(p) => Some(load(p, agg.as_deref())?),
                None => None,
            };
            let need = |k: &str| {
                loaded
                    .as_ref()
                    .ok_or_else(|| format!("`synth {k}` needs --model"))
            };
            match kind {
                SynthKind::Gaussian => synth_gaussian(cli, need("gaussian")?, target),
                SynthKind::Discrete => synth_discrete(cli, cards, realization_out.as_deref()),
                SynthKind::CdfNoise => {
                    synth_cdf_noise(cli, need("cdf-noise")?, target, *n, *resolution)
                }
                SynthKind::Coordinates => {
                    synth_coordinates(cli, loaded.as_ref(), target, alpha.as_deref(), *c)
                }
            }
        }
        Command::Repro {
            scenario,
            overrides,
        } => repro(cli, scenario, overrides),
    }
}

fn load(model: &Path, agg: Option<&Path>) -> CliResult<AggregatedModel> {
    let loaded = load_model(model)?;
    let aggs = match agg {
        Some(p) => load_aggregations(p)?,
        None => loaded.aggs,
    };
    if aggs.is_empty() {
        return Err(format!("`{}` declares no aggregations; pass --agg", model.display()).into());
    }
    Ok(AggregatedModel::new(loaded.scm, aggs)?)
}

fn finish(cli: &Cli, report: &Report) -> CliResult<()> {
    emit(&report.render(cli.format)?, cli.out.as_deref())
}

struct Resolved {
    cause: String,
    effect: String,
    grid: Vec<MacroValue>,
}

fn resolve(
    m: &AggregatedModel,
    target: &Target,
    realization_target: Option<&str>,
) -> CliResult<Resolved> {
    let macros = m.macro_labels();
    let cause = target
        .cause
        .clone()
        .or_else(|| realization_target.map(str::to_string))
        .or_else(|| macros.first().cloned())
        .ok_or("model has no aggregations")?;
    m.agg(&cause)?;
    let effect = match &target.effect {
        Some(e) => e.clone(),
        None => macros
            .iter()
            .find(|l| **l != cause)
            .cloned()
            .ok_or("need a second aggregation for the effect")?,
    };
    m.agg(&effect)?;
    let grid = match (&target.xbar, &target.grid) {
        (Some(v), _) | (None, Some(v)) => parse_grid(m, &cause, v)?,
        (None, None) => default_grid(m, &cause)?,
    };
    Ok(Resolved {
        cause,
        effect,
        grid,
    })
}

fn parse_grid(m: &AggregatedModel, cause: &str, text: &str) -> CliResult<Vec<MacroValue>> {
    let discrete = matches!(m.agg(cause)?.kind, AggregationKind::Discrete(_));
    text.split(',')
        .map(|t| {
            let t = t.trim();
            if discrete {
                t.parse::<usize>()
                    .map(MacroValue::Category)
                    .map_err(|_| format!("`{t}` is not a category index").into())
            } else {
                t.parse::<f64>()
                    .map(MacroValue::Real)
                    .map_err(|_| format!("`{t}` is not a number").into())
            }
        })
        .collect()
}

fn simulate(cli: &Cli, model: &Path, n: usize) -> CliResult<Status> {
    let loaded = load_model(model)?;
    let s = sample(&loaded.scm, n, cli.seed)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&s.labels)?;
    for i in 0..s.data.nrows() {
        w.write_record(s.data.row(i).iter().map(|v| v.to_string()))?;
    }
    emit(&String::from_utf8(w.into_inner()?)?, cli.out.as_deref())?;
    Ok(Status::Pass)
}

fn intervene(
    cli: &Cli,
    args: &ModelArgs,
    rpath: Option<&Path>,
    target: &Target,
) -> CliResult<Status> {
    let m = load(&args.model, args.agg.as_deref())?;
    let given = match rpath {
        Some(p) => Some(load_realization(p)?),
        None => None,
    };
    let t = resolve(&m, target, given.as_ref().map(|r| r.target.as_str()))?;
    let r = given.unwrap_or_else(|| MicroRealization::natural(&t.cause));
    let mut rep = Report::new(
        format!(
            "P({e} | do({c})) under the {} realization against P({e} | {c})",
            r.family_name(),
            e = t.effect,
            c = t.cause
        ),
        &[&t.cause, "do", "observed", "gap", "note"],
    );
    let mut points = Vec::new();
    for &x in &t.grid {
        let d = m.interventional(&r, x, &t.effect)?;
        let o = match m.observational_conditional(&t.cause, x, &t.effect) {
            Ok(o) => Some(o),
            Err(Error::ZeroProbability(_)) => None,
            Err(e) => return Err(e.into()),
        };
        let gap = match &o {
            Some(o) => Some(d.discrepancy(o)?),
            None => None,
        };
        let degenerate =
            d.is_degenerate(1e-10) && o.as_ref().is_some_and(|o| !o.is_degenerate(1e-10));
        rep.row(vec![
            x.to_string(),
            describe(&d),
            o.as_ref().map_or("-".into(), describe),
            gap.map_or("-".into(), sci),
            if degenerate {
                "degenerate do".into()
            } else {
                String::new()
            },
        ]);
        points.push(json!({
            "xbar": x,
            "interventional": d,
            "observational": o,
            "discrepancy": gap,
            "degenerate_do": degenerate,
        }));
    }
    rep.json = json!({
        "cause": t.cause,
        "effect": t.effect,
        "realization": r.family_name(),
        "points": points,
    });
    finish(cli, &rep)?;
    Ok(Status::Pass)
}

fn check_realization(
    cli: &Cli,
    kind: CheckKind,
    m: &AggregatedModel,
    rpath: Option<&Path>,
    target: &Target,
    tol: f64,
) -> CliResult<Status> {
    let given = match rpath {
        Some(p) => Some(load_realization(p)?),
        None => None,
    };
    let t = resolve(m, target, given.as_ref().map(|r| r.target.as_str()))?;
    let r = given.unwrap_or_else(|| MicroRealization::natural(&t.cause));
    if kind == CheckKind::Confounding {
        let c = classify_realization(m, &r, &t.effect, Some(&t.grid), tol)?;
        let mut rep = Report::new(
            format!(
                "confounding of ({}, {}) under the {} realization",
                t.cause, t.effect, c.realization
            ),
            &[&t.cause, "observed", "do", "discrepancy"],
        );
        for (i, x) in c.grid.iter().enumerate() {
            rep.row(vec![
                x.to_string(),
                describe(&c.observational[i]),
                describe(&c.interventional[i]),
                sci(c.discrepancies[i]),
            ]);
        }
        rep.note(format!(
            "verdict: {} (max discrepancy {}, tol {tol:e})",
            c.verdict,
            sci(c.max_discrepancy)
        ));
        rep.json = json!(c);
        finish(cli, &rep)?;
        return Ok(if c.verdict == Verdict::Inhibiting {
            Status::Pass
        } else {
            Status::CheckFailed
        });
    }
    let c = check_representability(m, &r, &t.effect, Some(&t.grid))?;
    let mut rep = Report::new(
        format!(
            "representability of the {} realization on ({}, {})",
            r.family_name(),
            t.cause,
            t.effect
        ),
        &[&t.cause, "deterministic do", "stochastic observed"],
    );
    for (i, x) in c.grid.iter().enumerate() {
        rep.row(vec![
            x.to_string(),
            c.deterministic_do[i].to_string(),
            c.stochastic_observational[i].to_string(),
        ]);
    }
    rep.note(format!("representable: {}", c.representable));
    rep.json = json!(c);
    finish(cli, &rep)?;
    Ok(if c.representable {
        Status::Pass
    } else {
        Status::CheckFailed
    })
}

fn three_nodes(m: &AggregatedModel, nodes: Option<&[String]>) -> CliResult<[String; 3]> {
    let v: Vec<String> = match nodes {
        Some(n) => n.to_vec(),
        None => m.macro_labels(),
    };
    <[String; 3]>::try_from(v).map_err(|v| {
        format!("need exactly three macro variables (--nodes X,Y,Z), got {v:?}").into()
    })
}

fn grid_for(m: &AggregatedModel, var: &str, target: &Target) -> CliResult<Option<Vec<MacroValue>>> {
    match (&target.xbar, &target.grid) {
        (Some(v), _) | (None, Some(v)) => Ok(Some(parse_grid(m, var, v)?)),
        _ => Ok(None),
    }
}

fn check_chain(
    cli: &Cli,
    m: &AggregatedModel,
    nodes: Option<&[String]>,
    target: &Target,
    tol: f64,
) -> CliResult<Status> {
    let [x, y, z] = three_nodes(m, nodes)?;
    let ygrid = grid_for(m, &y, target)?;
    let v = chain_check(m, &x, &y, &z, ygrid.as_deref(), None, tol)?;
    let mut rep = Report::new(
        format!("chain {x} -> {y} -> {z}: effect of do({y}) under two realizations"),
        &[&y, &x, "gap"],
    );
    for p in &v.points {
        rep.row(vec![p.ybar.to_string(), p.xbar.to_string(), sci(p.gap)]);
    }
    rep.note(format!(
        "{x} independent of {z} given {y}: {} (dependence {})",
        v.independence_holds,
        sci(v.dependence)
    ));
    rep.note(format!("max effect gap {}", sci(v.effect_gap)));
    if v.needs_extra_arrow {
        rep.note(format!("the macro DAG needs an edge {x} -> {z}"));
    }
    rep.json = json!(v);
    finish(cli, &rep)?;
    Ok(if v.needs_extra_arrow {
        Status::CheckFailed
    } else {
        Status::Pass
    })
}

fn check_backdoor(
    cli: &Cli,
    m: &AggregatedModel,
    nodes: Option<&[String]>,
    target: &Target,
    tol: f64,
) -> CliResult<Status> {
    let [x, y, z] = three_nodes(m, nodes)?;
    let ygrid = grid_for(m, &y, target)?;
    let v = backdoor_check(m, &x, &y, &z, ygrid.as_deref(), tol)?;
    let mut rep = Report::new(
        format!("backdoor adjustment for the effect of {y} on {z} via {{{x}}}"),
        &[&y, "adjustment", "gap"],
    );
    for p in &v.points {
        let adj: Vec<String> = p.adjustment.iter().map(|a| a.to_string()).collect();
        rep.row(vec![p.treatment.to_string(), adj.join(" "), sci(p.gap)]);
    }
    rep.note(format!(
        "blocking condition: {} (dependence {})",
        v.blocking_condition,
        sci(v.blocking_dependence)
    ));
    rep.note(format!("max adjustment gap {}", sci(v.adjustment_gap)));
    rep.json = json!(v);
    finish(cli, &rep)?;
    let ok = v.blocking_condition && v.adjustment_gap <= tol;
    Ok(if ok {
        Status::Pass
    } else {
        Status::CheckFailed
    })
}

fn check_adjustment(
    cli: &Cli,
    m: &AggregatedModel,
    target: &Target,
    set: &[String],
    tol: f64,
) -> CliResult<Status> {
    let t = resolve(m, target, None)?;
    let grid = grid_for(m, &t.cause, target)?;
    let v = generalized_backdoor(m, &t.cause, &t.effect, set, None, grid.as_deref(), tol)?;
    let mut rep = Report::new(
        format!(
            "adjustment set {{{}}} for the effect of {} on {}",
            set.join(", "),
            t.cause,
            t.effect
        ),
        &[&t.cause, "adjustment", "gap"],
    );
    for p in &v.points {
        let adj: Vec<String> = p.adjustment.iter().map(|a| a.to_string()).collect();
        rep.row(vec![p.treatment.to_string(), adj.join(" "), sci(p.gap)]);
    }
    rep.note(format!(
        "no descendants of {}: {}",
        t.cause, v.no_descendants
    ));
    rep.note(format!(
        "blocks every backdoor path: {}",
        v.blocks_backdoor_paths
    ));
    rep.note(format!(
        "blocking condition: {} (dependence {})",
        v.blocking_condition,
        sci(v.blocking_dependence)
    ));
    if let Some(g) = v.adjustment_gap {
        rep.note(format!("max adjustment gap {}", sci(g)));
    }
    rep.json = json!(v);
    finish(cli, &rep)?;
    let ok = v.no_descendants
        && v.blocks_backdoor_paths
        && v.blocking_condition
        && v.adjustment_gap.is_some_and(|g| g <= tol);
    Ok(if ok {
        Status::Pass
    } else {
        Status::CheckFailed
    })
}

fn real_grid(grid: &[MacroValue]) -> Vec<f64> {
    grid.iter().map(|x| x.as_real()).collect()
}

fn synth_gaussian(cli: &Cli, m: &AggregatedModel, target: &Target) -> CliResult<Status> {
    let t = resolve(m, target, None)?;
    let v = synthesize_gaussian_inhibitor(m, &t.cause, &t.effect, real_grid(&t.grid))?;
    let s = &v.solution;
    let mut rep = Report::new(
        format!("inhibiting realization of do({}) for {}", t.cause, t.effect),
        &[&t.cause, "mean", "discrepancy"],
    );
    for p in &s.points {
        let mean: Vec<String> = p.mean.iter().map(|v| format!("{v:.6}")).collect();
        rep.row(vec![
            p.xbar.to_string(),
            format!("[{}]", mean.join(", ")),
            sci(p.discrepancy),
        ]);
    }
    rep.note(format!(
        "Var({e} | {c}) = {:.6}, Var(N) = {:.6}, slack = {:.6}",
        s.cond_var,
        s.noise_var,
        s.slack,
        e = t.effect,
        c = t.cause
    ));
    if let Some(reason) = &s.reason {
        rep.note(format!("infeasible: {reason}"));
        rep.json = json!(v);
        emit(&rep.render(cli.format)?, None)?;
        return Ok(Status::Infeasible);
    }
    rep.note(format!(
        "covariance scale {:.6} along the direction {:?}",
        s.scale, s.direction
    ));
    let verdict = v.report.as_ref().map(|r| r.verdict);
    if let Some(r) = &v.report {
        rep.note(format!(
            "verification: {} (max discrepancy {})",
            r.verdict,
            sci(r.max_discrepancy)
        ));
    }
    let realization =
        MicroRealization::new(&t.cause, RealizationFamily::Explicit(s.to_explicit()?));
    if let Some(out) = &cli.out {
        write_file(out, &realization_to_json(&realization))?;
        rep.note(format!("realization written to {}", out.display()));
    }
    rep.json = json!(v);
    emit(&rep.render(cli.format)?, None)?;
    Ok(if verdict == Some(Verdict::Inhibiting) {
        Status::Pass
    } else {
        Status::CheckFailed
    })
}

fn synth_discrete(cli: &Cli, cards: &[usize], rout: Option<&Path>) -> CliResult<Status> {
    let [x, z, y, xb, yb] = <[usize; 5]>::try_from(cards)
        .map_err(|_| format!("--cards needs five values, got {}", cards.len()))?;
    let inst = match random_masked_spec(x, z, y, xb, yb, cli.seed)
        .and_then(|spec| theorem2_instance(&spec, cli.seed))
    {
        Ok(i) => i,
        Err(Error::Hypotheses(reason)) => {
            eprintln!("infeasible: {reason}");
            return Ok(Status::Infeasible);
        }
        Err(e) => return Err(e.into()),
    };
    let mut rep = Report::new(
        format!("categorical instance Z -> X -> Y, Z -> Y with |X|={x}, |Z|={z}, |Y|={y}"),
        &["quantity", "value"],
    );
    rep.row(vec!["pi_X".into(), format!("{:?}", inst.spec.pi_x)]);
    rep.row(vec!["pi_Y".into(), format!("{:?}", inst.spec.pi_y)]);
    rep.row(vec!["max TV P(Y|x) vs P(Y|do(x))".into(), sci(inst.xy_gap)]);
    rep.row(vec![
        "max TV P(Ybar|x) vs P(Ybar|do(x))".into(),
        sci(inst.xybar_gap),
    ]);
    rep.row(vec![
        "max TV P(Ybar|xbar) vs P(Ybar|do(xbar))".into(),
        sci(inst.macro_gap),
    ]);
    rep.row(vec!["draws".into(), inst.attempts.to_string()]);
    if let Some(out) = &cli.out {
        write_file(out, &model_to_json(inst.model.scm(), inst.model.aggs()))?;
        rep.note(format!("model written to {}", out.display()));
    }
    if let Some(out) = rout {
        write_file(out, &realization_to_json(&inst.realization))?;
        rep.note(format!("realization written to {}", out.display()));
    }
    rep.json = json!({
        "spec": inst.spec,
        "xy_gap": inst.xy_gap,
        "xybar_gap": inst.xybar_gap,
        "macro_gap": inst.macro_gap,
        "attempts": inst.attempts,
    });
    emit(&rep.render(cli.format)?, None)?;
    Ok(Status::Pass)
}

fn synth_cdf_noise(
    cli: &Cli,
    m: &AggregatedModel,
    target: &Target,
    n: usize,
    resolution: usize,
) -> CliResult<Status> {
    let t = resolve(m, target, None)?;
    let noise = match cdf_noise(m, &t.cause, &t.effect, resolution) {
        Ok(noise) => noise,
        Err(Error::Degenerate(reason)) => {
            eprintln!("infeasible: {reason}");
            return Ok(Status::Infeasible);
        }
        Err(e) => return Err(e.into()),
    };
    let xbars = real_grid(&t.grid);
    let ks = ks_uniformity(m, &t.cause, &noise, &xbars, n, cli.seed)?;
    let rec = reconstruct_on_samples(m, &t.cause, &t.effect, &noise, n, cli.seed.wrapping_add(1))?;
    let mut rep = Report::new(
        format!(
            "M = P(W <= w | {c} = x) for {e} given {c}",
            c = t.cause,
            e = t.effect
        ),
        &[&t.cause, "KS statistic", "critical (0.01)", "uniform"],
    );
    for s in &ks {
        rep.row(vec![
            s.xbar.to_string(),
            format!("{:.5}", s.statistic),
            format!("{:.5}", s.critical),
            s.pass.to_string(),
        ]);
    }
    if let CdfNoiseModel::Gaussian(g) = &noise {
        rep.note(format!(
            "W | x ~ N({:.6} + {:.6} x, {:.6}^2)",
            g.mean_intercept, g.mean_slope, g.sd
        ));
    }
    rep.note(format!(
        "reconstruction max error {} over {} samples",
        sci(rec.max_error),
        rec.n
    ));
    if let Some(out) = &cli.out {
        write_file(out, &serde_json::to_string_pretty(&noise)?)?;
        rep.note(format!("noise model written to {}", out.display()));
    }
    rep.json = json!({"noise": noise, "ks": ks, "reconstruction": rec});
    emit(&rep.render(cli.format)?, None)?;
    let ok = ks.iter().all(|s| s.pass) && rec.max_error <= 1e-8;
    Ok(if ok {
        Status::Pass
    } else {
        Status::CheckFailed
    })
}

fn synth_coordinates(
    cli: &Cli,
    m: Option<&AggregatedModel>,
    target: &Target,
    alpha: Option<&[f64]>,
    c: Option<f64>,
) -> CliResult<Status> {
    let alpha = match (alpha, m) {
        (Some(a), _) => a.to_vec(),
        (None, Some(m)) => {
            let t = resolve(m, target, None)?;
            total_effects(m, &t.cause, &t.effect)?
        }
        (None, None) => return Err("`synth coordinates` needs --alpha or --model".into()),
    };
    let c = c.ok_or("`synth coordinates` needs --c")?;
    let h = match construct_h(&alpha, c) {
        Ok(h) => h,
        Err(Error::Hypotheses(reason)) => {
            eprintln!("infeasible: {reason}");
            return Ok(Status::Infeasible);
        }
        Err(e) => return Err(e.into()),
    };
    let mut rep = Report::new(
        format!("coordinates with macro coefficient {c}"),
        &["row", "H", "H^-1"],
    );
    for (i, (r, ri)) in h.h.iter().zip(&h.h_inv).enumerate() {
        let f = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x:.6}"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        rep.row(vec![i.to_string(), f(r), f(ri)]);
    }
    rep.note(format!("delta = {:?}", h.delta));
    rep.note(format!("alpha . delta = {:.10}", h.beta));
    rep.note(format!("H H^-1 residual {}", sci(h.residual)));
    if let Some(out) = &cli.out {
        write_file(out, &serde_json::to_string_pretty(&h)?)?;
        rep.note(format!("coordinate change written to {}", out.display()));
    }
    rep.json = json!(h);
    emit(&rep.render(cli.format)?, None)?;
    Ok(Status::Pass)
}

fn repro(cli: &Cli, name: &str, overrides: &[String]) -> CliResult<Status> {
    let name: ScenarioName = name.parse()?;
    let s = Scenario::with_overrides(name, overrides)?;
    let r = scenarios::run(&s, cli.seed)?;
    let text = match cli.format {
        Format::Table => format!("{r}\n"),
        Format::Json => serde_json::to_string_pretty(&scenarios::report_json(&r))? + "\n",
        Format::Csv => {
            let mut rep = Report::new("", &["quantity", "value", "expected", "ok"]);
            for row in &r.rows {
                rep.row(vec![
                    row.quantity.clone(),
                    row.value.clone(),
                    row.expected.clone(),
                    row.ok.to_string(),
                ]);
            }
            rep.render(Format::Csv)?
        }
    };
    emit(&text, cli.out.as_deref())?;
    Ok(if r.pass {
        Status::Pass
    } else {
        Status::CheckFailed
    })
}
