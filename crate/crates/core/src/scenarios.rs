//! Canned models and end-to-end runs: shops, appendixA, promotion, thm2,
//! chain, backdoor, coordinates.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Normal};
use serde::Serialize;
use serde_json::json;

use crate::aggregation::{
    consistency_check_example1, AggregatedModel, AggregationSpec, MicroIntervention,
    MicroRealization,
};
use crate::confounding::{
    check_representability, classify_realization, structural_equation_report, Verdict, EXACT_TOL,
};
use crate::distribution::MacroValue;
use crate::error::{Error, Result};
use crate::graph_criteria::{backdoor_check, chain_check, generalized_backdoor};
use crate::model::{sample, LinearGaussianScm};
use crate::synthesis::{
    construct_h, from_delta, random_masked_spec, synthesize_gaussian_inhibitor, theorem2_instance,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum ScenarioName {
    Shops,
    AppendixA,
    Promotion,
    Thm2,
    Chain,
    Backdoor,
    Coordinates,
}

impl ScenarioName {
    pub const ALL: [ScenarioName; 7] = [
        ScenarioName::Shops,
        ScenarioName::AppendixA,
        ScenarioName::Promotion,
        ScenarioName::Thm2,
        ScenarioName::Chain,
        ScenarioName::Backdoor,
        ScenarioName::Coordinates,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioName::Shops => "shops",
            ScenarioName::AppendixA => "appendixA",
            ScenarioName::Promotion => "promotion",
            ScenarioName::Thm2 => "thm2",
            ScenarioName::Chain => "chain",
            ScenarioName::Backdoor => "backdoor",
            ScenarioName::Coordinates => "coordinates",
        }
    }

    /// Parameters and their defaults.
    pub fn defaults(self) -> BTreeMap<&'static str, f64> {
        let pairs: &[(&str, f64)] = match self {
            ScenarioName::Shops => &[
                ("alpha1", 2.0),
                ("alpha2", 5.0),
                ("mu1", 10.0),
                ("mu2", 20.0),
                ("var1", 1.0),
                ("var2", 4.0),
                ("n", 1e6),
            ],
            ScenarioName::AppendixA => &[("alpha1", 2.0), ("alpha2", 5.0)],
            ScenarioName::Promotion => &[
                ("alpha1", 2.0),
                ("alpha2", 5.0),
                ("gamma1", 1.0),
                ("gamma2", 1.0),
            ],
            ScenarioName::Thm2 => &[
                ("x", 3.0),
                ("z", 3.0),
                ("y", 4.0),
                ("xbar", 2.0),
                ("ybar", 2.0),
            ],
            ScenarioName::Chain | ScenarioName::Backdoor => &[],
            ScenarioName::Coordinates => &[("alpha1", 2.0), ("alpha2", 5.0), ("c", 4.4)],
        };
        pairs.iter().copied().collect()
    }
}

impl fmt::Display for ScenarioName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScenarioName::ALL
            .into_iter()
            .find(|n| n.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Parse(format!("unknown scenario `{s}`")))
    }
}

/// A scenario name with parameter overrides applied to its defaults.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub name: ScenarioName,
    pub params: BTreeMap<String, f64>,
}

impl Scenario {
    pub fn new(name: ScenarioName) -> Self {
        Self {
            name,
            params: name
                .defaults()
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
        }
    }

    /// Override one parameter; unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: f64) -> Result<&mut Self> {
        match self.params.get_mut(key) {
            Some(v) => {
                *v = value;
                Ok(self)
            }
            None => Err(Error::Parse(format!(
                "scenario `{}` has no parameter `{key}`",
                self.name
            ))),
        }
    }

    /// Parse `key=value` overrides.
    pub fn with_overrides<S: AsRef<str>>(name: ScenarioName, overrides: &[S]) -> Result<Self> {
        let mut s = Self::new(name);
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("override `{o}` is not key=value")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("override `{o}`: not a number")))?;
            s.set(k.trim(), v)?;
        }
        Ok(s)
    }

    fn p(&self, key: &str) -> f64 {
        self.params[key]
    }
}

/// `X ~ N(μ, diag σ²)`, `Y_i := α_i X_i`, summed.
pub fn shops_model(alpha: [f64; 2], mu: [f64; 2], var: [f64; 2]) -> Result<AggregatedModel> {
    let mut m = LinearGaussianScm::new();
    m.add_independent_node("X", mu.to_vec(), var.to_vec())
        .add_node("Y", vec![0.0, 0.0], DMatrix::zeros(2, 2))
        .add_edge(
            "X",
            "Y",
            DMatrix::from_diagonal(&DVector::from_vec(alpha.to_vec())),
        );
    AggregatedModel::new(
        m.into(),
        vec![AggregationSpec::sum("X"), AggregationSpec::sum("Y")],
    )
}

/// Same structure as the shops with Bernoulli-like `X` replaced by
/// `N(1/2, 1/4)`, plus the two perfect interventions `(1,0)` and `(0,1)`.
pub fn micro_intervention_model(
    alpha: [f64; 2],
) -> Result<(AggregatedModel, Vec<MicroIntervention>)> {
    let m = shops_model(alpha, [0.5, 0.5], [0.25, 0.25])?;
    let ivs = vec![
        MicroIntervention::new(&[("X", &[1.0, 0.0])]),
        MicroIntervention::new(&[("X", &[0.0, 1.0])]),
    ];
    Ok((m, ivs))
}

/// `Z ~ N(0, I)`, `X := Z`, `Y := diag(α) X + diag(γ) Z`.
pub fn promotion_model(alpha: [f64; 2], gamma: [f64; 2]) -> Result<AggregatedModel> {
    let mut m = LinearGaussianScm::new();
    m.add_independent_node("Z", vec![0.0, 0.0], vec![1.0, 1.0])
        .add_node("X", vec![0.0, 0.0], DMatrix::zeros(2, 2))
        .add_node("Y", vec![0.0, 0.0], DMatrix::zeros(2, 2))
        .add_edge("Z", "X", DMatrix::identity(2, 2))
        .add_edge(
            "X",
            "Y",
            DMatrix::from_diagonal(&DVector::from_vec(alpha.to_vec())),
        )
        .add_edge(
            "Z",
            "Y",
            DMatrix::from_diagonal(&DVector::from_vec(gamma.to_vec())),
        );
    AggregatedModel::new(
        m.into(),
        vec![AggregationSpec::sum("X"), AggregationSpec::sum("Y")],
    )
}

/// `X → Y → Z` with two-dimensional nodes. `through_aggregate` makes `Z`
/// depend on `Y` only via `Ȳ`.
pub fn chain_model(through_aggregate: bool) -> Result<AggregatedModel> {
    let b = if through_aggregate {
        DMatrix::from_row_slice(2, 2, &[1.5, 1.5, -0.5, -0.5])
    } else {
        DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 0.2, -1.0])
    };
    let mut m = LinearGaussianScm::new();
    m.add_independent_node("X", vec![1.0, 2.0], vec![1.0, 2.0])
        .add_independent_node("Y", vec![0.0, 0.0], vec![0.5, 1.0])
        .add_independent_node("Z", vec![0.0, 0.0], vec![1.0, 1.0])
        .add_edge(
            "X",
            "Y",
            DMatrix::from_row_slice(2, 2, &[1.0, 0.5, -0.3, 2.0]),
        )
        .add_edge("Y", "Z", b);
    sum_all(m, &["X", "Y", "Z"])
}

/// `X → Y`, `X → Z`, `Y → Z`. With `blocking`, `Z` depends on `X` only via
/// `X̄`.
pub fn backdoor_model(blocking: bool) -> Result<AggregatedModel> {
    let cx = if blocking {
        DMatrix::from_row_slice(2, 2, &[0.5, 0.5, -2.0, -2.0])
    } else {
        DMatrix::from_row_slice(2, 2, &[0.5, -1.0, 2.0, 0.1])
    };
    let mut m = LinearGaussianScm::new();
    m.add_independent_node("X", vec![1.0, -1.0], vec![1.0, 3.0])
        .add_independent_node("Y", vec![0.0, 0.0], vec![1.0, 0.5])
        .add_independent_node("Z", vec![0.0, 0.0], vec![1.0, 2.0])
        .add_edge(
            "X",
            "Y",
            DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.7, -1.0]),
        )
        .add_edge("X", "Z", cx)
        .add_edge(
            "Y",
            "Z",
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.3, -0.7]),
        );
    sum_all(m, &["X", "Y", "Z"])
}

/// `C → T`, `C → W`, `W → Y`, `T → Y` where `{C̄}` and `{W̄}` both block and
/// `T` acts on `Ȳ` through `T̄`.
pub fn two_sets_model() -> Result<AggregatedModel> {
    let mut m = LinearGaussianScm::new();
    m.add_independent_node("C", vec![0.5, -1.0], vec![1.0, 2.0])
        .add_independent_node("T", vec![0.0, 0.0], vec![1.0, 0.5])
        .add_independent_node("W", vec![0.0, 0.0], vec![0.7, 1.2])
        .add_independent_node("Y", vec![0.0, 0.0], vec![1.0, 1.0])
        .add_edge(
            "C",
            "T",
            DMatrix::from_row_slice(2, 2, &[1.0, 0.3, -0.4, 2.0]),
        )
        .add_edge(
            "C",
            "W",
            DMatrix::from_row_slice(2, 2, &[0.5, 1.5, 1.0, 0.0]),
        )
        .add_edge(
            "W",
            "Y",
            DMatrix::from_row_slice(2, 2, &[2.0, -1.0, 1.0, 4.0]),
        )
        .add_edge(
            "T",
            "Y",
            DMatrix::from_row_slice(2, 2, &[1.0, 0.2, -0.5, 0.3]),
        );
    sum_all(m, &["C", "T", "W", "Y"])
}

fn sum_all(m: LinearGaussianScm, nodes: &[&str]) -> Result<AggregatedModel> {
    AggregatedModel::new(
        m.into(),
        nodes.iter().map(|n| AggregationSpec::sum(n)).collect(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReproRow {
    pub quantity: String,
    pub value: String,
    pub expected: String,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReproReport {
    pub scenario: String,
    pub seed: u64,
    pub params: BTreeMap<String, f64>,
    pub rows: Vec<ReproRow>,
    pub pass: bool,
}

struct Rows(Vec<ReproRow>);

impl Rows {
    fn num(&mut self, q: &str, value: f64, expected: f64, tol: f64) {
        self.0.push(ReproRow {
            quantity: q.to_string(),
            value: format!("{value:.6}"),
            expected: format!("{expected:.6}"),
            ok: (value - expected).abs() <= tol,
        });
    }

    fn check(&mut self, q: &str, value: impl fmt::Display, expected: impl fmt::Display, ok: bool) {
        self.0.push(ReproRow {
            quantity: q.to_string(),
            value: value.to_string(),
            expected: expected.to_string(),
            ok,
        });
    }

    fn info(&mut self, q: &str, value: impl fmt::Display) {
        self.check(q, value, "", true);
    }
}

/// Least-squares slope of `y` on `x`.
pub fn regression_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
    }
    sxy / sxx
}

/// Shop B's experiment simulated directly: `x̄` drawn from the observational
/// marginal, `X_1` observed, `X_2 := x̄ - X_1`. Returns the slope of `Ȳ` on
/// `x̄`.
pub fn simulate_sequential_slope(
    alpha: [f64; 2],
    mu: [f64; 2],
    var: [f64; 2],
    n: usize,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x1 = Normal::new(mu[0], var[0].sqrt()).expect("finite");
    let xb = Normal::new(mu[0] + mu[1], (var[0] + var[1]).sqrt()).expect("finite");
    let (mut xs, mut ys) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        let xbar = xb.sample(&mut rng);
        let a = x1.sample(&mut rng);
        xs.push(xbar);
        ys.push(alpha[0] * a + alpha[1] * (xbar - a));
    }
    regression_slope(&xs, &ys)
}

/// Run a scenario end to end.
pub fn run(scenario: &Scenario, seed: u64) -> Result<ReproReport> {
    let mut rows = Rows(Vec::new());
    match scenario.name {
        ScenarioName::Shops => shops(scenario, seed, &mut rows)?,
        ScenarioName::AppendixA => micro_interventions(scenario, &mut rows)?,
        ScenarioName::Promotion => promotion(scenario, &mut rows)?,
        ScenarioName::Thm2 => thm2(scenario, seed, &mut rows)?,
        ScenarioName::Chain => chain(&mut rows)?,
        ScenarioName::Backdoor => backdoor(&mut rows)?,
        ScenarioName::Coordinates => coordinates(scenario, &mut rows)?,
    }
    let pass = rows.0.iter().all(|r| r.ok);
    Ok(ReproReport {
        scenario: scenario.name.to_string(),
        seed,
        params: scenario.params.clone(),
        rows: rows.0,
        pass,
    })
}

fn shops(s: &Scenario, seed: u64, rows: &mut Rows) -> Result<()> {
    let alpha = [s.p("alpha1"), s.p("alpha2")];
    let mu = [s.p("mu1"), s.p("mu2")];
    let var = [s.p("var1"), s.p("var2")];
    let n = s.p("n").max(0.0) as usize;
    let m = shops_model(alpha, mu, var)?;
    let natural = MicroRealization::natural("Xbar");
    let sequential = MicroRealization::sequential("Xbar", vec![0, 1]);
    let w = var[0] + var[1];
    let alloc = vec![var[0] / w, var[1] / w];
    let deterministic = MicroRealization::deterministic("Xbar", alloc.clone());

    let expected_natural = (alpha[0] * var[0] + alpha[1] * var[1]) / w;
    let nat = structural_equation_report(&m, &natural, "Ybar")?;
    let seq = structural_equation_report(&m, &sequential, "Ybar")?;
    rows.num("natural slope", nat.beta, expected_natural, 1e-10);
    rows.num("sequential slope", seq.beta, alpha[1], 1e-10);

    let vn = classify_realization(&m, &natural, "Ybar", None, EXACT_TOL)?.verdict;
    let vs = classify_realization(&m, &sequential, "Ybar", None, EXACT_TOL)?.verdict;
    rows.check(
        "natural verdict",
        vn,
        Verdict::Inhibiting,
        vn == Verdict::Inhibiting,
    );
    let seq_expected = if alpha[0] == alpha[1] {
        Verdict::Inhibiting
    } else {
        Verdict::Inducing
    };
    rows.check("sequential verdict", vs, seq_expected, vs == seq_expected);

    let rep = check_representability(&m, &deterministic, "Ybar", None)?;
    let expected_rep = alpha[0] == alpha[1];
    rows.check(
        &format!(
            "deterministic ({:.3}, {:.3}) representable",
            alloc[0], alloc[1]
        ),
        rep.representable,
        expected_rep,
        rep.representable == expected_rep,
    );
    let cond_var = (alpha[0] - alpha[1]).powi(2) * var[0] * var[1] / w;
    let obs = m.observational_conditional("Xbar", (mu[0] + mu[1]).into(), "Ybar")?;
    rows.num(
        "Var(Ybar | xbar)",
        obs.as_gaussian()?.cov[(0, 0)],
        cond_var,
        1e-10,
    );

    if n >= 2 {
        let smp = sample(m.scm(), n, seed)?;
        let (x0, x1) = (smp.column("X[0]")?, smp.column("X[1]")?);
        let (y0, y1) = (smp.column("Y[0]")?, smp.column("Y[1]")?);
        let xb: Vec<f64> = x0.iter().zip(&x1).map(|(a, b)| a + b).collect();
        let yb: Vec<f64> = y0.iter().zip(&y1).map(|(a, b)| a + b).collect();
        rows.num(
            &format!("Monte-Carlo natural slope (n={n})"),
            regression_slope(&xb, &yb),
            expected_natural,
            0.01,
        );
        rows.num(
            &format!("Monte-Carlo sequential slope (n={n})"),
            simulate_sequential_slope(alpha, mu, var, n, seed.wrapping_add(1)),
            alpha[1],
            0.01,
        );
    }
    Ok(())
}

fn micro_interventions(s: &Scenario, rows: &mut Rows) -> Result<()> {
    let alpha = [s.p("alpha1"), s.p("alpha2")];
    let (m, ivs) = micro_intervention_model(alpha)?;
    let v = consistency_check_example1(&m, &ivs, 1e-10)?;
    let expected = if alpha[0] == alpha[1] {
        "CONSISTENT"
    } else {
        "INCONSISTENT"
    };
    let got = if v.consistent {
        "CONSISTENT"
    } else {
        "INCONSISTENT"
    };
    rows.check("verdict", got, expected, got == expected);
    if let Some(w) = &v.witness {
        let e: Vec<f64> = w
            .effects
            .iter()
            .map(|d| Ok(d.marginal(&["Ybar"])?.as_gaussian()?.mean[0]))
            .collect::<Result<_>>()?;
        let xbar = w.macro_values.get("Xbar").copied().unwrap_or(f64::NAN);
        rows.num("witness xbar", xbar, 1.0, 1e-12);
        rows.num("witness effect 1", e[0], alpha[0], 1e-10);
        rows.num("witness effect 2", e[1], alpha[1], 1e-10);
    }
    Ok(())
}

fn promotion(s: &Scenario, rows: &mut Rows) -> Result<()> {
    let alpha = [s.p("alpha1"), s.p("alpha2")];
    let gamma = [s.p("gamma1"), s.p("gamma2")];
    let m = promotion_model(alpha, gamma)?;
    let nat = classify_realization(
        &m,
        &MicroRealization::natural("Xbar"),
        "Ybar",
        None,
        EXACT_TOL,
    )?;
    rows.info("natural verdict", nat.verdict);
    let v = synthesize_gaussian_inhibitor(&m, "Xbar", "Ybar", vec![-2.0, 0.0, 1.0, 3.0])?;
    let sol = &v.solution;
    rows.info("slack Var(Ybar|xbar) - Var(N)", format!("{:.6}", sol.slack));
    match (&sol.reason, &v.report) {
        (Some(r), _) => {
            rows.check("feasible", false, true, false);
            rows.info("reason", r);
        }
        (None, Some(rep)) => {
            rows.check("feasible", true, true, true);
            rows.info("covariance scale s", format!("{:.6}", sol.scale));
            rows.info(
                "mean slope",
                format!("({:.6}, {:.6})", sol.slope[0], sol.slope[1]),
            );
            rows.check(
                "synthesized verdict",
                rep.verdict,
                Verdict::Inhibiting,
                rep.verdict == Verdict::Inhibiting,
            );
        }
        (None, None) => rows.check("feasible", sol.feasible, true, false),
    }
    Ok(())
}

fn thm2(s: &Scenario, seed: u64, rows: &mut Rows) -> Result<()> {
    let c = |k: &str| s.p(k).max(0.0) as usize;
    let spec = random_masked_spec(c("x"), c("z"), c("y"), c("xbar"), c("ybar"), seed)?;
    let inst = theorem2_instance(&spec, seed)?;
    rows.info("pi_X", format!("{:?}", spec.pi_x));
    rows.info("pi_Y", format!("{:?}", spec.pi_y));
    rows.check(
        "TV gap (X, Y)",
        format!("{:.3e}", inst.xy_gap),
        "> 0",
        inst.xy_gap > 1e-9,
    );
    rows.check(
        "TV gap (X, Ybar)",
        format!("{:.3e}", inst.xybar_gap),
        "> 0",
        inst.xybar_gap > 1e-9,
    );
    rows.check(
        "TV gap (Xbar, Ybar) under realization",
        format!("{:.3e}", inst.macro_gap),
        "<= 1e-12",
        inst.macro_gap <= 1e-12,
    );
    rows.info("draws", inst.attempts);
    Ok(())
}

fn chain(rows: &mut Rows) -> Result<()> {
    let a = chain_check(
        &chain_model(true)?,
        "Xbar",
        "Ybar",
        "Zbar",
        None,
        None,
        EXACT_TOL,
    )?;
    rows.check(
        "Z through Ybar: independent",
        a.independence_holds,
        true,
        a.independence_holds,
    );
    rows.check(
        "Z through Ybar: effect gap",
        format!("{:.3e}", a.effect_gap),
        "<= 1e-8",
        a.effect_gap <= EXACT_TOL,
    );
    let b = chain_check(
        &chain_model(false)?,
        "Xbar",
        "Ybar",
        "Zbar",
        None,
        None,
        EXACT_TOL,
    )?;
    rows.check(
        "generic B: independent",
        b.independence_holds,
        false,
        !b.independence_holds,
    );
    rows.check(
        "generic B: effect gap",
        format!("{:.3e}", b.effect_gap),
        "> 1e-8",
        b.effect_gap > EXACT_TOL,
    );
    rows.check(
        "generic B: needs Xbar -> Zbar",
        b.needs_extra_arrow,
        true,
        b.needs_extra_arrow,
    );
    Ok(())
}

fn backdoor(rows: &mut Rows) -> Result<()> {
    let a = backdoor_check(
        &backdoor_model(true)?,
        "Xbar",
        "Ybar",
        "Zbar",
        None,
        EXACT_TOL,
    )?;
    rows.check(
        "constructed: blocking",
        a.blocking_condition,
        true,
        a.blocking_condition,
    );
    rows.check(
        "constructed: adjustment gap",
        format!("{:.3e}", a.adjustment_gap),
        "<= 1e-8",
        a.adjustment_gap <= EXACT_TOL,
    );
    let b = backdoor_check(
        &backdoor_model(false)?,
        "Xbar",
        "Ybar",
        "Zbar",
        None,
        EXACT_TOL,
    )?;
    rows.info("generic: blocking", b.blocking_condition);
    rows.info(
        "generic: adjustment gap",
        format!("{:.3e}", b.adjustment_gap),
    );

    let m = two_sets_model()?;
    let grid: Vec<MacroValue> = [-1.0, 0.5, 2.0].map(MacroValue::Real).to_vec();
    let c = generalized_backdoor(&m, "Tbar", "Ybar", &["Cbar"], None, Some(&grid), EXACT_TOL)?;
    let w = generalized_backdoor(&m, "Tbar", "Ybar", &["Wbar"], None, Some(&grid), EXACT_TOL)?;
    let mut agree = 0.0f64;
    for ((_, ec), (_, ew)) in c.effects.iter().zip(&w.effects) {
        agree = agree.max(ec.discrepancy(ew)?);
    }
    let both = c.blocking_condition
        && w.blocking_condition
        && c.blocks_backdoor_paths
        && w.blocks_backdoor_paths;
    rows.check("sets {Cbar}, {Wbar}: both valid", both, true, both);
    rows.check(
        "sets {Cbar}, {Wbar}: effect gap",
        format!("{agree:.3e}"),
        "<= 1e-8",
        agree <= EXACT_TOL,
    );
    Ok(())
}

fn coordinates(s: &Scenario, rows: &mut Rows) -> Result<()> {
    let alpha = [s.p("alpha1"), s.p("alpha2")];
    let c = s.p("c");
    let h = construct_h(&alpha, c)?;
    rows.info("delta", format!("({:.6}, {:.6})", h.delta[0], h.delta[1]));
    rows.num("alpha . delta", h.beta, c, 1e-10);
    rows.num("sum delta", h.delta.iter().sum(), 1.0, 1e-10);
    rows.check(
        "H H^-1 residual",
        format!("{:.3e}", h.residual),
        "<= 1e-10",
        h.residual <= 1e-10,
    );
    let d = from_delta(&alpha, &[0.2, 0.8])?;
    let shops = shops_model(alpha, [10.0, 20.0], [1.0, 4.0])?;
    let nat = structural_equation_report(&shops, &MicroRealization::natural("Xbar"), "Ybar")?;
    rows.num("beta for delta = (0.2, 0.8)", d.beta, nat.beta, 1e-10);
    Ok(())
}

impl fmt::Display for ReproReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "scenario {} (seed {})", self.scenario, self.seed)?;
        let w = self
            .rows
            .iter()
            .map(|r| r.quantity.chars().count())
            .max()
            .unwrap_or(0);
        let wv = self
            .rows
            .iter()
            .map(|r| r.value.chars().count())
            .max()
            .unwrap_or(0);
        for r in &self.rows {
            let mark = if r.ok { "ok" } else { "MISMATCH" };
            let pad = w - r.quantity.chars().count();
            let padv = wv - r.value.chars().count();
            if r.expected.is_empty() {
                writeln!(f, "  {}{}  {}", r.quantity, " ".repeat(pad), r.value)?;
            } else {
                writeln!(
                    f,
                    "  {}{}  {}{}  expected {}  {}",
                    r.quantity,
                    " ".repeat(pad),
                    r.value,
                    " ".repeat(padv),
                    r.expected,
                    mark
                )?;
            }
        }
        write!(f, "{}", if self.pass { "PASS" } else { "FAIL" })
    }
}

/// Structured report for `--format json`.
pub fn report_json(r: &ReproReport) -> serde_json::Value {
    json!(r)
}
