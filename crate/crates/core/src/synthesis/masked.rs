//! Categorical models `Z → X → Y`, `Z → Y` where `X` is confounded with
//! both `Y` and `Ȳ`, yet a given non-natural realization of `do(x̄)`
//! reproduces `P(Ȳ | x̄)` exactly.
//!
//! `P(Z)` and `P(X|Z)` are drawn at random; `P(Ȳ | X, Z)` comes from the
//! kernel construction applied fibre by fibre of `π_X`, and is lifted to
//! `Y` uniformly within the fibres of `π_Y`.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::aggregation::{
    AggregatedModel, AggregationSpec, ExplicitRealization, MicroRealization, Replacement,
};
use crate::confounding::classify_realization;
use crate::distribution::MacroValue;
use crate::error::{Error, Result};
use crate::model::CategoricalScm;
use crate::synthesis::discrete_kernel::kernel_table;

/// Total-variation gap above which a pair counts as confounded.
pub const CONFOUNDED_TOL: f64 = 1e-9;

/// Macro gap accepted as exact equality.
pub const EXACT_MACRO_TOL: f64 = 1e-12;

const MAX_ATTEMPTS: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaskedSpec {
    pub pi_x: Vec<usize>,
    pub pi_y: Vec<usize>,
    pub z_card: usize,
    /// One distribution over `X` per macro category, supported on its fibre.
    pub realization: Vec<Vec<f64>>,
}

impl MaskedSpec {
    pub fn x_card(&self) -> usize {
        self.pi_x.len()
    }

    pub fn y_card(&self) -> usize {
        self.pi_y.len()
    }

    pub fn xbar_card(&self) -> usize {
        self.pi_x.iter().max().map_or(0, |m| m + 1)
    }

    pub fn ybar_card(&self) -> usize {
        self.pi_y.iter().max().map_or(0, |m| m + 1)
    }

    fn fibre(&self, c: usize) -> Vec<usize> {
        (0..self.x_card()).filter(|&x| self.pi_x[x] == c).collect()
    }

    fn validate(&self) -> Result<()> {
        let (nx, ny, nz) = (self.x_card(), self.y_card(), self.z_card);
        let (kx, ky) = (self.xbar_card(), self.ybar_card());
        let surjective = |t: &[usize], k: usize| (0..k).all(|c| t.contains(&c));
        if !surjective(&self.pi_x, kx) || !surjective(&self.pi_y, ky) {
            return Err(Error::Hypotheses(
                "aggregation tables must be surjective".into(),
            ));
        }
        if kx >= nx {
            return Err(Error::Hypotheses(format!(
                "|X̄| = {kx} must be below |X| = {nx}"
            )));
        }
        if ky >= nx.min(nz) {
            return Err(Error::Hypotheses(format!(
                "|Ȳ| = {ky} must be below min(|X|, |Z|) = {}",
                nx.min(nz)
            )));
        }
        if ky >= ny {
            return Err(Error::Hypotheses(format!(
                "|Ȳ| = {ky} must be below |Y| = {ny}"
            )));
        }
        if ky < 2 {
            return Err(Error::Hypotheses("|Ȳ| must be at least 2".into()));
        }
        if self.realization.len() != kx {
            return Err(Error::Hypotheses(format!(
                "realization has {} rows for {kx} macro categories",
                self.realization.len()
            )));
        }
        for (c, row) in self.realization.iter().enumerate() {
            let s: f64 = row.iter().sum();
            if row.len() != nx
                || row.iter().any(|&p| !(0.0..=1.0).contains(&p))
                || (s - 1.0).abs() > 1e-12
            {
                return Err(Error::Hypotheses(format!(
                    "realization row {c} is not a distribution over X"
                )));
            }
            let off: f64 = (0..nx).filter(|&x| self.pi_x[x] != c).map(|x| row[x]).sum();
            if off > 0.0 {
                return Err(Error::SupportViolation {
                    target: "Xbar".into(),
                    value: c.to_string(),
                    detail: format!("mass {off:e} outside the fibre"),
                });
            }
        }
        Ok(())
    }
}

/// Random surjective tables and a random realization on each fibre.
pub fn random_masked_spec(
    x_card: usize,
    z_card: usize,
    y_card: usize,
    xbar_card: usize,
    ybar_card: usize,
    seed: u64,
) -> Result<MaskedSpec> {
    if xbar_card == 0 || ybar_card == 0 || xbar_card > x_card || ybar_card > y_card {
        return Err(Error::Hypotheses(
            "macro cardinalities exceed micro ones".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let table = |n: usize, k: usize, rng: &mut ChaCha8Rng| {
        let mut t: Vec<usize> = (0..k).collect();
        t.extend((k..n).map(|_| rng.random_range(0..k)));
        t.shuffle(rng);
        t
    };
    let pi_x = table(x_card, xbar_card, &mut rng);
    let pi_y = table(y_card, ybar_card, &mut rng);
    let realization = (0..xbar_card)
        .map(|c| {
            let w: Vec<f64> = (0..x_card)
                .map(|x| {
                    if pi_x[x] == c {
                        rng.random_range(0.1..1.0)
                    } else {
                        0.0
                    }
                })
                .collect();
            let s: f64 = w.iter().sum();
            w.into_iter().map(|p| p / s).collect()
        })
        .collect();
    Ok(MaskedSpec {
        pi_x,
        pi_y,
        z_card,
        realization,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskedInstance {
    pub spec: MaskedSpec,
    pub model: AggregatedModel,
    pub realization: MicroRealization,
    /// `max_x TV(P(Y|x), P(Y|do(x)))`.
    pub xy_gap: f64,
    /// `max_x TV(P(Ȳ|x), P(Ȳ|do(x)))`.
    pub xybar_gap: f64,
    /// `max_x̄ TV(P(Ȳ|x̄), P(Ȳ|do(x̄)))` under the realization.
    pub macro_gap: f64,
    pub attempts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaskedSummary {
    pub spec: MaskedSpec,
    pub xy_gap: f64,
    pub xybar_gap: f64,
    pub macro_gap: f64,
    pub attempts: usize,
}

impl MaskedInstance {
    pub fn summary(&self) -> MaskedSummary {
        MaskedSummary {
            spec: self.spec.clone(),
            xy_gap: self.xy_gap,
            xybar_gap: self.xybar_gap,
            macro_gap: self.macro_gap,
            attempts: self.attempts,
        }
    }
}

fn random_simplex(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..1.0)).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|p| p / s).collect()
}

/// Build and verify an instance; never returns an unverified model.
pub fn theorem2_instance(spec: &MaskedSpec, seed: u64) -> Result<MaskedInstance> {
    spec.validate()?;
    let (nx, nz, ny) = (spec.x_card(), spec.z_card, spec.y_card());
    let (kx, ky) = (spec.xbar_card(), spec.ybar_card());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    'attempt: for attempt in 1..=MAX_ATTEMPTS {
        let pz = random_simplex(nz, &mut rng);
        let px_z: Vec<Vec<f64>> = (0..nz).map(|_| random_simplex(nx, &mut rng)).collect();
        let pxz = |x: usize, z: usize| pz[z] * px_z[z][x];
        let px: Vec<f64> = (0..nx).map(|x| (0..nz).map(|z| pxz(x, z)).sum()).collect();

        // q[x][z] is the distribution of Ȳ at (x, z).
        let mut q = vec![vec![Vec::new(); nz]; nx];
        for c in 0..kx {
            let fibre = spec.fibre(c);
            let pxbar: f64 = fibre.iter().map(|&x| px[x]).sum();
            if fibre.len() > 1 {
                let tv: f64 = fibre
                    .iter()
                    .map(|&x| (px[x] / pxbar - spec.realization[c][x]).abs())
                    .sum::<f64>()
                    / 2.0;
                if tv <= 1e-3 {
                    continue 'attempt;
                }
            }
            let v = DMatrix::from_fn(fibre.len(), nz, |r, z| {
                let x = fibre[r];
                pxz(x, z) / pxbar - pz[z] * spec.realization[c][x]
            });
            let u = DMatrix::from_fn(fibre.len(), nz, |r, z| {
                let x = fibre[r];
                pxz(x, z) / px[x] - pz[z]
            });
            let need = vec![fibre.len() > 1; fibre.len()];
            let table = match kernel_table(&v, &u, ky, &need) {
                Ok(t) => t,
                Err(Error::Hypotheses(_)) => continue 'attempt,
                Err(e) => return Err(e),
            };
            for (r, &x) in fibre.iter().enumerate() {
                q[x] = table.rows[r].clone();
            }
        }

        let fibre_size: Vec<usize> = (0..ky)
            .map(|c| spec.pi_y.iter().filter(|&&b| b == c).count())
            .collect();
        let mut cpt_y = Vec::with_capacity(nz * nx * ny);
        for z in 0..nz {
            for x in 0..nx {
                for y in 0..ny {
                    let c = spec.pi_y[y];
                    cpt_y.push(q[x][z][c] / fibre_size[c] as f64);
                }
            }
        }
        let mut scm = CategoricalScm::new();
        scm.add_node("Z", vec![nz])
            .add_node("X", vec![nx])
            .add_node("Y", vec![ny])
            .add_edge("Z", "X")
            .add_edge("Z", "Y")
            .add_edge("X", "Y");
        scm.set_cpt("Z", pz.clone())?;
        scm.set_cpt("X", px_z.concat())?;
        scm.set_cpt("Y", cpt_y)?;
        let model = AggregatedModel::new(
            scm.into(),
            vec![
                AggregationSpec::discrete("X", spec.pi_x.clone(), kx),
                AggregationSpec::discrete("Y", spec.pi_y.clone(), ky),
            ],
        )?;
        let realization = MicroRealization::explicit(
            "Xbar",
            ExplicitRealization::Categorical {
                table: spec.realization.clone(),
            },
        );
        let (xy_gap, xybar_gap) = micro_gaps(&model)?;
        let report = classify_realization(&model, &realization, "Ybar", None, EXACT_MACRO_TOL)?;
        let macro_gap = report.max_discrepancy;
        if xy_gap <= CONFOUNDED_TOL || xybar_gap <= CONFOUNDED_TOL || macro_gap > EXACT_MACRO_TOL {
            return Err(Error::Verification(format!(
                "instance gaps: X-Y {xy_gap:e}, X-Ȳ {xybar_gap:e}, macro {macro_gap:e}"
            )));
        }
        return Ok(MaskedInstance {
            spec: spec.clone(),
            model,
            realization,
            xy_gap,
            xybar_gap,
            macro_gap,
            attempts: attempt,
        });
    }
    Err(Error::Verification(format!(
        "no admissible draw of P(Z), P(X|Z) in {MAX_ATTEMPTS} attempts"
    )))
}

/// Largest observational/interventional gaps of `X` on `Y` and on `Ȳ`.
pub fn micro_gaps(model: &AggregatedModel) -> Result<(f64, f64)> {
    let scm = model.scm().as_categorical()?;
    let xi = scm.node_index("X")?;
    let nx = scm.states(xi);
    let obs = model.observational()?;
    let (mut gy, mut gybar) = (0.0f64, 0.0f64);
    for x in 0..nx {
        let mut point = vec![0.0; nx];
        point[x] = 1.0;
        let rep = Replacement::Categorical {
            nodes: vec![xi],
            parents: Vec::new(),
            table: point,
        };
        let int = model.joint_with(&[rep])?;
        for (effect, gap) in [("Y", &mut gy), ("Ybar", &mut gybar)] {
            let o = obs
                .marginal(&["X", effect])?
                .condition(&[("X", MacroValue::Category(x))])?;
            let i = int.marginal(&[effect])?;
            *gap = gap.max(o.discrepancy(&i)?);
        }
    }
    Ok((gy, gybar))
}
