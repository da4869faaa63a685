//! Macro noise through the conditional CDF.
//!
//! With `W = Σ_j f_j(X_j)` and `Ȳ = W + V̄`, the variable
//! `M = P(W ≤ w | X̄ = x̄)` is uniform and independent of `X̄`, and
//! `Ȳ = φ(X̄, M) + V̄` with `φ(x̄, ·)` the conditional quantile function.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, StandardNormal};
use serde::Serialize;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::aggregation::{AggregatedModel, AggregationKind};
use crate::error::{Error, Result};
use crate::gaussian::AffineFunctional;
use crate::linalg;
use crate::model::sample;
use crate::synthesis::gaussian_inhibitor::total_effects;

/// `σ_{W|x̄}` below this (relative to the scale of `W`) counts as deterministic.
pub const DEGENERATE_SD: f64 = 1e-9;

/// Two-sided Kolmogorov-Smirnov critical value at level 0.01, times `√n`.
pub const KS_CRIT_01: f64 = 1.628;

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("valid parameters")
}

/// Standard normal quantile with two Newton steps on top of the library value.
pub fn normal_quantile(m: f64) -> f64 {
    let n = std_normal();
    let mut z = n.inverse_cdf(m);
    if !z.is_finite() {
        return z;
    }
    for _ in 0..2 {
        let pdf = n.pdf(z);
        if pdf <= 0.0 {
            break;
        }
        z -= (n.cdf(z) - m) / pdf;
    }
    z
}

/// Closed form for Gaussian `W | x̄ ~ N(a + b x̄, σ²)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaussianCdfNoise {
    /// Weights of `W` over the cause components.
    pub alpha: Vec<f64>,
    pub mean_intercept: f64,
    pub mean_slope: f64,
    pub sd: f64,
}

/// Monotone piecewise-linear CDF through quantile knots.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalCdf {
    pub knots_w: Vec<f64>,
    pub knots_m: Vec<f64>,
}

impl EmpiricalCdf {
    /// Knots at `resolution` evenly spaced empirical quantiles; ties dropped.
    pub fn from_samples(samples: &[f64], resolution: usize) -> Result<Self> {
        if resolution < 2 {
            return Err(Error::Hypotheses("resolution must be at least 2".into()));
        }
        let mut s: Vec<f64> = samples.iter().copied().filter(|v| v.is_finite()).collect();
        s.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        if s.len() < 2 || s[0] == s[s.len() - 1] {
            return Err(Error::Degenerate("conditional samples are constant".into()));
        }
        let n = s.len();
        let mut knots_w: Vec<f64> = Vec::new();
        let mut knots_m: Vec<f64> = Vec::new();
        for k in 0..resolution {
            let pos = k * (n - 1) / (resolution - 1);
            let w = s[pos];
            if knots_w.last().is_some_and(|&last| w <= last) {
                continue;
            }
            knots_w.push(w);
            knots_m.push(pos as f64 / (n - 1) as f64);
        }
        Ok(Self { knots_w, knots_m })
    }

    pub fn cdf(&self, w: f64) -> f64 {
        interpolate(&self.knots_w, &self.knots_m, w)
    }

    pub fn quantile(&self, m: f64) -> f64 {
        interpolate(&self.knots_m, &self.knots_w, m)
    }
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let last = xs.len() - 1;
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[last] {
        return ys[last];
    }
    let k = xs.partition_point(|&v| v <= x).max(1);
    let t = (x - xs[k - 1]) / (xs[k] - xs[k - 1]);
    ys[k - 1] + t * (ys[k] - ys[k - 1])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum CdfNoiseModel {
    Gaussian(GaussianCdfNoise),
    /// One interpolant per tabulated x̄.
    Empirical(Vec<(f64, EmpiricalCdf)>),
}

impl CdfNoiseModel {
    /// `M(x̄, w)`.
    pub fn cdf(&self, xbar: f64, w: f64) -> Result<f64> {
        match self {
            CdfNoiseModel::Gaussian(g) => {
                Ok(std_normal().cdf((w - g.mean_intercept - g.mean_slope * xbar) / g.sd))
            }
            CdfNoiseModel::Empirical(slices) => Ok(slice(slices, xbar)?.cdf(w)),
        }
    }

    /// `φ(x̄, m)`.
    pub fn quantile(&self, xbar: f64, m: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&m) {
            return Err(Error::InadmissibleGrid(format!("{m} is not a probability")));
        }
        match self {
            CdfNoiseModel::Gaussian(g) => {
                Ok(g.mean_intercept + g.mean_slope * xbar + g.sd * normal_quantile(m))
            }
            CdfNoiseModel::Empirical(slices) => Ok(slice(slices, xbar)?.quantile(m)),
        }
    }
}

fn slice(slices: &[(f64, EmpiricalCdf)], xbar: f64) -> Result<&EmpiricalCdf> {
    slices
        .iter()
        .find(|(x, _)| (x - xbar).abs() <= 1e-12 * xbar.abs().max(1.0))
        .map(|(_, c)| c)
        .ok_or_else(|| Error::InadmissibleGrid(format!("no conditional samples at x̄ = {xbar}")))
}

/// Sample-based model from explicit conditional samples of `W` per x̄.
pub fn empirical_cdf_noise(slices: &[(f64, Vec<f64>)], resolution: usize) -> Result<CdfNoiseModel> {
    let out = slices
        .iter()
        .map(|(x, s)| Ok((*x, EmpiricalCdf::from_samples(s, resolution)?)))
        .collect::<Result<_>>()?;
    Ok(CdfNoiseModel::Empirical(out))
}

fn check_sums(model: &AggregatedModel, cause: &str, effect: &str) -> Result<()> {
    if !model.is_gaussian() {
        return Err(Error::WrongFamily(
            "closed-form CDF noise needs a linear-Gaussian model".into(),
        ));
    }
    for m in [cause, effect] {
        if model.agg(m)?.kind != AggregationKind::Sum {
            return Err(Error::InvalidAggregation(format!(
                "`{m}` is not a sum aggregation"
            )));
        }
    }
    Ok(())
}

/// Closed-form `M` for a linear-Gaussian model; `W = αᵀX` over the cause
/// group with `α` the total effects on the effect macro. `resolution` is
/// unused by the closed form.
pub fn cdf_noise(
    model: &AggregatedModel,
    cause: &str,
    effect: &str,
    _resolution: usize,
) -> Result<CdfNoiseModel> {
    check_sums(model, cause, effect)?;
    let alpha = total_effects(model, cause, effect)?;
    let obs = model.observational()?;
    let obs = obs.as_gaussian()?;
    let labels = model.group_labels(cause)?;
    let mut w = vec![0.0; obs.dim()];
    for (l, a) in labels.iter().zip(&alpha) {
        w[obs.index_of(l)?] = *a;
    }
    let joint = obs.extend_with(&AffineFunctional::row(&w, "W"))?;
    let (mx, vx) = (joint.mean_of(cause)?, joint.variance(cause)?);
    let (mw, vw) = (joint.mean_of("W")?, joint.variance("W")?);
    if vx <= 1e-14 {
        return Err(Error::ZeroVariance(cause.to_string()));
    }
    let b = joint.covariance("W", cause)? / vx;
    let var = vw - b * b * vx;
    let scale = vw.abs().sqrt().max(1.0);
    if var <= (DEGENERATE_SD * scale).powi(2) {
        return Err(Error::Degenerate(format!(
            "W is a function of {cause} (conditional variance {var:e})"
        )));
    }
    Ok(CdfNoiseModel::Gaussian(GaussianCdfNoise {
        alpha,
        mean_intercept: mw - b * mx,
        mean_slope: b,
        sd: var.sqrt(),
    }))
}

/// `sup |F_n - F|` against Uniform(0, 1).
pub fn ks_uniform(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let n = v.len() as f64;
    v.iter().enumerate().fold(0.0f64, |d, (i, &u)| {
        let u = u.clamp(0.0, 1.0);
        d.max((i + 1) as f64 / n - u).max(u - i as f64 / n)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KsSlice {
    pub xbar: f64,
    pub statistic: f64,
    pub critical: f64,
    pub pass: bool,
}

/// KS statistic of `M | x̄` per slice, drawing `X | X̄ = x̄` from the exact
/// micro conditional.
pub fn ks_uniformity(
    model: &AggregatedModel,
    cause: &str,
    noise: &CdfNoiseModel,
    xbars: &[f64],
    n: usize,
    seed: u64,
) -> Result<Vec<KsSlice>> {
    let CdfNoiseModel::Gaussian(g) = noise else {
        return Err(Error::WrongFamily(
            "slice sampling needs the closed-form model".into(),
        ));
    };
    let labels = model.group_labels(cause)?;
    let mut keep = labels.clone();
    keep.push(cause.to_string());
    let obs = model.observational()?.as_gaussian()?.marginal(&keep)?;
    let alpha = DVector::from_column_slice(&g.alpha);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for &x in xbars {
        let cond = obs.condition_on_labels(&[cause], &[x])?;
        let l = linalg::psd_factor(&cond.cov);
        let k = cond.dim();
        let mut m = Vec::with_capacity(n);
        for _ in 0..n {
            let z = DVector::from_fn(k, |_, _| StandardNormal.sample(&mut rng));
            let xs = &cond.mean + &l * z;
            m.push(noise.cdf(x, alpha.dot(&xs))?);
        }
        let statistic = ks_uniform(&m);
        let critical = KS_CRIT_01 / (n as f64).sqrt();
        out.push(KsSlice {
            xbar: x,
            statistic,
            critical,
            pass: statistic < critical,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reconstruction {
    pub n: usize,
    /// `max |φ(X̄, M) + V̄ - Ȳ|` over the samples.
    pub max_error: f64,
}

/// Rebuild `Ȳ` from `(X̄, M, V̄)` on ancestral samples.
pub fn reconstruct_on_samples(
    model: &AggregatedModel,
    cause: &str,
    effect: &str,
    noise: &CdfNoiseModel,
    n: usize,
    seed: u64,
) -> Result<Reconstruction> {
    let CdfNoiseModel::Gaussian(g) = noise else {
        return Err(Error::WrongFamily(
            "reconstruction needs the closed-form model".into(),
        ));
    };
    let s = sample(model.scm(), n, seed)?;
    let col = |m: &str| -> Result<DVector<f64>> {
        let mut acc = DVector::zeros(n);
        for l in model.group_labels(m)? {
            acc += DVector::from_vec(s.column(&l)?);
        }
        Ok(acc)
    };
    let xbar = col(cause)?;
    let ybar = col(effect)?;
    let xs: DMatrix<f64> = {
        let labels = model.group_labels(cause)?;
        let cols: Vec<DVector<f64>> = labels
            .iter()
            .map(|l| Ok(DVector::from_vec(s.column(l)?)))
            .collect::<Result<_>>()?;
        DMatrix::from_columns(&cols)
    };
    let w = &xs * DVector::from_column_slice(&g.alpha);
    let mut max_error = 0.0f64;
    for i in 0..n {
        let v = ybar[i] - w[i];
        let m = noise.cdf(xbar[i], w[i])?;
        let rebuilt = noise.quantile(xbar[i], m)? + v;
        max_error = max_error.max((rebuilt - ybar[i]).abs());
    }
    Ok(Reconstruction { n, max_error })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AveragePriceReport {
    pub n: usize,
    /// `max |X̄·M - Ȳ| / max(1, |Ȳ|)`.
    pub max_identity_error: f64,
    pub cov_m_xbar: f64,
    pub cov_se: f64,
    /// `cov_m_xbar / cov_se` (0 when the standard error vanishes).
    pub z_score: f64,
    pub near_zero_fraction: f64,
    pub m_mean: f64,
}

/// `M = αᵀX / X̄`, so that `Ȳ = X̄ · M` when the effect has no own noise.
pub fn average_price_noise(
    model: &AggregatedModel,
    cause: &str,
    effect: &str,
    n: usize,
    seed: u64,
    max_near_zero: f64,
) -> Result<AveragePriceReport> {
    check_sums(model, cause, effect)?;
    if n < 2 {
        return Err(Error::Hypotheses("need at least two samples".into()));
    }
    let alpha = total_effects(model, cause, effect)?;
    let obs = model.observational()?;
    let obs = obs.as_gaussian()?;
    let labels = model.group_labels(cause)?;
    let mut w = vec![0.0; obs.dim()];
    w[obs.index_of(effect)?] = 1.0;
    for (l, a) in labels.iter().zip(&alpha) {
        w[obs.index_of(l)?] -= a;
    }
    let v = obs.push_forward(&AffineFunctional::row(&w, "V"))?;
    let (mx, vx) = (obs.mean_of(cause)?, obs.variance(cause)?);
    if v.cov[(0, 0)].abs() > 1e-12 * (1.0 + vx) || v.mean[0].abs() > 1e-12 * (1.0 + mx.abs()) {
        return Err(Error::Hypotheses(
            "the effect carries noise of its own".into(),
        ));
    }
    let s = sample(model.scm(), n, seed)?;
    let cols: Vec<Vec<f64>> = labels.iter().map(|l| s.column(l)).collect::<Result<_>>()?;
    let ylabels = model.group_labels(effect)?;
    let ycols: Vec<Vec<f64>> = ylabels.iter().map(|l| s.column(l)).collect::<Result<_>>()?;
    let zero_tol = 1e-9 * (mx.abs() + vx.sqrt()).max(1.0);
    let mut xb = Vec::with_capacity(n);
    let mut ms = Vec::with_capacity(n);
    let mut near_zero = 0usize;
    let mut max_identity_error = 0.0f64;
    for i in 0..n {
        let x: f64 = cols.iter().map(|c| c[i]).sum();
        let y: f64 = ycols.iter().map(|c| c[i]).sum();
        if x.abs() <= zero_tol {
            near_zero += 1;
            continue;
        }
        let wi: f64 = cols.iter().zip(&alpha).map(|(c, a)| a * c[i]).sum();
        let m = wi / x;
        max_identity_error = max_identity_error.max((x * m - y).abs() / y.abs().max(1.0));
        xb.push(x);
        ms.push(m);
    }
    let near_zero_fraction = near_zero as f64 / n as f64;
    if near_zero_fraction > max_near_zero {
        return Err(Error::Degenerate(format!(
            "X̄ is numerically zero on a fraction {near_zero_fraction} of the samples"
        )));
    }
    let k = xb.len() as f64;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (x_mean, m_mean) = (mean(&xb), mean(&ms));
    let prods: Vec<f64> = xb
        .iter()
        .zip(&ms)
        .map(|(x, m)| (x - x_mean) * (m - m_mean))
        .collect();
    let cov = mean(&prods);
    let var_p = prods.iter().map(|p| (p - cov).powi(2)).sum::<f64>() / (k - 1.0);
    let se = (var_p / k).sqrt();
    Ok(AveragePriceReport {
        n,
        max_identity_error,
        cov_m_xbar: cov,
        cov_se: se,
        z_score: if se > 0.0 { cov / se } else { 0.0 },
        near_zero_fraction,
        m_mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregation::AggregationSpec;
    use crate::model::LinearGaussianScm;

    fn shops(a: [f64; 2]) -> AggregatedModel {
        let mut m = LinearGaussianScm::new();
        m.add_independent_node("X", vec![10.0, 20.0], vec![1.0, 4.0])
            .add_node("Y", vec![0.0, 0.0], DMatrix::zeros(2, 2))
            .add_edge(
                "X",
                "Y",
                DMatrix::from_diagonal(&DVector::from_vec(a.to_vec())),
            );
        AggregatedModel::new(
            m.into(),
            vec![AggregationSpec::sum("X"), AggregationSpec::sum("Y")],
        )
        .unwrap()
    }

    #[test]
    fn shops_closed_form() {
        let CdfNoiseModel::Gaussian(g) = cdf_noise(&shops([2.0, 5.0]), "Xbar", "Ybar", 0).unwrap()
        else {
            panic!()
        };
        assert!((g.mean_slope - 4.4).abs() < 1e-12);
        assert!((g.sd * g.sd - 7.2).abs() < 1e-10);
    }

    #[test]
    fn round_trip_on_a_grid() {
        let noise = cdf_noise(&shops([2.0, 5.0]), "Xbar", "Ybar", 0).unwrap();
        let mut worst = 0.0f64;
        for x in [25.0, 30.0, 35.0] {
            for k in -40..=40 {
                let w = 4.4 * x + 20.0 - 88.0 + k as f64 * 0.25;
                let back = noise.quantile(x, noise.cdf(x, w).unwrap()).unwrap();
                worst = worst.max((back - w).abs());
            }
        }
        assert!(worst < 1e-8, "{worst}");
    }

    #[test]
    fn equal_prices_are_degenerate() {
        assert!(matches!(
            cdf_noise(&shops([3.0, 3.0]), "Xbar", "Ybar", 0),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(
            cdf_noise(&shops([0.0, 0.0]), "Xbar", "Ybar", 0),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn reconstruction_and_uniformity() {
        let m = shops([2.0, 5.0]);
        let noise = cdf_noise(&m, "Xbar", "Ybar", 0).unwrap();
        let r = reconstruct_on_samples(&m, "Xbar", "Ybar", &noise, 2000, 3).unwrap();
        assert!(r.max_error < 1e-8);
        let ks = ks_uniformity(&m, "Xbar", &noise, &[30.0, 33.0], 4000, 1).unwrap();
        assert!(ks.iter().all(|s| s.pass));
    }

    #[test]
    fn empirical_interpolant_is_monotone() {
        let samples: Vec<f64> = (0..1000).map(|i| (i as f64 / 999.0).powi(2)).collect();
        let e = empirical_cdf_noise(&[(1.0, samples)], 50).unwrap();
        let mut prev = -1.0;
        for k in 0..=100 {
            let m = e.cdf(1.0, k as f64 / 100.0).unwrap();
            assert!(m >= prev);
            prev = m;
        }
        for k in 1..20 {
            let m = k as f64 / 20.0;
            let w = e.quantile(1.0, m).unwrap();
            assert!((e.cdf(1.0, w).unwrap() - m).abs() < 1e-12);
        }
        assert!(e.cdf(2.0, 0.5).is_err());
        assert!(empirical_cdf_noise(&[(1.0, vec![2.0; 10])], 5).is_err());
    }

    #[test]
    fn average_price() {
        let r = average_price_noise(&shops([2.0, 5.0]), "Xbar", "Ybar", 20000, 0, 1e-3).unwrap();
        assert!(r.max_identity_error < 1e-13);
        assert!(r.z_score.abs() > 5.0);
        let flat = average_price_noise(&shops([3.0, 3.0]), "Xbar", "Ybar", 2000, 0, 1e-3).unwrap();
        assert!(flat.cov_m_xbar.abs() < 1e-10);
        assert!((flat.m_mean - 3.0).abs() < 1e-12);
    }
}
