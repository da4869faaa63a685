//! Exact inference for jointly Gaussian vectors.
//!
//! Degenerate (rank-deficient) Gaussians are ordinary values here: the
//! natural micro-realization lives on the hyperplane `1ᵀx = x̄`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::LinearGaussianScm;

/// Default tolerance for distribution equality in the Gaussian family.
pub const DIST_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GaussianJson", into = "GaussianJson")]
pub struct GaussianDist {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub labels: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct GaussianJson {
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
    labels: Vec<String>,
}

impl From<GaussianDist> for GaussianJson {
    fn from(d: GaussianDist) -> Self {
        Self {
            mean: d.mean.iter().copied().collect(),
            cov: linalg::to_rows(&d.cov),
            labels: d.labels,
        }
    }
}

impl TryFrom<GaussianJson> for GaussianDist {
    type Error = Error;

    fn try_from(j: GaussianJson) -> Result<Self> {
        let cov = if j.cov.is_empty() {
            DMatrix::zeros(0, 0)
        } else {
            linalg::from_rows(&j.cov)
                .ok_or_else(|| Error::Parse("ragged covariance rows".into()))?
        };
        GaussianDist::new(DVector::from_vec(j.mean), cov, j.labels)
    }
}

impl GaussianDist {
    /// Checks shapes; the covariance is symmetrized.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>, labels: Vec<String>) -> Result<Self> {
        let d = mean.len();
        if cov.nrows() != d || cov.ncols() != d || labels.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "mean {d}, cov {}x{}, labels {}",
                cov.nrows(),
                cov.ncols(),
                labels.len()
            )));
        }
        Ok(Self {
            mean,
            cov: linalg::symmetrize(&cov),
            labels,
        })
    }

    pub fn point_mass(values: &[f64], labels: Vec<String>) -> Result<Self> {
        let d = values.len();
        Self::new(
            DVector::from_column_slice(values),
            DMatrix::zeros(d, d),
            labels,
        )
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownVariable(label.to_string()))
    }

    pub fn indices_of<S: AsRef<str>>(&self, labels: &[S]) -> Result<Vec<usize>> {
        labels.iter().map(|l| self.index_of(l.as_ref())).collect()
    }

    pub fn marginal<S: AsRef<str>>(&self, labels: &[S]) -> Result<GaussianDist> {
        let idx = self.indices_of(labels)?;
        Ok(GaussianDist {
            mean: linalg::select_vec(&self.mean, &idx),
            cov: linalg::select(&self.cov, &idx, &idx),
            labels: idx.iter().map(|&i| self.labels[i].clone()).collect(),
        })
    }

    pub fn variance(&self, label: &str) -> Result<f64> {
        let i = self.index_of(label)?;
        Ok(self.cov[(i, i)])
    }

    pub fn mean_of(&self, label: &str) -> Result<f64> {
        Ok(self.mean[self.index_of(label)?])
    }

    pub fn covariance(&self, a: &str, b: &str) -> Result<f64> {
        Ok(self.cov[(self.index_of(a)?, self.index_of(b)?)])
    }

    /// Whether every variance is below `tol`.
    pub fn is_degenerate(&self, tol: f64) -> bool {
        (0..self.dim()).all(|i| self.cov[(i, i)].abs() <= tol)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        linalg::min_eigenvalue(&self.cov)
    }

    /// Condition on `f(X) = value`.
    pub fn condition_on_functional(
        &self,
        f: &AffineFunctional,
        value: &[f64],
    ) -> Result<GaussianDist> {
        f.check_input(self.dim())?;
        if value.len() != f.out_dim() {
            return Err(Error::DimensionMismatch(format!(
                "functional has {} outputs, value has {}",
                f.out_dim(),
                value.len()
            )));
        }
        let w = &f.weights;
        let s = w * &self.cov * w.transpose();
        let s_pinv = linalg::pinv_sym(&s);
        let resid = DVector::from_column_slice(value) - (w * &self.mean + &f.offset);
        // Evidence outside the support of f(X) has probability zero.
        let projected = &s * (&s_pinv * &resid);
        let scale = 1.0 + linalg::max_abs_vec(&resid);
        if linalg::max_abs_vec(&(projected - &resid)) > 1e-8 * scale {
            return Err(Error::ZeroProbability(format!(
                "value {value:?} lies outside the support of the functional"
            )));
        }
        let gain = &self.cov * w.transpose() * &s_pinv;
        let mean = &self.mean + &gain * resid;
        let cov = &self.cov - &gain * w * &self.cov;
        GaussianDist::new(mean, cov, self.labels.clone())
    }

    /// Condition on fixed values of some labels; the conditioned labels are
    /// removed from the result.
    pub fn condition_on_labels<S: AsRef<str>>(
        &self,
        labels: &[S],
        values: &[f64],
    ) -> Result<GaussianDist> {
        let idx = self.indices_of(labels)?;
        let f = AffineFunctional::selection(self.dim(), &idx, labels_of(labels));
        let cond = self.condition_on_functional(&f, values)?;
        let keep: Vec<String> = self
            .labels
            .iter()
            .enumerate()
            .filter(|(i, _)| !idx.contains(i))
            .map(|(_, l)| l.clone())
            .collect();
        cond.marginal(&keep)
    }

    /// Distribution of `f(X)`.
    pub fn push_forward(&self, f: &AffineFunctional) -> Result<GaussianDist> {
        f.check_input(self.dim())?;
        let mean = &f.weights * &self.mean + &f.offset;
        let cov = &f.weights * &self.cov * f.weights.transpose();
        GaussianDist::new(mean, cov, f.labels.clone())
    }

    /// Append `f(X)` as new components of the joint.
    pub fn extend_with(&self, f: &AffineFunctional) -> Result<GaussianDist> {
        f.check_input(self.dim())?;
        let d = self.dim();
        let k = f.out_dim();
        let mut w = DMatrix::zeros(d + k, d);
        w.view_mut((0, 0), (d, d)).fill_with_identity();
        w.view_mut((d, 0), (k, d)).copy_from(&f.weights);
        let mut b = DVector::zeros(d + k);
        b.rows_mut(d, k).copy_from(&f.offset);
        let mut labels = self.labels.clone();
        labels.extend(f.labels.iter().cloned());
        self.push_forward(&AffineFunctional::new(w, b, labels)?)
    }

    /// Max of the relative mean gap and the entrywise covariance gap.
    pub fn discrepancy(&self, other: &GaussianDist) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch(format!(
                "comparing distributions of dimension {} and {}",
                self.dim(),
                other.dim()
            )));
        }
        let mut worst = 0.0f64;
        for i in 0..self.dim() {
            let m = self.mean[i].abs().max(other.mean[i].abs()).max(1.0);
            worst = worst.max((self.mean[i] - other.mean[i]).abs() / m);
        }
        Ok(worst.max(linalg::max_abs(&(&self.cov - &other.cov))))
    }
}

fn labels_of<S: AsRef<str>>(labels: &[S]) -> Vec<String> {
    labels.iter().map(|l| l.as_ref().to_string()).collect()
}

/// `x ↦ W x + b` with labelled outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineFunctional {
    pub weights: DMatrix<f64>,
    pub offset: DVector<f64>,
    pub labels: Vec<String>,
}

impl AffineFunctional {
    pub fn new(weights: DMatrix<f64>, offset: DVector<f64>, labels: Vec<String>) -> Result<Self> {
        if offset.len() != weights.nrows() || labels.len() != weights.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "functional with {} rows, offset {}, labels {}",
                weights.nrows(),
                offset.len(),
                labels.len()
            )));
        }
        Ok(Self {
            weights,
            offset,
            labels,
        })
    }

    /// Single linear output `wᵀx`.
    pub fn row(weights: &[f64], label: &str) -> Self {
        Self {
            weights: DMatrix::from_row_slice(1, weights.len(), weights),
            offset: DVector::zeros(1),
            labels: vec![label.to_string()],
        }
    }

    pub fn sum(dim: usize, label: &str) -> Self {
        Self::row(&vec![1.0; dim], label)
    }

    pub fn identity(labels: Vec<String>) -> Self {
        let d = labels.len();
        Self {
            weights: DMatrix::identity(d, d),
            offset: DVector::zeros(d),
            labels,
        }
    }

    /// Coordinate projection onto `idx` of a `dim`-vector.
    pub fn selection(dim: usize, idx: &[usize], labels: Vec<String>) -> Self {
        let mut w = DMatrix::zeros(idx.len(), dim);
        for (r, &c) in idx.iter().enumerate() {
            w[(r, c)] = 1.0;
        }
        Self {
            weights: w,
            offset: DVector::zeros(idx.len()),
            labels,
        }
    }

    pub fn out_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn in_dim(&self) -> usize {
        self.weights.ncols()
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &AffineFunctional) -> Result<AffineFunctional> {
        self.check_input(inner.out_dim())?;
        AffineFunctional::new(
            &self.weights * &inner.weights,
            &self.weights * &inner.offset + &self.offset,
            self.labels.clone(),
        )
    }

    fn check_input(&self, d: usize) -> Result<()> {
        if self.in_dim() != d {
            return Err(Error::DimensionMismatch(format!(
                "functional expects {} inputs, distribution has {d}",
                self.in_dim()
            )));
        }
        Ok(())
    }
}

/// Joint distribution of all micro components of a valid linear-Gaussian SCM.
pub fn joint_moments(model: &LinearGaussianScm) -> Result<GaussianDist> {
    let v = model.validate();
    if !v.is_empty() {
        return Err(Error::InvalidModel(v));
    }
    LinearSystem::from_model(model).moments()
}

pub fn regression_coefficient(joint: &GaussianDist, y: &str, x: &str) -> Result<f64> {
    let vx = joint.variance(x)?;
    if vx.abs() <= 1e-14 {
        return Err(Error::ZeroVariance(x.to_string()));
    }
    Ok(joint.covariance(y, x)? / vx)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CiResult {
    pub independent: bool,
    pub max_partial_cov: f64,
    /// The conditioning block was rank deficient and a pseudo-inverse was used.
    pub singular_given: bool,
}

/// Partial covariance test of `a ⊥ b | given`.
pub fn conditional_independent<S: AsRef<str>>(
    joint: &GaussianDist,
    a: &[S],
    b: &[S],
    given: &[S],
    tol: f64,
) -> Result<CiResult> {
    let ia = joint.indices_of(a)?;
    let ib = joint.indices_of(b)?;
    let ig = joint.indices_of(given)?;
    let sab = linalg::select(&joint.cov, &ia, &ib);
    let (partial, singular) = if ig.is_empty() {
        (sab, false)
    } else {
        let sgg = linalg::select(&joint.cov, &ig, &ig);
        let sag = linalg::select(&joint.cov, &ia, &ig);
        let sgb = linalg::select(&joint.cov, &ig, &ib);
        let singular = linalg::rank_sym(&sgg) < ig.len();
        (sab - sag * linalg::pinv_sym(&sgg) * sgb, singular)
    };
    let m = linalg::max_abs(&partial);
    Ok(CiResult {
        independent: m < tol,
        max_partial_cov: m,
        singular_given: singular,
    })
}

/// A linear system `X = offset + C X + U`, `U ~ N(0, noise_cov)`, over
/// labelled components grouped into blocks. Used to evaluate mechanism
/// replacements exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub labels: Vec<String>,
    /// `(name, first component, dim)` per node.
    pub blocks: Vec<(String, usize, usize)>,
    pub offset: DVector<f64>,
    pub coef: DMatrix<f64>,
    pub noise_cov: DMatrix<f64>,
}

impl LinearSystem {
    pub fn from_model(model: &LinearGaussianScm) -> Self {
        let d = model.total_dim();
        let offs = model.offsets();
        let mut coef = DMatrix::zeros(d, d);
        let mut offset = DVector::zeros(d);
        let mut noise_cov = DMatrix::zeros(d, d);
        let mut blocks = Vec::new();
        for (i, node) in model.nodes().iter().enumerate() {
            let o = offs[i];
            offset
                .rows_mut(o, node.dim)
                .copy_from(&model.noise()[i].mean);
            noise_cov
                .view_mut((o, o), (node.dim, node.dim))
                .copy_from(&model.noise()[i].cov);
            blocks.push((node.name().to_string(), o, node.dim));
        }
        for e in model.edges() {
            let f = model.node_index(&e.from).expect("validated");
            let t = model.node_index(&e.to).expect("validated");
            let mut view = coef.view_mut((offs[t], offs[f]), (e.coeff.nrows(), e.coeff.ncols()));
            view += &e.coeff;
        }
        Self {
            labels: model.component_labels(),
            blocks,
            offset,
            coef,
            noise_cov,
        }
    }

    pub fn block(&self, name: &str) -> Result<(usize, usize)> {
        self.blocks
            .iter()
            .find(|(n, _, _)| n == name)
            .map(|(_, o, d)| (*o, *d))
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn block_indices(&self, name: &str) -> Result<Vec<usize>> {
        let (o, d) = self.block(name)?;
        Ok((o..o + d).collect())
    }

    /// Replace the mechanism of `node` with `X := intercept + gain·X_all + U'`,
    /// `U' ~ N(0, cov)` independent of everything else.
    pub fn replace_mechanism(
        &mut self,
        node: &str,
        intercept: &DVector<f64>,
        gain: &DMatrix<f64>,
        cov: &DMatrix<f64>,
    ) -> Result<()> {
        let comps = self.block_indices(node)?;
        self.replace_components(&comps, intercept, gain, cov)
    }

    /// Joint replacement of an arbitrary set of components.
    pub fn replace_components(
        &mut self,
        comps: &[usize],
        intercept: &DVector<f64>,
        gain: &DMatrix<f64>,
        cov: &DMatrix<f64>,
    ) -> Result<()> {
        let d = comps.len();
        let n = self.labels.len();
        if intercept.len() != d
            || gain.shape() != (d, n)
            || cov.shape() != (d, d)
            || comps.iter().any(|&c| c >= n)
        {
            return Err(Error::DimensionMismatch(format!(
                "replacement must be {d}-dimensional over {n} inputs"
            )));
        }
        for (r, &c) in comps.iter().enumerate() {
            self.offset[c] = intercept[r];
            self.coef.row_mut(c).copy_from(&gain.row(r));
            for j in 0..n {
                self.noise_cov[(c, j)] = 0.0;
                self.noise_cov[(j, c)] = 0.0;
            }
        }
        for (r, &a) in comps.iter().enumerate() {
            for (s, &b) in comps.iter().enumerate() {
                self.noise_cov[(a, b)] = cov[(r, s)];
            }
        }
        Ok(())
    }

    /// Cut every edge leaving `node`, letting children see the constant
    /// `value` in its place.
    pub fn freeze_outgoing(&mut self, node: &str, value: &DVector<f64>) -> Result<()> {
        let (o, d) = self.block(node)?;
        if value.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "frozen value for `{node}` has wrong length"
            )));
        }
        let cols = self.coef.columns(o, d).clone_owned();
        self.offset += &cols * value;
        self.coef.columns_mut(o, d).fill(0.0);
        Ok(())
    }

    /// Exact joint; fails if the replacements introduced a cycle.
    pub fn moments(&self) -> Result<GaussianDist> {
        self.check_acyclic()?;
        let n = self.labels.len();
        let a = DMatrix::identity(n, n) - &self.coef;
        let t = a
            .lu()
            .try_inverse()
            .ok_or_else(|| Error::Degenerate("structural system is singular".into()))?;
        let mean = &t * &self.offset;
        let cov = &t * &self.noise_cov * t.transpose();
        GaussianDist::new(mean, cov, self.labels.clone())
    }

    fn check_acyclic(&self) -> Result<()> {
        let n = self.labels.len();
        let mut indeg = vec![0usize; n];
        for i in 0..n {
            for j in 0..n {
                if i != j && self.coef[(i, j)] != 0.0 {
                    indeg[i] += 1;
                }
            }
            if self.coef[(i, i)] != 0.0 {
                return Err(Error::WrongTopology(format!(
                    "self-loop at `{}`",
                    self.labels[i]
                )));
            }
        }
        let mut stack: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut done = 0;
        while let Some(j) = stack.pop() {
            done += 1;
            for i in 0..n {
                if i != j && self.coef[(i, j)] != 0.0 {
                    indeg[i] -= 1;
                    if indeg[i] == 0 {
                        stack.push(i);
                    }
                }
            }
        }
        if done != n {
            return Err(Error::WrongTopology(
                "mechanism replacement created a cycle".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn std2() -> GaussianDist {
        GaussianDist::new(
            DVector::zeros(2),
            DMatrix::identity(2, 2),
            vec!["a".into(), "b".into()],
        )
        .unwrap()
    }

    #[test]
    fn conditioning_isotropic_pair_on_sum() {
        let c = std2()
            .condition_on_functional(&AffineFunctional::sum(2, "s"), &[0.0])
            .unwrap();
        assert!(linalg::max_abs_vec(&c.mean) < 1e-15);
        let want = DMatrix::from_row_slice(2, 2, &[0.5, -0.5, -0.5, 0.5]);
        assert!(linalg::max_abs(&(c.cov - want)) < 1e-14);
    }

    #[test]
    fn zero_functional_leaves_distribution_unchanged() {
        let d = std2();
        let f = AffineFunctional::row(&[0.0, 0.0], "z");
        let c = d.condition_on_functional(&f, &[0.0]).unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn zero_functional_with_nonzero_value_is_impossible() {
        let f = AffineFunctional::row(&[0.0, 0.0], "z");
        assert!(matches!(
            std2().condition_on_functional(&f, &[1.0]),
            Err(Error::ZeroProbability(_))
        ));
    }

    #[test]
    fn degenerate_distribution_pushes_to_point_mass() {
        let d = GaussianDist::point_mass(&[1.0, 2.0], vec!["a".into(), "b".into()]).unwrap();
        let f = AffineFunctional::new(
            DMatrix::from_row_slice(1, 2, &[3.0, -1.0]),
            DVector::from_element(1, 0.5),
            vec!["y".into()],
        )
        .unwrap();
        let p = d.push_forward(&f).unwrap();
        assert_eq!(p.mean[0], 1.5);
        assert_eq!(p.cov[(0, 0)], 0.0);
    }

    #[test]
    fn chain_moments() {
        let mut m = LinearGaussianScm::new();
        m.add_independent_node("X", vec![0.0], vec![1.0])
            .add_independent_node("Y", vec![0.0], vec![1.0])
            .add_edge("X", "Y", DMatrix::identity(1, 1));
        let j = joint_moments(&m).unwrap();
        assert_eq!(j.covariance("X", "Y").unwrap(), 1.0);
        assert_eq!(j.variance("Y").unwrap(), 2.0);
        assert_eq!(regression_coefficient(&j, "Y", "X").unwrap(), 1.0);
    }

    #[test]
    fn regression_on_constant_is_an_error() {
        let d = GaussianDist::point_mass(&[1.0, 2.0], vec!["a".into(), "b".into()]).unwrap();
        assert!(matches!(
            regression_coefficient(&d, "b", "a"),
            Err(Error::ZeroVariance(_))
        ));
    }

    #[test]
    fn identical_pair_is_not_independent() {
        let d = GaussianDist::new(
            DVector::zeros(2),
            DMatrix::from_element(2, 2, 1.0),
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        let r = conditional_independent(&d, &["a"], &["b"], &[], 1e-10).unwrap();
        assert!(!r.independent);
        let r = conditional_independent(&std2(), &["a"], &["b"], &[], 1e-10).unwrap();
        assert!(r.independent);
    }

    #[test]
    fn condition_on_labels_drops_them() {
        let d = GaussianDist::new(
            DVector::from_vec(vec![1.0, 2.0]),
            DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]),
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        let c = d.condition_on_labels(&["a"], &[3.0]).unwrap();
        assert_eq!(c.labels, vec!["b".to_string()]);
        assert!((c.mean[0] - 3.0).abs() < 1e-14);
        assert!((c.cov[(0, 0)] - 1.5).abs() < 1e-14);
    }

    #[test]
    fn json_shape() {
        let s = serde_json::to_value(std2()).unwrap();
        assert_eq!(s["cov"][1][1], 1.0);
        let back: GaussianDist = serde_json::from_value(s).unwrap();
        assert_eq!(back, std2());
    }

    #[test]
    fn replacement_cycle_is_rejected() {
        let mut m = LinearGaussianScm::new();
        m.add_independent_node("X", vec![0.0], vec![1.0])
            .add_independent_node("Y", vec![0.0], vec![1.0])
            .add_edge("X", "Y", DMatrix::identity(1, 1));
        let mut sys = LinearSystem::from_model(&m);
        let gain = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        sys.replace_mechanism("X", &DVector::zeros(1), &gain, &DMatrix::zeros(1, 1))
            .unwrap();
        assert!(sys.moments().is_err());
    }
}
