//! Random model generators shared by the integration tests.
#![allow(dead_code)]

use aggcausal::{AggregatedModel, AggregationSpec, CategoricalScm, LinearGaussianScm};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-2.0..2.0))
}

pub fn vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-3.0..3.0)).collect()
}

/// `A Aᵀ + 0.1 I`.
pub fn psd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let a = matrix(rng, n, n);
    &a * a.transpose() + DMatrix::identity(n, n) * 0.1
}

pub fn simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|p| p / s).collect()
}

/// Random surjective, non-injective map from `n` states onto `k < n`.
pub fn coarsening(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    let mut t: Vec<usize> = (0..k).collect();
    t.extend((k..n).map(|_| rng.random_range(0..k)));
    t.shuffle(rng);
    t
}

/// Exogenous `X` (dimension `n`) with correlated noise driving `Y`.
pub fn unconfounded_gaussian(seed: u64, n: usize) -> AggregatedModel {
    let mut r = rng(seed);
    let m_dim = r.random_range(2..=3);
    let mut m = LinearGaussianScm::new();
    let (mx, cx) = (vector(&mut r, n), psd(&mut r, n));
    let (my, cy) = (vector(&mut r, m_dim), psd(&mut r, m_dim));
    let b = matrix(&mut r, m_dim, n);
    m.add_node("X", mx, cx)
        .add_node("Y", my, cy)
        .add_edge("X", "Y", b);
    AggregatedModel::new(
        m.into(),
        vec![AggregationSpec::sum("X"), AggregationSpec::sum("Y")],
    )
    .expect("valid model")
}

/// `X → Y` with categorical vector nodes and random coarsenings.
pub fn unconfounded_categorical(seed: u64) -> AggregatedModel {
    let mut r = rng(seed);
    let x_cards = match r.random_range(0..3) {
        0 => vec![2, 2],
        1 => vec![3],
        _ => vec![2, 3],
    };
    let y_cards = if r.random_bool(0.5) {
        vec![3]
    } else {
        vec![2, 2]
    };
    let nx: usize = x_cards.iter().product();
    let ny: usize = y_cards.iter().product();
    let mut m = CategoricalScm::new();
    m.add_node("X", x_cards)
        .add_node("Y", y_cards)
        .add_edge("X", "Y");
    m.set_cpt("X", simplex(&mut r, nx)).unwrap();
    let cpt: Vec<f64> = (0..nx).flat_map(|_| simplex(&mut r, ny)).collect();
    m.set_cpt("Y", cpt).unwrap();
    let kx = r.random_range(2..nx);
    let ky = r.random_range(2..ny);
    let tx = coarsening(&mut r, nx, kx);
    let ty = coarsening(&mut r, ny, ky);
    AggregatedModel::new(
        m.into(),
        vec![
            AggregationSpec::discrete("X", tx, kx),
            AggregationSpec::discrete("Y", ty, ky),
        ],
    )
    .expect("valid model")
}

/// `Z → X`, `Z → Y`, `X → Y`, all of dimension `n`.
pub fn confounded_gaussian(seed: u64, n: usize) -> AggregatedModel {
    let mut r = rng(seed);
    let mut m = LinearGaussianScm::new();
    let cz = psd(&mut r, n);
    let zm = vector(&mut r, n);
    let xm = vector(&mut r, n);
    let ym = vector(&mut r, n);
    let cx = DMatrix::from_diagonal(&DVector::from_fn(n, |_, _| r.random_range(0.05..0.5)));
    let cy = DMatrix::from_diagonal(&DVector::from_fn(n, |_, _| r.random_range(0.05..0.5)));
    let zx = matrix(&mut r, n, n);
    let zy = matrix(&mut r, n, n);
    let xy = matrix(&mut r, n, n) * 2.0;
    m.add_node("Z", zm, cz)
        .add_node("X", xm, cx)
        .add_node("Y", ym, cy)
        .add_edge("Z", "X", zx)
        .add_edge("Z", "Y", zy)
        .add_edge("X", "Y", xy);
    AggregatedModel::new(
        m.into(),
        vec![AggregationSpec::sum("X"), AggregationSpec::sum("Y")],
    )
    .expect("valid model")
}

/// `X → Y → Z` with 2-dimensional nodes. With `through`, `Z` sees `Y` only
/// via `Ȳ`.
pub fn chain(seed: u64, through: bool) -> AggregatedModel {
    let mut r = rng(seed);
    let n = r.random_range(2..=3);
    let b = if through {
        let c = DVector::from_vec(vector(&mut r, n));
        &c * DVector::from_element(n, 1.0).transpose()
    } else {
        matrix(&mut r, n, n)
    };
    let mut m = LinearGaussianScm::new();
    let (xm, xc) = (vector(&mut r, n), psd(&mut r, n));
    let (ym, yc) = (vector(&mut r, n), psd(&mut r, n));
    let (zm, zc) = (vector(&mut r, n), psd(&mut r, n));
    let a = matrix(&mut r, n, n);
    m.add_node("X", xm, xc)
        .add_node("Y", ym, yc)
        .add_node("Z", zm, zc)
        .add_edge("X", "Y", a)
        .add_edge("Y", "Z", b);
    AggregatedModel::new(
        m.into(),
        vec![
            AggregationSpec::sum("X"),
            AggregationSpec::sum("Y"),
            AggregationSpec::sum("Z"),
        ],
    )
    .expect("valid model")
}

/// `X → Y`, `X → Z`, `Y → Z` with `Z` depending on `X` only via `X̄`.
pub fn blocking_backdoor(seed: u64) -> AggregatedModel {
    let mut r = rng(seed);
    let n = r.random_range(2..=3);
    let c = DVector::from_vec(vector(&mut r, n));
    let cx = &c * DVector::from_element(n, 1.0).transpose();
    let mut m = LinearGaussianScm::new();
    let (xm, xc) = (vector(&mut r, n), psd(&mut r, n));
    let (ym, yc) = (vector(&mut r, n), psd(&mut r, n));
    let (zm, zc) = (vector(&mut r, n), psd(&mut r, n));
    let xy = matrix(&mut r, n, n);
    let yz = matrix(&mut r, n, n);
    m.add_node("X", xm, xc)
        .add_node("Y", ym, yc)
        .add_node("Z", zm, zc)
        .add_edge("X", "Y", xy)
        .add_edge("X", "Z", cx)
        .add_edge("Y", "Z", yz);
    AggregatedModel::new(
        m.into(),
        vec![
            AggregationSpec::sum("X"),
            AggregationSpec::sum("Y"),
            AggregationSpec::sum("Z"),
        ],
    )
    .expect("valid model")
}
