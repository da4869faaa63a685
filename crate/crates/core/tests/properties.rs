mod common;

use std::collections::BTreeSet;

use aggcausal::aggregation::{build_amalgamated, natural_realization};
use aggcausal::confounding::{classify_realization, Verdict, EXACT_TOL};
use aggcausal::discrete::Axis;
use aggcausal::gaussian::joint_moments;
use aggcausal::model::sample;
use aggcausal::synthesis::{
    construct_h, gaussian_inhibitor, macro_noise_covariance, GaussianInhibitorProblem,
};
use aggcausal::{
    AffineFunctional, AggregatedModel, AggregationSpec, CategoricalDist, Distribution,
    GaussianDist, LinearGaussianScm, MacroValue, MicroRealization,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn labels(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("V{i}")).collect()
}

fn random_gaussian(seed: u64, n: usize) -> GaussianDist {
    let mut r = common::rng(seed);
    let mean = DVector::from_vec(common::vector(&mut r, n));
    GaussianDist::new(mean, common::psd(&mut r, n), labels(n)).unwrap()
}

fn close(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> bool {
    let scale = 1.0 + a.abs().max().max(b.abs().max());
    (a - b).abs().max() <= tol * scale
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn total_covariance(seed in any::<u64>(), n in 2usize..6) {
        // a random linear SCM, its joint, and the conditional on a random functional
        let mut r = common::rng(seed);
        let mut m = LinearGaussianScm::new();
        m.add_node("A", common::vector(&mut r, n), common::psd(&mut r, n))
            .add_node("B", common::vector(&mut r, 2), common::psd(&mut r, 2))
            .add_edge("A", "B", common::matrix(&mut r, 2, n));
        let joint = joint_moments(&m).unwrap();
        let w: Vec<f64> = common::vector(&mut r, n + 2);
        let f = AffineFunctional::row(&w, "f");
        let var_f = joint.push_forward(&f).unwrap().cov[(0, 0)];
        let mean_f = joint.push_forward(&f).unwrap().mean[0];
        let c0 = joint.condition_on_functional(&f, &[mean_f]).unwrap();
        let c1 = joint.condition_on_functional(&f, &[mean_f + 1.0]).unwrap();
        // conditional means are affine in the value: gain = m(v+1) - m(v)
        let gain = &c1.mean - &c0.mean;
        let total = &c0.cov + &gain * gain.transpose() * var_f;
        prop_assert!(close(&total, &joint.cov, 1e-8));
        prop_assert!(close(&c0.cov, &c1.cov, 1e-10));
    }

    #[test]
    fn push_forward_composes(seed in any::<u64>(), n in 1usize..6, k in 1usize..4, j in 1usize..4) {
        let d = random_gaussian(seed, n);
        let mut r = common::rng(seed ^ 1);
        let f = AffineFunctional::new(common::matrix(&mut r, k, n), DVector::from_vec(common::vector(&mut r, k)), labels(k)).unwrap();
        let g = AffineFunctional::new(common::matrix(&mut r, j, k), DVector::from_vec(common::vector(&mut r, j)), labels(j)).unwrap();
        let a = d.push_forward(&f).unwrap().push_forward(&g).unwrap();
        let b = d.push_forward(&g.compose(&f).unwrap()).unwrap();
        prop_assert!(a.discrepancy(&b).unwrap() <= 1e-10);
    }

    #[test]
    fn condition_then_push_is_point_mass(seed in any::<u64>(), n in 2usize..6, shift in -5.0f64..5.0) {
        let d = random_gaussian(seed, n);
        let mut r = common::rng(seed ^ 2);
        let f = AffineFunctional::row(&common::vector(&mut r, n), "f");
        let v = d.push_forward(&f).unwrap().mean[0] + shift;
        let p = d.condition_on_functional(&f, &[v]).unwrap().push_forward(&f).unwrap();
        prop_assert!((p.mean[0] - v).abs() <= 1e-8 * (1.0 + v.abs()));
        prop_assert!(p.cov[(0, 0)].abs() <= 1e-8 * (1.0 + d.cov.abs().max()));
    }

    #[test]
    fn marginalize_and_condition_commute(seed in any::<u64>()) {
        let mut r = common::rng(seed);
        let cards = [2usize, 3, 2, 2];
        let axes: Vec<Axis> = cards.iter().enumerate().map(|(i, &c)| Axis::new(format!("A{i}"), c)).collect();
        let probs = common::simplex(&mut r, cards.iter().product());
        let d = CategoricalDist::new(axes, probs).unwrap();
        for v in 0..2 {
            let a = d.condition(&[("A0", v)]).unwrap().marginal(&["A1", "A3"]).unwrap();
            let b = d.marginal(&["A0", "A1", "A3"]).unwrap().condition(&[("A0", v)]).unwrap();
            prop_assert!(a.tv_distance(&b).unwrap() <= 1e-14);
            prop_assert!((a.probs.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn macro_intervention_graph_set_algebra(seed in any::<u64>(), n in 3usize..8) {
        let mut r = common::rng(seed);
        use rand::Rng;
        let names: Vec<String> = (0..n).map(|i| format!("N{i}")).collect();
        let mut m = LinearGaussianScm::new();
        for name in &names {
            m.add_independent_node(name, vec![0.0, 0.0], vec![1.0, 1.0]);
        }
        let mut edges = BTreeSet::new();
        for i in 0..n {
            for j in i + 1..n {
                if r.random_bool(0.4) {
                    m.add_edge(&names[i], &names[j], DMatrix::identity(2, 2));
                    edges.insert((names[i].clone(), names[j].clone()));
                }
            }
        }
        let aggs: Vec<AggregationSpec> = names.iter().map(|s| AggregationSpec::sum(s)).collect();
        let g = build_amalgamated(&m.clone().into(), &aggs).unwrap();
        let target = r.random_range(0..n);
        let id = format!("{}bar", names[target]);
        let gi = g.macro_intervention(&id).unwrap();
        let expected: BTreeSet<(String, String)> = edges
            .iter()
            .filter(|(_, to)| to != &names[target])
            .cloned()
            .chain([(id.clone(), names[target].clone())])
            .collect();
        prop_assert_eq!(&gi.edges, &expected);
        prop_assert!(!gi.links.iter().any(|(_, mac)| mac == &id));
        prop_assert_eq!(gi.links.len(), n - 1);
    }

    #[test]
    fn construct_h_post_conditions(seed in any::<u64>(), n in 2usize..7, c in -20.0f64..20.0) {
        let mut r = common::rng(seed);
        let alpha = common::vector(&mut r, n);
        let mean = alpha.iter().sum::<f64>() / n as f64;
        prop_assume!(alpha.iter().map(|a| (a - mean).powi(2)).sum::<f64>() > 1e-3);
        let h = construct_h(&alpha, c).unwrap();
        let hm = h.h_matrix();
        let hi = h.h_inv_matrix();
        prop_assert!(hm.row(0).iter().all(|&x| (x - 1.0).abs() <= 1e-12));
        prop_assert!(close(&(&hm * &hi), &DMatrix::identity(n, n), 1e-10));
        let delta: Vec<f64> = hi.column(0).iter().copied().collect();
        let beta: f64 = alpha.iter().zip(&delta).map(|(a, d)| a * d).sum();
        prop_assert!((beta - c).abs() <= 1e-10 * (1.0 + c.abs()));
    }

    #[test]
    fn regression_coefficient_kills_macro_noise_covariance(seed in any::<u64>(), n in 2usize..6) {
        let mut r = common::rng(seed);
        let alpha = common::vector(&mut r, n);
        let cov = common::psd(&mut r, n);
        let ones = DVector::from_element(n, 1.0);
        let a = DVector::from_vec(alpha.clone());
        let reg = (ones.transpose() * &cov * &a)[(0, 0)] / (ones.transpose() * &cov * &ones)[(0, 0)];
        let at = |b: f64| macro_noise_covariance(&alpha, &cov, b).unwrap();
        prop_assert!(at(reg).abs() <= 1e-9 * (1.0 + cov.abs().max() * a.abs().max()));
        prop_assert!(at(reg + 100.0).abs() > at(reg + 10.0).abs());
        prop_assert!(at(reg - 100.0).abs() > at(reg - 10.0).abs());
    }

    #[test]
    fn natural_realization_inhibits_gaussian(seed in any::<u64>(), n in prop::sample::select(vec![2usize, 3, 5])) {
        let m = common::unconfounded_gaussian(seed, n);
        let rep = classify_realization(&m, &MicroRealization::natural("Xbar"), "Ybar", None, EXACT_TOL).unwrap();
        prop_assert_eq!(rep.verdict, Verdict::Inhibiting);
    }

    #[test]
    fn natural_realization_inhibits_categorical(seed in any::<u64>()) {
        let m = common::unconfounded_categorical(seed);
        let rep = classify_realization(&m, &MicroRealization::natural("Xbar"), "Ybar", None, EXACT_TOL).unwrap();
        prop_assert_eq!(rep.verdict, Verdict::Inhibiting);
    }

    #[test]
    fn natural_realization_is_supported_on_fibre(seed in any::<u64>(), n in 2usize..5, z in -2.0f64..2.0) {
        let m = common::unconfounded_gaussian(seed, n);
        let x = m.observational().unwrap().marginal(&["Xbar"]).unwrap();
        let g = x.as_gaussian().unwrap();
        let xbar = g.mean[0] + z * g.cov[(0, 0)].sqrt();
        let d = natural_realization(&m, "Xbar", xbar.into()).unwrap();
        let p = d.as_gaussian().unwrap().push_forward(&AffineFunctional::sum(n, "s")).unwrap();
        prop_assert!((p.mean[0] - xbar).abs() <= 1e-8 * (1.0 + xbar.abs()));
        prop_assert!(p.cov[(0, 0)].abs() <= 1e-8 * (1.0 + g.cov[(0, 0)]));
    }

    #[test]
    fn inhibitor_slack_is_unbounded_in_scale(seed in any::<u64>(), n in 2usize..5) {
        let m = common::confounded_gaussian(seed, n);
        let p = GaussianInhibitorProblem::from_model(&m, "Xbar", "Ybar", vec![0.0]).unwrap();
        let mean = p.alpha.iter().sum::<f64>() / n as f64;
        prop_assume!(p.alpha.iter().map(|a| (a - mean).powi(2)).sum::<f64>() > 1e-2);
        let slack_at = |t: f64| {
            let alpha: Vec<f64> = p.alpha.iter().map(|a| a * t).collect();
            // N = Ȳ - αᵀX is unchanged by rescaling α.
            let q = GaussianInhibitorProblem::new(alpha, p.joint.clone(), vec![0.0]).unwrap();
            gaussian_inhibitor(&q).unwrap().slack
        };
        // slack(t) = a t² + 2 b t + c with a = Var(αᵀX | X̄) and b = Cov(αᵀX, N | X̄)
        let (s1, s2, s3) = (slack_at(1.0), slack_at(2.0), slack_at(3.0));
        let a = (s3 - 2.0 * s2 + s1) / 2.0;
        let b = (s2 - s1 - 3.0 * a) / 2.0;
        let c = s1 - a - 2.0 * b;
        prop_assert!(a > 0.0);
        let scale = s1.abs().max(a).max(1.0);
        for t in [0.5, 4.0, 7.5, 20.0] {
            prop_assert!((slack_at(t) - (a * t * t + 2.0 * b * t + c)).abs() <= 1e-6 * scale * t * t);
        }
        // non-decreasing past the vertex, and unbounded
        let vertex = (-b / a).max(1.0);
        let mut last = slack_at(vertex);
        for k in 1..8 {
            let s = slack_at(vertex * 2f64.powi(k));
            prop_assert!(s >= last - 1e-8 * last.abs().max(1.0));
            last = s;
        }
        prop_assert!(slack_at(1e4 * vertex) > 1e6 * a);
    }

    #[test]
    fn grid_enlargement_never_clears_confounding(seed in any::<u64>(), extra in -3.0f64..3.0) {
        let m = common::confounded_gaussian(seed, 2);
        let r = MicroRealization::sequential("Xbar", vec![0, 1]);
        let base = classify_realization(&m, &r, "Ybar", None, EXACT_TOL).unwrap();
        let mut grid = base.grid.clone();
        grid.push(MacroValue::Real(extra));
        let big = classify_realization(&m, &r, "Ybar", Some(&grid), EXACT_TOL).unwrap();
        prop_assert!(!(base.verdict == Verdict::Inducing && big.verdict == Verdict::Inhibiting));
    }
}

#[test]
fn sampling_matches_exact_moments() {
    let m = common::unconfounded_gaussian(11, 3);
    let exact = joint_moments(m.scm().as_linear().unwrap()).unwrap();
    let n = 200_000;
    let s = sample(m.scm(), n, 5).unwrap();
    for (j, label) in s.labels.iter().enumerate() {
        let col = s.data.column(j);
        let mean = col.mean();
        let i = exact.index_of(label).unwrap();
        let sd = exact.cov[(i, i)].sqrt();
        assert!(
            (mean - exact.mean[i]).abs() <= 5.0 * sd / (n as f64).sqrt(),
            "{label}"
        );
    }
}

#[test]
fn realization_families_hit_their_fibre() {
    let m: AggregatedModel = common::confounded_gaussian(3, 2);
    for r in [
        MicroRealization::natural("Xbar"),
        MicroRealization::sequential("Xbar", vec![1, 0]),
        MicroRealization::deterministic("Xbar", vec![0.3, 0.7]),
    ] {
        for x in [-1.0, 0.0, 2.5] {
            let d = r.realize(&m, x.into()).unwrap();
            let Distribution::Gaussian(g) = d else {
                panic!()
            };
            let p = g.push_forward(&AffineFunctional::sum(2, "s")).unwrap();
            assert!((p.mean[0] - x).abs() < 1e-9 && p.cov[(0, 0)].abs() < 1e-9);
        }
    }
}
