use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::*;
use crate::data::{RegimeDataset, RegimeTag};
use crate::rng::{rng_from_seed, split_seed};
use crate::scm::Scm;
use crate::simgen::{build_synthetic_k3, generate_regime_suite, random_correlation_matrix, K3Coefficients};

fn k3(c: f64, seed: u64) -> Scm {
    let sigma = if c == 0.0 { DMatrix::identity(4, 4) } else { random_correlation_matrix(4, c, seed).unwrap() };
    build_synthetic_k3(None, &sigma, seed).unwrap()
}

fn truth_covs(scm: &Scm, data: &[RegimeDataset]) -> NoiseCovarianceSet {
    let n = scm.graph().n_nodes();
    let mut tags: Vec<RegimeTag> = Vec::new();
    for d in data {
        if !tags.contains(d.tag()) {
            tags.push(d.tag().clone());
        }
    }
    NoiseCovarianceSet {
        entries: tags
            .into_iter()
            .map(|t| {
                let nodes = free_nodes(&t, n);
                let cov = DMatrix::from_fn(nodes.len(), nodes.len(), |a, b| scm.noise_cov()[(nodes[a], nodes[b])]);
                RegimeCov { regime: t, nodes, cov, degenerate: false }
            })
            .collect(),
    }
}

fn random_spd(d: usize, rng: &mut crate::rng::Rng) -> DMatrix<f64> {
    let a = DMatrix::<f64>::from_fn(d, d, |_, _| StandardNormal.sample(rng));
    &a * a.transpose() / d as f64 + DMatrix::identity(d, d) * 0.2
}

#[test]
fn standard_normal_at_origin() {
    let scm = k3(0.0, 1);
    let row = RegimeDataset::new(scm.names().to_vec(), RegimeTag::Observational, DMatrix::zeros(1, 4)).unwrap();
    let zero = scm
        .equations()
        .iter()
        .map(|e| crate::poly::PolynomialEquation::zeros(e.child.clone(), e.parents.clone()))
        .collect::<Vec<_>>();
    let covs = NoiseCovarianceSet::identity(4, &[RegimeTag::Observational]);
    let ll = combined_log_likelihood(scm.graph(), &zero, &covs, &[row]).unwrap();
    assert!((ll + 2.0 * (2.0 * PI).ln()).abs() < 1e-12);
}

#[test]
fn duplicated_data_doubles_likelihood() {
    let scm = k3(0.65, 2);
    let suite = generate_regime_suite(&scm, 40, 3).unwrap();
    let covs = truth_covs(&scm, &suite);
    let single = combined_log_likelihood(scm.graph(), scm.equations(), &covs, &suite).unwrap();
    let doubled: Vec<RegimeDataset> = suite.iter().chain(suite.iter()).cloned().collect();
    let double = combined_log_likelihood(scm.graph(), scm.equations(), &covs, &doubled).unwrap();
    assert!((double - 2.0 * single).abs() <= 1e-12 * single.abs());
}

#[test]
fn truth_dominates_perturbed_parameters() {
    let scm = k3(0.65, 4);
    let perturbed: Vec<_> = scm
        .equations()
        .iter()
        .map(|e| {
            let mut e = e.clone();
            if !e.parents.is_empty() {
                e.coefficients.iter_mut().for_each(|c| *c += 0.5);
            }
            e
        })
        .collect();
    let mut wins = 0;
    for seed in 0..20 {
        let suite = generate_regime_suite(&scm, 10_000, seed).unwrap();
        let covs = truth_covs(&scm, &suite);
        let a = combined_log_likelihood(scm.graph(), scm.equations(), &covs, &suite).unwrap();
        let b = combined_log_likelihood(scm.graph(), &perturbed, &covs, &suite).unwrap();
        wins += (a > b) as usize;
    }
    assert!(wins >= 19, "{wins}/20");
}

#[test]
fn mismatched_covariances_are_rejected() {
    let scm = k3(0.35, 5);
    let suite = generate_regime_suite(&scm, 20, 1).unwrap();
    let only_obs = NoiseCovarianceSet::identity(4, &[RegimeTag::Observational]);
    assert!(combined_log_likelihood(scm.graph(), scm.equations(), &only_obs, &suite).is_err());
    let mut bad = truth_covs(&scm, &suite);
    bad.entries[0].cov[(0, 1)] = 5.0;
    bad.entries[0].cov[(1, 0)] = 5.0;
    assert!(combined_log_likelihood(scm.graph(), scm.equations(), &bad, &suite).is_err());
}

#[test]
fn closed_form_sigma_recovers_truth() {
    let scm = k3(0.65, 6);
    let suite = generate_regime_suite(&scm, 100_000, 7).unwrap();
    let covs = sigma_closed_form(scm.graph(), scm.equations(), &suite).unwrap();
    let s0 = covs.sigma0().unwrap();
    assert!((s0 - scm.noise_cov()).amax() < 0.02);
    for e in &covs.entries {
        assert_eq!(e.cov.nrows(), if e.regime == RegimeTag::Observational { 4 } else { 3 });
    }
}

#[test]
fn closed_form_sigma_flags_zero_residuals() {
    let scm = k3(0.0, 8);
    let suite = generate_regime_suite(&scm, 30, 9).unwrap();
    // Rebuild every row from its own parents so all residuals vanish.
    let exact: Vec<RegimeDataset> = suite
        .iter()
        .map(|d| {
            let mut v = d.values().clone();
            for i in 0..v.nrows() {
                for j in 0..4 {
                    if d.tag().intervenes_on(j, 4) {
                        continue;
                    }
                    let pv: Vec<f64> = scm.graph().parents(j).iter().map(|&p| v[(i, p)]).collect();
                    v[(i, j)] = scm.equation(j).eval(&pv).unwrap();
                }
            }
            RegimeDataset::new(d.names().to_vec(), d.tag().clone(), v).unwrap()
        })
        .collect();
    let covs = sigma_closed_form(scm.graph(), scm.equations(), &exact).unwrap();
    assert!(covs.any_degenerate());
    for e in &covs.entries {
        assert!(e.degenerate);
        assert!((e.cov.clone() - DMatrix::identity(e.cov.nrows(), e.cov.nrows()) * SIGMA_JITTER).amax() < 1e-12);
    }
}

#[test]
fn closed_form_sigma_needs_enough_rows() {
    let scm = k3(0.0, 8);
    let suite = generate_regime_suite(&scm, 2, 9).unwrap();
    assert!(matches!(
        sigma_closed_form(scm.graph(), scm.equations(), &suite),
        Err(crate::Error::InsufficientData(_))
    ));
}

#[test]
fn closed_form_sigma_beats_random_alternatives() {
    let scm = k3(0.65, 10);
    let suite = generate_regime_suite(&scm, 500, 11).unwrap();
    let best = sigma_closed_form(scm.graph(), scm.equations(), &suite).unwrap();
    let ll_best = combined_log_likelihood(scm.graph(), scm.equations(), &best, &suite).unwrap();
    let mut rng = rng_from_seed(12);
    for trial in 0..100 {
        let mut alt = best.clone();
        for e in &mut alt.entries {
            let d = e.cov.nrows();
            e.cov = if trial % 2 == 0 {
                random_spd(d, &mut rng)
            } else {
                let b = DMatrix::<f64>::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng)) * 0.05;
                &e.cov + &b * b.transpose()
            };
        }
        let ll = combined_log_likelihood(scm.graph(), scm.equations(), &alt, &suite).unwrap();
        assert!(ll_best >= ll, "trial {trial}");
    }
}

fn finite_difference(problem: &Problem, theta: &DVector<f64>, covs: &NoiseCovarianceSet, h: f64) -> DVector<f64> {
    DVector::from_fn(theta.len(), |i, _| {
        let mut up = theta.clone();
        let mut dn = theta.clone();
        up[i] += h;
        dn[i] -= h;
        (problem.log_likelihood(&up, covs).unwrap() - problem.log_likelihood(&dn, covs).unwrap()) / (2.0 * h)
    })
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = rng_from_seed(13);
    for inst in 0..20u64 {
        let scm = k3(0.8, 100 + inst);
        let suite = generate_regime_suite(&scm, 25, split_seed(14, inst)).unwrap();
        let problem = Problem::new(scm.graph(), &suite).unwrap();
        let theta = DVector::from_fn(problem.layout.dim(), |_, _| rng.random_range(-1.0..1.0));
        let mut covs = NoiseCovarianceSet::identity(4, &problem.tags());
        for e in &mut covs.entries {
            e.cov = random_spd(e.cov.nrows(), &mut rng);
        }
        let analytic = problem.gradient(&theta, &covs).unwrap();
        let numeric = finite_difference(&problem, &theta, &covs, 1e-5);
        let rel = (&analytic - &numeric).norm() / analytic.norm().max(1.0);
        assert!(rel < 1e-4, "instance {inst}: relative error {rel}");
    }
}

#[test]
fn diagonal_sigma_reduces_to_scaled_least_squares() {
    let scm = k3(0.35, 15);
    let suite = generate_regime_suite(&scm, 50, 16).unwrap();
    let problem = Problem::new(scm.graph(), &suite).unwrap();
    let theta = problem.layout.flatten(scm.equations()).unwrap() * 0.7;
    let var = [0.5, 2.0, 1.5, 0.8];
    let mut covs = NoiseCovarianceSet::identity(4, &problem.tags());
    for e in &mut covs.entries {
        e.cov = DMatrix::from_fn(e.nodes.len(), e.nodes.len(), |a, b| if a == b { var[e.nodes[a]] } else { 0.0 });
    }
    let grad = problem.gradient(&theta, &covs).unwrap();
    let eqs = problem.layout.unflatten(&theta);
    for j in 0..4 {
        let mut ols = DVector::zeros(problem.layout.sizes[j]);
        for d in &suite {
            if d.tag().intervenes_on(j, 4) {
                continue;
            }
            for i in 0..d.n_rows() {
                let row = d.row(i);
                let pv: Vec<f64> = scm.graph().parents(j).iter().map(|&p| row[p]).collect();
                let r = row[j] - eqs[j].eval(&pv).unwrap();
                ols += DVector::from_vec(crate::poly::expand(&pv)) * r;
            }
        }
        let block = grad.rows(problem.layout.offsets[j], problem.layout.sizes[j]);
        assert!((block - ols / var[j]).amax() < 1e-9);
    }
}

#[test]
fn fit_reaches_a_stationary_point_with_monotone_trace() {
    for seed in 0..20u64 {
        let scm = k3(0.65, 200 + seed);
        let suite = generate_regime_suite(&scm, 400, seed).unwrap();
        let model = fit(&suite, scm.graph(), &FitConfig::default()).unwrap();
        assert_eq!(model.status, FitStatus::Converged);
        for w in model.fit_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "seed {seed}: {} -> {}", w[0], w[1]);
        }
        let problem = Problem::new(scm.graph(), &suite).unwrap();
        let theta = problem.layout.flatten(&model.equations).unwrap();
        let g = problem.gradient(&theta, &model.noise_covs).unwrap();
        assert!(g.norm() < 1e-5 * (1.0 + theta.norm()), "seed {seed}: |g| = {}", g.norm());
    }
}

#[test]
fn gradient_ascent_agrees_with_newton() {
    let scm = k3(0.65, 21);
    let suite = generate_regime_suite(&scm, 300, 22).unwrap();
    let newton = fit(&suite, scm.graph(), &FitConfig::default()).unwrap();
    let cfg = FitConfig { theta_step: ThetaStep::Gradient, max_inner: 20_000, ..FitConfig::default() };
    let grad = fit(&suite, scm.graph(), &cfg).unwrap();
    for w in grad.fit_trace.windows(2) {
        assert!(w[1] >= w[0] - 1e-9);
    }
    let a = newton.mechanism_parameters();
    let b = grad.mechanism_parameters();
    let gap = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(gap < 1e-2, "max coefficient gap {gap}");
}

#[test]
fn unconfounded_fit_matches_per_equation_least_squares() {
    // Estimated off-diagonals are O(n^-1/2), so the gap to OLS is too.
    let scm = k3(0.0, 23);
    let n = 50_000;
    let suite = generate_regime_suite(&scm, n, 24).unwrap();
    let model = fit(&suite, scm.graph(), &FitConfig::default()).unwrap();
    let problem = Problem::new(scm.graph(), &suite).unwrap();
    let ols = problem.per_equation_least_squares().unwrap();
    let fitted = problem.layout.flatten(&model.equations).unwrap();
    let gap = (&fitted - &ols).amax();
    assert!(gap < 5.0 / (n as f64).sqrt(), "{gap}");
}

#[test]
fn prediction_uses_the_outcome_equation() {
    let scm = build_synthetic_k3(Some(&K3Coefficients::zeros()), &DMatrix::identity(4, 4), 0).unwrap();
    let suite = generate_regime_suite(&scm, 100, 1).unwrap();
    let mut model = fit(&suite, scm.graph(), &FitConfig::default()).unwrap();
    model.equations = scm.equations().to_vec();
    assert_eq!(model.predict_joint_effect(&[0.3, -1.0, 2.0]).unwrap(), 0.0);
    let truth = k3(0.35, 25);
    model.equations = truth.equations().to_vec();
    for x in [[0.1, 0.2, 0.3], [-1.0, 2.0, 0.5]] {
        assert_eq!(model.predict_joint_effect(&x).unwrap(), truth.joint_effect_oracle(&x).unwrap());
    }
    assert!(model.predict_joint_effect(&[1.0]).is_err());
}

#[test]
fn fitted_model_json_round_trip() {
    let scm = k3(0.35, 26);
    let suite = generate_regime_suite(&scm, 200, 27).unwrap();
    let model = fit(&suite, scm.graph(), &FitConfig::default()).unwrap();
    let js = model.to_json().unwrap();
    assert!(js.contains("\"noise_covs\"") && js.contains("\"fit_trace\"") && js.contains("\"noise_cov\""));
    let back = FittedAnm::from_json(&js).unwrap();
    assert_eq!(back.equations, model.equations);
    assert_eq!(back.noise_covs, model.noise_covs);
    assert_eq!(back.fit_trace, model.fit_trace);
    assert_eq!(back.to_json().unwrap(), js);
}

#[test]
fn fit_requires_observational_data() {
    let scm = k3(0.35, 28);
    let suite = generate_regime_suite(&scm, 50, 29).unwrap();
    assert!(fit(&suite[1..], scm.graph(), &FitConfig::default()).is_err());
}

#[test]
fn reg_baseline_pooling_invariance() {
    let scm = k3(0.65, 30);
    let suite = generate_regime_suite(&scm, 300, 31).unwrap();
    let parents = scm.graph().parent_names(3);
    let a = fit_reg_baseline(&suite, &parents).unwrap();
    let doubled: Vec<RegimeDataset> = suite.iter().chain(suite.iter()).cloned().collect();
    let b = fit_reg_baseline(&doubled, &parents).unwrap();
    for (x, y) in a.coefficients.iter().zip(&b.coefficients) {
        assert!((x - y).abs() < 1e-9);
    }
    assert!(fit_reg_baseline(&suite, &["Q".to_string()]).is_err());
}

#[test]
fn reg_agrees_with_anm_without_confounding() {
    let scm = k3(0.0, 32);
    let suite = generate_regime_suite(&scm, 20_000, 33).unwrap();
    let reg = fit_reg_baseline(&suite, &scm.graph().parent_names(3)).unwrap();
    let anm = fit(&suite, scm.graph(), &FitConfig::default()).unwrap();
    for (r, a) in reg.coefficients.iter().zip(&anm.outcome_equation().coefficients) {
        assert!((r - a).abs() < 0.03, "{r} vs {a}");
    }
}

#[test]
fn reg_is_biased_under_confounding_while_anm_is_not() {
    let scm = k3(0.65, 34);
    let suite = generate_regime_suite(&scm, 20_000, 35).unwrap();
    let truth = &scm.outcome_equation().coefficients;
    let reg = fit_reg_baseline(&suite, &scm.graph().parent_names(3)).unwrap();
    let anm = fit(&suite, scm.graph(), &FitConfig::default()).unwrap();
    let err = |c: &[f64]| c.iter().zip(truth).map(|(a, b)| (a - b).abs()).sum::<f64>() / truth.len() as f64;
    let e_reg = err(&reg.coefficients);
    let e_anm = err(&anm.outcome_equation().coefficients);
    assert!(e_anm * 3.0 < e_reg, "anm {e_anm} reg {e_reg}");
}
