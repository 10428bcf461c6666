//! Monte Carlo checks of the estimator and the synthetic sampler.  Every
//! replication has its own seed so results do not depend on scheduling.

mod common;

use common::{covariance_se, mean_se, random_dataset, resample_values, Normals};
use kclink_core::{
    chi_square, draw_observations, generate_scenario, link, sample_lab, validate_dataset, Layout,
    Membership, Standard, SyntheticScenario,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

fn within(value: f64, target: f64, se: f64, k: f64) -> bool {
    (value - target).abs() <= k * se
}

#[test]
fn kcrv_covaries_with_each_input_like_its_own_variance() {
    let ds = random_dataset(5, false);
    let base = link(&ds).unwrap();
    let (ya, yb) = (base.kcrv.y_hat_a, base.kcrv.y_hat_b);
    let reps = 20_000;
    let draws: Vec<(f64, f64, Vec<kclink_core::LabResult>)> = (0..reps)
        .into_par_iter()
        .map(|i| {
            let mut normals = Normals::new(ChaCha8Rng::seed_from_u64(1_000 + i as u64));
            let labs = resample_values(ds.labs(), ya, yb, &mut normals);
            let k = link(&validate_dataset(labs.clone()).unwrap()).unwrap().kcrv;
            (k.y_hat_a, k.y_hat_b, labs)
        })
        .collect();
    let est_a: Vec<f64> = draws.iter().map(|d| d.0).collect();
    let est_b: Vec<f64> = draws.iter().map(|d| d.1).collect();

    let (var_a, se) = covariance_se(&est_a, &est_a);
    assert!(within(var_a, base.kcrv.u_a.powi(2), se, 5.0), "{var_a}");
    let (cov_ab, se) = covariance_se(&est_a, &est_b);
    assert!(within(cov_ab, base.kcrv.cov_ab, se, 5.0), "{cov_ab}");

    for (idx, lab) in ds.labs().iter().enumerate() {
        for (standard, est, u) in [
            (Standard::A, &est_a, base.kcrv.u_a),
            (Standard::B, &est_b, base.kcrv.u_b),
        ] {
            if lab.measurement(standard).is_none() {
                continue;
            }
            let xs: Vec<f64> = draws
                .iter()
                .map(|d| d.2[idx].measurement(standard).unwrap().0)
                .collect();
            let (cov, se) = covariance_se(est, &xs);
            assert!(
                within(cov, u * u, se, 5.0),
                "{} {standard}: {cov} vs {} (se {se})",
                lab.label,
                u * u
            );
        }
    }
}

#[test]
fn chi_square_at_the_truth_has_mean_n() {
    for seed in [21, 22, 23] {
        let ds = random_dataset(seed, false);
        let (ya, yb) = (3.0, -7.0);
        let values: Vec<f64> = (0..10_000u64)
            .into_par_iter()
            .map(|i| {
                let mut normals = Normals::new(ChaCha8Rng::seed_from_u64(seed << 32 | i));
                let labs = resample_values(ds.labs(), ya, yb, &mut normals);
                chi_square(&validate_dataset(labs).unwrap(), ya, yb)
            })
            .collect();
        let (m, se) = mean_se(&values);
        let n = ds.n_values() as f64;
        assert!(within(m, n, se, 5.0), "seed {seed}: {m} vs {n} (se {se})");
    }
}

fn scenario(rho: f64, n: usize, seed: u64) -> SyntheticScenario {
    SyntheticScenario {
        rho,
        n,
        seed,
        ..SyntheticScenario::reference(seed)
    }
}

#[test]
fn sampler_moments_match_the_population() {
    let sc = scenario(0.5, 50, 9);
    let mut a = Vec::new();
    let mut b = Vec::new();
    for index in 0..250 {
        let obs = draw_observations(&sc, Membership::Linking, index, 0);
        a.extend(obs.a);
        b.extend(obs.b);
    }
    assert!(a.len() >= 10_000);
    let (ma, se_a) = mean_se(&a);
    let (mb, se_b) = mean_se(&b);
    assert!(within(ma, sc.y_a_true, se_a, 5.0), "{ma}");
    assert!(within(mb, sc.y_b_true, se_b, 5.0), "{mb}");

    let count = a.len() as f64;
    let (var_a, _) = covariance_se(&a, &a);
    let (var_b, _) = covariance_se(&b, &b);
    // SE of a normal sample SD is σ/√(2n); of a correlation (1-ρ²)/√n.
    let (sd_a, sd_b) = (var_a.sqrt(), var_b.sqrt());
    assert!(
        within(sd_a, sc.sigma_a, sc.sigma_a / (2.0 * count).sqrt(), 5.0),
        "{sd_a}"
    );
    assert!(
        within(sd_b, sc.sigma_b, sc.sigma_b / (2.0 * count).sqrt(), 5.0),
        "{sd_b}"
    );
    let (cov, _) = covariance_se(&a, &b);
    let r = cov / (sd_a * sd_b);
    assert!(
        within(r, sc.rho, (1.0 - sc.rho * sc.rho) / count.sqrt(), 5.0),
        "{r}"
    );
}

/// `E[s] = c4(n) σ` for a normal sample of size `n`.
fn c4(n: usize) -> f64 {
    use statrs::function::gamma::ln_gamma;
    let n = n as f64;
    (2.0 / (n - 1.0)).sqrt() * (ln_gamma(n / 2.0) - ln_gamma((n - 1.0) / 2.0)).exp()
}

fn reported_u(sc: &SyntheticScenario, labs: usize) -> Vec<f64> {
    (0..labs)
        .map(|i| {
            sample_lab(sc, Membership::OnlyA, i)
                .unwrap()
                .lab
                .u_a
                .unwrap()
        })
        .collect()
}

#[test]
fn reported_uncertainty_is_the_sd_of_the_mean() {
    for n in [10, 20, 40] {
        let sc = scenario(0.5, n, 31);
        let us = reported_u(&sc, 4_000);
        let (m, se) = mean_se(&us);
        let expected = c4(n) * sc.sigma_a / (n as f64).sqrt();
        assert!(within(m, expected, se, 5.0), "n = {n}: {m} vs {expected}");
    }
    let (m10, se10) = mean_se(&reported_u(&scenario(0.5, 10, 32), 4_000));
    let (m20, se20) = mean_se(&reported_u(&scenario(0.5, 20, 33), 4_000));
    let ratio = m10 / m20;
    let expected = 2f64.sqrt() * c4(10) / c4(20);
    let se = ratio * ((se10 / m10).powi(2) + (se20 / m20).powi(2)).sqrt();
    assert!(within(ratio, expected, se, 5.0), "{ratio} vs {expected}");
}

fn sample_correlations(sc: &SyntheticScenario, labs: usize) -> Vec<f64> {
    (0..labs)
        .map(|i| {
            let lab = sample_lab(sc, Membership::Linking, i).unwrap().lab;
            lab.cov_ab.unwrap() / (lab.u_a.unwrap() * lab.u_b.unwrap())
        })
        .collect()
}

#[test]
fn uncorrelated_sampler_gives_centred_correlations() {
    let rs = sample_correlations(&scenario(0.0, 50, 41), 1_000);
    let (m, se) = mean_se(&rs);
    assert!(within(m, 0.0, se, 5.0), "{m} (se {se})");
}

#[test]
fn correlation_estimates_scatter_around_rho() {
    // E[r] = ρ(1 - (1-ρ²)/(2n)) + O(1/n²) and sd(r) ≈ (1-ρ²)/√(n-1).
    let sc = scenario(0.5, 50, 43);
    let rs = sample_correlations(&sc, 2_000);
    let (m, se) = mean_se(&rs);
    let n = sc.n as f64;
    let expected = sc.rho * (1.0 - (1.0 - sc.rho * sc.rho) / (2.0 * n));
    assert!(within(m, expected, se, 5.0), "{m} vs {expected}");
    let sd = se * (rs.len() as f64).sqrt();
    let target = (1.0 - sc.rho * sc.rho) / (n - 1.0).sqrt();
    assert!((sd / target - 1.0).abs() < 0.2, "{sd} vs {target}");
}

struct ReplicationSummary {
    chi_reported: f64,
    chi_true: f64,
    ratio: f64,
    passed: bool,
}

fn replicate(seed: u64) -> ReplicationSummary {
    let sc = SyntheticScenario::reference(seed);
    let ds = generate_scenario(&sc).unwrap();
    let res = link(&ds).expect("DOE radicand never negative");
    // The same means with the generating covariance of a sample mean.
    let n = sc.n as f64;
    let truth: Vec<_> = ds
        .labs()
        .iter()
        .map(|l| kclink_core::LabResult {
            u_a: l.u_a.map(|_| sc.sigma_a / n.sqrt()),
            u_b: l.u_b.map(|_| sc.sigma_b / n.sqrt()),
            cov_ab: l.cov_ab.map(|_| sc.rho * sc.sigma_a * sc.sigma_b / n),
            ..l.clone()
        })
        .collect();
    let truth = validate_dataset(truth).unwrap();
    ReplicationSummary {
        chi_reported: chi_square(&ds, sc.y_a_true, sc.y_b_true),
        chi_true: chi_square(&truth, sc.y_a_true, sc.y_b_true),
        ratio: res.conformity.ratio.unwrap(),
        passed: res.conformity.passed,
    }
}

/// `E[t²]` for Student's t with `n - 1` degrees of freedom and `E[T²]` for
/// the bivariate Hotelling statistic: the bias of plugging in estimated
/// uncertainties.
fn expected_chi_square_with_estimated_u(sc: &SyntheticScenario) -> f64 {
    let n = sc.n as f64;
    let univariate = (n - 1.0) / (n - 3.0);
    let bivariate = 2.0 * (n - 1.0) / (n - 4.0);
    let l = sc.layout;
    (l.only_a + l.only_b) as f64 * univariate + l.linking as f64 * bivariate
}

#[test]
fn reference_scenario_replications() {
    let reps = 2_000u64;
    let runs: Vec<ReplicationSummary> = (0..reps)
        .into_par_iter()
        .map(|s| replicate(7_000 + s))
        .collect();
    let sc = SyntheticScenario::reference(0);
    let n_values = (sc.layout.only_a + sc.layout.only_b + 2 * sc.layout.linking) as f64;

    let chi_true: Vec<f64> = runs.iter().map(|r| r.chi_true).collect();
    let (m, se) = mean_se(&chi_true);
    assert!(
        within(m, n_values, se, 5.0),
        "true u: {m} vs {n_values} (se {se})"
    );

    let chi_rep: Vec<f64> = runs.iter().map(|r| r.chi_reported).collect();
    let (m, se) = mean_se(&chi_rep);
    let biased = expected_chi_square_with_estimated_u(&sc);
    assert!(
        within(m, biased, se, 5.0),
        "reported u: {m} vs {biased} (se {se})"
    );

    // q² follows roughly χ² with N - 2 degrees of freedom, whose median is
    // below its mean: about half the replications pass.
    let pass_rate = runs.iter().filter(|r| r.passed).count() as f64 / reps as f64;
    assert!((0.35..0.65).contains(&pass_rate), "{pass_rate}");
    let ratios: Vec<f64> = runs.iter().map(|r| r.ratio).collect();
    let (m, _) = mean_se(&ratios);
    assert!((m - 1.0).abs() < 0.1, "{m}");
}

#[test]
fn datasets_have_the_reference_shape() {
    let ds = generate_scenario(&SyntheticScenario::reference(3)).unwrap();
    assert_eq!(
        (ds.card_only_a(), ds.card_linking(), ds.card_only_b()),
        (8, 4, 5)
    );
    assert_eq!(ds.n_values(), 21);
    let wide = SyntheticScenario {
        layout: Layout {
            only_a: 1,
            linking: 120,
            only_b: 1,
        },
        ..SyntheticScenario::reference(3)
    };
    let ds = generate_scenario(&wide).unwrap();
    assert_eq!(ds.labs()[0].label, "LAB-001");
}
