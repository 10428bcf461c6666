//! Independent oracles shared by the integration tests.  Nothing here calls
//! into the estimator under test.
#![allow(dead_code)]

use std::f64::consts::TAU;

use kclink_core::{link, validate_dataset, ComparisonDataset, LabResult};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `χ²(Y_A, Y_B)` in correlation form, summed naively.
pub fn chi_square_oracle(labs: &[LabResult], ya: f64, yb: f64) -> f64 {
    let mut total = 0.0;
    for lab in labs {
        match (lab.x_a.zip(lab.u_a), lab.x_b.zip(lab.u_b)) {
            (Some((xa, ua)), None) => total += ((ya - xa) / ua).powi(2),
            (None, Some((xb, ub))) => total += ((yb - xb) / ub).powi(2),
            (Some((xa, ua)), Some((xb, ub))) => {
                let r = lab.cov_ab.unwrap_or(0.0) / (ua * ub);
                let (ta, tb) = ((ya - xa) / ua, (yb - xb) / ub);
                total += (ta * ta - 2.0 * r * ta * tb + tb * tb) / (1.0 - r * r);
            }
            (None, None) => unreachable!(),
        }
    }
    total
}

/// The five sums in correlation form, plus the sum of absolute term values
/// of each (a scale for relative comparisons).
pub fn aux_correlation_form(labs: &[LabResult]) -> ([f64; 5], [f64; 5]) {
    let mut sums = [0.0; 5];
    let mut mags = [0.0; 5];
    for lab in labs {
        let terms = match (lab.x_a.zip(lab.u_a), lab.x_b.zip(lab.u_b)) {
            (Some((xa, ua)), None) => [1.0 / (ua * ua), 0.0, 0.0, xa / (ua * ua), 0.0],
            (None, Some((xb, ub))) => [0.0, 1.0 / (ub * ub), 0.0, 0.0, xb / (ub * ub)],
            (Some((xa, ua)), Some((xb, ub))) => {
                let r = lab.cov_ab.unwrap_or(0.0) / (ua * ub);
                let k = 1.0 / (1.0 - r * r);
                [
                    k / (ua * ua),
                    k / (ub * ub),
                    k * r / (ua * ub),
                    k * (xa / (ua * ua) - r * xb / (ua * ub)),
                    k * (xb / (ub * ub) - r * xa / (ua * ub)),
                ]
            }
            (None, None) => unreachable!(),
        };
        for i in 0..5 {
            sums[i] += terms[i];
            mags[i] += terms[i].abs();
        }
    }
    (sums, mags)
}

/// Minimises `f` on a box by a dense grid followed by compass search.
/// Returns the minimiser; `resolution` is the final step relative to the
/// box size.
pub fn grid_refine_minimum<F: Fn(f64, f64) -> f64>(
    f: F,
    (a_lo, a_hi): (f64, f64),
    (b_lo, b_hi): (f64, f64),
    grid: usize,
    resolution: f64,
) -> (f64, f64) {
    let (da, db) = ((a_hi - a_lo) / grid as f64, (b_hi - b_lo) / grid as f64);
    let mut best = (f64::INFINITY, a_lo, b_lo);
    for i in 0..=grid {
        for j in 0..=grid {
            let (a, b) = (a_lo + i as f64 * da, b_lo + j as f64 * db);
            let v = f(a, b);
            if v < best.0 {
                best = (v, a, b);
            }
        }
    }
    let (mut fv, mut a, mut b) = best;
    let (mut sa, mut sb) = (da, db);
    let dirs = [
        (1.0, 0.0),
        (-1.0, 0.0),
        (0.0, 1.0),
        (0.0, -1.0),
        (1.0, 1.0),
        (-1.0, -1.0),
        (1.0, -1.0),
        (-1.0, 1.0),
    ];
    while sa > resolution * (a_hi - a_lo) || sb > resolution * (b_hi - b_lo) {
        let mut improved = false;
        for (ea, eb) in dirs {
            let (na, nb) = (a + ea * sa, b + eb * sb);
            let v = f(na, nb);
            if v < fv {
                (fv, a, b) = (v, na, nb);
                improved = true;
            }
        }
        if !improved {
            sa *= 0.5;
            sb *= 0.5;
        }
    }
    // Compass search stalls in narrow diagonal valleys; finish with Newton
    // steps on central-difference derivatives (exact for a quadratic).  Near
    // the minimum f is flat to rounding, so a step is kept unless it makes f
    // clearly worse.
    for _ in 0..3 {
        let (ha, hb) = (da, db);
        let ga = (f(a + ha, b) - f(a - ha, b)) / (2.0 * ha);
        let gb = (f(a, b + hb) - f(a, b - hb)) / (2.0 * hb);
        let inv = inverse_2x2(hessian(&f, a, b, ha, hb));
        let (na, nb) = (
            a - inv[0][0] * ga - inv[0][1] * gb,
            b - inv[1][0] * ga - inv[1][1] * gb,
        );
        let v = f(na, nb);
        if v <= fv + 1e-12 * fv.abs() {
            (fv, a, b) = (v, na, nb);
        }
    }
    (a, b)
}

/// Search box covering every reported value by three uncertainties.
pub fn search_box(labs: &[LabResult]) -> ((f64, f64), (f64, f64)) {
    let span = |pick: fn(&LabResult) -> Option<(f64, f64)>| {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (x, u) in labs.iter().filter_map(pick) {
            lo = lo.min(x - 3.0 * u);
            hi = hi.max(x + 3.0 * u);
        }
        (lo, hi)
    };
    (span(|l| l.x_a.zip(l.u_a)), span(|l| l.x_b.zip(l.u_b)))
}

/// Central-difference Hessian of `f` at `(a, b)`.
pub fn hessian<F: Fn(f64, f64) -> f64>(f: &F, a: f64, b: f64, ha: f64, hb: f64) -> [[f64; 2]; 2] {
    let f0 = f(a, b);
    let haa = (f(a + ha, b) - 2.0 * f0 + f(a - ha, b)) / (ha * ha);
    let hbb = (f(a, b + hb) - 2.0 * f0 + f(a, b - hb)) / (hb * hb);
    let hab = (f(a + ha, b + hb) - f(a + ha, b - hb) - f(a - ha, b + hb) + f(a - ha, b - hb))
        / (4.0 * ha * hb);
    [[haa, hab], [hab, hbb]]
}

pub fn inverse_2x2(m: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    [
        [m[1][1] / det, -m[0][1] / det],
        [-m[1][0] / det, m[0][0] / det],
    ]
}

/// Random valid dataset with 2..=8 laboratories and |r| <= 0.95.
pub fn random_dataset(seed: u64, zero_covariance: bool) -> ComparisonDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let n = rng.random_range(2..=8);
        let mut labs = Vec::with_capacity(n);
        for i in 0..n {
            let label = format!("L{i}");
            let xa = rng.random_range(-50.0..50.0);
            let xb = rng.random_range(-50.0..50.0);
            let ua = rng.random_range(0.2..10.0);
            let ub = rng.random_range(0.2..10.0);
            labs.push(match rng.random_range(0..3) {
                0 => LabResult::only_a(label, xa, ua),
                1 => LabResult::only_b(label, xb, ub),
                _ => {
                    let cov = if zero_covariance {
                        None
                    } else {
                        Some(rng.random_range(-0.95..=0.95) * ua * ub)
                    };
                    LabResult::linking(label, (xa, ua), (xb, ub), cov)
                }
            });
        }
        if let Ok(ds) = validate_dataset(labs) {
            return ds;
        }
    }
}

/// Box–Muller standard normals.
pub struct Normals<R> {
    rng: R,
    spare: Option<f64>,
}

impl<R: RngCore> Normals<R> {
    pub fn new(rng: R) -> Self {
        Self { rng, spare: None }
    }

    pub fn next(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1: f64 = 1.0 - self.rng.random::<f64>();
        let u2: f64 = self.rng.random();
        let r = (-2.0 * u1.ln()).sqrt();
        self.spare = Some(r * (TAU * u2).sin());
        r * (TAU * u2).cos()
    }
}

/// Replaces the values of `labs` by a draw from the measurement model with
/// true values `(ya, yb)`, keeping uncertainties and covariances.
pub fn resample_values<R: RngCore>(
    labs: &[LabResult],
    ya: f64,
    yb: f64,
    normals: &mut Normals<R>,
) -> Vec<LabResult> {
    labs.iter()
        .map(|lab| {
            let mut out = lab.clone();
            match (lab.u_a, lab.u_b) {
                (Some(ua), None) => out.x_a = Some(ya + ua * normals.next()),
                (None, Some(ub)) => out.x_b = Some(yb + ub * normals.next()),
                (Some(ua), Some(ub)) => {
                    let r = lab.cov_ab.unwrap_or(0.0) / (ua * ub);
                    let (z1, z2) = (normals.next(), normals.next());
                    out.x_a = Some(ya + ua * z1);
                    out.x_b = Some(yb + ub * (r * z1 + (1.0 - r * r).sqrt() * z2));
                }
                (None, None) => unreachable!(),
            }
            out
        })
        .collect()
}

/// Mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Sample covariance of paired data and its standard error (from the
/// spread of the centred products).
pub fn covariance_se(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let (mx, _) = mean_se(xs);
    let (my, _) = mean_se(ys);
    let products: Vec<f64> = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .collect();
    mean_se(&products)
}

/// Closed form against a numerical minimiser of χ² and the inverse of half
/// its finite-difference Hessian.
pub fn check_against_minimiser(seed: u64) {
    let ds = random_dataset(seed, false);
    let labs = ds.labs();
    let res = link(&ds).unwrap();
    let k = res.kcrv;

    let f = |a: f64, b: f64| chi_square_oracle(labs, a, b);
    let (box_a, box_b) = search_box(labs);
    let (ma, mb) = grid_refine_minimum(f, box_a, box_b, 100, 1e-13);
    assert!(
        (ma - k.y_hat_a).abs() <= 1e-6 * k.u_a && (mb - k.y_hat_b).abs() <= 1e-6 * k.u_b,
        "seed {seed}: minimiser ({ma}, {mb}) vs closed form ({}, {})",
        k.y_hat_a,
        k.y_hat_b
    );

    let (ha, hb) = ((box_a.1 - box_a.0) / 100.0, (box_b.1 - box_b.0) / 100.0);
    let h = hessian(&f, ma, mb, ha, hb);
    let half = [
        [h[0][0] / 2.0, h[0][1] / 2.0],
        [h[1][0] / 2.0, h[1][1] / 2.0],
    ];
    let cov = inverse_2x2(half);
    let u = k.covariance_matrix();
    for i in 0..2 {
        for j in 0..2 {
            let scale = (u[i][i] * u[j][j]).sqrt();
            assert!(
                (cov[i][j] - u[i][j]).abs() <= 1e-6 * scale,
                "seed {seed}: covariance [{i}][{j}] {} vs {}",
                cov[i][j],
                u[i][j]
            );
        }
    }
}
