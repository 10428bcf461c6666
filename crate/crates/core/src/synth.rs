//! Reproducible synthetic comparisons drawn from Gaussian measurement
//! models.
//!
//! Random numbers come from ChaCha20 (`rand_chacha` 0.9, `ChaCha20Rng`),
//! seeded with `seed_from_u64(seed)`.  Laboratory `i` (0-based, in layout
//! order) draws from stream `i << 20 | attempt`, so adding laboratories never
//! changes the draws of earlier ones.  Standard normals use the Box–Muller
//! transform on 53-bit uniforms, which consumes a fixed number of words per
//! draw.
//!
//! Each laboratory takes `n` observations and reports the sample mean, the
//! standard deviation of the mean `s/√n` and, for linking laboratories, the
//! sample covariance divided by `n` (both with the `n - 1` divisor).

use std::f64::consts::TAU;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{validate_dataset, ComparisonDataset, DatasetWarning, LabResult, Membership};

const MAX_ATTEMPTS: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub only_a: usize,
    pub linking: usize,
    pub only_b: usize,
}

impl Layout {
    pub fn total(&self) -> usize {
        self.only_a + self.linking + self.only_b
    }

    /// Kind of the laboratory at `index`: A-only first, then linking, then
    /// B-only.
    pub fn kind(&self, index: usize) -> Option<Membership> {
        if index < self.only_a {
            Some(Membership::OnlyA)
        } else if index < self.only_a + self.linking {
            Some(Membership::Linking)
        } else if index < self.total() {
            Some(Membership::OnlyB)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScenario {
    pub y_a_true: f64,
    pub y_b_true: f64,
    pub sigma_a: f64,
    pub sigma_b: f64,
    pub rho: f64,
    /// Observations per laboratory.
    pub n: usize,
    pub layout: Layout,
    pub seed: u64,
}

impl SyntheticScenario {
    /// `Y_A = 110, σ_A = 20, Y_B = 120, σ_B = 50, ρ = 0.5, n = 50` with eight
    /// A-only, four linking and five B-only laboratories.
    pub fn reference(seed: u64) -> Self {
        Self {
            y_a_true: 110.0,
            y_b_true: 120.0,
            sigma_a: 20.0,
            sigma_b: 50.0,
            rho: 0.5,
            n: 50,
            layout: Layout {
                only_a: 8,
                linking: 4,
                only_b: 5,
            },
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidScenario(m));
        if !(self.y_a_true.is_finite() && self.y_b_true.is_finite()) {
            return fail("true values must be finite".into());
        }
        if !(self.sigma_a > 0.0 && self.sigma_a.is_finite()) {
            return fail(format!("sigma_a must be positive, got {}", self.sigma_a));
        }
        if !(self.sigma_b > 0.0 && self.sigma_b.is_finite()) {
            return fail(format!("sigma_b must be positive, got {}", self.sigma_b));
        }
        if self.rho.is_nan() || self.rho.abs() >= 1.0 {
            return fail(format!("|rho| must be below 1, got {}", self.rho));
        }
        if self.n < 2 {
            return fail(format!("n must be at least 2, got {}", self.n));
        }
        // Two points always have sample correlation ±1.
        if self.layout.linking > 0 && self.n < 3 {
            return fail("linking laboratories need n >= 3".into());
        }
        if self.layout.only_a + self.layout.linking == 0
            || self.layout.only_b + self.layout.linking == 0
        {
            return fail("each standard needs at least one laboratory".into());
        }
        Ok(())
    }

    fn label(&self, index: usize) -> String {
        let width = self.layout.total().to_string().len().max(2);
        format!("LAB-{:0width$}", index + 1)
    }
}

/// Raw observations of one laboratory; a vector is empty when the standard
/// is not measured.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Observations {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

struct NormalStream {
    rng: ChaCha20Rng,
    spare: Option<f64>,
}

impl NormalStream {
    fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng, spare: None }
    }

    fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    fn next(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // u1 in (0, 1] keeps the logarithm finite.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let radius = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (TAU * u2).sin_cos();
        self.spare = Some(radius * s);
        radius * c
    }
}

fn stream_id(index: usize, attempt: u32) -> u64 {
    ((index as u64) << 20) | u64::from(attempt)
}

/// Draws the `n` observations of one laboratory from the given stream.
pub fn draw_observations(
    scenario: &SyntheticScenario,
    kind: Membership,
    index: usize,
    attempt: u32,
) -> Observations {
    let mut normals = NormalStream::new(scenario.seed, stream_id(index, attempt));
    let n = scenario.n;
    let mut obs = Observations::default();
    match kind {
        Membership::OnlyA => {
            obs.a = (0..n)
                .map(|_| scenario.y_a_true + scenario.sigma_a * normals.next())
                .collect();
        }
        Membership::OnlyB => {
            obs.b = (0..n)
                .map(|_| scenario.y_b_true + scenario.sigma_b * normals.next())
                .collect();
        }
        Membership::Linking => {
            let tail = (1.0 - scenario.rho * scenario.rho).sqrt();
            for _ in 0..n {
                let za = normals.next();
                let zb = scenario.rho * za + tail * normals.next();
                obs.a.push(scenario.y_a_true + scenario.sigma_a * za);
                obs.b.push(scenario.y_b_true + scenario.sigma_b * zb);
            }
        }
    }
    obs
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn covariance(xs: &[f64], ys: &[f64]) -> f64 {
    let (mx, my) = (mean(xs), mean(ys));
    xs.iter()
        .zip(ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / (xs.len() - 1) as f64
}

/// Sample mean, standard deviation of the mean and covariance of the means.
fn summarise(label: String, obs: &Observations) -> Option<LabResult> {
    let stat = |xs: &[f64]| {
        if xs.is_empty() {
            return Some(None);
        }
        let var = covariance(xs, xs);
        (var > 0.0).then(|| Some((mean(xs), (var / xs.len() as f64).sqrt())))
    };
    let a = stat(&obs.a)?;
    let b = stat(&obs.b)?;
    let cov_ab = match (a, b) {
        (Some((_, ua)), Some((_, ub))) => {
            let cov = covariance(&obs.a, &obs.b) / obs.a.len() as f64;
            if cov.abs() >= ua * ub {
                return None;
            }
            Some(cov)
        }
        _ => None,
    };
    Some(LabResult {
        label,
        x_a: a.map(|v| v.0),
        u_a: a.map(|v| v.1),
        x_b: b.map(|v| v.0),
        u_b: b.map(|v| v.1),
        cov_ab,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledLab {
    pub lab: LabResult,
    /// Streams consumed; more than one means degenerate samples were redrawn.
    pub attempts: u32,
}

/// Samples one laboratory of the given kind from substream `index`.
pub fn sample_lab(
    scenario: &SyntheticScenario,
    kind: Membership,
    index: usize,
) -> Result<SampledLab> {
    scenario.validate()?;
    let label = scenario.label(index);
    for attempt in 0..MAX_ATTEMPTS {
        let obs = draw_observations(scenario, kind, index, attempt);
        if let Some(lab) = summarise(label.clone(), &obs) {
            return Ok(SampledLab {
                lab,
                attempts: attempt + 1,
            });
        }
    }
    Err(Error::DegenerateSample {
        label,
        attempts: MAX_ATTEMPTS,
    })
}

/// Generates a complete dataset following the scenario's layout.  Labels are
/// `LAB-01`, `LAB-02`, ... in layout order.
pub fn generate_scenario(scenario: &SyntheticScenario) -> Result<ComparisonDataset> {
    scenario.validate()?;
    let total = scenario.layout.total();
    let mut labs = Vec::with_capacity(total);
    let mut redrawn = Vec::new();
    for index in 0..total {
        let kind = scenario.layout.kind(index).expect("index within layout");
        let sampled = sample_lab(scenario, kind, index)?;
        if sampled.attempts > 1 {
            redrawn.push(DatasetWarning::Resampled {
                label: sampled.lab.label.clone(),
                attempts: sampled.attempts,
            });
        }
        labs.push(sampled.lab);
    }
    let mut dataset = validate_dataset(labs)?;
    for w in redrawn {
        dataset.push_warning(w);
    }
    Ok(dataset)
}
