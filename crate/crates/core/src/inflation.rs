//! Search for the smallest uncertainty of one laboratory that lets a
//! failing dataset pass the conformity test.
//!
//! The procedure is a bracketed bisection on the target uncertainty:
//!
//! 1. double the uncertainty until the test passes (at most `2^16` times the
//!    reported value);
//! 2. scan a log-spaced grid across the bracket and keep the leftmost cell
//!    in which the outcome flips from fail to pass, flagging a warning if a
//!    later grid point fails again;
//! 3. bisect that cell until its relative width drops below the tolerance;
//! 4. round the passing end up to the reporting [`Resolution`].
//!
//! When the laboratory reported a covariance its correlation coefficient is
//! held fixed and the covariance rescaled with the new uncertainty.

use serde::{Deserialize, Serialize};

use crate::engine::{link, LinkingResult};
use crate::error::{Error, Result};
use crate::model::{to_correlation, validate_dataset, ComparisonDataset, Membership, Standard};

const MAX_GROWTH_DOUBLINGS: u32 = 16;
const SCAN_POINTS: usize = 64;

/// Grid on which the reported minimal uncertainty is expressed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Resolution {
    /// Report the bisection bound itself.
    Exact,
    /// Multiples of a fixed step, in the unit of the data.
    Step(f64),
    /// Multiples of the last of `n` significant digits of the reported
    /// uncertainty (`n = 2` turns 4.0 into steps of 0.1).
    SignificantDigits(u32),
}

impl Resolution {
    fn step_for(self, original_u: f64) -> Option<f64> {
        match self {
            Resolution::Exact => None,
            Resolution::Step(s) => Some(s),
            Resolution::SignificantDigits(n) => {
                let exponent = original_u.log10().floor() as i32 - (n as i32 - 1);
                Some(10f64.powi(exponent))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InflationOptions {
    /// Relative width at which bisection stops.
    pub tolerance: f64,
    pub resolution: Resolution,
}

impl Default for InflationOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-4,
            resolution: Resolution::SignificantDigits(2),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InflationResult {
    pub label: String,
    pub standard: Standard,
    pub original_u: f64,
    /// Passing end of the final bisection bracket.
    pub boundary_u: f64,
    /// Smallest passing uncertainty on the reporting grid.
    pub minimal_u: f64,
    pub relinked: LinkingResult,
    pub warnings: Vec<String>,
    /// Number of linking evaluations performed.
    pub evaluations: usize,
}

/// Copy of `dataset` with the uncertainty of `label` for `standard` set to
/// `u`, keeping the laboratory's correlation coefficient.
pub fn with_uncertainty(
    dataset: &ComparisonDataset,
    label: &str,
    standard: Standard,
    u: f64,
) -> Result<ComparisonDataset> {
    let mut labs = dataset.labs().to_vec();
    let lab = labs
        .iter_mut()
        .find(|l| l.label == label)
        .ok_or_else(|| Error::UnknownLabel(label.to_string()))?;
    if !lab.measured(standard) {
        return Err(Error::StandardNotMeasured {
            label: label.to_string(),
            standard,
        });
    }
    let r = if lab.membership() == Some(Membership::Linking) && lab.cov_ab.is_some() {
        Some(to_correlation(lab)?)
    } else {
        None
    };
    match standard {
        Standard::A => lab.u_a = Some(u),
        Standard::B => lab.u_b = Some(u),
    }
    if let Some(r) = r {
        lab.cov_ab = Some(r.to_covariance(lab.u_a.unwrap(), lab.u_b.unwrap()));
    }
    validate_dataset(labs)
}

/// Leftmost fail→pass transition of `passes` on `[lo, hi]`, where `lo`
/// fails and `hi` passes.  Returns the final bracket and whether the grid
/// scan saw the outcome flip back to failing.
fn leftmost_crossing<F>(mut passes: F, lo: f64, hi: f64, tolerance: f64) -> Result<(f64, f64, bool)>
where
    F: FnMut(f64) -> Result<bool>,
{
    let ratio = (hi / lo).ln();
    let grid: Vec<f64> = (0..SCAN_POINTS)
        .map(|i| {
            if i == SCAN_POINTS - 1 {
                hi
            } else {
                lo * (ratio * i as f64 / (SCAN_POINTS - 1) as f64).exp()
            }
        })
        .collect();
    let mut outcomes = Vec::with_capacity(SCAN_POINTS);
    outcomes.push(false);
    for &u in &grid[1..SCAN_POINTS - 1] {
        outcomes.push(passes(u)?);
    }
    outcomes.push(true);
    let first = outcomes.iter().position(|&p| p).expect("hi passes");
    let non_monotone = outcomes[first..].iter().any(|&p| !p);

    let (mut lo, mut hi) = (grid[first - 1], grid[first]);
    while (hi - lo) / hi >= tolerance {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if passes(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((lo, hi, non_monotone))
}

/// `k * step`, computed as `k / (1/step)` when `step` is the reciprocal of
/// an integer so that decimal grids come out as the nearest double.
fn grid_value(k: f64, step: f64) -> f64 {
    let inv = 1.0 / step;
    if step < 1.0 && (inv.round() - inv).abs() <= 1e-9 * inv {
        k / inv.round()
    } else {
        k * step
    }
}

pub fn minimal_inflation(
    dataset: &ComparisonDataset,
    label: &str,
    standard: Standard,
    options: &InflationOptions,
) -> Result<InflationResult> {
    if !(options.tolerance > 0.0 && options.tolerance < 1.0) {
        return Err(Error::InvalidOption(format!(
            "tolerance must lie in (0, 1), got {}",
            options.tolerance
        )));
    }
    if let Some(step) = options.resolution.step_for(1.0) {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidOption(format!(
                "resolution step must be positive, got {step}"
            )));
        }
    }
    let lab = dataset
        .get(label)
        .ok_or_else(|| Error::UnknownLabel(label.to_string()))?;
    let (_, original_u) = lab
        .measurement(standard)
        .ok_or_else(|| Error::StandardNotMeasured {
            label: label.to_string(),
            standard,
        })?;

    let baseline = link(dataset)?;
    if baseline.conformity.passed {
        return Ok(InflationResult {
            label: label.to_string(),
            standard,
            original_u,
            boundary_u: original_u,
            minimal_u: original_u,
            relinked: baseline,
            warnings: Vec::new(),
            evaluations: 1,
        });
    }

    let mut evaluations = 1;
    let mut passes = |u: f64| -> Result<bool> {
        evaluations += 1;
        let ds = with_uncertainty(dataset, label, standard, u)?;
        Ok(link(&ds)?.conformity.passed)
    };

    let cap = original_u * f64::from(1u32 << MAX_GROWTH_DOUBLINGS);
    let mut hi = original_u;
    loop {
        hi *= 2.0;
        if hi > cap {
            return Err(Error::NoPassingUncertainty {
                label: label.to_string(),
                cap,
            });
        }
        if passes(hi)? {
            break;
        }
    }

    let (lo, boundary_u, non_monotone) =
        leftmost_crossing(&mut passes, original_u, hi, options.tolerance)?;
    let mut warnings = Vec::new();
    if non_monotone {
        warnings.push(format!(
            "conformity outcome is not monotone in the uncertainty of `{label}`; the leftmost crossing is reported"
        ));
    }

    let minimal_u = match options.resolution.step_for(original_u) {
        None => boundary_u,
        Some(step) => {
            let mut k = (boundary_u / step).ceil();
            while grid_value(k - 1.0, step) > lo && passes(grid_value(k - 1.0, step))? {
                k -= 1.0;
            }
            while !passes(grid_value(k, step))? {
                k += 1.0;
            }
            grid_value(k, step)
        }
    };

    let relinked = link(&with_uncertainty(dataset, label, standard, minimal_u)?)?;
    debug_assert!(relinked.conformity.passed);
    Ok(InflationResult {
        label: label.to_string(),
        standard,
        original_u,
        boundary_u,
        minimal_u,
        relinked,
        warnings,
        evaluations: evaluations + 1,
    })
}
