//! Closed-form evaluation of two linked comparisons.
//!
//! With a constant prior the joint posterior of the two measurands is a
//! bivariate Gaussian.  Its mean and covariance follow from five data-only
//! sums (see [`AuxQuantities`]):
//!
//! ```text
//! det  = a b - c^2
//! ŷ_A  = (b s1 + c s2) / det      u²(ŷ_A) = b / det
//! ŷ_B  = (c s1 + a s2) / det      u²(ŷ_B) = a / det
//! u(ŷ_A, ŷ_B) = c / det
//! ```
//!
//! Degrees of equivalence are `d = x - ŷ` with `u²(d) = u²(x) - u²(ŷ)`, and the
//! residual `q²` of the data about `(ŷ_A, ŷ_B)` is compared with `N - 2`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ComparisonDataset, LabResult, Membership, Standard};
use crate::sum::NeumaierSum;

/// Absolute bound on `q²` for a pass when there are no degrees of freedom.
pub const ZERO_DOF_TOLERANCE: f64 = 1e-9;

/// Relative slack (in units of `u²(x)`) tolerated on a negative DOE radicand
/// before it is reported as an inconsistency.
const RADICAND_SLACK: f64 = 64.0 * f64::EPSILON;

/// Data-only sums: inverse-variance weights `a`, `b`, cross weight `c`, and
/// weighted value sums `s1`, `s2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuxQuantities {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub s1: f64,
    pub s2: f64,
}

impl AuxQuantities {
    pub fn det(&self) -> f64 {
        self.a * self.b - self.c * self.c
    }
}

/// Contribution of a single laboratory to the five sums.
fn lab_terms(lab: &LabResult) -> AuxQuantities {
    let zero = AuxQuantities {
        a: 0.0,
        b: 0.0,
        c: 0.0,
        s1: 0.0,
        s2: 0.0,
    };
    match lab.membership() {
        Some(Membership::OnlyA) => {
            let (x, u) = lab.measurement(Standard::A).unwrap();
            let w = 1.0 / (u * u);
            AuxQuantities {
                a: w,
                s1: x * w,
                ..zero
            }
        }
        Some(Membership::OnlyB) => {
            let (x, u) = lab.measurement(Standard::B).unwrap();
            let w = 1.0 / (u * u);
            AuxQuantities {
                b: w,
                s2: x * w,
                ..zero
            }
        }
        Some(Membership::Linking) => {
            let (xa, ua) = lab.measurement(Standard::A).unwrap();
            let (xb, ub) = lab.measurement(Standard::B).unwrap();
            let cov = lab.covariance();
            if cov == 0.0 {
                // Same value as the general branch, written so that the two
                // groups stay bit-for-bit decoupled.
                let (wa, wb) = (1.0 / (ua * ua), 1.0 / (ub * ub));
                return AuxQuantities {
                    a: wa,
                    b: wb,
                    c: 0.0,
                    s1: xa * wa,
                    s2: xb * wb,
                };
            }
            let (va, vb) = (ua * ua, ub * ub);
            let denom = va * vb - cov * cov;
            AuxQuantities {
                a: vb / denom,
                b: va / denom,
                c: cov / denom,
                s1: (vb * xa - cov * xb) / denom,
                s2: (va * xb - cov * xa) / denom,
            }
        }
        None => zero,
    }
}

/// Computes `a, b, c, s1, s2` in covariance form, accumulating in input
/// order with compensated summation.
pub fn compute_aux(dataset: &ComparisonDataset) -> Result<AuxQuantities> {
    let mut acc = [NeumaierSum::new(); 5];
    for lab in dataset.labs() {
        if lab.membership() == Some(Membership::Linking) {
            let (ua, ub) = (lab.u_a.unwrap(), lab.u_b.unwrap());
            let denom = ua * ua * ub * ub - lab.covariance().powi(2);
            if denom.is_nan() || denom <= 0.0 {
                return Err(Error::Inconsistent(format!(
                    "singular covariance for linking laboratory `{}`",
                    lab.label
                )));
            }
        }
        let t = lab_terms(lab);
        for (sum, v) in acc.iter_mut().zip([t.a, t.b, t.c, t.s1, t.s2]) {
            sum.add(v);
        }
    }
    let aux = AuxQuantities {
        a: acc[0].total(),
        b: acc[1].total(),
        c: acc[2].total(),
        s1: acc[3].total(),
        s2: acc[4].total(),
    };
    if !(aux.a > 0.0 && aux.b > 0.0 && aux.det() > 0.0) {
        return Err(Error::Inconsistent(format!(
            "weight matrix is not positive definite (a = {}, b = {}, ab - c² = {})",
            aux.a,
            aux.b,
            aux.det()
        )));
    }
    Ok(aux)
}

/// Key comparison reference values with their covariance matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KcrvEstimate {
    pub y_hat_a: f64,
    pub y_hat_b: f64,
    pub u_a: f64,
    pub u_b: f64,
    pub cov_ab: f64,
    pub r_tilde: f64,
}

impl KcrvEstimate {
    pub fn value(&self, standard: Standard) -> f64 {
        match standard {
            Standard::A => self.y_hat_a,
            Standard::B => self.y_hat_b,
        }
    }

    pub fn uncertainty(&self, standard: Standard) -> f64 {
        match standard {
            Standard::A => self.u_a,
            Standard::B => self.u_b,
        }
    }

    pub fn covariance_matrix(&self) -> [[f64; 2]; 2] {
        [
            [self.u_a * self.u_a, self.cov_ab],
            [self.cov_ab, self.u_b * self.u_b],
        ]
    }
}

pub fn compute_kcrv(aux: &AuxQuantities) -> Result<KcrvEstimate> {
    let AuxQuantities { a, b, c, s1, s2 } = *aux;
    let det = aux.det();
    if !(a > 0.0 && b > 0.0 && det > 0.0) {
        return Err(Error::Inconsistent(format!(
            "weight matrix is not positive definite (ab - c² = {det})"
        )));
    }
    if c == 0.0 {
        // Two independent inverse-variance weighted means.
        return Ok(KcrvEstimate {
            y_hat_a: s1 / a,
            y_hat_b: s2 / b,
            u_a: 1.0 / a.sqrt(),
            u_b: 1.0 / b.sqrt(),
            cov_ab: 0.0,
            r_tilde: 0.0,
        });
    }
    Ok(KcrvEstimate {
        y_hat_a: (b * s1 + c * s2) / det,
        y_hat_b: (c * s1 + a * s2) / det,
        u_a: (b / det).sqrt(),
        u_b: (a / det).sqrt(),
        cov_ab: c / det,
        r_tilde: c / (a * b).sqrt(),
    })
}

/// Deviation of one laboratory's result from the reference value of the
/// same standard.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeOfEquivalence {
    pub label: String,
    pub standard: Standard,
    pub d: f64,
    pub u_d: f64,
}

impl DegreeOfEquivalence {
    pub fn expanded(&self, k: f64) -> f64 {
        k * self.u_d
    }
}

/// One entry per laboratory and measured standard, in input order (A before
/// B for linking laboratories).
///
/// `u²(d) = u²(x) - u²(ŷ)` relies on `Cov(ŷ, x) = u²(ŷ)` for every `x` of the
/// same standard.  A radicand below `-64 ε u²(x)` is an error, never clamped.
pub fn compute_doe(
    dataset: &ComparisonDataset,
    kcrv: &KcrvEstimate,
) -> Result<Vec<DegreeOfEquivalence>> {
    let mut out = Vec::with_capacity(dataset.n_values());
    for lab in dataset.labs() {
        for standard in [Standard::A, Standard::B] {
            let Some((x, u)) = lab.measurement(standard) else {
                continue;
            };
            let u_ref = kcrv.uncertainty(standard);
            let radicand = u * u - u_ref * u_ref;
            if radicand < -RADICAND_SLACK * u * u {
                return Err(Error::Inconsistent(format!(
                    "negative DOE variance {radicand} for `{}` ({standard}): u(x) = {u} < u(ŷ) = {u_ref}",
                    lab.label
                )));
            }
            out.push(DegreeOfEquivalence {
                label: lab.label.clone(),
                standard,
                d: x - kcrv.value(standard),
                u_d: radicand.max(0.0).sqrt(),
            });
        }
    }
    Ok(out)
}

/// Weighted squared residual of one laboratory about `(y_a, y_b)`.
pub fn lab_chi_square(lab: &LabResult, y_a: f64, y_b: f64) -> f64 {
    match lab.membership() {
        Some(Membership::OnlyA) => {
            let (x, u) = lab.measurement(Standard::A).unwrap();
            ((x - y_a) / u).powi(2)
        }
        Some(Membership::OnlyB) => {
            let (x, u) = lab.measurement(Standard::B).unwrap();
            ((x - y_b) / u).powi(2)
        }
        Some(Membership::Linking) => {
            let (xa, ua) = lab.measurement(Standard::A).unwrap();
            let (xb, ub) = lab.measurement(Standard::B).unwrap();
            let cov = lab.covariance();
            let (ea, eb) = (xa - y_a, xb - y_b);
            if cov == 0.0 {
                return (ea / ua).powi(2) + (eb / ub).powi(2);
            }
            let (va, vb) = (ua * ua, ub * ub);
            (vb * ea * ea - 2.0 * cov * ea * eb + va * eb * eb) / (va * vb - cov * cov)
        }
        None => 0.0,
    }
}

/// The full `χ²(Y_A, Y_B)` whose exponential is the unnormalised posterior.
pub fn chi_square(dataset: &ComparisonDataset, y_a: f64, y_b: f64) -> f64 {
    let mut acc = NeumaierSum::new();
    acc.extend(dataset.labs().iter().map(|l| lab_chi_square(l, y_a, y_b)));
    acc.total()
}

/// Per-laboratory contributions to `q²`, in input order.  Large entries hint
/// at which laboratory drives a failed conformity test.
pub fn q2_contributions(dataset: &ComparisonDataset, kcrv: &KcrvEstimate) -> Vec<(String, f64)> {
    dataset
        .labs()
        .iter()
        .map(|l| {
            (
                l.label.clone(),
                lab_chi_square(l, kcrv.y_hat_a, kcrv.y_hat_b),
            )
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConformityReport {
    pub q2: f64,
    /// Number of reported values `N`.
    pub n: usize,
    /// `N - 2`.
    pub dof: usize,
    /// `q² / (N - 2)`, absent when `N = 2`.
    pub ratio: Option<f64>,
    pub passed: bool,
}

/// Conformity test `q² <= N - 2` evaluated at full precision.
pub fn compute_q2(dataset: &ComparisonDataset, kcrv: &KcrvEstimate) -> ConformityReport {
    let q2 = chi_square(dataset, kcrv.y_hat_a, kcrv.y_hat_b);
    let n = dataset.n_values();
    let dof = n.saturating_sub(2);
    let (ratio, passed) = if dof == 0 {
        (None, q2 <= ZERO_DOF_TOLERANCE)
    } else {
        (Some(q2 / dof as f64), q2 <= dof as f64)
    };
    ConformityReport {
        q2,
        n,
        dof,
        ratio,
        passed,
    }
}

/// Bivariate Gaussian posterior density of `(Y_A, Y_B)`.
pub fn posterior_density(y_a: f64, y_b: f64, kcrv: &KcrvEstimate) -> f64 {
    let r = kcrv.r_tilde;
    let one_minus_r2 = 1.0 - r * r;
    let za = (y_a - kcrv.y_hat_a) / kcrv.u_a;
    let zb = (y_b - kcrv.y_hat_b) / kcrv.u_b;
    let quad = (za * za - 2.0 * r * za * zb + zb * zb) / one_minus_r2;
    (-0.5 * quad).exp() / (2.0 * PI * kcrv.u_a * kcrv.u_b * one_minus_r2.sqrt())
}

/// Everything produced by one evaluation of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkingResult {
    pub aux: AuxQuantities,
    pub kcrv: KcrvEstimate,
    pub does: Vec<DegreeOfEquivalence>,
    pub conformity: ConformityReport,
    pub warnings: Vec<String>,
}

impl LinkingResult {
    pub fn doe(&self, label: &str, standard: Standard) -> Option<&DegreeOfEquivalence> {
        self.does
            .iter()
            .find(|d| d.label == label && d.standard == standard)
    }
}

pub const NO_DOF_WARNING: &str = "no degrees of freedom (N = 2): the conformity test is degenerate";

/// Runs the whole evaluation: sums, reference values, DOEs and conformity.
pub fn link(dataset: &ComparisonDataset) -> Result<LinkingResult> {
    let aux = compute_aux(dataset)?;
    let kcrv = compute_kcrv(&aux)?;
    let does = compute_doe(dataset, &kcrv)?;
    let conformity = compute_q2(dataset, &kcrv);
    let mut warnings: Vec<String> = dataset.warnings().iter().map(|w| w.to_string()).collect();
    if conformity.dof == 0 {
        warnings.push(NO_DOF_WARNING.to_string());
    }
    Ok(LinkingResult {
        aux,
        kcrv,
        does,
        conformity,
        warnings,
    })
}
