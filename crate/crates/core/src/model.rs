//! Laboratory results, the comparison dataset and its partition into the
//! three index sets (A only, B only, linking).

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One of the two travelling standards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Standard {
    A,
    B,
}

impl fmt::Display for Standard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Standard::A => "A",
            Standard::B => "B",
        })
    }
}

impl std::str::FromStr for Standard {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A" | "a" => Ok(Standard::A),
            "B" | "b" => Ok(Standard::B),
            other => Err(Error::InvalidOption(format!(
                "standard must be A or B, got `{other}`"
            ))),
        }
    }
}

/// Which of the three disjoint index sets a laboratory belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Membership {
    OnlyA,
    OnlyB,
    Linking,
}

/// Result reported by one laboratory for standard A and/or standard B.
///
/// Values, uncertainties and the covariance share the unit of the
/// measurand (the covariance in units squared).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabResult {
    pub label: String,
    #[serde(default, alias = "value_a", skip_serializing_if = "Option::is_none")]
    pub x_a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_a: Option<f64>,
    #[serde(default, alias = "value_b", skip_serializing_if = "Option::is_none")]
    pub x_b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cov_ab: Option<f64>,
}

impl LabResult {
    pub fn only_a(label: impl Into<String>, x: f64, u: f64) -> Self {
        Self {
            label: label.into(),
            x_a: Some(x),
            u_a: Some(u),
            x_b: None,
            u_b: None,
            cov_ab: None,
        }
    }

    pub fn only_b(label: impl Into<String>, x: f64, u: f64) -> Self {
        Self {
            label: label.into(),
            x_a: None,
            u_a: None,
            x_b: Some(x),
            u_b: Some(u),
            cov_ab: None,
        }
    }

    pub fn linking(
        label: impl Into<String>,
        (x_a, u_a): (f64, f64),
        (x_b, u_b): (f64, f64),
        cov_ab: Option<f64>,
    ) -> Self {
        Self {
            label: label.into(),
            x_a: Some(x_a),
            u_a: Some(u_a),
            x_b: Some(x_b),
            u_b: Some(u_b),
            cov_ab,
        }
    }

    /// Value and standard uncertainty for `standard`, if measured.
    pub fn measurement(&self, standard: Standard) -> Option<(f64, f64)> {
        match standard {
            Standard::A => self.x_a.zip(self.u_a),
            Standard::B => self.x_b.zip(self.u_b),
        }
    }

    pub fn measured(&self, standard: Standard) -> bool {
        self.measurement(standard).is_some()
    }

    pub fn membership(&self) -> Option<Membership> {
        match (self.measured(Standard::A), self.measured(Standard::B)) {
            (true, true) => Some(Membership::Linking),
            (true, false) => Some(Membership::OnlyA),
            (false, true) => Some(Membership::OnlyB),
            (false, false) => None,
        }
    }

    /// Covariance between the two results; absent is read as zero.
    pub fn covariance(&self) -> f64 {
        self.cov_ab.unwrap_or(0.0)
    }

    fn check(&self) -> Result<()> {
        for (standard, x, u) in [
            (Standard::A, self.x_a, self.u_a),
            (Standard::B, self.x_b, self.u_b),
        ] {
            match (x, u) {
                (Some(x), Some(u)) => {
                    if !x.is_finite() {
                        return Err(Error::NonFiniteValue {
                            label: self.label.clone(),
                            standard,
                        });
                    }
                    if !(u > 0.0 && u.is_finite()) {
                        return Err(Error::NonPositiveUncertainty {
                            label: self.label.clone(),
                            standard,
                            value: u,
                        });
                    }
                }
                (None, None) => {}
                _ => {
                    return Err(Error::UnpairedValue {
                        label: self.label.clone(),
                        standard,
                    })
                }
            }
        }
        if self.membership().is_none() {
            return Err(Error::NoMeasurement(self.label.clone()));
        }
        if let Some(cov) = self.cov_ab {
            let (Some(u_a), Some(u_b)) = (self.u_a, self.u_b) else {
                return Err(Error::CovarianceWithoutPair(self.label.clone()));
            };
            if self.membership() != Some(Membership::Linking) {
                return Err(Error::CovarianceWithoutPair(self.label.clone()));
            }
            let bound = u_a * u_b;
            if !cov.is_finite() || cov.abs() >= bound {
                return Err(Error::CovarianceOutOfRange {
                    label: self.label.clone(),
                    cov,
                    bound,
                });
            }
        }
        Ok(())
    }
}

/// Correlation coefficient of a linking laboratory's two results.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationView {
    pub r_ab: f64,
}

impl CorrelationView {
    pub fn to_covariance(self, u_a: f64, u_b: f64) -> f64 {
        self.r_ab * u_a * u_b
    }
}

/// `r = cov / (u_a u_b)`; an absent covariance gives `r = 0`.
pub fn to_correlation(result: &LabResult) -> Result<CorrelationView> {
    for standard in [Standard::A, Standard::B] {
        if !result.measured(standard) {
            return Err(Error::StandardNotMeasured {
                label: result.label.clone(),
                standard,
            });
        }
    }
    let (u_a, u_b) = (result.u_a.unwrap_or(1.0), result.u_b.unwrap_or(1.0));
    let r_ab = result.covariance() / (u_a * u_b);
    debug_assert!(r_ab.abs() < 1.0 || !r_ab.is_finite());
    Ok(CorrelationView { r_ab })
}

/// Non-fatal findings raised while building or generating a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DatasetWarning {
    /// No laboratory measured both standards: the two groups are evaluated
    /// independently.
    NoLinkingLabs,
    /// Every linking covariance is zero or absent, so the reference values
    /// reduce to per-group inverse-variance weighted means.
    UncorrelatedLinking,
    MissingCovariance {
        label: String,
    },
    Resampled {
        label: String,
        attempts: u32,
    },
}

impl fmt::Display for DatasetWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetWarning::NoLinkingLabs => f.write_str(
                "no linking laboratories: the two comparisons are evaluated independently",
            ),
            DatasetWarning::UncorrelatedLinking => f.write_str(
                "all linking covariances are zero or absent: the reference values reduce to per-group weighted means and carry no cross-information",
            ),
            DatasetWarning::MissingCovariance { label } => {
                write!(f, "linking laboratory `{label}` reports no covariance; assumed zero")
            }
            DatasetWarning::Resampled { label, attempts } => write!(
                f,
                "laboratory `{label}`: degenerate sample redrawn ({attempts} attempts)"
            ),
        }
    }
}

/// A validated collection of laboratory results with its index sets.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonDataset {
    labs: Vec<LabResult>,
    only_a: Vec<usize>,
    only_b: Vec<usize>,
    linking: Vec<usize>,
    warnings: Vec<DatasetWarning>,
}

impl ComparisonDataset {
    pub fn labs(&self) -> &[LabResult] {
        &self.labs
    }

    pub fn only_a(&self) -> impl Iterator<Item = &LabResult> {
        self.only_a.iter().map(|&i| &self.labs[i])
    }

    pub fn only_b(&self) -> impl Iterator<Item = &LabResult> {
        self.only_b.iter().map(|&i| &self.labs[i])
    }

    pub fn linking(&self) -> impl Iterator<Item = &LabResult> {
        self.linking.iter().map(|&i| &self.labs[i])
    }

    /// Laboratories that measured `standard`, in input order.
    pub fn group(&self, standard: Standard) -> impl Iterator<Item = &LabResult> {
        self.labs.iter().filter(move |l| l.measured(standard))
    }

    pub fn card(&self, standard: Standard) -> usize {
        match standard {
            Standard::A => self.only_a.len() + self.linking.len(),
            Standard::B => self.only_b.len() + self.linking.len(),
        }
    }

    pub fn card_only_a(&self) -> usize {
        self.only_a.len()
    }

    pub fn card_only_b(&self) -> usize {
        self.only_b.len()
    }

    pub fn card_linking(&self) -> usize {
        self.linking.len()
    }

    /// Total number of reported values, linking laboratories counted twice.
    pub fn n_values(&self) -> usize {
        self.card(Standard::A) + self.card(Standard::B)
    }

    pub fn get(&self, label: &str) -> Option<&LabResult> {
        self.labs.iter().find(|l| l.label == label)
    }

    pub fn warnings(&self) -> &[DatasetWarning] {
        &self.warnings
    }

    pub(crate) fn push_warning(&mut self, warning: DatasetWarning) {
        self.warnings.push(warning);
    }

    pub fn into_labs(self) -> Vec<LabResult> {
        self.labs
    }
}

/// Checks every laboratory and partitions the dataset into its index sets.
pub fn validate_dataset(raw: Vec<LabResult>) -> Result<ComparisonDataset> {
    if raw.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut seen = HashSet::with_capacity(raw.len());
    let (mut only_a, mut only_b, mut linking) = (Vec::new(), Vec::new(), Vec::new());
    let mut warnings = Vec::new();
    for (i, lab) in raw.iter().enumerate() {
        if !seen.insert(lab.label.as_str()) {
            return Err(Error::DuplicateLabel(lab.label.clone()));
        }
        lab.check()?;
        match lab.membership() {
            Some(Membership::OnlyA) => only_a.push(i),
            Some(Membership::OnlyB) => only_b.push(i),
            Some(Membership::Linking) => {
                if lab.cov_ab.is_none() {
                    warnings.push(DatasetWarning::MissingCovariance {
                        label: lab.label.clone(),
                    });
                }
                linking.push(i);
            }
            None => unreachable!("checked above"),
        }
    }
    if only_a.len() + linking.len() == 0 {
        return Err(Error::EmptyGroup(Standard::A));
    }
    if only_b.len() + linking.len() == 0 {
        return Err(Error::EmptyGroup(Standard::B));
    }
    if linking.is_empty() {
        warnings.push(DatasetWarning::NoLinkingLabs);
    } else if linking.iter().all(|&i| raw[i].covariance() == 0.0) {
        warnings.push(DatasetWarning::UncorrelatedLinking);
    }
    Ok(ComparisonDataset {
        labs: raw,
        only_a,
        only_b,
        linking,
        warnings,
    })
}
