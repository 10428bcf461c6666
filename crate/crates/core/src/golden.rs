//! Reference datasets with published evaluations, used by `kclink selftest`
//! and by the test suites.

use crate::engine::{link, LinkingResult};
use crate::error::Result;
use crate::inflation::{minimal_inflation, InflationOptions};
use crate::io::parse_csv_str;
use crate::model::{ComparisonDataset, Standard};

/// 100 mm steel gauge blocks, deviations from nominal length in nm.
pub const GAUGE_BLOCKS_CSV: &str = include_str!("../data/gauge_blocks_100mm.csv");
/// Synthetic 17-laboratory example with correlated linking laboratories.
pub const SYNTHETIC_CSV: &str = include_str!("../data/synthetic_example.csv");

pub fn gauge_blocks() -> ComparisonDataset {
    parse_csv_str(GAUGE_BLOCKS_CSV, "gauge_blocks_100mm.csv")
        .expect("embedded dataset is valid")
        .dataset
}

pub fn synthetic_example() -> ComparisonDataset {
    parse_csv_str(SYNTHETIC_CSV, "synthetic_example.csv")
        .expect("embedded dataset is valid")
        .dataset
}

/// Published DOE row: `(d, u(d))` for A and for B.
pub type DoeRow = (&'static str, Option<(f64, f64)>, Option<(f64, f64)>);

/// Published evaluation of a dataset at a stated display precision.
#[derive(Debug, Clone, Copy)]
pub struct Expected {
    pub y_hat_a: f64,
    pub u_a: f64,
    pub y_hat_b: f64,
    pub u_b: f64,
    pub ratio: f64,
    pub passed: bool,
    pub does: &'static [DoeRow],
    /// Half of the last displayed digit.
    pub tolerance: f64,
}

pub const GAUGE_BLOCKS_EXPECTED: Expected = Expected {
    y_hat_a: -103.6,
    u_a: 4.9,
    y_hat_b: -100.5,
    u_b: 3.6,
    ratio: 1.07,
    passed: false,
    tolerance: 0.05,
    does: &[
        ("METAS", Some((7.6, 12.1)), None),
        ("NPL", Some((-36.4, 32.6)), None),
        ("BNM-LNE", Some((-6.4, 15.2)), None),
        ("KRISS", Some((-0.7, 20.0)), None),
        ("NRLM", Some((14.2, 15.6)), None),
        ("VNIIM", Some((-0.4, 14.2)), None),
        ("CSIRO", Some((-10.4, 15.2)), None),
        ("NIM", Some((13.6, 9.1)), None),
        ("NIST", Some((-13.4, 17.2)), Some((0.5, 17.6))),
        ("CENAM", Some((-15.4, 18.1)), Some((7.5, 22.7))),
        ("NRC", Some((-22.4, 23.5)), Some((-23.5, 25.7))),
        ("INMETRO1", None, Some((2.5, 1.7))),
        ("INMETRO2", None, Some((32.5, 28.8))),
        ("INTI", None, Some((-3.5, 20.7))),
        ("CEM", None, Some((-47.5, 16.6))),
    ],
};

/// Gauge-block evaluation after raising INMETRO1's B uncertainty to 11.2 nm.
pub const GAUGE_BLOCKS_INFLATED_EXPECTED: Expected = Expected {
    y_hat_a: -103.6,
    u_a: 4.9,
    y_hat_b: -106.7,
    u_b: 6.8,
    ratio: 1.00,
    passed: true,
    tolerance: 0.05,
    does: &[
        ("METAS", Some((7.6, 12.1)), None),
        ("NPL", Some((-36.4, 32.6)), None),
        ("BNM-LNE", Some((-6.4, 15.2)), None),
        ("KRISS", Some((-0.7, 20.0)), None),
        ("NRLM", Some((14.2, 15.6)), None),
        ("VNIIM", Some((-0.4, 14.2)), None),
        ("CSIRO", Some((-10.4, 15.2)), None),
        ("NIM", Some((13.6, 9.1)), None),
        ("NIST", Some((-13.4, 17.2)), Some((6.7, 16.6))),
        ("CENAM", Some((-15.4, 18.1)), Some((13.7, 22.0))),
        ("NRC", Some((-22.4, 23.5)), Some((-17.3, 25.1))),
        ("INMETRO1", None, Some((8.7, 8.9))),
        ("INMETRO2", None, Some((38.7, 28.2))),
        ("INTI", None, Some((2.7, 19.9))),
        ("CEM", None, Some((-41.3, 15.6))),
    ],
};

pub const INFLATION_TARGET: (&str, Standard, f64) = ("INMETRO1", Standard::B, 11.2);

pub const SYNTHETIC_EXPECTED: Expected = Expected {
    y_hat_a: 110.909,
    u_a: 0.698,
    y_hat_b: 123.879,
    u_b: 1.966,
    ratio: 0.89,
    passed: true,
    tolerance: 0.0005,
    does: &[
        ("LAB-01", Some((2.491, 2.815)), None),
        ("LAB-02", Some((1.191, 2.712)), None),
        ("LAB-03", Some((2.091, 2.401)), None),
        ("LAB-04", Some((-0.309, 2.505)), None),
        ("LAB-05", Some((-1.509, 2.296)), None),
        ("LAB-06", Some((-3.909, 2.505)), None),
        ("LAB-07", Some((-6.209, 2.712)), None),
        ("LAB-08", Some((-1.909, 2.505)), None),
        ("LAB-09", Some((0.091, 2.296)), Some((-3.779, 6.196))),
        ("LAB-10", Some((-1.509, 2.712)), Some((-6.579, 7.030))),
        ("LAB-11", Some((0.191, 2.712)), Some((1.121, 6.091))),
        ("LAB-12", Some((4.391, 2.296)), Some((11.821, 6.405))),
        ("LAB-13", None, Some((5.821, 5.775))),
        ("LAB-14", None, Some((5.221, 7.238))),
        ("LAB-15", None, Some((1.121, 6.822))),
        ("LAB-16", None, Some((-0.279, 6.300))),
        ("LAB-17", None, Some((-0.879, 6.614))),
    ],
};

/// Ratio tolerance: half of the last displayed digit of `q²/(N-2)`.
pub const RATIO_TOLERANCE: f64 = 0.005;

/// One comparison between a computed and a published number.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub computed: f64,
    pub expected: f64,
    pub tolerance: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        (self.computed - self.expected).abs() <= self.tolerance
    }
}

/// Every number of `expected` checked against `result`; `verdict_ok` tells
/// whether the pass/fail outcome matches.
pub fn compare(result: &LinkingResult, expected: &Expected) -> (Vec<Check>, bool) {
    let tol = expected.tolerance;
    let mut checks = vec![
        check("ŷ_A", result.kcrv.y_hat_a, expected.y_hat_a, tol),
        check("u(ŷ_A)", result.kcrv.u_a, expected.u_a, tol),
        check("ŷ_B", result.kcrv.y_hat_b, expected.y_hat_b, tol),
        check("u(ŷ_B)", result.kcrv.u_b, expected.u_b, tol),
        check(
            "q²/(N-2)",
            result.conformity.ratio.unwrap_or(f64::NAN),
            expected.ratio,
            RATIO_TOLERANCE,
        ),
    ];
    for &(label, a, b) in expected.does {
        for (standard, pair) in [(Standard::A, a), (Standard::B, b)] {
            let Some((d, u)) = pair else { continue };
            let (cd, cu) = result
                .doe(label, standard)
                .map_or((f64::NAN, f64::NAN), |x| (x.d, x.u_d));
            checks.push(check(&format!("d_{standard}({label})"), cd, d, tol));
            checks.push(check(&format!("u(d_{standard}({label}))"), cu, u, tol));
        }
    }
    (checks, result.conformity.passed == expected.passed)
}

fn check(name: &str, computed: f64, expected: f64, tolerance: f64) -> Check {
    Check {
        name: name.to_string(),
        computed,
        expected,
        tolerance,
    }
}

/// Outcome of one reference evaluation.
#[derive(Debug, Clone)]
pub struct SelftestCase {
    pub name: &'static str,
    pub checks: Vec<Check>,
    pub verdict_ok: bool,
}

impl SelftestCase {
    pub fn passed(&self) -> bool {
        self.verdict_ok && self.checks.iter().all(Check::passed)
    }
}

/// Evaluates the reference datasets and compares them with the published
/// tables.
pub fn run_selftest() -> Result<Vec<SelftestCase>> {
    let mut cases = Vec::new();

    let gauge = gauge_blocks();
    let (checks, verdict_ok) = compare(&link(&gauge)?, &GAUGE_BLOCKS_EXPECTED);
    cases.push(SelftestCase {
        name: "gauge blocks, reported uncertainties",
        checks,
        verdict_ok,
    });

    let (label, standard, published_u) = INFLATION_TARGET;
    let inflated = minimal_inflation(&gauge, label, standard, &InflationOptions::default())?;
    let (mut checks, verdict_ok) = compare(&inflated.relinked, &GAUGE_BLOCKS_INFLATED_EXPECTED);
    checks.insert(
        0,
        check("minimal u(INMETRO1)", inflated.minimal_u, published_u, 0.05),
    );
    cases.push(SelftestCase {
        name: "gauge blocks, minimal INMETRO1 inflation",
        checks,
        verdict_ok,
    });

    let (checks, verdict_ok) = compare(&link(&synthetic_example())?, &SYNTHETIC_EXPECTED);
    cases.push(SelftestCase {
        name: "synthetic example",
        checks,
        verdict_ok,
    });
    Ok(cases)
}
