//! Dataset files, reports and plot data.
//!
//! Dataset CSV: header `label,x_a,u_a,x_b,u_b,cov_ab` (an `r_ab` column may
//! replace `cov_ab`); empty cells mean "absent"; lines starting with `#` are
//! comments and `# units: nm` sets the unit.  A file without a header row is
//! read positionally in that column order.  Dataset JSON: an array of
//! objects with the same field names, or `{"units": ..., "labs": [...]}`.
//! Numbers may use a decimal comma (`"-96,0"`) and a Unicode minus sign.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::engine::LinkingResult;
use crate::error::{Error, Result};
use crate::model::{validate_dataset, ComparisonDataset, LabResult, Standard};

pub const TOOL_NAME: &str = "kclink";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    Csv,
    Json,
}

impl DatasetFormat {
    /// Guesses the format from the file extension (`.json` or CSV).
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => DatasetFormat::Json,
            _ => DatasetFormat::Csv,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Json,
}

/// A dataset together with the unit string found in the file, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedDataset {
    pub dataset: ComparisonDataset,
    pub units: Option<String>,
}

/// Parses a number written with a decimal point or a decimal comma.
pub fn parse_number(text: &str) -> Option<f64> {
    let t = text.trim().replace('\u{2212}', "-");
    let t = if t.contains(',') && !t.contains('.') {
        t.replace(',', ".")
    } else {
        t
    };
    let v: f64 = t.parse().ok()?;
    v.is_finite().then_some(v)
}

#[derive(Debug, Default)]
struct RawRow {
    label: Option<String>,
    x_a: Option<f64>,
    u_a: Option<f64>,
    x_b: Option<f64>,
    u_b: Option<f64>,
    cov_ab: Option<f64>,
    r_ab: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Column {
    Label,
    XA,
    UA,
    XB,
    UB,
    Cov,
    R,
}

impl Column {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name.trim().to_ascii_lowercase().as_str() {
            "label" => Column::Label,
            "x_a" | "value_a" => Column::XA,
            "u_a" => Column::UA,
            "x_b" | "value_b" => Column::XB,
            "u_b" => Column::UB,
            "cov_ab" => Column::Cov,
            "r_ab" => Column::R,
            _ => return None,
        })
    }

    fn set(self, row: &mut RawRow, v: f64) {
        let slot = match self {
            Column::XA => &mut row.x_a,
            Column::UA => &mut row.u_a,
            Column::XB => &mut row.x_b,
            Column::UB => &mut row.u_b,
            Column::Cov => &mut row.cov_ab,
            Column::R => &mut row.r_ab,
            Column::Label => unreachable!("label is not numeric"),
        };
        *slot = Some(v);
    }
}

const POSITIONAL: [Column; 6] = [
    Column::Label,
    Column::XA,
    Column::UA,
    Column::XB,
    Column::UB,
    Column::Cov,
];

impl RawRow {
    fn into_lab(self) -> std::result::Result<LabResult, String> {
        let label = self
            .label
            .filter(|l| !l.is_empty())
            .ok_or_else(|| "missing label".to_string())?;
        let cov_ab = match (self.cov_ab, self.r_ab) {
            (Some(_), Some(_)) => return Err("give either cov_ab or r_ab, not both".into()),
            (Some(c), None) => Some(c),
            (None, Some(r)) => match (self.u_a, self.u_b) {
                (Some(ua), Some(ub)) => Some(r * ua * ub),
                _ => return Err("r_ab requires both u_a and u_b".into()),
            },
            (None, None) => None,
        };
        Ok(LabResult {
            label,
            x_a: self.x_a,
            u_a: self.u_a,
            x_b: self.x_b,
            u_b: self.u_b,
            cov_ab,
        })
    }
}

fn units_from_comments(text: &str) -> Option<String> {
    text.lines().find_map(|line| {
        let rest = line.trim().strip_prefix('#')?.trim();
        let (key, value) = rest.split_once(':')?;
        key.trim()
            .eq_ignore_ascii_case("units")
            .then(|| value.trim().to_string())
            .filter(|v| !v.is_empty())
    })
}

/// Parses CSV dataset text; `source` names the input in error messages.
pub fn parse_csv_str(text: &str, source: &str) -> Result<LoadedDataset> {
    let units = units_from_comments(text);
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut columns: Option<Vec<Column>> = None;
    let mut labs = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            path: source.to_string(),
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let parse_err = |message: String| Error::Parse {
            path: source.to_string(),
            line,
            message,
        };
        if record.iter().all(|c| c.is_empty()) {
            continue;
        }
        if columns.is_none() {
            if record
                .get(0)
                .is_some_and(|c| c.eq_ignore_ascii_case("label"))
            {
                let mut cols = Vec::with_capacity(record.len());
                for name in record.iter() {
                    let col = Column::from_name(name)
                        .ok_or_else(|| parse_err(format!("unknown column `{name}`")))?;
                    if cols.contains(&col) {
                        return Err(parse_err(format!("duplicate column `{name}`")));
                    }
                    cols.push(col);
                }
                if !cols.contains(&Column::Label) {
                    return Err(parse_err("header has no `label` column".into()));
                }
                columns = Some(cols);
                continue;
            }
            columns = Some(POSITIONAL.to_vec());
        }
        let cols = columns.as_ref().expect("set above");
        if record.len() > cols.len() {
            return Err(parse_err(format!(
                "expected at most {} fields, found {}",
                cols.len(),
                record.len()
            )));
        }
        let mut row = RawRow::default();
        for (cell, &col) in record.iter().zip(cols) {
            if col == Column::Label {
                row.label = Some(cell.to_string());
            } else if !cell.is_empty() {
                let v = parse_number(cell)
                    .ok_or_else(|| parse_err(format!("not a number: `{cell}`")))?;
                col.set(&mut row, v);
            }
        }
        labs.push(row.into_lab().map_err(parse_err)?);
    }
    Ok(LoadedDataset {
        dataset: validate_dataset(labs)?,
        units,
    })
}

fn json_number(v: &Value) -> std::result::Result<Option<f64>, String> {
    match v {
        Value::Null => Ok(None),
        Value::Number(n) => n
            .as_f64()
            .map(Some)
            .ok_or_else(|| format!("not representable: {n}")),
        Value::String(s) if s.trim().is_empty() => Ok(None),
        Value::String(s) => parse_number(s)
            .map(Some)
            .ok_or_else(|| format!("not a number: `{s}`")),
        other => Err(format!("expected a number, found {other}")),
    }
}

/// Parses JSON dataset text; `source` names the input in error messages.
pub fn parse_json_str(text: &str, source: &str) -> Result<LoadedDataset> {
    let root: Value = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: source.to_string(),
        line: e.line() as u64,
        message: e.to_string(),
    })?;
    let format_err = |message: String| Error::Format {
        path: source.to_string(),
        message,
    };
    let (units, rows) = match root {
        Value::Array(rows) => (None, rows),
        Value::Object(mut map) => {
            let units = match map.remove("units") {
                None | Some(Value::Null) => None,
                Some(Value::String(s)) => Some(s),
                Some(other) => {
                    return Err(format_err(format!(
                        "`units` must be a string, found {other}"
                    )))
                }
            };
            match map.remove("labs") {
                Some(Value::Array(rows)) => (units, rows),
                _ => return Err(format_err("expected a `labs` array".into())),
            }
        }
        _ => return Err(format_err("expected an array of laboratories".into())),
    };
    let mut labs = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let row_err = |m: String| format_err(format!("laboratory #{}: {m}", i + 1));
        let Value::Object(fields) = row else {
            return Err(row_err("expected an object".into()));
        };
        let mut raw = RawRow::default();
        for (key, value) in fields {
            let col =
                Column::from_name(key).ok_or_else(|| row_err(format!("unknown field `{key}`")))?;
            if col == Column::Label {
                raw.label = Some(match value {
                    Value::String(s) => s.clone(),
                    other => return Err(row_err(format!("label must be a string, found {other}"))),
                });
            } else if let Some(v) = json_number(value).map_err(&row_err)? {
                col.set(&mut raw, v);
            }
        }
        labs.push(raw.into_lab().map_err(row_err)?);
    }
    Ok(LoadedDataset {
        dataset: validate_dataset(labs)?,
        units,
    })
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<LoadedDataset> {
    let text = read_text(path)?;
    let source = path.display().to_string();
    match format {
        DatasetFormat::Csv => parse_csv_str(&text, &source),
        DatasetFormat::Json => parse_json_str(&text, &source),
    }
}

pub fn parse_dataset(path: &Path, format: DatasetFormat) -> Result<ComparisonDataset> {
    load_dataset(path, format).map(|l| l.dataset)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes laboratories as dataset CSV with shortest round-trip numbers.
pub fn dataset_to_csv(labs: &[LabResult], units: Option<&str>) -> String {
    let mut out = String::new();
    if let Some(u) = units {
        let _ = writeln!(out, "# units: {u}");
    }
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(["label", "x_a", "u_a", "x_b", "u_b", "cov_ab"])
        .expect("in-memory write");
    for lab in labs {
        writer
            .write_record([
                lab.label.clone(),
                opt(lab.x_a),
                opt(lab.u_a),
                opt(lab.x_b),
                opt(lab.u_b),
                opt(lab.cov_ab),
            ])
            .expect("in-memory write");
    }
    out.push_str(&String::from_utf8(writer.into_inner().expect("flush")).expect("utf-8"));
    out
}

#[derive(Serialize)]
struct DatasetJson<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    units: Option<&'a str>,
    labs: &'a [LabResult],
}

pub fn dataset_to_json(labs: &[LabResult], units: Option<&str>) -> String {
    serde_json::to_string_pretty(&DatasetJson { units, labs }).expect("serialisable")
}

/// Rounds half away from zero on the shortest decimal representation of
/// `x`, so `2.675` shows as `2.68` at two decimals.
pub fn round_half_up(x: f64, decimals: usize) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let repr = x.abs().to_string();
    let (int_part, frac_part) = repr.split_once('.').unwrap_or((&repr, ""));
    let mut digits: Vec<u8> = int_part
        .bytes()
        .chain(
            frac_part
                .bytes()
                .chain(std::iter::repeat(b'0'))
                .take(decimals),
        )
        .map(|b| b - b'0')
        .collect();
    if frac_part
        .as_bytes()
        .get(decimals)
        .is_some_and(|&b| b >= b'5')
    {
        let mut i = digits.len();
        loop {
            if i == 0 {
                digits.insert(0, 1);
                break;
            }
            i -= 1;
            if digits[i] == 9 {
                digits[i] = 0;
            } else {
                digits[i] += 1;
                break;
            }
        }
    }
    let int_len = digits.len() - decimals;
    let mut out = String::with_capacity(digits.len() + 2);
    if x < 0.0 && digits.iter().any(|&d| d != 0) {
        out.push('-');
    }
    out.extend(digits[..int_len].iter().map(|d| char::from(b'0' + d)));
    if decimals > 0 {
        out.push('.');
        out.extend(digits[int_len..].iter().map(|d| char::from(b'0' + d)));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisplayKcrv {
    pub y_hat_a: String,
    pub u_a: String,
    pub y_hat_b: String,
    pub u_b: String,
    pub cov_ab: String,
    pub r_tilde: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisplayDoe {
    pub label: String,
    pub standard: Standard,
    pub d: String,
    pub u_d: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisplayConformity {
    pub q2: String,
    pub ratio: Option<String>,
    pub verdict: String,
}

/// Display-rounded copy of the numbers in a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisplayBlock {
    pub decimals: usize,
    pub kcrv: DisplayKcrv,
    pub does: Vec<DisplayDoe>,
    pub conformity: DisplayConformity,
}

/// Report on one linking run: input echo, full-precision result and its
/// rounded rendering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub tool: String,
    pub version: String,
    pub units: Option<String>,
    pub input: Vec<LabResult>,
    pub result: LinkingResult,
    pub display: DisplayBlock,
}

pub const RATIO_DECIMALS: usize = 2;

fn verdict(passed: bool) -> &'static str {
    if passed {
        "passed"
    } else {
        "failed"
    }
}

impl ReportDocument {
    pub fn new(
        result: &LinkingResult,
        input: &ComparisonDataset,
        units: Option<&str>,
        decimals: usize,
    ) -> Self {
        let r = |x: f64| round_half_up(x, decimals);
        let k = &result.kcrv;
        let c = &result.conformity;
        let display = DisplayBlock {
            decimals,
            kcrv: DisplayKcrv {
                y_hat_a: r(k.y_hat_a),
                u_a: r(k.u_a),
                y_hat_b: r(k.y_hat_b),
                u_b: r(k.u_b),
                cov_ab: r(k.cov_ab),
                r_tilde: round_half_up(k.r_tilde, 3),
            },
            does: result
                .does
                .iter()
                .map(|d| DisplayDoe {
                    label: d.label.clone(),
                    standard: d.standard,
                    d: r(d.d),
                    u_d: r(d.u_d),
                })
                .collect(),
            conformity: DisplayConformity {
                q2: round_half_up(c.q2, 3),
                ratio: c.ratio.map(|x| round_half_up(x, RATIO_DECIMALS)),
                verdict: verdict(c.passed).to_string(),
            },
        };
        Self {
            tool: TOOL_NAME.to_string(),
            version: TOOL_VERSION.to_string(),
            units: units.map(str::to_string),
            input: input.labs().to_vec(),
            result: result.clone(),
            display,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serialisable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            path: "<report>".to_string(),
            line: e.line() as u64,
            message: e.to_string(),
        })
    }

    pub fn to_text(&self) -> String {
        let unit = self
            .units
            .as_deref()
            .map(|u| format!(" {u}"))
            .unwrap_or_default();
        let d = &self.display;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "Distributed linking report ({} {})",
            self.tool, self.version
        );
        if let Some(u) = &self.units {
            let _ = writeln!(out, "Units: {u}");
        }
        out.push('\n');

        // One row per laboratory, A and B columns side by side.
        let mut rows: Vec<[String; 5]> = Vec::new();
        for lab in &self.input {
            let cell = |s: Standard| {
                d.does
                    .iter()
                    .find(|e| e.label == lab.label && e.standard == s)
                    .map(|e| (e.d.clone(), e.u_d.clone()))
                    .unwrap_or_default()
            };
            let (da, ua) = cell(Standard::A);
            let (db, ub) = cell(Standard::B);
            rows.push([lab.label.clone(), da, ua, db, ub]);
        }
        let header = [
            "Laboratory".to_string(),
            "d_A".into(),
            "u(d_A)".into(),
            "d_B".into(),
            "u(d_B)".into(),
        ];
        let mut widths = header.each_ref().map(|h| h.chars().count());
        for row in &rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        for row in std::iter::once(&header).chain(&rows) {
            let mut line = format!("{:<w$}", row[0], w = widths[0]);
            for (cell, w) in row[1..].iter().zip(&widths[1..]) {
                let _ = write!(line, "  {cell:>w$}");
            }
            let _ = writeln!(out, "{}", line.trim_end());
        }
        out.push('\n');

        let k = &d.kcrv;
        let _ = writeln!(out, "ŷ_A={}, u(ŷ_A)={}{unit}", k.y_hat_a, k.u_a);
        let _ = writeln!(out, "ŷ_B={}, u(ŷ_B)={}{unit}", k.y_hat_b, k.u_b);
        let _ = writeln!(out, "u(ŷ_A,ŷ_B)={}, r̃={}", k.cov_ab, k.r_tilde);
        let c = &self.result.conformity;
        match &d.conformity.ratio {
            Some(ratio) => {
                let _ = writeln!(
                    out,
                    "q²/(N-2)={ratio} ({}) [q²={}, N={}]",
                    d.conformity.verdict, d.conformity.q2, c.n
                );
            }
            None => {
                let _ = writeln!(
                    out,
                    "q²={} with N-2=0 ({})",
                    d.conformity.q2, d.conformity.verdict
                );
            }
        }
        if !self.result.warnings.is_empty() {
            out.push_str("\nWarnings:\n");
            for w in &self.result.warnings {
                let _ = writeln!(out, "  - {w}");
            }
        }
        out
    }

    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Text => self.to_text(),
            ReportFormat::Json => self.to_json(),
        }
    }
}

pub fn render_report(
    result: &LinkingResult,
    input: &ComparisonDataset,
    units: Option<&str>,
    decimals: usize,
    format: ReportFormat,
) -> String {
    ReportDocument::new(result, input, units, decimals).render(format)
}

/// CSV of `label,standard,d,u_d,expanded_u_d` with `expanded_u_d = 2 u_d`.
pub fn plot_data_csv(result: &LinkingResult) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(["label", "standard", "d", "u_d", "expanded_u_d"])
        .expect("in-memory write");
    for d in &result.does {
        writer
            .write_record([
                d.label.clone(),
                d.standard.to_string(),
                d.d.to_string(),
                d.u_d.to_string(),
                d.expanded(2.0).to_string(),
            ])
            .expect("in-memory write");
    }
    String::from_utf8(writer.into_inner().expect("flush")).expect("utf-8")
}

pub fn emit_plot_data(result: &LinkingResult, path: &Path) -> Result<()> {
    write_text(path, &plot_data_csv(result))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
