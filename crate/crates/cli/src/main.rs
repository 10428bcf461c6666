use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use kclink_core::golden::run_selftest;
use kclink_core::io::{
    dataset_to_csv, dataset_to_json, emit_plot_data, load_dataset, round_half_up, write_text,
    DatasetFormat, LoadedDataset, ReportDocument, ReportFormat,
};
use kclink_core::{
    generate_scenario, link, minimal_inflation, q2_contributions, InflationOptions, Resolution,
    Standard, SyntheticScenario,
};

/// Exit status when the analysis ran but the conformity test failed.
const EXIT_NONCONFORMING: u8 = 2;

#[derive(Parser)]
#[command(
    name = "kclink",
    version,
    about = "Distributed linking of two key comparisons"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum InputFormat {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputFormat {
    Text,
    Json,
}

#[derive(clap::Args)]
struct InputArgs {
    /// Dataset file (CSV or JSON).
    #[arg(long, short)]
    input: PathBuf,
    /// Dataset format; guessed from the extension when omitted.
    #[arg(long)]
    format: Option<InputFormat>,
    /// Unit label for the report, overriding the one in the file.
    #[arg(long)]
    units: Option<String>,
}

#[derive(clap::Args)]
struct ReportArgs {
    /// Write the report here instead of standard output.
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    report_format: OutputFormat,
    /// Decimals shown for values and uncertainties.
    #[arg(long, default_value_t = 1)]
    decimals: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a dataset: reference values, DOEs and the conformity test.
    Link {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        report: ReportArgs,
        /// Also write `label,standard,d,u_d,expanded_u_d` rows for plotting.
        #[arg(long)]
        plot_data: Option<PathBuf>,
    },
    /// Find the smallest uncertainty of one laboratory that passes the
    /// conformity test.
    Inflate {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        report: ReportArgs,
        #[arg(long)]
        lab: String,
        /// Standard whose uncertainty is raised (A or B).
        #[arg(long)]
        standard: String,
        /// Relative bracket width at which bisection stops.
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
        /// Reporting grid for the result: `auto` (two significant digits of
        /// the reported uncertainty), `exact`, or a step such as `0.1`.
        #[arg(long, default_value = "auto")]
        resolution: String,
    },
    /// Generate a synthetic dataset from a JSON scenario file.
    Synth {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        seed_override: Option<u64>,
        /// Output file (`.json` for JSON, CSV otherwise); standard output
        /// when omitted.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Re-evaluate the bundled reference datasets against published tables.
    Selftest,
}

fn load(args: &InputArgs) -> Result<LoadedDataset> {
    let format = match args.format {
        Some(InputFormat::Csv) => DatasetFormat::Csv,
        Some(InputFormat::Json) => DatasetFormat::Json,
        None => DatasetFormat::from_path(&args.input),
    };
    let mut loaded = load_dataset(&args.input, format)?;
    if args.units.is_some() {
        loaded.units = args.units.clone();
    }
    Ok(loaded)
}

fn emit(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(path) => Ok(write_text(path, text)?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn report_format(f: OutputFormat) -> ReportFormat {
    match f {
        OutputFormat::Text => ReportFormat::Text,
        OutputFormat::Json => ReportFormat::Json,
    }
}

fn parse_resolution(s: &str) -> Result<Resolution> {
    Ok(match s {
        "auto" => Resolution::SignificantDigits(2),
        "exact" => Resolution::Exact,
        step => {
            let v: f64 = step
                .parse()
                .with_context(|| format!("invalid resolution `{step}`"))?;
            if !(v > 0.0 && v.is_finite()) {
                bail!("resolution must be positive, got {v}");
            }
            Resolution::Step(v)
        }
    })
}

fn run_link(input: InputArgs, report: ReportArgs, plot_data: Option<PathBuf>) -> Result<u8> {
    let loaded = load(&input)?;
    let result = link(&loaded.dataset)?;
    let doc = ReportDocument::new(
        &result,
        &loaded.dataset,
        loaded.units.as_deref(),
        report.decimals,
    );
    emit(
        report.output.as_deref(),
        &doc.render(report_format(report.report_format)),
    )?;
    if let Some(path) = plot_data {
        emit_plot_data(&result, &path)?;
    }
    Ok(if result.conformity.passed {
        0
    } else {
        EXIT_NONCONFORMING
    })
}

fn run_inflate(
    input: InputArgs,
    report: ReportArgs,
    lab: &str,
    standard: &str,
    tolerance: f64,
    resolution: &str,
) -> Result<u8> {
    let loaded = load(&input)?;
    let standard: Standard = standard.parse()?;
    let options = InflationOptions {
        tolerance,
        resolution: parse_resolution(resolution)?,
    };
    let baseline = link(&loaded.dataset)?;
    let inflated = minimal_inflation(&loaded.dataset, lab, standard, &options)?;
    let units = loaded.units.as_deref();
    let unit = units.map(|u| format!(" {u}")).unwrap_or_default();

    let relinked_input = kclink_core::inflation::with_uncertainty(
        &loaded.dataset,
        lab,
        standard,
        inflated.minimal_u,
    )?;
    let doc = ReportDocument::new(&inflated.relinked, &relinked_input, units, report.decimals);
    let text = match report.report_format {
        OutputFormat::Json => {
            let mut json = serde_json::to_string_pretty(&InflationReport {
                label: &inflated.label,
                standard: inflated.standard,
                original_u: inflated.original_u,
                boundary_u: inflated.boundary_u,
                minimal_u: inflated.minimal_u,
                evaluations: inflated.evaluations,
                warnings: &inflated.warnings,
                report: &doc,
            })?;
            json.push('\n');
            json
        }
        OutputFormat::Text => {
            let mut out = String::new();
            if !baseline.conformity.passed {
                out.push_str("q² contributions before inflation:\n");
                for (label, q) in q2_contributions(&loaded.dataset, &baseline.kcrv) {
                    let _ = writeln!(out, "  {label:<12} {}", round_half_up(q, 3));
                }
                out.push('\n');
            }
            let _ = writeln!(
                out,
                "minimal u({lab}, {standard}) = {}{unit} (reported {}{unit}; bisection bound {})",
                inflated.minimal_u,
                inflated.original_u,
                round_half_up(inflated.boundary_u, 4),
            );
            for w in &inflated.warnings {
                let _ = writeln!(out, "warning: {w}");
            }
            out.push('\n');
            out.push_str(&doc.to_text());
            out
        }
    };
    emit(report.output.as_deref(), &text)?;
    Ok(if inflated.relinked.conformity.passed {
        0
    } else {
        EXIT_NONCONFORMING
    })
}

#[derive(Serialize)]
struct InflationReport<'a> {
    label: &'a str,
    standard: Standard,
    original_u: f64,
    boundary_u: f64,
    minimal_u: f64,
    evaluations: usize,
    warnings: &'a [String],
    report: &'a ReportDocument,
}

fn run_synth(scenario: &Path, seed_override: Option<u64>, output: Option<PathBuf>) -> Result<u8> {
    let text = std::fs::read_to_string(scenario)
        .with_context(|| format!("reading {}", scenario.display()))?;
    let mut sc: SyntheticScenario = serde_json::from_str(&text)
        .with_context(|| format!("parsing scenario {}", scenario.display()))?;
    if let Some(seed) = seed_override {
        sc.seed = seed;
    }
    let dataset = generate_scenario(&sc)?;
    for w in dataset.warnings() {
        eprintln!("warning: {w}");
    }
    let rendered = match output.as_deref().map(DatasetFormat::from_path) {
        Some(DatasetFormat::Json) => dataset_to_json(dataset.labs(), None),
        _ => dataset_to_csv(dataset.labs(), None),
    };
    emit(output.as_deref(), &rendered)?;
    Ok(0)
}

fn run_selftest_cmd() -> Result<u8> {
    let mut all = true;
    for case in run_selftest()? {
        let ok = case.passed();
        all &= ok;
        println!("[{}] {}", if ok { "PASS" } else { "FAIL" }, case.name);
        if !case.verdict_ok {
            println!("    conformity verdict differs from the published one");
        }
        for c in case.checks.iter().filter(|c| !c.passed()) {
            println!(
                "    {}: computed {} expected {} ± {}",
                c.name, c.computed, c.expected, c.tolerance
            );
        }
    }
    Ok(if all { 0 } else { 1 })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Link {
            input,
            report,
            plot_data,
        } => run_link(input, report, plot_data),
        Command::Inflate {
            input,
            report,
            lab,
            standard,
            tolerance,
            resolution,
        } => run_inflate(input, report, &lab, &standard, tolerance, &resolution),
        Command::Synth {
            scenario,
            seed_override,
            output,
        } => run_synth(&scenario, seed_override, output),
        Command::Selftest => run_selftest_cmd(),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
