use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use cpwloss::geometry::reference_presets;
use cpwloss::participation::{loss_budget, simulate as simulate_stack, ParticipationBudget};
use cpwloss::reference_data::budget_table;
use cpwloss::stats::{compare_measured_vs_simulated, summarize_chip, ChipLabel, ChipSummary, Comparison};
use cpwloss::tlsfit::TlsFit;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::Format;
use crate::fitting::TlsRecord;
use crate::report::{emit, sci, to_json, CliError, CliResult, Report};
use crate::{Context, LevelArg};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorBar {
    /// Scatter of the resonators about the weighted mean.
    Spread,
    /// Standard error of the weighted mean.
    Uncertainty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CompareWith {
    None,
    /// Budgets built from the tabulated participations and tangents.
    Tabulated,
    /// Budgets from simulating the matching preset.
    Simulate,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// JSON reports written by `fit-tls --format json`.
    #[arg(required = true, value_name = "JSON")]
    pub files: Vec<PathBuf>,
    /// Treat every record as belonging to this chip, e.g. 400C-ref-A.
    #[arg(long)]
    pub chip: Option<String>,
    /// Write boxplot geometry to this CSV file.
    #[arg(long, value_name = "PATH")]
    pub csv: Option<PathBuf>,
    /// Error bar shown next to the weighted mean in text output.
    #[arg(long, value_enum, default_value_t = ErrorBar::Spread)]
    pub display: ErrorBar,
    /// Compare each chip's weighted mean with a simulated total.
    #[arg(long, value_enum, default_value_t = CompareWith::None)]
    pub compare: CompareWith,
    #[command(flatten)]
    pub level: LevelArg,
    /// Keep fits flagged as having an insufficient photon-number span.
    #[arg(long)]
    pub keep_flagged: bool,
}

/// Records from a `fit-tls` report, a bare array, or a single fit object.
fn read_fits(path: &Path) -> CliResult<Vec<TlsFit>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let items = match value {
        serde_json::Value::Object(mut map) if map.contains_key("results") => map.remove("results").unwrap_or_default(),
        other => other,
    };
    let items = match items {
        serde_json::Value::Array(v) => v,
        single => vec![single],
    };
    items
        .into_iter()
        .map(|item| {
            serde_json::from_value::<TlsRecord>(item)
                .map(|r| r.fit)
                .map_err(|e| CliError::Input(format!("{}: not a TLS fit record: {e}", path.display())))
        })
        .collect()
}

#[derive(Debug, Serialize)]
struct ChipResult {
    summary: ChipSummary,
    excluded: Vec<String>,
    comparison: Option<Comparison>,
}

fn class_budget(label: &ChipLabel, compare: CompareWith, level: u32) -> CliResult<Option<ParticipationBudget>> {
    Ok(match compare {
        CompareWith::None => None,
        CompareWith::Tabulated => {
            let t = budget_table(label.deposition, label.treatment);
            Some(loss_budget(&t.participations(), &t.loss_tangents())?)
        }
        CompareWith::Simulate => {
            Some(simulate_stack(&reference_presets(label.deposition, label.treatment), level)?.budget)
        }
    })
}

const CSV_HEADER: &str = "chip,quantity,count,whisker_low,q1,median,mean,q3,whisker_high,outliers";

fn boxplot_csv(results: &[ChipResult]) -> String {
    let mut s = format!("{CSV_HEADER}\n");
    for r in results {
        for (name, b) in &r.summary.boxes {
            let outliers: Vec<String> = b.outliers.iter().map(|v| sci(*v, 9)).collect();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                r.summary.label,
                name,
                b.count,
                sci(b.whisker_low, 9),
                sci(b.q1, 9),
                sci(b.median, 9),
                sci(b.mean, 9),
                sci(b.q3, 9),
                sci(b.whisker_high, 9),
                outliers.join(";")
            );
        }
    }
    s
}

fn stats_text(results: &[ChipResult], display: ErrorBar) -> String {
    let mut s = String::new();
    for r in results {
        let m = &r.summary.weighted_mean_f_tan_delta0;
        let bar = match display {
            ErrorBar::Spread => m.spread,
            ErrorBar::Uncertainty => m.uncertainty,
        };
        let _ = writeln!(
            s,
            "{}: {} resonators, F tan d0 = {} +/- {} ({}{})",
            r.summary.label,
            r.summary.records.len(),
            sci(m.mean, 3),
            sci(bar, 2),
            match display {
                ErrorBar::Spread => "spread",
                ErrorBar::Uncertainty => "uncertainty",
            },
            if m.weighted { "" } else { ", unweighted" }
        );
        if !r.excluded.is_empty() {
            let _ = writeln!(s, "  excluded (insufficient span): {}", r.excluded.join(", "));
        }
        if let Some(c) = &r.comparison {
            let _ = writeln!(
                s,
                "  simulated {} ratio {:.2} {}",
                sci(c.simulated, 3),
                c.ratio,
                if c.underestimated { "(simulation underestimates)" } else { "" }
            );
        }
        let _ = writeln!(
            s,
            "  {:<14} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10} {:>4}",
            "quantity", "whisk lo", "q1", "median", "mean", "q3", "whisk hi", "out"
        );
        for (name, b) in &r.summary.boxes {
            let _ = writeln!(
                s,
                "  {:<14} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10} {:>4}",
                name,
                sci(b.whisker_low, 3),
                sci(b.q1, 3),
                sci(b.median, 3),
                sci(b.mean, 3),
                sci(b.q3, 3),
                sci(b.whisker_high, 3),
                b.outliers.len()
            );
        }
        s.push('\n');
    }
    s
}

pub fn stats(ctx: &Context, args: &StatsArgs) -> CliResult<()> {
    let level = args.level.resolve(&ctx.file)?;
    let forced: Option<ChipLabel> = args.chip.as_deref().map(str::parse).transpose()?;
    let mut files = args.files.clone();
    files.sort();
    files.dedup();
    let mut groups: BTreeMap<ChipLabel, (Vec<TlsFit>, Vec<String>)> = BTreeMap::new();
    for path in &files {
        for fit in read_fits(path)? {
            let label = match &forced {
                Some(l) => l.clone(),
                None => fit.chip.parse().map_err(|e| {
                    CliError::Input(format!(
                        "{}: resonator `{}` has chip `{}`: {e} (use --chip)",
                        path.display(),
                        fit.resonator,
                        fit.chip
                    ))
                })?,
            };
            let entry = groups.entry(label).or_default();
            if fit.insufficient_span && !args.keep_flagged {
                entry.1.push(fit.resonator.clone());
            } else {
                entry.0.push(fit);
            }
        }
    }
    if groups.is_empty() {
        return Err(CliError::Input("no fit records found".into()));
    }
    let results: Vec<ChipResult> = groups
        .into_par_iter()
        .map(|(label, (fits, mut excluded))| {
            if fits.is_empty() {
                return Err(CliError::Input(format!("chip {label}: every fit is flagged (use --keep-flagged)")));
            }
            excluded.sort();
            let budget = class_budget(&label, args.compare, level)?;
            let summary = summarize_chip(label, &fits)?;
            let comparison = budget
                .as_ref()
                .map(|b| compare_measured_vs_simulated(&summary, Some(b)))
                .transpose()?;
            Ok(ChipResult {
                summary,
                excluded,
                comparison,
            })
        })
        .collect::<CliResult<_>>()?;
    if let Some(path) = &args.csv {
        fs::write(path, boxplot_csv(&results)).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    }
    let text = match ctx.format {
        Format::Json => {
            let config = json!({
                "config_file": ctx.config_path,
                "files": files,
                "chip": args.chip,
                "display": args.display,
                "compare": args.compare,
                "level": (args.compare == CompareWith::Simulate).then_some(level),
                "keep_flagged": args.keep_flagged,
            });
            to_json(&Report::new("stats", config, results))
        }
        Format::Text => stats_text(&results, args.display),
    };
    emit(ctx.output.as_deref(), &text)
}
