use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use cpwloss::fieldsolve::{build_mesh_with, solve_potential, Symmetry};
use cpwloss::geometry::{reference_presets, CpwStack, Deposition, StackConfig, Treatment};
use cpwloss::participation::{
    apply_hf_scaling, budget_from_solution, budget_shares, loss_budget, simulate as simulate_stack, sig3,
    BudgetRegion, ParticipationBudget, SimulatedBudget,
};
use cpwloss::reference_data::{budget_table, budget_tables, measured_means, BudgetTable};
use cpwloss::stats::compare_values;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::{parse_assignments, stack_overrides, Format};
use crate::report::{deviation, emit, sci, to_json, CliError, CliResult, Report};
use crate::{Context, LevelArg};

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Deposition preset: 400C, 450C or 500C [default: 400C].
    #[arg(long)]
    pub deposition: Option<String>,
    /// Treatment preset: ref or hf [default: ref].
    #[arg(long)]
    pub treatment: Option<String>,
    /// TOML file of stack keys overlaid on the preset.
    #[arg(long, value_name = "PATH")]
    pub stack: Option<PathBuf>,
    /// Override one stack key, e.g. --set gap="5 um" (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[command(flatten)]
    pub level: LevelArg,
    /// Solve the full cross-section instead of the mirrored half.
    #[arg(long)]
    pub full_domain: bool,
    /// Write node coordinates and potential to this CSV file.
    #[arg(long, value_name = "PATH")]
    pub dump_fields: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct Share {
    region: BudgetRegion,
    percent: f64,
}

fn shares(budget: &ParticipationBudget) -> CliResult<Vec<Share>> {
    Ok(budget_shares(budget)?
        .into_iter()
        .filter(|(r, _)| *r != BudgetRegion::Air)
        .map(|(region, percent)| Share { region, percent })
        .collect())
}

fn shares_line(shares: &[Share]) -> String {
    let parts: Vec<String> = shares
        .iter()
        .map(|s| format!("{} {:.1}%", s.region.label(), s.percent))
        .collect();
    format!("Loss shares: {}\n", parts.join(", "))
}

fn preset_selectors(ctx: &Context, deposition: &Option<String>, treatment: &Option<String>) -> CliResult<(Deposition, Treatment)> {
    let dep = deposition.as_deref().or(ctx.file.deposition.as_deref()).unwrap_or("400C");
    let treat = treatment.as_deref().or(ctx.file.treatment.as_deref()).unwrap_or("ref");
    Ok((dep.parse()?, treat.parse()?))
}

fn resolve_stack(ctx: &Context, args: &SimulateArgs) -> CliResult<(Deposition, Treatment, CpwStack)> {
    let (dep, treat) = preset_selectors(ctx, &args.deposition, &args.treatment)?;
    let mut stack = reference_presets(dep, treat);
    if let Some(overlay) = &ctx.file.stack {
        stack = overlay.apply_to(&stack)?;
    }
    if let Some(path) = &args.stack {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        stack = StackConfig::from_toml(&text)?.apply_to(&stack)?;
    }
    if !args.set.is_empty() {
        stack = stack_overrides(&args.set)?.apply_to(&stack)?;
    }
    stack.validate()?;
    Ok((dep, treat, stack))
}

#[derive(Debug, Serialize)]
struct SimulateResult {
    simulation: SimulatedBudget,
    shares: Vec<Share>,
}

pub fn simulate(ctx: &Context, args: &SimulateArgs) -> CliResult<()> {
    let (dep, treat, stack) = resolve_stack(ctx, args)?;
    let level = args.level.resolve(&ctx.file)?;
    let symmetry = if args.full_domain { Symmetry::Full } else { Symmetry::Half };
    let start = Instant::now();
    let mesh = build_mesh_with(&stack, level, symmetry)?;
    let solution = solve_potential(&mesh)?;
    let simulation = budget_from_solution(&stack, &solution)?;
    ctx.log(1, || {
        format!(
            "solved {} cells in {} CG iterations ({:.2} s)",
            simulation.cells,
            simulation.iterations,
            start.elapsed().as_secs_f64()
        )
    });
    if let Some(path) = &args.dump_fields {
        let file = File::create(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        solution.write_csv(BufWriter::new(file))?;
        if ctx.verbose >= 1 {
            eprint!("{}", solution.summary());
        }
    }
    let result = SimulateResult {
        shares: shares(&simulation.budget)?,
        simulation,
    };
    let title = format!("{} {}", dep.label(), treat.label());
    let text = match ctx.format {
        Format::Json => {
            let config = json!({
                "config_file": ctx.config_path,
                "deposition": dep,
                "treatment": treat,
                "level": level,
                "full_domain": args.full_domain,
                "stack": stack,
            });
            let mut report = Report::new("simulate", config, result);
            report.notes.push(format!("preset {title}; metal-air scale {}", sci(stack.ma_scale, 4)));
            to_json(&report)
        }
        Format::Text => {
            let sim = &result.simulation;
            let mut s = format!("{title} (level {level})\n");
            s.push_str(&sim.budget.to_table("Region"));
            s.push_str(&shares_line(&result.shares));
            let _ = writeln!(
                s,
                "Metal-air top/side: {} / {}",
                sig3(sim.p_metal_air_top),
                sig3(sim.p_metal_air_side)
            );
            let _ = writeln!(s, "Capacitance: {} F/m", sci(sim.capacitance, 6));
            let _ = writeln!(
                s,
                "Mesh: {} cells, {} iterations, residual {}",
                sim.cells,
                sim.iterations,
                sci(sim.relative_residual, 3)
            );
            s
        }
    };
    emit(ctx.output.as_deref(), &text)
}

#[derive(Debug, Args)]
pub struct BudgetArgs {
    /// Participation ratios, e.g. substrate=0.911,air=0.088,ma=1.87e-5,sa=3.7e-4
    #[arg(long, value_name = "LIST", required_unless_present = "table")]
    pub participation: Option<String>,
    /// Loss tangents for the same regions; air may be omitted.
    #[arg(long, value_name = "LIST", requires = "participation")]
    pub tan: Option<String>,
    /// Use the tabulated inputs of a preset such as 400C-ref, or `all` (repeatable).
    #[arg(long, value_name = "PRESET", conflicts_with_all = ["participation", "tan"])]
    pub table: Vec<String>,
    /// Scale metal-air participation by this factor and drop substrate-air.
    #[arg(long, value_name = "FACTOR")]
    pub hf_scale: Option<f64>,
    /// Keep substrate-air when applying --hf-scale.
    #[arg(long, requires = "hf_scale")]
    pub keep_sa: bool,
}

#[derive(Debug, Serialize)]
struct CellCheck {
    region: BudgetRegion,
    printed: f64,
    computed: f64,
    relative_deviation: f64,
}

#[derive(Debug, Serialize)]
struct BudgetResult {
    label: String,
    budget: ParticipationBudget,
    shares: Vec<Share>,
    #[serde(skip_serializing_if = "Option::is_none")]
    printed_total: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    cells: Vec<CellCheck>,
}

fn relative(value: f64, reference: f64) -> f64 {
    if reference == 0.0 {
        if value == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        value / reference - 1.0
    }
}

fn region_list(text: &str) -> CliResult<Vec<(BudgetRegion, f64)>> {
    parse_assignments(text)?
        .into_iter()
        .map(|(k, v)| {
            BudgetRegion::from_key(&k)
                .map(|r| (r, v))
                .ok_or_else(|| CliError::Input(format!("unknown region `{k}`")))
        })
        .collect()
}

fn selected_tables(names: &[String]) -> CliResult<Vec<BudgetTable>> {
    let mut out = Vec::new();
    for name in names {
        if name.eq_ignore_ascii_case("all") {
            out.extend(budget_tables());
            continue;
        }
        let (dep, treat) = name
            .split_once(['-', '/', '_'])
            .ok_or_else(|| CliError::Input(format!("table `{name}` is not <deposition>-<treatment>")))?;
        out.push(budget_table(dep.parse()?, treat.parse()?));
    }
    Ok(out)
}

pub fn budget(ctx: &Context, args: &BudgetArgs) -> CliResult<()> {
    let mut results = Vec::new();
    let scale = |b: ParticipationBudget| -> CliResult<ParticipationBudget> {
        match args.hf_scale {
            Some(f) => Ok(apply_hf_scaling(&b, f, args.keep_sa)?),
            None => Ok(b),
        }
    };
    if args.table.is_empty() {
        let participations = region_list(args.participation.as_deref().unwrap_or_default())?;
        let tangents = region_list(args.tan.as_deref().unwrap_or_default())?;
        let budget = scale(loss_budget(&participations, &tangents)?)?;
        results.push(BudgetResult {
            label: "budget".into(),
            shares: shares(&budget)?,
            budget,
            printed_total: None,
            cells: Vec::new(),
        });
    } else {
        for table in selected_tables(&args.table)? {
            let budget = scale(loss_budget(&table.participations(), &table.loss_tangents())?)?;
            let cells = if args.hf_scale.is_none() {
                table
                    .rows
                    .iter()
                    .map(|row| {
                        let computed = budget.contribution(row.region);
                        CellCheck {
                            region: row.region,
                            printed: row.contribution,
                            computed,
                            relative_deviation: relative(computed, row.contribution),
                        }
                    })
                    .collect()
            } else {
                Vec::new()
            };
            results.push(BudgetResult {
                label: format!("{} {}", table.deposition.label(), table.treatment.label()),
                shares: shares(&budget)?,
                printed_total: args.hf_scale.is_none().then_some(table.total),
                budget,
                cells,
            });
        }
    }
    let text = match ctx.format {
        Format::Json => {
            let config = json!({
                "config_file": ctx.config_path,
                "participation": args.participation,
                "tan": args.tan,
                "table": args.table,
                "hf_scale": args.hf_scale,
                "keep_sa": args.keep_sa,
            });
            to_json(&Report::new("budget", config, results))
        }
        Format::Text => {
            let mut s = String::new();
            for r in &results {
                s.push_str(&r.budget.to_table(&r.label));
                if let Some(total) = r.printed_total {
                    for c in &r.cells {
                        let _ = writeln!(
                            s,
                            "  {:<18} printed {:>9}  computed {:>9}  {}",
                            c.region.label(),
                            sig3(c.printed),
                            sig3(c.computed),
                            deviation(c.computed, c.printed)
                        );
                    }
                    let _ = writeln!(
                        s,
                        "  {:<18} printed {:>9}  computed {:>9}  {}",
                        "Total loss",
                        sig3(total),
                        sig3(r.budget.total_f_tan_delta),
                        deviation(r.budget.total_f_tan_delta, total)
                    );
                }
                s.push_str(&shares_line(&r.shares));
                s.push('\n');
            }
            s
        }
    };
    emit(ctx.output.as_deref(), &text)
}

#[derive(Debug, Args)]
pub struct TablesArgs {
    #[command(flatten)]
    pub level: LevelArg,
}

#[derive(Debug, Serialize)]
struct RowComparison {
    region: BudgetRegion,
    participation_printed: f64,
    participation_computed: f64,
    participation_deviation: f64,
    loss_tangent: f64,
    contribution_printed: f64,
    contribution_computed: f64,
    contribution_deviation: f64,
}

#[derive(Debug, Serialize)]
struct PresetComparison {
    deposition: Deposition,
    treatment: Treatment,
    rows: Vec<RowComparison>,
    total_printed: f64,
    total_computed: f64,
    total_deviation: f64,
    shares: Vec<Share>,
    simulation: SimulatedBudget,
}

#[derive(Debug, Serialize)]
struct MeasuredComparison {
    chip: String,
    measured: f64,
    measured_spread: f64,
    simulated_printed: f64,
    simulated_computed: f64,
    ratio: f64,
    underestimated: bool,
}

#[derive(Debug, Serialize)]
struct TablesResult {
    presets: Vec<PresetComparison>,
    measured_vs_simulated: Vec<MeasuredComparison>,
}

fn compare_preset(table: &BudgetTable, sim: SimulatedBudget) -> CliResult<PresetComparison> {
    let rows = table
        .rows
        .iter()
        .map(|row| {
            let p = sim.budget.participation(row.region);
            let c = sim.budget.contribution(row.region);
            RowComparison {
                region: row.region,
                participation_printed: row.participation,
                participation_computed: p,
                participation_deviation: relative(p, row.participation),
                loss_tangent: row.loss_tangent,
                contribution_printed: row.contribution,
                contribution_computed: c,
                contribution_deviation: relative(c, row.contribution),
            }
        })
        .collect();
    Ok(PresetComparison {
        deposition: table.deposition,
        treatment: table.treatment,
        rows,
        total_printed: table.total,
        total_computed: sim.budget.total_f_tan_delta,
        total_deviation: relative(sim.budget.total_f_tan_delta, table.total),
        shares: shares(&sim.budget)?,
        simulation: sim,
    })
}

fn tables_text(result: &TablesResult, level: u32) -> String {
    let mut s = String::new();
    for p in &result.presets {
        let _ = writeln!(s, "{} {} (level {level})", p.deposition.label(), p.treatment.label());
        let _ = writeln!(
            s,
            "{:<18} {:>10} {:>10} {:>7} {:>9} {:>10} {:>10} {:>7}",
            "Region", "F_i table", "F_i calc", "dev", "tan d", "Ftd table", "Ftd calc", "dev"
        );
        for r in &p.rows {
            let _ = writeln!(
                s,
                "{:<18} {:>10} {:>10} {:>7} {:>9} {:>10} {:>10} {:>7}",
                r.region.label(),
                sig3(r.participation_printed),
                sig3(r.participation_computed),
                deviation(r.participation_computed, r.participation_printed),
                sig3(r.loss_tangent),
                sig3(r.contribution_printed),
                sig3(r.contribution_computed),
                deviation(r.contribution_computed, r.contribution_printed)
            );
        }
        let _ = writeln!(
            s,
            "{:<18} {:>10} {:>10} {:>7} {:>9} {:>10} {:>10} {:>7}",
            "Total loss",
            "",
            "",
            "",
            "",
            sig3(p.total_printed),
            sig3(p.total_computed),
            deviation(p.total_computed, p.total_printed)
        );
        s.push_str(&shares_line(&p.shares));
        s.push('\n');
    }
    let _ = writeln!(s, "Measured vs simulated F tan d0");
    let _ = writeln!(
        s,
        "{:<12} {:>10} {:>10} {:>10} {:>10} {:>7}  underestimated",
        "Chip", "measured", "spread", "sim table", "sim calc", "ratio"
    );
    for m in &result.measured_vs_simulated {
        let _ = writeln!(
            s,
            "{:<12} {:>10} {:>10} {:>10} {:>10} {:>7.2}  {}",
            m.chip,
            sig3(m.measured),
            sig3(m.measured_spread),
            sig3(m.simulated_printed),
            sig3(m.simulated_computed),
            m.ratio,
            if m.underestimated { "yes" } else { "no" }
        );
    }
    s
}

pub fn reproduce_tables(ctx: &Context, args: &TablesArgs) -> CliResult<()> {
    let level = args.level.resolve(&ctx.file)?;
    let tables = budget_tables();
    let start = Instant::now();
    let presets: Vec<PresetComparison> = tables
        .par_iter()
        .map(|t| {
            let stack = reference_presets(t.deposition, t.treatment);
            let sim = simulate_stack(&stack, level)?;
            ctx.log(1, || format!("{} {} done", t.deposition.label(), t.treatment.label()));
            compare_preset(t, sim)
        })
        .collect::<CliResult<_>>()?;
    ctx.log(1, || format!("six presets in {:.2} s", start.elapsed().as_secs_f64()));
    let measured_vs_simulated = measured_means()
        .into_iter()
        .map(|m| {
            let computed = presets
                .iter()
                .find(|p| p.deposition == m.deposition && p.treatment == m.treatment)
                .map(|p| p.total_computed)
                .ok_or_else(|| CliError::Input("missing preset".into()))?;
            let c = compare_values(m.mean, computed)?;
            Ok(MeasuredComparison {
                chip: format!("{}-{}-{}", m.deposition.label(), m.treatment.key(), m.holder),
                measured: m.mean,
                measured_spread: m.spread,
                simulated_printed: m.simulated,
                simulated_computed: computed,
                ratio: c.ratio,
                underestimated: c.underestimated,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let result = TablesResult {
        presets,
        measured_vs_simulated,
    };
    let text = match ctx.format {
        Format::Json => {
            let config = json!({ "config_file": ctx.config_path, "level": level });
            let mut report = Report::new("reproduce-tables", config, &result);
            for dep in Deposition::ALL {
                report.notes.push(format!(
                    "{} HF preset: metal-air scale {}, substrate-air removed",
                    dep.label(),
                    sci(cpwloss::geometry::hf_ma_scale(dep), 4)
                ));
            }
            to_json(&report)
        }
        Format::Text => tables_text(&result, level),
    };
    emit(ctx.output.as_deref(), &text)
}
