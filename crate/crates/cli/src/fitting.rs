use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args};
use cpwloss::s21fit::{fit_s21 as fit_trace, photon_number, synth_trace, ResonatorFit, S21Trace};
use cpwloss::tlsfit::{fit_tls as fit_sweep, q_low_high, synth_sweep, PhotonSweep, QLowHigh, TlsFit, TlsParams};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{parse_assignments, Format};
use crate::report::{emit, sci, to_json, CliError, CliResult, Report};
use crate::Context;

fn open(path: &Path) -> CliResult<BufReader<File>> {
    Ok(File::open(path).map(BufReader::new)?)
}

/// Run `job` on every path in parallel; results come back sorted by path.
fn batch<T: Send>(
    paths: &[PathBuf],
    job: impl Fn(&Path) -> CliResult<T> + Sync,
) -> Vec<(PathBuf, CliResult<T>)> {
    let mut sorted = paths.to_vec();
    sorted.sort();
    sorted.dedup();
    sorted.into_par_iter().map(|p| {
        let r = job(&p);
        (p, r)
    }).collect()
}

/// Successes go into the report; the first failure (in path order) decides the
/// exit status after the report is written.
fn split_failures<T>(results: Vec<(PathBuf, CliResult<T>)>) -> (Vec<(PathBuf, T)>, Option<CliError>) {
    let mut ok = Vec::new();
    let mut first: Option<CliError> = None;
    for (path, r) in results {
        match r {
            Ok(v) => ok.push((path, v)),
            Err(e) => {
                eprintln!("{}: {e}", path.display());
                first.get_or_insert(match e {
                    CliError::Input(m) => CliError::Input(format!("{}: {m}", path.display())),
                    CliError::Numerical(m) => CliError::Numerical(format!("{}: {m}", path.display())),
                });
            }
        }
    }
    (ok, first)
}

fn finish(ctx: &Context, text: &str, failure: Option<CliError>) -> CliResult<()> {
    emit(ctx.output.as_deref(), text)?;
    failure.map_or(Ok(()), Err)
}

#[derive(Debug, Args)]
pub struct FitS21Args {
    /// Trace CSV files with `freq_hz,re,im` or `freq_hz,mag_db,phase_rad` columns.
    #[arg(required = true, value_name = "CSV")]
    pub files: Vec<PathBuf>,
    /// Require the `freq_hz,mag_db,phase_rad` column layout.
    #[arg(long)]
    pub polar: bool,
    /// Power at the device in dBm, overriding `# power_dbm=` headers; enables photon numbers.
    #[arg(long, value_name = "DBM", allow_hyphen_values = true)]
    pub power_dbm: Option<f64>,
}

#[derive(Debug, Serialize)]
struct S21Record {
    path: PathBuf,
    #[serde(flatten)]
    fit: ResonatorFit,
    power_dbm: Option<f64>,
    n_photon: Option<f64>,
}

fn first_data_line(path: &Path) -> CliResult<String> {
    for line in open(path)?.lines() {
        let line = line?;
        let t = line.trim();
        if !t.is_empty() && !t.starts_with('#') {
            return Ok(t.to_string());
        }
    }
    Ok(String::new())
}

fn fit_s21_file(path: &Path, args: &FitS21Args) -> CliResult<(ResonatorFit, Option<f64>, Option<f64>)> {
    if args.polar && !first_data_line(path)?.replace(' ', "").eq("freq_hz,mag_db,phase_rad") {
        return Err(CliError::Input("expected `freq_hz,mag_db,phase_rad` header".into()));
    }
    let trace = S21Trace::read_csv(open(path)?)?;
    let fit = fit_trace(&trace)?;
    let power = args.power_dbm.or(trace.power_dbm);
    let n = power.map(|p| photon_number(p, &fit)).transpose()?;
    Ok((fit, power, n))
}

pub fn fit_s21(ctx: &Context, args: &FitS21Args) -> CliResult<()> {
    let (ok, failure) = split_failures(batch(&args.files, |p| fit_s21_file(p, args)));
    let records: Vec<S21Record> = ok
        .into_iter()
        .map(|(path, (fit, power_dbm, n_photon))| S21Record {
            path,
            fit,
            power_dbm,
            n_photon,
        })
        .collect();
    let text = match ctx.format {
        Format::Json => {
            let config = json!({
                "config_file": ctx.config_path,
                "files": args.files,
                "polar": args.polar,
                "power_dbm": args.power_dbm,
            });
            to_json(&Report::new("fit-s21", config, records))
        }
        Format::Text => {
            let mut s = format!(
                "{:<28} {:>16} {:>11} {:>11} {:>11} {:>9} {:>10}\n",
                "file", "f_r [Hz]", "Q_l", "Q_i", "Q_c", "phi", "<n>"
            );
            for r in &records {
                let _ = writeln!(
                    s,
                    "{:<28} {:>16} {:>11} {:>11} {:>11} {:>9} {:>10}",
                    r.path.display(),
                    sci(r.fit.f_r, 10),
                    sci(r.fit.q_l, 4),
                    sci(r.fit.q_i, 4),
                    sci(r.fit.q_c, 4),
                    sci(r.fit.phi, 3),
                    r.n_photon.map_or("-".into(), |n| sci(n, 3))
                );
            }
            s
        }
    };
    finish(ctx, &text, failure)
}

#[derive(Debug, Args)]
pub struct FitTlsArgs {
    /// Sweep CSV files with `n_photon,q_i,q_i_sigma` columns and `# f_r_hz=`, `# temp_k=` headers.
    #[arg(required = true, value_name = "CSV")]
    pub files: Vec<PathBuf>,
}

/// One fitted sweep as written by `fit-tls` and read back by `stats`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TlsRecord {
    #[serde(default)]
    pub path: PathBuf,
    #[serde(flatten)]
    pub fit: TlsFit,
    #[serde(skip_deserializing)]
    pub quality: Option<QLowHigh>,
}

fn fit_tls_file(path: &Path) -> CliResult<TlsFit> {
    let mut sweep = PhotonSweep::read_csv(open(path)?)?;
    if sweep.resonator.is_empty() {
        sweep.resonator = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    }
    Ok(fit_sweep(&sweep)?)
}

pub fn fit_tls(ctx: &Context, args: &FitTlsArgs) -> CliResult<()> {
    let (ok, failure) = split_failures(batch(&args.files, fit_tls_file));
    let records: Vec<TlsRecord> = ok
        .into_iter()
        .map(|(path, fit)| TlsRecord {
            path,
            quality: Some(q_low_high(&fit)),
            fit,
        })
        .collect();
    let text = match ctx.format {
        Format::Json => {
            let config = json!({ "config_file": ctx.config_path, "files": args.files });
            to_json(&Report::new("fit-tls", config, records))
        }
        Format::Text => {
            let mut s = format!(
                "{:<28} {:>10} {:>10} {:>8} {:>10} {:>10} {:>10} {:>7}  flags\n",
                "file", "F tan d0", "n_c", "b", "d_other", "Q_i low", "Q_i high", "chi2"
            );
            for r in &records {
                let f = &r.fit;
                let q = r.quality.expect("set when fitting");
                let mut flags = Vec::new();
                if f.insufficient_span {
                    flags.push("insufficient_span".to_string());
                }
                if !f.at_bound.is_empty() {
                    flags.push(format!("at_bound={}", f.at_bound.join("+")));
                }
                if !f.converged {
                    flags.push("not_converged".into());
                }
                let _ = writeln!(
                    s,
                    "{:<28} {:>10} {:>10} {:>8} {:>10} {:>10} {:>10} {:>7}  {}",
                    r.path.display(),
                    sci(f.f_tan_delta0, 3),
                    sci(f.n_c, 3),
                    sci(f.b, 3),
                    sci(f.delta_other, 3),
                    sci(q.q_low, 3),
                    sci(q.q_high, 3),
                    sci(f.reduced_chi2, 2),
                    flags.join(" ")
                );
            }
            s
        }
    };
    finish(ctx, &text, failure)
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("model").required(true).args(["tls", "s21"])))]
pub struct SynthArgs {
    /// Photon-number sweep from F=..,nc=..,b=..,other=..
    #[arg(long, value_name = "LIST")]
    pub tls: Option<String>,
    /// Notch trace from fr=..,ql=..(or qi=..),qc=..,phi=.. and optional a=..,alpha=..,tau=..
    #[arg(long, value_name = "LIST")]
    pub s21: Option<String>,
    /// Random seed [default: 0, or `seed` from the config file].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of points [default: 21 for sweeps, 2001 for traces].
    #[arg(long)]
    pub points: Option<usize>,
    /// Relative Gaussian noise on Q_i for sweeps.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Lowest photon number of a sweep.
    #[arg(long, default_value_t = 0.1)]
    pub n_min: f64,
    /// Highest photon number of a sweep.
    #[arg(long, default_value_t = 1e6)]
    pub n_max: f64,
    /// Resonance frequency of a sweep in Hz.
    #[arg(long, default_value_t = 6e9)]
    pub f_r: f64,
    /// Temperature of a sweep in K.
    #[arg(long, default_value_t = 0.01)]
    pub temp_k: f64,
    /// Chip label written into the sweep header.
    #[arg(long)]
    pub chip: Option<String>,
    /// Resonator name written into the sweep header.
    #[arg(long)]
    pub resonator: Option<String>,
    /// Signal-to-noise ratio of a trace in dB; noiseless if absent.
    #[arg(long)]
    pub snr: Option<f64>,
    /// Half-span of a trace in loaded linewidths f_r/Q_l.
    #[arg(long, default_value_t = 6.0)]
    pub linewidths: f64,
    /// Power in dBm written into the trace header.
    #[arg(long, value_name = "DBM", allow_hyphen_values = true)]
    pub power_dbm: Option<f64>,
}

fn lookup(values: &[(String, f64)], keys: &[&str]) -> Option<f64> {
    values
        .iter()
        .rev()
        .find(|(k, _)| keys.contains(&k.as_str()))
        .map(|(_, v)| *v)
}

fn check_keys(values: &[(String, f64)], allowed: &[&str]) -> CliResult<()> {
    match values.iter().find(|(k, _)| !allowed.contains(&k.as_str())) {
        Some((k, _)) => Err(CliError::Input(format!("unknown parameter `{k}`; expected one of {}", allowed.join(", ")))),
        None => Ok(()),
    }
}

fn tls_params(text: &str) -> CliResult<TlsParams> {
    let v = parse_assignments(text)?;
    check_keys(&v, &["f", "f_tan_delta0", "nc", "n_c", "b", "other", "delta_other"])?;
    let need = |keys: &[&str]| lookup(&v, keys).ok_or_else(|| CliError::Input(format!("--tls needs {}=", keys[0])));
    Ok(TlsParams {
        f_tan_delta0: need(&["f", "f_tan_delta0"])?,
        n_c: need(&["nc", "n_c"])?,
        b: need(&["b"])?,
        delta_other: lookup(&v, &["other", "delta_other"]).unwrap_or(0.0),
    })
}

fn s21_params(text: &str) -> CliResult<ResonatorFit> {
    let v = parse_assignments(text)?;
    check_keys(&v, &["fr", "f_r", "ql", "q_l", "qi", "q_i", "qc", "q_c", "phi", "a", "alpha", "tau"])?;
    let f_r = lookup(&v, &["fr", "f_r"]).ok_or_else(|| CliError::Input("--s21 needs fr=".into()))?;
    let q_c = lookup(&v, &["qc", "q_c"]).ok_or_else(|| CliError::Input("--s21 needs qc=".into()))?;
    let phi = lookup(&v, &["phi"]).unwrap_or(0.0);
    let q_l = match (lookup(&v, &["ql", "q_l"]), lookup(&v, &["qi", "q_i"])) {
        (Some(ql), None) => ql,
        (None, Some(qi)) => 1.0 / (1.0 / qi + phi.cos() / q_c),
        _ => return Err(CliError::Input("--s21 needs exactly one of ql= or qi=".into())),
    };
    if !(f_r > 0.0 && q_l > 0.0 && q_c > 0.0 && phi.abs() < std::f64::consts::FRAC_PI_2) {
        return Err(CliError::Input("--s21 needs positive fr, ql, qc and |phi| < pi/2".into()));
    }
    Ok(ResonatorFit::ideal(f_r, q_l, q_c, phi).with_environment(
        lookup(&v, &["a"]).unwrap_or(1.0),
        lookup(&v, &["alpha"]).unwrap_or(0.0),
        lookup(&v, &["tau"]).unwrap_or(0.0),
    ))
}

pub fn synth(ctx: &Context, args: &SynthArgs) -> CliResult<()> {
    let seed = args.seed.or(ctx.file.seed).unwrap_or(0);
    let mut buf = Vec::new();
    if let Some(text) = &args.tls {
        let params = tls_params(text)?;
        if !(args.n_min > 0.0 && args.n_max > args.n_min) {
            return Err(CliError::Input("need 0 < --n-min < --n-max".into()));
        }
        if args.noise.is_nan() || args.noise < 0.0 {
            return Err(CliError::Input("--noise must be >= 0".into()));
        }
        let mut sweep = synth_sweep(
            &params,
            args.n_min,
            args.n_max,
            args.points.unwrap_or(21),
            args.f_r,
            args.temp_k,
            args.noise,
            seed,
        );
        sweep.chip = args.chip.clone().unwrap_or_default();
        sweep.resonator = args.resonator.clone().unwrap_or_default();
        sweep.validate()?;
        sweep.write_csv(&mut buf)?;
    } else if let Some(text) = &args.s21 {
        let params = s21_params(text)?;
        let half = args.linewidths * params.f_r / params.q_l;
        let mut trace = synth_trace(
            &params,
            params.f_r - half,
            params.f_r + half,
            args.points.unwrap_or(2001),
            args.snr,
            seed,
        );
        trace.power_dbm = args.power_dbm;
        trace.validate()?;
        trace.write_csv(&mut buf)?;
    }
    ctx.log(1, || format!("synth seed {seed}"));
    emit(ctx.output.as_deref(), &String::from_utf8(buf).expect("CSV is UTF-8"))
}
