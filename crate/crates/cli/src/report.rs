use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};
use thiserror::Error;

/// Failure classes mapped onto process exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }
}

impl From<cpwloss::Error> for CliError {
    fn from(e: cpwloss::Error) -> Self {
        use cpwloss::Error::*;
        match e {
            NoConvergence { .. } | ZeroTotal | NoDip | FitDiverged(_) | IllConditioned(_) => {
                CliError::Numerical(e.to_string())
            }
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Fixed significant digits for every float in JSON output.
pub const JSON_DIGITS: usize = 9;

/// Pretty JSON with floats in scientific notation.
struct ScientificFormatter(PrettyFormatter<'static>);

macro_rules! delegate {
    ($($name:ident),*) => {
        $(fn $name<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
            self.0.$name(writer)
        })*
    };
}

impl Formatter for ScientificFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.prec$e}", prec = JSON_DIGITS - 1)
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }

    delegate!(begin_array, end_array, begin_object, end_object, end_array_value, end_object_value);

    fn begin_array_value<W: ?Sized + Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(writer, first)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(writer, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_object_value(writer)
    }
}

pub fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, ScientificFormatter(PrettyFormatter::new()));
    value.serialize(&mut ser).expect("report values serialize");
    buf.push(b'\n');
    String::from_utf8(buf).expect("JSON is UTF-8")
}

/// Top-level structured output of every subcommand.
#[derive(Debug, Serialize)]
pub struct Report<T: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config: serde_json::Value,
    pub results: T,
    pub notes: Vec<String>,
}

impl<T: Serialize> Report<T> {
    pub fn new(command: &'static str, config: serde_json::Value, results: T) -> Self {
        Self {
            tool: "cpwloss",
            version: env!("CARGO_PKG_VERSION"),
            command,
            config,
            results,
            notes: Vec::new(),
        }
    }
}

/// Write `text` to `path`, or to stdout when no path is given.
pub fn emit(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| CliError::Input(format!("{}: {e}", p.display()))),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

/// Scientific notation with `digits` significant figures.
pub fn sci(v: f64, digits: usize) -> String {
    format!("{v:.prec$e}", prec = digits.saturating_sub(1))
}

/// Signed percentage deviation of `value` from `reference`.
pub fn deviation(value: f64, reference: f64) -> String {
    if reference == 0.0 {
        if value == 0.0 {
            "0.0%".into()
        } else {
            "n/a".into()
        }
    } else {
        format!("{:+.1}%", 100.0 * (value / reference - 1.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_are_scientific() {
        let v = serde_json::json!({"a": 0.5, "b": [1e-7, 3], "c": "x"});
        let text = to_json(&v);
        assert!(text.contains("\"a\": 5.00000000e-1"), "{text}");
        assert!(text.contains("1.00000000e-7"));
        assert!(text.contains("3"));
        let back: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(back["a"], 0.5);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::from(cpwloss::Error::NoDip).exit_code(), 2);
        assert_eq!(CliError::from(cpwloss::Error::Empty).exit_code(), 1);
    }
}
