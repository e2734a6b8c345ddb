//! Command-line front end: `rwre-lab <experiment> --config <file> [--key value ...]`
//! and `rwre-lab describe --config <file>`.

pub mod config;
pub mod describe;
pub mod runner;

use std::path::PathBuf;

use clap::Parser;
use serde_json::Value;

pub use config::{
    apply_override, CenteringChoice, Experiment, ExperimentConfig, Resolved, Thresholds,
};
pub use describe::describe;
pub use runner::{execute, run, write_outputs, RunOutput};

use crate::error::{Error, Result};

#[derive(Parser, Debug)]
#[command(
    name = "rwre-lab",
    version,
    about = "Random walks in space-time random environments"
)]
struct Args {
    /// Suite to run (simulate, clt, collisions, scaling, corrector, mg-check,
    /// ergodic, density, all) or `describe`.
    command: String,
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `--key value` overrides of configuration keys; dotted keys reach into
    /// nested objects, e.g. `--thresholds.ks_p 0.01`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
    overrides: Vec<String>,
}

/// Splits `--key value` and `--key=value` pairs.
fn parse_overrides(raw: &[String]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut it = raw.iter();
    while let Some(tok) = it.next() {
        let key = tok
            .strip_prefix("--")
            .ok_or_else(|| Error::Config(format!("expected --key, got {tok:?}")))?;
        match key.split_once('=') {
            Some((k, v)) => out.push((k.to_string(), v.to_string())),
            None => {
                let v = it
                    .next()
                    .ok_or_else(|| Error::Config(format!("--{key} needs a value")))?;
                out.push((key.to_string(), v.clone()));
            }
        }
    }
    Ok(out)
}

/// Reads the configuration file and applies the overrides; `experiment`
/// replaces the file's experiment when given.
pub fn load_config(
    path: &std::path::Path,
    overrides: &[(String, String)],
    experiment: Option<Experiment>,
) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut doc: Value = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    if !doc.is_object() {
        return Err(Error::Config("configuration must be a JSON object".into()));
    }
    for (k, v) in overrides {
        apply_override(&mut doc, k, v)?;
    }
    if let Some(e) = experiment {
        doc["experiment"] = Value::String(e.name().into());
    }
    ExperimentConfig::from_value(doc)
}

/// Entry point of the binary; returns the exit status.
pub fn main(args: Vec<String>) -> i32 {
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let (mut config, mut overrides) = (args.config, Vec::new());
    match parse_overrides(&args.overrides) {
        Ok(o) => {
            for (k, v) in o {
                if k == "config" {
                    config = Some(PathBuf::from(v));
                } else {
                    overrides.push((k, v));
                }
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    }
    let Some(config) = config else {
        eprintln!("error: --config <file> is required");
        return 2;
    };
    if args.command == "describe" {
        return match load_config(&config, &overrides, None) {
            Ok(cfg) => {
                print!("{}", describe(&cfg));
                0
            }
            Err(e) => {
                eprintln!("error: {e}");
                2
            }
        };
    }
    let cfg = args
        .command
        .parse::<Experiment>()
        .and_then(|e| load_config(&config, &overrides, Some(e)));
    match cfg {
        Ok(cfg) => execute(&cfg).0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_split() {
        let raw: Vec<String> = [
            "--n",
            "64",
            "--thresholds.ks_p=0.01",
            "--centering",
            "quenched",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        let o = parse_overrides(&raw).unwrap();
        assert_eq!(o[0], ("n".into(), "64".into()));
        assert_eq!(o[1], ("thresholds.ks_p".into(), "0.01".into()));
        assert_eq!(o[2], ("centering".into(), "quenched".into()));
        assert!(parse_overrides(&["--n".to_string()]).is_err());
        assert!(parse_overrides(&["n".to_string()]).is_err());
    }

    #[test]
    fn clap_keeps_unknown_flags_for_overrides() {
        let a =
            Args::try_parse_from(["rwre-lab", "clt", "--config", "c.json", "--n", "-3"]).unwrap();
        assert_eq!(a.overrides, vec!["--n", "-3"]);
    }
}
