//! Command-line front end.
//!
//! ```text
//! fruitfield <synth|train|export|count|eval|e2e|sweep|validate> [-c CONFIG] [-q] [--section.field=value ...]
//! ```
//!
//! Exit codes: 0 success, 1 runtime failure, 2 invalid configuration or
//! usage, 3 missing upstream artifact. Failures print one JSON object on
//! stderr's last line.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fruitfield::config::PipelineConfig;
use fruitfield::pipeline::{Pipeline, Stage};
use fruitfield::Error;

#[derive(Parser)]
#[command(name = "fruitfield", version, about = "Count fruit in synthetic orchards with semantic voxel radiance fields")]
#[command(after_help = "Any config field can be overridden with --<dotted.path>=<json or string>, e.g. --count.dbscan.eps=0.02.\nThe FRUITFIELD_OUTPUT_DIR environment variable overrides output_dir.")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// JSON configuration file; defaults apply to absent fields.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Suppress progress output.
    #[arg(short, long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the scene, render frames and masks, write ground truth.
    Synth(Common),
    /// Fit the field to the frames.
    Train(Common),
    /// Sample the fruit point cloud from the field.
    Export(Common),
    /// Count fruits in the point cloud.
    Count(Common),
    /// Score the count against ground truth.
    Eval(Common),
    /// Run every stage in order.
    E2e(Common),
    /// Count against number of frames and resolution.
    Sweep(Common),
    /// Check the configuration and list every problem.
    Validate(Common),
}

/// Splits `--a.b=c` style overrides from the arguments clap understands.
fn split_overrides(args: impl Iterator<Item = String>) -> (Vec<String>, Vec<String>) {
    let mut plain = Vec::new();
    let mut overrides = Vec::new();
    for a in args {
        match a.strip_prefix("--").and_then(|s| s.split_once('=')) {
            Some((key, _)) if !matches!(key, "config" | "quiet" | "help" | "version") => {
                overrides.push(a[2..].to_string())
            }
            _ => plain.push(a),
        }
    }
    (plain, overrides)
}

fn fail(e: &Error) -> ExitCode {
    let mut obj = serde_json::json!({
        "error": {
            "kind": e.kind(),
            "exit_code": e.exit_code(),
            "message": e.to_string(),
        }
    });
    match e {
        Error::InvalidConfig(d) => obj["error"]["diagnostics"] = serde_json::json!(d),
        Error::MissingArtifact { path, stage } => {
            obj["error"]["path"] = serde_json::json!(path);
            obj["error"]["run_first"] = serde_json::json!(stage);
        }
        _ => {}
    }
    eprintln!("{obj}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let (plain, overrides) = split_overrides(std::env::args());
    let cli = match Cli::try_parse_from(plain) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (stage, common) = match cli.command {
        Command::Synth(c) => (Some(Stage::Synth), c),
        Command::Train(c) => (Some(Stage::Train), c),
        Command::Export(c) => (Some(Stage::Export), c),
        Command::Count(c) => (Some(Stage::Count), c),
        Command::Eval(c) => (Some(Stage::Eval), c),
        Command::E2e(c) => (Some(Stage::E2e), c),
        Command::Sweep(c) => (Some(Stage::Sweep), c),
        Command::Validate(c) => (None, c),
    };
    let config = match PipelineConfig::load(common.config.as_deref(), &overrides) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    let Some(stage) = stage else {
        let d = config.diagnostics();
        if d.is_empty() {
            println!("ok");
            return ExitCode::SUCCESS;
        }
        for line in &d {
            println!("{line}");
        }
        return fail(&Error::InvalidConfig(d));
    };
    let result = Pipeline::new(config).and_then(|p| p.quiet(common.quiet).run(stage));
    match result {
        Ok(manifest) => {
            println!("{}", serde_json::to_string_pretty(&manifest).expect("manifest serializes"));
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}
