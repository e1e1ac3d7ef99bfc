//! `stablepp` command-line tool.
//!
//! Exit codes: 0 success or pass, 1 usage, configuration or IO error,
//! 2 statistical rejection or acceptance starvation.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{error::ErrorKind, Args, Parser, Subcommand};

use manifest::{manifest_path, sha256_hex, Manifest, OutputEntry};

#[derive(Debug, Parser)]
#[command(name = "stablepp", version, about = "Simulate and test strictly stable point processes")]
struct Cli {
    /// Worker threads; 0 picks the number of cores. Results do not depend on it.
    #[arg(long, global = true, env = "STABLEPP_THREADS", default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    reps: Option<u64>,
}

#[derive(Debug, Args, Clone)]
pub struct TestArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 0.01)]
    level: f64,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write sample realizations as JSON lines.
    Sample(Common),
    /// Estimate scaled Laplace functionals over a battery and y grid (CSV).
    Estimate(Common),
    /// Run a statistical characterization test (JSON report).
    #[command(subcommand)]
    Test(TestKind),
    /// Extract the decoration law by conditioning on a large maximum.
    Extract(Common),
    /// Map sample lines between the scale and shift worlds.
    Transform(Common),
}

#[derive(Debug, Subcommand)]
pub enum TestKind {
    /// Scaled-superposition identity on a battery plus the maxmod law.
    Stability(TestArgs),
    /// Maxmod sample against its closed-form law.
    Maxlaw(TestArgs),
    /// Template fit of the scaled Laplace functional in y.
    Support(TestArgs),
    /// Hill estimate of the maxmod tail index.
    Tail(TestArgs),
}

/// Result of a command before anything touches the filesystem.
pub struct Outcome {
    pub outputs: Vec<(PathBuf, Vec<u8>)>,
    pub passed: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start thread pool: {e}");
            return ExitCode::from(1);
        }
    };
    ExitCode::from(pool.install(|| run(cli.command)) as u8)
}

fn run(command: Command) -> i32 {
    let (name, common, level) = match &command {
        Command::Sample(c) => ("sample", c, None),
        Command::Estimate(c) => ("estimate", c, None),
        Command::Extract(c) => ("extract", c, None),
        Command::Transform(c) => ("transform", c, None),
        Command::Test(kind) => {
            let (n, a) = match kind {
                TestKind::Stability(a) => ("test stability", a),
                TestKind::Maxlaw(a) => ("test maxlaw", a),
                TestKind::Support(a) => ("test support", a),
                TestKind::Tail(a) => ("test tail", a),
            };
            (n, &a.common, Some(a.level))
        }
    };
    let mut manifest = Manifest::new(name, common.seed);
    manifest.config_file = Some(common.config.display().to_string());
    manifest.level = level;
    let result = config::load(&common.config).and_then(|loaded| {
        manifest.config_sha256 = Some(sha256_hex(&loaded.raw));
        manifest.config = serde_json::from_slice(&loaded.raw).ok();
        manifest.spec_sha256 = Some(sha256_hex(&serde_json::to_vec(&loaded.config.spec)?));
        match &command {
            Command::Sample(c) => commands::sample(c, &loaded, &mut manifest),
            Command::Estimate(c) => commands::estimate(c, &loaded, &mut manifest),
            Command::Extract(c) => commands::extract(c, &loaded, &mut manifest),
            Command::Transform(c) => commands::transform(c, &loaded, &mut manifest),
            Command::Test(kind) => commands::test(kind, &loaded, &mut manifest),
        }
    });
    finish(common, manifest, result)
}

fn finish(common: &Common, mut manifest: Manifest, result: anyhow::Result<Outcome>) -> i32 {
    let (exit, outputs) = match result {
        Ok(o) => {
            manifest.status = if o.passed { "pass" } else { "reject" };
            (if o.passed { 0 } else { 2 }, o.outputs)
        }
        Err(e) => {
            let starved = e
                .downcast_ref::<stablepp::Error>()
                .is_some_and(|e| matches!(e, stablepp::Error::AcceptanceStarvation { .. }));
            eprintln!("error: {e:#}");
            manifest.error = Some(format!("{e:#}"));
            manifest.status = if starved { "starvation" } else { "error" };
            (if starved { 2 } else { 1 }, Vec::new())
        }
    };
    let mut exit = exit;
    for (path, bytes) in &outputs {
        if let Err(e) = std::fs::write(path, bytes) {
            eprintln!("error: writing {}: {e}", path.display());
            manifest.error = Some(format!("writing {}: {e}", path.display()));
            manifest.status = "error";
            exit = 1;
            break;
        }
        manifest.outputs.push(OutputEntry {
            file: path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
            bytes: bytes.len(),
            sha256: sha256_hex(bytes),
        });
    }
    manifest.exit_code = exit;
    let mpath = manifest_path(&common.out);
    let mut text = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    text.push(b'\n');
    if let Err(e) = std::fs::write(&mpath, text) {
        eprintln!("error: writing {}: {e}", mpath.display());
        return 1;
    }
    exit
}
