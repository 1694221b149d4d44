//! `skelhar`: run the activity-recognition grid, inspect corpora, write
//! synthetic corpora.
//!
//! Exit status: 0 success, 1 internal or I/O failure, 2 configuration error,
//! 3 unreadable or unusable data.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde_json::json;

use skelhar::dataset::{
    generate_synthetic_corpus, load_corpus, load_corpus_cache, write_cad60_corpus, write_corpus_cache, SceneTable,
    SyntheticSpec,
};
use skelhar::eval::{grid_csv, run_loso_experiment, write_report_files, EvalError, EvalOptions, GridCell, MethodSpec};
use skelhar::Corpus;

use config::{CorpusSource, ExperimentConfig, Overrides};

#[derive(Parser)]
#[command(name = "skelhar", version, about = "Skeleton-based activity recognition experiments")]
struct Cli {
    /// More log output (-v info, -vv debug). RUST_LOG takes precedence.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (method, preconditioning) cell and write the reports.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (0: all cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Summarize a CAD-60 directory or corpus cache.
    Inspect {
        path: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Auto)]
        format: Format,
    },
    /// Write a synthetic corpus to disk.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        subjects: usize,
        #[arg(long, default_value_t = 14)]
        classes: usize,
        #[arg(long, default_value_t = 60)]
        frames: usize,
        #[arg(long, value_enum, default_value_t = Format::Cad60)]
        format: Format,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Auto,
    Cad60,
    Cache,
}

enum Failure {
    Config(anyhow::Error),
    Data(anyhow::Error),
    Other(anyhow::Error),
}

impl Failure {
    fn report(self) -> ExitCode {
        let (code, kind, err) = match self {
            Failure::Config(e) => (2, "configuration error", e),
            Failure::Data(e) => (3, "data error", e),
            Failure::Other(e) => (1, "error", e),
        };
        eprintln!("{kind}: {err:#}");
        ExitCode::from(code)
    }
}

fn other<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Other(e.into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Run { config, seed, out, jobs } => {
            // flags are relative to the working directory, config paths to the file
            let out = out.map(|o| std::env::current_dir().map(|d| d.join(o)).unwrap_or_default());
            run(&config, Overrides { seed, out, jobs })
        }
        Command::Inspect { path, format } => inspect(&path, format),
        Command::Synth {
            out,
            seed,
            subjects,
            classes,
            frames,
            format,
        } => synth(&out, SyntheticSpec {
            seed,
            subjects,
            classes,
            frames_per_recording: frames,
        }, format),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => f.report(),
    }
}

fn scene_table(path: Option<&Path>) -> Result<SceneTable, Failure> {
    match path {
        None => Ok(SceneTable::default()),
        Some(p) => SceneTable::load(p).map_err(|e| Failure::Config(e.into())),
    }
}

fn load_dir(path: &Path, format: Format, table: &SceneTable) -> Result<Corpus, Failure> {
    let data = |e: anyhow::Error| Failure::Data(e.context(format!("cannot load corpus from {}", path.display())));
    let format = match format {
        Format::Auto => {
            let entries = fs::read_dir(path).map_err(|e| data(e.into()))?;
            let has_json = entries
                .filter_map(Result::ok)
                .any(|e| e.path().extension().is_some_and(|x| x == "json"));
            if has_json {
                Format::Cache
            } else {
                Format::Cad60
            }
        }
        f => f,
    };
    if format == Format::Cache {
        return load_corpus_cache(path).map_err(|e| data(e.into()));
    }
    let loaded = load_corpus(path, table).map_err(|e| data(e.into()))?;
    for w in &loaded.warnings {
        warn!("{w}");
    }
    Ok(loaded.corpus)
}

fn inspect(path: &Path, format: Format) -> Result<(), Failure> {
    let corpus = load_dir(path, format, &SceneTable::default())?;
    let join = |items: Vec<String>| items.join(", ");
    println!("corpus: {}", path.display());
    println!("recordings: {}", corpus.len());
    println!("frames: {}", corpus.frame_count());
    println!("subjects ({}): {}", corpus.subjects().len(), join(corpus.subjects().iter().map(|s| s.to_string()).collect()));
    println!("scenes ({}): {}", corpus.scenes().len(), join(corpus.scenes().iter().map(|s| s.name().to_string()).collect()));
    println!("labels ({}):", corpus.labels().len());
    for label in corpus.labels() {
        let recs: Vec<_> = corpus.recordings.iter().filter(|r| r.label == label).collect();
        let frames: usize = recs.iter().map(|r| r.len()).sum();
        println!("  {} {:<26} recordings {:>3}  frames {:>7}", label.letter(), label.name(), recs.len(), frames);
    }
    Ok(())
}

fn synth(out: &Path, spec: SyntheticSpec, format: Format) -> Result<(), Failure> {
    let corpus = generate_synthetic_corpus(spec).map_err(|e| Failure::Config(e.into()))?;
    match format {
        Format::Cache => write_corpus_cache(&corpus, out).map_err(other)?,
        _ => write_cad60_corpus(&corpus, out).map_err(other)?,
    }
    println!(
        "wrote {} recordings ({} frames) to {}",
        corpus.len(),
        corpus.frame_count(),
        out.display()
    );
    Ok(())
}

fn eval_failure(e: EvalError) -> Failure {
    match e {
        EvalError::TooFewSubjects(_) | EvalError::NoEvaluableUnits | EvalError::Dataset(_) => Failure::Data(e.into()),
        other => Failure::Other(other.into()),
    }
}

fn run(config_path: &Path, overrides: Overrides) -> Result<(), Failure> {
    let started = Instant::now();
    let config = ExperimentConfig::load(config_path, &overrides).map_err(Failure::Config)?;
    if config.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(config.jobs)
            .build_global()
            .map_err(other)?;
    }
    let table = scene_table(config.scene_table.as_deref())?;
    let corpus = match &config.corpus {
        CorpusSource::Synthetic { subjects, classes, frames } => generate_synthetic_corpus(SyntheticSpec {
            seed: config.seed,
            subjects: *subjects,
            classes: *classes,
            frames_per_recording: *frames,
        })
        .map_err(|e| Failure::Config(e.into()))?,
        CorpusSource::Cad60(p) => load_dir(p, Format::Cad60, &table)?,
        CorpusSource::Cache(p) => load_dir(p, Format::Cache, &table)?,
    };
    info!("corpus: {} recordings, {} frames", corpus.len(), corpus.frame_count());

    let out = &config.out;
    let cells_dir = out.join("cells");
    fs::create_dir_all(&cells_dir)
        .with_context(|| format!("cannot create {}", cells_dir.display()))
        .map_err(other)?;
    let options = EvalOptions {
        seed: config.seed,
        scene_table: table,
        include_extras_in_scenes: config.include_extras,
    };

    let mut cells = Vec::new();
    let mut cell_summaries = Vec::new();
    for method in &config.methods {
        for &mode in &config.modes {
            info!("running {} / {}", method.name(), mode.name());
            let report = run_loso_experiment(&corpus, method, mode, config.scene_policy, &options).map_err(eval_failure)?;
            let stem = format!("{}_{}", method.name(), mode.name());
            write_report_files(&report, &cells_dir, &stem).map_err(other)?;
            cell_summaries.push(json!({
                "method": method.name(),
                "mode": mode.name(),
                "accuracy": report.accuracy,
                "pooled_accuracy": report.pooled_accuracy,
                "units": report.results.len(),
                "skipped_recordings": report.skipped_recordings,
                "files": format!("cells/{stem}_*"),
            }));
            cells.push(GridCell {
                method: method.name().to_string(),
                mode,
                accuracy: report.accuracy,
            });
        }
    }
    let method_names: Vec<&str> = config.methods.iter().map(MethodSpec::name).collect();
    let grid = grid_csv(&cells, &method_names, &config.modes).map_err(other)?;
    write(&out.join("grid.csv"), &grid)?;

    if !config.knn_sweep.is_empty() {
        let mut text = String::from("k,preconditioning,accuracy\n");
        for &k in &config.knn_sweep {
            for &mode in &config.modes {
                let report = run_loso_experiment(&corpus, &MethodSpec::Knn { k }, mode, config.scene_policy, &options)
                    .map_err(eval_failure)?;
                text.push_str(&format!("{k},{},{:.2}\n", mode.name(), 100.0 * report.accuracy));
            }
        }
        write(&out.join("knn_sweep.csv"), &text)?;
    }

    write(&out.join("config.ini"), &config.to_ini())?;
    let manifest = json!({
        "tool": "skelhar",
        "version": env!("CARGO_PKG_VERSION"),
        "config_file": config_path.display().to_string(),
        "seed": config.seed,
        "effective_config": config.effective,
        "scene_policy": config.scene_policy.name(),
        "corpus": {
            "provenance": corpus.provenance,
            "recordings": corpus.len(),
            "frames": corpus.frame_count(),
            "subjects": corpus.subjects(),
        },
        "cells": cell_summaries,
        "wall_time_seconds": started.elapsed().as_secs_f64(),
    });
    write(
        &out.join("manifest.json"),
        &(serde_json::to_string_pretty(&manifest).map_err(other)? + "\n"),
    )?;
    print!("{grid}");
    Ok(())
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::Other(anyhow!(e).context(format!("cannot write {}", path.display()))))
}
