//! Executes a configured run and writes its artifacts.

use crate::config::{CliConfig, ObjectiveSpec};
use crate::projection::export_projections;
use anyhow::Context;
use msopt::objective::external_objective;
use msopt::swarm::write_table;
use msopt::{make_benchmark, run_optimization, Bounds, ObjectiveHandle};
use serde::Serialize;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub function: String,
    pub best_value: f64,
    /// Best point in the objective's own units.
    pub best_point: Vec<f64>,
    pub total_evals: u64,
    pub non_finite_evals: u64,
    pub elapsed_secs: f64,
    pub files: Vec<PathBuf>,
}

pub fn build_objective(spec: &ObjectiveSpec, dim: usize) -> anyhow::Result<ObjectiveHandle> {
    Ok(match spec {
        ObjectiveSpec::Benchmark { name, style } => make_benchmark(name, dim, *style)?,
        ObjectiveSpec::External {
            command,
            bounds,
            timeout,
        } => external_objective(command, Bounds::new(bounds.clone())?, *timeout)?,
    })
}

/// Runs the optimizer, writes the enabled outputs under `out_dir` and
/// prints a short summary to `out`.
pub fn run_command(config: &CliConfig, out: &mut impl Write) -> anyhow::Result<Summary> {
    let objective = build_objective(&config.objective, config.run.dim).context("building the objective")?;
    let outcome = run_optimization(&objective, &config.run)?;
    let diagnostics = &outcome.diagnostics;
    let best = outcome.stack.best().context("run finished with an empty stack")?;
    let bounds = objective.bounds();

    std::fs::create_dir_all(&config.out_dir)
        .with_context(|| format!("creating {}", config.out_dir.display()))?;
    let mut files = Vec::new();
    if config.emit_stack {
        let path = config.out_dir.join("stack.csv");
        let file = std::fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        write_table(outcome.stack.entries(), Some(bounds), BufWriter::new(file))?;
        files.push(path);
    }
    if config.emit_diagnostics {
        let path = config.out_dir.join("diagnostics.jsonl");
        let mut w = BufWriter::new(std::fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?);
        for record in &diagnostics.records {
            serde_json::to_writer(&mut w, record)?;
            writeln!(w)?;
        }
        w.flush()?;
        files.push(path);
    }
    if config.emit_projections {
        let dir = config.out_dir.join("projections");
        files.extend(export_projections(&diagnostics.history, &config.planes, &dir)?);
    }

    let summary = Summary {
        function: objective.name().to_string(),
        best_value: best.value,
        best_point: bounds.denormalize(&best.position)?,
        total_evals: diagnostics.total_evals,
        non_finite_evals: objective.non_finite_count(),
        elapsed_secs: diagnostics.elapsed_secs,
        files,
    };
    writeln!(out, "function     {}", summary.function)?;
    writeln!(out, "best value   {:e}", summary.best_value)?;
    let point: Vec<String> = summary.best_point.iter().map(|v| format!("{v:.9}")).collect();
    writeln!(out, "best point   [{}]", point.join(", "))?;
    writeln!(out, "evaluations  {} ({} non-finite)", summary.total_evals, summary.non_finite_evals)?;
    writeln!(out, "elapsed      {:.2}s", summary.elapsed_secs)?;
    for f in &summary.files {
        writeln!(out, "wrote        {}", f.display())?;
    }
    Ok(summary)
}
