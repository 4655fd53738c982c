use heavyball::report::Table;
use heavyball::rng::derive_seed;
use rayon::prelude::*;
use serde::Serialize;

use super::{execute, lookup, Experiment, RunContext, RunRecord, PLOT_PREAMBLE};
use crate::config::{require_count, ExperimentKind, RunConfig, SweepSettings};
use crate::error::{CliError, Result};
use crate::output::{Outcome, OutputDir, Status};

/// Cartesian sweep of one experiment over parameter axes and seed replicates.
pub struct Sweep;

/// One point of the grid.
#[derive(Debug, Clone, Serialize)]
pub struct Cell {
    pub ordinal: usize,
    pub dir: String,
    pub seed: u64,
    pub replicate: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    #[serde(skip)]
    pub config: RunConfig,
}

fn axis_applies(axis: &str, kind: ExperimentKind) -> bool {
    match axis {
        "kappa" => matches!(kind, ExperimentKind::Quadratic | ExperimentKind::F2Local),
        "width" => matches!(kind, ExperimentKind::Relu | ExperimentKind::DeepLinear),
        "depth" => kind == ExperimentKind::DeepLinear,
        _ => false,
    }
}

/// Optional values of an axis; an empty axis is not swept.
fn points<T: Copy>(values: &[T]) -> Vec<Option<T>> {
    if values.is_empty() {
        vec![None]
    } else {
        values.iter().copied().map(Some).collect()
    }
}

/// Number of cells, refusing grids larger than the cap.
pub fn cell_count(s: &SweepSettings) -> Result<usize> {
    let sizes = [s.kappa.len().max(1), s.width.len().max(1), s.depth.len().max(1), s.seeds];
    let total = sizes.iter().try_fold(1usize, |acc, &n| acc.checked_mul(n));
    match total {
        Some(n) if n <= s.max_cells => Ok(n),
        Some(n) => Err(CliError::Config(format!(
            "sweep expands to {n} cells, more than max_cells = {}; shrink the axes or raise the cap",
            s.max_cells
        ))),
        None => Err(CliError::Config("sweep size overflows".into())),
    }
}

/// Expands a resolved sweep configuration into per-cell configurations.
pub fn expand(cfg: &RunConfig) -> Result<Vec<Cell>> {
    let s = cfg.sweep.as_ref().ok_or_else(|| CliError::Config("missing [sweep] section".into()))?;
    require_count("sweep.seeds", s.seeds)?;
    for (axis, used) in [("kappa", !s.kappa.is_empty()), ("width", !s.width.is_empty()), ("depth", !s.depth.is_empty())] {
        if used && !axis_applies(axis, s.experiment) {
            return Err(CliError::Config(format!("axis `{axis}` does not apply to experiment `{}`", s.experiment)));
        }
    }
    if s.kappa.iter().any(|k| !(*k >= 1.0 && k.is_finite())) {
        return Err(CliError::Config("sweep condition numbers must be finite and >= 1".into()));
    }
    if s.width.contains(&0) || s.depth.contains(&0) {
        return Err(CliError::Config("sweep widths and depths must be positive".into()));
    }
    cell_count(s)?;

    let root = cfg.output_dir();
    let mut cells = Vec::new();
    for kappa in points(&s.kappa) {
        for width in points(&s.width) {
            for depth in points(&s.depth) {
                for replicate in 0..s.seeds {
                    let ordinal = cells.len();
                    let dir = format!("cell-{ordinal:04}");
                    let mut c = cfg.clone();
                    c.experiment = s.experiment;
                    c.sweep = None;
                    c.seed = derive_seed(cfg.seed, ordinal as u64);
                    c.output_dir = Some(root.join(&dir));
                    if let (Some(k), Some(q)) = (kappa, c.quadratic.as_mut()) {
                        q.kappas = vec![k];
                    }
                    if let (Some(k), Some(f)) = (kappa, c.f2_local.as_mut()) {
                        f.kappas = vec![k];
                    }
                    if let (Some(m), Some(r)) = (width, c.relu.as_mut()) {
                        r.m = m;
                    }
                    if let Some(l) = c.deep_linear.as_mut() {
                        if let Some(m) = width {
                            l.m = m;
                        }
                        if let Some(depth) = depth {
                            l.depth = depth;
                        }
                    }
                    cells.push(Cell { ordinal, dir, seed: c.seed, replicate, kappa, width, depth, config: c });
                }
            }
        }
    }
    Ok(cells)
}

fn axis_columns(s: &SweepSettings) -> Vec<&'static str> {
    let mut cols = Vec::new();
    if !s.kappa.is_empty() {
        cols.push("kappa");
    }
    if !s.width.is_empty() {
        cols.push("width");
    }
    if !s.depth.is_empty() {
        cols.push("depth");
    }
    cols
}

fn axis_values(cell: &Cell, cols: &[&str]) -> Vec<f64> {
    cols.iter()
        .map(|c| match *c {
            "kappa" => cell.kappa.unwrap_or(f64::NAN),
            "width" => cell.width.map_or(f64::NAN, |v| v as f64),
            _ => cell.depth.map_or(f64::NAN, |v| v as f64),
        })
        .collect()
}

impl Experiment for Sweep {
    fn kind(&self) -> ExperimentKind {
        ExperimentKind::Sweep
    }

    fn check(&self, config: &RunConfig) -> Result<()> {
        for cell in expand(config)? {
            lookup(cell.config.experiment).check(&cell.config)?;
        }
        Ok(())
    }

    fn run(&self, ctx: RunContext<'_>, out: &mut OutputDir) -> Result<Outcome> {
        let cfg = ctx.config;
        let settings = cfg.sweep.clone().ok_or_else(|| CliError::Config("missing [sweep] section".into()))?;
        let cells = expand(cfg)?;
        for c in &cells {
            eprintln!("{}: seed {}", c.dir, c.seed);
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(ctx.workers.max(1))
            .build()
            .map_err(|e| CliError::Config(format!("cannot start {} workers: {e}", ctx.workers)))?;
        let records: Vec<RunRecord> =
            pool.install(|| cells.par_iter().map(|c| execute(&c.config, 1)).collect::<Result<Vec<_>>>())?;

        let axes = axis_columns(&settings);
        let metric_names: Vec<String> =
            records.first().map(|r| r.outcome.metrics.iter().map(|(k, _)| k.clone()).collect()).unwrap_or_default();
        let mut headers: Vec<&str> = vec!["cell", "replicate"];
        headers.extend(&axes);
        headers.push("passed");
        headers.extend(metric_names.iter().map(String::as_str));
        let mut summary = Table::new(&headers);
        for (cell, rec) in cells.iter().zip(&records) {
            let mut row = vec![cell.ordinal as f64, cell.replicate as f64];
            row.extend(axis_values(cell, &axes));
            row.push(rec.outcome.status.as_number());
            row.extend(rec.outcome.metrics.iter().map(|(_, v)| *v));
            summary.push(row);
            out.adopt(&cell.dir, &rec.files);
        }

        let mut mean_headers: Vec<&str> = axes.clone();
        mean_headers.push("cells");
        mean_headers.extend(metric_names.iter().map(String::as_str));
        let mut means = Table::new(&mean_headers);
        let mut groups: Vec<(Vec<f64>, Vec<&RunRecord>)> = Vec::new();
        for (cell, rec) in cells.iter().zip(&records) {
            let key = axis_values(cell, &axes);
            match groups.iter_mut().find(|(k, _)| *k == key) {
                Some((_, members)) => members.push(rec),
                None => groups.push((key, vec![rec])),
            }
        }
        for (key, members) in &groups {
            let mut row = key.clone();
            row.push(members.len() as f64);
            for i in 0..metric_names.len() {
                row.push(members.iter().map(|r| r.outcome.metrics[i].1).sum::<f64>() / members.len() as f64);
            }
            means.push(row);
        }
        out.json("cells.json", &cells)?;
        out.table("summary.csv", &summary)?;
        out.table("axis_means.csv", &means)?;

        let x = axes.first().copied().unwrap_or("cells");
        let script = format!(
            "{PLOT_PREAMBLE}means = read_csv(\"axis_means.csv\")\n\
             X = {x:?}\n\
             metrics = [k for k in means if k not in (\"kappa\", \"width\", \"depth\", \"cells\")]\n\
             fig, axes = plt.subplots(len(metrics), 1, figsize=(6, 2.6 * len(metrics)), squeeze=False)\n\
             for ax, name in zip(axes[:, 0], metrics):\n\
             \x20   ys = means[name]\n\
             \x20   ax.plot(means[X], ys, \"o-\")\n\
             \x20   ax.set_xscale(\"log\")\n\
             \x20   if all(v > 0 for v in ys if v == v):\n\
             \x20       ax.set_yscale(\"log\")\n\
             \x20   ax.set_xlabel(X)\n\
             \x20   ax.set_ylabel(name)\n\
             fig.tight_layout()\n\
             fig.savefig(os.path.join(HERE, sys.argv[1] if len(sys.argv) > 1 else \"sweep.png\"), dpi=150)\n"
        );
        out.text("plot_sweep.py", &script)?;

        let status = Status::combine(records.iter().map(|r| r.outcome.status));
        let failed = records.iter().filter(|r| r.outcome.status == Status::Failed).count();
        Ok(Outcome::new(status).metric("cells", records.len() as f64).metric("failed_cells", failed as f64))
    }
}
