use heavyball::quadratic::{certify_local_run, local_start, make_f2_testfn_with, F2_RADIUS_FEASIBLE_KAPPA};
use heavyball::report::Table;
use heavyball::residual::{BudgetReport, TraceReport};
use heavyball::rng::{derive_seed, rng_from_seed};
use rand::Rng;
use serde::Serialize;

use super::{label, python_list, resolve_form, Experiment, RunContext, PLOT_PREAMBLE};
use crate::config::{require_count, require_positive, ExperimentKind, F2LocalSettings, RunConfig};
use crate::error::{CliError, Result};
use crate::output::{Outcome, OutputDir, Status};

/// Heavy ball started inside the local ball of a smooth strongly convex
/// function, certified against the perturbed envelope.
pub struct F2Local;

#[derive(Serialize)]
struct LocalReport {
    kappa: f64,
    replicate: usize,
    seed: u64,
    radius: f64,
    radius_feasible: bool,
    eta: f64,
    beta: f64,
    /// The certified envelope.
    report: TraceReport,
    /// Diagnostic: the tighter envelope built from the derived constants.
    meta_report: TraceReport,
    /// Diagnostic: the perturbation budget of the linearized recursion.
    budget: BudgetReport,
}

fn validate(s: &F2LocalSettings) -> Result<()> {
    require_count("f2-local.seeds", s.seeds)?;
    require_count("f2-local.dim", s.dim)?;
    require_positive("f2-local.fraction", s.fraction)?;
    if s.fraction > 1.0 {
        return Err(CliError::Config(format!("`f2-local.fraction` must be at most 1, got {}", s.fraction)));
    }
    if !(0.0..=1.0).contains(&s.strength) {
        return Err(CliError::Config(format!("`f2-local.strength` must lie in [0, 1], got {}", s.strength)));
    }
    if s.kappas.is_empty() {
        return Err(CliError::Config("`f2-local.kappas` must not be empty".into()));
    }
    for &k in &s.kappas {
        if !(k >= 1.0 && k.is_finite()) {
            return Err(CliError::Config(format!("condition numbers must be finite and >= 1, got {k}")));
        }
    }
    Ok(())
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

impl Experiment for F2Local {
    fn kind(&self) -> ExperimentKind {
        ExperimentKind::F2Local
    }

    fn check(&self, config: &RunConfig) -> Result<()> {
        validate(&config.f2_local.clone().unwrap_or_default())
    }

    fn run(&self, ctx: RunContext<'_>, out: &mut OutputDir) -> Result<Outcome> {
        let cfg = ctx.config;
        let s = cfg.f2_local.clone().unwrap_or_default();
        let form = resolve_form(&s.form)?;
        let horizon = cfg.iterations();

        let mut summary = Table::new(&[
            "kappa",
            "replicate",
            "radius",
            "radius_feasible",
            "passed",
            "max_ratio",
            "meta_passed",
            "meta_max_ratio",
            "budget_passed",
            "budget_max_ratio",
        ]);
        let mut reports = Vec::new();
        let mut traces = Vec::new();
        for (ki, &kappa) in s.kappas.iter().enumerate() {
            if kappa > F2_RADIUS_FEASIBLE_KAPPA {
                eprintln!("warning: kappa = {kappa} gives a local radius near the rounding floor");
            }
            for r in 0..s.seeds {
                let seed = derive_seed(cfg.seed, (ki * s.seeds + r) as u64);
                let mut rng = rng_from_seed(seed);
                let problem = make_f2_testfn_with(1.0, kappa, s.dim, rng.random(), s.strength)?;
                let w0 = local_start(&problem, s.fraction, rng.random());
                let local = certify_local_run(&problem, &w0, horizon, form)?;
                let name = format!("traces/kappa{}_rep{r}.csv", label(kappa));
                out.table(&name, &local.run.table())?;
                if r == 0 {
                    traces.push(name);
                }
                summary.push(vec![
                    kappa,
                    r as f64,
                    local.radius,
                    flag(local.radius_feasible),
                    flag(local.run.report.passed),
                    local.run.report.max_ratio,
                    flag(local.meta_report.passed),
                    local.meta_report.max_ratio,
                    flag(local.budget.passed),
                    local.budget.max_ratio,
                ]);
                reports.push(LocalReport {
                    kappa,
                    replicate: r,
                    seed,
                    radius: local.radius,
                    radius_feasible: local.radius_feasible,
                    eta: local.run.hp.eta,
                    beta: local.run.hp.beta,
                    report: local.run.report,
                    meta_report: local.meta_report,
                    budget: local.budget,
                });
            }
        }
        out.table("summary.csv", &summary)?;
        out.json("reports.json", &reports)?;
        let script = format!(
            "{PLOT_PREAMBLE}TRACES = {}\n\n\
             fig, ax = plt.subplots(figsize=(7, 4.5))\n\
             for name in TRACES:\n\
             \x20   data = read_csv(name)\n\
             \x20   line, = ax.plot(data[\"t\"], data[\"residual_norm\"], label=name.split(\"/\")[-1][:-4])\n\
             \x20   ax.plot(data[\"t\"], data[\"envelope_value\"], \"--\", color=line.get_color())\n\
             ax.set_yscale(\"log\")\n\
             ax.set_xlabel(\"iteration t\")\n\
             ax.set_ylabel(\"stacked residual norm\")\n\
             ax.legend(fontsize=7)\n\
             fig.tight_layout()\n\
             fig.savefig(os.path.join(HERE, sys.argv[1] if len(sys.argv) > 1 else \"f2_local.png\"), dpi=150)\n",
            python_list(&traces)
        );
        out.text("plot_f2_local.py", &script)?;

        let failures = reports.iter().filter(|r| !r.report.passed).count();
        let worst = reports.iter().map(|r| r.report.max_ratio).fold(0.0, f64::max);
        let status = if failures == 0 { Status::Passed } else { Status::Failed };
        Ok(Outcome::new(status)
            .metric("runs", reports.len() as f64)
            .metric("failures", failures as f64)
            .metric("max_ratio", worst)
            .metric("max_meta_ratio", reports.iter().map(|r| r.meta_report.max_ratio).fold(0.0, f64::max)))
    }
}
