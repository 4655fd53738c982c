use heavyball::quadratic::{
    certify_quadratic_run, iterations_to_tolerance, make_quadratic, point_at_distance, spread_spectrum, LinearTerm,
};
use heavyball::report::Table;
use heavyball::residual::TraceReport;
use heavyball::rng::{derive_seed, rng_from_seed};
use heavyball::schedule::{stc_schedule, Schedule};
use rand::Rng;
use serde::Serialize;

use super::{label, python_list, resolve_form, Experiment, RunContext, PLOT_PREAMBLE};
use crate::config::{require_count, require_positive, ExperimentKind, QuadraticSettings, RunConfig};
use crate::error::{CliError, Result};
use crate::output::{Outcome, OutputDir, Status};

/// Accelerated heavy ball on rotated quadratics across a condition-number
/// grid, certified against the stated envelope.
pub struct Quadratic;

#[derive(Serialize)]
struct RunReport<'a> {
    kappa: f64,
    replicate: usize,
    seed: u64,
    schedule: &'a Schedule,
    max_closure_error: f64,
    iterations_momentum: Option<usize>,
    iterations_gd: Option<usize>,
    report: &'a TraceReport,
}

fn validate(s: &QuadraticSettings) -> Result<()> {
    require_count("quadratic.seeds", s.seeds)?;
    require_count("quadratic.dim", s.dim)?;
    require_count("quadratic.count_cap", s.count_cap)?;
    require_positive("quadratic.tolerance", s.tolerance)?;
    if s.kappas.is_empty() {
        return Err(CliError::Config("`quadratic.kappas` must not be empty".into()));
    }
    for &k in &s.kappas {
        if !(k >= 1.0 && k.is_finite()) {
            return Err(CliError::Config(format!("condition numbers must be finite and >= 1, got {k}")));
        }
    }
    Ok(())
}

fn count(n: Option<usize>) -> f64 {
    n.map_or(f64::NAN, |v| v as f64)
}

impl Experiment for Quadratic {
    fn kind(&self) -> ExperimentKind {
        ExperimentKind::Quadratic
    }

    fn check(&self, config: &RunConfig) -> Result<()> {
        validate(&config.quadratic.clone().unwrap_or_default())
    }

    fn run(&self, ctx: RunContext<'_>, out: &mut OutputDir) -> Result<Outcome> {
        let cfg = ctx.config;
        let s = cfg.quadratic.clone().unwrap_or_default();
        let form = resolve_form(&s.form)?;
        let horizon = cfg.iterations();

        let mut summary = Table::new(&[
            "kappa",
            "replicate",
            "eta",
            "beta",
            "rate",
            "multiplier",
            "c0",
            "four_sqrt_kappa",
            "passed",
            "max_ratio",
            "max_closure_error",
            "iterations_momentum",
            "iterations_gd",
        ]);
        let mut traces = Vec::new();
        let mut failures = 0usize;
        let mut worst_ratio = 0.0f64;
        let mut reports = Vec::new();
        for (ki, &kappa) in s.kappas.iter().enumerate() {
            for r in 0..s.seeds {
                let seed = derive_seed(cfg.seed, (ki * s.seeds + r) as u64);
                let mut rng = rng_from_seed(seed);
                let eigs = spread_spectrum(&mut rng, s.dim, 1.0, kappa);
                let problem = make_quadratic(&eigs, Some(rng.random()), LinearTerm::Zero)?;
                let w0 = point_at_distance(&problem.w_star, 1.0, rng.random());
                let schedule = stc_schedule(&problem.spectrum)?;
                let run = certify_quadratic_run(&problem, &schedule.hp, &w0, horizon, form, schedule.name)?;
                let hb = iterations_to_tolerance(&problem, &problem.w_star, &schedule.hp, &w0, s.tolerance, s.count_cap, form)?;
                let gd = iterations_to_tolerance(
                    &problem,
                    &problem.w_star,
                    &schedule.gradient_descent(),
                    &w0,
                    s.tolerance,
                    s.count_cap,
                    form,
                )?;
                let name = format!("traces/kappa{}_rep{r}.csv", label(kappa));
                out.table(&name, &run.table())?;
                traces.push((kappa, r, name));

                let (rate, multiplier) = schedule.quadratic_envelope();
                let c0 = schedule.bounds.require_c0()?;
                if !run.report.passed {
                    failures += 1;
                }
                worst_ratio = worst_ratio.max(run.report.max_ratio);
                summary.push(vec![
                    kappa,
                    r as f64,
                    schedule.hp.eta,
                    schedule.hp.beta,
                    rate,
                    multiplier,
                    c0,
                    4.0 * kappa.sqrt(),
                    if run.report.passed { 1.0 } else { 0.0 },
                    run.report.max_ratio,
                    run.max_closure_error,
                    count(hb),
                    count(gd),
                ]);
                reports.push((kappa, r, seed, schedule, run, hb, gd));
            }
        }
        out.table("summary.csv", &summary)?;
        let json: Vec<RunReport> = reports
            .iter()
            .map(|(kappa, r, seed, schedule, run, hb, gd)| RunReport {
                kappa: *kappa,
                replicate: *r,
                seed: *seed,
                schedule,
                max_closure_error: run.max_closure_error,
                iterations_momentum: *hb,
                iterations_gd: *gd,
                report: &run.report,
            })
            .collect();
        out.json("reports.json", &json)?;

        let first: Vec<String> = traces.iter().filter(|(_, r, _)| *r == 0).map(|(_, _, n)| n.clone()).collect();
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
             fig.savefig(os.path.join(HERE, sys.argv[1] if len(sys.argv) > 1 else \"quadratic.png\"), dpi=150)\n\
             \n\
             summary = read_csv(\"summary.csv\")\n\
             fig, ax = plt.subplots(figsize=(6, 4))\n\
             ax.plot(summary[\"kappa\"], summary[\"iterations_momentum\"], \"o\", label=\"momentum\")\n\
             ax.plot(summary[\"kappa\"], summary[\"iterations_gd\"], \"s\", label=\"gradient descent\")\n\
             ax.set_xscale(\"log\")\n\
             ax.set_yscale(\"log\")\n\
             ax.set_xlabel(\"condition number\")\n\
             ax.set_ylabel(\"iterations to tolerance\")\n\
             ax.legend()\n\
             fig.tight_layout()\n\
             fig.savefig(os.path.join(HERE, \"iterations.png\"), dpi=150)\n",
            python_list(&first)
        );
        out.text("plot_quadratic.py", &script)?;

        let mean = |name: &str| {
            let column = summary.column(name).unwrap_or_default();
            column.iter().sum::<f64>() / column.len() as f64
        };
        let (mean_hb, mean_gd) = (mean("iterations_momentum"), mean("iterations_gd"));
        let status = if failures == 0 { Status::Passed } else { Status::Failed };
        Ok(Outcome::new(status)
            .metric("runs", reports.len() as f64)
            .metric("failures", failures as f64)
            .metric("max_ratio", worst_ratio)
            .metric("mean_iterations_momentum", mean_hb)
            .metric("mean_iterations_gd", mean_gd))
    }
}
