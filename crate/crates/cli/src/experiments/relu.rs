use heavyball::relu::{
    acc_schedule, certify_relu_run, gram_empirical, gram_expected, init_relu, make_relu_dataset, relu_table,
    train_relu, ReluCertificate, ReluRun,
};
use heavyball::report::Table;
use heavyball::schedule::Schedule;
use serde::Serialize;

use super::{resolve_form, Experiment, RunContext, PLOT_PREAMBLE};
use crate::config::{require_count, require_positive, ExperimentKind};
use crate::error::Result;
use crate::output::{Outcome, OutputDir, Status};

/// Offset between the data seed and the network seed of a run.
pub const NETWORK_SEED_OFFSET: u64 = 1000;

/// Two-layer ReLU network trained by heavy ball and by gradient descent
/// from the same initialization.
pub struct Relu;

#[derive(Serialize)]
struct MethodSummary {
    final_loss: f64,
    iterations_to_target: Option<usize>,
    final_pattern_changed_fraction: f64,
    max_pattern_changed_fraction: f64,
    final_flips: usize,
}

#[derive(Serialize)]
struct ReluSummary<'a> {
    n: usize,
    d: usize,
    m: usize,
    data_seed: u64,
    network_seed: u64,
    dataset_regenerations: u64,
    gram_lambda_min: f64,
    gram_lambda_max: f64,
    gram_concentration: f64,
    schedule: &'a Schedule,
    loss_target: f64,
    momentum: MethodSummary,
    gradient_descent: MethodSummary,
    momentum_below_gd_at_final: bool,
    certificate: &'a ReluCertificate,
}

fn method_summary(run: &ReluRun, target: f64) -> MethodSummary {
    let last = run.steps.last();
    MethodSummary {
        final_loss: run.final_loss(),
        iterations_to_target: run.steps.iter().find(|s| s.loss <= target).map(|s| s.t),
        final_pattern_changed_fraction: last.map_or(f64::NAN, |s| s.pattern_changed_fraction),
        max_pattern_changed_fraction: run.steps.iter().map(|s| s.pattern_changed_fraction).fold(0.0, f64::max),
        final_flips: run.final_flips.iter().sum(),
    }
}

fn count(n: Option<usize>) -> f64 {
    n.map_or(f64::NAN, |v| v as f64)
}

impl Experiment for Relu {
    fn kind(&self) -> ExperimentKind {
        ExperimentKind::Relu
    }

    fn run(&self, ctx: RunContext<'_>, out: &mut OutputDir) -> Result<Outcome> {
        let cfg = ctx.config;
        let s = cfg.relu.clone().unwrap_or_default();
        require_count("relu.n", s.n)?;
        require_count("relu.d", s.d)?;
        require_count("relu.m", s.m)?;
        require_positive("relu.loss_target", s.loss_target)?;
        let form = resolve_form(&s.form)?;
        let horizon = cfg.iterations();

        let data_seed = cfg.seed;
        let network_seed = cfg.seed.wrapping_add(NETWORK_SEED_OFFSET);
        let (data, regenerations) = make_relu_dataset(s.n, s.d, data_seed)?;
        if regenerations > 0 {
            eprintln!("note: dataset redrawn {regenerations} time(s) to separate the inputs");
        }
        let net = init_relu(s.m, s.d, network_seed)?;
        let gram0 = gram_empirical(&net, &data)?;
        let concentration = (&gram0.h - gram_expected(&data)?.h).norm();
        let schedule = acc_schedule(&gram0)?;
        let hb = train_relu(&net, &data, &schedule.hp, horizon, form)?;
        let gd = train_relu(&net, &data, &schedule.gradient_descent(), horizon, form)?;
        let cert = certify_relu_run(&hb, &schedule)?;

        out.table("trace_momentum.csv", &relu_table(&hb, &cert.report))?;
        let mut curves = Table::new(&[
            "t",
            "loss_momentum",
            "loss_gd",
            "pattern_changed_momentum",
            "pattern_changed_gd",
        ]);
        for (a, b) in hb.steps.iter().zip(&gd.steps) {
            curves.push(vec![a.t as f64, a.loss, b.loss, a.pattern_changed_fraction, b.pattern_changed_fraction]);
        }
        out.table("curves.csv", &curves)?;

        let momentum = method_summary(&hb, s.loss_target);
        let gradient_descent = method_summary(&gd, s.loss_target);
        println!(
            "activation patterns changed: momentum {:.2}% (max {:.2}%), gradient descent {:.2}% (max {:.2}%)",
            100.0 * momentum.final_pattern_changed_fraction,
            100.0 * momentum.max_pattern_changed_fraction,
            100.0 * gradient_descent.final_pattern_changed_fraction,
            100.0 * gradient_descent.max_pattern_changed_fraction,
        );
        let outcome = Outcome::new(Status::Diagnostic)
            .metric("kappa_hat", schedule.kappa)
            .metric("gram_concentration", concentration)
            .metric("final_loss_momentum", momentum.final_loss)
            .metric("final_loss_gd", gradient_descent.final_loss)
            .metric("iterations_momentum", count(momentum.iterations_to_target))
            .metric("iterations_gd", count(gradient_descent.iterations_to_target))
            .metric("pattern_changed_momentum", momentum.final_pattern_changed_fraction)
            .metric("pattern_changed_gd", gradient_descent.final_pattern_changed_fraction);
        let summary = ReluSummary {
            n: s.n,
            d: s.d,
            m: s.m,
            data_seed,
            network_seed,
            dataset_regenerations: regenerations,
            gram_lambda_min: gram0.spectrum.lambda_min,
            gram_lambda_max: gram0.spectrum.lambda_max,
            gram_concentration: concentration,
            schedule: &schedule,
            loss_target: s.loss_target,
            momentum_below_gd_at_final: momentum.final_loss < gradient_descent.final_loss,
            momentum,
            gradient_descent,
            certificate: &cert,
        };
        out.json("summary.json", &summary)?;

        let script = format!(
            "{PLOT_PREAMBLE}curves = read_csv(\"curves.csv\")\n\
             trace = read_csv(\"trace_momentum.csv\")\n\n\
             fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4))\n\
             ax1.plot(curves[\"t\"], curves[\"loss_momentum\"], label=\"momentum\")\n\
             ax1.plot(curves[\"t\"], curves[\"loss_gd\"], label=\"gradient descent\")\n\
             ax1.set_yscale(\"log\")\n\
             ax1.set_xlabel(\"iteration t\")\n\
             ax1.set_ylabel(\"training loss\")\n\
             ax1.legend()\n\
             ax2.plot(trace[\"t\"], trace[\"residual_norm\"], label=\"residual\")\n\
             ax2.plot(trace[\"t\"], trace[\"envelope\"], \"--\", label=\"envelope\")\n\
             ax2.set_yscale(\"log\")\n\
             ax2.set_xlabel(\"iteration t\")\n\
             ax2.set_ylabel(\"stacked residual norm\")\n\
             ax2.legend()\n\
             fig.tight_layout()\n\
             fig.savefig(os.path.join(HERE, sys.argv[1] if len(sys.argv) > 1 else \"relu.png\"), dpi=150)\n"
        );
        out.text("plot_relu.py", &script)?;
        Ok(outcome)
    }
}
