use heavyball::deep_linear::{
    certify_linear_run, init_orthogonal, linear_table, linearnet_schedule, make_linear_dataset, train_linear,
    LinearCertificate, LinearRun, TrainOptions,
};
use heavyball::report::Table;
use heavyball::schedule::Schedule;
use serde::Serialize;

use super::relu::NETWORK_SEED_OFFSET;
use super::{resolve_form, Experiment, RunContext, PLOT_PREAMBLE};
use crate::config::{require_count, require_positive, ExperimentKind};
use crate::error::Result;
use crate::output::{Outcome, OutputDir, Status};

/// Deep linear network with orthogonal initialization trained by heavy ball
/// and by gradient descent.
pub struct DeepLinear;

#[derive(Serialize)]
struct MethodSummary {
    final_loss: f64,
    iterations: usize,
    iterations_to_target: Option<usize>,
}

#[derive(Serialize)]
struct LinearSummary<'a> {
    d: usize,
    d_y: usize,
    m: usize,
    depth: usize,
    n: usize,
    data_seed: u64,
    network_seed: u64,
    data_rank: usize,
    schedule: &'a Schedule,
    options: TrainOptions,
    loss_target: f64,
    momentum: MethodSummary,
    gradient_descent: MethodSummary,
    certificate: &'a LinearCertificate,
}

fn method_summary(run: &LinearRun, target: f64) -> MethodSummary {
    MethodSummary {
        final_loss: run.final_loss(),
        iterations: run.steps.last().map_or(0, |s| s.t),
        iterations_to_target: run.iterations_to_loss(target),
    }
}

fn count(n: Option<usize>) -> f64 {
    n.map_or(f64::NAN, |v| v as f64)
}

impl Experiment for DeepLinear {
    fn kind(&self) -> ExperimentKind {
        ExperimentKind::DeepLinear
    }

    fn run(&self, ctx: RunContext<'_>, out: &mut OutputDir) -> Result<Outcome> {
        let cfg = ctx.config;
        let s = cfg.deep_linear.clone().unwrap_or_default();
        for (name, v) in [
            ("deep-linear.d", s.d),
            ("deep-linear.d_y", s.d_y),
            ("deep-linear.m", s.m),
            ("deep-linear.depth", s.depth),
            ("deep-linear.n", s.n),
        ] {
            require_count(name, v)?;
        }
        require_positive("deep-linear.loss_target", s.loss_target)?;
        if let Some(stop) = s.stop_below {
            require_positive("deep-linear.stop_below", stop)?;
        }
        let form = resolve_form(&s.form)?;

        let data_seed = cfg.seed;
        let network_seed = cfg.seed.wrapping_add(NETWORK_SEED_OFFSET);
        let data = make_linear_dataset(s.d, s.d_y, s.n, data_seed)?;
        let net = init_orthogonal(s.depth, s.m, s.d, s.d_y, network_seed)?;
        let schedule = linearnet_schedule(&data, s.depth, s.d_y)?;
        let opts = TrainOptions { iterations: cfg.iterations(), stop_below: s.stop_below, singular_stride: s.singular_stride };
        let hb = train_linear(&net, &data, &schedule.hp, &opts, form)?;
        let gd = train_linear(&net, &data, &schedule.gradient_descent(), &opts, form)?;
        let cert = certify_linear_run(&hb, &schedule, &data, s.depth, s.d_y)?;

        out.table("trace_momentum.csv", &linear_table(&hb, &cert.report, cert.drift_radius))?;
        let mut curves = Table::new(&["t", "loss_momentum", "loss_gd"]);
        let len = hb.steps.len().max(gd.steps.len());
        for t in 0..len {
            let loss = |run: &LinearRun| run.steps.get(t).map_or(f64::NAN, |s| s.loss);
            curves.push(vec![t as f64, loss(&hb), loss(&gd)]);
        }
        out.table("curves.csv", &curves)?;

        let momentum = method_summary(&hb, s.loss_target);
        let gradient_descent = method_summary(&gd, s.loss_target);
        let outcome = Outcome::new(Status::Diagnostic)
            .metric("kappa", schedule.kappa)
            .metric("final_loss_momentum", momentum.final_loss)
            .metric("final_loss_gd", gradient_descent.final_loss)
            .metric("iterations_momentum", count(momentum.iterations_to_target))
            .metric("iterations_gd", count(gradient_descent.iterations_to_target))
            .metric("max_layer_drift", cert.max_layer_drift)
            .metric("max_ratio", cert.report.max_ratio);
        out.json(
            "summary.json",
            &LinearSummary {
                d: s.d,
                d_y: s.d_y,
                m: s.m,
                depth: s.depth,
                n: s.n,
                data_seed,
                network_seed,
                data_rank: data.rank,
                schedule: &schedule,
                options: opts,
                loss_target: s.loss_target,
                momentum,
                gradient_descent,
                certificate: &cert,
            },
        )?;

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
             ax2.plot(trace[\"t\"], trace[\"max_layer_drift\"], label=\"max layer drift\")\n\
             ax2.plot(trace[\"t\"], trace[\"drift_budget\"], \"--\", label=\"drift radius\")\n\
             ax2.set_yscale(\"log\")\n\
             ax2.set_xlabel(\"iteration t\")\n\
             ax2.legend()\n\
             fig.tight_layout()\n\
             fig.savefig(os.path.join(HERE, sys.argv[1] if len(sys.argv) > 1 else \"deep_linear.png\"), dpi=150)\n"
        );
        out.text("plot_deep_linear.py", &script)?;
        Ok(outcome)
    }
}
