use heavyball::momentum::HyperParams;
use heavyball::quadratic::{make_quadratic, spread_spectrum, LinearTerm};
use heavyball::report::Table;
use heavyball::rng::{derive_seed, gaussian_vector, rng_from_seed};
use heavyball::spectral::{
    admissible_beta_range, build_dynamics_matrix, certify_power_bound, eigenstructure_check, BoundConstants,
    EigenReport, PowerCertificate, SpectrumSummary,
};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use super::{python_list, Experiment, RunContext, PLOT_PREAMBLE};
use crate::config::{require_count, BoundCheckSettings, ExperimentKind, RunConfig, StartKind};
use crate::error::{CliError, Result};
use crate::output::{Outcome, OutputDir, Status};

/// Checks `‖A^k v₀‖ ≤ C₀ (√β)^k ‖v₀‖` for the linear heavy-ball map on
/// random quadratics, plus two fixed cases.
pub struct BoundCheck;

#[derive(Serialize)]
struct Instance {
    label: String,
    n0: usize,
    kappa: f64,
    eta: f64,
    beta: f64,
    bounds: BoundConstants,
    /// `None` when `β` is outside the admissible interval.
    certificate: Option<PowerCertificate>,
    eigen: Option<EigenReport>,
    note: Option<String>,
}

fn start_vector(kind: StartKind, rng: &mut impl Rng, n0: usize) -> DVector<f64> {
    match kind {
        StartKind::Gaussian => gaussian_vector(rng, 2 * n0),
        StartKind::Equal => {
            let xi = gaussian_vector(rng, n0);
            let mut v = DVector::zeros(2 * n0);
            v.rows_mut(0, n0).copy_from(&xi);
            v.rows_mut(n0, n0).copy_from(&xi);
            v
        }
    }
}

fn check(label: String, h: &DMatrix<f64>, hp: HyperParams, v0: &DVector<f64>, horizon: usize) -> Result<Instance> {
    let a = build_dynamics_matrix(h, &hp)?;
    let bounds = a.bounds;
    let (certificate, eigen, note) = if bounds.valid {
        (Some(certify_power_bound(&a, v0, horizon)?), Some(eigenstructure_check(&a)?), None)
    } else {
        let why = bounds.require_c0().err().map(|e| e.to_string());
        (None, None, why)
    };
    Ok(Instance {
        label,
        n0: h.nrows(),
        kappa: a.spectrum.kappa,
        eta: hp.eta,
        beta: hp.beta,
        bounds,
        certificate,
        eigen,
        note,
    })
}

fn validate(s: &BoundCheckSettings) -> Result<()> {
    require_count("bound-check.seeds", s.seeds)?;
    if s.sizes.is_empty() || s.sizes.contains(&0) {
        return Err(CliError::Config("`bound-check.sizes` must be a non-empty list of positive sizes".into()));
    }
    if !(s.max_kappa >= 1.0 && s.max_kappa.is_finite()) {
        return Err(CliError::Config(format!("`bound-check.max_kappa` must be finite and >= 1, got {}", s.max_kappa)));
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

impl Experiment for BoundCheck {
    fn kind(&self) -> ExperimentKind {
        ExperimentKind::BoundCheck
    }

    fn check(&self, config: &RunConfig) -> Result<()> {
        validate(&config.bound_check.clone().unwrap_or_default())
    }

    fn run(&self, ctx: RunContext<'_>, out: &mut OutputDir) -> Result<Outcome> {
        let cfg = ctx.config;
        let s = cfg.bound_check.clone().unwrap_or_default();
        let horizon = cfg.iterations();
        let mut instances = Vec::new();

        // The accelerated schedule at unit condition number.
        let unit = DMatrix::identity(1, 1);
        instances.push(check(
            "unit-curvature".into(),
            &unit,
            HyperParams::new(1.0, 0.25)?,
            &DVector::from_vec(vec![1.0, 1.0]),
            horizon,
        )?);

        let max_log = s.max_kappa.log10();
        for (si, &n0) in s.sizes.iter().enumerate() {
            for r in 0..s.seeds {
                let mut rng = rng_from_seed(derive_seed(cfg.seed, (si * s.seeds + r) as u64));
                let kappa = if max_log > 0.0 { 10f64.powf(rng.random_range(0.0..max_log)) } else { 1.0 };
                let eigs = spread_spectrum(&mut rng, n0, 1.0, kappa);
                let q = make_quadratic(&eigs, Some(rng.random()), LinearTerm::Zero)?;
                let eta = 1.0 / q.spectrum.lambda_max;
                let lower = admissible_beta_range(eta, &q.spectrum).0.max(0.0);
                let beta = lower + rng.random_range(0.05..0.95) * (1.0 - lower);
                let v0 = start_vector(s.start, &mut rng, n0);
                instances.push(check(format!("n{n0}-rep{r}"), &q.gamma, HyperParams::new(eta, beta)?, &v0, horizon)?);
            }
        }

        // Momentum exactly at the lower edge of the admissible interval.
        let edge = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0]));
        let eta = 0.25;
        let (lower, _) = admissible_beta_range(eta, &SpectrumSummary::new(1.0, 4.0)?);
        instances.push(check(
            "boundary-beta".into(),
            &edge,
            HyperParams::new(eta, lower)?,
            &DVector::from_vec(vec![1.0, 1.0, 1.0, 1.0]),
            horizon,
        )?);

        let mut summary = Table::new(&[
            "instance",
            "n0",
            "kappa",
            "eta",
            "beta",
            "valid",
            "c0",
            "max_ratio",
            "violation",
            "moduli_ok",
            "eigvec_condition_over_c0",
        ]);
        let mut ratios = Table::new(&["instance", "k", "ratio"]);
        let mut violations = 0usize;
        let mut moduli_bad = 0usize;
        let mut worst = 0.0f64;
        for (i, inst) in instances.iter().enumerate() {
            let c0 = inst.bounds.c0.unwrap_or(f64::NAN);
            let (max_ratio, violated) = inst
                .certificate
                .as_ref()
                .map_or((f64::NAN, false), |c| (c.max_ratio, c.first_violation_k.is_some()));
            let moduli_ok = inst.eigen.as_ref().is_some_and(|e| e.moduli_ok);
            if inst.bounds.valid {
                violations += usize::from(violated);
                moduli_bad += usize::from(!moduli_ok);
                worst = worst.max(max_ratio);
            }
            summary.push(vec![
                i as f64,
                inst.n0 as f64,
                inst.kappa,
                inst.eta,
                inst.beta,
                flag(inst.bounds.valid),
                c0,
                max_ratio,
                flag(violated),
                if inst.bounds.valid { flag(moduli_ok) } else { f64::NAN },
                inst.eigen.as_ref().map_or(f64::NAN, |e| e.eigvec_condition / c0),
            ]);
            if let Some(cert) = &inst.certificate {
                for (k, r) in cert.ratios.iter().enumerate() {
                    ratios.push(vec![i as f64, k as f64, *r]);
                }
            }
        }
        out.json("certificates.json", &instances)?;
        out.table("summary.csv", &summary)?;
        out.table("ratios.csv", &ratios)?;
        let script = format!(
            "{PLOT_PREAMBLE}FILES = {}\n\n\
             ratios = read_csv(FILES[0])\n\
             fig, ax = plt.subplots(figsize=(7, 4.5))\n\
             for inst in sorted(set(ratios[\"instance\"])):\n\
             \x20   ks = [k for k, i in zip(ratios[\"k\"], ratios[\"instance\"]) if i == inst]\n\
             \x20   rs = [r for r, i in zip(ratios[\"ratio\"], ratios[\"instance\"]) if i == inst]\n\
             \x20   ax.plot(ks, rs, lw=0.7, alpha=0.6)\n\
             ax.axhline(1.0, color=\"k\", ls=\"--\", label=\"bound\")\n\
             ax.set_yscale(\"log\")\n\
             ax.set_xlabel(\"power k\")\n\
             ax.set_ylabel(\"ratio to C0 (sqrt beta)^k\")\n\
             ax.legend()\n\
             fig.tight_layout()\n\
             fig.savefig(os.path.join(HERE, sys.argv[1] if len(sys.argv) > 1 else \"bound_check.png\"), dpi=150)\n",
            python_list(&["ratios.csv".to_string()])
        );
        out.text("plot_bound_check.py", &script)?;

        let status = if violations == 0 && moduli_bad == 0 { Status::Passed } else { Status::Failed };
        let valid = instances.iter().filter(|i| i.bounds.valid).count();
        Ok(Outcome::new(status)
            .metric("instances", instances.len() as f64)
            .metric("valid_instances", valid as f64)
            .metric("violations", violations as f64)
            .metric("moduli_off", moduli_bad as f64)
            .metric("max_ratio", worst))
    }
}
