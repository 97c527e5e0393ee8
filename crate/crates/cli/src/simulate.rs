//! Expanding a run configuration into simulation grid points and running them.

use reluctant_core::sim_harness::{run_replications, summarize, MethodMetrics, ReplicationRecord, SimSetting, SweepParameter};
use reluctant_core::Result;

use crate::config::RunConfig;

/// One `SimSetting` per (setting, sweep value). A sweep parameter given
/// explicitly pins that setting to the single value; otherwise the full
/// grid of the setting is used.
pub fn grid(cfg: &RunConfig) -> Result<Vec<SimSetting>> {
    let settings: Vec<u8> = match cfg.setting {
        Some(s) => vec![s],
        None => (1..=4).collect(),
    };
    let mut out = Vec::new();
    for s in settings {
        let mut base = SimSetting::preset(s)?;
        if let Some(v) = cfg.sigma {
            base.sigma = v;
        }
        if let Some(v) = cfg.rho_cross {
            base.rho_cross = v;
        }
        if let Some(v) = cfg.gamma_inter {
            base.gamma_inter = v;
        }
        if let Some(v) = cfg.s_inter {
            base.s_inter = v;
        }
        base.r = cfg.r;
        base.alpha = cfg.alpha;
        base.t0 = cfg.t0;
        base.seed = cfg.seed;
        base.replications = cfg.replications;
        base.methods = cfg.methods.clone();
        base.resample_interactions = cfg.resample_interactions;
        let pinned = match base.sweep_parameter() {
            SweepParameter::Sigma => cfg.sigma.is_some(),
            SweepParameter::RhoCross => cfg.rho_cross.is_some(),
            SweepParameter::GammaInter => cfg.gamma_inter.is_some(),
            SweepParameter::SInter => cfg.s_inter.is_some(),
        };
        if pinned {
            base.validate()?;
            out.push(base);
        } else {
            for v in SimSetting::sweep_values(s) {
                let point = base.with_sweep_value(v);
                point.validate()?;
                out.push(point);
            }
        }
    }
    Ok(out)
}

pub struct GridResult {
    pub runs: Vec<(SimSetting, Vec<ReplicationRecord>)>,
    pub metrics: Vec<(SimSetting, MethodMetrics)>,
}

pub fn run_grid(points: &[SimSetting]) -> Result<GridResult> {
    let mut runs = Vec::new();
    let mut metrics = Vec::new();
    for s in points {
        let records = run_replications(s)?;
        for &m in &s.methods {
            metrics.push((s.clone(), summarize(&records, m, s.t0, s.alpha)));
        }
        runs.push((s.clone(), records));
    }
    Ok(GridResult { runs, metrics })
}

pub fn print_metrics(metrics: &[(SimSetting, MethodMetrics)]) {
    println!(
        "{:>7} {:>11} {:>7} {:>9} {:>7} {:>9} {:>8} {:>7} {:>10}",
        "setting", "parameter", "value", "method", "ks", "ci_len", "cover", "f1", "infeasible"
    );
    for (s, m) in metrics {
        println!(
            "{:>7} {:>11} {:>7} {:>9} {:>7.4} {:>9.3} {:>8.3} {:>7.3} {:>10}",
            s.setting,
            s.sweep_parameter().name(),
            s.sweep_value(),
            m.method.as_str(),
            m.ks,
            m.mean_ci_length,
            m.coverage,
            m.f1,
            m.infeasible_replications
        );
    }
}
