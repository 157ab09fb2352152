//! Dispatches a [`RunConfig`] to its experiment and writes the outputs.

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::gw::{RescalingPlan, DEFAULT_NODE_BUDGET};
use crate::marginals::{
    discrete_reduced_crosscheck, poisson_tree_experiment_with, reduced_exact_experiment, stable_marginal_experiment,
};
use crate::report::ExperimentReport;
use crate::rng::{derive_seed, stream_rng};
use crate::scaling::{
    contour_height_agreement, extinction_law, feller_height_marginal, holder_exponent_estimate, ray_knight_laplace,
};
use crate::snake::{exit_measure, snake_exit_experiment, snake_laplace_experiment};

/// Runs the configured experiment on a pool of `config.workers` threads.
/// The report embeds the full configuration, so replaying it reproduces
/// the statistics.
pub fn run(config: &RunConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = config.workers {
        builder = builder.num_threads(w);
    }
    let pool = builder.build().map_err(|e| Error::config("workers", e.to_string()))?;
    let report = pool.install(|| dispatch(config))?;
    let report = report.param("config", config);
    if let Some(out) = &config.out {
        std::fs::write(out, serde_json::to_string_pretty(&report)?)?;
    }
    Ok(report)
}

fn dispatch(c: &RunConfig) -> Result<ExperimentReport> {
    let seed = c.seed;
    let d = || c.offspring.build();
    match c.experiment.as_str() {
        "feller-height" => Ok(feller_height_marginal(&c.feller_height, seed)),
        "ray-knight" => ray_knight_laplace(&d()?, &c.ray_knight, seed),
        "extinction" => extinction_law(&d()?, &c.extinction),
        "holder" => Ok(holder_exponent_estimate(&d()?, &c.holder, seed)),
        "contour-gap" => Ok(contour_height_agreement(&c.contour_gap, seed)),
        "reduced-discrete" => discrete_reduced_crosscheck(&d()?, &c.reduced_discrete, seed),
        "stable-marginals" => stable_marginal_experiment(&c.stable_marginals, seed),
        "poisson-tree" => {
            let extra = c.mechanism.as_ref().map(|m| m.build()).transpose()?;
            poisson_tree_experiment_with(&c.poisson_tree, extra.as_ref())
        }
        "reduced-exact" => reduced_exact_experiment(&c.reduced_exact, seed),
        "snake-laplace" => snake_laplace_experiment(&d()?, &c.kernel.build(), &c.snake_laplace, seed),
        "snake-exit" | "snake-1d" => {
            let d = d()?;
            let kernel = c.kernel.build();
            let report = snake_exit_experiment(&d, &kernel, &c.snake_exit, seed)?;
            if let Some(path) = &c.csv {
                let plan = RescalingPlan::new(&d, c.snake_exit.p)?;
                let h = c.snake_exit.half_width;
                let mut rng = stream_rng(derive_seed(seed, 0xc5), 0);
                let cloud = exit_measure(&plan, &d, &kernel, -h, h, c.snake_exit.x, DEFAULT_NODE_BUDGET, &mut rng)?;
                std::fs::write(path, cloud.to_csv())?;
            }
            Ok(report)
        }
        other => Err(Error::UnknownExperiment(other.to_string())),
    }
}
