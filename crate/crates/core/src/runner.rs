//! Multi-seed runs and parameter sweeps.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scenario::{Scenario, SweepAxis};
use crate::sim::{self, RunOutput};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Worker threads; `1` runs inline on the calling thread.
    pub parallel: usize,
    pub trace: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            parallel: 1,
            trace: false,
        }
    }
}

/// Runs every configured seed. Results are ordered by seed.
pub fn run_scenario(scenario: &Scenario, opts: RunOptions) -> Result<Vec<RunOutput>> {
    let mut seeds = scenario.seeds.clone();
    seeds.sort_unstable();
    seeds.dedup();
    let jobs: Vec<(&Scenario, u64)> = seeds.into_iter().map(|s| (scenario, s)).collect();
    execute(&jobs, opts)
}

/// Runs the scenario for each axis value and every seed. Results are ordered
/// by value (as given) then by seed.
pub fn sweep(scenario: &Scenario, axis: SweepAxis, values: &[f64], opts: RunOptions) -> Result<Vec<RunOutput>> {
    if values.is_empty() {
        return Err(Error::EmptyInput("sweep values"));
    }
    let variants = values
        .iter()
        .map(|&v| scenario.with_axis(axis, v))
        .collect::<Result<Vec<_>>>()?;
    let mut seeds = scenario.seeds.clone();
    seeds.sort_unstable();
    seeds.dedup();
    let jobs: Vec<(&Scenario, u64)> = variants
        .iter()
        .flat_map(|sc| seeds.iter().map(move |&s| (sc, s)))
        .collect();
    execute(&jobs, opts)
}

fn execute(jobs: &[(&Scenario, u64)], opts: RunOptions) -> Result<Vec<RunOutput>> {
    if opts.parallel <= 1 || jobs.len() <= 1 {
        return jobs.iter().map(|&(sc, seed)| sim::run(sc, seed, opts.trace)).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.parallel)
        .build()
        .map_err(|e| Error::param("parallel", e.to_string()))?;
    pool.install(|| {
        jobs.par_iter()
            .map(|&(sc, seed)| sim::run(sc, seed, opts.trace))
            .collect()
    })
}
