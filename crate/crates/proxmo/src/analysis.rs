//! Diagnostic and reproduction harnesses: the z-score asymmetry table,
//! singleton-group tracking, hyperparameter sweeps, and the estimator
//! ablation grid.
//!
//! Grid harnesses run one full (short) training per cell rather than
//! reweighting a shared run; a failed cell is recorded and the rest of the
//! grid continues. All tables emit CSV with a one-line schema header, or
//! JSON Lines on request.

use serde::Serialize;

use crate::config::TrainConfig;
use crate::env::sample_task_pool;
use crate::episode::zscore_closed_form;
use crate::error::{Error, Result};
use crate::parallel::par_map;
use crate::policy::Policy;
use crate::step_credit::{group_size_histogram, GroupSizeHistogram};
use crate::trainer::{derive_seed, greedy_rollout, train, RunReport};
use crate::types::{EpisodeGroup, Estimator};

/// One row of the binary z-score asymmetry table.
#[derive(Debug, Clone, Serialize)]
pub struct ZscoreRow {
    pub p: f64,
    pub z_succ: f64,
    pub z_fail: f64,
    /// `z_succ(p) * z_succ(1-p)`; identically 1 on (0, 1).
    pub product_identity: f64,
}

/// Evaluate the closed forms across a success-rate grid.
pub fn zscore_asymmetry_table(p_grid: &[f64]) -> Result<Vec<ZscoreRow>> {
    p_grid
        .iter()
        .map(|&p| {
            let (z_succ, z_fail) = zscore_closed_form(p)?;
            let (mirror, _) = zscore_closed_form(1.0 - p)?;
            Ok(ZscoreRow {
                p,
                z_succ,
                z_fail,
                product_identity: z_succ * mirror,
            })
        })
        .collect()
}

pub fn zscore_table_csv(rows: &[ZscoreRow]) -> String {
    let mut out = String::from("p,z_succ,z_fail,product_identity\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.p, r.z_succ, r.z_fail, r.product_identity
        ));
    }
    out
}

/// Per-iteration exact-match group-size fractions of a finished run, in
/// the four-bin table format.
#[derive(Debug, Clone, Serialize)]
pub struct SingletonRow {
    pub iteration: usize,
    pub size_1: f64,
    pub size_2: f64,
    pub size_3: f64,
    pub size_gt3: f64,
}

pub fn singleton_tracking(report: &RunReport) -> Vec<SingletonRow> {
    report
        .iterations
        .iter()
        .map(|m| SingletonRow {
            iteration: m.iteration,
            size_1: m.size_1,
            size_2: m.size_2,
            size_3: m.size_3,
            size_gt3: m.size_gt3,
        })
        .collect()
}

pub fn singleton_csv(rows: &[SingletonRow]) -> String {
    let mut out = String::from("iteration,size_1,size_2,size_3,size_gt3\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.iteration, r.size_1, r.size_2, r.size_3, r.size_gt3
        ));
    }
    out
}

/// Group-size fractions as a function of synonym noise.
#[derive(Debug, Clone, Serialize)]
pub struct NoiseGridRow {
    pub synonym_noise: f64,
    pub size_1: f64,
    pub size_2: f64,
    pub size_3: f64,
    pub size_gt3: f64,
}

/// Measure exact-match group sizes across a synonym-noise grid.
///
/// Rollouts are greedy under a fresh (uniform) policy so the only source
/// of divergence between group members is the observation noise itself;
/// task layouts and noise streams are shared across noise levels, so the
/// grid rows are coupled.
pub fn noise_singleton_grid(
    base: &TrainConfig,
    noise_values: &[f64],
    seed: u64,
) -> Result<Vec<NoiseGridRow>> {
    base.validate()?;
    let policy = Policy::new(base.policy.feature_dim, base.policy.hash_seed)?;
    let mut rows = Vec::with_capacity(noise_values.len());
    for &noise in noise_values {
        if !(0.0..=1.0).contains(&noise) {
            return Err(Error::InvalidConfig(format!(
                "synonym_noise grid value {noise} outside [0, 1]"
            )));
        }
        let mut env = base.env.clone();
        env.synonym_noise = noise;
        for entry in &mut env.difficulty_mix {
            entry.synonym_noise = Some(noise);
        }
        let pool = sample_task_pool(&env, base.tasks_per_iter, derive_seed(seed, &[1]))?;
        let mut histogram = GroupSizeHistogram::default();
        for (task_idx, task) in pool.iter().enumerate() {
            let trajectories = (0..base.group_size)
                .map(|k| {
                    greedy_rollout(
                        &policy,
                        task,
                        derive_seed(seed, &[2, task_idx as u64, k as u64]),
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            histogram.merge(&group_size_histogram(&EpisodeGroup::new(trajectories)?));
        }
        let fractions = histogram.fractions();
        rows.push(NoiseGridRow {
            synonym_noise: noise,
            size_1: fractions[0],
            size_2: fractions[1],
            size_3: fractions[2],
            size_gt3: fractions[3],
        });
    }
    Ok(rows)
}

pub fn noise_grid_csv(rows: &[NoiseGridRow]) -> String {
    let mut out = String::from("synonym_noise,size_1,size_2,size_3,size_gt3\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.synonym_noise, r.size_1, r.size_2, r.size_3, r.size_gt3
        ));
    }
    out
}

/// Hyperparameter axis a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Alpha,
    Beta,
    Tau,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Alpha => "alpha",
            SweepAxis::Beta => "beta",
            SweepAxis::Tau => "tau",
        }
    }

    fn apply(&self, config: &mut TrainConfig, value: f64) {
        match self {
            SweepAxis::Alpha => config.psc.alpha = value,
            SweepAxis::Beta => config.psc.beta = value,
            SweepAxis::Tau => config.psa.temperature = value,
        }
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alpha" => Ok(SweepAxis::Alpha),
            "beta" => Ok(SweepAxis::Beta),
            "tau" => Ok(SweepAxis::Tau),
            other => Err(Error::Config(format!(
                "unknown sweep axis '{other}' (expected alpha, beta, or tau)"
            ))),
        }
    }
}

/// One grid cell: a full training run at a fixed value and seed.
#[derive(Debug, Clone, Serialize)]
pub struct SweepCell {
    pub value: f64,
    pub seed: u64,
    pub final_success: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepGrid {
    pub axis: String,
    pub cells: Vec<SweepCell>,
}

impl SweepGrid {
    pub fn any_failed(&self) -> bool {
        self.cells.iter().any(|c| c.error.is_some())
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{},seed,final_success,error\n", self.axis);
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{}\n",
                c.value,
                c.seed,
                c.final_success.map_or(String::new(), |v| v.to_string()),
                c.error.as_deref().unwrap_or(""),
            ));
        }
        out
    }

    /// Mean final success per value, failed cells excluded.
    pub fn mean_by_value(&self) -> Vec<(f64, f64)> {
        let mut values: Vec<f64> = Vec::new();
        for c in &self.cells {
            if !values.contains(&c.value) {
                values.push(c.value);
            }
        }
        values
            .into_iter()
            .map(|v| {
                let successes: Vec<f64> = self
                    .cells
                    .iter()
                    .filter(|c| c.value == v)
                    .filter_map(|c| c.final_success)
                    .collect();
                let mean = successes.iter().sum::<f64>() / successes.len().max(1) as f64;
                (v, mean)
            })
            .collect()
    }
}

/// One full training run per (value, seed) cell; failures are recorded per
/// cell and do not abort the grid.
pub fn sweep(axis: SweepAxis, values: &[f64], base: &TrainConfig, seeds: &[u64]) -> SweepGrid {
    let mut jobs = Vec::new();
    for &value in values {
        for &seed in seeds {
            jobs.push((value, seed));
        }
    }
    let cells = par_map(&jobs, |&(value, seed)| {
        let mut config = base.clone();
        config.seed = seed;
        axis.apply(&mut config, value);
        match train(&config) {
            Ok(report) => SweepCell {
                value,
                seed,
                final_success: Some(report.final_success()),
                error: None,
            },
            Err(e) => SweepCell {
                value,
                seed,
                final_success: None,
                error: Some(e.to_string()),
            },
        }
    });
    SweepGrid {
        axis: axis.name().to_string(),
        cells,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationCell {
    pub estimator: Estimator,
    pub seed: u64,
    pub final_success: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationGrid {
    pub cells: Vec<AblationCell>,
}

impl AblationGrid {
    pub fn any_failed(&self) -> bool {
        self.cells.iter().any(|c| c.error.is_some())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("estimator,seed,final_success,error\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{}\n",
                c.estimator,
                c.seed,
                c.final_success.map_or(String::new(), |v| v.to_string()),
                c.error.as_deref().unwrap_or(""),
            ));
        }
        out
    }

    /// Mean and population std of final success per estimator.
    pub fn summary(&self) -> Vec<(Estimator, f64, f64, usize)> {
        Estimator::ALL
            .iter()
            .map(|&estimator| {
                let successes: Vec<f64> = self
                    .cells
                    .iter()
                    .filter(|c| c.estimator == estimator)
                    .filter_map(|c| c.final_success)
                    .collect();
                let n = successes.len();
                let mean = successes.iter().sum::<f64>() / n.max(1) as f64;
                let var = successes.iter().map(|s| (s - mean).powi(2)).sum::<f64>()
                    / n.max(1) as f64;
                (estimator, mean, var.sqrt(), n)
            })
            .collect()
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("estimator,mean_success,std_success,n_seeds\n");
        for (estimator, mean, std, n) in self.summary() {
            out.push_str(&format!("{estimator},{mean},{std},{n}\n"));
        }
        out
    }
}

/// All five estimators under identical seeds and configs.
pub fn ablation_grid(base: &TrainConfig, seeds: &[u64]) -> AblationGrid {
    let mut jobs = Vec::new();
    for &estimator in &Estimator::ALL {
        for &seed in seeds {
            jobs.push((estimator, seed));
        }
    }
    let cells = par_map(&jobs, |&(estimator, seed)| {
        let mut config = base.clone();
        config.estimator = estimator;
        config.seed = seed;
        match train(&config) {
            Ok(report) => AblationCell {
                estimator,
                seed,
                final_success: Some(report.final_success()),
                error: None,
            },
            Err(e) => AblationCell {
                estimator,
                seed,
                final_success: None,
                error: Some(e.to_string()),
            },
        }
    });
    AblationGrid { cells }
}

/// Rows of any serializable table as JSON Lines.
pub fn rows_to_jsonl<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut out = String::new();
    for row in rows {
        out.push_str(&serde_json::to_string(row)?);
        out.push('\n');
    }
    Ok(out)
}
