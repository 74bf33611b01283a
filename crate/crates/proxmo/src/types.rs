//! Canonical data model: trajectories, episode groups, advantage tensors.
//!
//! All types are immutable after construction and safe to share across
//! threads. Construction validates the invariants once so downstream code
//! can rely on them without re-checking.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for the stored-vs-recomputed total return check.
pub const RETURN_TOLERANCE: f64 = 1e-12;

/// Tolerance for deciding whether a return counts as binary 0/1.
pub const BINARY_TOLERANCE: f64 = 1e-9;

/// One environment interaction: observation, chosen action, reward.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub state_text: String,
    pub action_id: usize,
    pub admissible_actions: Vec<String>,
    pub reward: f64,
    /// Log probability of the action under the policy that sampled it.
    pub log_prob_behavior: f64,
}

impl Step {
    pub fn new(
        state_text: impl Into<String>,
        action_id: usize,
        admissible_actions: Vec<String>,
        reward: f64,
        log_prob_behavior: f64,
    ) -> Result<Self> {
        if action_id >= admissible_actions.len() {
            return Err(Error::InvalidAction {
                action_id,
                n_actions: admissible_actions.len(),
            });
        }
        if log_prob_behavior > 0.0 {
            return Err(Error::PositiveLogProb(log_prob_behavior));
        }
        Ok(Self {
            state_text: state_text.into(),
            action_id,
            admissible_actions,
            reward,
            log_prob_behavior,
        })
    }

    /// The action string this step actually took.
    pub fn action_text(&self) -> &str {
        &self.admissible_actions[self.action_id]
    }
}

/// An ordered sequence of steps plus the (validated) terminal return.
///
/// The total return is stored redundantly and checked against the sum of
/// step rewards at construction, so serialized trajectories are
/// self-checking.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub task_id: String,
    pub steps: Vec<Step>,
    pub total_return: f64,
}

impl Trajectory {
    pub fn new(task_id: impl Into<String>, steps: Vec<Step>, total_return: f64) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::EmptyTrajectory);
        }
        let computed: f64 = steps.iter().map(|s| s.reward).sum();
        if (computed - total_return).abs() > RETURN_TOLERANCE {
            return Err(Error::ReturnMismatch {
                stored: total_return,
                computed,
            });
        }
        Ok(Self {
            task_id: task_id.into(),
            steps,
            total_return,
        })
    }

    /// Build from steps, computing the total return from the rewards.
    pub fn from_steps(task_id: impl Into<String>, steps: Vec<Step>) -> Result<Self> {
        let total: f64 = steps.iter().map(|s| s.reward).sum();
        Self::new(task_id, steps, total)
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Sum of step rewards.
pub fn total_return(traj: &Trajectory) -> f64 {
    traj.steps.iter().map(|s| s.reward).sum()
}

/// N trajectories sampled from one task instance.
#[derive(Debug, Clone)]
pub struct EpisodeGroup {
    trajectories: Vec<Trajectory>,
}

impl EpisodeGroup {
    pub fn new(trajectories: Vec<Trajectory>) -> Result<Self> {
        if trajectories.is_empty() {
            return Err(Error::GroupTooSmall(0));
        }
        let task_id = &trajectories[0].task_id;
        for t in &trajectories[1..] {
            if &t.task_id != task_id {
                return Err(Error::MixedTaskIds(task_id.clone(), t.task_id.clone()));
            }
        }
        Ok(Self { trajectories })
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn group_size(&self) -> usize {
        self.trajectories.len()
    }

    pub fn task_id(&self) -> &str {
        &self.trajectories[0].task_id
    }

    pub fn returns(&self) -> Vec<f64> {
        self.trajectories.iter().map(|t| t.total_return).collect()
    }
}

/// Fraction of trajectories with terminal return 1.
///
/// Errors with [`Error::NonBinaryReward`] if any return is not 0 or 1
/// within [`BINARY_TOLERANCE`]; the success-rate machinery is only defined
/// for binary outcomes.
pub fn success_rate(group: &EpisodeGroup) -> Result<f64> {
    let mut successes = 0usize;
    for t in group.trajectories() {
        let r = t.total_return;
        if (r - 1.0).abs() <= BINARY_TOLERANCE {
            successes += 1;
        } else if r.abs() > BINARY_TOLERANCE {
            return Err(Error::NonBinaryReward(r));
        }
    }
    Ok(successes as f64 / group.group_size() as f64)
}

/// Which advantage pipeline produced a tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Episode z-score broadcast over steps; no step term.
    Grpo,
    /// Success-rate-modulated episode advantage; no step term.
    GrpoPsc,
    /// Episode z-score plus exact-match step baselines.
    HardGroup,
    /// Episode z-score plus proximity-weighted soft step baselines.
    Psa,
    /// Modulated episode advantage plus soft step baselines.
    Proxmo,
}

impl Estimator {
    pub const ALL: [Estimator; 5] = [
        Estimator::Grpo,
        Estimator::GrpoPsc,
        Estimator::HardGroup,
        Estimator::Psa,
        Estimator::Proxmo,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Estimator::Grpo => "grpo",
            Estimator::GrpoPsc => "grpo_psc",
            Estimator::HardGroup => "hard_group",
            Estimator::Psa => "psa",
            Estimator::Proxmo => "proxmo",
        }
    }
}

impl std::str::FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grpo" => Ok(Estimator::Grpo),
            "grpo_psc" => Ok(Estimator::GrpoPsc),
            "hard_group" => Ok(Estimator::HardGroup),
            "psa" => Ok(Estimator::Psa),
            "proxmo" => Ok(Estimator::Proxmo),
            other => Err(Error::Config(format!("unknown estimator '{other}'"))),
        }
    }
}

impl std::fmt::Display for Estimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-trajectory and per-step advantage values, with provenance.
///
/// Invariant: `combined[i][t] == modulated_episode[i] + omega * step[i][t]`
/// for the omega the tensor was built with, and all shapes match the source
/// group exactly.
#[derive(Debug, Clone)]
pub struct AdvantageTensor {
    pub estimator: Estimator,
    pub episode_adv: Vec<f64>,
    pub modulated_episode_adv: Vec<f64>,
    pub step_adv: Vec<Vec<f64>>,
    pub combined_adv: Vec<Vec<f64>>,
}

impl AdvantageTensor {
    /// Assemble a tensor, computing `combined = modulated + omega * step`
    /// and validating shapes against the group.
    pub fn assemble(
        estimator: Estimator,
        group: &EpisodeGroup,
        episode_adv: Vec<f64>,
        modulated_episode_adv: Vec<f64>,
        step_adv: Vec<Vec<f64>>,
        omega: f64,
    ) -> Result<Self> {
        let n = group.group_size();
        if episode_adv.len() != n || modulated_episode_adv.len() != n || step_adv.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "advantage rows {} / {} / {} vs group size {n}",
                episode_adv.len(),
                modulated_episode_adv.len(),
                step_adv.len()
            )));
        }
        for (i, traj) in group.trajectories().iter().enumerate() {
            if step_adv[i].len() != traj.len() {
                return Err(Error::ShapeMismatch(format!(
                    "trajectory {i}: {} step advantages vs {} steps",
                    step_adv[i].len(),
                    traj.len()
                )));
            }
        }
        let combined_adv = modulated_episode_adv
            .iter()
            .zip(&step_adv)
            .map(|(&e, row)| row.iter().map(|&s| e + omega * s).collect())
            .collect();
        Ok(Self {
            estimator,
            episode_adv,
            modulated_episode_adv,
            step_adv,
            combined_adv,
        })
    }
}

/// JSON Lines record for one trajectory. Field names are part of the
/// stable on-disk format.
#[derive(Debug, Serialize, Deserialize)]
struct TrajectoryRecord {
    task_id: String,
    steps: Vec<StepRecord>,
    total_return: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct StepRecord {
    state: String,
    actions: Vec<String>,
    action_id: usize,
    reward: f64,
    log_prob: f64,
}

/// Serialize trajectories as JSON Lines, one object per trajectory.
pub fn write_trajectories_jsonl<W: Write>(writer: &mut W, trajectories: &[Trajectory]) -> Result<()> {
    for traj in trajectories {
        let record = TrajectoryRecord {
            task_id: traj.task_id.clone(),
            steps: traj
                .steps
                .iter()
                .map(|s| StepRecord {
                    state: s.state_text.clone(),
                    actions: s.admissible_actions.clone(),
                    action_id: s.action_id,
                    reward: s.reward,
                    log_prob: s.log_prob_behavior,
                })
                .collect(),
            total_return: traj.total_return,
        };
        serde_json::to_writer(&mut *writer, &record)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Read trajectories from JSON Lines, re-validating every invariant.
pub fn read_trajectories_jsonl<R: BufRead>(reader: R) -> Result<Vec<Trajectory>> {
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TrajectoryRecord = serde_json::from_str(&line)?;
        let steps = record
            .steps
            .into_iter()
            .map(|s| Step::new(s.state, s.action_id, s.actions, s.reward, s.log_prob))
            .collect::<Result<Vec<_>>>()?;
        out.push(Trajectory::new(record.task_id, steps, record.total_return)?);
    }
    Ok(out)
}
