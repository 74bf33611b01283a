//! Step-level credit: proximity-weighted soft baselines and the hard
//! exact-match comparator.
//!
//! For each step t of trajectory i, the candidate set is the trajectories
//! of the group that are long enough to have a step t (same-step indexing;
//! trajectories that terminated earlier are excluded). The soft baseline is
//! a softmax-weighted combination of candidate discounted returns, with
//! weights driven by TF-IDF cosine similarity between the step-t state
//! texts; the hard comparator restricts candidates to byte-identical state
//! texts with uniform weights. A step whose candidate set is empty or
//! reduces to the trajectory itself gets advantage exactly 0.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text_sim::{cosine, tokenize, vectorize_tokens, SparseVector, Vocabulary};
use crate::types::{EpisodeGroup, Trajectory};

/// Whether a trajectory participates in its own baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelfMode {
    IncludeSelf,
    /// Drop the trajectory itself from the candidate set whenever other
    /// candidates exist. Including self at low temperature lets the
    /// self-similarity term dominate and collapses the advantage toward 0.
    LeaveOneOut,
}

/// Proximity-based soft aggregation parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PsaConfig {
    /// Softmax temperature; low values approximate nearest-neighbor
    /// matching, high values approach uniform weighting.
    pub temperature: f64,
    /// Discount factor for per-step tail returns.
    pub gamma: f64,
    pub self_mode: SelfMode,
}

impl Default for PsaConfig {
    fn default() -> Self {
        Self {
            temperature: 0.1,
            gamma: 0.95,
            self_mode: SelfMode::LeaveOneOut,
        }
    }
}

impl PsaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) {
            return Err(Error::Config(format!(
                "psa.temperature must be > 0, got {}",
                self.temperature
            )));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config(format!(
                "psa.gamma must be in (0, 1], got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

/// Discounted tail return `R_t = sum_{k=t..T} gamma^(k-t) r_k` for every
/// step, computed by a backward pass.
pub fn discounted_returns(traj: &Trajectory, gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; traj.len()];
    let mut acc = 0.0;
    for (t, step) in traj.steps.iter().enumerate().rev() {
        acc = step.reward + gamma * acc;
        out[t] = acc;
    }
    out
}

/// Softmax of `similarities / temperature` with max-subtraction. Output
/// sums to 1 and is uniform for equal similarities.
pub fn soft_weights(similarities: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if similarities.is_empty() {
        return Err(Error::EmptyCandidateSet);
    }
    let max = similarities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = similarities
        .iter()
        .map(|&s| ((s - max) / temperature).exp())
        .collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// Candidate trajectory indices for step `t`: everything in the group long
/// enough to have a step `t`, minus self under leave-one-out (when other
/// candidates exist).
fn candidates_at(group: &EpisodeGroup, i: usize, t: usize, self_mode: SelfMode) -> Vec<usize> {
    let mut ids: Vec<usize> = group
        .trajectories()
        .iter()
        .enumerate()
        .filter(|(_, traj)| traj.len() > t)
        .map(|(j, _)| j)
        .collect();
    if self_mode == SelfMode::LeaveOneOut && ids.len() > 1 {
        ids.retain(|&j| j != i);
    }
    ids
}

/// Per-group cache of step-state vectors, deduplicated by text so each
/// distinct observation is vectorized once.
struct StepVectors {
    /// vector id per (trajectory, step)
    ids: Vec<Vec<usize>>,
    vectors: Vec<SparseVector>,
}

impl StepVectors {
    fn build(group: &EpisodeGroup, vocab: &Vocabulary) -> Self {
        let mut by_text: HashMap<&str, usize> = HashMap::new();
        let mut vectors = Vec::new();
        let ids = group
            .trajectories()
            .iter()
            .map(|traj| {
                traj.steps
                    .iter()
                    .map(|step| {
                        *by_text.entry(step.state_text.as_str()).or_insert_with(|| {
                            vectors
                                .push(vectorize_tokens(&tokenize(&step.state_text), vocab));
                            vectors.len() - 1
                        })
                    })
                    .collect()
            })
            .collect();
        Self { ids, vectors }
    }

    fn similarity(&self, a: usize, b: usize, memo: &mut HashMap<(usize, usize), f64>) -> f64 {
        let key = (a.min(b), a.max(b));
        *memo
            .entry(key)
            .or_insert_with(|| cosine(&self.vectors[key.0], &self.vectors[key.1]))
    }
}

/// Proximity-weighted soft step advantages for every step of every
/// trajectory in the group.
pub fn psa_step_advantages(
    group: &EpisodeGroup,
    vocab: &Vocabulary,
    cfg: &PsaConfig,
) -> Result<Vec<Vec<f64>>> {
    let tails: Vec<Vec<f64>> = group
        .trajectories()
        .iter()
        .map(|t| discounted_returns(t, cfg.gamma))
        .collect();
    let vectors = StepVectors::build(group, vocab);
    let mut memo: HashMap<(usize, usize), f64> = HashMap::new();
    let mut out = Vec::with_capacity(group.group_size());
    for (i, traj) in group.trajectories().iter().enumerate() {
        let mut advantages = vec![0.0; traj.len()];
        for t in 0..traj.len() {
            let ids = candidates_at(group, i, t, cfg.self_mode);
            if ids.is_empty() || ids == [i] {
                continue; // singleton rule: advantage stays 0
            }
            let own = vectors.ids[i][t];
            let sims: Vec<f64> = ids
                .iter()
                .map(|&j| vectors.similarity(own, vectors.ids[j][t], &mut memo))
                .collect();
            let weights = soft_weights(&sims, cfg.temperature)?;
            // A = sum_j w_j (v_i - v_j) is algebraically R_t - B_t (the
            // weights sum to 1) and exactly zero when all tails coincide.
            advantages[t] = ids
                .iter()
                .zip(&weights)
                .map(|(&j, &w)| w * (tails[i][t] - tails[j][t]))
                .sum();
        }
        out.push(advantages);
    }
    Ok(out)
}

/// Hard exact-match comparator: candidates are restricted to trajectories
/// whose step-t state text is byte-identical, with uniform weights.
pub fn hard_group_advantages(group: &EpisodeGroup, cfg: &PsaConfig) -> Result<Vec<Vec<f64>>> {
    let tails: Vec<Vec<f64>> = group
        .trajectories()
        .iter()
        .map(|t| discounted_returns(t, cfg.gamma))
        .collect();
    let mut out = Vec::with_capacity(group.group_size());
    for (i, traj) in group.trajectories().iter().enumerate() {
        let mut advantages = vec![0.0; traj.len()];
        for t in 0..traj.len() {
            let text = &traj.steps[t].state_text;
            let mut ids = candidates_at(group, i, t, cfg.self_mode);
            ids.retain(|&j| &group.trajectories()[j].steps[t].state_text == text);
            if ids.is_empty() || ids == [i] {
                continue;
            }
            let w = 1.0 / ids.len() as f64;
            advantages[t] = ids
                .iter()
                .map(|&j| w * (tails[i][t] - tails[j][t]))
                .sum();
        }
        out.push(advantages);
    }
    Ok(out)
}

/// Distribution of exact-match candidate-set sizes over all steps of a
/// group, binned as {1, 2, 3, >3}. The candidate set here always includes
/// the step itself, so a singleton means no other trajectory matched.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GroupSizeHistogram {
    pub counts: [usize; 4],
    pub total_steps: usize,
}

impl GroupSizeHistogram {
    pub fn record(&mut self, candidate_set_size: usize) {
        let bin = match candidate_set_size {
            0 | 1 => 0,
            2 => 1,
            3 => 2,
            _ => 3,
        };
        self.counts[bin] += 1;
        self.total_steps += 1;
    }

    pub fn merge(&mut self, other: &GroupSizeHistogram) {
        for (a, b) in self.counts.iter_mut().zip(other.counts) {
            *a += b;
        }
        self.total_steps += other.total_steps;
    }

    /// Fractions over {1, 2, 3, >3}; all zeros when no steps were recorded.
    pub fn fractions(&self) -> [f64; 4] {
        if self.total_steps == 0 {
            return [0.0; 4];
        }
        let n = self.total_steps as f64;
        [
            self.counts[0] as f64 / n,
            self.counts[1] as f64 / n,
            self.counts[2] as f64 / n,
            self.counts[3] as f64 / n,
        ]
    }

    pub fn singleton_fraction(&self) -> f64 {
        self.fractions()[0]
    }
}

/// Exact-match group-size histogram over every step of the group.
pub fn group_size_histogram(group: &EpisodeGroup) -> GroupSizeHistogram {
    let mut hist = GroupSizeHistogram::default();
    for (i, traj) in group.trajectories().iter().enumerate() {
        for t in 0..traj.len() {
            let text = &traj.steps[t].state_text;
            let size = group
                .trajectories()
                .iter()
                .enumerate()
                .filter(|(j, other)| {
                    (*j == i) || (other.len() > t && &other.steps[t].state_text == text)
                })
                .count();
            hist.record(size);
        }
    }
    hist
}
