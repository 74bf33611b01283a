//! Softmax-linear policy over hashed bag-of-words features.
//!
//! Features of a (state, action) pair are the tokens of both texts, hashed
//! with a seeded FNV into `[0, D)` using the signed-hash trick, then
//! L2-normalized. Hashing bounds memory, handles unseen observation text,
//! and is fully deterministic for a fixed seed, which keeps snapshot replay
//! exact. Log-probability gradients have the closed softmax-linear form
//! `phi(s,a) - sum_b pi(b|s) phi(s,b)`, so no autodiff is involved.

use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text_sim::{tokenize, SparseVector};

pub const MIN_FEATURE_DIM: usize = 16;
pub const DEFAULT_FEATURE_DIM: usize = 512;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Seeded FNV-1a over a domain byte plus the token bytes.
fn hash_token(seed: u64, domain: u8, token: &str) -> u64 {
    let mut h = FNV_OFFSET ^ seed;
    h ^= u64::from(domain);
    h = h.wrapping_mul(FNV_PRIME);
    for b in token.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Hashed bag-of-words features of a (state, action) pair: signed counts
/// in `[0, D)`, L2-normalized. Empty inputs yield the zero vector.
pub fn featurize(state_text: &str, action_text: &str, dim: usize, seed: u64) -> SparseVector {
    let mut entries: Vec<(usize, f64)> = Vec::new();
    for (domain, text) in [(b's', state_text), (b'a', action_text)] {
        for token in tokenize(text) {
            let h = hash_token(seed, domain, &token);
            let index = ((h >> 1) % dim as u64) as usize;
            let sign = if h & 1 == 0 { 1.0 } else { -1.0 };
            entries.push((index, sign));
        }
    }
    let mut v = SparseVector::from_entries(entries);
    v.normalize();
    v
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|&l| l - max - log_sum).collect()
}

/// Linear policy parameters: a weight vector of dimension D plus the
/// feature hash seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    weights: Vec<f64>,
    feature_dim: usize,
    hash_seed: u64,
}

impl Policy {
    /// Zero-initialized (uniform) policy.
    pub fn new(feature_dim: usize, hash_seed: u64) -> Result<Self> {
        if feature_dim < MIN_FEATURE_DIM {
            return Err(Error::Config(format!(
                "feature_dim must be at least {MIN_FEATURE_DIM}, got {feature_dim}"
            )));
        }
        Ok(Self {
            weights: vec![0.0; feature_dim],
            feature_dim,
            hash_seed,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn hash_seed(&self) -> u64 {
        self.hash_seed
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn featurize(&self, state_text: &str, action_text: &str) -> SparseVector {
        featurize(state_text, action_text, self.feature_dim, self.hash_seed)
    }

    /// One logit per admissible action: `<weights, phi(state, action)>`.
    pub fn action_logits(&self, state_text: &str, admissible_actions: &[String]) -> Result<Vec<f64>> {
        if admissible_actions.is_empty() {
            return Err(Error::NoAdmissibleActions);
        }
        Ok(admissible_actions
            .iter()
            .map(|action| {
                self.featurize(state_text, action)
                    .entries()
                    .iter()
                    .map(|&(i, w)| self.weights[i] * w)
                    .sum()
            })
            .collect())
    }

    pub fn action_log_probs(&self, state_text: &str, admissible_actions: &[String]) -> Result<Vec<f64>> {
        Ok(log_softmax(&self.action_logits(state_text, admissible_actions)?))
    }

    /// Sample an action from the softmax distribution; returns the index
    /// and its log probability. Randomness comes only from the caller's rng.
    pub fn sample_action<R: Rng>(
        &self,
        state_text: &str,
        admissible_actions: &[String],
        rng: &mut R,
    ) -> Result<(usize, f64)> {
        let log_probs = self.action_log_probs(state_text, admissible_actions)?;
        let u: f64 = rng.gen();
        let mut cumulative = 0.0;
        let mut chosen = log_probs.len() - 1;
        for (i, lp) in log_probs.iter().enumerate() {
            cumulative += lp.exp();
            if u < cumulative {
                chosen = i;
                break;
            }
        }
        Ok((chosen, log_probs[chosen]))
    }

    /// Argmax action with first-index tie-breaking; deterministic.
    pub fn greedy_action(&self, state_text: &str, admissible_actions: &[String]) -> Result<(usize, f64)> {
        let log_probs = self.action_log_probs(state_text, admissible_actions)?;
        let mut best = 0;
        for (i, lp) in log_probs.iter().enumerate() {
            if *lp > log_probs[best] {
                best = i;
            }
        }
        Ok((best, log_probs[best]))
    }

    /// Closed-form score function `phi(s,a) - sum_b pi(b|s) phi(s,b)` as a
    /// dense parameter-shaped vector.
    pub fn log_prob_gradient(
        &self,
        state_text: &str,
        admissible_actions: &[String],
        action_id: usize,
    ) -> Result<Vec<f64>> {
        if action_id >= admissible_actions.len() {
            return Err(Error::InvalidAction {
                action_id,
                n_actions: admissible_actions.len(),
            });
        }
        let log_probs = self.action_log_probs(state_text, admissible_actions)?;
        let mut grad = vec![0.0; self.feature_dim];
        for (b, action) in admissible_actions.iter().enumerate() {
            let coeff = if b == action_id { 1.0 } else { 0.0 } - log_probs[b].exp();
            for &(i, w) in self.featurize(state_text, action).entries() {
                grad[i] += coeff * w;
            }
        }
        Ok(grad)
    }

    /// Ascent step `w <- w + lr * gradient`; the objective is maximized.
    pub fn sgd_update(&self, gradient: &[f64], learning_rate: f64) -> Result<Policy> {
        if gradient.len() != self.feature_dim {
            return Err(Error::ShapeMismatch(format!(
                "gradient length {} vs feature_dim {}",
                gradient.len(),
                self.feature_dim
            )));
        }
        let weights = self
            .weights
            .iter()
            .zip(gradient)
            .map(|(w, g)| w + learning_rate * g)
            .collect();
        Ok(Policy {
            weights,
            feature_dim: self.feature_dim,
            hash_seed: self.hash_seed,
        })
    }

    pub fn snapshot(&self) -> PolicySnapshot {
        PolicySnapshot {
            policy: self.clone(),
        }
    }

    pub fn write_checkpoint<W: Write>(&self, writer: &mut W) -> Result<()> {
        let record = CheckpointRecord {
            version: CHECKPOINT_VERSION,
            feature_dim: self.feature_dim,
            hash_seed: self.hash_seed,
            weights: self.weights.clone(),
        };
        serde_json::to_writer(writer, &record)?;
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(reader: R) -> Result<Policy> {
        let record: CheckpointRecord = serde_json::from_reader(reader)?;
        if record.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint version {}",
                record.version
            )));
        }
        if record.weights.len() != record.feature_dim {
            return Err(Error::ShapeMismatch(format!(
                "checkpoint has {} weights but feature_dim {}",
                record.weights.len(),
                record.feature_dim
            )));
        }
        Ok(Policy {
            weights: record.weights,
            feature_dim: record.feature_dim,
            hash_seed: record.hash_seed,
        })
    }
}

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointRecord {
    version: u32,
    feature_dim: usize,
    hash_seed: u64,
    weights: Vec<f64>,
}

/// Frozen copy of a policy, used as the importance-ratio reference and the
/// KL reference. Immutable after creation.
#[derive(Debug, Clone)]
pub struct PolicySnapshot {
    policy: Policy,
}

impl PolicySnapshot {
    pub fn feature_dim(&self) -> usize {
        self.policy.feature_dim
    }

    pub fn hash_seed(&self) -> u64 {
        self.policy.hash_seed
    }

    pub fn action_logits(&self, state_text: &str, admissible_actions: &[String]) -> Result<Vec<f64>> {
        self.policy.action_logits(state_text, admissible_actions)
    }

    pub fn action_log_probs(&self, state_text: &str, admissible_actions: &[String]) -> Result<Vec<f64>> {
        self.policy.action_log_probs(state_text, admissible_actions)
    }
}
