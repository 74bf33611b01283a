//! Combined advantages and the clipped surrogate objective with exact
//! categorical KL regularization.
//!
//! The objective is the per-step mean of `min(rho*A, clip(rho, 1±eps)*A)`
//! minus `kl_coeff` times the per-step mean KL between the current policy
//! and the reference policy over the admissible-action set at each visited
//! state. Trajectories have varying lengths, so both means are normalized
//! by the batch's total step count. Gradients are analytic: the clipped
//! branch contributes zero wherever it is active and binding, and the
//! unclipped branch is taken at exact ties.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{Policy, PolicySnapshot};
use crate::types::{AdvantageTensor, EpisodeGroup};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObjectiveConfig {
    /// Balance between the episode-level and step-level advantage terms.
    pub omega: f64,
    /// PPO clipping parameter epsilon.
    pub clip_epsilon: f64,
    /// KL regularization strength toward the reference policy.
    pub kl_coeff: f64,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self {
            omega: 1.0,
            clip_epsilon: 0.2,
            kl_coeff: 0.0,
        }
    }
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega >= 0.0) {
            return Err(Error::Config(format!(
                "objective.omega must be >= 0, got {}",
                self.omega
            )));
        }
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return Err(Error::Config(format!(
                "objective.clip_epsilon must be in (0, 1), got {}",
                self.clip_epsilon
            )));
        }
        if !(self.kl_coeff >= 0.0) {
            return Err(Error::Config(format!(
                "objective.kl_coeff must be >= 0, got {}",
                self.kl_coeff
            )));
        }
        Ok(())
    }
}

/// Broadcast each trajectory's episode advantage across its steps and add
/// the omega-scaled step advantages.
pub fn combine_advantages(
    episode_adv: &[f64],
    step_adv: &[Vec<f64>],
    omega: f64,
) -> Result<Vec<Vec<f64>>> {
    if episode_adv.len() != step_adv.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} episode advantages vs {} step rows",
            episode_adv.len(),
            step_adv.len()
        )));
    }
    Ok(episode_adv
        .iter()
        .zip(step_adv)
        .map(|(&e, row)| row.iter().map(|&s| e + omega * s).collect())
        .collect())
}

/// `min(rho * A, clip(rho, 1-eps, 1+eps) * A)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, epsilon: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - epsilon, 1.0 + epsilon);
    (ratio * advantage).min(clipped * advantage)
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|&l| l - max - log_sum).collect()
}

/// Exact KL divergence between the softmax distributions of two logit
/// lists, computed in log space.
pub fn categorical_kl(p_logits: &[f64], q_logits: &[f64]) -> Result<f64> {
    if p_logits.len() != q_logits.len() {
        return Err(Error::LengthMismatch(p_logits.len(), q_logits.len()));
    }
    if p_logits.is_empty() {
        return Err(Error::LengthMismatch(0, 0));
    }
    let lp = log_softmax(p_logits);
    let lq = log_softmax(q_logits);
    let kl = lp
        .iter()
        .zip(&lq)
        .map(|(&a, &b)| a.exp() * (a - b))
        .sum::<f64>();
    // Rounding can leave a tiny negative residue for near-identical inputs.
    Ok(kl.max(0.0))
}

/// Result of evaluating the objective on a batch.
#[derive(Debug, Clone)]
pub struct BatchEval {
    pub value: f64,
    pub gradient: Vec<f64>,
    /// Per-step mean KL against the reference policy.
    pub mean_kl: f64,
    /// Fraction of steps where the clipped branch was active and binding.
    pub clip_fraction: f64,
}

fn check_snapshots(policy: &Policy, old: &PolicySnapshot, reference: &PolicySnapshot) -> Result<()> {
    for (name, dim, seed) in [
        ("old", old.feature_dim(), old.hash_seed()),
        ("reference", reference.feature_dim(), reference.hash_seed()),
    ] {
        if dim != policy.feature_dim() || seed != policy.hash_seed() {
            return Err(Error::StaleSnapshot(format!(
                "{name} snapshot has feature_dim {dim} / hash_seed {seed}, \
                 policy has {} / {}; logit spaces disagree",
                policy.feature_dim(),
                policy.hash_seed()
            )));
        }
    }
    Ok(())
}

/// Objective value and analytic gradient over a batch of groups.
///
/// Importance ratios use the behavior log-probabilities stored in the
/// steps (the old policy at collection time); the `old` snapshot is
/// checked for compatibility so ratios and logits live in the same
/// parameter space. Accumulation runs in a fixed group/trajectory/step
/// order so results are bit-stable.
pub fn objective_and_gradient(
    groups: &[EpisodeGroup],
    tensors: &[AdvantageTensor],
    policy: &Policy,
    old: &PolicySnapshot,
    reference: &PolicySnapshot,
    cfg: &ObjectiveConfig,
) -> Result<BatchEval> {
    check_snapshots(policy, old, reference)?;
    if groups.len() != tensors.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} groups vs {} advantage tensors",
            groups.len(),
            tensors.len()
        )));
    }
    let total_steps: usize = groups
        .iter()
        .flat_map(|g| g.trajectories())
        .map(|t| t.len())
        .sum();
    if total_steps == 0 {
        return Err(Error::ShapeMismatch("batch has no steps".into()));
    }
    let scale = 1.0 / total_steps as f64;

    let mut value = 0.0;
    let mut kl_sum = 0.0;
    let mut clipped_steps = 0usize;
    let mut gradient = vec![0.0; policy.feature_dim()];

    for (group, tensor) in groups.iter().zip(tensors) {
        if tensor.combined_adv.len() != group.group_size() {
            return Err(Error::ShapeMismatch(format!(
                "tensor rows {} vs group size {}",
                tensor.combined_adv.len(),
                group.group_size()
            )));
        }
        for (i, traj) in group.trajectories().iter().enumerate() {
            if tensor.combined_adv[i].len() != traj.len() {
                return Err(Error::ShapeMismatch(format!(
                    "tensor row {i} has {} steps, trajectory has {}",
                    tensor.combined_adv[i].len(),
                    traj.len()
                )));
            }
            for (t, step) in traj.steps.iter().enumerate() {
                let advantage = tensor.combined_adv[i][t];
                let logits = policy.action_logits(&step.state_text, &step.admissible_actions)?;
                let log_probs = log_softmax(&logits);
                let ratio = (log_probs[step.action_id] - step.log_prob_behavior).exp();
                value += scale * clipped_surrogate(ratio, advantage, cfg.clip_epsilon);

                // Clipped and binding: the surrogate is locally constant.
                let binding = (advantage > 0.0 && ratio > 1.0 + cfg.clip_epsilon)
                    || (advantage < 0.0 && ratio < 1.0 - cfg.clip_epsilon);
                let surrogate_coeff = if binding {
                    clipped_steps += 1;
                    0.0
                } else {
                    scale * advantage * ratio
                };

                // KL is always reported as a metric, even at kl_coeff = 0.
                let ref_log_probs =
                    reference.action_log_probs(&step.state_text, &step.admissible_actions)?;
                let kl = log_probs
                    .iter()
                    .zip(&ref_log_probs)
                    .map(|(&a, &b)| a.exp() * (a - b))
                    .sum::<f64>()
                    .max(0.0);
                kl_sum += kl;
                value -= cfg.kl_coeff * scale * kl;

                if !value.is_finite() {
                    return Err(Error::NumericalDivergence("objective value".into()));
                }

                // Per-action coefficient collecting the surrogate score term
                // and the exact KL gradient:
                //   grad += c*(phi_a - phibar)
                //         - kl_coeff*scale * sum_b pi_b (lp_b - lq_b) (phi_b - phibar)
                for (b, action) in step.admissible_actions.iter().enumerate() {
                    let pi_b = log_probs[b].exp();
                    let indicator = if b == step.action_id { 1.0 } else { 0.0 };
                    let mut coeff = surrogate_coeff * (indicator - pi_b);
                    if cfg.kl_coeff > 0.0 {
                        let diff = log_probs[b] - ref_log_probs[b];
                        coeff -= cfg.kl_coeff * scale * pi_b * (diff - kl);
                    }
                    if coeff != 0.0 {
                        for &(k, w) in policy.featurize(&step.state_text, action).entries() {
                            gradient[k] += coeff * w;
                        }
                    }
                }
            }
        }
    }

    if gradient.iter().any(|g| !g.is_finite()) {
        return Err(Error::NumericalDivergence("gradient".into()));
    }

    Ok(BatchEval {
        value,
        gradient,
        mean_kl: kl_sum * scale,
        clip_fraction: clipped_steps as f64 / total_steps as f64,
    })
}

/// Objective value only, sharing the exact arithmetic of
/// [`objective_and_gradient`]; used by finite-difference checks.
pub fn objective_value(
    groups: &[EpisodeGroup],
    tensors: &[AdvantageTensor],
    policy: &Policy,
    old: &PolicySnapshot,
    reference: &PolicySnapshot,
    cfg: &ObjectiveConfig,
) -> Result<f64> {
    Ok(objective_and_gradient(groups, tensors, policy, old, reference, cfg)?.value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combine_broadcasts_and_scales() {
        let episode = vec![0.5, -1.0];
        let step = vec![vec![0.0, -0.2], vec![0.1, 0.0, 0.3]];
        let combined = combine_advantages(&episode, &step, 1.0).unwrap();
        assert!((combined[0][1] - 0.3).abs() < 1e-12);
        assert!((combined[1][2] - (-0.7)).abs() < 1e-12);

        let omega_zero = combine_advantages(&episode, &step, 0.0).unwrap();
        assert_eq!(omega_zero[0], vec![0.5, 0.5]);
        assert_eq!(omega_zero[1], vec![-1.0, -1.0, -1.0]);

        assert!(combine_advantages(&episode, &step[..1], 1.0).is_err());
    }

    #[test]
    fn surrogate_on_policy_identity() {
        for adv in [-2.0, 0.0, 3.5] {
            for eps in [0.1, 0.2, 0.5] {
                assert_eq!(clipped_surrogate(1.0, adv, eps), adv);
            }
        }
    }

    #[test]
    fn surrogate_spot_values() {
        assert!((clipped_surrogate(1.5, 2.0, 0.2) - 2.4).abs() < 1e-12);
        assert!((clipped_surrogate(0.5, -1.0, 0.2) - (-0.8)).abs() < 1e-12);
    }

    #[test]
    fn surrogate_is_pessimistic() {
        for &ratio in &[0.1, 0.5, 0.9, 1.0, 1.1, 1.9, 3.0] {
            for &adv in &[-2.0, -0.1, 0.0, 0.1, 2.0] {
                assert!(clipped_surrogate(ratio, adv, 0.2) <= ratio * adv + 1e-15);
            }
        }
    }

    #[test]
    fn kl_identity_and_shift_invariance() {
        let logits = vec![0.3, -0.7, 1.2];
        assert!(categorical_kl(&logits, &logits).unwrap().abs() < 1e-15);
        let shifted: Vec<f64> = logits.iter().map(|l| l + 3.0).collect();
        assert!(categorical_kl(&logits, &shifted).unwrap().abs() < 1e-12);
    }

    #[test]
    fn kl_spot_value() {
        let p = vec![0.9f64.ln(), 0.1f64.ln()];
        let q = vec![0.5f64.ln(), 0.5f64.ln()];
        assert!((categorical_kl(&p, &q).unwrap() - 0.3680642071684971).abs() < 1e-12);
    }

    #[test]
    fn kl_nonnegative_and_errors() {
        let p = vec![0.0, 1.0, -1.0];
        let q = vec![1.0, 0.0, 0.5];
        assert!(categorical_kl(&p, &q).unwrap() >= 0.0);
        assert!(matches!(
            categorical_kl(&p, &q[..2]),
            Err(Error::LengthMismatch(3, 2))
        ));
    }
}
