//! Episode-level advantages: z-score normalization and the polarized
//! signal controller (PSC).
//!
//! The z-score advantage of trajectory i within a group is
//! `(R_i - mean) / std` with the population standard deviation (divisor N).
//! For binary returns this has closed forms in the group success rate p:
//! successes score `sqrt((1-p)/p)` and failures `-sqrt(p/(1-p))`, so the
//! magnitudes are inverted reciprocals around p = 0.5 — a rare failure in a
//! high-success group is penalized as hard as a rare success is rewarded.
//! PSC counteracts that by scaling each advantage with a bounded
//! sigmoid weight of the success rate: successes are amplified when p is
//! low, failures attenuated when p is high.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{success_rate, EpisodeGroup, BINARY_TOLERANCE};

/// Below this standard deviation a group is treated as uniform-outcome and
/// yields all-zero advantages: such a group carries no within-group signal.
pub const SIGMA_FLOOR: f64 = 1e-8;

/// Polarized signal controller parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PscConfig {
    /// Steepness of the sigmoid argument; higher values sharpen the
    /// transition between modulated and neutral regimes.
    pub alpha: f64,
    /// Modulation strength; weights stay within (1 - beta/2, 1 + beta/2).
    pub beta: f64,
}

impl Default for PscConfig {
    fn default() -> Self {
        Self {
            alpha: 4.0,
            beta: 0.1,
        }
    }
}

impl PscConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::Config(format!("psc.alpha must be > 0, got {}", self.alpha)));
        }
        if !(self.beta >= 0.0) {
            return Err(Error::Config(format!("psc.beta must be >= 0, got {}", self.beta)));
        }
        Ok(())
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Z-score advantages of a list of returns, population standard deviation.
///
/// A degenerate group (std below [`SIGMA_FLOOR`]) returns all zeros rather
/// than erroring; a uniform-outcome group carries no signal.
pub fn zscore_advantages(returns: &[f64]) -> Result<Vec<f64>> {
    if returns.len() < 2 {
        return Err(Error::GroupTooSmall(returns.len()));
    }
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let variance = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let std = variance.sqrt();
    if std < SIGMA_FLOOR {
        return Ok(vec![0.0; returns.len()]);
    }
    Ok(returns.iter().map(|r| (r - mean) / std).collect())
}

/// Z-score advantages with the sample (divisor N-1) standard deviation,
/// kept for comparator studies; not used by any estimator default.
pub fn zscore_advantages_sample_std(returns: &[f64]) -> Result<Vec<f64>> {
    if returns.len() < 2 {
        return Err(Error::GroupTooSmall(returns.len()));
    }
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let variance = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let std = variance.sqrt();
    if std < SIGMA_FLOOR {
        return Ok(vec![0.0; returns.len()]);
    }
    Ok(returns.iter().map(|r| (r - mean) / std).collect())
}

/// Success-rate-dependent scaling weight `w(R, p) = 1 + beta * f(R, p)`.
///
/// For a success, `f = sigmoid(d^alpha) - 0.5` with d = 1 - p the failure
/// rate; for a failure, `f = sigmoid(-p^alpha) - 0.5`. Both weights are
/// non-increasing in p and bounded in (1 - beta/2, 1 + beta/2).
pub fn psc_factor(return_value: f64, p: f64, cfg: &PscConfig) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::DegenerateRate(p));
    }
    let f = if (return_value - 1.0).abs() <= BINARY_TOLERANCE {
        let d = 1.0 - p;
        sigmoid(d.powf(cfg.alpha)) - 0.5
    } else if return_value.abs() <= BINARY_TOLERANCE {
        sigmoid(-p.powf(cfg.alpha)) - 0.5
    } else {
        return Err(Error::NonBinaryReward(return_value));
    };
    Ok(1.0 + cfg.beta * f)
}

/// Modulated episode advantages: `w(R_i, p) * A_i` element-wise.
///
/// Requires binary returns (PSC is undefined otherwise) and a group of at
/// least two trajectories. The success rate is recomputed from the group
/// at call time, never cached.
pub fn modulated_advantages(group: &EpisodeGroup, cfg: &PscConfig) -> Result<Vec<f64>> {
    let p = success_rate(group)?;
    let returns = group.returns();
    let base = zscore_advantages(&returns)?;
    returns
        .iter()
        .zip(base)
        .map(|(&r, a)| Ok(psc_factor(r, p, cfg)? * a))
        .collect()
}

/// Closed-form binary z-scores `(sqrt((1-p)/p), -sqrt(p/(1-p)))`.
pub fn zscore_closed_form(p: f64) -> Result<(f64, f64)> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::DegenerateRate(p));
    }
    Ok((((1.0 - p) / p).sqrt(), -(p / (1.0 - p)).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Step, Trajectory};

    fn group(returns: &[f64]) -> EpisodeGroup {
        let trajs = returns
            .iter()
            .map(|&r| {
                Trajectory::from_steps(
                    "t",
                    vec![Step::new("s", 0, vec!["a".into()], r, -0.1).unwrap()],
                )
                .unwrap()
            })
            .collect();
        EpisodeGroup::new(trajs).unwrap()
    }

    #[test]
    fn zscore_half_split() {
        let advs = zscore_advantages(&[1.0, 1.0, 0.0, 0.0]).unwrap();
        for (a, expected) in advs.iter().zip([1.0, 1.0, -1.0, -1.0]) {
            assert!((a - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn zscore_degenerate_group_is_zero() {
        assert_eq!(zscore_advantages(&[1.0; 4]).unwrap(), vec![0.0; 4]);
        assert_eq!(zscore_advantages(&[0.0; 8]).unwrap(), vec![0.0; 8]);
    }

    #[test]
    fn zscore_quarter_split_matches_closed_form() {
        // p = 0.25: successes score sqrt(3), failures -1/sqrt(3).
        let advs = zscore_advantages(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!((advs[0] - 1.7320508075688772).abs() < 1e-9);
        for a in &advs[1..] {
            assert!((a - (-0.5773502691896257)).abs() < 1e-9);
        }
    }

    #[test]
    fn zscore_too_small() {
        assert!(matches!(
            zscore_advantages(&[1.0]),
            Err(Error::GroupTooSmall(1))
        ));
    }

    #[test]
    fn psc_neutral_at_full_success() {
        // d = 0 makes sigmoid(0) = 0.5 cancel for the success branch.
        let cfg = PscConfig { alpha: 7.0, beta: 0.1 };
        assert!((psc_factor(1.0, 1.0, &cfg).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn psc_spot_values() {
        let cfg = PscConfig::default();
        // 1 + 0.1*(sigmoid(1) - 0.5) and 1 + 0.1*(sigmoid(-1) - 0.5).
        assert!((psc_factor(1.0, 0.0, &cfg).unwrap() - 1.0231058578630006).abs() < 1e-9);
        assert!((psc_factor(0.0, 1.0, &cfg).unwrap() - 0.9768941421369995).abs() < 1e-9);
    }

    #[test]
    fn psc_rejects_graded_return() {
        let cfg = PscConfig::default();
        assert!(matches!(
            psc_factor(0.5, 0.5, &cfg),
            Err(Error::NonBinaryReward(_))
        ));
    }

    #[test]
    fn modulation_disabled_at_beta_zero() {
        let g = group(&[1.0, 0.0, 0.0, 1.0, 1.0]);
        let cfg = PscConfig { alpha: 4.0, beta: 0.0 };
        let plain = zscore_advantages(&g.returns()).unwrap();
        let modulated = modulated_advantages(&g, &cfg).unwrap();
        assert_eq!(plain, modulated);
    }

    #[test]
    fn modulation_of_uniform_group_is_zero() {
        let g = group(&[1.0; 6]);
        let modulated = modulated_advantages(&g, &PscConfig::default()).unwrap();
        assert_eq!(modulated, vec![0.0; 6]);
    }

    #[test]
    fn modulated_success_entry_composes_both_formulas() {
        // returns [1,0,0,0]: success entry = sqrt(3) * (1 + 0.1*(sigmoid(0.75^4) - 0.5)).
        let g = group(&[1.0, 0.0, 0.0, 0.0]);
        let modulated = modulated_advantages(&g, &PscConfig::default()).unwrap();
        assert!((modulated[0] - 1.7456384307363908).abs() < 1e-9);
    }

    #[test]
    fn modulation_propagates_non_binary() {
        let g = group(&[1.0, 0.5, 0.0]);
        assert!(matches!(
            modulated_advantages(&g, &PscConfig::default()),
            Err(Error::NonBinaryReward(_))
        ));
    }

    #[test]
    fn closed_form_symmetric_point() {
        let (zs, zf) = zscore_closed_form(0.5).unwrap();
        assert!((zs - 1.0).abs() < 1e-12);
        assert!((zf + 1.0).abs() < 1e-12);
    }

    #[test]
    fn closed_form_spot_value() {
        let (zs, zf) = zscore_closed_form(0.75).unwrap();
        assert!((zs - 0.5773502691896257).abs() < 1e-9);
        assert!((zf - (-1.7320508075688772)).abs() < 1e-9);
    }

    #[test]
    fn closed_form_rejects_degenerate() {
        assert!(zscore_closed_form(0.0).is_err());
        assert!(zscore_closed_form(1.0).is_err());
    }

    #[test]
    fn reciprocal_identity_on_grid() {
        for k in 1..99 {
            let p = k as f64 / 99.0;
            let (zs_p, _) = zscore_closed_form(p).unwrap();
            let (zs_q, _) = zscore_closed_form(1.0 - p).unwrap();
            assert!((zs_p * zs_q - 1.0).abs() < 1e-9, "p={p}");
        }
    }

    #[test]
    fn psc_monotone_and_bounded() {
        let cfg = PscConfig::default();
        let mut prev_succ = f64::INFINITY;
        let mut prev_fail = f64::INFINITY;
        for k in 0..=100 {
            let p = k as f64 / 100.0;
            let ws = psc_factor(1.0, p, &cfg).unwrap();
            let wf = psc_factor(0.0, p, &cfg).unwrap();
            assert!(ws <= prev_succ + 1e-15);
            assert!(wf <= prev_fail + 1e-15);
            assert!(ws > 1.0 - cfg.beta / 2.0 && ws < 1.0 + cfg.beta / 2.0);
            assert!(wf > 1.0 - cfg.beta / 2.0 && wf < 1.0 + cfg.beta / 2.0);
            prev_succ = ws;
            prev_fail = wf;
        }
    }

    #[test]
    fn modulation_preserves_sign_and_success_argmax() {
        let g = group(&[1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let base = zscore_advantages(&g.returns()).unwrap();
        let modulated = modulated_advantages(&g, &PscConfig::default()).unwrap();
        for (b, m) in base.iter().zip(&modulated) {
            assert_eq!(b.signum(), m.signum());
        }
        let argmax = |v: &[f64]| {
            v.iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0
        };
        assert_eq!(argmax(&base), argmax(&modulated));
    }
}
