//! Truncated decoding-step entropy from top-k token logprobs.
//!
//! Providers expose only the k most likely alternatives per generated
//! step, so the entropy is estimated from those probabilities plus one
//! residual bucket holding the unobserved tail:
//! `H = -Σ p_j ln p_j - r ln r` with `r = max(0, 1 - Σ p_j)` and
//! `0·ln 0 := 0`. The trajectory averages step `t` over every record that
//! generated at least `t + 1` steps.

use serde::{Deserialize, Serialize};

use crate::corpus::{GenerationRecord, StepLogprobs};
use crate::error::{Error, Result};

/// Tolerance for provider probability mass summing slightly above one.
const MASS_TOLERANCE: f64 = 1e-6;

/// Mean per-step entropy over a batch of logprob-carrying generations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyTrajectory {
    /// Number of steps actually present (may be shorter than requested
    /// when no record reaches the later steps).
    pub steps: usize,
    /// `mean_entropy[t]` is the mean entropy at step `t`, in nats.
    pub mean_entropy: Vec<f64>,
    /// Number of generation records the trajectory averages over.
    pub num_instructions: usize,
    /// The uniform `logprob_top_k` the records were sampled with.
    pub top_k_used: u32,
}

impl EntropyTrajectory {
    /// Mean entropy over all steps in the trajectory.
    pub fn mean_over_steps(&self) -> f64 {
        if self.mean_entropy.is_empty() {
            0.0
        } else {
            self.mean_entropy.iter().sum::<f64>() / self.mean_entropy.len() as f64
        }
    }
}

/// Truncated entropy of a single decoding step, in nats.
///
/// Errors when the alternatives' probability mass exceeds `1 + 1e-6`
/// (malformed provider output).
pub fn step_entropy(step: &StepLogprobs) -> Result<f64> {
    let mut mass = 0.0;
    let mut entropy = 0.0;
    for (_, logprob) in &step.top_alternatives {
        let p = logprob.exp();
        mass += p;
        if p > 0.0 {
            entropy -= p * p.ln();
        }
    }
    if mass > 1.0 + MASS_TOLERANCE {
        return Err(Error::metric(format!(
            "step entropy: alternative probabilities sum to {mass} > 1 for token {:?}",
            step.token
        )));
    }
    let residual = (1.0 - mass).max(0.0);
    if residual > 0.0 {
        entropy -= residual * residual.ln();
    }
    Ok(entropy.max(0.0))
}

/// Averages step entropies across records at each step `t < steps`.
///
/// Requirements: `steps >= 1`; every record carries logprobs with at
/// least one step; all records were sampled with the same
/// `logprob_top_k`. The trajectory is truncated at the first step no
/// record reaches.
pub fn entropy_trajectory(records: &[GenerationRecord], steps: usize) -> Result<EntropyTrajectory> {
    if steps == 0 {
        return Err(Error::metric("entropy trajectory needs steps >= 1".to_string()));
    }
    if records.is_empty() {
        return Err(Error::metric(
            "entropy trajectory needs at least one generation record".to_string(),
        ));
    }
    let mut top_k_used: Option<u32> = None;
    let mut per_record_steps: Vec<&[StepLogprobs]> = Vec::with_capacity(records.len());
    for record in records {
        let step_logprobs = record.token_logprobs.as_deref().ok_or_else(|| {
            Error::metric(format!(
                "entropy trajectory: record (prompt {:?}, sample {}) has no token logprobs",
                record.prompt_id, record.sample_index
            ))
        })?;
        if step_logprobs.is_empty() {
            return Err(Error::metric(format!(
                "entropy trajectory: record (prompt {:?}, sample {}) has zero logprob steps",
                record.prompt_id, record.sample_index
            )));
        }
        match top_k_used {
            None => top_k_used = Some(record.sampling.logprob_top_k),
            Some(k) if k != record.sampling.logprob_top_k => {
                return Err(Error::metric(format!(
                    "entropy trajectory: mixed logprob_top_k ({k} vs {})",
                    record.sampling.logprob_top_k
                )));
            }
            Some(_) => {}
        }
        per_record_steps.push(step_logprobs);
    }

    let mut mean_entropy = Vec::with_capacity(steps);
    for t in 0..steps {
        let mut sum = 0.0;
        let mut count = 0usize;
        for (record, step_logprobs) in records.iter().zip(&per_record_steps) {
            if let Some(step) = step_logprobs.get(t) {
                sum += step_entropy(step).map_err(|e| {
                    Error::metric(format!(
                        "prompt {:?}, sample {}, step {t}: {e}",
                        record.prompt_id, record.sample_index
                    ))
                })?;
                count += 1;
            }
        }
        if count == 0 {
            break; // no record reaches this step; truncate
        }
        mean_entropy.push(sum / count as f64);
    }
    Ok(EntropyTrajectory {
        steps: mean_entropy.len(),
        mean_entropy,
        num_instructions: records.len(),
        top_k_used: top_k_used.unwrap_or(0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{FinishReason, SamplingParams};
    use crate::templates::{ModeKind, ModelFamily, PromptMode};

    fn step(alternatives: &[(&str, f64)]) -> StepLogprobs {
        StepLogprobs {
            token: alternatives.first().map(|(t, _)| t.to_string()).unwrap_or_default(),
            logprob: alternatives.first().map(|(_, lp)| *lp).unwrap_or(0.0),
            top_alternatives: alternatives
                .iter()
                .map(|(t, lp)| (t.to_string(), *lp))
                .collect(),
        }
    }

    fn record_with_steps(prompt_id: &str, steps: Vec<StepLogprobs>, top_k: u32) -> GenerationRecord {
        GenerationRecord {
            prompt_id: prompt_id.to_string(),
            sample_index: 0,
            text: "t".to_string(),
            finish_reason: FinishReason::Length,
            sampling: SamplingParams {
                logprob_top_k: top_k,
                ..SamplingParams::default()
            },
            mode: PromptMode::new(ModeKind::FullTemplate),
            model_family: ModelFamily::Llama,
            token_logprobs: Some(steps),
        }
    }

    #[test]
    fn one_hot_step_has_zero_entropy() {
        assert_eq!(step_entropy(&step(&[("the", 0.0)])).unwrap(), 0.0);
    }

    #[test]
    fn uniform_four_alternatives_give_ln4() {
        let lp = 0.25f64.ln();
        let h = step_entropy(&step(&[("a", lp), ("b", lp), ("c", lp), ("d", lp)])).unwrap();
        assert!((h - 4.0f64.ln()).abs() < 1e-9);
        assert!((h - 1.386294).abs() < 1e-6);
    }

    #[test]
    fn residual_bucket_counts_toward_entropy() {
        // p = (0.4, 0.4), residual 0.2:
        // H = -2(0.4 ln 0.4) - 0.2 ln 0.2 = 1.054920.
        let lp = 0.4f64.ln();
        let h = step_entropy(&step(&[("a", lp), ("b", lp)])).unwrap();
        assert!((h - 1.054920).abs() < 1e-6);
    }

    #[test]
    fn overfull_mass_is_rejected_but_tolerance_allows_roundoff() {
        let lp = 0.6f64.ln();
        assert!(step_entropy(&step(&[("a", lp), ("b", lp)])).is_err());
        // Two alternatives at exactly p=0.5 plus float noise stay fine.
        let half = 0.5f64.ln();
        assert!(step_entropy(&step(&[("a", half), ("b", half)])).is_ok());
    }

    #[test]
    fn adding_uniform_alternative_increases_entropy() {
        // Renormalized uniform top-k with zero residual: H = ln k, strictly
        // increasing in k.
        let mut previous = -1.0;
        for k in 1..=8usize {
            let lp = (1.0 / k as f64).ln();
            let alternatives: Vec<(String, f64)> =
                (0..k).map(|i| (format!("t{i}"), lp)).collect();
            let s = StepLogprobs {
                token: "t0".to_string(),
                logprob: lp,
                top_alternatives: alternatives,
            };
            let h = step_entropy(&s).unwrap();
            assert!(h > previous, "entropy must increase: k={k}, {h} <= {previous}");
            previous = h;
        }
    }

    #[test]
    fn trajectory_averages_per_step_and_truncates() {
        let lp_quarter = 0.25f64.ln();
        let uniform4 = || step(&[("a", lp_quarter), ("b", lp_quarter), ("c", lp_quarter), ("d", lp_quarter)]);
        let onehot = || step(&[("x", 0.0)]);
        // Record 1 has 3 steps, record 2 has 1 step.
        let records = vec![
            record_with_steps("p1", vec![onehot(), uniform4(), uniform4()], 4),
            record_with_steps("p2", vec![uniform4()], 4),
        ];
        let traj = entropy_trajectory(&records, 50).unwrap();
        assert_eq!(traj.steps, 3);
        assert_eq!(traj.mean_entropy.len(), 3);
        assert_eq!(traj.num_instructions, 2);
        assert_eq!(traj.top_k_used, 4);
        // Step 0: mean of 0 and ln4 = ln4/2; steps 1-2: ln4 over one record.
        assert!((traj.mean_entropy[0] - 4.0f64.ln() / 2.0).abs() < 1e-12);
        assert!((traj.mean_entropy[1] - 4.0f64.ln()).abs() < 1e-12);
        assert!((traj.mean_entropy[2] - 4.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn trajectory_respects_requested_steps() {
        let records = vec![record_with_steps("p1", vec![step(&[("a", 0.0)]); 10], 1)];
        let traj = entropy_trajectory(&records, 4).unwrap();
        assert_eq!(traj.steps, 4);
        assert!((traj.mean_over_steps() - 0.0).abs() < 1e-12);
    }

    #[test]
    fn trajectory_rejects_missing_logprobs_and_mixed_top_k() {
        let mut no_logprobs = record_with_steps("p1", vec![step(&[("a", 0.0)])], 4);
        no_logprobs.token_logprobs = None;
        assert!(entropy_trajectory(&[no_logprobs], 5).is_err());

        let records = vec![
            record_with_steps("p1", vec![step(&[("a", 0.0)])], 4),
            record_with_steps("p2", vec![step(&[("a", 0.0)])], 5),
        ];
        let err = entropy_trajectory(&records, 5).unwrap_err();
        assert!(err.to_string().contains("mixed logprob_top_k"));
    }

    #[test]
    fn trajectory_rejects_zero_steps_request_and_empty_batch() {
        let records = vec![record_with_steps("p1", vec![step(&[("a", 0.0)])], 4)];
        assert!(entropy_trajectory(&records, 0).is_err());
        assert!(entropy_trajectory(&[], 5).is_err());
    }
}
