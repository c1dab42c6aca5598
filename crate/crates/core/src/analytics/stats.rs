//! Comparison statistics: median, percentile outperformed, percentile
//! bootstrap, paired t-test and the exact sign test.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, ContinuousCDF, DiscreteCDF, StudentsT};

use super::AnalyticsError;
use crate::model::{Message, ParticipantId, Role};

pub fn median_individual(scores: &[f64]) -> Result<f64, AnalyticsError> {
    crate::engine::median(scores.iter().copied()).ok_or(AnalyticsError::Empty)
}

/// Fraction of `individual_scores` strictly below `reference`.
pub fn percentile_outperformed(reference: f64, individual_scores: &[f64]) -> Result<f64, AnalyticsError> {
    if individual_scores.is_empty() {
        return Err(AnalyticsError::Empty);
    }
    let below = individual_scores.iter().filter(|&&s| s < reference).count();
    Ok(below as f64 / individual_scores.len() as f64)
}

/// Linear interpolation between order statistics of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Percentile bootstrap for the mean (across sessions) of the percentile
/// outperformed.
///
/// Each resample draws participants with replacement within every session.
/// Resample `i` uses its own ChaCha stream, so resamples can be computed in
/// any order and still agree.
pub fn bootstrap_percentile_ci(
    per_session_scores: &[Vec<f64>],
    per_session_reference: &[f64],
    resamples: usize,
    confidence: f64,
    seed: u64,
) -> Result<(f64, f64), AnalyticsError> {
    if per_session_scores.is_empty() || resamples == 0 {
        return Err(AnalyticsError::Empty);
    }
    if per_session_scores.len() != per_session_reference.len() {
        return Err(AnalyticsError::LengthMismatch {
            left: per_session_scores.len(),
            right: per_session_reference.len(),
        });
    }
    if per_session_scores.iter().any(Vec::is_empty) {
        return Err(AnalyticsError::Empty);
    }
    if !(0.0..1.0).contains(&confidence) || confidence == 0.0 {
        return Err(AnalyticsError::InvalidArgument("confidence must be in (0, 1)"));
    }

    let sessions = per_session_scores.len() as f64;
    let mut means: Vec<f64> = (0..resamples)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let total: f64 = per_session_scores
                .iter()
                .zip(per_session_reference)
                .map(|(scores, &reference)| {
                    let n = scores.len();
                    let below = (0..n)
                        .filter(|_| scores[rng.gen_range(0..n)] < reference)
                        .count();
                    below as f64 / n as f64
                })
                .sum();
            total / sessions
        })
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - confidence) / 2.0;
    Ok((quantile_sorted(&means, tail), quantile_sorted(&means, 1.0 - tail)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sides {
    TwoSided,
    /// Alternative: mean of `a - b` is positive.
    Greater,
    Less,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub p: f64,
    pub df: f64,
    pub mean_difference: f64,
}

/// Paired t-test on `a[i] - b[i]` with `n - 1` degrees of freedom.
///
/// All-zero differences give `t = 0, p = 1`; any other constant
/// difference has no variance to test against and is an error.
pub fn paired_t_test(a: &[f64], b: &[f64], sides: Sides) -> Result<TTest, AnalyticsError> {
    if a.len() != b.len() {
        return Err(AnalyticsError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(AnalyticsError::InvalidArgument("paired t-test needs at least two pairs"));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let df = n - 1.0;
    if var == 0.0 {
        if diffs.iter().all(|&d| d == 0.0) {
            return Ok(TTest {
                t: 0.0,
                p: 1.0,
                df,
                mean_difference: 0.0,
            });
        }
        return Err(AnalyticsError::ZeroVariance);
    }
    let t = mean / (var / n).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df >= 1");
    let p = match sides {
        Sides::TwoSided => (2.0 * dist.sf(t.abs())).min(1.0),
        Sides::Greater => dist.sf(t),
        Sides::Less => dist.cdf(t),
    };
    Ok(TTest {
        t,
        p,
        df,
        mean_difference: mean,
    })
}

/// One-sided exact sign test: `P(X >= better)` for
/// `X ~ Binomial(better + worse, 1/2)`. No discordant pairs gives 1.
pub fn sign_test_p(better: u64, worse: u64) -> f64 {
    let n = better + worse;
    if n == 0 {
        return 1.0;
    }
    if n <= 120 {
        // Exact: sum of C(n, k) for k >= better, over 2^n.
        let mut c: u128 = 1;
        let mut tail: u128 = 0;
        for k in 0..=n {
            if k >= better {
                tail += c;
            }
            c = c * u128::from(n - k) / u128::from(k + 1);
        }
        return tail as f64 / 2f64.powi(n as i32);
    }
    let dist = Binomial::new(0.5, n).expect("valid binomial");
    if better == 0 {
        1.0
    } else {
        dist.sf(better - 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContributionMetrics {
    pub per_user_counts: BTreeMap<ParticipantId, u32>,
    /// Population variance of the per-user counts.
    pub variance: f64,
    /// Most vocal minus least vocal.
    pub vocal_spread: u32,
}

/// Counts human messages per participant. Everyone in `participants` is
/// counted, including silent members; agent and system posts are ignored.
pub fn contribution_metrics<'a>(
    messages: impl IntoIterator<Item = &'a Message>,
    participants: impl IntoIterator<Item = &'a ParticipantId>,
) -> ContributionMetrics {
    let mut counts: BTreeMap<ParticipantId, u32> =
        participants.into_iter().map(|p| (p.clone(), 0)).collect();
    for m in messages {
        if m.role == Role::Human {
            *counts.entry(ParticipantId::new(&m.author)).or_insert(0) += 1;
        }
    }
    let n = counts.len() as f64;
    let (variance, vocal_spread) = if counts.is_empty() {
        (0.0, 0)
    } else {
        let mean = counts.values().map(|&c| f64::from(c)).sum::<f64>() / n;
        let var = counts
            .values()
            .map(|&c| (f64::from(c) - mean).powi(2))
            .sum::<f64>()
            / n;
        let max = counts.values().max().copied().unwrap_or(0);
        let min = counts.values().min().copied().unwrap_or(0);
        (var, max - min)
    };
    ContributionMetrics {
        per_user_counts: counts,
        variance,
        vocal_spread,
    }
}
