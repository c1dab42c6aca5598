use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::stats::{
    bootstrap_percentile_ci, median_individual, paired_t_test, percentile_outperformed,
    sign_test_p, Sides, TTest,
};
use super::woc::{score_roster, score_survey, validate_survey, woc_roster, PointsTable, SurveyResponse};
use super::AnalyticsError;
use crate::model::{OptionId, PositionId, Roster, ValidatedSession};

/// Everything recorded for one session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionDataset {
    pub spec: ValidatedSession,
    pub surveys: Vec<SurveyResponse>,
    pub csi_roster: Roster,
    pub points: PointsTable,
    /// Whether the survey instrument let individuals exceed the budget.
    #[serde(default)]
    pub allow_over_budget_surveys: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportOptions {
    pub resamples: usize,
    pub confidence: f64,
    pub seed: u64,
    pub sides: Sides,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            resamples: 10_000,
            confidence: 0.95,
            seed: 0,
            sides: Sides::TwoSided,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PairwiseComparison {
    pub better: u64,
    pub worse: u64,
    pub same: u64,
    pub sign_test_p: f64,
}

impl PairwiseComparison {
    fn from_counts(better: u64, worse: u64, same: u64) -> Self {
        PairwiseComparison {
            better,
            worse,
            same,
            sign_test_p: sign_test_p(better, worse),
        }
    }

    /// Pools cell counts and recomputes the sign test on the totals.
    pub fn combine<'a>(parts: impl IntoIterator<Item = &'a PairwiseComparison>) -> Self {
        let (b, w, s) = parts
            .into_iter()
            .fold((0, 0, 0), |(b, w, s), p| (b + p.better, w + p.worse, s + p.same));
        Self::from_counts(b, w, s)
    }

    pub fn total(&self) -> u64 {
        self.better + self.worse + self.same
    }
}

/// Classifies each cell by the points of the group pick against the crowd
/// pick. `csi_picks[i]` and `woc_picks[i]` must answer the same question.
pub fn pairwise_selection_comparison(
    csi_picks: &[OptionId],
    woc_picks: &[OptionId],
    points: &PointsTable,
) -> Result<PairwiseComparison, AnalyticsError> {
    if csi_picks.len() != woc_picks.len() {
        return Err(AnalyticsError::LengthMismatch {
            left: csi_picks.len(),
            right: woc_picks.len(),
        });
    }
    let lookup = |o: &OptionId| points.get(o).ok_or_else(|| AnalyticsError::MissingPoints(o.clone()));
    let (mut better, mut worse, mut same) = (0, 0, 0);
    for (c, w) in csi_picks.iter().zip(woc_picks) {
        let (pc, pw) = (lookup(c)?, lookup(w)?);
        if pc > pw {
            better += 1;
        } else if pc < pw {
            worse += 1;
        } else {
            same += 1;
        }
    }
    Ok(PairwiseComparison::from_counts(better, worse, same))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub session_id: String,
    pub participants: usize,
    pub csi_score: f64,
    pub woc_score: f64,
    pub median_individual_score: f64,
    pub csi_percentile: f64,
    pub woc_percentile: f64,
    pub median_percentile: f64,
    pub woc_roster: Roster,
    pub woc_repair_steps: usize,
    pub pairwise: PairwiseComparison,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub sessions: usize,
    pub mean_csi_score: f64,
    pub mean_woc_score: f64,
    pub mean_median_individual_score: f64,
    pub mean_csi_percentile: f64,
    pub mean_woc_percentile: f64,
    pub mean_median_percentile: f64,
    /// Mean over sessions of `csi_score - median_individual_score`.
    pub mean_difference_vs_median: f64,
    pub sessions_csi_above_median: usize,
    pub csi_percentile_ci: (f64, f64),
    /// `None` with a single session.
    pub t_test_vs_median: Option<TTest>,
    pub t_test_vs_woc: Option<TTest>,
    pub pairwise: PairwiseComparison,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticsReport {
    pub options: ReportOptions,
    pub sessions: Vec<SessionReport>,
    pub summary: ReportSummary,
}

fn session_report(data: &SessionDataset) -> Result<(SessionReport, Vec<f64>), AnalyticsError> {
    let spec = &data.spec;
    for s in &data.surveys {
        validate_survey(spec, s, data.allow_over_budget_surveys)?;
    }
    let scored: BTreeSet<PositionId> = spec.positions.iter().map(|p| p.id.clone()).collect();
    let woc = woc_roster(spec, &data.surveys)?;
    let individual: Vec<f64> = data
        .surveys
        .iter()
        .map(|s| score_survey(s, &data.points))
        .collect::<Result<_, _>>()?;
    let csi_score = score_roster(&data.csi_roster, &data.points, &scored)?;
    let woc_score = score_roster(&woc.roster, &data.points, &scored)?;
    let median = median_individual(&individual)?;

    let pick = |r: &Roster, p: &PositionId| {
        r.picks.get(p).cloned().ok_or_else(|| AnalyticsError::InvalidSurvey {
            participant: "csi".into(),
            reason: format!("roster has no pick for {p}"),
        })
    };
    let csi_picks: Vec<OptionId> = spec
        .positions
        .iter()
        .map(|p| pick(&data.csi_roster, &p.id))
        .collect::<Result<_, _>>()?;
    let woc_picks: Vec<OptionId> = spec
        .positions
        .iter()
        .map(|p| pick(&woc.roster, &p.id))
        .collect::<Result<_, _>>()?;

    let report = SessionReport {
        session_id: spec.session_id.clone(),
        participants: individual.len(),
        csi_score,
        woc_score,
        median_individual_score: median,
        csi_percentile: percentile_outperformed(csi_score, &individual)?,
        woc_percentile: percentile_outperformed(woc_score, &individual)?,
        median_percentile: percentile_outperformed(median, &individual)?,
        woc_roster: woc.roster,
        woc_repair_steps: woc.repair_steps,
        pairwise: pairwise_selection_comparison(&csi_picks, &woc_picks, &data.points)?,
    };
    Ok((report, individual))
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

pub fn build_report(
    datasets: &[SessionDataset],
    options: ReportOptions,
) -> Result<AnalyticsReport, AnalyticsError> {
    if datasets.is_empty() {
        return Err(AnalyticsError::Empty);
    }
    let mut sessions = Vec::with_capacity(datasets.len());
    let mut individual = Vec::with_capacity(datasets.len());
    for d in datasets {
        let (r, scores) = session_report(d).map_err(|e| AnalyticsError::Session {
            session: d.spec.session_id.clone(),
            source: Box::new(e),
        })?;
        sessions.push(r);
        individual.push(scores);
    }

    let col = |f: fn(&SessionReport) -> f64| sessions.iter().map(f).collect::<Vec<f64>>();
    let csi = col(|s| s.csi_score);
    let woc = col(|s| s.woc_score);
    let med = col(|s| s.median_individual_score);

    let t_test = |other: &[f64]| -> Result<Option<TTest>, AnalyticsError> {
        if csi.len() < 2 {
            return Ok(None);
        }
        match paired_t_test(&csi, other, options.sides) {
            Ok(t) => Ok(Some(t)),
            Err(AnalyticsError::ZeroVariance) => Ok(None),
            Err(e) => Err(e),
        }
    };

    let summary = ReportSummary {
        sessions: sessions.len(),
        mean_csi_score: mean(csi.iter().copied()),
        mean_woc_score: mean(woc.iter().copied()),
        mean_median_individual_score: mean(med.iter().copied()),
        mean_csi_percentile: mean(sessions.iter().map(|s| s.csi_percentile)),
        mean_woc_percentile: mean(sessions.iter().map(|s| s.woc_percentile)),
        mean_median_percentile: mean(sessions.iter().map(|s| s.median_percentile)),
        mean_difference_vs_median: mean(csi.iter().zip(&med).map(|(c, m)| c - m)),
        sessions_csi_above_median: csi.iter().zip(&med).filter(|(c, m)| c > m).count(),
        csi_percentile_ci: bootstrap_percentile_ci(
            &individual,
            &csi,
            options.resamples,
            options.confidence,
            options.seed,
        )?,
        t_test_vs_median: t_test(&med)?,
        t_test_vs_woc: t_test(&woc)?,
        pairwise: PairwiseComparison::combine(sessions.iter().map(|s| &s.pairwise)),
    };
    Ok(AnalyticsReport {
        options,
        sessions,
        summary,
    })
}

fn pct(x: f64) -> String {
    format!("{:.1}%", x * 100.0)
}

fn fmt_t(t: &Option<TTest>) -> String {
    match t {
        Some(t) => format!("t = {:.3}, df = {}, p = {:.4}", t.t, t.df, t.p),
        None => "n/a".into(),
    }
}

impl AnalyticsReport {
    /// Plain-text summary tables.
    pub fn render_table(&self) -> String {
        let s = &self.summary;
        let mut out = String::new();
        let _ = writeln!(out, "Sessions: {}", s.sessions);
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<28}{:>16}{:>16}", "Method", "Average Points", "Avg Percentile");
        for (name, pts, p) in [
            ("Group (CSI)", s.mean_csi_score, s.mean_csi_percentile),
            ("Survey (WoC)", s.mean_woc_score, s.mean_woc_percentile),
            ("Survey (Median Individual)", s.mean_median_individual_score, s.mean_median_percentile),
        ] {
            let _ = writeln!(out, "{name:<28}{pts:>16.1}{:>16}", pct(p));
        }
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "Group vs median individual: {:+.1} points per session, higher in {} of {}",
            s.mean_difference_vs_median, s.sessions_csi_above_median, s.sessions
        );
        let _ = writeln!(out, "  paired t-test: {}", fmt_t(&s.t_test_vs_median));
        let _ = writeln!(out, "Group vs WoC paired t-test: {}", fmt_t(&s.t_test_vs_woc));
        let _ = writeln!(
            out,
            "Percentile outperformed, {:.0}% bootstrap CI ({} resamples): {} to {}",
            self.options.confidence * 100.0,
            self.options.resamples,
            pct(s.csi_percentile_ci.0),
            pct(s.csi_percentile_ci.1)
        );
        let _ = writeln!(out);
        let total = s.pairwise.total().max(1) as f64;
        let _ = writeln!(out, "{:<28}{:>16}{:>16}", "Higher Scoring Pick", "Selections", "Proportion");
        for (name, n) in [
            ("Group (CSI)", s.pairwise.better),
            ("Survey (WoC)", s.pairwise.worse),
            ("Same Score", s.pairwise.same),
        ] {
            let _ = writeln!(out, "{name:<28}{n:>16}{:>16}", pct(n as f64 / total));
        }
        let _ = writeln!(out, "Sign test (one-sided): p = {:.4}", s.pairwise.sign_test_p);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[&str]) -> Vec<OptionId> {
        v.iter().map(|&s| s.into()).collect()
    }

    #[test]
    fn pairwise_counts() {
        let points = PointsTable(
            [("a", 10.0), ("b", 5.0), ("c", 5.0), ("d", 1.0)]
                .iter()
                .map(|&(k, v)| (k.into(), v))
                .collect(),
        );
        let r = pairwise_selection_comparison(&ids(&["a", "b", "d", "a"]), &ids(&["b", "c", "a", "a"]), &points)
            .unwrap();
        assert_eq!((r.better, r.worse, r.same), (1, 1, 2));
        let same = pairwise_selection_comparison(&ids(&["a", "b"]), &ids(&["a", "b"]), &points).unwrap();
        assert_eq!((same.better, same.worse, same.same, same.sign_test_p), (0, 0, 2, 1.0));
        assert!(matches!(
            pairwise_selection_comparison(&ids(&["zz"]), &ids(&["a"]), &points),
            Err(AnalyticsError::MissingPoints(_))
        ));
    }

    #[test]
    fn combine_recomputes_p() {
        let parts = [
            PairwiseComparison::from_counts(6, 1, 20),
            PairwiseComparison::from_counts(7, 1, 20),
        ];
        let c = PairwiseComparison::combine(&parts);
        assert_eq!((c.better, c.worse, c.same), (13, 2, 40));
        assert_eq!(c.sign_test_p, 121.0 / 32768.0);
    }
}
