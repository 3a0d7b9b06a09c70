//! Folding reduction traces into confusion matrices, precision/recall,
//! per-issue breakdowns and summary tables.
//!
//! The positive class is "valid to remove": a prediction of `true` is a
//! positive, and it is correct unless the oracle reported a semantic failure.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::oracle::OutcomeKind;
use crate::reducer::TrialRecord;
use crate::semantics::IssueCode;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("trial {0} has no prediction")]
    MissingPrediction(usize),
    #[error("trial {0} has no oracle outcome (confusion needs a study trace)")]
    MissingOutcome(usize),
}

/// `tp == tp_op + tp_ns` and `fn_ == fn_op + fn_ns`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tp_op: usize,
    pub tp_ns: usize,
    pub fn_op: usize,
    pub fn_ns: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// Buckets in the order TN, TP_op, TP_ns, FP, FN_op, FN_ns.
    pub fn buckets(&self) -> [(&'static str, usize); 6] {
        [
            ("TN", self.tn),
            ("TP_op", self.tp_op),
            ("TP_ns", self.tp_ns),
            ("FP", self.fp),
            ("FN_op", self.fn_op),
            ("FN_ns", self.fn_ns),
        ]
    }

    fn add(&mut self, other: &Confusion) {
        self.tp += other.tp;
        self.tn += other.tn;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tp_op += other.tp_op;
        self.tp_ns += other.tp_ns;
        self.fn_op += other.fn_op;
        self.fn_ns += other.fn_ns;
    }
}

fn labeled(trace: &[TrialRecord]) -> impl Iterator<Item = Result<(bool, &TrialRecord, OutcomeKind), MetricsError>> {
    trace.iter().enumerate().map(|(i, r)| {
        let prediction = r.prediction.ok_or(MetricsError::MissingPrediction(i))?;
        let outcome = r.oracle_outcome.as_ref().ok_or(MetricsError::MissingOutcome(i))?;
        Ok((prediction, r, outcome.kind))
    })
}

pub fn confusion(trace: &[TrialRecord]) -> Result<Confusion, MetricsError> {
    let mut c = Confusion::default();
    for item in labeled(trace) {
        let (prediction, _, kind) = item?;
        match (prediction, kind) {
            (true, OutcomeKind::SemanticFail) => c.fp += 1,
            (false, OutcomeKind::SemanticFail) => c.tn += 1,
            (true, OutcomeKind::Passed) => c.tp_op += 1,
            (true, OutcomeKind::NonSemanticFail) => c.tp_ns += 1,
            (false, OutcomeKind::Passed) => c.fn_op += 1,
            (false, OutcomeKind::NonSemanticFail) => c.fn_ns += 1,
        }
    }
    c.tp = c.tp_op + c.tp_ns;
    c.fn_ = c.fn_op + c.fn_ns;
    Ok(c)
}

/// `(precision, recall)`; each is `None` when its denominator is zero.
pub fn precision_recall(c: &Confusion) -> (Option<f64>, Option<f64>) {
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    (ratio(c.tp, c.tp + c.fp), ratio(c.tp, c.tp + c.fn_))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssueCounts {
    /// Occurrences in trials the model correctly skipped.
    pub filtered: usize,
    /// Occurrences in trials the model wrongly let through.
    pub missed: usize,
}

/// Per issue code, counted over semantic-failure trials. Every code is present.
pub fn issue_breakdown(trace: &[TrialRecord]) -> Result<BTreeMap<IssueCode, IssueCounts>, MetricsError> {
    let mut map: BTreeMap<IssueCode, IssueCounts> =
        IssueCode::ALL.iter().map(|&c| (c, IssueCounts::default())).collect();
    for item in labeled(trace) {
        let (prediction, record, kind) = item?;
        if kind != OutcomeKind::SemanticFail {
            continue;
        }
        let issues = &record.oracle_outcome.as_ref().expect("checked above").issues;
        for issue in issues {
            let counts = map.entry(issue.code).or_default();
            if prediction {
                counts.missed += 1;
            } else {
                counts.filtered += 1;
            }
        }
    }
    Ok(map)
}

/// Summary of one trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub name: String,
    pub oracle_queries: usize,
    pub skipped: usize,
    pub total_trials: usize,
    pub tokens_initial: Option<usize>,
    pub tokens_final: Option<usize>,
    /// Seconds.
    pub wall_time: f64,
    /// Present for traces where every trial has a prediction and an outcome.
    pub confusion: Option<Confusion>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub per_issue: Option<BTreeMap<IssueCode, IssueCounts>>,
}

/// `wall_time` defaults to the sum of per-trial times.
pub fn summarize(name: &str, trace: &[TrialRecord], wall_time: Option<f64>) -> Report {
    let oracle_queries = trace.iter().filter(|r| r.executed).count();
    let confusion = confusion(trace).ok();
    let (precision, recall) = confusion.as_ref().map(precision_recall).unwrap_or((None, None));
    Report {
        name: name.to_string(),
        oracle_queries,
        skipped: trace.len() - oracle_queries,
        total_trials: trace.len(),
        tokens_initial: trace.first().map(|r| r.tokens_before),
        tokens_final: trace.last().map(|r| r.tokens_after),
        wall_time: wall_time.unwrap_or_else(|| trace.iter().map(|r| r.elapsed).sum()),
        confusion,
        precision,
        recall,
        per_issue: issue_breakdown(trace).ok(),
    }
}

/// Pooled (micro) and per-trace mean (macro) precision and recall.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub micro_precision: Option<f64>,
    pub micro_recall: Option<f64>,
    pub macro_precision: Option<f64>,
    pub macro_recall: Option<f64>,
}

pub fn aggregate(reports: &[Report]) -> Aggregate {
    let mut pooled = Confusion::default();
    let mut any = false;
    for c in reports.iter().filter_map(|r| r.confusion.as_ref()) {
        pooled.add(c);
        any = true;
    }
    let (micro_precision, micro_recall) = if any { precision_recall(&pooled) } else { (None, None) };
    let mean = |values: Vec<f64>| (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64);
    Aggregate {
        micro_precision,
        micro_recall,
        macro_precision: mean(reports.iter().filter_map(|r| r.precision).collect()),
        macro_recall: mean(reports.iter().filter_map(|r| r.recall).collect()),
    }
}

fn cell(value: Option<f64>) -> String {
    value.map(|v| format!("{v:.4}")).unwrap_or_default()
}

fn opt_count(value: Option<usize>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

pub const CSV_HEADER: &str = "bug,time_s,tests,skips,size_tokens,precision,recall";

/// One row per report plus `micro` (totals) and `macro` rows. Absent values
/// are empty cells.
pub fn render_csv(reports: &[Report]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in reports {
        writeln!(
            out,
            "{},{:.3},{},{},{},{},{}",
            r.name,
            r.wall_time,
            r.oracle_queries,
            r.skipped,
            opt_count(r.tokens_final),
            cell(r.precision),
            cell(r.recall)
        )
        .unwrap();
    }
    if reports.len() > 1 {
        let agg = aggregate(reports);
        let size: Option<usize> = reports.iter().map(|r| r.tokens_final).sum();
        writeln!(
            out,
            "micro,{:.3},{},{},{},{},{}",
            reports.iter().map(|r| r.wall_time).sum::<f64>(),
            reports.iter().map(|r| r.oracle_queries).sum::<usize>(),
            reports.iter().map(|r| r.skipped).sum::<usize>(),
            opt_count(size),
            cell(agg.micro_precision),
            cell(agg.micro_recall)
        )
        .unwrap();
        writeln!(
            out,
            "macro,,,,,{},{}",
            cell(agg.macro_precision),
            cell(agg.macro_recall)
        )
        .unwrap();
    }
    out
}

pub fn render_text(reports: &[Report]) -> String {
    let mut out = String::new();
    for r in reports {
        writeln!(out, "{}", r.name).unwrap();
        writeln!(
            out,
            "  trials {}  oracle queries {}  skipped {}",
            r.total_trials, r.oracle_queries, r.skipped
        )
        .unwrap();
        writeln!(
            out,
            "  tokens {} -> {}  time {:.3}s",
            opt_count(r.tokens_initial),
            opt_count(r.tokens_final),
            r.wall_time
        )
        .unwrap();
        if let Some(c) = &r.confusion {
            let buckets: Vec<String> = c.buckets().iter().map(|(k, v)| format!("{k} {v}")).collect();
            writeln!(out, "  {}", buckets.join("  ")).unwrap();
            writeln!(out, "  precision {}  recall {}", or_na(r.precision), or_na(r.recall)).unwrap();
        }
        if let Some(per_issue) = &r.per_issue {
            for (code, counts) in per_issue {
                writeln!(out, "  {code}: filtered {} missed {}", counts.filtered, counts.missed).unwrap();
            }
        }
    }
    if reports.len() > 1 {
        let agg = aggregate(reports);
        writeln!(
            out,
            "micro precision {}  micro recall {}",
            or_na(agg.micro_precision),
            or_na(agg.micro_recall)
        )
        .unwrap();
        writeln!(
            out,
            "macro precision {}  macro recall {}",
            or_na(agg.macro_precision),
            or_na(agg.macro_recall)
        )
        .unwrap();
    }
    out
}

fn or_na(value: Option<f64>) -> String {
    value.map(|v| format!("{v:.4}")).unwrap_or_else(|| "n/a".to_string())
}
