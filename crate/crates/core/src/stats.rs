//! Percentile summaries, comparison tables and report export.
//!
//! Percentiles are nearest-rank: the q-th percentile of n sorted values is
//! the value at 1-based rank `ceil(q * n / 100)`. No interpolation, so
//! every reported percentile is an observed latency. Only ok samples enter
//! the distributions; the others are counted in `failed`.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::samples::SampleSet;
use crate::types::InvocationRecord;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("no ok samples to summarize")]
    Empty,
    #[error("comparison needs at least two reports, got {0}")]
    TooFewReports(usize),
    #[error("unknown report or field in {0:?}")]
    UnknownTerm(String),
    #[error("cannot parse assertion {expr:?}: {reason}")]
    BadAssertion { expr: String, reason: &'static str },
}

/// Nearest-rank percentile of an ascending slice. `percent` is in 0..=100.
pub fn nearest_rank(sorted: &[u64], percent: u32) -> u64 {
    assert!(!sorted.is_empty(), "percentile of empty data");
    let n = sorted.len() as u64;
    let rank = (u64::from(percent) * n).div_ceil(100).clamp(1, n);
    sorted[(rank - 1) as usize]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: u64,
    pub min_ns: u64,
    pub p1_ns: u64,
    pub p25_ns: u64,
    pub p50_ns: u64,
    pub p75_ns: u64,
    pub p99_ns: u64,
    pub max_ns: u64,
    pub mean_ns: f64,
}

impl Summary {
    pub fn from_values(values: impl IntoIterator<Item = u64>) -> Option<Summary> {
        let mut sorted: Vec<u64> = values.into_iter().collect();
        if sorted.is_empty() {
            return None;
        }
        sorted.sort_unstable();
        let sum: u128 = sorted.iter().map(|&v| u128::from(v)).sum();
        Some(Summary {
            count: sorted.len() as u64,
            min_ns: sorted[0],
            p1_ns: nearest_rank(&sorted, 1),
            p25_ns: nearest_rank(&sorted, 25),
            p50_ns: nearest_rank(&sorted, 50),
            p75_ns: nearest_rank(&sorted, 75),
            p99_ns: nearest_rank(&sorted, 99),
            max_ns: sorted[sorted.len() - 1],
            mean_ns: sum as f64 / sorted.len() as f64,
        })
    }

    pub fn is_monotone(&self) -> bool {
        self.min_ns <= self.p1_ns
            && self.p1_ns <= self.p25_ns
            && self.p25_ns <= self.p50_ns
            && self.p50_ns <= self.p75_ns
            && self.p75_ns <= self.p99_ns
            && self.p99_ns <= self.max_ns
    }

    fn stat_ns(&self, stat: &str) -> Option<f64> {
        Some(match stat {
            "min" => self.min_ns as f64,
            "p1" => self.p1_ns as f64,
            "p25" => self.p25_ns as f64,
            "p50" => self.p50_ns as f64,
            "p75" => self.p75_ns as f64,
            "p99" => self.p99_ns as f64,
            "max" => self.max_ns as f64,
            "mean" => self.mean_ns,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Breakdown {
    pub queue_wait: Summary,
    pub startup: Summary,
    pub execution: Summary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub connection_setup: Option<Summary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub environment: String,
    pub parallelism: u64,
    /// Distribution of `total_ns` over ok samples.
    #[serde(flatten)]
    pub total: Summary,
    pub throughput_rps: f64,
    pub failed: u64,
    pub breakdown: Breakdown,
    /// Latency without connection setup, split by cold and warm starts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cold: Option<Summary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warm: Option<Summary>,
}

/// Report label for a target: the last path segment of its URL.
pub fn environment_of(target: &str) -> String {
    let trimmed = target.split(['?', '#']).next().unwrap_or(target);
    trimmed
        .trim_end_matches('/')
        .rsplit('/')
        .next()
        .filter(|s| !s.is_empty())
        .unwrap_or(trimmed)
        .to_owned()
}

pub fn summarize(set: &SampleSet) -> Result<BenchReport, StatsError> {
    summarize_as(set, environment_of(&set.config.target_url))
}

pub fn summarize_as(
    set: &SampleSet,
    environment: impl Into<String>,
) -> Result<BenchReport, StatsError> {
    let ok: Vec<&InvocationRecord> = set.samples.iter().filter(|s| s.outcome.is_ok()).collect();
    let summary = |f: &dyn Fn(&InvocationRecord) -> u64| {
        Summary::from_values(ok.iter().map(|r| f(r))).ok_or(StatsError::Empty)
    };
    let total = summary(&|r| r.total_ns)?;
    let breakdown = Breakdown {
        queue_wait: summary(&|r| r.queue_wait_ns)?,
        startup: summary(&|r| r.startup_ns)?,
        execution: summary(&|r| r.execution_ns)?,
        connection_setup: Summary::from_values(ok.iter().filter_map(|r| r.connection_setup_ns)),
    };
    let cold = Summary::from_values(ok.iter().filter(|r| !r.was_warm).map(|r| r.service_ns()));
    let warm = Summary::from_values(ok.iter().filter(|r| r.was_warm).map(|r| r.service_ns()));
    let throughput_rps = if set.elapsed_ns == 0 {
        0.0
    } else {
        ok.len() as f64 / (set.elapsed_ns as f64 / 1e9)
    };
    Ok(BenchReport {
        environment: environment.into(),
        parallelism: set.config.parallelism as u64,
        total,
        throughput_rps,
        failed: (set.samples.len() - ok.len()) as u64,
        breakdown,
        cold,
        warm,
    })
}

impl BenchReport {
    pub fn is_monotone(&self) -> bool {
        self.total.is_monotone()
    }

    /// Value of a field as used in assertions. Latencies are in milliseconds.
    pub fn field(&self, field: &str) -> Option<f64> {
        let ms = |ns: f64| ns / 1e6;
        match field {
            "count" => return Some(self.total.count as f64),
            "failed" => return Some(self.failed as f64),
            "throughput" => return Some(self.throughput_rps),
            "parallelism" => return Some(self.parallelism as f64),
            _ => {}
        }
        if let Some(v) = self.total.stat_ns(field) {
            return Some(ms(v));
        }
        let (part, stat) = field.split_once('.')?;
        let summary = match part {
            "total" => Some(&self.total),
            "queue_wait" => Some(&self.breakdown.queue_wait),
            "startup" => Some(&self.breakdown.startup),
            "execution" => Some(&self.breakdown.execution),
            "connection_setup" => self.breakdown.connection_setup.as_ref(),
            "cold" => self.cold.as_ref(),
            "warm" => self.warm.as_ref(),
            _ => None,
        }?;
        summary.stat_ns(stat).map(ms)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub name: String,
    pub cold_p50_ms: f64,
    pub warm_p50_ms: Option<f64>,
    pub connection_setup_p50_ms: Option<f64>,
}

/// One row per environment: median cold latency, median warm latency and
/// median connection setup, all in milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
}

pub fn compare(reports: &[(String, BenchReport)]) -> Result<Comparison, StatsError> {
    if reports.len() < 2 {
        return Err(StatsError::TooFewReports(reports.len()));
    }
    let ms = |ns: u64| ns as f64 / 1e6;
    let rows = reports
        .iter()
        .map(|(name, r)| ComparisonRow {
            name: name.clone(),
            cold_p50_ms: ms(r.cold.as_ref().map_or(r.total.p50_ns, |c| c.p50_ns)),
            warm_p50_ms: r.warm.as_ref().map(|w| ms(w.p50_ns)),
            connection_setup_p50_ms: r.breakdown.connection_setup.as_ref().map(|c| ms(c.p50_ns)),
        })
        .collect();
    Ok(Comparison { rows })
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self
            .rows
            .iter()
            .map(|r| r.name.len())
            .max()
            .unwrap_or(0)
            .max("environment".len());
        let cell = |v: Option<f64>| v.map_or_else(|| "-".to_owned(), |v| format!("{v:.1}"));
        writeln!(
            f,
            "{:<width$}  {:>10}  {:>10}  {:>16}",
            "environment", "cold p50", "warm p50", "connection p50"
        )?;
        for row in &self.rows {
            writeln!(
                f,
                "{:<width$}  {:>10}  {:>10}  {:>16}",
                row.name,
                cell(Some(row.cold_p50_ms)),
                cell(row.warm_p50_ms),
                cell(row.connection_setup_p50_ms)
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Relation {
    Lt,
    Le,
    Gt,
    Ge,
}

impl Relation {
    fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            Relation::Lt => lhs < rhs,
            Relation::Le => lhs <= rhs,
            Relation::Gt => lhs > rhs,
            Relation::Ge => lhs >= rhs,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssertionResult {
    pub expr: String,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl fmt::Display for AssertionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}  ({:.3} vs {:.3})",
            if self.holds { "PASS" } else { "FAIL" },
            self.expr,
            self.lhs,
            self.rhs
        )
    }
}

/// Evaluates an ordering assertion such as
/// `fn-includeos-cold.p50 + 6.9 < lambda-warm.p50 + 50.1`.
///
/// Tokens are separated by whitespace. A term is a number (milliseconds) or
/// `<report>.<field>`; fields are the `BenchReport::field` names. Terms may
/// be joined with `+` and `-`; the relation is one of `<`, `<=`, `>`, `>=`.
pub fn check_assertion(
    expr: &str,
    reports: &[(String, BenchReport)],
) -> Result<AssertionResult, StatsError> {
    let bad = |reason| StatsError::BadAssertion {
        expr: expr.to_owned(),
        reason,
    };
    let tokens: Vec<&str> = expr.split_whitespace().collect();
    let split = tokens
        .iter()
        .position(|t| matches!(*t, "<" | "<=" | ">" | ">="))
        .ok_or_else(|| bad("missing relation"))?;
    let relation = match tokens[split] {
        "<" => Relation::Lt,
        "<=" => Relation::Le,
        ">" => Relation::Gt,
        _ => Relation::Ge,
    };
    let lhs = eval_sum(&tokens[..split], reports)
        .map_err(|e| e.unwrap_or_else(|| bad("malformed left side")))?;
    let rhs = eval_sum(&tokens[split + 1..], reports)
        .map_err(|e| e.unwrap_or_else(|| bad("malformed right side")))?;
    Ok(AssertionResult {
        expr: expr.to_owned(),
        lhs,
        rhs,
        holds: relation.holds(lhs, rhs),
    })
}

fn eval_sum(tokens: &[&str], reports: &[(String, BenchReport)]) -> Result<f64, Option<StatsError>> {
    if tokens.is_empty() || tokens.len() % 2 != 1 {
        return Err(None);
    }
    let mut acc = eval_term(tokens[0], reports)?;
    for pair in tokens[1..].chunks(2) {
        let value = eval_term(pair[1], reports)?;
        match pair[0] {
            "+" => acc += value,
            "-" => acc -= value,
            _ => return Err(None),
        }
    }
    Ok(acc)
}

fn eval_term(term: &str, reports: &[(String, BenchReport)]) -> Result<f64, Option<StatsError>> {
    if let Ok(v) = f64::from_str(term) {
        return Ok(v);
    }
    // longest matching report name wins, so names may contain dots
    let mut candidates: Vec<&(String, BenchReport)> = reports
        .iter()
        .filter(|(name, _)| {
            term.len() > name.len() + 1
                && term.starts_with(name.as_str())
                && term.as_bytes()[name.len()] == b'.'
        })
        .collect();
    candidates.sort_by_key(|(name, _)| std::cmp::Reverse(name.len()));
    candidates
        .into_iter()
        .find_map(|(name, report)| report.field(&term[name.len() + 1..]))
        .ok_or_else(|| Some(StatsError::UnknownTerm(term.to_owned())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportFormat {
    Json,
    Csv,
    BoxplotCsv,
}

impl FromStr for ExportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "json" => Ok(ExportFormat::Json),
            "csv" => Ok(ExportFormat::Csv),
            "boxplot_csv" | "boxplot-csv" => Ok(ExportFormat::BoxplotCsv),
            other => Err(format!("unknown format {other:?}")),
        }
    }
}

pub const CSV_HEADER: &str = "environment,parallelism,count,failed,min_ns,p1_ns,p25_ns,p50_ns,p75_ns,p99_ns,max_ns,mean_ns,throughput_rps";
pub const BOXPLOT_CSV_HEADER: &str =
    "environment,parallelism,min_ms,p1_ms,p25_ms,p50_ms,p75_ms,p99_ms,max_ms";

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

/// Milliseconds with microsecond resolution (truncated).
fn ms3(ns: u64) -> String {
    format!("{}.{:03}", ns / 1_000_000, (ns % 1_000_000) / 1_000)
}

/// Renders reports in `format`. A single report exports to a JSON object,
/// several to an array; CSV formats emit one row per report in order.
pub fn export(reports: &[BenchReport], format: ExportFormat) -> String {
    match format {
        ExportFormat::Json => {
            let mut s = if reports.len() == 1 {
                serde_json::to_string_pretty(&reports[0])
            } else {
                serde_json::to_string_pretty(reports)
            }
            .expect("reports serialize");
            s.push('\n');
            s
        }
        ExportFormat::Csv => {
            let mut out = format!("{CSV_HEADER}\n");
            for r in reports {
                let t = &r.total;
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},{},{:.1},{:.3}",
                    csv_field(&r.environment),
                    r.parallelism,
                    t.count,
                    r.failed,
                    t.min_ns,
                    t.p1_ns,
                    t.p25_ns,
                    t.p50_ns,
                    t.p75_ns,
                    t.p99_ns,
                    t.max_ns,
                    t.mean_ns,
                    r.throughput_rps
                )
                .expect("writing to a String");
            }
            out
        }
        ExportFormat::BoxplotCsv => {
            let mut out = format!("{BOXPLOT_CSV_HEADER}\n");
            for r in reports {
                let t = &r.total;
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{}",
                    csv_field(&r.environment),
                    r.parallelism,
                    ms3(t.min_ns),
                    ms3(t.p1_ns),
                    ms3(t.p25_ns),
                    ms3(t.p50_ns),
                    ms3(t.p75_ns),
                    ms3(t.p99_ns),
                    ms3(t.max_ns)
                )
                .expect("writing to a String");
            }
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samples::BenchConfig;
    use crate::types::Outcome;

    pub(crate) fn set_of(totals: &[u64]) -> SampleSet {
        let mut set = SampleSet::failed(
            BenchConfig::new("http://h/invoke/echo", totals.len().max(1), 1),
            "",
        );
        set.error = None;
        set.elapsed_ns = 1_000_000_000;
        set.samples = totals
            .iter()
            .enumerate()
            .map(|(i, &t)| InvocationRecord {
                request_id: i as u64,
                function: "echo".into(),
                arrival: 0,
                queue_wait_ns: 0,
                startup_ns: t / 2,
                execution_ns: 0,
                total_ns: t,
                connection_setup_ns: None,
                outcome: Outcome::Ok,
                was_warm: false,
            })
            .collect();
        set
    }

    #[test]
    fn constant_data() {
        let r = summarize(&set_of(&[5_000_000; 4])).unwrap();
        let t = &r.total;
        for v in [
            t.min_ns, t.p1_ns, t.p25_ns, t.p50_ns, t.p75_ns, t.p99_ns, t.max_ns,
        ] {
            assert_eq!(v, 5_000_000);
        }
        assert_eq!(t.mean_ns, 5_000_000.0);
        assert_eq!(r.environment, "echo");
        assert_eq!(r.throughput_rps, 4.0);
    }

    #[test]
    fn nearest_rank_small_cases() {
        assert_eq!(nearest_rank(&[7], 1), 7);
        assert_eq!(nearest_rank(&[7], 99), 7);
        let xs: Vec<u64> = (1..=100).collect();
        assert_eq!(nearest_rank(&xs, 1), 1);
        assert_eq!(nearest_rank(&xs, 50), 50);
        assert_eq!(nearest_rank(&xs, 99), 99);
        assert_eq!(nearest_rank(&xs, 100), 100);
        assert_eq!(nearest_rank(&[1, 2, 3, 4], 50), 2);
        assert_eq!(nearest_rank(&[1, 2, 3, 4], 75), 3);
        assert_eq!(nearest_rank(&[1, 2, 3, 4], 0), 1);
    }

    #[test]
    fn failed_samples_excluded() {
        let mut set = set_of(&[1, 2, 3]);
        set.samples[2].outcome = Outcome::Timeout;
        set.samples[2].total_ns = 1_000;
        let r = summarize(&set).unwrap();
        assert_eq!(r.total.count, 2);
        assert_eq!(r.failed, 1);
        assert_eq!(r.total.max_ns, 2);
    }

    #[test]
    fn empty_is_error() {
        let mut set = set_of(&[1]);
        set.samples.clear();
        assert_eq!(summarize(&set), Err(StatsError::Empty));
    }

    #[test]
    fn environment_labels() {
        assert_eq!(environment_of("http://127.0.0.1:8080/invoke/echo"), "echo");
        assert_eq!(environment_of("http://127.0.0.1:8080/noop/"), "noop");
        assert_eq!(environment_of("sim://kata"), "kata");
    }

    #[test]
    fn compare_needs_two() {
        let r = summarize(&set_of(&[1])).unwrap();
        assert_eq!(
            compare(&[("a".into(), r)]),
            Err(StatsError::TooFewReports(1))
        );
    }

    #[test]
    fn assertions() {
        let a = summarize(&set_of(&[33_400_000])).unwrap();
        let b = summarize(&set_of(&[78_000_000])).unwrap();
        let reports = vec![
            ("fn-includeos-cold".to_owned(), a),
            ("lambda-warm".to_owned(), b),
        ];
        let res = check_assertion(
            "fn-includeos-cold.p50 + 6.9 < lambda-warm.p50 + 50.1",
            &reports,
        )
        .unwrap();
        assert!(res.holds);
        assert!((res.lhs - 40.3).abs() < 1e-9);
        assert!((res.rhs - 128.1).abs() < 1e-9);
        assert!(
            !check_assertion("lambda-warm.p50 < fn-includeos-cold.p50", &reports)
                .unwrap()
                .holds
        );
        assert!(
            check_assertion("lambda-warm.startup.p50 >= 39", &reports)
                .unwrap()
                .holds
        );
        assert!(matches!(
            check_assertion("nope.p50 < lambda-warm.p50", &reports),
            Err(StatsError::UnknownTerm(_))
        ));
        assert!(matches!(
            check_assertion("lambda-warm.p50 lambda-warm.p50", &reports),
            Err(StatsError::BadAssertion { .. })
        ));
    }

    #[test]
    fn dotted_names_resolve() {
        let a = summarize(&set_of(&[1_000_000])).unwrap();
        let b = summarize(&set_of(&[2_000_000])).unwrap();
        let reports = vec![("fig.c1".to_owned(), a), ("fig".to_owned(), b)];
        let res = check_assertion("fig.c1.p50 < fig.p50", &reports).unwrap();
        assert_eq!((res.lhs, res.rhs), (1.0, 2.0));
    }

    #[test]
    fn json_round_trip() {
        let mut set = set_of(&[3, 1, 4, 1, 5, 9, 2, 6]);
        set.samples[1].connection_setup_ns = Some(77);
        set.samples[2].was_warm = true;
        let r = summarize(&set).unwrap();
        let back: BenchReport =
            serde_json::from_str(&export(std::slice::from_ref(&r), ExportFormat::Json)).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn boxplot_rows() {
        let reports: Vec<BenchReport> = [1, 10, 20, 40]
            .iter()
            .map(|&p| {
                let mut set = set_of(&[1_234_567, 2_000_000]);
                set.config.parallelism = p;
                summarize(&set).unwrap()
            })
            .collect();
        let csv = export(&reports, ExportFormat::BoxplotCsv);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[0], BOXPLOT_CSV_HEADER);
        assert_eq!(lines[1], "echo,1,1.234,1.234,1.234,1.234,2.000,2.000,2.000");
        let levels: Vec<u64> = lines[1..]
            .iter()
            .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
            .collect();
        assert!(levels.windows(2).all(|w| w[0] < w[1]));
    }
}
