//! Calibration and ranking metrics.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_BINS: usize = 10;

/// A scored candidate belonging to a query group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredItem {
    pub group_id: String,
    pub score: f64,
    pub label: u8,
}

impl ScoredItem {
    pub fn new(group_id: impl Into<String>, score: f64, label: u8) -> Result<Self> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::invalid(format!(
                "score must lie in [0, 1], got {score}"
            )));
        }
        if label > 1 {
            return Err(Error::invalid(format!("label must be 0 or 1, got {label}")));
        }
        Ok(Self {
            group_id: group_id.into(),
            score,
            label,
        })
    }

    /// `(confidence, correct)` for binary calibration: the prediction is
    /// `score >= 0.5`, confidence is `max(score, 1 - score)`.
    pub fn calibration_pair(&self) -> (f64, bool) {
        let predicted = u8::from(self.score >= 0.5);
        (self.score.max(1.0 - self.score), predicted == self.label)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinStat {
    pub low: f64,
    pub high: f64,
    pub count: usize,
    /// `None` for an empty bin.
    pub mean_confidence: Option<f64>,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub n_bins: usize,
    pub bins: Vec<BinStat>,
    pub ece: f64,
}

impl CalibrationReport {
    pub fn n_items(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }
}

fn bin_edge(i: usize, n_bins: usize) -> f64 {
    i as f64 / n_bins as f64
}

/// Equal-width bin of `score`: `[i/C, (i+1)/C)`, with 1.0 in the last bin.
pub fn bin_index(score: f64, n_bins: usize) -> usize {
    let mut idx = ((score * n_bins as f64).floor() as usize).min(n_bins - 1);
    if idx + 1 < n_bins && score >= bin_edge(idx + 1, n_bins) {
        idx += 1;
    } else if idx > 0 && score < bin_edge(idx, n_bins) {
        idx -= 1;
    }
    idx
}

/// Expected calibration error over `(confidence, correct)` pairs.
pub fn ece(items: &[(f64, bool)], n_bins: usize) -> Result<CalibrationReport> {
    if items.is_empty() {
        return Err(Error::invalid("ECE needs at least one item"));
    }
    if n_bins == 0 {
        return Err(Error::invalid("n_bins must be at least 1"));
    }
    if let Some((s, _)) = items.iter().find(|(s, _)| !(0.0..=1.0).contains(s)) {
        return Err(Error::invalid(format!(
            "confidence must lie in [0, 1], got {s}"
        )));
    }
    let mut conf_sum = vec![0.0; n_bins];
    let mut correct = vec![0usize; n_bins];
    let mut count = vec![0usize; n_bins];
    for &(s, ok) in items {
        let b = bin_index(s, n_bins);
        conf_sum[b] += s;
        count[b] += 1;
        correct[b] += usize::from(ok);
    }
    let n = items.len() as f64;
    let mut total = 0.0;
    let bins = (0..n_bins)
        .map(|b| {
            let (mean_confidence, accuracy) = if count[b] == 0 {
                (None, None)
            } else {
                let c = count[b] as f64;
                let mc = conf_sum[b] / c;
                let acc = correct[b] as f64 / c;
                total += c / n * (acc - mc).abs();
                (Some(mc), Some(acc))
            };
            BinStat {
                low: bin_edge(b, n_bins),
                high: bin_edge(b + 1, n_bins),
                count: count[b],
                mean_confidence,
                accuracy,
            }
        })
        .collect();
    Ok(CalibrationReport {
        n_bins,
        bins,
        ece: total.clamp(0.0, 1.0),
    })
}

/// Items of one query group, in input order.
#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub id: String,
    pub items: Vec<(f64, u8)>,
}

impl Group {
    /// Item positions sorted by descending score; ties keep input order.
    pub fn ranking(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.items.len()).collect();
        order.sort_by(|&a, &b| self.items[b].0.total_cmp(&self.items[a].0));
        order
    }

    fn require_positive(&self) -> Result<()> {
        if self.items.iter().any(|&(_, y)| y == 1) {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "group {:?} has no positive item",
                self.id
            )))
        }
    }
}

/// Group items by `group_id`, groups ordered by first appearance.
pub fn group_items(items: &[ScoredItem]) -> Vec<Group> {
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut groups: Vec<Group> = Vec::new();
    for it in items {
        let slot = *index.entry(it.group_id.as_str()).or_insert_with(|| {
            groups.push(Group {
                id: it.group_id.clone(),
                items: Vec::new(),
            });
            groups.len() - 1
        });
        groups[slot].items.push((it.score, it.label));
    }
    groups
}

fn check_groups(groups: &[Group]) -> Result<()> {
    if groups.is_empty() {
        return Err(Error::invalid("no groups to evaluate"));
    }
    groups.iter().try_for_each(Group::require_positive)
}

/// Fraction of groups with a positive among the top `k`.
pub fn recall_at_k(groups: &[Group], k: usize) -> Result<f64> {
    check_groups(groups)?;
    let hits = groups
        .iter()
        .filter(|g| g.ranking().iter().take(k).any(|&i| g.items[i].1 == 1))
        .count();
    Ok(hits as f64 / groups.len() as f64)
}

/// Mean of precision at each positive's rank.
pub fn average_precision(group: &Group) -> Result<f64> {
    group.require_positive()?;
    let mut seen = 0usize;
    let mut total = 0.0;
    for (rank, &i) in group.ranking().iter().enumerate() {
        if group.items[i].1 == 1 {
            seen += 1;
            total += seen as f64 / (rank + 1) as f64;
        }
    }
    Ok(total / seen as f64)
}

pub fn mean_average_precision(groups: &[Group]) -> Result<f64> {
    check_groups(groups)?;
    let mut total = 0.0;
    for g in groups {
        total += average_precision(g)?;
    }
    Ok(total / groups.len() as f64)
}

/// Summary printed by evaluation runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub r_at_1: f64,
    pub map: f64,
    pub ece: f64,
    pub n_groups: usize,
    pub n_items: usize,
    pub n_bins: usize,
}

/// Ranking metrics over all groups plus calibration over every item, or only
/// over each group's top-ranked item when `rank1_only` is set.
pub fn evaluate(
    items: &[ScoredItem],
    n_bins: usize,
    rank1_only: bool,
) -> Result<(MetricsSummary, CalibrationReport)> {
    let groups = group_items(items);
    let r_at_1 = recall_at_k(&groups, 1)?;
    let map = mean_average_precision(&groups)?;
    let pairs: Vec<(f64, bool)> = if rank1_only {
        groups
            .iter()
            .map(|g| {
                let top = g.ranking()[0];
                let (score, label) = g.items[top];
                ScoredItem {
                    group_id: g.id.clone(),
                    score,
                    label,
                }
                .calibration_pair()
            })
            .collect()
    } else {
        items.iter().map(ScoredItem::calibration_pair).collect()
    };
    let report = ece(&pairs, n_bins)?;
    Ok((
        MetricsSummary {
            r_at_1,
            map,
            ece: report.ece,
            n_groups: groups.len(),
            n_items: items.len(),
            n_bins,
        },
        report,
    ))
}

pub const RELIABILITY_HEADER: &str = "bin_low,bin_high,count,mean_confidence,accuracy";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// CSV body for a reliability diagram; empty bins leave the last two fields blank.
pub fn reliability_csv(report: &CalibrationReport) -> String {
    let mut out = String::new();
    out.push_str(RELIABILITY_HEADER);
    out.push('\n');
    for b in &report.bins {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            b.low,
            b.high,
            b.count,
            opt(b.mean_confidence),
            opt(b.accuracy)
        );
    }
    let _ = writeln!(out, "# ece={}", report.ece);
    out
}

pub fn reliability_export(report: &CalibrationReport, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, reliability_csv(report))?;
    Ok(())
}

/// Inverse of [`reliability_csv`].
pub fn parse_reliability_csv(text: &str) -> Result<CalibrationReport> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == RELIABILITY_HEADER => {}
        _ => return Err(Error::parse(Some(1), "missing reliability header")),
    }
    let num = |s: &str, line: usize| -> Result<f64> {
        s.parse::<f64>()
            .map_err(|e| Error::parse(Some(line), format!("{s:?}: {e}")))
    };
    let maybe = |s: &str, line: usize| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            num(s, line).map(Some)
        }
    };
    let mut bins = Vec::new();
    let mut ece_value = None;
    for (i, line) in lines {
        let lineno = i + 1;
        if let Some(rest) = line.strip_prefix("# ece=") {
            ece_value = Some(num(rest.trim(), lineno)?);
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::parse(Some(lineno), "expected 5 fields"));
        }
        bins.push(BinStat {
            low: num(fields[0], lineno)?,
            high: num(fields[1], lineno)?,
            count: fields[2]
                .parse()
                .map_err(|e| Error::parse(Some(lineno), format!("count: {e}")))?,
            mean_confidence: maybe(fields[3], lineno)?,
            accuracy: maybe(fields[4], lineno)?,
        });
    }
    let ece = ece_value.ok_or_else(|| Error::parse(None, "missing ece footer"))?;
    Ok(CalibrationReport {
        n_bins: bins.len(),
        bins,
        ece,
    })
}
