//! Pixel-level scoring against ground truth.
//!
//! Counts are summed over every image of a group before rates are computed
//! (micro-aggregation); per-image macro means are kept alongside for
//! diagnostics only. A rate with a zero denominator is reported as 0 and
//! flagged.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::io::Write as _;
use std::iter::Sum;
use std::ops::{Add, AddAssign};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{read_manifest, ManifestRecord};
use crate::error::{Error, Result};
use crate::mask::Mask;

/// Pixel counts with forged as the positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

impl Add for ConfusionCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self { tp: self.tp + o.tp, tn: self.tn + o.tn, fp: self.fp + o.fp, fn_: self.fn_ + o.fn_ }
    }
}

impl AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl Sum for ConfusionCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), Add::add)
    }
}

pub fn confusion(pred: &Mask, gt: &Mask) -> Result<ConfusionCounts> {
    if pred.height() != gt.height() || pred.width() != gt.width() {
        return Err(Error::Shape {
            expected: format!("{}x{} mask", gt.height(), gt.width()),
            actual: format!("{}x{}", pred.height(), pred.width()),
        });
    }
    let mut c = ConfusionCounts::default();
    for (&p, &g) in pred.as_slice().iter().zip(gt.as_slice()) {
        match (p, g) {
            (true, true) => c.tp += 1,
            (false, false) => c.tn += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// A rate, and whether its denominator was zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub value: f64,
    pub degenerate: bool,
}

impl Rate {
    fn ratio(num: u64, den: u64) -> Self {
        if den == 0 {
            Rate { value: 0.0, degenerate: true }
        } else {
            Rate { value: num as f64 / den as f64, degenerate: false }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tpr: Rate,
    pub tnr: Rate,
    pub f1: Rate,
}

pub fn metrics(c: &ConfusionCounts) -> Metrics {
    Metrics {
        tpr: Rate::ratio(c.tp, c.tp + c.fn_),
        tnr: Rate::ratio(c.tn, c.tn + c.fp),
        f1: Rate::ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Grouping {
    Angle,
    /// First compression quality; `none` for uncompressed cases.
    Qf,
    All,
}

impl fmt::Display for Grouping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Grouping::Angle => "angle",
            Grouping::Qf => "qf",
            Grouping::All => "all",
        })
    }
}

impl FromStr for Grouping {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "angle" => Ok(Grouping::Angle),
            "qf" => Ok(Grouping::Qf),
            "all" => Ok(Grouping::All),
            _ => Err(Error::Parameter(format!("unknown grouping {s:?} (expected angle, qf or all)"))),
        }
    }
}

impl Grouping {
    /// Sort key and label of a case's group.
    fn key(self, r: &ManifestRecord) -> (i32, String) {
        match self {
            Grouping::Angle => (r.angle.degrees() as i32, r.angle.degrees().to_string()),
            Grouping::Qf => match r.qf_history.first() {
                Some(&q) => (q as i32, q.to_string()),
                None => (-1, "none".into()),
            },
            Grouping::All => (0, "all".into()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub id: String,
    pub group: String,
    pub counts: ConfusionCounts,
}

/// Mean of the non-degenerate per-case values, if any.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MacroMeans {
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
    pub f1: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub group: String,
    pub cases: usize,
    pub counts: ConfusionCounts,
    pub metrics: Metrics,
    pub macro_means: MacroMeans,
}

fn group_report(group: String, cases: &[&CaseResult]) -> GroupReport {
    let counts: ConfusionCounts = cases.iter().map(|c| c.counts).sum();
    let per: Vec<Metrics> = cases.iter().map(|c| metrics(&c.counts)).collect();
    let mean = |f: fn(&Metrics) -> Rate| {
        let v: Vec<f64> = per.iter().map(f).filter(|r| !r.degenerate).map(|r| r.value).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    GroupReport {
        group,
        cases: cases.len(),
        counts,
        metrics: metrics(&counts),
        macro_means: MacroMeans { tpr: mean(|m| m.tpr), tnr: mean(|m| m.tnr), f1: mean(|m| m.f1) },
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub grouping: Grouping,
    pub groups: Vec<GroupReport>,
    pub overall: GroupReport,
    pub cases: Vec<CaseResult>,
    /// Manifest ids without a prediction; excluded from every count.
    pub missing: Vec<String>,
}

impl EvalReport {
    pub fn is_complete(&self) -> bool {
        self.missing.is_empty()
    }

    /// Aligned text table, one row per group plus a total; `*` marks a 0/0 rate.
    pub fn table(&self) -> String {
        let rate = |r: Rate| format!("{:.4}{}", r.value, if r.degenerate { "*" } else { " " });
        let mut s = String::new();
        let head = self.grouping.to_string();
        writeln!(
            s,
            "{head:>6} {:>5} {:>11} {:>11} {:>11} {:>11} {:>8} {:>8} {:>8}",
            "cases", "tp", "fp", "fn", "tn", "tpr", "tnr", "f1"
        )
        .expect("write to string");
        for g in self.groups.iter().chain(std::iter::once(&self.overall)) {
            let c = g.counts;
            writeln!(
                s,
                "{:>6} {:>5} {:>11} {:>11} {:>11} {:>11} {:>8} {:>8} {:>8}",
                g.group,
                g.cases,
                c.tp,
                c.fp,
                c.fn_,
                c.tn,
                rate(g.metrics.tpr),
                rate(g.metrics.tnr),
                rate(g.metrics.f1)
            )
            .expect("write to string");
        }
        if !self.missing.is_empty() {
            writeln!(s, "incomplete: {} case(s) without prediction: {}", self.missing.len(), self.missing.join(", "))
                .expect("write to string");
        }
        s
    }

    /// One JSON object per line: each group, then the total, then each case.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for g in &self.groups {
            out += &serde_json::to_string(&serde_json::json!({"kind": "group", "grouping": self.grouping, "report": g}))?;
            out.push('\n');
        }
        out += &serde_json::to_string(
            &serde_json::json!({"kind": "total", "grouping": self.grouping, "report": self.overall, "missing": self.missing}),
        )?;
        out.push('\n');
        for c in &self.cases {
            out += &serde_json::to_string(&serde_json::json!({"kind": "case", "case": c}))?;
            out.push('\n');
        }
        Ok(out)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let table = dir.join("report.txt");
        fs::write(&table, self.table()).map_err(|e| Error::io(&table, e))?;
        let jsonl = dir.join("report.jsonl");
        let mut f = fs::File::create(&jsonl).map_err(|e| Error::io(&jsonl, e))?;
        f.write_all(self.to_jsonl()?.as_bytes()).map_err(|e| Error::io(&jsonl, e))
    }
}

/// Groups already-computed case counts. `records` fixes group membership; ids
/// in `missing` are carried through untouched.
pub fn aggregate(
    records: &[ManifestRecord],
    cases: Vec<(String, ConfusionCounts)>,
    missing: Vec<String>,
    grouping: Grouping,
) -> Result<EvalReport> {
    let by_id: BTreeMap<&str, &ManifestRecord> = records.iter().map(|r| (r.id.as_str(), r)).collect();
    let mut results = Vec::with_capacity(cases.len());
    let mut groups: BTreeMap<(i32, String), Vec<usize>> = BTreeMap::new();
    for (id, counts) in cases {
        let rec = by_id.get(id.as_str()).ok_or_else(|| Error::Manifest(format!("case {id} not in manifest")))?;
        let key = grouping.key(rec);
        groups.entry(key.clone()).or_default().push(results.len());
        results.push(CaseResult { id, group: key.1, counts });
    }
    let group_reports = groups
        .into_iter()
        .map(|((_, label), idx)| group_report(label, &idx.iter().map(|&i| &results[i]).collect::<Vec<_>>()))
        .collect();
    let overall = group_report("all".into(), &results.iter().collect::<Vec<_>>());
    Ok(EvalReport { grouping, groups: group_reports, overall, cases: results, missing })
}

/// Where a predicted mask for case `id` lives under a predictions directory.
pub fn prediction_mask_path(pred_dir: &Path, id: &str) -> PathBuf {
    pred_dir.join("masks").join(format!("{id}.png"))
}

/// Scores every manifest case whose predicted mask exists under `pred_dir`.
/// Ground-truth paths are resolved against the manifest's directory.
pub fn evaluate_run(manifest: &Path, pred_dir: &Path, grouping: Grouping) -> Result<EvalReport> {
    let records = read_manifest(manifest)?;
    let root = manifest.parent().unwrap_or(Path::new("."));
    let scored: Vec<Option<(String, ConfusionCounts)>> = records
        .par_iter()
        .map(|r| {
            let pred_path = prediction_mask_path(pred_dir, &r.id);
            if !pred_path.exists() {
                return Ok(None);
            }
            let pred = Mask::load_png(&pred_path)?;
            let gt = Mask::load_png(&root.join(&r.mask))?;
            Ok(Some((r.id.clone(), confusion(&pred, &gt)?)))
        })
        .collect::<Result<_>>()?;
    let missing = records.iter().zip(&scored).filter(|(_, s)| s.is_none()).map(|(r, _)| r.id.clone()).collect();
    aggregate(&records, scored.into_iter().flatten().collect(), missing, grouping)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn counts(tp: u64, tn: u64, fp: u64, fn_: u64) -> ConfusionCounts {
        ConfusionCounts { tp, tn, fp, fn_ }
    }

    #[test]
    fn closed_form_metrics() {
        let m = metrics(&counts(50, 900, 0, 50));
        assert_eq!(m.tpr.value, 0.5);
        assert_eq!(m.tnr.value, 1.0);
        assert!((m.f1.value - 2.0 / 3.0).abs() < 1e-12);
        let d = metrics(&counts(0, 10, 0, 0));
        assert!(d.tpr.degenerate && d.f1.degenerate && !d.tnr.degenerate);
        assert_eq!((d.tpr.value, d.f1.value, d.tnr.value), (0.0, 0.0, 1.0));
        let p = metrics(&counts(7, 3, 0, 0));
        assert_eq!((p.tpr.value, p.tnr.value, p.f1.value), (1.0, 1.0, 1.0));
    }

    #[test]
    fn confusion_cases() {
        let gt = Mask::from_fn(4, 5, |y, x| y < 2 && x > 1);
        let same = confusion(&gt, &gt).unwrap();
        assert_eq!((same.fp, same.fn_, same.tp, same.total()), (0, 0, 6, 20));
        let flipped = confusion(&gt.complement(), &gt).unwrap();
        assert_eq!((flipped.tp, flipped.tn), (0, 0));
        let none = confusion(&Mask::new(4, 5), &Mask::new(4, 5)).unwrap();
        assert_eq!(none, counts(0, 20, 0, 0));
        assert!(confusion(&Mask::new(4, 4), &gt).is_err());
    }

    #[test]
    fn grouping_text_round_trip() {
        for g in [Grouping::Angle, Grouping::Qf, Grouping::All] {
            assert_eq!(g.to_string().parse::<Grouping>().unwrap(), g);
        }
        assert!("recipe".parse::<Grouping>().is_err());
    }

    fn arb_counts() -> impl Strategy<Value = ConfusionCounts> {
        (0u64..1000, 0u64..1000, 0u64..1000, 0u64..1000).prop_map(|(a, b, c, d)| counts(a, b, c, d))
    }

    proptest! {
        #[test]
        fn rates_lie_in_unit_interval(c in arb_counts()) {
            let m = metrics(&c);
            for r in [m.tpr, m.tnr, m.f1] {
                prop_assert!((0.0..=1.0).contains(&r.value));
            }
        }

        #[test]
        fn f1_ignores_true_negatives(c in arb_counts(), extra in 0u64..100_000) {
            let more = ConfusionCounts { tn: c.tn + extra, ..c };
            prop_assert_eq!(metrics(&c).f1, metrics(&more).f1);
        }

        #[test]
        fn identical_cases_aggregate_to_the_single_case(c in arb_counts(), k in 1u64..6) {
            let sum: ConfusionCounts = (0..k).map(|_| c).sum();
            let (a, b) = (metrics(&sum), metrics(&c));
            for (x, y) in [(a.tpr, b.tpr), (a.tnr, b.tnr), (a.f1, b.f1)] {
                prop_assert!((x.value - y.value).abs() < 1e-12 && x.degenerate == y.degenerate);
            }
        }
    }
}
