use std::fmt::Write as _;

use serde::Serialize;

use crate::campaign::run::CellResult;
use crate::campaign::spec::{accuracy_mode_name, limit_label};
use crate::error::{Error, Result};
use crate::injector::{RandVariant, Sampler, Target};
use crate::nn::AccuracyMode;
use crate::store::ProtectionMode;

pub const DEFAULT_SATURATION_EPS: f64 = 0.03;

/// Slack for comparing a median against the random-guess band edge.
const BAND_SLACK: f64 = 1e-12;

/// True when the median accuracy is within `eps` of random guessing.
pub fn detect_saturation(median: f64, n_classes: usize, eps: f64) -> bool {
    assert!(n_classes >= 2 && eps > 0.0);
    (median - 1.0 / n_classes as f64).abs() <= eps + BAND_SLACK
}

/// One median table: rows all / fc / convolution, one column per
/// `(p, limit)` pair, descending `p` with the unlimited case first.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryTable {
    pub protection: ProtectionMode,
    pub rand_variant: RandVariant,
    pub accuracy_mode: AccuracyMode,
    pub sampler: Sampler,
    pub columns: Vec<(f64, Option<u32>)>,
    pub rows: Vec<SummaryRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub target: Target,
    pub medians: Vec<Option<f64>>,
}

pub fn target_label(t: Target) -> &'static str {
    match t {
        Target::All => "All",
        Target::Fc => "FC",
        Target::Conv => "Convolution",
    }
}

type TableKey = (ProtectionMode, RandVariant, AccuracyMode, Sampler);

fn table_key(r: &CellResult) -> TableKey {
    (
        r.cell.chain.protection,
        r.cell.fault.rand_variant,
        r.cell.chain.accuracy_mode,
        r.cell.sampler,
    )
}

fn limit_order(l: Option<u32>) -> u64 {
    l.map_or(0, |k| u64::from(k) + 1)
}

/// Groups cells into median tables, one per protection mode and sampling
/// setup. A cell key seen twice keeps its first result.
pub fn summarize(results: &[CellResult]) -> Vec<SummaryTable> {
    let mut keys: Vec<TableKey> = Vec::new();
    for r in results {
        let k = table_key(r);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.sort_by_key(|k| ProtectionMode::ALL.iter().position(|m| *m == k.0));

    keys.into_iter()
        .map(|key| {
            let cells: Vec<&CellResult> = results.iter().filter(|r| table_key(r) == key).collect();
            let mut columns: Vec<(f64, Option<u32>)> = Vec::new();
            for r in &cells {
                let col = (r.cell.fault.p, r.cell.fault.limit);
                if !columns.contains(&col) {
                    columns.push(col);
                }
            }
            columns.sort_by(|a, b| b.0.total_cmp(&a.0).then(limit_order(a.1).cmp(&limit_order(b.1))));
            let rows = Target::ALL
                .iter()
                .map(|&target| SummaryRow {
                    target,
                    medians: columns
                        .iter()
                        .map(|&(p, limit)| {
                            cells
                                .iter()
                                .find(|r| r.cell.fault.target == target && r.cell.fault.p == p && r.cell.fault.limit == limit)
                                .map(|r| r.summary.median)
                        })
                        .collect(),
                })
                .collect();
            SummaryTable {
                protection: key.0,
                rand_variant: key.1,
                accuracy_mode: key.2,
                sampler: key.3,
                columns,
                rows,
            }
        })
        .collect()
}

pub fn render_tables(tables: &[SummaryTable]) -> String {
    let mut s = String::new();
    for t in tables {
        let _ = writeln!(
            s,
            "Median accuracy, {} (rand={}, accuracy={}, sampler={})",
            t.protection.name(),
            t.rand_variant.name(),
            accuracy_mode_name(t.accuracy_mode),
            t.sampler.name()
        );
        let _ = write!(s, "{:<12}", "layers");
        for &(p, limit) in &t.columns {
            let head = match limit {
                None => format!("p={p}"),
                Some(k) => format!("p={p},<={k}"),
            };
            let _ = write!(s, " {head:>13}");
        }
        let _ = writeln!(s);
        for row in &t.rows {
            let _ = write!(s, "{:<12}", target_label(row.target));
            for m in &row.medians {
                match m {
                    Some(v) => {
                        let _ = write!(s, " {v:>13.4}");
                    }
                    None => {
                        let _ = write!(s, " {:>13}", "-");
                    }
                }
            }
            let _ = writeln!(s);
        }
        let _ = writeln!(s);
    }
    s
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Comparison {
    pub target: Target,
    pub p: f64,
    pub limit: Option<u32>,
    pub baseline_median: f64,
    pub candidate_median: f64,
    /// `candidate / baseline`; `None` when the baseline median is zero.
    pub ratio: Option<f64>,
}

impl Comparison {
    pub fn ratio_label(&self) -> String {
        match self.ratio {
            Some(r) => format!("{r:.3}"),
            None => "inf".to_string(),
        }
    }
}

/// Median ratio between two protection modes for every cell setup present
/// in both.
pub fn compare(results: &[CellResult], baseline: ProtectionMode, candidate: ProtectionMode) -> Result<Vec<Comparison>> {
    let same_setup = |a: &CellResult, b: &CellResult| {
        a.cell.fault.target == b.cell.fault.target
            && a.cell.fault.p == b.cell.fault.p
            && a.cell.fault.limit == b.cell.fault.limit
            && a.cell.fault.rand_variant == b.cell.fault.rand_variant
            && a.cell.chain.accuracy_mode == b.cell.chain.accuracy_mode
            && a.cell.sampler == b.cell.sampler
    };
    let mut out: Vec<Comparison> = Vec::new();
    for b in results.iter().filter(|r| r.cell.chain.protection == baseline) {
        let Some(c) = results
            .iter()
            .find(|c| c.cell.chain.protection == candidate && same_setup(b, c))
        else {
            continue;
        };
        let seen = out
            .iter()
            .any(|o| o.target == b.cell.fault.target && o.p == b.cell.fault.p && o.limit == b.cell.fault.limit);
        if seen {
            continue;
        }
        let (bm, cm) = (b.summary.median, c.summary.median);
        out.push(Comparison {
            target: b.cell.fault.target,
            p: b.cell.fault.p,
            limit: b.cell.fault.limit,
            baseline_median: bm,
            candidate_median: cm,
            ratio: if bm == 0.0 { None } else { Some(cm / bm) },
        });
    }
    if out.is_empty() {
        return Err(Error::NoMatchingCells {
            baseline: baseline.name().into(),
            candidate: candidate.name().into(),
        });
    }
    Ok(out)
}

pub fn render_comparison(rows: &[Comparison], baseline: ProtectionMode, candidate: ProtectionMode) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<12} {:>8} {:>6} {:>10} {:>10} {:>8}",
        "layers",
        "p",
        "limit",
        baseline.name(),
        candidate.name(),
        "ratio"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:<12} {:>8} {:>6} {:>10.4} {:>10.4} {:>8}",
            target_label(r.target),
            r.p,
            limit_label(r.limit),
            r.baseline_median,
            r.candidate_median,
            r.ratio_label()
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::campaign::spec::Cell;
    use crate::injector::{ChainConfig, FaultConfig};
    use crate::stats::Summary;
    use crate::store::ReadReport;
    use std::path::PathBuf;

    fn result(mode: ProtectionMode, target: Target, p: f64, limit: Option<u32>, samples: &[f64]) -> CellResult {
        let summary = Summary::from_samples(samples).unwrap();
        CellResult {
            cell: Cell {
                id: format!("{mode}-{target}-{p}-{limit:?}"),
                name: None,
                fault: FaultConfig::new(p, mode).with_target(target).with_limit(limit),
                chain: ChainConfig {
                    iterations: samples.len(),
                    accuracy_mode: AccuracyMode::Truth,
                    protection: mode,
                },
                sampler: Sampler::Metropolis,
                dataset: PathBuf::from("d"),
                images: None,
            },
            samples: samples.to_vec(),
            summary,
            fault_free_accuracy: 0.99,
            report: ReadReport::default(),
            saturated: detect_saturation(summary.median, 10, DEFAULT_SATURATION_EPS),
            duration_secs: 0.0,
        }
    }

    #[test]
    fn saturation_band() {
        assert!(detect_saturation(0.0997, 10, 0.03));
        assert!(detect_saturation(0.1, 10, 0.03));
        assert!(detect_saturation(0.13, 10, 0.03));
        assert!(!detect_saturation(0.9889, 10, 0.03));
        assert!(!detect_saturation(0.14, 10, 0.03));
    }

    #[test]
    fn comparison_ratios() {
        let rs = vec![
            result(ProtectionMode::Ecc, Target::All, 0.1, Some(2), &[0.1004]),
            result(ProtectionMode::Spw, Target::All, 0.1, Some(2), &[0.3086]),
            result(ProtectionMode::Ecc, Target::All, 0.01, Some(2), &[0.0992]),
            result(ProtectionMode::Spw, Target::All, 0.01, Some(2), &[0.9873]),
            result(ProtectionMode::Ecc, Target::Fc, 0.1, None, &[0.0]),
            result(ProtectionMode::Spw, Target::Fc, 0.1, None, &[0.2]),
        ];
        let c = compare(&rs, ProtectionMode::Ecc, ProtectionMode::Spw).unwrap();
        assert_eq!(c.len(), 3);
        assert!((c[0].ratio.unwrap() - 3.0737).abs() < 1e-3);
        assert!((c[1].ratio.unwrap() - 9.9526).abs() < 1e-3);
        assert_eq!(c[2].ratio, None);
        assert_eq!(c[2].ratio_label(), "inf");
    }

    #[test]
    fn identical_distributions_ratio_one() {
        let rs = vec![
            result(ProtectionMode::Ecc, Target::Conv, 0.001, None, &[0.5, 0.6, 0.7]),
            result(ProtectionMode::Spw, Target::Conv, 0.001, None, &[0.5, 0.6, 0.7]),
        ];
        let c = compare(&rs, ProtectionMode::Ecc, ProtectionMode::Spw).unwrap();
        assert_eq!(c[0].ratio, Some(1.0));
    }

    #[test]
    fn no_matching_cells_is_an_error() {
        let rs = vec![result(ProtectionMode::Ecc, Target::All, 0.1, None, &[0.1])];
        assert!(matches!(
            compare(&rs, ProtectionMode::Ecc, ProtectionMode::Spw),
            Err(Error::NoMatchingCells { .. })
        ));
    }

    #[test]
    fn table_shape() {
        let mut rs = Vec::new();
        for mode in ProtectionMode::ALL {
            for t in Target::ALL {
                for p in [0.0001, 0.1, 0.001, 0.01] {
                    for l in [Some(2), None] {
                        rs.push(result(mode, t, p, l, &[0.5]));
                    }
                }
            }
        }
        let tables = summarize(&rs);
        assert_eq!(tables.len(), 3);
        assert_eq!(
            tables.iter().map(|t| t.protection).collect::<Vec<_>>(),
            ProtectionMode::ALL.to_vec()
        );
        for t in &tables {
            assert_eq!(t.columns.len(), 8);
            assert_eq!(t.columns[0], (0.1, None));
            assert_eq!(t.columns[1], (0.1, Some(2)));
            assert_eq!(t.columns[7], (0.0001, Some(2)));
            assert_eq!(t.rows.iter().map(|r| r.target).collect::<Vec<_>>(), vec![Target::All, Target::Fc, Target::Conv]);
            assert!(t.rows.iter().all(|r| r.medians.iter().all(|m| *m == Some(0.5))));
        }
        let text = render_tables(&tables);
        assert!(text.contains("Convolution"));
    }

    #[test]
    fn single_sample_median() {
        let r = result(ProtectionMode::None, Target::All, 0.1, None, &[0.0997]);
        let t = summarize(&[r]);
        assert_eq!(t[0].rows[0].medians, vec![Some(0.0997)]);
        assert_eq!(t[0].rows[1].medians, vec![None]);
    }
}
