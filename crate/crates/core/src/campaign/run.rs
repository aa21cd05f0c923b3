use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::campaign::spec::{accuracy_mode_name, limit_label, CampaignSpec, Cell, KEY_COLUMNS};
use crate::campaign::summary::{detect_saturation, render_tables, summarize, DEFAULT_SATURATION_EPS};
use crate::dataset::Dataset;
use crate::error::{io_err, Error, Result};
use crate::fixedpoint::Fx16;
use crate::injector::{AccuracyDistribution, FaultExperiment};
use crate::nn::{model_stats, AccuracyMode, EvalSet, Model, NUM_CLASSES};
use crate::stats::Summary;
use crate::store::{storage_overhead, ProtectionMode, ReadReport};
use crate::weights::validate_model;

pub const CELL_CSV_HEADER: [&str; 6] = [
    "trial",
    "accuracy",
    "accepted_flag",
    "flips_injected",
    "singles_corrected",
    "doubles_masked_or_passed",
];

/// Outcome of one campaign cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub cell: Cell,
    pub samples: Vec<f64>,
    pub summary: Summary,
    pub fault_free_accuracy: f64,
    /// All trials' read reports summed.
    pub report: ReadReport,
    pub saturated: bool,
    pub duration_secs: f64,
}

impl CellResult {
    pub fn median(&self) -> f64 {
        self.summary.median
    }
}

/// Per-cell metadata persisted next to the sample CSV.
#[derive(Serialize, Deserialize)]
struct CellMeta {
    cell: Cell,
    fault_free_accuracy: f64,
    report: ReadReport,
    duration_secs: f64,
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Overrides the spec's worker count.
    pub workers: Option<usize>,
    /// Overrides the spec's output directory.
    pub output_dir: Option<PathBuf>,
}

pub struct CampaignOutput {
    pub results: Vec<CellResult>,
    pub output_dir: PathBuf,
}

/// Writes `contents` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn csv_bytes<F>(header: &[&str], fill: F) -> Vec<u8>
where
    F: FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> csv::Result<()>,
{
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(header).expect("in-memory write");
        fill(&mut w).expect("in-memory write");
        w.flush().expect("in-memory write");
    }
    buf
}

pub fn cell_csv(dist: &AccuracyDistribution) -> Vec<u8> {
    csv_bytes(&CELL_CSV_HEADER, |w| {
        for t in &dist.trials {
            w.write_record([
                t.trial.to_string(),
                t.accuracy.to_string(),
                u8::from(t.accepted).to_string(),
                t.flips_injected.to_string(),
                t.report.singles_corrected.to_string(),
                t.report.doubles().to_string(),
            ])?;
        }
        Ok(())
    })
}

pub fn summary_csv(results: &[CellResult]) -> Vec<u8> {
    let mut header: Vec<&str> = vec!["id"];
    header.extend(KEY_COLUMNS);
    header.extend(["fault_free", "min", "q1", "median", "q3", "max", "mean", "saturated"]);
    csv_bytes(&header, |w| {
        for r in results {
            let s = &r.summary;
            let mut row = vec![r.cell.id.clone()];
            row.extend(r.cell.key());
            row.extend(
                [r.fault_free_accuracy, s.min, s.q1, s.median, s.q3, s.max, s.mean]
                    .iter()
                    .map(f64::to_string),
            );
            row.push(r.saturated.to_string());
            w.write_record(row)?;
        }
        Ok(())
    })
}

fn double_policy(mode: ProtectionMode) -> &'static str {
    match mode {
        ProtectionMode::None => "no decoding; raw 16-bit words",
        ProtectionMode::Ecc => "detected double errors pass the stored data bits through uncorrected",
        ProtectionMode::Spw => "detected double errors are replaced by zero",
    }
}

/// Human-readable campaign report.
pub fn report_text(results: &[CellResult], model: Option<&Model<Fx16>>) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "Storage overhead (check bits per stored parameter bit):");
    for mode in ProtectionMode::ALL {
        let _ = writeln!(
            s,
            "  {:<5} {:>2} bits/word  overhead {:.1}%",
            mode.name(),
            mode.word_bits(),
            100.0 * storage_overhead(mode)
        );
    }
    let _ = writeln!(
        s,
        "  note: the 47.5% SPW overhead quoted in the literature is a silicon-area figure \
         for the hardware unit; it is out of scope here and not reproduced."
    );
    let _ = writeln!(s);
    let _ = writeln!(s, "Double-error policy:");
    for mode in ProtectionMode::ALL {
        let _ = writeln!(s, "  {:<5} {}", mode.name(), double_policy(mode));
    }
    if let Some(m) = model {
        let _ = writeln!(s);
        let _ = writeln!(s, "Parameter statistics:");
        for l in model_stats(m) {
            let _ = writeln!(s, "  {:<12} n={:<6} mean={:+.6} std={:.6}", l.name, l.count, l.mean, l.stddev);
        }
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "Cells:");
    for r in results {
        let c = &r.cell;
        let _ = writeln!(
            s,
            "  {}  M={} fault-free={:.4} median={:.4} [{:.4}, {:.4}]{}  singles={} doubles={} ({:.1}s)",
            c.id,
            c.chain.iterations,
            r.fault_free_accuracy,
            r.summary.median,
            r.summary.q1,
            r.summary.q3,
            if r.saturated { " saturated" } else { "" },
            r.report.singles_corrected,
            r.report.doubles(),
            r.duration_secs,
        );
    }
    let _ = writeln!(s);
    s.push_str(&render_tables(&summarize(results)));
    s
}

fn load_eval_set(path: &Path, images: Option<usize>, model: &Model<Fx16>, golden: bool) -> Result<EvalSet<Fx16>> {
    let mut ds = Dataset::from_manifest(path)?;
    if let Some(n) = images {
        ds = ds.truncated(n);
    }
    let set = EvalSet::new(&ds)?;
    if golden {
        set.with_golden_from(model)
    } else {
        Ok(set)
    }
}

/// Runs one cell against prepared data.
pub fn run_cell(cell: &Cell, model: &Model<Fx16>, set: &EvalSet<Fx16>) -> Result<(CellResult, AccuracyDistribution)> {
    let start = Instant::now();
    let exp = FaultExperiment::new(model, set, cell.chain.protection, cell.chain.accuracy_mode)?;
    let dist = exp.run(&cell.fault, &cell.chain, cell.sampler)?;
    let result = CellResult {
        cell: cell.clone(),
        samples: dist.samples.clone(),
        summary: dist.summary,
        fault_free_accuracy: dist.fault_free_accuracy,
        report: dist.total_report(),
        saturated: detect_saturation(dist.summary.median, NUM_CLASSES, DEFAULT_SATURATION_EPS),
        duration_secs: start.elapsed().as_secs_f64(),
    };
    Ok((result, dist))
}

/// Executes every cell, writing `cells/<id>.csv`, `cells/<id>.json`,
/// `summary.csv` and `report.txt` under the output directory.
pub fn run(spec: &CampaignSpec, opts: &RunOptions) -> Result<CampaignOutput> {
    let cells = spec.resolve_cells()?;
    let model = validate_model(&spec.model)?;

    let mut sets: HashMap<(PathBuf, Option<usize>, bool), EvalSet<Fx16>> = HashMap::new();
    for c in &cells {
        let golden = c.chain.accuracy_mode == AccuracyMode::Golden;
        let key = (c.dataset.clone(), c.images, golden);
        if let std::collections::hash_map::Entry::Vacant(slot) = sets.entry(key) {
            slot.insert(load_eval_set(&c.dataset, c.images, &model, golden)?);
        }
    }

    let out_dir = opts.output_dir.clone().unwrap_or_else(|| spec.output_dir.clone());
    let cell_dir = out_dir.join("cells");
    fs::create_dir_all(&cell_dir).map_err(io_err(&cell_dir))?;

    let workers = opts.workers.or(spec.workers);
    if workers == Some(0) {
        return Err(Error::Config("workers must be at least 1".into()));
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;

    let results = pool.install(|| {
        cells
            .par_iter()
            .map(|c| {
                let key = (c.dataset.clone(), c.images, c.chain.accuracy_mode == AccuracyMode::Golden);
                let (result, dist) = run_cell(c, &model, &sets[&key])?;
                write_atomic(&cell_dir.join(format!("{}.csv", c.id)), &cell_csv(&dist))?;
                let meta = CellMeta {
                    cell: c.clone(),
                    fault_free_accuracy: result.fault_free_accuracy,
                    report: result.report,
                    duration_secs: result.duration_secs,
                };
                let json = serde_json::to_vec_pretty(&meta).expect("cell metadata serializes");
                write_atomic(&cell_dir.join(format!("{}.json", c.id)), &json)?;
                Ok(result)
            })
            .collect::<Result<Vec<_>>>()
    })?;

    write_atomic(&out_dir.join("summary.csv"), &summary_csv(&results))?;
    write_atomic(&out_dir.join("report.txt"), report_text(&results, Some(&model)).as_bytes())?;
    Ok(CampaignOutput {
        results,
        output_dir: out_dir,
    })
}

/// Reloads the results of a finished campaign from its output directory.
/// Summaries are recomputed from the raw samples.
pub fn load_results(dir: &Path) -> Result<Vec<CellResult>> {
    let cell_dir = dir.join("cells");
    let mut metas: Vec<PathBuf> = fs::read_dir(&cell_dir)
        .map_err(io_err(&cell_dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    metas.sort();
    if metas.is_empty() {
        return Err(Error::Config(format!("no cell results under {}", cell_dir.display())));
    }
    metas
        .iter()
        .map(|meta_path| {
            let text = fs::read_to_string(meta_path).map_err(io_err(meta_path))?;
            let meta: CellMeta = serde_json::from_str(&text).map_err(|source| Error::Json {
                path: meta_path.clone(),
                source,
            })?;
            let csv_path = meta_path.with_extension("csv");
            let samples = read_samples(&csv_path)?;
            let summary = Summary::from_samples(&samples)
                .ok_or_else(|| Error::Config(format!("{} has no samples", csv_path.display())))?;
            Ok(CellResult {
                cell: meta.cell,
                saturated: detect_saturation(summary.median, NUM_CLASSES, DEFAULT_SATURATION_EPS),
                samples,
                summary,
                fault_free_accuracy: meta.fault_free_accuracy,
                report: meta.report,
                duration_secs: meta.duration_secs,
            })
        })
        .collect()
}

fn read_samples(path: &Path) -> Result<Vec<f64>> {
    let bad = |msg: String| Error::Config(format!("{}: {msg}", path.display()));
    let mut rdr = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let col = rdr
        .headers()
        .map_err(|e| bad(e.to_string()))?
        .iter()
        .position(|h| h == "accuracy")
        .ok_or_else(|| bad("no accuracy column".into()))?;
    rdr.records()
        .map(|rec| {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            rec.get(col)
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| bad("unparsable accuracy".into()))
        })
        .collect()
}

/// Short human label of a cell for console output.
pub fn cell_label(c: &Cell) -> String {
    format!(
        "{} {} p={} limit={} {}",
        c.chain.protection.name(),
        c.fault.target.name(),
        c.fault.p,
        limit_label(c.fault.limit),
        accuracy_mode_name(c.chain.accuracy_mode)
    )
}
