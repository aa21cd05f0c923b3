use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result};
use crate::injector::{BitScope, ChainConfig, FaultConfig, RandVariant, Sampler, Target};
use crate::nn::AccuracyMode;
use crate::store::ProtectionMode;

/// Trials per cell when a spec does not say.
pub const DEFAULT_ITERATIONS: usize = 30;
/// Trials per cell under `--paper-scale`.
pub const PAPER_SCALE_ITERATIONS: usize = 100;

fn default_iterations() -> usize {
    DEFAULT_ITERATIONS
}

/// Campaign description as read from JSON. Relative paths resolve against
/// the directory holding the spec file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignSpec {
    /// Weights file.
    pub model: PathBuf,
    /// Dataset manifest (JSON) used by cells that do not name their own.
    pub dataset: PathBuf,
    pub output_dir: PathBuf,
    /// Worker threads; defaults to the available parallelism.
    #[serde(default)]
    pub workers: Option<usize>,
    /// Base seed from which per-cell seeds are derived.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub cells: Vec<CellSpec>,
    #[serde(default)]
    pub grid: Option<GridSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpec {
    #[serde(default)]
    pub name: Option<String>,
    pub p: f64,
    pub protection: ProtectionMode,
    #[serde(default)]
    pub target: Target,
    #[serde(default)]
    pub limit: Option<u32>,
    #[serde(default)]
    pub rand_variant: RandVariant,
    #[serde(default)]
    pub accuracy_mode: AccuracyMode,
    /// Defaults to data bits for unprotected storage, the full codeword otherwise.
    #[serde(default)]
    pub bit_scope: Option<BitScope>,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default)]
    pub sampler: Sampler,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    /// Use only the first `images` entries of the dataset.
    #[serde(default)]
    pub images: Option<usize>,
}

/// Cartesian product over `p × protection × target × limit`; every other
/// field is shared.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub p: Vec<f64>,
    pub protection: Vec<ProtectionMode>,
    #[serde(default = "all_targets")]
    pub target: Vec<Target>,
    #[serde(default = "no_limit")]
    pub limit: Vec<Option<u32>>,
    #[serde(default)]
    pub rand_variant: RandVariant,
    #[serde(default)]
    pub accuracy_mode: AccuracyMode,
    #[serde(default)]
    pub bit_scope: Option<BitScope>,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default)]
    pub sampler: Sampler,
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    #[serde(default)]
    pub images: Option<usize>,
}

fn all_targets() -> Vec<Target> {
    Target::ALL.to_vec()
}

fn no_limit() -> Vec<Option<u32>> {
    vec![None]
}

impl GridSpec {
    pub fn expand(&self) -> Vec<CellSpec> {
        let mut cells = Vec::new();
        for &protection in &self.protection {
            for &target in &self.target {
                for &p in &self.p {
                    for &limit in &self.limit {
                        cells.push(CellSpec {
                            name: None,
                            p,
                            protection,
                            target,
                            limit,
                            rand_variant: self.rand_variant,
                            accuracy_mode: self.accuracy_mode,
                            bit_scope: self.bit_scope,
                            iterations: self.iterations,
                            sampler: self.sampler,
                            seed: None,
                            dataset: self.dataset.clone(),
                            images: self.images,
                        });
                    }
                }
            }
        }
        cells
    }
}

/// A cell with every default filled in and its seed fixed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub id: String,
    pub name: Option<String>,
    pub fault: FaultConfig,
    pub chain: ChainConfig,
    pub sampler: Sampler,
    pub dataset: PathBuf,
    pub images: Option<usize>,
}

impl Cell {
    /// Fields identifying the cell in summaries, in column order.
    pub fn key(&self) -> [String; 10] {
        [
            self.chain.protection.name().to_string(),
            self.fault.target.name().to_string(),
            self.fault.p.to_string(),
            limit_label(self.fault.limit),
            self.fault.rand_variant.name().to_string(),
            self.fault.bit_scope.name().to_string(),
            accuracy_mode_name(self.chain.accuracy_mode).to_string(),
            self.sampler.name().to_string(),
            self.chain.iterations.to_string(),
            self.fault.seed.to_string(),
        ]
    }
}

pub const KEY_COLUMNS: [&str; 10] = [
    "protection",
    "target",
    "p",
    "limit",
    "rand_variant",
    "bit_scope",
    "accuracy_mode",
    "sampler",
    "iterations",
    "seed",
];

pub fn limit_label(limit: Option<u32>) -> String {
    limit.map_or_else(|| "none".to_string(), |k| k.to_string())
}

pub fn accuracy_mode_name(mode: AccuracyMode) -> &'static str {
    match mode {
        AccuracyMode::Truth => "truth",
        AccuracyMode::Golden => "golden",
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the `index`-th cell. Distinct indices give distinct seeds
/// because both steps are bijections on `u64`.
pub fn derive_seed(base: u64, index: usize) -> u64 {
    splitmix64(base.wrapping_add(index as u64))
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl CampaignSpec {
    pub fn from_json(text: &str) -> Result<CampaignSpec> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("campaign spec: {e}")))
    }

    /// Reads a spec and resolves its relative paths against the file's directory.
    pub fn load(path: &Path) -> Result<CampaignSpec> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut spec = CampaignSpec::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        spec.rebase(base);
        Ok(spec)
    }

    /// Makes every relative path relative to `base` instead.
    pub fn rebase(&mut self, base: &Path) {
        self.model = resolve(base, &self.model);
        self.dataset = resolve(base, &self.dataset);
        self.output_dir = resolve(base, &self.output_dir);
        for c in &mut self.cells {
            if let Some(d) = &c.dataset {
                c.dataset = Some(resolve(base, d));
            }
        }
        if let Some(g) = &mut self.grid {
            if let Some(d) = &g.dataset {
                g.dataset = Some(resolve(base, d));
            }
        }
    }

    /// Explicit cells first, then the grid expansion.
    pub fn cell_specs(&self) -> Vec<CellSpec> {
        let mut out = self.cells.clone();
        if let Some(g) = &self.grid {
            out.extend(g.expand());
        }
        out
    }

    pub fn resolve_cells(&self) -> Result<Vec<Cell>> {
        let specs = self.cell_specs();
        if specs.is_empty() {
            return Err(Error::Config("campaign has no cells".into()));
        }
        let mut ids = HashSet::new();
        let mut cells = Vec::with_capacity(specs.len());
        for (i, c) in specs.into_iter().enumerate() {
            if c.iterations == 0 {
                return Err(Error::Config(format!("cell {i}: iterations must be at least 1")));
            }
            if c.images == Some(0) {
                return Err(Error::Config(format!("cell {i}: images must be at least 1")));
            }
            let fault = FaultConfig {
                p: c.p,
                limit: c.limit,
                target: c.target,
                bit_scope: c.bit_scope.unwrap_or(BitScope::default_for(c.protection)),
                rand_variant: c.rand_variant,
                seed: c.seed.unwrap_or_else(|| derive_seed(self.seed, i)),
            };
            fault.validate()?;
            let id = match &c.name {
                Some(n) => sanitize(n),
                None => format!(
                    "{i:03}_{}_{}_p{:e}_l{}",
                    c.protection.name(),
                    c.target.name(),
                    c.p,
                    limit_label(c.limit)
                ),
            };
            if !ids.insert(id.clone()) {
                return Err(Error::Config(format!("duplicate cell id {id}")));
            }
            cells.push(Cell {
                id,
                name: c.name,
                fault,
                chain: ChainConfig {
                    iterations: c.iterations,
                    accuracy_mode: c.accuracy_mode,
                    protection: c.protection,
                },
                sampler: c.sampler,
                dataset: c.dataset.unwrap_or_else(|| self.dataset.clone()),
                images: c.images,
            });
        }
        Ok(cells)
    }

    /// Raises every cell to the full trial count.
    pub fn paper_scale(&mut self) {
        for c in &mut self.cells {
            c.iterations = c.iterations.max(PAPER_SCALE_ITERATIONS);
            c.images = None;
        }
        if let Some(g) = &mut self.grid {
            g.iterations = g.iterations.max(PAPER_SCALE_ITERATIONS);
            g.images = None;
        }
    }
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect()
}
