use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use spw_core::campaign::{self, CampaignSpec, RunOptions};
use spw_core::nn::Layer;
use spw_core::secded::{self, CodeWord, DataWord, DecodeOutcome, CODEWORD_MASK};
use spw_core::weights::validate_model;
use spw_core::ProtectionMode;

#[derive(Parser)]
#[command(name = "spw-faultlab", version, about = "Fault-injection campaigns for SECDED-protected LeNet parameters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every cell of a campaign spec and write CSVs, summary and report.
    Run {
        #[arg(long)]
        spec: PathBuf,
        /// Raise every cell to 100 trials on the full dataset.
        #[arg(long)]
        paper_scale: bool,
        /// Worker threads (overrides the spec).
        #[arg(long)]
        workers: Option<usize>,
        /// Output directory (overrides the spec).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print median tables for a finished campaign directory.
    Summarize {
        dir: PathBuf,
        /// Emit the tables as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Median ratio candidate / baseline for every matching cell.
    Compare {
        dir: PathBuf,
        #[arg(long, default_value = "ecc")]
        baseline: ProtectionMode,
        #[arg(long, default_value = "spw")]
        candidate: ProtectionMode,
    },
    /// Encode or decode a single SECDED(22,16) word.
    Secded {
        #[command(subcommand)]
        op: SecdedOp,
    },
    /// Check that a weights file parses and has the expected topology.
    ValidateModel { file: PathBuf },
}

#[derive(Subcommand)]
enum SecdedOp {
    /// 16-bit data word (hex) to 22-bit codeword.
    Encode { hex: String },
    /// 22-bit codeword (hex) to data word and decode outcome.
    Decode { hex: String },
}

fn parse_hex(s: &str) -> Result<u32> {
    let digits = s.trim_start_matches("0x").trim_start_matches("0X");
    u32::from_str_radix(digits, 16).with_context(|| format!("not a hex number: {s}"))
}

fn outcome_label(o: DecodeOutcome) -> String {
    match o {
        DecodeOutcome::NoFault => "no_fault".into(),
        DecodeOutcome::SingleCorrected(pos) => format!("single_corrected position={pos}"),
        DecodeOutcome::OverallParityFault => "overall_parity_fault".into(),
        DecodeOutcome::DoubleDetected => "double_detected".into(),
    }
}

fn secded_cmd(op: SecdedOp) -> Result<()> {
    match op {
        SecdedOp::Encode { hex } => {
            let v = parse_hex(&hex)?;
            let Ok(d) = u16::try_from(v) else {
                bail!("data word {hex} does not fit in 16 bits");
            };
            println!("0x{:06x}", secded::encode(DataWord(d)).bits());
        }
        SecdedOp::Decode { hex } => {
            let v = parse_hex(&hex)?;
            if v & !CODEWORD_MASK != 0 {
                bail!("codeword {hex} does not fit in 22 bits");
            }
            let (d, o) = secded::decode(CodeWord::from_bits(v));
            println!("data 0x{:04x} {}", d.0, outcome_label(o));
        }
    }
    Ok(())
}

fn validate_cmd(file: PathBuf) -> Result<()> {
    let model = validate_model(&file).with_context(|| format!("validating {}", file.display()))?;
    let mut weights = 0;
    let mut biases = 0;
    for (i, layer) in model.layers().iter().enumerate() {
        let (w, b) = layer.param_count();
        weights += w;
        biases += b;
        let desc = match layer {
            Layer::Conv(c) => format!("conv {:?}", c.weights.shape()),
            Layer::Dense(d) => format!("dense {:?}", d.weights.shape()),
            Layer::MaxPool => "maxpool 2x2".into(),
            Layer::Relu => "relu".into(),
        };
        println!("{i:>2} {desc}");
    }
    println!("{}: ok, {} weights + {} biases, {}", file.display(), weights, biases, model.qformat());
    Ok(())
}

fn run_cmd(spec_path: PathBuf, paper_scale: bool, workers: Option<usize>, out: Option<PathBuf>) -> Result<()> {
    let mut spec = CampaignSpec::load(&spec_path).with_context(|| format!("loading {}", spec_path.display()))?;
    if paper_scale {
        spec.paper_scale();
    }
    let output = campaign::run(&spec, &RunOptions { workers, output_dir: out })?;
    for r in &output.results {
        println!(
            "{:<32} median {:.4}  [{:.4} .. {:.4}]{}",
            r.cell.id,
            r.summary.median,
            r.summary.min,
            r.summary.max,
            if r.saturated { "  saturated" } else { "" }
        );
    }
    println!();
    print!("{}", campaign::render_tables(&campaign::summarize(&output.results)));
    println!("results written to {}", output.output_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            spec,
            paper_scale,
            workers,
            out,
        } => run_cmd(spec, paper_scale, workers, out),
        Command::Summarize { dir, json } => campaign::load_results(&dir).map_err(Into::into).map(|results| {
            let tables = campaign::summarize(&results);
            if json {
                println!("{}", serde_json::to_string_pretty(&tables).expect("tables serialize"));
            } else {
                print!("{}", campaign::render_tables(&tables));
            }
        }),
        Command::Compare {
            dir,
            baseline,
            candidate,
        } => campaign::load_results(&dir)
            .and_then(|results| campaign::compare(&results, baseline, candidate))
            .map_err(Into::into)
            .map(|rows| print!("{}", campaign::render_comparison(&rows, baseline, candidate))),
        Command::Secded { op } => secded_cmd(op),
        Command::ValidateModel { file } => validate_cmd(file),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
