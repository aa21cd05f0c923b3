//! Config-driven experiment grids, result files, median tables and mode
//! comparisons.

mod run;
mod spec;
mod summary;

pub use run::{
    cell_csv, cell_label, load_results, report_text, run, run_cell, summary_csv, write_atomic, CampaignOutput,
    CellResult, RunOptions, CELL_CSV_HEADER,
};
pub use spec::{
    derive_seed, limit_label, CampaignSpec, Cell, CellSpec, GridSpec, DEFAULT_ITERATIONS, KEY_COLUMNS,
    PAPER_SCALE_ITERATIONS,
};
pub use summary::{
    compare, detect_saturation, render_comparison, render_tables, summarize, target_label, Comparison,
    SummaryRow, SummaryTable, DEFAULT_SATURATION_EPS,
};
