//! Runs the bundled demo scenario end to end and writes every artifact plus plots.
//!
//! `cargo run --release --example demo_pipeline -- [out_dir]`

use airway::pipeline::{run_pipeline_with, PipelineOptions};
use airway::plot::PlotKind;
use airway::scenario::load_scenario;
use std::path::{Path, PathBuf};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("target/demo_run"));
    let scenario = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/demo.toml");
    let doc = load_scenario(&scenario)?;
    let opts = PipelineOptions {
        plots: PlotKind::ALL.to_vec(),
        ..PipelineOptions::default()
    };
    let run = run_pipeline_with(&doc, &out, &opts)?;
    print!("{}", std::fs::read_to_string(out.join(&run.summary_file))?);
    println!("artifacts in {}", out.display());
    Ok(())
}
