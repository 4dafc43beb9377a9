use std::path::PathBuf;

use anyhow::{Context, Result};
use serde::Serialize;

use ratioq::tune::{grid_search, ParamGrid};

use crate::common::{ensure_dir, json_arg, load, write_json, write_text, EvalFlags};
use crate::manifest::RunContext;

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Observed image to filter.
    #[arg(short, long)]
    input: PathBuf,
    /// Grid JSON (inline or file), e.g.
    /// {"family":"boxcar","axes":[["w",[3,5,9]]]}.
    #[arg(long)]
    grid: String,
    /// Nominal number of looks of the observation.
    #[arg(long)]
    looks: f64,
    #[command(flatten)]
    eval: EvalFlags,
    /// Output directory.
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct Timing {
    index: usize,
    wall_time_s: f64,
}

pub fn run(a: Args, ctx: RunContext) -> Result<()> {
    let grid = ParamGrid::from_json(&json_arg(&a.grid)?).context("parsing grid")?;
    let cfg = a.eval.config();
    let z = load(&a.input)?;
    let trace = grid_search(&z, &grid, a.looks, &cfg)?;

    ensure_dir(&a.out)?;
    let mut m = ctx.manifest("tune");
    m.seed("shuffle", cfg.seed).input(&a.input);
    let csv = a.out.join("trace.csv");
    let json = a.out.join("trace.json");
    let best = a.out.join("best.json");
    write_text(&csv, &trace.to_csv())?;
    write_json(&json, &trace)?;
    write_json(&best, &trace.best_row().spec)?;
    m.output(&csv).output(&json).output(&best);
    m.config(serde_json::json!({ "grid": grid, "looks": a.looks, "eval": cfg }))?;
    m.timings = serde_json::to_value(
        trace.rows.iter().map(|r| Timing { index: r.index, wall_time_s: r.wall_time_s }).collect::<Vec<_>>(),
    )?;
    m.write(&a.out.join("manifest.json"))
}
