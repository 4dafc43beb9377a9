use std::path::PathBuf;

use anyhow::{Context, Result};
use serde_json::Value;

use ratioq::raster::export_png8;
use ratioq::simulate::{NoiseModel, PhantomKind, PhantomParams, SceneDescriptor};

use crate::common::{ensure_dir, json_arg, save, write_json};
use crate::manifest::RunContext;

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Phantom: blocks, strips, step, textured_step or sine.
    #[arg(long, required_unless_present = "scene")]
    phantom: Option<String>,
    /// Scene descriptor JSON (inline or file); replaces the phantom flags.
    #[arg(long, conflicts_with_all = ["phantom", "side", "looks", "seed", "noise", "sigma"])]
    scene: Option<String>,
    #[arg(long, default_value_t = 500)]
    side: usize,
    /// Speckle looks (shape of the unit-mean Gamma law).
    #[arg(long, default_value_t = 1.0)]
    looks: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Noise model: multiplicative or additive.
    #[arg(long, default_value = "multiplicative")]
    noise: String,
    /// Standard deviation of additive noise.
    #[arg(long)]
    sigma: Option<f64>,
    /// Raster height for profile-like phantoms (defaults to side).
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    low: Option<f64>,
    #[arg(long)]
    high: Option<f64>,
    /// Strip widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    widths: Option<Vec<usize>>,
    #[arg(long)]
    gap: Option<usize>,
    #[arg(long)]
    left: Option<f64>,
    #[arg(long)]
    right: Option<f64>,
    #[arg(long)]
    mean: Option<f64>,
    #[arg(long)]
    amplitude: Option<f64>,
    #[arg(long)]
    period: Option<f64>,
    /// Also write 8-bit PNG previews.
    #[arg(long)]
    png: bool,
    /// Output directory.
    #[arg(short, long)]
    out: PathBuf,
}

fn scene_from_flags(a: &Args) -> Result<SceneDescriptor> {
    let name = a.phantom.as_deref().unwrap_or_default();
    let kind: PhantomKind = serde_json::from_value(Value::String(name.replace('-', "_")))
        .with_context(|| format!("unknown phantom {name:?}"))?;
    let noise = match a.noise.as_str() {
        "multiplicative" => NoiseModel::Multiplicative,
        "additive" => NoiseModel::Additive {
            sigma: a.sigma.context("--noise additive needs --sigma")?,
        },
        other => anyhow::bail!("unknown noise model {other:?} (expected multiplicative or additive)"),
    };
    let params = PhantomParams {
        rows: a.rows,
        low: a.low,
        high: a.high,
        widths: a.widths.clone(),
        gap: a.gap,
        left: a.left,
        right: a.right,
        mean: a.mean,
        amplitude: a.amplitude,
        period: a.period,
    };
    Ok(SceneDescriptor { kind, side: a.side, params, looks: a.looks, seed: a.seed, noise })
}

pub fn run(a: Args, ctx: RunContext) -> Result<()> {
    let scene = match &a.scene {
        Some(s) => serde_json::from_str(&json_arg(s)?).context("parsing scene descriptor")?,
        None => scene_from_flags(&a)?,
    };
    if let NoiseModel::Multiplicative = scene.noise {
        ratioq::SpeckleParams::new(scene.looks, scene.seed)?;
    }
    let (truth, noisy) = scene.render()?;

    ensure_dir(&a.out)?;
    let mut m = ctx.manifest("simulate");
    m.seed("noise", scene.seed).config(&scene)?;
    let truth_path = a.out.join("truth.ras1");
    let noisy_path = a.out.join("noisy.ras1");
    let scene_path = a.out.join("scene.json");
    save(&truth, &truth_path)?;
    save(&noisy, &noisy_path)?;
    write_json(&scene_path, &scene)?;
    m.output(&truth_path).output(&noisy_path).output(&scene_path);
    if a.png {
        for (r, name) in [(&truth, "truth.png"), (&noisy, "noisy.png")] {
            let p = a.out.join(name);
            export_png8(r, &p, (1.0, 99.0))?;
            m.output(&p);
        }
    }
    m.write(&a.out.join("manifest.json"))
}
