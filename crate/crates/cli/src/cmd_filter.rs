use std::path::PathBuf;

use anyhow::{Context, Result};
use serde_json::{json, Map, Value};

use ratioq::FilterSpec;

use crate::common::{json_arg, load, save, sidecar};
use crate::manifest::RunContext;

#[derive(clap::Args, Debug)]
pub struct Args {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    /// identity, boxcar, elee, srad or external.
    #[arg(long, required_unless_present = "spec")]
    family: Option<String>,
    /// Filter spec JSON (inline or file), e.g. {"family":"boxcar","params":{"w":5}}.
    #[arg(long, conflicts_with = "family")]
    spec: Option<String>,
    /// Window side (boxcar, elee).
    #[arg(long)]
    w: Option<usize>,
    /// Nominal looks (elee).
    #[arg(long)]
    looks: Option<f64>,
    /// Damping factor (elee).
    #[arg(long)]
    k: Option<f64>,
    /// Iterations (srad).
    #[arg(long = "T")]
    iterations: Option<usize>,
    /// Time step (srad).
    #[arg(long)]
    dt: Option<f64>,
    /// Tile side used to estimate the speckle scale (srad).
    #[arg(long)]
    q0_window: Option<usize>,
    /// Raster produced by a third-party filter (external).
    #[arg(long)]
    path: Option<PathBuf>,
}

fn spec_from_flags(a: &Args, family: &str) -> Result<FilterSpec> {
    let mut params = Map::new();
    let mut put = |k: &str, v: Option<Value>| {
        if let Some(v) = v {
            params.insert(k.to_owned(), v);
        }
    };
    put("w", a.w.map(Value::from));
    put("looks", a.looks.map(Value::from));
    put("k", a.k.map(Value::from));
    put("T", a.iterations.map(Value::from));
    put("dt", a.dt.map(Value::from));
    put("q0_window", a.q0_window.map(Value::from));
    put("path", a.path.as_ref().map(|p| Value::from(p.display().to_string())));
    let value = if family == "identity" && params.is_empty() {
        json!({ "family": family })
    } else {
        json!({ "family": family, "params": params })
    };
    serde_json::from_value(value).with_context(|| format!("invalid parameters for filter family {family:?}"))
}

pub fn run(a: Args, ctx: RunContext) -> Result<()> {
    let spec: FilterSpec = match (&a.spec, &a.family) {
        (Some(s), _) => serde_json::from_str(&json_arg(s)?).context("parsing filter spec")?,
        (None, Some(f)) => spec_from_flags(&a, f)?,
        (None, None) => unreachable!("clap requires one of --family or --spec"),
    };
    spec.validate()?;
    let z = load(&a.input)?;
    let out = spec.apply(&z)?;
    save(&out, &a.output)?;

    let mut m = ctx.manifest("filter");
    m.input(&a.input);
    if let FilterSpec::External { path } = &spec {
        m.input(path);
    }
    m.config(&spec)?.output(&a.output);
    m.write(&sidecar(&a.output, "manifest.json"))
}
