//! Exhaustive grid search of filter parameters minimizing `M`.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Number, Value};

use crate::error::{invalid, Error, Result};
use crate::filters::FilterSpec;
use crate::quality::{csv_field, evaluate_m, sig6, EvalConfig, MReport};
use crate::raster::Raster;

/// Cartesian grid over named filter parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamGrid {
    pub family: String,
    #[serde(default)]
    pub axes: Vec<(String, Vec<f64>)>,
}

impl ParamGrid {
    pub fn from_json(text: &str) -> Result<Self> {
        let g: ParamGrid = serde_json::from_str(text)?;
        g.validate()?;
        Ok(g)
    }

    pub fn size(&self) -> usize {
        self.axes.iter().map(|(_, v)| v.len()).product()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, values) in &self.axes {
            if values.is_empty() {
                return Err(invalid(format!("grid axis '{name}' has no values")));
            }
            if let Some(v) = values.iter().find(|v| !v.is_finite()) {
                return Err(invalid(format!("grid axis '{name}' has non-finite value {v}")));
            }
        }
        for (i, (name, _)) in self.axes.iter().enumerate() {
            if self.axes[..i].iter().any(|(n, _)| n == name) {
                return Err(invalid(format!("grid axis '{name}' declared twice")));
            }
        }
        for point in self.points() {
            self.spec_for(&point)?;
        }
        Ok(())
    }

    /// Points in row-major order, the last axis varying fastest.
    pub fn points(&self) -> Vec<Vec<(String, f64)>> {
        let mut out = vec![Vec::new()];
        for (name, values) in &self.axes {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    values.iter().map(move |&v| {
                        let mut p = prefix.clone();
                        p.push((name.clone(), v));
                        p
                    })
                })
                .collect();
        }
        out
    }

    /// Builds and validates the filter for one grid point.
    pub fn spec_for(&self, point: &[(String, f64)]) -> Result<FilterSpec> {
        let mut params = Map::new();
        for (name, v) in point {
            params.insert(name.clone(), number(*v));
        }
        let mut obj = Map::new();
        obj.insert("family".into(), Value::String(self.family.clone()));
        if !(self.family == "identity" && params.is_empty()) {
            obj.insert("params".into(), Value::Object(params));
        }
        let spec: FilterSpec = serde_json::from_value(Value::Object(obj))
            .map_err(|e| invalid(format!("grid point {} is not a valid '{}' filter: {e}", fmt_point(point), self.family)))?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Integral values become JSON integers so they can fill integer fields.
fn number(v: f64) -> Value {
    if v.fract() == 0.0 && v.abs() < 9.0e15 {
        Value::Number(Number::from(v as i64))
    } else {
        Number::from_f64(v).map(Value::Number).unwrap_or(Value::Null)
    }
}

fn fmt_point(point: &[(String, f64)]) -> String {
    let parts: Vec<String> = point.iter().map(|(n, v)| format!("{n}={v}")).collect();
    format!("{{{}}}", parts.join(", "))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneRow {
    pub index: usize,
    pub params: Vec<(String, f64)>,
    pub spec: FilterSpec,
    pub report: Option<MReport>,
    pub error: Option<String>,
    /// Not serialized, so traces of identical runs stay byte-identical.
    #[serde(skip)]
    pub wall_time_s: f64,
}

impl TuneRow {
    pub fn m(&self) -> Option<f64> {
        self.report.as_ref().map(|r| r.m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneTrace {
    pub family: String,
    pub rows: Vec<TuneRow>,
    /// Index into `rows` of the minimum `M`, earliest on ties.
    pub best: usize,
}

impl TuneTrace {
    pub fn best_row(&self) -> &TuneRow {
        &self.rows[self.best]
    }

    pub fn to_csv(&self) -> String {
        let names: Vec<&str> = self.rows.first().map(|r| r.params.iter().map(|(n, _)| n.as_str()).collect()).unwrap_or_default();
        let mut out = String::from("index");
        for n in &names {
            out.push(',');
            out.push_str(&csv_field(n));
        }
        out.push_str(",M,r,delta_h,h_o,h_g_bar,n,error\n");
        for row in &self.rows {
            out.push_str(&row.index.to_string());
            for (_, v) in &row.params {
                out.push_str(&format!(",{v}"));
            }
            match (&row.report, &row.error) {
                (Some(r), _) => out.push_str(&format!(
                    ",{},{},{},{},{},{},",
                    sig6(r.m),
                    sig6(r.r),
                    sig6(r.delta_h),
                    sig6(r.h_o),
                    sig6(r.h_g_bar),
                    r.n
                )),
                (None, e) => out.push_str(&format!(",,,,,,,{}", csv_field(e.as_deref().unwrap_or("failed")))),
            }
            out.push('\n');
        }
        out
    }
}

fn evaluate_point(z: &Raster, spec: &FilterSpec, looks: f64, cfg: &EvalConfig) -> Result<MReport> {
    let xhat = spec.apply(z)?;
    evaluate_m(z, &xhat, looks, cfg)
}

/// Evaluates every grid point on `z` with the same configuration and seed.
/// Points run concurrently; the trace keeps grid order.
pub fn grid_search(z: &Raster, grid: &ParamGrid, looks: f64, cfg: &EvalConfig) -> Result<TuneTrace> {
    grid.validate()?;
    let points = grid.points();
    let specs = points.iter().map(|p| grid.spec_for(p)).collect::<Result<Vec<_>>>()?;
    let rows: Vec<TuneRow> = points
        .into_par_iter()
        .zip(specs)
        .enumerate()
        .map(|(index, (params, spec))| {
            let t0 = Instant::now();
            let result = evaluate_point(z, &spec, looks, cfg);
            let wall_time_s = t0.elapsed().as_secs_f64();
            let (report, error) = match result {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(e.to_string())),
            };
            TuneRow { index, params, spec, report, error, wall_time_s }
        })
        .collect();
    let best = argmin(&rows).ok_or(Error::AllGridPointsFailed)?;
    Ok(TuneTrace { family: grid.family.clone(), rows, best })
}

/// Index of the smallest `M`; strict comparison keeps the earliest tie.
pub fn argmin(rows: &[TuneRow]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, row) in rows.iter().enumerate() {
        if let Some(m) = row.m() {
            if best.is_none_or(|(_, b)| m < b) {
                best = Some((i, m));
            }
        }
    }
    best.map(|(i, _)| i)
}
