//! Model and dataset files.
//!
//! A model file is one JSON header line followed by one CSV block per layer:
//! a `layer,<index>,<outputs>,<inputs>` line, `outputs` weight rows of
//! `inputs` values, then one bias row. Weights use shortest round-trip
//! formatting so a saved model reloads bit-identically.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::mlp::{Dense, Mlp};
use super::{InfModel, ModelSpec, NormStats, Sample};
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::io::{csv_records, csv_text, field_bool, field_f64, read_to_string, write_atomic};
use crate::raytrace::RtFeatures;
use crate::units::fmt9;

const FORMAT: &str = "thzdt-inf/1";
const FALLBACK_ID: &str = "abg-nlos";

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    activation: String,
    widths: Vec<usize>,
    spec: ModelSpec,
    norm: NormStats,
    seed: u64,
    fallback_id: String,
}

pub fn model_to_text(model: &InfModel) -> String {
    let header = Header {
        format: FORMAT.into(),
        activation: "silu".into(),
        widths: model.net.widths(),
        spec: model.spec.clone(),
        norm: model.norm,
        seed: model.seed,
        fallback_id: FALLBACK_ID.into(),
    };
    let mut out = serde_json::to_string(&header).expect("serializable header");
    out.push('\n');
    let join = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",");
    for (i, l) in model.net.layers.iter().enumerate() {
        out.push_str(&format!("layer,{i},{},{}\n", l.outputs, l.inputs));
        for row in l.weight.chunks(l.inputs) {
            out.push_str(&join(row));
            out.push('\n');
        }
        out.push_str(&join(&l.bias));
        out.push('\n');
    }
    out
}

fn parse_row(line: Option<&str>, len: usize, ctx: &str) -> Result<Vec<f64>> {
    let line = line.ok_or_else(|| Error::parse(ctx, "truncated weight block"))?;
    let v = line
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| Error::parse(ctx, format!("bad weight '{s}'"))))
        .collect::<Result<Vec<f64>>>()?;
    if v.len() != len {
        return Err(Error::Dimension(format!("{ctx}: row has {} values, expected {len}", v.len())));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical(format!("{ctx}: non-finite weight")));
    }
    Ok(v)
}

pub fn model_from_text(text: &str) -> Result<InfModel> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let head = lines.next().ok_or_else(|| Error::parse("model", "empty file"))?;
    let header: Header = serde_json::from_str(head).map_err(|e| Error::parse("model header", e))?;
    if header.format != FORMAT {
        return Err(Error::parse("model header", format!("unsupported format '{}'", header.format)));
    }
    if header.activation != "silu" {
        return Err(Error::parse("model header", format!("unsupported activation '{}'", header.activation)));
    }
    let mut layers = Vec::new();
    for (i, w) in header.widths.windows(2).enumerate() {
        let ctx = format!("model layer {i}");
        let tag = lines.next().ok_or_else(|| Error::parse(&ctx, "missing layer block"))?;
        let parts: Vec<&str> = tag.split(',').map(str::trim).collect();
        let expected = ["layer".to_string(), i.to_string(), w[1].to_string(), w[0].to_string()];
        if parts != expected.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(Error::Dimension(format!("{ctx}: block tag '{tag}' does not match widths {:?}", header.widths)));
        }
        let mut d = Dense::zeros(w[0], w[1]);
        for r in 0..w[1] {
            let row = parse_row(lines.next(), w[0], &ctx)?;
            d.weight[r * w[0]..(r + 1) * w[0]].copy_from_slice(&row);
        }
        d.bias = parse_row(lines.next(), w[1], &ctx)?;
        layers.push(d);
    }
    if lines.next().is_some() {
        return Err(Error::Dimension("model: trailing data after the last layer".into()));
    }
    let model = InfModel {
        spec: header.spec,
        net: Mlp { layers },
        norm: header.norm,
        seed: header.seed,
    };
    model.validate()?;
    Ok(model)
}

pub fn save_model(model: &InfModel, path: &Path) -> Result<()> {
    write_atomic(path, model_to_text(model).as_bytes())
}

pub fn load_model(path: &Path) -> Result<InfModel> {
    model_from_text(&read_to_string(path)?)
}

pub const DATASET_HEADER: [&str; 14] = [
    "x", "y", "z", "d", "p_los", "tau_los", "az_los", "el_los", "n_paths", "los_valid", "target_p",
    "target_tau", "target_az", "target_el",
];

pub fn dataset_to_csv(samples: &[Sample]) -> String {
    csv_text(
        &DATASET_HEADER,
        samples.iter().map(|s| {
            let r = &s.rt;
            vec![
                fmt9(s.x.x),
                fmt9(s.x.y),
                fmt9(s.x.z),
                fmt9(r.d_m),
                fmt9(r.p_los_db),
                fmt9(r.tau_los_ns),
                fmt9(r.az_los_deg),
                fmt9(r.el_los_deg),
                r.n_paths.to_string(),
                u8::from(r.los_valid).to_string(),
                fmt9(s.target_p_db),
                fmt9(s.target_tau_ns),
                fmt9(s.target_az_deg),
                fmt9(s.target_el_deg),
            ]
        }),
    )
}

pub fn dataset_from_csv(text: &str) -> Result<Vec<Sample>> {
    let ctx = "dataset";
    csv_records(text, ctx, &DATASET_HEADER)?
        .iter()
        .map(|rec| {
            let f = |i| field_f64(rec, i, ctx);
            let n_paths = f(8)?;
            if n_paths < 0.0 || n_paths.fract() != 0.0 {
                return Err(Error::parse(ctx, format!("n_paths must be a count, got {n_paths}")));
            }
            Ok(Sample {
                x: Vec3::new(f(0)?, f(1)?, f(2)?),
                rt: RtFeatures {
                    d_m: f(3)?,
                    p_los_db: f(4)?,
                    tau_los_ns: f(5)?,
                    az_los_deg: f(6)?,
                    el_los_deg: f(7)?,
                    n_paths: n_paths as usize,
                    los_valid: field_bool(rec, 9, ctx)?,
                },
                target_p_db: f(10)?,
                target_tau_ns: f(11)?,
                target_az_deg: f(12)?,
                target_el_deg: f(13)?,
            })
        })
        .collect()
}
