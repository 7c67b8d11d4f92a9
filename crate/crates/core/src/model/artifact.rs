//! Text model artifact.
//!
//! ```text
//! # carematch-model v1
//! # config key=value            (zero or more, provenance only)
//! fingerprint <hex>
//! hyper <key>=<value>           (one per hyperparameter)
//! side patient <n_features>
//! f <name> <bias> <bias_accum> <emb_0..emb_l> <accum_0..accum_l>
//! side doctor <n_features>
//! f ...
//! end
//! ```
//!
//! Fields are tab-separated. Floats use the shortest representation that
//! parses back to the same bits, so save then load is exact.

use std::fmt::Write as _;
use std::path::Path;

use super::{HybridModel, Hyperparams, SideParams};
use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::ingest::Side;

pub const MODEL_FORMAT: &str = "carematch-model v1";

fn write_side(out: &mut String, label: &str, p: &SideParams, dim: usize) {
    let _ = writeln!(out, "side\t{label}\t{}", p.len());
    for (f, name) in p.names.iter().enumerate() {
        let _ = write!(out, "f\t{name}\t{:e}\t{:e}", p.biases[f], p.bias_accum[f]);
        for x in &p.embeddings[f * dim..(f + 1) * dim] {
            let _ = write!(out, "\t{x:e}");
        }
        for x in &p.embedding_accum[f * dim..(f + 1) * dim] {
            let _ = write!(out, "\t{x:e}");
        }
        out.push('\n');
    }
}

impl HybridModel {
    pub fn to_text(&self, provenance: &KeyValues) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# {MODEL_FORMAT}");
        provenance.write_provenance(&mut out);
        let _ = writeln!(out, "fingerprint\t{}", self.fingerprint());
        for (k, v) in self.hyperparams.to_config().iter() {
            let _ = writeln!(out, "hyper\t{k}={v}");
        }
        write_side(&mut out, "patient", &self.patient, self.dim());
        write_side(&mut out, "doctor", &self.doctor, self.dim());
        out.push_str("end\n");
        out
    }

    pub fn from_text(text: &str) -> Result<HybridModel> {
        let mut lines = text.lines().enumerate().peekable();
        match lines.next() {
            Some((_, l)) if l.trim_start_matches("# ") == MODEL_FORMAT => {}
            _ => return Err(Error::Format(format!("expected `# {MODEL_FORMAT}` header"))),
        }
        let bad = |n: usize, what: &str| Error::Format(format!("model line {}: {what}", n + 1));
        let mut fingerprint = None;
        let mut hyper = KeyValues::new();
        let mut sides: Vec<(Side, SideParams)> = Vec::new();
        let mut hp: Option<Hyperparams> = None;
        let mut ended = false;
        while let Some((n, line)) = lines.next() {
            if line.starts_with('#') || line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            match fields.as_slice() {
                ["fingerprint", fp] => fingerprint = Some(fp.to_string()),
                ["hyper", kv] => {
                    let (k, v) = kv.split_once('=').ok_or_else(|| bad(n, "malformed hyperparameter"))?;
                    hyper.set(k, v);
                }
                ["side", label, count] => {
                    let side = match *label {
                        "patient" => Side::Patient,
                        "doctor" => Side::Doctor,
                        _ => return Err(bad(n, "unknown side")),
                    };
                    let h = match &hp {
                        Some(h) => h.clone(),
                        None => {
                            let h = Hyperparams::with_overrides(Hyperparams::default(), &hyper)?;
                            hp = Some(h.clone());
                            h
                        }
                    };
                    let dim = h.no_components;
                    let count: usize = count.parse().map_err(|_| bad(n, "bad feature count"))?;
                    let mut p = SideParams {
                        names: Vec::with_capacity(count),
                        embeddings: Vec::with_capacity(count * dim),
                        biases: Vec::with_capacity(count),
                        embedding_accum: Vec::with_capacity(count * dim),
                        bias_accum: Vec::with_capacity(count),
                    };
                    for _ in 0..count {
                        let (n, line) = lines.next().ok_or_else(|| bad(n, "truncated feature table"))?;
                        let f: Vec<&str> = line.split('\t').collect();
                        if f.len() != 4 + 2 * dim || f[0] != "f" {
                            return Err(bad(n, "malformed feature row"));
                        }
                        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(n, "bad number"));
                        p.names.push(f[1].to_string());
                        p.biases.push(num(f[2])?);
                        p.bias_accum.push(num(f[3])?);
                        for s in &f[4..4 + dim] {
                            p.embeddings.push(num(s)?);
                        }
                        for s in &f[4 + dim..] {
                            p.embedding_accum.push(num(s)?);
                        }
                    }
                    sides.push((side, p));
                }
                ["end"] => {
                    ended = true;
                    break;
                }
                _ => return Err(bad(n, "unrecognized line")),
            }
        }
        if !ended {
            return Err(Error::Format("model artifact truncated (no `end`)".into()));
        }
        let hp = hp.ok_or_else(|| Error::Format("no feature tables".into()))?;
        let take = |side: Side, sides: &mut Vec<(Side, SideParams)>| {
            let ix = sides
                .iter()
                .position(|(s, _)| *s == side)
                .ok_or_else(|| Error::Format(format!("missing {side:?} table")))?;
            Ok::<_, Error>(sides.remove(ix).1)
        };
        let patient = take(Side::Patient, &mut sides)?;
        let doctor = take(Side::Doctor, &mut sides)?;
        let model = HybridModel::from_parts(hp, patient, doctor);
        if let Some(fp) = fingerprint {
            if fp != model.fingerprint() {
                return Err(Error::Format(format!(
                    "fingerprint {fp} does not match stored vocabularies ({})",
                    model.fingerprint()
                )));
            }
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path, provenance: &KeyValues) -> Result<()> {
        std::fs::write(path, self.to_text(provenance)).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<HybridModel> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}
