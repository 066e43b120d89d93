//! Plain-text storage of fitted approximations.
//!
//! A file starts with a `[model]` section of `key = value` lines followed by
//! comma-separated numeric sections. RBF models store `[centers]` (one
//! `p1,p2,p3` row per center) and `[weights]` (one row per center, one
//! column per fixation). GPR models store `[inputs]` and `[targets]` and are
//! refit on load. Numbers use the shortest representation that parses back
//! to the same value, so a round trip is exact.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DVector;

use super::gpr::{GprHyper, GprModel};
use super::rbf::{RbfKernel, RbfModel};
use super::{ApproxModel, LinalgScalar};
use crate::error::{Error, Result};

fn join<T: std::fmt::Display>(row: impl IntoIterator<Item = T>) -> String {
    row.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// Serializes `model` to the text format.
pub fn model_to_string<T: LinalgScalar>(model: &ApproxModel<T>) -> String {
    let mut out = String::new();
    out.push_str("[model]\n");
    match model {
        ApproxModel::Rbf(m) => {
            let _ = writeln!(out, "kind = rbf");
            let _ = writeln!(out, "kernel = {}", m.kernel.name());
            let _ = writeln!(out, "epsilon = {}", m.kernel.epsilon());
            let _ = writeln!(out, "sigma = {}", m.sigma);
            let _ = writeln!(out, "actions = {}", m.weights.len());
            out.push_str("[centers]\n");
            for c in &m.centers {
                let _ = writeln!(out, "{}", join(c));
            }
            out.push_str("[weights]\n");
            for i in 0..m.centers.len() {
                let _ = writeln!(out, "{}", join(m.weights.iter().map(|w| w[i])));
            }
        }
        ApproxModel::Gpr(m) => {
            let h = m.hyper();
            let _ = writeln!(out, "kind = gpr");
            let _ = writeln!(out, "length_scale = {}", h.length_scale);
            let _ = writeln!(out, "signal = {}", h.signal);
            let _ = writeln!(out, "noise = {}", h.noise);
            let _ = writeln!(out, "actions = {}", m.num_actions());
            out.push_str("[inputs]\n");
            for x in m.inputs() {
                let _ = writeln!(out, "{}", join(x));
            }
            out.push_str("[targets]\n");
            for i in 0..m.inputs().len() {
                let _ = writeln!(out, "{}", join(m.targets().iter().map(|t| t[i])));
            }
        }
    }
    out
}

pub fn write_model<T: LinalgScalar>(path: &Path, model: &ApproxModel<T>) -> Result<()> {
    std::fs::write(path, model_to_string(model))?;
    Ok(())
}

pub fn read_model<T: LinalgScalar>(path: &Path) -> Result<ApproxModel<T>> {
    parse_model(&std::fs::read_to_string(path)?)
}

struct Section<T> {
    start_line: usize,
    rows: Vec<(usize, Vec<T>)>,
}

fn perr(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Parses the text format produced by [`model_to_string`].
pub fn parse_model<T: LinalgScalar>(text: &str) -> Result<ApproxModel<T>> {
    let mut header: BTreeMap<String, (usize, String)> = BTreeMap::new();
    let mut sections: BTreeMap<String, Section<T>> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = name.trim().to_string();
            if name != "model" {
                if sections.contains_key(&name) {
                    return Err(perr(line_no, format!("duplicate section [{name}]")));
                }
                sections.insert(
                    name.clone(),
                    Section {
                        start_line: line_no,
                        rows: Vec::new(),
                    },
                );
            }
            current = Some(name);
            continue;
        }
        match current.as_deref() {
            None => return Err(perr(line_no, "content before the first section")),
            Some("model") => {
                let (k, v) = line
                    .split_once('=')
                    .ok_or_else(|| perr(line_no, "expected `key = value`"))?;
                header.insert(k.trim().to_string(), (line_no, v.trim().to_string()));
            }
            Some(name) => {
                let row = line
                    .split(',')
                    .map(|f| {
                        f.trim()
                            .parse::<T>()
                            .map_err(|_| perr(line_no, format!("`{}` is not a number", f.trim())))
                    })
                    .collect::<Result<Vec<T>>>()?;
                sections
                    .get_mut(name)
                    .expect("section registered")
                    .rows
                    .push((line_no, row));
            }
        }
    }

    let get = |key: &str| -> Result<&(usize, String)> {
        header
            .get(key)
            .ok_or_else(|| perr(0, format!("[model] is missing `{key}`")))
    };
    let num = |key: &str| -> Result<T> {
        let (line, v) = get(key)?;
        v.parse::<T>()
            .map_err(|_| perr(*line, format!("`{key}` is not a number")))
    };
    let actions = {
        let (line, v) = get("actions")?;
        v.parse::<usize>()
            .map_err(|_| perr(*line, "`actions` is not a count"))?
    };
    let mut take = |name: &str, width: usize| -> Result<Vec<Vec<T>>> {
        let s = sections
            .remove(name)
            .ok_or_else(|| perr(0, format!("missing section [{name}]")))?;
        if s.rows.is_empty() {
            return Err(perr(s.start_line, format!("section [{name}] is empty")));
        }
        s.rows
            .into_iter()
            .map(|(line, r)| {
                if r.len() != width {
                    Err(perr(line, format!("expected {width} values, found {}", r.len())))
                } else {
                    Ok(r)
                }
            })
            .collect()
    };
    let to3 = |r: Vec<T>| [r[0], r[1], r[2]];

    let (kind_line, kind) = get("kind")?.clone();
    match kind.as_str() {
        "rbf" => {
            let (kline, kname) = get("kernel")?.clone();
            let eps = num("epsilon")?.as_f64();
            let kernel =
                RbfKernel::from_name(&kname, eps).ok_or_else(|| perr(kline, format!("unknown kernel `{kname}`")))?;
            let sigma = num("sigma")?;
            let centers: Vec<[T; 3]> = take("centers", 3)?.into_iter().map(to3).collect();
            let rows = take("weights", actions)?;
            if rows.len() != centers.len() {
                return Err(perr(0, "[weights] and [centers] have different row counts"));
            }
            let weights = (0..actions)
                .map(|a| DVector::from_iterator(rows.len(), rows.iter().map(|r| r[a])))
                .collect();
            Ok(ApproxModel::Rbf(RbfModel {
                centers,
                sigma,
                kernel,
                weights,
            }))
        }
        "gpr" => {
            let hyper = GprHyper::new(num("length_scale")?, num("signal")?, num("noise")?)?;
            let inputs: Vec<[T; 3]> = take("inputs", 3)?.into_iter().map(to3).collect();
            let rows = take("targets", actions)?;
            if rows.len() != inputs.len() {
                return Err(perr(0, "[targets] and [inputs] have different row counts"));
            }
            let targets = (0..actions).map(|a| rows.iter().map(|r| r[a]).collect()).collect();
            Ok(ApproxModel::Gpr(GprModel::fit(inputs, targets, hyper)?))
        }
        other => Err(perr(kind_line, format!("unknown model kind `{other}`"))),
    }
}
