//! CSV tables and PPM/PGM rasters for value functions, policies and
//! simulation results.
//!
//! Rasters are `m x m` pixels for a grid of `m` bins per edge. Pixel column
//! `i` and row `m - 1 - j` show lattice point `(i, j)`, so `p1` grows to the
//! right and `p2` grows upward; pixels with `i + j > m - 1` lie outside the
//! simplex and are white.
//!
//! Fixed palette (RGB):
//!
//! | action | color |
//! |---|---|
//! | stop at location 1 / 2 / 3 | `(128,0,0)` / `(0,128,0)` / `(0,0,128)` |
//! | continue `l1` / `l2` / `l3` | `(255,96,96)` / `(96,224,96)` / `(96,96,255)` |
//! | continue `l12` / `l23` / `l13` | `(255,224,64)` / `(64,224,224)` / `(224,64,224)` |
//! | continue `l123` | `(160,160,160)` |
//! | outside the simplex | `(255,255,255)` |

use std::io::Write;
use std::path::Path;

use crate::error::{invalid, Result};
use crate::grid::{SimplexGrid, ValueFunction};
use crate::model::{FixationAction, TaskSpec};
use crate::scalar::Scalar;
use crate::sim::{BatchReport, ComparisonRow, EpisodeTrace};
use crate::solver::{PolicyAction, PolicyMap};

pub const OUTSIDE: [u8; 3] = [255, 255, 255];
const STOP_COLORS: [[u8; 3]; 3] = [[128, 0, 0], [0, 128, 0], [0, 0, 128]];
const CONTINUE_COLORS: [[u8; 3]; 7] = [
    [255, 96, 96],
    [96, 224, 96],
    [96, 96, 255],
    [255, 224, 64],
    [64, 224, 224],
    [224, 64, 224],
    [160, 160, 160],
];

/// Palette entry of a policy action.
pub fn action_color(action: PolicyAction) -> [u8; 3] {
    match action {
        PolicyAction::Stop(l) => STOP_COLORS[l.min(2)],
        PolicyAction::Continue(a) => CONTINUE_COLORS[a.0.min(6)],
    }
}

/// `(action_kind, action_arg)` columns: `stop` with a 1-based location or
/// `continue` with the fixation name.
pub fn action_columns<T: Scalar>(task: &TaskSpec<T>, action: PolicyAction) -> (&'static str, String) {
    match action {
        PolicyAction::Stop(l) => ("stop", (l + 1).to_string()),
        PolicyAction::Continue(a) => ("continue", task.action_name(a).to_string()),
    }
}

pub fn write_value_csv<T: Scalar, W: Write>(vf: &ValueFunction<T>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["p1", "p2", "p3", "fixation", "value"])?;
    for (a, table) in vf.tables().iter().enumerate() {
        for (idx, v) in table.iter().enumerate() {
            let p = vf.grid().point(idx);
            w.write_record([
                p[0].to_string(),
                p[1].to_string(),
                p[2].to_string(),
                a.to_string(),
                v.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Policy table; a trailing `ties` column appears when the map carries
/// tie counts.
pub fn write_policy_csv<T: Scalar, W: Write>(policy: &PolicyMap<T>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let ties = policy.ties();
    let mut header = vec!["fixation", "p1", "p2", "p3", "action_kind", "action_arg"];
    if ties.is_some() {
        header.push("ties");
    }
    w.write_record(&header)?;
    for a in policy.task().actions() {
        for (idx, act) in policy.table(a).iter().enumerate() {
            let p = policy.grid().point(idx);
            let (kind, arg) = action_columns(policy.task(), *act);
            let mut rec = vec![
                policy.task().action_name(a).to_string(),
                p[0].to_string(),
                p[1].to_string(),
                p[2].to_string(),
                kind.to_string(),
                arg,
            ];
            if let Some(t) = ties {
                rec.push(t[a.0][idx].to_string());
            }
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn raster<T: Scalar, P: Copy>(grid: &SimplexGrid<T>, outside: P, pixel: impl Fn(usize) -> P) -> Vec<P> {
    let m = grid.m();
    let mut px = vec![outside; m * m];
    for idx in 0..grid.len() {
        let (i, j) = grid.lattice(idx);
        px[(m - 1 - j) * m + i] = pixel(idx);
    }
    px
}

/// Binary PPM of one fixation's policy.
pub fn policy_ppm<T: Scalar>(policy: &PolicyMap<T>, fixation: FixationAction) -> Vec<u8> {
    let m = policy.grid().m();
    let table = policy.table(fixation);
    let px = raster(policy.grid(), OUTSIDE, |idx| action_color(table[idx]));
    let mut out = format!("P6\n{m} {m}\n255\n").into_bytes();
    out.extend(px.iter().flatten());
    out
}

/// Binary PGM of the number of tied best actions (0 outside the simplex).
pub fn tie_pgm<T: Scalar>(policy: &PolicyMap<T>, fixation: FixationAction) -> Result<Vec<u8>> {
    let ties = policy
        .ties()
        .ok_or_else(|| invalid("policy map carries no tie counts"))?;
    let m = policy.grid().m();
    let row = &ties[fixation.0];
    let px = raster(policy.grid(), 0u8, |idx| row[idx]);
    let mut out = format!("P5\n{m} {m}\n255\n").into_bytes();
    out.extend(px);
    Ok(out)
}

/// Writes `policy.csv`, `policy_<fixation>.ppm` for every fixation and,
/// when tie counts exist, `ties_<fixation>.pgm`. Returns the written paths.
pub fn export_policy<T: Scalar>(policy: &PolicyMap<T>, dir: &Path, prefix: &str) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let csv_path = dir.join(format!("{prefix}policy.csv"));
    write_policy_csv(policy, std::fs::File::create(&csv_path)?)?;
    written.push(csv_path);
    for a in policy.task().actions() {
        let name = policy.task().action_name(a);
        let path = dir.join(format!("{prefix}policy_{name}.ppm"));
        std::fs::write(&path, policy_ppm(policy, a))?;
        written.push(path);
        if policy.ties().is_some() {
            let path = dir.join(format!("{prefix}ties_{name}.pgm"));
            std::fs::write(&path, tie_pgm(policy, a)?)?;
            written.push(path);
        }
    }
    Ok(written)
}

const REPORT_HEADER: [&str; 10] = [
    "trials",
    "accuracy",
    "accuracy_se",
    "steps",
    "steps_se",
    "switches",
    "switches_se",
    "cost",
    "cost_se",
    "truncated",
];

fn report_fields(r: &BatchReport) -> Vec<String> {
    vec![
        r.trials.to_string(),
        r.accuracy.mean.to_string(),
        r.accuracy.se.to_string(),
        r.steps.mean.to_string(),
        r.steps.se.to_string(),
        r.switches.mean.to_string(),
        r.switches.se.to_string(),
        r.cost.mean.to_string(),
        r.cost.se.to_string(),
        r.truncated.to_string(),
    ]
}

pub fn write_batch_csv<W: Write>(report: &BatchReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_HEADER)?;
    w.write_record(report_fields(report))?;
    w.flush()?;
    Ok(())
}

pub fn write_compare_csv<W: Write>(rows: &[ComparisonRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["policy", "c", "c_s", "threshold"];
    header.extend(REPORT_HEADER);
    header.push("warning");
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.policy.clone(),
            r.c.to_string(),
            r.c_s.to_string(),
            r.threshold.map(|t| t.to_string()).unwrap_or_default(),
        ];
        rec.extend(report_fields(&r.report));
        rec.push(r.warning.clone().unwrap_or_default());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// One line per step of every trace: the fixation, the observation bits
/// and the posterior after it.
pub fn write_trace_csv<T: Scalar, W: Write>(task: &TaskSpec<T>, traces: &[EpisodeTrace<T>], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["trial", "seed", "target", "step", "fixation", "observation"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=task.k()).map(|i| format!("p{i}")));
    header.extend(["decision", "correct"].iter().map(|s| s.to_string()));
    w.write_record(&header)?;
    for (n, tr) in traces.iter().enumerate() {
        for s in 0..tr.steps {
            let last = s + 1 == tr.steps;
            let mut rec = vec![
                n.to_string(),
                tr.seed.to_string(),
                (tr.target + 1).to_string(),
                (s + 1).to_string(),
                task.action_name(tr.fixations[s + 1]).to_string(),
                tr.observations[s].to_string(),
            ];
            rec.extend(tr.beliefs[s + 1].probs().iter().map(|p| p.to_string()));
            rec.push(if last {
                (tr.decision + 1).to_string()
            } else {
                String::new()
            });
            rec.push(if last { tr.correct().to_string() } else { String::new() });
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CostParams;
    use crate::solver::{solve, SolverConfig};

    fn small_policy() -> PolicyMap<f64> {
        let task = TaskSpec::task1(0.8).unwrap();
        let costs = CostParams::new(0.05, 0.0).unwrap();
        solve(&task, &costs, 11, &SolverConfig::default()).unwrap().1
    }

    #[test]
    fn ppm_layout_and_palette() {
        let policy = small_policy();
        let img = policy_ppm(&policy, FixationAction(0));
        let header = b"P6\n11 11\n255\n";
        assert_eq!(&img[..header.len()], header);
        let px = &img[header.len()..];
        assert_eq!(px.len(), 11 * 11 * 3);
        // Top-right pixel is outside the simplex.
        assert_eq!(&px[10 * 3..11 * 3], &OUTSIDE);
        // Bottom-right pixel is the vertex p1 = 1, which stops at location 1.
        let br = (10 * 11 + 10) * 3;
        assert_eq!(&px[br..br + 3], &STOP_COLORS[0]);
    }

    #[test]
    fn policy_csv_rows() {
        let policy = small_policy();
        let mut buf = Vec::new();
        write_policy_csv(&policy, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "fixation,p1,p2,p3,action_kind,action_arg");
        assert_eq!(lines.count(), 3 * 66);
    }

    #[test]
    fn tie_pgm_needs_ties() {
        let policy = small_policy();
        assert!(tie_pgm(&policy, FixationAction(0)).is_err());
        let ties = vec![vec![2u8; 66]; 3];
        let policy = policy.with_ties(ties);
        let img = tie_pgm(&policy, FixationAction(1)).unwrap();
        assert_eq!(img.len(), b"P5\n11 11\n255\n".len() + 121);
    }
}
