//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use std::collections::VecDeque;

use cdac_core::{FixationAction, Observation, PolicyAction, PolicyMap, Scalar, SimplexGrid, TaskSpec};

/// Action whose acuity pattern is `a`'s with locations relabeled by `perm`
/// (location `i` moves to `perm[i]`).
pub fn permute_action<T: Scalar>(task: &TaskSpec<T>, a: FixationAction, perm: [usize; 3]) -> FixationAction {
    let src = task.coverage(a);
    task.actions()
        .find(|&b| {
            let dst = task.coverage(b);
            (0..3).all(|i| dst[perm[i]] == src[i])
        })
        .expect("every relabeling maps actions onto actions")
}

/// Observation with bit `i` moved to `perm[i]` (single-bit observations
/// are unchanged).
pub fn permute_obs(x: Observation, perm: [usize; 3]) -> Observation {
    if x.arity() == 1 {
        return x;
    }
    let bits = x.bits();
    let mut out = vec![0u8; 3];
    for i in 0..3 {
        out[perm[i]] = bits[i];
    }
    Observation::new(&out).unwrap()
}

pub const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

/// Lattice neighbors of a grid point in the triangulated simplex.
pub fn neighbors<T: Scalar>(grid: &SimplexGrid<T>, idx: usize) -> Vec<usize> {
    let (i, j) = grid.lattice(idx);
    let (i, j) = (i as isize, j as isize);
    [(1, 0), (-1, 0), (0, 1), (0, -1), (1, -1), (-1, 1)]
        .iter()
        .filter_map(|(di, dj)| {
            let (a, b) = (i + di, j + dj);
            (a >= 0 && b >= 0).then(|| grid.index(a as usize, b as usize)).flatten()
        })
        .collect()
}

/// Connected components (lattice adjacency) of the cells where `member`
/// holds; returns the component sizes and the component label per cell.
pub fn components<T: Scalar>(
    grid: &SimplexGrid<T>,
    member: impl Fn(usize) -> bool,
) -> (Vec<usize>, Vec<Option<usize>>) {
    let mut label = vec![None; grid.len()];
    let mut sizes = Vec::new();
    for start in 0..grid.len() {
        if label[start].is_some() || !member(start) {
            continue;
        }
        let id = sizes.len();
        let mut size = 0;
        let mut queue = VecDeque::from([start]);
        label[start] = Some(id);
        while let Some(v) = queue.pop_front() {
            size += 1;
            for n in neighbors(grid, v) {
                if label[n].is_none() && member(n) {
                    label[n] = Some(id);
                    queue.push_back(n);
                }
            }
        }
        sizes.push(size);
    }
    (sizes, label)
}

pub fn stop_cells<T: Scalar>(policy: &PolicyMap<T>, fixation: FixationAction) -> usize {
    policy.table(fixation).iter().filter(|a| a.is_stop()).count()
}

pub fn is_continue(a: PolicyAction, b: FixationAction) -> bool {
    a == PolicyAction::Continue(b)
}

/// Pass/fail line printed by every acceptance check.
pub fn report(name: &str, pass: bool, detail: &str) {
    println!("[{}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
}
