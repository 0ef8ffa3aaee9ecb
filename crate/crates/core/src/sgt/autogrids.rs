//! Learnable assignment: positive scores per (cell, joint), discretized by a
//! (optionally Gumbel-perturbed) row argmax and trained straight-through.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::assignment::AssignmentMatrix;
use super::topology::{GridSpec, SkeletonTopology};
use crate::error::{shape_err, Error, Result};
use crate::tensor_engine::rng::{open_unit, standard_gumbel, uniform};
use crate::tensor_engine::{EngineRng, Parameter, Tensor};

/// Smallest score kept after an optimizer step; scores must stay positive.
pub const MIN_SCORE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AutoGridsState {
    /// Assignment scores, `HP×J`, all positive.
    pub scores: Parameter,
    pub grid: GridSpec,
    pub joints: usize,
    pub temperature: f64,
    pub noise_enabled: bool,
    /// First epoch without noise.
    pub noise_cutoff_epoch: usize,
    /// Most recent noise-free assignment that covered every joint.
    pub last_covering: Option<AssignmentMatrix>,
}

impl AutoGridsState {
    pub fn noise_active(&self, epoch: usize) -> bool {
        self.noise_enabled && epoch < self.noise_cutoff_epoch
    }

    /// Noise-free discretization of the current scores.
    pub fn argmax_assignment(&self) -> AssignmentMatrix {
        row_argmax(self.scores.data(), self.grid, self.joints)
    }

    /// Restores the positivity invariant after an optimizer step.
    pub fn clamp_scores(&mut self) {
        for v in self.scores.value.data_mut() {
            if !(*v >= MIN_SCORE) {
                *v = MIN_SCORE;
            }
        }
    }

    pub fn check_invariants(&self) -> Result<()> {
        if self.scores.shape() != [self.grid.cells(), self.joints] {
            return Err(shape_err!(
                "scores are {:?}, expected {}x{}",
                self.scores.shape(),
                self.grid.cells(),
                self.joints
            ));
        }
        if let Some(v) = self.scores.data().iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::NonFinite(format!(
                "assignment score {v} is not a positive finite value"
            )));
        }
        Ok(())
    }

    /// Assignment to use for the inverse transform: `s` with every uncovered joint's
    /// column taken from the last covering assignment, or, before any covering
    /// assignment exists, the joint's highest-scoring cell. Returns the patched joints.
    pub fn patch_uncovered(&self, s: &AssignmentMatrix) -> (AssignmentMatrix, Vec<usize>) {
        let coverage = s.coverage();
        let missing: Vec<usize> = (0..self.joints).filter(|&j| coverage[j] == 0).collect();
        let mut patched = s.clone();
        for &j in &missing {
            match &self.last_covering {
                Some(fallback) => {
                    for p in 0..s.cells() {
                        if fallback.get(p, j) {
                            patched.set(p, j, true);
                        }
                    }
                }
                None => {
                    let scores = self.scores.data();
                    let best = (0..s.cells()).fold(0, |b, p| {
                        if scores[p * self.joints + j] > scores[b * self.joints + j] {
                            p
                        } else {
                            b
                        }
                    });
                    patched.set(best, j, true);
                }
            }
        }
        (patched, missing)
    }
}

/// Row-wise one-hot at the largest entry; ties go to the lowest joint index.
pub fn row_argmax(values: &[f64], grid: GridSpec, joints: usize) -> AssignmentMatrix {
    let cell_joints: Vec<usize> = values
        .chunks_exact(joints)
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect();
    AssignmentMatrix::from_cell_joints(grid, joints, &cell_joints).expect("argmax rows are one-hot")
}

/// Draws `(S_soft, S)`. With noise active, `S_soft = scores + temperature·ε` where `ε` is
/// standard Gumbel noise drawn row-major (`HP·J` draws); otherwise `S_soft = scores` and
/// nothing is drawn.
pub fn autogrids_sample(state: &AutoGridsState, rng: &mut EngineRng, epoch: usize) -> (Tensor, AssignmentMatrix) {
    let mut soft = state.scores.value.clone();
    if state.noise_active(epoch) {
        for v in soft.data_mut() {
            *v += state.temperature * standard_gumbel(rng);
        }
    }
    let s = row_argmax(soft.data(), state.grid, state.joints);
    (soft, s)
}

/// Straight-through estimator: the gradient with respect to the discrete assignment is
/// used unchanged as the gradient of the scores.
pub fn ste_backward(grad_assignment: &[f64]) -> Vec<f64> {
    grad_assignment.to_vec()
}

/// Seeded: score 1 on the seed layout's entries and `U(0, 0.01)` elsewhere.
/// Unseeded: `U(0.01, 1)` everywhere. Draws `HP·J` uniforms row-major.
pub fn init_autogrids(
    seed_layout: Option<&AssignmentMatrix>,
    grid: GridSpec,
    joints: usize,
    rng: &mut EngineRng,
) -> Result<AutoGridsState> {
    if let Some(s) = seed_layout {
        s.check_compatible(grid, joints)?;
    }
    let n = grid.cells() * joints;
    let data: Vec<f64> = (0..n)
        .map(|i| match seed_layout {
            Some(s) if s.entries()[i] == 1 => {
                let _ = open_unit(rng);
                1.0
            }
            Some(_) => 0.01 * open_unit(rng),
            None => uniform(rng, 0.01, 1.0).max(0.01),
        })
        .collect();
    let last_covering = seed_layout.filter(|s| s.is_covering()).cloned();
    Ok(AutoGridsState {
        scores: Parameter::new(Tensor::new(&[grid.cells(), joints], data)?),
        grid,
        joints,
        temperature: 1.0,
        noise_enabled: true,
        noise_cutoff_epoch: 30,
        last_covering,
    })
}

fn dump_matrix(
    path: &Path,
    topology: &SkeletonTopology,
    grid: GridSpec,
    values: &[String],
    trailer: Option<String>,
) -> Result<()> {
    let j = topology.num_joints();
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "row,col,{}", topology.joint_names().join(","))?;
    for (p, row) in values.chunks_exact(j).enumerate() {
        let (r, c) = grid.coords(p);
        writeln!(f, "{r},{c},{}", row.join(","))?;
    }
    if let Some(t) = trailer {
        writeln!(f, "{t}")?;
    }
    f.flush()?;
    Ok(())
}

/// Writes the binary assignment with joint-name headers and a `# coverage: k/J` trailer.
pub fn dump_assignment(s: &AssignmentMatrix, topology: &SkeletonTopology, path: &Path) -> Result<()> {
    s.check_compatible(s.grid(), topology.num_joints())?;
    let values: Vec<String> = s.entries().iter().map(|e| e.to_string()).collect();
    dump_matrix(
        path,
        topology,
        s.grid(),
        &values,
        Some(format!("# coverage: {}/{}", s.covered_joints(), s.joints())),
    )
}

/// Writes the scores, or their natural log with `log = true`.
pub fn dump_scores(state: &AutoGridsState, topology: &SkeletonTopology, path: &Path, log: bool) -> Result<()> {
    if state.joints != topology.num_joints() {
        return Err(shape_err!(
            "state has {} joints, skeleton has {}",
            state.joints,
            topology.num_joints()
        ));
    }
    let values: Vec<String> = state
        .scores
        .data()
        .iter()
        .map(|&v| format!("{:?}", if log { v.ln() } else { v }))
        .collect();
    let cov = state.argmax_assignment();
    dump_matrix(
        path,
        topology,
        state.grid,
        &values,
        Some(format!("# coverage: {}/{}", cov.covered_joints(), cov.joints())),
    )
}

/// Reads a matrix written by [`dump_assignment`] or [`dump_scores`]:
/// `(joint names, grid, row-major HP×J values)`.
pub fn load_matrix_dump(path: &Path) -> Result<(Vec<String>, GridSpec, Vec<f64>)> {
    let text = std::fs::read_to_string(path)?;
    let mut names = None;
    let mut values = Vec::new();
    let mut coords = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let bad = |msg: String| Error::Parse { line: line_no, msg };
        match &names {
            None => {
                if fields.len() < 3 || fields[0] != "row" || fields[1] != "col" {
                    return Err(bad("expected a `row,col,<joints...>` header".into()));
                }
                names = Some(fields[2..].iter().map(|s| s.to_string()).collect::<Vec<_>>());
            }
            Some(n) => {
                if fields.len() != n.len() + 2 {
                    return Err(bad(format!("expected {} fields, got {}", n.len() + 2, fields.len())));
                }
                let r: usize = fields[0].parse().map_err(|_| bad("bad row index".into()))?;
                let c: usize = fields[1].parse().map_err(|_| bad("bad col index".into()))?;
                coords.push((r, c));
                for f in &fields[2..] {
                    values.push(f.parse::<f64>().map_err(|_| bad(format!("{f:?} is not a number")))?);
                }
            }
        }
    }
    let names = names.ok_or(Error::Parse {
        line: 1,
        msg: "empty file".into(),
    })?;
    let rows = coords.iter().map(|c| c.0 + 1).max().unwrap_or(0);
    let cols = coords.iter().map(|c| c.1 + 1).max().unwrap_or(0);
    let grid = GridSpec::new(rows, cols)?;
    if coords.len() != grid.cells() || coords.iter().enumerate().any(|(p, &(r, c))| grid.cell(r, c) != p) {
        return Err(Error::Parse {
            line: 1,
            msg: "cells must be listed once each in row-major order".into(),
        });
    }
    Ok((names, grid, values))
}
