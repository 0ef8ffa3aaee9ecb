use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::topology::{GridSpec, SkeletonTopology};
use crate::error::{invalid, shape_err, Result};
use crate::tensor_engine::EngineRng;

/// Binary `HP×J` map from skeleton joints to grid cells.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentMatrix {
    grid: GridSpec,
    joints: usize,
    /// Row-major `HP×J` entries in {0,1}.
    entries: Vec<u8>,
}

impl AssignmentMatrix {
    pub fn zeros(grid: GridSpec, joints: usize) -> Self {
        Self {
            grid,
            joints,
            entries: vec![0; grid.cells() * joints],
        }
    }

    /// One-hot rows from the joint held by each cell.
    pub fn from_cell_joints(grid: GridSpec, joints: usize, cell_joints: &[usize]) -> Result<Self> {
        if cell_joints.len() != grid.cells() {
            return Err(shape_err!("{} cell entries for a {grid} grid", cell_joints.len()));
        }
        let mut s = Self::zeros(grid, joints);
        for (p, &j) in cell_joints.iter().enumerate() {
            if j >= joints {
                return Err(invalid!("cell {p} holds joint {j}, but there are only {joints}"));
            }
            s.set(p, j, true);
        }
        Ok(s)
    }

    pub fn from_entries(grid: GridSpec, joints: usize, entries: Vec<u8>) -> Result<Self> {
        if entries.len() != grid.cells() * joints {
            return Err(shape_err!(
                "{} entries for a {}x{joints} matrix",
                entries.len(),
                grid.cells()
            ));
        }
        if entries.iter().any(|&e| e > 1) {
            return Err(invalid!("assignment entries must be 0 or 1"));
        }
        Ok(Self { grid, joints, entries })
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn cells(&self) -> usize {
        self.grid.cells()
    }

    pub fn joints(&self) -> usize {
        self.joints
    }

    pub fn get(&self, cell: usize, joint: usize) -> bool {
        self.entries[cell * self.joints + joint] == 1
    }

    pub fn set(&mut self, cell: usize, joint: usize, on: bool) {
        self.entries[cell * self.joints + joint] = on as u8;
    }

    pub fn entries(&self) -> &[u8] {
        &self.entries
    }

    pub fn row_sum(&self, cell: usize) -> usize {
        self.entries[cell * self.joints..(cell + 1) * self.joints]
            .iter()
            .map(|&e| e as usize)
            .sum()
    }

    /// The joint of a one-hot row, `None` for empty or multi-hot rows.
    pub fn cell_joint(&self, cell: usize) -> Option<usize> {
        let row = &self.entries[cell * self.joints..(cell + 1) * self.joints];
        let mut found = None;
        for (j, &e) in row.iter().enumerate() {
            if e == 1 {
                if found.is_some() {
                    return None;
                }
                found = Some(j);
            }
        }
        found
    }

    /// Joint per cell; errors unless every row is one-hot.
    pub fn cell_joints(&self) -> Result<Vec<usize>> {
        (0..self.cells())
            .map(|p| {
                self.cell_joint(p).ok_or_else(|| {
                    let (r, c) = self.grid.coords(p);
                    invalid!(
                        "grid cell ({r},{c}) has {} assigned joints, expected exactly 1",
                        self.row_sum(p)
                    )
                })
            })
            .collect()
    }

    pub fn rows_one_hot(&self) -> bool {
        (0..self.cells()).all(|p| self.row_sum(p) == 1)
    }

    /// Number of cells assigned to each joint.
    pub fn coverage(&self) -> Vec<usize> {
        let mut counts = vec![0; self.joints];
        for row in self.entries.chunks_exact(self.joints) {
            for (c, &e) in counts.iter_mut().zip(row) {
                *c += e as usize;
            }
        }
        counts
    }

    pub fn covered_joints(&self) -> usize {
        self.coverage().iter().filter(|&&c| c > 0).count()
    }

    pub fn is_covering(&self) -> bool {
        self.coverage().iter().all(|&c| c > 0)
    }

    pub fn check_compatible(&self, grid: GridSpec, joints: usize) -> Result<()> {
        if self.grid != grid || self.joints != joints {
            return Err(shape_err!(
                "assignment is {}x{} over a {} grid, expected {} joints on {grid}",
                self.cells(),
                self.joints,
                self.grid,
                joints
            ));
        }
        Ok(())
    }
}

/// One broken constraint found by [`validate_constraints`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    /// A cell whose row of `S` does not hold exactly one 1.
    RowNotOneHot { row: usize, col: usize, ones: usize },
    /// A skeleton edge whose endpoints never sit in 4-adjacent cells.
    EdgeNotAdjacent { joint_a: String, joint_b: String },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::RowNotOneHot { row, col, ones } => {
                write!(f, "cell ({row},{col}) holds {ones} joints (one-hot rows required)")
            }
            Violation::EdgeNotAdjacent { joint_a, joint_b } => {
                write!(f, "edge {joint_a}-{joint_b} has no pair of adjacent cells")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ConstraintReport {
    /// Every skeleton edge appears between 4-neighboring cells.
    pub adjacency_ok: bool,
    /// Every row of the assignment is one-hot.
    pub one_hot_ok: bool,
    pub violations: Vec<Violation>,
}

impl ConstraintReport {
    pub fn is_valid(&self) -> bool {
        self.adjacency_ok && self.one_hot_ok
    }
}

/// Checks edge adjacency and one-hot rows of `s` against `topology`.
pub fn validate_constraints(s: &AssignmentMatrix, topology: &SkeletonTopology) -> Result<ConstraintReport> {
    if s.joints() != topology.num_joints() {
        return Err(shape_err!(
            "assignment has {} joint columns, skeleton has {}",
            s.joints(),
            topology.num_joints()
        ));
    }
    let grid = s.grid();
    let mut violations = Vec::new();
    for p in 0..grid.cells() {
        let ones = s.row_sum(p);
        if ones != 1 {
            let (row, col) = grid.coords(p);
            violations.push(Violation::RowNotOneHot { row, col, ones });
        }
    }
    let one_hot_ok = violations.is_empty();
    let names = topology.joint_names();
    for &(a, b) in topology.edges() {
        let adjacent = (0..grid.cells()).any(|p| s.get(p, a) && grid.neighbors(p).any(|q| s.get(q, b)));
        if !adjacent {
            violations.push(Violation::EdgeNotAdjacent {
                joint_a: names[a].clone(),
                joint_b: names[b].clone(),
            });
        }
    }
    let adjacency_ok = !violations
        .iter()
        .any(|v| matches!(v, Violation::EdgeNotAdjacent { .. }));
    Ok(ConstraintReport {
        adjacency_ok,
        one_hot_ok,
        violations,
    })
}

/// Random layout with every joint in at least one cell and the remaining cells
/// filled uniformly at random.
pub fn random_sgt(joints: usize, grid: GridSpec, rng: &mut EngineRng) -> Result<AssignmentMatrix> {
    grid.check_fits(joints)?;
    let mut cells: Vec<usize> = (0..grid.cells()).collect();
    cells.shuffle(rng);
    let mut cell_joints = vec![0; grid.cells()];
    for (k, &p) in cells.iter().enumerate() {
        cell_joints[p] = if k < joints {
            k
        } else {
            rand::Rng::random_range(rng, 0..joints)
        };
    }
    AssignmentMatrix::from_cell_joints(grid, joints, &cell_joints)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShuffleMode {
    /// Permute whole grid rows.
    Row,
    /// Permute whole grid columns.
    Column,
    /// Permute all cells.
    Global,
}

impl std::str::FromStr for ShuffleMode {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "row" => Ok(Self::Row),
            "column" | "col" => Ok(Self::Column),
            "global" => Ok(Self::Global),
            other => Err(invalid!("unknown shuffle mode {other:?} (row|column|global)")),
        }
    }
}

/// Moves the content of source cell `perm[p]` into cell `p`.
pub fn permute_cells(s: &AssignmentMatrix, perm: &[usize]) -> Result<AssignmentMatrix> {
    let n = s.cells();
    let mut seen = vec![false; n];
    if perm.len() != n || perm.iter().any(|&q| q >= n || std::mem::replace(&mut seen[q], true)) {
        return Err(invalid!("not a permutation of {n} cells"));
    }
    let j = s.joints();
    let mut entries = Vec::with_capacity(s.entries().len());
    for &q in perm {
        entries.extend_from_slice(&s.entries()[q * j..(q + 1) * j]);
    }
    AssignmentMatrix::from_entries(s.grid(), j, entries)
}

/// Row, column or global permutation of the grid cells of `s`.
pub fn shuffle_layout(s: &AssignmentMatrix, mode: ShuffleMode, rng: &mut EngineRng) -> Result<AssignmentMatrix> {
    let grid = s.grid();
    let perm: Vec<usize> = match mode {
        ShuffleMode::Row => {
            let mut rows: Vec<usize> = (0..grid.rows).collect();
            rows.shuffle(rng);
            (0..grid.cells())
                .map(|p| {
                    let (r, c) = grid.coords(p);
                    grid.cell(rows[r], c)
                })
                .collect()
        }
        ShuffleMode::Column => {
            let mut cols: Vec<usize> = (0..grid.cols).collect();
            cols.shuffle(rng);
            (0..grid.cells())
                .map(|p| {
                    let (r, c) = grid.coords(p);
                    grid.cell(r, cols[c])
                })
                .collect()
        }
        ShuffleMode::Global => {
            let mut all: Vec<usize> = (0..grid.cells()).collect();
            all.shuffle(rng);
            all
        }
    };
    permute_cells(s, &perm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor_engine::rng::seeded;

    fn chain(n: usize) -> SkeletonTopology {
        let names = (0..n).map(|i| format!("j{i}")).collect();
        let edges = (1..n).map(|i| (i - 1, i)).collect();
        SkeletonTopology::new(names, edges, 0).unwrap()
    }

    #[test]
    fn single_joint_single_cell_is_valid() {
        let s = AssignmentMatrix::from_cell_joints(GridSpec::new(1, 1).unwrap(), 1, &[0]).unwrap();
        let r = validate_constraints(&s, &chain(1)).unwrap();
        assert!(r.is_valid() && r.violations.is_empty());
    }

    #[test]
    fn two_ones_in_a_row_is_reported() {
        let mut s = AssignmentMatrix::from_cell_joints(GridSpec::new(1, 2).unwrap(), 2, &[0, 1]).unwrap();
        s.set(0, 1, true);
        let r = validate_constraints(&s, &chain(2)).unwrap();
        assert!(!r.one_hot_ok);
        assert_eq!(
            r.violations[0],
            Violation::RowNotOneHot {
                row: 0,
                col: 0,
                ones: 2
            }
        );
    }

    #[test]
    fn adjacent_chain_is_valid_and_far_chain_is_not() {
        let grid = GridSpec::new(1, 3).unwrap();
        let topo = chain(2);
        let s = AssignmentMatrix::from_cell_joints(grid, 2, &[0, 1, 1]).unwrap();
        assert!(validate_constraints(&s, &topo).unwrap().is_valid());
        let s = AssignmentMatrix::from_cell_joints(grid, 2, &[0, 0, 1]).unwrap();
        assert!(validate_constraints(&s, &topo).unwrap().is_valid());
        let far = AssignmentMatrix::from_cell_joints(GridSpec::new(1, 3).unwrap(), 2, &[0, 0, 0]).unwrap();
        let r = validate_constraints(&far, &topo).unwrap();
        assert!(r.one_hot_ok && !r.adjacency_ok);
    }

    #[test]
    fn random_layout_with_equal_sizes_is_a_permutation() {
        let grid = GridSpec::new(2, 3).unwrap();
        let s = random_sgt(6, grid, &mut seeded(4)).unwrap();
        assert!(s.coverage().iter().all(|&c| c == 1));
        assert!(random_sgt(7, grid, &mut seeded(4)).is_err());
    }

    #[test]
    fn identity_permutation_is_noop() {
        let s = random_sgt(5, GridSpec::new(3, 3).unwrap(), &mut seeded(1)).unwrap();
        let id: Vec<usize> = (0..9).collect();
        assert_eq!(permute_cells(&s, &id).unwrap(), s);
        assert!(permute_cells(&s, &[0; 9]).is_err());
    }

    #[test]
    fn shuffles_preserve_one_hot_rows_and_multiset() {
        let s = random_sgt(17, GridSpec::default(), &mut seeded(8)).unwrap();
        for mode in [ShuffleMode::Row, ShuffleMode::Column, ShuffleMode::Global] {
            let t = shuffle_layout(&s, mode, &mut seeded(2)).unwrap();
            assert!(t.rows_one_hot());
            assert_eq!(t.coverage(), s.coverage());
        }
    }
}
