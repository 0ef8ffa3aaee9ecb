//! Layout files and the bundled handcrafted layout.
//!
//! A layout file lists one grid cell per line as `row,col,joint_name` under a
//! `row,col,joint_name` header. Lines starting with `#` are comments, except that a
//! `# grid: HxP` comment fixes the grid size (otherwise it is inferred from the
//! largest indices). Cells may be listed twice or omitted; the resulting
//! non-one-hot rows are left for [`validate_constraints`](super::validate_constraints)
//! to report.

use super::assignment::AssignmentMatrix;
use super::topology::{GridSpec, SkeletonTopology};
use crate::error::{invalid, Error, Result};

const H36M17_GRID5X5: &str = include_str!("../../data/h36m17_grid5x5.csv");

/// Cell of the handcrafted layout holding the root joint.
pub const HANDCRAFTED_ANCHOR: (usize, usize) = (2, 2);

/// The bundled 5×5 layout for the 17-joint skeleton.
pub fn build_handcrafted_layout(topology: &SkeletonTopology, grid: GridSpec) -> Result<AssignmentMatrix> {
    let canonical = SkeletonTopology::h36m17();
    if *topology != canonical || grid != GridSpec::default() {
        return Err(invalid!(
            "no handcrafted layout for a {}-joint skeleton on a {grid} grid; \
             only the bundled 17-joint skeleton on 5x5 has one. Supply a layout file \
             (`row,col,joint_name` lines) instead",
            topology.num_joints()
        ));
    }
    parse_layout(H36M17_GRID5X5, topology, Some(grid))
}

pub fn parse_layout(text: &str, topology: &SkeletonTopology, grid: Option<GridSpec>) -> Result<AssignmentMatrix> {
    let mut grid = grid;
    let mut entries: Vec<(usize, usize, usize)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(size) = comment.trim().strip_prefix("grid:") {
                if grid.is_none() {
                    grid = Some(parse_grid(size.trim()).map_err(|e| Error::Parse {
                        line: line_no,
                        msg: e.to_string(),
                    })?);
                }
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields == ["row", "col", "joint_name"] {
            continue;
        }
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected `row,col,joint_name`, got {} fields", fields.len()),
            });
        }
        let num = |s: &str| {
            s.parse::<usize>().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("{s:?} is not a cell index"),
            })
        };
        let (r, c) = (num(fields[0])?, num(fields[1])?);
        let j = topology.joint_index(fields[2]).ok_or_else(|| Error::Parse {
            line: line_no,
            msg: format!("unknown joint {:?}", fields[2]),
        })?;
        entries.push((r, c, j));
        if let Some(g) = grid {
            if r >= g.rows || c >= g.cols {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("cell ({r},{c}) lies outside the {g} grid"),
                });
            }
        }
    }
    let grid = match grid {
        Some(g) => g,
        None => {
            let rows = entries.iter().map(|e| e.0 + 1).max().unwrap_or(0);
            let cols = entries.iter().map(|e| e.1 + 1).max().unwrap_or(0);
            GridSpec::new(rows, cols)?
        }
    };
    let mut s = AssignmentMatrix::zeros(grid, topology.num_joints());
    for (r, c, j) in entries {
        s.set(grid.cell(r, c), j, true);
    }
    Ok(s)
}

pub fn format_layout(s: &AssignmentMatrix, topology: &SkeletonTopology) -> String {
    let grid = s.grid();
    let mut out = format!("# grid: {}x{}\nrow,col,joint_name\n", grid.rows, grid.cols);
    for p in 0..grid.cells() {
        let (r, c) = grid.coords(p);
        for j in 0..s.joints() {
            if s.get(p, j) {
                out.push_str(&format!("{r},{c},{}\n", topology.joint_names()[j]));
            }
        }
    }
    out.push_str(&format!("# coverage: {}/{}\n", s.covered_joints(), s.joints()));
    out
}

/// Parses `HxP` (also accepts `H×P`).
pub fn parse_grid(s: &str) -> Result<GridSpec> {
    let (h, p) = s
        .split_once(['x', 'X', '×'])
        .ok_or_else(|| invalid!("grid size must look like 5x5, got {s:?}"))?;
    let h = h.trim().parse().map_err(|_| invalid!("bad grid rows in {s:?}"))?;
    let p = p.trim().parse().map_err(|_| invalid!("bad grid cols in {s:?}"))?;
    GridSpec::new(h, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sgt::validate_constraints;

    #[test]
    fn handcrafted_layout_satisfies_both_constraints() {
        let topo = SkeletonTopology::h36m17();
        let s = build_handcrafted_layout(&topo, GridSpec::default()).unwrap();
        let report = validate_constraints(&s, &topo).unwrap();
        assert!(report.violations.is_empty(), "{:?}", report.violations);
        assert_eq!(s.covered_joints(), 17);
        let (r, c) = HANDCRAFTED_ANCHOR;
        assert_eq!(s.cell_joint(s.grid().cell(r, c)), Some(topo.root_index()));
    }

    #[test]
    fn handcrafted_rejects_other_pairs() {
        let topo = SkeletonTopology::h36m17();
        let err = build_handcrafted_layout(&topo, GridSpec::new(7, 3).unwrap()).unwrap_err();
        assert!(err.to_string().contains("layout file"));
    }

    #[test]
    fn format_parse_round_trip() {
        let topo = SkeletonTopology::h36m17();
        let s = build_handcrafted_layout(&topo, GridSpec::default()).unwrap();
        let text = format_layout(&s, &topo);
        assert!(text.contains("# coverage: 17/17"));
        assert_eq!(parse_layout(&text, &topo, None).unwrap(), s);
    }

    #[test]
    fn duplicated_cell_becomes_multi_hot_row() {
        let topo = SkeletonTopology::h36m17();
        let text = "row,col,joint_name\n0,0,pelvis\n0,0,head\n0,1,neck\n";
        let s = parse_layout(text, &topo, None).unwrap();
        assert_eq!(s.grid(), GridSpec::new(1, 2).unwrap());
        assert_eq!(s.row_sum(0), 2);
    }

    #[test]
    fn unknown_joint_names_line() {
        let topo = SkeletonTopology::h36m17();
        let err = parse_layout("row,col,joint_name\n0,0,tail\n", &topo, None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }
}
