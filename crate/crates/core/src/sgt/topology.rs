use std::collections::{HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

const H36M17_SKELETON: &str = include_str!("../../data/h36m17_skeleton.csv");

/// Joint set, bone edges and root joint of a skeleton.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkeletonTopology {
    joint_names: Vec<String>,
    edges: Vec<(usize, usize)>,
    root_index: usize,
}

impl SkeletonTopology {
    pub fn new(joint_names: Vec<String>, edges: Vec<(usize, usize)>, root_index: usize) -> Result<Self> {
        let j = joint_names.len();
        if j == 0 {
            return Err(invalid!("skeleton has no joints"));
        }
        let mut seen = HashSet::new();
        for name in &joint_names {
            if !seen.insert(name.as_str()) {
                return Err(invalid!("duplicate joint name {name:?}"));
            }
        }
        if root_index >= j {
            return Err(invalid!("root index {root_index} out of range for {j} joints"));
        }
        let mut canonical = Vec::with_capacity(edges.len());
        let mut edge_set = HashSet::new();
        for &(a, b) in &edges {
            if a >= j || b >= j {
                return Err(invalid!("edge ({a},{b}) out of range for {j} joints"));
            }
            if a == b {
                return Err(invalid!("self-loop on joint {}", joint_names[a]));
            }
            if edge_set.insert((a.min(b), a.max(b))) {
                canonical.push((a, b));
            }
        }
        let topo = Self {
            joint_names,
            edges: canonical,
            root_index,
        };
        if !topo.is_connected() {
            return Err(invalid!("skeleton graph is not connected"));
        }
        Ok(topo)
    }

    /// The 17-joint Human3.6M skeleton rooted at the pelvis.
    pub fn h36m17() -> Self {
        Self::parse(H36M17_SKELETON).expect("bundled skeleton is valid")
    }

    /// Parses the skeleton CSV format: an optional `joints,<name>,...` line fixing the
    /// joint order, a `root,<name>` line, a `joint_a,joint_b` header, then one edge per
    /// line. Without a `joints` line, joints are numbered by first appearance.
    pub fn parse(text: &str) -> Result<Self> {
        let mut root: Option<String> = None;
        let mut names: Vec<String> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut declared = false;
        let mut raw_edges: Vec<(String, String, usize)> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            match fields[0] {
                "root" if fields.len() == 2 => root = Some(fields[1].to_string()),
                "joints" => {
                    for name in &fields[1..] {
                        if index.insert(name.to_string(), names.len()).is_some() {
                            return Err(Error::Parse {
                                line: line_no,
                                msg: format!("joint {name:?} declared twice"),
                            });
                        }
                        names.push(name.to_string());
                    }
                    declared = true;
                }
                "joint_a" => {}
                _ if fields.len() == 2 => raw_edges.push((fields[0].to_string(), fields[1].to_string(), line_no)),
                _ => {
                    return Err(Error::Parse {
                        line: line_no,
                        msg: format!("expected `joint_a,joint_b`, got {line:?}"),
                    })
                }
            }
        }
        let mut edges = Vec::with_capacity(raw_edges.len());
        for (a, b, line_no) in raw_edges {
            let mut lookup = |name: String| -> Result<usize> {
                if let Some(&k) = index.get(&name) {
                    return Ok(k);
                }
                if declared {
                    return Err(Error::Parse {
                        line: line_no,
                        msg: format!("joint {name:?} is not in the joints line"),
                    });
                }
                index.insert(name.clone(), names.len());
                names.push(name);
                Ok(names.len() - 1)
            };
            let ia = lookup(a)?;
            let ib = lookup(b)?;
            edges.push((ia, ib));
        }
        let root = root.ok_or(Error::Parse {
            line: 1,
            msg: "missing `root,<joint>` line".into(),
        })?;
        let root_index = *index.get(&root).ok_or_else(|| Error::Parse {
            line: 1,
            msg: format!("root joint {root:?} is not part of the skeleton"),
        })?;
        Self::new(names, edges, root_index)
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!(
            "root,{}\njoints,{}\njoint_a,joint_b\n",
            self.joint_names[self.root_index],
            self.joint_names.join(",")
        );
        for &(a, b) in &self.edges {
            s.push_str(&format!("{},{}\n", self.joint_names[a], self.joint_names[b]));
        }
        s
    }

    pub fn num_joints(&self) -> usize {
        self.joint_names.len()
    }

    pub fn joint_names(&self) -> &[String] {
        &self.joint_names
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joint_names.iter().position(|n| n == name)
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn root_index(&self) -> usize {
        self.root_index
    }

    /// Parent of every joint in the tree rooted at `root_index` (BFS order).
    pub fn parents(&self) -> Vec<Option<usize>> {
        let mut parent = vec![None; self.num_joints()];
        let mut seen = vec![false; self.num_joints()];
        let mut queue = VecDeque::from([self.root_index]);
        seen[self.root_index] = true;
        while let Some(u) = queue.pop_front() {
            for v in self.neighbors(u) {
                if !seen[v] {
                    seen[v] = true;
                    parent[v] = Some(u);
                    queue.push_back(v);
                }
            }
        }
        parent
    }

    /// Joints ordered so every parent precedes its children.
    pub fn kinematic_order(&self) -> Vec<usize> {
        let mut order = vec![self.root_index];
        let parents = self.parents();
        let mut i = 0;
        while i < order.len() {
            let u = order[i];
            for v in self.neighbors(u) {
                if parents[v] == Some(u) {
                    order.push(v);
                }
            }
            i += 1;
        }
        order
    }

    fn neighbors(&self, u: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().filter_map(move |&(a, b)| {
            if a == u {
                Some(b)
            } else if b == u {
                Some(a)
            } else {
                None
            }
        })
    }

    fn is_connected(&self) -> bool {
        self.parents()
            .iter()
            .enumerate()
            .all(|(j, p)| j == self.root_index || p.is_some())
    }
}

/// Grid of `rows` (H) by `cols` (P) cells, indexed row-major.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { rows: 5, cols: 5 }
    }
}

impl GridSpec {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(invalid!("grid must have at least one row and column"));
        }
        Ok(Self { rows, cols })
    }

    pub fn cells(&self) -> usize {
        self.rows * self.cols
    }

    pub fn cell(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    pub fn coords(&self, cell: usize) -> (usize, usize) {
        (cell / self.cols, cell % self.cols)
    }

    /// Up/down/left/right neighbors, without wrap-around.
    pub fn neighbors(&self, cell: usize) -> impl Iterator<Item = usize> + '_ {
        let (r, c) = self.coords(cell);
        let candidates = [
            (r > 0).then(|| self.cell(r - 1, c)),
            (r + 1 < self.rows).then(|| self.cell(r + 1, c)),
            (c > 0).then(|| self.cell(r, c - 1)),
            (c + 1 < self.cols).then(|| self.cell(r, c + 1)),
        ];
        candidates.into_iter().flatten()
    }

    pub fn check_fits(&self, joints: usize) -> Result<()> {
        if self.cells() < joints {
            return Err(invalid!(
                "a {}x{} grid has {} cells, fewer than {joints} joints",
                self.rows,
                self.cols,
                self.cells()
            ));
        }
        Ok(())
    }
}

impl std::fmt::Display for GridSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}
