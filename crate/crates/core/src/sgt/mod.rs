//! Semantic grid transformation: skeleton topology, joint-to-cell assignment
//! matrices, layout construction and validation, the forward/inverse transforms,
//! and the learnable assignment.

mod assignment;
mod autogrids;
mod layout;
mod topology;
mod transform;

pub use assignment::{
    permute_cells, random_sgt, shuffle_layout, validate_constraints, AssignmentMatrix, ConstraintReport, ShuffleMode,
    Violation,
};
pub use autogrids::{
    autogrids_sample, dump_assignment, dump_scores, init_autogrids, load_matrix_dump, row_argmax, ste_backward,
    AutoGridsState, MIN_SCORE,
};
pub use layout::{build_handcrafted_layout, format_layout, parse_grid, parse_layout, HANDCRAFTED_ANCHOR};
pub use topology::{GridSpec, SkeletonTopology};
pub use transform::{sgt_forward, sgt_forward_assignment_grad, sgt_inverse, sgt_inverse_backward};
