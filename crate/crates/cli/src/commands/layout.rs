use std::path::{Path, PathBuf};

use clap::Subcommand;
use gridlift::gln::{load_model, SgtState};
use gridlift::sgt::{
    build_handcrafted_layout, dump_assignment, dump_scores, format_layout, parse_grid, parse_layout, random_sgt,
    shuffle_layout, validate_constraints, AssignmentMatrix, GridSpec, ShuffleMode, SkeletonTopology,
};
use gridlift::tensor_engine::rng::seeded;
use serde::Serialize;

use crate::config::{load_topology, sidecar, write_json};
use crate::failure::{at_path, emit_stdout, CmdResult, Failure};

#[derive(Debug, clap::Args)]
pub struct Common {
    /// Skeleton CSV (default: bundled 17-joint skeleton).
    #[arg(long)]
    topology: Option<PathBuf>,
    /// Write here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum LayoutCommand {
    /// The bundled layout of the 17-joint skeleton on a 5x5 grid.
    MakeHandcrafted {
        #[command(flatten)]
        common: Common,
    },
    /// A random covering assignment.
    MakeRandom {
        #[arg(long, default_value = "5x5", value_parser = grid_arg)]
        grid: GridSpec,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        common: Common,
    },
    /// Permute the cells of a layout by row, column or globally.
    Shuffle {
        #[arg(long)]
        layout: PathBuf,
        /// row, column or global.
        #[arg(long)]
        mode: ShuffleMode,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        common: Common,
    },
    /// Report one-hot and adjacency violations (exit 5 when any).
    Validate {
        #[arg(long)]
        layout: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Write a layout or a checkpoint's assignment as a cell-by-joint matrix.
    Dump {
        #[arg(long, conflicts_with = "layout", required_unless_present = "layout")]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        layout: Option<PathBuf>,
        /// Dump the learnable scores rather than the assignment.
        #[arg(long, requires = "checkpoint")]
        scores: bool,
        /// With `--scores`, write natural-log scores.
        #[arg(long, requires = "scores")]
        log: bool,
        /// Output matrix CSV.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        topology: Option<PathBuf>,
    },
}

fn grid_arg(s: &str) -> Result<GridSpec, String> {
    parse_grid(s).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Resolved<'a> {
    command: &'a str,
    topology: &'a Option<PathBuf>,
    grid: Option<GridSpec>,
    seed: Option<u64>,
    mode: Option<ShuffleMode>,
    layout: Option<&'a Path>,
}

fn read_layout(path: &Path, topology: &SkeletonTopology) -> CmdResult<AssignmentMatrix> {
    let text = at_path(path, std::fs::read_to_string(path).map_err(Into::into))?;
    at_path(path, parse_layout(&text, topology, None))
}

fn emit(text: &str, common: &Common, resolved: &Resolved) -> CmdResult {
    match &common.out {
        None => emit_stdout(text)?,
        Some(out) => {
            at_path(out, std::fs::write(out, text).map_err(Into::into))?;
            write_json(&sidecar(out), resolved)?;
        }
    }
    Ok(())
}

pub fn run(cmd: LayoutCommand) -> CmdResult {
    match cmd {
        LayoutCommand::MakeHandcrafted { common } => {
            let topology = load_topology(common.topology.as_deref())?;
            let s = build_handcrafted_layout(&topology, GridSpec::default())?;
            let resolved = Resolved {
                command: "make-handcrafted",
                topology: &common.topology,
                grid: Some(s.grid()),
                seed: None,
                mode: None,
                layout: None,
            };
            emit(&format_layout(&s, &topology), &common, &resolved)
        }
        LayoutCommand::MakeRandom { grid, seed, common } => {
            let topology = load_topology(common.topology.as_deref())?;
            let s = random_sgt(topology.num_joints(), grid, &mut seeded(seed))?;
            let resolved = Resolved {
                command: "make-random",
                topology: &common.topology,
                grid: Some(grid),
                seed: Some(seed),
                mode: None,
                layout: None,
            };
            emit(&format_layout(&s, &topology), &common, &resolved)
        }
        LayoutCommand::Shuffle {
            layout,
            mode,
            seed,
            common,
        } => {
            let topology = load_topology(common.topology.as_deref())?;
            let s = read_layout(&layout, &topology)?;
            let shuffled = shuffle_layout(&s, mode, &mut seeded(seed))?;
            let resolved = Resolved {
                command: "shuffle",
                topology: &common.topology,
                grid: Some(s.grid()),
                seed: Some(seed),
                mode: Some(mode),
                layout: Some(&layout),
            };
            emit(&format_layout(&shuffled, &topology), &common, &resolved)
        }
        LayoutCommand::Validate { layout, common } => {
            let topology = load_topology(common.topology.as_deref())?;
            let s = read_layout(&layout, &topology)?;
            let report = validate_constraints(&s, &topology)?;
            let text = serde_json::to_string_pretty(&report)? + "\n";
            let resolved = Resolved {
                command: "validate",
                topology: &common.topology,
                grid: Some(s.grid()),
                seed: None,
                mode: None,
                layout: Some(&layout),
            };
            emit(&text, &common, &resolved)?;
            if report.violations.is_empty() {
                return Ok(());
            }
            for v in &report.violations {
                eprintln!("violation: {v}");
            }
            Err(Failure::Constraint(format!(
                "{} has {} constraint violation(s)",
                layout.display(),
                report.violations.len()
            )))
        }
        LayoutCommand::Dump {
            checkpoint,
            layout,
            scores,
            log,
            out,
            topology,
        } => {
            match (checkpoint, layout) {
                (Some(ckpt), _) => {
                    let model = at_path(&ckpt, load_model(&ckpt))?;
                    if scores {
                        match &model.sgt {
                            SgtState::Learnable(st) => dump_scores(st, &model.topology, &out, log)?,
                            SgtState::Fixed(_) => {
                                return Err(Failure::Usage(format!(
                                    "{} has a fixed assignment; --scores needs a learnable one",
                                    ckpt.display()
                                )))
                            }
                        }
                    } else {
                        dump_assignment(&model.current_assignment(), &model.topology, &out)?;
                    }
                }
                (None, Some(path)) => {
                    let topo = load_topology(topology.as_deref())?;
                    dump_assignment(&read_layout(&path, &topo)?, &topo, &out)?;
                }
                (None, None) => unreachable!("clap requires --checkpoint or --layout"),
            }
            Ok(())
        }
    }
}
