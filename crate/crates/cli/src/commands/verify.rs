use std::path::PathBuf;

use gridlift::data::load_dataset;
use gridlift::verify::{reprojection_check, run_suite, CheckResult, Suite};

use crate::config::load_topology;
use crate::failure::{at_path, emit_stdout, CmdResult, Failure};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// gradcheck, oracle, roundtrip or all.
    #[arg(long, default_value = "all")]
    suite: Suite,
    /// Also check that this dataset's 2D joints are projections of its 3D joints.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Skeleton CSV for `--data` (default: bundled 17-joint skeleton).
    #[arg(long)]
    topology: Option<PathBuf>,
}

pub fn run(a: Args) -> CmdResult {
    let mut report = run_suite(a.suite);
    if let Some(path) = &a.data {
        let topology = load_topology(a.topology.as_deref())?;
        let dataset = at_path(path, load_dataset(path, &topology))?;
        report.checks.push(match reprojection_check(&dataset) {
            Ok(c) => c,
            Err(e) => CheckResult::boolean("data.reprojection_max_px", false, e.to_string()),
        });
    }
    let mut table: String = report.checks.iter().map(|c| format!("{c}\n")).collect();
    let passed = report.checks.iter().filter(|c| c.passed).count();
    table.push_str(&format!("{passed}/{} checks passed\n", report.checks.len()));
    emit_stdout(&table)?;
    match report.first_failure() {
        None => Ok(()),
        Some(c) => Err(Failure::Verification(format!("check failed: {}", c.name))),
    }
}
