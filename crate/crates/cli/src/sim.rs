use std::path::Path;
use std::process::ExitCode;

use ctrace_core::sim::{run_scenario, Scenario};

use crate::{read_file, write_file, CmdResult};

pub fn run(scenario: &Path, trace: Option<&Path>) -> CmdResult {
    let text = read_file(scenario)?;
    let scenario = Scenario::parse(&text).map_err(|e| crate::fail(format!("{}: {e}", scenario.display())))?;
    let run = run_scenario(scenario)?;
    if let Some(path) = trace {
        write_file(path, &run.trace)?;
    }
    print!("{}", run.metrics.to_text());
    Ok(ExitCode::SUCCESS)
}
