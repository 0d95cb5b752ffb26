use std::path::PathBuf;

use aidr_core::malwarelab::Report;
use anyhow::{Context, Result};

use crate::args::ReportCmd;

pub fn run(cmd: &ReportCmd) -> Result<()> {
    match cmd {
        ReportCmd::Show { id, reports, json } => {
            let direct = PathBuf::from(id);
            let path = if direct.is_file() {
                direct
            } else {
                reports.join(format!("{id}.json"))
            };
            let text = std::fs::read_to_string(&path).with_context(|| format!("no report at {}", path.display()))?;
            let report: Report =
                serde_json::from_str(&text).with_context(|| format!("{} is not a scan report", path.display()))?;
            if *json {
                println!("{}", report.to_json());
            } else {
                print!("{}", report.to_text());
            }
        }
    }
    Ok(())
}
