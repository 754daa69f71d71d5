//! Runs every scenario of a suite directory and compares the outcome with
//! the scenario's `expect` field.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::runner::{run_scenario, Outcome, RunOptions};
use crate::scenario::{Expectation, Scenario};
use crate::CliError;

pub fn default_suite() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

pub fn suite_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries =
        std::fs::read_dir(dir).map_err(|e| CliError::Config(format!("cannot read suite {}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json") && p.is_file())
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Config(format!("suite {} contains no scenarios", dir.display())));
    }
    Ok(files)
}

#[derive(Debug)]
pub struct SuiteRow {
    pub file: PathBuf,
    pub name: String,
    pub expect: Expectation,
    pub result: Result<Outcome, CliError>,
}

impl SuiteRow {
    /// A `fail` expectation is met by a failing estimate, not by an error.
    pub fn met(&self) -> bool {
        match (&self.result, self.expect) {
            (Ok(o), Expectation::Pass) => o.passed(),
            (Ok(o), Expectation::Fail) => !o.passed(),
            (Err(_), _) => false,
        }
    }
}

/// Loads every scenario first; any malformed document aborts the suite.
pub fn run_suite(dir: &Path, options: &RunOptions) -> Result<Vec<SuiteRow>, CliError> {
    let files = suite_files(dir)?;
    let scenarios = files
        .iter()
        .map(|f| Scenario::load(f))
        .collect::<Result<Vec<_>, _>>()?;
    let rows = std::thread::scope(|scope| {
        let handles: Vec<_> = files
            .iter()
            .zip(&scenarios)
            .map(|(file, s)| {
                scope.spawn(move || SuiteRow {
                    file: file.clone(),
                    name: s.name.clone(),
                    expect: s.expect,
                    result: run_scenario(s, options),
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("scenario thread panicked")).collect()
    });
    Ok(rows)
}

pub fn summary(rows: &[SuiteRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<24} {:<10} {:<7} {:<7} {:<6} worst", "scenario", "kind", "expect", "result", "met");
    for row in rows {
        let (kind, result, worst) = match &row.result {
            Ok(o) => {
                let worst = o
                    .report
                    .entries
                    .iter()
                    .max_by(|a, b| (a.ratio / a.slack).total_cmp(&(b.ratio / b.slack)))
                    .map(|e| format!("{} {:.3e}/{}", e.name, e.ratio, e.slack))
                    .unwrap_or_default();
                (o.kind.as_str(), if o.passed() { "pass" } else { "fail" }, worst)
            }
            Err(e) => ("-", "error", e.to_string()),
        };
        let expect = match row.expect {
            Expectation::Pass => "pass",
            Expectation::Fail => "fail",
        };
        let met = if row.met() { "yes" } else { "NO" };
        let _ = writeln!(out, "{:<24} {kind:<10} {expect:<7} {result:<7} {met:<6} {worst}", row.name);
    }
    let met = rows.iter().filter(|r| r.met()).count();
    let _ = writeln!(out, "{met}/{} scenarios met their expectation", rows.len());
    out
}

pub fn exit_code(rows: &[SuiteRow]) -> i32 {
    if rows.iter().all(SuiteRow::met) {
        0
    } else {
        1
    }
}
