//! CSV and JSON artifacts. Every file is written to a temporary sibling and
//! renamed into place.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use semiflow::{BoundaryFunction, Element, Trajectory};

pub const TRAJECTORY_HEADER: &str = "# semiflow trajectory v1";
pub const BOUNDARY_HEADER: &str = "# semiflow boundary v1";
pub const STATES_HEADER: &str = "# semiflow states v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum DumpStates {
    #[default]
    None,
    Final,
    All,
}

pub fn atomic_write(path: &Path, contents: &[u8]) -> io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })
}

/// `time,h_norm,energy,step_residual,prox_iterations`; the first row is the
/// initial state with zero residual and iterations.
pub fn trajectory_csv<S: Element>(tr: &Trajectory<S>) -> String {
    let mut out = format!("{TRAJECTORY_HEADER}\ntime,h_norm,energy,step_residual,prox_iterations\n");
    for (n, u) in tr.states.iter().enumerate() {
        let norm = semiflow::space::norm(u);
        let (residual, iterations) = match n {
            0 => (0.0, 0),
            _ => (tr.diagnostics[n - 1].residual, tr.diagnostics[n - 1].iterations),
        };
        let _ = writeln!(out, "{},{},{},{},{}", tr.mesh.t(n), norm, tr.energies[n], residual, iterations);
    }
    out
}

/// `node,time,value` with grid node indices of the boundary nodes.
pub fn boundary_csv(tr: &Trajectory<BoundaryFunction>) -> String {
    let mut out = format!("{BOUNDARY_HEADER}\nnode,time,value\n");
    for (n, u) in tr.states.iter().enumerate() {
        let t = tr.mesh.t(n);
        for (node, v) in u.space().nodes().iter().zip(u.values()) {
            let _ = writeln!(out, "{node},{t},{v}");
        }
    }
    out
}

/// `step,time,node,x,y,value`; `node` maps local indices to grid nodes.
pub fn states_csv<S: Element>(tr: &Trajectory<S>, dump: DumpStates, node: impl Fn(usize) -> usize) -> Option<String> {
    let steps: Vec<usize> = match dump {
        DumpStates::None => return None,
        DumpStates::Final => vec![tr.states.len() - 1],
        DumpStates::All => (0..tr.states.len()).collect(),
    };
    let mut out = format!("{STATES_HEADER}\nstep,time,node,x,y,value\n");
    for n in steps {
        let u = &tr.states[n];
        let t = tr.mesh.t(n);
        for (i, v) in u.values().iter().enumerate() {
            let p = u.point(i);
            let _ = writeln!(out, "{n},{t},{},{},{},{v}", node(i), p[0], p[1]);
        }
    }
    Some(out)
}

pub fn json<T: serde::Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("reports serialize");
    bytes.push(b'\n');
    bytes
}

/// Collects files for one scenario directory and writes them atomically.
pub struct Artifacts {
    dir: PathBuf,
    pub written: Vec<PathBuf>,
}

impl Artifacts {
    pub fn new(dir: PathBuf) -> Self {
        Artifacts { dir, written: Vec::new() }
    }

    pub fn write(&mut self, name: &str, contents: &[u8]) -> io::Result<()> {
        let path = self.dir.join(name);
        atomic_write(&path, contents)?;
        self.written.push(path);
        Ok(())
    }
}
