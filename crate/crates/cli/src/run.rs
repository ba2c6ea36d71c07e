//! Run bookkeeping: configuration layering, snapshots, artifacts and timings.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use lfrb::io;
use lfrb::{Error, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const SNAPSHOT: &str = "run.toml";
pub const TIMING: &str = "timing.json";

/// Options shared by every subcommand.
#[derive(Debug, Clone, clap::Args)]
pub struct Common {
    /// Seed for every random stream of the command.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// TOML parameter file, or a `run.toml` snapshot of an earlier run.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Snapshot<P> {
    command: String,
    seed: u64,
    timing: String,
    artifacts: Vec<String>,
    params: P,
}

/// Loads `defaults ← config file`, accepting either a bare parameter table
/// or a snapshot whose `[params]` table is used.
pub fn load_params<P>(command: &str, config: Option<&Path>) -> Result<(P, Option<u64>)>
where
    P: DeserializeOwned + Default,
{
    let Some(path) = config else {
        return Ok((P::default(), None));
    };
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut table: toml::Table =
        toml::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
    let mut seed = None;
    if let Some(cmd) = table.get("command").and_then(|v| v.as_str()) {
        if cmd != command {
            return Err(Error::config(format!(
                "{} is a snapshot of '{cmd}', not '{command}'",
                path.display()
            )));
        }
        seed = table.get("seed").and_then(|v| v.as_integer()).map(|s| s as u64);
        table = match table.remove("params") {
            Some(toml::Value::Table(t)) => t,
            _ => return Err(Error::config(format!("{}: snapshot lacks [params]", path.display()))),
        };
    }
    let params = P::deserialize(toml::Value::Table(table))
        .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
    Ok((params, seed))
}

pub struct Run {
    pub command: &'static str,
    pub out: PathBuf,
    pub seed: u64,
    pub jobs: usize,
    artifacts: Vec<String>,
    phases: Vec<(String, f64)>,
    extra: BTreeMap<String, serde_json::Value>,
    started: Instant,
}

impl Run {
    pub fn new(command: &'static str, common: &Common, seed: u64) -> Result<Self> {
        io::create_dir(&common.out)?;
        Ok(Run {
            command,
            out: common.out.clone(),
            seed,
            jobs: common.jobs,
            artifacts: Vec::new(),
            phases: Vec::new(),
            extra: BTreeMap::new(),
            started: Instant::now(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// Records a file written under the output directory.
    pub fn artifact(&mut self, path: &Path) {
        let rel = path.strip_prefix(&self.out).unwrap_or(path);
        self.artifacts.push(rel.to_string_lossy().into_owned());
    }

    pub fn artifacts(&mut self, paths: &[PathBuf]) {
        for p in paths {
            self.artifact(p);
        }
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<()> {
        let p = self.path(name);
        io::write_text(&p, text)?;
        self.artifact(&p);
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value)
            .map_err(|e| Error::format(self.path(name), e.to_string()))?;
        self.write_text(name, &(text + "\n"))
    }

    pub fn phase<T>(&mut self, name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let t = Instant::now();
        let r = f();
        self.phases.push((name.to_string(), t.elapsed().as_secs_f64()));
        r
    }

    /// Extra entries for the timing report.
    pub fn timing_value(&mut self, key: &str, value: serde_json::Value) {
        self.extra.insert(key.to_string(), value);
    }

    /// Writes the timing report and the re-executable snapshot.
    pub fn finish<P: Serialize>(mut self, params: &P) -> Result<()> {
        let mut phases = serde_json::Map::new();
        for (k, v) in &self.phases {
            phases.insert(k.clone(), serde_json::json!(v));
        }
        let timing = serde_json::json!({
            "command": self.command,
            "jobs": self.jobs,
            "total_seconds": self.started.elapsed().as_secs_f64(),
            "phases": phases,
            "report": self.extra,
        });
        let tpath = self.path(TIMING);
        let text = serde_json::to_string_pretty(&timing).expect("timing report serializes");
        io::write_text(&tpath, &(text + "\n"))?;
        self.artifacts.sort();
        self.artifacts.dedup();
        let spath = self.path(SNAPSHOT);
        let snap = Snapshot {
            command: self.command.to_string(),
            seed: self.seed,
            timing: TIMING.into(),
            artifacts: self.artifacts,
            params,
        };
        io::write_toml(&spath, &snap)
    }
}
