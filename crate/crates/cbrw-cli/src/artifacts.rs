//! Deterministic artifact emission.
//!
//! Every output file is written atomically (temp file in the target
//! directory, then rename) and fingerprinted with SHA-256.  The manifest —
//! written last — records the tool version, the hash of the fully resolved
//! configuration, the master seed, wall-clock bounds and the checksum of
//! every artifact.  Reruns with the same configuration and seed must
//! reproduce every artifact byte for byte; only the manifest's timestamps
//! may differ.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// One CSV cell.  Floats are rendered with the shortest representation that
/// round-trips through `f64`, so full double precision survives the file.
pub enum Cell<'a> {
    Num(f64),
    Int(i64),
    Text(&'a str),
}

/// Minimal RFC-style CSV builder: mandatory header, comma separation,
/// quoting only where the content demands it.
pub struct Csv {
    out: String,
    width: usize,
}

impl Csv {
    pub fn new(header: &[&str]) -> Csv {
        let mut out = String::new();
        push_row(&mut out, header.iter().map(|h| quote(h)));
        Csv {
            out,
            width: header.len(),
        }
    }

    pub fn row(&mut self, cells: &[Cell<'_>]) {
        assert_eq!(cells.len(), self.width, "ragged CSV row");
        push_row(
            &mut self.out,
            cells.iter().map(|c| match c {
                Cell::Num(v) => format!("{:?}", v),
                Cell::Int(v) => format!("{}", v),
                Cell::Text(s) => quote(s),
            }),
        );
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.out.into_bytes()
    }
}

fn push_row(out: &mut String, fields: impl Iterator<Item = String>) {
    let mut first = true;
    for f in fields {
        if !first {
            out.push(',');
        }
        out.push_str(&f);
        first = false;
    }
    out.push('\n');
}

fn quote(field: &str) -> String {
    if field.contains(',') || field.contains('"') || field.contains('\n') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

#[derive(Serialize)]
struct RunManifest<'a> {
    tool: String,
    config_hash: String,
    seed: u64,
    started_unix_ms: u128,
    finished_unix_ms: u128,
    outputs: &'a BTreeMap<String, String>,
}

/// Writes artifacts into one output directory and finishes with a manifest.
pub struct Emitter {
    dir: PathBuf,
    started_unix_ms: u128,
    outputs: BTreeMap<String, String>,
}

fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .expect("clock before epoch")
        .as_millis()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    format!("{:x}", h.finalize())
}

impl Emitter {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Emitter> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)
            .with_context(|| format!("cannot create output directory {}", dir.display()))?;
        Ok(Emitter {
            dir,
            started_unix_ms: now_ms(),
            outputs: BTreeMap::new(),
        })
    }

    fn write_atomic(&self, name: &str, bytes: &[u8]) -> Result<()> {
        let tmp = self.dir.join(format!(".{}.tmp", name));
        let target = self.dir.join(name);
        std::fs::write(&tmp, bytes)
            .with_context(|| format!("cannot write {}", tmp.display()))?;
        std::fs::rename(&tmp, &target)
            .with_context(|| format!("cannot move {} into place", target.display()))?;
        Ok(())
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        self.write_atomic(name, bytes)?;
        self.outputs.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Writes `manifest.json` and returns the artifact checksums.
    pub fn finish(self, config_hash: &str, seed: u64) -> Result<BTreeMap<String, String>> {
        let manifest = RunManifest {
            tool: format!("cbrw {}", env!("CARGO_PKG_VERSION")),
            config_hash: config_hash.to_string(),
            seed,
            started_unix_ms: self.started_unix_ms,
            finished_unix_ms: now_ms(),
            outputs: &self.outputs,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        self.write_atomic("manifest.json", text.as_bytes())?;
        Ok(self.outputs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_quotes_only_what_needs_quoting_and_roundtrips_floats() {
        let mut csv = Csv::new(&["site", "value"]);
        csv.row(&[Cell::Text("1,0"), Cell::Num(0.1 + 0.2)]);
        csv.row(&[Cell::Text("plain"), Cell::Num(1e-300)]);
        let text = String::from_utf8(csv.into_bytes()).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "site,value");
        let row = lines.next().unwrap();
        assert!(row.starts_with("\"1,0\","));
        let float: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
        assert_eq!(float, 0.1 + 0.2);
        assert_eq!(lines.next().unwrap(), "plain,1e-300");
    }

    #[test]
    fn emitter_writes_manifest_with_checksums() {
        let dir = tempfile::tempdir().unwrap();
        let mut em = Emitter::new(dir.path().join("run")).unwrap();
        em.write("a.csv", b"t,v\n1,2\n").unwrap();
        let sums = em.finish("deadbeef", 42).unwrap();
        assert_eq!(sums.len(), 1);
        assert_eq!(sums["a.csv"], sha256_hex(b"t,v\n1,2\n"));
        let manifest =
            std::fs::read_to_string(dir.path().join("run/manifest.json")).unwrap();
        assert!(manifest.contains("deadbeef"));
        assert!(manifest.contains(&sums["a.csv"]));
        assert!(!dir.path().join("run/.a.csv.tmp").exists());
    }
}
