//! Files written by a run: 17-significant-digit numbers, CSV with a header
//! row, and a manifest carrying a digest of every output.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::ser::{Formatter, Serializer};
use sha2::{Digest, Sha256};

/// Shortest-safe round-trip form: 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

/// JSON formatter that writes every float with 17 significant digits.
struct Precise;

impl Formatter for Precise {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(fmt_f64(value).as_bytes())
    }
}

pub fn to_json<T: Serialize>(value: &T) -> io::Result<Vec<u8>> {
    let mut out = Vec::new();
    let mut ser = Serializer::with_formatter(&mut out, Precise);
    value.serialize(&mut ser).map_err(io::Error::other)?;
    out.push(b'\n');
    Ok(out)
}

pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(x) => fmt_f64(*x),
            Cell::Int(k) => k.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

pub fn csv(header: &[&str], rows: impl IntoIterator<Item = Vec<Cell>>) -> Vec<u8> {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let line: Vec<String> = row.iter().map(Cell::render).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out.into_bytes()
}

#[derive(Debug, Serialize)]
pub struct OutputRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool_version: &'static str,
    pub timestamp: String,
    pub command: String,
    pub config: serde_json::Value,
    pub master_seed: u64,
    pub outputs: Vec<OutputRecord>,
}

/// Tracks what a run has written so a failed run can be rolled back.
pub struct OutputDir {
    root: PathBuf,
    created_root: bool,
    written: Vec<(PathBuf, String)>,
}

impl OutputDir {
    pub fn open(root: &Path) -> io::Result<Self> {
        let created_root = !root.exists();
        fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            created_root,
            written: vec![],
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> io::Result<()> {
        let path = self.root.join(name);
        // record first so a half-written file is still rolled back
        self.written.push((path.clone(), String::new()));
        fs::write(&path, bytes)?;
        self.written.last_mut().unwrap().1 = hex::encode(Sha256::digest(bytes));
        Ok(())
    }

    pub fn finish(&mut self, command: String, config: serde_json::Value, master_seed: u64) -> io::Result<()> {
        let manifest = RunManifest {
            tool_version: env!("CARGO_PKG_VERSION"),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            command,
            config,
            master_seed,
            outputs: self
                .written
                .iter()
                .map(|(p, digest)| OutputRecord {
                    path: p.file_name().unwrap().to_string_lossy().into_owned(),
                    sha256: digest.clone(),
                })
                .collect(),
        };
        let bytes = to_json(&manifest)?;
        self.write("manifest.json", &bytes)
    }

    pub fn rollback(self) {
        for (path, _) in &self.written {
            let _ = fs::remove_file(path);
        }
        if self.created_root {
            let _ = fs::remove_dir(&self.root);
        }
    }
}
