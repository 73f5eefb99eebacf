//! CSV and JSON writers stamped with the library version and config hash.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use prestrain::{Error, Result};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

pub fn config_hash(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Output directory plus the stamp written into every file.
pub struct Sink {
    dir: PathBuf,
    hash: String,
    written: Vec<PathBuf>,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Config(format!("cannot write {}: {e}", path.display()))
}

impl Sink {
    pub fn create(dir: &Path, hash: String) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        Ok(Self { dir: dir.to_path_buf(), hash, written: vec![] })
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    /// Writes a CSV table whose first line is a `#` comment with the stamp.
    pub fn csv(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
        let path = self.dir.join(name);
        let mut buf = format!("# prestrain {} config_sha256={}\n", prestrain::VERSION, self.hash).into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(header).map_err(|e| io_err(&path, e))?;
            for r in rows {
                w.write_record(&r).map_err(|e| io_err(&path, e))?;
            }
            w.flush().map_err(|e| io_err(&path, e))?;
        }
        fs::write(&path, buf).map_err(|e| io_err(&path, e))?;
        self.written.push(path);
        Ok(())
    }

    /// Writes `body` as pretty JSON with `version` and `config_sha256` added
    /// at the top level.
    pub fn json(&mut self, name: &str, body: &impl Serialize) -> Result<()> {
        let path = self.dir.join(name);
        let mut value = serde_json::to_value(body).map_err(|e| io_err(&path, e))?;
        if let Value::Object(map) = &mut value {
            map.insert("version".into(), Value::from(prestrain::VERSION));
            map.insert("config_sha256".into(), Value::from(self.hash.clone()));
        }
        let mut f = fs::File::create(&path).map_err(|e| io_err(&path, e))?;
        serde_json::to_writer_pretty(&mut f, &value).map_err(|e| io_err(&path, e))?;
        writeln!(f).map_err(|e| io_err(&path, e))?;
        self.written.push(path);
        Ok(())
    }
}

/// Shortest round-trip formatting.
pub fn num(x: f64) -> String {
    x.to_string()
}
