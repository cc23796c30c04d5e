//! Report bundles: every file is staged, then published together with a
//! `manifest.json`. A bundle that is dropped before `finish` leaves nothing
//! behind.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::CliError;

pub const TOOL: &str = "idgap";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
const STAGING: &str = ".idgap-staging";
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InputDigest {
    pub kind: String,
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

pub struct Bundle {
    out: PathBuf,
    staging: PathBuf,
    created_out: bool,
    files: BTreeSet<String>,
    config: Value,
    config_digest: String,
    finished: bool,
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(anyhow::anyhow!("{}: {e}", path.display()))
}

pub fn to_pretty(value: &impl Serialize) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("report serializes");
    bytes.push(b'\n');
    bytes
}

impl Bundle {
    pub fn create(out: &Path, config: Value, config_digest: String) -> Result<Self, CliError> {
        let created_out = !out.exists();
        fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
        let staging = out.join(STAGING);
        if staging.exists() {
            fs::remove_dir_all(&staging).map_err(|e| io_err(&staging, e))?;
        }
        fs::create_dir(&staging).map_err(|e| io_err(&staging, e))?;
        Ok(Self { out: out.to_path_buf(), staging, created_out, files: BTreeSet::new(), config, config_digest, finished: false })
    }

    pub fn config_digest(&self) -> &str {
        &self.config_digest
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.staging.join(name);
        fs::write(&path, bytes).map_err(|e| io_err(&path, e))?;
        self.files.insert(name.to_string());
        Ok(())
    }

    /// Staged file handle for large streamed outputs.
    pub fn create_file(&mut self, name: &str) -> Result<fs::File, CliError> {
        let path = self.staging.join(name);
        let f = fs::File::create(&path).map_err(|e| io_err(&path, e))?;
        self.files.insert(name.to_string());
        Ok(f)
    }

    /// JSON report with the config echo alongside the payload.
    pub fn write_json(&mut self, name: &str, report: &impl Serialize) -> Result<(), CliError> {
        let doc = json!({
            "config": self.config,
            "config_sha256": self.config_digest,
            "report": report,
        });
        self.write_bytes(name, &to_pretty(&doc))
    }

    /// CSV with a leading `# config_sha256=` comment line.
    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), CliError> {
        let mut buf = format!("# config_sha256={}\n", self.config_digest).into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            let fail = |e: csv::Error| CliError::Data(anyhow::anyhow!("writing {name}: {e}"));
            w.write_record(header).map_err(fail)?;
            for row in rows {
                w.write_record(&row).map_err(fail)?;
            }
            w.flush().map_err(|e| CliError::Data(anyhow::anyhow!("writing {name}: {e}")))?;
        }
        self.write_bytes(name, &buf)
    }

    /// Plain text with the same leading comment line as CSVs.
    pub fn write_text(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        let mut buf = format!("# config_sha256={}\n", self.config_digest).into_bytes();
        buf.write_all(text.as_bytes()).expect("writing to memory");
        self.write_bytes(name, &buf)
    }

    /// Write the manifest and move every staged file into place.
    pub fn finish(mut self, command: &str, inputs: &[InputDigest]) -> Result<Vec<PathBuf>, CliError> {
        self.files.insert(MANIFEST.to_string());
        let listed: Vec<&String> = self.files.iter().collect();
        let manifest = json!({
            "tool": TOOL,
            "version": VERSION,
            "command": command,
            "config": self.config,
            "config_sha256": self.config_digest,
            "inputs": inputs,
            "files": listed,
        });
        let bytes = to_pretty(&manifest);
        self.write_bytes(MANIFEST, &bytes)?;
        let mut published = Vec::new();
        for name in &self.files {
            let from = self.staging.join(name);
            let to = self.out.join(name);
            fs::rename(&from, &to).map_err(|e| io_err(&to, e))?;
            published.push(to);
        }
        fs::remove_dir(&self.staging).map_err(|e| io_err(&self.staging, e))?;
        self.finished = true;
        Ok(published)
    }
}

impl Drop for Bundle {
    fn drop(&mut self) {
        if self.finished {
            return;
        }
        let _ = fs::remove_dir_all(&self.staging);
        if self.created_out {
            let _ = fs::remove_dir(&self.out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dropped_bundle_leaves_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("b");
        {
            let mut b = Bundle::create(&out, json!({}), "00".into()).unwrap();
            b.write_text("x.txt", "hello").unwrap();
        }
        assert!(!out.exists());
    }

    #[test]
    fn finished_bundle_lists_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut b = Bundle::create(dir.path(), json!({"k": 1}), "ab".into()).unwrap();
        b.write_csv("t.csv", &["a", "b"], vec![vec!["1".into(), "2".into()]]).unwrap();
        b.write_json("r.json", &json!({"n": 3})).unwrap();
        b.finish("test", &[]).unwrap();
        let csv = fs::read_to_string(dir.path().join("t.csv")).unwrap();
        assert_eq!(csv, "# config_sha256=ab\na,b\n1,2\n");
        let m: Value = serde_json::from_slice(&fs::read(dir.path().join(MANIFEST)).unwrap()).unwrap();
        assert_eq!(m["files"], json!(["manifest.json", "r.json", "t.csv"]));
        assert!(!dir.path().join(STAGING).exists());
    }
}
