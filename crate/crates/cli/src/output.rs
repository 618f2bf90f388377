//! Where command results go: stdout by default, or files plus a manifest under `--out`.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub parameters: Value,
    pub seed: u64,
    pub code_version: String,
    pub started_at: String,
    pub outputs: Vec<String>,
}

pub struct Output {
    dir: Option<PathBuf>,
    json: bool,
    svg: bool,
    manifest: RunManifest,
}

impl Output {
    pub fn new(
        dir: Option<PathBuf>,
        json: bool,
        svg: bool,
        command: &str,
        parameters: Value,
        seed: u64,
    ) -> Result<Self> {
        if let Some(d) = &dir {
            fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
        }
        Ok(Output {
            dir,
            json,
            svg,
            manifest: RunManifest {
                command: command.to_string(),
                parameters,
                seed,
                code_version: env!("CARGO_PKG_VERSION").to_string(),
                started_at: chrono::Utc::now().to_rfc3339(),
                outputs: Vec::new(),
            },
        })
    }

    pub fn wants_svg(&self) -> bool {
        self.svg
    }

    fn write_file(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let dir = self.dir.clone().unwrap_or_else(|| PathBuf::from("."));
        let path = dir.join(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.manifest.outputs.push(name.to_string());
        Ok(())
    }

    /// Writes `rows` as `<name>.csv` (or `.json` with `--json`), or prints them
    /// when no output directory was given.
    pub fn table<T: Serialize>(&mut self, name: &str, header: &[&str], rows: &[T]) -> Result<()> {
        let (ext, bytes) = if self.json {
            ("json", serde_json::to_vec_pretty(rows)?)
        } else {
            ("csv", csv_bytes(header, rows)?)
        };
        match &self.dir {
            Some(_) => self.write_file(&format!("{name}.{ext}"), &bytes),
            None => {
                let mut stdout = std::io::stdout().lock();
                stdout.write_all(&bytes)?;
                if self.json {
                    writeln!(stdout)?;
                }
                Ok(())
            }
        }
    }

    /// Writes a JSON document to the output directory; ignored without one.
    pub fn document<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        if self.dir.is_some() {
            let bytes = serde_json::to_vec_pretty(value)?;
            self.write_file(&format!("{name}.json"), &bytes)?;
        }
        Ok(())
    }

    pub fn plot(&mut self, name: &str, svg: String) -> Result<()> {
        if self.svg {
            self.write_file(&format!("{name}.svg"), svg.as_bytes())?;
        }
        Ok(())
    }

    /// Writes `manifest.json` when files were produced.
    pub fn finish(self) -> Result<()> {
        if let Some(dir) = &self.dir {
            let path = dir.join("manifest.json");
            fs::write(&path, serde_json::to_vec_pretty(&self.manifest)?)
                .with_context(|| format!("writing {}", path.display()))?;
        }
        Ok(())
    }
}

pub fn csv_bytes<T: Serialize>(header: &[&str], rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.into_inner().context("flushing CSV")
}
