//! Output directory handling. Every artifact starts with the same metadata
//! lines, and the manifest is written last so its presence marks a complete
//! run.

use crate::config::Settings;
use crate::error::{CliError, Result};
use ssip_core::SsipError;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

pub const MANIFEST: &str = "manifest.toml";

pub struct Artifacts {
    dir: PathBuf,
    meta: Vec<(String, String)>,
    written: Vec<String>,
}

impl Artifacts {
    pub fn create(dir: &Path, meta: Vec<(String, String)>) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Output {
            path: dir.to_owned(),
            source,
        })?;
        // A stale manifest would otherwise vouch for a half-written run.
        let stale = dir.join(MANIFEST);
        if stale.exists() {
            std::fs::remove_file(&stale).map_err(|source| CliError::Output { path: stale, source })?;
        }
        Ok(Self {
            dir: dir.to_owned(),
            meta,
            written: Vec::new(),
        })
    }

    fn open(&self, name: &str) -> Result<(PathBuf, BufWriter<File>)> {
        let path = self.dir.join(name);
        let file = File::create(&path).map_err(|source| CliError::Output {
            path: path.clone(),
            source,
        })?;
        Ok((path, BufWriter::new(file)))
    }

    fn finish(&mut self, name: &str, path: PathBuf, mut out: BufWriter<File>) -> Result<()> {
        out.flush().map_err(|source| CliError::Output { path, source })?;
        self.written.push(name.to_owned());
        log::info!("wrote {name}");
        Ok(())
    }

    /// Writes one artifact through a core writer that takes the metadata.
    pub fn write(
        &mut self,
        name: &str,
        emit: impl FnOnce(&mut BufWriter<File>, &[(String, String)]) -> ssip_core::Result<()>,
    ) -> Result<()> {
        let (path, mut out) = self.open(name)?;
        emit(&mut out, &self.meta).map_err(|e| match e {
            SsipError::Io(source) => CliError::Output {
                path: path.clone(),
                source,
            },
            other => CliError::Core(other),
        })?;
        self.finish(name, path, out)
    }

    /// Writes a plain table with the metadata header.
    pub fn write_table(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let (path, mut out) = self.open(name)?;
        let io_err = |source: std::io::Error| CliError::Output {
            path: path.clone(),
            source,
        };
        for (k, v) in &self.meta {
            writeln!(out, "# {k}={v}").map_err(io_err)?;
        }
        {
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(&mut out);
            let csv_err = |e: csv::Error| io_err(e.into());
            w.write_record(header).map_err(csv_err)?;
            for row in rows {
                w.write_record(row).map_err(csv_err)?;
            }
            w.flush().map_err(io_err)?;
        }
        self.finish(name, path, out)
    }

    /// Writes the resolved settings plus a `[manifest]` record. Returns the
    /// names of all artifacts.
    pub fn write_manifest(mut self, settings: &Settings, mut record: toml::Table) -> Result<Vec<String>> {
        let mut root = toml::Table::try_from(settings).expect("settings convert to a TOML table");
        record.insert(
            "artifacts".into(),
            toml::Value::Array(self.written.iter().cloned().map(toml::Value::String).collect()),
        );
        root.insert("manifest".into(), toml::Value::Table(record));
        let text = toml::to_string(&root).expect("manifest serializes");
        let (path, mut out) = self.open(MANIFEST)?;
        out.write_all(text.as_bytes())
            .map_err(|source| CliError::Output { path: path.clone(), source })?;
        self.finish(MANIFEST, path, out)?;
        Ok(self.written)
    }
}

/// Float formatting matching the core CSV writers.
pub fn fmt(v: f64) -> String {
    v.to_string()
}

/// What a successful command produced.
#[derive(Debug, serde::Serialize)]
pub struct Report {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub artifacts: Vec<String>,
    pub notes: Vec<String>,
}
