//! Artifact writing: every file is rendered in memory first, and a failed
//! write removes whatever was already written.

use std::path::{Path, PathBuf};

use crate::error::CliError;

/// Fixed-width scientific notation with 17 significant digits.
pub fn float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Renders rows as CSV text.
pub fn csv_text(header: &[String], rows: &[Vec<String>]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let to_io = |e: csv::Error| CliError::Io(format!("csv: {e}"));
    w.write_record(header).map_err(to_io)?;
    for r in rows {
        w.write_record(r).map_err(to_io)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::Io(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| CliError::Io(format!("csv: {e}")))
}

#[derive(Debug, Default)]
pub struct Artifacts {
    files: Vec<(PathBuf, String)>,
}

impl Artifacts {
    pub fn add(&mut self, relative: impl Into<PathBuf>, contents: String) {
        self.files.push((relative.into(), contents));
    }

    pub fn paths(&self) -> impl Iterator<Item = &Path> {
        self.files.iter().map(|(p, _)| p.as_path())
    }

    /// Writes every file under `root`; on failure removes the files and
    /// directories this call created.
    pub fn write(&self, root: &Path) -> Result<Vec<PathBuf>, CliError> {
        let mut created_dirs = Vec::new();
        let mut written = Vec::new();
        let result = (|| {
            for (rel, contents) in &self.files {
                let path = root.join(rel);
                if let Some(parent) = path.parent() {
                    create_dirs(parent, &mut created_dirs)?;
                }
                std::fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
                written.push(path);
            }
            Ok(())
        })();
        match result {
            Ok(()) => Ok(written),
            Err(e) => {
                for p in &written {
                    let _ = std::fs::remove_file(p);
                }
                for d in created_dirs.iter().rev() {
                    let _ = std::fs::remove_dir(d);
                }
                Err(e)
            }
        }
    }
}

fn create_dirs(dir: &Path, created: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let mut missing = Vec::new();
    let mut cur = Some(dir);
    while let Some(d) = cur {
        if d.as_os_str().is_empty() || d.exists() {
            break;
        }
        missing.push(d.to_path_buf());
        cur = d.parent();
    }
    for d in missing.into_iter().rev() {
        std::fs::create_dir(&d).map_err(|e| CliError::io(&d, e))?;
        created.push(d);
    }
    Ok(())
}
