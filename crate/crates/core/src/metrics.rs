//! Line-oriented JSON metrics output.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Writes one JSON object per line to an optional file and mirrors each line
/// to the log at info level.
#[derive(Default)]
pub struct MetricsSink {
    out: Option<BufWriter<File>>,
    pub lines: usize,
}

impl MetricsSink {
    pub fn discard() -> Self {
        Self::default()
    }

    pub fn to_file(path: &Path) -> Result<Self> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            out: Some(BufWriter::new(f)),
            lines: 0,
        })
    }

    pub fn emit(&mut self, value: serde_json::Value) {
        let line = value.to_string();
        log::info!("{line}");
        if let Some(w) = self.out.as_mut() {
            if let Err(e) = writeln!(w, "{line}") {
                log::warn!("metrics write failed: {e}");
            }
        }
        self.lines += 1;
    }

    pub fn flush(&mut self) {
        if let Some(w) = self.out.as_mut() {
            let _ = w.flush();
        }
    }
}

impl Drop for MetricsSink {
    fn drop(&mut self) {
        self.flush();
    }
}
