use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use flate2::read::MultiGzDecoder;
use serde::Serialize;

use super::record::DatasetRecord;
use crate::error::{Error, Result};

/// Summary of a file load: what was read and what was rejected.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct LoadReport {
    pub path: PathBuf,
    pub rows: usize,
    pub loaded: usize,
    pub skipped: usize,
    /// `(line number, reason)` for the first rejected rows.
    pub rejected: Vec<(usize, String)>,
}

const MAX_REJECTED: usize = 20;

impl LoadReport {
    pub(crate) fn reject(&mut self, line: usize, reason: String) {
        self.skipped += 1;
        log::warn!("{}:{line}: skipped: {reason}", self.path.display());
        if self.rejected.len() < MAX_REJECTED {
            self.rejected.push((line, reason));
        }
    }
}

/// Open a text file, transparently decompressing gzip content.
pub fn open_text(path: &Path) -> Result<Box<dyn BufRead>> {
    let mut f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut magic = [0u8; 2];
    let n = f.read(&mut magic).map_err(|e| Error::io(path, e))?;
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    if n == 2 && magic == [0x1f, 0x8b] {
        Ok(Box::new(BufReader::new(MultiGzDecoder::new(f))))
    } else {
        Ok(Box::new(BufReader::new(f)))
    }
}

/// Read a `domain \t utterance \t semantic_parse` file with a header row.
pub fn load_topv2_tsv(path: &Path) -> Result<(Vec<DatasetRecord>, LoadReport)> {
    let reader = open_text(path)?;
    let mut lines = reader.lines().enumerate();
    let mut report = LoadReport {
        path: path.to_path_buf(),
        ..Default::default()
    };
    let header = match lines.next() {
        Some((_, l)) => l.map_err(|e| Error::io(path, e))?,
        None => return Ok((Vec::new(), report)),
    };
    let cols: Vec<&str> = header.trim_end_matches('\r').split('\t').collect();
    let find = |name: &str| {
        cols.iter()
            .position(|c| c.trim() == name)
            .ok_or_else(|| Error::InvalidData(format!("{}: header lacks column {name:?}", path.display())))
    };
    let (di, ui, pi) = (find("domain")?, find("utterance")?, find("semantic_parse")?);
    let mut records = Vec::new();
    for (i, line) in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        report.rows += 1;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != cols.len() {
            report.reject(i + 1, format!("expected {} columns, found {}", cols.len(), fields.len()));
            continue;
        }
        match DatasetRecord::from_annotation(fields[di].trim(), fields[ui], fields[pi]) {
            Ok(r) => records.push(r),
            Err(e) => report.reject(i + 1, e.to_string()),
        }
    }
    report.loaded = records.len();
    Ok((records, report))
}
