//! Line-delimited JSON corpus loading.

use std::fs;
use std::io::{BufRead, Write};
use std::path::Path;

use sha2::{Digest, Sha256};
use slicelens_core::corpus::StoreOptions;
use slicelens_core::{DatasetStore, DocumentRecord};

use crate::error::{io_err, Error, Result};

/// One record per non-blank line. Errors name the 1-based line number.
pub fn parse_records<R: BufRead>(reader: R) -> Result<Vec<DocumentRecord>> {
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// A loaded corpus file and the SHA-256 of its bytes.
#[derive(Debug, Clone)]
pub struct LoadedCorpus {
    pub store: DatasetStore,
    pub sha256: String,
}

pub fn load_dataset(path: &Path) -> Result<DatasetStore> {
    Ok(load_dataset_with(path, &StoreOptions::default())?.store)
}

pub fn load_dataset_with(path: &Path, options: &StoreOptions) -> Result<LoadedCorpus> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let records = parse_records(bytes.as_slice())?;
    let store = DatasetStore::build_with(records, options)?;
    Ok(LoadedCorpus {
        store,
        sha256: sha256_hex(&bytes),
    })
}

/// Writes test records, then train records, one JSON object per line.
pub fn write_records<W: Write>(mut out: W, store: &DatasetStore) -> std::io::Result<()> {
    for r in store.test.iter().chain(&store.train) {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}
