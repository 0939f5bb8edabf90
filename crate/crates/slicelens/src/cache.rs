//! On-disk data directory written by `ingest` and read by every other
//! command.
//!
//! ```text
//! <dir>/manifest.json    corpus hash, class set, vocabulary settings
//! <dir>/corpus.jsonl     validated records (attributions already truncated)
//! <dir>/projection.json  2D coordinates, if the corpus has embeddings
//! <dir>/rules.json       last discovery result
//! <dir>/rules.txt        the same rules in the line report format
//! ```
//!
//! Derived files carry the corpus hash they were computed from and are
//! ignored when it no longer matches the manifest.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use slicelens_core::corpus::StoreOptions;
use slicelens_core::projection::Projection2D;
use slicelens_core::{DatasetStore, RuleSet};

use crate::error::{io_err, Error, Result};
use crate::ingest::{self, sha256_hex};
use crate::report;

pub const MANIFEST: &str = "manifest.json";
pub const CORPUS: &str = "corpus.jsonl";
pub const PROJECTION: &str = "projection.json";
pub const RULES: &str = "rules.json";
pub const RULES_REPORT: &str = "rules.txt";

const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    /// SHA-256 of the original input file.
    pub corpus_sha256: String,
    /// SHA-256 of `corpus.jsonl` as written.
    pub cache_sha256: String,
    pub source: String,
    pub n_test: usize,
    pub n_train: usize,
    pub classes: Vec<String>,
    /// Vocabulary document-frequency floor; `None` means the default.
    pub min_df: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct Keyed<T> {
    corpus_sha256: String,
    value: T,
}

#[derive(Debug, Clone)]
pub struct DataDir {
    root: PathBuf,
}

impl DataDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Writes the corpus and manifest, replacing whatever was there and
    /// dropping derived files.
    pub fn write_corpus(&self, store: &DatasetStore, corpus_sha256: &str, source: &str, min_df: Option<usize>) -> Result<Manifest> {
        fs::create_dir_all(&self.root).map_err(io_err(&self.root))?;
        for stale in [PROJECTION, RULES, RULES_REPORT] {
            let p = self.path(stale);
            if p.exists() {
                fs::remove_file(&p).map_err(io_err(&p))?;
            }
        }
        let mut buf = Vec::new();
        ingest::write_records(&mut buf, store).map_err(io_err(self.path(CORPUS)))?;
        let corpus_path = self.path(CORPUS);
        fs::write(&corpus_path, &buf).map_err(io_err(&corpus_path))?;
        let manifest = Manifest {
            format_version: FORMAT_VERSION,
            corpus_sha256: corpus_sha256.into(),
            cache_sha256: sha256_hex(&buf),
            source: source.into(),
            n_test: store.test.len(),
            n_train: store.train.len(),
            classes: store.classes.clone(),
            min_df,
        };
        self.write_json(MANIFEST, &manifest)?;
        Ok(manifest)
    }

    pub fn read_manifest(&self) -> Result<Manifest> {
        let m: Manifest = self.read_json(MANIFEST)?;
        if m.format_version != FORMAT_VERSION {
            return Err(Error::Cache(format!(
                "{}: format version {} is not supported",
                self.path(MANIFEST).display(),
                m.format_version
            )));
        }
        Ok(m)
    }

    /// Rebuilds the store from `corpus.jsonl` after checking it against the
    /// manifest.
    pub fn load_store(&self) -> Result<(Manifest, DatasetStore)> {
        let manifest = self.read_manifest()?;
        let path = self.path(CORPUS);
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        if sha256_hex(&bytes) != manifest.cache_sha256 {
            return Err(Error::Cache(format!(
                "{} does not match its manifest; run ingest again",
                path.display()
            )));
        }
        let records = ingest::parse_records(bytes.as_slice())?;
        let options = StoreOptions {
            classes: Some(manifest.classes.clone()),
            top_k: None,
        };
        let store = DatasetStore::build_with(records, &options)?;
        Ok((manifest, store))
    }

    pub fn write_projection(&self, manifest: &Manifest, projection: &Projection2D) -> Result<()> {
        self.write_keyed(PROJECTION, manifest, projection)
    }

    pub fn read_projection(&self, manifest: &Manifest) -> Result<Option<Projection2D>> {
        self.read_keyed(PROJECTION, manifest)
    }

    /// Writes `rules.json` and the line report `rules.txt`.
    pub fn write_rules(&self, manifest: &Manifest, rules: &RuleSet) -> Result<()> {
        self.write_keyed(RULES, manifest, rules)?;
        let path = self.path(RULES_REPORT);
        fs::write(&path, report::rules_report(rules)).map_err(io_err(&path))
    }

    pub fn read_rules(&self, manifest: &Manifest) -> Result<Option<RuleSet>> {
        self.read_keyed(RULES, manifest)
    }

    fn write_keyed<T: Serialize>(&self, name: &str, manifest: &Manifest, value: &T) -> Result<()> {
        self.write_json(
            name,
            &Keyed {
                corpus_sha256: manifest.corpus_sha256.clone(),
                value,
            },
        )
    }

    fn read_keyed<T: DeserializeOwned>(&self, name: &str, manifest: &Manifest) -> Result<Option<T>> {
        if !self.path(name).exists() {
            return Ok(None);
        }
        let keyed: Keyed<T> = self.read_json(name)?;
        Ok((keyed.corpus_sha256 == manifest.corpus_sha256).then_some(keyed.value))
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let path = self.path(name);
        let tmp = self.path(&format!(".{name}.tmp"));
        let file = fs::File::create(&tmp).map_err(io_err(&tmp))?;
        let mut out = BufWriter::new(file);
        serde_json::to_writer(&mut out, value).map_err(|source| Error::Json {
            path: tmp.clone(),
            source,
        })?;
        out.flush().map_err(io_err(&tmp))?;
        fs::rename(&tmp, &path).map_err(io_err(&path))
    }

    fn read_json<T: DeserializeOwned>(&self, name: &str) -> Result<T> {
        let path = self.path(name);
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        serde_json::from_slice(&bytes).map_err(|source| Error::Json { path, source })
    }
}
