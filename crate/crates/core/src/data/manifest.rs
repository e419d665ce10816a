//! Dataset manifests: CSV with header `path,identity,class,split`.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleClass {
    Real,
    Synthetic,
    Attack,
}

impl fmt::Display for SampleClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SampleClass::Real => "real",
            SampleClass::Synthetic => "synthetic",
            SampleClass::Attack => "attack",
        })
    }
}

impl FromStr for SampleClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "real" => Ok(SampleClass::Real),
            "synthetic" => Ok(SampleClass::Synthetic),
            "attack" => Ok(SampleClass::Attack),
            other => Err(Error::invalid(format!("unknown sample class `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub path: PathBuf,
    /// Empty when unknown.
    pub identity: String,
    pub class: SampleClass,
    pub split: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    pub rows: Vec<ManifestRow>,
}

impl Manifest {
    /// Reads a manifest; relative paths are resolved against the manifest's
    /// directory. Every referenced file must exist.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or(Path::new("."));
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(file);
        let headers = reader.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["path", "identity", "class", "split"] {
            return Err(Error::Format {
                path: path.to_path_buf(),
                offset: 0,
                reason: format!("expected header path,identity,class,split, got {}", headers.iter().collect::<Vec<_>>().join(",")),
            });
        }
        let mut rows = Vec::new();
        for record in reader.deserialize() {
            let mut row: ManifestRow = record?;
            if row.path.is_relative() {
                row.path = base.join(&row.path);
            }
            if !row.path.exists() {
                return Err(Error::io(
                    &row.path,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "listed in manifest but missing"),
                ));
            }
            rows.push(row);
        }
        Ok(Self { rows })
    }

    /// Writes the manifest; paths are written as given.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut writer = csv::Writer::from_writer(file);
        for row in &self.rows {
            writer.serialize(row)?;
        }
        if self.rows.is_empty() {
            writer.write_record(["path", "identity", "class", "split"])?;
        }
        writer.flush().map_err(|e| Error::io(path, e))
    }

    pub fn of_class(&self, class: SampleClass) -> impl Iterator<Item = &ManifestRow> {
        self.rows.iter().filter(move |r| r.class == class)
    }
}
