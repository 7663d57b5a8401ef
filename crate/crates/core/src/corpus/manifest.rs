use std::collections::{BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: String,
    pub path: PathBuf,
    pub label: String,
    pub latent_path: Option<PathBuf>,
}

/// Utterance list with header `id,path,label[,latent_path]`. Relative paths
/// are relative to the manifest file's directory.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse { line, msg: e.to_string() }
}

impl Manifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (i, e) in entries.iter().enumerate() {
            if !seen.insert(e.id.as_str()) {
                return Err(Error::Parse {
                    line: i + 2,
                    msg: format!("duplicate id `{}`", e.id),
                });
            }
        }
        Ok(Manifest { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sorted distinct labels; a label's position is its class index.
    pub fn labels(&self) -> Vec<String> {
        self.entries
            .iter()
            .map(|e| e.label.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// Fails with `UnknownLabel` on the first entry outside `declared`.
    pub fn check_labels(&self, declared: &[String]) -> Result<()> {
        match self.entries.iter().find(|e| !declared.contains(&e.label)) {
            Some(e) => Err(Error::UnknownLabel(e.label.clone())),
            None => Ok(()),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let header: Vec<String> = rdr.headers().map_err(csv_error)?.iter().map(str::to_string).collect();
        let with_latent = match header.as_slice() {
            [a, b, c] if a == "id" && b == "path" && c == "label" => false,
            [a, b, c, d] if a == "id" && b == "path" && c == "label" && d == "latent_path" => true,
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    msg: format!("expected header `id,path,label[,latent_path]`, got `{}`", header.join(",")),
                })
            }
        };
        let mut entries = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(csv_error)?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            let field = |i: usize| rec.get(i).unwrap_or_default().to_string();
            if field(0).is_empty() || field(1).is_empty() || field(2).is_empty() {
                return Err(Error::Parse {
                    line,
                    msg: "id, path and label must be non-empty".into(),
                });
            }
            let latent = if with_latent { field(3) } else { String::new() };
            entries.push(ManifestEntry {
                id: field(0),
                path: PathBuf::from(field(1)),
                label: field(2),
                latent_path: (!latent.is_empty()).then(|| PathBuf::from(latent)),
            });
        }
        Self::new(entries)
    }

    pub fn to_text(&self) -> Result<String> {
        let with_latent = self.entries.iter().any(|e| e.latent_path.is_some());
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["id", "path", "label"];
        if with_latent {
            header.push("latent_path");
        }
        w.write_record(&header).map_err(csv_error)?;
        for e in &self.entries {
            let mut rec = vec![e.id.clone(), e.path.to_string_lossy().into_owned(), e.label.clone()];
            if with_latent {
                rec.push(e.latent_path.as_ref().map_or(String::new(), |p| p.to_string_lossy().into_owned()));
            }
            w.write_record(&rec).map_err(csv_error)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::FileNotFound(path.to_path_buf()));
        }
        let bytes = std::fs::read(path)?;
        let text = String::from_utf8(bytes).map_err(|_| Error::Parse {
            line: 0,
            msg: "manifest is not UTF-8".into(),
        })?;
        let mut m = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for e in &mut m.entries {
            if e.path.is_relative() {
                e.path = base.join(&e.path);
            }
            if let Some(l) = &mut e.latent_path {
                if l.is_relative() {
                    *l = base.join(&*l);
                }
            }
        }
        Ok(m)
    }

    /// Writes the manifest as given (paths are not rewritten).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text()?)?;
        Ok(())
    }
}
