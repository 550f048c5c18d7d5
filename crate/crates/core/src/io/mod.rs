//! File formats: Turtle and the internal JSON-lines triple format.

pub mod jsonl;
pub mod turtle;

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::model::{Namespaces, Triple};
use crate::store::{StoreError, TripleStore};

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Turtle(#[from] turtle::ParseError),
    #[error(transparent)]
    Jsonl(#[from] jsonl::JsonlError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FormatError + '_ {
    move |source| FormatError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Reads triples from a `.ttl` or JSON-lines file, chosen by extension.
pub fn read_triples(path: &Path, ns: &Namespaces) -> Result<Vec<Triple>, FormatError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    if path.extension().is_some_and(|e| e == "ttl") {
        Ok(turtle::parse_turtle(&text, ns)?)
    } else {
        Ok(jsonl::parse_triples(&text)?)
    }
}

pub fn load_store(path: &Path, ns: &Namespaces) -> Result<TripleStore, FormatError> {
    Ok(TripleStore::from_triples(read_triples(path, ns)?)?)
}

/// Writes `contents` to a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), FormatError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(contents).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))
}

/// Writes triples in the format implied by the extension.
pub fn write_triples<'a, I>(path: &Path, triples: I, ns: &Namespaces) -> Result<(), FormatError>
where
    I: IntoIterator<Item = &'a Triple>,
{
    let text = if path.extension().is_some_and(|e| e == "ttl") {
        let mut v: Vec<Triple> = triples.into_iter().cloned().collect();
        v.sort();
        v.dedup();
        turtle::serialize_sorted(&v, ns)
    } else {
        jsonl::write_triples(triples)
    };
    write_atomic(path, text.as_bytes())
}
