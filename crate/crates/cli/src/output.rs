//! CSV and JSON emission. Numbers carry 17 significant digits so a reader
//! recovers the exact doubles; files appear atomically via rename.

use std::io::Write;
use std::path::{Path, PathBuf};

use dimeron_core::{Error, Result};
use serde::Serialize;

pub enum Cell {
    Num(f64),
    Bool(bool),
    Text(String),
    Missing,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(x) => format!("{x:.16e}"),
            Cell::Bool(b) => b.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Missing => String::new(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Missing, Cell::Num)
    }
}

pub fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<Cell>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(header).map_err(io)?;
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        w.write_record(row.iter().map(Cell::render)).map_err(io)?;
    }
    w.into_inner().map_err(|e| Error::Format(e.to_string()))
}

pub fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

/// Writes `bytes` to `dir/name` through a temporary file in the same
/// directory, so readers never see a partial file.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(&path).map_err(|e| Error::Io(e.error))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip_exactly() {
        let xs = [0.1, -1.0 / 3.0, 6.02214076e23, f64::MIN_POSITIVE, 2.0f64.sqrt()];
        let bytes = csv_bytes(&["x"], xs.iter().map(|&x| vec![Cell::Num(x)])).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        let back: Vec<f64> = text.lines().skip(1).map(|l| l.parse().unwrap()).collect();
        assert_eq!(back, xs);
    }

    #[test]
    fn missing_cells_are_empty() {
        let bytes = csv_bytes(&["a", "b"], [vec![Cell::Missing, Cell::Bool(true)]]).unwrap();
        assert_eq!(String::from_utf8(bytes).unwrap(), "a,b\n,true\n");
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        write_atomic(dir.path(), "f.txt", b"one").unwrap();
        let p = write_atomic(dir.path(), "f.txt", b"two").unwrap();
        assert_eq!(std::fs::read(p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
