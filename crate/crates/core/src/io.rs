//! File helpers: atomic writes and CSV plumbing.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Builds CSV text in memory from a header and rows of already formatted fields.
pub fn csv_text<I, R>(header: &[&str], rows: I) -> String
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8 csv")
}

/// Parses CSV text with a header into records, checking the header.
pub fn csv_records(text: &str, context: &str, header: &[&str]) -> Result<Vec<csv::StringRecord>> {
    let mut r = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let got = r.headers().map_err(|e| Error::parse(context, e))?.clone();
    let prefix: Vec<&str> = got.iter().take(header.len()).collect();
    if prefix != header {
        return Err(Error::parse(
            context,
            format!("expected columns {header:?}, found {:?}", got.iter().collect::<Vec<_>>()),
        ));
    }
    r.records()
        .map(|rec| rec.map_err(|e| Error::parse(context, e)))
        .collect()
}

pub fn field_f64(rec: &csv::StringRecord, i: usize, context: &str) -> Result<f64> {
    let s = rec
        .get(i)
        .ok_or_else(|| Error::parse(context, format!("missing column {i}")))?;
    s.trim()
        .parse()
        .map_err(|_| Error::parse(context, format!("bad number '{s}' in column {i}")))
}

pub fn field_bool(rec: &csv::StringRecord, i: usize, context: &str) -> Result<bool> {
    match rec.get(i).map(str::trim) {
        Some("1") | Some("true") => Ok(true),
        Some("0") | Some("false") => Ok(false),
        other => Err(Error::parse(context, format!("bad boolean {other:?} in column {i}"))),
    }
}

pub fn field_str<'a>(rec: &'a csv::StringRecord, i: usize, context: &str) -> Result<&'a str> {
    rec.get(i)
        .ok_or_else(|| Error::parse(context, format!("missing column {i}")))
}
