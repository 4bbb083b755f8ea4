//! Path helpers honoring the `-` convention for stdin/stdout, plus flexible
//! dataset readers.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use anyhow::{Context, Result};

use physrl_core::dataset::{ManifestHeader, McqItem};

pub fn open_input(path: &str) -> Result<Box<dyn BufRead>> {
    if path == "-" {
        Ok(Box::new(BufReader::new(io::stdin())))
    } else {
        let file = File::open(path).with_context(|| format!("opening {path}"))?;
        Ok(Box::new(BufReader::new(file)))
    }
}

pub fn open_output(path: &str) -> Result<Box<dyn Write>> {
    if path == "-" {
        Ok(Box::new(BufWriter::new(io::stdout())))
    } else {
        if let Some(parent) = Path::new(path).parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)
                    .with_context(|| format!("creating directory for {path}"))?;
            }
        }
        let file = File::create(path).with_context(|| format!("creating {path}"))?;
        Ok(Box::new(BufWriter::new(file)))
    }
}

pub fn read_to_string(path: &str) -> Result<String> {
    if path == "-" {
        let mut buf = String::new();
        io::stdin().read_to_string(&mut buf)?;
        Ok(buf)
    } else {
        std::fs::read_to_string(path).with_context(|| format!("reading {path}"))
    }
}

/// Read items from either a plain item JSONL or a manifest (header line
/// followed by items).
pub fn read_items_flexible(path: &str) -> Result<(Option<ManifestHeader>, Vec<McqItem>)> {
    let raw = read_to_string(path)?;
    let mut lines = raw.lines().filter(|l| !l.trim().is_empty());
    let Some(first) = lines.next() else {
        return Ok((None, Vec::new()));
    };
    let header: Option<ManifestHeader> = serde_json::from_str::<serde_json::Value>(first)
        .ok()
        .filter(|v| v.get("expected_counts").is_some())
        .and_then(|v| serde_json::from_value(v).ok());
    let mut items = Vec::new();
    let body: Box<dyn Iterator<Item = &str>> = if header.is_some() {
        Box::new(lines)
    } else {
        Box::new(std::iter::once(first).chain(lines))
    };
    for (idx, line) in body.enumerate() {
        let item: McqItem = serde_json::from_str(line)
            .with_context(|| format!("{path}: bad item at entry {}", idx + 1))?;
        items.push(item);
    }
    Ok((header, items))
}

pub fn items_by_id(items: Vec<McqItem>) -> BTreeMap<String, McqItem> {
    items.into_iter().map(|i| (i.id.clone(), i)).collect()
}

/// Write one serializable value per line.
pub fn write_jsonl_records<T: serde::Serialize>(out: &mut dyn Write, records: &[T]) -> Result<()> {
    for record in records {
        serde_json::to_writer(&mut *out, record)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
