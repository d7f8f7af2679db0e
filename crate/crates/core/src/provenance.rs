//! Append-only JSON-lines logs (generation provenance, filter decisions).

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

pub struct JsonlWriter<W: Write> {
    inner: W,
    lines: usize,
}

impl JsonlWriter<BufWriter<File>> {
    pub fn create(path: &Path) -> io::Result<Self> {
        Ok(Self::new(BufWriter::new(File::create(path)?)))
    }
}

impl<W: Write> JsonlWriter<W> {
    pub fn new(inner: W) -> Self {
        JsonlWriter { inner, lines: 0 }
    }

    pub fn append<T: Serialize>(&mut self, record: &T) -> io::Result<()> {
        serde_json::to_writer(&mut self.inner, record)?;
        self.inner.write_all(b"\n")?;
        self.lines += 1;
        Ok(())
    }

    pub fn lines(&self) -> usize {
        self.lines
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }

    pub fn into_inner(mut self) -> io::Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

/// Parses one record per non-blank line. Errors carry the 1-based line number.
pub fn read_jsonl<T: DeserializeOwned>(text: &str) -> Result<Vec<T>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| serde_json::from_str(l).map_err(|e| format!("line {}: {e}", n + 1)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::{json, Value};

    #[test]
    fn writes_one_record_per_line() {
        let mut w = JsonlWriter::new(Vec::new());
        w.append(&json!({"a": 1})).unwrap();
        w.append(&json!({"b": "é\n"})).unwrap();
        assert_eq!(w.lines(), 2);
        let bytes = w.into_inner().unwrap();
        let text = String::from_utf8(bytes).unwrap();
        assert_eq!(text.lines().count(), 2);
        let back: Vec<Value> = read_jsonl(&text).unwrap();
        assert_eq!(back[1]["b"], "é\n");
    }

    #[test]
    fn reports_bad_line() {
        let err = read_jsonl::<Value>("{}\n\nnot json\n").unwrap_err();
        assert!(err.starts_with("line 3"), "{err}");
    }
}
