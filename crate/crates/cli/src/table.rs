//! RFC-4180 tables with `#`-prefixed `key,value` comment lines in front.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};

pub struct Table {
    pub comments: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(kind: &str, columns: &[&str]) -> Self {
        Table {
            comments: vec![("kind".into(), kind.into())],
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn comment(mut self, key: &str, value: impl Into<String>) -> Self {
        self.comments.push((key.into(), value.into()));
        self
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn kind(&self) -> Option<&str> {
        self.field("kind")
    }

    pub fn field(&self, key: &str) -> Option<&str> {
        self.comments.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .with_context(|| format!("missing column {name:?}"))
    }

    /// Values of a numeric column.
    pub fn numbers(&self, name: &str) -> Result<Vec<f64>> {
        let c = self.column(name)?;
        self.rows
            .iter()
            .map(|r| {
                r[c].trim()
                    .parse::<f64>()
                    .with_context(|| format!("column {name:?}: bad number {:?}", r[c]))
            })
            .collect()
    }

    pub fn text(&self, name: &str) -> Result<Vec<String>> {
        let c = self.column(name)?;
        Ok(self.rows.iter().map(|r| r[c].clone()).collect())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        for (k, v) in &self.comments {
            writeln!(f, "# {k},{v}")?;
        }
        let mut w = csv::WriterBuilder::new().from_writer(f);
        w.write_record(&self.columns)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let mut comments = Vec::new();
        for line in BufReader::new(f).lines() {
            let line = line?;
            match line.strip_prefix('#') {
                Some(rest) => {
                    let (k, v) = rest.trim().split_once(',').unwrap_or((rest.trim(), ""));
                    comments.push((k.trim().to_string(), v.trim().to_string()));
                }
                None => break,
            }
        }
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_path(path)
            .with_context(|| format!("opening {}", path.display()))?;
        let columns: Vec<String> = rdr.headers()?.iter().map(|s| s.to_string()).collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.with_context(|| format!("malformed CSV in {}", path.display()))?;
            rows.push(rec.iter().map(|s| s.to_string()).collect());
        }
        if columns.is_empty() {
            bail!("{} has no header row", path.display());
        }
        Ok(Table {
            comments,
            columns,
            rows,
        })
    }
}

pub fn num(v: f64) -> String {
    format!("{v}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let mut t = Table::new("demo", &["name", "x"]).comment("config", r#"{"a":1,"b":[1,2]}"#);
        t.push(vec!["a,b".into(), num(f64::INFINITY)]);
        t.push(vec!["c".into(), num(0.25)]);
        t.write(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("# kind,demo\n# config,{\"a\":1,\"b\":[1,2]}\nname,x\n\"a,b\",inf\n"));
        let back = Table::read(&p).unwrap();
        assert_eq!(back.kind(), Some("demo"));
        assert_eq!(back.field("config"), Some(r#"{"a":1,"b":[1,2]}"#));
        assert_eq!(back.text("name").unwrap(), vec!["a,b", "c"]);
        assert_eq!(back.numbers("x").unwrap(), vec![f64::INFINITY, 0.25]);
        assert!(back.numbers("name").is_err());
    }
}
