//! Joint histogram dumps: `#`-prefixed `key,value` header lines
//! (estimator, M, sigma, beta, alpha, N) followed by `M` rows of `M` values,
//! row `i` holding the moving-image bin `i`.

use std::io::{BufReader, Read, Write};

use super::joint::{Estimator, JointHistogram};
use crate::error::{LorError, Result};

pub fn write_joint_csv<W: Write>(out: W, h: &JointHistogram) -> Result<()> {
    let mut out = out;
    let fmt = |v: Option<f64>| match v {
        Some(x) if x.is_infinite() => "inf".to_string(),
        Some(x) => format!("{x}"),
        None => String::new(),
    };
    let scales = h.scales();
    writeln!(out, "# estimator,{}", h.estimator().name())?;
    writeln!(out, "# M,{}", h.count())?;
    writeln!(out, "# sigma,{}", fmt(scales.map(|s| s.sigma)))?;
    writeln!(out, "# beta,{}", fmt(scales.map(|s| s.beta)))?;
    writeln!(out, "# alpha,{}", fmt(scales.map(|s| s.alpha)))?;
    writeln!(out, "# N,{}", h.sample_count())?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    let m = h.count();
    for i in 0..m {
        w.write_record((0..m).map(|j| format!("{:e}", h.get(i, j))))
            .map_err(|e| LorError::Malformed(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Parsed dump: header fields and the `M x M` values.
#[derive(Clone, Debug, PartialEq)]
pub struct JointDump {
    pub header: Vec<(String, String)>,
    pub m: usize,
    pub values: Vec<f64>,
}

impl JointDump {
    pub fn field(&self, key: &str) -> Option<&str> {
        self.header.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn to_histogram(&self) -> Result<JointHistogram> {
        let est = match self.field("estimator") {
            Some("GPV") => Estimator::Gpv,
            Some("LOI") => Estimator::LoiFull,
            _ => Estimator::Pw,
        };
        JointHistogram::from_values(self.m, self.values.clone(), est)
    }
}

pub fn read_joint_csv<R: Read>(input: R) -> Result<JointDump> {
    let mut text = String::new();
    BufReader::new(input).read_to_string(&mut text)?;
    let mut header = Vec::new();
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((k, v)) = rest.trim().split_once(',') {
                header.push((k.trim().to_string(), v.trim().to_string()));
            }
        }
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| LorError::Malformed(e.to_string()))?;
        let row = rec
            .iter()
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|_| LorError::Malformed(format!("bad number {f:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    let m = rows.len();
    if m < 2 || rows.iter().any(|r| r.len() != m) {
        return Err(LorError::Malformed(format!("expected a square table, got {m} rows")));
    }
    if let Some(declared) = header
        .iter()
        .find(|(k, _)| k == "M")
        .and_then(|(_, v)| v.parse::<usize>().ok())
    {
        if declared != m {
            return Err(LorError::Malformed(format!(
                "header declares M={declared} but table has {m} rows"
            )));
        }
    }
    Ok(JointDump {
        header,
        m,
        values: rows.into_iter().flatten().collect(),
    })
}
