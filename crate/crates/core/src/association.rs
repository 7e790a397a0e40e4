//! Key–value association memory answered by scaled softmax attention.
//!
//! A query `q` is mixed from the stored keys with coefficients
//! `c = softmax(q Kᵀ / d)` and the response is `c V`. Small `d` leans toward
//! the single best-matching key; large `d` blends neighbours.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::textfmt::{fmt_f64, parse_row};

/// Softmax weights; non-negative and summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct MixCoefficients(pub Vec<f64>);

/// Numerically stable softmax (the maximum is subtracted before exponentiating).
pub fn softmax(x: &[f64]) -> Result<MixCoefficients> {
    if x.is_empty() {
        return Err(Error::Domain("softmax of an empty vector".into()));
    }
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Domain("softmax input must be finite".into()));
    }
    let exps: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(MixCoefficients(exps.into_iter().map(|e| e / sum).collect()))
}

/// Named choices of the scaling factor for `n`-dimensional keys.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Scaling {
    /// `1/n`: nearly one-hot recall.
    Sharp,
    /// `√n`: always mixes a little from other keys.
    Smooth,
    Fixed(f64),
}

impl Scaling {
    pub fn value(self, n: usize) -> f64 {
        match self {
            Scaling::Sharp => 1.0 / n as f64,
            Scaling::Smooth => (n as f64).sqrt(),
            Scaling::Fixed(d) => d,
        }
    }

    /// Parses `sharp`, `smooth`, `1/n`, `sqrt(n)` or a positive number.
    pub fn parse(s: &str) -> Option<Scaling> {
        match s.trim() {
            "sharp" | "1/n" => Some(Scaling::Sharp),
            "smooth" | "sqrt(n)" | "sqrtn" => Some(Scaling::Smooth),
            other => other
                .parse::<f64>()
                .ok()
                .filter(|d| *d > 0.0 && d.is_finite())
                .map(Scaling::Fixed),
        }
    }
}

impl std::fmt::Display for Scaling {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scaling::Sharp => f.write_str("1/n"),
            Scaling::Smooth => f.write_str("sqrt(n)"),
            Scaling::Fixed(d) => write!(f, "{d}"),
        }
    }
}

/// Append-only memory of `l` key (`n`) / value (`m`) pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct AssociativeMemory {
    key_dim: usize,
    value_dim: usize,
    scale: f64,
    keys: Vec<f64>,
    values: Vec<f64>,
}

impl AssociativeMemory {
    pub fn new(key_dim: usize, value_dim: usize, scale: f64) -> Result<Self> {
        if key_dim == 0 || value_dim == 0 {
            return Err(Error::Domain(
                "key and value dimensions must be positive".into(),
            ));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Domain(format!(
                "scaling factor must be positive, got {scale}"
            )));
        }
        Ok(AssociativeMemory {
            key_dim,
            value_dim,
            scale,
            keys: Vec::new(),
            values: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.keys.len() / self.key_dim
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn key_dim(&self) -> usize {
        self.key_dim
    }

    pub fn value_dim(&self) -> usize {
        self.value_dim
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Copy of the memory with another scaling factor.
    pub fn with_scale(&self, scale: f64) -> Result<Self> {
        let mut out = AssociativeMemory::new(self.key_dim, self.value_dim, scale)?;
        out.keys = self.keys.clone();
        out.values = self.values.clone();
        Ok(out)
    }

    pub fn key(&self, i: usize) -> &[f64] {
        &self.keys[i * self.key_dim..(i + 1) * self.key_dim]
    }

    pub fn value(&self, i: usize) -> &[f64] {
        &self.values[i * self.value_dim..(i + 1) * self.value_dim]
    }

    pub fn add_pair(&mut self, key: &[f64], value: &[f64]) -> Result<()> {
        if key.len() != self.key_dim {
            return Err(Error::DimensionMismatch {
                expected: self.key_dim,
                got: key.len(),
            });
        }
        if value.len() != self.value_dim {
            return Err(Error::DimensionMismatch {
                expected: self.value_dim,
                got: value.len(),
            });
        }
        self.keys.extend_from_slice(key);
        self.values.extend_from_slice(value);
        Ok(())
    }

    pub fn coefficients(&self, query: &[f64]) -> Result<MixCoefficients> {
        if self.is_empty() {
            return Err(Error::EmptyMemory);
        }
        if query.len() != self.key_dim {
            return Err(Error::DimensionMismatch {
                expected: self.key_dim,
                got: query.len(),
            });
        }
        let logits: Vec<f64> = self
            .keys
            .chunks_exact(self.key_dim)
            .map(|k| k.iter().zip(query).map(|(a, b)| a * b).sum::<f64>() / self.scale)
            .collect();
        softmax(&logits)
    }

    pub fn respond(&self, query: &[f64]) -> Result<Vec<f64>> {
        let c = self.coefficients(query)?;
        let mut out = vec![0.0; self.value_dim];
        for (ci, v) in c.0.iter().zip(self.values.chunks_exact(self.value_dim)) {
            for (o, vj) in out.iter_mut().zip(v) {
                *o += ci * vj;
            }
        }
        Ok(out)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("ASSOC v1\n");
        writeln!(
            out,
            "{} {} {} {}",
            self.len(),
            self.key_dim,
            self.value_dim,
            fmt_f64(self.scale)
        )
        .unwrap();
        for i in 0..self.len() {
            let row: Vec<String> = self
                .key(i)
                .iter()
                .chain(self.value(i))
                .map(|&v| fmt_f64(v))
                .collect();
            writeln!(out, "{}", row.join(" ")).unwrap();
        }
        out
    }

    pub fn from_text(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some("ASSOC v1") {
            return Err(Error::parse(path, 1, "expected `ASSOC v1` header"));
        }
        let header: Vec<&str> = lines
            .next()
            .ok_or_else(|| Error::parse(path, 2, "missing `l n m d` line"))?
            .split_whitespace()
            .collect();
        if header.len() != 4 {
            return Err(Error::parse(path, 2, "expected `l n m d`"));
        }
        let bad = |e: String| Error::parse(path, 2, e);
        let l: usize = header[0].parse().map_err(|e| bad(format!("l: {e}")))?;
        let n: usize = header[1].parse().map_err(|e| bad(format!("n: {e}")))?;
        let m: usize = header[2].parse().map_err(|e| bad(format!("m: {e}")))?;
        let d: f64 = header[3].parse().map_err(|e| bad(format!("d: {e}")))?;
        let mut mem = AssociativeMemory::new(n, m, d).map_err(|e| bad(e.to_string()))?;
        for i in 0..l {
            let line = lines
                .next()
                .ok_or_else(|| Error::parse(path, i + 3, format!("expected {l} rows")))?;
            let row = parse_row(line, n + m).map_err(|e| Error::parse(path, i + 3, e))?;
            mem.add_pair(&row[..n], &row[n..])?;
        }
        Ok(mem)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, path)
    }
}
