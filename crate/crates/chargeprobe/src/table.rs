//! Probability tables over computational-basis bitstrings.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Basis {
    Z,
    X,
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Basis::Z => write!(f, "Z"),
            Basis::X => write!(f, "X"),
        }
    }
}

impl std::str::FromStr for Basis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "Z" | "z" => Ok(Basis::Z),
            "X" | "x" => Ok(Basis::X),
            other => Err(Error::Parse(format!("unknown basis '{other}'"))),
        }
    }
}

/// Dense weights indexed by bitstring (site 0 = least significant bit).
///
/// `normalized` tables are non-negative and sum to one; raw tables (for
/// example from error-cancelled estimates) may hold negative entries.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityTable {
    pub size: usize,
    pub basis: Basis,
    pub weights: Vec<f64>,
    pub normalized: bool,
}

impl ProbabilityTable {
    pub fn new(size: usize, basis: Basis, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != 1usize << size {
            return Err(Error::DimensionMismatch { expected: 1 << size, got: weights.len() });
        }
        let sum: f64 = weights.iter().sum();
        let normalized = weights.iter().all(|&w| w >= 0.0) && (sum - 1.0).abs() <= 1e-9;
        Ok(ProbabilityTable { size, basis, weights, normalized })
    }

    /// A table that keeps its raw flag regardless of content.
    pub fn raw(size: usize, basis: Basis, weights: Vec<f64>) -> Result<Self> {
        let mut t = Self::new(size, basis, weights)?;
        t.normalized = false;
        Ok(t)
    }

    pub fn delta(size: usize, basis: Basis, index: usize) -> Self {
        let mut w = vec![0.0; 1 << size];
        w[index] = 1.0;
        ProbabilityTable { size, basis, weights: w, normalized: true }
    }

    pub fn uniform(size: usize, basis: Basis) -> Self {
        let n = 1usize << size;
        ProbabilityTable { size, basis, weights: vec![1.0 / n as f64; n], normalized: true }
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn has_negative(&self) -> bool {
        self.weights.iter().any(|&w| w < 0.0)
    }

    pub fn require_normalized(&self) -> Result<()> {
        if !self.normalized {
            return Err(Error::Degenerate("table is raw; post-process it first".into()));
        }
        Ok(())
    }

    /// Cyclic shift of sites: new site `i` takes old site `(i + s) mod L`.
    pub fn rotate(&self, s: usize) -> Self {
        let l = self.size;
        let mut w = vec![0.0; self.weights.len()];
        for (b, &p) in self.weights.iter().enumerate() {
            let mut nb = 0usize;
            for i in 0..l {
                if b >> ((i + s) % l) & 1 == 1 {
                    nb |= 1 << i;
                }
            }
            w[nb] = p;
        }
        ProbabilityTable { weights: w, ..self.clone() }
    }

    /// CSV with a leading comment line carrying the raw flag.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# basis={} L={} raw={}", self.basis, self.size, !self.normalized)?;
        writeln!(w, "bitstring,weight")?;
        for (b, &p) in self.weights.iter().enumerate() {
            if p != 0.0 {
                writeln!(w, "{},{:.17e}", bitstring(b, self.size), p)?;
            }
        }
        Ok(())
    }

    pub fn read_csv(text: &str) -> Result<Self> {
        let mut size = None;
        let mut basis = Basis::Z;
        let mut raw = false;
        let mut entries = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line == "bitstring,weight" {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                for kv in meta.split_whitespace() {
                    match kv.split_once('=') {
                        Some(("basis", v)) => basis = v.parse()?,
                        Some(("L", v)) => size = Some(v.parse().map_err(|_| Error::Parse(format!("bad L '{v}'")))?),
                        Some(("raw", v)) => raw = v == "true",
                        _ => {}
                    }
                }
                continue;
            }
            let (bits, val) = line.split_once(',').ok_or_else(|| Error::Parse(format!("bad table row '{line}'")))?;
            let val: f64 = val.trim().parse().map_err(|_| Error::Parse(format!("bad weight in '{line}'")))?;
            entries.push((parse_bitstring(bits.trim())?, bits.trim().len(), val));
        }
        let size = match size {
            Some(s) => s,
            None => entries.first().map(|e| e.1).ok_or_else(|| Error::Parse("empty table".into()))?,
        };
        let mut w = vec![0.0; 1 << size];
        for (b, len, v) in entries {
            if len != size {
                return Err(Error::Parse("inconsistent bitstring lengths".into()));
            }
            w[b] = v;
        }
        if raw {
            Self::raw(size, basis, w)
        } else {
            Self::new(size, basis, w)
        }
    }
}

/// Text form of a basis index: character `i` is site `i`.
pub fn bitstring(b: usize, l: usize) -> String {
    (0..l).map(|i| if b >> i & 1 == 1 { '1' } else { '0' }).collect()
}

pub fn parse_bitstring(s: &str) -> Result<usize> {
    let mut b = 0usize;
    for (i, c) in s.chars().enumerate() {
        match c {
            '0' => {}
            '1' => b |= 1 << i,
            _ => return Err(Error::Parse(format!("bad bitstring '{s}'"))),
        }
    }
    Ok(b)
}
