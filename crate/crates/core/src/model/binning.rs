use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BinError {
    #[error("bin edges need at least two values")]
    TooFew,
    #[error("bin edges must be finite and strictly increasing (at `{0}`)")]
    NotIncreasing(f64),
    #[error("cannot parse bin edge `{0}`")]
    Parse(String),
    #[error("range step must be positive in `{0}`")]
    BadStep(String),
}

/// Piecewise-constant bins `[e0,e1), [e1,e2), ..., [e(k-1),ek]`. The last bin
/// is closed on the right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct BinEdges(Vec<f64>);

impl BinEdges {
    pub fn new(edges: Vec<f64>) -> Result<Self, BinError> {
        if edges.len() < 2 {
            return Err(BinError::TooFew);
        }
        for w in edges.windows(2) {
            if !w[0].is_finite() || !w[1].is_finite() || w[1] <= w[0] {
                return Err(BinError::NotIncreasing(w[1]));
            }
        }
        Ok(BinEdges(edges))
    }

    /// `count` equal bins on `[lo, hi]`.
    pub fn uniform(lo: f64, hi: f64, count: usize) -> Self {
        let step = (hi - lo) / count as f64;
        let mut e: Vec<f64> = (0..count).map(|i| lo + step * i as f64).collect();
        e.push(hi);
        BinEdges(e)
    }

    /// Parse a comma-separated list where each item is an edge or an
    /// inclusive `lo:hi:step` range, e.g. `0:2:0.25,2:16:0.5`.
    pub fn parse(s: &str) -> Result<Self, BinError> {
        let mut edges: Vec<f64> = Vec::new();
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| BinError::Parse(t.trim().to_string()));
        for item in s.split(',').filter(|t| !t.trim().is_empty()) {
            let parts: Vec<&str> = item.split(':').collect();
            match parts.as_slice() {
                [x] => edges.push(num(x)?),
                [lo, hi, step] => {
                    let (lo, hi, step) = (num(lo)?, num(hi)?, num(step)?);
                    if !(step > 0.0) {
                        return Err(BinError::BadStep(item.to_string()));
                    }
                    let k = ((hi - lo) / step + 1e-9).floor() as usize;
                    edges.extend((0..=k).map(|i| lo + step * i as f64));
                    if (lo + step * k as f64 - hi).abs() > 1e-9 {
                        edges.push(hi);
                    }
                }
                _ => return Err(BinError::Parse(item.to_string())),
            }
        }
        edges.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        BinEdges::new(edges)
    }

    pub fn edges(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn lo(&self) -> f64 {
        self.0[0]
    }

    pub fn hi(&self) -> f64 {
        self.0[self.0.len() - 1]
    }

    pub fn bounds(&self, bin: usize) -> (f64, f64) {
        (self.0[bin], self.0[bin + 1])
    }

    pub fn midpoint(&self, bin: usize) -> f64 {
        0.5 * (self.0[bin] + self.0[bin + 1])
    }

    pub fn locate(&self, x: f64) -> Option<usize> {
        if !(x >= self.lo() && x <= self.hi()) {
            return None;
        }
        let i = self.0.partition_point(|e| *e <= x);
        Some(i.saturating_sub(1).min(self.len() - 1))
    }

    pub fn label(&self, bin: usize) -> String {
        let (lo, hi) = self.bounds(bin);
        let close = if bin + 1 == self.len() { ']' } else { ')' };
        format!("[{lo},{hi}{close}")
    }
}

impl TryFrom<Vec<f64>> for BinEdges {
    type Error = BinError;
    fn try_from(v: Vec<f64>) -> Result<Self, BinError> {
        BinEdges::new(v)
    }
}

impl From<BinEdges> for Vec<f64> {
    fn from(b: BinEdges) -> Self {
        b.0
    }
}
