use serde::{Deserialize, Serialize};

use super::binning::BinEdges;

pub const KEY: &str = "k";
pub const TIME_OF_DAY: &str = "t";
pub const TIME_AWAKE: &str = "w";
pub const DURATION: &str = "d";
pub const POSITION: &str = "pos";
pub const ENTROPY: &str = "ent";

/// Default wake-time cap in hours; later observations are not fitted.
pub const W_CAP_H: f64 = 16.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorKind {
    Binned(BinEdges),
    Categorical(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Factor {
    pub name: String,
    pub kind: FactorKind,
}

impl Factor {
    pub fn binned(name: &str, edges: BinEdges) -> Self {
        Factor { name: name.to_string(), kind: FactorKind::Binned(edges) }
    }

    pub fn categorical(name: &str, levels: Vec<String>) -> Self {
        Factor { name: name.to_string(), kind: FactorKind::Categorical(levels) }
    }

    pub fn levels(&self) -> usize {
        match &self.kind {
            FactorKind::Binned(b) => b.len(),
            FactorKind::Categorical(l) => l.len(),
        }
    }

    pub fn label(&self, level: usize) -> String {
        match &self.kind {
            FactorKind::Binned(b) => b.label(level),
            FactorKind::Categorical(l) => l[level].clone(),
        }
    }

    pub fn bounds(&self, level: usize) -> Option<(f64, f64)> {
        match &self.kind {
            FactorKind::Binned(b) => Some(b.bounds(level)),
            FactorKind::Categorical(_) => None,
        }
    }

    /// Level index for a value, or why it has none.
    pub fn locate(&self, value: FactorValue) -> Result<usize, Unplaced> {
        match (&self.kind, value) {
            (_, FactorValue::Missing) => Err(Unplaced::Missing),
            (FactorKind::Binned(b), FactorValue::Num(x)) => b.locate(x).ok_or(Unplaced::OutOfRange),
            (FactorKind::Categorical(l), FactorValue::Level(i)) if (i as usize) < l.len() => Ok(i as usize),
            _ => Err(Unplaced::OutOfRange),
        }
    }
}

/// A single observation's value for one factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FactorValue {
    Num(f64),
    Level(u32),
    Missing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unplaced {
    Missing,
    OutOfRange,
}

pub fn default_t_edges() -> BinEdges {
    BinEdges::uniform(0.0, 24.0, 24)
}

pub fn default_w_edges() -> BinEdges {
    BinEdges::parse("0:2:0.25,2:16:0.5").expect("static edges")
}

pub fn default_d_edges() -> BinEdges {
    BinEdges::parse("4:12:0.5").expect("static edges")
}

/// Continuous-factor bin overrides.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BinOverrides {
    pub t: Option<BinEdges>,
    pub w: Option<BinEdges>,
    pub d: Option<BinEdges>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub factors: Vec<Factor>,
    /// Bins with fewer observations are merged with a neighbour.
    pub min_bin_count: u64,
    pub tolerance: f64,
    pub max_iter: usize,
}

impl ModelSpec {
    pub const DEFAULT_MIN_BIN_COUNT: u64 = 30;
    pub const DEFAULT_TOLERANCE: f64 = 1e-12;

    pub fn new(factors: Vec<Factor>) -> Self {
        ModelSpec {
            factors,
            min_bin_count: Self::DEFAULT_MIN_BIN_COUNT,
            tolerance: Self::DEFAULT_TOLERANCE,
            max_iter: 10_000,
        }
    }

    fn sleep_factors(bins: &BinOverrides) -> [Factor; 3] {
        [
            Factor::binned(TIME_OF_DAY, bins.t.clone().unwrap_or_else(default_t_edges)),
            Factor::binned(TIME_AWAKE, bins.w.clone().unwrap_or_else(default_w_edges)),
            Factor::binned(DURATION, bins.d.clone().unwrap_or_else(default_d_edges)),
        ]
    }

    /// Keystroke model: key label, time of day, time awake, previous duration.
    pub fn keystroke(key_levels: Vec<String>, bins: &BinOverrides) -> Self {
        let mut f = vec![Factor::categorical(KEY, key_levels)];
        f.extend(Self::sleep_factors(bins));
        Self::new(f)
    }

    /// Click model: position, click-entropy bin, time of day, time awake,
    /// previous duration.
    pub fn click(position_levels: Vec<String>, entropy_levels: Vec<String>, bins: &BinOverrides) -> Self {
        let mut f = vec![Factor::categorical(POSITION, position_levels), Factor::categorical(ENTROPY, entropy_levels)];
        f.extend(Self::sleep_factors(bins));
        Self::new(f)
    }

    pub fn factor_index(&self, name: &str) -> Option<usize> {
        self.factors.iter().position(|f| f.name == name)
    }

    /// Column offset of each factor in the stacked one-hot layout.
    pub fn offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.factors
            .iter()
            .map(|f| {
                let o = acc;
                acc += f.levels();
                o
            })
            .collect()
    }

    pub fn columns(&self) -> usize {
        self.factors.iter().map(Factor::levels).sum()
    }
}
