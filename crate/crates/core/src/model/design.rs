use std::collections::BTreeMap;

use serde::Serialize;

use super::spec::{FactorValue, ModelSpec, Unplaced};

/// Why observations were left out of a design, per factor name.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DropTally {
    pub missing: BTreeMap<String, u64>,
    pub out_of_range: BTreeMap<String, u64>,
}

impl DropTally {
    pub fn total(&self) -> u64 {
        self.missing.values().sum::<u64>() + self.out_of_range.values().sum::<u64>()
    }

    pub fn merge(&mut self, other: &DropTally) {
        for (k, v) in &other.missing {
            *self.missing.entry(k.clone()).or_default() += v;
        }
        for (k, v) in &other.out_of_range {
            *self.out_of_range.entry(k.clone()).or_default() += v;
        }
    }
}

/// Sufficient statistics of the one-hot additive model: the intercept is
/// implicit, columns are the stacked factor levels.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSystem {
    pub spec: ModelSpec,
    pub offsets: Vec<usize>,
    pub p: usize,
    pub n: u64,
    pub sum_y: f64,
    pub sum_y2: f64,
    /// Per-column observation counts.
    pub counts: Vec<u64>,
    /// Dense `p x p` co-occurrence counts (row-major, symmetric).
    pub cross: Vec<u64>,
    /// Per-column sums of y.
    pub rhs: Vec<f64>,
    pub dropped: DropTally,
}

impl DesignSystem {
    pub fn new(spec: &ModelSpec) -> Self {
        let p = spec.columns();
        DesignSystem {
            offsets: spec.offsets(),
            spec: spec.clone(),
            p,
            n: 0,
            sum_y: 0.0,
            sum_y2: 0.0,
            counts: vec![0; p],
            cross: vec![0; p * p],
            rhs: vec![0.0; p],
            dropped: DropTally::default(),
        }
    }

    /// Column indices of an observation, or the first reason it cannot be placed.
    pub fn columns_of(&self, values: &[FactorValue]) -> Result<Vec<usize>, (usize, Unplaced)> {
        self.spec
            .factors
            .iter()
            .zip(values)
            .enumerate()
            .map(|(f, (factor, v))| factor.locate(*v).map(|l| self.offsets[f] + l).map_err(|e| (f, e)))
            .collect()
    }

    /// Add one observation. Returns `false` if it was dropped.
    pub fn push(&mut self, y: f64, values: &[FactorValue]) -> bool {
        debug_assert_eq!(values.len(), self.spec.factors.len());
        let mut cols = [0usize; 16];
        let nf = values.len();
        for (f, (factor, v)) in self.spec.factors.iter().zip(values).enumerate() {
            match factor.locate(*v) {
                Ok(l) => cols[f] = self.offsets[f] + l,
                Err(reason) => {
                    let tally = match reason {
                        Unplaced::Missing => &mut self.dropped.missing,
                        Unplaced::OutOfRange => &mut self.dropped.out_of_range,
                    };
                    *tally.entry(factor.name.clone()).or_default() += 1;
                    return false;
                }
            }
        }
        let cols = &cols[..nf];
        self.n += 1;
        self.sum_y += y;
        self.sum_y2 += y * y;
        for &a in cols {
            self.counts[a] += 1;
            self.rhs[a] += y;
            for &b in cols {
                self.cross[a * self.p + b] += 1;
            }
        }
        true
    }

    /// Fold another design built from the same spec into this one.
    pub fn merge(&mut self, other: &DesignSystem) {
        assert_eq!(self.p, other.p, "designs built from different specs");
        self.n += other.n;
        self.sum_y += other.sum_y;
        self.sum_y2 += other.sum_y2;
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        for (a, b) in self.cross.iter_mut().zip(&other.cross) {
            *a += b;
        }
        for (a, b) in self.rhs.iter_mut().zip(&other.rhs) {
            *a += b;
        }
        self.dropped.merge(&other.dropped);
    }

    /// Counts for one factor's levels.
    pub fn factor_counts(&self, f: usize) -> &[u64] {
        let o = self.offsets[f];
        &self.counts[o..o + self.spec.factors[f].levels()]
    }

    pub fn cross_count(&self, a: usize, b: usize) -> u64 {
        self.cross[a * self.p + b]
    }
}

/// Build a design from observations in fixed-size shards, in parallel, and
/// merge the shards in order so the result does not depend on scheduling.
pub fn build_design<I>(spec: &ModelSpec, rows: I) -> DesignSystem
where
    I: IntoIterator<Item = (f64, Vec<FactorValue>)>,
{
    let mut d = DesignSystem::new(spec);
    for (y, v) in rows {
        d.push(y, &v);
    }
    d
}

/// Parallel accumulation over `items`, each of which may contribute any
/// number of rows through `emit`. Shards are merged left to right.
pub fn build_design_par<T, F>(spec: &ModelSpec, items: &[T], shard: usize, emit: F) -> DesignSystem
where
    T: Sync,
    F: Fn(&T, &mut DesignSystem) + Sync,
{
    use rayon::prelude::*;
    let parts: Vec<DesignSystem> = items
        .par_chunks(shard.max(1))
        .map(|chunk| {
            let mut d = DesignSystem::new(spec);
            for it in chunk {
                emit(it, &mut d);
            }
            d
        })
        .collect();
    let mut out = DesignSystem::new(spec);
    for p in &parts {
        out.merge(p);
    }
    out
}
