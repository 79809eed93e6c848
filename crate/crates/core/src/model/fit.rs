use petgraph::unionfind::UnionFind;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use super::binning::BinEdges;
use super::design::{DesignSystem, DropTally};
use super::solver::{dot, pcg, CsrMatrix, LowRankUpdated, SolverError};
use super::spec::{FactorKind, FactorValue, ModelSpec, Unplaced};
use crate::stats::Z95;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ModelError {
    #[error("no observations")]
    NoObservations,
    #[error("factors `{0}` and `{1}` are confounded: their levels split into disconnected blocks")]
    Confounded(String, String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("unknown factor `{0}`")]
    UnknownFactor(String),
    #[error("level `{level}` of factor `{factor}` was not fitted")]
    UnseenLevel { factor: String, level: String },
    #[error("expected {expected} factor values, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("coefficient `{0}` has no estimable direction")]
    SingularDirection(String),
}

/// Mapping from original factor levels to fitted columns after sparse-level
/// merging. Column 0 is the intercept.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grouping {
    pub level_group: Vec<Vec<Option<usize>>>,
    pub group_factor: Vec<usize>,
    pub group_counts: Vec<u64>,
}

impl Grouping {
    pub fn columns(&self) -> usize {
        self.group_factor.len() + 1
    }

    pub fn groups_of(&self, f: usize) -> usize {
        self.group_factor.iter().filter(|&&g| g == f).count()
    }

    pub fn build(design: &DesignSystem) -> Self {
        let spec = &design.spec;
        let mut level_group = Vec::new();
        let mut group_factor = Vec::new();
        let mut group_counts = Vec::new();
        for (f, factor) in spec.factors.iter().enumerate() {
            let counts = design.factor_counts(f);
            let (local, k) = match &factor.kind {
                FactorKind::Binned(edges) => {
                    let (g, k) = merge_binned(edges, counts, spec.min_bin_count);
                    (g.into_iter().map(Some).collect::<Vec<_>>(), k)
                }
                FactorKind::Categorical(_) => merge_categorical(counts, spec.min_bin_count),
            };
            let base = group_factor.len() + 1;
            let mut gc = vec![0u64; k];
            for (l, g) in local.iter().enumerate() {
                if let Some(g) = g {
                    gc[*g] += counts[l];
                }
            }
            group_factor.extend(std::iter::repeat_n(f, k));
            group_counts.extend(gc);
            level_group.push(local.into_iter().map(|g| g.map(|g| g + base)).collect());
        }
        Grouping { level_group, group_factor, group_counts }
    }
}

/// Merge sparse bins into adjacent ones. The sparsest bin goes first and
/// joins the neighbour with the nearer midpoint; ties go to the smaller
/// neighbour, then to the left. Empty bins are always merged.
pub fn merge_binned(edges: &BinEdges, counts: &[u64], min_count: u64) -> (Vec<usize>, usize) {
    let threshold = min_count.max(1);
    let mut ranges: Vec<(usize, usize, u64)> = counts.iter().enumerate().map(|(i, &c)| (i, i, c)).collect();
    let mid = |r: &(usize, usize, u64)| 0.5 * (edges.edges()[r.0] + edges.edges()[r.1 + 1]);
    while ranges.len() > 1 {
        let Some(i) = (0..ranges.len()).filter(|&i| ranges[i].2 < threshold).min_by_key(|&i| ranges[i].2) else {
            break;
        };
        let left = i.checked_sub(1);
        let right = (i + 1 < ranges.len()).then_some(i + 1);
        let j = match (left, right) {
            (Some(l), None) => l,
            (None, Some(r)) => r,
            (Some(l), Some(r)) => {
                let dl = mid(&ranges[i]) - mid(&ranges[l]);
                let dr = mid(&ranges[r]) - mid(&ranges[i]);
                if (dl - dr).abs() > 1e-12 {
                    if dl < dr {
                        l
                    } else {
                        r
                    }
                } else if ranges[r].2 < ranges[l].2 {
                    r
                } else {
                    l
                }
            }
            (None, None) => unreachable!(),
        };
        let (a, b) = (i.min(j), i.max(j));
        ranges[a] = (ranges[a].0, ranges[b].1, ranges[a].2 + ranges[b].2);
        ranges.remove(b);
    }
    let mut out = vec![0; counts.len()];
    for (g, r) in ranges.iter().enumerate() {
        for slot in &mut out[r.0..=r.1] {
            *slot = g;
        }
    }
    (out, ranges.len())
}

/// Drop unseen levels and pool sparse ones; a pool still below the floor
/// joins the largest level.
pub fn merge_categorical(counts: &[u64], min_count: u64) -> (Vec<Option<usize>>, usize) {
    let sparse: Vec<usize> = (0..counts.len()).filter(|&l| counts[l] > 0 && counts[l] < min_count).collect();
    let dense: Vec<usize> = (0..counts.len()).filter(|&l| counts[l] >= min_count.max(1)).collect();
    let pool: u64 = sparse.iter().map(|&l| counts[l]).sum();
    let largest = dense.iter().copied().max_by_key(|&l| (counts[l], std::cmp::Reverse(l)));
    let pool_target = match largest {
        Some(big) if pool < min_count => Some(big),
        _ => None,
    };
    let mut ids = vec![None; counts.len()];
    let mut next = 0;
    let mut pool_id = None;
    for l in 0..counts.len() {
        if counts[l] == 0 {
            continue;
        }
        let is_sparse = counts[l] < min_count;
        if is_sparse && pool_target.is_none() {
            if pool_id.is_none() {
                pool_id = Some(next);
                next += 1;
            }
            ids[l] = pool_id;
        } else if !is_sparse {
            ids[l] = Some(next);
            next += 1;
        }
    }
    if let Some(big) = pool_target {
        for &l in &sparse {
            ids[l] = ids[big];
        }
    }
    (ids, next)
}

/// Normal equations of the grouped model with the gauge penalty.
struct System {
    m: LowRankUpdated,
    b: Vec<f64>,
    counts: Vec<f64>,
}

fn reduced_cross(design: &DesignSystem, grouping: &Grouping) -> Vec<f64> {
    let q = grouping.columns();
    let mut dense = vec![0.0; q * q];
    let col_group: Vec<Option<usize>> = grouping.level_group.iter().flatten().copied().collect();
    dense[0] = design.n as f64;
    for a in 0..design.p {
        let Some(ga) = col_group[a] else { continue };
        let ca = design.counts[a] as f64;
        dense[ga] += ca;
        dense[ga * q] += ca;
        for b in 0..design.p {
            let c = design.cross_count(a, b);
            if c > 0 {
                let Some(gb) = col_group[b] else { continue };
                dense[ga * q + gb] += c as f64;
            }
        }
    }
    dense
}

fn system(design: &DesignSystem, grouping: &Grouping) -> System {
    let q = grouping.columns();
    let dense = reduced_cross(design, grouping);
    let col_group: Vec<Option<usize>> = grouping.level_group.iter().flatten().copied().collect();
    let mut b = vec![0.0; q];
    b[0] = design.sum_y;
    for a in 0..design.p {
        if let Some(g) = col_group[a] {
            b[g] += design.rhs[a];
        }
    }
    let n = design.n as f64;
    let mut counts = vec![n; q];
    for (g, c) in grouping.group_counts.iter().enumerate() {
        counts[g + 1] = *c as f64;
    }
    let terms = (0..design.spec.factors.len())
        .map(|f| {
            let mut u = vec![0.0; q];
            for (g, &gf) in grouping.group_factor.iter().enumerate() {
                if gf == f {
                    u[g + 1] = counts[g + 1] / n;
                }
            }
            (n, u)
        })
        .collect();
    System { m: LowRankUpdated { base: CsrMatrix::from_dense(q, &dense), terms }, b, counts }
}

fn check_confounding(design: &DesignSystem, grouping: &Grouping) -> Result<(), ModelError> {
    let q = grouping.columns();
    let dense = reduced_cross(design, grouping);
    let nf = design.spec.factors.len();
    for f in 0..nf {
        for g in f + 1..nf {
            let cols: Vec<usize> =
                (1..q).filter(|&c| grouping.group_factor[c - 1] == f || grouping.group_factor[c - 1] == g).collect();
            if grouping.groups_of(f) < 2 && grouping.groups_of(g) < 2 {
                continue;
            }
            let mut uf = UnionFind::<usize>::new(cols.len());
            for (i, &a) in cols.iter().enumerate() {
                for (j, &b) in cols.iter().enumerate().skip(i + 1) {
                    if dense[a * q + b] > 0.0 {
                        uf.union(i, j);
                    }
                }
            }
            let mut roots: Vec<usize> = (0..cols.len()).map(|i| uf.find(i)).collect();
            roots.sort_unstable();
            roots.dedup();
            if roots.len() > 1 {
                let name = |k: usize| design.spec.factors[k].name.clone();
                return Err(ModelError::Confounded(name(f), name(g)));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub level: usize,
    pub label: String,
    pub bin_low: Option<f64>,
    pub bin_high: Option<f64>,
    pub estimate: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Observations in this original bin.
    pub count: u64,
    /// Fitted column shared by merged bins.
    pub group: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Curve {
    pub factor: String,
    pub points: Vec<CurvePoint>,
}

impl Curve {
    pub fn point(&self, level: usize) -> Option<&CurvePoint> {
        self.points.iter().find(|p| p.level == level)
    }

    /// Largest minus smallest estimate.
    pub fn amplitude(&self) -> f64 {
        let (lo, hi) = self
            .points
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.estimate), hi.max(p.estimate)));
        if lo.is_finite() {
            hi - lo
        } else {
            0.0
        }
    }

    pub fn argmax(&self) -> Option<&CurvePoint> {
        self.points.iter().max_by(|a, b| a.estimate.total_cmp(&b.estimate))
    }

    pub fn argmin(&self) -> Option<&CurvePoint> {
        self.points.iter().min_by(|a, b| a.estimate.total_cmp(&b.estimate))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FitOptions {
    pub standard_errors: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { standard_errors: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub alpha: f64,
    pub alpha_se: f64,
    pub curves: Vec<Curve>,
    pub sigma2: f64,
    pub n: u64,
    pub rss: f64,
    pub tss: f64,
    pub variance_explained: f64,
    /// `1 + sum over factors of (fitted groups - 1)`.
    pub effective_parameters: usize,
    pub iterations: usize,
    /// `||X'y - X'X theta|| / ||X'y||` at the returned solution.
    pub normal_residual: f64,
    pub dropped: DropTally,
    pub grouping: Grouping,
    #[serde(skip)]
    pub spec: ModelSpec,
    #[serde(skip)]
    theta: Vec<f64>,
}

pub fn fit(design: &DesignSystem) -> Result<FitResult, ModelError> {
    fit_with(design, &FitOptions::default())
}

pub fn fit_with(design: &DesignSystem, opts: &FitOptions) -> Result<FitResult, ModelError> {
    if design.n == 0 {
        return Err(ModelError::NoObservations);
    }
    let spec = &design.spec;
    let grouping = Grouping::build(design);
    check_confounding(design, &grouping)?;
    let sys = system(design, &grouping);
    let (mut theta, stats) = pcg(&sys.m, &sys.b, spec.tolerance, spec.max_iter)?;

    // Put each factor exactly on its gauge.
    let n = design.n as f64;
    for f in 0..spec.factors.len() {
        let shift: f64 = grouping
            .group_factor
            .iter()
            .enumerate()
            .filter(|(_, &gf)| gf == f)
            .map(|(g, _)| sys.counts[g + 1] * theta[g + 1])
            .sum::<f64>()
            / n;
        for (g, &gf) in grouping.group_factor.iter().enumerate() {
            if gf == f {
                theta[g + 1] -= shift;
            }
        }
        theta[0] += shift;
    }

    let q = grouping.columns();
    let mut ax = vec![0.0; q];
    sys.m.base.mul_vec(&theta, &mut ax);
    let bnorm = dot(&sys.b, &sys.b).sqrt();
    let rnorm = ax.iter().zip(&sys.b).map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt();
    let normal_residual = if bnorm > 0.0 { rnorm / bnorm } else { rnorm };

    let p_eff = 1 + (0..spec.factors.len()).map(|f| grouping.groups_of(f).saturating_sub(1)).sum::<usize>();
    let rss = (design.sum_y2 - dot(&theta, &sys.b)).max(0.0);
    let tss = (design.sum_y2 - design.sum_y * design.sum_y / n).max(0.0);
    let df = design.n as f64 - p_eff as f64;
    let sigma2 = if df > 0.0 { rss / df } else { f64::NAN };
    let variance_explained = if tss > 0.0 { (1.0 - rss / tss).clamp(0.0, 1.0) } else { 1.0 };

    let se: Vec<f64> = if opts.standard_errors {
        let cols: Vec<usize> = (0..q).collect();
        column_se(&sys, &cols, sigma2, spec)?
    } else {
        vec![f64::NAN; q]
    };

    let curves = build_curves(design, &grouping, &theta, &se);
    Ok(FitResult {
        alpha: theta[0],
        alpha_se: se[0],
        curves,
        sigma2,
        n: design.n,
        rss,
        tss,
        variance_explained,
        effective_parameters: p_eff,
        iterations: stats.iterations,
        normal_residual,
        dropped: design.dropped.clone(),
        grouping,
        spec: spec.clone(),
        theta,
    })
}

fn column_se(sys: &System, cols: &[usize], sigma2: f64, spec: &ModelSpec) -> Result<Vec<f64>, ModelError> {
    let q = sys.b.len();
    cols.par_iter()
        .map(|&j| {
            let mut e = vec![0.0; q];
            e[j] = 1.0;
            let (z, _) = pcg(&sys.m, &e, spec.tolerance.max(1e-10), spec.max_iter)?;
            let mut az = vec![0.0; q];
            sys.m.base.mul_vec(&z, &mut az);
            Ok((sigma2 * dot(&z, &az)).max(0.0).sqrt())
        })
        .collect()
}

fn build_curves(design: &DesignSystem, grouping: &Grouping, theta: &[f64], se: &[f64]) -> Vec<Curve> {
    design
        .spec
        .factors
        .iter()
        .enumerate()
        .map(|(f, factor)| {
            let counts = design.factor_counts(f);
            let points = (0..factor.levels())
                .filter_map(|l| {
                    let g = grouping.level_group[f][l]?;
                    let (bin_low, bin_high) = match factor.bounds(l) {
                        Some((a, b)) => (Some(a), Some(b)),
                        None => (None, None),
                    };
                    Some(CurvePoint {
                        level: l,
                        label: factor.label(l),
                        bin_low,
                        bin_high,
                        estimate: theta[g],
                        se: se[g],
                        ci_low: theta[g] - Z95 * se[g],
                        ci_high: theta[g] + Z95 * se[g],
                        count: counts[l],
                        group: g,
                    })
                })
                .collect();
            Curve { factor: factor.name.clone(), points }
        })
        .collect()
}

/// A single model coefficient.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Coef {
    Alpha,
    Level { factor: String, level: usize },
}

/// Standard errors for selected coefficients; each costs one linear solve.
pub fn standard_errors(fit: &FitResult, design: &DesignSystem, requested: &[Coef]) -> Result<Vec<f64>, ModelError> {
    let sys = system(design, &fit.grouping);
    let cols = requested
        .iter()
        .map(|c| match c {
            Coef::Alpha => Ok(0),
            Coef::Level { factor, level } => {
                let f = fit.spec.factor_index(factor).ok_or_else(|| ModelError::UnknownFactor(factor.clone()))?;
                fit.grouping.level_group[f]
                    .get(*level)
                    .copied()
                    .flatten()
                    .ok_or_else(|| ModelError::SingularDirection(format!("{factor}[{level}]")))
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    column_se(&sys, &cols, fit.sigma2, &fit.spec)
}

impl FitResult {
    pub fn curve(&self, factor: &str) -> Option<&Curve> {
        self.curves.iter().find(|c| c.factor == factor)
    }

    /// Fitted coefficient for each original level of a factor; `None` for
    /// levels that were not fitted.
    pub fn coefficients(&self, factor: &str) -> Option<Vec<Option<f64>>> {
        let f = self.spec.factor_index(factor)?;
        Some(self.grouping.level_group[f].iter().map(|g| g.map(|g| self.theta[g])).collect())
    }

    /// `alpha` plus the coefficient of each factor's level.
    pub fn predict(&self, values: &[FactorValue]) -> Result<f64, ModelError> {
        if values.len() != self.spec.factors.len() {
            return Err(ModelError::Arity { expected: self.spec.factors.len(), got: values.len() });
        }
        let mut y = self.theta[0];
        for (f, (factor, v)) in self.spec.factors.iter().zip(values).enumerate() {
            let unseen = || ModelError::UnseenLevel { factor: factor.name.clone(), level: format!("{v:?}") };
            let level = factor.locate(*v).map_err(|e| match e {
                Unplaced::Missing | Unplaced::OutOfRange => unseen(),
            })?;
            let g = self.grouping.level_group[f][level].ok_or_else(unseen)?;
            y += self.theta[g];
        }
        Ok(y)
    }

    pub fn summary(&self) -> FitSummary {
        FitSummary {
            alpha: self.alpha,
            alpha_se: self.alpha_se,
            sigma2: self.sigma2,
            n: self.n,
            variance_explained: self.variance_explained,
            rss: self.rss,
            effective_parameters: self.effective_parameters,
            solver_iterations: self.iterations,
            normal_residual: self.normal_residual,
            merged_levels: self
                .curves
                .iter()
                .map(|c| {
                    let mut groups: Vec<usize> = c.points.iter().map(|p| p.group).collect();
                    groups.dedup();
                    (c.factor.clone(), c.points.len() - groups.len())
                })
                .collect(),
            dropped: self.dropped.clone(),
            ci_method: CI_METHOD,
            constraint: CONSTRAINT,
        }
    }
}

pub const CI_METHOD: &str = "classical homoskedastic least-squares, estimate +/- 1.96 SE (assumed)";
pub const CONSTRAINT: &str = "count-weighted sum-to-zero per factor";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitSummary {
    pub alpha: f64,
    pub alpha_se: f64,
    pub sigma2: f64,
    pub n: u64,
    pub variance_explained: f64,
    pub rss: f64,
    pub effective_parameters: usize,
    pub solver_iterations: usize,
    pub normal_residual: f64,
    pub merged_levels: std::collections::BTreeMap<String, usize>,
    pub dropped: DropTally,
    pub ci_method: &'static str,
    pub constraint: &'static str,
}

/// Per-level mean of y minus the grand mean, ignoring every other factor.
pub fn marginal_means(design: &DesignSystem, factor: &str) -> Option<Vec<Option<f64>>> {
    let f = design.spec.factor_index(factor)?;
    let grand = design.sum_y / design.n as f64;
    let o = design.offsets[f];
    Some(
        (0..design.spec.factors[f].levels())
            .map(|l| {
                let c = design.counts[o + l];
                (c > 0).then(|| design.rhs[o + l] / c as f64 - grand)
            })
            .collect(),
    )
}
