use serde::Serialize;
use statrs::function::erf::erfc;

use super::ImpactError;

/// Largest group size handled by exact enumeration.
pub const EXACT_MAX: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PMethod {
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MannWhitney {
    /// Pairs with `x > y`, ties counted half.
    pub u: f64,
    pub p_value: f64,
    pub method: PMethod,
}

/// Midranks (1-based) of the pooled sample, plus the tie-group sizes.
fn midranks(x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut pooled: Vec<(f64, usize)> = x.iter().chain(y).copied().zip(0..).collect();
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut ranks = vec![0.0; pooled.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i + 1;
        while j < pooled.len() && pooled[j].0 == pooled[i].0 {
            j += 1;
        }
        let r = (i + j + 1) as f64 / 2.0;
        for k in &pooled[i..j] {
            ranks[k.1] = r;
        }
        if j - i > 1 {
            ties.push(j - i);
        }
        i = j;
    }
    (ranks, ties)
}

/// Two-sided Mann-Whitney U test of `x` against `y`.
pub fn mann_whitney_u(x: &[f64], y: &[f64]) -> Result<MannWhitney, ImpactError> {
    if x.is_empty() || y.is_empty() {
        return Err(ImpactError::EmptySample);
    }
    let (nx, ny) = (x.len(), y.len());
    let (ranks, ties) = midranks(x, y);
    let rx: f64 = ranks[..nx].iter().sum();
    let u = rx - (nx * (nx + 1)) as f64 / 2.0;
    if nx.max(ny) <= EXACT_MAX {
        let p_value = exact_p(&ranks, nx, u);
        return Ok(MannWhitney { u, p_value, method: PMethod::Exact });
    }
    let n = (nx + ny) as f64;
    let mu = (nx * ny) as f64 / 2.0;
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (n * (n - 1.0));
    let var = (nx * ny) as f64 / 12.0 * ((n + 1.0) - tie_term);
    let p_value = if var <= 0.0 {
        1.0
    } else {
        let z = ((u - mu).abs() - 0.5).max(0.0) / var.sqrt();
        erfc(z / std::f64::consts::SQRT_2).min(1.0)
    };
    Ok(MannWhitney { u, p_value, method: PMethod::Normal })
}

/// Permutation p-value over all ways to pick `nx` of the pooled midranks.
/// Doubled midranks are integers, so subset sums are counted exactly.
fn exact_p(ranks: &[f64], nx: usize, u_obs: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let max_sum: usize = doubled.iter().sum();
    // ways[k][s]: subsets of size k with doubled-rank sum s.
    let mut ways = vec![vec![0f64; max_sum + 1]; nx + 1];
    ways[0][0] = 1.0;
    for &d in &doubled {
        for k in (1..=nx).rev() {
            for s in (d..=max_sum).rev() {
                let add = ways[k - 1][s - d];
                if add != 0.0 {
                    ways[k][s] += add;
                }
            }
        }
    }
    let ny = ranks.len() - nx;
    let mu = (nx * ny) as f64 / 2.0;
    let obs_dev = (u_obs - mu).abs();
    let offset = (nx * (nx + 1)) as f64 / 2.0;
    let (mut hit, mut total) = (0.0, 0.0);
    for (s, &w) in ways[nx].iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let u = s as f64 / 2.0 - offset;
        total += w;
        if (u - mu).abs() >= obs_dev - 1e-9 {
            hit += w;
        }
    }
    (hit / total).min(1.0)
}
