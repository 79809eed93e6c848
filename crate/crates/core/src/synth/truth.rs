//! Ground-truth latency curves for the synthetic cohort.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::events::KeyLabel;
use crate::features::FeatureCoding;
use crate::io::{self, IoError, LogFormat, Row};
use crate::model::spec::{
    default_d_edges, default_t_edges, default_w_edges, DURATION, ENTROPY, KEY, POSITION, TIME_AWAKE, TIME_OF_DAY,
};
use crate::model::BinEdges;

/// Smooth circadian, wake-time and duration curves, in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothCurves {
    /// Peak-to-trough size of the time-of-day cosine.
    pub t_amplitude: f64,
    /// Slowest clock hour.
    pub nadir_h: f64,
    pub inertia: f64,
    /// Time constant of the post-wake decay; 0 disables inertia.
    pub inertia_tau_h: f64,
    /// Saturation level of the wake-time rise.
    pub homeostatic: f64,
    pub homeostatic_scale_h: f64,
    /// Value at 12 h of sleep; the curve is quadratic and zero at `d_optimum_h`.
    pub d_amplitude: f64,
    pub d_optimum_h: f64,
}

impl SmoothCurves {
    pub fn keystroke() -> Self {
        SmoothCurves {
            t_amplitude: 40.0,
            nadir_h: 4.0,
            inertia: 52.0,
            inertia_tau_h: 0.75,
            homeostatic: 20.0,
            homeostatic_scale_h: 14.0,
            d_amplitude: 12.0,
            d_optimum_h: 7.25,
        }
    }

    pub fn click() -> Self {
        SmoothCurves {
            t_amplitude: 2100.0,
            nadir_h: 4.0,
            inertia: 1300.0,
            inertia_tau_h: 0.75,
            homeostatic: 900.0,
            homeostatic_scale_h: 14.0,
            d_amplitude: 250.0,
            d_optimum_h: 7.25,
        }
    }

    pub fn zero() -> Self {
        SmoothCurves {
            t_amplitude: 0.0,
            nadir_h: 4.0,
            inertia: 0.0,
            inertia_tau_h: 0.0,
            homeostatic: 0.0,
            homeostatic_scale_h: 14.0,
            d_amplitude: 0.0,
            d_optimum_h: 7.25,
        }
    }

    pub fn circadian(&self, t: f64, nadir_h: f64) -> f64 {
        0.5 * self.t_amplitude * (TAU * (t - nadir_h) / 24.0).cos()
    }

    pub fn wake(&self, w: f64) -> f64 {
        let inertia = if self.inertia_tau_h > 0.0 { self.inertia * (-w / self.inertia_tau_h).exp() } else { 0.0 };
        inertia + self.homeostatic * (1.0 - (-(w / self.homeostatic_scale_h).powi(2)).exp())
    }

    pub fn duration(&self, d: f64) -> f64 {
        let x = (d - self.d_optimum_h) / (12.0 - self.d_optimum_h);
        self.d_amplitude * x * x
    }

    /// Curves sampled at bin midpoints and rounded to whole milliseconds.
    pub fn binned(&self) -> BinnedCurves {
        let sample = |edges: BinEdges, f: &dyn Fn(f64) -> f64| {
            let v = (0..edges.len()).map(|b| f(edges.midpoint(b)).round()).collect();
            (edges, v)
        };
        let (t_edges, t) = sample(default_t_edges(), &|x| self.circadian(x, self.nadir_h));
        let (w_edges, w) = sample(default_w_edges(), &|x| self.wake(x));
        let (d_edges, d) = sample(default_d_edges(), &|x| self.duration(x));
        BinnedCurves { t_edges, t, w_edges, w, d_edges, d }
    }
}

/// Piecewise-constant curves on the default model bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedCurves {
    pub t_edges: BinEdges,
    pub t: Vec<f64>,
    pub w_edges: BinEdges,
    pub w: Vec<f64>,
    pub d_edges: BinEdges,
    pub d: Vec<f64>,
}

impl BinnedCurves {
    pub fn zero() -> Self {
        SmoothCurves::zero().binned()
    }

    /// Bin indices of `(t, w, d)`; `None` for `w`/`d` outside the bins.
    pub fn locate(&self, t: f64, w: Option<f64>, d: Option<f64>) -> (Option<usize>, Option<usize>, Option<usize>) {
        (self.t_edges.locate(t), w.and_then(|w| self.w_edges.locate(w)), d.and_then(|d| self.d_edges.locate(d)))
    }
}

/// How the time-of-day, wake-time and duration terms are produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveModel {
    /// Exact forward model of the estimator.
    Binned(BinnedCurves),
    /// Continuous curves; tests the piecewise-constant approximation.
    Smooth(SmoothCurves),
}

impl CurveModel {
    pub fn is_binned(&self) -> bool {
        matches!(self, CurveModel::Binned(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModel {
    /// Additive normal noise with this standard deviation.
    Gaussian { sd: f64 },
    /// Mean-preserving multiplicative log-normal noise with this log-scale sigma.
    LogNormal { sigma: f64 },
}

/// Per-key offsets in milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyOffsets {
    /// Offsets of `a..z`.
    pub letters: Vec<f64>,
    pub digit: f64,
    pub space: f64,
    pub delete: f64,
    /// Shared by every upper-case letter.
    pub capital: f64,
    pub other: f64,
}

impl KeyOffsets {
    pub fn keystroke() -> Self {
        // Home-row and frequent letters are a little quicker.
        let letters = "abcdefghijklmnopqrstuvwxyz"
            .chars()
            .map(|c| match c {
                'a' | 's' | 'd' | 'f' | 'j' | 'k' | 'l' => -8.0,
                'e' | 't' | 'o' | 'n' | 'i' | 'r' => -4.0,
                'q' | 'z' | 'x' | 'p' => 10.0,
                'b' | 'y' | 'v' | 'w' => 5.0,
                _ => 0.0,
            })
            .collect();
        KeyOffsets { letters, digit: 12.0, space: 15.0, delete: 40.0, capital: 30.0, other: 20.0 }
    }

    pub fn zero() -> Self {
        KeyOffsets { letters: vec![0.0; 26], digit: 0.0, space: 0.0, delete: 0.0, capital: 0.0, other: 0.0 }
    }

    pub fn get(&self, label: KeyLabel) -> f64 {
        match label {
            KeyLabel::Delete => self.delete,
            KeyLabel::Insert(c) if c.is_ascii_lowercase() => self.letters[(c as u8 - b'a') as usize],
            KeyLabel::Insert(c) if c.is_ascii_uppercase() => self.capital,
            KeyLabel::Insert(c) if c.is_ascii_digit() => self.digit,
            KeyLabel::Insert(' ') => self.space,
            KeyLabel::Insert(_) => self.other,
        }
    }
}

/// Click-model offsets, in milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClickOffsets {
    /// Positions 1..9 then "10+".
    pub position: Vec<f64>,
    /// `{0}`, `(0,1]`, `(1,2]`, `(2,inf)`.
    pub entropy: Vec<f64>,
}

impl ClickOffsets {
    pub fn default_offsets() -> Self {
        ClickOffsets {
            position: vec![-900.0, -500.0, -200.0, 0.0, 200.0, 400.0, 600.0, 800.0, 900.0, 1100.0],
            entropy: vec![-1100.0, -400.0, 500.0, 1000.0],
        }
    }

    pub fn zero() -> Self {
        ClickOffsets { position: vec![0.0; 10], entropy: vec![0.0; 4] }
    }
}

/// Sleep-pattern couplings for the single- and multi-night analyses, as
/// fractions of the intercept.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Couplings {
    /// Added when the night's midsleep is at least `late_threshold_h` later than usual.
    pub late_penalty: f64,
    pub late_threshold_h: f64,
    /// Day-1 penalty after SI and II patterns.
    pub si_day1: f64,
    pub ii_day1: f64,
    /// Penalties fall linearly to zero on these days after the pattern.
    pub si_zero_day: f64,
    pub ii_zero_day: f64,
}

impl Couplings {
    pub fn none() -> Self {
        Couplings {
            late_penalty: 0.0,
            late_threshold_h: 1.0,
            si_day1: 0.0,
            ii_day1: 0.0,
            si_zero_day: 4.0,
            ii_zero_day: 7.0,
        }
    }

    pub fn is_none(&self) -> bool {
        self.late_penalty == 0.0 && self.si_day1 == 0.0 && self.ii_day1 == 0.0
    }

    fn decay(day1: f64, zero_day: f64, day: usize) -> f64 {
        if day == 0 || zero_day <= 1.0 {
            return 0.0;
        }
        let frac = (zero_day - day as f64) / (zero_day - 1.0);
        day1 * frac.clamp(0.0, 1.0)
    }

    pub fn si_penalty(&self, day: usize) -> f64 {
        Self::decay(self.si_day1, self.si_zero_day, day)
    }

    pub fn ii_penalty(&self, day: usize) -> f64 {
        Self::decay(self.ii_day1, self.ii_zero_day, day)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub alpha_ms: f64,
    pub curves: CurveModel,
    pub keys: KeyOffsets,
    pub noise: NoiseModel,
    pub click_alpha_ms: f64,
    pub click_curves: CurveModel,
    pub click_offsets: ClickOffsets,
    pub click_noise: NoiseModel,
    pub keystroke_couplings: Couplings,
    pub click_couplings: Couplings,
}

impl Default for GroundTruth {
    fn default() -> Self {
        GroundTruth {
            alpha_ms: 225.0,
            curves: CurveModel::Binned(SmoothCurves::keystroke().binned()),
            keys: KeyOffsets::keystroke(),
            noise: NoiseModel::Gaussian { sd: 60.0 },
            click_alpha_ms: 9280.0,
            click_curves: CurveModel::Binned(SmoothCurves::click().binned()),
            click_offsets: ClickOffsets::default_offsets(),
            click_noise: NoiseModel::Gaussian { sd: 4000.0 },
            keystroke_couplings: Couplings::none(),
            click_couplings: Couplings::none(),
        }
    }
}

impl GroundTruth {
    /// Every curve zero, no noise.
    pub fn flat(alpha_ms: f64) -> Self {
        GroundTruth {
            alpha_ms,
            curves: CurveModel::Binned(BinnedCurves::zero()),
            keys: KeyOffsets::zero(),
            noise: NoiseModel::Gaussian { sd: 0.0 },
            click_alpha_ms: 9280.0,
            click_curves: CurveModel::Binned(BinnedCurves::zero()),
            click_offsets: ClickOffsets::zero(),
            click_noise: NoiseModel::Gaussian { sd: 0.0 },
            keystroke_couplings: Couplings::none(),
            click_couplings: Couplings::none(),
        }
    }

    /// Continuous keystroke and click curves.
    pub fn smooth() -> Self {
        GroundTruth {
            curves: CurveModel::Smooth(SmoothCurves::keystroke()),
            click_curves: CurveModel::Smooth(SmoothCurves::click()),
            ..GroundTruth::default()
        }
    }

    /// Reference-scale sleep couplings on top of the default curves.
    pub fn with_reference_couplings(mut self) -> Self {
        self.keystroke_couplings = Couplings {
            late_penalty: 0.073,
            late_threshold_h: 1.0,
            si_day1: 0.012,
            ii_day1: 0.048,
            si_zero_day: 4.0,
            ii_zero_day: 7.0,
        };
        self.click_couplings = Couplings { si_day1: 0.027, ii_day1: 0.073, ..self.keystroke_couplings };
        self
    }

    /// Generator-gauge curve values sampled on the default bins.
    pub fn keystroke_bins(&self) -> BinnedCurves {
        self.curves.sampled()
    }

    pub fn click_bins(&self) -> BinnedCurves {
        self.click_curves.sampled()
    }

    /// Keystroke truth in the estimator's gauge for the realised observations.
    pub fn export_keystroke(&self, tally: &KeystrokeTally) -> GaugedTruth {
        let b = self.keystroke_bins();
        let keys: Vec<(String, f64, u64)> =
            tally.keys.iter().map(|(l, &c)| (l.to_string(), self.keys.get(*l), c)).collect();
        let mut factors = vec![categorical(KEY, keys)];
        factors.extend(binned_factors(&b, &tally.t, &tally.w, &tally.d));
        GaugedTruth::new(self.alpha_ms, tally.n, factors)
    }

    /// Click truth (milliseconds) in the estimator's gauge, with entropy
    /// levels taken from each query's true click distribution.
    pub fn export_click(&self, tally: &ClickTally) -> GaugedTruth {
        let b = self.click_bins();
        let coding = FeatureCoding::default();
        let pos = coding
            .position_levels()
            .into_iter()
            .zip(&self.click_offsets.position)
            .zip(&tally.pos)
            .map(|((l, &v), &c)| (l, v, c))
            .collect();
        let ent = coding
            .entropy_levels()
            .into_iter()
            .zip(&self.click_offsets.entropy)
            .zip(&tally.ent)
            .map(|((l, &v), &c)| (l, v, c))
            .collect();
        let mut factors = vec![categorical(POSITION, pos), categorical(ENTROPY, ent)];
        factors.extend(binned_factors(&b, &tally.t, &tally.w, &tally.d));
        GaugedTruth::new(self.click_alpha_ms, tally.n, factors)
    }
}

impl CurveModel {
    /// Binned values, or smooth curves at bin midpoints.
    pub fn sampled(&self) -> BinnedCurves {
        match self {
            CurveModel::Binned(b) => b.clone(),
            CurveModel::Smooth(s) => s.binned_exact(),
        }
    }
}

fn categorical(name: &str, levels: Vec<(String, f64, u64)>) -> (String, Vec<GaugedLevel>) {
    let levels = levels
        .into_iter()
        .map(|(label, value, count)| GaugedLevel { label, bin_low: None, bin_high: None, value, count })
        .collect();
    (name.to_string(), levels)
}

fn binned_factors(b: &BinnedCurves, t: &[u64], w: &[u64], d: &[u64]) -> Vec<(String, Vec<GaugedLevel>)> {
    let one = |name: &str, edges: &BinEdges, values: &[f64], counts: &[u64]| {
        let levels = (0..edges.len())
            .map(|i| {
                let (lo, hi) = edges.bounds(i);
                GaugedLevel {
                    label: edges.label(i),
                    bin_low: Some(lo),
                    bin_high: Some(hi),
                    value: values[i],
                    count: counts.get(i).copied().unwrap_or(0),
                }
            })
            .collect();
        (name.to_string(), levels)
    };
    vec![
        one(TIME_OF_DAY, &b.t_edges, &b.t, t),
        one(TIME_AWAKE, &b.w_edges, &b.w, w),
        one(DURATION, &b.d_edges, &b.d, d),
    ]
}

/// Per-level counts of the keystroke observations the pipeline will fit.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeystrokeTally {
    pub n: u64,
    pub keys: BTreeMap<KeyLabel, u64>,
    pub t: Vec<u64>,
    pub w: Vec<u64>,
    pub d: Vec<u64>,
}

/// Per-level counts of fitted click observations.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClickTally {
    pub n: u64,
    pub pos: Vec<u64>,
    pub ent: Vec<u64>,
    pub t: Vec<u64>,
    pub w: Vec<u64>,
    pub d: Vec<u64>,
}

fn bump(v: &mut Vec<u64>, i: usize, len: usize) {
    if v.len() < len {
        v.resize(len, 0);
    }
    v[i] += 1;
}

fn add_into(a: &mut Vec<u64>, b: &[u64]) {
    if a.len() < b.len() {
        a.resize(b.len(), 0);
    }
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
}

/// Bin indices of one fitted observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BinKey {
    pub t: usize,
    pub w: usize,
    pub d: usize,
}

impl KeystrokeTally {
    pub fn add(&mut self, label: KeyLabel, bins: BinKey, curves: &BinnedCurves) {
        self.n += 1;
        *self.keys.entry(label).or_default() += 1;
        bump(&mut self.t, bins.t, curves.t.len());
        bump(&mut self.w, bins.w, curves.w.len());
        bump(&mut self.d, bins.d, curves.d.len());
    }

    pub fn merge(&mut self, other: &KeystrokeTally) {
        self.n += other.n;
        for (k, c) in &other.keys {
            *self.keys.entry(*k).or_default() += c;
        }
        add_into(&mut self.t, &other.t);
        add_into(&mut self.w, &other.w);
        add_into(&mut self.d, &other.d);
    }
}

impl ClickTally {
    pub fn add(&mut self, pos_level: usize, ent_level: usize, bins: BinKey, curves: &BinnedCurves) {
        self.n += 1;
        bump(&mut self.pos, pos_level, 10);
        bump(&mut self.ent, ent_level, 4);
        bump(&mut self.t, bins.t, curves.t.len());
        bump(&mut self.w, bins.w, curves.w.len());
        bump(&mut self.d, bins.d, curves.d.len());
    }

    pub fn merge(&mut self, other: &ClickTally) {
        self.n += other.n;
        add_into(&mut self.pos, &other.pos);
        add_into(&mut self.ent, &other.ent);
        add_into(&mut self.t, &other.t);
        add_into(&mut self.w, &other.w);
        add_into(&mut self.d, &other.d);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaugedLevel {
    pub label: String,
    pub bin_low: Option<f64>,
    pub bin_high: Option<f64>,
    pub value: f64,
    pub count: u64,
}

/// Truth with every curve at count-weighted mean zero and the shifts folded
/// into the intercept.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaugedTruth {
    pub alpha: f64,
    pub n: u64,
    pub factors: Vec<(String, Vec<GaugedLevel>)>,
}

impl GaugedTruth {
    fn new(alpha: f64, n: u64, mut factors: Vec<(String, Vec<GaugedLevel>)>) -> Self {
        let mut alpha = alpha;
        if n > 0 {
            for (_, levels) in &mut factors {
                let mean = levels.iter().map(|l| l.value * l.count as f64).sum::<f64>() / n as f64;
                alpha += mean;
                for l in levels.iter_mut() {
                    l.value -= mean;
                }
            }
        }
        GaugedTruth { alpha, n, factors }
    }

    pub fn factor(&self, name: &str) -> Option<&[GaugedLevel]> {
        self.factors.iter().find(|(n, _)| n == name).map(|(_, l)| l.as_slice())
    }

    pub fn value(&self, factor: &str, label: &str) -> Option<f64> {
        self.factor(factor)?.iter().find(|l| l.label == label).map(|l| l.value)
    }

    /// Largest minus smallest value over populated levels.
    pub fn amplitude(&self, factor: &str) -> f64 {
        let v: Vec<f64> = self.factor(factor).unwrap_or(&[]).iter().filter(|l| l.count > 0).map(|l| l.value).collect();
        if v.is_empty() {
            return 0.0;
        }
        v.iter().copied().fold(f64::NEG_INFINITY, f64::max) - v.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn rows(&self) -> Vec<TruthRow> {
        let mut out = vec![TruthRow {
            factor: "alpha".into(),
            bin: String::new(),
            bin_low: None,
            bin_high: None,
            true_value: self.alpha,
            count: self.n,
        }];
        for (name, levels) in &self.factors {
            for l in levels {
                out.push(TruthRow {
                    factor: name.clone(),
                    bin: l.label.clone(),
                    bin_low: l.bin_low,
                    bin_high: l.bin_high,
                    true_value: l.value,
                    count: l.count,
                });
            }
        }
        out
    }

    /// Scale every value, e.g. milliseconds to seconds.
    pub fn scaled(mut self, factor: f64) -> Self {
        self.alpha *= factor;
        for (_, levels) in &mut self.factors {
            for l in levels {
                l.value *= factor;
            }
        }
        self
    }
}

/// One ground-truth level, in the layout of the fitted curve table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub factor: String,
    pub bin: String,
    pub bin_low: Option<f64>,
    pub bin_high: Option<f64>,
    pub true_value: f64,
    pub count: u64,
}

impl Row for TruthRow {
    const HEADER: &'static [&'static str] = &["factor", "bin", "bin_low", "bin_high", "true_value", "count"];
}

pub fn write_truth<W: Write>(writer: W, truth: &GaugedTruth) -> Result<(), IoError> {
    io::write_rows(writer, LogFormat::Csv, truth.rows())
}

impl SmoothCurves {
    /// Midpoint samples without rounding.
    pub fn binned_exact(&self) -> BinnedCurves {
        let sample = |edges: BinEdges, f: &dyn Fn(f64) -> f64| {
            let v = (0..edges.len()).map(|b| f(edges.midpoint(b))).collect();
            (edges, v)
        };
        let (t_edges, t) = sample(default_t_edges(), &|x| self.circadian(x, self.nadir_h));
        let (w_edges, w) = sample(default_w_edges(), &|x| self.wake(x));
        let (d_edges, d) = sample(default_d_edges(), &|x| self.duration(x));
        BinnedCurves { t_edges, t, w_edges, w, d_edges, d }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smooth_shapes() {
        let s = SmoothCurves::keystroke();
        assert!((s.circadian(4.0, 4.0) - 20.0).abs() < 1e-12);
        assert!((s.circadian(16.0, 4.0) + 20.0).abs() < 1e-12);
        assert!(s.wake(0.0) > s.wake(1.0) && s.wake(1.0) > s.wake(2.0));
        assert!(s.wake(16.0) > s.wake(4.0));
        assert_eq!(s.duration(7.25), 0.0);
        assert!((s.duration(12.0) - 12.0).abs() < 1e-12);
    }

    #[test]
    fn binned_is_integer_valued_midpoint_sample() {
        let s = SmoothCurves::keystroke();
        let b = s.binned();
        assert_eq!(b.t.len(), 24);
        assert_eq!(b.w.len(), 36);
        assert_eq!(b.d.len(), 16);
        for (i, v) in b.w.iter().enumerate() {
            assert_eq!(v.fract(), 0.0);
            assert!((v - s.wake(b.w_edges.midpoint(i))).abs() <= 0.5);
        }
    }

    #[test]
    fn zero_inertia_matches_binned_at_midpoints() {
        let s = SmoothCurves { inertia_tau_h: 0.0, ..SmoothCurves::keystroke() };
        let b = s.binned();
        for (i, v) in b.w.iter().enumerate() {
            let m = b.w_edges.midpoint(i);
            assert!((v - s.wake(m)).abs() <= 0.5);
            assert!((s.wake(m) - s.homeostatic * (1.0 - (-(m / 14.0f64).powi(2)).exp())).abs() < 1e-12);
        }
    }

    #[test]
    fn coupling_decay() {
        let c = GroundTruth::default().with_reference_couplings().keystroke_couplings;
        assert!((c.si_penalty(1) - 0.012).abs() < 1e-15);
        assert_eq!(c.si_penalty(4), 0.0);
        assert!(c.ii_penalty(6) > 0.0);
        assert_eq!(c.ii_penalty(7), 0.0);
        assert_eq!(c.ii_penalty(0), 0.0);
    }
}
