//! One function per subcommand. Each returns its one-line summary.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;

use chronofit::events::{
    parse_events, ClickObservation, ClickRow, KeystrokeObservation, KeystrokeOptions, KeystrokeRow, Measurement,
    RawEvent,
};
use chronofit::features::{
    click_entropy, hourly_profile, key_label_counts, learning_curve, within_user_zscore, EntropyRow, FeatureCoding,
    QueryEntropyTable, DEFAULT_Z_MIN_COUNT,
};
use chronofit::impact::{duration_effect, recovery_analysis, timing_effect, Pattern, RecoveryOptions, Weighting};
use chronofit::io::{read_validated, write_rows, LogFormat, Row};
use chronofit::model::binning::BinEdges;
use chronofit::model::export::{write_curves, write_summary};
use chronofit::model::{build_design, BinOverrides, ModelSpec};
use chronofit::pipeline::{by_user, extract_all, prepare_sleep};
use chronofit::report::{
    chronotype_curves, cohort_stats as stats_of, hour_rows, hourly_rows, render_dir, ProfileRow, DEFAULT_HOUR_MIN_COUNT,
};
use chronofit::sleep::{cohort_chronotypes, parse_sleep, validate_sleep, MidsleepBaseline, SleepRecord, UserSleep};
use chronofit::stats::median;
use chronofit::synth::{generate_cohort, GroundTruth, NoiseModel, SynthConfig};

use crate::{
    BinArgs, ChronotypeArgs, CohortStatsArgs, ExtractArgs, FeaturesArgs, FitArgs, ImpactArgs, ModelKind, Preset,
    ReportArgs, SimulateArgs, TruthKind,
};

const LEARNING_CAP: usize = 10;

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("cannot open {}", path.display()))?))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    Ok(BufWriter::new(File::create(&path).with_context(|| format!("cannot create {}", path.display()))?))
}

fn out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create directory {}", dir.display()))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn write_csv<T: Row>(dir: &Path, name: &str, rows: impl IntoIterator<Item = T>) -> Result<()> {
    write_rows(create(dir, name)?, LogFormat::Csv, rows)?;
    Ok(())
}

fn warn_malformed(path: &Path, malformed: usize, errors: &[(usize, String)]) {
    if malformed > 0 {
        eprintln!("warning: {}: skipped {malformed} malformed records", path.display());
        for (line, reason) in errors {
            eprintln!("  line {line}: {reason}");
        }
    }
}

fn read_table<T, U>(path: &Path) -> Result<Vec<U>>
where
    T: DeserializeOwned,
    U: TryFrom<T, Error = String>,
{
    let parsed = read_validated(open(path)?, LogFormat::from_path(path), U::try_from)
        .with_context(|| format!("reading {}", path.display()))?;
    warn_malformed(path, parsed.malformed, &parsed.errors);
    Ok(parsed.items)
}

fn read_keystrokes(path: &Path) -> Result<Vec<KeystrokeObservation>> {
    read_table::<KeystrokeRow, _>(path)
}

fn read_clicks(path: &Path) -> Result<Vec<ClickObservation>> {
    read_table::<ClickRow, _>(path)
}

fn read_events(path: &Path) -> Result<(Vec<RawEvent>, usize)> {
    let parsed =
        parse_events(open(path)?, LogFormat::from_path(path)).with_context(|| format!("reading {}", path.display()))?;
    warn_malformed(path, parsed.malformed, &parsed.errors);
    Ok((parsed.items, parsed.malformed))
}

fn read_sleep(path: &Path) -> Result<(Vec<SleepRecord>, usize)> {
    let parsed =
        parse_sleep(open(path)?, LogFormat::from_path(path)).with_context(|| format!("reading {}", path.display()))?;
    warn_malformed(path, parsed.malformed, &parsed.errors);
    Ok((parsed.items, parsed.malformed))
}

/// `<dir>/<stem>.jsonl` or `<dir>/<stem>.csv`, whichever exists.
fn find_table(dir: &Path, stem: &str) -> Result<PathBuf> {
    ["jsonl", "csv"]
        .iter()
        .map(|ext| dir.join(format!("{stem}.{ext}")))
        .find(|p| p.exists())
        .with_context(|| format!("no {stem}.jsonl or {stem}.csv in {}", dir.display()))
}

fn sort_by_user<T: Measurement>(obs: &mut [T]) {
    obs.sort_by(|a, b| a.user_id().cmp(b.user_id()).then(a.ts_utc().cmp(&b.ts_utc())));
}

fn maybe_zscore<T: Measurement + Clone>(obs: Vec<T>, zscore: bool) -> Vec<T> {
    if zscore {
        within_user_zscore(&obs, DEFAULT_Z_MIN_COUNT).0
    } else {
        obs
    }
}

pub fn simulate(a: &SimulateArgs) -> Result<String> {
    let config = match &a.config {
        Some(path) => serde_json::from_reader(open(path)?).with_context(|| format!("parsing {}", path.display()))?,
        None => match a.preset {
            Preset::Default => SynthConfig::sized(a.users, a.nights, a.seed),
            Preset::Exact => SynthConfig::exact(a.users, a.nights, a.seed),
            Preset::Correlated => SynthConfig::correlated(a.users, a.nights, a.seed),
            Preset::ChronotypeThirds => SynthConfig::chronotype_thirds(a.users, a.nights, a.seed),
            Preset::GenderGap => SynthConfig::gender_gap(a.users, a.nights, a.seed),
            Preset::Recovery => SynthConfig::recovery(a.users, a.nights, a.seed),
        },
    };
    let mut truth = match a.truth {
        TruthKind::Binned => GroundTruth::default(),
        TruthKind::Smooth => GroundTruth::smooth(),
        TruthKind::Flat => GroundTruth::flat(GroundTruth::default().alpha_ms),
    };
    if let Some(sd) = a.noise_sd {
        truth.noise = NoiseModel::Gaussian { sd };
    }
    if a.couplings {
        truth = truth.with_reference_couplings();
    }
    let cohort = generate_cohort(&config, &truth)?;
    out_dir(&a.out)?;
    cohort.write(&a.out, a.format.into())?;
    write_json(&a.out, "config.json", &json!({ "config": config, "truth": truth }))?;
    let s = cohort.summary();
    Ok(format!(
        "simulate: {} users, {} events, {} sleep records, {} keystroke and {} click observations -> {}",
        s.users,
        s.events,
        s.sleep_records,
        s.keystroke_observations,
        s.click_observations,
        a.out.display()
    ))
}

pub fn extract(a: &ExtractArgs) -> Result<String> {
    let (events, malformed_events) = read_events(&a.input)?;
    let (records, malformed_sleep) = match &a.sleep {
        Some(p) => read_sleep(p)?,
        None => (Vec::new(), 0),
    };
    let (sleep, rejected) = prepare_sleep(records, MidsleepBaseline::AllNights);
    let opts = KeystrokeOptions { suffix_only: a.suffix_only };
    let ex = extract_all(events, &sleep, &opts)?;
    out_dir(&a.out)?;
    let format: LogFormat = a.format.into();
    let ext = format.extension();
    write_rows(create(&a.out, &format!("keystrokes.{ext}"))?, format, ex.keystrokes.iter().map(KeystrokeRow::from))?;
    write_rows(create(&a.out, &format!("clicks.{ext}"))?, format, ex.clicks.iter().map(ClickRow::from))?;
    write_json(
        &a.out,
        "extract.json",
        &json!({
            "stats": ex.stats,
            "malformed_events": malformed_events,
            "malformed_sleep": malformed_sleep,
            "rejected_sleep": rejected,
        }),
    )?;
    let s = ex.stats;
    Ok(format!(
        "extract: {} users, {} keystroke ({} linked) and {} click ({} linked) observations, {} mobile events dropped -> {}",
        s.users,
        s.keystrokes,
        s.keystrokes_linked,
        s.clicks,
        s.clicks_linked,
        s.dropped_mobile,
        a.out.display()
    ))
}

pub fn features(a: &FeaturesArgs) -> Result<String> {
    let (events, _) = read_events(&a.input)?;
    let table = click_entropy(&events);
    drop(events);
    out_dir(&a.out)?;
    table.write_csv(create(&a.out, "entropy.csv")?)?;
    let mut summary = format!("features: entropy for {} queries", table.len());
    if let Some(dir) = &a.observations {
        let mut keys = read_keystrokes(&find_table(dir, "keystrokes")?)?;
        sort_by_user(&mut keys);
        let (z, excluded) = within_user_zscore(&keys, DEFAULT_Z_MIN_COUNT);
        let mut rows = hourly_rows("raw", &hourly_profile(&keys));
        rows.extend(hourly_rows("zscore", &hourly_profile(&z)));
        write_csv(&a.out, "hourly.csv", rows)?;
        let clicks = read_clicks(&find_table(dir, "clicks")?)?;
        let learning: Vec<ProfileRow> = learning_curve(&clicks, LEARNING_CAP)
            .into_iter()
            .map(|(i, s)| ProfileRow::new("clicks", i as f64, s))
            .collect();
        write_csv(&a.out, "learning_curve.csv", learning)?;
        if a.zscore {
            let format: LogFormat = a.format.into();
            let name = format!("keystrokes_z.{}", format.extension());
            write_rows(create(&a.out, &name)?, format, z.iter().map(KeystrokeRow::from))?;
        }
        summary += &format!(
            ", hourly profiles over {} keystrokes ({} users excluded from z-scores), learning curve over {} clicks",
            keys.len(),
            excluded.len(),
            clicks.len()
        );
    }
    Ok(format!("{summary} -> {}", a.out.display()))
}

fn bin_overrides(b: &BinArgs) -> Result<BinOverrides> {
    let parse = |flag: &str, s: &Option<String>| -> Result<Option<BinEdges>> {
        s.as_deref().map(|s| BinEdges::parse(s).with_context(|| format!("--{flag} `{s}`"))).transpose()
    };
    Ok(BinOverrides { t: parse("bins-t", &b.bins_t)?, w: parse("bins-w", &b.bins_w)?, d: parse("bins-d", &b.bins_d)? })
}

pub fn fit(a: &FitArgs) -> Result<String> {
    let bins = bin_overrides(&a.bins)?;
    let design = match a.model {
        ModelKind::Keystroke => {
            let obs = maybe_zscore(read_keystrokes(&a.input)?, a.zscore);
            let coding = FeatureCoding::default().with_key_counts(&key_label_counts(&obs));
            let spec = ModelSpec::keystroke(coding.key_levels(), &bins);
            build_design(&spec, obs.iter().map(|o| (o.latency_ms, coding.encode_keystroke(o).to_vec())))
        }
        ModelKind::Click => {
            let Some(path) = &a.entropy else { bail!("the click model needs --entropy (written by `features`)") };
            let rows = read_validated::<_, EntropyRow, _, _>(open(path)?, LogFormat::Csv, Ok)?.items;
            let table = QueryEntropyTable::from_rows(rows);
            let obs = maybe_zscore(read_clicks(&a.input)?, a.zscore);
            let coding = FeatureCoding::default();
            let spec = ModelSpec::click(coding.position_levels(), coding.entropy_levels(), &bins);
            build_design(&spec, obs.iter().map(|o| (o.latency_s, coding.encode_click(o, &table).to_vec())))
        }
    };
    let f = chronofit::model::fit(&design)?;
    out_dir(&a.out)?;
    write_curves(create(&a.out, "curves.csv")?, &f)?;
    let mut w = create(&a.out, "fit_summary.json")?;
    write_summary(&mut w, &f)?;
    w.flush()?;
    let dropped = design.dropped.total();
    Ok(format!(
        "fit: {} observations ({} without full context), alpha {:.4}, {:.1}% variance explained, {} solver iterations -> {}",
        f.n,
        dropped,
        f.alpha,
        100.0 * f.variance_explained,
        f.iterations,
        a.out.display()
    ))
}

fn impact_of<T: Measurement + Clone + Sync>(
    mut obs: Vec<T>,
    sleep: &std::collections::BTreeMap<String, UserSleep>,
    a: &ImpactArgs,
) -> Result<String> {
    sort_by_user(&mut obs);
    let obs = maybe_zscore(obs, a.zscore);
    let duration = duration_effect(&obs).context("duration analysis")?;
    let timing = timing_effect(&obs, a.weekday_only).context("timing analysis")?;
    let users: Vec<(&str, &[T])> = by_user(&obs);
    let linked: Vec<(&[T], &UserSleep)> = users.iter().filter_map(|(u, o)| Some((*o, sleep.get(*u)?))).collect();
    let opts = RecoveryOptions {
        weighting: if a.user_weighted { Weighting::Users } else { Weighting::Observations },
        same_users: a.same_users,
    };
    let recovery = recovery_analysis(&linked, &opts);
    out_dir(&a.out)?;
    write_csv(&a.out, "duration_effect.csv", duration.rows())?;
    write_csv(&a.out, "timing_effect.csv", timing.rows())?;
    write_csv(&a.out, "recovery.csv", recovery.rows())?;
    write_json(&a.out, "impact.json", &json!({ "duration": duration, "timing": timing, "recovery": recovery }))?;
    let day = |p: Pattern| {
        recovery.label(p).and_then(|c| c.recovery_day).map_or_else(|| "none".to_string(), |d| d.to_string())
    };
    Ok(format!(
        "impact: {} observations, {} duration and {} timing bins tested, recovery day SI {} II {} over {} users -> {}",
        obs.len(),
        duration.bins.len(),
        timing.bins.len(),
        day(Pattern::SI),
        day(Pattern::II),
        recovery.users,
        a.out.display()
    ))
}

pub fn impact(a: &ImpactArgs) -> Result<String> {
    let (records, _) = read_sleep(&a.sleep)?;
    let (sleep, _) = prepare_sleep(records, MidsleepBaseline::AllNights);
    match a.model {
        ModelKind::Keystroke => impact_of(read_keystrokes(&a.input)?, &sleep, a),
        ModelKind::Click => impact_of(read_clicks(&a.input)?, &sleep, a),
    }
}

pub fn chronotype(a: &ChronotypeArgs) -> Result<String> {
    let (records, _) = read_sleep(&a.sleep)?;
    let (sleep, _) = prepare_sleep(records, MidsleepBaseline::AllNights);
    let (profiles, errors) = cohort_chronotypes(&sleep);
    if profiles.is_empty() {
        bail!("no user has both free-day and workday nights");
    }
    out_dir(&a.out)?;
    write_csv(&a.out, "chronotypes.csv", profiles.iter().cloned())?;
    let msf: Vec<f64> = profiles.iter().map(|p| p.msf_sc).collect();
    let med = median(&msf).expect("non-empty");
    let mut summary = format!(
        "chronotype: {} users, median MSF_SC {med:.2} h, {} users without enough nights",
        profiles.len(),
        errors.len()
    );
    if let Some(path) = &a.input {
        let mut obs = read_keystrokes(path)?;
        sort_by_user(&mut obs);
        let obs = maybe_zscore(obs, a.zscore);
        let curves = chronotype_curves(&obs, &profiles, DEFAULT_HOUR_MIN_COUNT);
        write_csv(&a.out, "chronotype_hours.csv", hour_rows(&curves))?;
        let slowest: Vec<String> = curves
            .iter()
            .map(|c| {
                let h = c.slowest_hour.map_or_else(|| "none".to_string(), |h| format!("{h:02}:00"));
                format!("{} {h}", c.tercile.as_str())
            })
            .collect();
        summary += &format!(", slowest hours {}", slowest.join(", "));
    }
    Ok(format!("{summary} -> {}", a.out.display()))
}

pub fn cohort_stats(a: &CohortStatsArgs) -> Result<String> {
    let (records, _) = read_sleep(&a.sleep)?;
    let v = validate_sleep(records);
    let stats = stats_of(&v.kept)?;
    out_dir(&a.out)?;
    write_csv(&a.out, "cohort_stats.csv", stats.table())?;
    write_json(&a.out, "cohort_stats.json", &stats)?;
    let gap = stats.gender_gap_h().map_or_else(|| "n/a".to_string(), |g| format!("{:+.1} min", 60.0 * g));
    Ok(format!(
        "cohort-stats: {} records from {} users ({} rejected), median time in bed {:.2} h, female - male gap {gap} -> {}",
        stats.records,
        stats.users,
        v.rejected.len(),
        stats.median_time_in_bed_h,
        a.out.display()
    ))
}

pub fn report(a: &ReportArgs) -> Result<String> {
    if !a.input.is_dir() {
        bail!("{} is not a directory", a.input.display());
    }
    let s = render_dir(&a.input, &a.out)?;
    Ok(format!(
        "report: {} figures written, {} unrecognised tables skipped -> {}",
        s.written.len(),
        s.skipped.len(),
        a.out.display()
    ))
}
