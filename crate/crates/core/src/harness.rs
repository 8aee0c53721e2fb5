//! Experiment harness: datasets, seed selection, training support, and the
//! baseline-vs-interpolant comparison and logit-factor sweep.

use std::collections::HashSet;
use std::io::Read;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{max_box_volume, AxisBox};
use crate::infer::{
    check_region_soundness, get_convex_region_baseline_with, infer_region_interpolant_with, DominanceProperty,
    InferOptions, RegionCertificate, RegionMode, SoundnessReport,
};
use crate::model::{forward, pattern_from_trace, Network};

/// Scaled training data.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub feature_names: Vec<String>,
    pub label_column: String,
    /// Raw per-feature `(min, max)` before scaling.
    pub scaling: Vec<(f64, f64)>,
    /// Target interval per feature.
    pub target_box: Vec<[f64; 2]>,
    /// SHA-256 of the source bytes.
    pub sha256: String,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    /// Scales one raw feature vector with the stored min/max.
    pub fn scale(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .zip(&self.scaling)
            .zip(&self.target_box)
            .map(|((v, (min, max)), [lo, hi])| scale_value(*v, *min, *max, *lo, *hi))
            .collect()
    }
}

fn scale_value(v: f64, min: f64, max: f64, lo: f64, hi: f64) -> f64 {
    if max > min {
        lo + (v - min) / (max - min) * (hi - lo)
    } else {
        0.5 * (lo + hi)
    }
}

/// Reads a headed CSV and min-max scales each feature column onto
/// `target_box` (default `[0, 1]` per feature). Constant columns map to the
/// interval midpoint.
pub fn load_dataset(path: impl AsRef<Path>, label_column: &str, target_box: Option<&[[f64; 2]]>) -> Result<Dataset> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    parse_dataset(&bytes, label_column, target_box)
}

pub fn parse_dataset(bytes: &[u8], label_column: &str, target_box: Option<&[[f64; 2]]>) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    // Exact match first, then a unique case-insensitive one.
    let folded: Vec<usize> = (0..header.len())
        .filter(|&i| header[i].eq_ignore_ascii_case(label_column))
        .collect();
    let label_idx = header
        .iter()
        .position(|h| h == label_column)
        .or(if folded.len() == 1 { Some(folded[0]) } else { None })
        .ok_or_else(|| Error::Parse(format!("label column {label_column:?} not found in header {header:?}")))?;
    let feature_names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != label_idx)
        .map(|(_, h)| h.clone())
        .collect();

    let mut raw = Vec::new();
    let mut labels = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let mut row = Vec::with_capacity(feature_names.len());
        for (i, field) in rec.iter().enumerate() {
            let non_numeric = || Error::NonNumeric {
                column: header[i].clone(),
                row: r,
                value: field.to_string(),
            };
            let v: f64 = field.parse().map_err(|_| non_numeric())?;
            if !v.is_finite() {
                return Err(non_numeric());
            }
            if i == label_idx {
                if v < 0.0 || v.fract() != 0.0 {
                    return Err(non_numeric());
                }
                labels.push(v as usize);
            } else {
                row.push(v);
            }
        }
        raw.push(row);
    }
    if raw.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let dim = feature_names.len();
    let target_box = match target_box {
        Some(b) if b.len() != dim => {
            return Err(Error::Dimension {
                expected: dim,
                got: b.len(),
            })
        }
        Some(b) => b.to_vec(),
        None => vec![[0.0, 1.0]; dim],
    };
    let scaling: Vec<(f64, f64)> = (0..dim)
        .map(|j| {
            raw.iter()
                .map(|r| r[j])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
        })
        .collect();
    let features = raw
        .iter()
        .map(|r| {
            (0..dim)
                .map(|j| {
                    let (min, max) = scaling[j];
                    let [lo, hi] = target_box[j];
                    scale_value(r[j], min, max, lo, hi)
                })
                .collect()
        })
        .collect();
    Ok(Dataset {
        features,
        labels,
        feature_names,
        label_column: header[label_idx].clone(),
        scaling,
        target_box,
        sha256: hex::encode(Sha256::digest(bytes)),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedEntry {
    pub pattern_key: String,
    /// Row index of the first dataset row realizing the pattern.
    pub row: usize,
    pub predicted: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSet {
    pub entries: Vec<SeedEntry>,
    /// Rows skipped because their top logits tie.
    pub tied_rows: usize,
}

/// Strict argmax, `None` on a tie for the top logit.
pub fn predicted_class(logits: &[f64]) -> Option<usize> {
    let mut best = 0;
    for (j, v) in logits.iter().enumerate().skip(1) {
        if *v > logits[best] {
            best = j;
        }
    }
    let tied = logits.iter().enumerate().any(|(j, v)| j != best && *v == logits[best]);
    (!tied).then_some(best)
}

/// One seed per realized complete pattern, in order of first occurrence.
pub fn realized_seeds(net: &Network, data: &Dataset) -> Result<SeedSet> {
    let mut seen = HashSet::new();
    let mut entries = Vec::new();
    let mut tied_rows = 0;
    for (row, x) in data.features.iter().enumerate() {
        let trace = forward(net, x)?;
        let Some(predicted) = predicted_class(&trace.logits) else {
            tied_rows += 1;
            continue;
        };
        let key = pattern_from_trace(&trace).key();
        if seen.insert(key.clone()) {
            entries.push(SeedEntry {
                pattern_key: key,
                row,
                predicted,
            });
        }
    }
    Ok(SeedSet { entries, tied_rows })
}

/// Number of rows inside the certificate's region (strict rows strictly).
pub fn training_support(net: &Network, cert: &RegionCertificate, data: &Dataset) -> Result<usize> {
    if data.dim() != net.input_dim {
        return Err(Error::Dimension {
            expected: net.input_dim,
            got: data.dim(),
        });
    }
    let region = cert.region(net)?;
    Ok(data.features.iter().filter(|x| region.contains(x)).count())
}

#[derive(Debug, Clone)]
pub struct CompareOptions {
    pub infer: InferOptions,
    /// Worker threads across seeds; 0 means rayon's default.
    pub jobs: usize,
    /// Leave timing columns blank so outputs are byte-stable.
    pub deterministic: bool,
    /// Points drawn by the soundness re-check of every certificate.
    pub soundness_samples: usize,
    pub soundness_seed: u64,
}

impl Default for CompareOptions {
    fn default() -> Self {
        CompareOptions {
            infer: InferOptions::default(),
            jobs: 1,
            deterministic: true,
            soundness_samples: 1_000,
            soundness_seed: 0,
        }
    }
}

/// A certificate with its metrics.
#[derive(Debug, Clone)]
pub struct RegionOutcome {
    pub cert: RegionCertificate,
    pub support: usize,
    /// `None` when the region has no box (empty).
    pub log_volume: Option<f64>,
    pub ua_box: Option<AxisBox>,
    pub ms: Option<u64>,
    pub soundness: SoundnessReport,
    /// Non-fatal remarks, e.g. a degenerate box axis.
    pub note: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SeedComparison {
    pub seed: SeedEntry,
    pub baseline: std::result::Result<RegionOutcome, String>,
    pub interpolant: Vec<(f64, std::result::Result<RegionOutcome, String>)>,
}

fn describe(e: &Error) -> String {
    format!("{}: {}", e.kind(), e)
}

fn timed<T>(deterministic: bool, f: impl FnOnce() -> Result<T>) -> (Result<T>, Option<u64>) {
    let t0 = Instant::now();
    let out = f();
    let ms = (!deterministic).then(|| t0.elapsed().as_millis() as u64);
    (out, ms)
}

/// UA-box under the log-volume objective. Degenerate regions fall back to
/// the box carried by the error, with the axis recorded in the note.
pub fn region_box(net: &Network, cert: &RegionCertificate) -> Result<(Option<AxisBox>, Option<String>)> {
    let region = cert.region(net)?;
    match max_box_volume(&region, &net.input_box) {
        Ok(b) => Ok((Some(b), None)),
        Err(Error::EmptyRegion) => Ok((None, Some("EmptyRegion".into()))),
        Err(Error::DegenerateRegion { axis, lo, hi, .. }) => {
            Ok((Some(AxisBox::new(lo, hi)), Some(format!("DegenerateRegion: axis {axis}"))))
        }
        Err(e) => Err(e),
    }
}

fn measure(
    net: &Network,
    data: &Dataset,
    cert: RegionCertificate,
    ms: Option<u64>,
    opts: &CompareOptions,
) -> Result<RegionOutcome> {
    let soundness = check_region_soundness(net, &cert, opts.soundness_samples, opts.soundness_seed)?;
    if soundness.violations > 0 {
        return Err(Error::Internal(format!(
            "certificate failed the soundness re-check: {} of {} samples violate the property",
            soundness.violations, soundness.sampled
        )));
    }
    let support = training_support(net, &cert, data)?;
    let (ua_box, note) = region_box(net, &cert)?;
    Ok(RegionOutcome {
        log_volume: ua_box.as_ref().map(AxisBox::log_volume),
        cert,
        support,
        ua_box,
        ms,
        soundness,
        note,
    })
}

fn property_for(net: &Network, seed: &SeedEntry) -> DominanceProperty {
    DominanceProperty::against_all(seed.predicted, net.output_dim())
}

fn run_baseline(net: &Network, data: &Dataset, seed: &SeedEntry, opts: &CompareOptions) -> Result<RegionOutcome> {
    let x0 = &data.features[seed.row];
    let prop = property_for(net, seed);
    let (cert, ms) = timed(opts.deterministic, || get_convex_region_baseline_with(net, &prop, x0, &opts.infer));
    measure(net, data, cert?, ms, opts)
}

fn run_interpolant(
    net: &Network,
    data: &Dataset,
    seed: &SeedEntry,
    lf: f64,
    opts: &CompareOptions,
) -> Result<RegionOutcome> {
    let x0 = &data.features[seed.row];
    let prop = property_for(net, seed);
    let (cert, ms) = timed(opts.deterministic, || infer_region_interpolant_with(net, x0, &prop, lf, &opts.infer));
    measure(net, data, cert?, ms, opts)
}

fn check_factors(logit_factors: &[f64]) -> Result<()> {
    if logit_factors.is_empty() {
        return Err(Error::Range("no logit factors given".into()));
    }
    if let Some(bad) = logit_factors.iter().find(|f| !(**f > 0.0 && **f < 1.0)) {
        return Err(Error::Range(format!("logit factor {bad} is not in (0, 1)")));
    }
    Ok(())
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Internal(format!("thread pool: {e}")))
}

/// Runs the baseline once and the interpolant per logit factor on every
/// seed. Per-seed failures are recorded, not propagated.
pub fn compare(
    net: &Network,
    data: &Dataset,
    seeds: &SeedSet,
    logit_factors: &[f64],
    opts: &CompareOptions,
) -> Result<Vec<SeedComparison>> {
    check_factors(logit_factors)?;
    let run = |seed: &SeedEntry| SeedComparison {
        seed: seed.clone(),
        baseline: run_baseline(net, data, seed, opts).map_err(|e| describe(&e)),
        interpolant: logit_factors
            .iter()
            .map(|&lf| (lf, run_interpolant(net, data, seed, lf, opts).map_err(|e| describe(&e))))
            .collect(),
    };
    Ok(pool(opts.jobs)?.install(|| seeds.entries.par_iter().map(run).collect()))
}

/// One CSV row per seed and logit factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub seed_idx: usize,
    pub pattern_key: String,
    pub mode_baseline: Option<String>,
    pub support_baseline: Option<usize>,
    pub logvol_baseline: Option<f64>,
    pub lf: f64,
    pub support_interp: Option<usize>,
    pub logvol_interp: Option<f64>,
    pub n_constrained_baseline: Option<usize>,
    pub n_constrained_interp: Option<usize>,
    pub ms_baseline: Option<u64>,
    pub ms_interp: Option<u64>,
    pub error: String,
}

fn notes(tag: &str, out: &std::result::Result<RegionOutcome, String>) -> Option<String> {
    match out {
        Ok(o) => o.note.as_ref().map(|n| format!("{tag}: {n}")),
        Err(e) => Some(format!("{tag}: {e}")),
    }
}

pub fn comparison_rows(results: &[SeedComparison]) -> Vec<ComparisonRow> {
    let mut rows = Vec::new();
    for r in results {
        let b = r.baseline.as_ref().ok();
        for (lf, interp) in &r.interpolant {
            let i = interp.as_ref().ok();
            let error = [notes("baseline", &r.baseline), notes("interpolant", interp)]
                .into_iter()
                .flatten()
                .collect::<Vec<_>>()
                .join("; ");
            rows.push(ComparisonRow {
                seed_idx: r.seed.row,
                pattern_key: r.seed.pattern_key.clone(),
                mode_baseline: b.map(|o| o.cert.mode.as_str().to_string()),
                support_baseline: b.map(|o| o.support),
                logvol_baseline: b.and_then(|o| o.log_volume),
                lf: *lf,
                support_interp: i.map(|o| o.support),
                logvol_interp: i.and_then(|o| o.log_volume),
                n_constrained_baseline: b.map(|o| o.cert.pattern.num_constrained()),
                n_constrained_interp: i.map(|o| o.cert.pattern.num_constrained()),
                ms_baseline: b.and_then(|o| o.ms),
                ms_interp: i.and_then(|o| o.ms),
                error,
            });
        }
    }
    rows
}

/// The best logit factor per seed: highest interpolant support, then highest
/// log-volume, then the smallest factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestRow {
    pub seed_idx: usize,
    pub pattern_key: String,
    pub mode_baseline: Option<String>,
    pub support_baseline: Option<usize>,
    pub logvol_baseline: Option<f64>,
    pub best_lf: Option<f64>,
    pub support_interp: Option<usize>,
    pub logvol_interp: Option<f64>,
}

pub fn best_per_seed(rows: &[ComparisonRow]) -> Vec<BestRow> {
    let mut out: Vec<BestRow> = Vec::new();
    let mut start = 0;
    while start < rows.len() {
        let mut end = start;
        while end < rows.len() && rows[end].seed_idx == rows[start].seed_idx {
            end += 1;
        }
        let group = &rows[start..end];
        let best = group
            .iter()
            .filter(|r| r.support_interp.is_some())
            .fold(None::<&ComparisonRow>, |acc, r| match acc {
                None => Some(r),
                Some(a) => {
                    let key = |x: &ComparisonRow| (x.support_interp, x.logvol_interp.unwrap_or(f64::NEG_INFINITY));
                    let (sa, va) = key(a);
                    let (sr, vr) = key(r);
                    if sr > sa || (sr == sa && vr > va) {
                        Some(r)
                    } else {
                        Some(a)
                    }
                }
            });
        let first = &group[0];
        out.push(BestRow {
            seed_idx: first.seed_idx,
            pattern_key: first.pattern_key.clone(),
            mode_baseline: first.mode_baseline.clone(),
            support_baseline: first.support_baseline,
            logvol_baseline: first.logvol_baseline,
            best_lf: best.map(|b| b.lf),
            support_interp: best.and_then(|b| b.support_interp),
            logvol_interp: best.and_then(|b| b.logvol_interp),
        });
        start = end;
    }
    out
}

/// Aggregate counts over a comparison at one logit factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub lf: f64,
    pub n_seeds: usize,
    pub tied_rows: usize,
    pub baseline_else_branch: usize,
    pub baseline_errors: usize,
    pub interp_errors: usize,
    /// Interpolant runs whose guaranteed initial check failed.
    pub interp_initial_check_failures: usize,
    pub interp_support_ge: usize,
    pub interp_support_gt: usize,
    pub interp_logvol_ge: usize,
}

pub fn summarize(results: &[SeedComparison], seeds: &SeedSet, lf: f64) -> Summary {
    let mut s = Summary {
        lf,
        n_seeds: results.len(),
        tied_rows: seeds.tied_rows,
        baseline_else_branch: 0,
        baseline_errors: 0,
        interp_errors: 0,
        interp_initial_check_failures: 0,
        interp_support_ge: 0,
        interp_support_gt: 0,
        interp_logvol_ge: 0,
    };
    for r in results {
        let b = r.baseline.as_ref().ok();
        match b {
            Some(o) if o.cert.mode == RegionMode::BaselineAffine => s.baseline_else_branch += 1,
            Some(_) => {}
            None => s.baseline_errors += 1,
        }
        let Some((_, interp)) = r.interpolant.iter().find(|(f, _)| *f == lf) else {
            continue;
        };
        match interp {
            Err(e) => {
                s.interp_errors += 1;
                if e.starts_with("InternalError") {
                    s.interp_initial_check_failures += 1;
                }
            }
            Ok(i) => {
                if let Some(b) = b {
                    if i.support >= b.support {
                        s.interp_support_ge += 1;
                    }
                    if i.support > b.support {
                        s.interp_support_gt += 1;
                    }
                    let lv = |v: Option<f64>| v.unwrap_or(f64::NEG_INFINITY);
                    if lv(i.log_volume) >= lv(b.log_volume) {
                        s.interp_logvol_ge += 1;
                    }
                }
            }
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lf: f64,
    pub avg_support: f64,
    /// Mean over seeds whose region has a box.
    pub avg_logvol: Option<f64>,
    pub n_seeds: usize,
    pub n_logvol: usize,
}

/// Average interpolant support and log-volume per logit factor.
pub fn sweep_epsilon(
    net: &Network,
    data: &Dataset,
    seeds: &SeedSet,
    logit_factors: &[f64],
    opts: &CompareOptions,
) -> Result<Vec<SweepRow>> {
    check_factors(logit_factors)?;
    if logit_factors.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Range("logit factors must be strictly increasing".into()));
    }
    let per_seed: Vec<Vec<Option<RegionOutcome>>> = pool(opts.jobs)?.install(|| {
        seeds
            .entries
            .par_iter()
            .map(|seed| {
                logit_factors
                    .iter()
                    .map(|&lf| run_interpolant(net, data, seed, lf, opts).ok())
                    .collect()
            })
            .collect()
    });
    Ok(sweep_rows(logit_factors, &per_seed))
}

fn sweep_rows(logit_factors: &[f64], per_seed: &[Vec<Option<RegionOutcome>>]) -> Vec<SweepRow> {
    logit_factors
        .iter()
        .enumerate()
        .map(|(k, &lf)| {
            let ok: Vec<&RegionOutcome> = per_seed.iter().filter_map(|r| r[k].as_ref()).collect();
            let vols: Vec<f64> = ok.iter().filter_map(|o| o.log_volume).collect();
            SweepRow {
                lf,
                avg_support: if ok.is_empty() {
                    0.0
                } else {
                    ok.iter().map(|o| o.support as f64).sum::<f64>() / ok.len() as f64
                },
                avg_logvol: (!vols.is_empty()).then(|| vols.iter().sum::<f64>() / vols.len() as f64),
                n_seeds: ok.len(),
                n_logvol: vols.len(),
            }
        })
        .collect()
}

/// Sweep rows derived from an existing comparison, avoiding a re-run.
pub fn sweep_from_comparison(results: &[SeedComparison], logit_factors: &[f64]) -> Vec<SweepRow> {
    let per_seed: Vec<Vec<Option<RegionOutcome>>> = results
        .iter()
        .map(|r| {
            logit_factors
                .iter()
                .map(|lf| {
                    r.interpolant
                        .iter()
                        .find(|(f, _)| f == lf)
                        .and_then(|(_, o)| o.as_ref().ok().cloned())
                })
                .collect()
        })
        .collect();
    sweep_rows(logit_factors, &per_seed)
}

/// Serializes rows as CSV with a header derived from the field names.
pub fn to_csv<T: Serialize>(rows: &[T], header: &[&str]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Internal(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Internal(e.to_string()))
}

pub const COMPARISON_COLUMNS: [&str; 13] = [
    "seed_idx",
    "pattern_key",
    "mode_baseline",
    "support_baseline",
    "logvol_baseline",
    "lf",
    "support_interp",
    "logvol_interp",
    "n_constrained_baseline",
    "n_constrained_interp",
    "ms_baseline",
    "ms_interp",
    "error",
];

pub const BEST_COLUMNS: [&str; 8] = [
    "seed_idx",
    "pattern_key",
    "mode_baseline",
    "support_baseline",
    "logvol_baseline",
    "best_lf",
    "support_interp",
    "logvol_interp",
];

pub const SWEEP_COLUMNS: [&str; 5] = ["lf", "avg_support", "avg_logvol", "n_seeds", "n_logvol"];
