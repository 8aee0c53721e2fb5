use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{ArgAction, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use relu_regions::geometry::{max_box_sum, max_box_volume, AxisBox, BoxRecord, Objective};
use relu_regions::harness::{
    best_per_seed, compare, comparison_rows, load_dataset, predicted_class, realized_seeds, summarize, sweep_epsilon,
    to_csv, training_support, CompareOptions, Dataset, BEST_COLUMNS, COMPARISON_COLUMNS, SWEEP_COLUMNS,
};
use relu_regions::infer::{
    get_convex_region_baseline_with, infer_region_interpolant_with, DominanceProperty, InferOptions,
    RegionCertificate,
};
use relu_regions::verify::{check_implies_with, CheckStatus, LinearProperty, VerifyOptions};
use relu_regions::viz::{emit_svg, enumerate_cells, Overlay, SvgStyle};
use relu_regions::{forward, load_network, sampling, ActivationPattern, Error, Network, Polytope};

#[derive(Parser)]
#[command(name = "relu-regions", about = "Certified convex input regions for ReLU classifiers")]
struct Cli {
    /// Byte-stable outputs: no timings or timestamps.
    #[arg(long, global = true, default_value_t = true, action = ArgAction::Set)]
    deterministic: bool,
    /// Worker threads across seeds.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Branch-and-bound node budget per verification query.
    #[arg(long, global = true, default_value_t = 1_000_000)]
    node_cap: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    Baseline,
    Interpolant,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ObjectiveArg {
    Sum,
    Logvol,
}

#[derive(Subcommand)]
enum Command {
    /// Check whether a pattern implies a property.
    Verify {
        #[arg(long)]
        net: PathBuf,
        /// Pattern JSON, inline or as a file path.
        #[arg(long)]
        pattern: String,
        /// Linear property or `{"target", "rivals"}`, inline or as a file path.
        #[arg(long)]
        property: String,
        /// Skip root LP bound tightening.
        #[arg(long)]
        no_tighten: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build a region certificate around a seed.
    Infer {
        #[arg(long)]
        net: PathBuf,
        #[arg(long, conflicts_with = "seed_vector", requires = "data")]
        seed_index: Option<usize>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        seed_vector: Option<Vec<f64>>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value = "Outcome")]
        label: String,
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long)]
        logit_factor: Option<f64>,
        /// Target class; defaults to the seed's prediction.
        #[arg(long)]
        target: Option<usize>,
        #[arg(long)]
        continue_past_frontier: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Largest axis-aligned box inside a region.
    Box {
        /// Certificate JSON (needs --net) or polytope JSON `{"dim", "rows"}`.
        #[arg(long)]
        region: PathBuf,
        #[arg(long)]
        net: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "logvol")]
        objective: ObjectiveArg,
        /// `lo,hi` per axis; defaults to the network's input box.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        bounds: Option<Vec<f64>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Count dataset rows inside a certificate's region.
    Support {
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        cert: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "Outcome")]
        label: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Baseline against interpolant on every realized seed.
    Compare {
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "Outcome")]
        label: String,
        #[arg(long, value_delimiter = ',', default_value = "0.5")]
        logit_factors: Vec<f64>,
        #[arg(long, default_value_t = 1000)]
        soundness_samples: usize,
        /// Per-seed CSV; `.best.csv` and `.summary.json` are written next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Average support and log-volume per logit factor.
    Sweep {
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "Outcome")]
        label: String,
        #[arg(long, value_delimiter = ',', default_value = "0.05,0.1,0.25,0.5,0.75,0.9")]
        logit_factors: Vec<f64>,
        #[arg(long, default_value_t = 1000)]
        soundness_samples: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cell map figures for a two-input network.
    Cells2d {
        #[arg(long)]
        net: PathBuf,
        /// `x_lo,x_hi,y_lo,y_hi`; defaults to the input box.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        bounds: Option<Vec<f64>>,
        /// Adds region overlays for this seed.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        seed_vector: Option<Vec<f64>>,
        #[arg(long, default_value_t = 0.5)]
        logit_factor: f64,
        #[arg(long, value_delimiter = ',', default_value = "0,1")]
        classes: Vec<usize>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
}

/// Everything needed to rerun a command bit-for-bit.
#[derive(Serialize)]
struct RunManifest {
    tool: &'static str,
    tool_version: &'static str,
    format_version: u32,
    command_line: Vec<String>,
    net_sha256: Option<String>,
    dataset_sha256: Option<String>,
    tau_lp: f64,
    tau_cx: f64,
    delta_strict: f64,
    node_cap: usize,
    jobs: usize,
    deterministic: bool,
    timestamp: Option<u64>,
    outputs: Vec<String>,
}

struct Ctx {
    argv: Vec<String>,
    deterministic: bool,
    jobs: usize,
    node_cap: usize,
}

impl Ctx {
    fn verify_options(&self) -> VerifyOptions {
        VerifyOptions {
            node_cap: self.node_cap,
            record_time: !self.deterministic,
            ..VerifyOptions::default()
        }
    }

    fn infer_options(&self, continue_past_frontier: bool) -> InferOptions {
        InferOptions {
            verify: self.verify_options(),
            continue_past_frontier,
        }
    }

    fn manifest(&self, net: Option<&Network>, data: Option<&Dataset>, outputs: &[&Path]) -> RunManifest {
        RunManifest {
            tool: "relu-regions",
            tool_version: env!("CARGO_PKG_VERSION"),
            format_version: relu_regions::FORMAT_VERSION,
            command_line: self.argv.clone(),
            net_sha256: net.map(Network::sha256),
            dataset_sha256: data.map(|d| d.sha256.clone()),
            tau_lp: relu_regions::TAU_LP,
            tau_cx: relu_regions::TAU_CX,
            delta_strict: relu_regions::DELTA_STRICT,
            node_cap: self.node_cap,
            jobs: self.jobs,
            deterministic: self.deterministic,
            timestamp: (!self.deterministic).then(|| {
                std::time::SystemTime::now()
                    .duration_since(std::time::UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0)
            }),
            outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
        }
    }

    /// Writes `text` to `path` and the manifest to `<path>.manifest.json`.
    fn write_with_manifest(&self, path: &Path, text: &str, net: Option<&Network>, data: Option<&Dataset>) -> Result<()> {
        write(path, text)?;
        let mut m = path.as_os_str().to_owned();
        m.push(".manifest.json");
        write(Path::new(&m), &pretty(&self.manifest(net, data, &[path]))?)
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(Error::from)?;
    }
    std::fs::write(path, text).map_err(Error::from)?;
    Ok(())
}

fn pretty<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

/// Either an existing file's contents or the argument itself.
fn inline_or_file(arg: &str) -> Result<String> {
    let p = Path::new(arg);
    if p.is_file() {
        Ok(std::fs::read_to_string(p).map_err(Error::from)?)
    } else {
        Ok(arg.to_string())
    }
}

fn parse_json<T: serde::de::DeserializeOwned>(text: &str, what: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse(format!("{what}: {e}")).into())
}

fn read_property(arg: &str, net: &Network) -> Result<LinearProperty> {
    let v: Value = parse_json(&inline_or_file(arg)?, "property")?;
    if v.get("clauses").is_some() {
        return Ok(serde_json::from_value(v).map_err(|e| Error::Parse(format!("property: {e}")))?);
    }
    let d: DominanceProperty = serde_json::from_value(v).map_err(|e| Error::Parse(format!("property: {e}")))?;
    let d = DominanceProperty::new(d.target, d.rivals)?;
    let k = net.output_dim();
    if d.target >= k || d.rivals.iter().any(|&j| j >= k) {
        return Err(Error::Index(format!("property classes out of range for {k} outputs")).into());
    }
    Ok(d.to_linear(net))
}

fn net_dataset(net: &Network, path: &Path, label: &str) -> Result<Dataset> {
    Ok(load_dataset(path, label, Some(&net.input_box))?)
}

fn parse_bounds(v: &[f64], dim: usize) -> Result<Vec<[f64; 2]>> {
    if v.len() != 2 * dim {
        bail!(Error::Bounds(format!("expected {} bound values, got {}", 2 * dim, v.len())));
    }
    Ok(v.chunks(2).map(|c| [c[0], c[1]]).collect())
}

fn cmd_verify(
    ctx: &Ctx,
    net_path: &Path,
    pattern: &str,
    property: &str,
    no_tighten: bool,
    out: Option<&Path>,
) -> Result<ExitCode> {
    let net = load_network(net_path)?;
    let sigma: ActivationPattern = parse_json(&inline_or_file(pattern)?, "pattern")?;
    let prop = read_property(property, &net)?;
    let opts = VerifyOptions {
        lp_tighten: !no_tighten,
        ..ctx.verify_options()
    };
    let res = check_implies_with(&net, &sigma, &prop, &opts)?;
    let text = pretty(&res)?;
    print!("{text}");
    if let Some(out) = out {
        ctx.write_with_manifest(out, &text, Some(&net), None)?;
    }
    Ok(match res.status {
        CheckStatus::Holds => ExitCode::SUCCESS,
        CheckStatus::Violated => ExitCode::from(1),
    })
}

#[allow(clippy::too_many_arguments)]
fn cmd_infer(
    ctx: &Ctx,
    net_path: &Path,
    seed_index: Option<usize>,
    seed_vector: Option<Vec<f64>>,
    data: Option<&Path>,
    label: &str,
    mode: Mode,
    logit_factor: Option<f64>,
    target: Option<usize>,
    continue_past_frontier: bool,
    out: Option<&Path>,
) -> Result<ExitCode> {
    let net = load_network(net_path)?;
    let mut dataset = None;
    let x0 = match (seed_index, seed_vector) {
        (Some(i), None) => {
            let d = net_dataset(&net, data.context("--seed-index needs --data")?, label)?;
            let x = d
                .features
                .get(i)
                .cloned()
                .ok_or_else(|| Error::Index(format!("seed index {i} out of range for {} rows", d.len())))?;
            dataset = Some(d);
            x
        }
        (None, Some(v)) => v,
        _ => bail!(Error::Precondition("give exactly one of --seed-index or --seed-vector".into())),
    };
    let logits = forward(&net, &x0)?.logits;
    let target = match target {
        Some(t) => t,
        None => predicted_class(&logits).ok_or_else(|| {
            Error::Precondition("seed logits tie for the top class; pass --target explicitly".into())
        })?,
    };
    if target >= net.output_dim() {
        bail!(Error::Index(format!("target {target} out of range for {} outputs", net.output_dim())));
    }
    let prop = DominanceProperty::against_all(target, net.output_dim());
    let opts = ctx.infer_options(continue_past_frontier);
    let cert = match mode {
        Mode::Baseline => {
            if logit_factor.is_some() {
                bail!(Error::Precondition("--logit-factor applies to --mode interpolant only".into()));
            }
            get_convex_region_baseline_with(&net, &prop, &x0, &opts)?
        }
        Mode::Interpolant => {
            let lf = logit_factor.ok_or_else(|| Error::Precondition("--mode interpolant needs --logit-factor".into()))?;
            infer_region_interpolant_with(&net, &x0, &prop, lf, &opts)?
        }
    };
    let text = cert.to_json() + "\n";
    match out {
        Some(out) => ctx.write_with_manifest(out, &text, Some(&net), dataset.as_ref())?,
        None => print!("{text}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn box_record(res: relu_regions::Result<AxisBox>) -> Result<BoxRecord> {
    match res {
        Ok(b) => Ok(BoxRecord::from(&b)),
        Err(Error::EmptyRegion) => Ok(BoxRecord::empty()),
        Err(e) => Err(e.into()),
    }
}

fn cmd_box(
    ctx: &Ctx,
    region: &Path,
    net_path: Option<&Path>,
    objective: ObjectiveArg,
    bounds: Option<Vec<f64>>,
    out: Option<&Path>,
) -> Result<ExitCode> {
    let text = std::fs::read_to_string(region).map_err(Error::from)?;
    let v: Value = parse_json(&text, "region")?;
    let net = net_path.map(load_network).transpose()?;
    let poly: Polytope = if v.get("mode").is_some() {
        let cert: RegionCertificate = parse_json(&text, "certificate")?;
        let net = net.as_ref().ok_or_else(|| Error::Precondition("certificate regions need --net".into()))?;
        cert.region(net)?
    } else {
        parse_json(&text, "polytope")?
    };
    let input_box = match (&bounds, &net) {
        (Some(b), _) => parse_bounds(b, poly.dim)?,
        (None, Some(n)) => n.input_box.clone(),
        (None, None) => match sampling::bounding_box(&poly) {
            Ok(b) => b,
            Err(Error::EmptyRegion) => {
                return finish_box(ctx, BoxRecord::empty(), net.as_ref(), out);
            }
            Err(e) => return Err(e.into()),
        },
    };
    let objective = match objective {
        ObjectiveArg::Sum => Objective::Sum,
        ObjectiveArg::Logvol => Objective::Logvol,
    };
    let record = match objective {
        Objective::Sum => box_record(max_box_sum(&poly, &input_box))?,
        Objective::Logvol => box_record(max_box_volume(&poly, &input_box))?,
    };
    finish_box(ctx, record, net.as_ref(), out)
}

fn finish_box(ctx: &Ctx, record: BoxRecord, net: Option<&Network>, out: Option<&Path>) -> Result<ExitCode> {
    let text = pretty(&record)?;
    match out {
        Some(out) => ctx.write_with_manifest(out, &text, net, None)?,
        None => print!("{text}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_support(ctx: &Ctx, net_path: &Path, cert: &Path, data: &Path, label: &str, out: Option<&Path>) -> Result<ExitCode> {
    let net = load_network(net_path)?;
    let cert: RegionCertificate = parse_json(&std::fs::read_to_string(cert).map_err(Error::from)?, "certificate")?;
    let data = net_dataset(&net, data, label)?;
    let support = training_support(&net, &cert, &data)?;
    let text = pretty(&json!({ "support": support, "rows": data.len() }))?;
    match out {
        Some(out) => ctx.write_with_manifest(out, &text, Some(&net), Some(&data))?,
        None => print!("{text}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn compare_options(ctx: &Ctx, soundness_samples: usize) -> CompareOptions {
    CompareOptions {
        infer: ctx.infer_options(false),
        jobs: ctx.jobs,
        deterministic: ctx.deterministic,
        soundness_samples,
        soundness_seed: 0,
    }
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn cmd_compare(
    ctx: &Ctx,
    net_path: &Path,
    data: &Path,
    label: &str,
    lfs: &[f64],
    soundness_samples: usize,
    out: &Path,
) -> Result<ExitCode> {
    let net = load_network(net_path)?;
    let data = net_dataset(&net, data, label)?;
    let seeds = realized_seeds(&net, &data)?;
    let results = compare(&net, &data, &seeds, lfs, &compare_options(ctx, soundness_samples))?;
    let rows = comparison_rows(&results);
    let best_path = sibling(out, ".best.csv");
    let summary_path = sibling(out, ".summary.json");
    write(out, &to_csv(&rows, &COMPARISON_COLUMNS)?)?;
    write(&best_path, &to_csv(&best_per_seed(&rows), &BEST_COLUMNS)?)?;
    let summaries: Vec<_> = lfs.iter().map(|&lf| summarize(&results, &seeds, lf)).collect();
    write(&summary_path, &pretty(&summaries)?)?;
    let mut m = out.as_os_str().to_owned();
    m.push(".manifest.json");
    let manifest = ctx.manifest(Some(&net), Some(&data), &[out, &best_path, &summary_path]);
    write(Path::new(&m), &pretty(&manifest)?)?;
    print!("{}", pretty(&summaries)?);
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(
    ctx: &Ctx,
    net_path: &Path,
    data: &Path,
    label: &str,
    lfs: &[f64],
    soundness_samples: usize,
    out: &Path,
) -> Result<ExitCode> {
    let net = load_network(net_path)?;
    let data = net_dataset(&net, data, label)?;
    let seeds = realized_seeds(&net, &data)?;
    let rows = sweep_epsilon(&net, &data, &seeds, lfs, &compare_options(ctx, soundness_samples))?;
    let text = to_csv(&rows, &SWEEP_COLUMNS)?;
    ctx.write_with_manifest(out, &text, Some(&net), Some(&data))?;
    print!("{text}");
    Ok(ExitCode::SUCCESS)
}

#[allow(clippy::too_many_arguments)]
fn cmd_cells2d(
    ctx: &Ctx,
    net_path: &Path,
    bounds: Option<Vec<f64>>,
    seed_vector: Option<Vec<f64>>,
    logit_factor: f64,
    classes: &[usize],
    out: &Path,
) -> Result<ExitCode> {
    let net = load_network(net_path)?;
    if net.input_dim != 2 {
        bail!(Error::Dimension { expected: 2, got: net.input_dim });
    }
    let b = match bounds {
        Some(v) => parse_bounds(&v, 2)?,
        None => net.input_box.clone(),
    };
    let window = [b[0], b[1]];
    let &[a, c] = classes else {
        bail!(Error::Parse("--classes takes exactly two class indices".into()));
    };
    let map = enumerate_cells(&net, window, (a, c))?;
    let style = SvgStyle::default();
    std::fs::create_dir_all(out).map_err(Error::from)?;
    let mut outputs = vec![out.join("cells.svg")];
    emit_svg(&map, &net, &[], &style, &outputs[0])?;
    if let Some(x0) = seed_vector {
        let prop = DominanceProperty::new(a, vec![c])?;
        let opts = ctx.infer_options(false);
        let overlay = |cert: RegionCertificate| -> Result<Overlay> {
            let region = cert.region(&net)?;
            let ua_box = match max_box_volume(&region, &net.input_box) {
                Ok(b) => Some(b),
                Err(Error::EmptyRegion) => None,
                Err(Error::DegenerateRegion { lo, hi, .. }) => Some(AxisBox::new(lo, hi)),
                Err(e) => return Err(e.into()),
            };
            Ok(Overlay { cert, ua_box })
        };
        let ours = overlay(infer_region_interpolant_with(&net, &x0, &prop, logit_factor, &opts)?)?;
        let base = overlay(get_convex_region_baseline_with(&net, &prop, &x0, &opts)?)?;
        let p = out.join("interpolant.svg");
        emit_svg(&map, &net, std::slice::from_ref(&ours), &style, &p)?;
        outputs.push(p);
        let p = out.join("comparison.svg");
        emit_svg(&map, &net, &[ours, base], &style, &p)?;
        outputs.push(p);
    }
    let refs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
    write(&out.join("manifest.json"), &pretty(&ctx.manifest(Some(&net), None, &refs))?)?;
    let summary = json!({
        "cells": map.cells.len(),
        "separator_segments": map.separator_segments.len(),
        "outputs": refs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
    });
    print!("{}", pretty(&summary)?);
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli, argv: Vec<String>) -> Result<ExitCode> {
    let ctx = Ctx {
        argv,
        deterministic: cli.deterministic,
        jobs: cli.jobs.max(1),
        node_cap: cli.node_cap,
    };
    match cli.command {
        Command::Verify {
            net,
            pattern,
            property,
            no_tighten,
            out,
        } => cmd_verify(&ctx, &net, &pattern, &property, no_tighten, out.as_deref()),
        Command::Infer {
            net,
            seed_index,
            seed_vector,
            data,
            label,
            mode,
            logit_factor,
            target,
            continue_past_frontier,
            out,
        } => cmd_infer(
            &ctx,
            &net,
            seed_index,
            seed_vector,
            data.as_deref(),
            &label,
            mode,
            logit_factor,
            target,
            continue_past_frontier,
            out.as_deref(),
        ),
        Command::Box {
            region,
            net,
            objective,
            bounds,
            out,
        } => cmd_box(&ctx, &region, net.as_deref(), objective, bounds, out.as_deref()),
        Command::Support {
            net,
            cert,
            data,
            label,
            out,
        } => cmd_support(&ctx, &net, &cert, &data, &label, out.as_deref()),
        Command::Compare {
            net,
            data,
            label,
            logit_factors,
            soundness_samples,
            out,
        } => cmd_compare(&ctx, &net, &data, &label, &logit_factors, soundness_samples, &out),
        Command::Sweep {
            net,
            data,
            label,
            logit_factors,
            soundness_samples,
            out,
        } => cmd_sweep(&ctx, &net, &data, &label, &logit_factors, soundness_samples, &out),
        Command::Cells2d {
            net,
            bounds,
            seed_vector,
            logit_factor,
            classes,
            out,
        } => cmd_cells2d(&ctx, &net, bounds, seed_vector, logit_factor, &classes, &out),
    }
}

/// Exit code for a library error: 2 for bad input or unmet preconditions,
/// 3 for exhausted budgets, 4 for internal and numerical failures.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::ResourceLimit { .. } => 3,
        Error::Internal(_) | Error::Numerical(_) => 4,
        _ => 2,
    }
}

fn report(kind: &str, message: &str, code: u8) -> ExitCode {
    eprintln!("{}", json!({ "error": kind, "message": message }));
    ExitCode::from(code)
}

fn version() -> &'static str {
    let v = format!(
        "{} (network, certificate and box formats v{})",
        env!("CARGO_PKG_VERSION"),
        relu_regions::FORMAT_VERSION
    );
    Box::leak(v.into_boxed_str())
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let matches = match Cli::command().version(version()).try_get_matches_from(&argv) {
        Ok(m) => m,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let msg = e.render().to_string();
            return report("UsageError", msg.trim(), 2);
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => return report("UsageError", e.to_string().trim(), 2),
    };
    match run(cli, argv.into_iter().skip(1).collect()) {
        Ok(code) => code,
        Err(e) => match e.downcast_ref::<Error>() {
            Some(lib) => report(lib.kind(), &lib.to_string(), exit_code(lib)),
            None => report("Error", &format!("{e:#}"), 2),
        },
    }
}
