use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::Args;
use serde::Serialize;
use sha2::{Digest, Sha256};

use autojacobin::codes::write_codes;
use autojacobin::experiment::{encode_raw, fit, run_toy, write_toy_hidden, write_toy_summary, ToyConfig};
use autojacobin::gradcheck::{check_method, GradInstance};
use autojacobin::metrics::{recall_curve, write_recall_csv};
use autojacobin::net::{read_model, write_model};
use autojacobin::objective::{ObjectiveConfig, DEFAULT_ALPHA, DEFAULT_EPSILON};
use autojacobin::retrieval::{read_ground_truth, write_ground_truth, GroundTruth};
use autojacobin::synth::{manifold_split, ManifoldSpec};
use autojacobin::train::{write_epoch_csv, write_trace_csv, TrainConfig};
use autojacobin::variants::{Method, DEFAULT_CAUTOBIN_ALPHA, DEFAULT_LAMBDA_C};
use autojacobin::vecs;

use crate::manifest::{sibling, RunManifest};
use crate::plot;

/// Gradient checks fail above this relative error.
const GRADCHECK_TOLERANCE: f64 = 1e-5;

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> autojacobin::Result<()>) -> Result<()> {
    let mut w = create(path)?;
    f(&mut w).with_context(|| format!("writing {}", path.display()))?;
    w.flush()?;
    Ok(())
}

fn read_vectors(path: &Path) -> Result<autojacobin::DataMatrix> {
    vecs::read_path(path).with_context(|| format!("reading {}", path.display()))
}

fn read_model_file(path: &Path) -> Result<autojacobin::NetworkParams> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_model(BufReader::new(f)).with_context(|| format!("reading model {}", path.display()))
}

#[derive(Debug, Args, Serialize)]
pub struct ConvertArgs {
    /// Source file; the extension (.fvecs, .bvecs, anything else = text) picks the format.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
}

pub fn convert(a: ConvertArgs, config: Option<&Path>) -> Result<bool> {
    let x = read_vectors(&a.input)?;
    if let Some(dir) = a.output.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    vecs::write_path(&a.output, &x).with_context(|| format!("writing {}", a.output.display()))?;
    let mut m = RunManifest::new("convert", &a, None, config)?;
    m.input(&a.input);
    m.output(&a.output);
    m.write(&a.output)?;
    println!("{} vectors of dimension {}", x.count(), x.dims());
    Ok(true)
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub bits: usize,
    /// auto-jacobin, autobin, dautobin, cautobin, or lsh.
    #[arg(long, default_value = "auto-jacobin")]
    pub method: String,
    /// Binarization weight [default: 0.1, or 0.01 for cautobin].
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 5)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1000)]
    pub batch: usize,
    /// Stop after this many iterations instead of `epochs × batches`.
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Model path; the trace goes to `<out>.trace.csv`.
    #[arg(long)]
    pub out: PathBuf,
    /// Masking probability for dautobin.
    #[arg(long, default_value_t = 0.1)]
    pub corrupt_t: f64,
    /// Contractive weight for cautobin.
    #[arg(long, default_value_t = DEFAULT_LAMBDA_C)]
    pub lambda_c: f64,
    /// Also write the full training objective per epoch to `<out>.epochs.csv`.
    #[arg(long)]
    pub epoch_costs: bool,
}

fn parse_method(name: &str, corrupt_t: f64, lambda_c: f64) -> Result<Method> {
    let m = match name.parse::<Method>()? {
        Method::DAutoBin { .. } => Method::DAutoBin { corruption_t: corrupt_t },
        Method::CAutoBin { .. } => Method::CAutoBin { lambda_c },
        m => m,
    };
    m.validate()?;
    Ok(m)
}

pub fn train(a: TrainArgs, config: Option<&Path>) -> Result<bool> {
    let method = parse_method(&a.method, a.corrupt_t, a.lambda_c)?;
    let raw = read_vectors(&a.input)?;
    ensure!(!raw.is_empty(), "{} holds no vectors", a.input.display());
    let mut cfg = TrainConfig::new(a.bits);
    cfg.method = method;
    cfg.alpha = a.alpha.unwrap_or(match method {
        Method::CAutoBin { .. } => DEFAULT_CAUTOBIN_ALPHA,
        _ => DEFAULT_ALPHA,
    });
    cfg.epsilon = a.epsilon;
    cfg.epochs = a.epochs;
    cfg.batch_size = a.batch;
    cfg.max_iterations = a.max_iterations;
    cfg.seed = a.seed;
    cfg.track_full_cost = a.epoch_costs;

    let (params, report) = fit(&raw, &cfg)?;
    if report.rank_deficient {
        eprintln!("warning: training data has fewer than {} principal directions", a.bits);
    }
    write_with(&a.out, |w| write_model(w, &params))?;
    let trace = sibling(&a.out, "trace.csv");
    write_with(&trace, |w| write_trace_csv(w, &report.trace))?;

    let mut m = RunManifest::new("train", &a, Some(a.seed), config)?;
    m.input(&a.input);
    m.output(&a.out);
    m.output(&trace);
    if a.epoch_costs {
        let epochs = sibling(&a.out, "epochs.csv");
        write_with(&epochs, |w| write_epoch_csv(w, &report.epoch_costs))?;
        m.output(&epochs);
    }
    m.write(&a.out)?;

    match (report.trace.first(), report.trace.last()) {
        (Some(first), Some(last)) => println!(
            "{method}: {} iterations, batch cost {:.6} -> {:.6}",
            report.trace.len(),
            first.cost.total,
            last.cost.total
        ),
        _ => println!("{method}: {} x {} projection, no training", a.bits, raw.dims()),
    }
    Ok(true)
}

#[derive(Debug, Args, Serialize)]
pub struct EncodeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    /// Output `.ajbc` code file.
    #[arg(long)]
    pub out: PathBuf,
    /// Threshold `W1 x + b1` instead of `W1 x`.
    #[arg(long)]
    pub use_bias: bool,
}

pub fn encode(a: EncodeArgs, config: Option<&Path>) -> Result<bool> {
    let p = read_model_file(&a.model)?;
    let x = read_vectors(&a.input)?;
    let codes = encode_raw(&p, &x, a.use_bias)?;
    write_with(&a.out, |w| write_codes(w, &codes))?;
    let mut m = RunManifest::new("encode", &a, None, config)?;
    m.input(&a.model);
    m.input(&a.input);
    m.output(&a.out);
    m.write(&a.out)?;
    println!("{} codes of {} bits ({} distinct)", codes.count(), codes.bits(), codes.distinct());
    Ok(true)
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub base: PathBuf,
    #[arg(long)]
    pub queries: PathBuf,
    /// Comma-separated neighbour counts.
    #[arg(long, default_value = "1,5,10,50,100")]
    pub k: String,
    /// Number of Hamming-ranked codes K.
    #[arg(long, default_value_t = 10_000)]
    pub max_retrieve: usize,
    #[arg(long)]
    pub use_bias: bool,
    /// Output prefix: writes `<out>.k<k>.csv` per k and `<out>.summary.csv`.
    #[arg(long)]
    pub out: PathBuf,
    /// Also draw all recall curves to this SVG.
    #[arg(long)]
    pub plot: Option<PathBuf>,
    /// Recompute the ground truth even if a cached file exists.
    #[arg(long)]
    pub no_cache: bool,
}

fn parse_ks(s: &str) -> Result<Vec<usize>> {
    let mut ks = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let k: usize = part.parse().with_context(|| format!("bad k {part:?}"))?;
        ensure!(k > 0, "k must be positive");
        ks.push(k);
    }
    ensure!(!ks.is_empty(), "no k given");
    ks.sort_unstable();
    ks.dedup();
    Ok(ks)
}

fn content_key(paths: &[&Path]) -> Result<String> {
    let mut h = Sha256::new();
    for p in paths {
        let bytes = std::fs::read(p).with_context(|| format!("reading {}", p.display()))?;
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect())
}

/// Exact neighbours for the largest k, cached beside the base file under a
/// key derived from the base and query contents.
fn ground_truth(a: &EvalArgs, base: &autojacobin::DataMatrix, queries: &autojacobin::DataMatrix, k: usize) -> Result<(GroundTruth, PathBuf)> {
    let key = content_key(&[&a.base, &a.queries])?;
    let cache = sibling(&a.base, &format!("{key}.k{k}.ajbg"));
    if !a.no_cache && cache.exists() {
        let f = File::open(&cache)?;
        let gt = read_ground_truth(BufReader::new(f)).with_context(|| format!("reading {}", cache.display()))?;
        if gt.k() == k && gt.queries() == queries.count() {
            return Ok((gt, cache));
        }
    }
    let gt = GroundTruth::compute(base, queries, k)?;
    write_with(&cache, |w| write_ground_truth(w, &gt))?;
    Ok((gt, cache))
}

pub fn eval(a: EvalArgs, config: Option<&Path>) -> Result<bool> {
    let ks = parse_ks(&a.k)?;
    let p = read_model_file(&a.model)?;
    let base = read_vectors(&a.base)?;
    let queries = read_vectors(&a.queries)?;
    ensure!(
        a.max_retrieve > 0 && a.max_retrieve <= base.count(),
        "--max-retrieve {} must be between 1 and the {} base vectors",
        a.max_retrieve,
        base.count()
    );
    let kmax = *ks.last().expect("non-empty");
    ensure!(kmax <= base.count(), "k = {kmax} exceeds the {} base vectors", base.count());
    ensure!(!queries.is_empty(), "{} holds no queries", a.queries.display());

    let (gt, cache) = ground_truth(&a, &base, &queries, kmax)?;
    let bc = encode_raw(&p, &base, a.use_bias)?;
    let qc = encode_raw(&p, &queries, a.use_bias)?;

    let mut m = RunManifest::new("eval", &a, None, config)?;
    m.input(&a.model);
    m.input(&a.base);
    m.input(&a.queries);
    m.output(&cache);
    let mut rows = Vec::new();
    let mut series = Vec::new();
    for &k in &ks {
        let curve = recall_curve(&gt.truncated(k)?, &bc, &qc, a.max_retrieve)?;
        let path = sibling(&a.out, &format!("k{k}.csv"));
        write_with(&path, |w| write_recall_csv(w, &curve))?;
        m.output(&path);
        series.push(plot::Series {
            name: format!("k={k}"),
            x_label: "retrieved codes".into(),
            y_label: "recall".into(),
            points: curve.values.iter().enumerate().map(|(i, &v)| ((i + 1) as f64, v)).collect(),
        });
        rows.push((k, curve.m_recall));
    }
    let summary = sibling(&a.out, "summary.csv");
    let mut w = create(&summary)?;
    writeln!(w, "k,m_recall")?;
    for (k, v) in &rows {
        writeln!(w, "{k},{v}")?;
    }
    w.flush()?;
    m.output(&summary);
    if let Some(svg) = &a.plot {
        let text = plot::render(&series, Some(&format!("recall, {} bits", bc.bits())))?;
        write_text(svg, &text)?;
        m.output(svg);
    }
    m.write(&a.out)?;

    println!("{:>6}  {:>8}", "k", "m-Recall");
    for (k, v) in &rows {
        println!("{k:>6}  {v:>8.4}");
    }
    Ok(true)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

#[derive(Debug, Args, Serialize)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 8)]
    pub dims: usize,
    #[arg(long, default_value_t = 4)]
    pub bits: usize,
    #[arg(long, default_value_t = 5)]
    pub points: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "auto-jacobin")]
    pub method: String,
    #[arg(long, default_value_t = 0.1)]
    pub corrupt_t: f64,
    #[arg(long, default_value_t = DEFAULT_LAMBDA_C)]
    pub lambda_c: f64,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-6)]
    pub step: f64,
    /// Added to one analytic entry of dW1, to see the check fail.
    #[arg(long, default_value_t = 0.0)]
    pub inject_fault: f64,
    /// Also write the report to this file (with a manifest).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn gradcheck(a: GradcheckArgs, config: Option<&Path>) -> Result<bool> {
    let method = parse_method(&a.method, a.corrupt_t, a.lambda_c)?;
    if !method.is_trained() {
        bail!("{method} has no gradients to check");
    }
    let inst = GradInstance::random(a.dims, a.bits, a.points, a.seed)?;
    let cfg = ObjectiveConfig::with_alpha(a.alpha);
    let checks = check_method(&inst, method, &cfg, a.step, a.inject_fault)?;

    let mut report = String::new();
    use std::fmt::Write as _;
    writeln!(report, "{method}: D={} d={} n={} seed={} h={:e}", a.dims, a.bits, a.points, a.seed, a.step)?;
    writeln!(report, "{:<12} {:>10} {:>10} {:>10} {:>10}", "term", "W1", "W2", "b1", "b2")?;
    let mut worst: f64 = 0.0;
    for c in &checks {
        let e = c.errors;
        writeln!(report, "{:<12} {:>10.2e} {:>10.2e} {:>10.2e} {:>10.2e}", c.term, e.w1, e.w2, e.b1, e.b2)?;
        // NaN must count as a failure
        worst = if e.max().is_nan() { f64::INFINITY } else { worst.max(e.max()) };
    }
    let pass = worst <= GRADCHECK_TOLERANCE;
    writeln!(
        report,
        "{} (max relative error {worst:.2e}, tolerance {GRADCHECK_TOLERANCE:e})",
        if pass { "PASS" } else { "FAIL" }
    )?;
    print!("{report}");
    if let Some(out) = &a.out {
        write_text(out, &report)?;
        let mut m = RunManifest::new("gradcheck", &a, Some(a.seed), config)?;
        m.output(out);
        m.write(out)?;
    }
    Ok(pass)
}

#[derive(Debug, Args, Serialize)]
pub struct ToyArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1000)]
    pub points: usize,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    #[arg(long, default_value_t = 5)]
    pub epochs: usize,
    #[arg(long, default_value_t = 100)]
    pub batch: usize,
    /// Directory for summary.csv, hidden.csv, codes.ajbc, model.ajb, and the traces.
    #[arg(long)]
    pub out_dir: PathBuf,
}

pub fn toy(a: ToyArgs, config: Option<&Path>) -> Result<bool> {
    let mut cfg = ToyConfig::new(a.seed);
    cfg.points = a.points;
    cfg.train.alpha = a.alpha;
    cfg.train.epochs = a.epochs;
    cfg.train.batch_size = a.batch;
    let out = run_toy(&cfg)?;

    let d = &a.out_dir;
    let paths = [
        d.join("summary.csv"),
        d.join("hidden.csv"),
        d.join("codes.ajbc"),
        d.join("model.ajb"),
        d.join("trace.csv"),
        d.join("epochs.csv"),
    ];
    write_with(&paths[0], |w| write_toy_summary(w, &out))?;
    write_with(&paths[1], |w| write_toy_hidden(w, &out))?;
    write_with(&paths[2], |w| write_codes(w, &out.codes))?;
    write_with(&paths[3], |w| write_model(w, &out.params))?;
    write_with(&paths[4], |w| write_trace_csv(w, &out.report.trace))?;
    write_with(&paths[5], |w| write_epoch_csv(w, &out.report.epoch_costs))?;
    let mut m = RunManifest::new("toy", &a, Some(a.seed), config)?;
    for p in &paths {
        m.output(p);
    }
    m.write(&d.join("toy"))?;

    println!("{:<8} {:>14} {:>10}", "stage", "distinct codes", "mean |y|");
    for (stage, s) in [("init", &out.before), ("trained", &out.after)] {
        println!("{stage:<8} {:>14} {:>10.4}", s.distinct_codes, s.mean_abs_y);
    }
    Ok(true)
}

#[derive(Debug, Args, Serialize)]
pub struct PlotArgs {
    /// Recall or trace CSV files; each becomes one line named after its file.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Column to plot against the first one [default: the second column].
    #[arg(long)]
    pub y: Option<String>,
    #[arg(long)]
    pub title: Option<String>,
}

pub fn plot(a: PlotArgs, config: Option<&Path>) -> Result<bool> {
    let mut series = Vec::new();
    for p in &a.inputs {
        let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        series.push(plot::parse_csv(&name, &text, a.y.as_deref())?);
    }
    // render fully before touching the output path
    let svg = plot::render(&series, a.title.as_deref())?;
    write_text(&a.out, &svg)?;
    let mut m = RunManifest::new("plot", &a, None, config)?;
    for p in &a.inputs {
        m.input(p);
    }
    m.output(&a.out);
    m.write(&a.out)?;
    Ok(true)
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 20_000)]
    pub base: usize,
    #[arg(long, default_value_t = 200)]
    pub queries: usize,
    #[arg(long, default_value_t = 10_000)]
    pub train: usize,
    #[arg(long, default_value_t = 8)]
    pub intrinsic: usize,
    #[arg(long, default_value_t = 64)]
    pub ambient: usize,
    #[arg(long, default_value_t = 32)]
    pub features: usize,
    #[arg(long, default_value_t = 1.5)]
    pub curvature: f64,
    #[arg(long, default_value_t = 0.01)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory for base.fvecs, queries.fvecs, and train.fvecs.
    #[arg(long)]
    pub out_dir: PathBuf,
}

pub fn synth(a: SynthArgs, config: Option<&Path>) -> Result<bool> {
    let spec = ManifoldSpec {
        intrinsic: a.intrinsic,
        ambient: a.ambient,
        features: a.features,
        curvature: a.curvature,
        noise: a.noise,
    };
    let split = manifold_split(spec, a.base, a.queries, a.train, a.seed)?;
    std::fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    let mut m = RunManifest::new("synth", &a, Some(a.seed), config)?;
    for (name, x) in [("base", &split.base), ("queries", &split.queries), ("train", &split.train)] {
        let path = a.out_dir.join(format!("{name}.fvecs"));
        vecs::write_path(&path, x).with_context(|| format!("writing {}", path.display()))?;
        m.output(&path);
    }
    m.write(&a.out_dir.join("synth"))?;
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_lists() {
        assert_eq!(parse_ks("100, 1,5,5").unwrap(), [1, 5, 100]);
        assert!(parse_ks("0").is_err());
        assert!(parse_ks("").is_err());
        assert!(parse_ks("a").is_err());
    }

    #[test]
    fn method_flags_apply() {
        assert_eq!(parse_method("dautobin", 0.3, 0.0).unwrap(), Method::DAutoBin { corruption_t: 0.3 });
        assert_eq!(parse_method("cautobin", 0.1, 0.5).unwrap(), Method::CAutoBin { lambda_c: 0.5 });
        assert!(parse_method("dautobin", 1.5, 0.0).is_err());
        assert!(parse_method("pca", 0.1, 0.1).is_err());
    }
}
