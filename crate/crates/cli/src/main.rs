use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use pqsm::distortion::{self, DistortionKind, DistortionSpec};
use pqsm::evaluation::{evaluate, CorrelationReport, ScorePair};
use pqsm::metric::SaliencyEcho;
use pqsm::saliency::{saliency_maps, SpectralResidual};
use pqsm::{
    attach_saliency, build_saliency_field, compute_pqsm, load_ply, save_ply, score_with_saliency, DepthWeightParams,
    MetricConfig, PlyFormat, PointCloud, ProjectionConfig, SaliencyBackend, ScoreReport,
};

mod batch;

#[derive(Parser)]
#[command(name = "pqsm", version, about = "Saliency-guided point cloud quality assessment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score a distorted cloud against its reference.
    Score {
        reference: PathBuf,
        distorted: PathBuf,
        #[command(flatten)]
        projection: ProjectionArgs,
        #[command(flatten)]
        metric: MetricArgs,
        /// Emit the full report as JSON.
        #[arg(long)]
        json: bool,
        /// Print the per-point table after the score.
        #[arg(long)]
        verbose: bool,
        /// Include wall-clock timings (makes output run-dependent).
        #[arg(long)]
        timing: bool,
    },
    /// Score every row of a CSV manifest `ref,dist[,mos]`.
    Batch(batch::BatchArgs),
    /// Write a distorted copy of a cloud plus a JSON sidecar with the spec.
    Distort {
        input: PathBuf,
        output: PathBuf,
        #[arg(long, value_enum)]
        kind: KindArg,
        /// Geometry: σ over the longest box side. Color: σ in 8-bit units.
        /// Downsample: fraction of points kept.
        #[arg(long, allow_negative_numbers = true)]
        level: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        ascii: bool,
    },
    /// Compute the per-point saliency field and write it as a PLY property.
    Saliency {
        input: PathBuf,
        output: PathBuf,
        #[command(flatten)]
        projection: ProjectionArgs,
        /// Also write per-view textures, depth and saliency rasters here.
        #[arg(long, value_name = "DIR")]
        dump_views: Option<PathBuf>,
        #[arg(long)]
        ascii: bool,
    },
    /// Correlate objective scores with ratings from CSV `id,objective,subjective`.
    Evaluate {
        input: PathBuf,
        #[arg(long)]
        json: bool,
        /// Also print the fitted mapping parameters.
        #[arg(long)]
        verbose: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Geometry,
    Color,
    Downsample,
}

impl From<KindArg> for DistortionKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Geometry => DistortionKind::GaussianGeometry,
            KindArg::Color => DistortionKind::GaussianColor,
            KindArg::Downsample => DistortionKind::Downsample,
        }
    }
}

#[derive(Args, Clone)]
pub struct ProjectionArgs {
    /// Number of views; only 6 is supported.
    #[arg(long, default_value_t = 6)]
    views: usize,
    #[arg(long, default_value_t = 512)]
    resolution: usize,
    /// spectral-residual, flat, or file:<dir> with one <view>.pgm per view.
    /// A subdirectory of <dir> named after the cloud's file stem takes
    /// precedence, so one directory can serve both clouds of a pair.
    #[arg(long, default_value = "spectral-residual")]
    saliency: String,
}

impl ProjectionArgs {
    pub fn config(&self) -> ProjectionConfig {
        ProjectionConfig { views: self.views, resolution: self.resolution, ..ProjectionConfig::default() }
    }

    pub fn backend(&self) -> Result<SaliencyBackend> {
        Ok(match self.saliency.as_str() {
            "spectral-residual" => SaliencyBackend::SpectralResidual(SpectralResidual::default()),
            "flat" => SaliencyBackend::Flat,
            s => match s.strip_prefix("file:") {
                Some(dir) if !dir.is_empty() => SaliencyBackend::ExternalFile { dir: dir.into() },
                _ => {
                    return Err(pqsm::Error::Config(format!(
                        "unknown saliency backend {s:?}; expected spectral-residual, flat or file:<dir>"
                    ))
                    .into())
                }
            },
        })
    }

    /// Backend for one cloud file: `file:<dir>` resolves to `<dir>/<stem>`
    /// when that directory exists.
    pub fn backend_for(&self, cloud: &Path) -> Result<SaliencyBackend> {
        Ok(match self.backend()? {
            SaliencyBackend::ExternalFile { dir } => {
                let own = cloud.file_stem().map(|stem| dir.join(stem)).filter(|d| d.is_dir());
                SaliencyBackend::ExternalFile { dir: own.unwrap_or(dir) }
            }
            other => other,
        })
    }
}

#[derive(Args, Clone)]
pub struct MetricArgs {
    #[arg(long, allow_negative_numbers = true)]
    t1: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    t2: Option<f64>,
    /// Feature subset such as F1+F2+F3 or F1,F2.
    #[arg(long)]
    features: Option<String>,
    /// SAW (saliency-weighted) or AVE.
    #[arg(long)]
    pooling: Option<String>,
    #[arg(long, default_value_t = 10)]
    knn_k: usize,
}

impl MetricArgs {
    pub fn config(&self) -> Result<MetricConfig> {
        let mut config = MetricConfig { knn_k: self.knn_k, ..MetricConfig::default() };
        if let Some(t1) = self.t1 {
            config.t1 = t1;
        }
        if let Some(t2) = self.t2 {
            config.t2 = t2;
        }
        if let Some(f) = &self.features {
            config.features = f.parse()?;
        }
        if let Some(p) = &self.pooling {
            config.pooling = p.parse()?;
        }
        config.validate()?;
        Ok(config)
    }
}

fn ply_format(ascii: bool) -> PlyFormat {
    if ascii {
        PlyFormat::Ascii
    } else {
        PlyFormat::BinaryLittleEndian
    }
}

fn score(
    reference: &Path,
    distorted: &Path,
    projection: &ProjectionArgs,
    metric: &MetricArgs,
    json: bool,
    verbose: bool,
    timing: bool,
) -> Result<()> {
    let config = metric.config()?;
    let x = load_ply(reference)?;
    let y = load_ply(distorted)?;
    let mut report = pair_report(&x, &y, reference, distorted, projection, &config)?;
    let timings = report.timing.take();
    if timing {
        report.timing = timings;
    }
    let mut out = std::io::stdout().lock();
    if json {
        serde_json::to_writer_pretty(&mut out, &report)?;
        writeln!(out)?;
        return Ok(());
    }
    writeln!(out, "Q = {:.6}", report.q)?;
    if let Some(t) = report.timing {
        writeln!(out, "saliency_ms = {:.3}\nmetric_ms = {:.3}", t.saliency_ms, t.metric_ms)?;
    }
    if verbose {
        write!(out, "{}", report.to_text())?;
    }
    Ok(())
}

/// Scores a pair. With a single backend this is `compute_pqsm`; per-cloud
/// raster directories need the two saliency fields built separately.
pub fn pair_report(
    x: &PointCloud,
    y: &PointCloud,
    x_path: &Path,
    y_path: &Path,
    projection: &ProjectionArgs,
    config: &MetricConfig,
) -> Result<ScoreReport> {
    let (bx, by) = (projection.backend_for(x_path)?, projection.backend_for(y_path)?);
    let proj = projection.config();
    if bx == by {
        return Ok(compute_pqsm(x, y, &proj, &bx, config)?);
    }
    proj.validate()?;
    let (px, py) = (DepthWeightParams::auto(x), DepthWeightParams::auto(y));
    let fx = build_saliency_field(x, &proj, &bx, &px)?;
    let fy = build_saliency_field(y, &proj, &by, &py)?;
    let mut report = score_with_saliency(x, y, &fx, &fy, config)?;
    report.saliency = Some(SaliencyEcho {
        projection: proj,
        backend: bx,
        sigma_s_reference: px.sigma_s,
        sigma_s_distorted: py.sigma_s,
    });
    Ok(report)
}

fn distort(input: &Path, output: &Path, kind: KindArg, level: f64, seed: u64, ascii: bool) -> Result<()> {
    let spec = DistortionSpec::new(kind.into(), level, seed);
    let cloud = load_ply(input)?;
    let distorted = distortion::apply(&cloud, &spec)?;
    save_ply(&distorted, output, ply_format(ascii))?;
    let sidecar = sidecar_path(output);
    let mut text = serde_json::to_string_pretty(&spec)?;
    text.push('\n');
    std::fs::write(&sidecar, text).with_context(|| format!("writing {}", sidecar.display()))?;
    log::info!("{} points written to {}", distorted.len(), output.display());
    Ok(())
}

/// `out.ply` gets `out.ply.json`.
fn sidecar_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".json");
    name.into()
}

fn saliency(input: &Path, output: &Path, projection: &ProjectionArgs, dump: Option<&Path>, ascii: bool) -> Result<()> {
    let backend = projection.backend_for(input)?;
    let config = projection.config();
    config.validate()?;
    let cloud = load_ply(input)?;
    let maps = saliency_maps(&cloud, &config, &backend, &DepthWeightParams::auto(&cloud))?;
    if maps.filled > 0 {
        log::info!("{} points hidden in every view took their nearest visible neighbour's value", maps.filled);
    }
    save_ply(&attach_saliency(&cloud, &maps.field)?, output, ply_format(ascii))?;

    if let Some(dir) = dump {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for (i, view) in maps.views.iter().enumerate() {
            pqsm::pnm::write_ppm(&view.texture, &dir.join(format!("{i}_texture.ppm")))?;
            let depth_max = view.occupied_offsets().map(|o| view.depth.as_slice()[o]).fold(0.0, f64::max);
            let depth = view.depth.map(|d| if d.is_finite() { *d } else { 0.0 });
            pqsm::pnm::write_pgm16_scaled(&depth, depth_max, &dir.join(format!("{i}_depth.pgm")))?;
            // the plain name is what the file:<dir> backend reads back
            pqsm::pnm::write_pgm16_unit(&maps.saliency_2d[i], &dir.join(format!("{i}.pgm")))?;
            let enhanced = &maps.enhanced[i];
            let max = enhanced.as_slice().iter().copied().fold(0.0, f64::max);
            pqsm::pnm::write_pgm16_scaled(enhanced, max, &dir.join(format!("{i}_enhanced.pgm")))?;
        }
    }
    Ok(())
}

fn read_scores(path: &Path) -> Result<Vec<ScorePair>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| input_error(path, e))?;
    let mut pairs = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| input_error(path, e))?;
        let field = |i: usize| record.get(i).unwrap_or("").parse::<f64>();
        match (field(1), field(2)) {
            (Ok(objective), Ok(subjective)) => pairs.push(ScorePair::new(objective, subjective)),
            // a first row that is not numeric is a header
            _ if row == 0 => continue,
            _ => {
                return Err(pqsm::Error::Parse {
                    line: row + 1,
                    message: format!("{}: expected id,objective,subjective", path.display()),
                }
                .into())
            }
        }
    }
    if pairs.is_empty() {
        bail!(pqsm::Error::InvalidCloud(format!("{}: no score rows", path.display())));
    }
    Ok(pairs)
}

fn input_error(path: &Path, e: csv::Error) -> anyhow::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => pqsm::Error::Io { path: path.into(), source }.into(),
        kind => anyhow::anyhow!("{}: {:?}", path.display(), kind),
    }
}

pub fn footer(report: &CorrelationReport) -> String {
    format!("PLCC={:.6}, SROCC={:.6}, RMSE={:.6}", report.plcc, report.srocc, report.rmse)
}

fn evaluate_cmd(input: &Path, json: bool, verbose: bool) -> Result<()> {
    let report = evaluate(&read_scores(input)?)?;
    let mut out = std::io::stdout().lock();
    if json {
        serde_json::to_writer_pretty(&mut out, &report)?;
        writeln!(out)?;
        return Ok(());
    }
    writeln!(out, "{}", footer(&report))?;
    if verbose {
        writeln!(out, "n = {}", report.n)?;
        writeln!(out, "beta = {:?}", report.fit.params.beta)?;
        writeln!(out, "converged = {} after {} iterations", report.fit.converged, report.fit.iterations)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Score { reference, distorted, projection, metric, json, verbose, timing } => {
            score(&reference, &distorted, &projection, &metric, json, verbose, timing)
        }
        Command::Batch(args) => batch::run(&args),
        Command::Distort { input, output, kind, level, seed, ascii } => distort(&input, &output, kind, level, seed, ascii),
        Command::Saliency { input, output, projection, dump_views, ascii } => {
            saliency(&input, &output, &projection, dump_views.as_deref(), ascii)
        }
        Command::Evaluate { input, json, verbose } => evaluate_cmd(&input, json, verbose),
    }
}

/// 2: input could not be read or parsed. 3: bad configuration.
/// 4: pooling failed. 1: anything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    use pqsm::Error as E;
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Io { .. } | E::Stream(_) | E::Parse { .. } | E::ColorlessCloud | E::Truncated { .. } => 2,
                E::InvalidCloud(_) | E::Image(_) => 2,
                E::Config(_) => 3,
                E::Pooling(_) => 4,
                _ => 1,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 2;
        }
    }
    1
}

/// The error chain on one line, skipping causes already quoted by their parent.
fn diagnostic(err: &anyhow::Error) -> String {
    let mut line = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if line.is_empty() {
            line = text;
        } else if !line.contains(&text) {
            line = format!("{line}: {text}");
        }
    }
    line
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .format_target(false)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", diagnostic(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
