use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use pqsm::evaluation::{evaluate, ScorePair};
use pqsm::{load_ply, MetricConfig};
use rayon::prelude::*;

use crate::{footer, pair_report, MetricArgs, ProjectionArgs};

#[derive(Args)]
pub struct BatchArgs {
    /// CSV with rows `ref,dist[,mos]`; relative paths resolve against its directory.
    manifest: PathBuf,
    #[command(flatten)]
    projection: ProjectionArgs,
    #[command(flatten)]
    metric: MetricArgs,
    /// Write results here instead of standard output.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Rows scored concurrently; 0 uses every core.
    #[arg(long, env = "PQSM_JOBS", default_value_t = 0)]
    jobs: usize,
}

struct Row {
    reference: String,
    distorted: String,
    mos: Option<Result<f64, String>>,
}

fn read_manifest(path: &Path) -> Result<Vec<Row>> {
    let text = std::fs::read_to_string(path).map_err(|source| pqsm::Error::Io { path: path.into(), source })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.with_context(|| format!("{}: malformed manifest", path.display()))?;
        if i == 0 && record.get(0).is_some_and(|f| f.eq_ignore_ascii_case("ref")) {
            continue;
        }
        if record.iter().all(str::is_empty) {
            continue;
        }
        let (Some(reference), Some(distorted)) = (record.get(0), record.get(1)) else {
            return Err(pqsm::Error::Parse {
                line: record.position().map_or(i + 1, |p| p.line() as usize),
                message: format!("{}: expected ref,dist[,mos]", path.display()),
            }
            .into());
        };
        let mos = record
            .get(2)
            .filter(|m| !m.is_empty())
            .map(|m| m.parse::<f64>().map_err(|_| format!("MOS {m:?} is not a number")));
        rows.push(Row { reference: reference.into(), distorted: distorted.into(), mos });
    }
    if rows.is_empty() {
        return Err(pqsm::Error::InvalidCloud(format!("{}: manifest has no rows", path.display())).into());
    }
    Ok(rows)
}

fn score_row(base: &Path, row: &Row, projection: &ProjectionArgs, config: &MetricConfig) -> Result<(f64, f64), String> {
    if let Some(Err(e)) = &row.mos {
        return Err(e.clone());
    }
    let (xp, yp) = (base.join(&row.reference), base.join(&row.distorted));
    let x = load_ply(&xp).map_err(|e| e.to_string())?;
    let y = load_ply(&yp).map_err(|e| e.to_string())?;
    let report = pair_report(&x, &y, &xp, &yp, projection, config).map_err(|e| e.to_string())?;
    Ok((report.radius, report.q))
}

pub fn run(args: &BatchArgs) -> Result<()> {
    let config = args.metric.config()?;
    args.projection.backend()?;
    args.projection.config().validate()?;
    let rows = read_manifest(&args.manifest)?;
    let base = args.manifest.parent().unwrap_or(Path::new("")).to_path_buf();
    for row in &rows {
        for p in [&row.reference, &row.distorted] {
            if !base.join(p).is_file() {
                log::warn!("{} does not exist", base.join(p).display());
            }
        }
    }

    let pool = rayon::ThreadPoolBuilder::new().num_threads(args.jobs).build()?;
    let results: Vec<Result<(f64, f64), String>> =
        pool.install(|| rows.par_iter().map(|row| score_row(&base, row, &args.projection, &config)).collect());

    let mut buffer = Vec::new();
    {
        let mut out = csv::Writer::from_writer(&mut buffer);
        out.write_record(["ref", "dist", "r", "Q", "error"])?;
        for (row, result) in rows.iter().zip(&results) {
            match result {
                Ok((r, q)) => out.write_record([&row.reference, &row.distorted, &r.to_string(), &format!("{q:.9}"), ""])?,
                Err(e) => out.write_record([&row.reference, &row.distorted, "", "", e])?,
            }
        }
        out.flush()?;
    }

    let rated: Vec<ScorePair> = rows
        .iter()
        .zip(&results)
        .filter_map(|(row, result)| match (&row.mos, result) {
            (Some(Ok(mos)), Ok((_, q))) => Some(ScorePair::new(*q, *mos)),
            _ => None,
        })
        .collect();
    if rows.iter().any(|r| r.mos.is_some()) {
        match evaluate(&rated) {
            Ok(report) => writeln!(buffer, "{}", footer(&report))?,
            Err(e) => log::warn!("no correlation footer: {e}"),
        }
    }

    match &args.output {
        Some(path) => std::fs::write(path, &buffer).with_context(|| format!("writing {}", path.display()))?,
        None => std::io::stdout().lock().write_all(&buffer)?,
    }

    let failed = results.iter().filter(|r| r.is_err()).count();
    if failed > 0 {
        log::warn!("{failed} of {} rows failed; see the error column", rows.len());
    }
    Ok(())
}
