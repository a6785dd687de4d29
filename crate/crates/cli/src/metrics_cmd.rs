use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Subcommand};
use ptd_core::embed::{embed_files, list_images};
use ptd_core::eval::{read_ratings, resolve_latest};
use ptd_core::metrics::{
    clip_stats_by_pair, default_grid, fid, inception_score, mean_power_spectrum, spectral_distance,
    top_bottom, FeatureStats, MeanSpectrum, DEFAULT_SPECTRUM_SIDE,
};
use ptd_core::store::{load_features_of, DatasetLayout, FeatureKind, ImageRecord};
use serde::Serialize;
use serde_json::json;

use crate::common::{load_manifest, root_of, write_output, Slice};
use crate::BackendArgs;

#[derive(Subcommand)]
pub enum MetricsCmd {
    /// Inception Score from stored inception_logits.
    Is(IsArgs),
    /// FID between the dataset and a reference image directory.
    Fid(FidArgs),
    /// Mean power spectrum, optionally compared against a reference directory.
    Spectrum(SpectrumArgs),
    /// CLIP score statistics per descriptor word pair.
    Clipstats(ClipstatsArgs),
    /// Mean human representativeness below CLIP score quantiles.
    Curve(CurveArgs),
}

#[derive(Args)]
pub struct Common {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_enum, default_value_t = Slice::Live)]
    slice: Slice,
    /// JSON output; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<(DatasetLayout, Vec<ImageRecord>)> {
        let records = load_manifest(&self.manifest)?;
        Ok((DatasetLayout::new(root_of(&self.manifest)), records))
    }
}

#[derive(Args)]
pub struct IsArgs {
    #[command(flatten)]
    common: Common,
    /// inception_logits feature file; the dataset's own by default.
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    splits: usize,
    /// Also score every texture class on its own.
    #[arg(long)]
    per_class: bool,
}

#[derive(Args)]
pub struct FidArgs {
    #[command(flatten)]
    common: Common,
    /// Reference images, or a precomputed inception_pool PTDF file. With
    /// --per-class, a directory holding one subdirectory per texture class.
    #[arg(long)]
    reference: PathBuf,
    /// inception_pool feature file; the dataset's own by default.
    #[arg(long)]
    features: Option<PathBuf>,
    #[command(flatten)]
    backend: BackendArgs,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long)]
    per_class: bool,
}

#[derive(Args)]
pub struct SpectrumArgs {
    #[command(flatten)]
    common: Common,
    /// Reference image directory for the spectral distance.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Resize side before the FFT; 0 keeps native sizes (they must match).
    #[arg(long, default_value_t = DEFAULT_SPECTRUM_SIDE)]
    side: u32,
    /// PNG of the dataset's mean log-power map.
    #[arg(long)]
    map: Option<PathBuf>,
    /// PNG of the reference's mean log-power map.
    #[arg(long)]
    reference_map: Option<PathBuf>,
    #[arg(long)]
    per_class: bool,
}

#[derive(Args)]
pub struct ClipstatsArgs {
    #[command(flatten)]
    common: Common,
    /// Top and bottom rows to report.
    #[arg(long, default_value_t = 5)]
    top: usize,
    /// Restrict the report to one family, e.g. `texture×color`.
    #[arg(long)]
    family: Option<String>,
    #[arg(long, default_value_t = 1)]
    min_n: usize,
    /// Full table as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
pub struct CurveArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Rating log written by `ptd eval serve`.
    #[arg(long)]
    ratings: PathBuf,
    /// Comma-separated quantiles; 0.05 to 1.0 in steps of 0.05 by default.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

pub fn run(cmd: MetricsCmd) -> Result<()> {
    match cmd {
        MetricsCmd::Is(a) => is(a),
        MetricsCmd::Fid(a) => fid_cmd(a),
        MetricsCmd::Spectrum(a) => spectrum(a),
        MetricsCmd::Clipstats(a) => clipstats(a),
        MetricsCmd::Curve(a) => curve(a),
    }
}

fn by_class(records: &[ImageRecord]) -> BTreeMap<String, Vec<u64>> {
    let mut out: BTreeMap<String, Vec<u64>> = BTreeMap::new();
    for r in records {
        out.entry(r.texture_class().to_string())
            .or_default()
            .push(r.image_id);
    }
    out
}

fn is(a: IsArgs) -> Result<()> {
    let (layout, records) = a.common.load()?;
    let path = a
        .features
        .unwrap_or_else(|| layout.feature(FeatureKind::InceptionLogits));
    let logits = load_features_of(&path, FeatureKind::InceptionLogits)?;
    let live = a.common.slice.select(records);
    let ids: Vec<u64> = live.iter().map(|r| r.image_id).collect();
    let overall = inception_score(&logits.select(&ids)?, a.splits)?;
    eprintln!(
        "IS {:.4} ± {:.4} over {} images",
        overall.mean,
        overall.std,
        ids.len()
    );
    let mut per_class = BTreeMap::new();
    if a.per_class {
        for (class, ids) in by_class(&live) {
            let splits = a.splits.min(ids.len());
            per_class.insert(class, inception_score(&logits.select(&ids)?, splits)?);
        }
    }
    write_output(
        a.common.out.as_deref(),
        &json!({ "n_images": ids.len(), "overall": overall, "per_class": per_class }),
    )
}

fn reference_stats(path: &Path, a: &FidArgs) -> Result<FeatureStats> {
    let rows = if path.is_file() {
        let m = load_features_of(path, FeatureKind::InceptionPool)?;
        m.rows().map(<[f32]>::to_vec).collect::<Vec<_>>()
    } else {
        let images = list_images(path)?;
        if images.is_empty() {
            bail!("{}: no images", path.display());
        }
        let embedder = a.backend.embedder()?;
        embed_files(
            &images,
            FeatureKind::InceptionPool,
            embedder.as_ref(),
            a.batch,
        )?
    };
    Ok(FeatureStats::from_rows(&rows)?)
}

fn fid_cmd(a: FidArgs) -> Result<()> {
    let (layout, records) = a.common.load()?;
    let path = a
        .features
        .clone()
        .unwrap_or_else(|| layout.feature(FeatureKind::InceptionPool));
    let pool = load_features_of(&path, FeatureKind::InceptionPool)?;
    let live = a.common.slice.select(records);
    let ids: Vec<u64> = live.iter().map(|r| r.image_id).collect();
    let mut report = BTreeMap::new();
    if a.per_class {
        for (class, ids) in by_class(&live) {
            let dir = a.reference.join(&class);
            if !dir.is_dir() {
                log::warn!("no reference directory for class `{class}`");
                continue;
            }
            let ours = FeatureStats::from_matrix(&pool.select(&ids)?)?;
            let theirs = reference_stats(&dir, &a)?;
            report.insert(class, fid(&ours, &theirs)?);
        }
    } else {
        let ours = FeatureStats::from_matrix(&pool.select(&ids)?)?;
        let theirs = reference_stats(&a.reference, &a)?;
        let d = fid(&ours, &theirs)?;
        eprintln!("FID {d:.4} over {} images", ids.len());
        report.insert("all".to_string(), d);
    }
    write_output(
        a.common.out.as_deref(),
        &json!({ "n_images": ids.len(), "fid": report }),
    )
}

#[derive(Serialize)]
struct SpectrumSummary {
    n_images: usize,
    width: usize,
    height: usize,
    radial: Vec<f64>,
    normalized_radial: Vec<f64>,
}

impl From<&MeanSpectrum> for SpectrumSummary {
    fn from(s: &MeanSpectrum) -> Self {
        Self {
            n_images: s.n_images,
            width: s.width,
            height: s.height,
            radial: s.radial.clone(),
            normalized_radial: s.normalized_radial(),
        }
    }
}

fn spectrum(a: SpectrumArgs) -> Result<()> {
    let (layout, records) = a.common.load()?;
    let resize = (a.side > 0).then_some(a.side);
    let path_of = |r: &ImageRecord| -> Result<PathBuf> {
        let rel = r
            .file_path
            .as_deref()
            .with_context(|| format!("image {} has no file", r.image_id))?;
        Ok(layout.resolve(rel))
    };
    let live = a.common.slice.select(records);
    let paths = live.iter().map(path_of).collect::<Result<Vec<_>>>()?;
    let ours = mean_power_spectrum(&paths, resize)?;
    if let Some(p) = &a.map {
        ours.save_png(p)?;
    }
    let mut per_class = BTreeMap::new();
    if a.per_class {
        let mut groups: BTreeMap<String, Vec<PathBuf>> = BTreeMap::new();
        for r in &live {
            groups
                .entry(r.texture_class().to_string())
                .or_default()
                .push(path_of(r)?);
        }
        for (class, paths) in groups {
            per_class.insert(
                class,
                SpectrumSummary::from(&mean_power_spectrum(&paths, resize)?),
            );
        }
    }
    let mut reference = None;
    let mut distance = None;
    if let Some(dir) = &a.reference {
        let theirs = mean_power_spectrum(&list_images(dir)?, resize)?;
        if let Some(p) = &a.reference_map {
            theirs.save_png(p)?;
        }
        let d = spectral_distance(&ours, &theirs)?;
        eprintln!("spectral distance {d:.6}");
        distance = Some(d);
        reference = Some(SpectrumSummary::from(&theirs));
    }
    write_output(
        a.common.out.as_deref(),
        &json!({
            "dataset": SpectrumSummary::from(&ours),
            "reference": reference,
            "distance": distance,
            "per_class": per_class,
        }),
    )
}

fn clipstats(a: ClipstatsArgs) -> Result<()> {
    let (_, records) = a.common.load()?;
    let live = a.common.slice.select(records);
    let table = clip_stats_by_pair(&live)?;
    let (top, bottom) = top_bottom(&table, a.top, a.family.as_deref(), a.min_n);
    for (title, rows) in [("top", &top), ("bottom", &bottom)] {
        eprintln!("{title} {}", a.top);
        for p in rows {
            eprintln!(
                "  {:<16} {:<22} {:<22} n={:<6} mean={:.3} median={:.3}",
                p.family, p.first, p.second, p.n, p.mean, p.median
            );
        }
    }
    if let Some(path) = &a.csv {
        let mut w = csv::Writer::from_path(path).with_context(|| path.display().to_string())?;
        for p in &table {
            w.serialize(p)?;
        }
        w.flush()?;
    }
    write_output(
        a.common.out.as_deref(),
        &json!({ "top": top, "bottom": bottom, "table": table }),
    )
}

fn parse_grid(s: Option<&str>) -> Result<Vec<f64>> {
    let Some(s) = s else {
        return Ok(default_grid());
    };
    s.split(',')
        .map(|q| {
            let q: f64 = q
                .trim()
                .parse()
                .with_context(|| format!("bad quantile `{q}`"))?;
            if !(0.0..=1.0).contains(&q) {
                bail!("quantile {q} outside [0, 1]");
            }
            Ok(q)
        })
        .collect()
}

fn curve(a: CurveArgs) -> Result<()> {
    let records = load_manifest(&a.manifest)?;
    let ratings = resolve_latest(&read_ratings(&a.ratings)?);
    let grid = parse_grid(a.grid.as_deref())?;
    let curve = ptd_core::eval::rating_curve(&ratings, &records, &grid)?;
    if let Some(path) = &a.csv {
        let mut w = csv::Writer::from_path(path).with_context(|| path.display().to_string())?;
        for p in &curve.points {
            w.serialize(p)?;
        }
        w.flush()?;
    }
    write_output(a.out.as_deref(), &curve)
}
