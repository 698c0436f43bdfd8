use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use texsim::curvelet::{make_params, CurveletTransform};
use texsim::features::{extract_features, ParamsInfo};
use texsim::imgprep::{load_gray, DatasetEntry, DatasetKind, DatasetLayout, Manifest};
use texsim::retrieval::RocCurve;
use texsim::similarity::{czekanowski, mse};
use texsim::{Error, FeatureVector, GrayImage, RetrievalReport, ScoreMatrix};

use crate::cache::{FeatureCache, Outcome, TransformOptions};

pub const EXIT_DATA: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;

pub const CACHE_ENV: &str = "TEXSIM_CACHE_DIR";
pub const REPORT_VERSION: u32 = 1;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn data(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_DATA,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        Self {
            code: exit_code(&e),
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        Self::data(e.to_string())
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Numeric(_) => EXIT_NUMERIC,
        _ => EXIT_DATA,
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    #[default]
    Czekanowski,
    Mse,
}

/// Reports every per-item failure, then fails with the most severe exit code.
fn check_failures(failures: Vec<(String, Error)>, total: usize, what: &str) -> CliResult {
    if failures.is_empty() {
        return Ok(());
    }
    let code = failures.iter().map(|(_, e)| exit_code(e)).max().unwrap_or(EXIT_DATA);
    for (name, e) in &failures {
        eprintln!("error: {name}: {e}");
    }
    Err(CliError {
        code,
        message: format!("{} of {total} {what} failed", failures.len()),
    })
}

pub fn prepare(source: &Path, kind: DatasetKind, out: &Path) -> CliResult {
    let mut sources: Vec<PathBuf> = fs::read_dir(source)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", source.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && !p.file_name().is_some_and(|n| n.to_string_lossy().starts_with('.')))
        .collect();
    sources.sort();
    if sources.is_empty() {
        return Err(CliError::data(format!("no source images in {}", source.display())));
    }
    fs::create_dir_all(out)?;

    let results: Vec<texsim::Result<Vec<DatasetEntry>>> = sources
        .par_iter()
        .enumerate()
        .map(|(class, path)| {
            let patches = kind.prepare(&load_gray(path)?)?;
            patches
                .iter()
                .enumerate()
                .map(|(sample, patch)| {
                    let filename = format!("{class}_{sample}.png");
                    patch.save_png(out.join(&filename))?;
                    Ok(DatasetEntry {
                        class,
                        sample,
                        filename,
                    })
                })
                .collect()
        })
        .collect();

    let mut entries = Vec::new();
    let mut failures = Vec::new();
    for (path, result) in sources.iter().zip(results) {
        match result {
            Ok(e) => entries.extend(e),
            Err(e) => failures.push((path.display().to_string(), e)),
        }
    }
    check_failures(failures, sources.len(), "source images")?;

    let layout = DatasetLayout::new(sources.len(), kind.samples_per_class(), entries)?;
    let manifest = Manifest {
        kind: Some(kind),
        sources: sources
            .iter()
            .map(|p| p.file_name().unwrap_or_default().to_string_lossy().into_owned())
            .collect(),
        ..Manifest::new(layout)
    };
    manifest.save(out.join("manifest.json"))?;
    println!(
        "prepared C={} S={} ({} patches) in {}",
        manifest.layout.class_count,
        manifest.layout.samples_per_class,
        manifest.layout.len(),
        out.display()
    );
    Ok(())
}

fn load_manifest(path: &Path) -> CliResult<(Manifest, PathBuf)> {
    let manifest =
        Manifest::load(path).map_err(|e| CliError::data(format!("cannot load manifest {}: {e}", path.display())))?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((manifest, root))
}

fn cache_dir(explicit: Option<PathBuf>, dataset_root: &Path) -> PathBuf {
    explicit.unwrap_or_else(|| dataset_root.join("features"))
}

/// Features of every manifest entry in order, with the number of fresh extractions.
fn dataset_features(
    manifest: &Manifest,
    root: &Path,
    cache: &FeatureCache,
    options: TransformOptions,
) -> CliResult<(Vec<FeatureVector>, usize)> {
    let results: Vec<_> = manifest
        .layout
        .entries
        .par_iter()
        .map(|e| cache.features(&root.join(&e.filename), options))
        .collect();
    let mut features = Vec::with_capacity(results.len());
    let mut extracted = 0;
    let mut failures = Vec::new();
    for (entry, result) in manifest.layout.entries.iter().zip(results) {
        match result {
            Ok((f, outcome)) => {
                extracted += usize::from(outcome == Outcome::Extracted);
                features.push(f);
            }
            Err(e) => failures.push((entry.filename.clone(), e)),
        }
    }
    check_failures(failures, manifest.layout.len(), "images")?;
    Ok((features, extracted))
}

pub fn features(manifest_path: &Path, options: TransformOptions, cache: Option<PathBuf>) -> CliResult {
    let (manifest, root) = load_manifest(manifest_path)?;
    let cache = FeatureCache::open(cache_dir(cache, &root))?;
    let (features, extracted) = dataset_features(&manifest, &root, &cache, options)?;
    println!(
        "{} feature files: {extracted} extracted, {} cached ({})",
        features.len(),
        features.len() - extracted,
        cache.dir().display()
    );
    Ok(())
}

fn image_features(image: &GrayImage, options: TransformOptions) -> texsim::Result<FeatureVector> {
    let params = make_params(image.height(), image.width(), options.scales, options.angles)?;
    let transform = CurveletTransform::new(image.height(), image.width(), params)?;
    extract_features(&transform.forward(image)?)
}

pub fn sim(a: &Path, b: &Path, options: TransformOptions, measure: Measure) -> CliResult {
    let (a, b) = (load_gray(a)?, load_gray(b)?);
    let score = match measure {
        Measure::Czekanowski => {
            if (a.height(), a.width()) != (b.height(), b.width()) {
                return Err(Error::Incompatible(format!(
                    "images of size {}x{} and {}x{}",
                    a.height(),
                    a.width(),
                    b.height(),
                    b.width()
                ))
                .into());
            }
            czekanowski(&image_features(&a, options)?, &image_features(&b, options)?)?
        }
        Measure::Mse => mse(&a, &b)?,
    };
    println!("{:.6}", score.value);
    Ok(())
}

#[derive(Serialize)]
struct BenchmarkFile<'a> {
    version: u32,
    measure: Measure,
    #[serde(skip_serializing_if = "Option::is_none")]
    params: Option<ParamsInfo>,
    classes: usize,
    samples_per_class: usize,
    #[serde(flatten)]
    report: &'a RetrievalReport,
}

pub struct BenchmarkRun {
    pub manifest: PathBuf,
    pub options: TransformOptions,
    pub measure: Measure,
    pub cache: Option<PathBuf>,
}

fn run_benchmark(run: &BenchmarkRun) -> CliResult<(Manifest, PathBuf, Option<ParamsInfo>, RetrievalReport)> {
    let (manifest, root) = load_manifest(&run.manifest)?;
    let layout = &manifest.layout;
    if layout.class_count < 2 || layout.samples_per_class < 2 {
        return Err(Error::Config(format!(
            "retrieval needs at least 2 classes and 2 samples per class, got C={} S={}",
            layout.class_count, layout.samples_per_class
        ))
        .into());
    }
    let (scores, params) = match run.measure {
        Measure::Czekanowski => {
            let cache = FeatureCache::open(cache_dir(run.cache.clone(), &root))?;
            let (features, _) = dataset_features(&manifest, &root, &cache, run.options)?;
            let params = features.first().map(|f| ParamsInfo {
                scales: f.digest.scales,
                orientations_coarse: f.digest.orientations_coarse,
            });
            (ScoreMatrix::compute(&features, czekanowski)?, params)
        }
        Measure::Mse => {
            let results: Vec<_> = layout.entries.par_iter().map(|e| load_gray(root.join(&e.filename))).collect();
            let mut images = Vec::with_capacity(results.len());
            let mut failures = Vec::new();
            for (entry, result) in layout.entries.iter().zip(results) {
                match result {
                    Ok(img) => images.push(img),
                    Err(e) => failures.push((entry.filename.clone(), e)),
                }
            }
            check_failures(failures, layout.len(), "images")?;
            (ScoreMatrix::compute(&images, mse)?, None)
        }
    };
    let report = RetrievalReport::evaluate(&scores, layout)?;
    Ok((manifest, root, params, report))
}

pub fn benchmark(run: &BenchmarkRun, out: Option<PathBuf>) -> CliResult {
    let (manifest, root, params, report) = run_benchmark(run)?;
    let out = out.unwrap_or(root);
    fs::create_dir_all(&out)?;

    let file = BenchmarkFile {
        version: REPORT_VERSION,
        measure: run.measure,
        params,
        classes: manifest.layout.class_count,
        samples_per_class: manifest.layout.samples_per_class,
        report: &report,
    };
    let mut text = serde_json::to_string_pretty(&file).map_err(Error::from)?;
    text.push('\n');
    fs::write(out.join("report.json"), text)?;
    write_roc(&report.roc(), File::create(out.join("roc.csv"))?)?;

    println!(
        "P@1 {:.4}  MRR {:.4}  MAP {:.4}  AUC {:.4}",
        report.p_at_1, report.mrr, report.map, report.auc
    );
    println!("wrote report.json and roc.csv to {}", out.display());
    Ok(())
}

/// Same experiment as `benchmark`, emitting only the ROC curve.
pub fn roc(run: &BenchmarkRun, out: Option<PathBuf>) -> CliResult {
    let (_, _, _, report) = run_benchmark(run)?;
    match out {
        Some(dir) => {
            fs::create_dir_all(&dir)?;
            write_roc(&report.roc(), File::create(dir.join("roc.csv"))?)?;
        }
        None => write_roc(&report.roc(), io::stdout().lock())?,
    }
    eprintln!("AUC {:.4}", report.auc);
    Ok(())
}

fn write_roc(curve: &RocCurve, out: impl Write) -> io::Result<()> {
    let mut out = BufWriter::new(out);
    curve.write_csv(&mut out)?;
    out.flush()
}

pub fn wedges(image: &Path, options: TransformOptions) -> CliResult {
    let image = load_gray(image)?;
    let params = make_params(image.height(), image.width(), options.scales, options.angles)?;
    let decomposition = CurveletTransform::new(image.height(), image.width(), params)?.forward(&image)?;
    let mut out = BufWriter::new(io::stdout().lock());
    writeln!(out, "scale,orientation,rows,cols,energy")?;
    for w in &decomposition.wedges {
        writeln!(
            out,
            "{},{},{},{},{}",
            w.scale,
            w.orientation,
            w.coefficients.nrows(),
            w.coefficients.ncols(),
            w.energy()
        )?;
    }
    out.flush()?;
    Ok(())
}
