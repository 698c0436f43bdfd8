//! Feature files on disk, one per (image content, transform parameters).

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use sha2::{Digest, Sha256};
use texsim::curvelet::make_params;
use texsim::features::{extract_features, ParamsDigest};
use texsim::imgprep::decode_gray;
use texsim::{CurveletParams, CurveletTransform, FeatureFile, FeatureVector, Result};

/// User overrides for the transform parameters; `None` picks the default.
#[derive(Debug, Clone, Copy, Default)]
pub struct TransformOptions {
    pub scales: Option<usize>,
    pub angles: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Extracted,
    Cached,
}

type PlanKey = (usize, usize, CurveletParams);

pub struct FeatureCache {
    dir: PathBuf,
    transforms: Mutex<HashMap<PlanKey, Arc<CurveletTransform>>>,
    // One lock per entry so identical images are extracted once per run.
    entry_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl FeatureCache {
    pub fn open(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            transforms: Mutex::new(HashMap::new()),
            entry_locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Loads the features of `image_path` from the cache, extracting and
    /// storing them first when missing or unreadable.
    pub fn features(&self, image_path: &Path, options: TransformOptions) -> Result<(FeatureVector, Outcome)> {
        let bytes = fs::read(image_path)?;
        let image = decode_gray(&bytes)?;
        let (height, width) = (image.height(), image.width());
        let params = make_params(height, width, options.scales, options.angles)?;
        let digest = ParamsDigest::new(height, width, &params);
        let key = format!("{}-{digest}.json", hex::encode(Sha256::digest(&bytes)));
        let path = self.dir.join(&key);

        let entry_lock = Arc::clone(lock(&self.entry_locks).entry(key.clone()).or_default());
        let _guard = lock(&entry_lock);
        if let Some(features) = read_entry(&path, digest) {
            return Ok((features, Outcome::Cached));
        }

        let transform = self.transform(height, width, params)?;
        let features = extract_features(&transform.forward(&image)?)?;
        // Write under a private name and rename so readers never see a partial file.
        let tmp = self.dir.join(format!(".{key}.{}.tmp", std::process::id()));
        FeatureFile::new(image_path.display().to_string(), &features).save(&tmp)?;
        fs::rename(&tmp, &path)?;
        Ok((features, Outcome::Extracted))
    }

    fn transform(&self, height: usize, width: usize, params: CurveletParams) -> Result<Arc<CurveletTransform>> {
        let mut plans = lock(&self.transforms);
        if let Some(t) = plans.get(&(height, width, params)) {
            return Ok(Arc::clone(t));
        }
        let t = Arc::new(CurveletTransform::new(height, width, params)?);
        plans.insert((height, width, params), Arc::clone(&t));
        Ok(t)
    }
}

fn lock<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

fn read_entry(path: &Path, digest: ParamsDigest) -> Option<FeatureVector> {
    let features = FeatureFile::load(path).ok()?.to_features().ok()?;
    (features.digest == digest).then_some(features)
}
