//! Manifest-backed datasets decoded from disk.

use std::path::Path;

use gmf_core::data::{preprocess, stack, ClassLabel, Dataset, DatasetManifest, PixelGrid, PreprocessConfig};
use gmf_core::{Mode, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::codec::decode_image;
use crate::error::Result;
use crate::manifest::{read_manifest, resolve};
use crate::workers::par_map;

/// Every image of a manifest, decoded once and kept in memory.
/// Preprocessing of a batch is spread over `workers` threads.
#[derive(Clone, Debug)]
pub struct ImageDataset {
    pub images: Vec<(PixelGrid, ClassLabel)>,
    pub config: PreprocessConfig,
    pub workers: usize,
}

impl ImageDataset {
    /// Reads the manifest at `path` and decodes all of its images.
    pub fn open(path: &Path, config: PreprocessConfig, workers: usize) -> Result<Self> {
        let manifest = read_manifest(path)?;
        Self::from_manifest(path, &manifest, config, workers)
    }

    pub fn from_manifest(path: &Path, manifest: &DatasetManifest, config: PreprocessConfig, workers: usize) -> Result<Self> {
        config.validate()?;
        if manifest.is_empty() {
            return Err(gmf_core::Error::EmptyManifest.into());
        }
        let decoded = par_map(&manifest.rows, workers, |row| decode_image(&resolve(path, row)).map(|img| (img, row.label)));
        let images = decoded.into_iter().collect::<Result<Vec<_>>>()?;
        Ok(ImageDataset { images, config, workers })
    }
}

impl Dataset for ImageDataset {
    fn len(&self) -> usize {
        self.images.len()
    }

    fn label(&self, index: usize) -> ClassLabel {
        self.images[index].1
    }

    fn sample(&self, index: usize, mode: Mode, rng: &mut ChaCha8Rng) -> gmf_core::Result<Tensor<f32>> {
        Ok(preprocess(&self.images[index].0, &self.config, mode, rng))
    }

    fn load_batch(&self, indices: &[usize], mode: Mode, seeds: &[u64]) -> gmf_core::Result<(Tensor<f32>, Vec<usize>)> {
        let jobs: Vec<(usize, u64)> = indices.iter().copied().zip(seeds.iter().copied()).collect();
        let samples = par_map(&jobs, self.workers, |&(i, s)| self.sample(i, mode, &mut ChaCha8Rng::seed_from_u64(s)));
        let samples = samples.into_iter().collect::<gmf_core::Result<Vec<_>>>()?;
        stack(indices.iter().map(|&i| self.label(i).id()).collect(), samples)
    }
}
