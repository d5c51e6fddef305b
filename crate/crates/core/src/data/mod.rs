//! Labels, images, preprocessing and batching.

pub mod augment;
mod grid;
mod label;
mod preprocess;

pub use augment::Augmentation;
pub use grid::{luma, resize_bilinear, PixelGrid};
pub use label::ClassLabel;
pub use preprocess::{preprocess, PreprocessConfig};

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Mode, Result, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    Valid,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub path: String,
    pub label: ClassLabel,
}

/// Image paths with their labels; paths are relative to the manifest.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub rows: Vec<ManifestRow>,
    pub split: Option<Split>,
}

impl DatasetManifest {
    pub fn new(rows: Vec<ManifestRow>) -> Result<Self> {
        let m = DatasetManifest { rows, split: None };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for row in &self.rows {
            if !seen.insert(row.path.as_str()) {
                return Err(Error::Data(format!("duplicate manifest path {}", row.path)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Number of rows per class id.
    pub fn histogram(&self) -> [usize; 6] {
        let mut h = [0; 6];
        self.rows.iter().for_each(|r| h[r.label.id()] += 1);
        h
    }
}

/// Indexable labeled images.
pub trait Dataset: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn label(&self, index: usize) -> ClassLabel;

    /// Model input `[3, S, S]` for one image. `rng` drives augmentation.
    fn sample(&self, index: usize, mode: Mode, rng: &mut ChaCha8Rng) -> Result<Tensor<f32>>;

    /// Stacks samples into `[B, 3, S, S]`. Sample `k` draws from a generator
    /// seeded with `seeds[k]`, so the result does not depend on how the
    /// work is scheduled.
    fn load_batch(&self, indices: &[usize], mode: Mode, seeds: &[u64]) -> Result<(Tensor<f32>, Vec<usize>)> {
        let samples = indices
            .iter()
            .zip(seeds)
            .map(|(&i, &s)| self.sample(i, mode, &mut ChaCha8Rng::seed_from_u64(s)))
            .collect::<Result<Vec<_>>>()?;
        stack(indices.iter().map(|&i| self.label(i).id()).collect(), samples)
    }
}

/// Joins equally shaped samples along a new leading batch axis.
pub fn stack(labels: Vec<usize>, samples: Vec<Tensor<f32>>) -> Result<(Tensor<f32>, Vec<usize>)> {
    let first = samples.first().ok_or(Error::EmptyManifest)?.shape().to_vec();
    let mut data = Vec::with_capacity(samples.len() * samples[0].numel());
    for s in &samples {
        if s.shape() != first.as_slice() {
            return Err(Error::shape(format!("batch mixes shapes {first:?} and {:?}", s.shape())));
        }
        data.extend_from_slice(s.data());
    }
    let mut shape = alloc::vec![samples.len()];
    shape.extend(first);
    Ok((Tensor::from_vec(&shape, data)?, labels))
}

/// Decoded images held in memory.
#[derive(Clone, Debug)]
pub struct InMemoryDataset {
    pub images: Vec<(PixelGrid, ClassLabel)>,
    pub config: PreprocessConfig,
}

impl InMemoryDataset {
    pub fn new(images: Vec<(PixelGrid, ClassLabel)>, config: PreprocessConfig) -> Self {
        InMemoryDataset { images, config }
    }
}

impl Dataset for InMemoryDataset {
    fn len(&self) -> usize {
        self.images.len()
    }

    fn label(&self, index: usize) -> ClassLabel {
        self.images[index].1
    }

    fn sample(&self, index: usize, mode: Mode, rng: &mut ChaCha8Rng) -> Result<Tensor<f32>> {
        Ok(preprocess(&self.images[index].0, &self.config, mode, rng))
    }
}

/// splitmix64 finalizer.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the generator of sample `index` in `epoch`.
pub fn sample_seed(seed: u64, epoch: usize, index: usize) -> u64 {
    mix(mix(mix(seed) ^ epoch as u64) ^ index as u64)
}

/// Row indices of each batch of one epoch. With `shuffle` the order is a
/// permutation drawn from `(seed, epoch)`; the last batch may be short.
pub fn batch_indices(len: usize, batch_size: usize, shuffle: bool, seed: u64, epoch: usize) -> Result<Vec<Vec<usize>>> {
    if len == 0 {
        return Err(Error::EmptyManifest);
    }
    if batch_size == 0 {
        return Err(Error::config("batch size must be at least 1"));
    }
    let mut order: Vec<usize> = (0..len).collect();
    if shuffle {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(seed ^ mix(epoch as u64)));
        order.shuffle(&mut rng);
    }
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

/// Batches of one epoch as `(input [B, 3, S, S], labels)`.
pub fn batch_iter<'a, D: Dataset + ?Sized>(
    data: &'a D,
    batch_size: usize,
    shuffle: bool,
    mode: Mode,
    seed: u64,
    epoch: usize,
) -> Result<impl Iterator<Item = Result<(Tensor<f32>, Vec<usize>)>> + 'a> {
    let batches = batch_indices(data.len(), batch_size, shuffle, seed, epoch)?;
    Ok(batches.into_iter().map(move |idx| {
        let seeds: Vec<u64> = idx.iter().map(|&i| sample_seed(seed, epoch, i)).collect();
        data.load_batch(&idx, mode, &seeds)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_sizes_and_order() {
        let b = batch_indices(10, 4, false, 0, 0).unwrap();
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), [4, 4, 2]);
        assert_eq!(b.concat(), (0..10).collect::<Vec<_>>());
        let s1 = batch_indices(10, 4, true, 9, 2).unwrap();
        let s2 = batch_indices(10, 4, true, 9, 2).unwrap();
        assert_eq!(s1, s2);
        let mut all = s1.concat();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_ne!(batch_indices(10, 4, true, 9, 3).unwrap(), s1);
        assert_eq!(batch_indices(0, 4, false, 0, 0), Err(Error::EmptyManifest));
    }

    #[test]
    fn manifest_rejects_duplicates() {
        let row = ManifestRow { path: "0_happiness/a.jpg".into(), label: ClassLabel::Happiness };
        assert!(DatasetManifest::new(alloc::vec![row.clone(), row]).is_err());
    }

    #[test]
    fn in_memory_batches() {
        let images = (0..5).map(|i| (PixelGrid::filled(8, 8, 1, i * 40), ClassLabel::from_id(i as usize % 6).unwrap())).collect();
        let cfg = PreprocessConfig { target_size: 4, ..Default::default() };
        let ds = InMemoryDataset::new(images, cfg);
        let batches: Vec<_> = batch_iter(&ds, 2, false, Mode::Eval, 1, 0).unwrap().collect::<Result<_>>().unwrap();
        assert_eq!(batches.len(), 3);
        assert_eq!(batches[0].0.shape(), &[2, 3, 4, 4]);
        assert_eq!(batches[2].1, [4]);
    }
}
