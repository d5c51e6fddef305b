//! Randomized comparisons of the tape kernels against the nested-loop
//! oracles.

use gmf_core::detect::IntegralImage;
use gmf_core::nn::{softmax_row, ConvGeometry, PoolGeometry};
use gmf_core::{Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::oracles;

fn max_abs_diff(a: &[f32], b: &[f32]) -> f32 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f32::max)
}

/// Largest deviation over `trials` random convolutions (every dimension ≤ 8).
pub fn conv_trials(trials: usize, seed: u64) -> f32 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0f32;
    for _ in 0..trials {
        let k = [1, 3, 5][rng.random_range(0..3)];
        let (b, c, o) = (rng.random_range(1..=3), rng.random_range(1..=4), rng.random_range(1..=4));
        let (h, w) = (rng.random_range(k..=8), rng.random_range(k..=8));
        let stride = rng.random_range(1..=2);
        let pad = rng.random_range(0..=k / 2);
        let bias = rng.random_bool(0.5);
        let x = oracles::uniform_vec(&mut rng, b * c * h * w, -1.0, 1.0);
        let wt = oracles::uniform_vec(&mut rng, o * c * k * k, -1.0, 1.0);
        let bv = oracles::uniform_vec(&mut rng, o, -1.0, 1.0);

        let mut tape = Tape::<f32>::new();
        let xv = tape.constant(Tensor::from_vec(&[b, c, h, w], x.clone()).unwrap());
        let wv = tape.constant(Tensor::from_vec(&[o, c, k, k], wt.clone()).unwrap());
        let bvar = bias.then(|| tape.constant(Tensor::from_vec(&[o], bv.clone()).unwrap()));
        let y = tape.conv2d(xv, wv, bvar, ConvGeometry { stride, padding: pad }).unwrap();
        let (expect, shape) = oracles::conv2d(&x, [b, c, h, w], &wt, [o, c, k, k], bias.then_some(&bv[..]), stride, pad);
        assert_eq!(tape.shape(y), shape);
        worst = worst.max(max_abs_diff(tape.data(y), &expect));
    }
    worst
}

/// Largest deviation over `trials` random max/global pools.
pub fn pool_trials(trials: usize, seed: u64) -> f32 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0f32;
    for _ in 0..trials {
        let k = rng.random_range(1..=3);
        let (b, c) = (rng.random_range(1..=3), rng.random_range(1..=4));
        let (mut h, mut w) = (rng.random_range(k..=8), rng.random_range(k..=8));
        let stride = rng.random_range(1..=2);
        let pad = rng.random_range(0..=k / 2);
        let geom = PoolGeometry { kernel: k, stride, padding: pad };
        if geom == PoolGeometry::HALVE {
            h -= h % 2;
            w -= w % 2;
        }
        let x = oracles::uniform_vec(&mut rng, b * c * h * w, -1.0, 1.0);

        let mut tape = Tape::<f32>::new();
        let xv = tape.constant(Tensor::from_vec(&[b, c, h, w], x.clone()).unwrap());
        let y = tape.max_pool2d(xv, geom).unwrap();
        let (expect, shape) = oracles::max_pool(&x, [b, c, h, w], k, stride, pad);
        assert_eq!(tape.shape(y), shape);
        worst = worst.max(max_abs_diff(tape.data(y), &expect));

        let avg = tape.global_avg_pool(xv).unwrap();
        worst = worst.max(max_abs_diff(tape.data(avg), &oracles::global_avg(&x, b * c, h * w)));
        let max = tape.global_max_pool(xv).unwrap();
        worst = worst.max(max_abs_diff(tape.data(max), &oracles::global_max(&x, b * c, h * w)));
    }
    worst
}

/// Number of windows of a random `size × size` image whose sum or squared
/// sum differs from brute force, and the number of windows tried.
pub fn integral_exhaustive(size: usize, seed: u64) -> (usize, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let img: Vec<u8> = (0..size * size).map(|_| rng.random()).collect();
    let sq: Vec<u64> = img.iter().map(|&v| v as u64 * v as u64).collect();
    let ii = IntegralImage::from_plane(&img, size, size);
    let (mut bad, mut total) = (0, 0);
    for y in 0..size {
        for x in 0..size {
            for h in 1..=size - y {
                for w in 1..=size - x {
                    total += 1;
                    let brute_sq: u64 = (y..y + h).flat_map(|yy| (x..x + w).map(move |xx| yy * size + xx)).map(|i| sq[i]).sum();
                    if ii.rect_sum(x, y, w, h) != oracles::window_sum(&img, size, x, y, w, h) || ii.rect_sq_sum(x, y, w, h) != brute_sq {
                        bad += 1;
                    }
                }
            }
        }
    }
    (bad, total)
}

pub struct SoftmaxReport {
    /// Largest |Σ p − 1| over all rows.
    pub row_sum_dev: f64,
    /// |CE(uniform logits) − ln 6|.
    pub uniform_ce_dev: f64,
    /// Vectors whose argmax changed after adding a constant.
    pub argmax_changes: usize,
    /// Largest difference from the direct softmax formula.
    pub oracle_dev: f64,
}

pub fn softmax_contracts(vectors: usize, seed: u64) -> SoftmaxReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SoftmaxReport { row_sum_dev: 0.0, uniform_ce_dev: 0.0, argmax_changes: 0, oracle_dev: 0.0 };
    for _ in 0..vectors {
        let scale = [1.0, 10.0, 100.0][rng.random_range(0..3)];
        let z: Vec<f64> = (0..6).map(|_| rng.random_range(-scale..scale)).collect();
        let mut p = [0.0; 6];
        softmax_row(&z, &mut p).unwrap();
        report.row_sum_dev = report.row_sum_dev.max((p.iter().sum::<f64>() - 1.0).abs());
        let oracle = oracles::softmax(&z);
        report.oracle_dev = p.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(report.oracle_dev, f64::max);
        let shift = rng.random_range(-1000.0..1000.0);
        let shifted: Vec<f64> = z.iter().map(|v| v + shift).collect();
        if gmf_core::nn::argmax(&z) != gmf_core::nn::argmax(&shifted) {
            report.argmax_changes += 1;
        }
        let z32: Vec<f32> = z.iter().map(|&v| v as f32).collect();
        let mut p32 = [0f32; 6];
        softmax_row(&z32, &mut p32).unwrap();
        report.row_sum_dev = report.row_sum_dev.max((p32.iter().sum::<f32>() as f64 - 1.0).abs());
    }
    for c in [0.0, 3.5, -20.0] {
        for label in 0..6 {
            let mut tape = Tape::<f64>::new();
            let z = tape.constant(Tensor::full(&[1, 6], c));
            let ce = tape.cross_entropy(z, &[label]).unwrap();
            report.uniform_ce_dev = report.uniform_ce_dev.max((tape.data(ce)[0] - 6f64.ln()).abs());
        }
    }
    report
}
