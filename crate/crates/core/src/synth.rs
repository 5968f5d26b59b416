//! Synthetic datasets and plaintext oracles for evaluation.
//!
//! The planted generator controls every document's dot product with the
//! prompt: document `j` is `t_j * u + sqrt(1 - t_j^2) * w_j` for the unit
//! prompt `u` and a unit `w_j` orthogonal to it. With targets spread
//! evenly over `(-1, 1)` the count of documents above a dyadic threshold
//! halves each bisection step, which is what makes iteration counts
//! reproducible; the spacing `2/N` also dwarfs fixed-point error, so the
//! retrieved set matches the floating-point oracle exactly.

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

use crate::field::FieldParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SynthMode {
    /// Planted dot products spread evenly over (-1, 1).
    Spread,
    /// Independent normalized gaussian rows (no planted structure).
    Gaussian,
    /// Like `Spread`, but the top `cluster` documents are exact copies of
    /// one vector with dot product `value`: more than `slack + 1` ties at
    /// the boundary, the degenerate case for the stopping rule.
    Duplicates { cluster: usize, value: f64 },
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub docs: usize,
    pub dim: usize,
    pub prompt: Vec<f64>,
    /// Row-major `docs x dim`, every row unit-norm.
    pub embeddings: Vec<f64>,
}

fn unit_gaussian(rng: &mut StdRng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| sample_gaussian(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            return v.iter().map(|x| x / norm).collect();
        }
    }
}

fn sample_gaussian(rng: &mut StdRng) -> f64 {
    // Box-Muller; tails are irrelevant here.
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Unit vector orthogonal to `u` with the prescribed dot product `t`.
fn planted_row(rng: &mut StdRng, u: &[f64], t: f64) -> Vec<f64> {
    let dim = u.len();
    loop {
        let w = unit_gaussian(rng, dim);
        let proj: f64 = w.iter().zip(u).map(|(a, b)| a * b).sum();
        let mut perp: Vec<f64> = w.iter().zip(u).map(|(a, b)| a - proj * b).collect();
        let norm = perp.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-9 {
            continue;
        }
        for v in &mut perp {
            *v /= norm;
        }
        let c = (1.0 - t * t).sqrt();
        return u.iter().zip(&perp).map(|(a, b)| t * a + c * b).collect();
    }
}

/// Deterministic synthetic dataset; the same seed reproduces it exactly.
pub fn synth_dataset(docs: usize, dim: usize, seed: u64, mode: SynthMode) -> SynthData {
    let mut rng = StdRng::seed_from_u64(seed);
    let prompt = unit_gaussian(&mut rng, dim);
    let mut embeddings = Vec::with_capacity(docs * dim);
    match mode {
        SynthMode::Gaussian => {
            for _ in 0..docs {
                embeddings.extend(unit_gaussian(&mut rng, dim));
            }
        }
        SynthMode::Spread => {
            let mut order: Vec<usize> = (0..docs).collect();
            order.shuffle(&mut rng);
            let mut rows = vec![Vec::new(); docs];
            for (rank, &slot) in order.iter().enumerate() {
                let t = (2.0 * rank as f64 + 1.0) / docs as f64 - 1.0;
                rows[slot] = planted_row(&mut rng, &prompt, t);
            }
            for row in rows {
                embeddings.extend(row);
            }
        }
        SynthMode::Duplicates { cluster, value } => {
            let dup = planted_row(&mut rng, &prompt, value);
            let mut order: Vec<usize> = (0..docs).collect();
            order.shuffle(&mut rng);
            let mut rows = vec![Vec::new(); docs];
            let spread = docs - cluster;
            for (rank, &slot) in order.iter().enumerate() {
                if rank >= spread {
                    rows[slot] = dup.clone();
                } else {
                    // keep the spread part clearly below the duplicate value
                    let t = (value - 0.2) * ((2.0 * rank as f64 + 1.0) / spread as f64 - 1.0);
                    rows[slot] = planted_row(&mut rng, &prompt, t);
                }
            }
            for row in rows {
                embeddings.extend(row);
            }
        }
    }
    SynthData { docs, dim, prompt, embeddings }
}

/// Exact integer dot products of the encoded vectors; this is the
/// fixed-point plaintext oracle the protocol must reproduce bit for bit.
pub fn encoded_dots(params: &FieldParams, prompt: &[f64], embeddings: &[f64], dim: usize) -> Vec<i128> {
    let pe: Vec<i128> = prompt
        .iter()
        .map(|&v| params.center(params.encode_coord(v).expect("prompt coordinate")))
        .collect();
    embeddings
        .chunks(dim)
        .map(|row| {
            row.iter()
                .zip(&pe)
                .map(|(&v, &a)| a * params.center(params.encode_coord(v).expect("doc coordinate")))
                .sum()
        })
        .collect()
}

/// Count of documents with encoded distance at least `threshold`.
pub fn count_at_least(dots: &[i128], threshold: i128) -> u64 {
    dots.iter().filter(|&&d| d >= threshold).count() as u64
}

/// Indices selected by a threshold on the encoded distances.
pub fn select_at_least(dots: &[i128], threshold: i128) -> Vec<u64> {
    dots.iter()
        .enumerate()
        .filter(|(_, &d)| d >= threshold)
        .map(|(j, _)| j as u64)
        .collect()
}

/// Floating-point top-k indices, ties broken by lower index.
pub fn float_topk(prompt: &[f64], embeddings: &[f64], dim: usize, k: usize) -> Vec<u64> {
    let mut scored: Vec<(f64, u64)> = embeddings
        .chunks(dim)
        .enumerate()
        .map(|(j, row)| (row.iter().zip(prompt).map(|(a, b)| a * b).sum::<f64>(), j as u64))
        .collect();
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    scored.truncate(k);
    scored.into_iter().map(|(_, j)| j).collect()
}

/// Recall of `result` against the floating-point top-`result.len()`.
pub fn measure_recall(result: &[u64], prompt: &[f64], embeddings: &[f64], dim: usize) -> f64 {
    if result.is_empty() {
        return 0.0;
    }
    let top = float_topk(prompt, embeddings, dim, result.len());
    let top_set: std::collections::HashSet<u64> = top.iter().copied().collect();
    let hit = result.iter().filter(|j| top_set.contains(j)).count();
    hit as f64 / top.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_dataset() {
        let a = synth_dataset(32, 8, 5, SynthMode::Spread);
        let b = synth_dataset(32, 8, 5, SynthMode::Spread);
        assert_eq!(a.embeddings, b.embeddings);
        assert_eq!(a.prompt, b.prompt);
    }

    #[test]
    fn rows_are_unit_norm() {
        for mode in [SynthMode::Spread, SynthMode::Gaussian] {
            let d = synth_dataset(64, 16, 9, mode);
            for row in d.embeddings.chunks(16) {
                let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                assert!((norm - 1.0).abs() < 1e-9, "norm {norm}");
            }
        }
    }

    #[test]
    fn spread_plants_exact_dots() {
        let docs = 64;
        let d = synth_dataset(docs, 32, 11, SynthMode::Spread);
        let mut dots: Vec<f64> = d
            .embeddings
            .chunks(32)
            .map(|row| row.iter().zip(&d.prompt).map(|(a, b)| a * b).sum())
            .collect();
        dots.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (rank, dot) in dots.iter().enumerate() {
            let want = (2.0 * rank as f64 + 1.0) / docs as f64 - 1.0;
            assert!((dot - want).abs() < 1e-9, "rank {rank}: {dot} vs {want}");
        }
    }

    #[test]
    fn duplicates_mode_plants_ties() {
        let d = synth_dataset(32, 16, 3, SynthMode::Duplicates { cluster: 6, value: 0.5 });
        let dots: Vec<f64> = d
            .embeddings
            .chunks(16)
            .map(|row| row.iter().zip(&d.prompt).map(|(a, b)| a * b).sum())
            .collect();
        let ties = dots.iter().filter(|&&t| (t - 0.5).abs() < 1e-12).count();
        assert_eq!(ties, 6);
        assert!(dots.iter().all(|&t| t <= 0.5 + 1e-12));
    }

    #[test]
    fn recall_extremes() {
        let d = synth_dataset(32, 8, 7, SynthMode::Spread);
        let top = float_topk(&d.prompt, &d.embeddings, 8, 4);
        assert_eq!(measure_recall(&top, &d.prompt, &d.embeddings, 8), 1.0);
        let all: std::collections::HashSet<u64> = (0..32u64).collect();
        let miss: Vec<u64> = all.difference(&top.iter().copied().collect()).take(4).copied().collect();
        assert_eq!(measure_recall(&miss, &d.prompt, &d.embeddings, 8), 0.0);
    }

    #[test]
    fn oracle_counts_match_thresholds() {
        let params = FieldParams::default();
        let d = synth_dataset(64, 16, 13, SynthMode::Spread);
        let dots = encoded_dots(&params, &d.prompt, &d.embeddings, 16);
        assert_eq!(count_at_least(&dots, 0), 32, "half the spread sits above zero");
        assert_eq!(count_at_least(&dots, i128::MIN), 64);
        assert_eq!(count_at_least(&dots, i128::MAX), 0);
    }
}
