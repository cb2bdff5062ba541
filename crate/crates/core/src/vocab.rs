//! Visual vocabulary: k-means over frame embeddings.
//!
//! Centers are seeded with greedy k-means++ (each new center is the best of
//! `2 + ln k` D²-sampled candidates) and refined with Lloyd iterations. All
//! randomness comes from a ChaCha stream seeded by the caller, and every
//! reduction runs in point order, so a fit is reproducible bit for bit
//! whether or not the assignment step runs in parallel.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::embeddings::Cursor;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"GAVC";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct VocabModel {
    pub k: usize,
    pub dim: usize,
    /// `k × dim`, row-major.
    pub centers: Vec<f64>,
    /// Sum of squared distances to the assigned centers; not stored on disk.
    pub training_inertia: Option<f64>,
    pub seed: Option<u64>,
}

/// Per-iteration inertia of a fit, recorded at each assignment step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KMeansTrace {
    pub inertia: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

#[inline]
fn sq_dist(a: &[f32], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &c)| (x as f64 - c).powi(2)).sum()
}

/// Nearest center and its squared distance; ties go to the lower index.
fn nearest(point: &[f32], centers: &[f64], dim: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.chunks_exact(dim).enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

impl VocabModel {
    pub fn center(&self, j: usize) -> &[f64] {
        &self.centers[j * self.dim..(j + 1) * self.dim]
    }

    /// Index of the closest center (squared Euclidean, lowest index on ties).
    pub fn assign_word(&self, embedding: &[f32]) -> Result<usize> {
        if embedding.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, actual: embedding.len() });
        }
        Ok(nearest(embedding, &self.centers, self.dim).0)
    }

    /// Words for a frame-major block of embeddings.
    pub fn assign_all(&self, data: &[f32]) -> Result<Vec<usize>> {
        if data.len() % self.dim != 0 {
            return Err(Error::DimensionMismatch { expected: self.dim, actual: data.len() % self.dim });
        }
        Ok(data
            .par_chunks_exact(self.dim)
            .map(|p| nearest(p, &self.centers, self.dim).0)
            .collect())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.k as u32).to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.centers.len() * 4);
        for &c in &self.centers {
            buf.extend_from_slice(&(c as f32).to_le_bytes());
        }
        w.write_all(&buf)?;
        w.flush()
    }

    pub fn read_from<R: Read>(mut r: R, path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
        let mut cur = Cursor { bytes: &bytes, pos: 0, path };
        if cur.take(4)? != MAGIC {
            return Err(Error::format(path, "not a vocabulary file (bad magic)"));
        }
        let version = cur.u32()?;
        if version != VERSION {
            return Err(Error::format(path, format!("unsupported version {version}")));
        }
        let k = cur.u32()? as usize;
        let dim = cur.u32()? as usize;
        if k == 0 || dim == 0 {
            return Err(Error::format(path, "empty vocabulary"));
        }
        let centers = cur
            .take(k * dim * 4)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        if cur.pos != bytes.len() {
            return Err(Error::format(path, "trailing bytes after centers"));
        }
        Ok(Self { k, dim, centers, training_inertia: None, seed: None })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(file), path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(std::io::BufWriter::new(file)).map_err(|e| Error::io(path, e))
    }
}

pub fn fit_kmeans(data: &[f32], dim: usize, k: usize, seed: u64, max_iter: usize) -> Result<VocabModel> {
    fit_kmeans_traced(data, dim, k, seed, max_iter).map(|(m, _)| m)
}

/// [`fit_kmeans`] that also returns the inertia history.
pub fn fit_kmeans_traced(
    data: &[f32],
    dim: usize,
    k: usize,
    seed: u64,
    max_iter: usize,
) -> Result<(VocabModel, KMeansTrace)> {
    if dim == 0 || data.len() % dim != 0 {
        return Err(Error::param(format!("{} values are not rows of dimension {dim}", data.len())));
    }
    let n = data.len() / dim;
    if k == 0 || n < k {
        return Err(Error::param(format!("k-means needs 1 <= k <= points, got k = {k} with {n} points")));
    }
    let points: Vec<&[f32]> = data.chunks_exact(dim).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = seed_plus_plus(&points, dim, k, &mut rng);

    let mut trace = KMeansTrace::default();
    let mut assignment: Vec<usize> = Vec::new();
    loop {
        let step: Vec<(usize, f64)> = points.par_iter().map(|p| nearest(p, &centers, dim)).collect();
        let inertia: f64 = step.iter().map(|s| s.1).sum();
        trace.inertia.push(inertia);
        let new_assignment: Vec<usize> = step.iter().map(|s| s.0).collect();
        if new_assignment == assignment {
            trace.converged = true;
            break;
        }
        assignment = new_assignment;
        if trace.iterations == max_iter {
            break;
        }
        trace.iterations += 1;

        let mut sums = vec![0.0f64; k * dim];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignment) {
            counts[a] += 1;
            for (s, &v) in sums[a * dim..(a + 1) * dim].iter_mut().zip(p.iter()) {
                *s += v as f64;
            }
        }
        let mut dists: Vec<f64> = step.iter().map(|s| s.1).collect();
        for j in 0..k {
            if counts[j] > 0 {
                let inv = 1.0 / counts[j] as f64;
                for (c, s) in centers[j * dim..(j + 1) * dim].iter_mut().zip(&sums[j * dim..(j + 1) * dim]) {
                    *c = s * inv;
                }
            } else {
                // Reseed at the point farthest from its current center.
                let far = (0..n).fold(0, |best, i| if dists[i] > dists[best] { i } else { best });
                log::debug!("k-means: cluster {j} empty, reseeded at point {far}");
                for (c, &v) in centers[j * dim..(j + 1) * dim].iter_mut().zip(points[far]) {
                    *c = v as f64;
                }
                dists[far] = 0.0;
            }
        }
    }

    let training_inertia = *trace.inertia.last().unwrap();
    Ok((
        VocabModel { k, dim, centers, training_inertia: Some(training_inertia), seed: Some(seed) },
        trace,
    ))
}

fn seed_plus_plus(points: &[&[f32]], dim: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = points.len();
    let trials = 2 + (k as f64).ln().floor() as usize;
    let mut centers = Vec::with_capacity(k * dim);
    let first = rng.random_range(0..n);
    centers.extend(points[first].iter().map(|&v| v as f64));
    let mut closest: Vec<f64> = points.par_iter().map(|p| sq_dist(p, &centers[..dim])).collect();

    for _ in 1..k {
        let total: f64 = closest.iter().sum();
        let candidates: Vec<usize> = (0..trials)
            .map(|_| {
                if total <= 0.0 {
                    return rng.random_range(0..n);
                }
                let target = rng.random::<f64>() * total;
                let mut acc = 0.0;
                for (i, &d) in closest.iter().enumerate() {
                    acc += d;
                    if acc > target {
                        return i;
                    }
                }
                n - 1
            })
            .collect();

        let mut best: Option<(f64, usize, Vec<f64>)> = None;
        for &c in &candidates {
            let cand: Vec<f64> = points[c].iter().map(|&v| v as f64).collect();
            let updated: Vec<f64> = points
                .par_iter()
                .zip(&closest)
                .map(|(p, &d)| d.min(sq_dist(p, &cand)))
                .collect();
            let potential: f64 = updated.iter().sum();
            if best.as_ref().is_none_or(|b| potential < b.0) {
                best = Some((potential, c, updated));
            }
        }
        let (_, c, updated) = best.unwrap();
        centers.extend(points[c].iter().map(|&v| v as f64));
        closest = updated;
    }
    centers
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_center_is_the_mean() {
        let data = [1.0f32, 2.0, 3.0, 6.0, 5.0, 10.0];
        let m = fit_kmeans(&data, 2, 1, 7, 50).unwrap();
        assert!((m.centers[0] - 3.0).abs() < 1e-12);
        assert!((m.centers[1] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_points() {
        assert!(matches!(fit_kmeans(&[0.0, 1.0], 1, 3, 0, 10), Err(Error::Parameter(_))));
        assert!(fit_kmeans(&[0.0, 1.0, 2.0], 2, 1, 0, 10).is_err());
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let data: Vec<f32> = (0..600).map(|i| ((i * 7919) % 101) as f32 / 10.0).collect();
        let a = fit_kmeans(&data, 6, 5, 42, 100).unwrap();
        let b = fit_kmeans(&data, 6, 5, 42, 100).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn assignment_rules() {
        let centers: Vec<f64> = (0..15).flat_map(|j| [j as f64, 0.0]).collect();
        let vocab = VocabModel { k: 15, dim: 2, centers, training_inertia: None, seed: None };
        assert_eq!(vocab.assign_word(&[7.0, 0.0]).unwrap(), 7);
        // Equidistant from centers 2 and 5 after moving them apart.
        let mut v2 = vocab.clone();
        v2.centers[4..6].copy_from_slice(&[0.0, 1.0]);
        v2.centers[10..12].copy_from_slice(&[0.0, -1.0]);
        for j in (0..15).filter(|&j| j != 2 && j != 5) {
            v2.centers[2 * j..2 * j + 2].copy_from_slice(&[100.0 + j as f64, 100.0]);
        }
        assert_eq!(v2.assign_word(&[0.0, 0.0]).unwrap(), 2);
        assert!(matches!(vocab.assign_word(&[0.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn empty_cluster_is_reseeded() {
        // Ten identical points plus one outlier: k = 3 must still give 3 centers.
        let mut data = vec![0.0f32; 20];
        data.extend([50.0, 50.0]);
        let (m, trace) = fit_kmeans_traced(&data, 2, 3, 1, 20).unwrap();
        assert_eq!(m.centers.len(), 6);
        assert!(trace.inertia.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(m.training_inertia, Some(0.0));
    }

    #[test]
    fn file_round_trip() {
        let m = VocabModel { k: 2, dim: 3, centers: vec![0.5, 1.0, 2.0, 0.0, 3.25, 1e3], training_inertia: Some(1.0), seed: Some(3) };
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"GAVC");
        assert_eq!(buf.len(), 16 + 6 * 4);
        let back = VocabModel::read_from(buf.as_slice(), Path::new("v.gavc")).unwrap();
        assert_eq!(back.centers, m.centers);
        assert!(VocabModel::read_from(&buf[..buf.len() - 2], Path::new("v.gavc")).is_err());
    }
}
