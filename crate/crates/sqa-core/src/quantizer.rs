//! K-means codebook training (Lloyd with k-means++ seeding) and frame
//! encoding to cluster indices.
//!
//! CDBK format: magic `CDBK`, version u32=1 LE, K u32 LE, dim u32 LE,
//! train_inertia f64 LE, centroids f32 LE row-major.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::featio::FeatureMatrix;

pub const CDBK_MAGIC: [u8; 4] = *b"CDBK";
pub const CDBK_VERSION: u32 = 1;

/// Chunk size for parallel assignment. Fixed so that partial reductions are
/// identical for any worker count.
const ASSIGN_CHUNK: usize = 2048;

/// Independent seeded restarts; the lowest-inertia run wins.
const RESTARTS: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    k: usize,
    dim: usize,
    centroids: Vec<f64>,
    train_inertia: f64,
}

impl Codebook {
    /// Builds a codebook directly from centroid rows (no training).
    pub fn from_centroids(k: usize, dim: usize, centroids: Vec<f64>, train_inertia: f64) -> Result<Self> {
        if k == 0 || dim == 0 || centroids.len() != k * dim {
            return Err(Error::Shape {
                context: "Codebook".into(),
                detail: format!("k={k} dim={dim} data len {}", centroids.len()),
            });
        }
        if !centroids.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                context: "Codebook".into(),
            });
        }
        Ok(Codebook {
            k,
            dim,
            centroids,
            train_inertia,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn train_inertia(&self) -> f64 {
        self.train_inertia
    }

    pub fn centroid(&self, i: usize) -> &[f64] {
        &self.centroids[i * self.dim..(i + 1) * self.dim]
    }
}

/// Trains a codebook over all frames of the given matrices.
pub fn train_codebook(
    features: &[FeatureMatrix],
    k: usize,
    max_iters: usize,
    rel_tol: f64,
    seed: u64,
) -> Result<Codebook> {
    train_codebook_traced(features, k, max_iters, rel_tol, seed).map(|(cb, _)| cb)
}

/// As [`train_codebook`], also returning the inertia after each assignment
/// step (non-increasing by construction of Lloyd iterations).
pub fn train_codebook_traced(
    features: &[FeatureMatrix],
    k: usize,
    max_iters: usize,
    rel_tol: f64,
    seed: u64,
) -> Result<(Codebook, Vec<f64>)> {
    if k == 0 {
        return Err(Error::Config("K must be >= 1".into()));
    }
    let dim = match features.first() {
        Some(m) => m.dim(),
        None => {
            return Err(Error::TooFewFrames {
                needed: k,
                clusters: k,
                got: 0,
            })
        }
    };
    for m in features {
        if m.dim() != dim {
            return Err(Error::DimMismatch {
                context: "train_codebook".into(),
                expected: dim,
                got: m.dim(),
            });
        }
    }
    let n: usize = features.iter().map(|m| m.n_frames()).sum();
    if n < k {
        return Err(Error::TooFewFrames {
            needed: k,
            clusters: k,
            got: n,
        });
    }

    // Materialize frames once in f64.
    let mut points = Vec::with_capacity(n * dim);
    for m in features {
        points.extend(m.data().iter().map(|&v| v as f64));
    }

    let mut best: Option<(Vec<f64>, Vec<f64>, f64)> = None;
    for restart in 0..RESTARTS {
        let sub_seed = seed
            .wrapping_mul(0x9e3779b97f4a7c15)
            .wrapping_add(restart as u64);
        let (centroids, trace, inertia) =
            lloyd_run(&points, n, dim, k, max_iters, rel_tol, sub_seed);
        if best.as_ref().map(|(_, _, b)| inertia < *b).unwrap_or(true) {
            best = Some((centroids, trace, inertia));
        }
    }
    let (centroids, trace, inertia) = best.expect("at least one restart");
    let cb = Codebook::from_centroids(k, dim, centroids, inertia)?;
    Ok((cb, trace))
}

/// One seeded Lloyd run. Returns f32-quantized centroids, the per-iteration
/// inertia trace, and the final inertia under the quantized centroids.
fn lloyd_run(
    points: &[f64],
    n: usize,
    dim: usize,
    k: usize,
    max_iters: usize,
    rel_tol: f64,
    seed: u64,
) -> (Vec<f64>, Vec<f64>, f64) {
    let mut centroids = kmeans_pp_init(points, n, dim, k, seed);
    let mut trace = Vec::new();
    let mut prev_inertia = f64::INFINITY;

    for _iter in 0..max_iters {
        let assign = assign_all(points, &centroids, n, dim, k);
        trace.push(assign.inertia);
        debug_assert!(
            assign.inertia <= prev_inertia * (1.0 + 1e-12) || prev_inertia.is_infinite(),
            "inertia increased: {prev_inertia} -> {}",
            assign.inertia
        );

        let mut new_centroids = vec![0.0; k * dim];
        for c in 0..k {
            let cnt = assign.counts[c];
            if cnt > 0 {
                let inv = 1.0 / cnt as f64;
                for d in 0..dim {
                    new_centroids[c * dim + d] = assign.sums[c * dim + d] * inv;
                }
            } else {
                // Keep the stale centroid; repaired below.
                new_centroids[c * dim..(c + 1) * dim]
                    .copy_from_slice(&centroids[c * dim..(c + 1) * dim]);
            }
        }
        repair_empty_clusters(points, n, dim, k, &mut new_centroids, &assign);
        centroids = new_centroids;

        let improved = prev_inertia.is_infinite()
            || (prev_inertia - assign.inertia) > rel_tol * prev_inertia.abs().max(f64::MIN_POSITIVE);
        prev_inertia = assign.inertia;
        if !improved {
            break;
        }
    }

    // Quantize so CDBK round-trips bitwise, then record the matching inertia.
    for v in &mut centroids {
        *v = *v as f32 as f64;
    }
    let final_assign = assign_all(points, &centroids, n, dim, k);
    (centroids, trace, final_assign.inertia)
}

struct Assignment {
    labels: Vec<u32>,
    sums: Vec<f64>,
    counts: Vec<usize>,
    inertia: f64,
}

/// Nearest-centroid assignment over fixed-size chunks, merged in chunk order
/// so the result is independent of the worker count.
fn assign_all(points: &[f64], centroids: &[f64], n: usize, dim: usize, k: usize) -> Assignment {
    let chunks: Vec<Assignment> = points
        .par_chunks(ASSIGN_CHUNK * dim)
        .map(|chunk| {
            let rows = chunk.len() / dim;
            let mut labels = Vec::with_capacity(rows);
            let mut sums = vec![0.0; k * dim];
            let mut counts = vec![0usize; k];
            let mut inertia = 0.0;
            for row in chunk.chunks_exact(dim) {
                let (best, d2) = nearest_centroid(row, centroids, dim, k);
                labels.push(best as u32);
                counts[best] += 1;
                inertia += d2;
                let s = &mut sums[best * dim..(best + 1) * dim];
                for (acc, &v) in s.iter_mut().zip(row) {
                    *acc += v;
                }
            }
            Assignment {
                labels,
                sums,
                counts,
                inertia,
            }
        })
        .collect();

    let mut labels = Vec::with_capacity(n);
    let mut sums = vec![0.0; k * dim];
    let mut counts = vec![0usize; k];
    let mut inertia = 0.0;
    for part in chunks {
        labels.extend(part.labels);
        for (acc, v) in sums.iter_mut().zip(part.sums) {
            *acc += v;
        }
        for (acc, v) in counts.iter_mut().zip(part.counts) {
            *acc += v;
        }
        inertia += part.inertia;
    }
    Assignment {
        labels,
        sums,
        counts,
        inertia,
    }
}

/// Ties break toward the lowest centroid index.
fn nearest_centroid(row: &[f64], centroids: &[f64], dim: usize, k: usize) -> (usize, f64) {
    let mut best = 0usize;
    let mut best_d2 = f64::INFINITY;
    for c in 0..k {
        let cent = &centroids[c * dim..(c + 1) * dim];
        let d2: f64 = row
            .iter()
            .zip(cent)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        if d2 < best_d2 {
            best_d2 = d2;
            best = c;
        }
    }
    (best, best_d2)
}

/// Greedy k-means++ seeding: the first centroid is uniform; each subsequent
/// one is the best of several D^2-sampled candidates, judged by the total
/// potential it leaves behind.
fn kmeans_pp_init(points: &[f64], n: usize, dim: usize, k: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_candidates = 2 + (k as f64).ln().ceil() as usize;
    let mut centroids = Vec::with_capacity(k * dim);
    let first = rng.gen_range(0..n);
    centroids.extend_from_slice(&points[first * dim..(first + 1) * dim]);

    let d2_to = |row: &[f64], c: &[f64]| -> f64 {
        row.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum()
    };
    let mut min_d2: Vec<f64> = points
        .chunks_exact(dim)
        .map(|row| d2_to(row, &centroids[..dim]))
        .collect();

    for _ in 1..k {
        let total: f64 = min_d2.iter().sum();
        let mut best_idx = None;
        let mut best_potential = f64::INFINITY;
        for _ in 0..n_candidates {
            let idx = if total > 0.0 {
                let mut r = rng.gen::<f64>() * total;
                let mut chosen = n - 1;
                for (i, &d2) in min_d2.iter().enumerate() {
                    r -= d2;
                    if r <= 0.0 {
                        chosen = i;
                        break;
                    }
                }
                chosen
            } else {
                // All points coincide with existing centroids.
                rng.gen_range(0..n)
            };
            let cand = &points[idx * dim..(idx + 1) * dim];
            let potential: f64 = points
                .par_chunks(ASSIGN_CHUNK * dim)
                .enumerate()
                .map(|(chunk_i, chunk)| {
                    let base = chunk_i * ASSIGN_CHUNK;
                    chunk
                        .chunks_exact(dim)
                        .enumerate()
                        .map(|(j, row)| min_d2[base + j].min(d2_to(row, cand)))
                        .sum::<f64>()
                })
                .collect::<Vec<f64>>()
                .iter()
                .sum();
            if potential < best_potential {
                best_potential = potential;
                best_idx = Some(idx);
            }
        }
        let idx = best_idx.expect("candidate chosen");
        let new_c = points[idx * dim..(idx + 1) * dim].to_vec();
        for (i, row) in points.chunks_exact(dim).enumerate() {
            let d2 = d2_to(row, &new_c);
            if d2 < min_d2[i] {
                min_d2[i] = d2;
            }
        }
        centroids.extend_from_slice(&new_c);
    }
    centroids
}

/// Reassigns the point farthest from its centroid as the centroid of each
/// empty cluster, keeping all K clusters live.
fn repair_empty_clusters(
    points: &[f64],
    n: usize,
    dim: usize,
    k: usize,
    centroids: &mut [f64],
    assign: &Assignment,
) {
    let empties: Vec<usize> = (0..k).filter(|&c| assign.counts[c] == 0).collect();
    if empties.is_empty() {
        return;
    }
    // Distances of each point to its (pre-update) centroid, recomputed
    // against the updated centroid of its label for a stable farthest pick.
    let mut dist: Vec<(usize, f64)> = (0..n)
        .map(|i| {
            let label = assign.labels[i] as usize;
            let row = &points[i * dim..(i + 1) * dim];
            let cent = &centroids[label * dim..(label + 1) * dim];
            let d2: f64 = row
                .iter()
                .zip(cent)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            (i, d2)
        })
        .collect();
    // Farthest first; ties toward the lower point index.
    dist.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for (slot, &c) in empties.iter().enumerate() {
        if slot >= dist.len() {
            break;
        }
        let (idx, _) = dist[slot];
        centroids[c * dim..(c + 1) * dim].copy_from_slice(&points[idx * dim..(idx + 1) * dim]);
    }
}

/// Maps each frame to the index of its nearest centroid.
pub fn encode(cb: &Codebook, m: &FeatureMatrix) -> Result<Vec<u32>> {
    if m.dim() != cb.dim {
        return Err(Error::DimMismatch {
            context: "encode".into(),
            expected: cb.dim,
            got: m.dim(),
        });
    }
    let dim = cb.dim;
    let k = cb.k;
    let out: Vec<u32> = m
        .data()
        .par_chunks(ASSIGN_CHUNK * dim)
        .flat_map_iter(|chunk| {
            chunk
                .chunks_exact(dim)
                .map(|frame| {
                    let row: Vec<f64> = frame.iter().map(|&v| v as f64).collect();
                    nearest_centroid(&row, &cb.centroids, dim, k).0 as u32
                })
                .collect::<Vec<u32>>()
        })
        .collect();
    Ok(out)
}

pub fn write_codebook(cb: &Codebook, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io_err = |e| Error::io(path, e);
    let file = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    w.write_all(&CDBK_MAGIC).map_err(io_err)?;
    w.write_all(&CDBK_VERSION.to_le_bytes()).map_err(io_err)?;
    w.write_all(&(cb.k as u32).to_le_bytes()).map_err(io_err)?;
    w.write_all(&(cb.dim as u32).to_le_bytes()).map_err(io_err)?;
    w.write_all(&cb.train_inertia.to_le_bytes()).map_err(io_err)?;
    for &v in &cb.centroids {
        w.write_all(&(v as f32).to_le_bytes()).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn read_codebook(path: impl AsRef<Path>) -> Result<Codebook> {
    let path = path.as_ref();
    let io_err = |e| Error::io(path, e);
    let file = File::open(path).map_err(io_err)?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io_err)?;
    if magic != CDBK_MAGIC {
        return Err(Error::BadMagic {
            path: path.into(),
            found: magic,
            expected: CDBK_MAGIC,
        });
    }
    let mut u32buf = [0u8; 4];
    let mut read_u32 = |r: &mut BufReader<File>| -> Result<u32> {
        r.read_exact(&mut u32buf).map_err(|e| Error::io(path, e))?;
        Ok(u32::from_le_bytes(u32buf))
    };
    let version = read_u32(&mut r)?;
    if version != CDBK_VERSION {
        return Err(Error::BadVersion {
            path: path.into(),
            found: version,
            expected: CDBK_VERSION,
        });
    }
    let k = read_u32(&mut r)? as usize;
    let dim = read_u32(&mut r)? as usize;
    let mut f64buf = [0u8; 8];
    r.read_exact(&mut f64buf).map_err(io_err)?;
    let train_inertia = f64::from_le_bytes(f64buf);
    let expected = k * dim * 4;
    let mut payload = Vec::new();
    r.read_to_end(&mut payload).map_err(io_err)?;
    if payload.len() != expected {
        return Err(Error::Truncated {
            path: path.into(),
            expected,
            found: payload.len(),
        });
    }
    let centroids: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Codebook::from_centroids(k, dim, centroids, train_inertia)
}
