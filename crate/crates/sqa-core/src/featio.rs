//! Binary I/O for frame-level feature matrices and a seeded synthetic
//! feature generator.
//!
//! FEAT format: magic `FEAT`, version u32=1 LE, n_frames u32 LE, dim u32 LE,
//! frame_period_us u32 LE, then `n_frames * dim` f32 LE values, row-major.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

pub const FEAT_MAGIC: [u8; 4] = *b"FEAT";
pub const FEAT_VERSION: u32 = 1;

/// Default frame period: 20 ms, stored as integer microseconds.
pub const DEFAULT_FRAME_PERIOD_US: u32 = 20_000;

/// A frames-by-dims matrix of real-valued speech features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    n_frames: usize,
    dim: usize,
    frame_period_us: u32,
    data: Vec<f32>,
}

impl FeatureMatrix {
    pub fn new(n_frames: usize, dim: usize, frame_period_us: u32, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Shape {
                context: "FeatureMatrix".into(),
                detail: "dim must be >= 1".into(),
            });
        }
        if frame_period_us == 0 {
            return Err(Error::Shape {
                context: "FeatureMatrix".into(),
                detail: "frame_period must be > 0".into(),
            });
        }
        if data.len() != n_frames * dim {
            return Err(Error::Shape {
                context: "FeatureMatrix".into(),
                detail: format!(
                    "data length {} != n_frames {} * dim {}",
                    data.len(),
                    n_frames,
                    dim
                ),
            });
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                context: "FeatureMatrix".into(),
            });
        }
        Ok(FeatureMatrix {
            n_frames,
            dim,
            frame_period_us,
            data,
        })
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn frame_period_us(&self) -> u32 {
        self.frame_period_us
    }

    /// Frame period in seconds.
    pub fn frame_period(&self) -> f64 {
        self.frame_period_us as f64 * 1e-6
    }

    pub fn frame(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn frames(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }
}

pub fn write_features(m: &FeatureMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io_err = |e| Error::io(path, e);
    if m.n_frames > u32::MAX as usize {
        return Err(Error::Shape {
            context: "write_features".into(),
            detail: "n_frames exceeds u32".into(),
        });
    }
    let file = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    w.write_all(&FEAT_MAGIC).map_err(io_err)?;
    w.write_all(&FEAT_VERSION.to_le_bytes()).map_err(io_err)?;
    w.write_all(&(m.n_frames as u32).to_le_bytes()).map_err(io_err)?;
    w.write_all(&(m.dim as u32).to_le_bytes()).map_err(io_err)?;
    w.write_all(&m.frame_period_us.to_le_bytes()).map_err(io_err)?;
    for v in &m.data {
        w.write_all(&v.to_le_bytes()).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn read_features(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let io_err = |e| Error::io(path, e);
    let file = File::open(path).map_err(io_err)?;
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io_err)?;
    if magic != FEAT_MAGIC {
        return Err(Error::BadMagic {
            path: path.into(),
            found: magic,
            expected: FEAT_MAGIC,
        });
    }
    let version = read_u32(&mut r, path)?;
    if version != FEAT_VERSION {
        return Err(Error::BadVersion {
            path: path.into(),
            found: version,
            expected: FEAT_VERSION,
        });
    }
    let n_frames = read_u32(&mut r, path)? as usize;
    let dim = read_u32(&mut r, path)? as usize;
    let frame_period_us = read_u32(&mut r, path)?;

    let expected = n_frames
        .checked_mul(dim)
        .ok_or_else(|| Error::Shape {
            context: format!("read_features {}", path.display()),
            detail: "n_frames * dim overflows".into(),
        })?;
    let mut payload = Vec::new();
    r.read_to_end(&mut payload).map_err(io_err)?;
    if payload.len() != expected * 4 {
        return Err(Error::Truncated {
            path: path.into(),
            expected: expected * 4,
            found: payload.len(),
        });
    }
    let mut data = Vec::with_capacity(expected);
    for chunk in payload.chunks_exact(4) {
        let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        if !v.is_finite() {
            return Err(Error::NonFinite {
                context: format!("read_features {}", path.display()),
            });
        }
        data.push(v);
    }
    FeatureMatrix::new(n_frames, dim, frame_period_us, data)
}

fn read_u32(r: &mut impl Read, path: &Path) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).map_err(|e| Error::io(path, e))?;
    Ok(u32::from_le_bytes(buf))
}

/// Synthesizes frame-level features: frame `t` is `anchors[frame_units[t]]`
/// plus isotropic Gaussian noise. Stands in for a real feature extractor so
/// the pipeline runs end to end without one.
pub fn synth_features(
    frame_units: &[u32],
    anchors: &Anchors,
    noise_sigma: f64,
    seed: u64,
) -> Result<FeatureMatrix> {
    synth_features_with_period(frame_units, anchors, noise_sigma, seed, DEFAULT_FRAME_PERIOD_US)
}

pub fn synth_features_with_period(
    frame_units: &[u32],
    anchors: &Anchors,
    noise_sigma: f64,
    seed: u64,
    frame_period_us: u32,
) -> Result<FeatureMatrix> {
    if noise_sigma < 0.0 || !noise_sigma.is_finite() {
        return Err(Error::Config(format!(
            "noise_sigma must be finite and >= 0, got {noise_sigma}"
        )));
    }
    let k = anchors.k();
    let dim = anchors.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut data = Vec::with_capacity(frame_units.len() * dim);
    for &u in frame_units {
        if u as usize >= k {
            return Err(Error::UnitOutOfRange {
                unit: u,
                alphabet: k,
            });
        }
        let row = anchors.row(u as usize);
        if noise_sigma == 0.0 {
            data.extend(row.iter().map(|&v| v as f32));
        } else {
            for &v in row {
                data.push((v + noise_sigma * normal.sample(&mut rng)) as f32);
            }
        }
    }
    FeatureMatrix::new(frame_units.len(), dim, frame_period_us, data)
}

/// K pairwise-distinct anchor vectors used by the synthetic generator.
#[derive(Debug, Clone)]
pub struct Anchors {
    k: usize,
    dim: usize,
    data: Vec<f64>,
}

impl Anchors {
    pub fn new(k: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if k == 0 || dim == 0 || data.len() != k * dim {
            return Err(Error::Shape {
                context: "Anchors".into(),
                detail: format!("k={k}, dim={dim}, data len {}", data.len()),
            });
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                context: "Anchors".into(),
            });
        }
        let anchors = Anchors { k, dim, data };
        for i in 0..k {
            for j in (i + 1)..k {
                if anchors.row(i) == anchors.row(j) {
                    return Err(Error::Config(format!(
                        "anchor rows {i} and {j} are identical"
                    )));
                }
            }
        }
        Ok(anchors)
    }

    /// Seeded random anchors on the unit sphere, rejection-sampled for a
    /// minimum pairwise distance.
    pub fn random(k: usize, dim: usize, min_dist: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(k);
        let mut attempts = 0usize;
        while rows.len() < k {
            attempts += 1;
            if attempts > 1000 * k {
                return Err(Error::Config(format!(
                    "could not place {k} anchors with min distance {min_dist} in dim {dim}"
                )));
            }
            let mut v: Vec<f64> = (0..dim).map(|_| normal.sample(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                continue;
            }
            v.iter_mut().for_each(|x| *x /= norm);
            let ok = rows.iter().all(|r| {
                let d2: f64 = r.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum();
                d2.sqrt() >= min_dist
            });
            if ok {
                rows.push(v);
            }
        }
        Anchors::new(k, dim, rows.concat())
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn min_pairwise_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.k {
            for j in (i + 1)..self.k {
                let d2: f64 = self
                    .row(i)
                    .iter()
                    .zip(self.row(j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                best = best.min(d2.sqrt());
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("sqa-featio-tests");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn empty_matrix_writes_header_only() {
        let m = FeatureMatrix::new(0, 4, DEFAULT_FRAME_PERIOD_US, vec![]).unwrap();
        let path = tmp("empty.feat");
        write_features(&m, &path).unwrap();
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 20);
        assert_eq!(read_features(&path).unwrap(), m);
    }

    #[test]
    fn zero_matrix_payload_size() {
        let m = FeatureMatrix::new(2, 3, DEFAULT_FRAME_PERIOD_US, vec![0.0; 6]).unwrap();
        let path = tmp("zeros.feat");
        write_features(&m, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(bytes.len(), 20 + 24);
        assert!(bytes[20..].iter().all(|&b| b == 0));
    }

    #[test]
    fn roundtrip_random_matrix_and_idempotent_rewrite() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let data: Vec<f32> = (0..100 * 16).map(|_| rng.gen_range(-4.0..4.0)).collect();
        let m = FeatureMatrix::new(100, 16, DEFAULT_FRAME_PERIOD_US, data).unwrap();
        let p1 = tmp("rt1.feat");
        let p2 = tmp("rt2.feat");
        write_features(&m, &p1).unwrap();
        let back = read_features(&p1).unwrap();
        assert_eq!(back, m);
        write_features(&back, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn bad_magic_is_reported() {
        let path = tmp("badmagic.feat");
        std::fs::write(&path, b"XXXX\x01\x00\x00\x00\x00\x00\x00\x00\x01\x00\x00\x00\x20\x4e\x00\x00").unwrap();
        match read_features(&path) {
            Err(Error::BadMagic { found, .. }) => assert_eq!(&found, b"XXXX"),
            other => panic!("expected BadMagic, got {other:?}"),
        }
    }

    #[test]
    fn version_mismatch_is_reported() {
        let m = FeatureMatrix::new(1, 1, DEFAULT_FRAME_PERIOD_US, vec![1.0]).unwrap();
        let path = tmp("badver.feat");
        write_features(&m, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4] = 9;
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(
            read_features(&path),
            Err(Error::BadVersion { found: 9, .. })
        ));
    }

    #[test]
    fn truncated_payload_is_reported() {
        let data: Vec<f32> = (0..10 * 2).map(|i| i as f32).collect();
        let m = FeatureMatrix::new(10, 2, DEFAULT_FRAME_PERIOD_US, data).unwrap();
        let path = tmp("trunc.feat");
        write_features(&m, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        // Keep header plus 5 frames of payload.
        std::fs::write(&path, &bytes[..20 + 5 * 2 * 4]).unwrap();
        assert!(matches!(
            read_features(&path),
            Err(Error::Truncated { expected: 80, found: 40, .. })
        ));
    }

    #[test]
    fn nan_payload_is_reported() {
        let m = FeatureMatrix::new(1, 2, DEFAULT_FRAME_PERIOD_US, vec![1.0, 2.0]).unwrap();
        let path = tmp("nan.feat");
        write_features(&m, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[20..24].copy_from_slice(&f32::NAN.to_le_bytes());
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(read_features(&path), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn non_finite_values_rejected_at_construction() {
        assert!(matches!(
            FeatureMatrix::new(1, 2, DEFAULT_FRAME_PERIOD_US, vec![1.0, f32::INFINITY]),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn synth_zero_noise_reproduces_anchor_rows() {
        let anchors = Anchors::new(2, 3, vec![1.0, 2.0, 3.0, -1.0, 0.5, 0.0]).unwrap();
        let m = synth_features(&[1, 1, 0], &anchors, 0.0, 1).unwrap();
        assert_eq!(m.frame(0), &[-1.0f32, 0.5, 0.0]);
        assert_eq!(m.frame(1), &[-1.0f32, 0.5, 0.0]);
        assert_eq!(m.frame(2), &[1.0f32, 2.0, 3.0]);
        assert_eq!(m.frame_period_us(), DEFAULT_FRAME_PERIOD_US);
    }

    #[test]
    fn synth_same_seed_is_identical() {
        let anchors = Anchors::random(4, 8, 0.5, 11).unwrap();
        let units = vec![0, 1, 2, 3, 2, 1, 0];
        let a = synth_features(&units, &anchors, 0.3, 99).unwrap();
        let b = synth_features(&units, &anchors, 0.3, 99).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn synth_unit_out_of_range() {
        let anchors = Anchors::new(2, 1, vec![0.0, 1.0]).unwrap();
        assert!(matches!(
            synth_features(&[0, 2], &anchors, 0.0, 1),
            Err(Error::UnitOutOfRange { unit: 2, alphabet: 2 })
        ));
    }

    #[test]
    fn synth_sample_mean_approaches_anchor() {
        let anchors = Anchors::random(2, 4, 0.5, 5).unwrap();
        let units = vec![0u32; 10_000];
        let m = synth_features(&units, &anchors, 0.1, 123).unwrap();
        let dim = m.dim();
        let mut mean = vec![0.0f64; dim];
        for f in m.frames() {
            for (s, &v) in mean.iter_mut().zip(f) {
                *s += v as f64;
            }
        }
        for (d, (s, &a)) in mean.iter().zip(anchors.row(0)).enumerate() {
            let avg = s / 10_000.0;
            assert!(
                (avg - a).abs() < 0.01,
                "coordinate {d}: sample mean {avg} vs anchor {a}"
            );
        }
    }
}
