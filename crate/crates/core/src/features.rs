//! Appearance features: fusion, cosine similarity and embedding providers.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, WrapRegion};
use crate::http::{JsonClient, ServiceConfig};
use crate::ingest::FrameRef;

/// Encoder output width used unless configured otherwise.
pub const DEFAULT_DIM: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVec(Vec<f64>);

impl FeatureVec {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument(
                "feature vector must be non-empty".into(),
            ));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("feature vector"));
        }
        Ok(FeatureVec(values))
    }

    pub fn zeros(dim: usize) -> Self {
        FeatureVec(vec![0.0; dim])
    }

    /// Unit vector along axis `axis`.
    pub fn basis(dim: usize, axis: usize) -> Self {
        let mut v = vec![0.0; dim];
        v[axis % dim] = 1.0;
        FeatureVec(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &FeatureVec) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn scaled(&self, c: f64) -> FeatureVec {
        FeatureVec(self.0.iter().map(|v| v * c).collect())
    }

    fn check_dim(&self, other: &FeatureVec) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        Ok(())
    }
}

/// `local + lambda * global`, without normalizing either input.
pub fn fuse(local: &FeatureVec, global: &FeatureVec, lambda: f64) -> Result<FeatureVec> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "fusion weight {lambda} must be >= 0"
        )));
    }
    local.check_dim(global)?;
    Ok(FeatureVec(
        local
            .0
            .iter()
            .zip(&global.0)
            .map(|(l, g)| l + lambda * g)
            .collect(),
    ))
}

/// Cosine similarity, clamped to `[-1, 1]`. A zero vector carries no
/// information and scores 0 against anything.
///
/// Panics if the dimensions differ.
pub fn cosine(a: &FeatureVec, b: &FeatureVec) -> f64 {
    assert_eq!(
        a.dim(),
        b.dim(),
        "cosine of vectors with different dimensions"
    );
    let denom = (a.dot(a) * b.dot(b)).sqrt();
    if denom == 0.0 {
        return 0.0;
    }
    (a.dot(b) / denom).clamp(-1.0, 1.0)
}

/// `S[i][j] = cosine(tracks[i], dets[j])`.
pub fn similarity_matrix(tracks: &[FeatureVec], dets: &[FeatureVec]) -> Result<DMatrix<f64>> {
    if let Some(first) = tracks.iter().chain(dets).next() {
        for v in tracks.iter().chain(dets) {
            first.check_dim(v)?;
        }
    }
    Ok(DMatrix::from_fn(tracks.len(), dets.len(), |i, j| {
        cosine(&tracks[i], &dets[j])
    }))
}

/// Maps an image region to an appearance vector of fixed width.
pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, frame: &FrameRef, region: &WrapRegion) -> Result<FeatureVec>;
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn mix(words: impl IntoIterator<Item = u64>) -> u64 {
    words
        .into_iter()
        .fold(0x243f_6a88_85a3_08d3, |h, w| splitmix(h ^ w))
}

/// Deterministic re-identification oracle.
///
/// Each identity maps to the basis vector `e_(id mod dim)`, so distinct
/// identities are orthogonal as long as there are at most `dim` of them.
/// Noise is isotropic Gaussian with expected norm `noise_sigma` (per-component
/// deviation `noise_sigma / sqrt(dim)`), seeded from the provider seed, the
/// identity, the frame and the region geometry.
#[derive(Debug, Clone)]
pub struct SyntheticProvider {
    seed: u64,
    noise_sigma: f64,
    dim: usize,
}

impl SyntheticProvider {
    pub fn new(seed: u64, noise_sigma: f64, dim: usize) -> Result<Self> {
        if !noise_sigma.is_finite() || noise_sigma < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "noise sigma {noise_sigma} must be >= 0"
            )));
        }
        if dim == 0 {
            return Err(Error::InvalidArgument(
                "embedding dimension must be positive".into(),
            ));
        }
        Ok(SyntheticProvider {
            seed,
            noise_sigma,
            dim,
        })
    }

    pub fn base(&self, identity: u64) -> FeatureVec {
        FeatureVec::basis(self.dim, (identity % self.dim as u64) as usize)
    }
}

impl EmbeddingProvider for SyntheticProvider {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, frame: &FrameRef, region: &WrapRegion) -> Result<FeatureVec> {
        let identity = region.provenance().ok_or(Error::MissingProvenance)?;
        let mut v = self.base(identity).into_values();
        if self.noise_sigma > 0.0 {
            let words = [self.seed, identity, frame.index].into_iter().chain(
                region
                    .pieces()
                    .iter()
                    .flat_map(|p| [p.x1, p.y1, p.x2, p.y2].map(f64::to_bits)),
            );
            let mut rng = ChaCha8Rng::seed_from_u64(mix(words));
            let normal = Normal::new(0.0, self.noise_sigma / (self.dim as f64).sqrt())
                .expect("sigma is finite and non-negative");
            for x in v.iter_mut() {
                *x += normal.sample(&mut rng);
            }
        }
        FeatureVec::new(v)
    }
}

type RegionKey = (u64, Vec<[u64; 4]>);

fn region_key(frame: u64, pieces: &[BoundingBox]) -> RegionKey {
    let mut bits: Vec<[u64; 4]> = pieces
        .iter()
        .map(|p| [p.x1, p.y1, p.x2, p.y2].map(f64::to_bits))
        .collect();
    bits.sort_by(|a, b| f64::from_bits(a[0]).total_cmp(&f64::from_bits(b[0])));
    (frame, bits)
}

fn describe_region(pieces: &[BoundingBox]) -> String {
    let parts: Vec<String> = pieces
        .iter()
        .map(|p| format!("[{}, {}, {}, {}]", p.x1, p.y1, p.x2, p.y2))
        .collect();
    format!("[{}]", parts.join(", "))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureRecord {
    pub frame: u64,
    pub region: Vec<[f64; 4]>,
    pub vec: Vec<f64>,
}

/// Precomputed embeddings keyed by `(frame, region pieces)`.
#[derive(Debug, Clone)]
pub struct FileProvider {
    dim: usize,
    table: HashMap<RegionKey, FeatureVec>,
}

impl FileProvider {
    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self> {
        let mut dim = None;
        let mut table = HashMap::new();
        for (i, line) in reader.lines().enumerate() {
            let bad = |message: String| Error::Line {
                line: i + 1,
                message,
            };
            let line = line.map_err(|e| bad(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: FeatureRecord = serde_json::from_str(&line)
                .map_err(|e| bad(format!("malformed feature record ({e})")))?;
            let pieces = rec
                .region
                .iter()
                .map(|&p| BoundingBox::try_from(p))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| bad(e.to_string()))?;
            if pieces.is_empty() || pieces.len() > 2 {
                return Err(bad("region must have one or two pieces".into()));
            }
            let v = FeatureVec::new(rec.vec).map_err(|e| bad(e.to_string()))?;
            match dim {
                None => dim = Some(v.dim()),
                Some(d) if d != v.dim() => {
                    return Err(bad(format!(
                        "vector has dimension {}, expected {d}",
                        v.dim()
                    )))
                }
                _ => {}
            }
            table.insert(region_key(rec.frame, &pieces), v);
        }
        Ok(FileProvider {
            dim: dim.unwrap_or(DEFAULT_DIM),
            table,
        })
    }

    pub fn open(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(BufReader::new(f))
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

impl EmbeddingProvider for FileProvider {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, frame: &FrameRef, region: &WrapRegion) -> Result<FeatureVec> {
        self.table
            .get(&region_key(frame.index, region.pieces()))
            .cloned()
            .ok_or_else(|| Error::MissingFeature {
                frame: frame.index,
                region: describe_region(region.pieces()),
            })
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    image: &'a str,
    frame: u64,
    region: Vec<[f64; 4]>,
}

#[derive(Deserialize)]
struct EmbedReply {
    vec: Vec<f64>,
}

/// Remote encoder. Split regions are sent as both rectangles.
pub struct ServiceProvider {
    client: JsonClient,
    dim: usize,
}

impl ServiceProvider {
    pub fn new(config: ServiceConfig, dim: usize) -> Self {
        ServiceProvider {
            client: JsonClient::new(config),
            dim,
        }
    }
}

impl EmbeddingProvider for ServiceProvider {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, frame: &FrameRef, region: &WrapRegion) -> Result<FeatureVec> {
        let image = frame.wire_ref();
        let reply: EmbedReply = self.client.post(&EmbedRequest {
            image: &image,
            frame: frame.index,
            region: region.pieces().iter().map(|&p| p.into()).collect(),
        })?;
        if reply.vec.len() != self.dim {
            return Err(Error::Body(format!(
                "expected a {}-dimensional vector, got {}",
                self.dim,
                reply.vec.len()
            )));
        }
        FeatureVec::new(reply.vec).map_err(|e| Error::Body(e.to_string()))
    }
}
