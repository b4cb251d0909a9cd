//! Scalar k-means codebooks shared per attribute, with one index per vector
//! component. Positions and normals are never quantized.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use volsplat_core::gaussian::normalize_quat;

use crate::error::{Result, SceneError};
use crate::model::{Appearance, BasicSceneModel, Geometry, ModelMeta};

pub const DEFAULT_K: usize = 256;
const MAX_ITERS: usize = 50;
const REL_SHIFT: f64 = 1e-6;
const CHUNK: usize = 4096;
/// Independent seedings per call; the lowest-SSE result is kept.
pub const RESTARTS: u64 = 8;

/// Quantized attributes in storage order: name and component count.
pub const ATTRIBUTES: [(&str, usize); 8] = [
    ("rotation", 4),
    ("scale", 3),
    ("opacity", 1),
    ("offset", 3),
    ("k_a", 1),
    ("k_d", 1),
    ("k_s", 1),
    ("beta", 1),
];

/// Index of the centroid nearest to `v` in ascending `centroids` (lower index on ties).
pub fn nearest(centroids: &[f64], v: f64) -> usize {
    let i = centroids.partition_point(|&c| c < v);
    if i == 0 {
        return 0;
    }
    if i == centroids.len() {
        return i - 1;
    }
    if v - centroids[i - 1] <= centroids[i] - v {
        i - 1
    } else {
        i
    }
}

/// Within-cluster sum of squared errors.
pub fn sse(samples: &[f32], centroids: &[f64]) -> f64 {
    samples
        .iter()
        .map(|&s| {
            let d = s as f64 - centroids[nearest(centroids, s as f64)];
            d * d
        })
        .sum()
}

fn seed_plus_plus(samples: &[f64], k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut centers = vec![samples[rng.random_range(0..samples.len())]];
    let mut d2: Vec<f64> = samples.iter().map(|&s| (s - centers[0]).powi(2)).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = samples.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            samples[pick]
        } else {
            samples[rng.random_range(0..samples.len())]
        };
        centers.push(next);
        for (d, &s) in d2.iter_mut().zip(samples) {
            *d = d.min((s - next).powi(2));
        }
    }
    centers.sort_by(f64::total_cmp);
    centers
}

/// Lloyd iterations from k-means++ seeding, best of [`RESTARTS`] seeds;
/// centroids come back ascending. When the samples take at most `k` distinct
/// values those values are the centroids.
pub fn kmeans(samples: &[f32], k: usize, seed: u64) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(SceneError::EmptyInput("k-means samples"));
    }
    if k == 0 {
        return Err(SceneError::EmptyInput("codebook size"));
    }
    let xs: Vec<f64> = samples.iter().map(|&s| s as f64).collect();
    let mut distinct = xs.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() <= k {
        return Ok(distinct);
    }
    let range = distinct[distinct.len() - 1] - distinct[0];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for _ in 0..RESTARTS {
        let centers = lloyd(&xs, seed_plus_plus(&xs, k, &mut rng), range);
        let err: f64 = xs.iter().map(|&x| (x - centers[nearest(&centers, x)]).powi(2)).sum();
        if best.as_ref().is_none_or(|(e, _)| err < *e) {
            best = Some((err, centers));
        }
    }
    Ok(best.expect("at least one restart").1)
}

fn lloyd(xs: &[f64], mut centers: Vec<f64>, range: f64) -> Vec<f64> {
    let k = centers.len();
    for _ in 0..MAX_ITERS {
        // per-chunk partial sums reduced in chunk order keep this deterministic
        let partial: Vec<(Vec<f64>, Vec<usize>, (f64, usize))> = xs
            .par_chunks(CHUNK)
            .enumerate()
            .map(|(ci, chunk)| {
                let mut sum = vec![0.0; k];
                let mut cnt = vec![0usize; k];
                let mut worst = (-1.0, 0);
                for (j, &x) in chunk.iter().enumerate() {
                    let c = nearest(&centers, x);
                    sum[c] += x;
                    cnt[c] += 1;
                    let d = (x - centers[c]).abs();
                    if d > worst.0 {
                        worst = (d, ci * CHUNK + j);
                    }
                }
                (sum, cnt, worst)
            })
            .collect();
        let mut sum = vec![0.0; k];
        let mut cnt = vec![0usize; k];
        let mut worst = (-1.0, 0);
        for (s, c, w) in partial {
            for j in 0..k {
                sum[j] += s[j];
                cnt[j] += c[j];
            }
            if w.0 > worst.0 {
                worst = w;
            }
        }
        let mut next: Vec<f64> = (0..k)
            .map(|j| if cnt[j] > 0 { sum[j] / cnt[j] as f64 } else { f64::NAN })
            .collect();
        // an empty cluster takes over the worst-fit sample
        for c in next.iter_mut().filter(|c| c.is_nan()) {
            *c = xs[worst.1];
        }
        next.sort_by(f64::total_cmp);
        let shift = next
            .iter()
            .zip(&centers)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        centers = next;
        if shift <= REL_SHIFT * range {
            break;
        }
    }
    centers
}

/// One attribute's shared codebook and per-component indices
/// (`indices[i * components + c]`).
#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedAttribute {
    pub name: String,
    pub components: usize,
    pub centroids: Vec<f32>,
    pub indices: Vec<u32>,
}

impl QuantizedAttribute {
    pub fn build(name: &str, components: usize, values: &[f32], k: usize, seed: u64) -> Result<Self> {
        let centers = kmeans(values, k, seed)?;
        let centroids: Vec<f32> = centers.iter().map(|&c| c as f32).collect();
        let indices = values.iter().map(|&v| nearest(&centers, v as f64) as u32).collect();
        Ok(QuantizedAttribute {
            name: name.to_string(),
            components,
            centroids,
            indices,
        })
    }

    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    /// Bytes per stored index.
    pub fn index_width(&self) -> usize {
        if self.k() <= 256 {
            1
        } else {
            2
        }
    }

    pub fn value(&self, flat_index: usize) -> Result<f32> {
        let idx = self.indices[flat_index];
        self.centroids.get(idx as usize).copied().ok_or(SceneError::CorruptIndex {
            attribute: self.name.clone(),
            index: idx,
            k: self.k() as u32,
        })
    }

    pub fn decode(&self) -> Result<Vec<f32>> {
        (0..self.indices.len()).map(|i| self.value(i)).collect()
    }
}

/// Editable model with every attribute except positions and normals
/// replaced by codebook indices.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedModel {
    pub mu: Vec<[f32; 3]>,
    pub normal: Vec<[f32; 3]>,
    pub palette: [f32; 3],
    pub meta: ModelMeta,
    /// In [`ATTRIBUTES`] order.
    pub attributes: Vec<QuantizedAttribute>,
}

#[derive(Clone, Copy, Debug)]
pub struct QuantizeConfig {
    /// Codebook size per attribute, in [`ATTRIBUTES`] order.
    pub k: [usize; 8],
    pub seed: u64,
}

impl Default for QuantizeConfig {
    fn default() -> Self {
        QuantizeConfig::uniform(DEFAULT_K)
    }
}

impl QuantizeConfig {
    pub fn uniform(k: usize) -> Self {
        QuantizeConfig { k: [k; 8], seed: 0 }
    }
}

fn flatten<const N: usize>(v: &[[f32; N]]) -> Vec<f32> {
    v.iter().flat_map(|a| a.iter().copied()).collect()
}

fn column(v: &[[f32; 4]], c: usize) -> Vec<f32> {
    v.iter().map(|a| a[c]).collect()
}

pub fn quantize_model(model: &BasicSceneModel, cfg: &QuantizeConfig) -> Result<QuantizedModel> {
    model.validate()?;
    let Appearance::Shading { offset, terms } = &model.appearance else {
        return Err(SceneError::WrongStage { expected: "editable" });
    };
    if cfg.k.iter().any(|&k| k == 0 || k > 65536) {
        return Err(SceneError::InvalidEdit(format!("codebook sizes {:?} outside 1..=65536", cfg.k)));
    }
    let g = &model.geometry;
    let rot: Vec<[f32; 4]> = g.rotation.iter().map(|&q| normalize_quat(q)).collect();
    let values: [Vec<f32>; 8] = [
        flatten(&rot),
        flatten(&g.log_scale),
        g.opacity_logit.clone(),
        flatten(offset),
        column(terms, 0),
        column(terms, 1),
        column(terms, 2),
        column(terms, 3),
    ];
    let attributes = if g.is_empty() {
        ATTRIBUTES
            .iter()
            .map(|&(name, components)| QuantizedAttribute {
                name: name.into(),
                components,
                centroids: vec![0.0],
                indices: vec![],
            })
            .collect()
    } else {
        ATTRIBUTES
            .iter()
            .zip(&values)
            .enumerate()
            .map(|(a, (&(name, comps), vals))| {
                QuantizedAttribute::build(name, comps, vals, cfg.k[a], cfg.seed.wrapping_add(a as u64))
            })
            .collect::<Result<Vec<_>>>()?
    };
    Ok(QuantizedModel {
        mu: g.mu.clone(),
        normal: g.normal.clone(),
        palette: model.palette,
        meta: model.meta.clone(),
        attributes,
    })
}

impl QuantizedModel {
    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.normal.len() != n || self.attributes.len() != ATTRIBUTES.len() {
            return Err(SceneError::ShapeMismatch("quantized model arrays".into()));
        }
        for (a, &(name, comps)) in self.attributes.iter().zip(&ATTRIBUTES) {
            if a.name != name || a.components != comps || a.indices.len() != n * comps || a.centroids.is_empty() {
                return Err(SceneError::ShapeMismatch(format!("quantized attribute `{}`", a.name)));
            }
        }
        Ok(())
    }

    pub fn attribute(&self, name: &str) -> Option<&QuantizedAttribute> {
        self.attributes.iter().find(|a| a.name == name)
    }
}

fn chunked<const N: usize>(v: &[f32]) -> Vec<[f32; N]> {
    v.chunks_exact(N).map(|c| std::array::from_fn(|i| c[i])).collect()
}

/// Codebook lookup for every attribute.
pub fn dequantize_model(q: &QuantizedModel) -> Result<BasicSceneModel> {
    q.validate()?;
    let d: Vec<Vec<f32>> = q.attributes.iter().map(QuantizedAttribute::decode).collect::<Result<_>>()?;
    let terms = (0..q.len()).map(|i| [d[4][i], d[5][i], d[6][i], d[7][i]]).collect();
    Ok(BasicSceneModel {
        geometry: Geometry {
            mu: q.mu.clone(),
            rotation: chunked(&d[0]),
            log_scale: chunked(&d[1]),
            opacity_logit: d[2].clone(),
            normal: q.normal.clone(),
        },
        appearance: Appearance::Shading {
            offset: chunked(&d[3]),
            terms,
        },
        palette: q.palette,
        meta: q.meta.clone(),
    })
}
