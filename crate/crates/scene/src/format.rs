//! The `IVRG` container: magic, version, flags, tagged chunks, CRC32 trailer.
//! All integers and floats are little-endian.
//!
//! Chunks, in order: `META` (JSON), `PALT` (f32 x 3 per model), `GEOM`
//! (f32 positions of every model, then f32 normals), one `RAWA` or `QATT`
//! per model in model order, and `EDIT` (JSON) for composed scenes.

use std::path::Path;

use serde::{Deserialize, Serialize};
use volsplat_core::sh::coeff_count;

use crate::compose::{ComposedScene, EditState};
use crate::error::{Result, SceneError};
use crate::model::{Appearance, BasicSceneModel, Geometry, ModelMeta, Stage};
use crate::vq::{dequantize_model, QuantizedAttribute, QuantizedModel, ATTRIBUTES};

pub const MAGIC: &[u8; 4] = b"IVRG";
pub const VERSION: u16 = 1;
pub const FLAG_QUANTIZED: u16 = 1;
pub const FLAG_COMPOSED: u16 = 2;

#[derive(Clone, Debug, PartialEq)]
pub enum StoredModel {
    Raw(BasicSceneModel),
    Quantized(QuantizedModel),
}

impl StoredModel {
    pub fn len(&self) -> usize {
        match self {
            StoredModel::Raw(m) => m.len(),
            StoredModel::Quantized(q) => q.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn stage(&self) -> Stage {
        match self {
            StoredModel::Raw(m) => m.stage(),
            StoredModel::Quantized(_) => Stage::Editable,
        }
    }

    pub fn meta(&self) -> &ModelMeta {
        match self {
            StoredModel::Raw(m) => &m.meta,
            StoredModel::Quantized(q) => &q.meta,
        }
    }

    pub fn palette(&self) -> [f32; 3] {
        match self {
            StoredModel::Raw(m) => m.palette,
            StoredModel::Quantized(q) => q.palette,
        }
    }

    /// Dense model (codebook lookup for quantized entries).
    pub fn to_model(&self) -> Result<BasicSceneModel> {
        match self {
            StoredModel::Raw(m) => Ok(m.clone()),
            StoredModel::Quantized(q) => dequantize_model(q),
        }
    }
}

/// Contents of one file: a single model, or a composed scene with edits.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneFile {
    pub models: Vec<StoredModel>,
    pub edits: Option<EditState>,
}

impl SceneFile {
    pub fn single(model: BasicSceneModel) -> Self {
        SceneFile {
            models: vec![StoredModel::Raw(model)],
            edits: None,
        }
    }

    pub fn quantized(model: QuantizedModel) -> Self {
        SceneFile {
            models: vec![StoredModel::Quantized(model)],
            edits: None,
        }
    }

    pub fn composed(scene: &ComposedScene) -> Self {
        SceneFile {
            models: scene.models.iter().cloned().map(StoredModel::Raw).collect(),
            edits: Some(scene.edits.clone()),
        }
    }

    pub fn flags(&self) -> u16 {
        let mut f = 0;
        if self.models.iter().any(|m| matches!(m, StoredModel::Quantized(_))) {
            f |= FLAG_QUANTIZED;
        }
        if self.edits.is_some() {
            f |= FLAG_COMPOSED;
        }
        f
    }

    /// Dequantizes every model and composes them, keeping stored edits.
    pub fn into_scene(self) -> Result<ComposedScene> {
        let models = self.models.iter().map(StoredModel::to_model).collect::<Result<Vec<_>>>()?;
        let mut scene = crate::compose::compose(models)?;
        if let Some(e) = self.edits {
            e.validate(scene.scene_count())?;
            scene.edits = e;
        }
        Ok(scene)
    }

    /// The single dense model of a non-composed file.
    pub fn into_model(self) -> Result<BasicSceneModel> {
        if self.models.len() != 1 {
            return Err(SceneError::Malformed(format!("expected one model, file holds {}", self.models.len())));
        }
        self.models[0].to_model()
    }
}

#[derive(Serialize, Deserialize)]
struct MetaEntry {
    stage: Stage,
    count: usize,
    quantized: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sh_degree: Option<usize>,
    meta: ModelMeta,
}

#[derive(Serialize, Deserialize)]
struct MetaChunk {
    models: Vec<MetaEntry>,
}

struct Writer(Vec<u8>);

impl Writer {
    fn chunk(&mut self, tag: &[u8; 4], payload: &[u8]) {
        self.0.extend_from_slice(tag);
        self.0.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        self.0.extend_from_slice(payload);
    }
}

fn put_f32s(buf: &mut Vec<u8>, vals: impl IntoIterator<Item = f32>) {
    for v in vals {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

fn flat<const N: usize>(v: &[[f32; N]]) -> impl Iterator<Item = f32> + '_ {
    v.iter().flat_map(|a| a.iter().copied())
}

fn raw_payload(m: &BasicSceneModel) -> Vec<u8> {
    let g = &m.geometry;
    let mut buf = Vec::new();
    put_f32s(&mut buf, flat(&g.rotation));
    put_f32s(&mut buf, flat(&g.log_scale));
    put_f32s(&mut buf, g.opacity_logit.iter().copied());
    match &m.appearance {
        Appearance::Sh { coeffs, .. } => put_f32s(&mut buf, flat(coeffs)),
        Appearance::Shading { offset, terms } => {
            put_f32s(&mut buf, flat(offset));
            put_f32s(&mut buf, flat(terms));
        }
    }
    buf
}

fn quant_payload(q: &QuantizedModel) -> Vec<u8> {
    let mut buf = Vec::new();
    for a in &q.attributes {
        buf.extend_from_slice(&(a.k() as u32).to_le_bytes());
        put_f32s(&mut buf, a.centroids.iter().copied());
        if a.index_width() == 1 {
            buf.extend(a.indices.iter().map(|&i| i as u8));
        } else {
            for &i in &a.indices {
                buf.extend_from_slice(&(i as u16).to_le_bytes());
            }
        }
    }
    buf
}

/// Canonical byte encoding.
pub fn encode(file: &SceneFile) -> Result<Vec<u8>> {
    let mut entries = Vec::with_capacity(file.models.len());
    for m in &file.models {
        let (quantized, sh_degree) = match m {
            StoredModel::Raw(b) => {
                b.validate()?;
                let deg = match &b.appearance {
                    Appearance::Sh { degree, .. } => Some(*degree),
                    Appearance::Shading { .. } => None,
                };
                (false, deg)
            }
            StoredModel::Quantized(q) => {
                q.validate()?;
                (true, None)
            }
        };
        entries.push(MetaEntry {
            stage: m.stage(),
            count: m.len(),
            quantized,
            sh_degree,
            meta: m.meta().clone(),
        });
    }
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.0.extend_from_slice(&VERSION.to_le_bytes());
    w.0.extend_from_slice(&file.flags().to_le_bytes());
    w.chunk(b"META", &serde_json::to_vec(&MetaChunk { models: entries })?);
    let mut palt = Vec::new();
    put_f32s(&mut palt, file.models.iter().flat_map(|m| m.palette()));
    w.chunk(b"PALT", &palt);
    let mut geom = Vec::new();
    let (mus, normals): (Vec<&[[f32; 3]]>, Vec<&[[f32; 3]]>) = file
        .models
        .iter()
        .map(|m| match m {
            StoredModel::Raw(b) => (b.geometry.mu.as_slice(), b.geometry.normal.as_slice()),
            StoredModel::Quantized(q) => (q.mu.as_slice(), q.normal.as_slice()),
        })
        .unzip();
    for mu in &mus {
        put_f32s(&mut geom, flat(mu));
    }
    for n in &normals {
        put_f32s(&mut geom, flat(n));
    }
    w.chunk(b"GEOM", &geom);
    for m in &file.models {
        match m {
            StoredModel::Raw(b) => w.chunk(b"RAWA", &raw_payload(b)),
            StoredModel::Quantized(q) => w.chunk(b"QATT", &quant_payload(q)),
        }
    }
    if let Some(e) = &file.edits {
        w.chunk(b"EDIT", &serde_json::to_vec(e)?);
    }
    let crc = crc32fast::hash(&w.0);
    w.0.extend_from_slice(&crc.to_le_bytes());
    Ok(w.0)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

fn malformed(msg: impl Into<String>) -> SceneError {
    SceneError::Malformed(msg.into())
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| malformed("unexpected end of data"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| malformed("array too large"))?)?;
        Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn vecs<const N: usize>(&mut self, n: usize) -> Result<Vec<[f32; N]>> {
        let v = self.f32s(n.checked_mul(N).ok_or_else(|| malformed("array too large"))?)?;
        Ok(v.chunks_exact(N).map(|c| std::array::from_fn(|i| c[i])).collect())
    }

    fn chunk(&mut self) -> Result<([u8; 4], &'a [u8])> {
        let tag: [u8; 4] = self.take(4)?.try_into().unwrap();
        let len = u64::from_le_bytes(self.take(8)?.try_into().unwrap());
        let len = usize::try_from(len).map_err(|_| malformed("chunk too large"))?;
        Ok((tag, self.take(len)?))
    }

    fn done(&self) -> bool {
        self.pos == self.buf.len()
    }
}

fn expect_tag(got: [u8; 4], want: &[u8; 4]) -> Result<()> {
    if &got != want {
        return Err(malformed(format!(
            "expected chunk {}, found {}",
            String::from_utf8_lossy(want),
            String::from_utf8_lossy(&got)
        )));
    }
    Ok(())
}

pub fn decode(bytes: &[u8]) -> Result<SceneFile> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(SceneError::BadMagic);
    }
    if bytes.len() < 12 {
        return Err(malformed("truncated header"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(SceneError::VersionUnsupported(version));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(trailer.try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(SceneError::ChecksumMismatch { stored, computed });
    }
    let flags = u16::from_le_bytes([bytes[6], bytes[7]]);
    let mut r = Reader { buf: body, pos: 8 };

    let (tag, meta) = r.chunk()?;
    expect_tag(tag, b"META")?;
    let meta: MetaChunk = serde_json::from_slice(meta)?;
    let n_models = meta.models.len();
    let (tag, palt) = r.chunk()?;
    expect_tag(tag, b"PALT")?;
    let palettes = Reader { buf: palt, pos: 0 }.vecs::<3>(n_models)?;
    let total: usize = meta.models.iter().map(|m| m.count).sum();
    let (tag, geom) = r.chunk()?;
    expect_tag(tag, b"GEOM")?;
    let mut gr = Reader { buf: geom, pos: 0 };
    let mus = gr.vecs::<3>(total)?;
    let normals = gr.vecs::<3>(total)?;
    if !gr.done() || palt.len() != n_models * 12 {
        return Err(malformed("trailing bytes in GEOM or PALT"));
    }

    let mut models = Vec::with_capacity(n_models);
    let mut start = 0;
    for (i, entry) in meta.models.into_iter().enumerate() {
        let n = entry.count;
        let mu = mus[start..start + n].to_vec();
        let normal = normals[start..start + n].to_vec();
        start += n;
        let (tag, payload) = r.chunk()?;
        let mut pr = Reader { buf: payload, pos: 0 };
        let model = if entry.quantized {
            expect_tag(tag, b"QATT")?;
            let mut attributes = Vec::with_capacity(ATTRIBUTES.len());
            for &(name, comps) in &ATTRIBUTES {
                let k = pr.u32()? as usize;
                if k == 0 || k > 65536 {
                    return Err(malformed(format!("codebook `{name}` size {k}")));
                }
                let centroids = pr.f32s(k)?;
                let count = n * comps;
                let indices = if k <= 256 {
                    pr.take(count)?.iter().map(|&b| b as u32).collect()
                } else {
                    pr.take(count * 2)?.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]]) as u32).collect()
                };
                let attr = QuantizedAttribute {
                    name: name.to_string(),
                    components: comps,
                    centroids,
                    indices,
                };
                if let Some(&bad) = attr.indices.iter().find(|&&ix| ix as usize >= k) {
                    return Err(SceneError::CorruptIndex {
                        attribute: name.to_string(),
                        index: bad,
                        k: k as u32,
                    });
                }
                attributes.push(attr);
            }
            StoredModel::Quantized(QuantizedModel {
                mu,
                normal,
                palette: palettes[i],
                meta: entry.meta,
                attributes,
            })
        } else {
            expect_tag(tag, b"RAWA")?;
            let rotation = pr.vecs::<4>(n)?;
            let log_scale = pr.vecs::<3>(n)?;
            let opacity_logit = pr.f32s(n)?;
            let appearance = match entry.stage {
                Stage::Base => {
                    let degree = entry.sh_degree.ok_or_else(|| malformed("base model without sh_degree"))?;
                    if degree > 3 {
                        return Err(malformed(format!("sh degree {degree}")));
                    }
                    Appearance::Sh {
                        degree,
                        coeffs: pr.vecs::<3>(n * coeff_count(degree))?,
                    }
                }
                Stage::Editable => Appearance::Shading {
                    offset: pr.vecs::<3>(n)?,
                    terms: pr.vecs::<4>(n)?,
                },
            };
            StoredModel::Raw(BasicSceneModel {
                geometry: Geometry {
                    mu,
                    rotation,
                    log_scale,
                    opacity_logit,
                    normal,
                },
                appearance,
                palette: palettes[i],
                meta: entry.meta,
            })
        };
        if !pr.done() {
            return Err(malformed(format!("trailing bytes in model {i}")));
        }
        models.push(model);
    }
    let edits = if r.done() {
        None
    } else {
        let (tag, e) = r.chunk()?;
        expect_tag(tag, b"EDIT")?;
        Some(serde_json::from_slice::<EditState>(e)?)
    };
    if !r.done() {
        return Err(malformed("trailing chunks"));
    }
    let file = SceneFile { models, edits };
    if file.flags() != flags {
        return Err(malformed(format!("flags {flags:#06b} disagree with contents")));
    }
    Ok(file)
}

pub fn save(file: &SceneFile, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode(file)?)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<SceneFile> {
    decode(&std::fs::read(path)?)
}
