//! Versioned binary model file.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic  : b"WLKD"
//! version: u16 (currently 1)
//! k, l   : u32, u32          window geometry the model was trained for
//! then tagged sections until EOF, each:
//!   tag  : u8   (1 = autoencoder, 2 = one-class svm, 3 = norm stats)
//!   size : u64  payload byte length
//!   payload
//! ```
//!
//! The autoencoder payload stores each layer as
//! `kind u8 (0 conv / 1 transposed), out u32, in u32, kernel u32, stride u32,
//! pad u32, output_padding u32`, then the weights and bias as `f32`.
//! Trained parameters are f32-representable by construction, so the 32-bit
//! encoding round-trips bit-exactly. The SVM section keeps support vectors,
//! dual coefficients, `rho`, `gamma` and `nu` in `f64`: the dual constraint
//! `sum(alpha) = 1` must survive the round trip at 1e-10, which f32 storage
//! would break. Norm stats are `f64` for the same reason.

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use sha2::{Digest, Sha256};

use crate::autoencoder::{ConvLayer, DecoderModel, EncoderModel};
use crate::nn::Tensor3;
use crate::ocsvm::OcSvmModel;
use crate::window::NormStats;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"WLKD";
const VERSION: u16 = 1;

const TAG_AUTOENCODER: u8 = 1;
const TAG_OCSVM: u8 = 2;
const TAG_NORM: u8 = 3;

/// Everything the detection pipeline needs at inference time.
#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub encoder: EncoderModel,
    pub decoder: DecoderModel,
    pub ocsvm: OcSvmModel,
    pub norm: NormStats,
}

impl ModelBundle {
    pub fn nodes(&self) -> usize {
        self.encoder.nodes
    }

    pub fn window_len(&self) -> usize {
        self.encoder.window_len
    }

    /// Errors unless the model was trained for exactly this window geometry.
    pub fn require_dims(&self, nodes: usize, window_len: usize) -> Result<()> {
        if self.nodes() != nodes || self.window_len() != window_len {
            return Err(Error::Shape(format!(
                "model was trained for K={}, L={} but K={nodes}, L={window_len} was requested",
                self.nodes(),
                self.window_len()
            )));
        }
        Ok(())
    }
}

/// A parsed model file; SVM and norm sections are optional so an
/// autoencoder-only file is valid.
#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub k: usize,
    pub l: usize,
    pub encoder: EncoderModel,
    pub decoder: DecoderModel,
    pub ocsvm: Option<OcSvmModel>,
    pub norm: Option<NormStats>,
}

impl LoadedModel {
    /// Converts to a full bundle, erroring on missing sections.
    pub fn into_bundle(self) -> Result<ModelBundle> {
        let ocsvm = self
            .ocsvm
            .ok_or_else(|| Error::ModelFile("file has no one-class SVM section".into()))?;
        let norm = self
            .norm
            .ok_or_else(|| Error::ModelFile("file has no normalization section".into()))?;
        Ok(ModelBundle { encoder: self.encoder, decoder: self.decoder, ocsvm, norm })
    }
}

fn write_layer(buf: &mut Vec<u8>, layer: &ConvLayer, transposed: bool) {
    buf.push(transposed as u8);
    buf.write_u32::<LittleEndian>(layer.weights.batch as u32).unwrap();
    buf.write_u32::<LittleEndian>(layer.weights.channels as u32).unwrap();
    buf.write_u32::<LittleEndian>(layer.weights.len as u32).unwrap();
    buf.write_u32::<LittleEndian>(layer.stride as u32).unwrap();
    buf.write_u32::<LittleEndian>(layer.pad as u32).unwrap();
    buf.write_u32::<LittleEndian>(layer.output_padding as u32).unwrap();
    for v in layer.weights.data() {
        buf.write_f32::<LittleEndian>(*v as f32).unwrap();
    }
    for v in layer.bias.data() {
        buf.write_f32::<LittleEndian>(*v as f32).unwrap();
    }
}

fn read_layer(r: &mut impl Read) -> Result<(ConvLayer, bool)> {
    let transposed = r.read_u8().map_err(file_err)? != 0;
    let out_ch = r.read_u32::<LittleEndian>().map_err(file_err)? as usize;
    let in_ch = r.read_u32::<LittleEndian>().map_err(file_err)? as usize;
    let kernel = r.read_u32::<LittleEndian>().map_err(file_err)? as usize;
    let stride = r.read_u32::<LittleEndian>().map_err(file_err)? as usize;
    let pad = r.read_u32::<LittleEndian>().map_err(file_err)? as usize;
    let output_padding = r.read_u32::<LittleEndian>().map_err(file_err)? as usize;
    let mut weights = Vec::with_capacity(out_ch * in_ch * kernel);
    for _ in 0..out_ch * in_ch * kernel {
        weights.push(r.read_f32::<LittleEndian>().map_err(file_err)? as f64);
    }
    let mut bias = Vec::with_capacity(out_ch);
    for _ in 0..out_ch {
        bias.push(r.read_f32::<LittleEndian>().map_err(file_err)? as f64);
    }
    Ok((
        ConvLayer {
            weights: Tensor3::new(out_ch, in_ch, kernel, weights)?,
            bias: Tensor3::new(1, out_ch, 1, bias)?,
            stride,
            pad,
            output_padding,
        },
        transposed,
    ))
}

fn file_err(e: std::io::Error) -> Error {
    Error::ModelFile(format!("truncated or corrupt model file: {e}"))
}

fn autoencoder_payload(encoder: &EncoderModel, decoder: &DecoderModel) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.push(5u8); // layer count
    write_layer(&mut buf, &encoder.conv1, false);
    write_layer(&mut buf, &encoder.conv2, false);
    write_layer(&mut buf, &decoder.tconv1, true);
    write_layer(&mut buf, &decoder.tconv2, true);
    write_layer(&mut buf, &decoder.tconv3, true);
    buf
}

fn ocsvm_payload(model: &OcSvmModel) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.write_u32::<LittleEndian>(model.dim as u32).unwrap();
    buf.write_u32::<LittleEndian>(model.support_vectors.len() as u32).unwrap();
    buf.write_f64::<LittleEndian>(model.nu).unwrap();
    buf.write_f64::<LittleEndian>(model.gamma).unwrap();
    buf.write_f64::<LittleEndian>(model.rho).unwrap();
    for a in &model.alphas {
        buf.write_f64::<LittleEndian>(*a).unwrap();
    }
    for sv in &model.support_vectors {
        for v in sv {
            buf.write_f64::<LittleEndian>(*v).unwrap();
        }
    }
    buf
}

fn norm_payload(norm: &NormStats) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.write_u32::<LittleEndian>(norm.mean.len() as u32).unwrap();
    for v in norm.mean.iter().chain(&norm.std) {
        buf.write_f64::<LittleEndian>(*v).unwrap();
    }
    buf
}

fn write_section(out: &mut impl Write, tag: u8, payload: &[u8]) -> Result<()> {
    out.write_u8(tag)?;
    out.write_u64::<LittleEndian>(payload.len() as u64)?;
    out.write_all(payload)?;
    Ok(())
}

/// Saves an autoencoder-only model file.
pub fn save_model(path: &Path, encoder: &EncoderModel, decoder: &DecoderModel) -> Result<()> {
    save_sections(path, encoder, decoder, None, None)
}

/// Saves the full bundle: autoencoder, one-class SVM and norm stats.
pub fn save_bundle(path: &Path, bundle: &ModelBundle) -> Result<()> {
    save_sections(path, &bundle.encoder, &bundle.decoder, Some(&bundle.ocsvm), Some(&bundle.norm))
}

fn save_sections(
    path: &Path,
    encoder: &EncoderModel,
    decoder: &DecoderModel,
    ocsvm: Option<&OcSvmModel>,
    norm: Option<&NormStats>,
) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.write_u16::<LittleEndian>(VERSION)?;
    out.write_u32::<LittleEndian>(encoder.nodes as u32)?;
    out.write_u32::<LittleEndian>(encoder.window_len as u32)?;
    write_section(&mut out, TAG_AUTOENCODER, &autoencoder_payload(encoder, decoder))?;
    if let Some(m) = ocsvm {
        write_section(&mut out, TAG_OCSVM, &ocsvm_payload(m))?;
    }
    if let Some(n) = norm {
        write_section(&mut out, TAG_NORM, &norm_payload(n))?;
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Parses a model file.
pub fn load_model(path: &Path) -> Result<LoadedModel> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::ModelFile(format!("cannot read {}: {e}", path.display())))?;
    let mut r = std::io::Cursor::new(&bytes);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(file_err)?;
    if &magic != MAGIC {
        return Err(Error::ModelFile("not a model file (bad magic)".into()));
    }
    let version = r.read_u16::<LittleEndian>().map_err(file_err)?;
    if version != VERSION {
        return Err(Error::ModelFile(format!("unsupported format version {version}, expected {VERSION}")));
    }
    let k = r.read_u32::<LittleEndian>().map_err(file_err)? as usize;
    let l = r.read_u32::<LittleEndian>().map_err(file_err)? as usize;

    let mut encoder = None;
    let mut decoder = None;
    let mut ocsvm = None;
    let mut norm = None;
    while (r.position() as usize) < bytes.len() {
        let tag = r.read_u8().map_err(file_err)?;
        let size = r.read_u64::<LittleEndian>().map_err(file_err)? as usize;
        let start = r.position() as usize;
        if start + size > bytes.len() {
            return Err(Error::ModelFile("section overruns file".into()));
        }
        let mut section = std::io::Cursor::new(&bytes[start..start + size]);
        match tag {
            TAG_AUTOENCODER => {
                let count = section.read_u8().map_err(file_err)?;
                if count != 5 {
                    return Err(Error::ModelFile(format!("expected 5 layers, file has {count}")));
                }
                let (c1, t1) = read_layer(&mut section)?;
                let (c2, t2) = read_layer(&mut section)?;
                let (d1, t3) = read_layer(&mut section)?;
                let (d2, t4) = read_layer(&mut section)?;
                let (d3, t5) = read_layer(&mut section)?;
                if t1 || t2 || !t3 || !t4 || !t5 {
                    return Err(Error::ModelFile("unexpected layer kinds in autoencoder section".into()));
                }
                encoder = Some(EncoderModel { conv1: c1, conv2: c2, nodes: k, window_len: l });
                decoder = Some(DecoderModel { tconv1: d1, tconv2: d2, tconv3: d3, nodes: k, window_len: l });
            }
            TAG_OCSVM => {
                let dim = section.read_u32::<LittleEndian>().map_err(file_err)? as usize;
                let count = section.read_u32::<LittleEndian>().map_err(file_err)? as usize;
                let nu = section.read_f64::<LittleEndian>().map_err(file_err)?;
                let gamma = section.read_f64::<LittleEndian>().map_err(file_err)?;
                let rho = section.read_f64::<LittleEndian>().map_err(file_err)?;
                let mut alphas = Vec::with_capacity(count);
                for _ in 0..count {
                    alphas.push(section.read_f64::<LittleEndian>().map_err(file_err)?);
                }
                let mut support_vectors = Vec::with_capacity(count);
                for _ in 0..count {
                    let mut sv = Vec::with_capacity(dim);
                    for _ in 0..dim {
                        sv.push(section.read_f64::<LittleEndian>().map_err(file_err)?);
                    }
                    support_vectors.push(sv);
                }
                ocsvm = Some(OcSvmModel { support_vectors, alphas, rho, gamma, nu, dim });
            }
            TAG_NORM => {
                let n = section.read_u32::<LittleEndian>().map_err(file_err)? as usize;
                let mut mean = Vec::with_capacity(n);
                for _ in 0..n {
                    mean.push(section.read_f64::<LittleEndian>().map_err(file_err)?);
                }
                let mut std = Vec::with_capacity(n);
                for _ in 0..n {
                    std.push(section.read_f64::<LittleEndian>().map_err(file_err)?);
                }
                norm = Some(NormStats { mean, std });
            }
            other => {
                return Err(Error::ModelFile(format!("unknown section tag {other}")));
            }
        }
        r.set_position((start + size) as u64);
    }
    let encoder = encoder.ok_or_else(|| Error::ModelFile("file has no autoencoder section".into()))?;
    let decoder = decoder.expect("decoder accompanies encoder");
    Ok(LoadedModel { k, l, encoder, decoder, ocsvm, norm })
}

/// Loads a full bundle, verifying it matches the expected geometry.
pub fn load_bundle(path: &Path) -> Result<ModelBundle> {
    load_model(path)?.into_bundle()
}

/// SHA-256 of the model file, hex-encoded. Recorded in detection results so
/// reports are traceable to the exact model bytes.
pub fn model_hash(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}
