//! Binary sample files (`TTDE`) and model files (`TTTN`).
//!
//! Both start with a 4-byte magic and a little-endian `u32` version. Samples
//! follow with `u64 N`, `u64 d` and `N·d` float64 values, row-major. Models
//! follow with `u64 d`, `d` mode sizes, `d + 1` ranks, every core's float64
//! entries in `(a, i, b)` row-major order, then a `u64` length and that many
//! bytes of JSON metadata.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisFamily, BasisKind, GridSpec};
use crate::density::{DensityModel, Dimension, MeanField, PcaMap};
use crate::error::{Result, TtdeError};
use crate::estimator::SampleSet;
use crate::tt::{Core, TensorTrain};

pub const SAMPLE_MAGIC: &[u8; 4] = b"TTDE";
pub const MODEL_MAGIC: &[u8; 4] = b"TTTN";
pub const VERSION: u32 = 1;

/// Config hash and seed embedded in every model file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

pub fn encode_f64s(v: &[f64]) -> String {
    let bytes: Vec<u8> = v.iter().flat_map(|x| x.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

pub fn decode_f64s(s: &str) -> Result<Vec<f64>> {
    let bytes = STANDARD
        .decode(s)
        .map_err(|e| TtdeError::Format(format!("bad base64 payload: {e}")))?;
    if bytes.len() % 8 != 0 {
        return Err(TtdeError::Format("float payload is not a multiple of 8 bytes".into()));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum BasisMeta {
    Fourier {
        n: usize,
        half_width: f64,
        /// Stored functions are the Lebesgue-orthonormal ones times this.
        lebesgue_scale: f64,
    },
    Legendre {
        n: usize,
    },
    Tabulated {
        n: usize,
        grid: GridSpec,
        values: String,
        weight: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DimMeta {
    basis: BasisMeta,
    grid: GridSpec,
    mean_field: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PcaMeta {
    rows: usize,
    cols: usize,
    /// Column-major `Q`.
    q: String,
    center: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelMeta {
    alpha: f64,
    lambda: f64,
    norm_const: f64,
    dims: Vec<DimMeta>,
    pca: Option<PcaMeta>,
    provenance: Provenance,
}

fn basis_meta(b: &BasisFamily) -> BasisMeta {
    match b.kind() {
        BasisKind::Fourier { half_width } => BasisMeta::Fourier {
            n: b.n(),
            half_width: *half_width,
            lebesgue_scale: b.lebesgue_scale(),
        },
        BasisKind::Legendre => BasisMeta::Legendre { n: b.n() },
        BasisKind::Tabulated { grid, values, weight } => BasisMeta::Tabulated {
            n: b.n(),
            grid: *grid,
            values: encode_f64s(&values.concat()),
            weight: encode_f64s(weight),
        },
    }
}

fn basis_from_meta(m: &BasisMeta) -> Result<BasisFamily> {
    match m {
        BasisMeta::Fourier { n, half_width, .. } => BasisFamily::fourier(*n, *half_width),
        BasisMeta::Legendre { n } => BasisFamily::legendre(*n),
        BasisMeta::Tabulated { n, grid, values, weight } => {
            let flat = decode_f64s(values)?;
            let g = grid.points();
            if flat.len() != n * g {
                return Err(TtdeError::Format(format!(
                    "tabulated basis has {} values for {n} functions on {g} nodes",
                    flat.len()
                )));
            }
            BasisFamily::tabulated(*grid, flat.chunks(g).map(|c| c.to_vec()).collect(), decode_f64s(weight)?)
        }
    }
}

fn write_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_u64(w: &mut impl Write, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_f64s(w: &mut impl Write, v: &[f64]) -> Result<()> {
    for x in v {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64s(r: &mut impl Read, count: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; count * 8];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

fn read_header(r: &mut impl Read, magic: &[u8; 4]) -> Result<()> {
    let mut m = [0u8; 4];
    r.read_exact(&mut m)?;
    if &m != magic {
        return Err(TtdeError::Format(format!(
            "expected magic {:?}, found {:?}",
            String::from_utf8_lossy(magic),
            String::from_utf8_lossy(&m)
        )));
    }
    let v = read_u32(r)?;
    if v != VERSION {
        return Err(TtdeError::Format(format!("unsupported version {v}")));
    }
    Ok(())
}

fn checked_len(a: u64, b: u64) -> Result<usize> {
    a.checked_mul(b)
        .and_then(|x| usize::try_from(x).ok())
        .filter(|x| *x <= 1 << 34)
        .ok_or_else(|| TtdeError::Format(format!("implausible size {a} x {b}")))
}

pub fn write_samples_to(w: &mut impl Write, s: &SampleSet) -> Result<()> {
    w.write_all(SAMPLE_MAGIC)?;
    write_u32(w, VERSION)?;
    write_u64(w, s.len() as u64)?;
    write_u64(w, s.d() as u64)?;
    write_f64s(w, s.data())
}

/// Raw contents of a sample file: `(row-major data, d)`.
pub fn read_samples_from(r: &mut impl Read) -> Result<(Vec<f64>, usize)> {
    read_header(r, SAMPLE_MAGIC)?;
    let n = read_u64(r)?;
    let d = read_u64(r)?;
    if n == 0 || d == 0 {
        return Err(TtdeError::Format(format!("empty sample file ({n} x {d})")));
    }
    let data = read_f64s(r, checked_len(n, d)?)?;
    Ok((data, d as usize))
}

pub fn write_samples(path: &Path, s: &SampleSet) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_samples_to(&mut w, s)?;
    w.flush()?;
    Ok(())
}

pub fn read_samples(path: &Path) -> Result<(Vec<f64>, usize)> {
    read_samples_from(&mut BufReader::new(File::open(path)?))
}

/// Reads a sample file and attaches `boxes`, or the data's bounding box at
/// `mesh` when `boxes` is `None`.
pub fn read_sample_set(path: &Path, boxes: Option<Vec<GridSpec>>, mesh: f64) -> Result<SampleSet> {
    let (data, d) = read_samples(path)?;
    match boxes {
        Some(b) => SampleSet::new(data, d, b),
        None => SampleSet::with_bounding_box(data, d, mesh, 0.0),
    }
}

pub fn write_model_to(w: &mut impl Write, m: &DensityModel, prov: &Provenance) -> Result<()> {
    let meta = ModelMeta {
        alpha: m.alpha,
        lambda: m.lambda,
        norm_const: m.norm_const(),
        dims: m
            .dims()
            .iter()
            .map(|d| DimMeta {
                basis: basis_meta(&d.basis),
                grid: d.grid,
                mean_field: match &d.mean_field {
                    MeanField::Uniform => None,
                    MeanField::Tabulated { density } => Some(encode_f64s(density)),
                },
            })
            .collect(),
        pca: m.pca().map(|p| PcaMeta {
            rows: p.q.nrows(),
            cols: p.q.ncols(),
            q: encode_f64s(p.q.as_slice()),
            center: encode_f64s(&p.center),
        }),
        provenance: prov.clone(),
    };
    let json = serde_json::to_vec(&meta)?;
    let t = m.coeff();
    w.write_all(MODEL_MAGIC)?;
    write_u32(w, VERSION)?;
    write_u64(w, t.d() as u64)?;
    for n in t.mode_sizes() {
        write_u64(w, n as u64)?;
    }
    for r in t.ranks() {
        write_u64(w, r as u64)?;
    }
    for c in t.cores() {
        write_f64s(w, c.data())?;
    }
    write_u64(w, json.len() as u64)?;
    w.write_all(&json)?;
    Ok(())
}

pub fn read_model_from(r: &mut impl Read) -> Result<(DensityModel, Provenance)> {
    read_header(r, MODEL_MAGIC)?;
    let d = checked_len(read_u64(r)?, 1)?;
    let sizes = (0..d).map(|_| read_u64(r)).collect::<Result<Vec<_>>>()?;
    let ranks = (0..=d).map(|_| read_u64(r)).collect::<Result<Vec<_>>>()?;
    let mut cores = Vec::with_capacity(d);
    for j in 0..d {
        let (a, n, b) = (ranks[j], sizes[j], ranks[j + 1]);
        let count = checked_len(checked_len(a, n)? as u64, b)?;
        let data = read_f64s(r, count)?;
        cores.push(Core::new(a as usize, n as usize, b as usize, data)?);
    }
    let len = checked_len(read_u64(r)?, 1)?;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)?;
    let meta: ModelMeta = serde_json::from_slice(&json)?;
    let coeff = TensorTrain::new(cores)?;
    let dims = meta
        .dims
        .iter()
        .map(|dm| {
            let mf = match &dm.mean_field {
                None => MeanField::Uniform,
                Some(s) => MeanField::Tabulated { density: decode_f64s(s)? },
            };
            Dimension::new(basis_from_meta(&dm.basis)?, dm.grid, mf)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut model = DensityModel::new(coeff, dims, meta.alpha, meta.lambda)?.with_norm_const(meta.norm_const);
    if let Some(p) = &meta.pca {
        let q = decode_f64s(&p.q)?;
        if q.len() != p.rows * p.cols {
            return Err(TtdeError::Format("PCA matrix size mismatch".into()));
        }
        model = model.with_pca(PcaMap {
            q: DMatrix::from_column_slice(p.rows, p.cols, &q),
            center: decode_f64s(&p.center)?,
        })?;
    }
    Ok((model, meta.provenance))
}

pub fn save_model(path: &Path, m: &DensityModel, prov: &Provenance) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_model_to(&mut w, m, prov)?;
    w.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<(DensityModel, Provenance)> {
    read_model_from(&mut BufReader::new(File::open(path)?))
}
