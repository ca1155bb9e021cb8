//! On-disk formats: velocity sets and reservoir profiles (JSON),
//! configuration snapshots (packed bits plus JSON sidecar), profiles and
//! fields (CSV), and run manifests (JSON).

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use mvex_core::model::{ModelError, ModelTwoVariant, VelocityModel};
use mvex_core::pde::Field;
use mvex_core::thermo::{FourierMode, FourierProfile, ReservoirProfile, Reservoirs, ThermoError};
use mvex_core::{Configuration, EmpiricalProfile, LatticeGeom};
use serde::{Deserialize, Serialize};

const MAGIC: &[u8; 4] = b"MVXS";
const FORMAT_VERSION: u8 = 1;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("velocity set: {0}")]
    Model(#[from] ModelError),
    #[error("reservoir profile: {0}")]
    Thermo(#[from] ThermoError),
    #[error("velocity set must be a non-empty array of equal-length vectors")]
    VelocityShape,
    #[error("snapshot: {0}")]
    Snapshot(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn read_file(path: &Path) -> Result<Vec<u8>, IoError> {
    fs::read(path).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    fs::write(path, bytes).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })
}

/// Which velocity set to build.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelSpec {
    /// `{±e_1, …, ±e_d}`.
    Model1 { dim: usize },
    /// The `d = 3` set built from `ϖ`; `variant` is `cube` (default) or `mixed`.
    Model2 {
        #[serde(default)]
        variant: Model2Variant,
    },
    /// An explicit list of velocities.
    Custom { velocities: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model2Variant {
    #[default]
    Cube,
    Mixed,
}

impl ModelSpec {
    pub fn build(&self) -> Result<VelocityModel, IoError> {
        Ok(match self {
            ModelSpec::Model1 { dim } => VelocityModel::model_one(*dim)?,
            ModelSpec::Model2 { variant } => VelocityModel::model_two(match variant {
                Model2Variant::Cube => ModelTwoVariant::Cube,
                Model2Variant::Mixed => ModelTwoVariant::Mixed,
            }),
            ModelSpec::Custom { velocities } => velocities_to_model(velocities.clone())?,
        })
    }
}

fn velocities_to_model(velocities: Vec<Vec<f64>>) -> Result<VelocityModel, IoError> {
    let dim = velocities.first().map(Vec::len).ok_or(IoError::VelocityShape)?;
    if dim == 0 || velocities.iter().any(|v| v.len() != dim) {
        return Err(IoError::VelocityShape);
    }
    Ok(VelocityModel::new(dim, velocities)?)
}

/// Parses a JSON array of `d`-vectors. A set that is not closed under
/// signed coordinate permutations is rejected with the missing vectors.
pub fn parse_velocities(json: &str) -> Result<VelocityModel, IoError> {
    let velocities: Vec<Vec<f64>> = serde_json::from_str(json)?;
    velocities_to_model(velocities)
}

pub fn load_velocities(path: &Path) -> Result<VelocityModel, IoError> {
    let bytes = read_file(path)?;
    parse_velocities(&String::from_utf8_lossy(&bytes))
}

/// A per-velocity reservoir density: a constant or a truncated Fourier series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProfileSpec {
    Constant(f64),
    Fourier {
        mean: f64,
        #[serde(default)]
        modes: Vec<ModeSpec>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSpec {
    pub wavevector: Vec<i32>,
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

impl ProfileSpec {
    fn to_profile(&self) -> FourierProfile {
        match self {
            ProfileSpec::Constant(v) => FourierProfile::constant(*v),
            ProfileSpec::Fourier { mean, modes } => FourierProfile {
                mean: *mean,
                modes: modes
                    .iter()
                    .map(|m| FourierMode {
                        wavevector: m.wavevector.clone(),
                        cos: m.cos,
                        sin: m.sin,
                    })
                    .collect(),
            },
        }
    }
}

/// `{"alpha": [...], "beta": [...]}`, one entry per velocity in model order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReservoirSpec {
    pub alpha: Vec<ProfileSpec>,
    pub beta: Vec<ProfileSpec>,
}

impl ReservoirSpec {
    pub fn constant(alpha: &[f64], beta: &[f64]) -> Self {
        Self {
            alpha: alpha.iter().map(|&a| ProfileSpec::Constant(a)).collect(),
            beta: beta.iter().map(|&b| ProfileSpec::Constant(b)).collect(),
        }
    }

    /// Validates every profile into `(0, 1)`.
    pub fn build(&self, model: &VelocityModel) -> Result<Reservoirs, IoError> {
        let side = |s: &[ProfileSpec]| ReservoirProfile::new(model, s.iter().map(ProfileSpec::to_profile).collect());
        Ok(Reservoirs {
            alpha: side(&self.alpha)?,
            beta: side(&self.beta)?,
        })
    }
}

pub fn parse_reservoirs(json: &str, model: &VelocityModel) -> Result<(ReservoirSpec, Reservoirs), IoError> {
    let spec: ReservoirSpec = serde_json::from_str(json)?;
    let built = spec.build(model)?;
    Ok((spec, built))
}

/// JSON sidecar written next to every binary snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub model: String,
    pub velocities: Vec<Vec<f64>>,
    pub dim: usize,
    pub n: usize,
    pub torus: bool,
    pub time: f64,
    #[serde(default)]
    pub theta: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub replica: Option<u64>,
}

impl SnapshotMeta {
    pub fn new(model: &VelocityModel, geom: &LatticeGeom, time: f64) -> Self {
        Self {
            model: model.name().to_string(),
            velocities: model.velocities().map(<[f64]>::to_vec).collect(),
            dim: geom.dim(),
            n: geom.n(),
            torus: geom.is_torus(),
            time,
            theta: None,
            seed: None,
            replica: None,
        }
    }
}

/// Binary layout: `MVXS`, format version byte, flags byte (bit 0 torus),
/// `d: u8`, `|𝒱|: u8`, `N: u32 LE`, then `sites · |𝒱|` bits packed
/// least-significant first, bit `site · |𝒱| + v`.
pub fn encode_snapshot(config: &Configuration) -> Vec<u8> {
    let g = config.geom();
    let nv = config.velocities();
    let bits = g.sites() * nv;
    let mut out = Vec::with_capacity(12 + bits.div_ceil(8));
    out.extend_from_slice(MAGIC);
    out.push(FORMAT_VERSION);
    out.push(u8::from(g.is_torus()));
    out.push(g.dim() as u8);
    out.push(nv as u8);
    out.extend_from_slice(&(g.n() as u32).to_le_bytes());
    let mut payload = vec![0u8; bits.div_ceil(8)];
    for site in 0..g.sites() {
        for v in 0..nv {
            if config.get(site, v) {
                let b = site * nv + v;
                payload[b / 8] |= 1 << (b % 8);
            }
        }
    }
    out.extend_from_slice(&payload);
    out
}

pub fn decode_snapshot(bytes: &[u8]) -> Result<Configuration, IoError> {
    let bad = |m: &str| IoError::Snapshot(m.to_string());
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(bad("missing header"));
    }
    if bytes[4] != FORMAT_VERSION {
        return Err(bad("unknown format version"));
    }
    let torus = bytes[5] & 1 == 1;
    let dim = bytes[6] as usize;
    let nv = bytes[7] as usize;
    let n = u32::from_le_bytes(bytes[8..12].try_into().expect("four bytes")) as usize;
    let geom = if torus {
        LatticeGeom::torus(dim, n)
    } else {
        LatticeGeom::slab(dim, n)
    }
    .map_err(|e| IoError::Snapshot(e.to_string()))?;
    if nv == 0 || nv > 64 {
        return Err(bad("velocity count out of range"));
    }
    let bits = geom.sites() * nv;
    let payload = &bytes[12..];
    if payload.len() != bits.div_ceil(8) {
        return Err(bad("payload length does not match the header"));
    }
    let words = (0..geom.sites())
        .map(|site| {
            (0..nv).fold(0u64, |w, v| {
                let b = site * nv + v;
                w | (u64::from(payload[b / 8] >> (b % 8) & 1) << v)
            })
        })
        .collect();
    Configuration::from_words(geom, nv, words).map_err(|e| IoError::Snapshot(e.to_string()))
}

/// Writes `<stem>.bin` and `<stem>.json`.
pub fn write_snapshot(stem: &Path, config: &Configuration, meta: &SnapshotMeta) -> Result<(), IoError> {
    write_file(&stem.with_extension("bin"), &encode_snapshot(config))?;
    write_file(
        &stem.with_extension("json"),
        serde_json::to_string_pretty(meta)?.as_bytes(),
    )
}

pub fn read_snapshot(stem: &Path) -> Result<(Configuration, SnapshotMeta), IoError> {
    let config = decode_snapshot(&read_file(&stem.with_extension("bin"))?)?;
    let meta: SnapshotMeta = serde_json::from_slice(&read_file(&stem.with_extension("json"))?)?;
    if meta.n != config.geom().n() || meta.dim != config.geom().dim() || meta.velocities.len() != config.velocities() {
        return Err(IoError::Snapshot("sidecar disagrees with the binary header".into()));
    }
    Ok((config, meta))
}

fn profile_header(dim: usize, components: usize) -> Vec<String> {
    (1..=dim)
        .map(|k| format!("u{k}"))
        .chain((0..components).map(|k| format!("I{k}")))
        .collect()
}

/// Columns `u1..ud, I0..Id`, one row per site.
pub fn write_profile_csv<W: Write>(out: W, profile: &EmpiricalProfile) -> Result<(), IoError> {
    let g = profile.geom();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(profile_header(g.dim(), profile.components()))?;
    for site in 0..g.sites() {
        let pos = g.position(site);
        let row: Vec<String> = pos[..g.dim()]
            .iter()
            .chain(profile.at(site))
            .map(|x| format!("{x:.17e}"))
            .collect();
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_profile_csv<R: Read>(input: R, geom: LatticeGeom, components: usize) -> Result<EmpiricalProfile, IoError> {
    let mut r = csv::Reader::from_reader(input);
    let mut values = Vec::with_capacity(geom.sites() * components);
    for rec in r.records() {
        let rec = rec?;
        for field in rec.iter().skip(geom.dim()) {
            values.push(
                field
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| IoError::Snapshot(e.to_string()))?,
            );
        }
    }
    EmpiricalProfile::from_values(geom, components, values).map_err(|e| IoError::Snapshot(e.to_string()))
}

/// Columns `u, I0..Id`, one row per grid node.
pub fn write_field_csv<W: Write>(out: W, field: &Field) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(profile_header(1, field.components()))?;
    for i in 0..field.nodes() {
        let row: Vec<String> = std::iter::once(field.u(i))
            .chain(field.at(i).iter().copied())
            .map(|x| format!("{x:.17e}"))
            .collect();
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_profile_csv(path: &Path, profile: &EmpiricalProfile) -> Result<(), IoError> {
    let mut buf = Vec::new();
    write_profile_csv(&mut buf, profile)?;
    write_file(path, &buf)
}

pub fn save_field_csv(path: &Path, field: &Field) -> Result<(), IoError> {
    let mut buf = Vec::new();
    write_field_csv(&mut buf, field)?;
    write_file(path, &buf)
}

/// Everything needed to rerun a command.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub rng: String,
    pub parameters: serde_json::Value,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, parameters: serde_json::Value) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            rng: mvex_core::rng::ALGORITHM.to_string(),
            parameters,
            outputs: Vec::new(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), IoError> {
        write_file(path, serde_json::to_string_pretty(self)?.as_bytes())
    }
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    write_file(path, serde_json::to_string_pretty(value)?.as_bytes())
}

pub fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, IoError> {
    Ok(serde_json::from_slice(&read_file(path)?)?)
}

pub fn create_dir(path: &Path) -> Result<(), IoError> {
    fs::create_dir_all(path).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })
}
