//! Corpus on disk: a JSON manifest plus one gzip-compressed record file per
//! environment, the lexicon text format and the TOML run configuration.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use langcost_core::controller::ControllerConfig;
use langcost_core::costmap::{CostMap, Mask};
use langcost_core::dataset::{
    assemble, build_env, Corpus, EnvBundle, CorpusConfig, DatasetError, DatasetRecord, RecordOrigin, Split, TaskEntry,
};
use langcost_core::grounding::{GroundingError, Lexicon};
use langcost_core::world::WorldError;
use langcost_core::{Environment, Grid, GridSpec, ObjectInstance, RobotState, Vec2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::EvalConfig;
use crate::service::ServiceConfig;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;
pub const RECORD_MAGIC: [u8; 4] = *b"LCRD";
pub const RECORD_VERSION: u8 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("bad record file: {0}")]
    Format(String),
    #[error("unsupported version {found}")]
    Version { found: u32 },
    #[error("corpus was built with lexicon {expected:016x}, loaded lexicon is {found:016x}")]
    LexiconMismatch { expected: u64, found: u64 },
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Grounding(#[from] GroundingError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

/// Serialized scene; the occupancy grids are rebuilt on load.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentRecord {
    pub id: u32,
    pub seed: u64,
    pub spec: GridSpec,
    pub objects: Vec<ObjectInstance>,
}

impl From<&Environment> for EnvironmentRecord {
    fn from(env: &Environment) -> Self {
        EnvironmentRecord { id: env.id, seed: env.seed, spec: env.spec, objects: env.objects.clone() }
    }
}

impl EnvironmentRecord {
    pub fn into_environment(self) -> Result<Environment, WorldError> {
        Environment::new(self.id, self.seed, self.spec, self.objects)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordFileEntry {
    pub env_id: u32,
    pub file: String,
    pub records: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub config: CorpusConfig,
    pub controller: ControllerConfig,
    pub lexicon_digest: u64,
    pub environments: Vec<EnvironmentRecord>,
    pub tasks: Vec<TaskEntry>,
    pub split: Split,
    pub record_files: Vec<RecordFileEntry>,
}

impl Manifest {
    pub fn from_corpus(corpus: &Corpus) -> Self {
        Manifest {
            version: MANIFEST_VERSION,
            config: corpus.config,
            controller: corpus.controller,
            lexicon_digest: corpus.lexicon_digest,
            environments: corpus.envs.iter().map(EnvironmentRecord::from).collect(),
            tasks: corpus.tasks.clone(),
            split: corpus.split.clone(),
            record_files: corpus
                .record_counts
                .iter()
                .map(|&(env_id, records)| RecordFileEntry { env_id, file: record_file_name(env_id), records })
                .collect(),
        }
    }

    pub fn into_corpus(self) -> Result<Corpus, IoError> {
        if self.version != MANIFEST_VERSION {
            return Err(IoError::Version { found: self.version });
        }
        let envs = self.environments.into_iter().map(|e| e.into_environment()).collect::<Result<_, _>>()?;
        Ok(Corpus {
            config: self.config,
            controller: self.controller,
            lexicon_digest: self.lexicon_digest,
            envs,
            tasks: self.tasks,
            split: self.split,
            record_counts: self.record_files.iter().map(|r| (r.env_id, r.records)).collect(),
        })
    }
}

pub fn record_file_name(env_id: u32) -> String {
    format!("env-{env_id:05}.lcr.gz")
}

pub fn write_manifest(dir: &Path, corpus: &Corpus) -> Result<PathBuf, IoError> {
    let path = dir.join(MANIFEST_FILE);
    let w = BufWriter::new(File::create(&path)?);
    serde_json::to_writer_pretty(w, &Manifest::from_corpus(corpus))?;
    Ok(path)
}

/// Loads a corpus index. When a lexicon is given its digest must match the
/// one the corpus was built with.
pub fn load_corpus(dir: &Path, lexicon: Option<&Lexicon>) -> Result<Corpus, IoError> {
    let r = BufReader::new(File::open(dir.join(MANIFEST_FILE))?);
    let manifest: Manifest = serde_json::from_reader(r)?;
    if let Some(lex) = lexicon {
        if lex.digest() != manifest.lexicon_digest {
            return Err(IoError::LexiconMismatch { expected: manifest.lexicon_digest, found: lex.digest() });
        }
    }
    manifest.into_corpus()
}

/// Generates a corpus in parallel, writing each environment's records to
/// its own file as soon as it is built, then the manifest.
pub fn generate_to_dir(
    cfg: &CorpusConfig,
    controller: &ControllerConfig,
    lexicon: &Lexicon,
    dir: &Path,
) -> Result<Corpus, IoError> {
    fs::create_dir_all(dir)?;
    let built: Vec<(_, usize)> = (0..cfg.n_envs)
        .into_par_iter()
        .map(|id| -> Result<_, IoError> {
            let mut bundle = build_env(id, cfg, lexicon, controller)?;
            save_records(&dir.join(record_file_name(id)), &bundle.records)?;
            let count = bundle.records.len();
            bundle.records = Vec::new();
            Ok((bundle, count))
        })
        .collect::<Result<_, _>>()?;
    let corpus = finish(cfg, controller, lexicon, built)?;
    write_manifest(dir, &corpus)?;
    Ok(corpus)
}

/// Generates a corpus in memory. Records are counted and dropped.
pub fn generate_in_memory(cfg: &CorpusConfig, controller: &ControllerConfig, lexicon: &Lexicon) -> Result<Corpus, IoError> {
    let built: Vec<_> = (0..cfg.n_envs)
        .into_par_iter()
        .map(|id| {
            let mut bundle = build_env(id, cfg, lexicon, controller)?;
            let count = bundle.records.len();
            bundle.records = Vec::new();
            Ok((bundle, count))
        })
        .collect::<Result<_, IoError>>()?;
    finish(cfg, controller, lexicon, built)
}

fn finish(
    cfg: &CorpusConfig,
    controller: &ControllerConfig,
    lexicon: &Lexicon,
    built: Vec<(EnvBundle, usize)>,
) -> Result<Corpus, IoError> {
    let mut counts: Vec<(u32, usize)> = built.iter().map(|(b, n)| (b.env.id, *n)).collect();
    counts.sort_unstable();
    let mut corpus = assemble(cfg, controller, lexicon, built.into_iter().map(|(b, _)| b), |_, _| {})?;
    corpus.record_counts = counts;
    Ok(corpus)
}

fn origin_code(origin: RecordOrigin) -> u8 {
    match origin {
        RecordOrigin::Demo => 0,
        RecordOrigin::SpecifiedMap => 1,
    }
}

fn put_vec(out: &mut Vec<u8>, v: Vec2) {
    out.extend_from_slice(&v.x.to_le_bytes());
    out.extend_from_slice(&v.y.to_le_bytes());
}

/// Writes records in the binary layout:
///
/// ```text
/// magic "LCRD" | version u8 | count u32
/// per record:
///   width u32 | height u32 | origin u8 | observation u32 | text_len u32
///   | q f64×2 | qd f64×2 | qdd f64×2
///   text (utf-8) | position f64×n | velocity u8×n | mask bits, row-major, lsb first
/// ```
///
/// All integers and floats are little-endian.
pub fn write_records<W: Write>(mut w: W, records: &[DatasetRecord]) -> std::io::Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(&RECORD_MAGIC);
    buf.push(RECORD_VERSION);
    buf.extend_from_slice(&(records.len() as u32).to_le_bytes());
    for r in records {
        let (width, height) = (r.cost.width(), r.cost.height());
        buf.extend_from_slice(&(width as u32).to_le_bytes());
        buf.extend_from_slice(&(height as u32).to_le_bytes());
        buf.push(origin_code(r.origin));
        buf.extend_from_slice(&r.observation_ref.to_le_bytes());
        buf.extend_from_slice(&(r.instruction.len() as u32).to_le_bytes());
        put_vec(&mut buf, r.state.q);
        put_vec(&mut buf, r.state.qd);
        put_vec(&mut buf, r.state.qdd);
        buf.extend_from_slice(r.instruction.as_bytes());
        for v in r.cost.position.as_slice() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.extend_from_slice(r.cost.velocity.as_slice());
        let mut bits = vec![0u8; (width * height).div_ceil(8)];
        for (i, &m) in r.mask.grid().as_slice().iter().enumerate() {
            if m {
                bits[i / 8] |= 1 << (i % 8);
            }
        }
        buf.extend_from_slice(&bits);
        w.write_all(&buf)?;
        buf.clear();
    }
    w.write_all(&buf)
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IoError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.data.len());
        let end = end.ok_or_else(|| IoError::Format(format!("truncated at byte {}", self.pos)))?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, IoError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, IoError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, IoError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn vec2(&mut self) -> Result<Vec2, IoError> {
        Ok(Vec2::new(self.f64()?, self.f64()?))
    }
}

pub fn read_records<R: Read>(mut r: R) -> Result<Vec<DatasetRecord>, IoError> {
    let mut data = Vec::new();
    r.read_to_end(&mut data)?;
    let mut c = Cursor { data: &data, pos: 0 };
    if c.take(4)? != RECORD_MAGIC {
        return Err(IoError::Format("bad magic".into()));
    }
    let version = c.u8()?;
    if version != RECORD_VERSION {
        return Err(IoError::Version { found: version as u32 });
    }
    let count = c.u32()? as usize;
    let mut out = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let width = c.u32()? as usize;
        let height = c.u32()? as usize;
        let origin = match c.u8()? {
            0 => RecordOrigin::Demo,
            1 => RecordOrigin::SpecifiedMap,
            other => return Err(IoError::Format(format!("unknown origin {other}"))),
        };
        let observation_ref = c.u32()?;
        let text_len = c.u32()? as usize;
        let state = RobotState { q: c.vec2()?, qd: c.vec2()?, qdd: c.vec2()? };
        let instruction = String::from_utf8(c.take(text_len)?.to_vec())
            .map_err(|_| IoError::Format("instruction is not utf-8".into()))?;
        let n = width.checked_mul(height).ok_or_else(|| IoError::Format("grid too large".into()))?;
        let position: Vec<f64> = c
            .take(n.checked_mul(8).ok_or_else(|| IoError::Format("grid too large".into()))?)?
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let velocity = c.take(n)?.to_vec();
        let bits = c.take(n.div_ceil(8))?;
        let mask: Vec<bool> = (0..n).map(|i| bits[i / 8] & (1 << (i % 8)) != 0).collect();
        let cost = CostMap::new(
            Grid::from_vec(width, height, position).expect("sized"),
            Grid::from_vec(width, height, velocity).expect("sized"),
        )
        .map_err(|e| IoError::Format(e.to_string()))?;
        out.push(DatasetRecord {
            cost,
            mask: Mask(Grid::from_vec(width, height, mask).expect("sized")),
            instruction,
            observation_ref,
            state,
            origin,
        });
    }
    if c.pos != data.len() {
        return Err(IoError::Format(format!("{} trailing bytes", data.len() - c.pos)));
    }
    Ok(out)
}

pub fn save_records(path: &Path, records: &[DatasetRecord]) -> Result<(), IoError> {
    let mut gz = GzEncoder::new(BufWriter::new(File::create(path)?), Compression::fast());
    write_records(&mut gz, records)?;
    gz.finish()?.flush()?;
    Ok(())
}

pub fn load_records(path: &Path) -> Result<Vec<DatasetRecord>, IoError> {
    read_records(GzDecoder::new(BufReader::new(File::open(path)?)))
}

pub fn load_lexicon(path: &Path) -> Result<Lexicon, IoError> {
    Ok(Lexicon::parse(&fs::read_to_string(path)?)?)
}

/// Everything a run can be configured with; missing tables fall back to
/// the defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub corpus: CorpusConfig,
    pub controller: ControllerConfig,
    pub eval: EvalConfig,
    pub service: ServiceConfig,
}

pub fn load_config(path: &Path) -> Result<Config, IoError> {
    Ok(toml::from_str(&fs::read_to_string(path)?)?)
}
