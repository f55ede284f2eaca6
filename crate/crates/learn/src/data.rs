//! Ground-truth datasets: generation, chunking, persistence and CSV export.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use cartmech_core::constraints::violation_rmse;
use cartmech_core::systems::{Flavor, System, SystemConfig};
use cartmech_core::Tolerances;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LearnError, Result};

pub const FORMAT: &str = "cartmech-dataset";
pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const PAYLOAD_FILE: &str = "data.bin";
/// Extra attempts with fresh initial conditions after a failed trajectory.
pub const MAX_RETRIES: u64 = 3;
/// Stored states must satisfy the constraints to this RMSE.
pub const MANIFOLD_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    fn salt(self) -> u64 {
        match self {
            Split::Train => 0,
            Split::Val => 0x5851_f42d_4c95_7f2d,
            Split::Test => 0x1405_7b7e_f767_814f,
        }
    }

    /// Training and validation sets keep one chunk per trajectory.
    pub fn is_chunked(self) -> bool {
        !matches!(self, Split::Test)
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(LearnError::Config(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub n_traj: usize,
    /// Output steps per ground-truth trajectory.
    pub steps: usize,
    pub dt: f64,
    /// States per training chunk.
    pub chunk_len: usize,
    pub rtol: f64,
    pub atol: f64,
    pub seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { n_traj: 800, steps: 100, dt: 0.03, chunk_len: 5, rtol: 1e-7, atol: 1e-9, seed: 0 }
    }
}

impl DataConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(LearnError::Config(m.into()));
        if self.steps == 0 {
            return bad("data.steps must be positive");
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("data.dt must be positive");
        }
        if self.chunk_len < 2 || self.chunk_len > self.steps + 1 {
            return bad("data.chunk_len must be between 2 and steps + 1");
        }
        if !(self.rtol > 0.0) || !(self.atol > 0.0) {
            return bad("data.rtol and data.atol must be positive");
        }
        Ok(())
    }

    pub fn tolerances(&self) -> Tolerances {
        Tolerances::new(self.rtol, self.atol)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub system: SystemConfig,
    pub split: Split,
    pub seed: u64,
    pub dt: f64,
    pub steps: usize,
    pub chunk_len: usize,
    pub rtol: f64,
    pub atol: f64,
    /// Number of stored sequences.
    pub count: usize,
    /// States per sequence.
    pub length: usize,
    /// Entries per state, `2dn`.
    pub dim: usize,
    /// Step index in the source trajectory where each sequence starts.
    pub starts: Vec<usize>,
    /// Initial conditions that had to be redrawn.
    pub resampled: usize,
}

/// Sequences of Cartesian `(x, ẋ)` states stored as `(count, length, dim)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub manifest: Manifest,
    pub states: Vec<f64>,
}

/// Random stream for attempt `attempt` of trajectory `index`.
fn trajectory_rng(seed: u64, split: Split, index: usize, attempt: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ split.salt());
    rng.set_stream(index as u64 * (MAX_RETRIES + 1) + attempt);
    rng
}

fn simulate_one(system: &System, cfg: &DataConfig, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>> {
    let z0 = system.sample(rng)?;
    let times: Vec<f64> = (0..=cfg.steps).map(|i| i as f64 * cfg.dt).collect();
    let traj = system.simulate(&z0, &times, &cfg.tolerances(), Flavor::Hamiltonian)?;
    let dn = system.dn();
    let worst = violation_rmse(&system.ctx.topology, traj.states.iter().map(|s| &s[..dn]))?
        .into_iter()
        .fold(0.0, f64::max);
    if !(worst < MANIFOLD_TOLERANCE) {
        return Err(LearnError::Data(format!("trajectory left the constraint manifold (RMSE {worst:e})")));
    }
    Ok(traj.states)
}

impl Dataset {
    /// Generates `count` sequences. Each trajectory has its own random stream, so the
    /// result does not depend on how work is scheduled across threads.
    pub fn generate(system_config: &SystemConfig, cfg: &DataConfig, split: Split, count: usize) -> Result<Self> {
        cfg.validate()?;
        let system = System::build(system_config)?;
        let length = if split.is_chunked() { cfg.chunk_len } else { cfg.steps + 1 };
        let chunks = (cfg.steps + 1) / cfg.chunk_len;
        let results: Vec<Result<(Vec<Vec<f64>>, usize, usize)>> = (0..count)
            .into_par_iter()
            .map(|i| {
                let mut last = None;
                for attempt in 0..=MAX_RETRIES {
                    let mut rng = trajectory_rng(cfg.seed, split, i, attempt);
                    match simulate_one(&system, cfg, &mut rng) {
                        Ok(states) => {
                            if split.is_chunked() {
                                let k = rng.random_range(0..chunks);
                                let start = k * cfg.chunk_len;
                                return Ok((states[start..start + cfg.chunk_len].to_vec(), start, attempt as usize));
                            }
                            return Ok((states, 0, attempt as usize));
                        }
                        Err(e) => {
                            log::warn!("trajectory {i} attempt {attempt} failed: {e}; resampling");
                            last = Some(e);
                        }
                    }
                }
                Err(last.expect("at least one attempt"))
            })
            .collect();
        let dim = 2 * system.dn();
        let mut states = Vec::with_capacity(count * length * dim);
        let mut starts = Vec::with_capacity(count);
        let mut resampled = 0;
        for r in results {
            let (seq, start, retries) = r?;
            seq.iter().for_each(|s| states.extend_from_slice(s));
            starts.push(start);
            resampled += retries;
        }
        Ok(Self {
            manifest: Manifest {
                format: FORMAT.into(),
                version: FORMAT_VERSION,
                system: system_config.clone(),
                split,
                seed: cfg.seed,
                dt: cfg.dt,
                steps: cfg.steps,
                chunk_len: cfg.chunk_len,
                rtol: cfg.rtol,
                atol: cfg.atol,
                count,
                length,
                dim,
                starts,
                resampled,
            },
            states,
        })
    }

    pub fn len(&self) -> usize {
        self.manifest.count
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.manifest.dim
    }

    /// States per sequence.
    pub fn length(&self) -> usize {
        self.manifest.length
    }

    /// Times of one sequence relative to its first state.
    pub fn times(&self) -> Vec<f64> {
        (0..self.length()).map(|i| i as f64 * self.manifest.dt).collect()
    }

    pub fn state(&self, seq: usize, t: usize) -> &[f64] {
        let (l, d) = (self.length(), self.dim());
        &self.states[(seq * l + t) * d..(seq * l + t + 1) * d]
    }

    pub fn sequence(&self, seq: usize) -> Vec<Vec<f64>> {
        (0..self.length()).map(|t| self.state(seq, t).to_vec()).collect()
    }

    /// The first `n` sequences, so growing `n` gives nested training sets.
    pub fn take(&self, n: usize) -> Result<Self> {
        if n > self.len() {
            return Err(LearnError::Data(format!("requested {n} sequences from a dataset of {}", self.len())));
        }
        let mut manifest = self.manifest.clone();
        manifest.count = n;
        manifest.starts.truncate(n);
        Ok(Self { manifest, states: self.states[..n * self.length() * self.dim()].to_vec() })
    }

    pub fn manifest_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.manifest)? + "\n")
    }

    pub fn payload(&self) -> Vec<u8> {
        self.states.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        fs::write(dir.join(MANIFEST_FILE), self.manifest_json()?)?;
        fs::write(dir.join(PAYLOAD_FILE), self.payload())?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        let version = value.get("version").and_then(serde_json::Value::as_u64);
        if value.get("format").and_then(serde_json::Value::as_str) != Some(FORMAT) {
            return Err(LearnError::Data(format!("{} is not a dataset manifest", dir.display())));
        }
        if version != Some(u64::from(FORMAT_VERSION)) {
            return Err(LearnError::Version {
                found: version.map_or(0, |v| v as u32),
                expected: FORMAT_VERSION,
            });
        }
        let manifest: Manifest = serde_json::from_value(value)?;
        let bytes = fs::read(dir.join(PAYLOAD_FILE))?;
        let expected = manifest.count * manifest.length * manifest.dim * 8;
        if bytes.len() != expected || manifest.starts.len() != manifest.count {
            return Err(LearnError::Data(format!(
                "payload has {} bytes, manifest implies {expected}",
                bytes.len()
            )));
        }
        let states = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        Ok(Self { manifest, states })
    }
}

/// CSV with header `t, x_k_j…, v_k_j…` (coordinate `k` of point `j`) and one row per state.
pub fn trajectory_csv(times: &[f64], states: &[Vec<f64>], d: usize) -> Result<String> {
    if times.len() != states.len() {
        return Err(LearnError::Length(format!("{} times for {} states", times.len(), states.len())));
    }
    let dim = states.first().map_or(0, Vec::len);
    let n = dim / 2 / d.max(1);
    let mut out = String::from("t");
    for prefix in ["x", "v"] {
        for j in 0..n {
            for k in 0..d {
                write!(out, ",{prefix}_{k}_{j}").expect("string write");
            }
        }
    }
    out.push('\n');
    for (t, s) in times.iter().zip(states) {
        write!(out, "{t}").expect("string write");
        for v in s {
            write!(out, ",{v}").expect("string write");
        }
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> DataConfig {
        DataConfig { n_traj: 3, steps: 10, dt: 0.05, chunk_len: 5, seed: 7, ..DataConfig::default() }
    }

    #[test]
    fn chunked_and_full_shapes() {
        let sys = SystemConfig::n_pendulum(2);
        let train = Dataset::generate(&sys, &small(), Split::Train, 3).unwrap();
        assert_eq!((train.len(), train.length(), train.dim()), (3, 5, 8));
        assert!(train.manifest.starts.iter().all(|s| s % 5 == 0 && *s <= 5));
        let test = Dataset::generate(&sys, &small(), Split::Test, 2).unwrap();
        assert_eq!(test.length(), 11);
    }

    #[test]
    fn same_seed_is_bit_identical_and_nested() {
        let sys = SystemConfig::n_pendulum(2);
        let a = Dataset::generate(&sys, &small(), Split::Train, 3).unwrap();
        let b = Dataset::generate(&sys, &small(), Split::Train, 3).unwrap();
        assert_eq!(a.payload(), b.payload());
        let fewer = Dataset::generate(&sys, &small(), Split::Train, 2).unwrap();
        assert_eq!(fewer.states, a.take(2).unwrap().states);
    }

    #[test]
    fn save_load_round_trip_and_version_check() {
        let dir = tempfile::tempdir().unwrap();
        let sys = SystemConfig::n_pendulum(1);
        let a = Dataset::generate(&sys, &small(), Split::Test, 2).unwrap();
        a.save(dir.path()).unwrap();
        let b = Dataset::load(dir.path()).unwrap();
        assert_eq!(a, b);
        let again = tempfile::tempdir().unwrap();
        b.save(again.path()).unwrap();
        for f in [MANIFEST_FILE, PAYLOAD_FILE] {
            assert_eq!(fs::read(dir.path().join(f)).unwrap(), fs::read(again.path().join(f)).unwrap());
        }
        let text = fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap();
        fs::write(dir.path().join(MANIFEST_FILE), text.replace("\"version\": 1", "\"version\": 9")).unwrap();
        assert!(matches!(Dataset::load(dir.path()), Err(LearnError::Version { found: 9, .. })));
    }

    #[test]
    fn csv_has_one_row_per_state() {
        let sys = SystemConfig::n_pendulum(2);
        let a = Dataset::generate(&sys, &small(), Split::Test, 1).unwrap();
        let csv = trajectory_csv(&a.times(), &a.sequence(0), 2).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 1 + small().steps + 1);
        assert_eq!(lines[0], "t,x_0_0,x_1_0,x_0_1,x_1_1,v_0_0,v_1_0,v_0_1,v_1_1");
    }
}
