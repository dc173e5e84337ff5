//! Supervised transition datasets: extraction from trajectories, the
//! observation treatments (additive Gaussian noise, temporal sparsity,
//! equilibrium-restricted availability), and versioned binary persistence.
//!
//! A dataset keeps its source snapshots alongside the extracted samples;
//! the noise and equilibrium treatments are defined on observations, so they
//! need the snapshots, not just the samples.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::grid::GridState;
use crate::io::{decoder, read_container, write_container, Encoder};
use crate::seeding::derive_seed;
use crate::solver::{SimParams, Trajectory};

/// One training record: a cell's state, its four neighbors' states, and the
/// observed change over one sample interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionSample {
    /// `(u, v)` of the cell at time `t`.
    pub cell: [f64; 2],
    /// (up, bottom, left, right) x (u, v) at time `t`.
    pub neighbors: [f64; 8],
    /// `X(t+1) - X(t)` over one sample interval.
    pub delta: [f64; 2],
}

/// Where a sample came from: simulation index, snapshot-pair index, flat cell
/// index. Kept so treatments can be chained without resurrecting dropped
/// samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleKey {
    pub sim: u32,
    pub pair: u32,
    pub cell: u32,
}

/// Whether temporal subsampling drops individual transition samples or whole
/// snapshot pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SparsityMode {
    #[default]
    Samples,
    Snapshots,
}

/// Everything needed to regenerate a dataset from scratch.
#[derive(Debug, Clone, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct Provenance {
    /// Free-text description of the source.
    pub description: String,
    /// Solver parameters used to generate the sources, when simulated here.
    pub sim_params: Option<SimParams>,
    /// Per-simulation RNG seeds for the initial conditions.
    pub sim_seeds: Vec<u64>,
    /// Simulated duration in seconds.
    pub duration: Option<f64>,
    /// Solver steps between stored snapshots.
    pub sample_every: Option<u64>,
    /// Uniform initial-condition range.
    pub init_lo: Option<f64>,
    pub init_hi: Option<f64>,
    /// Noise treatment, if applied.
    pub snr_db: Option<f64>,
    pub noise_seed: Option<u64>,
    /// Temporal sparsity treatment, if applied.
    pub sparsity_fraction: Option<f64>,
    pub sparsity_seed: Option<u64>,
    pub sparsity_mode: Option<SparsityMode>,
    /// Equilibrium-restriction treatment, if applied.
    pub equilibrium_threshold: Option<f64>,
}

/// A set of transition samples plus the snapshots they were extracted from.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<TransitionSample>,
    keys: Vec<SampleKey>,
    sources: Vec<Trajectory>,
    sample_interval: f64,
    provenance: Provenance,
}

impl Dataset {
    pub fn samples(&self) -> &[TransitionSample] {
        &self.samples
    }

    pub fn keys(&self) -> &[SampleKey] {
        &self.keys
    }

    pub fn sources(&self) -> &[Trajectory] {
        &self.sources
    }

    pub fn sample_interval(&self) -> f64 {
        self.sample_interval
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn provenance_mut(&mut self) -> &mut Provenance {
        &mut self.provenance
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Mean magnitude of all snapshot values (both species pooled) in the
    /// source observations.
    pub fn mean_signal_magnitude(&self) -> Result<f64> {
        let mut sum = 0.0;
        let mut count = 0usize;
        for traj in &self.sources {
            for snap in &traj.snapshots {
                sum += snap.u.values().iter().map(|x| x.abs()).sum::<f64>();
                sum += snap.v.values().iter().map(|x| x.abs()).sum::<f64>();
                count += 2 * snap.n_cells();
            }
        }
        if count == 0 {
            return Err(Error::domain("mean_signal_magnitude: dataset has no source snapshots"));
        }
        Ok(sum / count as f64)
    }

    /// Mean per-cell, per-species `|delta|` of each snapshot pair, keyed by
    /// `(sim, pair)`.
    pub fn pair_mean_changes(&self) -> Vec<((u32, u32), f64)> {
        let mut out = Vec::new();
        for (s, traj) in self.sources.iter().enumerate() {
            for p in 0..traj.snapshots.len().saturating_sub(1) {
                let change =
                    crate::solver::mean_abs_change(&traj.snapshots[p], &traj.snapshots[p + 1]);
                out.push(((s as u32, p as u32), change));
            }
        }
        out
    }

    /// Additive white Gaussian noise treatment: perturbs every source
    /// snapshot value with `N(0, sigma^2)` where
    /// `sigma = mean_signal * 10^(-snr_db / 10)`, then re-extracts the
    /// retained samples from the noisy observations.
    pub fn add_awgn(&self, snr_db: f64, seed: u64) -> Result<Dataset> {
        if self.samples.is_empty() {
            return Err(Error::domain("add_awgn: dataset is empty"));
        }
        let sigma = self.mean_signal_magnitude()? * 10f64.powf(-snr_db / 10.0);
        let normal = Normal::new(0.0, sigma)
            .map_err(|e| Error::domain(format!("add_awgn: bad sigma {sigma}: {e}")))?;

        let mut noisy_sources = self.sources.clone();
        for (s, traj) in noisy_sources.iter_mut().enumerate() {
            for (t, snap) in traj.snapshots.iter_mut().enumerate() {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(derive_seed(seed, &[s as u64, t as u64]));
                for x in snap.u.values_mut() {
                    *x += normal.sample(&mut rng);
                }
                for x in snap.v.values_mut() {
                    *x += normal.sample(&mut rng);
                }
            }
        }

        let samples = extract_samples(&noisy_sources, &self.keys)?;
        let mut provenance = self.provenance.clone();
        provenance.snr_db = Some(snr_db);
        provenance.noise_seed = Some(seed);
        Ok(Dataset {
            samples,
            keys: self.keys.clone(),
            sources: noisy_sources,
            sample_interval: self.sample_interval,
            provenance,
        })
    }

    /// Keep a seeded uniform subset of `round(fraction * len)` samples
    /// (or snapshot pairs, in [`SparsityMode::Snapshots`]), order-preserving.
    pub fn temporal_subsample(
        &self,
        fraction: f64,
        seed: u64,
        mode: SparsityMode,
    ) -> Result<Dataset> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::domain(format!(
                "temporal_subsample: fraction must be in (0, 1], got {fraction}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let keep: Vec<usize> = match mode {
            SparsityMode::Samples => {
                let k = (fraction * self.samples.len() as f64).round() as usize;
                let mut idx: Vec<usize> = (0..self.samples.len()).collect();
                idx.shuffle(&mut rng);
                idx.truncate(k);
                idx.sort_unstable();
                idx
            }
            SparsityMode::Snapshots => {
                let mut pairs: Vec<(u32, u32)> =
                    self.keys.iter().map(|k| (k.sim, k.pair)).collect();
                pairs.sort_unstable();
                pairs.dedup();
                let k = (fraction * pairs.len() as f64).round() as usize;
                pairs.shuffle(&mut rng);
                pairs.truncate(k);
                let kept: std::collections::HashSet<(u32, u32)> = pairs.into_iter().collect();
                (0..self.samples.len())
                    .filter(|&i| kept.contains(&(self.keys[i].sim, self.keys[i].pair)))
                    .collect()
            }
        };

        let mut provenance = self.provenance.clone();
        provenance.sparsity_fraction = Some(fraction);
        provenance.sparsity_seed = Some(seed);
        provenance.sparsity_mode = Some(mode);
        Ok(Dataset {
            samples: keep.iter().map(|&i| self.samples[i]).collect(),
            keys: keep.iter().map(|&i| self.keys[i]).collect(),
            sources: self.sources.clone(),
            sample_interval: self.sample_interval,
            provenance,
        })
    }

    /// Keep only samples from snapshot pairs whose mean per-cell, per-species
    /// change is at most `max_mean_change` (training restricted toward
    /// near-equilibrium dynamics).
    pub fn equilibrium_filter(&self, max_mean_change: f64) -> Result<Dataset> {
        if max_mean_change <= 0.0 {
            return Err(Error::domain(format!(
                "equilibrium_filter: threshold must be positive, got {max_mean_change}"
            )));
        }
        let passing: std::collections::HashSet<(u32, u32)> = self
            .pair_mean_changes()
            .into_iter()
            .filter(|&(_, change)| change <= max_mean_change)
            .map(|(key, _)| key)
            .collect();
        let keep: Vec<usize> = (0..self.samples.len())
            .filter(|&i| passing.contains(&(self.keys[i].sim, self.keys[i].pair)))
            .collect();
        if keep.is_empty() {
            return Err(Error::EmptyDataset(format!(
                "equilibrium_filter: no snapshot pair has mean change <= {max_mean_change}"
            )));
        }
        let mut provenance = self.provenance.clone();
        provenance.equilibrium_threshold = Some(max_mean_change);
        Ok(Dataset {
            samples: keep.iter().map(|&i| self.samples[i]).collect(),
            keys: keep.iter().map(|&i| self.keys[i]).collect(),
            sources: self.sources.clone(),
            sample_interval: self.sample_interval,
            provenance,
        })
    }

    /// Variance of the delta targets, pooled over samples and species.
    pub fn delta_variance(&self) -> f64 {
        let n = (self.samples.len() * 2) as f64;
        if n == 0.0 {
            return 0.0;
        }
        let mean: f64 =
            self.samples.iter().map(|s| s.delta[0] + s.delta[1]).sum::<f64>() / n;
        self.samples
            .iter()
            .map(|s| {
                let d0 = s.delta[0] - mean;
                let d1 = s.delta[1] - mean;
                d0 * d0 + d1 * d1
            })
            .sum::<f64>()
            / n
    }

    /// Largest `|delta|` component over the whole dataset.
    pub fn max_abs_delta(&self) -> f64 {
        self.samples
            .iter()
            .flat_map(|s| s.delta.iter().map(|d| d.abs()))
            .fold(0.0, f64::max)
    }
}

fn extract_one(traj: &Trajectory, pair: usize, cell: usize) -> TransitionSample {
    let cur = &traj.snapshots[pair];
    let next = &traj.snapshots[pair + 1];
    let nc = cur.n_cols();
    let nr = cur.n_rows();
    let i = cell / nc;
    let j = cell % nc;
    let up = if i == 0 { nr - 1 } else { i - 1 };
    let down = if i + 1 == nr { 0 } else { i + 1 };
    let left = if j == 0 { nc - 1 } else { j - 1 };
    let right = if j + 1 == nc { 0 } else { j + 1 };
    let at = |s: &GridState, r: usize, c: usize| [s.u.get(r, c), s.v.get(r, c)];
    let cell_uv = at(cur, i, j);
    let next_uv = at(next, i, j);
    let n_up = at(cur, up, j);
    let n_down = at(cur, down, j);
    let n_left = at(cur, i, left);
    let n_right = at(cur, i, right);
    TransitionSample {
        cell: cell_uv,
        neighbors: [
            n_up[0], n_up[1], n_down[0], n_down[1], n_left[0], n_left[1], n_right[0], n_right[1],
        ],
        delta: [next_uv[0] - cell_uv[0], next_uv[1] - cell_uv[1]],
    }
}

fn extract_samples(sources: &[Trajectory], keys: &[SampleKey]) -> Result<Vec<TransitionSample>> {
    keys.iter()
        .map(|k| {
            let traj = sources
                .get(k.sim as usize)
                .ok_or_else(|| Error::domain("sample key references missing simulation"))?;
            if k.pair as usize + 1 >= traj.snapshots.len()
                || k.cell as usize >= traj.snapshots[0].n_cells()
            {
                return Err(Error::domain("sample key out of range"));
            }
            Ok(extract_one(traj, k.pair as usize, k.cell as usize))
        })
        .collect()
}

/// Build the full transition dataset: one sample per (cell, consecutive
/// snapshot pair), ordered by simulation, then pair, then row-major cell.
pub fn build_transition_dataset(trajs: Vec<Trajectory>) -> Result<Dataset> {
    if trajs.is_empty() {
        return Err(Error::domain("build_transition_dataset: no trajectories"));
    }
    let (nr, nc) = (trajs[0].n_rows(), trajs[0].n_cols());
    let interval = trajs[0].sample_interval;
    for t in &trajs {
        if t.n_rows() != nr || t.n_cols() != nc {
            return Err(Error::domain(format!(
                "mismatched grid sizes: {}x{} vs {nr}x{nc}",
                t.n_rows(),
                t.n_cols()
            )));
        }
        if (t.sample_interval - interval).abs() > 1e-12 {
            return Err(Error::domain("mismatched sample intervals across trajectories"));
        }
    }
    let n_cells = nr * nc;
    let total: usize =
        trajs.iter().map(|t| t.snapshots.len().saturating_sub(1) * n_cells).sum();
    let mut samples = Vec::with_capacity(total);
    let mut keys = Vec::with_capacity(total);
    for (s, traj) in trajs.iter().enumerate() {
        for pair in 0..traj.snapshots.len().saturating_sub(1) {
            for cell in 0..n_cells {
                samples.push(extract_one(traj, pair, cell));
                keys.push(SampleKey { sim: s as u32, pair: pair as u32, cell: cell as u32 });
            }
        }
    }
    Ok(Dataset {
        samples,
        keys,
        sources: trajs,
        sample_interval: interval,
        provenance: Provenance::default(),
    })
}

const DATASET_MAGIC: &[u8; 4] = b"DRSD";
const DATASET_VERSION: u16 = 1;

fn encode_provenance(enc: &mut Encoder, p: &Provenance) {
    enc.put_str(&p.description);
    match &p.sim_params {
        Some(sp) => {
            enc.put_u8(1);
            for v in [sp.a, sp.b, sp.tau, sp.k, sp.dx, sp.dt] {
                enc.put_f64(v);
            }
        }
        None => enc.put_u8(0),
    }
    enc.put_u64(p.sim_seeds.len() as u64);
    for &s in &p.sim_seeds {
        enc.put_u64(s);
    }
    enc.put_opt_f64(p.duration);
    enc.put_opt_u64(p.sample_every);
    enc.put_opt_f64(p.init_lo);
    enc.put_opt_f64(p.init_hi);
    enc.put_opt_f64(p.snr_db);
    enc.put_opt_u64(p.noise_seed);
    enc.put_opt_f64(p.sparsity_fraction);
    enc.put_opt_u64(p.sparsity_seed);
    match p.sparsity_mode {
        None => enc.put_u8(0),
        Some(SparsityMode::Samples) => enc.put_u8(1),
        Some(SparsityMode::Snapshots) => enc.put_u8(2),
    }
    enc.put_opt_f64(p.equilibrium_threshold);
}

fn decode_provenance(dec: &mut crate::io::Decoder) -> Result<Provenance> {
    let description = dec.string()?;
    let sim_params = if dec.u8()? == 1 {
        let a = dec.f64()?;
        let b = dec.f64()?;
        let tau = dec.f64()?;
        let k = dec.f64()?;
        let dx = dec.f64()?;
        let dt = dec.f64()?;
        Some(SimParams::new(a, b, tau, k, dx, dt).map_err(|_| dec.invalid())?)
    } else {
        None
    };
    let n_seeds = dec.u64()? as usize;
    let sim_seeds = (0..n_seeds).map(|_| dec.u64()).collect::<Result<Vec<_>>>()?;
    Ok(Provenance {
        description,
        sim_params,
        sim_seeds,
        duration: dec.opt_f64()?,
        sample_every: dec.opt_u64()?,
        init_lo: dec.opt_f64()?,
        init_hi: dec.opt_f64()?,
        snr_db: dec.opt_f64()?,
        noise_seed: dec.opt_u64()?,
        sparsity_fraction: dec.opt_f64()?,
        sparsity_seed: dec.opt_u64()?,
        sparsity_mode: match dec.u8()? {
            0 => None,
            1 => Some(SparsityMode::Samples),
            2 => Some(SparsityMode::Snapshots),
            _ => return Err(dec.invalid()),
        },
        equilibrium_threshold: dec.opt_f64()?,
    })
}

/// Persist a dataset: sources and sample keys are stored; samples are
/// re-extracted on load (pure arithmetic, so the round-trip is exact).
/// A human-readable provenance sidecar is written next to the binary.
pub fn save_dataset(d: &Dataset, path: &Path) -> Result<()> {
    let mut enc = Encoder::new();
    let (nr, nc) = if d.sources.is_empty() {
        (0, 0)
    } else {
        (d.sources[0].n_rows(), d.sources[0].n_cols())
    };
    enc.put_u32(nr as u32);
    enc.put_u32(nc as u32);
    enc.put_f64(d.sample_interval);
    encode_provenance(&mut enc, &d.provenance);
    enc.put_u32(d.sources.len() as u32);
    for traj in &d.sources {
        enc.put_f64(traj.sample_interval);
        enc.put_u32(traj.snapshots.len() as u32);
        for snap in &traj.snapshots {
            enc.put_f64(snap.time);
            enc.put_f64_slice(snap.u.values());
            enc.put_f64_slice(snap.v.values());
        }
    }
    enc.put_u64(d.keys.len() as u64);
    for k in &d.keys {
        enc.put_u32(k.sim);
        enc.put_u32(k.pair);
        enc.put_u32(k.cell);
    }
    write_container(path, DATASET_MAGIC, DATASET_VERSION, &enc)?;

    let sidecar = sidecar_path(path);
    let text = toml::to_string_pretty(&d.provenance)
        .map_err(|e| Error::Config(format!("provenance serialization failed: {e}")))?;
    std::fs::write(sidecar, text)?;
    Ok(())
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".toml");
    std::path::PathBuf::from(os)
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let (body, _) = read_container(path, DATASET_MAGIC, DATASET_VERSION)?;
    let mut dec = decoder(&body, path);
    let n_rows = dec.u32()? as usize;
    let n_cols = dec.u32()? as usize;
    let sample_interval = dec.f64()?;
    let provenance = decode_provenance(&mut dec)?;
    let n_sources = dec.u32()? as usize;
    let mut sources = Vec::with_capacity(n_sources);
    for _ in 0..n_sources {
        let interval = dec.f64()?;
        let n_snaps = dec.u32()? as usize;
        let mut snapshots = Vec::with_capacity(n_snaps);
        for _ in 0..n_snaps {
            let time = dec.f64()?;
            let u = crate::grid::Field2D::from_values(n_rows, n_cols, dec.f64_vec()?)
                .map_err(|_| dec.invalid())?;
            let v = crate::grid::Field2D::from_values(n_rows, n_cols, dec.f64_vec()?)
                .map_err(|_| dec.invalid())?;
            snapshots.push(GridState::new(u, v, time).map_err(|_| dec.invalid())?);
        }
        sources.push(Trajectory { snapshots, sample_interval: interval });
    }
    let n_keys = dec.u64()? as usize;
    let mut keys = Vec::with_capacity(n_keys);
    for _ in 0..n_keys {
        keys.push(SampleKey { sim: dec.u32()?, pair: dec.u32()?, cell: dec.u32()? });
    }
    dec.done()?;
    let samples = extract_samples(&sources, &keys)?;
    Ok(Dataset { samples, keys, sources, sample_interval, provenance })
}
