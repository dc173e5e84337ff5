//! Explicit finite-difference integrator for the two-species
//! activator-inhibitor system
//!
//! ```text
//!   du/dt     = u - u^3 + k - v + a * lap(u)
//!   tau dv/dt = u - v + b * lap(v)
//! ```
//!
//! Forward Euler in time, five-point periodic Laplacian in space. This is the
//! ground-truth generator for training data, test rollouts, and the PDE
//! recovery oracle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{Boundary, Field2D, GridState};

/// Physical and numerical parameters of one simulation.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SimParams {
    /// Diffusivity of the activator `u`.
    pub a: f64,
    /// Diffusivity of the inhibitor `v`.
    pub b: f64,
    /// Timescale separation of the inhibitor equation.
    pub tau: f64,
    /// Constant forcing in the activator equation.
    pub k: f64,
    /// Grid spacing.
    pub dx: f64,
    /// Solver step in seconds.
    pub dt: f64,
    #[serde(default)]
    pub boundary: Boundary,
}

impl SimParams {
    /// Defaults known to produce labyrinth patterns on the unit-ish domain.
    pub const DEFAULT_A: f64 = 2.8e-4;
    pub const DEFAULT_B: f64 = 5e-3;
    pub const DEFAULT_TAU: f64 = 0.1;
    pub const DEFAULT_K: f64 = 0.005;
    pub const DEFAULT_DT: f64 = 0.001;

    /// Default parameter set on an `n x n` grid covering a side-2 domain,
    /// so `dx = 2 / n`.
    pub fn default_for_grid(n: usize) -> Result<Self> {
        Self::new(
            Self::DEFAULT_A,
            Self::DEFAULT_B,
            Self::DEFAULT_TAU,
            Self::DEFAULT_K,
            2.0 / n as f64,
            Self::DEFAULT_DT,
        )
    }

    pub fn new(a: f64, b: f64, tau: f64, k: f64, dx: f64, dt: f64) -> Result<Self> {
        if a < 0.0 || b < 0.0 {
            return Err(Error::domain(format!("diffusivities must be >= 0 (a={a}, b={b})")));
        }
        if tau <= 0.0 {
            return Err(Error::domain(format!("tau must be positive, got {tau}")));
        }
        if dx <= 0.0 {
            return Err(Error::domain(format!("dx must be positive, got {dx}")));
        }
        if dt <= 0.0 {
            return Err(Error::domain(format!("dt must be positive, got {dt}")));
        }
        let params = SimParams { a, b, tau, k, dx, dt, boundary: Boundary::Periodic };
        let cfl = params.diffusion_number();
        if cfl > 0.25 {
            return Err(Error::domain(format!(
                "explicit scheme unstable: dt*max(a,b)/dx^2 = {cfl:.4} exceeds 0.25"
            )));
        }
        Ok(params)
    }

    /// Diffusion stability number `dt * max(a, b) / dx^2` of the explicit scheme.
    pub fn diffusion_number(&self) -> f64 {
        self.dt * self.a.max(self.b) / (self.dx * self.dx)
    }
}

/// Ordered snapshots of one simulation, a fixed time apart.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub snapshots: Vec<GridState>,
    /// Seconds between stored snapshots.
    pub sample_interval: f64,
}

impl Trajectory {
    pub fn n_rows(&self) -> usize {
        self.snapshots[0].n_rows()
    }

    pub fn n_cols(&self) -> usize {
        self.snapshots[0].n_cols()
    }

    pub fn last(&self) -> &GridState {
        self.snapshots.last().expect("trajectory has at least one snapshot")
    }
}

/// Activator reaction term `u - u^3 + k - v`.
#[inline]
pub fn reaction_u(u: f64, v: f64, k: f64) -> f64 {
    u - u * u * u + k - v
}

/// Inhibitor reaction term `(u - v) / tau`.
#[inline]
pub fn reaction_v(u: f64, v: f64, tau: f64) -> Result<f64> {
    if tau <= 0.0 {
        return Err(Error::domain(format!("tau must be positive, got {tau}")));
    }
    Ok((u - v) / tau)
}

/// The homogeneous fixed point `(u*, v*)` with `u* = k^(1/3)`, `v* = u*`.
pub fn homogeneous_fixed_point(k: f64) -> (f64, f64) {
    let u = k.cbrt();
    (u, u)
}

/// One forward-Euler step. Reads only `s`, writes a fresh state.
pub fn step(s: &GridState, p: &SimParams) -> Result<GridState> {
    let (nr, nc) = (s.n_rows(), s.n_cols());
    let dt = p.dt;
    let inv_dx2 = 1.0 / (p.dx * p.dx);
    let inv_tau = 1.0 / p.tau;
    let u = s.u.values();
    let v = s.v.values();
    let mut u_next = vec![0.0; u.len()];
    let mut v_next = vec![0.0; v.len()];

    for i in 0..nr {
        let up = if i == 0 { nr - 1 } else { i - 1 };
        let down = if i + 1 == nr { 0 } else { i + 1 };
        let row = i * nc;
        let row_up = up * nc;
        let row_down = down * nc;
        for j in 0..nc {
            let left = if j == 0 { nc - 1 } else { j - 1 };
            let right = if j + 1 == nc { 0 } else { j + 1 };
            let uc = u[row + j];
            let vc = v[row + j];
            let lap_u =
                (u[row_up + j] + u[row_down + j] + u[row + left] + u[row + right] - 4.0 * uc)
                    * inv_dx2;
            let lap_v =
                (v[row_up + j] + v[row_down + j] + v[row + left] + v[row + right] - 4.0 * vc)
                    * inv_dx2;
            u_next[row + j] = uc + dt * (reaction_u(uc, vc, p.k) + p.a * lap_u);
            v_next[row + j] = vc + dt * ((uc - vc) * inv_tau + p.b * inv_tau * lap_v);
        }
    }

    let u_next = Field2D::from_values(nr, nc, u_next)?;
    let v_next = Field2D::from_values(nr, nc, v_next)?;
    if let Some((i, j)) = u_next.first_non_finite() {
        return Err(Error::numerics(format!(
            "non-finite u at cell ({i}, {j}) after step from t = {}",
            s.time
        )));
    }
    if let Some((i, j)) = v_next.first_non_finite() {
        return Err(Error::numerics(format!(
            "non-finite v at cell ({i}, {j}) after step from t = {}",
            s.time
        )));
    }
    GridState::new(u_next, v_next, s.time + dt)
}

/// Integrate for `duration` seconds, storing the initial state and every
/// `sample_every`-th step thereafter.
pub fn simulate(
    init: &GridState,
    p: &SimParams,
    duration: f64,
    sample_every: usize,
) -> Result<Trajectory> {
    if duration <= 0.0 {
        return Err(Error::domain(format!("duration must be positive, got {duration}")));
    }
    if sample_every == 0 {
        return Err(Error::domain("sample_every must be >= 1"));
    }
    let n_steps = (duration / p.dt).round() as usize;
    let mut snapshots = Vec::with_capacity(n_steps / sample_every + 2);
    snapshots.push(init.clone());
    let mut state = init.clone();
    for step_idx in 1..=n_steps {
        state = step(&state, p)?;
        if step_idx % sample_every == 0 {
            snapshots.push(state.clone());
        }
    }
    Ok(Trajectory { snapshots, sample_interval: p.dt * sample_every as f64 })
}

/// Random initial state: `u` and `v` i.i.d. uniform on `[lo, hi]`, drawn from
/// a seeded ChaCha8 stream (u field first, then v, row-major).
pub fn random_init(seed: u64, n: usize, lo: f64, hi: f64) -> Result<GridState> {
    if lo >= hi {
        return Err(Error::domain(format!("need lo < hi, got [{lo}, {hi}]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |len: usize| -> Vec<f64> {
        (0..len).map(|_| rng.random_range(lo..=hi)).collect()
    };
    let u = Field2D::from_values(n, n, draw(n * n))?;
    let v = Field2D::from_values(n, n, draw(n * n))?;
    GridState::new(u, v, 0.0)
}

/// Mean absolute per-cell, per-species change between two states.
pub fn mean_abs_change(a: &GridState, b: &GridState) -> f64 {
    let n = (a.n_cells() * 2) as f64;
    let du: f64 =
        a.u.values().iter().zip(b.u.values()).map(|(x, y)| (x - y).abs()).sum();
    let dv: f64 =
        a.v.values().iter().zip(b.v.values()).map(|(x, y)| (x - y).abs()).sum();
    (du + dv) / n
}
