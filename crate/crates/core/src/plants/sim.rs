//! Closed-loop simulation: MPC at a fixed rate, ancillary feedback and
//! RK4 integration at the simulation step.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{rk4_step, Plant, PlantError};
use crate::clf::ClfCertificate;
use crate::matrixkit::{DenseMatrix, SymMatrix};
use crate::mpc::{mpc_step, MpcConfig, MpcError, NominalModel, RefPoint};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("invalid simulation settings: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Mpc(#[from] MpcError),
    #[error(transparent)]
    Plant(#[from] PlantError),
}

/// `u = ū + K (x - x̄)`
pub fn robust_control(u_bar: &[f64], x: &[f64], x_bar: &[f64], k: &DenseMatrix) -> Vec<f64> {
    let e: Vec<f64> = x.iter().zip(x_bar).map(|(a, b)| a - b).collect();
    let ke = k.mul_vec(&e);
    u_bar.iter().zip(&ke).map(|(u, d)| u + d).collect()
}

/// Feedback `K` and Lyapunov matrix `P` acting on a subset of states and
/// inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct AncillaryBlock {
    pub name: String,
    pub states: Vec<usize>,
    pub controls: Vec<usize>,
    pub k: DenseMatrix,
    pub p: SymMatrix,
    /// Level `c` of the invariant sublevel set `{E ≤ c}`.
    pub level: f64,
}

impl AncillaryBlock {
    pub fn from_certificate(name: &str, states: Vec<usize>, controls: Vec<usize>, cert: &ClfCertificate) -> Self {
        Self {
            name: name.to_string(),
            states,
            controls,
            k: cert.k.clone(),
            p: cert.p.clone(),
            level: cert.roa_level,
        }
    }

    pub fn validate(&self, n: usize, m: usize) -> Result<(), SimError> {
        let ok = self.k.shape() == (self.controls.len(), self.states.len())
            && self.p.shape() == (self.states.len(), self.states.len())
            && self.states.iter().all(|&i| i < n)
            && self.controls.iter().all(|&j| j < m);
        if ok {
            Ok(())
        } else {
            Err(SimError::InvalidConfig(format!(
                "block {} does not fit n = {n}, m = {m}",
                self.name
            )))
        }
    }

    pub fn error(&self, x: &[f64], x_bar: &[f64]) -> Vec<f64> {
        self.states.iter().map(|&i| x[i] - x_bar[i]).collect()
    }

    /// Per-state half-widths `√(c·(P⁻¹)ᵢᵢ)` of the box around `{E ≤ c}`.
    pub fn error_bands(&self) -> Result<Vec<f64>, SimError> {
        let p_inv = crate::matrixkit::spd_inverse(&self.p)
            .map_err(|e| SimError::InvalidConfig(format!("block {}: P is not positive definite ({e})", self.name)))?;
        Ok(p_inv.diag().iter().map(|d| (self.level * d).sqrt()).collect())
    }

    pub fn lyapunov(&self, x: &[f64], x_bar: &[f64]) -> f64 {
        self.p.quad_form(&self.error(x, x_bar))
    }

    /// Adds `K e` to the block's entries of `u`.
    pub fn apply(&self, u: &mut [f64], x: &[f64], x_bar: &[f64]) {
        let du = self.k.mul_vec(&self.error(x, x_bar));
        for (j, d) in self.controls.iter().zip(du) {
            u[*j] += d;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerMode {
    /// MPC only.
    Nominal,
    /// MPC plus ancillary feedback.
    #[default]
    Robust,
}

/// What the ancillary error is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Anchor {
    /// MPC from the measured state, `e = x - x_ref`.
    #[default]
    Reference,
    /// MPC from a disturbance-free copy `x̄` of the nominal model, `e = x - x̄`.
    NominalState,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DisturbancePolicy {
    #[default]
    None,
    Constant {
        w: Vec<f64>,
    },
    /// `wᵢ sin(2π f t + i π/2)`
    Sinusoidal {
        amplitude: Vec<f64>,
        frequency: f64,
    },
    /// Uniform in `[-bᵢ, bᵢ]`, redrawn every `hold` seconds.
    UniformRandom {
        bound: Vec<f64>,
        hold: f64,
        #[serde(default)]
        seed: u64,
    },
}

/// Stateful sampler for a [`DisturbancePolicy`].
#[derive(Debug, Clone)]
pub struct DisturbanceSource {
    policy: DisturbancePolicy,
    dim: usize,
    rng: ChaCha8Rng,
    held: Vec<f64>,
    next_draw: f64,
}

impl DisturbanceSource {
    pub fn new(policy: DisturbancePolicy, dim: usize) -> Result<Self, SimError> {
        let len = match &policy {
            DisturbancePolicy::None => dim,
            DisturbancePolicy::Constant { w } => w.len(),
            DisturbancePolicy::Sinusoidal { amplitude, .. } => amplitude.len(),
            DisturbancePolicy::UniformRandom { bound, hold, .. } => {
                if !(*hold > 0.0) {
                    return Err(SimError::InvalidConfig(format!("hold = {hold}")));
                }
                bound.len()
            }
        };
        if len != dim {
            return Err(SimError::InvalidConfig(format!(
                "disturbance has {len} channels, plant expects {dim}"
            )));
        }
        let seed = match &policy {
            DisturbancePolicy::UniformRandom { seed, .. } => *seed,
            _ => 0,
        };
        Ok(Self {
            policy,
            dim,
            rng: ChaCha8Rng::seed_from_u64(seed),
            held: vec![0.0; dim],
            next_draw: 0.0,
        })
    }

    pub fn sample(&mut self, t: f64) -> Vec<f64> {
        match &self.policy {
            DisturbancePolicy::None => vec![0.0; self.dim],
            DisturbancePolicy::Constant { w } => w.clone(),
            DisturbancePolicy::Sinusoidal { amplitude, frequency } => amplitude
                .iter()
                .enumerate()
                .map(|(i, a)| {
                    a * (std::f64::consts::TAU * frequency * t + i as f64 * std::f64::consts::FRAC_PI_2).sin()
                })
                .collect(),
            DisturbancePolicy::UniformRandom { bound, hold, .. } => {
                while t + 1e-12 >= self.next_draw {
                    self.held = bound.iter().map(|b| self.rng.gen_range(-b.abs()..=b.abs())).collect();
                    self.next_draw += hold;
                }
                self.held.clone()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub t_end: f64,
    pub dt: f64,
    /// MPC re-solve period; rounded to a whole number of steps.
    pub mpc_period: f64,
    #[serde(default)]
    pub mode: ControllerMode,
    #[serde(default)]
    pub anchor: Anchor,
    /// Stop and flag divergence once any tracking error exceeds this.
    #[serde(default = "default_diverge_bound")]
    pub diverge_bound: f64,
}

fn default_diverge_bound() -> f64 {
    1e3
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.t_end > 0.0 && self.dt > 0.0 && self.mpc_period >= self.dt) || !self.t_end.is_finite() {
            return Err(SimError::InvalidConfig(format!(
                "t_end = {}, dt = {}, mpc_period = {}",
                self.t_end, self.dt, self.mpc_period
            )));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    pub fn mpc_every(&self) -> usize {
        ((self.mpc_period / self.dt).round() as usize).max(1)
    }
}

/// Per-step record of a closed-loop run. Row `i` of `states`, `refs` and
/// `anchors` is at `times[i]`; controls and disturbances at row `i` are
/// held over `[times[i], times[i+1])`, with the last row repeating the
/// final command.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub refs: Vec<Vec<f64>>,
    pub anchors: Vec<Vec<f64>>,
    pub controls: Vec<Vec<f64>>,
    pub disturbances: Vec<Vec<f64>>,
    pub block_names: Vec<String>,
    /// `energies[b][i]`: Lyapunov value of block `b` at row `i`.
    pub energies: Vec<Vec<f64>>,
    pub levels: Vec<f64>,
    pub diverged: bool,
    /// Why the run stopped before `t_end`, if it did.
    pub stopped: Option<String>,
    pub mpc_clamped: usize,
    /// Exits from `{E ≤ c}` after first entry, counted while running.
    pub live_exits: Vec<usize>,
}

/// Invariance bookkeeping for one ancillary block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InvariantStats {
    /// First time `E ≤ c`, if ever.
    pub entry_time: Option<f64>,
    /// First time `E > c` after entry.
    pub first_exit_time: Option<f64>,
    /// Number of times `E` crosses above `c` after the first entry.
    pub exits: usize,
    /// Largest `E / c` after the first entry.
    pub max_ratio_after_entry: f64,
    /// Fraction of post-entry samples with `E > c`.
    pub fraction_outside: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn tracking_errors(&self, state: usize) -> Vec<f64> {
        self.states
            .iter()
            .zip(&self.refs)
            .map(|(x, r)| x[state] - r[state])
            .collect()
    }

    /// Root-mean-square tracking error of one state over the samples with
    /// `t ≥ t_from`.
    pub fn rms_error(&self, state: usize, t_from: f64) -> f64 {
        let e: Vec<f64> = self
            .tracking_errors(state)
            .into_iter()
            .zip(&self.times)
            .filter(|(_, t)| **t >= t_from)
            .map(|(e, _)| e)
            .collect();
        if e.is_empty() {
            return f64::NAN;
        }
        (e.iter().map(|v| v * v).sum::<f64>() / e.len() as f64).sqrt()
    }

    pub fn max_abs_error(&self, state: usize, t_from: f64) -> f64 {
        self.tracking_errors(state)
            .into_iter()
            .zip(&self.times)
            .filter(|(_, t)| **t >= t_from)
            .fold(0.0, |m, (e, _)| m.max(e.abs()))
    }

    pub fn invariant_stats(&self, block: usize) -> InvariantStats {
        let c = self.levels[block];
        let e = &self.energies[block];
        let entry = e.iter().position(|v| *v <= c);
        let Some(first) = entry else {
            return InvariantStats {
                entry_time: None,
                first_exit_time: None,
                exits: 0,
                max_ratio_after_entry: f64::NAN,
                fraction_outside: f64::NAN,
            };
        };
        let tail = &e[first..];
        let exits = tail.windows(2).filter(|w| w[0] <= c && w[1] > c).count();
        let outside = tail.iter().filter(|v| **v > c).count();
        InvariantStats {
            entry_time: Some(self.times[first]),
            first_exit_time: tail.iter().position(|v| *v > c).map(|i| self.times[first + i]),
            exits,
            max_ratio_after_entry: tail.iter().fold(0.0_f64, |m, v| m.max(v / c)),
            fraction_outside: outside as f64 / tail.len() as f64,
        }
    }

    /// CSV with columns `t, x…, xref…, u…, w…, E, roa_level`. With several
    /// ancillary blocks the last two are repeated with a `_name` suffix.
    pub fn to_csv_string(&self) -> String {
        let n = self.states.first().map_or(0, Vec::len);
        let m = self.controls.first().map_or(0, Vec::len);
        let p = self.disturbances.first().map_or(0, Vec::len);
        let mut cols = vec!["t".to_string()];
        cols.extend((1..=n).map(|i| format!("x{i}")));
        cols.extend((1..=n).map(|i| format!("xref{i}")));
        cols.extend((1..=m).map(|i| format!("u{i}")));
        cols.extend((1..=p).map(|i| format!("w{i}")));
        if self.block_names.len() == 1 {
            cols.push("E".into());
            cols.push("roa_level".into());
        } else {
            for name in &self.block_names {
                cols.push(format!("E_{name}"));
                cols.push(format!("roa_level_{name}"));
            }
        }
        let mut out = cols.join(",");
        out.push('\n');
        for i in 0..self.len() {
            let mut row = vec![self.times[i]];
            row.extend(&self.states[i]);
            row.extend(&self.refs[i]);
            row.extend(&self.controls[i]);
            row.extend(&self.disturbances[i]);
            for (b, level) in self.levels.iter().enumerate() {
                row.push(self.energies[b][i]);
                row.push(*level);
            }
            let line: Vec<String> = row.iter().map(|v| format!("{v:.9e}")).collect();
            let _ = writeln!(out, "{}", line.join(","));
        }
        out
    }
}

fn clamp_to(u: &mut [f64], mpc: &MpcConfig) {
    for (j, v) in u.iter_mut().enumerate() {
        let lo = mpc.u_min.as_ref().map_or(f64::NEG_INFINITY, |b| b[j]);
        let hi = mpc.u_max.as_ref().map_or(f64::INFINITY, |b| b[j]);
        *v = v.clamp(lo, hi);
    }
}

/// Runs the closed loop from `x0` at `t = 0`.
///
/// Plant failures (contact violations, blow-up) end the run early and are
/// recorded in [`Trajectory::stopped`] rather than returned as errors.
#[allow(clippy::too_many_arguments)]
pub fn simulate<P, M, R>(
    plant: &mut P,
    model: &M,
    mpc: &MpcConfig,
    reference: R,
    blocks: &[AncillaryBlock],
    disturbance: &DisturbancePolicy,
    cfg: &SimConfig,
    x0: &[f64],
) -> Result<Trajectory, SimError>
where
    P: Plant + ?Sized,
    M: NominalModel + ?Sized,
    R: Fn(f64) -> RefPoint,
{
    cfg.validate()?;
    let (n, m) = (plant.state_dim(), plant.control_dim());
    if x0.len() != n || model.state_dim() != n || model.control_dim() != m {
        return Err(SimError::InvalidConfig(format!(
            "x0 has {} entries; plant n = {n}, m = {m}; model n = {}, m = {}",
            x0.len(),
            model.state_dim(),
            model.control_dim()
        )));
    }
    mpc.validate(n, m)?;
    for b in blocks {
        b.validate(n, m)?;
    }
    let mut source = DisturbanceSource::new(disturbance.clone(), plant.disturbance_dim())?;

    let mut traj = Trajectory {
        block_names: blocks.iter().map(|b| b.name.clone()).collect(),
        energies: vec![Vec::new(); blocks.len()],
        levels: blocks.iter().map(|b| b.level).collect(),
        live_exits: vec![0; blocks.len()],
        ..Default::default()
    };
    let mut inside = vec![None::<bool>; blocks.len()];
    let horizon_refs =
        |t: f64| -> Vec<RefPoint> { (0..=mpc.horizon).map(|i| reference(t + i as f64 * mpc.dt)).collect() };

    let mut x = x0.to_vec();
    let mut x_bar = x0.to_vec();
    let mut du_held = vec![0.0; m];
    let every = cfg.mpc_every();
    let steps = cfg.steps();

    for step in 0..=steps {
        let t = step as f64 * cfg.dt;
        plant.advance(t, &x);
        let r = reference(t);
        let anchor = match cfg.anchor {
            Anchor::Reference => r.x.clone(),
            Anchor::NominalState => x_bar.clone(),
        };
        if step % every == 0 {
            let from = match cfg.anchor {
                Anchor::Reference => &x,
                Anchor::NominalState => &x_bar,
            };
            let refs = horizon_refs(t);
            let sol = mpc_step(model, from, &refs, mpc)?;
            traj.mpc_clamped += usize::from(sol.clamped);
            du_held = sol.u0.iter().zip(&refs[0].u).map(|(u, r)| u - r).collect();
        }
        // between solves the deviation from the feed-forward input is held
        let mut u_bar: Vec<f64> = r.u.iter().zip(&du_held).map(|(r, d)| r + d).collect();
        clamp_to(&mut u_bar, mpc);
        let mut u = u_bar.clone();
        if cfg.mode == ControllerMode::Robust {
            for b in blocks {
                b.apply(&mut u, &x, &anchor);
            }
        }
        let u = plant.admissible(&x, u);
        let w = source.sample(t);

        traj.times.push(t);
        traj.states.push(x.clone());
        traj.refs.push(r.x.clone());
        traj.anchors.push(anchor.clone());
        for (b, blk) in blocks.iter().enumerate() {
            let e = blk.lyapunov(&x, &anchor);
            let now_inside = e <= blk.level;
            if inside[b] == Some(true) && !now_inside {
                traj.live_exits[b] += 1;
            }
            if inside[b].is_some() || now_inside {
                inside[b] = Some(now_inside);
            }
            traj.energies[b].push(e);
        }
        traj.controls.push(u.clone());
        traj.disturbances.push(w.clone());

        let err = x.iter().zip(&r.x).fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()));
        if !(err <= cfg.diverge_bound) {
            traj.diverged = true;
            traj.stopped = Some(format!("tracking error {err:.3e} at t = {t:.3}"));
            break;
        }
        if step == steps {
            break;
        }

        let plant_ref: &P = plant;
        match rk4_step(|x, u, w| plant_ref.dynamics(x, u, w), &x, &u, &w, cfg.dt) {
            Ok(next) => x = next,
            Err(e) => {
                traj.diverged = matches!(e, PlantError::NonFinite);
                traj.stopped = Some(format!("{e} at t = {t:.3}"));
                break;
            }
        }
        if cfg.anchor == Anchor::NominalState {
            let nominal = |x: &[f64], u: &[f64], _: &[f64]| Ok(model.f(x, u));
            x_bar = rk4_step(nominal, &x_bar, &u_bar, &[], cfg.dt)?;
        }
    }
    Ok(traj)
}
