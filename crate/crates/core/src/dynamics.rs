//! System Hilbert spaces, Hamiltonians, and unitary propagation.
//!
//! Two system representations are supported: complex wavefunctions on a
//! uniform periodic 1-D position grid (spectral methods) and
//! finite-dimensional complex vectors. Propagation is analytic where
//! possible — exact spectral multiplication for the free particle, an
//! eigendecomposition propagator for finite Hamiltonians — and a Strang
//! split-step scheme for grid potentials.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::clock::ClockGrid;
use crate::{invalid, mismatch, Error, Result};

/// Norm tolerance for states entering propagation.
pub const NORM_TOL: f64 = 1e-9;
/// Norm drift beyond this aborts a propagation as unstable.
pub const DRIFT_LIMIT: f64 = 1e-6;

/// Geometry of a system Hilbert space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SystemSpace {
    /// Uniform periodic position grid on `[x_min, x_max)` with `n_points`
    /// samples (the right endpoint is the periodic image of the left).
    Position { x_min: f64, x_max: f64, n_points: usize },
    /// A finite-dimensional space with the Kronecker inner product.
    Finite { dim: usize },
}

impl SystemSpace {
    pub fn dim(&self) -> usize {
        match self {
            SystemSpace::Position { n_points, .. } => *n_points,
            SystemSpace::Finite { dim } => *dim,
        }
    }

    /// Quadrature weight of the inner product: Δx on a position grid, 1 on
    /// a finite space.
    pub fn weight(&self) -> f64 {
        match self {
            SystemSpace::Position { x_min, x_max, n_points } => {
                (x_max - x_min) / *n_points as f64
            }
            SystemSpace::Finite { .. } => 1.0,
        }
    }
}

/// A system state: amplitudes over a [`SystemSpace`].
#[derive(Clone, Debug)]
pub struct SystemState {
    space: SystemSpace,
    amplitudes: Vec<Complex64>,
}

impl SystemState {
    /// Wavefunction samples on a periodic position grid. `n_points` must be
    /// a power of two.
    pub fn position_wave(x_min: f64, x_max: f64, amplitudes: Vec<Complex64>) -> Result<Self> {
        if !(x_max > x_min) || !x_min.is_finite() || !x_max.is_finite() {
            return Err(invalid(format!("bad position grid [{x_min}, {x_max}]")));
        }
        let m = amplitudes.len();
        if m < 2 || !m.is_power_of_two() {
            return Err(invalid(format!(
                "position grid needs a power-of-two point count, got {m}"
            )));
        }
        Ok(Self {
            space: SystemSpace::Position { x_min, x_max, n_points: m },
            amplitudes,
        })
    }

    /// A finite-dimensional state vector.
    pub fn finite(amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(invalid("finite state needs at least one amplitude".to_string()));
        }
        Ok(Self {
            space: SystemSpace::Finite { dim: amplitudes.len() },
            amplitudes,
        })
    }

    /// Basis state |k⟩ of a d-dimensional space.
    pub fn basis(dim: usize, k: usize) -> Result<Self> {
        if k >= dim {
            return Err(invalid(format!("basis index {k} out of range for dim {dim}")));
        }
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); dim];
        amplitudes[k] = Complex64::new(1.0, 0.0);
        Self::finite(amplitudes)
    }

    pub fn space(&self) -> SystemSpace {
        self.space
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    /// Position samples, for position-grid states.
    pub fn positions(&self) -> Option<Vec<f64>> {
        match self.space {
            SystemSpace::Position { x_min, x_max, n_points } => {
                let dx = (x_max - x_min) / n_points as f64;
                Some((0..n_points).map(|i| x_min + i as f64 * dx).collect())
            }
            SystemSpace::Finite { .. } => None,
        }
    }

    pub fn norm_sq(&self) -> f64 {
        self.space.weight() * self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if n < 1e-300 {
            return Err(invalid("cannot normalize a zero state".to_string()));
        }
        let inv = 1.0 / n;
        Ok(Self {
            space: self.space,
            amplitudes: self.amplitudes.iter().map(|a| a * inv).collect(),
        })
    }

    /// ⟨self|other⟩ with the space's quadrature weight.
    pub fn inner(&self, other: &Self) -> Result<Complex64> {
        if self.space != other.space {
            return Err(mismatch("inner product between different spaces".to_string()));
        }
        let sum: Complex64 = self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum();
        Ok(sum * self.space.weight())
    }

    pub fn distance(&self, other: &Self) -> Result<f64> {
        if self.space != other.space {
            return Err(mismatch("distance between different spaces".to_string()));
        }
        let sum: f64 = self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        Ok((self.space.weight() * sum).sqrt())
    }

    /// Fidelity |⟨self|other⟩|.
    pub fn fidelity(&self, other: &Self) -> Result<f64> {
        Ok(self.inner(other)?.norm())
    }

    /// ⟨x⟩ of a position-grid state.
    pub fn mean_position(&self) -> Result<f64> {
        let xs = self
            .positions()
            .ok_or_else(|| mismatch("mean_position needs a position-grid state".to_string()))?;
        let w = self.space.weight();
        Ok(xs
            .iter()
            .zip(&self.amplitudes)
            .map(|(x, a)| w * x * a.norm_sqr())
            .sum())
    }

    /// Var(x) of a position-grid state.
    pub fn position_variance(&self) -> Result<f64> {
        let xs = self
            .positions()
            .ok_or_else(|| mismatch("position_variance needs a position-grid state".to_string()))?;
        let w = self.space.weight();
        let mean = self.mean_position()?;
        Ok(xs
            .iter()
            .zip(&self.amplitudes)
            .map(|(x, a)| w * (x - mean).powi(2) * a.norm_sqr())
            .sum())
    }

    /// Spectral estimate of the mean momentum ⟨p⟩ = ħ⟨k⟩ of a position-grid
    /// state.
    pub fn mean_momentum_spectral(&self, hbar: f64) -> Result<f64> {
        match self.space {
            SystemSpace::Position { x_min, x_max, n_points } => {
                let mut buf = self.amplitudes.clone();
                let mut planner = FftPlanner::<f64>::new();
                planner.plan_fft_forward(n_points).process(&mut buf);
                let ks = wavenumbers(x_min, x_max, n_points);
                let total: f64 = buf.iter().map(|a| a.norm_sqr()).sum();
                let mean_k: f64 = ks
                    .iter()
                    .zip(&buf)
                    .map(|(k, a)| k * a.norm_sqr())
                    .sum::<f64>()
                    / total;
                Ok(hbar * mean_k)
            }
            SystemSpace::Finite { .. } => {
                Err(mismatch("mean_momentum_spectral needs a position-grid state".to_string()))
            }
        }
    }
}

/// Spectral wavenumbers in FFT bin order: k_i = 2π·m_i/L with
/// m_i ∈ {0, 1, …, M/2-1, -M/2, …, -1}.
pub(crate) fn wavenumbers(x_min: f64, x_max: f64, n_points: usize) -> Vec<f64> {
    let length = x_max - x_min;
    let base = 2.0 * std::f64::consts::PI / length;
    (0..n_points)
        .map(|i| {
            let m = if 2 * i < n_points { i as i64 } else { i as i64 - n_points as i64 };
            m as f64 * base
        })
        .collect()
}

/// A system Hamiltonian.
#[derive(Clone, Debug)]
pub enum HamiltonianSpec {
    /// H = p²/2m on a position grid.
    FreeParticle { mass: f64 },
    /// H = p²/2m + V(x) with V sampled on the position grid.
    PotentialGrid { mass: f64, potential: Vec<f64> },
    /// An explicit Hermitian matrix on a finite space.
    FiniteMatrix { matrix: DMatrix<Complex64> },
}

impl HamiltonianSpec {
    pub fn free_particle(mass: f64) -> Result<Self> {
        if !(mass > 0.0) {
            return Err(invalid(format!("mass must be positive, got {mass}")));
        }
        Ok(Self::FreeParticle { mass })
    }

    pub fn potential_grid(mass: f64, potential: Vec<f64>) -> Result<Self> {
        if !(mass > 0.0) {
            return Err(invalid(format!("mass must be positive, got {mass}")));
        }
        if potential.iter().any(|v| !v.is_finite()) {
            return Err(invalid("potential samples must be finite".to_string()));
        }
        Ok(Self::PotentialGrid { mass, potential })
    }

    /// Validates Hermiticity within 1e-12 in max norm.
    pub fn finite_matrix(matrix: DMatrix<Complex64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() == 0 {
            return Err(invalid(format!(
                "hamiltonian matrix must be square and nonempty, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let dev = hermiticity_deviation(&matrix);
        if dev > 1e-12 {
            return Err(invalid(format!(
                "hamiltonian matrix deviates from Hermitian by {dev:.3e} (max norm)"
            )));
        }
        Ok(Self::FiniteMatrix { matrix })
    }

    /// Dimension check against a state's space.
    pub fn compatible_with(&self, space: &SystemSpace) -> bool {
        match (self, space) {
            (HamiltonianSpec::FreeParticle { .. }, SystemSpace::Position { .. }) => true,
            (HamiltonianSpec::PotentialGrid { potential, .. }, SystemSpace::Position { n_points, .. }) => {
                potential.len() == *n_points
            }
            (HamiltonianSpec::FiniteMatrix { matrix }, SystemSpace::Finite { dim }) => {
                matrix.nrows() == *dim
            }
            _ => false,
        }
    }

    /// Apply H to a state, returning raw amplitudes (energy units).
    pub fn apply(&self, state: &SystemState, hbar: f64) -> Result<Vec<Complex64>> {
        if !self.compatible_with(&state.space()) {
            return Err(mismatch("hamiltonian incompatible with state space".to_string()));
        }
        match self {
            HamiltonianSpec::FreeParticle { mass } => {
                kinetic_apply(state, *mass, hbar)
            }
            HamiltonianSpec::PotentialGrid { mass, potential } => {
                let mut out = kinetic_apply(state, *mass, hbar)?;
                for (o, (a, v)) in out.iter_mut().zip(state.amplitudes().iter().zip(potential)) {
                    *o += a * *v;
                }
                Ok(out)
            }
            HamiltonianSpec::FiniteMatrix { matrix } => {
                let v = DVector::from_column_slice(state.amplitudes());
                Ok((matrix * v).iter().copied().collect())
            }
        }
    }
}

fn hermiticity_deviation(m: &DMatrix<Complex64>) -> f64 {
    let mut dev = 0.0_f64;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

fn kinetic_apply(state: &SystemState, mass: f64, hbar: f64) -> Result<Vec<Complex64>> {
    match state.space() {
        SystemSpace::Position { x_min, x_max, n_points } => {
            let mut buf = state.amplitudes().to_vec();
            let mut planner = FftPlanner::<f64>::new();
            planner.plan_fft_forward(n_points).process(&mut buf);
            let ks = wavenumbers(x_min, x_max, n_points);
            for (b, k) in buf.iter_mut().zip(&ks) {
                *b *= hbar * hbar * k * k / (2.0 * mass);
            }
            planner.plan_fft_inverse(n_points).process(&mut buf);
            let inv_m = 1.0 / n_points as f64;
            for b in buf.iter_mut() {
                *b *= inv_m;
            }
            Ok(buf)
        }
        SystemSpace::Finite { .. } => Err(mismatch("kinetic term needs a position grid".to_string())),
    }
}

/// Parameters of a Gaussian wavepacket exp(-(x-x0)²/4σ² + i p0 x/ħ).
#[derive(Clone, Copy, Debug)]
pub struct GaussianParams {
    pub x0: f64,
    pub p0: f64,
    pub sigma: f64,
    pub mass: f64,
}

/// A built packet together with its boundary margin in units of σ.
#[derive(Clone, Debug)]
pub struct PacketBuild {
    pub state: SystemState,
    /// min(x0 - x_min, x_max - x0)/σ; values below 5 mean the grid clips
    /// the packet tails.
    pub margin_sigmas: f64,
}

impl PacketBuild {
    pub fn margin_ok(&self) -> bool {
        self.margin_sigmas >= 5.0
    }
}

/// Discretize a normalized Gaussian packet on a position grid.
pub fn gaussian_packet(
    params: &GaussianParams,
    x_min: f64,
    x_max: f64,
    n_points: usize,
    hbar: f64,
) -> Result<PacketBuild> {
    if !(params.sigma > 0.0) {
        return Err(invalid(format!("sigma must be positive, got {}", params.sigma)));
    }
    if !(params.mass > 0.0) {
        return Err(invalid(format!("mass must be positive, got {}", params.mass)));
    }
    if !(hbar > 0.0) {
        return Err(invalid(format!("hbar must be positive, got {hbar}")));
    }
    if !(params.x0 > x_min && params.x0 < x_max) {
        return Err(invalid(format!(
            "packet center {} outside grid [{x_min}, {x_max}]",
            params.x0
        )));
    }
    let dx = (x_max - x_min) / n_points as f64;
    let amplitudes: Vec<Complex64> = (0..n_points)
        .map(|i| {
            let x = x_min + i as f64 * dx;
            let envelope = (-(x - params.x0).powi(2) / (4.0 * params.sigma * params.sigma)).exp();
            Complex64::from_polar(envelope, params.p0 * x / hbar)
        })
        .collect();
    let state = SystemState::position_wave(x_min, x_max, amplitudes)?.normalized()?;
    let margin_sigmas = (params.x0 - x_min).min(x_max - params.x0) / params.sigma;
    Ok(PacketBuild { state, margin_sigmas })
}

/// Options shared by the propagation routines.
#[derive(Clone, Copy, Debug)]
pub struct EvolveConfig {
    pub hbar: f64,
    /// Cap on the Strang substep for grid potentials. `None` means |dt|/8
    /// for a single evolve call and Δt/8 along a trajectory.
    pub dt_max: Option<f64>,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        Self { hbar: 1.0, dt_max: None }
    }
}

impl EvolveConfig {
    pub fn with_hbar(hbar: f64) -> Self {
        Self { hbar, dt_max: None }
    }
}

/// Reusable propagator: caches spectral phases and eigendecompositions.
pub struct Propagator {
    hbar: f64,
    dt_max: Option<f64>,
    kind: PropagatorKind,
}

enum PropagatorKind {
    Free {
        mass: f64,
        k2: Vec<f64>,
        fft: Arc<dyn Fft<f64>>,
        ifft: Arc<dyn Fft<f64>>,
    },
    Potential {
        mass: f64,
        k2: Vec<f64>,
        potential: Vec<f64>,
        fft: Arc<dyn Fft<f64>>,
        ifft: Arc<dyn Fft<f64>>,
    },
    Finite {
        eigenvalues: Vec<f64>,
        eigenvectors: DMatrix<Complex64>,
    },
}

impl Propagator {
    pub fn new(h: &HamiltonianSpec, space: &SystemSpace, cfg: &EvolveConfig) -> Result<Self> {
        if !(cfg.hbar > 0.0) {
            return Err(invalid(format!("hbar must be positive, got {}", cfg.hbar)));
        }
        if !h.compatible_with(space) {
            return Err(mismatch("hamiltonian incompatible with state space".to_string()));
        }
        let kind = match (h, space) {
            (HamiltonianSpec::FreeParticle { mass }, SystemSpace::Position { x_min, x_max, n_points }) => {
                let mut planner = FftPlanner::<f64>::new();
                PropagatorKind::Free {
                    mass: *mass,
                    k2: wavenumbers(*x_min, *x_max, *n_points).iter().map(|k| k * k).collect(),
                    fft: planner.plan_fft_forward(*n_points),
                    ifft: planner.plan_fft_inverse(*n_points),
                }
            }
            (HamiltonianSpec::PotentialGrid { mass, potential }, SystemSpace::Position { x_min, x_max, n_points }) => {
                let mut planner = FftPlanner::<f64>::new();
                PropagatorKind::Potential {
                    mass: *mass,
                    k2: wavenumbers(*x_min, *x_max, *n_points).iter().map(|k| k * k).collect(),
                    potential: potential.clone(),
                    fft: planner.plan_fft_forward(*n_points),
                    ifft: planner.plan_fft_inverse(*n_points),
                }
            }
            (HamiltonianSpec::FiniteMatrix { matrix }, SystemSpace::Finite { .. }) => {
                let eig = matrix.clone().symmetric_eigen();
                PropagatorKind::Finite {
                    eigenvalues: eig.eigenvalues.iter().copied().collect(),
                    eigenvectors: eig.eigenvectors,
                }
            }
            _ => return Err(mismatch("hamiltonian incompatible with state space".to_string())),
        };
        Ok(Self { hbar: cfg.hbar, dt_max: cfg.dt_max, kind })
    }

    /// U(dt)·state with U = exp(-i H dt/ħ). Negative dt is the unitary
    /// inverse; dt = 0 returns the state unchanged.
    pub fn evolve(&self, state: &SystemState, dt: f64) -> Result<SystemState> {
        if dt == 0.0 {
            return Ok(state.clone());
        }
        let mut amps = state.amplitudes().to_vec();
        match &self.kind {
            PropagatorKind::Free { mass, k2, fft, ifft } => {
                if amps.len() != k2.len() {
                    return Err(mismatch("state dimension changed under propagator".to_string()));
                }
                fft.process(&mut amps);
                let factor = -self.hbar * dt / (2.0 * mass);
                for (a, k2i) in amps.iter_mut().zip(k2) {
                    *a *= Complex64::from_polar(1.0, factor * k2i);
                }
                ifft.process(&mut amps);
                let inv_m = 1.0 / amps.len() as f64;
                for a in amps.iter_mut() {
                    *a *= inv_m;
                }
            }
            PropagatorKind::Potential { mass, k2, potential, fft, ifft } => {
                if amps.len() != k2.len() {
                    return Err(mismatch("state dimension changed under propagator".to_string()));
                }
                let cap = self.dt_max.unwrap_or(dt.abs() / 8.0);
                let n_sub = ((dt.abs() / cap).ceil() as usize).max(1);
                let sub = dt / n_sub as f64;
                let half_v: Vec<Complex64> = potential
                    .iter()
                    .map(|v| Complex64::from_polar(1.0, -v * sub / (2.0 * self.hbar)))
                    .collect();
                let kin: Vec<Complex64> = k2
                    .iter()
                    .map(|k2i| Complex64::from_polar(1.0, -self.hbar * sub * k2i / (2.0 * mass)))
                    .collect();
                let inv_m = 1.0 / amps.len() as f64;
                for _ in 0..n_sub {
                    for (a, p) in amps.iter_mut().zip(&half_v) {
                        *a *= p;
                    }
                    fft.process(&mut amps);
                    for (a, p) in amps.iter_mut().zip(&kin) {
                        *a *= p;
                    }
                    ifft.process(&mut amps);
                    for (a, p) in amps.iter_mut().zip(&half_v) {
                        *a *= p * inv_m;
                    }
                }
            }
            PropagatorKind::Finite { eigenvalues, eigenvectors } => {
                if amps.len() != eigenvalues.len() {
                    return Err(mismatch("state dimension changed under propagator".to_string()));
                }
                let v = DVector::from_column_slice(&amps);
                let mut modal = eigenvectors.adjoint() * v;
                for (c, lambda) in modal.iter_mut().zip(eigenvalues) {
                    *c *= Complex64::from_polar(1.0, -lambda * dt / self.hbar);
                }
                let out = eigenvectors * modal;
                amps = out.iter().copied().collect();
            }
        }
        Ok(SystemState { space: state.space(), amplitudes: amps })
    }
}

/// One-shot U(dt)·state.
pub fn evolve(state: &SystemState, h: &HamiltonianSpec, dt: f64, cfg: &EvolveConfig) -> Result<SystemState> {
    Propagator::new(h, &state.space(), cfg)?.evolve(state, dt)
}

/// Per-tick states over a clock window, anchored at t = 0 mid-window.
#[derive(Clone, Debug)]
pub struct Trajectory {
    grid: ClockGrid,
    states: Vec<SystemState>,
    anchor: SystemState,
    max_norm_drift: f64,
}

impl Trajectory {
    /// Assemble a trajectory from explicit per-tick states.
    pub fn from_states(grid: ClockGrid, states: Vec<SystemState>, anchor: SystemState) -> Result<Self> {
        if states.len() != grid.n_ticks() {
            return Err(mismatch(format!(
                "{} states for {} ticks",
                states.len(),
                grid.n_ticks()
            )));
        }
        let space = states[0].space();
        let mut max_norm_drift = 0.0_f64;
        for (j, s) in states.iter().enumerate() {
            if s.space() != space {
                return Err(mismatch(format!("state {j} lives in a different space")));
            }
            let drift = (s.norm() - 1.0).abs();
            if drift > DRIFT_LIMIT {
                return Err(Error::PropagationInstability { tick: j, drift, limit: DRIFT_LIMIT });
            }
            max_norm_drift = max_norm_drift.max(drift);
        }
        Ok(Self { grid, states, anchor, max_norm_drift })
    }

    pub fn grid(&self) -> &ClockGrid {
        &self.grid
    }

    pub fn n_ticks(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[SystemState] {
        &self.states
    }

    pub fn state(&self, j: usize) -> Result<&SystemState> {
        self.states
            .get(j)
            .ok_or_else(|| invalid(format!("tick index {j} out of range 0..{}", self.states.len())))
    }

    pub fn anchor(&self) -> &SystemState {
        &self.anchor
    }

    pub fn space(&self) -> SystemSpace {
        self.states[0].space()
    }

    pub fn max_norm_drift(&self) -> f64 {
        self.max_norm_drift
    }

    /// Largest |ψ|² mass within `band` grid points of the spatial boundary,
    /// over all ticks. Returns 0 for finite systems.
    pub fn boundary_mass(&self, band: usize) -> f64 {
        match self.space() {
            SystemSpace::Finite { .. } => 0.0,
            SystemSpace::Position { n_points, .. } => {
                let w = self.space().weight();
                let mut worst = 0.0_f64;
                for s in &self.states {
                    let a = s.amplitudes();
                    let mut mass = 0.0;
                    for i in 0..band.min(n_points) {
                        mass += w * a[i].norm_sqr();
                        mass += w * a[n_points - 1 - i].norm_sqr();
                    }
                    worst = worst.max(mass);
                }
                worst
            }
        }
    }
}

/// Propagate `anchor` (the t = 0 state) across the whole grid by sequential
/// stepping: forward from 0 to +T/2 and backward from 0 to -T/2.
pub fn propagate_trajectory(
    anchor: &SystemState,
    h: &HamiltonianSpec,
    grid: &ClockGrid,
    cfg: &EvolveConfig,
) -> Result<Trajectory> {
    let drift0 = (anchor.norm() - 1.0).abs();
    if drift0 > NORM_TOL {
        return Err(invalid(format!(
            "anchor state is not normalized: |norm - 1| = {drift0:.3e}"
        )));
    }
    let effective = EvolveConfig {
        hbar: cfg.hbar,
        dt_max: Some(cfg.dt_max.unwrap_or(grid.dt() / 8.0)),
    };
    let prop = Propagator::new(h, &anchor.space(), &effective)?;

    let n = grid.n_ticks();
    let mut states: Vec<Option<SystemState>> = vec![None; n];
    let mut max_norm_drift = 0.0_f64;

    let mut walk = |indices: Vec<usize>| -> Result<()> {
        let mut current = anchor.clone();
        let mut t_current = 0.0;
        for j in indices {
            let t = grid.tick_time(j);
            current = prop.evolve(&current, t - t_current)?;
            t_current = t;
            let drift = (current.norm() - 1.0).abs();
            if drift > DRIFT_LIMIT {
                return Err(Error::PropagationInstability { tick: j, drift, limit: DRIFT_LIMIT });
            }
            max_norm_drift = max_norm_drift.max(drift);
            states[j] = Some(current.clone());
        }
        Ok(())
    };

    let forward: Vec<usize> = (0..n).filter(|&j| grid.tick_time(j) >= 0.0).collect();
    let backward: Vec<usize> = (0..n).rev().filter(|&j| grid.tick_time(j) < 0.0).collect();
    walk(forward)?;
    walk(backward)?;

    let states: Vec<SystemState> = states.into_iter().map(|s| s.expect("all ticks visited")).collect();
    Ok(Trajectory {
        grid: grid.clone(),
        states,
        anchor: anchor.clone(),
        max_norm_drift,
    })
}
