//! Explicit tensor-product history states and their extensions.
//!
//! A [`TensorHistory`] flattens a trajectory into the clock ⊗ system vector
//! with entries (1/√N)·ψ_k(t_j); Born-rule evaluation on this vector is the
//! reference the per-tick path must reproduce. [`MemoryHistory`] adds a
//! memory register recording a measurement (or preparation) at a fixed
//! clock time, and [`BranchEnsemble`] carries decohered branches whose
//! reduced state replaces the pure-state density in the event-time
//! distribution.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::clock::ClockGrid;
use crate::dynamics::{EvolveConfig, HamiltonianSpec, Propagator, SystemSpace, SystemState, Trajectory};
use crate::eventtime::{event_probability_at, EventProjector, EventTimeDistribution};
use crate::{invalid, mismatch, Error, Result};

/// The flat clock ⊗ system history vector.
#[derive(Clone, Debug)]
pub struct TensorHistory {
    grid: ClockGrid,
    space: SystemSpace,
    /// Entry (j, k) at j·d + k equals (1/√N)·ψ_k(t_j).
    amplitudes: Vec<Complex64>,
}

impl TensorHistory {
    pub fn grid(&self) -> &ClockGrid {
        &self.grid
    }

    pub fn space(&self) -> SystemSpace {
        self.space
    }

    pub fn dim_s(&self) -> usize {
        self.space.dim()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    /// Amplitudes of the tick-j block.
    pub fn block(&self, j: usize) -> &[Complex64] {
        let d = self.dim_s();
        &self.amplitudes[j * d..(j + 1) * d]
    }

    /// ⟨Ψ|Ψ⟩ with the system quadrature weight.
    pub fn norm_sq(&self) -> f64 {
        self.space.weight() * self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>()
    }
}

/// Flatten a trajectory into the explicit history vector.
pub fn build_tensor_history(traj: &Trajectory) -> TensorHistory {
    let n = traj.n_ticks();
    let d = traj.space().dim();
    let scale = 1.0 / (n as f64).sqrt();
    let mut amplitudes = Vec::with_capacity(n * d);
    for state in traj.states() {
        amplitudes.extend(state.amplitudes().iter().map(|a| a * scale));
    }
    TensorHistory { grid: traj.grid().clone(), space: traj.space(), amplitudes }
}

/// ⟨Ψ| (|t_j⟩⟨t_j| ⊗ P) |Ψ⟩ evaluated directly on the flat vector.
pub fn born_probability(th: &TensorHistory, tick: usize, p: &EventProjector) -> Result<f64> {
    if tick >= th.grid.n_ticks() {
        return Err(invalid(format!(
            "tick index {tick} out of range 0..{}",
            th.grid.n_ticks()
        )));
    }
    if !p.compatible_with(&th.space) {
        return Err(mismatch("projector incompatible with history system space".to_string()));
    }
    let block = th.block(tick);
    match p {
        EventProjector::Finite { matrix } => {
            let v = DVector::from_column_slice(block);
            let pv = matrix * &v;
            Ok(v.dotc(&pv).re.max(0.0))
        }
        EventProjector::SpatialInterval { .. } => {
            // Reuse the interval quadrature on the raw block; the 1/√N clock
            // weight rides along in the amplitudes.
            let probe = match th.space {
                SystemSpace::Position { x_min, x_max, .. } => {
                    SystemState::position_wave(x_min, x_max, block.to_vec())?
                }
                SystemSpace::Finite { .. } => unreachable!("checked by compatible_with"),
            };
            let w = probe.norm_sq();
            if w == 0.0 {
                return Ok(0.0);
            }
            // event_probability_at expects a state; scale the quadratic form
            // back up by the block weight.
            let normalized = probe.normalized()?;
            Ok(w * event_probability_at(&normalized, p)?)
        }
    }
}

/// Which construction produced a [`MemoryHistory`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MemoryKind {
    /// Measurement at t_a with one memory slot per outcome.
    Measurement,
    /// Preparation at t = 0: one kept outcome plus a discarded sector.
    Preparation,
}

/// History of system ⊗ memory over the clock window, with a von Neumann
/// pre-measurement written at one tick.
///
/// Memory slot 0 is the ready state |r⟩; slots 1.. are outcome records.
#[derive(Clone, Debug)]
pub struct MemoryHistory {
    grid: ClockGrid,
    space: SystemSpace,
    dim_m: usize,
    measure_tick: usize,
    requested_time: f64,
    kind: MemoryKind,
    /// Entry (j, k, m) at (j·d + k)·dim_m + m.
    amplitudes: Vec<Complex64>,
}

/// Guard on explicit clock ⊗ system ⊗ memory vectors.
const MEMORY_SIZE_GUARD: usize = 1 << 22;

impl MemoryHistory {
    pub fn grid(&self) -> &ClockGrid {
        &self.grid
    }

    pub fn dim_s(&self) -> usize {
        self.space.dim()
    }

    pub fn dim_m(&self) -> usize {
        self.dim_m
    }

    /// Tick the measurement snapped to.
    pub fn measure_tick(&self) -> usize {
        self.measure_tick
    }

    /// The measurement time as requested, before tick snapping.
    pub fn requested_time(&self) -> f64 {
        self.requested_time
    }

    pub fn kind(&self) -> MemoryKind {
        self.kind
    }

    pub fn norm_sq(&self) -> f64 {
        self.space.weight() * self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>()
    }

    fn amp(&self, j: usize, k: usize, m: usize) -> Complex64 {
        self.amplitudes[(j * self.dim_s() + k) * self.dim_m + m]
    }

    /// Per-memory-slot probabilities conditioned on the clock reading t_j.
    /// Slot 0 is the ready state; the vector sums to 1.
    pub fn memory_outcome_distribution(&self, j: usize) -> Result<Vec<f64>> {
        if j >= self.grid.n_ticks() {
            return Err(invalid(format!("tick index {j} out of range 0..{}", self.grid.n_ticks())));
        }
        let d = self.dim_s();
        let mut probs = vec![0.0; self.dim_m];
        for k in 0..d {
            for (m, pm) in probs.iter_mut().enumerate() {
                *pm += self.amp(j, k, m).norm_sqr();
            }
        }
        let total: f64 = probs.iter().sum();
        if total <= 0.0 {
            return Err(invalid(format!("tick {j} carries no amplitude")));
        }
        for p in probs.iter_mut() {
            *p /= total;
        }
        Ok(probs)
    }

    /// System state given clock t_j and memory slot `m`, renormalized.
    pub fn condition_on_memory(&self, j: usize, m: usize) -> Result<SystemState> {
        if j >= self.grid.n_ticks() {
            return Err(invalid(format!("tick index {j} out of range 0..{}", self.grid.n_ticks())));
        }
        if m >= self.dim_m {
            return Err(invalid(format!("memory slot {m} out of range 0..{}", self.dim_m)));
        }
        let d = self.dim_s();
        let column: Vec<Complex64> = (0..d).map(|k| self.amp(j, k, m)).collect();
        let weight: f64 = column.iter().map(|a| a.norm_sqr()).sum();
        if weight < 1e-24 {
            return Err(invalid(format!(
                "conditioning on memory slot {m} at tick {j} has probability ~0"
            )));
        }
        let state = match self.space {
            SystemSpace::Position { x_min, x_max, .. } => {
                SystemState::position_wave(x_min, x_max, column)?
            }
            SystemSpace::Finite { .. } => SystemState::finite(column)?,
        };
        state.normalized()
    }
}

/// History of an impulsive measurement at clock time `t_a` (snapped to the
/// nearest tick): before t_a the system follows `traj` with the memory
/// ready; from t_a on, each outcome branch ψ_a·U(t-t_a)|a⟩ is recorded in
/// its own memory slot.
pub fn build_measurement_history(
    traj: &Trajectory,
    t_a: f64,
    outcome_basis: &[SystemState],
    post_evolution: &HamiltonianSpec,
    cfg: &EvolveConfig,
) -> Result<MemoryHistory> {
    let grid = traj.grid();
    let n = grid.n_ticks();
    let d = traj.space().dim();
    if outcome_basis.len() != d {
        return Err(mismatch(format!(
            "outcome basis has {} states for dimension {d}",
            outcome_basis.len()
        )));
    }
    for (i, a) in outcome_basis.iter().enumerate() {
        if a.space() != traj.space() {
            return Err(mismatch(format!("outcome state {i} lives in a different space")));
        }
        for (i2, b) in outcome_basis.iter().enumerate() {
            let overlap = a.inner(b)?.norm();
            let expected = if i == i2 { 1.0 } else { 0.0 };
            if (overlap - expected).abs() > 1e-9 {
                return Err(invalid(format!(
                    "outcome basis not orthonormal: |⟨{i}|{i2}⟩| = {overlap}"
                )));
            }
        }
    }
    let dim_m = d + 1;
    if n * d * dim_m > MEMORY_SIZE_GUARD {
        return Err(Error::SizeGuard(format!(
            "memory history needs {} amplitudes (limit {MEMORY_SIZE_GUARD})",
            n * d * dim_m
        )));
    }
    let j_a = grid.nearest_tick(t_a)?;

    // Branch amplitudes from the pre-measurement state at the snapped tick.
    let at_ta = traj.state(j_a)?;
    let weights: Vec<Complex64> = outcome_basis
        .iter()
        .map(|a| a.inner(at_ta))
        .collect::<Result<_>>()?;

    let prop = Propagator::new(post_evolution, &traj.space(), cfg)?;
    let scale = 1.0 / (n as f64).sqrt();
    let mut amplitudes = vec![Complex64::new(0.0, 0.0); n * d * dim_m];

    for j in 0..j_a {
        let psi = traj.state(j)?.amplitudes();
        for k in 0..d {
            amplitudes[(j * d + k) * dim_m] = scale * psi[k];
        }
    }
    // Evolve each outcome branch sequentially across the post-measurement
    // ticks. Slot a+1 records outcome a.
    for (a, basis_state) in outcome_basis.iter().enumerate() {
        let mut branch = basis_state.clone();
        let mut t_current = grid.tick_time(j_a);
        for j in j_a..n {
            let t = grid.tick_time(j);
            branch = prop.evolve(&branch, t - t_current)?;
            t_current = t;
            let amps = branch.amplitudes();
            for k in 0..d {
                amplitudes[(j * d + k) * dim_m + a + 1] = scale * weights[a] * amps[k];
            }
        }
    }

    Ok(MemoryHistory {
        grid: grid.clone(),
        space: traj.space(),
        dim_m,
        measure_tick: j_a,
        requested_time: t_a,
        kind: MemoryKind::Measurement,
        amplitudes,
    })
}

/// Memory slot layout of a preparation history.
pub const PREP_SLOT_READY: usize = 0;
pub const PREP_SLOT_KEPT: usize = 1;
pub const PREP_SLOT_DISCARDED: usize = 2;

/// History of a preparation of `psi0` at t = 0 by measurement and
/// post-selection: negative ticks hold `pre_state` with the memory ready;
/// from t = 0 the kept branch carries U(t)·psi0 with weight ⟨psi0|pre⟩ and
/// the rest of the amplitude sits in a discarded flag sector.
pub fn build_preparation_history(
    psi0: &SystemState,
    pre_state: &SystemState,
    grid: &ClockGrid,
    h: &HamiltonianSpec,
    cfg: &EvolveConfig,
) -> Result<MemoryHistory> {
    if psi0.space() != pre_state.space() {
        return Err(mismatch("psi0 and pre_state live in different spaces".to_string()));
    }
    for (name, s) in [("psi0", psi0), ("pre_state", pre_state)] {
        if (s.norm() - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("{name} is not normalized")));
        }
    }
    let n = grid.n_ticks();
    let d = psi0.dim();
    let dim_m = 3;
    if n * d * dim_m > MEMORY_SIZE_GUARD {
        return Err(Error::SizeGuard(format!(
            "preparation history needs {} amplitudes (limit {MEMORY_SIZE_GUARD})",
            n * d * dim_m
        )));
    }

    let kept_weight = psi0.inner(pre_state)?;
    let discarded_weight = (1.0 - kept_weight.norm_sqr()).max(0.0).sqrt();
    let scale = 1.0 / (n as f64).sqrt();
    let mut amplitudes = vec![Complex64::new(0.0, 0.0); n * d * dim_m];

    let j0 = (0..n)
        .find(|&j| grid.tick_time(j) >= 0.0)
        .ok_or_else(|| invalid("window has no nonnegative tick".to_string()))?;

    for j in 0..j0 {
        let pre = pre_state.amplitudes();
        for k in 0..d {
            amplitudes[(j * d + k) * dim_m + PREP_SLOT_READY] = scale * pre[k];
        }
    }

    let prop = Propagator::new(h, &psi0.space(), cfg)?;
    let mut kept = psi0.clone();
    let mut t_current = 0.0;
    for j in j0..n {
        let t = grid.tick_time(j);
        kept = prop.evolve(&kept, t - t_current)?;
        t_current = t;
        let amps = kept.amplitudes();
        let psi0_amps = psi0.amplitudes();
        for k in 0..d {
            amplitudes[(j * d + k) * dim_m + PREP_SLOT_KEPT] = scale * kept_weight * amps[k];
            // The discarded sector is a flag, not a modeled beam-stop; only
            // the post-selected statistics matter.
            amplitudes[(j * d + k) * dim_m + PREP_SLOT_DISCARDED] =
                scale * discarded_weight * psi0_amps[k];
        }
    }

    Ok(MemoryHistory {
        grid: grid.clone(),
        space: psi0.space(),
        dim_m,
        measure_tick: j0,
        requested_time: 0.0,
        kind: MemoryKind::Preparation,
        amplitudes,
    })
}

/// A decohered mixture of trajectories with amplitudes μ_k; environment
/// states are represented implicitly by branch orthogonality.
#[derive(Clone, Debug)]
pub struct BranchEnsemble {
    weights: Vec<Complex64>,
    trajectories: Vec<Trajectory>,
}

impl BranchEnsemble {
    /// Branch weights must satisfy Σ|μ_k|² = 1 within 1e-12 and all
    /// trajectories must share the grid and system space.
    pub fn new(weights: Vec<Complex64>, trajectories: Vec<Trajectory>) -> Result<Self> {
        if weights.is_empty() || weights.len() != trajectories.len() {
            return Err(mismatch(format!(
                "{} weights for {} trajectories",
                weights.len(),
                trajectories.len()
            )));
        }
        let total: f64 = weights.iter().map(|w| w.norm_sqr()).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(invalid(format!("branch weights sum to {total}, expected 1")));
        }
        let first = &trajectories[0];
        for t in &trajectories[1..] {
            if !t.grid().same_discretization(first.grid()) || t.space() != first.space() {
                return Err(mismatch("branch trajectories disagree on grid or space".to_string()));
            }
        }
        Ok(Self { weights, trajectories })
    }

    pub fn weights(&self) -> &[Complex64] {
        &self.weights
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn grid(&self) -> &ClockGrid {
        self.trajectories[0].grid()
    }

    /// Unnormalized joint masses q_j = (Δt/T)·Σ_k |μ_k|²·Tr[P ρ_k(t_j)].
    pub fn joint_masses(&self, p: &EventProjector) -> Result<Vec<f64>> {
        let grid = self.grid();
        let scale = grid.dt() / grid.window();
        let n = grid.n_ticks();
        let mut masses = vec![0.0; n];
        for (w, traj) in self.weights.iter().zip(&self.trajectories) {
            let wk = w.norm_sqr();
            for (j, s) in traj.states().iter().enumerate() {
                masses[j] += scale * wk * event_probability_at(s, p)?;
            }
        }
        Ok(masses)
    }
}

/// Event-time distribution of the decohered reduced state: the pure-state
/// density is replaced by ρ_s(t) = Σ_k |μ_k|² |φ_k(t)⟩⟨φ_k(t)|.
pub fn reduced_clock_system_distribution(
    ens: &BranchEnsemble,
    p: &EventProjector,
    eps_never: f64,
) -> Result<EventTimeDistribution> {
    let masses = ens.joint_masses(p)?;
    EventTimeDistribution::from_joint_masses(ens.grid(), &masses, eps_never)
}

/// Size guard for the explicit two-clock construction.
const TWO_CLOCK_GUARD: usize = 4096;
/// Work guard on the explicit trace-out (n³·d² block sums).
const TWO_CLOCK_WORK_GUARD: usize = 100_000_000;

/// Build the synchronized two-clock state |Φ⟩ = (1/√N)Σ_j |t_j⟩|t_j⟩|ψ(t_j)⟩
/// explicitly, trace out the second clock, and return the max-norm
/// deviation of the reduced state from the block-diagonal form
/// (1/N)Σ_j |t_j⟩⟨t_j| ⊗ ρ_s(t_j).
pub fn two_clock_reduction_check(traj: &Trajectory) -> Result<f64> {
    let n = traj.n_ticks();
    let d = traj.space().dim();
    if n * d > TWO_CLOCK_GUARD {
        return Err(Error::SizeGuard(format!(
            "two-clock check limited to N·d ≤ {TWO_CLOCK_GUARD}, got {}",
            n * d
        )));
    }
    if n * n * n * d * d > TWO_CLOCK_WORK_GUARD {
        return Err(Error::SizeGuard(format!(
            "explicit two-clock trace-out too expensive for N = {n}, d = {d}"
        )));
    }
    // Scale amplitudes by √weight so inner products are plain sums.
    let w_sqrt = traj.space().weight().sqrt();
    let scale = w_sqrt / (n as f64).sqrt();

    // Explicit vector over clock₁ ⊗ clock₂ ⊗ system, synchronized ticks.
    let zero = Complex64::new(0.0, 0.0);
    let mut phi = vec![zero; n * n * d];
    for (j, state) in traj.states().iter().enumerate() {
        for (k, a) in state.amplitudes().iter().enumerate() {
            phi[(j * n + j) * d + k] = a * scale;
        }
    }

    // ρ_{c₁s}[(j,k),(j2,k2)] = Σ_{c2} Φ(j,c2,k)·conj(Φ(j2,c2,k2)), compared
    // blockwise against the reference (1/N)·ψ(t_j)ψ(t_j)† on the diagonal
    // and zero off it.
    let mut deviation = 0.0_f64;
    for j in 0..n {
        let psi_j = traj.states()[j].amplitudes();
        for j2 in 0..n {
            let psi_j2 = traj.states()[j2].amplitudes();
            for k in 0..d {
                for k2 in 0..d {
                    let mut sum = zero;
                    for c2 in 0..n {
                        sum += phi[(j * n + c2) * d + k] * phi[(j2 * n + c2) * d + k2].conj();
                    }
                    let reference = if j == j2 {
                        psi_j[k] * psi_j2[k2].conj() * (w_sqrt * w_sqrt / n as f64)
                    } else {
                        zero
                    };
                    deviation = deviation.max((sum - reference).norm());
                }
            }
        }
    }
    Ok(deviation)
}
