//! Event-time statistics by Born-rule conditioning on the clock.
//!
//! The per-tick arrival projectors Π_j = |t_j⟩⟨t_j| ⊗ P together with the
//! "not arrived" element Π_na = 1 - Σ_j Π_j form a POVM on the history
//! state. The joint masses q_j = (Δt/T)·Tr[P ρ(t_j)] give the conditional
//! event-time distribution after Bayes normalization; their sum times T is
//! the dwell time.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::clock::ClockGrid;
use crate::dynamics::{SystemSpace, SystemState, Trajectory};
use crate::{invalid, mismatch, Error, Result};

/// Default relative threshold below which the event counts as never
/// occurring (case where numerator and denominator both vanish).
pub const EPS_NEVER_DEFAULT: f64 = 1e-12;

/// Hermitian idempotent selecting the event subspace.
#[derive(Clone, Debug)]
pub enum EventProjector {
    /// P_d = ∫_D dx |x⟩⟨x| for a spatial detector interval D.
    SpatialInterval { d_lo: f64, d_hi: f64 },
    /// An explicit finite-dimensional projector.
    Finite { matrix: DMatrix<Complex64> },
}

impl EventProjector {
    pub fn spatial_interval(d_lo: f64, d_hi: f64) -> Result<Self> {
        if !(d_lo < d_hi) {
            return Err(invalid(format!("interval needs d_lo < d_hi, got [{d_lo}, {d_hi}]")));
        }
        Ok(Self::SpatialInterval { d_lo, d_hi })
    }

    /// Validates P† = P and P² = P within 1e-12 in max norm.
    pub fn finite(matrix: DMatrix<Complex64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() == 0 {
            return Err(invalid(format!(
                "projector must be square and nonempty, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let mut herm = 0.0_f64;
        for i in 0..matrix.nrows() {
            for j in 0..matrix.ncols() {
                herm = herm.max((matrix[(i, j)] - matrix[(j, i)].conj()).norm());
            }
        }
        if herm > 1e-12 {
            return Err(invalid(format!("projector deviates from Hermitian by {herm:.3e}")));
        }
        let square = &matrix * &matrix;
        let mut idem = 0.0_f64;
        for i in 0..matrix.nrows() {
            for j in 0..matrix.ncols() {
                idem = idem.max((square[(i, j)] - matrix[(i, j)]).norm());
            }
        }
        if idem > 1e-12 {
            return Err(invalid(format!("projector deviates from idempotent by {idem:.3e}")));
        }
        Ok(Self::Finite { matrix })
    }

    /// Projector onto a set of basis states of a d-dimensional space.
    pub fn onto_basis(dim: usize, kept: &[usize]) -> Result<Self> {
        let mut m = DMatrix::from_element(dim, dim, Complex64::new(0.0, 0.0));
        for &k in kept {
            if k >= dim {
                return Err(invalid(format!("basis index {k} out of range for dim {dim}")));
            }
            m[(k, k)] = Complex64::new(1.0, 0.0);
        }
        Self::finite(m)
    }

    pub fn compatible_with(&self, space: &SystemSpace) -> bool {
        match (self, space) {
            (EventProjector::SpatialInterval { .. }, SystemSpace::Position { .. }) => true,
            (EventProjector::Finite { matrix }, SystemSpace::Finite { dim }) => {
                matrix.nrows() == *dim
            }
            _ => false,
        }
    }
}

/// Tr[|ψ⟩⟨ψ| P]: probability of the event in `state`.
///
/// Spatial intervals use Δx-weighted sums with half weights on the two
/// boundary grid points (the sharp interval is under-specified on a grid).
pub fn event_probability_at(state: &SystemState, p: &EventProjector) -> Result<f64> {
    if !p.compatible_with(&state.space()) {
        return Err(mismatch("projector incompatible with state space".to_string()));
    }
    let raw = match p {
        EventProjector::SpatialInterval { d_lo, d_hi } => match state.space() {
            SystemSpace::Position { x_min, x_max, n_points } => {
                let dx = (x_max - x_min) / n_points as f64;
                let first = ((d_lo - x_min) / dx).ceil().max(0.0) as usize;
                let last_f = ((d_hi - x_min) / dx).floor();
                if last_f < first as f64 {
                    return Ok(0.0);
                }
                let last = (last_f as usize).min(n_points - 1);
                if first > last {
                    return Ok(0.0);
                }
                let a = state.amplitudes();
                let mut sum = 0.0;
                for i in first..=last {
                    let w = if (i == first || i == last) && last > first { 0.5 } else { 1.0 };
                    sum += w * a[i].norm_sqr();
                }
                dx * sum
            }
            SystemSpace::Finite { .. } => unreachable!("checked by compatible_with"),
        },
        EventProjector::Finite { matrix } => {
            let v = DVector::from_column_slice(state.amplitudes());
            let pv = matrix * &v;
            v.dotc(&pv).re
        }
    };
    clamp_probability(raw)
}

fn clamp_probability(raw: f64) -> Result<f64> {
    if raw < -1e-9 || raw > 1.0 + 1e-9 {
        return Err(invalid(format!("event probability {raw} outside [0, 1] beyond tolerance")));
    }
    Ok(raw.clamp(0.0, 1.0))
}

/// Joint per-tick masses q_j = (Δt/T)·Tr[P ρ(t_j)]: the probability that
/// the clock reads t_j and the event holds.
pub fn joint_probability(traj: &Trajectory, p: &EventProjector) -> Result<Vec<f64>> {
    let grid = traj.grid();
    let scale = grid.dt() / grid.window();
    traj.states()
        .iter()
        .map(|s| Ok(scale * event_probability_at(s, p)?))
        .collect()
}

/// Probability that the event occurs at no tick: 1 - Σ_j q_j, the POVM
/// complement of the per-tick arrival projectors.
pub fn not_arrived_probability(traj: &Trajectory, p: &EventProjector) -> Result<f64> {
    let total: f64 = joint_probability(traj, p)?.iter().sum();
    Ok((1.0 - total).clamp(0.0, 1.0))
}

/// T·Σ_j q_j: window-integrated probability of finding the system in the
/// event subspace. Zero is allowed here; interpretation is the caller's.
pub fn dwell_time(traj: &Trajectory, p: &EventProjector) -> Result<f64> {
    let total: f64 = joint_probability(traj, p)?.iter().sum();
    let t = traj.grid().window();
    Ok((t * total).min(t))
}

/// Conditional event-time distribution with its normalization metadata.
#[derive(Clone, Debug)]
pub struct EventTimeDistribution {
    grid: ClockGrid,
    probs: Vec<f64>,
    dwell_time: f64,
    arrival_probability: f64,
}

impl EventTimeDistribution {
    /// Bayes-normalize unnormalized per-tick joint masses.
    pub(crate) fn from_joint_masses(grid: &ClockGrid, masses: &[f64], eps_never: f64) -> Result<Self> {
        if masses.len() != grid.n_ticks() {
            return Err(mismatch(format!(
                "{} masses for {} ticks",
                masses.len(),
                grid.n_ticks()
            )));
        }
        if let Some(bad) = masses.iter().find(|m| !m.is_finite() || **m < -1e-12) {
            return Err(invalid(format!("joint mass {bad} is not a probability")));
        }
        let total: f64 = masses.iter().sum();
        if total < eps_never {
            return Err(Error::NeverOccurs { mass: total, threshold: eps_never });
        }
        let probs = masses.iter().map(|m| m.max(0.0) / total).collect();
        let window = grid.window();
        Ok(Self {
            grid: grid.clone(),
            probs,
            dwell_time: (window * total).min(window),
            arrival_probability: total.min(1.0),
        })
    }

    pub fn grid(&self) -> &ClockGrid {
        &self.grid
    }

    pub fn window_t(&self) -> f64 {
        self.grid.window()
    }

    /// Per-tick masses (density × Δt); they sum to 1.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Density view: probs[j]/Δt.
    pub fn densities(&self) -> Vec<f64> {
        let inv = 1.0 / self.grid.dt();
        self.probs.iter().map(|p| p * inv).collect()
    }

    pub fn dwell_time(&self) -> f64 {
        self.dwell_time
    }

    pub fn arrival_probability(&self) -> f64 {
        self.arrival_probability
    }

    /// L1 distance between per-tick masses; grids must agree.
    pub fn l1_distance(&self, other: &EventTimeDistribution) -> Result<f64> {
        if !self.grid.same_discretization(&other.grid) {
            return Err(mismatch("distributions on different grids".to_string()));
        }
        Ok(self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .sum())
    }

    /// Largest |Δ| between per-tick masses; grids must agree.
    pub fn max_norm_distance(&self, other: &EventTimeDistribution) -> Result<f64> {
        if !self.grid.same_discretization(&other.grid) {
            return Err(mismatch("distributions on different grids".to_string()));
        }
        Ok(self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Indices of local maxima whose mass exceeds `threshold`.
    pub fn local_maxima(&self, threshold: f64) -> Vec<usize> {
        let p = &self.probs;
        (1..p.len().saturating_sub(1))
            .filter(|&j| p[j] > p[j - 1] && p[j] >= p[j + 1] && p[j] > threshold)
            .collect()
    }

    /// Median per-tick mass.
    pub fn median_mass(&self) -> f64 {
        let mut sorted = self.probs.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = sorted.len();
        if n % 2 == 0 {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        } else {
            sorted[n / 2]
        }
    }
}

/// Conditional arrival distribution p(t_j | event) via the Bayes rule, with
/// the default never-occurs threshold.
pub fn arrival_distribution(traj: &Trajectory, p: &EventProjector) -> Result<EventTimeDistribution> {
    arrival_distribution_with(traj, p, EPS_NEVER_DEFAULT)
}

/// [`arrival_distribution`] with an explicit never-occurs threshold on the
/// total joint mass.
pub fn arrival_distribution_with(
    traj: &Trajectory,
    p: &EventProjector,
    eps_never: f64,
) -> Result<EventTimeDistribution> {
    let masses = joint_probability(traj, p)?;
    EventTimeDistribution::from_joint_masses(traj.grid(), &masses, eps_never)
}

/// Expectation of the arrival observable Σ_j t_j Π_j + λ Π_na. This is not
/// the mean arrival time: λ weights the not-arrived branch.
pub fn arrival_observable_expectation(
    traj: &Trajectory,
    p: &EventProjector,
    lambda: f64,
) -> Result<f64> {
    let masses = joint_probability(traj, p)?;
    let grid = traj.grid();
    let arrived: f64 = masses
        .iter()
        .enumerate()
        .map(|(j, q)| grid.tick_time(j) * q)
        .sum();
    let total: f64 = masses.iter().sum();
    Ok(arrived + lambda * (1.0 - total).clamp(0.0, 1.0))
}

/// The two components of the vector-valued event-time observable plus the
/// derived mean event time and its variance.
#[derive(Clone, Copy, Debug)]
pub struct VectorObservableResult {
    /// ⟨T̂₁⟩ = Σ_j t_j q_j, seconds.
    pub mean_t1: f64,
    /// ⟨T̂₂⟩ = probability the event never occurs, dimensionless.
    pub mean_t2: f64,
    /// Bayes constant 1/dwell-time, 1/seconds.
    pub alpha: f64,
    /// Mean event time t_ev = α·T·⟨T̂₁⟩ = Σ_j t_j p(t_j|event), seconds.
    pub t_ev: f64,
    /// Var of the event time under the conditional distribution, seconds².
    pub var_t_ev: f64,
}

/// Evaluate the vector observable with the default never-occurs threshold.
pub fn vector_observable(traj: &Trajectory, p: &EventProjector) -> Result<VectorObservableResult> {
    vector_observable_with(traj, p, EPS_NEVER_DEFAULT)
}

/// [`vector_observable`] with an explicit never-occurs threshold. When the
/// event never occurs α diverges, so the never case is an error rather
/// than a zero mean time.
pub fn vector_observable_with(
    traj: &Trajectory,
    p: &EventProjector,
    eps_never: f64,
) -> Result<VectorObservableResult> {
    let masses = joint_probability(traj, p)?;
    let grid = traj.grid();
    let total: f64 = masses.iter().sum();
    if total < eps_never {
        return Err(Error::NeverOccurs { mass: total, threshold: eps_never });
    }
    let mean_t1: f64 = masses
        .iter()
        .enumerate()
        .map(|(j, q)| grid.tick_time(j) * q)
        .sum();
    let mean_t2 = (1.0 - total).clamp(0.0, 1.0);
    let dwell = grid.window() * total;
    let alpha = 1.0 / dwell;
    let t_ev = mean_t1 / total;
    let second_moment: f64 = masses
        .iter()
        .enumerate()
        .map(|(j, q)| grid.tick_time(j).powi(2) * q / total)
        .sum();
    Ok(VectorObservableResult {
        mean_t1,
        mean_t2,
        alpha,
        t_ev,
        var_t_ev: second_moment - t_ev * t_ev,
    })
}

/// The state of the system given that the clock reads t_j, i.e. the
/// renormalized tick state.
pub fn condition_on_time(traj: &Trajectory, j: usize) -> Result<SystemState> {
    traj.state(j)?.normalized()
}
