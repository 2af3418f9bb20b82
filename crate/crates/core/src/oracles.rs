//! Independent reference computations: closed-form free-Gaussian evolution,
//! probability-current (flux) arrival distributions, brute-force Born-rule
//! conditionals on explicit tensor vectors, and the random-instance
//! generator used by the verification suites.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::FftPlanner;

use crate::clock::ClockGrid;
use crate::dynamics::{wavenumbers, GaussianParams, HamiltonianSpec, SystemSpace, SystemState, Trajectory};
use crate::eventtime::{EventProjector, EventTimeDistribution};
use crate::history::TensorHistory;
use crate::{invalid, mismatch, Error, Result};

/// Analytic freely evolving Gaussian with the same t = 0 convention as
/// [`crate::dynamics::gaussian_packet`]: center x0 + p0·t/m and complex
/// width σ_t = σ(1 + iħt/(2mσ²)).
pub fn free_gaussian_closed_form(params: &GaussianParams, t: f64, x: f64, hbar: f64) -> Complex64 {
    let GaussianParams { x0, p0, sigma, mass } = *params;
    let v = p0 / mass;
    let sigma_t = Complex64::new(sigma, hbar * t / (2.0 * mass * sigma));
    let prefactor = (2.0 * std::f64::consts::PI * sigma * sigma).powf(-0.25)
        * (Complex64::new(sigma, 0.0) / sigma_t).sqrt();
    let gauss = (-(x - x0 - v * t).powi(2) / (4.0 * sigma * sigma_t)).exp();
    let plane = Complex64::from_polar(1.0, p0 * (x - 0.5 * v * t) / hbar);
    prefactor * gauss * plane
}

/// Probability current J = (ħ/m)·Im(ψ* ∂ψ/∂x) at the grid point nearest
/// `x_d`, with the derivative taken spectrally. Positive for rightward flow.
pub fn probability_current(state: &SystemState, x_d: f64, mass: f64, hbar: f64) -> Result<f64> {
    let SystemSpace::Position { x_min, x_max, n_points } = state.space() else {
        return Err(mismatch("probability current needs a position-grid state".to_string()));
    };
    if !(x_d >= x_min && x_d < x_max) {
        return Err(invalid(format!("detector position {x_d} outside grid [{x_min}, {x_max})")));
    }
    let dx = (x_max - x_min) / n_points as f64;
    let idx = (((x_d - x_min) / dx).round() as usize).min(n_points - 1);

    let mut buf = state.amplitudes().to_vec();
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(n_points).process(&mut buf);
    for (b, k) in buf.iter_mut().zip(wavenumbers(x_min, x_max, n_points)) {
        *b *= Complex64::new(0.0, k);
    }
    planner.plan_fft_inverse(n_points).process(&mut buf);
    let derivative = buf[idx] / n_points as f64;
    Ok(hbar / mass * (state.amplitudes()[idx].conj() * derivative).im)
}

/// Flux-based arrival distribution at a pointlike detector.
#[derive(Clone, Debug)]
pub struct FluxDistribution {
    grid: ClockGrid,
    masses: Vec<f64>,
    raw_density: Vec<f64>,
    x_d: f64,
    clipped_mass_fraction: f64,
}

impl FluxDistribution {
    pub fn grid(&self) -> &ClockGrid {
        &self.grid
    }

    /// Normalized per-tick masses after positivity filtering.
    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    /// Raw current samples J(t_j), including negative values.
    pub fn raw_density(&self) -> &[f64] {
        &self.raw_density
    }

    pub fn x_d(&self) -> f64 {
        self.x_d
    }

    /// Fraction of the total |J| mass removed by clipping negatives.
    pub fn clipped_mass_fraction(&self) -> f64 {
        self.clipped_mass_fraction
    }

    pub fn peak_tick(&self) -> usize {
        self.masses
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap_or(0)
    }

    pub fn peak_time(&self) -> f64 {
        self.grid.tick_time(self.peak_tick())
    }

    /// L1 distance between these masses and an event-time distribution on
    /// the same grid.
    pub fn l1_vs(&self, dist: &EventTimeDistribution) -> Result<f64> {
        if !self.grid.same_discretization(dist.grid()) {
            return Err(mismatch("flux and event-time distributions on different grids".to_string()));
        }
        Ok(self
            .masses
            .iter()
            .zip(dist.probs())
            .map(|(a, b)| (a - b).abs())
            .sum())
    }
}

/// Sample the probability current at `x_d` along a trajectory and normalize
/// the positive part into an arrival distribution.
pub fn flux_arrival_distribution(
    traj: &Trajectory,
    x_d: f64,
    mass: f64,
    hbar: f64,
) -> Result<FluxDistribution> {
    let raw_density: Vec<f64> = traj
        .states()
        .iter()
        .map(|s| probability_current(s, x_d, mass, hbar))
        .collect::<Result<_>>()?;
    let positive: f64 = raw_density.iter().map(|j| j.max(0.0)).sum();
    let negative: f64 = raw_density.iter().map(|j| (-j).max(0.0)).sum();
    if positive <= 0.0 {
        return Err(Error::NoFlux);
    }
    let masses = raw_density.iter().map(|j| j.max(0.0) / positive).collect();
    Ok(FluxDistribution {
        grid: traj.grid().clone(),
        masses,
        raw_density,
        x_d,
        clipped_mass_fraction: negative / (positive + negative),
    })
}

/// Explicit-vector size guard for the brute-force conditional.
const BRUTE_FORCE_GUARD: usize = 1 << 16;
/// Below this flat dimension the joint projector is materialized densely.
const DENSE_PROJECTOR_LIMIT: usize = 1024;

/// First-principles conditional event-time distribution: for every tick the
/// joint projector Π_j = |t_j⟩⟨t_j| ⊗ P is applied to the explicit history
/// vector, ⟨Ψ|Π_j|Ψ⟩ is evaluated, and the masses are Bayes-normalized.
pub fn brute_force_conditional(
    th: &TensorHistory,
    p: &EventProjector,
    eps_never: f64,
) -> Result<EventTimeDistribution> {
    let n = th.grid().n_ticks();
    let d = th.dim_s();
    let flat = n * d;
    if flat > BRUTE_FORCE_GUARD {
        return Err(Error::SizeGuard(format!(
            "brute-force conditional limited to N·d ≤ {BRUTE_FORCE_GUARD}, got {flat}"
        )));
    }
    if !p.compatible_with(&th.space()) {
        return Err(mismatch("projector incompatible with history system space".to_string()));
    }

    let masses: Vec<f64> = match p {
        EventProjector::Finite { matrix } if flat <= DENSE_PROJECTOR_LIMIT => {
            // Materialize the full joint projector per tick and evaluate the
            // quadratic form on the flat vector.
            let psi = nalgebra::DVector::from_column_slice(th.amplitudes());
            (0..n)
                .map(|j| {
                    let mut pi = DMatrix::from_element(flat, flat, Complex64::new(0.0, 0.0));
                    for a in 0..d {
                        for b in 0..d {
                            pi[(j * d + a, j * d + b)] = matrix[(a, b)];
                        }
                    }
                    let v = &pi * &psi;
                    psi.dotc(&v).re.max(0.0)
                })
                .collect()
        }
        EventProjector::Finite { matrix } => (0..n)
            .map(|j| {
                let block = th.block(j);
                let v = nalgebra::DVector::from_column_slice(block);
                let pv = matrix * &v;
                v.dotc(&pv).re.max(0.0)
            })
            .collect(),
        EventProjector::SpatialInterval { .. } => (0..n)
            .map(|j| crate::history::born_probability(th, j, p))
            .collect::<Result<_>>()?,
    };

    EventTimeDistribution::from_joint_masses(th.grid(), &masses, eps_never)
}

/// A randomly generated finite-dimensional scenario for verification runs.
#[derive(Clone, Debug)]
pub struct RandomInstance {
    pub grid: ClockGrid,
    pub anchor: SystemState,
    pub hamiltonian: HamiltonianSpec,
    pub projector: EventProjector,
}

/// Deterministic pseudo-random instance: a Haar-random pure anchor, a
/// random Hermitian Hamiltonian with spectral radius capped at 4π/T (so
/// the dynamics stays resolved by the tick grid), and a Haar-random
/// projector of rank 1..d.
pub fn random_finite_instance(
    seed: u64,
    max_ticks: usize,
    max_dim: usize,
    window_t: f64,
) -> Result<RandomInstance> {
    if max_ticks < 2 || max_dim < 2 {
        return Err(invalid("need max_ticks ≥ 2 and max_dim ≥ 2".to_string()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let n = rng.random_range(2..=max_ticks);
    let d = rng.random_range(2..=max_dim);
    let grid = ClockGrid::new(window_t, n)?;

    let draw = |rng: &mut ChaCha8Rng| Complex64::new(normal.sample(rng), normal.sample(rng));

    let anchor = SystemState::finite((0..d).map(|_| draw(&mut rng)).collect())?.normalized()?;

    let raw = DMatrix::from_fn(d, d, |_, _| draw(&mut rng));
    let mut h = (&raw + raw.adjoint()) * Complex64::new(0.5, 0.0);
    let radius = h
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(0.0_f64, |acc, l| acc.max(l.abs()));
    let cap = 4.0 * std::f64::consts::PI / window_t;
    if radius > cap {
        h *= Complex64::new(cap / radius, 0.0);
    }
    let hamiltonian = HamiltonianSpec::finite_matrix(h)?;

    let rank = rng.random_range(1..d);
    let unitary_seed = DMatrix::from_fn(d, d, |_, _| draw(&mut rng));
    let q = unitary_seed.qr().q();
    let mut p = DMatrix::from_element(d, d, Complex64::new(0.0, 0.0));
    for r in 0..rank {
        let col = q.column(r);
        for i in 0..d {
            for k in 0..d {
                p[(i, k)] += col[i] * col[k].conj();
            }
        }
    }
    // Symmetrize away the last few ulps so the idempotency gate holds.
    let p = (&p + p.adjoint()) * Complex64::new(0.5, 0.0);
    let projector = EventProjector::finite(p)?;

    Ok(RandomInstance { grid, anchor, hamiltonian, projector })
}
