//! Discretization of the clock degree of freedom: the finite time window,
//! its conjugate frequency ladder, the unitary transform between the tick
//! basis and the frequency basis, and the constraint-equation residual.
//!
//! Ticks use the midpoint convention t_j = -T/2 + (j + 1/2)·Δt, which
//! avoids double-counting the periodic endpoint and keeps the discrete
//! exponential basis exactly orthogonal on the window.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::dynamics::{HamiltonianSpec, SystemState, Trajectory};
use crate::{invalid, mismatch, Result};

/// A finite time window of length `window_t` split into `n_ticks` uniform
/// midpoint-sampled ticks.
#[derive(Clone, Debug, PartialEq)]
pub struct ClockGrid {
    window_t: f64,
    tick_times: Vec<f64>,
}

impl ClockGrid {
    /// Build a grid over `[-window_t/2, window_t/2]` with `n_ticks` ticks.
    pub fn new(window_t: f64, n_ticks: usize) -> Result<Self> {
        if !window_t.is_finite() || window_t <= 0.0 {
            return Err(invalid(format!("window_T must be positive, got {window_t}")));
        }
        if n_ticks < 2 {
            return Err(invalid(format!("n_ticks must be at least 2, got {n_ticks}")));
        }
        let dt = window_t / n_ticks as f64;
        let tick_times = (0..n_ticks)
            .map(|j| -0.5 * window_t + (j as f64 + 0.5) * dt)
            .collect();
        Ok(Self { window_t, tick_times })
    }

    pub fn window(&self) -> f64 {
        self.window_t
    }

    pub fn n_ticks(&self) -> usize {
        self.tick_times.len()
    }

    pub fn dt(&self) -> f64 {
        self.window_t / self.n_ticks() as f64
    }

    pub fn tick_times(&self) -> &[f64] {
        &self.tick_times
    }

    pub fn tick_time(&self, j: usize) -> f64 {
        self.tick_times[j]
    }

    /// Index of the tick closest to `t`. Errors when `t` lies outside the
    /// window.
    pub fn nearest_tick(&self, t: f64) -> Result<usize> {
        let half = 0.5 * self.window_t;
        if !(t >= -half && t <= half) {
            return Err(invalid(format!(
                "time {t} outside the window [{}, {}]",
                -half, half
            )));
        }
        let raw = ((t + half) / self.dt() - 0.5).round() as isize;
        Ok(raw.clamp(0, self.n_ticks() as isize - 1) as usize)
    }

    /// Grids are interchangeable when window and tick count agree.
    pub fn same_discretization(&self, other: &ClockGrid) -> bool {
        self.n_ticks() == other.n_ticks() && self.window_t == other.window_t
    }
}

/// The conjugate frequency basis: N modes with ω_n = 2πn/T for
/// n ∈ {-⌊N/2⌋, …, ⌈N/2⌉-1}.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyLadder {
    mode_indices: Vec<i64>,
    mode_frequencies: Vec<f64>,
}

impl FrequencyLadder {
    pub fn mode_indices(&self) -> &[i64] {
        &self.mode_indices
    }

    /// Frequencies in rad/s, ordered like the transform output.
    pub fn mode_frequencies(&self) -> &[f64] {
        &self.mode_frequencies
    }

    pub fn n_modes(&self) -> usize {
        self.mode_indices.len()
    }

    /// Position of mode index `n` in the ladder ordering, if present.
    pub fn position_of(&self, n: i64) -> Option<usize> {
        self.mode_indices.iter().position(|&m| m == n)
    }
}

/// Frequency ladder conjugate to `grid`: the clock energy spectrum n·2π/T.
///
/// Modes are ordered in FFT bin order: 0, 1, …, ⌈N/2⌉-1, -⌊N/2⌋, …, -1.
pub fn frequency_ladder(grid: &ClockGrid) -> FrequencyLadder {
    let n = grid.n_ticks() as i64;
    let base = 2.0 * std::f64::consts::PI / grid.window();
    let mode_indices: Vec<i64> = (0..n).map(|b| if 2 * b < n { b } else { b - n }).collect();
    let mode_frequencies = mode_indices.iter().map(|&m| m as f64 * base).collect();
    FrequencyLadder { mode_indices, mode_frequencies }
}

/// Frequency-side components of a history: ψ̃_n per ladder mode.
#[derive(Clone, Debug)]
pub struct ClockSpectrum {
    ladder: FrequencyLadder,
    /// `modes[b]` is the system-space component for `ladder.mode_indices()[b]`.
    modes: Vec<Vec<Complex64>>,
}

impl ClockSpectrum {
    pub fn ladder(&self) -> &FrequencyLadder {
        &self.ladder
    }

    pub fn modes(&self) -> &[Vec<Complex64>] {
        &self.modes
    }

    /// Component for mode index `n`.
    pub fn mode(&self, n: i64) -> Option<&[Complex64]> {
        self.ladder.position_of(n).map(|b| self.modes[b].as_slice())
    }

    /// Squared ℓ² weight carried by each mode, in ladder order.
    pub fn mode_weights(&self) -> Vec<f64> {
        self.modes
            .iter()
            .map(|m| m.iter().map(|a| a.norm_sqr()).sum())
            .collect()
    }
}

/// Unitary transform from the tick basis to the frequency ladder:
///
/// ψ̃_n = (1/√N) Σ_j exp(-i t_j ω_n) ψ(t_j)
///
/// The sign makes ψ̃_n the coefficient of |n⟩ in the history expansion, so
/// a trajectory e^{-iωt}·φ with ω = 2πk/T concentrates on mode n = -k and
/// Σ_n ‖ψ̃_n‖² = Σ_j ‖ψ(t_j)‖².
pub fn clock_fourier(traj: &Trajectory) -> Result<ClockSpectrum> {
    let grid = traj.grid();
    let n = grid.n_ticks();
    let states = traj.states();
    if states.len() != n {
        return Err(mismatch(format!(
            "trajectory has {} states for {} ticks",
            states.len(),
            n
        )));
    }
    let dim = states[0].dim();
    let ladder = frequency_ladder(grid);

    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n);
    let scale = 1.0 / (n as f64).sqrt();
    // Midpoint sampling splits off a mode-dependent phase from the plain DFT:
    // exp(-i t_j ω_n) = exp(iπn(1 - 1/N)) · exp(-2πi nj/N).
    let twiddles: Vec<Complex64> = ladder
        .mode_indices()
        .iter()
        .map(|&m| {
            let phase = std::f64::consts::PI * m as f64 * (1.0 - 1.0 / n as f64);
            Complex64::from_polar(scale, phase)
        })
        .collect();

    let mut modes = vec![vec![Complex64::new(0.0, 0.0); dim]; n];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for k in 0..dim {
        for (j, state) in states.iter().enumerate() {
            buf[j] = state.amplitudes()[k];
        }
        fft.process(&mut buf);
        for (b, twiddle) in twiddles.iter().enumerate() {
            modes[b][k] = twiddle * buf[b];
        }
    }
    Ok(ClockSpectrum { ladder, modes })
}

/// Inverse of [`clock_fourier`]: per-tick amplitude vectors
/// ψ(t_j) = (1/√N) Σ_n exp(+i t_j ω_n) ψ̃_n.
pub fn clock_fourier_inverse(spectrum: &ClockSpectrum, grid: &ClockGrid) -> Result<Vec<Vec<Complex64>>> {
    let n = grid.n_ticks();
    if spectrum.modes.len() != n {
        return Err(mismatch(format!(
            "spectrum has {} modes for {} ticks",
            spectrum.modes.len(),
            n
        )));
    }
    let dim = spectrum.modes[0].len();
    let mut planner = FftPlanner::<f64>::new();
    let ifft = planner.plan_fft_inverse(n);
    let scale = 1.0 / (n as f64).sqrt();
    let twiddles: Vec<Complex64> = spectrum
        .ladder
        .mode_indices()
        .iter()
        .map(|&m| {
            let phase = -std::f64::consts::PI * m as f64 * (1.0 - 1.0 / n as f64);
            Complex64::from_polar(scale, phase)
        })
        .collect();

    let mut rows = vec![vec![Complex64::new(0.0, 0.0); dim]; n];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for k in 0..dim {
        for b in 0..n {
            buf[b] = twiddles[b] * spectrum.modes[b][k];
        }
        ifft.process(&mut buf);
        for (j, row) in rows.iter_mut().enumerate() {
            row[k] = buf[j];
        }
    }
    Ok(rows)
}

/// Residual of the total-energy constraint applied to a discrete history.
#[derive(Clone, Copy, Debug)]
pub struct ConstraintResidual {
    /// ‖(ħΩ ⊗ 1 + 1 ⊗ H_s)Ψ‖ with Ω realized as -i·D_t, D_t the
    /// central difference across ticks with periodic wraparound.
    pub norm: f64,
    /// State distance across the wraparound seam, ‖ψ(t_0) - ψ(t_{N-1})‖.
    pub seam_gap: f64,
    /// Whether the seam step is comparable to interior steps. Boundary
    /// artifacts of non-periodic trajectories are reported, not suppressed.
    pub periodic: bool,
}

/// Evaluate the constraint residual of `traj` under `hamiltonian`.
///
/// For a trajectory obeying the Schrödinger equation and periodic on the
/// window, the residual converges to zero at second order in Δt.
pub fn constraint_residual(
    traj: &Trajectory,
    hamiltonian: &HamiltonianSpec,
    hbar: f64,
) -> Result<ConstraintResidual> {
    if hbar <= 0.0 {
        return Err(invalid(format!("hbar must be positive, got {hbar}")));
    }
    let grid = traj.grid();
    let n = grid.n_ticks();
    let states = traj.states();
    let dim = states[0].dim();
    let weight = states[0].space().weight();
    let two_dt = 2.0 * grid.dt();

    let mut sum_sq = 0.0;
    for j in 0..n {
        let next = states[(j + 1) % n].amplitudes();
        let prev = states[(j + n - 1) % n].amplitudes();
        let h_psi = hamiltonian.apply(&states[j], hbar)?;
        if h_psi.len() != dim {
            return Err(mismatch("hamiltonian output dimension"));
        }
        let mut row_sq = 0.0;
        for k in 0..dim {
            let deriv = (next[k] - prev[k]) / two_dt;
            // ħΩ in the tick basis is -iħ·d/dt; residual vanishes on
            // forward Schrödinger evolution iħ dψ/dt = H ψ.
            let r = Complex64::new(0.0, -hbar) * deriv + h_psi[k];
            row_sq += r.norm_sqr();
        }
        sum_sq += weight * row_sq;
    }
    // The history carries clock weight 1/√N per tick.
    let norm = (sum_sq / n as f64).sqrt();

    let seam_gap = state_distance(&states[0], &states[n - 1]);
    let max_interior = (0..n - 1)
        .map(|j| state_distance(&states[j + 1], &states[j]))
        .fold(0.0_f64, f64::max);
    let periodic = seam_gap <= 5.0 * max_interior + 1e-12;

    Ok(ConstraintResidual { norm, seam_gap, periodic })
}

fn state_distance(a: &SystemState, b: &SystemState) -> f64 {
    let w = a.space().weight();
    let sum: f64 = a
        .amplitudes()
        .iter()
        .zip(b.amplitudes())
        .map(|(x, y)| (x - y).norm_sqr())
        .sum();
    (w * sum).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{propagate_trajectory, EvolveConfig, SystemState};
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;
    use std::f64::consts::PI;

    fn qubit(up: Complex64, down: Complex64) -> SystemState {
        SystemState::finite(vec![up, down]).unwrap()
    }

    #[test]
    fn grid_midpoint_convention() {
        let grid = ClockGrid::new(10.0, 100).unwrap();
        assert_abs_diff_eq!(grid.dt(), 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(grid.tick_time(0), -4.95, epsilon = 1e-12);
        assert_abs_diff_eq!(grid.tick_time(99), 4.95, epsilon = 1e-12);

        let grid = ClockGrid::new(2.0 * PI, 4).unwrap();
        for j in 0..4 {
            let expected = -PI + (j as f64 + 0.5) * PI / 2.0;
            assert_abs_diff_eq!(grid.tick_time(j), expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn grid_uniform_and_symmetric() {
        let grid = ClockGrid::new(7.3, 101).unwrap();
        let dt = grid.dt();
        let n = grid.n_ticks();
        for j in 0..n - 1 {
            let step = grid.tick_time(j + 1) - grid.tick_time(j);
            assert!((step - dt).abs() < 1e-12 * dt);
        }
        for j in 0..n {
            assert!((grid.tick_time(j) + grid.tick_time(n - 1 - j)).abs() < 1e-12 * 7.3);
        }
    }

    #[test]
    fn grid_rejects_bad_arguments() {
        assert!(ClockGrid::new(1.0, 1).is_err());
        assert!(ClockGrid::new(0.0, 16).is_err());
        assert!(ClockGrid::new(-1.0, 16).is_err());
    }

    #[test]
    fn ladder_frequencies() {
        let grid = ClockGrid::new(2.0 * PI, 4).unwrap();
        let ladder = frequency_ladder(&grid);
        let mut freqs: Vec<f64> = ladder.mode_frequencies().to_vec();
        freqs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let expected = [-2.0, -1.0, 0.0, 1.0];
        for (f, e) in freqs.iter().zip(expected) {
            assert_abs_diff_eq!(*f, e, epsilon = 1e-14);
        }

        let grid = ClockGrid::new(1.0, 2).unwrap();
        let ladder = frequency_ladder(&grid);
        let mut freqs: Vec<f64> = ladder.mode_frequencies().to_vec();
        freqs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_abs_diff_eq!(freqs[0], -2.0 * PI, epsilon = 1e-14);
        assert_abs_diff_eq!(freqs[1], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn ladder_has_one_zero_mode_and_exact_spacing() {
        for n in [2usize, 3, 8, 17, 64] {
            let grid = ClockGrid::new(3.7, n).unwrap();
            let ladder = frequency_ladder(&grid);
            assert_eq!(ladder.n_modes(), n);
            let zeros = ladder.mode_indices().iter().filter(|&&m| m == 0).count();
            assert_eq!(zeros, 1);
            let base = 2.0 * PI / 3.7;
            for (m, f) in ladder.mode_indices().iter().zip(ladder.mode_frequencies()) {
                assert_eq!(*f, *m as f64 * base);
            }
        }
    }

    fn constant_trajectory(grid: &ClockGrid, state: SystemState) -> Trajectory {
        let h = HamiltonianSpec::finite_matrix(DMatrix::from_element(
            2,
            2,
            Complex64::new(0.0, 0.0),
        ))
        .unwrap();
        propagate_trajectory(&state, &h, grid, &EvolveConfig::default()).unwrap()
    }

    #[test]
    fn fourier_constant_trajectory_is_zero_mode() {
        let grid = ClockGrid::new(5.0, 16).unwrap();
        let phi = qubit(Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8));
        let traj = constant_trajectory(&grid, phi.clone());
        let spec = clock_fourier(&traj).unwrap();
        let zero = spec.mode(0).unwrap();
        let sqrt_n = 4.0;
        assert_abs_diff_eq!(zero[0].re, 0.6 * sqrt_n, epsilon = 1e-12);
        assert_abs_diff_eq!(zero[1].im, 0.8 * sqrt_n, epsilon = 1e-12);
        for (&m, w) in spec.ladder().mode_indices().iter().zip(spec.mode_weights()) {
            if m != 0 {
                assert!(w < 1e-24, "mode {m} carries weight {w}");
            }
        }
    }

    #[test]
    fn fourier_eigenstate_trajectory_concentrates_on_minus_k() {
        // ψ(t_j) = e^{-i ω_1 t_j} φ with ω_1 = 2π/T occupies mode n = -1:
        // the coefficient of |n⟩ picks up the conjugate phase.
        let grid = ClockGrid::new(4.0, 32).unwrap();
        let omega1 = 2.0 * PI / 4.0;
        let phi = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
        let states: Vec<SystemState> = grid
            .tick_times()
            .iter()
            .map(|&t| {
                let ph = Complex64::from_polar(1.0, -omega1 * t);
                SystemState::finite(vec![ph * phi[0], ph * phi[1]]).unwrap()
            })
            .collect();
        let anchor = states[grid.n_ticks() / 2].clone();
        let traj = Trajectory::from_states(grid.clone(), states, anchor).unwrap();
        let spec = clock_fourier(&traj).unwrap();
        let total: f64 = spec.mode_weights().iter().sum();
        let pos = spec.ladder().position_of(-1).unwrap();
        let w = spec.mode_weights()[pos];
        assert_abs_diff_eq!(w / total, 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(total, grid.n_ticks() as f64, epsilon = 1e-9);
    }

    #[test]
    fn fourier_roundtrip_recovers_random_trajectory() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let grid = ClockGrid::new(3.0, 24).unwrap();
        let states: Vec<SystemState> = (0..grid.n_ticks())
            .map(|_| {
                let raw: Vec<Complex64> = (0..3)
                    .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
                    .collect();
                SystemState::finite(raw).unwrap().normalized().unwrap()
            })
            .collect();
        let anchor = states[12].clone();
        let traj = Trajectory::from_states(grid.clone(), states.clone(), anchor).unwrap();
        let spec = clock_fourier(&traj).unwrap();
        let rows = clock_fourier_inverse(&spec, &grid).unwrap();
        let mut max_err = 0.0_f64;
        for (row, state) in rows.iter().zip(&states) {
            for (a, b) in row.iter().zip(state.amplitudes()) {
                max_err = max_err.max((a - b).norm());
            }
        }
        assert!(max_err < 1e-12, "roundtrip error {max_err}");
    }

    #[test]
    fn residual_zero_for_static_trajectory() {
        let grid = ClockGrid::new(2.0, 8).unwrap();
        let state = qubit(Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
        let traj = constant_trajectory(&grid, state);
        let h = HamiltonianSpec::finite_matrix(DMatrix::from_element(
            2,
            2,
            Complex64::new(0.0, 0.0),
        ))
        .unwrap();
        let res = constraint_residual(&traj, &h, 1.0).unwrap();
        assert!(res.norm < 1e-12);
        assert!(res.periodic);
    }

    fn rabi_hamiltonian(omega_r: f64) -> HamiltonianSpec {
        let half = 0.5 * omega_r;
        HamiltonianSpec::finite_matrix(DMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(0.0, 0.0),
                Complex64::new(half, 0.0),
                Complex64::new(half, 0.0),
                Complex64::new(0.0, 0.0),
            ],
        ))
        .unwrap()
    }

    #[test]
    fn residual_second_order_convergence() {
        // Window 4π/Ω covers one full spinor period, so the trajectory is
        // periodic across the seam and the central difference converges.
        let omega_r = 1.3;
        let h = rabi_hamiltonian(omega_r);
        let up = qubit(Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
        let window = 4.0 * PI / omega_r;
        let mut norms = Vec::new();
        for n in [64usize, 128] {
            let grid = ClockGrid::new(window, n).unwrap();
            let traj = propagate_trajectory(&up, &h, &grid, &EvolveConfig::default()).unwrap();
            let res = constraint_residual(&traj, &h, 1.0).unwrap();
            assert!(res.periodic, "Rabi trajectory on a full period should wrap");
            norms.push(res.norm);
        }
        let ratio = norms[0] / norms[1];
        assert!(
            (ratio - 4.0).abs() < 0.8,
            "expected second-order ratio near 4, got {ratio}"
        );
    }

    #[test]
    fn residual_flags_non_periodic_trajectory() {
        // A packet that drifts across the window leaves a large seam gap.
        let params = crate::dynamics::GaussianParams {
            x0: 0.0,
            p0: 2.0,
            sigma: 1.0,
            mass: 1.0,
        };
        let packet = crate::dynamics::gaussian_packet(&params, -32.0, 32.0, 256, 1.0).unwrap();
        let h = HamiltonianSpec::free_particle(1.0).unwrap();
        let grid = ClockGrid::new(4.0, 64).unwrap();
        let traj = propagate_trajectory(&packet.state, &h, &grid, &EvolveConfig::default()).unwrap();
        let res = constraint_residual(&traj, &h, 1.0).unwrap();
        assert!(!res.periodic);
        assert!(res.norm > 1e-3, "boundary-dominated residual, got {}", res.norm);
        assert!(res.seam_gap > 0.1);
    }

    #[test]
    fn residual_global_phase_invariance() {
        let omega_r = 0.7;
        let h = rabi_hamiltonian(omega_r);
        let up = qubit(Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
        let grid = ClockGrid::new(4.0 * PI / omega_r, 32).unwrap();
        let traj = propagate_trajectory(&up, &h, &grid, &EvolveConfig::default()).unwrap();
        let base = constraint_residual(&traj, &h, 1.0).unwrap();

        let phase = Complex64::from_polar(1.0, 1.234);
        let states: Vec<SystemState> = traj
            .states()
            .iter()
            .map(|s| {
                SystemState::finite(s.amplitudes().iter().map(|a| phase * a).collect()).unwrap()
            })
            .collect();
        let anchor = states[0].clone();
        let rotated = Trajectory::from_states(grid, states, anchor).unwrap();
        let res = constraint_residual(&rotated, &h, 1.0).unwrap();
        assert_abs_diff_eq!(res.norm, base.norm, epsilon = 1e-12);
    }
}
