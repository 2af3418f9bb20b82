//! Scenario execution: build state → propagate → distribute → compare.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use pawtime_core::clock::{constraint_residual, ClockGrid};
use pawtime_core::dynamics::{
    gaussian_packet, propagate_trajectory, EvolveConfig, GaussianParams, HamiltonianSpec,
    SystemState, Trajectory,
};
use pawtime_core::eventtime::{
    arrival_distribution_with, arrival_observable_expectation, vector_observable_with,
    EventProjector, EventTimeDistribution,
};
use pawtime_core::history::{
    build_measurement_history, build_tensor_history, reduced_clock_system_distribution,
    BranchEnsemble,
};
use pawtime_core::oracles::{brute_force_conditional, flux_arrival_distribution};
use pawtime_core::Error as CoreError;

use crate::scenario::{
    complex, matrix_from_rows, EventKind, EventSection, GridSection, HamiltonianKind,
    PacketSection, ScenarioConfig, SystemKind, SystemSection,
};
use crate::HarnessError;

/// Boundary |ψ|² mass above which a warning is recorded (periodic spatial
/// boundary vs the physical infinite line).
const BOUNDARY_MASS_WARN: f64 = 1e-8;
const BOUNDARY_BAND_POINTS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    NeverOccurs,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Row {
    pub tick_index: usize,
    pub t_seconds: f64,
    pub prob_mass: f64,
    pub prob_density: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistributionTable {
    pub window_t: f64,
    pub n_ticks: usize,
    pub dwell_time_seconds: f64,
    pub arrival_probability: f64,
    pub rows: Vec<Row>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Moments {
    pub mean_t1_seconds: f64,
    pub mean_t2: f64,
    pub alpha_per_second: f64,
    pub t_ev_seconds: f64,
    pub var_t_ev_seconds2: f64,
    pub lambda: f64,
    pub arrival_observable_expectation: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FluxComparison {
    pub x_d: f64,
    pub l1_distance: f64,
    pub event_time_peak_seconds: f64,
    pub flux_peak_seconds: f64,
    pub peak_offset_seconds: f64,
    pub clipped_mass_fraction: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeasurementReport {
    pub t_a_requested: f64,
    pub t_a_snapped: f64,
    pub measure_tick: usize,
    /// Outcome probabilities read from the final tick (slot 0 is the ready
    /// state).
    pub outcome_probabilities: Vec<f64>,
    /// Largest deviation of any post-measurement record from the final one.
    pub record_stability_max_dev: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleReport {
    pub ran: bool,
    pub max_norm_deviation: Option<f64>,
    pub skipped_reason: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Diagnostics {
    pub max_norm_drift: f64,
    pub constraint_residual: Option<f64>,
    pub constraint_seam_periodic: Option<bool>,
    pub boundary_mass_max: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultBundle {
    pub scenario: String,
    pub config_hash: String,
    pub engine_version: String,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distribution: Option<DistributionTable>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub moments: Option<Moments>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flux_comparison: Option<FluxComparison>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub measurement: Option<MeasurementReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleReport>,
    pub diagnostics: Diagnostics,
}

/// Deterministic identifier of the parsed configuration.
pub fn config_hash(cfg: &ScenarioConfig) -> String {
    let canonical = serde_json::to_string(cfg).expect("config serializes");
    let digest = Sha256::digest(canonical.as_bytes());
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    format!("sha256:{hex}")
}

pub fn build_hamiltonian(
    system: &SystemSection,
) -> Result<HamiltonianSpec, HarnessError> {
    let h = &system.hamiltonian;
    let spec = match h.kind {
        HamiltonianKind::Free => HamiltonianSpec::free_particle(h.mass.unwrap())?,
        HamiltonianKind::Harmonic => {
            let grid = system.grid.expect("validated");
            let mass = h.mass.unwrap();
            let omega = h.omega.unwrap();
            let dx = (grid.x_max - grid.x_min) / grid.n_points as f64;
            let v = (0..grid.n_points)
                .map(|i| {
                    let x = grid.x_min + i as f64 * dx;
                    0.5 * mass * omega * omega * x * x
                })
                .collect();
            HamiltonianSpec::potential_grid(mass, v)?
        }
        HamiltonianKind::Potential => {
            HamiltonianSpec::potential_grid(h.mass.unwrap(), h.potential.clone().unwrap())?
        }
        HamiltonianKind::Matrix => {
            HamiltonianSpec::finite_matrix(matrix_from_rows(h.matrix.as_ref().unwrap())?)?
        }
    };
    Ok(spec)
}

fn build_packet_state(
    grid: &GridSection,
    packets: &[PacketSection],
    mass: f64,
    hbar: f64,
    warnings: &mut Vec<String>,
) -> Result<SystemState, HarnessError> {
    let mut sum = vec![Complex64::new(0.0, 0.0); grid.n_points];
    for (i, p) in packets.iter().enumerate() {
        let params = GaussianParams { x0: p.x0, p0: p.p0, sigma: p.sigma, mass };
        let built = gaussian_packet(&params, grid.x_min, grid.x_max, grid.n_points, hbar)?;
        if !built.margin_ok() {
            warnings.push(format!(
                "packet {i} sits {:.2}σ from the grid edge (< 5σ): tails are clipped",
                built.margin_sigmas
            ));
        }
        let w = complex(p.weight);
        for (s, a) in sum.iter_mut().zip(built.state.amplitudes()) {
            *s += w * a;
        }
    }
    Ok(SystemState::position_wave(grid.x_min, grid.x_max, sum)?.normalized()?)
}

fn build_initial_state(
    system: &SystemSection,
    packets: &[PacketSection],
    amplitudes: &Option<Vec<[f64; 2]>>,
    hbar: f64,
    warnings: &mut Vec<String>,
) -> Result<SystemState, HarnessError> {
    match system.kind {
        SystemKind::Finite => {
            let amps = amplitudes.as_ref().expect("validated");
            Ok(SystemState::finite(amps.iter().map(|p| complex(*p)).collect())?.normalized()?)
        }
        SystemKind::Gaussian | SystemKind::GaussianSuperposition => {
            let grid = system.grid.as_ref().expect("validated");
            let mass = system.hamiltonian.mass.expect("validated");
            build_packet_state(grid, packets, mass, hbar, warnings)
        }
    }
}

pub fn build_projector(event: &EventSection) -> Result<EventProjector, HarnessError> {
    Ok(match event.kind {
        EventKind::Interval => {
            EventProjector::spatial_interval(event.d_lo.unwrap(), event.d_hi.unwrap())?
        }
        EventKind::Projector => {
            EventProjector::finite(matrix_from_rows(event.matrix.as_ref().unwrap())?)?
        }
    })
}

fn moments_from_masses(grid: &ClockGrid, masses: &[f64], lambda: f64) -> Option<Moments> {
    let total: f64 = masses.iter().sum();
    if total <= 0.0 {
        return None;
    }
    let mean_t1: f64 = masses.iter().enumerate().map(|(j, q)| grid.tick_time(j) * q).sum();
    let t_ev = mean_t1 / total;
    let second: f64 = masses
        .iter()
        .enumerate()
        .map(|(j, q)| grid.tick_time(j).powi(2) * q / total)
        .sum();
    Some(Moments {
        mean_t1_seconds: mean_t1,
        mean_t2: (1.0 - total).clamp(0.0, 1.0),
        alpha_per_second: 1.0 / (grid.window() * total),
        t_ev_seconds: t_ev,
        var_t_ev_seconds2: second - t_ev * t_ev,
        lambda,
        arrival_observable_expectation: mean_t1 + lambda * (1.0 - total).clamp(0.0, 1.0),
    })
}

fn distribution_table(dist: &EventTimeDistribution) -> DistributionTable {
    let grid = dist.grid();
    let densities = dist.densities();
    DistributionTable {
        window_t: grid.window(),
        n_ticks: grid.n_ticks(),
        dwell_time_seconds: dist.dwell_time(),
        arrival_probability: dist.arrival_probability(),
        rows: dist
            .probs()
            .iter()
            .enumerate()
            .map(|(j, m)| Row {
                tick_index: j,
                t_seconds: grid.tick_time(j),
                prob_mass: *m,
                prob_density: densities[j],
            })
            .collect(),
    }
}

/// Assemble the core pipeline pieces of a pure (non-branch) scenario:
/// clock grid, Hamiltonian, event projector, and the propagated
/// trajectory. Verification suites use this to cross-check the runner
/// against the library directly.
pub fn assemble_pure(
    cfg: &ScenarioConfig,
) -> Result<(ClockGrid, HamiltonianSpec, EventProjector, Trajectory), HarnessError> {
    if !cfg.branches.is_empty() {
        return Err(HarnessError::Validation(
            "assemble_pure needs a scenario without branches".into(),
        ));
    }
    let grid = ClockGrid::new(cfg.clock.window_t, cfg.clock.n_ticks)?;
    let hamiltonian = build_hamiltonian(&cfg.system)?;
    let projector = build_projector(&cfg.event)?;
    let evolve_cfg = EvolveConfig { hbar: cfg.options.hbar, dt_max: cfg.options.dt_max };
    let mut warnings = Vec::new();
    let anchor = build_initial_state(
        &cfg.system,
        &cfg.system.packets,
        &cfg.system.amplitudes,
        cfg.options.hbar,
        &mut warnings,
    )?;
    let traj = propagate_trajectory(&anchor, &hamiltonian, &grid, &evolve_cfg)?;
    Ok((grid, hamiltonian, projector, traj))
}

/// Execute a validated scenario. NeverOccurs surfaces as a structured
/// result, not an error; `--verify` handling is layered on top by the CLI.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ResultBundle, HarnessError> {
    let hash = config_hash(cfg);
    let grid = ClockGrid::new(cfg.clock.window_t, cfg.clock.n_ticks)?;
    let hamiltonian = build_hamiltonian(&cfg.system)?;
    let projector = build_projector(&cfg.event)?;
    let evolve_cfg = EvolveConfig { hbar: cfg.options.hbar, dt_max: cfg.options.dt_max };
    let mut warnings = Vec::new();

    // Pure-trajectory path or branch-ensemble path.
    let mut trajectory: Option<Trajectory> = None;
    let mut ensemble: Option<BranchEnsemble> = None;
    if cfg.branches.is_empty() {
        let anchor = build_initial_state(
            &cfg.system,
            &cfg.system.packets,
            &cfg.system.amplitudes,
            cfg.options.hbar,
            &mut warnings,
        )?;
        trajectory = Some(propagate_trajectory(&anchor, &hamiltonian, &grid, &evolve_cfg)?);
    } else {
        let mut weights = Vec::new();
        let mut trajs = Vec::new();
        for b in &cfg.branches {
            let anchor = build_initial_state(
                &cfg.system,
                &b.packets,
                &b.amplitudes,
                cfg.options.hbar,
                &mut warnings,
            )?;
            weights.push(complex(b.weight));
            trajs.push(propagate_trajectory(&anchor, &hamiltonian, &grid, &evolve_cfg)?);
        }
        ensemble = Some(BranchEnsemble::new(weights, trajs)?);
    }

    // Joint masses drive both the distribution and the moments.
    let masses: Vec<f64> = match (&trajectory, &ensemble) {
        (Some(t), None) => pawtime_core::eventtime::joint_probability(t, &projector)?,
        (None, Some(e)) => e.joint_masses(&projector)?,
        _ => unreachable!("exactly one execution path"),
    };

    let eps = cfg.options.epsilon_never;
    let dist_result = match (&trajectory, &ensemble) {
        (Some(t), None) => arrival_distribution_with(t, &projector, eps),
        (None, Some(e)) => reduced_clock_system_distribution(e, &projector, eps),
        _ => unreachable!(),
    };

    let (status, distribution) = match dist_result {
        Ok(d) => (Status::Ok, Some(d)),
        Err(CoreError::NeverOccurs { .. }) => (Status::NeverOccurs, None),
        Err(e) => return Err(e.into()),
    };

    // Moments: the core operation on the pure path, the same formulas on
    // the ensemble masses otherwise.
    let moments = match (&trajectory, status) {
        (_, Status::NeverOccurs) => None,
        (Some(t), Status::Ok) => {
            let v = vector_observable_with(t, &projector, eps)?;
            Some(Moments {
                mean_t1_seconds: v.mean_t1,
                mean_t2: v.mean_t2,
                alpha_per_second: v.alpha,
                t_ev_seconds: v.t_ev,
                var_t_ev_seconds2: v.var_t_ev,
                lambda: cfg.options.lambda,
                arrival_observable_expectation: arrival_observable_expectation(
                    t,
                    &projector,
                    cfg.options.lambda,
                )?,
            })
        }
        (None, Status::Ok) => moments_from_masses(&grid, &masses, cfg.options.lambda),
    };

    // Flux comparison against the probability-current oracle.
    let flux_comparison = if cfg.options.compare_flux && status == Status::Ok {
        let traj = trajectory.as_ref().expect("validated: flux needs a single trajectory");
        let mass = cfg.system.hamiltonian.mass.expect("validated");
        let x_d = 0.5 * (cfg.event.d_lo.unwrap() + cfg.event.d_hi.unwrap());
        match flux_arrival_distribution(traj, x_d, mass, cfg.options.hbar) {
            Ok(flux) => {
                let dist = distribution.as_ref().expect("status ok");
                let peak_tick = dist
                    .probs()
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .map(|(i, _)| i)
                    .unwrap_or(0);
                let event_peak = grid.tick_time(peak_tick);
                Some(FluxComparison {
                    x_d,
                    l1_distance: flux.l1_vs(dist)?,
                    event_time_peak_seconds: event_peak,
                    flux_peak_seconds: flux.peak_time(),
                    peak_offset_seconds: event_peak - flux.peak_time(),
                    clipped_mass_fraction: flux.clipped_mass_fraction(),
                })
            }
            Err(CoreError::NoFlux) => {
                warnings.push("flux comparison skipped: probability current vanishes".into());
                None
            }
            Err(e) => return Err(e.into()),
        }
    } else {
        None
    };

    // Measurement history report.
    let measurement = if let Some(m) = &cfg.measurement {
        let traj = trajectory.as_ref().expect("validated: measurement needs a trajectory");
        let basis: Vec<SystemState> = m
            .basis
            .iter()
            .map(|row| SystemState::finite(row.iter().map(|p| complex(*p)).collect()))
            .collect::<Result<_, _>>()?;
        let mh = build_measurement_history(traj, m.t_a, &basis, &hamiltonian, &evolve_cfg)?;
        let n = grid.n_ticks();
        let last = mh.memory_outcome_distribution(n - 1)?;
        let mut max_dev = 0.0_f64;
        for j in mh.measure_tick()..n {
            let probs = mh.memory_outcome_distribution(j)?;
            for (a, b) in probs.iter().zip(&last) {
                max_dev = max_dev.max((a - b).abs());
            }
        }
        Some(MeasurementReport {
            t_a_requested: m.t_a,
            t_a_snapped: grid.tick_time(mh.measure_tick()),
            measure_tick: mh.measure_tick(),
            outcome_probabilities: last,
            record_stability_max_dev: max_dev,
        })
    } else {
        None
    };

    // Diagnostics.
    let (max_norm_drift, residual, boundary_mass_max) = match (&trajectory, &ensemble) {
        (Some(t), None) => {
            let res = constraint_residual(t, &hamiltonian, cfg.options.hbar)?;
            (t.max_norm_drift(), Some(res), t.boundary_mass(BOUNDARY_BAND_POINTS))
        }
        (None, Some(e)) => {
            let drift = e
                .trajectories()
                .iter()
                .map(|t| t.max_norm_drift())
                .fold(0.0_f64, f64::max);
            let boundary = e
                .trajectories()
                .iter()
                .map(|t| t.boundary_mass(BOUNDARY_BAND_POINTS))
                .fold(0.0_f64, f64::max);
            (drift, None, boundary)
        }
        _ => unreachable!(),
    };
    if boundary_mass_max > BOUNDARY_MASS_WARN {
        warnings.push(format!(
            "boundary |ψ|² mass {boundary_mass_max:.3e} exceeds {BOUNDARY_MASS_WARN:.0e}: periodic wrap may contaminate the distribution"
        ));
    }

    Ok(ResultBundle {
        scenario: cfg.name.clone(),
        config_hash: hash,
        engine_version: env!("CARGO_PKG_VERSION").to_string(),
        status,
        distribution: distribution.as_ref().map(distribution_table),
        moments,
        flux_comparison,
        measurement,
        oracle: None,
        diagnostics: Diagnostics {
            max_norm_drift,
            constraint_residual: residual.as_ref().map(|r| r.norm),
            constraint_seam_periodic: residual.as_ref().map(|r| r.periodic),
            boundary_mass_max,
            warnings,
        },
    })
}

/// Tolerance breaches found by `--verify`.
#[derive(Debug, Clone, Serialize)]
pub struct VerifyBreach {
    pub check: String,
    pub detail: String,
}

/// Re-run the scenario's declared oracle comparisons and collect breaches.
/// The bundle's `oracle` field is filled in.
pub fn verify_scenario(
    cfg: &ScenarioConfig,
    bundle: &mut ResultBundle,
) -> Result<Vec<VerifyBreach>, HarnessError> {
    let mut breaches = Vec::new();

    // Brute-force Born-rule oracle on finite systems of guarded size.
    if cfg.verify.oracle {
        let mut report = OracleReport { ran: false, max_norm_deviation: None, skipped_reason: None };
        if cfg.system.kind != SystemKind::Finite || !cfg.branches.is_empty() {
            report.skipped_reason = Some("oracle needs a pure finite-dimensional scenario".into());
        } else {
            let grid = ClockGrid::new(cfg.clock.window_t, cfg.clock.n_ticks)?;
            let hamiltonian = build_hamiltonian(&cfg.system)?;
            let projector = build_projector(&cfg.event)?;
            let evolve_cfg = EvolveConfig { hbar: cfg.options.hbar, dt_max: cfg.options.dt_max };
            let mut warnings = Vec::new();
            let anchor = build_initial_state(
                &cfg.system,
                &cfg.system.packets,
                &cfg.system.amplitudes,
                cfg.options.hbar,
                &mut warnings,
            )?;
            let traj = propagate_trajectory(&anchor, &hamiltonian, &grid, &evolve_cfg)?;
            let th = build_tensor_history(&traj);
            let main = arrival_distribution_with(&traj, &projector, cfg.options.epsilon_never);
            let oracle = brute_force_conditional(&th, &projector, cfg.options.epsilon_never);
            match (main, oracle) {
                (Ok(a), Ok(b)) => {
                    let dev = a.max_norm_distance(&b)?;
                    report.ran = true;
                    report.max_norm_deviation = Some(dev);
                    if dev > cfg.verify.oracle_max_norm {
                        breaches.push(VerifyBreach {
                            check: "oracle_max_norm".into(),
                            detail: format!(
                                "Born-rule oracle deviates by {dev:.3e} (limit {:.3e})",
                                cfg.verify.oracle_max_norm
                            ),
                        });
                    }
                }
                (Err(CoreError::NeverOccurs { .. }), Err(CoreError::NeverOccurs { .. })) => {
                    report.ran = true;
                    report.max_norm_deviation = None;
                }
                (a, b) => {
                    breaches.push(VerifyBreach {
                        check: "oracle_agreement".into(),
                        detail: format!("main path and oracle disagree on outcome: {a:?} vs {b:?}"),
                    });
                }
            }
        }
        bundle.oracle = Some(report);
    }

    if let Some(limit) = cfg.verify.flux_l1_max {
        match &bundle.flux_comparison {
            Some(f) if f.l1_distance > limit => breaches.push(VerifyBreach {
                check: "flux_l1_max".into(),
                detail: format!("L1 vs flux = {:.4} exceeds {limit}", f.l1_distance),
            }),
            Some(_) => {}
            None => breaches.push(VerifyBreach {
                check: "flux_l1_max".into(),
                detail: "flux comparison unavailable".into(),
            }),
        }
    }
    if let Some(floor) = cfg.verify.flux_l1_min {
        match &bundle.flux_comparison {
            Some(f) if f.l1_distance < floor => breaches.push(VerifyBreach {
                check: "flux_l1_min".into(),
                detail: format!("L1 vs flux = {:.4} below required {floor}", f.l1_distance),
            }),
            Some(_) => {}
            None => breaches.push(VerifyBreach {
                check: "flux_l1_min".into(),
                detail: "flux comparison unavailable".into(),
            }),
        }
    }

    Ok(breaches)
}
