//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line with the measured numbers (run with `--nocapture` to see
//! them all).
//!
//! Criterion 5 (free-Gaussian flux agreement) is expected to fail: for the
//! pinned packet (σ·p0 = 2) the density-conditioned and flux arrival
//! distributions differ by L1 ≈ 0.18 and both peaks sit earlier than the
//! classical transit time. The measured numbers are printed by the test;
//! see README for the quantitative analysis.

use std::time::Instant;

use num_complex::Complex64;

use pawtime::corpus;
use pawtime::emit::{csv_string, json_string};
use pawtime::runner::{assemble_pure, run_scenario, ResultBundle, Status};
use pawtime::scenario::parse_scenario;
use pawtime_core::clock::{constraint_residual, ClockGrid};
use pawtime_core::dynamics::{propagate_trajectory, EvolveConfig, HamiltonianSpec, SystemState};
use pawtime_core::eventtime::{
    arrival_distribution, joint_probability, not_arrived_probability, vector_observable,
};
use pawtime_core::history::{
    build_measurement_history, build_tensor_history, reduced_clock_system_distribution,
    two_clock_reduction_check, BranchEnsemble,
};
use pawtime_core::oracles::{
    brute_force_conditional, free_gaussian_closed_form, random_finite_instance,
};
use pawtime_core::Error as CoreError;

fn corpus_config(name: &str) -> pawtime::scenario::ScenarioConfig {
    parse_scenario(corpus::find(name).expect("corpus entry").text).expect("corpus parses")
}

fn corpus_bundle(name: &str) -> ResultBundle {
    run_scenario(&corpus_config(name)).expect("corpus scenario runs")
}

fn pass(criterion: &str, detail: &str) {
    println!("ACCEPTANCE {criterion}: PASS ({detail})");
}

#[test]
fn criterion_01_oracle_equivalence() {
    let start = Instant::now();
    let mut worst = 0.0_f64;
    let mut compared = 0usize;
    for seed in 0..100u64 {
        let inst = random_finite_instance(seed, 64, 4, 6.0).unwrap();
        let traj = propagate_trajectory(
            &inst.anchor,
            &inst.hamiltonian,
            &inst.grid,
            &EvolveConfig::default(),
        )
        .unwrap();
        let th = build_tensor_history(&traj);
        match arrival_distribution(&traj, &inst.projector) {
            Ok(main) => {
                let oracle = brute_force_conditional(&th, &inst.projector, 1e-12).unwrap();
                worst = worst.max(main.max_norm_distance(&oracle).unwrap());
                compared += 1;
            }
            Err(CoreError::NeverOccurs { .. }) => {
                assert!(
                    matches!(
                        brute_force_conditional(&th, &inst.projector, 1e-12),
                        Err(CoreError::NeverOccurs { .. })
                    ),
                    "seed {seed}: oracle disagrees on the never case"
                );
            }
            Err(e) => panic!("seed {seed}: {e}"),
        }
    }
    let elapsed = start.elapsed();
    assert!(worst <= 1e-12, "oracle deviation {worst:.3e} exceeds 1e-12");
    assert!(compared >= 90, "only {compared} instances had occurring events");
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}, limit 10 s");
    pass(
        "01 oracle-equivalence",
        &format!("max deviation {worst:.2e} over {compared} instances in {elapsed:.2?}"),
    );
}

#[test]
fn criterion_02_povm_completeness_on_corpus() {
    let mut worst = 0.0_f64;
    for entry in corpus::CORPUS {
        let cfg = corpus_config(entry.name);
        if !cfg.branches.is_empty() {
            // Branch scenarios: completeness against the ensemble masses.
            let bundle = run_scenario(&cfg).unwrap();
            if bundle.status == Status::Ok {
                let arrival = bundle.distribution.as_ref().unwrap().arrival_probability;
                let na = bundle.moments.as_ref().unwrap().mean_t2;
                worst = worst.max((arrival + na - 1.0).abs());
            }
            continue;
        }
        let (_, _, projector, traj) = assemble_pure(&cfg).unwrap();
        let total: f64 = joint_probability(&traj, &projector).unwrap().iter().sum();
        let na = not_arrived_probability(&traj, &projector).unwrap();
        // Check against the actual history norm so drift cannot hide.
        let norm_sq = build_tensor_history(&traj).norm_sq();
        worst = worst.max((total + na - norm_sq).abs());
    }
    assert!(worst < 1e-10, "completeness defect {worst:.3e} exceeds 1e-10");
    pass("02 povm-completeness", &format!("max defect {worst:.2e} across the corpus"));
}

#[test]
fn criterion_03_stationary_uniform() {
    let bundle = corpus_bundle("case_iii_stationary");
    let dist = bundle.distribution.as_ref().expect("stationary distribution");
    let n = dist.n_ticks as f64;
    let window = dist.window_t;
    let mut worst = 0.0_f64;
    for row in &dist.rows {
        worst = worst.max((row.prob_mass - 1.0 / n).abs());
    }
    assert!(worst < 1e-10, "uniformity defect {worst:.3e} exceeds 1e-10");
    let dwell_err = (dist.dwell_time_seconds - window).abs();
    assert!(dwell_err <= 1e-10 * window, "dwell defect {dwell_err:.3e}");
    pass(
        "03 stationary-uniform",
        &format!("uniformity defect {worst:.2e}, dwell defect {dwell_err:.2e}"),
    );
}

#[test]
fn criterion_04_never_occurs_is_structured() {
    let bundle = corpus_bundle("case_i_never");
    assert_eq!(bundle.status, Status::NeverOccurs);
    assert!(bundle.distribution.is_none());
    assert!(bundle.moments.is_none());
    // The same condition surfaces as a typed error at the library level.
    let cfg = corpus_config("case_i_never");
    let (_, _, projector, traj) = assemble_pure(&cfg).unwrap();
    assert!(matches!(
        arrival_distribution(&traj, &projector),
        Err(CoreError::NeverOccurs { .. })
    ));
    pass("04 never-occurs", "structured result with no distribution table");
}

#[test]
fn criterion_05_free_gaussian_flux_agreement() {
    let start = Instant::now();
    let cfg = corpus_config("case_v_gaussian");
    assert!(cfg.clock.n_ticks >= 512 && cfg.system.grid.unwrap().n_points >= 1024);
    let bundle = run_scenario(&cfg).unwrap();
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}, limit 30 s");

    let flux = bundle.flux_comparison.as_ref().expect("flux comparison ran");
    let dist = bundle.distribution.as_ref().expect("distribution");
    let dt = dist.window_t / dist.n_ticks as f64;
    let transit = 5.0;
    let peak_err = (flux.event_time_peak_seconds - transit).abs();
    println!(
        "ACCEPTANCE 05 free-gaussian-flux: MEASURED l1 = {:.4} (bound 0.02), \
         event-time peak = {:.4} and flux peak = {:.4} vs transit {transit} \
         (bound 2Δt = {:.4}), clipped flux mass = {:.2e}",
        flux.l1_distance,
        flux.event_time_peak_seconds,
        flux.flux_peak_seconds,
        2.0 * dt,
        flux.clipped_mass_fraction
    );
    let l1_ok = flux.l1_distance < 0.02;
    let peak_ok = peak_err <= 2.0 * dt;
    assert!(
        l1_ok && peak_ok,
        "flux agreement out of tolerance: L1 = {:.4} (< 0.02 required), \
         peak offset from transit = {:.4} (≤ {:.4} required); the packet's \
         relative velocity dispersion σ_p/p0 = 0.25 makes the flux- and \
         density-weighted distributions genuinely differ at this scale",
        flux.l1_distance,
        peak_err,
        2.0 * dt
    );
    pass("05 free-gaussian-flux", &format!("l1 {:.3}, peak offset {:.4}", flux.l1_distance, peak_err));
}

#[test]
fn criterion_06_interference_structure() {
    let bundle = corpus_bundle("case_vi_interference");
    let dist = bundle.distribution.as_ref().expect("distribution");
    let masses: Vec<f64> = dist.rows.iter().map(|r| r.prob_mass).collect();
    let mut sorted = masses.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = sorted[sorted.len() / 2];

    let maxima: Vec<usize> = (1..masses.len() - 1)
        .filter(|&j| masses[j] > masses[j - 1] && masses[j] >= masses[j + 1] && masses[j] > 2.0 * median)
        .collect();
    let mut deep_minima = 0usize;
    for w in maxima.windows(2) {
        let (a, b) = (w[0], w[1]);
        let valley = masses[a..=b].iter().cloned().fold(f64::INFINITY, f64::min);
        if valley < 0.5 * masses[a].min(masses[b]) {
            deep_minima += 1;
        }
    }
    let flux = bundle.flux_comparison.as_ref().expect("flux comparison ran");

    assert!(maxima.len() >= 3, "found only {} maxima", maxima.len());
    assert!(deep_minima >= maxima.len() - 1, "valleys too shallow: {deep_minima}");
    assert!(flux.l1_distance > 0.05, "L1 vs flux = {:.4} too small", flux.l1_distance);
    pass(
        "06 interference",
        &format!(
            "{} maxima, {deep_minima} deep minima, L1 vs flux {:.3}",
            maxima.len(),
            flux.l1_distance
        ),
    );
}

/// Peak locations for plateau-topped peaks: merge nearby local maxima and
/// take the centroid of the ticks above half the cluster maximum.
fn clustered_peak_times(ts: &[f64], masses: &[f64], threshold: f64, merge_radius: f64) -> Vec<f64> {
    let maxima: Vec<usize> = (1..masses.len() - 1)
        .filter(|&j| masses[j] > masses[j - 1] && masses[j] >= masses[j + 1] && masses[j] > threshold)
        .collect();
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for j in maxima {
        match clusters.last_mut() {
            Some(c) if ts[j] - ts[*c.last().unwrap()] < merge_radius => c.push(j),
            _ => clusters.push(vec![j]),
        }
    }
    clusters
        .into_iter()
        .map(|c| {
            let top = c.iter().map(|&j| masses[j]).fold(0.0, f64::max);
            let center = c[c.len() / 2];
            // Expand to the contiguous half-max band around the cluster.
            let mut lo = center;
            while lo > 0 && masses[lo - 1] >= 0.5 * top {
                lo -= 1;
            }
            let mut hi = center;
            while hi + 1 < masses.len() && masses[hi + 1] >= 0.5 * top {
                hi += 1;
            }
            let mass: f64 = masses[lo..=hi].iter().sum();
            let weighted: f64 = (lo..=hi).map(|j| ts[j] * masses[j]).sum();
            weighted / mass
        })
        .collect()
}

#[test]
fn criterion_07_harmonic_periodic_peaks() {
    let bundle = corpus_bundle("case_iv_harmonic");
    let dist = bundle.distribution.as_ref().expect("distribution");
    let ts: Vec<f64> = dist.rows.iter().map(|r| r.t_seconds).collect();
    let masses: Vec<f64> = dist.rows.iter().map(|r| r.prob_mass).collect();
    let mut sorted = masses.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = sorted[sorted.len() / 2];

    let period = 2.0 * std::f64::consts::PI;
    let dt = dist.window_t / dist.n_ticks as f64;
    let peaks = clustered_peak_times(&ts, &masses, 2.0 * median, period / 4.0);
    assert!(peaks.len() >= 3, "found only {} peaks: {peaks:?}", peaks.len());
    let mut worst_spacing = 0.0_f64;
    for w in peaks.windows(2) {
        worst_spacing = worst_spacing.max((w[1] - w[0] - period).abs());
    }
    assert!(
        worst_spacing <= 3.0 * dt,
        "peak spacing deviates from one period by {worst_spacing:.4} (limit {:.4}); peaks {peaks:?}",
        3.0 * dt
    );
    pass(
        "07 harmonic-peaks",
        &format!("{} peaks at {:?}, spacing defect {worst_spacing:.4}", peaks.len(),
            peaks.iter().map(|t| (t * 1e3).round() / 1e3).collect::<Vec<_>>()),
    );
}

#[test]
fn criterion_08_rabi_event_time_profile() {
    let bundle = corpus_bundle("rabi_spin_up");
    let dist = bundle.distribution.as_ref().expect("distribution");
    let n = dist.n_ticks as f64;
    let mut worst = 0.0_f64;
    for row in &dist.rows {
        let expected = (2.0 / n) * (0.5 * row.t_seconds).cos().powi(2);
        worst = worst.max((row.prob_mass - expected).abs());
    }
    assert!(worst <= 1e-6, "L∞ deviation {worst:.3e} from the cos² profile");
    let dwell_err = (dist.dwell_time_seconds - 0.5 * dist.window_t).abs();
    assert!(dwell_err <= 1e-6, "dwell {} vs T/2", dist.dwell_time_seconds);
    pass("08 rabi-event", &format!("L∞ {worst:.2e}, dwell defect {dwell_err:.2e}"));
}

#[test]
fn criterion_09_moments() {
    let bundle = corpus_bundle("case_iii_stationary");
    let moments = bundle.moments.as_ref().expect("moments");
    let window = bundle.distribution.as_ref().unwrap().window_t;
    assert!(
        moments.t_ev_seconds.abs() <= 1e-10 * window,
        "t_ev = {} not at the window center",
        moments.t_ev_seconds
    );
    let expected_var = window * window / 12.0;
    let rel = (moments.var_t_ev_seconds2 - expected_var).abs() / expected_var;
    assert!(rel <= 1e-6, "variance off by {rel:.3e} relative");

    // Never case: the Bayes constant diverges, surfaced as a typed error.
    let cfg = corpus_config("case_i_never");
    let (_, _, projector, traj) = assemble_pure(&cfg).unwrap();
    assert!(matches!(
        vector_observable(&traj, &projector),
        Err(CoreError::NeverOccurs { .. })
    ));
    pass(
        "09 moments",
        &format!("t_ev {:.2e}, var rel defect {rel:.2e}, never handled", moments.t_ev_seconds),
    );
}

#[test]
fn criterion_10_constraint_residual_convergence() {
    // Periodic finite-dimensional dynamics: a full spinor period of a Rabi
    // drive. Halving Δt must reduce the residual fourfold.
    let omega_r = 1.0;
    let half = Complex64::new(0.5 * omega_r, 0.0);
    let h = HamiltonianSpec::finite_matrix(nalgebra::DMatrix::from_row_slice(
        2,
        2,
        &[Complex64::new(0.0, 0.0), half, half, Complex64::new(0.0, 0.0)],
    ))
    .unwrap();
    let up = SystemState::basis(2, 0).unwrap();
    let window = 4.0 * std::f64::consts::PI / omega_r;
    let mut norms = Vec::new();
    for n in [96usize, 192] {
        let grid = ClockGrid::new(window, n).unwrap();
        let traj = propagate_trajectory(&up, &h, &grid, &EvolveConfig::default()).unwrap();
        let res = constraint_residual(&traj, &h, 1.0).unwrap();
        assert!(res.periodic, "trajectory should wrap periodically");
        norms.push(res.norm);
    }
    let ratio = norms[0] / norms[1];
    assert!(
        (3.5..=4.5).contains(&ratio),
        "residual ratio {ratio:.3} outside [3.5, 4.5] ({} vs {})",
        norms[0],
        norms[1]
    );
    pass("10 constraint-residual", &format!("second-order ratio {ratio:.3}"));
}

#[test]
fn criterion_11_measurement_history() {
    let cfg = corpus_config("measurement_qubit");
    let bundle = run_scenario(&cfg).unwrap();
    let report = bundle.measurement.as_ref().expect("measurement report");

    // Expected records: Born weights of the trajectory at the snapped tick.
    let (_grid, hamiltonian, _, traj) = assemble_pure(&cfg).unwrap();
    let at_ta = traj.state(report.measure_tick).unwrap();
    let expected: Vec<f64> = at_ta.amplitudes().iter().map(|a| a.norm_sqr()).collect();
    assert!((report.outcome_probabilities[0] - 0.0).abs() <= 1e-10, "ready weight remains");
    let mut worst = 0.0_f64;
    for (p, e) in report.outcome_probabilities[1..].iter().zip(&expected) {
        worst = worst.max((p - e).abs());
    }
    assert!(worst <= 1e-10, "record deviates from Born weights by {worst:.3e}");
    assert!(
        report.record_stability_max_dev <= 1e-12,
        "records drift by {:.3e} after the measurement",
        report.record_stability_max_dev
    );

    // Before the measurement all outcome probabilities vanish.
    let m = cfg.measurement.as_ref().unwrap();
    let basis: Vec<SystemState> = m
        .basis
        .iter()
        .map(|row| {
            SystemState::finite(row.iter().map(|p| Complex64::new(p[0], p[1])).collect()).unwrap()
        })
        .collect();
    let mh =
        build_measurement_history(&traj, m.t_a, &basis, &hamiltonian, &EvolveConfig::default())
            .unwrap();
    for j in 0..mh.measure_tick() {
        let probs = mh.memory_outcome_distribution(j).unwrap();
        for p in &probs[1..] {
            assert!(*p <= 1e-10, "outcome recorded before the measurement at tick {j}");
        }
    }
    pass(
        "11 measurement-history",
        &format!(
            "records match Born weights within {worst:.2e}, stability {:.2e}",
            report.record_stability_max_dev
        ),
    );
}

#[test]
fn criterion_12_two_clock_reduction() {
    let mut worst = 0.0_f64;
    let mut checked = 0usize;
    for seed in 0..12u64 {
        let inst = random_finite_instance(seed, 8, 4, 4.0).unwrap();
        let traj = propagate_trajectory(
            &inst.anchor,
            &inst.hamiltonian,
            &inst.grid,
            &EvolveConfig::default(),
        )
        .unwrap();
        worst = worst.max(two_clock_reduction_check(&traj).unwrap());
        checked += 1;

        // Single-branch reduction reproduces the pure distribution.
        let ens = BranchEnsemble::new(vec![Complex64::new(1.0, 0.0)], vec![traj.clone()]).unwrap();
        match (
            arrival_distribution(&traj, &inst.projector),
            reduced_clock_system_distribution(&ens, &inst.projector, 1e-12),
        ) {
            (Ok(pure), Ok(reduced)) => {
                let dev = pure.max_norm_distance(&reduced).unwrap();
                assert!(dev <= 1e-12, "seed {seed}: single branch deviates {dev:.3e}");
            }
            (Err(CoreError::NeverOccurs { .. }), Err(CoreError::NeverOccurs { .. })) => {}
            other => panic!("seed {seed}: mismatched outcomes {other:?}"),
        }
    }
    assert!(worst < 1e-12, "block-diagonal deviation {worst:.3e}");
    pass(
        "12 two-clock-reduction",
        &format!("max trace-out deviation {worst:.2e} over {checked} instances"),
    );
}

#[test]
fn criterion_13_split_step_vs_closed_form() {
    let cfg = corpus_config("case_v_gaussian");
    let (grid, _, _, traj) = assemble_pure(&cfg).unwrap();
    let packet = &cfg.system.packets[0];
    let params = pawtime_core::dynamics::GaussianParams {
        x0: packet.x0,
        p0: packet.p0,
        sigma: packet.sigma,
        mass: cfg.system.hamiltonian.mass.unwrap(),
    };
    // Last tick of the window, half a tick short of T/2.
    let j = grid.n_ticks() - 1;
    let t = grid.tick_time(j);
    let state = traj.state(j).unwrap();
    let xs = state.positions().unwrap();
    let mut worst = 0.0_f64;
    for (x, a) in xs.iter().zip(state.amplitudes()) {
        let reference = free_gaussian_closed_form(&params, t, *x, cfg.options.hbar);
        worst = worst.max((a - reference).norm());
    }
    assert!(worst < 1e-8, "pointwise deviation {worst:.3e} at t = {t:.3}");
    pass("13 dynamics-truth", &format!("pointwise deviation {worst:.2e} at t = {t:.3}"));
}

#[test]
fn criterion_14_harness_determinism() {
    for entry in corpus::CORPUS {
        let cfg = corpus_config(entry.name);
        let a = run_scenario(&cfg).unwrap();
        let b = run_scenario(&cfg).unwrap();
        assert_eq!(
            json_string(&a),
            json_string(&b),
            "{}: structured outputs differ between runs",
            entry.name
        );
        assert_eq!(csv_string(&a), csv_string(&b), "{}: csv outputs differ", entry.name);
    }
    pass("14 determinism", "all corpus scenarios bit-identical across repeated runs");
}
