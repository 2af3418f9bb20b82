//! Built-in invariant suite: fast consistency checks runnable from the CLI
//! without any scenario files.

use pawtime_core::clock::{clock_fourier, clock_fourier_inverse};
use pawtime_core::dynamics::{propagate_trajectory, EvolveConfig};
use pawtime_core::eventtime::arrival_distribution;
use pawtime_core::history::build_tensor_history;
use pawtime_core::oracles::{brute_force_conditional, random_finite_instance};
use pawtime_core::Error as CoreError;

use crate::corpus;
use crate::runner::{run_scenario, Status};
use crate::scenario::parse_scenario;

pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &str, outcome: Result<String, String>) -> CheckOutcome {
    match outcome {
        Ok(detail) => CheckOutcome { name: name.into(), passed: true, detail },
        Err(detail) => CheckOutcome { name: name.into(), passed: false, detail },
    }
}

/// Run the whole suite, printing one PASS/FAIL line per check. Returns
/// true when everything passed.
pub fn run_selfcheck() -> bool {
    let mut all = Vec::new();

    all.push(check("clock_fourier_roundtrip", fourier_roundtrip()));
    all.push(check("born_rule_oracle", oracle_agreement()));
    all.push(check("corpus_povm_completeness", corpus_completeness()));
    all.push(check("corpus_determinism", corpus_determinism()));

    let mut ok = true;
    for c in &all {
        let tag = if c.passed { "PASS" } else { "FAIL" };
        println!("{tag} {}: {}", c.name, c.detail);
        ok &= c.passed;
    }
    ok
}

fn fourier_roundtrip() -> Result<String, String> {
    let mut worst = 0.0_f64;
    for seed in 0..6u64 {
        let inst = random_finite_instance(seed, 48, 4, 7.0).map_err(|e| e.to_string())?;
        let traj = propagate_trajectory(&inst.anchor, &inst.hamiltonian, &inst.grid, &EvolveConfig::default())
            .map_err(|e| e.to_string())?;
        let spec = clock_fourier(&traj).map_err(|e| e.to_string())?;
        let rows = clock_fourier_inverse(&spec, traj.grid()).map_err(|e| e.to_string())?;
        for (row, state) in rows.iter().zip(traj.states()) {
            for (a, b) in row.iter().zip(state.amplitudes()) {
                worst = worst.max((a - b).norm());
            }
        }
    }
    if worst < 1e-12 {
        Ok(format!("roundtrip error {worst:.2e} over 6 instances"))
    } else {
        Err(format!("roundtrip error {worst:.2e} exceeds 1e-12"))
    }
}

fn oracle_agreement() -> Result<String, String> {
    let mut worst = 0.0_f64;
    let mut compared = 0;
    for seed in 0..20u64 {
        let inst = random_finite_instance(seed, 32, 4, 6.0).map_err(|e| e.to_string())?;
        let traj = propagate_trajectory(&inst.anchor, &inst.hamiltonian, &inst.grid, &EvolveConfig::default())
            .map_err(|e| e.to_string())?;
        let main = match arrival_distribution(&traj, &inst.projector) {
            Ok(d) => d,
            Err(CoreError::NeverOccurs { .. }) => continue,
            Err(e) => return Err(e.to_string()),
        };
        let th = build_tensor_history(&traj);
        let oracle = brute_force_conditional(&th, &inst.projector, 1e-12).map_err(|e| e.to_string())?;
        worst = worst.max(main.max_norm_distance(&oracle).map_err(|e| e.to_string())?);
        compared += 1;
    }
    if worst <= 1e-12 {
        Ok(format!("max deviation {worst:.2e} over {compared} instances"))
    } else {
        Err(format!("oracle deviation {worst:.2e} exceeds 1e-12"))
    }
}

/// Completeness on every corpus scenario: arrival probability plus the
/// not-arrived weight must reconstruct unity.
fn corpus_completeness() -> Result<String, String> {
    let mut worst = 0.0_f64;
    for entry in corpus::CORPUS {
        let cfg = parse_scenario(entry.text).map_err(|e| format!("{}: {e}", entry.name))?;
        let bundle = run_scenario(&cfg).map_err(|e| format!("{}: {e}", entry.name))?;
        if bundle.status == Status::NeverOccurs {
            continue;
        }
        let arrival = bundle.distribution.as_ref().map(|d| d.arrival_probability).unwrap_or(0.0);
        let not_arrived = bundle.moments.as_ref().map(|m| m.mean_t2).unwrap_or(1.0);
        worst = worst.max((arrival + not_arrived - 1.0).abs());
    }
    if worst < 1e-10 {
        Ok(format!("max completeness defect {worst:.2e}"))
    } else {
        Err(format!("completeness defect {worst:.2e} exceeds 1e-10"))
    }
}

/// Bit-identical structured output on repeated runs of the cheap corpus
/// scenarios.
fn corpus_determinism() -> Result<String, String> {
    for name in ["case_i_never", "case_iii_stationary", "rabi_spin_up", "measurement_qubit"] {
        let entry = corpus::find(name).expect("corpus entry");
        let cfg = parse_scenario(entry.text).map_err(|e| format!("{name}: {e}"))?;
        let a = crate::emit::json_string(&run_scenario(&cfg).map_err(|e| format!("{name}: {e}"))?);
        let b = crate::emit::json_string(&run_scenario(&cfg).map_err(|e| format!("{name}: {e}"))?);
        if a != b {
            return Err(format!("{name}: repeated runs differ"));
        }
    }
    Ok("4 scenarios bit-identical across repeated runs".into())
}
