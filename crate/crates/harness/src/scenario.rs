//! Scenario configuration: a fixed, human-readable TOML schema, one
//! scenario per file, with eager validation of every physical
//! precondition. No expression language; reproducibility over flexibility.

use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::HarnessError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub clock: ClockSection,
    pub system: SystemSection,
    pub event: EventSection,
    #[serde(default)]
    pub options: OptionsSection,
    #[serde(default)]
    pub measurement: Option<MeasurementSection>,
    #[serde(default)]
    pub branches: Vec<BranchSection>,
    #[serde(default = "default_outputs")]
    pub outputs: Vec<OutputKind>,
    #[serde(default)]
    pub verify: VerifySection,
}

fn default_outputs() -> Vec<OutputKind> {
    vec![OutputKind::Distribution, OutputKind::Moments, OutputKind::Diagnostics]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClockSection {
    pub window_t: f64,
    pub n_ticks: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    /// A single Gaussian packet on a position grid.
    Gaussian,
    /// A normalized superposition of Gaussian packets.
    GaussianSuperposition,
    /// An explicit finite-dimensional state vector.
    Finite,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub kind: SystemKind,
    pub hamiltonian: HamiltonianSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSection>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub packets: Vec<PacketSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitudes: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub x_min: f64,
    pub x_max: f64,
    pub n_points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HamiltonianKind {
    Free,
    Harmonic,
    Potential,
    Matrix,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HamiltonianSection {
    pub kind: HamiltonianKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass: Option<f64>,
    /// Angular frequency of the harmonic well.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    /// Potential samples on the position grid, energy units.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<Vec<f64>>,
    /// Hermitian matrix rows of [re, im] pairs, energy units.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<[f64; 2]>>>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacketSection {
    pub x0: f64,
    pub p0: f64,
    pub sigma: f64,
    /// Complex superposition weight; the runner renormalizes the sum.
    #[serde(default = "unit_weight")]
    pub weight: [f64; 2],
}

fn unit_weight() -> [f64; 2] {
    [1.0, 0.0]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Interval,
    Projector,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventSection {
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_hi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<[f64; 2]>>>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptionsSection {
    pub hbar: f64,
    pub epsilon_never: f64,
    pub dt_max: Option<f64>,
    pub compare_flux: bool,
    /// When true, a never-occurring event is a hard failure (exit code 4).
    pub require_event: bool,
    /// Eigenvalue reported for the not-arrived branch of the arrival
    /// observable; never enters the conditional distribution.
    pub lambda: f64,
}

impl Default for OptionsSection {
    fn default() -> Self {
        Self {
            hbar: 1.0,
            epsilon_never: 1e-12,
            dt_max: None,
            compare_flux: false,
            require_event: false,
            lambda: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementSection {
    /// Measurement time; snapped to the nearest tick by the runner.
    pub t_a: f64,
    /// Outcome basis states, each a row of [re, im] amplitudes.
    pub basis: Vec<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchSection {
    pub weight: [f64; 2],
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub packets: Vec<PacketSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitudes: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    Distribution,
    Moments,
    Diagnostics,
    Flux,
    Measurement,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    /// Run the brute-force Born-rule oracle where the size guard permits.
    pub oracle: bool,
    /// Max-norm tolerance for the oracle comparison.
    pub oracle_max_norm: f64,
    /// Upper bound on L1(event-time, flux) under --verify.
    pub flux_l1_max: Option<f64>,
    /// Lower bound on L1(event-time, flux) under --verify (interference
    /// scenarios are required to disagree with the flux oracle).
    pub flux_l1_min: Option<f64>,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self { oracle: false, oracle_max_norm: 1e-12, flux_l1_max: None, flux_l1_min: None }
    }
}

pub fn complex(pair: [f64; 2]) -> Complex64 {
    Complex64::new(pair[0], pair[1])
}

pub fn matrix_from_rows(rows: &[Vec<[f64; 2]>]) -> Result<DMatrix<Complex64>, HarnessError> {
    let d = rows.len();
    if d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(HarnessError::Validation("matrix must be square and nonempty".into()));
    }
    Ok(DMatrix::from_fn(d, d, |i, j| complex(rows[i][j])))
}

/// Parse and validate a scenario file.
pub fn load_scenario(path: &Path) -> Result<ScenarioConfig, HarnessError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    parse_scenario(&text)
}

/// Parse and validate scenario TOML text.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, HarnessError> {
    let cfg: ScenarioConfig =
        toml::from_str(text).map_err(|e| HarnessError::Parse(e.to_string()))?;
    validate(&cfg)?;
    Ok(cfg)
}

fn err(msg: impl Into<String>) -> HarnessError {
    HarnessError::Validation(msg.into())
}

/// Check every physical precondition eagerly, naming the violated
/// invariant.
pub fn validate(cfg: &ScenarioConfig) -> Result<(), HarnessError> {
    if cfg.name.is_empty() {
        return Err(err("name must be nonempty"));
    }
    if !(cfg.clock.window_t > 0.0) {
        return Err(err("window_T must be positive"));
    }
    if cfg.clock.n_ticks < 2 {
        return Err(err("n_ticks must be at least 2"));
    }
    if !(cfg.options.hbar > 0.0) {
        return Err(err("hbar must be positive"));
    }
    if !(cfg.options.epsilon_never > 0.0) {
        return Err(err("epsilon_never must be positive"));
    }
    if let Some(dt_max) = cfg.options.dt_max {
        if !(dt_max > 0.0) {
            return Err(err("dt_max must be positive"));
        }
    }

    validate_system(&cfg.system)?;
    validate_event(cfg)?;

    if let Some(m) = &cfg.measurement {
        if !cfg.branches.is_empty() {
            return Err(err("measurement and branches are mutually exclusive"));
        }
        let half = 0.5 * cfg.clock.window_t;
        if !(m.t_a >= -half && m.t_a <= half) {
            return Err(err(format!("measurement t_a = {} outside the window [{}, {}]", m.t_a, -half, half)));
        }
        if m.basis.is_empty() {
            return Err(err("measurement basis must be nonempty"));
        }
        if cfg.system.kind != SystemKind::Finite {
            return Err(err("measurement histories need a finite system"));
        }
        let d = system_dimension(&cfg.system);
        if m.basis.len() != d || m.basis.iter().any(|b| b.len() != d) {
            return Err(err("measurement basis must be complete (d states of dimension d)"));
        }
    }

    if !cfg.branches.is_empty() {
        if !cfg.system.packets.is_empty() || cfg.system.amplitudes.is_some() {
            return Err(err("system initial state and branches are mutually exclusive"));
        }
        let total: f64 = cfg.branches.iter().map(|b| complex(b.weight).norm_sqr()).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(err(format!("branch weights must satisfy Σ|μ|² = 1, got {total}")));
        }
        for (i, b) in cfg.branches.iter().enumerate() {
            validate_initial_state(&cfg.system, &b.packets, &b.amplitudes)
                .map_err(|e| err(format!("branch {i}: {e}")))?;
        }
    } else {
        validate_initial_state(&cfg.system, &cfg.system.packets, &cfg.system.amplitudes)?;
    }

    if cfg.options.compare_flux {
        if cfg.system.kind == SystemKind::Finite {
            return Err(err("compare_flux needs a position-grid system"));
        }
        if !cfg.branches.is_empty() {
            return Err(err("compare_flux needs a single trajectory, not branches"));
        }
        if cfg.event.kind != EventKind::Interval {
            return Err(err("compare_flux needs an interval detector"));
        }
    }
    if let VerifySection { flux_l1_max: Some(_), .. } | VerifySection { flux_l1_min: Some(_), .. } =
        cfg.verify
    {
        if !cfg.options.compare_flux {
            return Err(err("flux verify bounds need options.compare_flux = true"));
        }
    }
    Ok(())
}

fn system_dimension(system: &SystemSection) -> usize {
    match system.kind {
        SystemKind::Finite => system.amplitudes.as_ref().map(|a| a.len()).unwrap_or(0),
        _ => system.grid.map(|g| g.n_points).unwrap_or(0),
    }
}

fn validate_system(system: &SystemSection) -> Result<(), HarnessError> {
    match system.kind {
        SystemKind::Gaussian | SystemKind::GaussianSuperposition => {
            let grid = system
                .grid
                .ok_or_else(|| err("gaussian systems need a [system.grid] section"))?;
            if !(grid.x_max > grid.x_min) {
                return Err(err("grid needs x_max > x_min"));
            }
            if grid.n_points < 2 || !grid.n_points.is_power_of_two() {
                return Err(err("grid n_points must be a power of two"));
            }
        }
        SystemKind::Finite => {
            if system.grid.is_some() {
                return Err(err("finite systems take no [system.grid] section"));
            }
        }
    }

    let h = &system.hamiltonian;
    match h.kind {
        HamiltonianKind::Free => {
            if system.kind == SystemKind::Finite {
                return Err(err("free hamiltonian needs a position-grid system"));
            }
            require_mass(h)?;
        }
        HamiltonianKind::Harmonic => {
            if system.kind == SystemKind::Finite {
                return Err(err("harmonic hamiltonian needs a position-grid system"));
            }
            require_mass(h)?;
            if !(h.omega.unwrap_or(0.0) > 0.0) {
                return Err(err("harmonic hamiltonian needs omega > 0"));
            }
        }
        HamiltonianKind::Potential => {
            if system.kind == SystemKind::Finite {
                return Err(err("potential hamiltonian needs a position-grid system"));
            }
            require_mass(h)?;
            let v = h
                .potential
                .as_ref()
                .ok_or_else(|| err("potential hamiltonian needs potential samples"))?;
            let n = system.grid.map(|g| g.n_points).unwrap_or(0);
            if v.len() != n {
                return Err(err(format!(
                    "potential has {} samples for a grid of {n} points",
                    v.len()
                )));
            }
        }
        HamiltonianKind::Matrix => {
            if system.kind != SystemKind::Finite {
                return Err(err("matrix hamiltonian needs a finite system"));
            }
            let m = h.matrix.as_ref().ok_or_else(|| err("matrix hamiltonian needs matrix rows"))?;
            matrix_from_rows(m)?;
        }
    }
    Ok(())
}

fn require_mass(h: &HamiltonianSection) -> Result<(), HarnessError> {
    if !(h.mass.unwrap_or(0.0) > 0.0) {
        return Err(err("hamiltonian needs mass > 0"));
    }
    Ok(())
}

fn validate_initial_state(
    system: &SystemSection,
    packets: &[PacketSection],
    amplitudes: &Option<Vec<[f64; 2]>>,
) -> Result<(), HarnessError> {
    match system.kind {
        SystemKind::Gaussian => {
            if packets.len() != 1 {
                return Err(err(format!(
                    "gaussian systems need exactly one packet, got {}",
                    packets.len()
                )));
            }
        }
        SystemKind::GaussianSuperposition => {
            if packets.len() < 2 {
                return Err(err("gaussian_superposition needs at least two packets"));
            }
        }
        SystemKind::Finite => {
            let a = amplitudes
                .as_ref()
                .ok_or_else(|| err("finite systems need amplitudes"))?;
            if a.is_empty() {
                return Err(err("finite amplitudes must be nonempty"));
            }
            let norm: f64 = a.iter().map(|p| complex(*p).norm_sqr()).sum();
            if (norm - 1.0).abs() > 1e-6 {
                return Err(err(format!("finite amplitudes must be normalized, Σ|c|² = {norm}")));
            }
            if let Some(m) = &system.hamiltonian.matrix {
                if m.len() != a.len() {
                    return Err(err(format!(
                        "hamiltonian dimension {} does not match state dimension {}",
                        m.len(),
                        a.len()
                    )));
                }
            }
        }
    }
    if system.kind != SystemKind::Finite {
        let grid = system.grid.expect("validated above");
        for (i, p) in packets.iter().enumerate() {
            if !(p.sigma > 0.0) {
                return Err(err(format!("packet {i}: sigma must be positive")));
            }
            if !(p.x0 > grid.x_min && p.x0 < grid.x_max) {
                return Err(err(format!("packet {i}: x0 = {} outside the grid", p.x0)));
            }
        }
    }
    Ok(())
}

fn validate_event(cfg: &ScenarioConfig) -> Result<(), HarnessError> {
    match cfg.event.kind {
        EventKind::Interval => {
            let (Some(d_lo), Some(d_hi)) = (cfg.event.d_lo, cfg.event.d_hi) else {
                return Err(err("interval events need d_lo and d_hi"));
            };
            if !(d_lo < d_hi) {
                return Err(err(format!("interval needs d_lo < d_hi, got [{d_lo}, {d_hi}]")));
            }
            if cfg.system.kind == SystemKind::Finite {
                return Err(err("interval events need a position-grid system"));
            }
        }
        EventKind::Projector => {
            let m = cfg
                .event
                .matrix
                .as_ref()
                .ok_or_else(|| err("projector events need matrix rows"))?;
            matrix_from_rows(m)?;
            if cfg.system.kind != SystemKind::Finite {
                return Err(err("projector events need a finite system"));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> String {
        r#"
name = "t"

[clock]
window_t = 4.0
n_ticks = 16

[system]
kind = "finite"
amplitudes = [[1.0, 0.0], [0.0, 0.0]]

[system.hamiltonian]
kind = "matrix"
matrix = [[[0.0, 0.0], [0.5, 0.0]], [[0.5, 0.0], [0.0, 0.0]]]

[event]
kind = "projector"
matrix = [[[1.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [0.0, 0.0]]]
"#
        .to_string()
    }

    #[test]
    fn base_config_parses_with_defaults() {
        let cfg = parse_scenario(&base()).unwrap();
        assert_eq!(cfg.options.hbar, 1.0);
        assert_eq!(cfg.options.epsilon_never, 1e-12);
        assert!(!cfg.options.require_event);
        assert_eq!(cfg.outputs.len(), 3);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_toml() {
        let text = base() + "\nunknown_key = 1\n";
        assert!(matches!(parse_scenario(&text), Err(HarnessError::Parse(_))));
        assert!(matches!(parse_scenario("name = [malformed"), Err(HarnessError::Parse(_))));
    }

    #[test]
    fn parse_errors_carry_location() {
        let err = parse_scenario("name = \"x\"\nclock = 3\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line"), "no location info in: {msg}");
    }

    #[test]
    fn named_invariant_messages() {
        let cases = [
            ("window_t = 4.0", "window_t = -1.0", "window_T must be positive"),
            ("n_ticks = 16", "n_ticks = 1", "n_ticks must be at least 2"),
        ];
        for (from, to, needle) in cases {
            let text = base().replace(from, to);
            let err = parse_scenario(&text).unwrap_err();
            assert!(err.to_string().contains(needle), "{err} missing {needle:?}");
        }
    }

    #[test]
    fn finite_state_must_be_normalized() {
        let text = base().replace("[[1.0, 0.0], [0.0, 0.0]]", "[[2.0, 0.0], [0.0, 0.0]]");
        let err = parse_scenario(&text).unwrap_err();
        assert!(err.to_string().contains("normalized"), "{err}");
    }

    #[test]
    fn interval_needs_position_grid_system() {
        let text = base().replace(
            "kind = \"projector\"\nmatrix = [[[1.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [0.0, 0.0]]]",
            "kind = \"interval\"\nd_lo = -1.0\nd_hi = 1.0",
        );
        let err = parse_scenario(&text).unwrap_err();
        assert!(err.to_string().contains("position-grid"), "{err}");
    }

    #[test]
    fn measurement_requires_window_and_complete_basis() {
        let outside = base()
            + r#"
[measurement]
t_a = 9.0
basis = [[[1.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [1.0, 0.0]]]
"#;
        let err = parse_scenario(&outside).unwrap_err();
        assert!(err.to_string().contains("outside the window"), "{err}");

        let incomplete = base()
            + r#"
[measurement]
t_a = 0.5
basis = [[[1.0, 0.0], [0.0, 0.0]]]
"#;
        let err = parse_scenario(&incomplete).unwrap_err();
        assert!(err.to_string().contains("complete"), "{err}");
    }

    #[test]
    fn branch_weights_must_normalize() {
        let text = base().replace(
            "amplitudes = [[1.0, 0.0], [0.0, 0.0]]",
            "",
        ) + r#"
[[branches]]
weight = [1.0, 0.0]
amplitudes = [[1.0, 0.0], [0.0, 0.0]]

[[branches]]
weight = [1.0, 0.0]
amplitudes = [[0.0, 0.0], [1.0, 0.0]]
"#;
        let err = parse_scenario(&text).unwrap_err();
        assert!(err.to_string().contains("Σ|μ|²"), "{err}");
    }

    #[test]
    fn compare_flux_needs_wavepackets() {
        let text = base() + "\n[options]\ncompare_flux = true\n";
        let err = parse_scenario(&text).unwrap_err();
        assert!(err.to_string().contains("position-grid"), "{err}");
    }

    #[test]
    fn corpus_parses_and_validates() {
        for entry in crate::corpus::CORPUS {
            let cfg = parse_scenario(entry.text)
                .unwrap_or_else(|e| panic!("{}: {e}", entry.name));
            assert_eq!(cfg.name, entry.name);
        }
    }
}
