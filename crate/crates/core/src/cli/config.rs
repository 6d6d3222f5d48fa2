//! JSON analysis configuration. The grammar lives in `docs/config.schema.json`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::action_angle::{OrbitFamily, ResonanceRequest};
use crate::bifurcation::{RootOptions, VerifyOptions, DEFAULT_EPS_LADDER};
use crate::expr::{self, Bindings};
use crate::flow::{MAX_TOL, MIN_TOL};
use crate::system::{builtin, EnergyWindow, ImpulseSchedule, Parameters, SystemDefinition, Vec2, BUILTIN_NAMES};

use super::CliError;

/// A number, or an expression text in the declared parameters (`"2*pi"`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Number(f64),
    Text(String),
}

impl Scalar {
    pub fn resolve(&self, params: &Parameters, pointer: &str) -> Result<f64, CliError> {
        let v = match self {
            Scalar::Number(v) => *v,
            Scalar::Text(text) => {
                let e = expr::parse(text)
                    .map_err(|e| CliError::invalid(pointer, format!("offset {}: {}", e.offset, e.message)))?;
                let mut b = Bindings::new();
                for (k, v) in params {
                    b.set(k, *v);
                }
                e.eval(&b).map_err(|e| CliError::invalid(pointer, e.to_string()))?
            }
        };
        if !v.is_finite() {
            return Err(CliError::invalid(pointer, format!("{v} is not finite")));
        }
        Ok(v)
    }
}

/// A two-component field: one tuple text `"(a, b)"` or two texts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Components {
    Tuple(String),
    Parts(Vec<String>),
}

impl Components {
    fn texts(&self) -> Vec<String> {
        match self {
            Components::Tuple(s) => vec![s.clone()],
            Components::Parts(v) => v.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemBlock {
    pub hamiltonian: String,
    pub forcing: Components,
    pub forcing_period: Scalar,
    #[serde(default)]
    pub center_hint: Vec2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImpulseBlock {
    pub period: Scalar,
    pub times: Vec<Scalar>,
    pub maps: Vec<Components>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowBlock {
    pub h_min: f64,
    pub h_max: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoOrder {
    Auto,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OrderSpec {
    Fixed(u32),
    Auto(AutoOrder),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResonanceBlock {
    pub m: OrderSpec,
    pub m_max: u32,
}

impl Default for ResonanceBlock {
    fn default() -> Self {
        ResonanceBlock {
            m: OrderSpec::Fixed(1),
            m_max: 5,
        }
    }
}

impl ResonanceBlock {
    pub fn request(&self) -> ResonanceRequest {
        match self.m {
            OrderSpec::Fixed(m) => ResonanceRequest::Order(m),
            OrderSpec::Auto(_) => ResonanceRequest::Auto { m_max: self.m_max },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridBlock {
    pub n_theta: usize,
    pub n_h: usize,
}

impl Default for GridBlock {
    fn default() -> Self {
        GridBlock { n_theta: 20, n_h: 5 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanBlock {
    /// Phases over `[0, T]`, both ends included.
    pub n_phase: usize,
    pub n_energy: usize,
}

impl Default for ScanBlock {
    fn default() -> Self {
        ScanBlock {
            n_phase: 64,
            n_energy: 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Numerics {
    /// Integrator tolerance for charts, quadrature and shooting.
    pub tol: f64,
    pub identities: GridBlock,
    pub scan: ScanBlock,
    pub roots: RootOptions,
    pub eps_ladder: Vec<f64>,
    pub verify: VerifyOptions,
    /// Smallest `eps` of the oracle used in the closed-form comparison.
    pub oracle_eps: f64,
}

impl Default for Numerics {
    fn default() -> Self {
        Numerics {
            tol: 1e-10,
            identities: GridBlock::default(),
            scan: ScanBlock::default(),
            roots: RootOptions::default(),
            eps_ladder: DEFAULT_EPS_LADDER.to_vec(),
            verify: VerifyOptions::default(),
            oracle_eps: 1e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Name of a built-in problem; replaces the system and impulse blocks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default)]
    pub parameters: Parameters,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub impulses: Option<ImpulseBlock>,
    /// Overrides the built-in window when both are given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<WindowBlock>,
    #[serde(default)]
    pub resonance: ResonanceBlock,
    #[serde(default)]
    pub numerics: Numerics,
    /// Emit the comparison with the printed oscillator closed forms.
    /// Defaults to on for the `paper-example` builtin.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub closed_form_comparison: Option<bool>,
}

/// Everything a command needs, built from a validated config.
#[derive(Debug)]
pub struct Problem {
    pub schedule: ImpulseSchedule,
    pub family: OrbitFamily,
}

impl Problem {
    pub fn system(&self) -> &SystemDefinition {
        self.family.system()
    }
}

fn pointer_of(path: &serde_path_to_error::Path) -> String {
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        out.push_str(&seg.to_string());
    }
    if out.is_empty() {
        out.push('/');
    }
    out
}

impl AnalysisConfig {
    /// Parses and validates; expressions are compiled here so that errors
    /// surface before any computation.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: AnalysisConfig = serde_path_to_error::deserialize(de).map_err(|e| CliError::Schema {
            pointer: pointer_of(e.path()),
            message: e.inner().to_string(),
        })?;
        cfg.validate()?;
        cfg.build_parts()?;
        Ok(cfg)
    }

    pub fn builtin(name: &str) -> Result<Self, CliError> {
        let cfg = AnalysisConfig {
            builtin: Some(name.to_string()),
            parameters: Parameters::new(),
            system: None,
            impulses: None,
            window: None,
            resonance: ResonanceBlock::default(),
            numerics: Numerics::default(),
            closed_form_comparison: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn wants_comparison(&self) -> bool {
        self.closed_form_comparison
            .unwrap_or(self.builtin.as_deref() == Some("paper-example"))
    }

    fn validate(&self) -> Result<(), CliError> {
        match (&self.builtin, &self.system, &self.impulses) {
            (Some(name), None, None) => {
                if !BUILTIN_NAMES.contains(&name.as_str()) {
                    return Err(CliError::invalid(
                        "/builtin",
                        format!("unknown builtin `{name}`; expected one of {}", BUILTIN_NAMES.join(", ")),
                    ));
                }
            }
            (Some(_), _, _) => {
                return Err(CliError::invalid(
                    "/builtin",
                    "a builtin excludes the system and impulses blocks",
                ));
            }
            (None, None, _) => return Err(CliError::invalid("/system", "missing (or give `builtin`)")),
            (None, _, None) => return Err(CliError::invalid("/impulses", "missing (or give `builtin`)")),
            (None, Some(_), Some(_)) => {
                if self.window.is_none() {
                    return Err(CliError::invalid("/window", "missing (or give `builtin`)"));
                }
            }
        }
        if let Some(block) = &self.impulses {
            let mut last = f64::NEG_INFINITY;
            for (i, t) in block.times.iter().enumerate() {
                let pointer = format!("/impulses/times/{i}");
                let t = t.resolve(&self.parameters, &pointer)?;
                if t <= last {
                    return Err(CliError::invalid(&pointer, "impulse times must be strictly increasing"));
                }
                last = t;
            }
            if block.times.len() != block.maps.len() {
                return Err(CliError::invalid(
                    "/impulses/maps",
                    format!("{} maps for {} times", block.maps.len(), block.times.len()),
                ));
            }
        }
        if let Some(w) = self.window {
            if !(w.h_min < w.h_max) {
                return Err(CliError::invalid("/window", "h_min must be below h_max"));
            }
        }
        if let OrderSpec::Fixed(0) = self.resonance.m {
            return Err(CliError::invalid("/resonance/m", "order must be positive"));
        }
        if self.resonance.m_max == 0 {
            return Err(CliError::invalid("/resonance/m_max", "must be positive"));
        }
        let n = &self.numerics;
        if !(n.tol >= MIN_TOL && n.tol <= MAX_TOL) {
            return Err(CliError::invalid(
                "/numerics/tol",
                format!("must lie in [{MIN_TOL:e}, {MAX_TOL:e}]"),
            ));
        }
        let sizes = [
            ("/numerics/identities/n_theta", n.identities.n_theta, 1),
            ("/numerics/identities/n_h", n.identities.n_h, 1),
            ("/numerics/scan/n_phase", n.scan.n_phase, 2),
            ("/numerics/scan/n_energy", n.scan.n_energy, 1),
            ("/numerics/roots/n_phase", n.roots.n_phase, 2),
            ("/numerics/roots/grid_phase", n.roots.grid_phase, 2),
            ("/numerics/roots/grid_energy", n.roots.grid_energy, 2),
            ("/numerics/verify/samples", n.verify.samples, 8),
        ];
        for (pointer, value, min) in sizes {
            if value < min {
                return Err(CliError::invalid(pointer, format!("grid size must be at least {min}")));
            }
        }
        if n.eps_ladder.is_empty() {
            return Err(CliError::invalid("/numerics/eps_ladder", "must not be empty"));
        }
        for (i, e) in n.eps_ladder.iter().enumerate() {
            if !(*e > 0.0 && *e < 1.0) {
                return Err(CliError::invalid(
                    &format!("/numerics/eps_ladder/{i}"),
                    "must lie in (0, 1)",
                ));
            }
        }
        let positive = [
            ("/numerics/oracle_eps", n.oracle_eps),
            ("/numerics/roots/root_tol", n.roots.root_tol),
            ("/numerics/roots/degeneracy", n.roots.degeneracy),
            ("/numerics/roots/det_threshold", n.roots.det_threshold),
            ("/numerics/roots/dedup", n.roots.dedup),
            ("/numerics/verify/newton/tol_fp", n.verify.newton.tol_fp),
        ];
        for (pointer, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CliError::invalid(pointer, "must be positive"));
            }
        }
        if let Some(dh) = n.roots.frame_dh {
            if !(dh > 0.0 && dh.is_finite()) {
                return Err(CliError::invalid("/numerics/roots/frame_dh", "must be positive"));
            }
        }
        Ok(())
    }

    fn build_parts(&self) -> Result<(SystemDefinition, ImpulseSchedule, EnergyWindow), CliError> {
        let p = &self.parameters;
        let (system, schedule, window) = match (&self.builtin, &self.system, &self.impulses) {
            (Some(name), _, _) => {
                let b = builtin(name, p).map_err(|e| CliError::invalid("/builtin", e.to_string()))?;
                (b.system, b.schedule, Some(b.window))
            }
            (None, Some(sys), Some(imp)) => {
                let t1 = sys.forcing_period.resolve(p, "/system/forcing_period")?;
                let system =
                    SystemDefinition::from_texts(&sys.hamiltonian, &sys.forcing.texts(), t1, sys.center_hint, p)
                        .map_err(|e| CliError::invalid("/system", e.to_string()))?;
                let t2 = imp.period.resolve(p, "/impulses/period")?;
                let times = imp
                    .times
                    .iter()
                    .enumerate()
                    .map(|(i, t)| t.resolve(p, &format!("/impulses/times/{i}")))
                    .collect::<Result<Vec<_>, _>>()?;
                let maps: Vec<Vec<String>> = imp.maps.iter().map(Components::texts).collect();
                let schedule = ImpulseSchedule::from_texts(t2, times, &maps, p)
                    .map_err(|e| CliError::invalid("/impulses", e.to_string()))?;
                (system, schedule, None)
            }
            _ => unreachable!("checked by validate"),
        };
        let window = match (self.window, window) {
            (Some(w), _) => {
                EnergyWindow::new(w.h_min, w.h_max).map_err(|e| CliError::invalid("/window", e.to_string()))?
            }
            (None, Some(w)) => w,
            (None, None) => unreachable!("checked by validate"),
        };
        Ok((system, schedule, window))
    }

    pub fn problem(&self) -> Result<Problem, CliError> {
        let (system, schedule, window) = self.build_parts()?;
        let family = OrbitFamily::new(system, window, self.numerics.tol)
            .map_err(|e| CliError::invalid("/window", e.to_string()))?;
        family
            .check_nested()
            .map_err(|e| CliError::invalid("/window", e.to_string()))?;
        Ok(Problem { schedule, family })
    }
}

pub fn load_config(path: &Path) -> Result<AnalysisConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    AnalysisConfig::from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const OSCILLATOR: &str = r#"{
        "system": {"hamiltonian": "(x1^2 + x2^2)/2", "forcing": ["0", "x2"], "forcing_period": "2*pi"},
        "impulses": {"period": "2*pi", "times": ["2*pi"], "maps": ["(pi*x1^2, pi*x2^2)"]},
        "window": {"h_min": 0.02, "h_max": 1.5}
    }"#;

    #[test]
    fn defaults_fill_numerics() {
        let cfg = AnalysisConfig::from_json(OSCILLATOR).unwrap();
        assert_eq!(cfg.numerics.tol, 1e-10);
        assert_eq!(cfg.numerics.roots.n_phase, 256);
        assert_eq!(cfg.numerics.eps_ladder, vec![1e-2, 1e-3, 1e-4]);
        assert_eq!(cfg.resonance.request(), ResonanceRequest::Order(1));
        let pr = cfg.problem().unwrap();
        assert!((pr.system().forcing_period() - 2.0 * std::f64::consts::PI).abs() < 1e-15);
    }

    #[test]
    fn schema_errors_carry_pointers() {
        let bad = OSCILLATOR.replace("\"h_min\": 0.02", "\"h_min\": \"low\"");
        match AnalysisConfig::from_json(&bad) {
            Err(CliError::Schema { pointer, .. }) => assert_eq!(pointer, "/window/h_min"),
            other => panic!("{other:?}"),
        }
        let typo = OSCILLATOR.replace("\"h_max\"", "\"hmax\"");
        assert!(matches!(AnalysisConfig::from_json(&typo), Err(CliError::Schema { .. })));
    }

    #[test]
    fn non_increasing_times_name_the_field() {
        let bad = OSCILLATOR
            .replace("\"times\": [\"2*pi\"]", "\"times\": [2, 1]")
            .replace("\"maps\": [\"(pi*x1^2, pi*x2^2)\"]", "\"maps\": [\"(0,0)\", \"(0,0)\"]");
        match AnalysisConfig::from_json(&bad) {
            Err(CliError::Invalid { pointer, .. }) => assert_eq!(pointer, "/impulses/times/1"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn expression_errors_fail_fast() {
        let bad = OSCILLATOR.replace("(x1^2 + x2^2)/2", "(x1^2 + x2^2/2");
        let err = AnalysisConfig::from_json(&bad).unwrap_err();
        assert!(
            matches!(&err, CliError::Invalid { pointer, .. } if pointer == "/system"),
            "{err}"
        );
        assert!(err.to_string().contains("offset"), "{err}");
        let undeclared = OSCILLATOR.replace("[\"0\", \"x2\"]", "[\"0\", \"k*x2\"]");
        assert!(AnalysisConfig::from_json(&undeclared).is_err());
    }

    #[test]
    fn zero_grid_is_rejected() {
        let bad = OSCILLATOR.replace(
            "\"window\"",
            "\"numerics\": {\"identities\": {\"n_theta\": 0}}, \"window\"",
        );
        match AnalysisConfig::from_json(&bad) {
            Err(CliError::Invalid { pointer, .. }) => assert_eq!(pointer, "/numerics/identities/n_theta"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn builtin_configs() {
        let cfg = AnalysisConfig::from_json(r#"{"builtin": "duffing-well", "resonance": {"m": "auto", "m_max": 2}}"#)
            .unwrap();
        assert_eq!(cfg.resonance.request(), ResonanceRequest::Auto { m_max: 2 });
        assert!(!cfg.wants_comparison());
        assert!(AnalysisConfig::builtin("paper-example").unwrap().wants_comparison());
        assert!(AnalysisConfig::from_json(r#"{"builtin": "nope"}"#).is_err());
    }

    #[test]
    fn round_trip() {
        let cfg = AnalysisConfig::from_json(OSCILLATOR).unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(AnalysisConfig::from_json(&text).unwrap(), cfg);
    }
}
