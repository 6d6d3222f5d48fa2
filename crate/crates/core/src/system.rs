//! Problem definitions: the Hamiltonian system, its periodic forcing, the
//! impulse schedule and the energy window of closed level curves.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::expr::{self, ParseError, Program};

pub type Vec2 = [f64; 2];

/// Named numeric parameters available to expression-defined fields.
pub type Parameters = BTreeMap<String, f64>;

pub trait Hamiltonian: Send + Sync {
    fn energy(&self, x: Vec2) -> f64;
    fn gradient(&self, x: Vec2) -> Vec2;
}

/// Periodic perturbation `g(t, x, eps)`.
pub trait Forcing: Send + Sync {
    fn eval(&self, t: f64, x: Vec2, eps: f64) -> Vec2;
}

/// Impulse map `l(x, eps)`; the jump applied is `eps * l(x(t-), eps)`.
pub trait JumpMap: Send + Sync {
    fn eval(&self, x: Vec2, eps: f64) -> Vec2;
}

#[derive(Debug, thiserror::Error)]
pub enum SystemError {
    #[error("cannot parse {field}: {source}")]
    Parse {
        field: String,
        #[source]
        source: ParseError,
    },
    #[error("{field} references undeclared identifier `{name}`")]
    Undeclared { field: String, name: String },
    #[error("{field} must have exactly 2 components, found {found}")]
    Arity { field: String, found: usize },
    #[error(
        "vector field inconsistent with the Hamiltonian gradient at {at:?}: field {field:?}, expected {expected:?}"
    )]
    GradientMismatch { at: Vec2, field: Vec2, expected: Vec2 },
    #[error("forcing is not periodic with period {period} at t={t}, x={x:?}")]
    ForcingNotPeriodic { period: f64, t: f64, x: Vec2 },
    #[error("period must be positive and finite, got {0}")]
    NonPositivePeriod(f64),
    #[error("invalid impulse schedule: {0}")]
    Schedule(String),
    #[error("invalid energy window: h_min={h_min}, h_max={h_max}")]
    Window { h_min: f64, h_max: f64 },
    #[error("unknown builtin system `{0}`")]
    UnknownBuiltin(String),
}

fn compile(field: &str, text: &str, slots: &[&str]) -> Result<Program, SystemError> {
    let e = expr::parse(text).map_err(|source| SystemError::Parse {
        field: field.to_string(),
        source,
    })?;
    compile_expr(field, &e, slots)
}

fn compile_expr(field: &str, e: &expr::Expr, slots: &[&str]) -> Result<Program, SystemError> {
    Program::compile(e, slots).map_err(|name| SystemError::Undeclared {
        field: field.to_string(),
        name,
    })
}

/// Parses a two-component field given either as one tuple text `(a, b)` or
/// as two component texts.
fn compile_pair(field: &str, components: &[String], slots: &[&str]) -> Result<[Program; 2], SystemError> {
    let exprs = match components {
        [single] => expr::parse_vector(single).map_err(|source| SystemError::Parse {
            field: field.to_string(),
            source,
        })?,
        many => many
            .iter()
            .enumerate()
            .map(|(i, text)| {
                expr::parse(text).map_err(|source| SystemError::Parse {
                    field: format!("{field}[{i}]"),
                    source,
                })
            })
            .collect::<Result<Vec<_>, _>>()?,
    };
    if exprs.len() != 2 {
        return Err(SystemError::Arity {
            field: field.to_string(),
            found: exprs.len(),
        });
    }
    Ok([
        compile_expr(&format!("{field}[0]"), &exprs[0], slots)?,
        compile_expr(&format!("{field}[1]"), &exprs[1], slots)?,
    ])
}

fn slots<'a>(leading: &[&'a str], params: &'a Parameters) -> Vec<&'a str> {
    leading
        .iter()
        .copied()
        .chain(params.keys().map(String::as_str))
        .collect()
}

/// Runs `f` on `leading ++ params` without allocating for small parameter sets.
fn with_args<R>(leading: &[f64], params: &[f64], f: impl FnOnce(&[f64]) -> R) -> R {
    let n = leading.len() + params.len();
    if n <= 16 {
        let mut buf = [0.0; 16];
        buf[..leading.len()].copy_from_slice(leading);
        buf[leading.len()..n].copy_from_slice(params);
        f(&buf[..n])
    } else {
        let v: Vec<f64> = leading.iter().chain(params).copied().collect();
        f(&v)
    }
}

/// Hamiltonian given as expression text in `x1`, `x2` and parameters.
pub struct ExprHamiltonian {
    program: Program,
    params: Vec<f64>,
}

impl ExprHamiltonian {
    pub fn parse(text: &str, params: &Parameters) -> Result<Self, SystemError> {
        Ok(ExprHamiltonian {
            program: compile("hamiltonian", text, &slots(&["x1", "x2"], params))?,
            params: params.values().copied().collect(),
        })
    }
}

impl Hamiltonian for ExprHamiltonian {
    fn energy(&self, x: Vec2) -> f64 {
        with_args(&x, &self.params, |a| self.program.eval::<f64>(a)).unwrap_or(f64::NAN)
    }

    fn gradient(&self, x: Vec2) -> Vec2 {
        with_args(&x, &self.params, |a| {
            let mut inline = [expr::Dual::constant(0.0); 16];
            let mut heap = Vec::new();
            let duals: &mut [expr::Dual] = if a.len() <= inline.len() {
                &mut inline[..a.len()]
            } else {
                heap.resize(a.len(), expr::Dual::constant(0.0));
                &mut heap
            };
            for (d, &v) in duals.iter_mut().zip(a) {
                *d = expr::Dual::constant(v);
            }
            let mut out = [f64::NAN; 2];
            for (i, slot) in out.iter_mut().enumerate() {
                duals[i].eps = 1.0;
                if let Ok(d) = self.program.eval(duals) {
                    *slot = d.eps;
                }
                duals[i].eps = 0.0;
            }
            out
        })
    }
}

/// Forcing given as component texts in `x1`, `x2`, `t`, `eps` and parameters.
pub struct ExprForcing {
    programs: [Program; 2],
    params: Vec<f64>,
}

impl ExprForcing {
    pub fn parse(components: &[String], params: &Parameters) -> Result<Self, SystemError> {
        Ok(ExprForcing {
            programs: compile_pair("forcing", components, &slots(&["x1", "x2", "t", "eps"], params))?,
            params: params.values().copied().collect(),
        })
    }
}

impl Forcing for ExprForcing {
    fn eval(&self, t: f64, x: Vec2, eps: f64) -> Vec2 {
        with_args(&[x[0], x[1], t, eps], &self.params, |a| {
            [
                self.programs[0].eval::<f64>(a).unwrap_or(f64::NAN),
                self.programs[1].eval::<f64>(a).unwrap_or(f64::NAN),
            ]
        })
    }
}

/// Jump map given as component texts in `x1`, `x2`, `eps` and parameters.
pub struct ExprJump {
    programs: [Program; 2],
    params: Vec<f64>,
}

impl ExprJump {
    pub fn parse(components: &[String], params: &Parameters) -> Result<Self, SystemError> {
        Ok(ExprJump {
            programs: compile_pair("jump map", components, &slots(&["x1", "x2", "eps"], params))?,
            params: params.values().copied().collect(),
        })
    }
}

impl JumpMap for ExprJump {
    fn eval(&self, x: Vec2, eps: f64) -> Vec2 {
        with_args(&[x[0], x[1], eps], &self.params, |a| {
            [
                self.programs[0].eval::<f64>(a).unwrap_or(f64::NAN),
                self.programs[1].eval::<f64>(a).unwrap_or(f64::NAN),
            ]
        })
    }
}

/// Closure-backed Hamiltonian. Without an explicit vector field the gradient
/// is taken by Richardson-extrapolated central differences.
pub struct FnHamiltonian<H, F = fn(Vec2) -> Vec2> {
    energy: H,
    field: Option<F>,
}

impl<H: Fn(Vec2) -> f64 + Send + Sync> FnHamiltonian<H> {
    pub fn new(energy: H) -> Self {
        FnHamiltonian { energy, field: None }
    }
}

impl<H: Fn(Vec2) -> f64 + Send + Sync, F: Fn(Vec2) -> Vec2 + Send + Sync> FnHamiltonian<H, F> {
    /// `field` is the Hamiltonian vector field `(dH/dx2, -dH/dx1)`.
    pub fn with_field(energy: H, field: F) -> Self {
        FnHamiltonian {
            energy,
            field: Some(field),
        }
    }
}

impl<H: Fn(Vec2) -> f64 + Send + Sync, F: Fn(Vec2) -> Vec2 + Send + Sync> Hamiltonian for FnHamiltonian<H, F> {
    fn energy(&self, x: Vec2) -> f64 {
        (self.energy)(x)
    }

    fn gradient(&self, x: Vec2) -> Vec2 {
        match &self.field {
            Some(f) => {
                let v = f(x);
                [-v[1], v[0]]
            }
            None => numeric_gradient(&self.energy, x),
        }
    }
}

/// Central-difference gradient with one Richardson extrapolation step.
pub fn numeric_gradient(h: impl Fn(Vec2) -> f64, x: Vec2) -> Vec2 {
    let mut out = [0.0; 2];
    for (i, slot) in out.iter_mut().enumerate() {
        let step = 1e-3 * (1.0 + x[i].abs());
        let diff = |d: f64| {
            let mut a = x;
            let mut b = x;
            a[i] += d;
            b[i] -= d;
            (h(a) - h(b)) / (2.0 * d)
        };
        let coarse = diff(step);
        let fine = diff(step / 2.0);
        *slot = (4.0 * fine - coarse) / 3.0;
    }
    out
}

impl<F: Fn(f64, Vec2, f64) -> Vec2 + Send + Sync> Forcing for F {
    fn eval(&self, t: f64, x: Vec2, eps: f64) -> Vec2 {
        self(t, x, eps)
    }
}

struct FnJump<F>(F);

impl<F: Fn(Vec2, f64) -> Vec2 + Send + Sync> JumpMap for FnJump<F> {
    fn eval(&self, x: Vec2, eps: f64) -> Vec2 {
        (self.0)(x, eps)
    }
}

/// Wraps a closure as a jump map.
pub fn jump_fn(f: impl Fn(Vec2, f64) -> Vec2 + Send + Sync + 'static) -> Arc<dyn JumpMap> {
    Arc::new(FnJump(f))
}

/// The perturbed planar Hamiltonian system `x' = f(x) + eps g(t, x, eps)`.
#[derive(Clone)]
pub struct SystemDefinition {
    hamiltonian: Arc<dyn Hamiltonian>,
    forcing: Arc<dyn Forcing>,
    forcing_period: f64,
    center_hint: Vec2,
}

impl fmt::Debug for SystemDefinition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SystemDefinition")
            .field("forcing_period", &self.forcing_period)
            .field("center_hint", &self.center_hint)
            .finish_non_exhaustive()
    }
}

/// Points used by the construction-time self-checks.
fn self_check_points(center: Vec2) -> impl Iterator<Item = Vec2> {
    let offsets = [-0.5, -0.2, 0.1, 0.3, 0.6];
    offsets
        .into_iter()
        .flat_map(move |a| offsets.into_iter().map(move |b| [center[0] + a, center[1] + b]))
}

impl SystemDefinition {
    pub fn new(
        hamiltonian: Arc<dyn Hamiltonian>,
        forcing: Arc<dyn Forcing>,
        forcing_period: f64,
        center_hint: Vec2,
    ) -> Result<Self, SystemError> {
        if !(forcing_period.is_finite() && forcing_period > 0.0) {
            return Err(SystemError::NonPositivePeriod(forcing_period));
        }
        let sys = SystemDefinition {
            hamiltonian,
            forcing,
            forcing_period,
            center_hint,
        };
        sys.self_check()?;
        Ok(sys)
    }

    /// Builds a system from expression texts. `forcing` holds either one tuple
    /// text such as `"(0, x2)"` or two component texts.
    pub fn from_texts(
        hamiltonian: &str,
        forcing: &[String],
        forcing_period: f64,
        center_hint: Vec2,
        params: &Parameters,
    ) -> Result<Self, SystemError> {
        Self::new(
            Arc::new(ExprHamiltonian::parse(hamiltonian, params)?),
            Arc::new(ExprForcing::parse(forcing, params)?),
            forcing_period,
            center_hint,
        )
    }

    fn self_check(&self) -> Result<(), SystemError> {
        for x in self_check_points(self.center_hint) {
            let field = self.vector_field(x);
            let grad = numeric_gradient(|p| self.energy(p), x);
            let expected = [grad[1], -grad[0]];
            if !(field.iter().chain(&expected).all(|v| v.is_finite())) {
                continue;
            }
            let scale = 1.0 + norm(field);
            if norm(sub(field, expected)) > 1e-8 * scale {
                return Err(SystemError::GradientMismatch { at: x, field, expected });
            }
            for t in [0.0, 0.37, 1.9] {
                let a = self.forcing(t, x, 0.0);
                let b = self.forcing(t + self.forcing_period, x, 0.0);
                if a.iter().chain(&b).all(|v| v.is_finite()) && norm(sub(a, b)) > 1e-9 * (1.0 + norm(a)) {
                    return Err(SystemError::ForcingNotPeriodic {
                        period: self.forcing_period,
                        t,
                        x,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn energy(&self, x: Vec2) -> f64 {
        self.hamiltonian.energy(x)
    }

    /// `DH(x)` as a row vector.
    pub fn gradient(&self, x: Vec2) -> Vec2 {
        self.hamiltonian.gradient(x)
    }

    /// Unperturbed field `f(x) = (dH/dx2, -dH/dx1)`.
    pub fn vector_field(&self, x: Vec2) -> Vec2 {
        let g = self.gradient(x);
        [g[1], -g[0]]
    }

    pub fn forcing(&self, t: f64, x: Vec2, eps: f64) -> Vec2 {
        self.forcing.eval(t, x, eps)
    }

    /// `f(x) + eps g(t, x, eps)`.
    pub fn perturbed_field(&self, t: f64, x: Vec2, eps: f64) -> Vec2 {
        let f = self.vector_field(x);
        if eps == 0.0 {
            return f;
        }
        let g = self.forcing(t, x, eps);
        [f[0] + eps * g[0], f[1] + eps * g[1]]
    }

    pub fn forcing_period(&self) -> f64 {
        self.forcing_period
    }

    pub fn center_hint(&self) -> Vec2 {
        self.center_hint
    }

    /// Same system with the forcing replaced.
    pub fn with_forcing(&self, forcing: Arc<dyn Forcing>) -> Self {
        SystemDefinition {
            forcing,
            ..self.clone()
        }
    }
}

/// Expression-text convenience constructor.
pub fn make_system(
    hamiltonian: &str,
    forcing: &str,
    forcing_period: f64,
    center_hint: Vec2,
) -> Result<SystemDefinition, SystemError> {
    SystemDefinition::from_texts(
        hamiltonian,
        &[forcing.to_string()],
        forcing_period,
        center_hint,
        &Parameters::new(),
    )
}

/// One scheduled impulse.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImpulseTime {
    pub time: f64,
    /// Global impulse index `k`, with `t_1` the first base time of window zero.
    pub k: i64,
    /// Index into the schedule's jump maps, `(k - 1) mod q`.
    pub map_index: usize,
}

/// Periodic impulse schedule: `q` base times in `(0, T2]` repeated with
/// period `T2`, each carrying its own jump map.
#[derive(Clone)]
pub struct ImpulseSchedule {
    window_period: f64,
    base_times: Vec<f64>,
    jump_maps: Vec<Arc<dyn JumpMap>>,
}

impl fmt::Debug for ImpulseSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ImpulseSchedule")
            .field("window_period", &self.window_period)
            .field("base_times", &self.base_times)
            .finish_non_exhaustive()
    }
}

impl ImpulseSchedule {
    pub fn new(
        window_period: f64,
        base_times: Vec<f64>,
        jump_maps: Vec<Arc<dyn JumpMap>>,
    ) -> Result<Self, SystemError> {
        if !(window_period.is_finite() && window_period > 0.0) {
            return Err(SystemError::NonPositivePeriod(window_period));
        }
        if base_times.is_empty() {
            return Err(SystemError::Schedule("schedule has no impulse times".into()));
        }
        if base_times.len() != jump_maps.len() {
            return Err(SystemError::Schedule(format!(
                "{} base times but {} jump maps",
                base_times.len(),
                jump_maps.len()
            )));
        }
        if base_times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SystemError::Schedule("base times must be strictly increasing".into()));
        }
        if base_times.iter().any(|&t| !(t > 0.0 && t <= window_period)) {
            return Err(SystemError::Schedule(format!(
                "base times must lie in (0, {window_period}]"
            )));
        }
        Ok(ImpulseSchedule {
            window_period,
            base_times,
            jump_maps,
        })
    }

    /// Expression-defined schedule; each map is a tuple text or a pair of
    /// component texts.
    pub fn from_texts(
        window_period: f64,
        base_times: Vec<f64>,
        maps: &[Vec<String>],
        params: &Parameters,
    ) -> Result<Self, SystemError> {
        let jump_maps = maps
            .iter()
            .map(|m| ExprJump::parse(m, params).map(|j| Arc::new(j) as Arc<dyn JumpMap>))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(window_period, base_times, jump_maps)
    }

    pub fn window_period(&self) -> f64 {
        self.window_period
    }

    pub fn base_times(&self) -> &[f64] {
        &self.base_times
    }

    /// Number of impulses per window, `q`.
    pub fn count(&self) -> usize {
        self.base_times.len()
    }

    pub fn jump(&self, map_index: usize, x: Vec2, eps: f64) -> Vec2 {
        self.jump_maps[map_index].eval(x, eps)
    }

    pub fn jump_map(&self, map_index: usize) -> Arc<dyn JumpMap> {
        self.jump_maps[map_index].clone()
    }

    /// Same schedule with every jump map replaced.
    pub fn with_maps(&self, jump_maps: Vec<Arc<dyn JumpMap>>) -> Result<Self, SystemError> {
        Self::new(self.window_period, self.base_times.clone(), jump_maps)
    }

    /// Impulses with `t_a < t_k <= t_b`, ascending.
    pub fn impulse_times_in(&self, t_a: f64, t_b: f64) -> Vec<ImpulseTime> {
        let mut out = Vec::new();
        if !(t_b > t_a) {
            return out;
        }
        let period = self.window_period;
        let q = self.base_times.len() as i64;
        let time_of = |n: i64, j: usize| self.base_times[j] + n as f64 * period;
        for (j, &base) in self.base_times.iter().enumerate() {
            let mut n = ((t_a - base) / period).floor() as i64;
            while time_of(n, j) <= t_a {
                n += 1;
            }
            while time_of(n - 1, j) > t_a {
                n -= 1;
            }
            while time_of(n, j) <= t_b {
                out.push(ImpulseTime {
                    time: time_of(n, j),
                    k: n * q + j as i64 + 1,
                    map_index: j,
                });
                n += 1;
            }
        }
        out.sort_by_key(|imp| imp.k);
        out
    }
}

/// Open interval of energies whose level curves are closed orbits.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EnergyWindow {
    pub h_min: f64,
    pub h_max: f64,
}

impl EnergyWindow {
    pub fn new(h_min: f64, h_max: f64) -> Result<Self, SystemError> {
        if !(h_min.is_finite() && h_max.is_finite() && h_min < h_max) {
            return Err(SystemError::Window { h_min, h_max });
        }
        Ok(EnergyWindow { h_min, h_max })
    }

    pub fn contains(&self, h: f64) -> bool {
        h > self.h_min && h < self.h_max
    }

    pub fn width(&self) -> f64 {
        self.h_max - self.h_min
    }

    /// `n` energies at cell midpoints of a uniform partition.
    pub fn midpoints(&self, n: usize) -> Vec<f64> {
        (0..n)
            .map(|j| self.h_min + (j as f64 + 0.5) * self.width() / n as f64)
            .collect()
    }
}

/// A complete built-in problem.
#[derive(Clone, Debug)]
pub struct Builtin {
    pub system: SystemDefinition,
    pub schedule: ImpulseSchedule,
    pub window: EnergyWindow,
}

pub const BUILTIN_NAMES: [&str; 3] = ["paper-example", "paper-example-no-impulse", "duffing-well"];

/// Default parameters of the `duffing-well` builtin.
pub fn duffing_defaults() -> Parameters {
    [("gamma", 0.5), ("delta", 0.05), ("kick", 0.2)]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
}

/// Returns a named built-in problem. Entries of `params` override defaults.
///
/// * `paper-example`: harmonic oscillator with linear damping forcing `(0, x2)`
///   and quadratic kicks `pi (x1^2, x2^2)` at `t = 2k pi`.
/// * `paper-example-no-impulse`: the same without kicks.
/// * `duffing-well`: one well of `x2^2/2 + x1^4/4 - x1^2/2` around `(1, 0)`,
///   forcing `(0, gamma cos t - delta x2)` and a kick `(kick, 0)` at
///   `t = pi (mod 2 pi)`.
pub fn builtin(name: &str, params: &Parameters) -> Result<Builtin, SystemError> {
    let two_pi = 2.0 * PI;
    let strings = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    match name {
        "paper-example" | "paper-example-no-impulse" => {
            let system =
                SystemDefinition::from_texts("(x1^2 + x2^2)/2", &strings(&["0", "x2"]), two_pi, [0.0, 0.0], params)?;
            let map = if name == "paper-example" {
                strings(&["pi*x1^2", "pi*x2^2"])
            } else {
                strings(&["0", "0"])
            };
            let schedule = ImpulseSchedule::from_texts(two_pi, vec![two_pi], &[map], params)?;
            Ok(Builtin {
                system,
                schedule,
                window: EnergyWindow::new(0.02, 1.5)?,
            })
        }
        "duffing-well" => {
            let mut p = duffing_defaults();
            p.extend(params.iter().map(|(k, v)| (k.clone(), *v)));
            let system = SystemDefinition::from_texts(
                "x2^2/2 + x1^4/4 - x1^2/2",
                &strings(&["0", "gamma*cos(t) - delta*x2"]),
                two_pi,
                [1.0, 0.0],
                &p,
            )?;
            let schedule = ImpulseSchedule::from_texts(two_pi, vec![PI], &[strings(&["kick", "0"])], &p)?;
            Ok(Builtin {
                system,
                schedule,
                window: EnergyWindow::new(-0.245, -0.02)?,
            })
        }
        other => Err(SystemError::UnknownBuiltin(other.to_string())),
    }
}

pub(crate) fn sub(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] - b[0], a[1] - b[1]]
}

pub(crate) fn norm(a: Vec2) -> f64 {
    a[0].hypot(a[1])
}

pub(crate) fn dot(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}
