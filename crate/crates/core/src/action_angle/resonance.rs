use super::{ChartError, OrbitFamily};
use crate::system::ImpulseSchedule;

/// Largest denominator accepted by the rational reconstruction.
pub const MAX_DENOMINATOR: u64 = 1_000_000;
/// Relative tolerance for `T2 / T1 = p / s`.
pub const RATIO_TOL: f64 = 1e-9;
/// Relative spread of `T(h)` below which a family counts as isochronous.
pub const ISOCHRONY_TOL: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ResonanceError {
    #[error("period ratio {ratio} is not rational within tolerance (denominator <= {MAX_DENOMINATOR})")]
    NotRational { ratio: f64 },
    #[error("no resonant energy in the window for m <= {m_max}")]
    NoResonance { m_max: u32 },
    #[error("requested order {m} is incompatible with the isochronous period ratio {m0}/{k0}")]
    IsochronousOrder { m: u32, m0: u32, k0: u32 },
    #[error(transparent)]
    Chart(#[from] ChartError),
}

/// Which subharmonic orders to look for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ResonanceRequest {
    Order(u32),
    Auto { m_max: u32 },
}

/// The common period of forcing and impulses and one resonant level.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ResonanceSetup {
    /// `T2 / T1 = p / s`.
    pub p: u64,
    pub s: u64,
    /// `T = p T1 = s T2`.
    pub period: f64,
    /// `T(h0) / T = m / K`.
    pub m: u32,
    pub k: u32,
    /// Resonant energy; `None` when every level in the window resonates.
    pub h0: Option<f64>,
    pub isochronous: bool,
    /// Mean period of the family (the constant period when isochronous).
    pub family_period: f64,
}

impl ResonanceSetup {
    /// Span `mT` of the Melnikov integrals.
    pub fn span(&self) -> f64 {
        self.m as f64 * self.period
    }

    /// Impulses per span, `m s q`.
    pub fn impulse_count(&self, schedule: &ImpulseSchedule) -> usize {
        self.m as usize * self.s as usize * schedule.count()
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Continued-fraction convergent `p / q` of `x > 0` with `q <= max_den` and
/// `|p/q - x| <= rel_tol |x|`.
pub fn rational_approximation(x: f64, max_den: u64, rel_tol: f64) -> Option<(u64, u64)> {
    if !(x.is_finite() && x > 0.0) {
        return None;
    }
    let (mut p0, mut q0, mut p1, mut q1) = (0u64, 1u64, 1u64, 0u64);
    let mut rest = x;
    for _ in 0..64 {
        let a = rest.floor();
        if a > 1e12 {
            return None;
        }
        let a = a as u64;
        let p2 = a.checked_mul(p1)?.checked_add(p0)?;
        let q2 = a.checked_mul(q1)?.checked_add(q0)?;
        if q2 > max_den {
            return None;
        }
        if ((p2 as f64 / q2 as f64) - x).abs() <= rel_tol * x {
            let g = gcd(p2, q2);
            return Some((p2 / g, q2 / g));
        }
        (p0, q0, p1, q1) = (p1, q1, p2, q2);
        let frac = rest - a as f64;
        if frac <= 0.0 {
            return None;
        }
        rest = 1.0 / frac;
    }
    None
}

/// Finds the common period and the resonant levels of `family` under the
/// impulse schedule.
pub fn validate_resonance(
    family: &OrbitFamily,
    schedule: &ImpulseSchedule,
    request: ResonanceRequest,
) -> Result<Vec<ResonanceSetup>, ResonanceError> {
    let t1 = family.system().forcing_period();
    let t2 = schedule.window_period();
    let ratio = t2 / t1;
    let (p, s) =
        rational_approximation(ratio, MAX_DENOMINATOR, RATIO_TOL).ok_or(ResonanceError::NotRational { ratio })?;
    let period = p as f64 * t1;
    if (p as f64 * t1 - s as f64 * t2).abs() > RATIO_TOL * period {
        return Err(ResonanceError::NotRational { ratio });
    }

    let samples = family.period_samples(33)?;
    let (lo, hi) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, t)| {
            (lo.min(t), hi.max(t))
        });
    let mean = samples.iter().map(|s| s.1).sum::<f64>() / samples.len() as f64;
    let m_max = match request {
        ResonanceRequest::Order(m) => m,
        ResonanceRequest::Auto { m_max } => m_max,
    };
    let base = ResonanceSetup {
        p,
        s,
        period,
        m: 0,
        k: 0,
        h0: None,
        isochronous: false,
        family_period: mean,
    };

    if hi - lo <= ISOCHRONY_TOL * mean {
        let (m0, k0) = rational_approximation(mean / period, MAX_DENOMINATOR, ISOCHRONY_TOL)
            .ok_or(ResonanceError::NoResonance { m_max })?;
        let (m0, k0) = (m0 as u32, k0 as u32);
        let wanted = match request {
            ResonanceRequest::Order(m) => m == m0,
            ResonanceRequest::Auto { m_max } => m0 <= m_max,
        };
        if !wanted {
            return match request {
                ResonanceRequest::Order(m) => Err(ResonanceError::IsochronousOrder { m, m0, k0 }),
                ResonanceRequest::Auto { m_max } => Err(ResonanceError::NoResonance { m_max }),
            };
        }
        return Ok(vec![ResonanceSetup {
            m: m0,
            k: k0,
            isochronous: true,
            ..base
        }]);
    }

    let orders: Vec<u32> = match request {
        ResonanceRequest::Order(m) => vec![m],
        ResonanceRequest::Auto { m_max } => (1..=m_max).collect(),
    };
    let mut out = Vec::new();
    for m in orders {
        for k in 1u32.. {
            let target = m as f64 * period / k as f64;
            if target < lo {
                break;
            }
            if target > hi || gcd(m as u64, k as u64) != 1 {
                continue;
            }
            for pair in samples.windows(2) {
                let (ha, ta) = pair[0];
                let (hb, tb) = pair[1];
                if (ta - target).signum() == (tb - target).signum() && ta != target {
                    continue;
                }
                let h0 = solve_period(family, target, ha, ta - target, hb)?;
                out.push(ResonanceSetup {
                    m,
                    k,
                    h0: Some(h0),
                    ..base
                });
            }
        }
    }
    if out.is_empty() {
        return Err(ResonanceError::NoResonance { m_max });
    }
    out.sort_by(|a, b| {
        (a.m, a.k)
            .cmp(&(b.m, b.k))
            .then(a.h0.partial_cmp(&b.h0).unwrap_or(std::cmp::Ordering::Equal))
    });
    Ok(out)
}

/// Bisection for `T(h) = target` on a bracket `[a, b]`.
fn solve_period(family: &OrbitFamily, target: f64, mut a: f64, fa: f64, mut b: f64) -> Result<f64, ChartError> {
    if fa == 0.0 {
        return Ok(a);
    }
    let sa = fa.signum();
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if b - a <= 1e-14 * (1.0 + m.abs()) || m == a || m == b {
            break;
        }
        let v = family.period(m)? - target;
        if v == 0.0 {
            return Ok(m);
        }
        if v.signum() == sa {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}
