//! Compartmental SIR reference curves.
//!
//! Two integrators share [`SirParams`]:
//! - [`simulate_sir_euler`] composes unit-interval steps
//!   `ΔS = −(α/N)·S·I`, `ΔR = β·I`, `ΔI = −ΔS − ΔR`. This is the curve the
//!   agent-based model is compared against.
//! - [`simulate_sir_rk4`] integrates the continuous ODE with classical RK4,
//!   used to report how far the unit-step scheme sits from the ODE.

use thiserror::Error;

/// Tolerance on `s0 + i0 + r0 = n_total` and on curve conservation.
pub const CONSERVATION_TOLERANCE: f64 = 1e-9;

/// A step whose output dips below `-NEGATIVE_TOLERANCE` is rejected.
const NEGATIVE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SirError {
    #[error("invalid SIR parameters: {0}")]
    InvalidParams(String),
    #[error("unit step from t = {timestamp} leaves the simplex: (s, i, r) = ({s}, {i}, {r})")]
    NegativeCompartment {
        timestamp: usize,
        s: f64,
        i: f64,
        r: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SirParams {
    /// Infection rate per unit time.
    pub alpha: f64,
    /// Recovery rate per unit time, in [0, 1].
    pub beta: f64,
    pub n_total: f64,
    pub s0: f64,
    pub i0: f64,
    pub r0: f64,
    /// Number of unit timestamps after t = 0.
    pub horizon: usize,
}

impl SirParams {
    pub fn validate(&self) -> Result<(), SirError> {
        let bad = |msg: String| Err(SirError::InvalidParams(msg));
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return bad(format!("alpha = {} must be finite and >= 0", self.alpha));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return bad(format!("beta = {} must lie in [0, 1]", self.beta));
        }
        if !(self.n_total.is_finite() && self.n_total > 0.0) {
            return bad(format!("n_total = {} must be positive", self.n_total));
        }
        for (name, v) in [("s0", self.s0), ("i0", self.i0), ("r0", self.r0)] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} = {v} must be finite and >= 0"));
            }
        }
        let total = self.s0 + self.i0 + self.r0;
        if (total - self.n_total).abs() > CONSERVATION_TOLERANCE {
            return bad(format!(
                "s0 + i0 + r0 = {total} does not equal n_total = {}",
                self.n_total
            ));
        }
        if self.horizon == 0 {
            return bad("horizon must be at least 1".into());
        }
        Ok(())
    }

    pub fn initial_state(&self) -> SirState {
        SirState {
            s: self.s0,
            i: self.i0,
            r: self.r0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SirState {
    pub s: f64,
    pub i: f64,
    pub r: f64,
}

impl SirState {
    pub fn total(&self) -> f64 {
        self.s + self.i + self.r
    }
}

/// Time-indexed `(S, I, R)` trajectory, one entry per timestamp `0..=horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct SirCurve {
    pub s: Vec<f64>,
    pub i: Vec<f64>,
    pub r: Vec<f64>,
}

impl SirCurve {
    fn with_capacity(n: usize) -> Self {
        Self {
            s: Vec::with_capacity(n),
            i: Vec::with_capacity(n),
            r: Vec::with_capacity(n),
        }
    }

    fn push(&mut self, st: SirState) {
        self.s.push(st.s);
        self.i.push(st.i);
        self.r.push(st.r);
    }

    /// Number of timestamps (horizon + 1).
    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.len().saturating_sub(1)
    }

    pub fn state(&self, t: usize) -> SirState {
        SirState {
            s: self.s[t],
            i: self.i[t],
            r: self.r[t],
        }
    }

    /// `(t, I)` of the first maximum of the infected curve.
    pub fn peak_infected(&self) -> (usize, f64) {
        self.i
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (t, v)| {
                if v > best.1 {
                    (t, v)
                } else {
                    best
                }
            })
    }

    /// CSV with header `t,S,I,R`, floats to 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,S,I,R\n");
        for t in 0..self.len() {
            out.push_str(&format!(
                "{t},{},{},{}\n",
                crate::fmt_f64(self.s[t]),
                crate::fmt_f64(self.i[t]),
                crate::fmt_f64(self.r[t])
            ));
        }
        out
    }
}

/// One unit-interval step holding `S·I` and `I` fixed over the interval.
pub fn euler_unit_step(state: SirState, params: &SirParams) -> Result<SirState, SirError> {
    let infections = params.alpha / params.n_total * state.s * state.i;
    let recoveries = params.beta * state.i;
    let next = SirState {
        s: state.s - infections,
        i: state.i + infections - recoveries,
        r: state.r + recoveries,
    };
    if next.s < -NEGATIVE_TOLERANCE || next.i < -NEGATIVE_TOLERANCE || next.r < -NEGATIVE_TOLERANCE
    {
        return Err(SirError::NegativeCompartment {
            timestamp: 0,
            s: next.s,
            i: next.i,
            r: next.r,
        });
    }
    Ok(next)
}

pub fn simulate_sir_euler(params: &SirParams) -> Result<SirCurve, SirError> {
    params.validate()?;
    let mut curve = SirCurve::with_capacity(params.horizon + 1);
    let mut state = params.initial_state();
    curve.push(state);
    for t in 0..params.horizon {
        state = euler_unit_step(state, params).map_err(|e| match e {
            SirError::NegativeCompartment { s, i, r, .. } => SirError::NegativeCompartment {
                timestamp: t,
                s,
                i,
                r,
            },
            other => other,
        })?;
        curve.push(state);
    }
    Ok(curve)
}

fn derivative(st: SirState, alpha_over_n: f64, beta: f64) -> SirState {
    let infection = alpha_over_n * st.s * st.i;
    let recovery = beta * st.i;
    SirState {
        s: -infection,
        i: infection - recovery,
        r: recovery,
    }
}

fn axpy(base: SirState, h: f64, d: SirState) -> SirState {
    SirState {
        s: base.s + h * d.s,
        i: base.i + h * d.i,
        r: base.r + h * d.r,
    }
}

/// Classical RK4 with step `1 / substeps`, sampled at integer timestamps.
pub fn simulate_sir_rk4(params: &SirParams, substeps: usize) -> Result<SirCurve, SirError> {
    params.validate()?;
    if substeps == 0 {
        return Err(SirError::InvalidParams(
            "substeps must be at least 1".into(),
        ));
    }
    let h = 1.0 / substeps as f64;
    let a = params.alpha / params.n_total;
    let b = params.beta;
    let mut curve = SirCurve::with_capacity(params.horizon + 1);
    let mut y = params.initial_state();
    curve.push(y);
    for _ in 0..params.horizon {
        for _ in 0..substeps {
            let k1 = derivative(y, a, b);
            let k2 = derivative(axpy(y, h / 2.0, k1), a, b);
            let k3 = derivative(axpy(y, h / 2.0, k2), a, b);
            let k4 = derivative(axpy(y, h, k3), a, b);
            y = SirState {
                s: y.s + h / 6.0 * (k1.s + 2.0 * k2.s + 2.0 * k3.s + k4.s),
                i: y.i + h / 6.0 * (k1.i + 2.0 * k2.i + 2.0 * k3.i + k4.i),
                r: y.r + h / 6.0 * (k1.r + 2.0 * k2.r + 2.0 * k3.r + k4.r),
            };
        }
        curve.push(y);
    }
    Ok(curve)
}
