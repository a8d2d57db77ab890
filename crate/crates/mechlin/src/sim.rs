//! Fixed-step numerical integration and closed-loop certificates.
//!
//! The integrator is classical fourth-order Runge–Kutta over the
//! tangent-bundle state (x, v).  Input signals that switch discontinuously
//! (steps, piecewise constants) are frozen over each integration step to the
//! value they take at the step's start, so a switch acts exactly at a grid
//! node and every Runge–Kutta stage sees a smooth right-hand side; smooth
//! signals are evaluated at the stage times.  Switch times aligned with grid
//! nodes therefore cost none of the integrator's order.
//!
//! [`decoupling_certificate`] checks by simulation that a synthesized
//! feedback law renders the closed loop linear and non-interacting: a unit
//! step on new-input channel ℓ must leave every other output unchanged
//! (within [`CROSS_CHANNEL_TOL`]), drive its own output exactly like a chain
//! of 2ν_ℓ integrators (within [`OWN_CHANNEL_TOL`] of the analytic
//! solution), and responses to summed inputs must equal summed responses
//! (within [`SUPERPOSITION_TOL`]).

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::expr::compiled::{CompileError, CompiledVec};
use crate::expr::Expr;
use crate::model::{MechanicalSystem, ModelError};
use crate::synthesis::FeedbackLaw;

/// Default integration step in seconds.
pub const DEFAULT_DT: f64 = 1e-4;
/// Default simulation horizon in seconds.
pub const DEFAULT_HORIZON: f64 = 1.0;
/// Default onset time for certificate step inputs (snapped to the grid).
pub const DEFAULT_STEP_ONSET: f64 = 0.1;
/// A cross-channel output deviation at or above this fails the certificate.
pub const CROSS_CHANNEL_TOL: f64 = 1e-7;
/// Maximum deviation of a stepped output from its analytic integrator chain.
pub const OWN_CHANNEL_TOL: f64 = 1e-5;
/// Maximum deviation from additivity of step responses.
pub const SUPERPOSITION_TOL: f64 = 1e-6;
/// σ_min/σ_max of the decoupling matrix below this aborts a closed-loop run.
const SINGULAR_RATIO: f64 = 1e-6;
/// Sup-norm of the state above this aborts with [`SimError::Divergence`].
const DIVERGENCE_NORM: f64 = 1e9;

#[derive(Clone, Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid simulation input: {0}")]
    Input(String),
    #[error("non-finite {context} at t = {t:.6} s")]
    NonFinite { t: f64, context: String },
    #[error("trajectory diverged at t = {t:.6} s (state sup-norm {norm:.3e})")]
    Divergence {
        t: f64,
        norm: f64,
        /// The trajectory up to (not including) the diverged node.
        partial: Box<Trajectory>,
    },
    #[error(
        "closed loop hit the singular locus of the decoupling matrix at \
         t = {t:.6} s (σ_min/σ_max = {ratio:.3e})"
    )]
    SingularLocus { t: f64, ratio: f64 },
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// An exogenous scalar input channel.
#[derive(Clone, Debug, PartialEq)]
pub enum InputSignal {
    /// Identically zero.
    Zero,
    /// `amplitude` for t ≥ onset, zero before.
    Step { amplitude: f64, onset: f64 },
    /// `amplitude · sin(2π · frequency · t)`.
    Sinusoid { amplitude: f64, frequency: f64 },
    /// Zero before `times[0]`, then `values[i]` on [`times[i]`, `times[i+1]`).
    /// `times` must be finite and strictly increasing.
    Piecewise { times: Vec<f64>, values: Vec<f64> },
}

impl InputSignal {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |what: &str| Err(SimError::Input(format!("input signal: {what}")));
        match self {
            InputSignal::Zero => Ok(()),
            InputSignal::Step { amplitude, onset } => {
                if !(amplitude.is_finite() && onset.is_finite()) {
                    return bad("step amplitude and onset must be finite");
                }
                Ok(())
            }
            InputSignal::Sinusoid {
                amplitude,
                frequency,
            } => {
                if !(amplitude.is_finite() && frequency.is_finite()) {
                    return bad("sinusoid amplitude and frequency must be finite");
                }
                Ok(())
            }
            InputSignal::Piecewise { times, values } => {
                if times.len() != values.len() {
                    return bad("piecewise times and values must have equal length");
                }
                if times.iter().chain(values).any(|c| !c.is_finite()) {
                    return bad("piecewise times and values must be finite");
                }
                if times.windows(2).any(|w| w[0] >= w[1]) {
                    return bad("piecewise times must be strictly increasing");
                }
                Ok(())
            }
        }
    }

    /// Signal value at time t; steps switch at t ≥ onset.
    pub fn value(&self, t: f64) -> f64 {
        match self {
            InputSignal::Zero => 0.0,
            InputSignal::Step { amplitude, onset } => {
                if t >= *onset {
                    *amplitude
                } else {
                    0.0
                }
            }
            InputSignal::Sinusoid {
                amplitude,
                frequency,
            } => amplitude * (2.0 * std::f64::consts::PI * frequency * t).sin(),
            InputSignal::Piecewise { times, values } => {
                let mut out = 0.0;
                for (time, value) in times.iter().zip(values) {
                    if t >= *time {
                        out = *value;
                    } else {
                        break;
                    }
                }
                out
            }
        }
    }

    /// Value seen by a Runge–Kutta stage at `stage_t` inside the step that
    /// starts at `step_start`: discontinuous kinds are frozen to their value
    /// at the step start, smooth kinds are evaluated at the stage time.
    fn stage_value(&self, stage_t: f64, step_start: f64) -> f64 {
        match self {
            InputSignal::Zero | InputSignal::Sinusoid { .. } => self.value(stage_t),
            InputSignal::Step { .. } | InputSignal::Piecewise { .. } => self.value(step_start),
        }
    }
}

/// A sampled state/input/output history on a uniform time grid.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub n: usize,
    pub m: usize,
    /// Node times t_k = k·dt.
    pub times: Vec<f64>,
    /// Tangent-bundle states [x¹ … xⁿ, v¹ … vⁿ], one row per node.
    pub states: Vec<Vec<f64>>,
    /// Inputs applied over the step that starts at each node.
    pub inputs: Vec<Vec<f64>>,
    /// Output values at each node.
    pub outputs: Vec<Vec<f64>>,
}

impl Trajectory {
    /// Renders `t, x1…xn, v1…vn, u1…um, y1…ym` rows.
    pub fn to_csv(&self) -> String {
        let mut head = vec!["t".to_string()];
        for i in 1..=self.n {
            head.push(format!("x{i}"));
        }
        for i in 1..=self.n {
            head.push(format!("v{i}"));
        }
        for r in 1..=self.m {
            head.push(format!("u{r}"));
        }
        for r in 1..=self.m {
            head.push(format!("y{r}"));
        }
        let mut out = head.join(", ");
        out.push('\n');
        for k in 0..self.times.len() {
            let row: Vec<String> = std::iter::once(self.times[k])
                .chain(self.states[k].iter().copied())
                .chain(self.inputs[k].iter().copied())
                .chain(self.outputs[k].iter().copied())
                .map(|c| c.to_string())
                .collect();
            out.push_str(&row.join(", "));
            out.push('\n');
        }
        out
    }
}

/// The system's vector field compiled to stack programs over [x, v].
struct CompiledDynamics {
    n: usize,
    m: usize,
    /// n drift accelerations −vᵀΓv + e.
    accel: CompiledVec,
    /// n·m entries, the columns g_r stacked row-major by channel.
    controls: CompiledVec,
    /// The output functions.
    outputs: CompiledVec,
}

impl CompiledDynamics {
    fn new(s: &MechanicalSystem) -> Result<Self, SimError> {
        let width = 2 * s.n;
        let accel_exprs: Vec<Expr> = (1..=s.n).map(|i| s.acceleration_drift(i)).collect();
        let mut g_exprs = Vec::with_capacity(s.n * s.m);
        for gr in &s.g {
            g_exprs.extend(gr.iter().cloned());
        }
        Ok(CompiledDynamics {
            n: s.n,
            m: s.m,
            accel: CompiledVec::compile(&accel_exprs, width, &s.params)?,
            controls: CompiledVec::compile(&g_exprs, width, &s.params)?,
            outputs: CompiledVec::compile(&s.h, width, &s.params)?,
        })
    }

    /// dy = (v, accel + Σ_r u_r g_r).
    fn rhs(&self, y: &[f64], u: &[f64], work: &mut RhsWork, dy: &mut [f64]) {
        self.accel.eval_into(y, &mut work.scratch, &mut work.acc);
        self.controls.eval_into(y, &mut work.scratch, &mut work.gcols);
        for i in 0..self.n {
            dy[i] = y[self.n + i];
            let mut a = work.acc[i];
            for r in 0..self.m {
                a += u[r] * work.gcols[r * self.n + i];
            }
            dy[self.n + i] = a;
        }
    }
}

struct RhsWork {
    scratch: Vec<f64>,
    acc: Vec<f64>,
    gcols: Vec<f64>,
}

/// Runge–Kutta 4 with a per-stage control callback `(step_start, stage_t,
/// state) → u`.  Records nodes 0..=steps with steps = round(horizon/dt).
fn drive<F>(
    cd: &CompiledDynamics,
    x0: &[f64],
    v0: &[f64],
    horizon: f64,
    dt: f64,
    mut control: F,
) -> Result<Trajectory, SimError>
where
    F: FnMut(f64, f64, &[f64]) -> Result<Vec<f64>, SimError>,
{
    let (n, m) = (cd.n, cd.m);
    if x0.len() != n || v0.len() != n {
        return Err(SimError::Input(format!(
            "initial condition has {} positions and {} velocities for an n = {} system",
            x0.len(),
            v0.len(),
            n
        )));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(SimError::Input(format!("step size dt = {dt} must be positive")));
    }
    if !(horizon.is_finite() && horizon >= 0.0) {
        return Err(SimError::Input(format!(
            "horizon {horizon} must be non-negative"
        )));
    }
    let steps = (horizon / dt).round() as usize;

    let mut y: Vec<f64> = x0.iter().chain(v0).copied().collect();
    let mut times = Vec::with_capacity(steps + 1);
    let mut states: Vec<Vec<f64>> = Vec::with_capacity(steps + 1);
    let mut inputs: Vec<Vec<f64>> = Vec::with_capacity(steps + 1);
    let mut outputs: Vec<Vec<f64>> = Vec::with_capacity(steps + 1);

    let mut work = RhsWork {
        scratch: Vec::new(),
        acc: vec![0.0; n],
        gcols: vec![0.0; n * m],
    };
    let mut outs = vec![0.0; m];
    let mut ybuf = vec![0.0; 2 * n];
    let mut k1 = vec![0.0; 2 * n];
    let mut k2 = vec![0.0; 2 * n];
    let mut k3 = vec![0.0; 2 * n];
    let mut k4 = vec![0.0; 2 * n];

    for k in 0..=steps {
        let t = k as f64 * dt;
        if y.iter().any(|c| !c.is_finite()) {
            return Err(SimError::NonFinite {
                t,
                context: "state".into(),
            });
        }
        let norm = y.iter().fold(0.0f64, |a, c| a.max(c.abs()));
        if norm > DIVERGENCE_NORM {
            return Err(SimError::Divergence {
                t,
                norm,
                partial: Box::new(Trajectory {
                    n,
                    m,
                    times,
                    states,
                    inputs,
                    outputs,
                }),
            });
        }
        let u = control(t, t, &y)?;
        if u.len() != m {
            return Err(SimError::Input(format!(
                "control callback returned {} inputs for an m = {} system",
                u.len(),
                m
            )));
        }
        if u.iter().any(|c| !c.is_finite()) {
            return Err(SimError::NonFinite {
                t,
                context: "control input".into(),
            });
        }
        cd.outputs.eval_into(&y, &mut work.scratch, &mut outs);
        if outs.iter().any(|c| !c.is_finite()) {
            return Err(SimError::NonFinite {
                t,
                context: "output".into(),
            });
        }
        times.push(t);
        states.push(y.clone());
        inputs.push(u.clone());
        outputs.push(outs.clone());
        if k == steps {
            break;
        }

        cd.rhs(&y, &u, &mut work, &mut k1);
        for i in 0..2 * n {
            ybuf[i] = y[i] + 0.5 * dt * k1[i];
        }
        let u2 = control(t, t + 0.5 * dt, &ybuf)?;
        cd.rhs(&ybuf, &u2, &mut work, &mut k2);
        for i in 0..2 * n {
            ybuf[i] = y[i] + 0.5 * dt * k2[i];
        }
        let u3 = control(t, t + 0.5 * dt, &ybuf)?;
        cd.rhs(&ybuf, &u3, &mut work, &mut k3);
        for i in 0..2 * n {
            ybuf[i] = y[i] + dt * k3[i];
        }
        let u4 = control(t, t + dt, &ybuf)?;
        cd.rhs(&ybuf, &u4, &mut work, &mut k4);
        for i in 0..2 * n {
            y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }

    Ok(Trajectory {
        n,
        m,
        times,
        states,
        inputs,
        outputs,
    })
}

/// Integrate the open-loop system under the given input signals, one per
/// control channel.
pub fn integrate(
    s: &MechanicalSystem,
    x0: &[f64],
    v0: &[f64],
    u: &[InputSignal],
    horizon: f64,
    dt: f64,
) -> Result<Trajectory, SimError> {
    if u.len() != s.m {
        return Err(SimError::Input(format!(
            "{} input signals supplied for an m = {} system",
            u.len(),
            s.m
        )));
    }
    for sig in u {
        sig.validate()?;
    }
    let cd = CompiledDynamics::new(s)?;
    drive(&cd, x0, v0, horizon, dt, |start, t, _y| {
        Ok(u.iter().map(|sig| sig.stage_value(t, start)).collect())
    })
}

/// Simulate the closed loop u_r = vᵀγ^r v + α^r + Σ_s β^r_s ũ_s and return
/// the trajectory in both charts: the original coordinates, and the
/// linearizing chart (φ(x), Dφ(x)·v) whose outputs are the chain heads.
///
/// The run aborts with [`SimError::SingularLocus`] if the decoupling matrix
/// degenerates along the trajectory (σ_min ≤ 1e-6·σ_max), since the feedback
/// loses meaning there.
pub fn closed_loop_run(
    s: &MechanicalSystem,
    law: &FeedbackLaw,
    x0: &[f64],
    v0: &[f64],
    utilde: &[InputSignal],
    horizon: f64,
    dt: f64,
) -> Result<(Trajectory, Trajectory), SimError> {
    let (n, m) = (s.n, s.m);
    if law.n != n || law.m != m {
        return Err(SimError::Input(format!(
            "feedback law is for an (n, m) = ({}, {}) system, got ({n}, {m})",
            law.n, law.m
        )));
    }
    if utilde.len() != m {
        return Err(SimError::Input(format!(
            "{} input signals supplied for an m = {m} system",
            utilde.len()
        )));
    }
    for sig in utilde {
        sig.validate()?;
    }
    let width = 2 * n;
    let cd = CompiledDynamics::new(s)?;

    // u_r − Σ_s β^r_s ũ_s = vᵀ γ^r v + α^r, compiled per channel.
    let tr = &law.transformation;
    let mut quad_exprs = Vec::with_capacity(m);
    for r in 0..m {
        let mut terms = vec![tr.alpha[r].clone()];
        for j in 0..n {
            for k in 0..n {
                let coeff = &tr.gamma_fb[r][j][k];
                if *coeff == Expr::zero() {
                    continue;
                }
                terms.push(Expr::mul(vec![
                    coeff.clone(),
                    Expr::var(n + j + 1),
                    Expr::var(n + k + 1),
                ]));
            }
        }
        quad_exprs.push(Expr::add(terms));
    }
    let quad = CompiledVec::compile(&quad_exprs, width, &s.params)?;
    let beta_exprs: Vec<Expr> = tr.beta.iter().flat_map(|row| row.iter().cloned()).collect();
    let gains = CompiledVec::compile(&beta_exprs, width, &s.params)?;
    let d_exprs: Vec<Expr> = law
        .d_mat
        .iter()
        .flat_map(|row| row.iter().cloned())
        .collect();
    let dcomp = CompiledVec::compile(&d_exprs, width, &s.params)?;

    let mut scratch = Vec::new();
    let mut qbuf = vec![0.0; m];
    let mut bbuf = vec![0.0; m * m];
    let mut dbuf = vec![0.0; m * m];
    let control = |start: f64, t: f64, y: &[f64]| -> Result<Vec<f64>, SimError> {
        dcomp.eval_into(y, &mut scratch, &mut dbuf);
        if dbuf.iter().any(|c| !c.is_finite()) {
            return Err(SimError::NonFinite {
                t,
                context: "decoupling matrix".into(),
            });
        }
        let svals = DMatrix::from_row_slice(m, m, &dbuf).singular_values();
        let smax = svals.iter().copied().fold(0.0f64, f64::max);
        let smin = svals.iter().copied().fold(f64::INFINITY, f64::min);
        if !(smin > SINGULAR_RATIO * smax) {
            return Err(SimError::SingularLocus {
                t,
                ratio: if smax > 0.0 { smin / smax } else { 0.0 },
            });
        }
        quad.eval_into(y, &mut scratch, &mut qbuf);
        gains.eval_into(y, &mut scratch, &mut bbuf);
        let mut u = vec![0.0; m];
        for (r, out) in u.iter_mut().enumerate() {
            let mut val = qbuf[r];
            for (sx, sig) in utilde.iter().enumerate() {
                val += bbuf[r * m + sx] * sig.stage_value(t, start);
            }
            *out = val;
        }
        Ok(u)
    };
    let original = drive(&cd, x0, v0, horizon, dt, control)?;

    // Map every node through Φ(x, v) = (φ(x), Dφ(x)·v).
    let phi_c = CompiledVec::compile(&law.phi, width, &s.params)?;
    let j_exprs: Vec<Expr> = law
        .jphi
        .iter()
        .flat_map(|row| row.iter().cloned())
        .collect();
    let jphi_c = CompiledVec::compile(&j_exprs, width, &s.params)?;
    let mut xbuf = vec![0.0; n];
    let mut jbuf = vec![0.0; n * n];
    let heads: Vec<usize> = (0..m).map(|l| law.mu_offsets[l]).collect();
    let mut tstates = Vec::with_capacity(original.times.len());
    let mut tinputs = Vec::with_capacity(original.times.len());
    let mut toutputs = Vec::with_capacity(original.times.len());
    for (k, y) in original.states.iter().enumerate() {
        let t = original.times[k];
        phi_c.eval_into(y, &mut scratch, &mut xbuf);
        jphi_c.eval_into(y, &mut scratch, &mut jbuf);
        let mut st = vec![0.0; 2 * n];
        st[..n].copy_from_slice(&xbuf);
        for i in 0..n {
            let mut vi = 0.0;
            for (jx, yv) in y[n..].iter().enumerate() {
                vi += jbuf[i * n + jx] * yv;
            }
            st[n + i] = vi;
        }
        if st.iter().any(|c| !c.is_finite()) {
            return Err(SimError::NonFinite {
                t,
                context: "transformed state".into(),
            });
        }
        toutputs.push(heads.iter().map(|&hx| st[hx]).collect());
        tinputs.push(utilde.iter().map(|sig| sig.stage_value(t, t)).collect());
        tstates.push(st);
    }
    let transformed = Trajectory {
        n,
        m,
        times: original.times.clone(),
        states: tstates,
        inputs: tinputs,
        outputs: toutputs,
    };
    Ok((original, transformed))
}

/// Per-channel results of a decoupling certificate run.
#[derive(Clone, Debug, serde::Serialize)]
pub struct ChannelCheck {
    /// 1-based channel index.
    pub channel: usize,
    /// The chain half-length ν of this channel.
    pub half_degree: usize,
    /// max |y_i(t) − y_i⁰(t)| over all other outputs i against the unforced
    /// baseline, while this channel is stepped.
    pub cross_deviation: f64,
    /// max |y(t) − y_ref(t)| against the analytic 2ν-integrator response.
    pub own_deviation: f64,
    pub cross_ok: bool,
    pub own_ok: bool,
}

/// Numerical evidence that a feedback law linearizes and decouples the loop.
#[derive(Clone, Debug, serde::Serialize)]
pub struct DecouplingCertificate {
    pub horizon: f64,
    pub dt: f64,
    /// Step onset actually used (snapped onto the time grid).
    pub step_onset: f64,
    pub cross_tolerance: f64,
    pub own_tolerance: f64,
    pub superposition_tolerance: f64,
    pub channels: Vec<ChannelCheck>,
    /// max |y_{A+B} − y_A − y_B + y_0| over all outputs and times.
    pub superposition_deviation: f64,
    pub superposition_ok: bool,
    pub passed: bool,
}

/// Certify by simulation that the closed loop under `law` is linear and
/// non-interacting from the new inputs to the outputs.
///
/// Runs an unforced baseline, then one unit step per channel; each stepped
/// output is compared against the exact polynomial response of a chain of
/// 2ν integrators started from the trajectory's own transformed initial
/// data, and the remaining outputs are compared against the baseline.
/// A final run with superposed inputs checks additivity.
pub fn decoupling_certificate(
    s: &MechanicalSystem,
    law: &FeedbackLaw,
    x0: &[f64],
    v0: &[f64],
    horizon: f64,
    dt: f64,
) -> Result<DecouplingCertificate, SimError> {
    let m = s.m;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(SimError::Input(format!("step size dt = {dt} must be positive")));
    }
    let onset = (DEFAULT_STEP_ONSET / dt).round() * dt;
    let zero = vec![InputSignal::Zero; m];
    let (base, _) = closed_loop_run(s, law, x0, v0, &zero, horizon, dt)?;
    let mut runs = Vec::with_capacity(m);
    for j in 0..m {
        let mut sigs = zero.clone();
        sigs[j] = InputSignal::Step {
            amplitude: 1.0,
            onset,
        };
        runs.push(closed_loop_run(s, law, x0, v0, &sigs, horizon, dt)?);
    }

    let mut channels = Vec::with_capacity(m);
    for (j, (orig, tf)) in runs.iter().enumerate() {
        let mut cross = 0.0f64;
        for (k, row) in orig.outputs.iter().enumerate() {
            for i in 0..m {
                if i != j {
                    cross = cross.max((row[i] - base.outputs[k][i]).abs());
                }
            }
        }
        // Initial output derivatives, read off the transformed chart:
        // y^(2i) = x̃ at chain slot i, y^(2i+1) = ṽ at chain slot i.
        let nu = law.nu[j];
        let start = law.mu_offsets[j];
        let y0 = &tf.states[0];
        let mut derivs = vec![0.0; 2 * nu];
        for i in 0..nu {
            derivs[2 * i] = y0[start + i];
            derivs[2 * i + 1] = y0[s.n + start + i];
        }
        let mut own = 0.0f64;
        for (k, &t) in orig.times.iter().enumerate() {
            let mut yref = 0.0;
            let mut tp = 1.0; // t^q / q!
            for (q, d) in derivs.iter().enumerate() {
                yref += d * tp;
                tp *= t / (q as f64 + 1.0);
            }
            let tau = t - onset;
            if tau >= 0.0 {
                let mut fp = 1.0; // τ^{2ν} / (2ν)!
                for q in 1..=2 * nu {
                    fp *= tau / q as f64;
                }
                yref += fp;
            }
            own = own.max((orig.outputs[k][j] - yref).abs());
        }
        channels.push(ChannelCheck {
            channel: j + 1,
            half_degree: nu,
            cross_deviation: cross,
            own_deviation: own,
            cross_ok: cross < CROSS_CHANNEL_TOL,
            own_ok: own < OWN_CHANNEL_TOL,
        });
    }

    // Additivity: compare the response to summed inputs with the sum of the
    // single-input responses (all relative to the unforced baseline).
    let (resp_a, resp_b, combined) = if m >= 2 {
        let mut sigs = zero.clone();
        sigs[0] = InputSignal::Step {
            amplitude: 1.0,
            onset,
        };
        sigs[1] = InputSignal::Step {
            amplitude: 1.0,
            onset,
        };
        let (ab, _) = closed_loop_run(s, law, x0, v0, &sigs, horizon, dt)?;
        (runs[0].0.clone(), runs[1].0.clone(), ab)
    } else {
        // Single channel: superpose two steps of different size and onset.
        let onset2 = (3.0 * DEFAULT_STEP_ONSET / dt).round() * dt;
        let (b, _) = closed_loop_run(
            s,
            law,
            x0,
            v0,
            &[InputSignal::Step {
                amplitude: 0.5,
                onset: onset2,
            }],
            horizon,
            dt,
        )?;
        let (ab, _) = closed_loop_run(
            s,
            law,
            x0,
            v0,
            &[InputSignal::Piecewise {
                times: vec![onset, onset2],
                values: vec![1.0, 1.5],
            }],
            horizon,
            dt,
        )?;
        (runs[0].0.clone(), b, ab)
    };
    let mut sup_dev = 0.0f64;
    for (k, row) in combined.outputs.iter().enumerate() {
        for i in 0..m {
            let lin = resp_a.outputs[k][i] + resp_b.outputs[k][i] - base.outputs[k][i];
            sup_dev = sup_dev.max((row[i] - lin).abs());
        }
    }
    let superposition_ok = sup_dev < SUPERPOSITION_TOL;

    let passed = superposition_ok && channels.iter().all(|c| c.cross_ok && c.own_ok);
    Ok(DecouplingCertificate {
        horizon,
        dt,
        step_onset: onset,
        cross_tolerance: CROSS_CHANNEL_TOL,
        own_tolerance: OWN_CHANNEL_TOL,
        superposition_tolerance: SUPERPOSITION_TOL,
        channels,
        superposition_deviation: sup_dev,
        superposition_ok,
        passed,
    })
}

/// Total energy ½ vᵀM(x)v + V(x) along a trajectory, given the inertia
/// matrix and potential that generated the system.
pub fn energy_series(
    mass: &[Vec<Expr>],
    potential: &Expr,
    params: &BTreeMap<String, f64>,
    traj: &Trajectory,
) -> Result<Vec<f64>, SimError> {
    let n = traj.n;
    if mass.len() != n || mass.iter().any(|row| row.len() != n) {
        return Err(SimError::Input(format!(
            "inertia matrix must be {n}×{n} to match the trajectory"
        )));
    }
    let mut entries: Vec<Expr> = mass.iter().flat_map(|row| row.iter().cloned()).collect();
    entries.push(potential.clone());
    let comp = CompiledVec::compile(&entries, 2 * n, params)?;
    let mut scratch = Vec::new();
    let mut buf = vec![0.0; n * n + 1];
    let mut series = Vec::with_capacity(traj.times.len());
    for (k, y) in traj.states.iter().enumerate() {
        comp.eval_into(y, &mut scratch, &mut buf);
        let mut e = buf[n * n];
        for i in 0..n {
            for j in 0..n {
                e += 0.5 * y[n + i] * buf[i * n + j] * y[n + j];
            }
        }
        if !e.is_finite() {
            return Err(SimError::NonFinite {
                t: traj.times[k],
                context: "energy".into(),
            });
        }
        series.push(e);
    }
    Ok(series)
}

/// max |E_k − E_0| / max(|E_0|, 1): drift of a conserved energy relative to
/// its initial magnitude.
pub fn relative_energy_drift(series: &[f64]) -> f64 {
    let Some(&e0) = series.first() else {
        return 0.0;
    };
    let dev = series.iter().fold(0.0f64, |a, &e| a.max((e - e0).abs()));
    dev / e0.abs().max(1.0)
}
