//! Split-step solver for `i u_t + Δu = μ|u|²u` on the torus.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{invalid, LabError, Result};
use crate::grid::{ComplexField, GridSpec};
use crate::par;
use crate::spectral::{self, Multiplier, Spectrum};
use crate::trajectory::Trajectory;

#[derive(Clone, Debug)]
pub struct NlsConfig {
    pub grid: GridSpec,
    pub mu: f64,
    pub dt: f64,
    pub t_end: f64,
    /// Record every `stride` steps (the final time is always recorded).
    pub stride: usize,
    pub dealias: bool,
}

impl NlsConfig {
    pub fn new(grid: GridSpec, mu: f64, dt: f64, t_end: f64) -> Result<Self> {
        let c = NlsConfig {
            grid,
            mu,
            dt,
            t_end,
            stride: 1,
            dealias: true,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride.max(1);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.mu.abs() != 1.0 {
            return Err(invalid("mu", format!("{} is not ±1", self.mu)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid("dt", "time step must be positive"));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(invalid("t_end", "horizon must be nonnegative"));
        }
        Ok(())
    }

    /// Step count and the uniform step that lands exactly on `t_end`.
    pub fn steps(&self) -> (usize, f64) {
        if self.t_end == 0.0 {
            return (0, self.dt);
        }
        let n = (self.t_end / self.dt - 1e-9).ceil().max(1.0) as usize;
        (n, self.t_end / n as f64)
    }
}

/// Keeps `|m| ≤ n/3` along each axis (2/3 rule).
pub fn dealias_mask(grid: &GridSpec) -> Multiplier {
    let cut = grid.lattice_unit() * (grid.n() / 3) as f64 * (1.0 + 1e-12);
    Multiplier::real(grid, move |a, b| if a.abs() <= cut && b.abs() <= cut { 1.0 } else { 0.0 })
        .expect("finite")
}

/// Strang stepper with precomputed half-step and dealias tables.
pub struct NlsStepper {
    mu: f64,
    dt: f64,
    half: Multiplier,
    half_masked: Multiplier,
}

impl NlsStepper {
    pub fn new(grid: &GridSpec, dt: f64, mu: f64, dealias: bool) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid("dt", "time step must be positive"));
        }
        let half = Multiplier::schrodinger(grid, 0.5 * dt);
        let half_masked = if dealias {
            half.compose(&dealias_mask(grid))
        } else {
            half.clone()
        };
        Ok(NlsStepper {
            mu,
            dt,
            half,
            half_masked,
        })
    }

    pub fn step(&self, u: &ComplexField) -> ComplexField {
        let mut s = spectral::forward(u);
        s.apply(&self.half);
        let mut v = s.inverse();
        let c = -self.mu * self.dt;
        par::for_each_mut(v.values_mut(), |_, z| {
            *z *= Complex64::from_polar(1.0, c * z.norm_sqr());
        });
        let mut s = spectral::forward(&v);
        s.apply(&self.half_masked);
        s.inverse()
    }
}

/// One Strang step: half free flow, nonlinear phase rotation, dealias,
/// half free flow.
pub fn nls_step(u: &ComplexField, dt: f64, mu: f64) -> Result<ComplexField> {
    if mu.abs() != 1.0 {
        return Err(invalid("mu", format!("{mu} is not ±1")));
    }
    Ok(NlsStepper::new(u.grid(), dt, mu, true)?.step(u))
}

pub fn mass(u: &ComplexField) -> f64 {
    u.l2_norm_sq()
}

/// `∫|∇u|²` by Parseval (derivative Nyquist rule).
pub fn gradient_norm_sq(s: &Spectrum) -> f64 {
    let g = s.grid().clone();
    let nyq = g.nyquist();
    s.weighted_norm_sq(move |a, b| {
        let a2 = if (a.abs() - nyq).abs() < 1e-9 * nyq { 0.0 } else { a * a };
        let b2 = if (b.abs() - nyq).abs() < 1e-9 * nyq { 0.0 } else { b * b };
        a2 + b2
    })
}

/// `∫ |∇u|² + μ|u|⁴/2`.
pub fn hamiltonian(u: &ComplexField, mu: f64) -> f64 {
    let kin = gradient_norm_sq(&spectral::forward(u));
    let quartic = u.lp_norm(4.0).powi(4);
    kin + 0.5 * mu * quartic
}

/// `μ|u|²u`, the forcing `i u_t + Δu` of an exact solution.
pub fn nonlinearity(u: &ComplexField, mu: f64) -> ComplexField {
    u.map(move |z| z * (mu * z.norm_sqr()))
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct NlsSample {
    pub t: f64,
    pub mass: f64,
    pub hamiltonian: f64,
}

#[derive(Clone, Debug)]
pub struct NlsRun {
    pub trajectory: Trajectory<ComplexField>,
    pub samples: Vec<NlsSample>,
    pub dt_used: f64,
}

/// Evolves `u0`, calling `visit(t, u)` at every recorded sample without
/// storing states.
pub fn nls_visit<F>(u0: &ComplexField, cfg: &NlsConfig, mut visit: F) -> Result<f64>
where
    F: FnMut(f64, &ComplexField) -> Result<()>,
{
    cfg.validate()?;
    cfg.grid.ensure_same(u0.grid())?;
    let (steps, dt) = cfg.steps();
    let stepper = NlsStepper::new(&cfg.grid, dt, cfg.mu, cfg.dealias)?;
    let mut u = u0.clone();
    visit(0.0, &u)?;
    for k in 1..=steps {
        u = stepper.step(&u);
        let t = k as f64 * dt;
        if !u.is_finite() {
            return Err(LabError::BlowUp { t });
        }
        if k % cfg.stride == 0 || k == steps {
            visit(t, &u)?;
        }
    }
    Ok(dt)
}

pub fn nls_evolve(u0: &ComplexField, cfg: &NlsConfig) -> Result<NlsRun> {
    let mut trajectory = Trajectory::new();
    let mut samples = Vec::new();
    let dt_used = nls_visit(u0, cfg, |t, u| {
        samples.push(NlsSample {
            t,
            mass: mass(u),
            hamiltonian: hamiltonian(u, cfg.mu),
        });
        trajectory.push(t, u.clone())
    })?;
    Ok(NlsRun {
        trajectory,
        samples,
        dt_used,
    })
}

/// Time reversal: `conj(u(T-t))` solves the same equation, so evolving
/// `conj(u_T)` forward and conjugating runs the flow backward.
pub fn nls_evolve_backward(u_end: &ComplexField, cfg: &NlsConfig) -> Result<ComplexField> {
    let run = nls_evolve(&u_end.conj(), &cfg.clone().with_stride(usize::MAX))?;
    Ok(run.trajectory.last().unwrap().1.conj())
}

/// `w(t) = e^{-itΔ} u(t)`.
pub fn scattering_profile(traj: &Trajectory<ComplexField>) -> Result<Vec<ComplexField>> {
    if traj.is_empty() {
        return Err(invalid("trajectory", "empty"));
    }
    let states: Vec<(f64, &ComplexField)> = traj.iter().collect();
    Ok(par::map_jobs(&states, |(t, u)| spectral::free_schrodinger(u, -t)))
}

/// Largest relative drift of mass and Hamiltonian against the first sample.
pub fn conservation_drift(samples: &[NlsSample]) -> (f64, f64) {
    let Some(first) = samples.first() else {
        return (0.0, 0.0);
    };
    let rel = |a: f64, b: f64| {
        if b.abs() > 0.0 {
            (a - b).abs() / b.abs()
        } else {
            a.abs()
        }
    };
    samples.iter().fold((0.0f64, 0.0f64), |(m, h), s| {
        (
            m.max(rel(s.mass, first.mass)),
            h.max(rel(s.hamiltonian, first.hamiltonian)),
        )
    })
}
