//! Interaction Morawetz potential with the periodic sign kernel, its free
//! derivative identity and the forced correction terms.
//!
//! The kernel `sgn((x−y)₁)` is replaced by the odd, mean-zero `L`-periodic
//! square wave `S`, truncated to the lattice: `S(d) = Σ c_m e^{2πimd/L}`
//! with `c_m = −2i/(πm)` for odd `m` and zero otherwise. Every double
//! integral `∫∫ a(y) S((x−y)₁) b(x)` only sees the one-dimensional marginals
//! of `a` and `b`, so it costs one small DFT per factor.
//!
//! `S` jumps by `+2` at zero separation and by `−2` at `L/2`; the free
//! identity `dM/dt = 4I` only sees the first jump, so it holds while the
//! interacting parts of `u` and `v` stay closer than `L/2` along the axis.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{invalid, LabError, Result};
use crate::grid::{ComplexField, GridSpec, RealField};
use crate::littlewood_paley::{band_multiplier, DyadicRange};
use crate::par;
use crate::spectral::{self, Multiplier, Spectrum};
use crate::trajectory::Trajectory;

fn check_axis(axis: usize) {
    assert!(axis == 1 || axis == 2, "axis must be 1 or 2");
}

/// Square-wave Fourier coefficient for signed mode `m`.
pub fn sign_coefficient(m: i64) -> Complex64 {
    if m % 2 == 0 {
        Complex64::default()
    } else {
        Complex64::new(0.0, -2.0 / (std::f64::consts::PI * m as f64))
    }
}

/// Truncated square wave sampled at grid offsets `d = i·h`, `i = 0..n`.
pub fn kernel_samples(n: usize) -> Vec<f64> {
    let half = n as i64 / 2;
    (0..n)
        .map(|i| {
            let mut acc = 0.0;
            for m in (1..half).step_by(2) {
                // c_m e^{iθ} + c_{-m} e^{-iθ} = (4/(πm)) sin θ
                let th = 2.0 * std::f64::consts::PI * (m * i as i64) as f64 / n as f64;
                acc += 4.0 / (std::f64::consts::PI * m as f64) * th.sin();
            }
            acc
        })
        .collect()
}

/// `max_d |S(d)|` over grid offsets (the Gibbs overshoot, about 1.18).
pub fn kernel_sup(n: usize) -> f64 {
    kernel_samples(n).into_iter().fold(0.0, |m, k| m.max(k.abs()))
}

/// `∫ f dx_⊥` as a function of `x_axis`.
pub fn marginal(f: &RealField, axis: usize) -> Vec<f64> {
    check_axis(axis);
    let n = f.grid().n();
    let h = f.grid().spacing();
    let v = f.values();
    if axis == 1 {
        par::map_range(n, |r| v[r * n..(r + 1) * n].iter().sum::<f64>() * h)
    } else {
        let mut out = vec![0.0; n];
        for r in 0..n {
            for (c, o) in out.iter_mut().enumerate() {
                *o += v[r * n + c];
            }
        }
        out.iter_mut().for_each(|o| *o *= h);
        out
    }
}

fn complex_marginal(f: &ComplexField, axis: usize) -> Vec<Complex64> {
    let (re, im) = (marginal(&f.re(), axis), marginal(&f.im(), axis));
    re.into_iter().zip(im).map(|(a, b)| Complex64::new(a, b)).collect()
}

/// `∫∫ a(y) S((x−y)_axis) b(x) dx dy` for real densities `a`, `b`.
pub fn kernel_pair(a: &RealField, b: &RealField, axis: usize) -> Result<f64> {
    a.grid().ensure_same(b.grid())?;
    Ok(kernel_pair_marginals(&marginal(a, axis), &marginal(b, axis), a.grid().spacing()))
}

fn kernel_pair_marginals(a: &[f64], b: &[f64], h: f64) -> f64 {
    let n = a.len();
    let mut fa: Vec<Complex64> = a.iter().map(|x| Complex64::new(*x, 0.0)).collect();
    let mut fb: Vec<Complex64> = b.iter().map(|x| Complex64::new(*x, 0.0)).collect();
    spectral::fft_1d(&mut fa);
    spectral::fft_1d(&mut fb);
    let half = n / 2;
    let mut acc = Complex64::default();
    for i in 0..n {
        if i == half {
            continue;
        }
        let m = if i < half { i as i64 } else { i as i64 - n as i64 };
        acc += sign_coefficient(m) * fa[i] * fb[i].conj();
    }
    acc.re * h * h
}

/// `Im(v̄ ∂_axis v)`.
pub fn momentum_density(v: &ComplexField, axis: usize) -> RealField {
    check_axis(axis);
    let dv = spectral::derivative(v, axis);
    v.zip_with(&dv, |a, b| (a.conj() * b).im).expect("same grid")
}

/// `M = ∫∫|u(y)|² S((x−y)_axis) Im(v̄∂v)(x) + ∫∫|v(y)|² S Im(ū∂u)(x)`.
pub fn morawetz_potential_axis(u: &ComplexField, v: &ComplexField, axis: usize) -> Result<f64> {
    u.grid().ensure_same(v.grid())?;
    let a = kernel_pair(&u.abs_sq(), &momentum_density(v, axis), axis)?;
    let b = kernel_pair(&v.abs_sq(), &momentum_density(u, axis), axis)?;
    Ok(a + b)
}

pub fn morawetz_potential(u: &ComplexField, v: &ComplexField) -> Result<f64> {
    morawetz_potential_axis(u, v, 1)
}

/// `I = ∫∫∫ |∂_axis(u(x) conj v(x_axis, y_⊥))|² dx dy_⊥` through marginals:
/// `I = ∫ K_u ρ_v + ρ_u K_v + 2 Re(B_u B_v) dx_axis` with `ρ = ∫|f|²`,
/// `K = ∫|∂f|²`, `B = ∫ f̄ ∂f` over the transverse variable.
pub fn interaction_integral(u: &ComplexField, v: &ComplexField, axis: usize) -> Result<f64> {
    u.grid().ensure_same(v.grid())?;
    check_axis(axis);
    let parts = |f: &ComplexField| {
        let df = spectral::derivative(f, axis);
        let rho = marginal(&f.abs_sq(), axis);
        let kin = marginal(&df.abs_sq(), axis);
        let b = complex_marginal(&f.zip_with(&df, |a, d| a.conj() * d).unwrap(), axis);
        (rho, kin, b)
    };
    let (ru, ku, bu) = parts(u);
    let (rv, kv, bv) = parts(v);
    let h = u.grid().spacing();
    let total: f64 = (0..ru.len())
        .map(|i| (ku[i] * rv[i] + ru[i] * kv[i] + 2.0 * (bu[i] * bv[i]).re).max(0.0))
        .sum();
    Ok(total * h)
}

/// Right-hand side of the free identity: `dM/dt = 4 I` along the free flow.
pub fn morawetz_rhs_free_axis(u: &ComplexField, v: &ComplexField, axis: usize) -> Result<f64> {
    Ok(4.0 * interaction_integral(u, v, axis)?)
}

pub fn morawetz_rhs_free(u: &ComplexField, v: &ComplexField) -> Result<f64> {
    morawetz_rhs_free_axis(u, v, 1)
}

/// Rigorous bound `max|S|·(‖u‖²‖v‖‖∂v‖ + ‖v‖²‖u‖‖∂u‖) ≥ |M|`.
pub fn morawetz_bound(u: &ComplexField, v: &ComplexField, axis: usize) -> f64 {
    let du = spectral::derivative(u, axis).l2_norm();
    let dv = spectral::derivative(v, axis).l2_norm();
    let (nu, nv) = (u.l2_norm(), v.l2_norm());
    kernel_sup(u.grid().n()) * (nu * nu * nv * dv + nv * nv * nu * du)
}

#[derive(Clone, Debug, Serialize)]
pub struct MorawetzSample {
    pub t: f64,
    pub m_value: f64,
    pub dmdt_numeric: f64,
    pub dmdt_identity: f64,
    pub rel_err: f64,
    pub forcing_terms: Vec<(String, f64)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct MorawetzReport {
    pub dt: f64,
    pub samples: Vec<MorawetzSample>,
    pub worst_rel_err: f64,
    pub worst_t: f64,
}

impl MorawetzReport {
    /// Fails with the worst sample when the relative error exceeds `tol`.
    pub fn check(&self, tol: f64) -> Result<()> {
        if self.worst_rel_err <= tol {
            Ok(())
        } else {
            Err(LabError::ToleranceBreach {
                what: "Morawetz identity".into(),
                measured: self.worst_rel_err,
                tolerance: tol,
                worst_t: self.worst_t,
            })
        }
    }

    /// Largest `|dM/dt_num − dM/dt_id|` over the samples.
    pub fn worst_abs_err(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| (s.dmdt_numeric - s.dmdt_identity).abs())
            .fold(0.0, f64::max)
    }
}

/// Free evolution from cached initial spectra.
pub struct FreePair {
    su: Spectrum,
    sv: Spectrum,
}

impl FreePair {
    pub fn new(u0: &ComplexField, v0: &ComplexField) -> Result<Self> {
        u0.grid().ensure_same(v0.grid())?;
        Ok(FreePair {
            su: spectral::forward(u0),
            sv: spectral::forward(v0),
        })
    }

    pub fn at(&self, t: f64) -> (ComplexField, ComplexField) {
        let m = Multiplier::schrodinger(self.su.grid(), t);
        (self.su.applied(&m).inverse(), self.sv.applied(&m).inverse())
    }

    pub fn potential(&self, t: f64, axis: usize) -> f64 {
        let (u, v) = self.at(t);
        morawetz_potential_axis(&u, &v, axis).expect("same grid")
    }
}

/// Compares the fourth-order central difference (step `dt`) of `M` along
/// the free flow with `4I` at each of `times`.
pub fn verify_morawetz_identity(
    u0: &ComplexField,
    v0: &ComplexField,
    times: &[f64],
    dt: f64,
) -> Result<MorawetzReport> {
    verify_morawetz_identity_axis(u0, v0, times, dt, 1)
}

pub fn verify_morawetz_identity_axis(
    u0: &ComplexField,
    v0: &ComplexField,
    times: &[f64],
    dt: f64,
    axis: usize,
) -> Result<MorawetzReport> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid("dt", "difference step must be positive"));
    }
    if times.is_empty() {
        return Err(invalid("times", "no sample times"));
    }
    let pair = FreePair::new(u0, v0)?;
    let floor = 1e-12 * morawetz_bound(u0, v0, axis).max(f64::MIN_POSITIVE);
    let samples: Vec<MorawetzSample> = par::map_jobs(times, |&t| {
        let m = |s: f64| pair.potential(t + s, axis);
        let num = (-m(2.0 * dt) + 8.0 * m(dt) - 8.0 * m(-dt) + m(-2.0 * dt)) / (12.0 * dt);
        let (u, v) = pair.at(t);
        let m_value = morawetz_potential_axis(&u, &v, axis).unwrap();
        let id = morawetz_rhs_free_axis(&u, &v, axis).unwrap();
        MorawetzSample {
            t,
            m_value,
            dmdt_numeric: num,
            dmdt_identity: id,
            rel_err: (num - id).abs() / id.abs().max(floor),
            forcing_terms: Vec::new(),
        }
    });
    let (worst_rel_err, worst_t) = samples
        .iter()
        .fold((0.0f64, times[0]), |(w, wt), s| if s.rel_err > w { (s.rel_err, s.t) } else { (w, wt) });
    Ok(MorawetzReport {
        dt,
        samples,
        worst_rel_err,
        worst_t,
    })
}

/// Names of the six forced correction integrals, in order.
pub const FORCED_TERM_NAMES: [&str; 6] = [
    "u_mass_source",
    "v_mass_source",
    "u_mass_v_force_derivative",
    "u_mass_v_force_momentum",
    "v_mass_u_force_derivative",
    "v_mass_u_force_momentum",
];

/// Weights of the terms in `dM/dt = 4I + Σ w_i T_i`.
pub const FORCED_TERM_WEIGHTS: [f64; 6] = [2.0, 2.0, 1.0, 1.0, 1.0, 1.0];

/// The six forced integrals at one time, for band-projected fields
/// `U`, `V` and forcings `G₁`, `G₂`:
///
/// - `T₁ = ∫∫ Im(Ū G₁)(y) S Im(V̄∂V)(x)`, `T₂` the same with roles swapped;
/// - `T₃ = −∫∫ |U(y)|² S Re(V̄ ∂G₂)(x)`, `T₄ = ∫∫ |U(y)|² S Re(Ḡ₂ ∂V)(x)`;
/// - `T₅`, `T₆` as `T₃`, `T₄` with `(U,G₁) ↔ (V,G₂)`.
pub fn forced_terms_at(
    u: &ComplexField,
    v: &ComplexField,
    g1: &ComplexField,
    g2: &ComplexField,
    axis: usize,
) -> Result<[f64; 6]> {
    let im_prod = |a: &ComplexField, b: &ComplexField| a.zip_with(b, |x, y| (x.conj() * y).im);
    let re_prod = |a: &ComplexField, b: &ComplexField| a.zip_with(b, |x, y| (x.conj() * y).re);
    let (du, dv) = (spectral::derivative(u, axis), spectral::derivative(v, axis));
    let (dg1, dg2) = (spectral::derivative(g1, axis), spectral::derivative(g2, axis));
    let (pu, pv) = (im_prod(u, &du)?, im_prod(v, &dv)?);
    let (ru, rv) = (u.abs_sq(), v.abs_sq());
    Ok([
        kernel_pair(&im_prod(u, g1)?, &pv, axis)?,
        kernel_pair(&im_prod(v, g2)?, &pu, axis)?,
        -kernel_pair(&ru, &re_prod(v, &dg2)?, axis)?,
        kernel_pair(&ru, &re_prod(g2, &dv)?, axis)?,
        -kernel_pair(&rv, &re_prod(u, &dg1)?, axis)?,
        kernel_pair(&rv, &re_prod(g1, &du)?, axis)?,
    ])
}

#[derive(Clone, Debug, Serialize)]
pub struct ForcedSample {
    pub t: f64,
    pub potential: f64,
    pub interaction: f64,
    pub terms: [f64; 6],
    pub mass_u: f64,
    pub mass_v: f64,
    pub bilinear_sq: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ForcedMorawetzReport {
    pub j: i32,
    pub k: i32,
    pub samples: Vec<ForcedSample>,
    /// `∫ T_i dt` (trapezoid).
    pub integrals: [f64; 6],
    /// `2^{j−2k+1}|∫T₁|, 2^{j−2k+1}|∫T₂|, 2^{j−2k}|∫T₃|, …`.
    pub weighted: [f64; 6],
    /// `2^{j−k} sup_t ‖P_j u‖² ‖P_k v‖²`.
    pub leading: f64,
    /// `max_i weighted[i] / leading`.
    pub correction_constant: f64,
    /// `‖(P_j u)(P_k v)‖²_{L²_{t,x}}`.
    pub bilinear_sq: f64,
    /// `M(T) − M(0) − ∫(4I + Σ w_i T_i) dt`.
    pub identity_residual: f64,
    /// `|M(T) − M(0)|` for scale.
    pub potential_change: f64,
}

pub fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
    times
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}

/// Forced Morawetz bookkeeping for `P_j u` against `P_k v`, where
/// `F₁ = i u_t + Δu` and `F₂ = i v_t + Δv` are sampled on the trajectory times.
pub fn forced_morawetz_terms(
    traj_u: &Trajectory<ComplexField>,
    traj_v: &Trajectory<ComplexField>,
    f1: &[ComplexField],
    f2: &[ComplexField],
    j: i32,
    k: i32,
) -> Result<ForcedMorawetzReport> {
    if !traj_u.aligned_with(traj_v) {
        return Err(LabError::MisalignedTimes);
    }
    if f1.len() != traj_u.len() || f2.len() != traj_v.len() {
        return Err(LabError::LengthMismatch {
            expected: traj_u.len(),
            got: f1.len().min(f2.len()),
        });
    }
    if traj_u.is_empty() {
        return Err(invalid("trajectory", "empty"));
    }
    let grid: &GridSpec = traj_u.states()[0].grid();
    let range = DyadicRange::for_grid(grid);
    for b in [j, k] {
        if !range.contains(b) {
            return Err(LabError::BandOutOfRange {
                j: b,
                min: range.j_min,
                max: range.j_max,
            });
        }
    }
    let (pj, pk) = (band_multiplier(grid, j), band_multiplier(grid, k));
    let idx: Vec<usize> = (0..traj_u.len()).collect();
    let samples: Vec<ForcedSample> = idx
        .iter()
        .map(|&i| {
            let u = pj.apply(&traj_u.states()[i]);
            let v = pk.apply(&traj_v.states()[i]);
            let g1 = pj.apply(&f1[i]);
            let g2 = pk.apply(&f2[i]);
            let terms = forced_terms_at(&u, &v, &g1, &g2, 1)?;
            Ok(ForcedSample {
                t: traj_u.times()[i],
                potential: morawetz_potential(&u, &v)?,
                interaction: interaction_integral(&u, &v, 1)?,
                terms,
                mass_u: u.l2_norm_sq(),
                mass_v: v.l2_norm_sq(),
                bilinear_sq: (&u * &v).l2_norm_sq(),
            })
        })
        .collect::<Result<_>>()?;
    let times = traj_u.times();
    let mut integrals = [0.0; 6];
    for (n, slot) in integrals.iter_mut().enumerate() {
        let vals: Vec<f64> = samples.iter().map(|s| s.terms[n]).collect();
        *slot = trapezoid(times, &vals);
    }
    let w = 2f64.powi(j - 2 * k);
    let mut weighted = [0.0; 6];
    for n in 0..6 {
        let c = if n < 2 { 2.0 * w } else { w };
        weighted[n] = c * integrals[n].abs();
    }
    let leading = 2f64.powi(j - k)
        * samples
            .iter()
            .map(|s| s.mass_u * s.mass_v)
            .fold(0.0, f64::max);
    let rhs: Vec<f64> = samples
        .iter()
        .map(|s| {
            4.0 * s.interaction
                + s.terms
                    .iter()
                    .zip(FORCED_TERM_WEIGHTS)
                    .map(|(t, w)| t * w)
                    .sum::<f64>()
        })
        .collect();
    let bil: Vec<f64> = samples.iter().map(|s| s.bilinear_sq).collect();
    let dm = samples.last().unwrap().potential - samples[0].potential;
    Ok(ForcedMorawetzReport {
        j,
        k,
        integrals,
        weighted,
        leading,
        correction_constant: weighted.iter().cloned().fold(0.0, f64::max) / leading,
        bilinear_sq: trapezoid(times, &bil),
        identity_residual: dm - trapezoid(times, &rhs),
        potential_change: dm.abs(),
        samples,
    })
}
