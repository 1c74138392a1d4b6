//! Caloric gauge: frames transported backward along the heat flow from a
//! fixed frame at the terminal (nearly constant) map, and the gauge fields
//! they induce.

use num_complex::Complex64;
use serde::Serialize;

use crate::bilinear::fit_slope;
use crate::error::{LabError, Result};
use crate::grid::{ComplexField, RealField};
use crate::heat::{heat_evolve, HeatConfig, HeatTrajectory};
use crate::littlewood_paley::{band_l2_norms, DyadicRange};
use crate::morawetz::trapezoid;
use crate::par;
use crate::spectral;
use crate::sphere::{cross, derivative_fields, dot, frame_components, norm, GaugeData, SphereField, TangentFrame, VectorField, V3};

#[derive(Clone, Debug)]
pub struct CaloricGauge {
    pub s_grid: Vec<f64>,
    /// Frame at each heat time, `frames[0]` being the caloric frame of `z(0)`.
    pub frames: Vec<TangentFrame>,
    pub max_orthonormality_defect: f64,
    /// `max |w·∂_s v|` with `∂_s v` from the transport generator.
    pub max_caloric_defect: f64,
    /// `max |w·∂_s v|` with `∂_s v` from central differences of the stored
    /// frames; only a consistency diagnostic (it carries the s-step error).
    pub max_caloric_fd: f64,
}

impl CaloricGauge {
    pub fn at_zero(&self) -> &TangentFrame {
        &self.frames[0]
    }
}

/// `G v = z_s (z·v) − z (z_s·v)`, the generator of the transport.
fn generator(z: V3, zs: V3, v: V3) -> V3 {
    let (a, b) = (dot(z, v), dot(zs, v));
    [zs[0] * a - z[0] * b, zs[1] * a - z[1] * b, zs[2] * a - z[2] * b]
}

fn lin(a: V3, s: f64, b: V3) -> V3 {
    [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]]
}

/// Cubic Hermite value and slope at the midpoint of `[0, h]`.
fn hermite_mid(z0: V3, d0: V3, z1: V3, d1: V3, h: f64) -> (V3, V3) {
    let mut z = [0.0; 3];
    let mut d = [0.0; 3];
    for k in 0..3 {
        z[k] = 0.5 * (z0[k] + z1[k]) + h / 8.0 * (d0[k] - d1[k]);
        d[k] = 1.5 / h * (z1[k] - z0[k]) - 0.25 * (d0[k] + d1[k]);
    }
    (z, d)
}

fn project_unit(v: V3, z: V3) -> (V3, f64) {
    let r = lin(v, -dot(v, z), z);
    let n = norm(r);
    ([r[0] / n, r[1] / n, r[2] / n], n)
}

/// One backward RK4 step of `∂_s v = G v` from `s₁` to `s₀ = s₁ − h`.
fn transport_back(v1: V3, (z0, d0): (V3, V3), (z1, d1): (V3, V3), h: f64) -> V3 {
    let (zm, dm) = hermite_mid(z0, d0, z1, d1, h);
    let f = |z: V3, d: V3, v: V3| generator(z, d, v);
    let k1 = f(z1, d1, v1);
    let k2 = f(zm, dm, lin(v1, -0.5 * h, k1));
    let k3 = f(zm, dm, lin(v1, -0.5 * h, k2));
    let k4 = f(z0, d0, lin(v1, -h, k3));
    let mut out = v1;
    for k in 0..3 {
        out[k] -= h / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]);
    }
    out
}

/// Transports the projection of `e_inf` at `s_max` back to `s = 0`.
/// Fails if the terminal map is farther than `tol_q` from a constant.
pub fn caloric_frame(heat: &HeatTrajectory, e_inf: V3, tol_q: f64) -> Result<CaloricGauge> {
    let d = heat.terminal_distance();
    if d > tol_q {
        return Err(LabError::HeatNotConverged {
            s: heat.s_max(),
            sup_dist: d,
        });
    }
    let n = heat.len();
    let g = heat.z[0].grid().clone();
    let mut frames: Vec<Option<TangentFrame>> = vec![None; n];
    let last = TangentFrame::from_leg(heat.terminal(), e_inf)?;
    let mut v = last.v.points();
    frames[n - 1] = Some(last);
    for i in (0..n - 1).rev() {
        let h = heat.s_grid[i + 1] - heat.s_grid[i];
        let (z0, z1) = (heat.z[i].field(), heat.z[i + 1].field());
        let (d0, d1) = (&heat.zs[i], &heat.zs[i + 1]);
        let next = par::map_range(g.sites(), |k| {
            let raw = transport_back(v[k], (z0.at(k), d0.at(k)), (z1.at(k), d1.at(k)), h);
            project_unit(raw, z0.at(k))
        });
        let worst = next.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        if worst < crate::sphere::DEGENERATE_PROJECTION {
            return Err(LabError::DegenerateFrame { norm: worst });
        }
        v = next.into_iter().map(|p| p.0).collect();
        frames[i] = Some(TangentFrame::completing(&heat.z[i], VectorField::from_points(&g, v.clone())));
    }
    let frames: Vec<TangentFrame> = frames.into_iter().map(|f| f.expect("filled")).collect();
    let max_orthonormality_defect = frames
        .iter()
        .zip(&heat.z)
        .map(|(f, z)| f.defect(z))
        .fold(0.0, f64::max);
    let mut max_caloric_defect = 0.0f64;
    let mut max_caloric_fd = 0.0f64;
    for i in 0..n {
        let (z, zs, f) = (heat.z[i].field(), &heat.zs[i], &frames[i]);
        for k in 0..g.sites() {
            let gv = generator(z.at(k), zs.at(k), f.v.at(k));
            max_caloric_defect = max_caloric_defect.max(dot(f.w.at(k), gv).abs());
        }
        if i > 0 && i + 1 < n {
            let ds = heat.s_grid[i + 1] - heat.s_grid[i - 1];
            for k in 0..g.sites() {
                let dv = lin(frames[i + 1].v.at(k), -1.0, frames[i - 1].v.at(k));
                max_caloric_fd = max_caloric_fd.max(dot(f.w.at(k), dv).abs() / ds);
            }
        }
    }
    Ok(CaloricGauge {
        s_grid: heat.s_grid.clone(),
        frames,
        max_orthonormality_defect,
        max_caloric_defect,
        max_caloric_fd,
    })
}

/// Gauge fields on one heat slice.
#[derive(Clone, Debug)]
pub struct CaloricSlice {
    pub s: f64,
    pub gauge: GaugeData,
    /// `ψ_s = v·∂_s z + i w·∂_s z`.
    pub psi_s: ComplexField,
    pub map_energy: f64,
}

/// `ψ_m, A_m` (m = 1, 2) and `ψ_s` at every heat time.
pub fn gauge_fields_along_s(heat: &HeatTrajectory, gauge: &CaloricGauge) -> Result<Vec<CaloricSlice>> {
    let idx: Vec<usize> = (0..heat.len()).collect();
    par::map_jobs(&idx, |&i| {
        let g = derivative_fields(&heat.z[i], &gauge.frames[i])?;
        Ok(CaloricSlice {
            s: heat.s_grid[i],
            psi_s: frame_components(&gauge.frames[i], &heat.zs[i]),
            map_energy: heat.energies[i],
            gauge: g,
        })
    })
    .into_iter()
    .collect()
}

/// `Σ_ℓ (∂_ℓψ_ℓ + i A_ℓ ψ_ℓ)`.
pub fn covariant_divergence(g: &GaugeData) -> ComplexField {
    let mut acc = ComplexField::zeros(g.psi1.grid());
    for l in [1, 2] {
        let d = spectral::derivative(g.psi(l), l);
        let a = g.a(l).zip_with(g.psi(l), |a, p| Complex64::new(0.0, a) * p).expect("same grid");
        acc = &acc + &(&d + &a);
    }
    acc
}

#[derive(Clone, Debug, Serialize)]
pub struct AIntegralReport {
    pub s0: f64,
    pub s_max: f64,
    /// `‖A_x(s₀) − pred‖_{L²} / max(‖A_x(s₀)‖_{L²}, A_FLOOR·‖|ψ_x(s₀)|²‖_{L²})`,
    /// both components together.
    pub residual: f64,
    /// `‖A_x(s_max)‖_{L^∞}`: the part of the integral beyond `s_max`.
    pub tail_sup: f64,
    /// `c·s_max^{−1/2}` with `c = max_s ‖A_x(s)‖_∞ s^{1/2}`.
    pub tail_bound: f64,
    pub a_norm: f64,
    /// The floor replaced `‖A_x‖` in the denominator (e.g. maps into a
    /// great circle, where `A ≡ 0`).
    pub floored: bool,
}

/// Relative floor for the `A`-integral denominator, against the size of the
/// quadratic quantity `|ψ_x|²` the connection is built from.
pub const A_FLOOR: f64 = 1e-6;

/// Compares `A_m(s₀)` from the frame with
/// `−Σ_ℓ ∫_{s₀}^{s_max} Im(ψ̄_m (∂_ℓψ_ℓ + iA_ℓψ_ℓ)) ds` (trapezoid).
pub fn verify_a_integral(slices: &[CaloricSlice], s0_index: usize) -> Result<AIntegralReport> {
    if s0_index + 1 >= slices.len() {
        return Err(crate::error::invalid("s0", "needs at least one interval above it"));
    }
    let tail = &slices[s0_index..];
    let times: Vec<f64> = tail.iter().map(|s| s.s).collect();
    let integrands: Vec<[RealField; 2]> = par::map_jobs(tail, |sl| {
        let div = covariant_divergence(&sl.gauge);
        [1, 2].map(|m| sl.gauge.psi(m).zip_with(&div, |p, d| (p.conj() * d).im).expect("same grid"))
    });
    let g = slices[0].gauge.psi1.grid();
    let mut err_sq = 0.0;
    let mut ref_sq = 0.0;
    for m in 0..2 {
        let pred = (0..g.sites())
            .map(|k| {
                let vals: Vec<f64> = integrands.iter().map(|f| f[m].values()[k]).collect();
                -trapezoid(&times, &vals)
            })
            .collect::<Vec<f64>>();
        let a = slices[s0_index].gauge.a(m + 1);
        let pred = RealField::new(g.clone(), pred)?;
        err_sq += (a - &pred).l2_norm_sq();
        ref_sq += a.l2_norm_sq();
    }
    let g0 = &slices[s0_index].gauge;
    let quad = g0.psi1.zip_with(&g0.psi2, |a, b| a.norm_sqr() + b.norm_sqr())?;
    let floor = A_FLOOR * quad.l2_norm();
    let denom = ref_sq.sqrt().max(floor);
    let a_sup = |s: &CaloricSlice| s.gauge.a1.sup_norm().max(s.gauge.a2.sup_norm());
    let c = slices.iter().map(|s| a_sup(s) * s.s.sqrt()).fold(0.0, f64::max);
    let last = slices.last().unwrap();
    Ok(AIntegralReport {
        s0: slices[s0_index].s,
        s_max: last.s,
        residual: if denom > 0.0 { err_sq.sqrt() / denom } else { err_sq.sqrt() },
        tail_sup: a_sup(last),
        tail_bound: c / last.s.sqrt(),
        a_norm: ref_sq.sqrt(),
        floored: floor > ref_sq.sqrt(),
    })
}

/// `‖P_k ψ_x‖_{L²}` for every band, with `|ψ_x|² = |ψ₁|² + |ψ₂|²`.
pub fn psi_band_norms(g: &GaugeData, range: &DyadicRange) -> Vec<f64> {
    let a = band_l2_norms(&g.psi1, range);
    let b = band_l2_norms(&g.psi2, range);
    a.iter().zip(&b).map(|(x, y)| x.hypot(*y)).collect()
}

/// Gauged scattering profile `w_m(t) = e^{−itΔ}ψ_m(t)`, m = 1, 2.
pub fn gauged_profile(g: &GaugeData, t: f64) -> [ComplexField; 2] {
    [&g.psi1, &g.psi2].map(|p| spectral::free_schrodinger(p, -t))
}

/// Per band, `‖P_k(w − w₀)‖ / max(‖P_k w₀‖, 1e-8·‖w₀‖)` with both components
/// together; the floor keeps empty bands from reporting round-off ratios.
pub fn profile_band_drift(w: &[ComplexField; 2], w0: &[ComplexField; 2], range: &DyadicRange) -> Vec<f64> {
    let floor = 1e-8 * w0[0].l2_norm().hypot(w0[1].l2_norm());
    let band = |f: &[ComplexField; 2]| {
        let (a, b) = (band_l2_norms(&f[0], range), band_l2_norms(&f[1], range));
        a.iter().zip(&b).map(|(x, y)| x.hypot(*y)).collect::<Vec<f64>>()
    };
    let diff = [&w[0] - &w0[0], &w[1] - &w0[1]];
    band(&diff)
        .into_iter()
        .zip(band(w0))
        .map(|(d, r)| {
            let r = r.max(floor);
            if r > 0.0 {
                d / r
            } else {
                d
            }
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct BandDecay {
    pub k: i32,
    /// Slope of `log‖P_kψ_x(s)‖` against `log(1 + s·2^{2k})`.
    pub exponent: f64,
    pub points: usize,
}

/// Fits the decay of each band's `‖P_kψ_x(s)‖` over heat time against
/// `(1 + s·2^{2k})^{p}`; bands without enough signal are skipped.
pub fn band_decay_exponents(slices: &[CaloricSlice], range: &DyadicRange) -> Vec<BandDecay> {
    let norms: Vec<Vec<f64>> = slices.iter().map(|s| psi_band_norms(&s.gauge, range)).collect();
    let top = norms[0].iter().cloned().fold(0.0, f64::max);
    range
        .bands()
        .enumerate()
        .filter_map(|(b, k)| {
            let n0 = norms[0][b];
            if !(n0 > 1e-8 * top) {
                return None;
            }
            let (x, y): (Vec<f64>, Vec<f64>) = slices
                .iter()
                .zip(&norms)
                .filter(|(_, n)| n[b] > 1e-9 * n0)
                .map(|(s, n)| ((1.0 + s.s * 4f64.powi(k)).ln(), n[b].ln()))
                .unzip();
            fit_slope(&x, &y).ok().map(|(p, _)| BandDecay {
                k,
                exponent: p,
                points: x.len(),
            })
        })
        .collect()
}

/// Heat flow plus caloric frame for a single map.
pub fn caloric_gauge(u: &SphereField, cfg: &HeatConfig, e_inf: V3) -> Result<(HeatTrajectory, CaloricGauge)> {
    let heat = heat_evolve(u, cfg)?;
    let gauge = caloric_frame(&heat, e_inf, cfg.tol_q)?;
    Ok((heat, gauge))
}

/// A unit vector completing `e` to a positively oriented frame at `z`.
pub fn second_leg(z: V3, e: V3) -> V3 {
    cross(z, e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, GridSpec};
    use crate::heat::heat_evolve_on_grid;
    use crate::sphere::{energy_map, exp_q, E1, Q};
    use std::f64::consts::PI;

    fn small_map(g: &GridSpec, eps: f64) -> SphereField {
        let l = g.length();
        let k = 2.0 * PI / l;
        let h1 = RealField::from_fn(g, |x, y| eps * ((k * x).sin() + 0.5 * (2.0 * k * y).cos()));
        let h2 = RealField::from_fn(g, |x, y| eps * 0.7 * (k * (x + y)).cos());
        exp_q(&h1, &h2).unwrap()
    }

    #[test]
    fn constant_trajectory_gives_constant_frame() {
        let g = make_grid(16, 2.0 * PI).unwrap();
        let z = SphereField::constant(&g, Q).unwrap();
        let (heat, gauge) = caloric_gauge(&z, &HeatConfig::default(), E1).unwrap();
        assert!(gauge.at_zero().v.max_abs_diff(&VectorField::constant(&g, E1)) == 0.0);
        let sl = gauge_fields_along_s(&heat, &gauge).unwrap();
        for s in &sl {
            assert_eq!(s.gauge.energy(), 0.0);
            assert_eq!(s.gauge.a1.sup_norm(), 0.0);
        }
    }

    #[test]
    fn transport_keeps_frames_orthonormal_and_caloric() {
        let g = make_grid(32, 2.0 * PI).unwrap();
        let (heat, gauge) = caloric_gauge(&small_map(&g, 0.3), &HeatConfig::default(), E1).unwrap();
        assert!(gauge.max_orthonormality_defect < 1e-10, "{}", gauge.max_orthonormality_defect);
        assert!(gauge.max_caloric_defect < 1e-8);
        assert!(gauge.max_caloric_fd < 1e-2, "{}", gauge.max_caloric_fd);
        let sl = gauge_fields_along_s(&heat, &gauge).unwrap();
        for s in &sl {
            assert!((s.gauge.energy() - s.map_energy).abs() <= 1e-8 * s.map_energy.max(1e-300));
        }
        assert!((sl[0].map_energy - energy_map(&heat.z[0])).abs() == 0.0);
    }

    #[test]
    fn heat_velocity_is_covariant_divergence() {
        // ψ_s = Σ D_ℓψ_ℓ holds in any frame.
        let g = make_grid(32, 2.0 * PI).unwrap();
        let (heat, gauge) = caloric_gauge(&small_map(&g, 0.3), &HeatConfig::default(), E1).unwrap();
        let sl = gauge_fields_along_s(&heat, &gauge).unwrap();
        for s in sl.iter().step_by(10) {
            let d = covariant_divergence(&s.gauge);
            assert!(d.max_abs_diff(&s.psi_s) < 1e-10 * (1.0 + s.psi_s.sup_norm()));
        }
    }

    #[test]
    fn a_integral_identity_converges_at_second_order() {
        let g = make_grid(32, 2.0 * PI).unwrap();
        let z = small_map(&g, 0.2);
        let cfg = HeatConfig::default();
        let mut res = vec![];
        for c in [cfg.clone(), cfg.refined()] {
            let (heat, gauge) = caloric_gauge(&z, &c, E1).unwrap();
            let sl = gauge_fields_along_s(&heat, &gauge).unwrap();
            let r = verify_a_integral(&sl, 0).unwrap();
            assert!(r.tail_sup < 1e-5, "{r:?}");
            res.push(r.residual);
        }
        assert!(res[1] < 1e-3, "{res:?}");
        let ratio = res[0] / res[1];
        assert!(ratio > 3.0 && ratio < 5.0, "{res:?}");
    }

    #[test]
    fn profile_drift_vanishes_for_free_evolution() {
        let g = make_grid(32, 2.0 * PI).unwrap();
        let (_, gauge) = caloric_gauge(&small_map(&g, 0.2), &HeatConfig::default(), E1).unwrap();
        let d0 = derivative_fields(&small_map(&g, 0.2), gauge.at_zero()).unwrap();
        let range = DyadicRange::for_grid(&g);
        let w0 = gauged_profile(&d0, 0.0);
        let t = 0.3;
        let moved = GaugeData {
            psi1: spectral::free_schrodinger(&d0.psi1, t),
            psi2: spectral::free_schrodinger(&d0.psi2, t),
            ..d0.clone()
        };
        // Near-empty top bands divide round-off by little content.
        let drift = profile_band_drift(&gauged_profile(&moved, t), &w0, &range);
        assert!(drift.iter().all(|d| *d < 1e-6), "{drift:?}");
        assert!(drift[..3].iter().all(|d| *d < 1e-12), "{drift:?}");
        let scaled = [w0[0].scale(Complex64::new(1.5, 0.0)), w0[1].scale(Complex64::new(1.5, 0.0))];
        let drift = profile_band_drift(&scaled, &w0, &range);
        assert!(drift[..4].iter().all(|d| (d - 0.5).abs() < 1e-12), "{drift:?}");
    }

    #[test]
    fn great_circle_map_has_flat_connection() {
        // u stays in the plane spanned by Q and E1, so A ≡ 0.
        let g = make_grid(32, 2.0 * PI).unwrap();
        let h1 = RealField::from_fn(&g, |x, y| 0.3 * (-(x - PI).powi(2) - (y - PI).powi(2)).exp());
        let z = exp_q(&h1, &RealField::zeros(&g)).unwrap();
        let (heat, gauge) = caloric_gauge(&z, &HeatConfig::default(), E1).unwrap();
        let sl = gauge_fields_along_s(&heat, &gauge).unwrap();
        let r = verify_a_integral(&sl, 0).unwrap();
        assert!(r.floored && r.a_norm < 1e-12, "{r:?}");
        assert!(r.residual < 1e-6, "{r:?}");
    }

    #[test]
    fn bands_decay_along_heat_time() {
        let g = make_grid(32, 2.0 * PI).unwrap();
        let (heat, gauge) = caloric_gauge(&small_map(&g, 0.1), &HeatConfig::default(), E1).unwrap();
        let sl = gauge_fields_along_s(&heat, &gauge).unwrap();
        let d = band_decay_exponents(&sl, &DyadicRange::for_grid(&g));
        assert!(!d.is_empty());
        for b in &d {
            assert!(b.exponent <= -2.0, "{b:?}");
        }
    }

    #[test]
    fn non_converged_heat_rejected() {
        let g = make_grid(32, 2.0 * PI).unwrap();
        let z = small_map(&g, 0.3);
        let heat = heat_evolve_on_grid(&z, &[0.0, 0.01, 0.02], 4).unwrap();
        assert!(matches!(caloric_frame(&heat, E1, 1e-6), Err(LabError::HeatNotConverged { .. })));
    }
}
