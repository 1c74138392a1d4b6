//! Residual of the gauged Schrödinger-map equation for the derivative
//! fields in the caloric gauge, sampled along a simulated map flow.

use num_complex::Complex64;
use serde::Serialize;

use crate::caloric::{caloric_frame, covariant_divergence};
use crate::error::{invalid, Result};
use crate::grid::{ComplexField, RealField};
use crate::heat::{geometric_grid, heat_evolve, heat_evolve_on_grid, HeatConfig};
use crate::par;
use crate::spectral::{self, Multiplier};
use crate::sphere::{derivative_fields, frame_components, smap_rhs, smap_visit, GaugeData, SphereField, TangentFrame, V3};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Fourth-order central difference weights for offsets −2..=2.
const FD4: [f64; 5] = [1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0];

/// Caloric frame at `s = 0` on a prescribed heat-time grid.
pub fn caloric_frame_on_grid(u: &SphereField, s_grid: &[f64], e_inf: V3, tol_q: f64, max_halvings: u32) -> Result<TangentFrame> {
    let heat = heat_evolve_on_grid(u, s_grid, max_halvings)?;
    Ok(caloric_frame(&heat, e_inf, tol_q)?.frames.swap_remove(0))
}

#[derive(Clone, Debug, Serialize)]
pub struct GaugedSample {
    pub t: f64,
    /// `‖LHS − RHS‖_{L²} / ‖Δψ_m‖_{L²}` for `m = 1, 2`.
    pub residual: [f64; 2],
    /// `‖ψ_t − iΣ D_ℓψ_ℓ‖ / ‖ψ_t‖`.
    pub psi_t_residual: f64,
    /// `‖D_tψ_m − D_mψ_t‖ / ‖∂_tψ_m‖`, worst over `m`.
    pub compatibility: f64,
}

impl GaugedSample {
    pub fn worst(&self) -> f64 {
        self.residual[0].max(self.residual[1])
    }
}

fn fd4_complex(fields: &[ComplexField], h: f64) -> ComplexField {
    let mut acc = ComplexField::zeros(fields[0].grid());
    for (w, f) in FD4.iter().zip(fields) {
        if *w != 0.0 {
            acc = &acc + &f.scale(Complex64::new(w / h, 0.0));
        }
    }
    acc
}

/// Evaluates the gauged equation at the middle of five equally spaced
/// states `u[0..5]` (spacing `h`) with their frames.
pub fn gauged_residual(u: &[SphereField], frames: &[TangentFrame], t: f64, h: f64) -> Result<GaugedSample> {
    if u.len() != 5 || frames.len() != 5 {
        return Err(invalid("stencil", "needs five states and five frames"));
    }
    let fields: Vec<GaugeData> = u
        .iter()
        .zip(frames)
        .map(|(u, f)| derivative_fields(u, f))
        .collect::<Result<_>>()?;
    let c = &fields[2];
    let g = c.psi1.grid().clone();
    // A_t = w·∂_t v with ∂_t v by the same stencil.
    let mut dv = frames[0].v.scale(0.0);
    for (w, f) in FD4.iter().zip(frames) {
        if *w != 0.0 {
            dv = dv.axpy(w / h, &f.v);
        }
    }
    let a_t = frames[2].w.dot(&dv)?;
    let psi_t = frame_components(&frames[2], &smap_rhs(&u[2]));
    let div = covariant_divergence(c);
    let i_div = div.scale(I);
    let psi_t_residual = (&psi_t - &i_div).l2_norm() / psi_t.l2_norm().max(f64::MIN_POSITIVE);

    let lap = Multiplier::laplacian(&g);
    let d_a: [RealField; 2] = [1, 2].map(|l| spectral::real_derivative(c.a(l), l));
    let mut residual = [0.0; 2];
    let mut compatibility = 0.0f64;
    for m in [1, 2] {
        let psi_m = c.psi(m);
        let series: Vec<ComplexField> = fields.iter().map(|f| f.psi(m).clone()).collect();
        let dt_psi = fd4_complex(&series, h);
        let lap_psi = lap.apply(psi_m);
        let lhs = &dt_psi.scale(I) + &lap_psi;

        let mut rhs = ComplexField::zeros(&g);
        let mut potential = a_t.clone();
        for l in [1, 2] {
            let dl = spectral::derivative(psi_m, l);
            let al = c.a(l);
            rhs = &rhs + &al.zip_with(&dl, |a, d| Complex64::new(0.0, -2.0 * a) * d)?;
            potential = &potential + &(al * al);
            let psi_l = c.psi(l);
            let cubic = psi_l.zip_with(psi_m, |pl, pm| -I * pl * (pl.conj() * pm).im)?;
            rhs = &rhs + &cubic;
        }
        let imag_pot = d_a[0].values().iter().zip(d_a[1].values()).map(|(a, b)| a + b).collect::<Vec<f64>>();
        let pot = ComplexField::new(
            g.clone(),
            potential
                .values()
                .iter()
                .zip(&imag_pot)
                .map(|(r, i)| Complex64::new(*r, -*i))
                .collect(),
        )?;
        rhs = &rhs + &(&pot * psi_m);
        residual[m - 1] = (&lhs - &rhs).l2_norm() / lap_psi.l2_norm().max(f64::MIN_POSITIVE);

        // D_tψ_m − D_mψ_t
        let dt_cov = &dt_psi + &a_t.zip_with(psi_m, |a, p| I * a * p)?;
        let dm_cov = &spectral::derivative(&psi_t, m) + &c.a(m).zip_with(&psi_t, |a, p| I * a * p)?;
        compatibility = compatibility.max((&dt_cov - &dm_cov).l2_norm() / dt_psi.l2_norm().max(f64::MIN_POSITIVE));
    }
    Ok(GaugedSample {
        t,
        residual,
        psi_t_residual,
        compatibility,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct GaugedConfig {
    /// Map time step; the t-difference uses the same spacing.
    pub dt: f64,
    /// Times at which the residual is evaluated (each needs `t ≥ 2dt`).
    pub sample_times: Vec<f64>,
    pub heat: HeatConfig,
    pub e_inf: V3,
    /// The fixed heat grid runs to this multiple of the `s_max` found for `u₀`.
    pub s_extension: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GaugedStudy {
    pub dt: f64,
    pub s_points: usize,
    pub samples: Vec<GaugedSample>,
    pub worst: f64,
}

/// Runs the map flow from `u0`, computes caloric frames on a common heat
/// grid at the five-point stencil around each sample time, and evaluates
/// the gauged equation there.
pub fn gauged_residual_study(u0: &SphereField, cfg: &GaugedConfig) -> Result<GaugedStudy> {
    if cfg.sample_times.is_empty() {
        return Err(invalid("sample_times", "empty"));
    }
    let steps: Vec<usize> = cfg
        .sample_times
        .iter()
        .map(|t| (t / cfg.dt).round() as usize)
        .collect();
    if steps.iter().any(|s| *s < 2) {
        return Err(invalid("sample_times", "each needs two steps of history"));
    }
    let reference = heat_evolve(u0, &cfg.heat)?;
    let s_grid = geometric_grid(cfg.heat.ds0, cfg.heat.growth, reference.s_max() * cfg.s_extension);
    let t_end = (*steps.iter().max().unwrap() + 2) as f64 * cfg.dt;
    let mut wanted: Vec<(usize, usize)> = Vec::new();
    for (j, &s) in steps.iter().enumerate() {
        for k in 0..5 {
            wanted.push((j, s + k - 2));
        }
    }
    let mut stencils: Vec<Vec<Option<SphereField>>> = vec![vec![None; 5]; steps.len()];
    let mut step = 0usize;
    smap_visit(u0, cfg.dt, t_end, 1, |_, u, _| {
        for (j, s) in &wanted {
            if *s == step {
                stencils[*j][*s + 2 - steps[*j]] = Some(u.clone());
            }
        }
        step += 1;
        Ok(())
    })?;
    let jobs: Vec<(usize, Vec<SphereField>)> = stencils
        .into_iter()
        .enumerate()
        .map(|(j, v)| (j, v.into_iter().map(|u| u.expect("visited")).collect()))
        .collect();
    let samples = par::map_jobs(&jobs, |(j, us)| {
        let frames = us
            .iter()
            .map(|u| caloric_frame_on_grid(u, &s_grid, cfg.e_inf, cfg.heat.tol_q, cfg.heat.max_halvings))
            .collect::<Result<Vec<_>>>()?;
        gauged_residual(us, &frames, steps[*j] as f64 * cfg.dt, cfg.dt)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let worst = samples.iter().map(|s| s.worst()).fold(0.0, f64::max);
    Ok(GaugedStudy {
        dt: cfg.dt,
        s_points: s_grid.len(),
        samples,
        worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use crate::sphere::{exp_q, E1, Q};
    use std::f64::consts::PI;

    fn small_map(eps: f64) -> SphereField {
        let g = make_grid(32, 2.0 * PI).unwrap();
        let h1 = RealField::from_fn(&g, |x, y| eps * (x.sin() + 0.5 * (2.0 * y).cos()));
        let h2 = RealField::from_fn(&g, |x, y| eps * 0.7 * (x + y).cos());
        exp_q(&h1, &h2).unwrap()
    }

    fn cfg(dt: f64) -> GaugedConfig {
        GaugedConfig {
            dt,
            sample_times: vec![4.0 * dt],
            heat: HeatConfig::default(),
            e_inf: E1,
            s_extension: 1.5,
        }
    }

    #[test]
    fn constant_map_has_zero_residual() {
        let g = make_grid(16, 2.0 * PI).unwrap();
        let u = SphereField::constant(&g, Q).unwrap();
        let s = gauged_residual_study(&u, &cfg(1e-3)).unwrap();
        assert_eq!(s.worst, 0.0);
    }

    #[test]
    fn small_data_satisfy_gauged_equation() {
        let s = gauged_residual_study(&small_map(0.1), &cfg(1e-3)).unwrap();
        let r = &s.samples[0];
        assert!(r.worst() < 1e-2, "{r:?}");
        assert!(r.psi_t_residual < 1e-10, "{r:?}");
        assert!(r.compatibility < 1e-2, "{r:?}");
    }

    #[test]
    fn rejects_short_history() {
        let mut c = cfg(1e-3);
        c.sample_times = vec![1e-3];
        assert!(gauged_residual_study(&small_map(0.1), &c).is_err());
    }
}
