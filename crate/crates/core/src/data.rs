//! Initial-data generators and the counter-based random source.
//!
//! Random samples are keyed by `(seed, stream, site)`: each site seeks a
//! ChaCha8 stream to its own word offset, so generation order (sequential or
//! parallel) never changes the values.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::grid::{ComplexField, GridSpec, RealField};
use crate::littlewood_paley::{band_multiplier, DyadicRange};
use crate::par;

/// Standard complex Gaussian sample (unit variance per component) at `site`.
pub fn keyed_normal(seed: u64, stream: u64, site: u64) -> Complex64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(site as u128 * 4);
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    let r = (-2.0 * u1.ln()).sqrt();
    Complex64::from_polar(r, 2.0 * PI * u2)
}

/// Complex white noise keyed by `(seed, stream)`.
pub fn complex_noise(grid: &GridSpec, seed: u64, stream: u64) -> ComplexField {
    let v = par::map_range(grid.sites(), |i| keyed_normal(seed, stream, i as u64));
    ComplexField::from_parts(grid.clone(), v)
}

/// Real white noise keyed by `(seed, stream)`.
pub fn real_noise(grid: &GridSpec, seed: u64, stream: u64) -> RealField {
    complex_noise(grid, seed, stream).re()
}

/// `a·exp(-|x-c|²/(2σ²))·e^{i p·(x-c)}` with periodic distances.
pub fn gaussian(grid: &GridSpec, center: (f64, f64), sigma: f64, amp: f64, momentum: (f64, f64)) -> ComplexField {
    ComplexField::from_fn(grid, |x, y| {
        let dx = grid.periodic_offset(x, center.0);
        let dy = grid.periodic_offset(y, center.1);
        let g = amp * (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
        Complex64::from_polar(g, momentum.0 * dx + momentum.1 * dy)
    })
}

/// `a·e^{i(m₁κx₁ + m₂κx₂)}` with `κ = 2π/L`.
pub fn plane_wave(grid: &GridSpec, m1: i64, m2: i64, amp: f64) -> ComplexField {
    let k = grid.lattice_unit();
    let (k1, k2) = (k * m1 as f64, k * m2 as f64);
    ComplexField::from_fn(grid, |x, y| Complex64::from_polar(amp, k1 * x + k2 * y))
}

/// Delta of unit integral at the site nearest `center`.
pub fn point_mass(grid: &GridSpec, center: (f64, f64)) -> ComplexField {
    let n = grid.n();
    let h = grid.spacing();
    let i1 = ((center.0 / h).round() as usize) % n;
    let i2 = ((center.1 / h).round() as usize) % n;
    let mut v = vec![Complex64::default(); grid.sites()];
    v[i1 * n + i2] = Complex64::new(1.0 / grid.cell_area(), 0.0);
    ComplexField::from_parts(grid.clone(), v)
}

/// Rescales `f` to the given `L²` norm (zero fields are rejected).
pub fn normalized(f: &ComplexField, target: f64) -> Result<ComplexField> {
    let n = f.l2_norm();
    if n == 0.0 {
        return Err(invalid("data", "cannot normalize a zero field"));
    }
    Ok(f.scale(Complex64::new(target / n, 0.0)))
}

/// `P_j(window · noise)` with unit `L²` norm, where the window is a
/// Gaussian of width `window` centered on the torus.
pub fn band_noise(grid: &GridSpec, seed: u64, stream: u64, j: i32, window: f64) -> Result<ComplexField> {
    let r = DyadicRange::for_grid(grid);
    if !r.contains(j) {
        return Err(crate::error::LabError::BandOutOfRange {
            j,
            min: r.j_min,
            max: r.j_max,
        });
    }
    let l = grid.length();
    let w = gaussian(grid, (l / 2.0, l / 2.0), window, 1.0, (0.0, 0.0));
    let noise = complex_noise(grid, seed, stream);
    let f = &w * &noise;
    normalized(&band_multiplier(grid, j).apply(&f), 1.0)
}

/// `Σ_{j∈bands} ε·P_jδ_c/‖P_jδ_c‖`: a dyadic sum with every band of size ε,
/// the finite stand-in for small-Besov, large-mass data.
pub fn dyadic_sum(grid: &GridSpec, center: (f64, f64), eps: f64, bands: impl IntoIterator<Item = i32>) -> Result<ComplexField> {
    let delta = point_mass(grid, center);
    let s = crate::spectral::forward(&delta);
    let r = DyadicRange::for_grid(grid);
    let mut acc = ComplexField::zeros(grid);
    for j in bands {
        if !r.contains(j) {
            return Err(crate::error::LabError::BandOutOfRange {
                j,
                min: r.j_min,
                max: r.j_max,
            });
        }
        let p = s.applied(&band_multiplier(grid, j)).inverse();
        acc = &acc + &normalized(&p, eps)?;
    }
    Ok(acc)
}

/// Bands `j₀-J ..= j₀+J` clipped to the grid's resolved range.
pub fn dyadic_bands(grid: &GridSpec, center_band: i32, half_width: i32) -> Vec<i32> {
    let r = DyadicRange::for_grid(grid);
    let top = DyadicRange::resolved_max(grid);
    (center_band - half_width..=center_band + half_width)
        .filter(|j| *j >= r.j_min && *j <= top)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use crate::littlewood_paley::band_l2_norms;

    #[test]
    fn noise_is_order_independent_and_seeded() {
        let g = make_grid(16, 1.0).unwrap();
        let a = complex_noise(&g, 7, 3);
        let b = complex_noise(&g, 7, 3);
        assert_eq!(a, b);
        assert_eq!(a.values()[37], keyed_normal(7, 3, 37));
        assert_ne!(a, complex_noise(&g, 7, 4));
        assert_ne!(a, complex_noise(&g, 8, 3));
    }

    #[test]
    fn noise_statistics() {
        let g = make_grid(128, 1.0).unwrap();
        let a = complex_noise(&g, 1, 0);
        let m = a.values().iter().map(|z| z.norm_sqr()).sum::<f64>() / g.sites() as f64;
        assert!((m - 2.0).abs() < 0.05, "second moment {m}");
    }

    #[test]
    fn band_noise_lives_in_band() {
        let g = make_grid(64, 16.0 * PI).unwrap();
        let f = band_noise(&g, 3, 1, 0, 6.0).unwrap();
        assert!((f.l2_norm() - 1.0).abs() < 1e-12);
        let r = DyadicRange::for_grid(&g);
        let norms = band_l2_norms(&f, &r);
        for (i, b) in norms.iter().enumerate() {
            let j = r.j_min + i as i32;
            if j.abs() >= 2 {
                assert!(*b < 1e-13, "band {j}: {b}");
            }
        }
    }

    #[test]
    fn dyadic_sum_band_sizes() {
        let g = make_grid(64, 16.0).unwrap();
        let bands = dyadic_bands(&g, 1, 1);
        assert_eq!(bands, vec![0, 1, 2]);
        let f = dyadic_sum(&g, (8.0, 8.0), 0.1, bands).unwrap();
        let r = DyadicRange::for_grid(&g);
        let norms = band_l2_norms(&f, &r);
        let max = norms.iter().cloned().fold(0.0, f64::max);
        assert!(max > 0.05 && max < 0.2, "{norms:?}");
    }

    #[test]
    fn gaussian_peak_and_momentum() {
        let g = make_grid(32, 8.0).unwrap();
        let f = gaussian(&g, (4.0, 4.0), 1.0, 2.0, (1.0, 0.0));
        assert!((f.at(16, 16).norm() - 2.0).abs() < 1e-14);
        assert!(normalized(&ComplexField::zeros(&g), 1.0).is_err());
    }
}
