//! Discrete Fourier transforms and Fourier multipliers on a [`GridSpec`].
//!
//! The forward transform is the unnormalized DFT
//! `f̂[k] = Σ_x f[x] e^{-i k·x}`; the inverse divides by `n²`. Multipliers
//! that are odd in `ξ` (derivatives) zero the Nyquist row/column so real
//! inputs stay real.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{LabError, Result};
use crate::grid::{ComplexField, GridSpec, RealField};
use crate::par;

struct Plans {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

fn plans(n: usize) -> Arc<Plans> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Plans>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().unwrap_or_else(|e| e.into_inner());
    map.entry(n)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            Arc::new(Plans {
                fwd: planner.plan_fft_forward(n),
                inv: planner.plan_fft_inverse(n),
            })
        })
        .clone()
}

fn fft_rows(data: &mut [Complex64], n: usize, fft: &Arc<dyn Fft<f64>>) {
    let rows_per_task = (4096 / n).max(1);
    par::for_each_chunk_mut(data, n * rows_per_task, |_, chunk| {
        let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        fft.process_with_scratch(chunk, &mut scratch);
    });
}

fn transpose(data: &mut [Complex64], n: usize) {
    const B: usize = 32;
    for ib in (0..n).step_by(B) {
        for jb in (ib..n).step_by(B) {
            for i in ib..(ib + B).min(n) {
                let start = if ib == jb { i + 1 } else { jb };
                for j in start..(jb + B).min(n) {
                    data.swap(i * n + j, j * n + i);
                }
            }
        }
    }
}

fn fft2(data: &mut [Complex64], n: usize, inverse: bool) {
    let p = plans(n);
    let fft = if inverse { &p.inv } else { &p.fwd };
    fft_rows(data, n, fft);
    transpose(data, n);
    fft_rows(data, n, fft);
    transpose(data, n);
    if inverse {
        let s = 1.0 / (n * n) as f64;
        par::for_each_mut(data, |_, z| *z *= s);
    }
}

/// Unnormalized 1D forward DFT of `data` (length a power of two).
pub fn fft_1d(data: &mut [Complex64]) {
    let p = plans(data.len());
    p.fwd.process(data);
}

/// Fourier coefficients of a field (unnormalized DFT, FFT index order).
#[derive(Clone, Debug)]
pub struct Spectrum {
    grid: GridSpec,
    coeffs: Vec<Complex64>,
}

impl Spectrum {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    /// Multiplies in place by a precomputed multiplier table.
    pub fn apply(&mut self, m: &Multiplier) {
        assert_eq!(&self.grid, &m.grid, "multiplier built for another grid");
        let tab = &m.values;
        par::for_each_mut(&mut self.coeffs, |i, c| *c *= tab[i]);
    }

    pub fn applied(&self, m: &Multiplier) -> Spectrum {
        let mut s = self.clone();
        s.apply(m);
        s
    }

    /// `‖f‖²_{L²}` by Parseval, with `f` the field this spectrum came from.
    pub fn l2_norm_sq(&self) -> f64 {
        let n = self.grid.n();
        let s = par::sum_rows(n, |r| {
            self.coeffs[r * n..(r + 1) * n]
                .iter()
                .map(|c| c.norm_sqr())
                .sum()
        });
        s * self.grid.cell_area() / (n * n) as f64
    }

    /// `Σ w(ξ) |f̂(ξ)|²` scaled to the continuum Parseval normalization.
    pub fn weighted_norm_sq<W>(&self, w: W) -> f64
    where
        W: Fn(f64, f64) -> f64 + Sync + Send,
    {
        let n = self.grid.n();
        let g = &self.grid;
        let s = par::sum_rows(n, |r| {
            let k1 = g.freq(r);
            (0..n)
                .map(|c| w(k1, g.freq(c)) * self.coeffs[r * n + c].norm_sqr())
                .sum()
        });
        s * g.cell_area() / (n * n) as f64
    }

    pub fn inverse(&self) -> ComplexField {
        inverse(self)
    }
}

pub fn forward(f: &ComplexField) -> Spectrum {
    let n = f.grid().n();
    let mut coeffs = f.values().to_vec();
    fft2(&mut coeffs, n, false);
    Spectrum {
        grid: f.grid().clone(),
        coeffs,
    }
}

pub fn inverse(s: &Spectrum) -> ComplexField {
    let n = s.grid.n();
    let mut v = s.coeffs.clone();
    fft2(&mut v, n, true);
    ComplexField::from_parts(s.grid.clone(), v)
}

/// Tabulated Fourier multiplier `m(ξ)` on a grid's wavenumber lattice.
#[derive(Clone, Debug)]
pub struct Multiplier {
    grid: GridSpec,
    values: Vec<Complex64>,
}

impl Multiplier {
    /// Tabulates `m(ξ₁, ξ₂)`; non-finite values are rejected.
    pub fn from_fn<M>(grid: &GridSpec, m: M) -> Result<Self>
    where
        M: Fn(f64, f64) -> Complex64 + Sync + Send,
    {
        let values = par::map_range(grid.sites(), |idx| {
            let (k1, k2) = grid.wavevector(idx);
            m(k1, k2)
        });
        if !values.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(LabError::NonFinite("multiplier"));
        }
        Ok(Multiplier {
            grid: grid.clone(),
            values,
        })
    }

    /// Tabulates a real multiplier.
    pub fn real<M>(grid: &GridSpec, m: M) -> Result<Self>
    where
        M: Fn(f64, f64) -> f64 + Sync + Send,
    {
        Self::from_fn(grid, |a, b| Complex64::new(m(a, b), 0.0))
    }

    /// `i ξ_axis`, Nyquist zeroed.
    pub fn derivative(grid: &GridSpec, axis: usize) -> Self {
        assert!(axis == 1 || axis == 2, "axis must be 1 or 2");
        let n = grid.n();
        let values = par::map_range(grid.sites(), |idx| {
            let i = if axis == 1 { idx / n } else { idx % n };
            if grid.is_nyquist(i) {
                Complex64::default()
            } else {
                Complex64::new(0.0, grid.freq(i))
            }
        });
        Multiplier {
            grid: grid.clone(),
            values,
        }
    }

    /// `−|ξ|²`.
    pub fn laplacian(grid: &GridSpec) -> Self {
        Self::real(grid, |a, b| -(a * a + b * b)).expect("finite")
    }

    /// `e^{−it|ξ|²}`.
    pub fn schrodinger(grid: &GridSpec, t: f64) -> Self {
        Self::from_fn(grid, |a, b| Complex64::from_polar(1.0, -t * (a * a + b * b)))
            .expect("finite")
    }

    /// `e^{−s|ξ|²}`, `s ≥ 0`.
    pub fn heat(grid: &GridSpec, s: f64) -> Result<Self> {
        if !(s >= 0.0) {
            return Err(crate::error::invalid("s", format!("heat time {s} is negative")));
        }
        Self::real(grid, |a, b| (-s * (a * a + b * b)).exp())
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// Pointwise product of two multipliers.
    pub fn compose(&self, other: &Multiplier) -> Multiplier {
        assert_eq!(self.grid, other.grid);
        Multiplier {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a * b)
                .collect(),
        }
    }

    pub fn apply(&self, f: &ComplexField) -> ComplexField {
        let mut s = forward(f);
        s.apply(self);
        inverse(&s)
    }

    /// Applies a multiplier with `m(−ξ) = conj m(ξ)` to two real fields
    /// at the cost of one complex transform pair.
    pub fn apply_real_pair(&self, a: &RealField, b: &RealField) -> (RealField, RealField) {
        let packed = a
            .zip_with(b, Complex64::new)
            .expect("pair on one grid");
        let out = self.apply(&packed);
        (out.re(), out.im())
    }

    pub fn apply_real(&self, a: &RealField) -> RealField {
        self.apply(&a.to_complex()).re()
    }
}

/// `𝓕⁻¹(m(ξ) 𝓕f)`.
pub fn fourier_multiplier<M>(f: &ComplexField, m: M) -> Result<ComplexField>
where
    M: Fn(f64, f64) -> Complex64 + Sync + Send,
{
    Ok(Multiplier::from_fn(f.grid(), m)?.apply(f))
}

pub fn laplacian(f: &ComplexField) -> ComplexField {
    Multiplier::laplacian(f.grid()).apply(f)
}

/// Spectral `∂_axis f` (axis 1 or 2).
pub fn derivative(f: &ComplexField, axis: usize) -> ComplexField {
    Multiplier::derivative(f.grid(), axis).apply(f)
}

/// `e^{itΔ} f`, i.e. multiplier `e^{−it|ξ|²}`.
pub fn free_schrodinger(f: &ComplexField, t: f64) -> ComplexField {
    Multiplier::schrodinger(f.grid(), t).apply(f)
}

/// `e^{sΔ} f` for `s ≥ 0`.
pub fn heat_semigroup(f: &ComplexField, s: f64) -> Result<ComplexField> {
    Ok(Multiplier::heat(f.grid(), s)?.apply(f))
}

pub fn real_derivative(f: &RealField, axis: usize) -> RealField {
    Multiplier::derivative(f.grid(), axis).apply_real(f)
}

/// `(∂₁f, ∂₂f)` for a real field in one transform pair.
pub fn real_gradient(f: &RealField) -> (RealField, RealField) {
    let g = f.grid();
    let s = forward(&f.to_complex());
    let n = g.n();
    // ∂₁f + i ∂₂f has multiplier iξ₁ − ξ₂ (each Nyquist zeroed).
    let mut c = s.coeffs.clone();
    par::for_each_mut(&mut c, |idx, z| {
        let (i1, i2) = (idx / n, idx % n);
        let k1 = if g.is_nyquist(i1) { 0.0 } else { g.freq(i1) };
        let k2 = if g.is_nyquist(i2) { 0.0 } else { g.freq(i2) };
        *z *= Complex64::new(-k2, k1);
    });
    let out = inverse(&Spectrum {
        grid: g.clone(),
        coeffs: c,
    });
    (out.re(), out.im())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_field(g: &GridSpec, seed: u64) -> ComplexField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = (0..g.sites())
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        ComplexField::new(g.clone(), v).unwrap()
    }

    fn smooth_random(g: &GridSpec, seed: u64, kmax: f64) -> ComplexField {
        let f = random_field(g, seed);
        fourier_multiplier(&f, |a, b| {
            let r2 = a * a + b * b;
            Complex64::new((-r2 / (kmax * kmax)).exp(), 0.0)
        })
        .unwrap()
    }

    fn rel_l2(a: &ComplexField, b: &ComplexField) -> f64 {
        (a - b).l2_norm() / b.l2_norm()
    }

    fn plane_wave(g: &GridSpec, m1: i32, m2: i32) -> (ComplexField, f64, f64) {
        let u = g.lattice_unit();
        let (k1, k2) = (u * m1 as f64, u * m2 as f64);
        (
            ComplexField::from_fn(g, |x, y| Complex64::from_polar(1.0, k1 * x + k2 * y)),
            k1,
            k2,
        )
    }

    #[test]
    fn forward_matches_naive_dft() {
        let g = make_grid(16, 1.0).unwrap();
        let f = random_field(&g, 3);
        let s = forward(&f);
        let n = 16;
        for &(p, q) in &[(0, 0), (1, 5), (7, 8), (15, 3)] {
            let mut acc = Complex64::default();
            for a in 0..n {
                for b in 0..n {
                    let ph = -2.0 * PI * ((p * a + q * b) as f64) / n as f64;
                    acc += f.at(a, b) * Complex64::from_polar(1.0, ph);
                }
            }
            assert!((acc - s.coeffs()[p * n + q]).norm() < 1e-11);
        }
    }

    #[test]
    fn identity_multiplier_round_trip() {
        let g = make_grid(64, 10.0).unwrap();
        let f = random_field(&g, 1);
        let out = fourier_multiplier(&f, |_, _| Complex64::new(1.0, 0.0)).unwrap();
        assert!(rel_l2(&out, &f) < 1e-12);
    }

    #[test]
    fn indicator_keeps_plane_wave() {
        let g = make_grid(32, 7.0).unwrap();
        let (f, k1, k2) = plane_wave(&g, 3, -2);
        let out = fourier_multiplier(&f, |a, b| {
            if (a - k1).abs() < 1e-9 && (b - k2).abs() < 1e-9 {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::default()
            }
        })
        .unwrap();
        assert!(out.max_abs_diff(&f) < 1e-12);
    }

    #[test]
    fn nonfinite_multiplier_rejected() {
        let g = make_grid(16, 1.0).unwrap();
        let f = random_field(&g, 2);
        assert!(fourier_multiplier(&f, |_, _| Complex64::new(f64::NAN, 0.0)).is_err());
    }

    fn gaussian_images<F: Fn(f64) -> Complex64 + Sync + Send>(g: &GridSpec, c: f64, prof: F) -> ComplexField {
        let l = g.length();
        ComplexField::from_fn(g, |x, y| {
            let mut acc = Complex64::default();
            for a in -1..=1 {
                for b in -1..=1 {
                    let dx = x - c + a as f64 * l;
                    let dy = y - c + b as f64 * l;
                    acc += prof(dx * dx + dy * dy);
                }
            }
            acc
        })
    }

    #[test]
    fn gaussian_laplacian_closed_form() {
        let g = make_grid(128, 32.0).unwrap();
        let a = 0.5;
        let f = gaussian_images(&g, 16.0, |r2| Complex64::new((-r2 / (4.0 * a)).exp(), 0.0));
        let exact = gaussian_images(&g, 16.0, |r2| {
            Complex64::new((r2 / (4.0 * a * a) - 1.0 / a) * (-r2 / (4.0 * a)).exp(), 0.0)
        });
        assert!(laplacian(&f).max_abs_diff(&exact) < 1e-8);
    }

    #[test]
    fn laplacian_constant_and_eigen() {
        let g = make_grid(32, 5.0).unwrap();
        let c = ComplexField::from_fn(&g, |_, _| Complex64::new(2.0, -1.0));
        assert!(laplacian(&c).sup_norm() < 1e-12);
        let (f, k1, k2) = plane_wave(&g, 4, 9);
        let expect = f.scale(Complex64::new(-(k1 * k1 + k2 * k2), 0.0));
        assert!(laplacian(&f).max_abs_diff(&expect) < 1e-9);
    }

    fn fd4_laplacian(f: &ComplexField) -> ComplexField {
        let g = f.grid();
        let n = g.n();
        let h2 = g.spacing() * g.spacing();
        let v = f.values();
        let at = |i: isize, j: isize| {
            let (i, j) = (i.rem_euclid(n as isize) as usize, j.rem_euclid(n as isize) as usize);
            v[i * n + j]
        };
        let vals = (0..g.sites())
            .map(|idx| {
                let (i, j) = ((idx / n) as isize, (idx % n) as isize);
                let d = |di: isize, dj: isize| {
                    (-at(i + 2 * di, j + 2 * dj) + 16.0 * at(i + di, j + dj) - 30.0 * at(i, j)
                        + 16.0 * at(i - di, j - dj)
                        - at(i - 2 * di, j - 2 * dj))
                        / (12.0 * h2)
                };
                d(1, 0) + d(0, 1)
            })
            .collect();
        ComplexField::new(g.clone(), vals).unwrap()
    }

    #[test]
    fn laplacian_matches_fd4_with_fourth_order_convergence() {
        // Same band-limited field sampled on two resolutions.
        let mut errs = vec![];
        for &n in &[32usize, 64] {
            let g = make_grid(n, 2.0 * PI).unwrap();
            let f = ComplexField::from_fn(&g, |x, y| {
                Complex64::new((x + 2.0 * y).sin(), (3.0 * x).cos() * (y).sin())
            });
            errs.push(laplacian(&f).max_abs_diff(&fd4_laplacian(&f)));
        }
        let ratio = errs[0] / errs[1];
        assert!((ratio - 16.0).abs() < 1.5, "ratio {ratio}");
        assert!(errs[1] < 1e-3);
    }

    #[test]
    fn free_gaussian_closed_form() {
        let g = make_grid(128, 32.0).unwrap();
        let a = 0.5;
        let f = gaussian_images(&g, 16.0, |r2| Complex64::new((-r2 / (4.0 * a)).exp(), 0.0));
        for &t in &[0.1, 0.5, 1.0] {
            let z = Complex64::new(a, t);
            let exact = gaussian_images(&g, 16.0, |r2| (a / z) * (-r2 / (4.0 * z)).exp());
            let err = free_schrodinger(&f, t).max_abs_diff(&exact);
            assert!(err < 1e-8, "t={t} err={err}");
        }
    }

    #[test]
    fn free_schrodinger_zero_time_and_eigen() {
        let g = make_grid(32, 3.0).unwrap();
        let f = random_field(&g, 9);
        assert!(free_schrodinger(&f, 0.0).max_abs_diff(&f) < 1e-12);
        let (w, k1, k2) = plane_wave(&g, 2, 1);
        let t = 0.37;
        let expect = w.scale(Complex64::from_polar(1.0, -t * (k1 * k1 + k2 * k2)));
        assert!(free_schrodinger(&w, t).max_abs_diff(&expect) < 1e-11);
    }

    #[test]
    fn heat_semigroup_rules() {
        let g = make_grid(32, 6.0).unwrap();
        let f = smooth_random(&g, 4, 6.0);
        assert!(heat_semigroup(&f, -1.0).is_err());
        assert!(heat_semigroup(&f, 0.0).unwrap().max_abs_diff(&f) < 1e-12);
        let ab = heat_semigroup(&f, 0.3).unwrap();
        let a_b = heat_semigroup(&heat_semigroup(&f, 0.1).unwrap(), 0.2).unwrap();
        assert!(rel_l2(&a_b, &ab) < 1e-12);
        let (w, k1, k2) = plane_wave(&g, 1, 3);
        let expect = w.scale(Complex64::new((-0.3 * (k1 * k1 + k2 * k2)).exp(), 0.0));
        assert!(heat_semigroup(&w, 0.3).unwrap().max_abs_diff(&expect) < 1e-12);
    }

    #[test]
    fn multipliers_commute() {
        let g = make_grid(64, 8.0).unwrap();
        let f = smooth_random(&g, 5, 8.0);
        let a = laplacian(&free_schrodinger(&f, 0.4));
        let b = free_schrodinger(&laplacian(&f), 0.4);
        assert!(rel_l2(&a, &b) < 1e-12);
        let c = laplacian(&heat_semigroup(&f, 0.05).unwrap());
        let d = heat_semigroup(&laplacian(&f), 0.05).unwrap();
        assert!(rel_l2(&c, &d) < 1e-12);
    }

    #[test]
    fn real_pair_and_gradient() {
        let g = make_grid(32, 2.0 * PI).unwrap();
        let a = RealField::from_fn(&g, |x, y| (2.0 * x).sin() * y.cos());
        let b = RealField::from_fn(&g, |x, y| (x + y).cos());
        let d1 = Multiplier::derivative(&g, 1);
        let (da, db) = d1.apply_real_pair(&a, &b);
        let ea = RealField::from_fn(&g, |x, y| 2.0 * (2.0 * x).cos() * y.cos());
        let eb = RealField::from_fn(&g, |x, y| -(x + y).sin());
        assert!(da.max_abs_diff(&ea) < 1e-12);
        assert!(db.max_abs_diff(&eb) < 1e-12);
        let (g1, g2) = real_gradient(&a);
        assert!(g1.max_abs_diff(&ea) < 1e-12);
        let e2 = RealField::from_fn(&g, |x, y| -(2.0 * x).sin() * y.sin());
        assert!(g2.max_abs_diff(&e2) < 1e-12);
    }

    #[test]
    fn derivative_keeps_real_fields_real() {
        let g = make_grid(16, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let v: Vec<f64> = (0..g.sites()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f = RealField::new(g.clone(), v).unwrap().to_complex();
        for axis in [1, 2] {
            assert!(derivative(&f, axis).im().sup_norm() < 1e-12);
        }
    }

    #[test]
    fn parseval() {
        let g = make_grid(32, 4.0).unwrap();
        let f = random_field(&g, 6);
        let s = forward(&f);
        assert!((s.l2_norm_sq() / f.l2_norm_sq() - 1.0).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn round_trip_is_identity(seed in any::<u64>(), len in 0.5f64..50.0) {
            let g = make_grid(32, len).unwrap();
            let f = random_field(&g, seed);
            let back = inverse(&forward(&f));
            prop_assert!(rel_l2(&back, &f) < 1e-12);
        }

        #[test]
        fn schrodinger_is_unitary(seed in any::<u64>(), t in -5.0f64..5.0) {
            let g = make_grid(32, 9.0).unwrap();
            let f = random_field(&g, seed);
            let out = free_schrodinger(&f, t);
            prop_assert!((out.l2_norm() / f.l2_norm() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn heat_contracts(seed in any::<u64>(), s in 0.0f64..2.0) {
            let g = make_grid(32, 9.0).unwrap();
            let f = random_field(&g, seed);
            let out = heat_semigroup(&f, s).unwrap();
            prop_assert!(out.l2_norm() <= f.l2_norm() * (1.0 + 1e-14));
        }
    }
}
