//! Littlewood–Paley projections built from a smooth radial bump.
//!
//! `φ(r) = 1` for `r ≤ 1`, `0` for `r ≥ r₀`, with a `C^∞` transition of
//! mollifier type in between; `ψ(r) = φ(r/2) − φ(r)`. With the default
//! `r₀ = 3/2`, band `j` is supported in `2^j < |ξ| < 3·2^j` and equals one
//! on the plateau `1.5·2^j ≤ |ξ| ≤ 2^{j+1}`.

use crate::error::{LabError, Result};
use crate::grid::{ComplexField, GridSpec};
use crate::spectral::{self, Multiplier, Spectrum};

/// Radial bump `φ` and its dyadic difference `ψ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BumpProfile {
    r0: f64,
}

impl Default for BumpProfile {
    fn default() -> Self {
        BumpProfile { r0: 1.5 }
    }
}

fn mollifier(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        (-1.0 / x).exp()
    }
}

/// `C^∞` step: 0 for `x ≤ 0`, 1 for `x ≥ 1`.
fn smooth_step(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        let a = mollifier(x);
        a / (a + mollifier(1.0 - x))
    }
}

impl BumpProfile {
    /// Bump with transition on `(1, r0)`; `r0 ∈ (1, 2)` leaves a plateau in `ψ`.
    pub fn new(r0: f64) -> Result<Self> {
        if !(r0 > 1.0 && r0 <= 2.0) {
            return Err(crate::error::invalid("r0", "transition end must lie in (1, 2]"));
        }
        Ok(BumpProfile { r0 })
    }

    pub fn transition_end(&self) -> f64 {
        self.r0
    }

    pub fn phi(&self, r: f64) -> f64 {
        if r <= 1.0 {
            1.0
        } else if r >= self.r0 {
            0.0
        } else {
            smooth_step((self.r0 - r) / (self.r0 - 1.0))
        }
    }

    pub fn psi(&self, r: f64) -> f64 {
        self.phi(0.5 * r) - self.phi(r)
    }

    /// Support of `ψ(2^{-j}·)` as `(inner, outer)` radii.
    pub fn band_support(&self, j: i32) -> (f64, f64) {
        let s = 2f64.powi(j);
        (s, 2.0 * self.r0 * s)
    }

    /// Radii on which `ψ(2^{-j}·) = 1`; empty when `r0 = 2`.
    pub fn band_plateau(&self, j: i32) -> (f64, f64) {
        let s = 2f64.powi(j);
        (self.r0 * s, 2.0 * s)
    }

    /// `(inf, sup)` of `Σ_j ψ(2^{-j}r)²` over `r > 0`, scanned over one octave.
    pub fn square_sum_bounds(&self) -> (f64, f64) {
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        let m = 20_000;
        for i in 0..=m {
            let r = 1.0 + i as f64 / m as f64;
            let s: f64 = (-2..=2).map(|j| self.psi(r / 2f64.powi(j)).powi(2)).sum();
            lo = lo.min(s);
            hi = hi.max(s);
        }
        (lo, hi)
    }
}

/// Representable band indices on a grid.
///
/// `j_min` is the lowest band whose support can hold a nonzero lattice
/// frequency (`lp_low(j_min − 1)` keeps only the mean); `j_max` is the
/// smallest band whose low-pass covers the whole lattice, corners included.
/// Bands above `resolved_max` reach past the Nyquist frequency along an
/// axis and are reported as tail.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DyadicRange {
    pub j_min: i32,
    pub j_max: i32,
}

impl DyadicRange {
    pub fn for_grid(grid: &GridSpec) -> Self {
        Self::for_grid_with(grid, &BumpProfile::default())
    }

    pub fn for_grid_with(grid: &GridSpec, prof: &BumpProfile) -> Self {
        let k0 = grid.lattice_unit();
        let j_min = (k0 / prof.r0).log2().floor() as i32;
        let corner = grid.max_wavenumber();
        let mut j_max = j_min;
        while 2f64.powi(j_max + 1) < corner {
            j_max += 1;
        }
        DyadicRange { j_min, j_max }
    }

    /// Sub-range of `for_grid`; bounds outside it are rejected.
    pub fn new(grid: &GridSpec, j_min: i32, j_max: i32) -> Result<Self> {
        let full = Self::for_grid(grid);
        if j_min > j_max || j_min < full.j_min || j_max > full.j_max {
            return Err(LabError::BandOutOfRange {
                j: if j_min < full.j_min { j_min } else { j_max },
                min: full.j_min,
                max: full.j_max,
            });
        }
        Ok(DyadicRange { j_min, j_max })
    }

    pub fn contains(&self, j: i32) -> bool {
        (self.j_min..=self.j_max).contains(&j)
    }

    pub fn bands(&self) -> impl Iterator<Item = i32> {
        self.j_min..=self.j_max
    }

    pub fn len(&self) -> usize {
        (self.j_max - self.j_min + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Largest band whose whole support lies inside the Nyquist frequency.
    pub fn resolved_max(grid: &GridSpec) -> i32 {
        let prof = BumpProfile::default();
        let r = Self::for_grid(grid);
        let mut j = r.j_max;
        while j > r.j_min && 2.0 * prof.r0 * 2f64.powi(j) > grid.nyquist() {
            j -= 1;
        }
        j
    }

    fn check(&self, j: i32) -> Result<()> {
        if self.contains(j) {
            Ok(())
        } else {
            Err(LabError::BandOutOfRange {
                j,
                min: self.j_min,
                max: self.j_max,
            })
        }
    }
}

/// Multiplier `ψ(2^{-j}|ξ|)`.
pub fn band_multiplier(grid: &GridSpec, j: i32) -> Multiplier {
    let prof = BumpProfile::default();
    let s = 2f64.powi(-j);
    Multiplier::real(grid, move |a, b| prof.psi(s * (a * a + b * b).sqrt())).expect("finite")
}

/// Multiplier `φ(2^{-j-1}|ξ|)` of `P_{≤j}`.
pub fn low_multiplier(grid: &GridSpec, j: i32) -> Multiplier {
    let prof = BumpProfile::default();
    let s = 2f64.powi(-j - 1);
    Multiplier::real(grid, move |a, b| prof.phi(s * (a * a + b * b).sqrt())).expect("finite")
}

/// `P_j f`.
pub fn lp_project(f: &ComplexField, j: i32) -> Result<ComplexField> {
    DyadicRange::for_grid(f.grid()).check(j)?;
    Ok(band_multiplier(f.grid(), j).apply(f))
}

/// `P_{≤j} f`, so that `lp_low(f, j) + Σ_{j<j'≤j_max} P_{j'} f = f`.
/// Accepts `j_min − 1 ≤ j ≤ j_max`.
pub fn lp_low(f: &ComplexField, j: i32) -> Result<ComplexField> {
    let r = DyadicRange::for_grid(f.grid());
    if j < r.j_min - 1 || j > r.j_max {
        return Err(LabError::BandOutOfRange {
            j,
            min: r.j_min - 1,
            max: r.j_max,
        });
    }
    Ok(low_multiplier(f.grid(), j).apply(f))
}

/// Band projection of an already transformed field.
pub fn project_spectrum(s: &Spectrum, j: i32) -> ComplexField {
    s.applied(&band_multiplier(s.grid(), j)).inverse()
}

/// `‖P_j f‖_{L²}` for every band of `range`, by Parseval (no inverse transforms).
pub fn band_l2_norms(f: &ComplexField, range: &DyadicRange) -> Vec<f64> {
    band_l2_norms_spectrum(&spectral::forward(f), range)
}

pub fn band_l2_norms_spectrum(s: &Spectrum, range: &DyadicRange) -> Vec<f64> {
    let prof = BumpProfile::default();
    range
        .bands()
        .map(|j| {
            let sc = 2f64.powi(-j);
            s.weighted_norm_sq(|a, b| prof.psi(sc * (a * a + b * b).sqrt()).powi(2))
                .sqrt()
        })
        .collect()
}

/// All band projections of `f` over `range`, sharing one forward transform.
pub fn decompose(f: &ComplexField, range: &DyadicRange) -> Vec<(i32, ComplexField)> {
    let s = spectral::forward(f);
    let bands: Vec<i32> = range.bands().collect();
    crate::par::map_jobs(&bands, |&j| (j, project_spectrum(&s, j)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use num_complex::Complex64;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(g: &GridSpec, seed: u64) -> ComplexField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = (0..g.sites())
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        ComplexField::new(g.clone(), v).unwrap()
    }

    #[test]
    fn profile_shape() {
        let p = BumpProfile::default();
        assert_eq!(p.phi(0.3), 1.0);
        assert_eq!(p.phi(1.0), 1.0);
        assert_eq!(p.phi(1.5), 0.0);
        assert_eq!(p.phi(7.0), 0.0);
        let mut prev = 1.0;
        for i in 0..=200 {
            let v = p.phi(1.0 + i as f64 / 400.0);
            assert!((0.0..=1.0).contains(&v) && v <= prev);
            prev = v;
        }
        assert_eq!(p.psi(1.5), 1.0);
        assert_eq!(p.psi(2.0), 1.0);
        assert_eq!(p.psi(1.0), 0.0);
        assert_eq!(p.psi(3.0), 0.0);
        assert!(BumpProfile::new(1.0).is_err());
    }

    #[test]
    fn telescoping_sum_is_one() {
        let p = BumpProfile::default();
        for i in 1..500 {
            let r = 0.01 * i as f64 * 1.37;
            let s: f64 = (-12..12).map(|j| p.psi(r / 2f64.powi(j))).sum();
            assert!((s - 1.0).abs() < 1e-15, "r={r} s={s}");
        }
    }

    #[test]
    fn square_sum_bounds_from_profile() {
        // Two overlapping bands a + b = 1 give a² + b² ∈ [1/2, 1].
        let (lo, hi) = BumpProfile::default().square_sum_bounds();
        assert!((lo - 0.5).abs() < 1e-6, "lo={lo}");
        assert_eq!(hi, 1.0);
    }

    #[test]
    fn range_covers_lattice() {
        let g = make_grid(64, 32.0).unwrap();
        let r = DyadicRange::for_grid(&g);
        assert!(2f64.powi(r.j_max + 1) >= g.max_wavenumber());
        assert!(2f64.powi(r.j_max) < g.max_wavenumber());
        assert!(1.5 * 2f64.powi(r.j_min) <= g.lattice_unit());
        assert!(DyadicRange::resolved_max(&g) < r.j_max);
        assert!(DyadicRange::new(&g, r.j_min - 1, r.j_max).is_err());
    }

    #[test]
    fn constant_field_has_no_band_content() {
        let g = make_grid(32, 10.0).unwrap();
        let c = ComplexField::from_fn(&g, |_, _| Complex64::new(1.5, 0.5));
        for j in DyadicRange::for_grid(&g).bands() {
            assert!(lp_project(&c, j).unwrap().sup_norm() < 1e-14);
        }
        let r = DyadicRange::for_grid(&g);
        let low = lp_low(&c, r.j_min - 1).unwrap();
        assert!(low.max_abs_diff(&c) < 1e-14);
    }

    #[test]
    fn plateau_wave_unchanged() {
        let g = make_grid(64, 2.0 * std::f64::consts::PI).unwrap();
        // |ξ| = 7 lies on the plateau [6, 8] of band 2.
        let f = ComplexField::from_fn(&g, |x, _| Complex64::from_polar(1.0, 7.0 * x));
        let p = lp_project(&f, 2).unwrap();
        assert!(p.max_abs_diff(&f) < 1e-13);
        assert!(lp_project(&f, 0).unwrap().sup_norm() < 1e-13);
        assert!(lp_low(&f, 1).unwrap().sup_norm() < 1e-13);
    }

    #[test]
    fn out_of_range_rejected() {
        let g = make_grid(32, 10.0).unwrap();
        let r = DyadicRange::for_grid(&g);
        let f = random_field(&g, 1);
        assert!(lp_project(&f, r.j_max + 1).is_err());
        assert!(lp_project(&f, r.j_min - 1).is_err());
        assert!(lp_low(&f, r.j_min - 2).is_err());
    }

    #[test]
    fn low_at_top_is_identity() {
        let g = make_grid(32, 3.0).unwrap();
        let f = random_field(&g, 8);
        let r = DyadicRange::for_grid(&g);
        let low = lp_low(&f, r.j_max).unwrap();
        assert!((&low - &f).l2_norm() / f.l2_norm() < 1e-12);
    }

    #[test]
    fn parseval_band_norms_match_projections() {
        let g = make_grid(32, 12.0).unwrap();
        let f = random_field(&g, 2);
        let r = DyadicRange::for_grid(&g);
        let fast = band_l2_norms(&f, &r);
        for (i, (j, p)) in decompose(&f, &r).into_iter().enumerate() {
            assert_eq!(j, r.j_min + i as i32);
            assert!((p.l2_norm() - fast[i]).abs() < 1e-12 * (1.0 + fast[i]));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn partition_reconstructs(seed in any::<u64>(), len in 1.0f64..80.0, cut in 0usize..6) {
            let g = make_grid(32, len).unwrap();
            let f = random_field(&g, seed);
            let r = DyadicRange::for_grid(&g);
            let j0 = (r.j_min - 1 + cut as i32).min(r.j_max);
            let mut acc = lp_low(&f, j0).unwrap();
            for j in (j0 + 1)..=r.j_max {
                acc = &acc + &lp_project(&f, j).unwrap();
            }
            prop_assert!((&acc - &f).l2_norm() / f.l2_norm() < 1e-12);
        }

        #[test]
        fn separated_bands_orthogonal(seed in any::<u64>()) {
            let g = make_grid(32, 20.0).unwrap();
            let f = random_field(&g, seed);
            let r = DyadicRange::for_grid(&g);
            let parts = decompose(&f, &r);
            for (j, a) in &parts {
                for (k, b) in &parts {
                    if (j - k).abs() >= 2 {
                        let ip = a.inner(b).unwrap().norm();
                        prop_assert!(ip <= 1e-14 * (1.0 + a.l2_norm() * b.l2_norm()));
                    }
                }
            }
        }
    }
}
