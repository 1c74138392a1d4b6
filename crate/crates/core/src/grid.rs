//! Periodic square grids and the sampled fields that live on them.
//!
//! Sites are stored row-major: index `i1 * n + i2`, where `i1` counts along
//! the first coordinate axis and `i2` along the second. Physical positions
//! are `x = (i1 h, i2 h)` on `[0, L)²`.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

use crate::error::{LabError, Result};
use crate::par;

/// Periodic `n × n` grid of side `length` with its wavenumber lattice.
#[derive(Clone, Debug)]
pub struct GridSpec {
    n: usize,
    length: f64,
    spacing: f64,
    freqs: Vec<f64>,
}

impl PartialEq for GridSpec {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.length == other.length
    }
}

/// Builds a grid; `n` must be a power of two no smaller than 16.
pub fn make_grid(n: usize, length: f64) -> Result<GridSpec> {
    GridSpec::new(n, length)
}

impl GridSpec {
    pub fn new(n: usize, length: f64) -> Result<Self> {
        if !n.is_power_of_two() || n < 16 {
            return Err(LabError::InvalidGrid(format!(
                "n = {n} is not a power of two >= 16"
            )));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(LabError::InvalidGrid(format!(
                "length = {length} must be positive and finite"
            )));
        }
        let unit = 2.0 * PI / length;
        let half = n as i64 / 2;
        let freqs = (0..n as i64)
            .map(|i| {
                let m = if i < half { i } else { i - n as i64 };
                unit * m as f64
            })
            .collect();
        Ok(GridSpec {
            n,
            length,
            spacing: length / n as f64,
            freqs,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Number of sites, `n²`.
    pub fn sites(&self) -> usize {
        self.n * self.n
    }

    /// Area element of the Riemann sums, `spacing²`.
    pub fn cell_area(&self) -> f64 {
        self.spacing * self.spacing
    }

    /// Lattice unit `2π/L`.
    pub fn lattice_unit(&self) -> f64 {
        2.0 * PI / self.length
    }

    /// Magnitude of the Nyquist wavenumber, `π n / L`.
    pub fn nyquist(&self) -> f64 {
        PI * self.n as f64 / self.length
    }

    /// Largest `|ξ|` on the lattice (a corner of the Nyquist square).
    pub fn max_wavenumber(&self) -> f64 {
        self.nyquist() * std::f64::consts::SQRT_2
    }

    /// One-dimensional wavenumbers in FFT order.
    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn freq(&self, i: usize) -> f64 {
        self.freqs[i]
    }

    pub fn is_nyquist(&self, i: usize) -> bool {
        i == self.n / 2
    }

    /// `(ξ₁, ξ₂)` at flat index `idx`.
    pub fn wavevector(&self, idx: usize) -> (f64, f64) {
        (self.freqs[idx / self.n], self.freqs[idx % self.n])
    }

    /// Physical coordinate of grid index `i`.
    pub fn coord(&self, i: usize) -> f64 {
        i as f64 * self.spacing
    }

    /// `(x₁, x₂)` at flat index `idx`.
    pub fn position(&self, idx: usize) -> (f64, f64) {
        (self.coord(idx / self.n), self.coord(idx % self.n))
    }

    /// Minimal periodic displacement `x - c` folded into `[-L/2, L/2)`.
    pub fn periodic_offset(&self, x: f64, c: f64) -> f64 {
        let l = self.length;
        let mut d = (x - c) % l;
        if d >= 0.5 * l {
            d -= l;
        } else if d < -0.5 * l {
            d += l;
        }
        d
    }

    pub fn ensure_same(&self, other: &GridSpec) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(LabError::GridMismatch)
        }
    }
}

/// Scalar sample types a [`Field`] can hold.
pub trait Sample: Copy + Default + Send + Sync + 'static {
    fn modulus(self) -> f64;
    fn finite(self) -> bool;
}

impl Sample for f64 {
    fn modulus(self) -> f64 {
        self.abs()
    }
    fn finite(self) -> bool {
        self.is_finite()
    }
}

impl Sample for Complex64 {
    fn modulus(self) -> f64 {
        self.norm()
    }
    fn finite(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

/// Samples of a scalar field, one per grid site.
#[derive(Clone, Debug, PartialEq)]
pub struct Field<T> {
    grid: GridSpec,
    values: Vec<T>,
}

pub type ComplexField = Field<Complex64>;
pub type RealField = Field<f64>;

impl<T: Sample> Field<T> {
    /// Wraps samples after checking the count and finiteness.
    pub fn new(grid: GridSpec, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.sites() {
            return Err(LabError::LengthMismatch {
                expected: grid.sites(),
                got: values.len(),
            });
        }
        if !values.iter().all(|v| v.finite()) {
            return Err(LabError::NonFinite("field samples"));
        }
        Ok(Field { grid, values })
    }

    /// Wraps samples the caller already knows to be valid.
    pub(crate) fn from_parts(grid: GridSpec, values: Vec<T>) -> Self {
        debug_assert_eq!(values.len(), grid.sites());
        Field { grid, values }
    }

    pub fn zeros(grid: &GridSpec) -> Self {
        Field {
            grid: grid.clone(),
            values: vec![T::default(); grid.sites()],
        }
    }

    /// Samples `f(x₁, x₂)` at every site.
    pub fn from_fn<F>(grid: &GridSpec, f: F) -> Self
    where
        F: Fn(f64, f64) -> T + Sync + Send,
    {
        let values = par::map_range(grid.sites(), |idx| {
            let (x1, x2) = grid.position(idx);
            f(x1, x2)
        });
        Field {
            grid: grid.clone(),
            values,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn at(&self, i1: usize, i2: usize) -> T {
        self.values[i1 * self.grid.n() + i2]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.finite())
    }

    /// Discrete `L^q` norm as a Riemann sum; `q = ∞` gives the sup norm.
    pub fn lp_norm(&self, q: f64) -> f64 {
        if q.is_infinite() {
            return self.sup_norm();
        }
        let n = self.grid.n();
        let total = par::sum_rows(n, |r| {
            self.values[r * n..(r + 1) * n]
                .iter()
                .map(|v| v.modulus().powf(q))
                .sum()
        });
        (total * self.grid.cell_area()).powf(1.0 / q)
    }

    pub fn l2_norm_sq(&self) -> f64 {
        let n = self.grid.n();
        par::sum_rows(n, |r| {
            self.values[r * n..(r + 1) * n]
                .iter()
                .map(|v| {
                    let m = v.modulus();
                    m * m
                })
                .sum()
        }) * self.grid.cell_area()
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_norm_sq().sqrt()
    }

    pub fn sup_norm(&self) -> f64 {
        let n = self.grid.n();
        par::max_rows(n, |r| {
            self.values[r * n..(r + 1) * n]
                .iter()
                .map(|v| v.modulus())
                .fold(0.0, f64::max)
        })
    }

    /// Pointwise map into a possibly different sample type.
    pub fn map<U: Sample, F>(&self, f: F) -> Field<U>
    where
        F: Fn(T) -> U + Sync + Send,
    {
        Field {
            grid: self.grid.clone(),
            values: par::map_range(self.values.len(), |i| f(self.values[i])),
        }
    }

    /// Pointwise combination of two fields on the same grid.
    pub fn zip_with<S: Sample, U: Sample, F>(&self, other: &Field<S>, f: F) -> Result<Field<U>>
    where
        F: Fn(T, S) -> U + Sync + Send,
    {
        self.grid.ensure_same(other.grid())?;
        Ok(Field {
            grid: self.grid.clone(),
            values: par::map_range(self.values.len(), |i| f(self.values[i], other.values[i])),
        })
    }

    /// Sup of the pointwise difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64
    where
        T: Sub<Output = T>,
    {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (*a - *b).modulus())
            .fold(0.0, f64::max)
    }
}

impl ComplexField {
    pub fn from_real(r: &RealField) -> Self {
        r.map(|x| Complex64::new(x, 0.0))
    }

    pub fn re(&self) -> RealField {
        self.map(|z| z.re)
    }

    pub fn im(&self) -> RealField {
        self.map(|z| z.im)
    }

    pub fn abs_sq(&self) -> RealField {
        self.map(|z| z.norm_sqr())
    }

    pub fn conj(&self) -> Self {
        self.map(|z| z.conj())
    }

    pub fn scale(&self, c: Complex64) -> Self {
        self.map(|z| z * c)
    }

    /// `∫ f · conj(g)`.
    pub fn inner(&self, other: &Self) -> Result<Complex64> {
        self.grid.ensure_same(other.grid())?;
        let n = self.grid.n();
        let parts: Vec<Complex64> = par::map_range(n, |r| {
            let (a, b) = (&self.values[r * n..(r + 1) * n], &other.values[r * n..(r + 1) * n]);
            a.iter().zip(b).map(|(x, y)| x * y.conj()).sum()
        });
        Ok(parts.iter().sum::<Complex64>() * self.grid.cell_area())
    }

    /// `‖f‖²_{L²}`.
    pub fn mass(&self) -> f64 {
        self.l2_norm_sq()
    }
}

impl RealField {
    pub fn to_complex(&self) -> ComplexField {
        ComplexField::from_real(self)
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|x| x * c)
    }

    /// `∫ f`.
    pub fn integral(&self) -> f64 {
        let n = self.grid.n();
        par::sum_rows(n, |r| self.values[r * n..(r + 1) * n].iter().sum()) * self.grid.cell_area()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

macro_rules! field_binop {
    ($trait:ident, $method:ident, $op:tt) => {
        impl<'a, T: Sample + $trait<Output = T>> $trait<&'a Field<T>> for &'a Field<T> {
            type Output = Field<T>;
            fn $method(self, rhs: &'a Field<T>) -> Field<T> {
                assert_eq!(self.grid, rhs.grid, "fields live on different grids");
                Field {
                    grid: self.grid.clone(),
                    values: self.values.iter().zip(&rhs.values).map(|(a, b)| *a $op *b).collect(),
                }
            }
        }
    };
}

field_binop!(Add, add, +);
field_binop!(Sub, sub, -);
field_binop!(Mul, mul, *);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_spacing_and_lattice() {
        let g = make_grid(16, 2.0 * PI).unwrap();
        assert!((g.spacing() - 2.0 * PI / 16.0).abs() < 1e-15);
        let ints: Vec<i64> = g.freqs().iter().map(|k| k.round() as i64).collect();
        assert_eq!(ints.iter().min(), Some(&-8));
        assert_eq!(ints.iter().max(), Some(&7));
        for k in g.freqs() {
            assert!((k - k.round()).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_64_by_32() {
        let g = make_grid(64, 32.0).unwrap();
        assert_eq!(g.spacing(), 0.5);
        assert_eq!(g.spacing() * g.n() as f64, g.length());
        let max = g.freqs().iter().fold(0.0_f64, |m, k| m.max(k.abs()));
        assert!((max - 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(make_grid(17, 1.0).is_err());
        assert!(make_grid(8, 1.0).is_err());
        assert!(make_grid(64, 0.0).is_err());
        assert!(make_grid(64, -1.0).is_err());
    }

    #[test]
    fn lattice_symmetric_except_nyquist() {
        let g = make_grid(32, 5.0).unwrap();
        let n = g.n();
        for i in 0..n {
            let j = (n - i) % n;
            if g.is_nyquist(i) {
                assert_eq!(j, i);
                assert!(g.freq(i) < 0.0);
            } else {
                assert!((g.freq(i) + g.freq(j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn field_rejects_nan_and_bad_length() {
        let g = make_grid(16, 1.0).unwrap();
        assert!(RealField::new(g.clone(), vec![0.0; 10]).is_err());
        let mut v = vec![0.0; 256];
        v[3] = f64::NAN;
        assert!(RealField::new(g, v).is_err());
    }

    #[test]
    fn riemann_norms() {
        let g = make_grid(16, 4.0).unwrap();
        let one = RealField::from_fn(&g, |_, _| 1.0);
        assert!((one.l2_norm() - 4.0).abs() < 1e-13);
        assert!((one.lp_norm(4.0) - 2.0).abs() < 1e-13);
        assert_eq!(one.lp_norm(f64::INFINITY), 1.0);
    }
}
