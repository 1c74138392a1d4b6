//! Three-vector fields, maps into S², the Schrödinger map flow and its
//! derivative fields in a moving frame.

use serde::Serialize;

use crate::besov::combine;
use crate::data::{gaussian, real_noise};
use crate::error::{invalid, LabError, Result};
use crate::grid::{ComplexField, GridSpec, RealField};
use crate::littlewood_paley::{band_multiplier, DyadicRange};
use crate::par;
use crate::spectral::Multiplier;
use crate::trajectory::{OnGrid, Trajectory};

pub type V3 = [f64; 3];

/// Base point (north pole).
pub const Q: V3 = [0.0, 0.0, 1.0];
pub const E1: V3 = [1.0, 0.0, 0.0];
pub const E2: V3 = [0.0, 1.0, 0.0];

/// Defect allowed on input to operations that need an on-sphere map.
pub const SPHERE_TOL: f64 = 1e-8;

pub fn dot(a: V3, b: V3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross(a: V3, b: V3) -> V3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

pub fn norm(a: V3) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(a: V3, s: f64, b: V3) -> V3 {
    [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]]
}

/// A 3-vector per grid site, stored by component.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    c: [RealField; 3],
}

impl VectorField {
    pub fn new(c: [RealField; 3]) -> Result<Self> {
        c[0].grid().ensure_same(c[1].grid())?;
        c[0].grid().ensure_same(c[2].grid())?;
        Ok(VectorField { c })
    }

    pub fn zeros(grid: &GridSpec) -> Self {
        let z = RealField::zeros(grid);
        VectorField {
            c: [z.clone(), z.clone(), z],
        }
    }

    pub fn constant(grid: &GridSpec, v: V3) -> Self {
        Self::from_points(grid, vec![v; grid.sites()])
    }

    pub fn from_fn<F>(grid: &GridSpec, f: F) -> Self
    where
        F: Fn(f64, f64) -> V3 + Sync + Send,
    {
        let pts = par::map_range(grid.sites(), |i| {
            let (x, y) = grid.position(i);
            f(x, y)
        });
        Self::from_points(grid, pts)
    }

    pub fn from_points(grid: &GridSpec, pts: Vec<V3>) -> Self {
        let comp = |k: usize| RealField::from_parts(grid.clone(), pts.iter().map(|p| p[k]).collect());
        VectorField {
            c: [comp(0), comp(1), comp(2)],
        }
    }

    pub fn grid(&self) -> &GridSpec {
        self.c[0].grid()
    }

    pub fn component(&self, k: usize) -> &RealField {
        &self.c[k]
    }

    pub fn components(&self) -> &[RealField; 3] {
        &self.c
    }

    pub fn at(&self, idx: usize) -> V3 {
        [self.c[0].values()[idx], self.c[1].values()[idx], self.c[2].values()[idx]]
    }

    pub fn points(&self) -> Vec<V3> {
        (0..self.grid().sites()).map(|i| self.at(i)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.c.iter().all(|c| c.is_finite())
    }

    pub fn map<F>(&self, f: F) -> VectorField
    where
        F: Fn(V3) -> V3 + Sync + Send,
    {
        let pts = par::map_range(self.grid().sites(), |i| f(self.at(i)));
        Self::from_points(self.grid(), pts)
    }

    pub fn zip<F>(&self, other: &VectorField, f: F) -> Result<VectorField>
    where
        F: Fn(V3, V3) -> V3 + Sync + Send,
    {
        self.grid().ensure_same(other.grid())?;
        let pts = par::map_range(self.grid().sites(), |i| f(self.at(i), other.at(i)));
        Ok(Self::from_points(self.grid(), pts))
    }

    /// Pointwise `a·b`.
    pub fn dot(&self, other: &VectorField) -> Result<RealField> {
        self.grid().ensure_same(other.grid())?;
        let v = par::map_range(self.grid().sites(), |i| dot(self.at(i), other.at(i)));
        Ok(RealField::from_parts(self.grid().clone(), v))
    }

    /// Pointwise `a×b`.
    pub fn cross(&self, other: &VectorField) -> Result<VectorField> {
        self.zip(other, cross)
    }

    /// `self + s·other`.
    pub fn axpy(&self, s: f64, other: &VectorField) -> VectorField {
        self.zip(other, |a, b| axpy(a, s, b)).expect("same grid")
    }

    pub fn scale(&self, s: f64) -> VectorField {
        self.map(|a| [s * a[0], s * a[1], s * a[2]])
    }

    /// Applies a real-symmetric multiplier to every component.
    pub fn apply(&self, m: &Multiplier) -> VectorField {
        let (a, b) = m.apply_real_pair(&self.c[0], &self.c[1]);
        let c = m.apply_real(&self.c[2]);
        VectorField { c: [a, b, c] }
    }

    pub fn derivative(&self, axis: usize) -> VectorField {
        self.apply(&Multiplier::derivative(self.grid(), axis))
    }

    pub fn laplacian(&self) -> VectorField {
        self.apply(&Multiplier::laplacian(self.grid()))
    }

    /// `Σ_c ∫ |a_c|²`.
    pub fn l2_norm_sq(&self) -> f64 {
        self.c.iter().map(|c| c.l2_norm_sq()).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_norm_sq().sqrt()
    }

    /// `max_x |a(x)|`.
    pub fn sup_norm(&self) -> f64 {
        par::map_range(self.grid().sites(), |i| norm(self.at(i))).into_iter().fold(0.0, f64::max)
    }

    /// Site-wise mean vector.
    pub fn mean(&self) -> V3 {
        [self.c[0].mean(), self.c[1].mean(), self.c[2].mean()]
    }

    /// `max_x |a(x) − b|`.
    pub fn sup_distance(&self, b: V3) -> f64 {
        par::map_range(self.grid().sites(), |i| norm(axpy(self.at(i), -1.0, b)))
            .into_iter()
            .fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &VectorField) -> f64 {
        (0..3).map(|k| self.c[k].max_abs_diff(&other.c[k])).fold(0.0, f64::max)
    }

    /// `max_x ||a(x)| − 1|`.
    pub fn sphere_defect(&self) -> f64 {
        par::map_range(self.grid().sites(), |i| (norm(self.at(i)) - 1.0).abs())
            .into_iter()
            .fold(0.0, f64::max)
    }
}

/// A map into S²: `|u(x)| = 1` at every site.
#[derive(Clone, Debug, PartialEq)]
pub struct SphereField(VectorField);

impl SphereField {
    /// Accepts a field within [`SPHERE_TOL`] of the sphere and renormalizes it.
    pub fn new(f: VectorField) -> Result<Self> {
        if !f.is_finite() {
            return Err(LabError::NonFinite("sphere map"));
        }
        let d = f.sphere_defect();
        if d > SPHERE_TOL {
            return Err(LabError::OffSphere { defect: d });
        }
        Ok(Self::normalize(&f).expect("near the sphere"))
    }

    /// Projects `f/|f|` (zero vectors are rejected).
    pub fn normalize(f: &VectorField) -> Result<Self> {
        let min = par::map_range(f.grid().sites(), |i| norm(f.at(i))).into_iter().fold(f64::INFINITY, f64::min);
        if !(min > 0.0) || !f.is_finite() {
            return Err(invalid("map", "cannot normalize a zero or non-finite vector"));
        }
        Ok(SphereField(f.map(|a| {
            let r = norm(a);
            [a[0] / r, a[1] / r, a[2] / r]
        })))
    }

    pub fn constant(grid: &GridSpec, p: V3) -> Result<Self> {
        Self::normalize(&VectorField::constant(grid, p))
    }

    pub fn field(&self) -> &VectorField {
        &self.0
    }

    pub fn into_field(self) -> VectorField {
        self.0
    }

    pub fn grid(&self) -> &GridSpec {
        self.0.grid()
    }
}

impl OnGrid for SphereField {
    fn grid(&self) -> &GridSpec {
        self.0.grid()
    }
}

fn cross_laplacian(u: &VectorField) -> VectorField {
    u.cross(&u.laplacian()).expect("same grid")
}

/// `u × Δu`.
pub fn smap_rhs(u: &SphereField) -> VectorField {
    cross_laplacian(&u.0)
}

/// Checks a raw vector field is on the sphere before taking the rhs.
pub fn smap_rhs_checked(u: &VectorField) -> Result<VectorField> {
    Ok(smap_rhs(&SphereField::new(u.clone())?))
}

/// One RK4 step followed by renormalization; also returns the largest
/// `||u_RK4| − 1|` removed by the projection.
const RK4_IMAG_LIMIT: f64 = 2.0 * std::f64::consts::SQRT_2;

pub fn smap_step_with_defect(u: &SphereField, dt: f64) -> Result<(SphereField, f64)> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid("dt", "time step must be positive"));
    }
    // Linearized about a point the flow is i·Δ; RK4 covers |λ| ≤ 2√2 on the imaginary axis.
    let k = u.grid().max_wavenumber();
    if dt * k * k > RK4_IMAG_LIMIT {
        return Err(invalid("dt", format!("exceeds RK4 stability limit {:.3e}", RK4_IMAG_LIMIT / (k * k))));
    }
    let u0 = &u.0;
    let k1 = cross_laplacian(u0);
    let k2 = cross_laplacian(&u0.axpy(0.5 * dt, &k1));
    let k3 = cross_laplacian(&u0.axpy(0.5 * dt, &k2));
    let k4 = cross_laplacian(&u0.axpy(dt, &k3));
    let incr = k1.axpy(2.0, &k2).axpy(2.0, &k3).axpy(1.0, &k4);
    let raw = u0.axpy(dt / 6.0, &incr);
    if !raw.is_finite() {
        return Err(LabError::NonFinite("Schrödinger map step"));
    }
    let defect = raw.sphere_defect();
    Ok((SphereField::normalize(&raw)?, defect))
}

pub fn smap_step(u: &SphereField, dt: f64) -> Result<SphereField> {
    smap_step_with_defect(u, dt).map(|r| r.0)
}

/// `Σ_m ∫|∂_m u|²`.
pub fn energy_map(u: &SphereField) -> f64 {
    energy_density_integral(&u.0)
}

pub(crate) fn energy_density_integral(u: &VectorField) -> f64 {
    u.derivative(1).l2_norm_sq() + u.derivative(2).l2_norm_sq()
}

pub fn sup_distance_to_q(u: &SphereField, q: V3) -> f64 {
    u.0.sup_distance(q)
}

#[derive(Clone, Debug, Serialize)]
pub struct SmapSample {
    pub t: f64,
    pub energy: f64,
    pub sup_dist_q: f64,
    /// Largest renormalization since the previous sample.
    pub renorm_defect: f64,
    /// `max ||u| − 1|` after the step.
    pub sphere_defect: f64,
}

pub struct SmapRun {
    pub trajectory: Trajectory<SphereField>,
    pub samples: Vec<SmapSample>,
}

/// Evolves to `t_end` in uniform steps (adjusted to land on `t_end`),
/// calling `visit` every `stride` steps and at the end.
pub fn smap_visit<F>(u0: &SphereField, dt: f64, t_end: f64, stride: usize, mut visit: F) -> Result<f64>
where
    F: FnMut(f64, &SphereField, f64) -> Result<()>,
{
    if !(dt > 0.0 && t_end >= 0.0 && t_end.is_finite()) {
        return Err(invalid("dt/t_end", "need dt > 0 and a finite t_end ≥ 0"));
    }
    let steps = if t_end == 0.0 { 0 } else { (t_end / dt - 1e-9).ceil().max(1.0) as usize };
    let h = if steps == 0 { dt } else { t_end / steps as f64 };
    let stride = stride.max(1);
    let mut u = u0.clone();
    let mut worst = 0.0f64;
    visit(0.0, &u, 0.0)?;
    for s in 1..=steps {
        let (next, d) = smap_step_with_defect(&u, h)?;
        u = next;
        worst = worst.max(d);
        if s % stride == 0 || s == steps {
            visit(s as f64 * h, &u, worst)?;
            worst = 0.0;
        }
    }
    Ok(h)
}

pub fn smap_evolve(u0: &SphereField, dt: f64, t_end: f64, stride: usize, q: V3) -> Result<SmapRun> {
    let mut trajectory = Trajectory::new();
    let mut samples = Vec::new();
    smap_visit(u0, dt, t_end, stride, |t, u, d| {
        samples.push(SmapSample {
            t,
            energy: energy_map(u),
            sup_dist_q: sup_distance_to_q(u, q),
            renorm_defect: d,
            sphere_defect: u.0.sphere_defect(),
        });
        trajectory.push(t, u.clone())
    })?;
    Ok(SmapRun { trajectory, samples })
}

/// Orthonormal frame `(v, w)` of the tangent planes of a map `z`, with
/// `w = z × v` so that `(v, w, z)` is positively oriented.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentFrame {
    pub v: VectorField,
    pub w: VectorField,
}

/// Projections shorter than this make a frame leg ill-defined.
pub const DEGENERATE_PROJECTION: f64 = 1e-6;

impl TangentFrame {
    /// Projects the fixed vector `e` onto each tangent plane of `z`.
    pub fn from_leg(z: &SphereField, e: V3) -> Result<Self> {
        let pts = z.0.points();
        let mut worst = f64::INFINITY;
        let v: Vec<V3> = pts
            .iter()
            .map(|&p| {
                let r = axpy(e, -dot(e, p), p);
                let n = norm(r);
                worst = worst.min(n);
                [r[0] / n, r[1] / n, r[2] / n]
            })
            .collect();
        if !(worst >= DEGENERATE_PROJECTION) {
            return Err(LabError::DegenerateFrame { norm: worst });
        }
        let v = VectorField::from_points(z.grid(), v);
        Ok(Self::completing(z, v))
    }

    /// Fills in `w = z × v` for a given first leg.
    pub fn completing(z: &SphereField, v: VectorField) -> Self {
        let w = z.0.cross(&v).expect("same grid");
        TangentFrame { v, w }
    }

    /// Largest violation of `|v| = |w| = 1`, `v·z = w·z = v·w = 0`, `w = z×v`.
    pub fn defect(&self, z: &SphereField) -> f64 {
        par::map_range(z.grid().sites(), |i| {
            let (p, v, w) = (z.0.at(i), self.v.at(i), self.w.at(i));
            let c = cross(p, v);
            [
                (norm(v) - 1.0).abs(),
                (norm(w) - 1.0).abs(),
                dot(v, p).abs(),
                dot(w, p).abs(),
                dot(v, w).abs(),
                norm(axpy(w, -1.0, c)),
            ]
            .into_iter()
            .fold(0.0, f64::max)
        })
        .into_iter()
        .fold(0.0, f64::max)
    }

    /// Rotates by `θ(x)`: `v' = cos θ v + sin θ w`, `w' = −sin θ v + cos θ w`.
    pub fn rotated(&self, theta: &RealField) -> Self {
        let n = self.v.grid().sites();
        let (mut v, mut w) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for i in 0..n {
            let (s, c) = theta.values()[i].sin_cos();
            let (a, b) = (self.v.at(i), self.w.at(i));
            v.push([c * a[0] + s * b[0], c * a[1] + s * b[1], c * a[2] + s * b[2]]);
            w.push([c * b[0] - s * a[0], c * b[1] - s * a[1], c * b[2] - s * a[2]]);
        }
        TangentFrame {
            v: VectorField::from_points(self.v.grid(), v),
            w: VectorField::from_points(self.v.grid(), w),
        }
    }
}

/// Derivative fields `ψ = v·∂u + i w·∂u` and connection coefficients
/// `A = w·∂v` (spatial `m = 1, 2` and time).
#[derive(Clone, Debug)]
pub struct GaugeData {
    pub psi1: ComplexField,
    pub psi2: ComplexField,
    pub psit: ComplexField,
    pub a1: RealField,
    pub a2: RealField,
    pub at: RealField,
}

impl GaugeData {
    pub fn psi(&self, m: usize) -> &ComplexField {
        if m == 1 {
            &self.psi1
        } else {
            &self.psi2
        }
    }

    pub fn a(&self, m: usize) -> &RealField {
        if m == 1 {
            &self.a1
        } else {
            &self.a2
        }
    }

    /// `∫ |ψ₁|² + |ψ₂|²`.
    pub fn energy(&self) -> f64 {
        self.psi1.l2_norm_sq() + self.psi2.l2_norm_sq()
    }
}

/// Frame components `(v·d, w·d)` of a vector field `d` as `v·d + i w·d`.
pub fn frame_components(frame: &TangentFrame, d: &VectorField) -> ComplexField {
    let n = d.grid().sites();
    let vals = par::map_range(n, |i| {
        num_complex::Complex64::new(dot(frame.v.at(i), d.at(i)), dot(frame.w.at(i), d.at(i)))
    });
    ComplexField::from_parts(d.grid().clone(), vals)
}

/// Tolerance for the frame check in [`derivative_fields`].
pub const FRAME_TOL: f64 = 1e-8;

/// Spatial derivative fields of `u` in `frame`; `psit` and `at` are zero.
pub fn derivative_fields(u: &SphereField, frame: &TangentFrame) -> Result<GaugeData> {
    u.grid().ensure_same(frame.v.grid())?;
    let d = frame.defect(u);
    if d > FRAME_TOL {
        return Err(LabError::NotTangent { defect: d });
    }
    let g = u.grid();
    let a = |m: usize| frame.w.dot(&frame.v.derivative(m)).expect("same grid");
    Ok(GaugeData {
        psi1: frame_components(frame, &u.0.derivative(1)),
        psi2: frame_components(frame, &u.0.derivative(2)),
        psit: ComplexField::zeros(g),
        a1: a(1),
        a2: a(2),
        at: RealField::zeros(g),
    })
}

/// `exp_Q(h₁E₁ + h₂E₂) = cos|h| Q + (sin|h|/|h|)(h₁E₁ + h₂E₂)`.
pub fn exp_q(h1: &RealField, h2: &RealField) -> Result<SphereField> {
    h1.grid().ensure_same(h2.grid())?;
    let pts = par::map_range(h1.grid().sites(), |i| {
        let (a, b) = (h1.values()[i], h2.values()[i]);
        let r = (a * a + b * b).sqrt();
        let s = if r < 1e-8 { 1.0 - r * r / 6.0 } else { r.sin() / r };
        [s * a, s * b, r.cos()]
    });
    SphereField::normalize(&VectorField::from_points(h1.grid(), pts))
}

/// Relative weights of the bands of tangent data.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnvelopeProfile {
    pub first_band: i32,
    pub weights: Vec<f64>,
}

impl EnvelopeProfile {
    pub fn flat(first_band: i32, count: usize) -> Self {
        EnvelopeProfile {
            first_band,
            weights: vec![1.0; count],
        }
    }

    pub fn geometric(first_band: i32, count: usize, ratio: f64) -> Self {
        EnvelopeProfile {
            first_band,
            weights: (0..count).map(|i| ratio.powi(i as i32)).collect(),
        }
    }

    /// `flat:J0:COUNT` or `geom:J0:COUNT:RATIO`.
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || invalid("envelope-profile", format!("cannot parse {s:?}"));
        let j0: i32 = parts.get(1).and_then(|p| p.parse().ok()).ok_or_else(bad)?;
        let count: usize = parts.get(2).and_then(|p| p.parse().ok()).ok_or_else(bad)?;
        let p = match (parts[0], parts.len()) {
            ("flat", 3) => Self::flat(j0, count),
            ("geom", 4) => {
                let r: f64 = parts[3].parse().map_err(|_| bad())?;
                Self::geometric(j0, count, r)
            }
            _ => return Err(bad()),
        };
        if p.weights.is_empty() || p.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(bad());
        }
        Ok(p)
    }

    pub fn bands(&self) -> impl Iterator<Item = (i32, f64)> + '_ {
        self.weights.iter().enumerate().map(|(i, w)| (self.first_band + i as i32, *w))
    }
}

/// `B¹_{∞,2}` size of a tangent field `(h₁, h₂)`, combining the components
/// in `ℓ²` band by band.
pub fn tangent_besov(h1: &RealField, h2: &RealField) -> f64 {
    let g = h1.grid();
    let range = DyadicRange::for_grid(g);
    let norms: Vec<f64> = range
        .bands()
        .map(|j| {
            let m = band_multiplier(g, j);
            let (a, b) = m.apply_real_pair(h1, h2);
            par::map_range(g.sites(), |i| a.values()[i].hypot(b.values()[i]))
                .into_iter()
                .fold(0.0, f64::max)
        })
        .collect();
    combine(range.j_min, &norms, 1.0, 2.0)
}

/// `B¹_{∞,2}` size of `u − Q`, components combined in `ℓ²` band by band.
pub fn map_besov(u: &SphereField, q: V3) -> f64 {
    let d = u.0.map(|a| axpy(a, -1.0, q));
    let g = u.grid();
    let range = DyadicRange::for_grid(g);
    let norms: Vec<f64> = range
        .bands()
        .map(|j| {
            let p = d.apply(&band_multiplier(g, j));
            p.sup_norm()
        })
        .collect();
    combine(range.j_min, &norms, 1.0, 2.0)
}

#[derive(Clone, Debug)]
pub struct SmapData {
    pub u0: SphereField,
    pub h1: RealField,
    pub h2: RealField,
    /// `B¹_{∞,2}` size of the tangent field (equal to ε by construction).
    pub tangent_besov: f64,
    /// Measured `B¹_{∞,2}` size of `u₀ − Q`.
    pub map_besov: f64,
}

/// `u₀ = exp_Q(h)` with `h = Σ_k w_k 2^{−k} P_k(window·noise)/‖…‖_∞` per
/// component, scaled so the tangent field has `B¹_{∞,2}` size `eps`.
pub fn smap_data(grid: &GridSpec, eps: f64, profile: &EnvelopeProfile, window: f64, seed: u64) -> Result<SmapData> {
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(invalid("epsilon", "must be finite and nonnegative"));
    }
    let range = DyadicRange::for_grid(grid);
    let l = grid.length();
    let win = gaussian(grid, (l / 2.0, l / 2.0), window, 1.0, (0.0, 0.0)).re();
    let mut h = [RealField::zeros(grid), RealField::zeros(grid)];
    for (c, hc) in h.iter_mut().enumerate() {
        for (j, w) in profile.bands() {
            if !range.contains(j) {
                return Err(LabError::BandOutOfRange {
                    j,
                    min: range.j_min,
                    max: range.j_max,
                });
            }
            let noise = real_noise(grid, seed, (j - range.j_min) as u64 * 2 + c as u64);
            let p = band_multiplier(grid, j).apply_real(&(&win * &noise));
            let s = p.sup_norm();
            if s > 0.0 {
                *hc = &*hc + &p.scale(w * 2f64.powi(-j) / s);
            }
        }
    }
    scaled_data(h, eps)
}

/// Scales a tangent field to `B¹_{∞,2}` size `eps` and maps it to S².
fn scaled_data(h: [RealField; 2], eps: f64) -> Result<SmapData> {
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(invalid("epsilon", "must be finite and nonnegative"));
    }
    let size = tangent_besov(&h[0], &h[1]);
    let scale = if size > 0.0 { eps / size } else { 0.0 };
    let [h1, h2] = h.map(|f| f.scale(scale));
    let u0 = exp_q(&h1, &h2)?;
    Ok(SmapData {
        tangent_besov: tangent_besov(&h1, &h2),
        map_besov: map_besov(&u0, Q),
        u0,
        h1,
        h2,
    })
}

/// Coherent data: a Gaussian bump of width `sigma` at the box center
/// pointing along `cos θ e₁ + sin θ e₂`, scaled to `B¹_{∞,2}` size `eps`.
/// It disperses on the time scale `sigma²`.
pub fn bump_data(grid: &GridSpec, eps: f64, sigma: f64, theta: f64) -> Result<SmapData> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(invalid("sigma", "bump width must be positive"));
    }
    let l = grid.length();
    let b = gaussian(grid, (l / 2.0, l / 2.0), sigma, 1.0, (0.0, 0.0)).re();
    scaled_data([b.scale(theta.cos()), b.scale(theta.sin())], eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn bump(g: &GridSpec, eps: f64) -> SphereField {
        let l = g.length();
        let h1 = RealField::from_fn(g, |x, y| eps * (-((x - l / 2.0).powi(2) + (y - l / 2.0).powi(2)) / 2.0).exp());
        let h2 = RealField::from_fn(g, |x, y| eps * 0.5 * (-((x - l / 2.0 - 0.5).powi(2) + (y - l / 2.0).powi(2)) / 1.5).exp());
        exp_q(&h1, &h2).unwrap()
    }

    #[test]
    fn constant_map_is_static() {
        let g = make_grid(16, 4.0).unwrap();
        let u = SphereField::constant(&g, Q).unwrap();
        assert_eq!(smap_rhs(&u).sup_norm(), 0.0);
        assert_eq!(smap_step(&u, 0.005).unwrap(), u);
        assert!(smap_step(&u, 0.01).is_err());
        assert_eq!(energy_map(&u), 0.0);
        assert_eq!(sup_distance_to_q(&u, Q), 0.0);
        let anti = SphereField::constant(&g, [0.0, 0.0, -1.0]).unwrap();
        assert_eq!(sup_distance_to_q(&anti, Q), 2.0);
    }

    #[test]
    fn off_sphere_rejected() {
        let g = make_grid(16, 4.0).unwrap();
        let f = VectorField::constant(&g, [0.0, 0.0, 1.0 + 1e-6]);
        assert!(matches!(SphereField::new(f), Err(LabError::OffSphere { .. })));
        assert!(SphereField::new(VectorField::constant(&g, [0.0, 0.0, 1.0 + 1e-10])).is_ok());
        assert!(SphereField::normalize(&VectorField::zeros(&g)).is_err());
    }

    #[test]
    fn rhs_is_tangent() {
        let g = make_grid(32, 8.0).unwrap();
        let u = bump(&g, 0.8);
        let r = smap_rhs(&u);
        let t = u.field().dot(&r).unwrap();
        assert!(t.sup_norm() < 1e-14 * r.sup_norm().max(1.0), "{}", t.sup_norm());
    }

    #[test]
    fn linearization_at_north_pole() {
        // rhs ≈ Q × Δ(εh) = ε(−Δh₂, Δh₁, 0) + O(ε²).
        let g = make_grid(32, 2.0 * PI).unwrap();
        let h1 = RealField::from_fn(&g, |x, _| x.cos());
        let h2 = RealField::from_fn(&g, |x, y| (x + 2.0 * y).sin());
        let lap = Multiplier::laplacian(&g);
        let (l1, l2) = lap.apply_real_pair(&h1, &h2);
        let mut errs = vec![];
        for eps in [1e-2, 5e-3] {
            let u = exp_q(&h1.scale(eps), &h2.scale(eps)).unwrap();
            let r = smap_rhs(&u);
            let e = r.component(0).max_abs_diff(&l2.scale(-eps)).max(r.component(1).max_abs_diff(&l1.scale(eps)));
            errs.push(e);
        }
        assert!(errs[0] < 20.0 * 1e-4, "{errs:?}");
        let ratio = errs[0] / errs[1];
        assert!(ratio > 3.6, "at least second order in eps: {ratio}");
    }

    #[test]
    fn step_stays_on_sphere_and_converges_at_fourth_order() {
        let g = make_grid(32, 8.0).unwrap();
        let u = bump(&g, 0.3);
        let (a, d) = smap_step_with_defect(&u, 1e-3).unwrap();
        assert!(a.field().sphere_defect() < 1e-12);
        assert!(d < 1e-6);
        // One-step error against a fine reference.
        let mut fine = u.clone();
        for _ in 0..64 {
            fine = smap_step(&fine, 4e-3 / 64.0).unwrap();
        }
        let e1 = smap_step(&u, 4e-3).unwrap().field().max_abs_diff(fine.field());
        let half = smap_step(&smap_step(&u, 2e-3).unwrap(), 2e-3).unwrap();
        let e2 = half.field().max_abs_diff(fine.field());
        let ratio = e1 / e2;
        assert!(ratio > 12.0 && ratio < 40.0, "{e1} {e2} {ratio}");
    }

    #[test]
    fn great_circle_energy() {
        // u = Q cos θ + E₁ sin θ with θ = ε sin(2πx₁/L): |∇u|² = |∇θ|².
        let l = 6.0;
        let g = make_grid(64, l).unwrap();
        let eps = 0.4;
        let k = 2.0 * PI / l;
        let u = SphereField::new(VectorField::from_fn(&g, |x, _| {
            let th = eps * (k * x).sin();
            [th.sin(), 0.0, th.cos()]
        }))
        .unwrap();
        let exact = eps * eps * k * k * l * l / 2.0;
        assert!((energy_map(&u) - exact).abs() < 1e-8 * exact, "{} {}", energy_map(&u), exact);
    }

    #[test]
    fn energy_is_scale_invariant() {
        let make = |n: usize, l: f64| {
            let g = make_grid(n, l).unwrap();
            let s = l / 8.0;
            let h1 = RealField::from_fn(&g, |x, y| 0.5 * (-((x - l / 2.0).powi(2) + (y - l / 2.0).powi(2)) / (s * s)).exp());
            let h2 = RealField::zeros(&g);
            energy_map(&exp_q(&h1, &h2).unwrap())
        };
        let a = make(64, 8.0);
        let b = make(64, 16.0);
        assert!((a - b).abs() < 1e-8 * a, "{a} {b}");
    }

    #[test]
    fn energy_drift_small_over_many_steps() {
        let g = make_grid(32, 8.0).unwrap();
        let u = bump(&g, 0.2);
        let run = smap_evolve(&u, 1e-3, 0.1, 10, Q).unwrap();
        let e0 = run.samples[0].energy;
        for s in &run.samples {
            assert!((s.energy - e0).abs() < 1e-6 * e0);
            assert!(s.sphere_defect < 1e-12);
        }
        assert_eq!(run.trajectory.len(), 11);
    }

    #[test]
    fn frame_checks_and_psi_energy() {
        let g = make_grid(32, 8.0).unwrap();
        let u = bump(&g, 0.5);
        let f = TangentFrame::from_leg(&u, E1).unwrap();
        assert!(f.defect(&u) < 1e-14);
        let gd = derivative_fields(&u, &f).unwrap();
        assert!((gd.energy() - energy_map(&u)).abs() < 1e-8 * energy_map(&u));
        // |ψ_m| = |∂_m u|
        let d1 = u.field().derivative(1);
        for i in 0..g.sites() {
            assert!((gd.psi1.values()[i].norm() - norm(d1.at(i))).abs() < 1e-10);
        }
        let bad = TangentFrame { v: f.w.clone(), w: f.w.clone() };
        assert!(matches!(derivative_fields(&u, &bad), Err(LabError::NotTangent { .. })));
        assert!(matches!(
            TangentFrame::from_leg(&SphereField::constant(&g, E1).unwrap(), E1),
            Err(LabError::DegenerateFrame { .. })
        ));
    }

    #[test]
    fn constant_map_constant_frame() {
        let g = make_grid(16, 4.0).unwrap();
        let u = SphereField::constant(&g, Q).unwrap();
        let f = TangentFrame::from_leg(&u, E1).unwrap();
        let gd = derivative_fields(&u, &f).unwrap();
        assert_eq!(gd.energy(), 0.0);
        assert_eq!(gd.a1.sup_norm() + gd.a2.sup_norm(), 0.0);
        assert_eq!(f.w.at(3), E2);
    }

    #[test]
    fn gauge_covariance() {
        let g = make_grid(128, 16.0).unwrap();
        let u = bump(&g, 0.5);
        let f = TangentFrame::from_leg(&u, E1).unwrap();
        let theta = RealField::from_fn(&g, |x, y| 0.7 * (2.0 * PI * x / 16.0).sin() + 0.3 * (2.0 * PI * y / 16.0).cos());
        let r = f.rotated(&theta);
        assert!(r.defect(&u) < 1e-13);
        let (a, b) = (derivative_fields(&u, &f).unwrap(), derivative_fields(&u, &r).unwrap());
        for m in [1, 2] {
            let phase = theta.map(|t| num_complex::Complex64::from_polar(1.0, -t));
            let expect = &phase * a.psi(m);
            assert!(b.psi(m).max_abs_diff(&expect) < 1e-10);
            let dth = Multiplier::derivative(&g, m).apply_real(&theta);
            let e = b.a(m).max_abs_diff(&(a.a(m) + &dth));
            assert!(e < 1e-10, "{e}");
        }
    }

    #[test]
    fn smap_data_has_requested_size() {
        let g = make_grid(64, 16.0).unwrap();
        let p = EnvelopeProfile::flat(-1, 3);
        let d = smap_data(&g, 0.05, &p, 2.0, 3).unwrap();
        assert!((d.tangent_besov - 0.05).abs() < 1e-12);
        assert!(d.map_besov > 0.0 && (d.map_besov / 0.05 - 1.0).abs() < 0.05, "{}", d.map_besov);
        assert!(d.u0.field().sphere_defect() < 1e-14);
        let z = smap_data(&g, 0.0, &p, 2.0, 3).unwrap();
        assert_eq!(z.u0, SphereField::constant(&g, Q).unwrap());
    }

    #[test]
    fn bump_data_size_and_direction() {
        let g = make_grid(64, 8.0).unwrap();
        let d = bump_data(&g, 0.05, 0.5, 0.3).unwrap();
        assert!((d.tangent_besov - 0.05).abs() < 1e-12);
        // h points along (cos θ, sin θ) everywhere
        for (a, b) in d.h1.values().iter().zip(d.h2.values()) {
            assert!((a * 0.3f64.sin() - b * 0.3f64.cos()).abs() < 1e-15);
        }
        assert!(bump_data(&g, 0.05, 0.0, 0.0).is_err());
    }

    #[test]
    fn envelope_profile_parsing() {
        assert_eq!(EnvelopeProfile::parse("flat:0:3").unwrap(), EnvelopeProfile::flat(0, 3));
        assert_eq!(EnvelopeProfile::parse("geom:-1:2:0.5").unwrap().weights, vec![1.0, 0.5]);
        assert!(EnvelopeProfile::parse("flat:x:3").is_err());
        assert!(EnvelopeProfile::parse("wavy:0:3").is_err());
        assert!(EnvelopeProfile::parse("flat:0:0").is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn exp_q_lands_on_sphere(a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let g = make_grid(16, 4.0).unwrap();
            let h1 = RealField::from_fn(&g, |x, _| a * x.sin());
            let h2 = RealField::from_fn(&g, |_, y| b * y.cos());
            let u = exp_q(&h1, &h2).unwrap();
            prop_assert!(u.field().sphere_defect() < 1e-14);
            let t = u.field().dot(&smap_rhs(&u)).unwrap();
            prop_assert!(t.sup_norm() < 1e-12);
        }
    }
}
