//! Harmonic-map heat flow into S² by second-order exponential time
//! differencing on a geometric heat-time grid.

use serde::Serialize;

use crate::error::{invalid, LabError, Result};
use crate::grid::GridSpec;
use crate::spectral::{real_gradient, Multiplier};
use crate::sphere::{energy_map, SphereField, VectorField};

#[derive(Clone, Debug, Serialize)]
pub struct HeatConfig {
    /// First heat-time step.
    pub ds0: f64,
    /// Ratio between consecutive steps.
    pub growth: f64,
    /// Stop once `sup_x |z − mean z| < tol_q`.
    pub tol_q: f64,
    /// Give up past this heat time.
    pub s_cap: f64,
    /// Largest number of interval halvings after an energy increase.
    pub max_halvings: u32,
}

impl Default for HeatConfig {
    fn default() -> Self {
        HeatConfig {
            ds0: 1e-3,
            growth: 1.1,
            tol_q: 1e-6,
            s_cap: 1e4,
            max_halvings: 12,
        }
    }
}

impl HeatConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ds0 > 0.0 && self.ds0.is_finite()) {
            return Err(invalid("ds0", "must be positive"));
        }
        if !(self.growth >= 1.0 && self.growth.is_finite()) {
            return Err(invalid("growth", "must be at least 1"));
        }
        if !(self.tol_q > 0.0) {
            return Err(invalid("tol_q", "must be positive"));
        }
        if !(self.s_cap > 0.0) {
            return Err(invalid("s_cap", "must be positive"));
        }
        Ok(())
    }

    /// The same schedule with every interval split in two.
    pub fn refined(&self) -> Self {
        HeatConfig {
            ds0: self.ds0 / (1.0 + self.growth.sqrt()),
            growth: self.growth.sqrt(),
            ..self.clone()
        }
    }
}

/// `s_0 = 0, s_{n+1} = s_n + ds0·growthⁿ` up to the first point ≥ `s_end`.
pub fn geometric_grid(ds0: f64, growth: f64, s_end: f64) -> Vec<f64> {
    let mut s = vec![0.0];
    let mut h = ds0;
    while *s.last().unwrap() < s_end {
        let next = s.last().unwrap() + h;
        s.push(next);
        h *= growth;
    }
    s
}

/// `|∇z|² z`, the normal part removed from `Δz`.
fn normal_term(z: &VectorField) -> VectorField {
    let g = z.grid();
    let mut dens = vec![0.0; g.sites()];
    for c in z.components() {
        let (a, b) = real_gradient(c);
        for (d, (x, y)) in dens.iter_mut().zip(a.values().iter().zip(b.values())) {
            *d += x * x + y * y;
        }
    }
    let pts = (0..g.sites())
        .map(|i| {
            let p = z.at(i);
            [dens[i] * p[0], dens[i] * p[1], dens[i] * p[2]]
        })
        .collect();
    VectorField::from_points(g, pts)
}

/// `Δz + |∇z|² z`, tangent to the sphere at `z`.
pub fn heat_rhs(z: &SphereField) -> VectorField {
    z.field().laplacian().axpy(1.0, &normal_term(z.field()))
}

pub fn heat_rhs_checked(z: &VectorField) -> Result<VectorField> {
    Ok(heat_rhs(&SphereField::new(z.clone())?))
}

fn phi1(x: f64) -> f64 {
    if x.abs() < 1e-5 {
        1.0 + x / 2.0 + x * x / 6.0
    } else {
        x.exp_m1() / x
    }
}

fn phi2(x: f64) -> f64 {
    if x.abs() < 1e-3 {
        0.5 + x / 6.0 + x * x / 24.0 + x * x * x / 120.0
    } else {
        (x.exp_m1() - x) / (x * x)
    }
}

struct EtdPlan {
    e: Multiplier,
    p1: Multiplier,
    p2: Multiplier,
}

impl EtdPlan {
    fn new(g: &GridSpec, h: f64) -> Self {
        let m = |f: fn(f64) -> f64| Multiplier::real(g, |a, b| h * f(-h * (a * a + b * b))).expect("finite");
        EtdPlan {
            e: Multiplier::heat(g, h).expect("h ≥ 0"),
            p1: m(phi1),
            p2: m(phi2),
        }
    }

    /// Cox–Matthews ETD2: `a = e^{hΔ}z + hφ₁N(z)`, then
    /// `z' = a + hφ₂(N(a) − N(z))`, projected back to the sphere.
    fn step(&self, z: &VectorField) -> Result<SphereField> {
        let nz = normal_term(z);
        let a = z.apply(&self.e).axpy(1.0, &nz.apply(&self.p1));
        let na = normal_term(&a);
        let out = a.axpy(1.0, &na.axpy(-1.0, &nz).apply(&self.p2));
        if !out.is_finite() {
            return Err(LabError::NonFinite("heat step"));
        }
        SphereField::normalize(&out)
    }
}

/// `sup_x |z(x) − mean z|`.
pub fn distance_to_constant(z: &SphereField) -> f64 {
    z.field().sup_distance(z.field().mean())
}

#[derive(Clone, Debug)]
pub struct HeatTrajectory {
    pub s_grid: Vec<f64>,
    pub z: Vec<SphereField>,
    /// `∂_s z = Δz + |∇z|²z` at each grid point.
    pub zs: Vec<VectorField>,
    pub energies: Vec<f64>,
    pub halvings: usize,
}

impl HeatTrajectory {
    pub fn s_max(&self) -> f64 {
        *self.s_grid.last().unwrap()
    }

    pub fn terminal(&self) -> &SphereField {
        self.z.last().unwrap()
    }

    pub fn terminal_distance(&self) -> f64 {
        distance_to_constant(self.terminal())
    }

    pub fn len(&self) -> usize {
        self.s_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s_grid.is_empty()
    }

    /// Largest `E(s_{n+1}) − E(s_n)` (nonpositive for an accepted run up to roundoff).
    pub fn worst_energy_increase(&self) -> f64 {
        self.energies.windows(2).map(|e| e[1] - e[0]).fold(f64::NEG_INFINITY, f64::max)
    }
}

fn energy_ok(old: f64, new: f64) -> bool {
    new <= old + 1e-12 * old.max(f64::MIN_POSITIVE)
}

/// Advances over one interval, splitting it on energy increase.
fn advance(z: &SphereField, s: f64, h: f64, depth: u32, max: u32, halvings: &mut usize) -> Result<SphereField> {
    let e0 = energy_map(z);
    let next = EtdPlan::new(z.grid(), h).step(z.field())?;
    if energy_ok(e0, energy_map(&next)) {
        return Ok(next);
    }
    if depth >= max {
        return Err(LabError::EnergyIncrease { s, halvings: depth });
    }
    *halvings += 1;
    let mid = advance(z, s, h / 2.0, depth + 1, max, halvings)?;
    advance(&mid, s + h / 2.0, h / 2.0, depth + 1, max, halvings)
}

struct Recorder {
    traj: HeatTrajectory,
}

impl Recorder {
    fn new(z0: &SphereField) -> Self {
        Recorder {
            traj: HeatTrajectory {
                s_grid: vec![0.0],
                zs: vec![heat_rhs(z0)],
                energies: vec![energy_map(z0)],
                z: vec![z0.clone()],
                halvings: 0,
            },
        }
    }

    fn push(&mut self, s: f64, z: SphereField) {
        self.traj.zs.push(heat_rhs(&z));
        self.traj.energies.push(energy_map(&z));
        self.traj.s_grid.push(s);
        self.traj.z.push(z);
    }
}

/// Runs the flow on the geometric grid of `cfg` until the map is within
/// `tol_q` of a constant (at least one step is taken).
pub fn heat_evolve(z0: &SphereField, cfg: &HeatConfig) -> Result<HeatTrajectory> {
    cfg.validate()?;
    let mut rec = Recorder::new(z0);
    let mut z = z0.clone();
    let (mut s, mut h) = (0.0, cfg.ds0);
    loop {
        z = advance(&z, s, h, 0, cfg.max_halvings, &mut rec.traj.halvings)?;
        s += h;
        h *= cfg.growth;
        let d = distance_to_constant(&z);
        rec.push(s, z.clone());
        if d < cfg.tol_q {
            return Ok(rec.traj);
        }
        if s > cfg.s_cap {
            return Err(LabError::HeatNotConverged { s, sup_dist: d });
        }
    }
}

/// Runs the flow on a prescribed grid (starting at 0), without a
/// termination test.
pub fn heat_evolve_on_grid(z0: &SphereField, s_grid: &[f64], max_halvings: u32) -> Result<HeatTrajectory> {
    if s_grid.first() != Some(&0.0) || s_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("s_grid", "must start at 0 and increase"));
    }
    let mut rec = Recorder::new(z0);
    let mut z = z0.clone();
    for w in s_grid.windows(2) {
        z = advance(&z, w[0], w[1] - w[0], 0, max_halvings, &mut rec.traj.halvings)?;
        rec.push(w[1], z.clone());
    }
    Ok(rec.traj)
}

/// `L²` distance between `z(s)` and the linear heat flow of `z₀ − Q`
/// placed at `Q`, for each `s` of the trajectory.
pub fn linearized_deviation(traj: &HeatTrajectory, q: [f64; 3]) -> Vec<f64> {
    let z0 = traj.z[0].field();
    let d0 = z0.map(|a| [a[0] - q[0], a[1] - q[1], a[2] - q[2]]);
    traj.s_grid
        .iter()
        .zip(&traj.z)
        .map(|(&s, z)| {
            let lin = d0.apply(&Multiplier::heat(z0.grid(), s).expect("s ≥ 0"));
            let diff = z.field().zip(&lin, |a, b| [a[0] - q[0] - b[0], a[1] - q[1] - b[1], a[2] - q[2] - b[2]]);
            diff.expect("same grid").l2_norm()
        })
        .collect()
}

/// Largest `|z·∂_s z|` along the trajectory (tangency of the flow).
pub fn worst_normal_velocity(traj: &HeatTrajectory) -> f64 {
    traj.z
        .iter()
        .zip(&traj.zs)
        .map(|(z, v)| z.field().dot(v).expect("same grid").sup_norm() / (1.0 + v.sup_norm()))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, RealField};
    use crate::sphere::{exp_q, Q};
    use std::f64::consts::PI;

    fn small_map(g: &GridSpec, eps: f64) -> SphereField {
        let l = g.length();
        let k = 2.0 * PI / l;
        let h1 = RealField::from_fn(g, |x, y| eps * ((k * x).sin() + 0.5 * (k * y).cos()));
        let h2 = RealField::from_fn(g, |x, y| eps * 0.7 * (k * (x + y)).cos());
        exp_q(&h1, &h2).unwrap()
    }

    #[test]
    fn constant_map_is_fixed() {
        let g = make_grid(16, 2.0 * PI).unwrap();
        let z = SphereField::constant(&g, Q).unwrap();
        assert_eq!(heat_rhs(&z).sup_norm(), 0.0);
        let t = heat_evolve(&z, &HeatConfig::default()).unwrap();
        assert_eq!(t.len(), 2);
        assert!(t.terminal().field().max_abs_diff(z.field()) < 1e-12);
    }

    #[test]
    fn rhs_tangent_and_linearizes_to_heat() {
        let g = make_grid(32, 2.0 * PI).unwrap();
        let mut errs = vec![];
        for eps in [1e-2, 5e-3] {
            let z = small_map(&g, eps);
            let r = heat_rhs(&z);
            assert!(z.field().dot(&r).unwrap().sup_norm() < 1e-12);
            // Tangent part at Q linearizes to Δh.
            let h1 = RealField::from_fn(&g, |x, y| eps * (x.sin() + 0.5 * y.cos()));
            let lap = Multiplier::laplacian(&g).apply_real(&h1);
            errs.push(r.component(0).max_abs_diff(&lap));
        }
        assert!(errs[0] / errs[1] > 3.6, "{errs:?}");
    }

    #[test]
    fn phi_functions_continuous() {
        for x in [-1e-3, -1.1e-3, -1e-5, -1.1e-5, -2.0] {
            let e1 = f64::exp_m1(x) / x;
            assert!((phi1(x) - e1).abs() < 1e-12);
        }
        assert!((phi2(-0.999e-3) - phi2(-1.001e-3)).abs() < 1e-6);
        assert!((phi2(-2.0) - ((-2.0f64).exp() - 1.0 + 2.0) / 4.0).abs() < 1e-15);
    }

    #[test]
    fn energy_decreases_and_flow_settles() {
        let g = make_grid(32, 2.0 * PI).unwrap();
        let z = small_map(&g, 0.3);
        let t = heat_evolve(&z, &HeatConfig::default()).unwrap();
        assert!(t.worst_energy_increase() <= 1e-12 * t.energies[0]);
        assert!(t.terminal_distance() < 1e-6);
        assert!(worst_normal_velocity(&t) < 1e-12);
        for z in &t.z {
            assert!(z.field().sphere_defect() < 1e-12);
        }
    }

    #[test]
    fn small_data_follow_linear_heat() {
        let g = make_grid(32, 2.0 * PI).unwrap();
        let mut worst = vec![];
        for eps in [1e-2, 2e-2] {
            let t = heat_evolve(&small_map(&g, eps), &HeatConfig::default()).unwrap();
            worst.push(linearized_deviation(&t, Q).into_iter().fold(0.0, f64::max) / (eps * eps));
        }
        assert!(worst.iter().all(|w| *w < 10.0), "{worst:?}");
        assert!((worst[0] / worst[1] - 1.0).abs() < 0.2, "quadratic in eps: {worst:?}");
    }

    #[test]
    fn geometric_grid_shape() {
        let s = geometric_grid(0.1, 2.0, 1.0);
        assert_eq!(s, vec![0.0, 0.1, 0.30000000000000004, 0.7000000000000001, 1.5]);
        let c = HeatConfig::default().refined();
        let fine = geometric_grid(c.ds0, c.growth, 1.0);
        let coarse = geometric_grid(1e-3, 1.1, 1.0);
        // Every other fine point lands on a coarse point.
        for (i, s) in coarse.iter().enumerate().take(20) {
            assert!((fine[2 * i] - s).abs() < 1e-12 * (1.0 + s));
        }
    }

    #[test]
    fn fixed_grid_matches_adaptive_run() {
        let g = make_grid(32, 2.0 * PI).unwrap();
        let z = small_map(&g, 0.2);
        let a = heat_evolve(&z, &HeatConfig::default()).unwrap();
        let b = heat_evolve_on_grid(&z, &a.s_grid, 12).unwrap();
        assert!(a.terminal().field().max_abs_diff(b.terminal().field()) < 1e-13);
        assert!(heat_evolve_on_grid(&z, &[0.0, 0.0], 1).is_err());
    }
}
