//! Bilinear `L²_{t,x}` norms of band-projected pairs and the slope study
//! of their decay in the band gap.

use num_complex::Complex64;
use serde::Serialize;

use crate::data::band_noise;
use crate::error::{invalid, LabError, Result};
use crate::grid::{make_grid, ComplexField, GridSpec};
use crate::littlewood_paley::{band_multiplier, DyadicRange};
use crate::nls::NlsStepper;
use crate::par;
use crate::spectral::{self, Multiplier};
use crate::trajectory::Trajectory;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BilinearReport {
    pub j: i32,
    pub k: i32,
    /// `‖(P_j u)(P_k v)‖_{L²_{t,x}}`
    pub bilinear_l2: f64,
    /// `‖P_j u₀‖ ‖P_k v₀‖`
    pub normalizer: f64,
    pub ratio_log2: f64,
}

fn check_band(grid: &GridSpec, j: i32) -> Result<()> {
    let r = DyadicRange::for_grid(grid);
    if r.contains(j) {
        Ok(())
    } else {
        Err(LabError::BandOutOfRange {
            j,
            min: r.j_min,
            max: r.j_max,
        })
    }
}

/// Streams `(t, u, v)` samples and integrates `‖(P_j u)(P_k v)‖²_{L²_x}`
/// with the trapezoid rule.
pub struct BilinearAccumulator {
    j: i32,
    k: i32,
    pj: Multiplier,
    pk: Multiplier,
    last: Option<(f64, f64)>,
    integral: f64,
    normalizer: f64,
}

impl BilinearAccumulator {
    pub fn new(grid: &GridSpec, j: i32, k: i32) -> Result<Self> {
        check_band(grid, j)?;
        check_band(grid, k)?;
        Ok(BilinearAccumulator {
            j,
            k,
            pj: band_multiplier(grid, j),
            pk: band_multiplier(grid, k),
            last: None,
            integral: 0.0,
            normalizer: 0.0,
        })
    }

    pub fn push(&mut self, t: f64, u: &ComplexField, v: &ComplexField) -> Result<()> {
        let (a, b) = (self.pj.apply(u), self.pk.apply(v));
        self.push_projected(t, &a, &b)
    }

    /// Same as [`push`](Self::push) for fields already projected.
    pub fn push_projected(&mut self, t: f64, pu: &ComplexField, pv: &ComplexField) -> Result<()> {
        pu.grid().ensure_same(self.pj.grid())?;
        let val = pu.zip_with(pv, |a, b| a * b)?.l2_norm_sq();
        match self.last {
            None => self.normalizer = pu.l2_norm() * pv.l2_norm(),
            Some((t0, v0)) => {
                if t <= t0 {
                    return Err(invalid("t", "sample times must increase"));
                }
                self.integral += 0.5 * (t - t0) * (v0 + val);
            }
        }
        self.last = Some((t, val));
        Ok(())
    }

    pub fn finish(&self) -> BilinearReport {
        let bilinear_l2 = self.integral.sqrt();
        BilinearReport {
            j: self.j,
            k: self.k,
            bilinear_l2,
            normalizer: self.normalizer,
            ratio_log2: (bilinear_l2 / self.normalizer).log2(),
        }
    }
}

/// Trapezoid-in-time `‖(P_j u)(P_k v)‖_{L²_{t,x}}` over aligned trajectories,
/// normalized by the first samples.
pub fn bilinear_norm(
    traj_u: &Trajectory<ComplexField>,
    traj_v: &Trajectory<ComplexField>,
    j: i32,
    k: i32,
) -> Result<BilinearReport> {
    if !traj_u.aligned_with(traj_v) {
        return Err(LabError::MisalignedTimes);
    }
    let Some((_, first)) = traj_u.iter().next() else {
        return Err(invalid("trajectory", "empty"));
    };
    let mut acc = BilinearAccumulator::new(first.grid(), j, k)?;
    for ((t, u), (_, v)) in traj_u.iter().zip(traj_v.iter()) {
        acc.push(t, u, v)?;
    }
    Ok(acc.finish())
}

/// Free-flow bilinear norm at `times` (first time is the normalizing one),
/// computed from the initial spectra without building trajectories.
pub fn free_bilinear(u0: &ComplexField, v0: &ComplexField, j: i32, k: i32, times: &[f64]) -> Result<BilinearReport> {
    u0.grid().ensure_same(v0.grid())?;
    if times.is_empty() {
        return Err(invalid("times", "no sample times"));
    }
    let g = u0.grid();
    let mut acc = BilinearAccumulator::new(g, j, k)?;
    let su = spectral::forward(u0).applied(&acc.pj);
    let sv = spectral::forward(v0).applied(&acc.pk);
    for &t in times {
        let m = Multiplier::schrodinger(g, t);
        let (a, b) = (su.applied(&m).inverse(), sv.applied(&m).inverse());
        acc.push_projected(t, &a, &b)?;
    }
    Ok(acc.finish())
}

/// Least-squares line `y = a x + b`; returns `(a, b)`.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.len() != ys.len() {
        return Err(LabError::LengthMismatch {
            expected: xs.len(),
            got: ys.len(),
        });
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if xs.len() < 2 || sxx <= 0.0 {
        return Err(LabError::DegenerateFit("need at least two distinct abscissae".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let a = sxy / sxx;
    Ok((a, my - a * mx))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Flow {
    Free,
    /// Split-step NLS with coupling `mu`; data scaled to amplitude `eps`.
    Nls { mu: f64, eps: f64, steps_per_sample: usize },
}

#[derive(Clone, Debug, Serialize)]
pub struct SlopeConfig {
    pub n: usize,
    pub length: f64,
    pub j: i32,
    pub gaps: Vec<i32>,
    pub trials: usize,
    /// Time samples per window.
    pub samples: usize,
    /// The window for band `k` is `[0, time_factor·2^{−k}]`.
    pub time_factor: f64,
    /// Width of the Gaussian windows localizing the random data.
    pub window: f64,
    pub seed: u64,
    pub flow: Flow,
}

impl SlopeConfig {
    pub fn validate(&self) -> Result<()> {
        let mut gaps = self.gaps.clone();
        gaps.sort_unstable();
        gaps.dedup();
        if gaps.len() < 2 {
            return Err(LabError::DegenerateFit(format!("{} distinct gap(s)", gaps.len())));
        }
        if self.trials == 0 || self.samples < 2 {
            return Err(invalid("trials/samples", "need at least one trial and two samples"));
        }
        if !(self.time_factor > 0.0 && self.window > 0.0) {
            return Err(invalid("time_factor/window", "must be positive"));
        }
        if let Flow::Nls { steps_per_sample, .. } = self.flow {
            if steps_per_sample == 0 {
                return Err(invalid("steps_per_sample", "must be positive"));
            }
        }
        let g = make_grid(self.n, self.length)?;
        check_band(&g, self.j)?;
        for k in &self.gaps {
            check_band(&g, self.j + k)?;
        }
        Ok(())
    }

    pub fn window_end(&self, k: i32) -> f64 {
        self.time_factor * 2f64.powi(-k)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SlopeStudy {
    pub config: SlopeConfig,
    /// `(trial, report)` for every trial and gap.
    pub reports: Vec<(usize, BilinearReport)>,
    /// Fit over all points.
    pub slope: f64,
    pub intercept: f64,
    pub trial_slopes: Vec<f64>,
    /// `log₂` ratio of the norm over `1.5×` the window to the norm over the
    /// window, per report; near zero when the interaction has finished.
    pub saturation_log2: Vec<f64>,
}

fn trial_data(cfg: &SlopeConfig, g: &GridSpec, trial: usize, k: i32) -> Result<(ComplexField, ComplexField)> {
    let amp = match cfg.flow {
        Flow::Free => 1.0,
        Flow::Nls { eps, .. } => eps,
    };
    let s = Complex64::new(amp, 0.0);
    let stream = (trial as u64) << 8 | (k - cfg.j) as u64;
    let u = band_noise(g, cfg.seed, 2 * stream, cfg.j, cfg.window)?.scale(s);
    let v = band_noise(g, cfg.seed, 2 * stream + 1, k, cfg.window)?.scale(s);
    Ok((u, v))
}

/// Runs one pair over `[0, extent·T_k]` and returns the reports at the
/// window end and at the extended end.
fn run_pair(cfg: &SlopeConfig, g: &GridSpec, u0: &ComplexField, v0: &ComplexField, k: i32) -> Result<(BilinearReport, BilinearReport)> {
    let t_end = cfg.window_end(k);
    let dt = t_end / (cfg.samples - 1) as f64;
    let extra = cfg.samples.div_ceil(2);
    let total = cfg.samples + extra;
    let times: Vec<f64> = (0..total).map(|i| i as f64 * dt).collect();
    let mut acc = BilinearAccumulator::new(g, cfg.j, k)?;
    let mut at_window = None;
    match cfg.flow {
        Flow::Free => {
            let su = spectral::forward(u0).applied(&acc.pj);
            let sv = spectral::forward(v0).applied(&acc.pk);
            for (i, &t) in times.iter().enumerate() {
                let m = Multiplier::schrodinger(g, t);
                acc.push_projected(t, &su.applied(&m).inverse(), &sv.applied(&m).inverse())?;
                if i + 1 == cfg.samples {
                    at_window = Some(acc.finish());
                }
            }
        }
        Flow::Nls { mu, steps_per_sample, .. } => {
            // No dealiasing: the mask would cut into the top band.
            let stepper = NlsStepper::new(g, dt / steps_per_sample as f64, mu, false)?;
            let (mut u, mut v) = (u0.clone(), v0.clone());
            for (i, &t) in times.iter().enumerate() {
                if i > 0 {
                    for _ in 0..steps_per_sample {
                        u = stepper.step(&u);
                        v = stepper.step(&v);
                    }
                    if !(u.is_finite() && v.is_finite()) {
                        return Err(LabError::BlowUp { t });
                    }
                }
                acc.push(t, &u, &v)?;
                if i + 1 == cfg.samples {
                    at_window = Some(acc.finish());
                }
            }
        }
    }
    Ok((at_window.expect("samples ≥ 2"), acc.finish()))
}

/// Bilinear norms for `P_j u` against `P_{j+gap} v` over random localized
/// band data, and the least-squares slope of `ratio_log2` against the gap.
pub fn bilinear_slope_study(cfg: &SlopeConfig) -> Result<SlopeStudy> {
    cfg.validate()?;
    let g = make_grid(cfg.n, cfg.length)?;
    let jobs: Vec<(usize, i32)> = (0..cfg.trials)
        .flat_map(|t| cfg.gaps.iter().map(move |&gap| (t, gap)))
        .collect();
    let out: Vec<Result<(usize, BilinearReport, f64)>> = par::map_jobs(&jobs, |&(trial, gap)| {
        let k = cfg.j + gap;
        let (u0, v0) = trial_data(cfg, &g, trial, k)?;
        let (a, b) = run_pair(cfg, &g, &u0, &v0, k)?;
        Ok((trial, a.clone(), (b.bilinear_l2 / a.bilinear_l2).log2()))
    });
    let mut reports = Vec::new();
    let mut saturation_log2 = Vec::new();
    for r in out {
        let (t, rep, s) = r?;
        reports.push((t, rep));
        saturation_log2.push(s);
    }
    let xs: Vec<f64> = reports.iter().map(|(_, r)| (r.k - r.j) as f64).collect();
    let ys: Vec<f64> = reports.iter().map(|(_, r)| r.ratio_log2).collect();
    let (slope, intercept) = fit_slope(&xs, &ys)?;
    let trial_slopes = (0..cfg.trials)
        .map(|t| {
            let (x, y): (Vec<f64>, Vec<f64>) = reports
                .iter()
                .filter(|(tt, _)| *tt == t)
                .map(|(_, r)| ((r.k - r.j) as f64, r.ratio_log2))
                .unzip();
            fit_slope(&x, &y).map(|f| f.0)
        })
        .collect::<Result<_>>()?;
    Ok(SlopeStudy {
        config: cfg.clone(),
        reports,
        slope,
        intercept,
        trial_slopes,
        saturation_log2,
    })
}
