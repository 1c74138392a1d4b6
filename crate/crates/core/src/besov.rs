//! Besov norms, frequency envelopes and the Bernstein ratio.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};
use crate::grid::ComplexField;
use crate::littlewood_paley::{band_l2_norms_spectrum, project_spectrum, DyadicRange};
use crate::spectral;

/// Smoothness `s`, summability `p` over bands and spatial exponent `q`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BesovParams {
    pub s: f64,
    pub p: f64,
    pub q: f64,
}

impl BesovParams {
    pub fn new(s: f64, p: f64, q: f64) -> Result<Self> {
        let b = BesovParams { s, p, q };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.s.is_finite() {
            return Err(invalid("s", "smoothness must be finite"));
        }
        if !(self.p >= 1.0) {
            return Err(invalid("p", format!("{} not in [1, ∞]", self.p)));
        }
        if !(self.q >= 1.0) {
            return Err(invalid("q", format!("{} not in [1, ∞]", self.q)));
        }
        Ok(())
    }
}

/// Per-band `L^q` norms of `P_j f` over `range`.
pub fn band_norms(f: &ComplexField, q: f64, range: &DyadicRange) -> Vec<f64> {
    let s = spectral::forward(f);
    if q == 2.0 {
        return band_l2_norms_spectrum(&s, range);
    }
    let bands: Vec<i32> = range.bands().collect();
    crate::par::map_jobs(&bands, |&j| project_spectrum(&s, j).lp_norm(q))
}

/// `(Σ_j 2^{jps} b_j^p)^{1/p}`, sup over `j` when `p = ∞`.
pub fn combine(first_band: i32, norms: &[f64], s: f64, p: f64) -> f64 {
    let weighted = norms
        .iter()
        .enumerate()
        .map(|(i, b)| 2f64.powf((first_band + i as i32) as f64 * s) * b);
    if p.is_infinite() {
        weighted.fold(0.0, f64::max)
    } else {
        weighted.map(|w| w.powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

pub fn besov_norm(f: &ComplexField, params: BesovParams, range: &DyadicRange) -> Result<f64> {
    params.validate()?;
    let b = band_norms(f, params.q, range);
    Ok(combine(range.j_min, &b, params.s, params.p))
}

/// Per-band breakdown of a Besov norm plus the share of `L²` energy in
/// bands that reach past the Nyquist frequency.
#[derive(Clone, Debug, Serialize)]
pub struct BesovReport {
    pub params: BesovParams,
    pub bands: Vec<i32>,
    pub per_band_norms: Vec<f64>,
    pub besov_norm: f64,
    pub tail_fraction: f64,
    pub tail_flagged: bool,
}

/// Tail share above which a report is flagged.
pub const TAIL_TOLERANCE: f64 = 1e-10;

pub fn besov_report(f: &ComplexField, params: BesovParams, range: &DyadicRange) -> Result<BesovReport> {
    params.validate()?;
    let norms = band_norms(f, params.q, range);
    let full = DyadicRange::for_grid(f.grid());
    let resolved = DyadicRange::resolved_max(f.grid());
    let l2 = band_l2_norms_spectrum(&spectral::forward(f), &full);
    let total: f64 = l2.iter().map(|b| b * b).sum();
    let tail: f64 = full
        .bands()
        .zip(&l2)
        .filter(|(j, _)| *j > resolved)
        .map(|(_, b)| b * b)
        .sum();
    let tail_fraction = if total > 0.0 { tail / total } else { 0.0 };
    Ok(BesovReport {
        params,
        bands: range.bands().collect(),
        besov_norm: combine(range.j_min, &norms, params.s, params.p),
        per_band_norms: norms,
        tail_fraction,
        tail_flagged: tail_fraction > TAIL_TOLERANCE,
    })
}

/// Slowly varying majorant `v_k = sup_j 2^{-δ|k-j|} 2^{jσ} b_j`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Envelope {
    pub delta: f64,
    pub sigma: i32,
    pub first_band: i32,
    pub values: Vec<f64>,
}

pub const DEFAULT_DELTA: f64 = 0.25;

pub fn frequency_envelope(first_band: i32, band_norms: &[f64], delta: f64, sigma: i32) -> Result<Envelope> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(invalid("delta", "slack exponent must be positive"));
    }
    if !(0..=3).contains(&sigma) {
        return Err(invalid("sigma", "weight must be 0, 1, 2 or 3"));
    }
    if band_norms.iter().any(|b| !b.is_finite() || *b < 0.0) {
        return Err(LabError::NonFinite("band norms"));
    }
    let n = band_norms.len();
    let weighted: Vec<f64> = band_norms
        .iter()
        .enumerate()
        .map(|(i, b)| 2f64.powi((first_band + i as i32) * sigma) * b)
        .collect();
    let values = (0..n)
        .map(|k| {
            (0..n)
                .map(|j| 2f64.powf(-delta * (k as f64 - j as f64).abs()) * weighted[j])
                .fold(0.0, f64::max)
        })
        .collect();
    Ok(Envelope {
        delta,
        sigma,
        first_band,
        values,
    })
}

impl Envelope {
    pub fn value(&self, k: i32) -> Option<f64> {
        let i = k - self.first_band;
        (i >= 0).then(|| self.values.get(i as usize).copied()).flatten()
    }

    /// Largest `v_k / (2^{δ|k-ℓ|} v_ℓ)` over all pairs (≤ 1 for an envelope).
    pub fn worst_inequality_ratio(&self) -> f64 {
        let n = self.values.len();
        let mut worst = 0.0f64;
        for k in 0..n {
            for l in 0..n {
                let bound = 2f64.powf(self.delta * (k as f64 - l as f64).abs()) * self.values[l];
                if self.values[k] > 0.0 {
                    worst = worst.max(if bound > 0.0 { self.values[k] / bound } else { f64::INFINITY });
                }
            }
        }
        worst
    }
}

/// `‖f‖_{L⁴} / (2^{j/2} ‖f‖_{L²})` for a field concentrated in band `j`.
pub fn bernstein_ratio(f: &ComplexField, j: i32) -> Result<f64> {
    let l2 = f.l2_norm();
    if l2 == 0.0 {
        return Err(invalid("f", "Bernstein ratio of the zero field"));
    }
    Ok(f.lp_norm(4.0) / (2f64.powf(0.5 * j as f64) * l2))
}

/// Uniform Bernstein constant for band-limited fields on grids with
/// `L·2^j ≥ 4π`. The most concentrated band-`j` function, `P_j δ`, has
/// ratio `‖ψ̌‖₄/‖ψ̌‖₂ ≈ 0.612` (scale free); random band-limited fields sit
/// well below it.
pub const BERNSTEIN_CONSTANT: f64 = 0.75;
