//! Dispatch of parsed runs to the solvers, and artifact emission.

use std::path::Path;
use std::time::Instant;

use num_complex::Complex64;
use serde::Serialize;

use crate::besov::{besov_report, frequency_envelope, BesovParams, Envelope};
use crate::bilinear::{bilinear_slope_study, Flow, SlopeConfig};
use crate::caloric::{
    band_decay_exponents, caloric_frame, gauge_fields_along_s, gauged_profile, profile_band_drift, psi_band_norms, verify_a_integral,
    BandDecay,
};
use crate::config::{
    parse_pair, parse_vec3, BesovArgs, BilinearArgs, CaloricArgs, Command, Emit, FieldArgs, FieldData, FlowKind, HeatArgs,
    HeatParams, MapArgs, MapData, MorawetzArgs, NlsArgs, RunConfig, SmapArgs,
};
use crate::data::{band_noise, dyadic_bands, dyadic_sum, gaussian};
use crate::error::{LabError, Result};
use crate::gauged::{gauged_residual_study, GaugedConfig, GaugedStudy};
use crate::grid::{make_grid, ComplexField};
use crate::heat::{distance_to_constant, heat_evolve, HeatConfig};
use crate::littlewood_paley::{band_l2_norms, DyadicRange};
use crate::morawetz::verify_morawetz_identity;
use crate::nls::{conservation_drift, hamiltonian, mass, nls_visit, NlsConfig, NlsSample};
use crate::report::{num, to_json, write_atomic, Check, Csv, RunReport};
use crate::snapshot;
use crate::sphere::{
    bump_data, derivative_fields, energy_map, exp_q, smap_data, GaugeData, smap_visit, sup_distance_to_q, EnvelopeProfile, SphereField, E1, Q,
};

fn cfg_err(e: crate::config::ConfigError) -> LabError {
    LabError::Config(e.to_string())
}

/// Collects artifacts for one run directory.
struct Sink<'a> {
    dir: &'a Path,
    report: RunReport,
}

impl Sink<'_> {
    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(self.dir, name, bytes)?;
        self.report.artifacts.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, v: &T) -> Result<()> {
        self.write(name, &to_json(v)?)
    }
}

/// Executes a run, writing `report.json`, `timing.json` and the
/// subcommand's CSV/JSON artifacts into `cfg.out_dir`.
pub fn run(cfg: &RunConfig) -> Result<RunReport> {
    let start = Instant::now();
    let config = serde_json::to_value(&cfg.command)?;
    let mut sink = Sink {
        dir: &cfg.out_dir,
        report: RunReport::new(cfg.command.name(), config),
    };
    match &cfg.command {
        Command::Besov(a) => besov(a, &mut sink)?,
        Command::NlsRun(a) => nls_run(a, &mut sink)?,
        Command::SmapRun(a) => smap_run(a, &mut sink)?,
        Command::Heatflow(a) => heatflow(a, &mut sink)?,
        Command::CaloricGauge(a) => caloric(a, &mut sink)?,
        Command::Morawetz(a) => morawetz(a, &mut sink)?,
        Command::BilinearVerify(a) => bilinear(a, &mut sink)?,
    }
    sink.report.artifacts.push("timing.json".into());
    sink.report.artifacts.push("report.json".into());
    #[derive(Serialize)]
    struct Timing {
        wall_clock_seconds: f64,
        parallel: bool,
    }
    write_atomic(
        &cfg.out_dir,
        "timing.json",
        &to_json(&Timing {
            wall_clock_seconds: start.elapsed().as_secs_f64(),
            parallel: crate::par::is_parallel(),
        })?,
    )?;
    write_atomic(&cfg.out_dir, "report.json", &to_json(&sink.report)?)?;
    Ok(sink.report)
}

fn field_data(f: &FieldArgs, seed: u64) -> Result<ComplexField> {
    if f.data == FieldData::File {
        let path = f.input.as_ref().ok_or_else(|| LabError::Config("--data file needs --input".into()))?;
        return snapshot::load(path);
    }
    let g = make_grid(f.grid_n, f.grid_len)?;
    let c = (f.grid_len / 2.0, f.grid_len / 2.0);
    match f.data {
        FieldData::Gaussian => Ok(gaussian(&g, c, f.sigma, f.eps, (0.0, 0.0))),
        FieldData::DyadicSum => dyadic_sum(&g, c, f.eps, dyadic_bands(&g, f.band, f.dyadic_half_width)),
        FieldData::BandNoise => Ok(band_noise(&g, seed, 0, f.band, f.window)?.scale(Complex64::new(f.eps, 0.0))),
        FieldData::File => unreachable!(),
    }
}

fn band_header(prefix: &str, range: &DyadicRange) -> Vec<String> {
    range.bands().map(|j| format!("{prefix}{j}")).collect()
}

#[derive(Serialize)]
struct BesovOut<'a> {
    bands: &'a [i32],
    per_band_norms: &'a [f64],
    besov_norm: f64,
    params: BesovParams,
    envelope: Envelope,
    tail_fraction: f64,
}

fn besov(a: &BesovArgs, sink: &mut Sink) -> Result<()> {
    let f = field_data(&a.field, a.common.seed)?;
    let range = DyadicRange::for_grid(f.grid());
    let params = BesovParams::new(a.s, a.p, a.q)?;
    let r = besov_report(&f, params, &range)?;
    let env = frequency_envelope(range.j_min, &band_l2_norms(&f, &range), a.delta, a.envelope_sigma)?;
    sink.report
        .check(Check::at_most("envelope_inequality", env.worst_inequality_ratio(), 1.0 + 1e-12));
    sink.report
        .check(Check::at_most("tail_fraction", r.tail_fraction, crate::besov::TAIL_TOLERANCE));
    sink.json(
        "besov.json",
        &BesovOut {
            bands: &r.bands,
            per_band_norms: &r.per_band_norms,
            besov_norm: r.besov_norm,
            params,
            envelope: env,
            tail_fraction: r.tail_fraction,
        },
    )
}

#[derive(Serialize)]
struct NlsSummary {
    dt_used: f64,
    samples: usize,
    mass_drift: f64,
    hamiltonian_drift: f64,
    final_mass: f64,
    final_hamiltonian: f64,
    bands: Vec<i32>,
    final_band_norms: Vec<f64>,
}

fn nls_run(a: &NlsArgs, sink: &mut Sink) -> Result<()> {
    let u0 = field_data(&a.field, a.common.seed)?;
    let g = u0.grid().clone();
    let range = DyadicRange::for_grid(&g);
    let mut cfg = NlsConfig::new(g, a.mu, a.dt, a.t_end)?.with_stride(a.sample_every);
    cfg.dealias = a.dealias;
    let mut header = vec!["t".to_string(), "mass".into(), "hamiltonian".into()];
    header.extend(band_header("band_", &range));
    let mut csv = Csv::new(header);
    let mut samples = Vec::new();
    let mut last_bands = Vec::new();
    let dt_used = nls_visit(&u0, &cfg, |t, u| {
        let s = NlsSample {
            t,
            mass: mass(u),
            hamiltonian: hamiltonian(u, a.mu),
        };
        last_bands = band_l2_norms(u, &range);
        let mut row = vec![t, s.mass, s.hamiltonian];
        row.extend(&last_bands);
        csv.row(&row);
        samples.push(s);
        Ok(())
    })?;
    let (dm, dh) = conservation_drift(&samples);
    sink.report.check(Check::at_most("mass_drift", dm, a.tol_mass));
    sink.report.check(Check::at_most("hamiltonian_drift", dh, a.tol_hamiltonian));
    if a.emit.contains(&Emit::Csv) {
        sink.write("nls.csv", &csv.to_bytes())?;
    }
    if a.emit.contains(&Emit::Json) {
        let last = samples.last().expect("at least the initial sample");
        sink.json(
            "nls.json",
            &NlsSummary {
                dt_used,
                samples: samples.len(),
                mass_drift: dm,
                hamiltonian_drift: dh,
                final_mass: last.mass,
                final_hamiltonian: last.hamiltonian,
                bands: range.bands().collect(),
                final_band_norms: last_bands,
            },
        )?;
    }
    Ok(())
}

fn heat_config(h: &HeatParams, default_refine: u32) -> Result<HeatConfig> {
    let mut c = HeatConfig {
        ds0: h.ds0,
        growth: h.growth,
        tol_q: h.tol_q,
        s_cap: h.s_cap,
        ..HeatConfig::default()
    };
    c.validate()?;
    for _ in 0..h.refine.unwrap_or(default_refine) {
        c = c.refined();
    }
    Ok(c)
}

#[derive(Serialize)]
struct MapDataSummary {
    tangent_besov: Option<f64>,
    map_besov: f64,
    energy: f64,
}

fn map_data(m: &MapArgs) -> Result<(SphereField, MapDataSummary)> {
    match m.data {
        MapData::Envelope => {
            let g = make_grid(m.grid_n, m.grid_len)?;
            let profile = EnvelopeProfile::parse(&m.envelope_profile)?;
            let d = smap_data(&g, m.epsilon, &profile, m.window, m.common.seed)?;
            let s = MapDataSummary {
                tangent_besov: Some(d.tangent_besov),
                map_besov: d.map_besov,
                energy: energy_map(&d.u0),
            };
            Ok((d.u0, s))
        }
        MapData::Bump => {
            let g = make_grid(m.grid_n, m.grid_len)?;
            let d = bump_data(&g, m.epsilon, m.bump_sigma, m.bump_angle)?;
            let s = MapDataSummary {
                tangent_besov: Some(d.tangent_besov),
                map_besov: d.map_besov,
                energy: energy_map(&d.u0),
            };
            Ok((d.u0, s))
        }
        MapData::File => {
            let path = m.input.as_ref().ok_or_else(|| LabError::Config("--data file needs --input".into()))?;
            let h = snapshot::load(path)?;
            let u = exp_q(&h.re(), &h.im())?;
            let s = MapDataSummary {
                tangent_besov: Some(crate::sphere::tangent_besov(&h.re(), &h.im())),
                map_besov: crate::sphere::map_besov(&u, Q),
                energy: energy_map(&u),
            };
            Ok((u, s))
        }
    }
}

/// `‖P_k ψ_x‖` per band in the caloric gauge at `s = 0`.
fn caloric_fields(u: &SphereField, heat: &HeatConfig) -> Result<GaugeData> {
    let traj = heat_evolve(u, heat)?;
    let gauge = caloric_frame(&traj, E1, heat.tol_q)?;
    derivative_fields(u, gauge.at_zero())
}

#[derive(Serialize)]
struct SmapSummary {
    data: MapDataSummary,
    dt_used: f64,
    samples: usize,
    max_sphere_defect: f64,
    max_renormalization_defect: f64,
    energy_drift: f64,
    sup_dist_q: Vec<f64>,
    /// Increases of the 10-sample moving average of `sup_dist_q`.
    smoothed_sup_dist_rises: usize,
    /// Per sample and band, `‖P_k(w(t) − w(0))‖ / ‖P_kψ_x(0)‖` for the caloric
    /// profile `w(t) = e^{−itΔ}ψ_x(t)`; empty without `--gauge-bands`.
    gauged_profile_drift: Vec<Vec<f64>>,
}

fn smap_run(a: &SmapArgs, sink: &mut Sink) -> Result<()> {
    let (u0, data) = map_data(&a.map)?;
    let g = u0.grid().clone();
    let range = DyadicRange::for_grid(&g);
    let heat = heat_config(&a.heat, 0)?;
    let mut header = vec!["t".to_string(), "energy".into(), "sup_dist_Q".into()];
    if a.gauge_bands {
        header.extend(band_header("psi_band_", &range));
    }
    let mut csv = Csv::new(header);
    let e0 = energy_map(&u0);
    let mut max_defect = 0.0f64;
    let mut max_renorm = 0.0f64;
    let mut drift = 0.0f64;
    let mut sup = Vec::new();
    let mut w0: Option<[ComplexField; 2]> = None;
    let mut profile_drift = Vec::new();
    let dt_used = smap_visit(&u0, a.dt, a.t_end, a.sample_every, |t, u, renorm| {
        let e = energy_map(u);
        let d = sup_distance_to_q(u, Q);
        max_defect = max_defect.max(u.field().sphere_defect());
        max_renorm = max_renorm.max(renorm);
        drift = drift.max(if e0 > 0.0 { (e - e0).abs() / e0 } else { e.abs() });
        sup.push(d);
        let mut row = vec![t, e, d];
        if a.gauge_bands {
            let f = caloric_fields(u, &heat)?;
            row.extend(psi_band_norms(&f, &range));
            let w = gauged_profile(&f, t);
            let w0 = w0.get_or_insert_with(|| w.clone());
            profile_drift.push(profile_band_drift(&w, w0, &range));
        }
        csv.row(&row);
        Ok(())
    })?;
    sink.report.check(Check::at_most("sphere_defect", max_defect, a.tol_defect));
    sink.report.check(Check::at_most("energy_drift", drift, a.tol_energy));
    if a.emit.contains(&Emit::Csv) {
        sink.write("smap.csv", &csv.to_bytes())?;
    }
    if a.emit.contains(&Emit::Json) {
        sink.json(
            "smap.json",
            &SmapSummary {
                data,
                dt_used,
                samples: sup.len(),
                max_sphere_defect: max_defect,
                max_renormalization_defect: max_renorm,
                energy_drift: drift,
                smoothed_sup_dist_rises: moving_average_rises(&sup, 10),
                sup_dist_q: sup,
                gauged_profile_drift: profile_drift,
            },
        )?;
    }
    Ok(())
}

fn moving_average_rises(xs: &[f64], w: usize) -> usize {
    let ma: Vec<f64> = xs.windows(w).map(|s| s.iter().sum::<f64>() / w as f64).collect();
    ma.windows(2).filter(|p| p[1] > p[0]).count()
}

#[derive(Serialize)]
struct HeatSummary {
    data: MapDataSummary,
    s_max: f64,
    steps: usize,
    halvings: usize,
    terminal_distance: f64,
    worst_energy_increase: f64,
    band_decay: Vec<BandDecay>,
}

fn heatflow(a: &HeatArgs, sink: &mut Sink) -> Result<()> {
    let (u0, data) = map_data(&a.map)?;
    let range = DyadicRange::for_grid(u0.grid());
    let cfg = heat_config(&a.heat, 0)?;
    let traj = heat_evolve(&u0, &cfg)?;
    let gauge = caloric_frame(&traj, E1, cfg.tol_q)?;
    let slices = gauge_fields_along_s(&traj, &gauge)?;
    let mut header = vec!["s".to_string(), "energy".into(), "sup_dist_const".into()];
    header.extend(band_header("psi_band_", &range));
    let mut csv = Csv::new(header);
    for (i, sl) in slices.iter().enumerate() {
        let mut row = vec![sl.s, traj.energies[i], distance_to_constant(&traj.z[i])];
        row.extend(psi_band_norms(&sl.gauge, &range));
        csv.row(&row);
    }
    let rise = traj.worst_energy_increase();
    sink.report.check(Check::at_most("energy_increase", rise, 0.0));
    sink.report
        .check(Check::at_most("terminal_distance", traj.terminal_distance(), cfg.tol_q));
    sink.write("heatflow.csv", &csv.to_bytes())?;
    sink.json(
        "heatflow.json",
        &HeatSummary {
            data,
            s_max: traj.s_max(),
            steps: traj.len() - 1,
            halvings: traj.halvings,
            terminal_distance: traj.terminal_distance(),
            worst_energy_increase: rise,
            band_decay: band_decay_exponents(&slices, &range),
        },
    )
}

#[derive(Serialize)]
struct CaloricSummary {
    data: MapDataSummary,
    s_max: f64,
    s_points: usize,
    max_orthonormality_defect: f64,
    max_caloric_defect: f64,
    caloric_fd_estimate: f64,
    a_integral: crate::caloric::AIntegralReport,
    psi_energy: f64,
    map_energy: f64,
    energy_identity: f64,
    bands: Vec<i32>,
    psi_band_norms: Vec<f64>,
    gauged: Option<GaugedStudy>,
}

fn caloric(a: &CaloricArgs, sink: &mut Sink) -> Result<()> {
    let (u0, data) = map_data(&a.map)?;
    let range = DyadicRange::for_grid(u0.grid());
    let cfg = heat_config(&a.heat, 1)?;
    let e_inf = parse_vec3("e-inf", &a.e_inf).map_err(cfg_err)?;
    let traj = heat_evolve(&u0, &cfg)?;
    let gauge = caloric_frame(&traj, e_inf, cfg.tol_q)?;
    let slices = gauge_fields_along_s(&traj, &gauge)?;
    let ai = verify_a_integral(&slices, 0)?;
    let g0 = &slices[0].gauge;
    let psi_energy = g0.energy();
    let map_energy = energy_map(&u0);
    let energy_identity = if map_energy > 0.0 {
        (psi_energy - map_energy).abs() / map_energy
    } else {
        psi_energy.abs()
    };
    let r = &mut sink.report;
    r.check(Check::at_most("orthonormality", gauge.max_orthonormality_defect, a.tol_orthonormality));
    r.check(Check::at_most("caloric_condition", gauge.max_caloric_defect, a.tol_caloric));
    r.check(Check::at_most("a_integral", ai.residual, a.tol_a_integral));
    r.check(Check::at_most("energy_identity", energy_identity, a.tol_energy));
    let gauged = if a.gauged_dt > 0.0 {
        let study = gauged_residual_study(
            &u0,
            &GaugedConfig {
                dt: a.gauged_dt,
                sample_times: vec![a.gauged_t],
                heat: cfg.clone(),
                e_inf,
                s_extension: 1.5,
            },
        )?;
        sink.report
            .check(Check::at_most("gauged_residual", study.worst, a.tol_gauged).with_worst_at(a.gauged_t));
        Some(study)
    } else {
        None
    };
    for (name, f) in [("psi1.smlf", &g0.psi1), ("psi2.smlf", &g0.psi2)] {
        sink.write(name, &snapshot::encode(f))?;
    }
    for (name, f) in [("a1.smlf", &g0.a1), ("a2.smlf", &g0.a2)] {
        sink.write(name, &snapshot::encode(&f.to_complex()))?;
    }
    sink.json(
        "caloric.json",
        &CaloricSummary {
            data,
            s_max: traj.s_max(),
            s_points: traj.len(),
            max_orthonormality_defect: gauge.max_orthonormality_defect,
            max_caloric_defect: gauge.max_caloric_defect,
            caloric_fd_estimate: gauge.max_caloric_fd,
            a_integral: ai,
            psi_energy,
            map_energy,
            energy_identity,
            bands: range.bands().collect(),
            psi_band_norms: psi_band_norms(g0, &range),
            gauged,
        },
    )
}

fn morawetz(a: &MorawetzArgs, sink: &mut Sink) -> Result<()> {
    let g = make_grid(a.grid_n, a.grid_len)?;
    let c = (a.grid_len / 2.0, a.grid_len / 2.0);
    let p = parse_pair("momentum", &a.momentum).map_err(cfg_err)?;
    let u0 = gaussian(&g, c, a.sigma, 1.0, (0.0, 0.0));
    let v0 = gaussian(&g, c, a.sigma, 1.0, p);
    let times: Vec<f64> = if a.samples == 1 {
        vec![0.0]
    } else {
        (0..a.samples).map(|i| a.t_end * i as f64 / (a.samples - 1) as f64).collect()
    };
    let rep = verify_morawetz_identity(&u0, &v0, &times, a.dt)?;
    let mut csv = Csv::new(["t", "M", "dMdt_num", "dMdt_id", "rel_err", "worst"]);
    let worst_idx = rep
        .samples
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, s)| if s.rel_err > bv { (i, s.rel_err) } else { (bi, bv) })
        .0;
    for (i, s) in rep.samples.iter().enumerate() {
        csv.row_text(&[
            num(s.t),
            num(s.m_value),
            num(s.dmdt_numeric),
            num(s.dmdt_identity),
            num(s.rel_err),
            if i == worst_idx { "1" } else { "0" }.to_string(),
        ]);
    }
    sink.report
        .check(Check::at_most("morawetz_identity", rep.worst_rel_err, a.tol).with_worst_at(rep.worst_t));
    sink.write("morawetz.csv", &csv.to_bytes())
}

#[derive(Serialize)]
struct BilinearSummary {
    slope: f64,
    intercept: f64,
    target_slope: f64,
    tolerance: f64,
    trial_slopes: Vec<f64>,
    saturation_log2: Vec<f64>,
    config: SlopeConfig,
}

fn bilinear(a: &BilinearArgs, sink: &mut Sink) -> Result<()> {
    let flow = match a.flow {
        FlowKind::Free => Flow::Free,
        FlowKind::Nls => Flow::Nls {
            mu: a.mu,
            eps: a.eps,
            steps_per_sample: a.steps_per_sample,
        },
    };
    let tol = a.tol.unwrap_or(if a.flow == FlowKind::Free { 0.15 } else { 0.2 });
    let cfg = SlopeConfig {
        n: a.grid_n,
        length: a.grid_len,
        j: a.j,
        gaps: a.gaps.clone(),
        trials: a.trials,
        samples: a.samples,
        time_factor: a.time_factor,
        window: a.window,
        seed: a.common.seed,
        flow,
    };
    let study = bilinear_slope_study(&cfg)?;
    let mut csv = Csv::new(["j", "k", "bilinear_l2", "normalizer", "ratio_log2", "trial"]);
    for (trial, r) in &study.reports {
        csv.row_text(&[
            r.j.to_string(),
            r.k.to_string(),
            num(r.bilinear_l2),
            num(r.normalizer),
            num(r.ratio_log2),
            trial.to_string(),
        ]);
    }
    sink.report
        .check(Check::at_most("slope_deviation", (study.slope - a.target_slope).abs(), tol));
    sink.write("bilinear.csv", &csv.to_bytes())?;
    sink.json(
        "bilinear.json",
        &BilinearSummary {
            slope: study.slope,
            intercept: study.intercept,
            target_slope: a.target_slope,
            tolerance: tol,
            trial_slopes: study.trial_slopes,
            saturation_log2: study.saturation_log2,
            config: cfg,
        },
    )
}
