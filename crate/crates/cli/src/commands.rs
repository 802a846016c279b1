use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use twin_core::calibration::{
    self, calibrate_geometry as geometry_update, estimate_modes, io, GaussianPrior, ModalEstimate, PairNoise,
    TwoModeSignal,
};
use twin_core::config::TwinConfig;
use twin_core::model::{CalibrationPosterior, GeometricParams, UNMODELLED_MASS_G};
use twin_core::planner::{solve, value_iteration, MdpSpec};
use twin_core::sim::{run_mission, GroundTruthSchedule, MissionLog, MissionOptions, Transport};

use crate::manifest::Run;
use crate::{
    effective_seed, CliError, GenCmd, GeometryArgs, ModalArgs, PlanArgs, SimulateArgs, StiffnessArgs, TransportArg,
};

fn load_config(run: &mut Run, path: Option<&Path>) -> Result<TwinConfig, CliError> {
    match path {
        Some(p) => {
            let bytes = run.read_config(p)?;
            let text = String::from_utf8(bytes).map_err(|_| CliError::usage(format!("{} is not UTF-8", p.display())))?;
            Ok(TwinConfig::from_json_str(&text)?)
        }
        None => Ok(TwinConfig::default()),
    }
}

fn parse_json<T: serde::de::DeserializeOwned>(bytes: &[u8], path: &Path) -> Result<T, CliError> {
    serde_json::from_slice(bytes).map_err(|e| CliError::usage(format!("cannot parse {}: {e}", path.display())))
}

fn pretty<T: Serialize>(value: &T) -> Vec<u8> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    text.into_bytes()
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> twin_core::Result<()>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

pub fn calibrate_geometry(a: GeometryArgs) -> Result<(), CliError> {
    let mut run = Run::new(None);
    let cfg = load_config(&mut run, a.config.as_deref())?;
    let bytes = run.read_input(&a.measured)?;
    let measured: GeometricParams = parse_json(&bytes, &a.measured)?;
    let cal = geometry_update(&measured, &cfg.calibration.geometry_prior)?;
    run.write_output(&a.out.join("geometry.json"), &pretty(&cal))?;
    run.finish(&a.out.join("manifest.json"))?;
    println!("geometry reward {:.6}", cal.reward);
    Ok(())
}

#[derive(Serialize)]
struct StiffnessReport {
    prior: GaussianPrior,
    posterior_mean: f64,
    posterior_std: f64,
    ci95: [f64; 2],
    reward: f64,
    pairs: Vec<PairReport>,
}

#[derive(Serialize)]
struct PairReport {
    applied_mass_g: f64,
    tip_displacement_mm: f64,
    e_hat: f64,
    kde_bandwidth: f64,
    posterior_std_after: f64,
}

const CURVE_POINTS: usize = 501;

pub fn calibrate_stiffness(a: StiffnessArgs) -> Result<(), CliError> {
    let seed = effective_seed(a.seed)?;
    let mut run = Run::new(Some(seed));
    let cfg = load_config(&mut run, a.config.as_deref())?;
    let pairs = io::read_pairs(run.read_input(&a.data)?.as_slice())?;
    let c = &cfg.calibration;
    let prior = c.e_prior();
    let cal = calibration::calibrate_stiffness(
        &prior,
        &pairs,
        &c.pair_noise,
        a.particles.unwrap_or(c.n_particles),
        a.kde_samples.unwrap_or(c.n_kde_samples),
        seed,
    )?;
    let posterior = cal.posterior.summarize(true);
    let report = StiffnessReport {
        prior,
        posterior_mean: posterior.mean,
        posterior_std: posterior.std,
        ci95: posterior.ci95,
        reward: cal.reward,
        pairs: cal
            .likelihoods
            .iter()
            .zip(&cal.std_history)
            .map(|(l, s)| PairReport {
                applied_mass_g: l.pair.applied_mass_g,
                tip_displacement_mm: l.pair.tip_displacement_mm,
                e_hat: l.e_hat,
                kde_bandwidth: l.bandwidth(),
                posterior_std_after: *s,
            })
            .collect(),
    };

    // Likelihood curves on a grid spanning the prior.
    let (lo, hi) = (prior.mean - 5.0 * prior.std, prior.mean + 5.0 * prior.std);
    let curves = csv_bytes(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        let mut header = vec!["e".to_string(), "prior".to_string()];
        header.extend((1..=cal.likelihoods.len()).map(|i| format!("pair_{i}")));
        w.write_record(&header)?;
        for i in 0..CURVE_POINTS {
            let e = lo + (hi - lo) * i as f64 / (CURVE_POINTS - 1) as f64;
            let z = (e - prior.mean) / prior.std;
            let p = (-0.5 * z * z).exp() / (prior.std * (2.0 * std::f64::consts::PI).sqrt());
            let mut row = vec![e.to_string(), p.to_string()];
            row.extend(cal.likelihoods.iter().map(|l| l.eval(e).to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    })?;

    run.write_output(&a.out.join("posterior.json"), &pretty(&posterior))?;
    run.write_output(&a.out.join("stiffness.json"), &pretty(&report))?;
    run.write_output(&a.out.join("likelihoods.csv"), &curves)?;
    run.finish(&a.out.join("manifest.json"))?;
    println!(
        "e posterior mean {:.5} std {:.5} (prior std {:.5}), 95% CI [{:.5}, {:.5}]",
        posterior.mean, posterior.std, prior.std, posterior.ci95[0], posterior.ci95[1]
    );
    Ok(())
}

pub fn calibrate_modal(a: ModalArgs) -> Result<(), CliError> {
    let seed = effective_seed(a.seed)?;
    let mut run = Run::new(Some(seed));
    let cfg = load_config(&mut run, a.config.as_deref())?;
    let bytes = run.read_input(&a.posterior)?;
    let posterior: CalibrationPosterior = parse_json(&bytes, &a.posterior)?;
    let estimates: Vec<ModalEstimate> = match &a.estimates {
        Some(p) => {
            let bytes = run.read_input(p)?;
            parse_json(&bytes, p)?
        }
        None => {
            let mut out = Vec::with_capacity(a.ringdown.len());
            for p in &a.ringdown {
                let rec = io::read_ringdown(run.read_input(p)?.as_slice())?;
                out.push(estimate_modes(&rec)?);
            }
            out
        }
    };
    let n = a.samples.unwrap_or(cfg.calibration.n_modal_samples);
    let cal = calibration::calibrate_modal(&cfg.surrogate, &posterior, &estimates, n, seed)?;
    let upper = UNMODELLED_MASS_G / 2.0;
    let pinned = cal.samples.iter().filter(|s| s.m_servo_g <= 1e-6 || s.m_servo_g >= upper - 1e-6).count();
    if pinned > 0 {
        eprintln!(
            "warning: servo mass hit a bound in {pinned} of {n} samples; the targets lie outside what the mass model can reach"
        );
    }

    let s = &cal.summary;
    let rows = [
        ("e", s.e),
        ("m_servo_g", s.m_servo_g),
        ("m_pitot_g", s.m_pitot_g),
        ("alpha", s.alpha),
        ("beta", s.beta),
    ];
    let table = csv_bytes(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["parameter", "mean", "std"])?;
        for (name, m) in rows {
            w.write_record([name.to_string(), m.mean.to_string(), m.std.to_string()])?;
        }
        w.flush()?;
        Ok(())
    })?;
    run.write_output(&a.out.join("modal.json"), &pretty(&cal))?;
    run.write_output(&a.out.join("modal_summary.csv"), &table)?;
    run.finish(&a.out.join("manifest.json"))?;

    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{:<10} {:>14} {:>14}", "parameter", "mean", "std");
    for (name, m) in rows {
        let _ = writeln!(out, "{:<10} {:>14.6e} {:>14.6e}", name, m.mean, m.std);
    }
    let _ = writeln!(out, "reward {:.3e}", cal.reward);
    Ok(())
}

pub fn plan(a: PlanArgs) -> Result<(), CliError> {
    let mut run = Run::new(None);
    let mut cfg = load_config(&mut run, a.config.as_deref())?;
    if let Some(g) = a.gamma {
        if !(0.0..1.0).contains(&g) {
            return Err(CliError::usage(format!("--gamma must lie in [0, 1), got {g}")));
        }
        cfg.planner.gamma = g;
    }
    let spec = MdpSpec::from_config(&cfg)?;
    let vi = value_iteration(&spec, cfg.planner.tolerance, cfg.planner.max_iterations)?;
    run.write_output(&a.out.join("policy.json"), &pretty(&vi.policy))?;
    run.finish(&a.out.join("manifest.json"))?;
    print!("{}", vi.policy.grid());
    println!("converged in {} sweeps (gamma = {})", vi.iterations, cfg.planner.gamma);
    Ok(())
}

pub fn simulate(a: SimulateArgs) -> Result<(), CliError> {
    let seed = effective_seed(a.seed)?;
    let mut run = Run::new(Some(seed));
    let cfg = load_config(&mut run, a.config.as_deref())?;
    let schedule = match &a.schedule {
        Some(p) => {
            let bytes = run.read_input(p)?;
            let s: GroundTruthSchedule = parse_json(&bytes, p)?;
            s.validate()?;
            s
        }
        None => GroundTruthSchedule::default_mission(),
    };
    if a.steps == 0 {
        return Err(CliError::usage("--steps must be at least 1"));
    }
    let policy = solve(&cfg)?.policy;
    let transport = match a.transport {
        TransportArg::Inproc => Transport::InProc,
        TransportArg::Socket => Transport::Socket,
    };
    let options = MissionOptions { record_wall_time: a.wall_time };
    let (log, failure) = match run_mission(&cfg, &policy, &schedule, a.steps, transport, seed, options) {
        Ok(log) => (log, None),
        Err(f) => (*f.partial, Some(f.error)),
    };

    run.write_output(&a.out.join("policy.json"), &pretty(&policy))?;
    write_log(&mut run, &a.out, &log)?;
    if a.plot {
        let svg = crate::plot::mission_svg(&log).map_err(|e| CliError::env(format!("plot failed: {e}")))?;
        run.write_output(&a.out.join("mission.svg"), svg.as_bytes())?;
    }
    run.finish(&a.out.join("manifest.json"))?;
    if let Some(e) = failure {
        return Err(CliError::from(e));
    }
    match log.first_switch_to_2g() {
        Some(t) => println!("{} steps; switched to 2g at t = {t}", log.records.len()),
        None => println!("{} steps; no switch to 2g", log.records.len()),
    }
    Ok(())
}

fn write_log(run: &mut Run, dir: &Path, log: &MissionLog) -> Result<(), CliError> {
    let jsonl = csv_bytes(|buf| log.write_jsonl(buf))?;
    let csv = csv_bytes(|buf| log.write_csv(buf))?;
    run.write_output(&dir.join("mission.jsonl"), &jsonl)?;
    run.write_output(&dir.join("mission.csv"), &csv)?;
    Ok(())
}

fn emit(out: Option<&PathBuf>, seed: Option<u64>, bytes: &[u8]) -> Result<(), CliError> {
    match out {
        Some(path) => {
            let mut run = Run::new(seed);
            run.write_output(path, bytes)?;
            let mut name = path.file_name().unwrap_or_default().to_os_string();
            name.push(".manifest.json");
            run.finish(&path.with_file_name(name))?;
            Ok(())
        }
        None => std::io::stdout().write_all(bytes).map_err(|e| CliError::env(e.to_string())),
    }
}

pub fn gen(g: GenCmd) -> Result<(), CliError> {
    match g {
        GenCmd::Pairs(a) => {
            let seed = effective_seed(a.seed)?;
            let noise = PairNoise { force_ci95_g: a.force_ci95_g, displacement_ci95_mm: a.displacement_ci95_mm };
            let pairs = calibration::synthetic_pairs(a.e_true, &a.masses, a.trials, &noise, seed)?;
            let bytes = csv_bytes(|buf| io::write_pairs(buf, &pairs))?;
            emit(a.out.out.as_ref(), Some(seed), &bytes)
        }
        GenCmd::Ringdown(a) => {
            let seed = effective_seed(a.seed)?;
            if !(a.seconds > 0.0 && a.rate > 0.0) {
                return Err(CliError::usage("--seconds and --rate must be positive"));
            }
            let signal = TwoModeSignal { freq_hz: [a.f1, a.f2], a: [a.a1, a.a2], b: [a.b1, a.b2], c: [a.c1, a.c2] };
            let n = (a.seconds * a.rate).round() as usize;
            let rec = signal.sample_noisy(a.rate, n, a.noise_std, seed)?;
            let bytes = csv_bytes(|buf| io::write_ringdown(buf, &rec))?;
            emit(a.out.out.as_ref(), Some(seed), &bytes)
        }
        GenCmd::Schedule(o) => emit(o.out.as_ref(), None, &pretty(&GroundTruthSchedule::default_mission())),
        GenCmd::Config(a) => {
            let cfg = TwinConfig::default();
            let bytes = if a.surrogate_only { pretty(&cfg.surrogate) } else { pretty(&cfg) };
            emit(a.out.out.as_ref(), None, &bytes)
        }
    }
}

