use std::io::Write;
use std::thread;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::TwinConfig;
use crate::error::{invalid, Error, Result};
use crate::inference::PredictedStep;
use crate::model::{ControlInput, HealthState, MarginalSummary, QoISummary, RewardSummary};
use crate::planner::Policy;

use super::asset::AssetEndpoint;
use super::schedule::GroundTruthSchedule;
use super::twin::{twin_step, TwinState};
use super::wire::{channel_pair, socket_pair, Connection, WireMessage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transport {
    InProc,
    Socket,
}

impl std::str::FromStr for Transport {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inproc" => Ok(Transport::InProc),
            "socket" => Ok(Transport::Socket),
            other => Err(invalid(format!("unknown transport `{other}` (expected inproc or socket)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MissionOptions {
    /// Stamp each record with elapsed wall time. Breaks byte determinism.
    pub record_wall_time: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionHeader {
    pub seed: u64,
    pub t0: u64,
    pub steps: usize,
    pub initial_control: ControlInput,
    pub sigma_sensor: f64,
    pub asset_noise_sigma: f64,
    pub truth_e: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionRecord {
    pub t: u64,
    /// Load flown while this observation was recorded.
    pub load: ControlInput,
    /// Control issued after assimilating it.
    pub control: ControlInput,
    /// Twin-side frame counters.
    pub sensor_seq: u64,
    pub control_seq: u64,
    pub truth: HealthState,
    pub observation: Vec<f64>,
    pub marginal: MarginalSummary,
    pub qoi: QoISummary,
    pub rewards: RewardSummary,
    pub prediction: Vec<PredictedStep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothedSummary {
    pub t: u64,
    pub marginal: MarginalSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionLog {
    pub header: MissionHeader,
    pub records: Vec<MissionRecord>,
    /// Smoothed marginals over the whole mission given all data.
    pub smoothed: Vec<SmoothedSummary>,
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum LogLine<'a> {
    Header(&'a MissionHeader),
    Step(&'a MissionRecord),
    Smoothed { steps: &'a [SmoothedSummary] },
}

#[derive(Serialize)]
struct CsvRow {
    t: u64,
    u: ControlInput,
    load: ControlInput,
    map_z1: u8,
    map_z2: u8,
    truth_z1: u8,
    truth_z2: u8,
    mean_r_health: f64,
    mean_r_control: f64,
    mean_r_error: f64,
}

impl MissionLog {
    /// Header line, one line per step, then the retrospective smoothing.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        let mut line = |l: LogLine| -> Result<()> {
            serde_json::to_writer(&mut out, &l)?;
            out.write_all(b"\n")?;
            Ok(())
        };
        line(LogLine::Header(&self.header))?;
        for r in &self.records {
            line(LogLine::Step(r))?;
        }
        line(LogLine::Smoothed { steps: &self.smoothed })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.records {
            w.serialize(CsvRow {
                t: r.t,
                u: r.control,
                load: r.load,
                map_z1: r.marginal.map_z1,
                map_z2: r.marginal.map_z2,
                truth_z1: r.truth.z1,
                truth_z2: r.truth.z2,
                mean_r_health: r.rewards.r_health.mean,
                mean_r_control: r.rewards.r_control.mean,
                mean_r_error: r.rewards.r_error.map_or(f64::NAN, |m| m.mean),
            })?;
        }
        w.flush()?;
        Ok(())
    }

    /// First step at which the twin issued `TwoG` after having flown `ThreeG`.
    pub fn first_switch_to_2g(&self) -> Option<u64> {
        let mut prev = self.header.initial_control;
        for r in &self.records {
            if prev == ControlInput::ThreeG && r.control == ControlInput::TwoG {
                return Some(r.t);
            }
            prev = r.control;
        }
        None
    }
}

/// A mission that stopped early, with everything logged up to the failure.
#[derive(Debug)]
pub struct MissionFailure {
    pub partial: Box<MissionLog>,
    pub error: Error,
}

impl std::fmt::Display for MissionFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "mission aborted after {} steps: {}", self.partial.records.len(), self.error)
    }
}

impl std::error::Error for MissionFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Runs `steps` asset-twin exchanges starting at the schedule's first step.
///
/// The twin opens with a control for the step before the first observation;
/// the asset answers every `Control{t}` with `Sensor{t + 1}` flown under it.
/// After the last control the twin sends `Shutdown`.
pub fn run_mission(
    cfg: &TwinConfig,
    policy: &Policy,
    schedule: &GroundTruthSchedule,
    steps: usize,
    transport: Transport,
    seed: u64,
    options: MissionOptions,
) -> std::result::Result<MissionLog, MissionFailure> {
    let mut twin = match prepare(cfg, policy, schedule, steps, seed) {
        Ok(t) => t,
        Err(error) => return Err(MissionFailure { partial: Box::new(empty_log(cfg, schedule, steps, seed, ControlInput::TwoG)), error }),
    };
    let mut log = empty_log(cfg, schedule, steps, seed, twin.initial_load);
    let asset = AssetEndpoint {
        surrogate: cfg.surrogate.clone(),
        schedule: schedule.clone(),
        truth_e: cfg.asset.truth_e,
        noise_sigma: cfg.asset.noise_sigma,
        seed,
        last_t: twin.t0 + steps as u64 - 1,
    };
    let (mut twin_conn, asset_conn): (Box<dyn Connection>, Box<dyn Connection>) = match transport {
        Transport::InProc => {
            let (a, b) = channel_pair();
            (Box::new(a), Box::new(b))
        }
        Transport::Socket => match socket_pair() {
            Ok((a, b)) => (Box::new(a), Box::new(b)),
            Err(error) => return Err(MissionFailure { partial: Box::new(log), error }),
        },
    };
    let handle = thread::spawn(move || {
        let mut conn = asset_conn;
        asset.run(conn.as_mut())
    });

    let outcome = drive(&mut twin, twin_conn.as_mut(), schedule, steps, options, &mut log);
    if outcome.is_err() {
        let _ = twin_conn.send(&WireMessage::Shutdown);
    }
    drop(twin_conn);
    let asset_result = handle.join().unwrap_or_else(|_| Err(Error::Transport("asset endpoint panicked".into())));
    match (outcome, asset_result) {
        (Ok(smoothed), Ok(())) => {
            log.smoothed = smoothed;
            Ok(log)
        }
        (Ok(_), Err(error)) => Err(MissionFailure { partial: Box::new(log), error }),
        // The asset usually knows why the twin lost its peer.
        (Err(_), Err(error)) => Err(MissionFailure { partial: Box::new(log), error }),
        (Err(error), Ok(())) => Err(MissionFailure { partial: Box::new(log), error }),
    }
}

fn prepare(cfg: &TwinConfig, policy: &Policy, schedule: &GroundTruthSchedule, steps: usize, seed: u64) -> Result<TwinState> {
    cfg.validate()?;
    schedule.validate()?;
    if steps == 0 {
        return Err(invalid("a mission needs at least one step"));
    }
    let t0 = schedule.start_t();
    let last = t0 + steps as u64 - 1;
    if last > schedule.end_t {
        return Err(Error::OutsideSchedule { t: last });
    }
    TwinState::from_config(cfg, policy.clone(), t0, seed)
}

fn empty_log(cfg: &TwinConfig, schedule: &GroundTruthSchedule, steps: usize, seed: u64, initial: ControlInput) -> MissionLog {
    MissionLog {
        header: MissionHeader {
            seed,
            t0: schedule.breakpoints.first().map_or(0, |b| b.t),
            steps,
            initial_control: initial,
            sigma_sensor: cfg.twin.sigma_sensor,
            asset_noise_sigma: cfg.asset.noise_sigma,
            truth_e: cfg.asset.truth_e,
        },
        records: Vec::new(),
        smoothed: Vec::new(),
    }
}

fn drive(
    twin: &mut TwinState,
    conn: &mut dyn Connection,
    schedule: &GroundTruthSchedule,
    steps: usize,
    options: MissionOptions,
    log: &mut MissionLog,
) -> Result<Vec<SmoothedSummary>> {
    let start = Instant::now();
    let mut seq = 0u64;
    conn.send(&WireMessage::Control { t: twin.t0 - 1, load_factor: twin.initial_load })?;
    seq += 1;
    let mut smoothed = Vec::new();
    for _ in 0..steps {
        let (t, strain) = match conn.recv()? {
            WireMessage::Sensor { t, strain } => (t, strain),
            other => return Err(Error::Frame(format!("twin expected a sensor frame, got {other:?}"))),
        };
        let sensor_seq = seq;
        seq += 1;
        let load = twin.current_load();
        let obs = crate::model::Observation::new(t, strain)?;
        let observation = obs.strains_microstrain.clone();
        let out = twin_step(twin, obs)?;
        conn.send(&WireMessage::Control { t, load_factor: out.control })?;
        let control_seq = seq;
        seq += 1;
        log.records.push(MissionRecord {
            t,
            load,
            control: out.control,
            sensor_seq,
            control_seq,
            truth: schedule.health_at(t)?,
            observation,
            marginal: out.current.marginal,
            qoi: out.current.qoi_summary,
            rewards: out.current.rewards,
            prediction: out.prediction.steps,
            wall_time_ms: options.record_wall_time.then(|| start.elapsed().as_secs_f64() * 1e3),
        });
        smoothed = out.smoothed;
    }
    conn.send(&WireMessage::Shutdown)?;
    Ok(smoothed
        .into_iter()
        .enumerate()
        .map(|(i, marginal)| SmoothedSummary { t: twin.t0 + i as u64, marginal })
        .collect())
}
