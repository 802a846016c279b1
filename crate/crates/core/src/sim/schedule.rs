use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::HealthState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Breakpoint {
    pub t: u64,
    pub z1: u8,
    pub z2: u8,
}

/// Piecewise-constant ground-truth health from `breakpoints[0].t` through `end_t`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthSchedule {
    pub breakpoints: Vec<Breakpoint>,
    /// Last timestep covered (inclusive).
    pub end_t: u64,
}

/// First operational timestep; steps 1-3 are the calibration experiments.
pub const FIRST_OPERATIONAL_STEP: u64 = 4;

impl GroundTruthSchedule {
    pub fn new(breakpoints: Vec<Breakpoint>, end_t: u64) -> Result<Self> {
        let s = GroundTruthSchedule { breakpoints, end_t };
        s.validate()?;
        Ok(s)
    }

    /// 50 steps from t = 4: region 1 degrades one level every ten or so
    /// steps while region 2 suffers one sudden two-level jump.
    pub fn default_mission() -> Self {
        let bp = |t, z1, z2| Breakpoint { t, z1, z2 };
        GroundTruthSchedule {
            breakpoints: vec![
                bp(4, 0, 0),
                bp(12, 0, 20),
                bp(14, 20, 20),
                bp(24, 40, 20),
                bp(30, 40, 60),
                bp(34, 60, 60),
                bp(46, 80, 60),
            ],
            end_t: FIRST_OPERATIONAL_STEP + 49,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let first = self.breakpoints.first().ok_or_else(|| invalid("schedule needs at least one breakpoint"))?;
        if self.end_t < first.t {
            return Err(invalid("schedule ends before its first breakpoint"));
        }
        for b in &self.breakpoints {
            HealthState::new(b.z1, b.z2)?;
        }
        for w in self.breakpoints.windows(2) {
            if w[1].t <= w[0].t {
                return Err(invalid("schedule breakpoints must be strictly increasing in t"));
            }
            if w[1].z1 < w[0].z1 || w[1].z2 < w[0].z2 {
                return Err(invalid(format!("health may not improve (breakpoint at t = {})", w[1].t)));
            }
        }
        Ok(())
    }

    pub fn start_t(&self) -> u64 {
        self.breakpoints[0].t
    }

    pub fn health_at(&self, t: u64) -> Result<HealthState> {
        if t < self.start_t() || t > self.end_t {
            return Err(Error::OutsideSchedule { t });
        }
        let b = self.breakpoints.iter().rev().find(|b| b.t <= t).expect("t is past the first breakpoint");
        Ok(HealthState { z1: b.z1, z2: b.z2 })
    }

    /// First step at which region 1 reaches at least `level`.
    pub fn first_reaching_z1(&self, level: u8) -> Option<u64> {
        self.breakpoints.iter().find(|b| b.z1 >= level).map(|b| b.t).filter(|t| *t <= self.end_t)
    }
}
