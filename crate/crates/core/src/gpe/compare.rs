//! GPE observables against the scaling-model prediction.

use std::fmt::Write as _;

use serde::Serialize;

use super::solver::MarginalRecord;
use crate::dynamics::{CondensateState, GroundStateSpec, StateHistory};
use crate::error::{Error, Result};

/// Deviation time series on the GPE record times.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviationReport {
    pub times: Vec<f64>,
    /// GPE centre of mass minus z_A along the transport axis (m)
    pub center_of_mass: Vec<f64>,
    /// sigma_GPE / (r_i(0) lambda_i / sqrt 7) - 1 per axis
    pub width: Vec<[f64; 3]>,
}

impl DeviationReport {
    pub fn max_center_of_mass(&self) -> f64 {
        self.center_of_mass.iter().fold(0.0_f64, |a, d| a.max(d.abs()))
    }

    pub fn max_width(&self) -> [f64; 3] {
        std::array::from_fn(|i| self.width.iter().fold(0.0_f64, |a, d| a.max(d[i].abs())))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,com_dev_z,width_dev_x,width_dev_y,width_dev_z\n");
        for ((t, c), w) in self.times.iter().zip(&self.center_of_mass).zip(&self.width) {
            let _ = writeln!(out, "{t:e},{c:e},{:e},{:e},{:e}", w[0], w[1], w[2]);
        }
        out
    }
}

fn state_at(history: &StateHistory, t: f64) -> Option<CondensateState> {
    let (t0, t1) = (history.times[0], *history.times.last()?);
    let slack = 1e-9 * (t1 - t0).abs().max(1e-12);
    if t < t0 - slack || t > t1 + slack {
        return None;
    }
    let dt = history.dt();
    let s = ((t - t0) / dt).max(0.0);
    let k = (s.floor() as usize).min(history.states.len() - 2);
    let f = (s - k as f64).min(1.0);
    let (a, b) = (&history.states[k].0, &history.states[k + 1].0);
    Some(CondensateState(std::array::from_fn(|i| (1.0 - f) * a[i] + f * b[i])))
}

pub fn compare_with_scaling(
    record: &MarginalRecord,
    history: &StateHistory,
    ground: &GroundStateSpec,
) -> Result<DeviationReport> {
    let s7 = 7f64.sqrt();
    let mut report = DeviationReport { times: vec![], center_of_mass: vec![], width: vec![] };
    for ((t, com), sd) in record.times.iter().zip(&record.center_of_mass).zip(&record.sigma) {
        let Some(s) = state_at(history, *t) else {
            continue;
        };
        let l = s.lambda();
        report.times.push(*t);
        report.center_of_mass.push(com[2] - s.z_a());
        report.width.push(std::array::from_fn(|i| sd[i] / (ground.radii[i] * l[i] / s7) - 1.0));
    }
    if report.times.is_empty() {
        return Err(Error::InvalidInput("GPE record and scaling history do not overlap in time".into()));
    }
    Ok(report)
}
