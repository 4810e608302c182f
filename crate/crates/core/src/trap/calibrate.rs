//! One-time calibration of the Z-wire surrogate against endpoint trap data.

use std::f64::consts::PI;

use serde::Serialize;

use super::characterize::{characterize_trap, CharacterizeOptions, TrapCharacterization};
use super::field::ChipGeometry;
use super::map::TrapMap;
use crate::constants::{PhysicalConstants, GAUSS};
use crate::error::Result;

/// Reference trap at one bias value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrapAnchor {
    pub bias_field: f64,
    pub minimum_distance: f64,
    pub frequency_hz: [f64; 3],
}

/// The quoted start and end traps: 21.5 G -> 0.45 mm, 2pi(15, 616, 616) Hz;
/// 4.5 G -> 1.65 mm, 2pi(10, 32, 32) Hz.
pub fn endpoint_anchors() -> [TrapAnchor; 2] {
    [
        TrapAnchor { bias_field: 21.5 * GAUSS, minimum_distance: 0.45e-3, frequency_hz: [15.0, 616.0, 616.0] },
        TrapAnchor { bias_field: 4.5 * GAUSS, minimum_distance: 1.65e-3, frequency_hz: [10.0, 32.0, 32.0] },
    ]
}

/// Relative errors of a model trap against one anchor: `[z0, fx, fy, fz]`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct AnchorComparison {
    pub anchor: TrapAnchor,
    pub minimum_distance: f64,
    pub frequency_hz: [f64; 3],
    pub relative_errors: [f64; 4],
}

impl AnchorComparison {
    pub fn new(anchor: TrapAnchor, minimum_distance: f64, frequency_hz: [f64; 3]) -> Self {
        let rel = |x: f64, r: f64| x / r - 1.0;
        Self {
            anchor,
            minimum_distance,
            frequency_hz,
            relative_errors: [
                rel(minimum_distance, anchor.minimum_distance),
                rel(frequency_hz[0], anchor.frequency_hz[0]),
                rel(frequency_hz[1], anchor.frequency_hz[1]),
                rel(frequency_hz[2], anchor.frequency_hz[2]),
            ],
        }
    }

    pub fn from_trap(anchor: TrapAnchor, trap: &TrapCharacterization) -> Self {
        Self::new(anchor, trap.minimum_distance, trap.omega().map(|w| w / (2.0 * PI)))
    }

    pub fn max_abs_error(&self) -> f64 {
        self.relative_errors.iter().fold(0.0f64, |a, e| a.max(e.abs()))
    }
}

/// Compares a map (surrogate or tabulated) against the anchors.
pub fn compare_map_with_anchors(map: &TrapMap, anchors: &[TrapAnchor]) -> Result<Vec<AnchorComparison>> {
    anchors
        .iter()
        .map(|a| {
            let p = map.eval(a.bias_field)?;
            Ok(AnchorComparison::new(*a, p.z0, p.omega_sq.map(|w2| w2.sqrt() / (2.0 * PI))))
        })
        .collect()
}

pub fn compare_geometry_with_anchors(
    geometry: &ChipGeometry,
    constants: &PhysicalConstants,
    anchors: &[TrapAnchor],
    options: &CharacterizeOptions,
) -> Result<Vec<AnchorComparison>> {
    anchors
        .iter()
        .map(|a| Ok(AnchorComparison::from_trap(*a, &characterize_trap(geometry, constants, a.bias_field, options)?)))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct CalibrationReport {
    pub geometry: ChipGeometry,
    pub comparisons: Vec<AnchorComparison>,
    pub objective: f64,
    pub sweeps: usize,
}

impl CalibrationReport {
    pub fn max_abs_error(&self) -> f64 {
        self.comparisons.iter().fold(0.0f64, |a, c| a.max(c.max_abs_error()))
    }
}

fn objective(comparisons: &[AnchorComparison]) -> f64 {
    comparisons.iter().flat_map(|c| c.relative_errors).map(|e| (1.0 + e).ln().powi(2)).sum()
}

/// Coordinate descent on (central length, leg length, longitudinal offset)
/// minimising the squared log-errors against the anchors.
pub fn calibrate_geometry(
    initial: &ChipGeometry,
    constants: &PhysicalConstants,
    anchors: &[TrapAnchor],
    options: &CharacterizeOptions,
    max_sweeps: usize,
) -> Result<CalibrationReport> {
    let evaluate = |g: &ChipGeometry| -> Option<(f64, Vec<AnchorComparison>)> {
        let c = compare_geometry_with_anchors(g, constants, anchors, options).ok()?;
        Some((objective(&c), c))
    };
    let mut geometry = *initial;
    let (mut best, mut comparisons) = evaluate(&geometry).ok_or_else(|| {
        crate::error::Error::NotConverged("initial geometry does not form a trap at every anchor".into())
    })?;
    // multiplicative steps for the lengths, additive for the offset field
    let mut steps = [0.1, 0.1, 0.2 * GAUSS];
    let mut sweeps = 0;
    while sweeps < max_sweeps && steps[0] > 1e-6 {
        sweeps += 1;
        let mut improved = false;
        for k in 0..3 {
            for sign in [1.0, -1.0] {
                let mut trial = geometry;
                match k {
                    0 => trial.central_segment_length *= 1.0 + sign * steps[0],
                    1 => trial.leg_length *= 1.0 + sign * steps[1],
                    _ => trial.longitudinal_offset_field += sign * steps[2],
                }
                if let Some((obj, c)) = evaluate(&trial) {
                    if obj < best {
                        best = obj;
                        comparisons = c;
                        geometry = trial;
                        improved = true;
                        break;
                    }
                }
            }
        }
        if !improved {
            for s in &mut steps {
                *s *= 0.5;
            }
        }
    }
    Ok(CalibrationReport { geometry, comparisons, objective: best, sweeps })
}
