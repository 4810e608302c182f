//! Transport figures of merit: mean translational energy, peak offsets and
//! residual size oscillations after the ramp.

use serde::{Deserialize, Serialize};

use crate::constants::PhysicalConstants;
use crate::dynamics::{GroundStateSpec, StateHistory};
use crate::oct::trapezoid_mean;

/// Offsets in m and m/s, energies in nK, residuals in m.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransportMetrics {
    pub mean_classical: f64,
    pub max_offset: f64,
    pub max_velocity_offset: f64,
    /// half peak-to-peak of the TF standard deviation after t_f, per axis
    pub residual_amplitude: [f64; 3],
}

/// Thomas-Fermi standard deviations r_i(0) lambda_i / sqrt(7) at every sample.
pub fn tf_widths(history: &StateHistory, ground: &GroundStateSpec) -> Vec<[f64; 3]> {
    let s7 = 7f64.sqrt();
    history
        .states
        .iter()
        .map(|s| {
            let l = s.lambda();
            std::array::from_fn(|i| ground.radii[i] * l[i] / s7)
        })
        .collect()
}

/// Half the peak-to-peak excursion of each width over samples after the transport.
pub fn residual_amplitudes(history: &StateHistory, ground: &GroundStateSpec) -> [f64; 3] {
    let widths = tf_widths(history, ground);
    let tail = &widths[history.transport_end..];
    std::array::from_fn(|i| {
        let (lo, hi) = tail.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), w| (lo.min(w[i]), hi.max(w[i])));
        0.5 * (hi - lo)
    })
}

pub fn transport_metrics(history: &StateHistory, ground: &GroundStateSpec, c: &PhysicalConstants) -> TransportMetrics {
    let end = history.transport_end;
    let e_cl = history.classical_energies(c);
    let mean_classical = c.to_nanokelvin(trapezoid_mean(&e_cl[..=end]));
    let (mut max_offset, mut max_velocity_offset) = (0.0f64, 0.0f64);
    for (s, t) in history.states[..=end].iter().zip(&history.traps[..=end]) {
        max_offset = max_offset.max((s.z_a() - t.z0).abs());
        max_velocity_offset = max_velocity_offset.max((s.v_a() - t.z0_dot).abs());
    }
    TransportMetrics {
        mean_classical,
        max_offset,
        max_velocity_offset,
        residual_amplitude: residual_amplitudes(history, ground),
    }
}
