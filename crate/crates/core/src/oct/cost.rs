//! Terminal and running cost.

use serde::{Deserialize, Serialize};

use crate::constants::PhysicalConstants;
use crate::dynamics::{quantum_energy, GroundStateSpec, StateHistory};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
}

impl CostWeights {
    pub fn new(lambda1: f64, lambda2: f64, lambda3: f64) -> Result<Self> {
        let w = Self { lambda1, lambda2, lambda3 };
        w.validate()?;
        Ok(w)
    }

    /// Point-particle optimization: no size term.
    pub fn classical() -> Self {
        Self { lambda1: 1.0, lambda2: 0.0, lambda3: 5.5e-4 }
    }

    pub fn quantum() -> Self {
        Self { lambda1: 1.0, lambda2: 3.3, lambda3: 5.5e-4 }
    }

    /// Heavy size weight used to study convergence.
    pub fn convergence_study() -> Self {
        Self { lambda1: 1.0, lambda2: 5e5, lambda3: 1e-3 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda1 > 0.0) || !(self.lambda2 >= 0.0) || !(self.lambda3 >= 0.0) {
            return Err(Error::Config(format!(
                "weights must satisfy lambda1 > 0, lambda2 >= 0, lambda3 >= 0 (got {}, {}, {})",
                self.lambda1, self.lambda2, self.lambda3
            )));
        }
        if ![self.lambda1, self.lambda2, self.lambda3].iter().all(|x| x.is_finite()) {
            return Err(Error::Config("weights must be finite".into()));
        }
        Ok(())
    }
}

/// All entries in J.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub final_classical: f64,
    pub final_quantum: f64,
    /// (1/t_f) * integral of E_cl over the transport
    pub mean_classical: f64,
    pub terminal: f64,
    pub running: f64,
    pub total: f64,
}

impl CostBreakdown {
    pub fn in_nanokelvin(&self, c: &PhysicalConstants) -> Self {
        let f = |x: f64| c.to_nanokelvin(x);
        Self {
            final_classical: f(self.final_classical),
            final_quantum: f(self.final_quantum),
            mean_classical: f(self.mean_classical),
            terminal: f(self.terminal),
            running: f(self.running),
            total: f(self.total),
        }
    }
}

/// Trapezoidal mean of `values` sampled every `dt` over `[0, (n-1) dt]`.
pub fn trapezoid_mean(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return values.first().copied().unwrap_or(0.0);
    }
    let inner: f64 = values[1..n - 1].iter().sum();
    (inner + 0.5 * (values[0] + values[n - 1])) / (n - 1) as f64
}

/// Composite Simpson mean; an odd number of intervals gets a 3/8 panel at the end.
pub fn simpson_mean(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 4 {
        return trapezoid_mean(values);
    }
    let intervals = n - 1;
    let (even_end, tail) = if intervals.is_multiple_of(2) {
        (n - 1, 0.0)
    } else {
        (n - 4, 3.0 / 8.0 * (values[n - 4] + 3.0 * values[n - 3] + 3.0 * values[n - 2] + values[n - 1]))
    };
    let mut sum = values[0] + values[even_end];
    for (i, v) in values.iter().enumerate().take(even_end).skip(1) {
        sum += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    (sum / 3.0 + tail) / intervals as f64
}

/// C_tot = l1 E_cl(t_f) + l2 E_qu(t_f) + l3 <E_cl> over the transport part of the history.
pub fn total_cost(
    history: &StateHistory,
    ground: &GroundStateSpec,
    weights: &CostWeights,
    c: &PhysicalConstants,
) -> Result<CostBreakdown> {
    let end = history.transport_end;
    let e_cl = history.classical_energies(c);
    let final_classical = e_cl[end];
    let final_quantum = quantum_energy(history.final_state(), history.final_trap(), ground, c)
        .map_err(|_| Error::Collapse { time: history.final_time() })?;
    let mean_classical = trapezoid_mean(&e_cl[..=end]);
    let terminal = weights.lambda1 * final_classical + weights.lambda2 * final_quantum;
    let running = weights.lambda3 * mean_classical;
    Ok(CostBreakdown { final_classical, final_quantum, mean_classical, terminal, running, total: terminal + running })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrature_rules_on_polynomials() {
        let n = 101;
        let v: Vec<f64> = (0..n).map(|i| (i as f64 / 100.0).powi(3)).collect();
        assert!((simpson_mean(&v) - 0.25).abs() < 1e-14);
        let w: Vec<f64> = (0..n + 1).map(|i| (i as f64 / 101.0).powi(3)).collect();
        assert!((simpson_mean(&w) - 0.25).abs() < 1e-14);
        let l: Vec<f64> = (0..7).map(|i| 2.0 * i as f64).collect();
        assert!((trapezoid_mean(&l) - 6.0).abs() < 1e-14);
    }

    #[test]
    fn weights_validation() {
        assert!(CostWeights::new(0.0, 1.0, 1.0).is_err());
        assert!(CostWeights::new(1.0, -1.0, 0.0).is_err());
        assert!(CostWeights::new(1.0, 0.0, f64::NAN).is_err());
        assert!(CostWeights::quantum().validate().is_ok());
    }
}
