//! Biot-Savart field of a three-segment Z-wire plus uniform bias.
//!
//! The chip surface is the plane z = 0 with its normal along +z. The central
//! segment runs along `wire_axis` centred on the origin; the two legs leave
//! its ends in opposite directions along `normal x wire_axis`, so the current
//! path has the familiar Z shape. The bias field points along
//! `bias_direction` and cancels the central-wire field above the chip.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::constants::VACUUM_PERMEABILITY;
use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Closest approach (m) to a filament below which a probe counts as "on" it.
const ON_WIRE_DISTANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChipGeometry {
    /// Length of the central segment (m).
    pub central_segment_length: f64,
    /// Length of each leg (m).
    pub leg_length: f64,
    /// Chip wire current (A).
    pub wire_current: f64,
    pub wire_axis: [f64; 3],
    pub bias_direction: [f64; 3],
    /// Uniform field along `wire_axis` added to the bias (T).
    pub longitudinal_offset_field: f64,
}

impl Default for ChipGeometry {
    /// Calibrated against the endpoint traps at 21.5 G and 4.5 G.
    fn default() -> Self {
        Self {
            central_segment_length: 4.0e-3,
            leg_length: 10.0e-3,
            wire_current: 5.0,
            wire_axis: [1.0, 0.0, 0.0],
            bias_direction: [0.0, 1.0, 0.0],
            longitudinal_offset_field: 0.0,
        }
    }
}

/// A straight current filament from `start` to `end`.
#[derive(Debug, Clone, Copy)]
pub struct Segment {
    pub start: Vec3,
    pub end: Vec3,
}

impl ChipGeometry {
    pub fn validate(&self) -> Result<()> {
        let check_unit = |name: &str, v: [f64; 3]| -> Result<()> {
            let n = Vec3::from(v).norm();
            if !n.is_finite() || (n - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidGeometry(format!("{name} must be a unit vector, norm = {n}")));
            }
            Ok(())
        };
        if !(self.wire_current > 0.0) {
            return Err(Error::InvalidGeometry(format!("wire_current must be positive, got {}", self.wire_current)));
        }
        if !(self.central_segment_length > 0.0 && self.leg_length > 0.0) {
            return Err(Error::InvalidGeometry("segment lengths must be positive".into()));
        }
        check_unit("wire_axis", self.wire_axis)?;
        check_unit("bias_direction", self.bias_direction)?;
        if self.wire_axis[2].abs() > 1e-12 {
            return Err(Error::InvalidGeometry("wire_axis must lie in the chip plane".into()));
        }
        if !self.longitudinal_offset_field.is_finite() {
            return Err(Error::InvalidGeometry("longitudinal_offset_field must be finite".into()));
        }
        Ok(())
    }

    pub fn axis(&self) -> Vec3 {
        Vec3::from(self.wire_axis)
    }

    /// In-plane direction of the legs.
    pub fn leg_direction(&self) -> Vec3 {
        Vec3::z().cross(&self.axis())
    }

    pub fn segments(&self) -> [Segment; 3] {
        let axis = self.axis();
        let leg = self.leg_direction();
        let a = -0.5 * self.central_segment_length * axis;
        let b = 0.5 * self.central_segment_length * axis;
        [
            Segment { start: a + self.leg_length * leg, end: a },
            Segment { start: a, end: b },
            Segment { start: b, end: b - self.leg_length * leg },
        ]
    }

    /// Uniform part of the field for a given bias magnitude.
    pub fn uniform_field(&self, bias_field: f64) -> Vec3 {
        bias_field * Vec3::from(self.bias_direction) + self.longitudinal_offset_field * self.axis()
    }
}

/// Field of a finite straight filament carrying `current` (A).
///
/// Closed form `B = mu0 I/(4 pi) (r1 x r2)(|r1|+|r2|) / (|r1||r2|(|r1||r2| + r1.r2))`
/// with `r1 = p - start`, `r2 = p - end`.
pub fn segment_field(point: &Vec3, segment: &Segment, current: f64) -> Result<Vec3> {
    let r1 = point - segment.start;
    let r2 = point - segment.end;
    let n1 = r1.norm();
    let n2 = r2.norm();
    let dl = segment.end - segment.start;
    let len2 = dl.norm_squared();
    // distance to the closest point of the (clamped) segment
    let t = (r1.dot(&dl) / len2).clamp(0.0, 1.0);
    let closest = (point - (segment.start + t * dl)).norm();
    if closest < ON_WIRE_DISTANCE {
        return Err(Error::SingularGeometry { point: [point.x, point.y, point.z] });
    }
    let denom = n1 * n2 * (n1 * n2 + r1.dot(&r2));
    if denom <= 0.0 {
        // collinear and outside the segment: no field on the axis line
        return Ok(Vec3::zeros());
    }
    let prefactor = VACUUM_PERMEABILITY / (4.0 * std::f64::consts::PI) * current;
    Ok(r1.cross(&r2) * (prefactor * (n1 + n2) / denom))
}

/// Field of the chip wire alone (no bias).
pub fn wire_field_at(point: &Vec3, geometry: &ChipGeometry) -> Result<Vec3> {
    let mut total = Vec3::zeros();
    for seg in geometry.segments() {
        total += segment_field(point, &seg, geometry.wire_current)?;
    }
    Ok(total)
}

/// Total field: three Biot-Savart segments plus the uniform bias (T).
pub fn field_at(point: &Vec3, geometry: &ChipGeometry, bias_field: f64) -> Result<Vec3> {
    Ok(wire_field_at(point, geometry)? + geometry.uniform_field(bias_field))
}

/// |B| without the singular-point check; callers must stay away from the wire.
pub(crate) fn field_magnitude_unchecked(point: &Vec3, geometry: &ChipGeometry, bias_field: f64) -> f64 {
    let prefactor = VACUUM_PERMEABILITY / (4.0 * std::f64::consts::PI) * geometry.wire_current;
    let mut total = geometry.uniform_field(bias_field);
    for seg in geometry.segments() {
        let r1 = point - seg.start;
        let r2 = point - seg.end;
        let n1 = r1.norm();
        let n2 = r2.norm();
        let denom = n1 * n2 * (n1 * n2 + r1.dot(&r2));
        if denom > 0.0 {
            total += r1.cross(&r2) * (prefactor * (n1 + n2) / denom);
        }
    }
    total.norm()
}
