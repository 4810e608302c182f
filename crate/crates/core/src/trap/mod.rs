//! Bias field -> trap geometry: Biot-Savart surrogate, trap characterization,
//! interpolated maps and the tabulated-map file format.

pub mod calibrate;
pub mod characterize;
pub mod field;
pub mod interp;
pub mod map;

pub use calibrate::{
    calibrate_geometry, compare_geometry_with_anchors, compare_map_with_anchors, endpoint_anchors, AnchorComparison,
    CalibrationReport, TrapAnchor,
};
pub use characterize::{characterize_trap, locate_trap_minimum, CharacterizeOptions, TrapCharacterization};
pub use field::{field_at, wire_field_at, ChipGeometry, Vec3};
pub use map::{
    build_trap_map, endpoint_anchor_table, load_tabulated_map, parse_tabulated_map, MapSample, TrapMap, TrapPoint,
};
