//! Smooth bias-field -> trap-geometry map used by the dynamics and the optimizer.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::characterize::{characterize_trap, CharacterizeOptions, TrapCharacterization};
use super::field::ChipGeometry;
use super::interp::HermiteSpline;
use crate::constants::{PhysicalConstants, GAUSS};
use crate::error::{Error, Result};

/// One tabulated trap sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapSample {
    pub bias_field: f64,
    pub minimum_distance: f64,
    pub omega: [f64; 3],
    pub rotation_angle: f64,
}

impl From<&TrapCharacterization> for MapSample {
    fn from(t: &TrapCharacterization) -> Self {
        Self {
            bias_field: t.bias_field,
            minimum_distance: t.minimum_distance,
            omega: t.omega(),
            rotation_angle: t.rotation_angle,
        }
    }
}

/// Interpolated trap quantities and their bias derivatives at one bias value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrapPoint {
    pub bias_field: f64,
    pub z0: f64,
    pub dz0_db: f64,
    pub omega_sq: [f64; 3],
    pub domega_sq_db: [f64; 3],
    pub rotation_angle: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrapMap {
    samples: Vec<MapSample>,
    z0: HermiteSpline,
    omega_sq: [HermiteSpline; 3],
    rotation: HermiteSpline,
}

impl TrapMap {
    /// Builds the interpolants from samples given in either bias order.
    pub fn from_samples(mut samples: Vec<MapSample>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidInput("trap map needs at least two samples".into()));
        }
        if samples[0].bias_field > samples[samples.len() - 1].bias_field {
            samples.reverse();
        }
        for (i, s) in samples.iter().enumerate() {
            if !(s.minimum_distance > 0.0) || s.omega.iter().any(|w| !(*w > 0.0)) {
                return Err(Error::InvalidInput(format!(
                    "sample {i} (B = {} G) has non-positive z0 or frequency",
                    s.bias_field / GAUSS
                )));
            }
        }
        for (i, w) in samples.windows(2).enumerate() {
            if !(w[1].bias_field > w[0].bias_field) {
                return Err(Error::InvalidInput(format!("bias grid not strictly monotone at sample {}", i + 1)));
            }
            if !(w[1].minimum_distance < w[0].minimum_distance) {
                return Err(Error::InvalidInput(format!(
                    "z0 must decrease strictly with bias (samples {} and {})",
                    i,
                    i + 1
                )));
            }
        }
        let b: Vec<f64> = samples.iter().map(|s| s.bias_field).collect();
        let column = |f: &dyn Fn(&MapSample) -> f64| samples.iter().map(f).collect::<Vec<_>>();
        let z0 = HermiteSpline::new(b.clone(), column(&|s| s.minimum_distance));
        let omega_sq = [0, 1, 2].map(|i| HermiteSpline::new(b.clone(), column(&|s| s.omega[i] * s.omega[i])));
        let rotation = HermiteSpline::new(b, column(&|s| s.rotation_angle));
        Ok(Self { samples, z0, omega_sq, rotation })
    }

    pub fn samples(&self) -> &[MapSample] {
        &self.samples
    }

    /// (min, max) bias covered by the map (T).
    pub fn bias_range(&self) -> (f64, f64) {
        self.z0.domain()
    }

    pub fn contains(&self, bias: f64) -> bool {
        let (lo, hi) = self.bias_range();
        let slack = 1e-12 * hi.abs();
        bias >= lo - slack && bias <= hi + slack
    }

    fn out_of_range(&self, bias: f64) -> Error {
        let (lo, hi) = self.bias_range();
        Error::OutOfRange {
            bias_gauss: bias / GAUSS,
            min_gauss: lo / GAUSS,
            max_gauss: hi / GAUSS,
            node: None,
            time: None,
        }
    }

    pub fn eval(&self, bias: f64) -> Result<TrapPoint> {
        if !bias.is_finite() || !self.contains(bias) {
            return Err(self.out_of_range(bias));
        }
        Ok(self.eval_unchecked(bias))
    }

    pub(crate) fn eval_unchecked(&self, bias: f64) -> TrapPoint {
        let (z0, dz0_db) = self.z0.eval(bias);
        let mut omega_sq = [0.0; 3];
        let mut domega_sq_db = [0.0; 3];
        for i in 0..3 {
            let (v, d) = self.omega_sq[i].eval(bias);
            omega_sq[i] = v;
            domega_sq_db[i] = d;
        }
        TrapPoint { bias_field: bias, z0, dz0_db, omega_sq, domega_sq_db, rotation_angle: self.rotation.value(bias) }
    }

    pub fn z0(&self, bias: f64) -> Result<f64> {
        Ok(self.eval(bias)?.z0)
    }

    /// Writes the map in the plain-text column format.
    pub fn to_table_string(&self) -> String {
        let mut out = String::new();
        out.push_str("# bec-transport trap map\n");
        out.push_str("# B_gauss  z0_mm  fx_Hz  fy_Hz  fz_Hz  rotation_rad\n");
        for s in &self.samples {
            let _ = writeln!(
                out,
                "{:e}  {:e}  {:e}  {:e}  {:e}  {:e}",
                s.bias_field / GAUSS,
                s.minimum_distance * 1e3,
                s.omega[0] / (2.0 * PI),
                s.omega[1] / (2.0 * PI),
                s.omega[2] / (2.0 * PI),
                s.rotation_angle
            );
        }
        out
    }

    pub fn write_table(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_table_string())?;
        Ok(())
    }
}

/// Characterizes `sample_count` uniformly spaced bias values and builds the map.
pub fn build_trap_map(
    geometry: &ChipGeometry,
    constants: &PhysicalConstants,
    bias_range: (f64, f64),
    sample_count: usize,
    options: &CharacterizeOptions,
) -> Result<TrapMap> {
    if sample_count < 16 {
        return Err(Error::InvalidInput(format!("sample_count must be >= 16, got {sample_count}")));
    }
    let (lo, hi) = (bias_range.0.min(bias_range.1), bias_range.0.max(bias_range.1));
    if !(lo > 0.0) || lo == hi {
        return Err(Error::InvalidInput("bias range must be positive and non-empty".into()));
    }
    geometry.validate()?;
    let samples = (0..sample_count)
        .into_par_iter()
        .map(|k| {
            let b = lo + (hi - lo) * k as f64 / (sample_count - 1) as f64;
            characterize_trap(geometry, constants, b, options)
                .map(|t| MapSample::from(&t))
                .map_err(|e| Error::MapSample { bias_gauss: b / GAUSS, source: Box::new(e) })
        })
        .collect::<Result<Vec<_>>>()?;
    TrapMap::from_samples(samples)
}

/// Parses the column format `B_gauss z0_mm fx_Hz fy_Hz fz_Hz [rotation_rad]`.
pub fn parse_tabulated_map(text: &str, source: &Path) -> Result<TrapMap> {
    let parse_err = |line: usize, message: String| Error::Parse { path: source.to_path_buf(), line, message };
    let mut samples = Vec::new();
    let mut last_bias: Option<(f64, usize)> = None;
    let mut direction = 0.0;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let cols: Vec<f64> = content
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| parse_err(line_no, format!("cannot parse `{t}` as a number"))))
            .collect::<Result<_>>()?;
        if cols.len() != 5 && cols.len() != 6 {
            return Err(parse_err(line_no, format!("expected 5 or 6 columns, found {}", cols.len())));
        }
        if cols.iter().any(|c| !c.is_finite()) {
            return Err(parse_err(line_no, "non-finite value".into()));
        }
        let bias = cols[0] * GAUSS;
        if !(bias > 0.0) {
            return Err(parse_err(line_no, "bias must be positive".into()));
        }
        if !(cols[1] > 0.0) {
            return Err(parse_err(line_no, "z0 must be positive".into()));
        }
        if cols[2..5].iter().any(|f| !(*f > 0.0)) {
            return Err(parse_err(line_no, "frequencies must be positive".into()));
        }
        if let Some((prev, prev_line)) = last_bias {
            let step = bias - prev;
            if step == 0.0 || (direction != 0.0 && step.signum() != direction) {
                return Err(parse_err(
                    line_no,
                    format!("bias column not strictly monotone (compare line {prev_line})"),
                ));
            }
            direction = step.signum();
        }
        last_bias = Some((bias, line_no));
        samples.push(MapSample {
            bias_field: bias,
            minimum_distance: cols[1] * 1e-3,
            omega: [cols[2] * 2.0 * PI, cols[3] * 2.0 * PI, cols[4] * 2.0 * PI],
            rotation_angle: cols.get(5).copied().unwrap_or(0.0),
        });
    }
    if samples.len() < 2 {
        return Err(parse_err(text.lines().count().max(1), "table needs at least two data rows".into()));
    }
    TrapMap::from_samples(samples).map_err(|e| parse_err(0, e.to_string()))
}

pub fn load_tabulated_map(path: &Path) -> Result<TrapMap> {
    let text = std::fs::read_to_string(path)?;
    parse_tabulated_map(&text, path)
}

/// The endpoint values quoted for the experimental chip, as a two-row table.
pub fn endpoint_anchor_table() -> String {
    "# endpoint anchors\n# B_gauss z0_mm fx_Hz fy_Hz fz_Hz\n4.5 1.65 10 32 32\n21.5 0.45 15 616 616\n".to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use std::sync::OnceLock;

    fn map(samples: usize) -> TrapMap {
        build_trap_map(
            &ChipGeometry::default(),
            &PhysicalConstants::rb87(),
            (4.0 * GAUSS, 23.0 * GAUSS),
            samples,
            &CharacterizeOptions::default(),
        )
        .unwrap()
    }

    fn default_map() -> &'static TrapMap {
        static MAP: OnceLock<TrapMap> = OnceLock::new();
        MAP.get_or_init(|| map(256))
    }

    #[test]
    fn reproduces_nodes() {
        let m = default_map();
        for s in m.samples().iter().step_by(17) {
            let p = m.eval(s.bias_field).unwrap();
            assert!((p.z0 / s.minimum_distance - 1.0).abs() < 1e-12);
            for i in 0..3 {
                assert!((p.omega_sq[i] / s.omega[i].powi(2) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn node_slope_matches_sample_difference() {
        // the 3-point oracle carries an O(h^2) error of its own
        let m = map(1024);
        let s = m.samples();
        for k in (1..s.len() - 1).step_by(23) {
            let fd =
                (s[k + 1].minimum_distance - s[k - 1].minimum_distance) / (s[k + 1].bias_field - s[k - 1].bias_field);
            let p = m.eval(s[k].bias_field).unwrap();
            assert!((p.dz0_db / fd - 1.0).abs() < 1e-4, "node {k}: {} vs {fd}", p.dz0_db);
        }
    }

    #[test]
    fn refinement_converges_off_node() {
        let coarse = map(128);
        let fine = map(255);
        let (lo, hi) = coarse.bias_range();
        for k in 0..50 {
            let b = lo + (hi - lo) * (k as f64 + 0.37) / 50.0;
            let a = coarse.z0(b).unwrap();
            let c = fine.z0(b).unwrap();
            assert!((a / c - 1.0).abs() < 1e-6, "B = {} G: {}", b / GAUSS, (a / c - 1.0).abs());
        }
    }

    #[test]
    fn derivative_consistent_with_interpolant() {
        let m = default_map();
        let (lo, hi) = m.bias_range();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let b = rng.gen_range(lo + 0.01 * GAUSS..hi - 0.01 * GAUSS);
            let p = m.eval(b).unwrap();
            // a small step stays inside one cubic piece almost always; a
            // 4th-order stencil keeps the oracle error below the tolerance
            let h = 1e-4 * GAUSS;
            for i in 0..3 {
                let f = |x: f64| m.eval(x).unwrap().omega_sq[i];
                let fd = (-f(b + 2.0 * h) + 8.0 * f(b + h) - 8.0 * f(b - h) + f(b - 2.0 * h)) / (12.0 * h);
                assert!(
                    (p.domega_sq_db[i] / fd - 1.0).abs() < 1e-6,
                    "{i} at {}: {} vs {fd}",
                    b / GAUSS,
                    p.domega_sq_db[i]
                );
            }
        }
    }

    #[test]
    fn z0_decreasing_and_frequencies_increasing() {
        let m = default_map();
        for w in m.samples().windows(2) {
            assert!(w[1].minimum_distance < w[0].minimum_distance);
            assert!(w[1].omega[1] > w[0].omega[1]);
            assert!(w[1].omega[2] > w[0].omega[2]);
        }
    }

    #[test]
    fn out_of_range_is_rejected() {
        let m = default_map();
        assert!(matches!(m.eval(30.0 * GAUSS), Err(Error::OutOfRange { .. })));
        assert!(matches!(m.eval(f64::NAN), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn two_row_table_is_linear() {
        let m = parse_tabulated_map(&endpoint_anchor_table(), Path::new("anchors")).unwrap();
        let mid = 13.0 * GAUSS;
        let p = m.eval(mid).unwrap();
        assert!((p.z0 - 1.05e-3).abs() < 1e-15);
        let f_mid = |lo: f64, hi: f64| (2.0 * PI * lo).powi(2) * 0.5 + (2.0 * PI * hi).powi(2) * 0.5;
        assert!((p.omega_sq[1] / f_mid(32.0, 616.0) - 1.0).abs() < 1e-12);
        let end = m.eval(4.5 * GAUSS).unwrap();
        assert!((end.z0 - 1.65e-3).abs() < 1e-15);
        assert!((end.omega_sq[0].sqrt() / (2.0 * PI) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn table_round_trip() {
        let m = default_map();
        let text = m.to_table_string();
        let back = parse_tabulated_map(&text, Path::new("roundtrip")).unwrap();
        assert_eq!(back.samples().len(), m.samples().len());
        let (lo, hi) = m.bias_range();
        for k in 0..40 {
            let b = lo + (hi - lo) * (k as f64 + 0.5) / 40.0;
            let (p, q) = (m.eval(b).unwrap(), back.eval(b).unwrap());
            assert!((p.z0 / q.z0 - 1.0).abs() < 1e-14);
            for i in 0..3 {
                assert!((p.omega_sq[i] / q.omega_sq[i] - 1.0).abs() < 1e-14);
                assert!((p.domega_sq_db[i] / q.domega_sq_db[i] - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn duplicated_bias_rejected_with_line_number() {
        let text = "# B z0 fx fy fz\n4.5 1.65 10 32 32\n4.5 1.60 10 33 33\n21.5 0.45 15 616 616\n";
        match parse_tabulated_map(text, Path::new("dup.txt")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_rows_rejected() {
        let bad_freq = "4.5 1.65 10 -32 32\n21.5 0.45 15 616 616\n";
        assert!(matches!(parse_tabulated_map(bad_freq, Path::new("t")), Err(Error::Parse { line: 1, .. })));
        let bad_cols = "4.5 1.65 10 32\n";
        assert!(matches!(parse_tabulated_map(bad_cols, Path::new("t")), Err(Error::Parse { line: 1, .. })));
        let bad_num = "4.5 1.65 10 32 32\n21.5 x 15 616 616\n";
        assert!(matches!(parse_tabulated_map(bad_num, Path::new("t")), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn sample_failure_names_bias() {
        let err = build_trap_map(
            &ChipGeometry::default(),
            &PhysicalConstants::rb87(),
            (1e-9, 21.5 * GAUSS),
            16,
            &CharacterizeOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::MapSample { .. }), "{err}");
    }
}
