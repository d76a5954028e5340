//! Eight-directional feature extraction.
//!
//! Pipeline: moment normalization onto a `G x G` grid, pen-up (virtual)
//! segments between consecutive strokes, per-segment decomposition onto the
//! two adjacent reference directions (45 degree steps, y downward),
//! accumulation along Bresenham cells, Gaussian blurring sampled at an
//! `n x n` grid of window centers, and global max normalization.

use std::f64::consts::FRAC_1_SQRT_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ink::{InkCharacter, Point};
use crate::stroke_maps::{bresenham, round_cell};

pub const DIRECTIONS: usize = 8;

/// Reference unit vectors, direction `d` at `45 * d` degrees.
const REFERENCE: [(f64, f64); DIRECTIONS] = [
    (1.0, 0.0),
    (FRAC_1_SQRT_2, FRAC_1_SQRT_2),
    (0.0, 1.0),
    (-FRAC_1_SQRT_2, FRAC_1_SQRT_2),
    (-1.0, 0.0),
    (-FRAC_1_SQRT_2, -FRAC_1_SQRT_2),
    (0.0, -1.0),
    (FRAC_1_SQRT_2, -FRAC_1_SQRT_2),
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EightDirConfig {
    /// Accumulation grid side `G`.
    pub grid: usize,
    /// Gaussian standard deviation in cells.
    pub sigma: f64,
    /// Kernel support as a multiple of `sigma`.
    pub truncate: f64,
    /// Sampling grid side; the feature length is `8 * samples^2`.
    pub samples: usize,
    /// Weight of pen-up segments relative to real ones.
    pub virtual_weight: f64,
}

impl Default for EightDirConfig {
    fn default() -> Self {
        EightDirConfig {
            grid: 64,
            sigma: 64.0 / 16.0,
            truncate: 2.0,
            samples: 8,
            virtual_weight: 0.5,
        }
    }
}

impl EightDirConfig {
    pub fn feature_len(&self) -> usize {
        DIRECTIONS * self.samples * self.samples
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DirectionError {
    #[error("segment has zero length")]
    ZeroLengthSegment,
}

/// Direction-major feature vector (`d * n^2 + row * n + col`) in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirFeature {
    pub values: Vec<f32>,
}

impl DirFeature {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// The `n x n` block of direction `d`.
    pub fn block(&self, d: usize) -> &[f32] {
        let n = self.values.len() / DIRECTIONS;
        &self.values[d * n..(d + 1) * n]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub from: Point,
    pub to: Point,
    pub is_virtual: bool,
}

/// Real segments between consecutive points of each stroke, plus one virtual
/// segment per pen-up from a stroke's last point to the next stroke's first.
pub fn add_virtual_strokes(ink: &InkCharacter) -> Vec<Segment> {
    let mut segs = Vec::with_capacity(ink.point_count() + ink.strokes.len());
    for (i, stroke) in ink.strokes.iter().enumerate() {
        if i > 0 {
            if let (Some(&from), Some(&to)) = (ink.strokes[i - 1].points.last(), stroke.points.first()) {
                segs.push(Segment {
                    from,
                    to,
                    is_virtual: true,
                });
            }
        }
        for w in stroke.points.windows(2) {
            segs.push(Segment {
                from: w[0],
                to: w[1],
                is_virtual: false,
            });
        }
    }
    segs
}

/// Centroid to the grid center, isotropic scale so that +-2 standard
/// deviations of the wider axis span `[0, G-1]`; zero spread keeps unit scale.
pub fn moment_normalize(ink: &InkCharacter, grid: usize) -> InkCharacter {
    let n = ink.point_count();
    if n == 0 {
        return ink.clone();
    }
    let nf = n as f64;
    let (sx, sy) = ink.points().fold((0.0, 0.0), |(a, b), p| (a + p.x, b + p.y));
    let (mx, my) = (sx / nf, sy / nf);
    let (vx, vy) = ink.points().fold((0.0, 0.0), |(a, b), p| {
        (a + (p.x - mx) * (p.x - mx), b + (p.y - my) * (p.y - my))
    });
    let sd = (vx / nf).sqrt().max((vy / nf).sqrt());
    let span = grid.saturating_sub(1) as f64;
    let scale = if sd > 0.0 { span / (4.0 * sd) } else { 1.0 };
    let center = span / 2.0;
    ink.map_points(|p| {
        Point::new(
            (center + (p.x - mx) * scale).clamp(0.0, span),
            (center + (p.y - my) * scale).clamp(0.0, span),
        )
    })
}

/// Parallelogram decomposition of a direction onto its two neighboring
/// reference directions.
pub fn decompose_direction(dx: f64, dy: f64) -> Result<[f64; DIRECTIONS], DirectionError> {
    let len = dx.hypot(dy);
    if len.is_nan() || len <= 0.0 {
        return Err(DirectionError::ZeroLengthSegment);
    }
    let (ux, uy) = (dx / len, dy / len);
    let mut angle = uy.atan2(ux);
    if angle < 0.0 {
        angle += std::f64::consts::TAU;
    }
    let sector = ((angle / std::f64::consts::FRAC_PI_4).floor() as usize) % DIRECTIONS;
    let next = (sector + 1) % DIRECTIONS;
    let (ax, ay) = REFERENCE[sector];
    let (bx, by) = REFERENCE[next];
    let det = ax * by - ay * bx;
    let wa = ((ux * by - uy * bx) / det).max(0.0);
    let wb = ((ax * uy - ay * ux) / det).max(0.0);
    let mut w = [0.0; DIRECTIONS];
    w[sector] = wa;
    w[next] += wb;
    Ok(w)
}

/// Eight `G x G` accumulation planes.
#[derive(Debug, Clone, PartialEq)]
pub struct DirPlaneSet {
    pub grid: usize,
    pub planes: Vec<Vec<f64>>,
}

impl DirPlaneSet {
    pub fn new(grid: usize) -> Self {
        DirPlaneSet {
            grid,
            planes: vec![vec![0.0; grid * grid]; DIRECTIONS],
        }
    }

    fn deposit(&mut self, seg: &Segment, weight: f64) {
        let (dx, dy) = (seg.to.x - seg.from.x, seg.to.y - seg.from.y);
        let Ok(dirs) = decompose_direction(dx, dy) else {
            return;
        };
        let max = self.grid as i64 - 1;
        let cells = bresenham(
            round_cell(seg.from.x).clamp(0, max),
            round_cell(seg.from.y).clamp(0, max),
            round_cell(seg.to.x).clamp(0, max),
            round_cell(seg.to.y).clamp(0, max),
        );
        // Mass proportional to segment length, spread evenly over its cells.
        let mass = weight * dx.hypot(dy) / cells.len() as f64;
        for (d, &wd) in dirs.iter().enumerate() {
            if wd <= 0.0 {
                continue;
            }
            let plane = &mut self.planes[d];
            for &(x, y) in &cells {
                plane[y as usize * self.grid + x as usize] += wd * mass;
            }
        }
    }

    /// Gaussian-weighted sums around each of the `n x n` window centers.
    fn sample(&self, config: &EightDirConfig) -> Vec<f64> {
        let g = self.grid;
        let n = config.samples;
        let window = g as f64 / n as f64;
        let support = config.truncate * config.sigma;
        let two_var = 2.0 * config.sigma * config.sigma;
        // taps[k][x]: 1-D kernel weight of cell x for center k
        let taps: Vec<Vec<f64>> = (0..n)
            .map(|k| {
                let c = (k as f64 + 0.5) * window - 0.5;
                (0..g)
                    .map(|x| {
                        let d = x as f64 - c;
                        if d.abs() <= support {
                            (-d * d / two_var).exp()
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        let mut out = Vec::with_capacity(DIRECTIONS * n * n);
        let mut rows = vec![0.0; g];
        for plane in &self.planes {
            for ty in &taps {
                // collapse rows first, then columns
                rows.iter_mut().for_each(|r| *r = 0.0);
                for (y, &wy) in ty.iter().enumerate() {
                    if wy == 0.0 {
                        continue;
                    }
                    for (r, &v) in rows.iter_mut().zip(&plane[y * g..(y + 1) * g]) {
                        *r += wy * v;
                    }
                }
                for tx in &taps {
                    out.push(tx.iter().zip(&rows).map(|(a, b)| a * b).sum());
                }
            }
        }
        out
    }
}

pub fn extract(ink: &InkCharacter) -> DirFeature {
    extract_with(ink, &EightDirConfig::default())
}

pub fn extract_with(ink: &InkCharacter, config: &EightDirConfig) -> DirFeature {
    let normalized = moment_normalize(ink, config.grid);
    let mut planes = DirPlaneSet::new(config.grid);
    for seg in add_virtual_strokes(&normalized) {
        let w = if seg.is_virtual { config.virtual_weight } else { 1.0 };
        if w > 0.0 {
            planes.deposit(&seg, w);
        }
    }
    let raw = planes.sample(config);
    let max = raw.iter().cloned().fold(0.0, f64::max);
    let values = raw
        .iter()
        .map(|&v| if max > 0.0 { (v / max).clamp(0.0, 1.0) as f32 } else { 0.0 })
        .collect();
    DirFeature { values }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ink::Stroke;
    use proptest::prelude::*;

    #[test]
    fn virtual_segments_connect_strokes() {
        let one = InkCharacter::new(vec![Stroke::from_xy(&[(0.0, 0.0), (1.0, 0.0)])]);
        assert_eq!(add_virtual_strokes(&one).iter().filter(|s| s.is_virtual).count(), 0);
        let three = InkCharacter::new(vec![
            Stroke::from_xy(&[(0.0, 0.0), (1.0, 0.0)]),
            Stroke::from_xy(&[(2.0, 2.0)]),
            Stroke::from_xy(&[(5.0, 1.0), (6.0, 6.0)]),
        ]);
        let virt: Vec<Segment> = add_virtual_strokes(&three).into_iter().filter(|s| s.is_virtual).collect();
        assert_eq!(virt.len(), 2);
        assert_eq!((virt[0].from, virt[0].to), (Point::new(1.0, 0.0), Point::new(2.0, 2.0)));
        assert_eq!((virt[1].from, virt[1].to), (Point::new(2.0, 2.0), Point::new(5.0, 1.0)));
    }

    #[test]
    fn moment_normalization_centers() {
        let ink = InkCharacter::new(vec![Stroke::from_xy(&[(-3.0, -1.0), (3.0, 1.0), (-3.0, 1.0), (3.0, -1.0)])]);
        let n = moment_normalize(&ink, 64);
        let (sx, sy) = n.points().fold((0.0, 0.0), |(a, b), p| (a + p.x, b + p.y));
        assert!((sx / 4.0 - 31.5).abs() < 1e-12 && (sy / 4.0 - 31.5).abs() < 1e-12);

        let dot = InkCharacter::new(vec![Stroke::from_xy(&[(7.0, -2.0)])]);
        assert_eq!(moment_normalize(&dot, 64).strokes[0].points[0], Point::new(31.5, 31.5));
    }

    #[test]
    fn aligned_directions_take_all_weight() {
        let w = decompose_direction(1.0, 0.0).unwrap();
        assert_eq!(w, [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let w = decompose_direction(0.0, 1.0).unwrap();
        assert_eq!(w[2], 1.0);
        assert_eq!(w.iter().sum::<f64>(), 1.0);
        for d in 0..8 {
            let (x, y) = REFERENCE[d];
            let w = decompose_direction(x * 3.0, y * 3.0).unwrap();
            assert!((w[d] - 1.0).abs() < 1e-12, "{d}: {w:?}");
            assert!(w.iter().enumerate().all(|(i, &v)| i == d || v.abs() < 1e-12));
        }
    }

    #[test]
    fn between_references_splits_evenly() {
        let a = 22.5f64.to_radians();
        let w = decompose_direction(a.cos(), a.sin()).unwrap();
        // analytic: sin(22.5) / sin(45) on both neighbours
        let expect = 22.5f64.to_radians().sin() / 45f64.to_radians().sin();
        assert!((w[0] - expect).abs() < 1e-12 && (w[1] - expect).abs() < 1e-12);
        assert!(w[2..].iter().all(|&v| v == 0.0));
        assert!(matches!(decompose_direction(0.0, 0.0), Err(DirectionError::ZeroLengthSegment)));
    }

    #[test]
    fn dot_has_zero_features() {
        let dot = InkCharacter::new(vec![Stroke::from_xy(&[(3.0, 3.0)])]);
        let f = extract(&dot);
        assert_eq!(f.len(), 512);
        assert!(f.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn horizontal_stroke_fills_direction_zero_only() {
        let ink = InkCharacter::new(vec![Stroke::from_xy(&[(0.0, 5.0), (40.0, 5.0), (100.0, 5.0)])]);
        let f = extract(&ink);
        assert!(f.block(0).iter().any(|&v| v > 0.0));
        for d in 1..8 {
            assert!(f.block(d).iter().all(|&v| v == 0.0), "direction {d}");
        }
        assert_eq!(f.values.iter().cloned().fold(0.0, f32::max), 1.0);
    }

    #[test]
    fn slight_wobble_stays_mostly_horizontal() {
        let pts: Vec<(f64, f64)> = (0..=40).map(|i| (i as f64, if i % 2 == 0 { 5.0 } else { 5.1 })).collect();
        let f = extract(&InkCharacter::new(vec![Stroke::from_xy(&pts)]));
        let total: f32 = f.values.iter().sum();
        let flat: f32 = f.block(0).iter().chain(f.block(4)).sum();
        assert!(flat > 0.8 * total, "{flat} of {total}");
    }

    fn arb_ink() -> impl Strategy<Value = InkCharacter> {
        // quarter-unit grid keeps translations exact
        let pt = (-200i32..200, -200i32..200).prop_map(|(x, y)| (x as f64 / 4.0, y as f64 / 4.0));
        let stroke = prop::collection::vec(pt, 1..10).prop_map(|v| Stroke::from_xy(&v));
        prop::collection::vec(stroke, 1..5).prop_map(InkCharacter::new)
    }

    proptest! {
        #[test]
        fn features_in_unit_range(ink in arb_ink()) {
            let f = extract(&ink);
            prop_assert!(f.values.iter().all(|v| (0.0..=1.0).contains(v)));
            let max = f.values.iter().cloned().fold(0.0, f32::max);
            prop_assert!(max == 0.0 || max == 1.0);
        }

        #[test]
        fn translation_and_scale_invariance(ink in arb_ink(), tx in -64i32..64, ty in -64i32..64) {
            let base = extract(&ink);
            let moved = extract(&ink.map_points(|p| Point::new(p.x + tx as f64, p.y + ty as f64)));
            let scaled = extract(&ink.map_points(|p| Point::new(p.x * 2.0, p.y * 2.0)));
            for i in 0..base.len() {
                prop_assert!((base.values[i] - moved.values[i]).abs() <= 1e-6);
                prop_assert!((base.values[i] - scaled.values[i]).abs() <= 1e-6);
            }
        }

        #[test]
        fn virtual_segments_leave_points_alone(ink in arb_ink()) {
            let segs = add_virtual_strokes(&ink);
            let real: Vec<Segment> = segs.iter().filter(|s| !s.is_virtual).cloned().collect();
            let expected: usize = ink.strokes.iter().map(|s| s.len() - 1).sum();
            prop_assert_eq!(real.len(), expected);
            prop_assert_eq!(segs.len() - real.len(), ink.strokes.len() - 1);
        }
    }
}
