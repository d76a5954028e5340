//! Interpolation, box normalization and point-drop augmentation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ink::{InkCharacter, Point, Stroke};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    None,
    #[default]
    Linear,
    Spline,
}

impl Interpolation {
    pub fn as_str(&self) -> &'static str {
        match self {
            Interpolation::None => "none",
            Interpolation::Linear => "linear",
            Interpolation::Spline => "spline",
        }
    }
}

impl std::str::FromStr for Interpolation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "none" => Ok(Interpolation::None),
            "linear" => Ok(Interpolation::Linear),
            "spline" => Ok(Interpolation::Spline),
            other => Err(format!("unknown interpolation {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    /// Largest allowed distance between consecutive points, in grid cells.
    pub max_gap: f64,
    pub method: Interpolation,
    pub drop_prob: f64,
    pub seed: u64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            max_gap: 1.0,
            method: Interpolation::Linear,
            drop_prob: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PreprocessError {
    #[error("max_gap must be positive and finite, got {0}")]
    NonPositiveGap(f64),
    #[error("drop_prob must lie in [0, 1), got {0}")]
    BadDropProbability(f64),
}

impl PreprocessConfig {
    pub fn check(&self) -> Result<(), PreprocessError> {
        if !(self.max_gap > 0.0 && self.max_gap.is_finite()) {
            return Err(PreprocessError::NonPositiveGap(self.max_gap));
        }
        if !(0.0..1.0).contains(&self.drop_prob) {
            return Err(PreprocessError::BadDropProbability(self.drop_prob));
        }
        Ok(())
    }
}

fn check_gap(max_gap: f64) -> Result<(), PreprocessError> {
    if max_gap > 0.0 && max_gap.is_finite() {
        Ok(())
    } else {
        Err(PreprocessError::NonPositiveGap(max_gap))
    }
}

fn lerp(a: Point, b: Point, t: f64) -> Point {
    Point::new(a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t)
}

pub fn interpolate_linear(stroke: &Stroke, max_gap: f64) -> Result<Stroke, PreprocessError> {
    check_gap(max_gap)?;
    let pts = &stroke.points;
    let mut out = Vec::with_capacity(pts.len());
    for (i, &p) in pts.iter().enumerate() {
        if i > 0 {
            let prev = pts[i - 1];
            let d = prev.distance(&p);
            if d > max_gap {
                let pieces = (d / max_gap).ceil() as usize;
                for k in 1..pieces {
                    out.push(lerp(prev, p, k as f64 / pieces as f64));
                }
            }
        }
        out.push(p);
    }
    Ok(Stroke::new(out))
}

/// Resamples along a centripetal Catmull-Rom curve through the stroke's points.
///
/// The end tangents come from duplicating the first and last point. Strokes
/// with fewer than three points are interpolated linearly.
pub fn interpolate_spline(stroke: &Stroke, max_gap: f64) -> Result<Stroke, PreprocessError> {
    check_gap(max_gap)?;
    let pts = &stroke.points;
    if pts.len() < 3 {
        return interpolate_linear(stroke, max_gap);
    }
    let n = pts.len();
    let at = |i: isize| pts[i.clamp(0, n as isize - 1) as usize];
    let mut out = vec![pts[0]];
    for i in 0..n - 1 {
        let (p0, p1, p2, p3) = (
            at(i as isize - 1),
            at(i as isize),
            at(i as isize + 1),
            at(i as isize + 2),
        );
        if p1.distance(&p2) > max_gap {
            let seg = CatmullRom::new(p0, p1, p2, p3);
            let mut pieces = (p1.distance(&p2) / max_gap).ceil() as usize;
            let mut samples;
            loop {
                samples = (1..pieces)
                    .map(|k| seg.eval(k as f64 / pieces as f64))
                    .collect::<Vec<_>>();
                let mut prev = p1;
                let mut worst: f64 = 0.0;
                for q in samples.iter().chain(std::iter::once(&p2)) {
                    worst = worst.max(prev.distance(q));
                    prev = *q;
                }
                if worst <= max_gap || pieces > 1 << 20 {
                    break;
                }
                pieces *= 2;
            }
            out.extend(samples);
        }
        out.push(p2);
    }
    Ok(Stroke::new(out))
}

/// One centripetal Catmull-Rom span between `p1` and `p2`, evaluated with the
/// Barry-Goldman pyramid. `u` runs over [0, 1].
struct CatmullRom {
    p: [Point; 4],
    t: [f64; 4],
}

impl CatmullRom {
    fn new(p0: Point, p1: Point, p2: Point, p3: Point) -> Self {
        let knot = |a: Point, b: Point| a.distance(&b).sqrt();
        let t1 = knot(p0, p1);
        let t2 = t1 + knot(p1, p2);
        let t3 = t2 + knot(p2, p3);
        CatmullRom {
            p: [p0, p1, p2, p3],
            t: [0.0, t1, t2, t3],
        }
    }

    fn eval(&self, u: f64) -> Point {
        let [p0, p1, p2, p3] = self.p;
        let [t0, t1, t2, t3] = self.t;
        let t = t1 + (t2 - t1) * u;
        // Coincident knots only arise from duplicated endpoints, where both
        // blended points are equal.
        let blend = |a: Point, b: Point, ta: f64, tb: f64| {
            if tb - ta <= 0.0 {
                b
            } else {
                lerp(a, b, (t - ta) / (tb - ta))
            }
        };
        let a1 = blend(p0, p1, t0, t1);
        let a2 = blend(p1, p2, t1, t2);
        let a3 = blend(p2, p3, t2, t3);
        let b1 = blend(a1, a2, t0, t2);
        let b2 = blend(a2, a3, t1, t3);
        blend(b1, b2, t1, t2)
    }
}

pub fn interpolate(
    ink: &InkCharacter,
    method: Interpolation,
    max_gap: f64,
) -> Result<InkCharacter, PreprocessError> {
    let strokes = ink
        .strokes
        .iter()
        .map(|s| match method {
            Interpolation::None => check_gap(max_gap).map(|_| s.clone()),
            Interpolation::Linear => interpolate_linear(s, max_gap),
            Interpolation::Spline => interpolate_spline(s, max_gap),
        })
        .collect::<Result<_, _>>()?;
    Ok(InkCharacter {
        strokes,
        label: ink.label,
        writer: ink.writer.clone(),
    })
}

/// Aspect-preserving map of the bounding box into `[0, size-1]^2`, centered
/// on the shorter axis.
pub fn normalize_box(ink: &InkCharacter, size: usize) -> InkCharacter {
    let Some(bb) = ink.bounding_box() else {
        return ink.clone();
    };
    let span = size.saturating_sub(1) as f64;
    let extent = bb.width().max(bb.height());
    let scale = if extent > 0.0 { span / extent } else { 0.0 };
    let off_x = (span - bb.width() * scale) / 2.0;
    let off_y = (span - bb.height() * scale) / 2.0;
    ink.map_points(|p| {
        Point::new(
            (off_x + (p.x - bb.min_x) * scale).clamp(0.0, span),
            (off_y + (p.y - bb.min_y) * scale).clamp(0.0, span),
        )
    })
}

/// Drops each interior point with probability `drop_prob`; stroke endpoints
/// always survive.
pub fn augment_drop_points(ink: &InkCharacter, drop_prob: f64, seed: u64) -> InkCharacter {
    if drop_prob <= 0.0 {
        return ink.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let strokes = ink
        .strokes
        .iter()
        .map(|s| {
            let n = s.points.len();
            let points = s
                .points
                .iter()
                .enumerate()
                .filter(|&(i, _)| i == 0 || i + 1 == n || rng.random::<f64>() >= drop_prob)
                .map(|(_, p)| *p)
                .collect();
            Stroke::new(points)
        })
        .collect();
    InkCharacter {
        strokes,
        label: ink.label,
        writer: ink.writer.clone(),
    }
}

/// Box normalization into a `size` grid followed by the configured
/// interpolation. Augmentation is applied separately by the trainer.
pub fn preprocess(
    ink: &InkCharacter,
    config: &PreprocessConfig,
    size: usize,
) -> Result<InkCharacter, PreprocessError> {
    config.check()?;
    interpolate(&normalize_box(ink, size), config.method, config.max_gap)
}
