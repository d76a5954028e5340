//! Synthetic multi-stroke character classes.
//!
//! Each class is a fixed template of line and arc strokes in a canonical
//! writing order. Some classes share their geometry with another class and
//! differ only in stroke order. Samples perturb every stroke with a small
//! affine map, resample it at a random density and add per-point noise.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::ink::{Dataset, InkCharacter, LabelAlphabet, Point, Stroke};

/// Template coordinates live in the unit square (y downward).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Primitive {
    Line { from: (f64, f64), to: (f64, f64) },
    /// Arc about `center` from angle `start` to `end` (radians, y downward).
    Arc { center: (f64, f64), radius: f64, start: f64, end: f64 },
}

impl Primitive {
    fn at(&self, t: f64) -> (f64, f64) {
        match *self {
            Primitive::Line { from, to } => (from.0 + (to.0 - from.0) * t, from.1 + (to.1 - from.1) * t),
            Primitive::Arc { center, radius, start, end } => {
                let a = start + (end - start) * t;
                (center.0 + radius * a.cos(), center.1 + radius * a.sin())
            }
        }
    }

    fn length(&self) -> f64 {
        match *self {
            Primitive::Line { from, to } => (to.0 - from.0).hypot(to.1 - from.1),
            Primitive::Arc { radius, start, end, .. } => radius * (end - start).abs(),
        }
    }

    fn centroid(&self) -> (f64, f64) {
        let (a, b, c) = (self.at(0.0), self.at(0.5), self.at(1.0));
        ((a.0 + b.0 + c.0) / 3.0, (a.1 + b.1 + c.1) / 3.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    pub name: String,
    pub strokes: Vec<Primitive>,
}

fn line(x0: f64, y0: f64, x1: f64, y1: f64) -> Primitive {
    Primitive::Line {
        from: (x0, y0),
        to: (x1, y1),
    }
}

fn arc(cx: f64, cy: f64, r: f64, start: f64, end: f64) -> Primitive {
    Primitive::Arc {
        center: (cx, cy),
        radius: r,
        start,
        end,
    }
}

fn handcrafted() -> Vec<Template> {
    let t = |name: &str, strokes: Vec<Primitive>| Template {
        name: name.to_string(),
        strokes,
    };
    let cross_h = line(0.1, 0.5, 0.9, 0.5);
    let cross_v = line(0.5, 0.1, 0.5, 0.9);
    let hook = arc(0.5, 0.45, 0.35, PI, TAU);
    let stem = line(0.5, 0.45, 0.5, 0.95);
    vec![
        t("cross-hv", vec![cross_h, cross_v]),
        t("cross-vh", vec![cross_v, cross_h]),
        t("arch-as", vec![hook, stem]),
        t("arch-sa", vec![stem, hook]),
        t(
            "box",
            vec![
                line(0.15, 0.15, 0.15, 0.85),
                line(0.15, 0.15, 0.85, 0.15),
                line(0.85, 0.15, 0.85, 0.85),
                line(0.15, 0.85, 0.85, 0.85),
            ],
        ),
        t(
            "triangle",
            vec![
                line(0.5, 0.1, 0.1, 0.9),
                line(0.5, 0.1, 0.9, 0.9),
                line(0.1, 0.9, 0.9, 0.9),
            ],
        ),
        t("ex", vec![line(0.1, 0.1, 0.9, 0.9), line(0.9, 0.1, 0.1, 0.9)]),
        t(
            "three",
            vec![
                line(0.15, 0.2, 0.85, 0.2),
                line(0.2, 0.5, 0.8, 0.5),
                line(0.1, 0.8, 0.9, 0.8),
            ],
        ),
        t(
            "ring-bar",
            vec![arc(0.5, 0.5, 0.35, -FRAC_PI_2, 1.5 * PI), line(0.05, 0.5, 0.95, 0.5)],
        ),
        t(
            "gate",
            vec![
                line(0.1, 0.2, 0.9, 0.2),
                line(0.3, 0.2, 0.25, 0.9),
                line(0.7, 0.2, 0.72, 0.9),
            ],
        ),
        t(
            "hash",
            vec![
                line(0.35, 0.1, 0.3, 0.9),
                line(0.68, 0.1, 0.63, 0.9),
                line(0.1, 0.35, 0.9, 0.35),
                line(0.1, 0.65, 0.9, 0.65),
            ],
        ),
        t(
            "person",
            vec![arc(0.9, 0.1, 0.8, PI, FRAC_PI_2), arc(0.1, 0.1, 0.8, 0.0, FRAC_PI_2 * 0.6)],
        ),
        t(
            "comb",
            vec![
                line(0.1, 0.15, 0.9, 0.15),
                line(0.2, 0.15, 0.2, 0.85),
                line(0.5, 0.15, 0.5, 0.85),
                line(0.8, 0.15, 0.8, 0.85),
                line(0.1, 0.85, 0.9, 0.85),
                arc(0.5, 0.5, 0.12, 0.0, TAU),
            ],
        ),
    ]
}

/// Deterministic extra template for classes past the handcrafted set.
fn procedural(class: usize) -> Template {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0000 + class as u64);
    let n = rng.random_range(2..=6);
    let mut p = || rng.random_range(0.05..0.95);
    let strokes = (0..n)
        .map(|i| {
            if i % 3 == 2 {
                let (cx, cy) = (p(), p());
                let r = 0.1 + 0.25 * p();
                let start = TAU * p();
                arc(cx, cy, r, start, start + PI * (0.5 + p()))
            } else {
                line(p(), p(), p(), p())
            }
        })
        .collect();
    Template {
        name: format!("gen{class:03}"),
        strokes,
    }
}

/// Template of class `class`.
pub fn template(class: usize) -> Template {
    let mut hand = handcrafted();
    if class < hand.len() {
        hand.swap_remove(class)
    } else {
        procedural(class)
    }
}

/// Class pairs whose templates draw the same strokes in a different order.
pub fn confusable_pairs() -> Vec<(usize, usize)> {
    vec![(0, 1), (2, 3)]
}

fn render(strokes: &[Primitive], spacing: f64) -> InkCharacter {
    let strokes = strokes
        .iter()
        .map(|p| {
            let n = ((p.length() / spacing).ceil() as usize).max(1);
            Stroke::new(
                (0..=n)
                    .map(|i| {
                        let (x, y) = p.at(i as f64 / n as f64);
                        Point::new(x * 100.0, y * 100.0)
                    })
                    .collect(),
            )
        })
        .collect();
    InkCharacter::new(strokes)
}

/// Noise-free rendering of a class template.
pub fn template_ink(class: usize) -> InkCharacter {
    render(&template(class).strokes, 0.02).with_label(class)
}

fn sample(class: usize, tpl: &Template, rng: &mut ChaCha8Rng) -> InkCharacter {
    let noise = Normal::new(0.0, 0.008).unwrap();
    let strokes = tpl
        .strokes
        .iter()
        .map(|prim| {
            let (cx, cy) = prim.centroid();
            let angle = rng.random_range(-0.12..0.12);
            let scale = rng.random_range(0.88..1.12);
            let shear = rng.random_range(-0.08..0.08);
            let (dx, dy) = (rng.random_range(-0.04..0.04), rng.random_range(-0.04..0.04));
            let (sin, cos) = f64::sin_cos(angle);
            let spacing = rng.random_range(0.02..0.06);
            let n = ((prim.length() * scale / spacing).ceil() as usize).max(1);
            let points = (0..=n)
                .map(|i| {
                    let (x, y) = prim.at(i as f64 / n as f64);
                    let (ux, uy) = ((x - cx) * scale, (y - cy) * scale);
                    let ux = ux + shear * uy;
                    let (rx, ry) = (ux * cos - uy * sin, ux * sin + uy * cos);
                    let px = cx + rx + dx + noise.sample(rng);
                    let py = cy + ry + dy + noise.sample(rng);
                    Point::new(px * 100.0, py * 100.0)
                })
                .collect();
            Stroke::new(points)
        })
        .collect();
    let mut ink = InkCharacter::new(strokes).with_label(class);
    ink.writer = Some("synth".to_string());
    ink
}

/// Train and test sets with exactly `per_class_train` / `per_class_test`
/// samples of each class, class-major order.
pub fn synth_dataset(
    class_count: usize,
    per_class_train: usize,
    per_class_test: usize,
    seed: u64,
) -> (Dataset, Dataset) {
    let class_count = class_count.max(2);
    let templates: Vec<Template> = (0..class_count).map(template).collect();
    let alphabet = LabelAlphabet::new(templates.iter().map(|t| t.name.clone()))
        .expect("template names are unique");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |per_class: usize| {
        let samples = templates
            .iter()
            .enumerate()
            .flat_map(|(c, t)| (0..per_class).map(move |_| (c, t)).collect::<Vec<_>>())
            .map(|(c, t)| sample(c, t, &mut rng))
            .collect();
        Dataset::new(samples, alphabet.clone()).expect("labels in range")
    };
    let train = draw(per_class_train);
    let test = draw(per_class_test);
    (train, test)
}
