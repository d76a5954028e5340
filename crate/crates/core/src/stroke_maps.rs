//! Binary per-stroke rasterization and the writing-order map stack.

use thiserror::Error;

use crate::ink::{InkCharacter, Stroke};

pub const DEFAULT_STACK_DEPTH: usize = 28;
pub const DEFAULT_MAP_SIZE: usize = 32;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RasterError {
    #[error("point ({x}, {y}) outside the [0, {max}] grid")]
    CoordinateOutOfRange { x: f64, y: f64, max: usize },
    #[error("stack depth and map size must be positive")]
    EmptyGeometry,
}

/// Cells visited by the Bresenham line from `(x0, y0)` to `(x1, y1)`, both
/// endpoints included.
pub fn bresenham(x0: i64, y0: i64, x1: i64, y1: i64) -> Vec<(i64, i64)> {
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    let (mut x, mut y) = (x0, y0);
    let mut cells = Vec::with_capacity((dx.max(-dy) + 1) as usize);
    loop {
        cells.push((x, y));
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
    cells
}

/// Half-up rounding to the nearest cell index.
pub fn round_cell(v: f64) -> i64 {
    (v + 0.5).floor() as i64
}

/// A square binary image, row-major (`y * size + x`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMap {
    size: usize,
    cells: Vec<u8>,
}

impl BinaryMap {
    pub fn new(size: usize) -> Self {
        BinaryMap {
            size,
            cells: vec![0; size * size],
        }
    }

    /// Wraps `size * size` row-major cells; nonzero means ink.
    pub fn from_cells(size: usize, cells: Vec<u8>) -> Option<Self> {
        (cells.len() == size * size).then(|| BinaryMap {
            size,
            cells: cells.into_iter().map(|c| u8::from(c != 0)).collect(),
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.cells[y * self.size + x] != 0
    }

    pub fn set(&mut self, x: usize, y: usize) {
        self.cells[y * self.size + x] = 1;
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    pub fn popcount(&self) -> usize {
        self.cells.iter().filter(|&&c| c != 0).count()
    }

    pub fn or_assign(&mut self, other: &BinaryMap) {
        for (a, b) in self.cells.iter_mut().zip(&other.cells) {
            *a |= *b;
        }
    }

    /// Binary PGM (P5) encoding, ink drawn white.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.size, self.size).into_bytes();
        out.extend(self.cells.iter().map(|&c| if c != 0 { 255 } else { 0 }));
        out
    }
}

pub fn rasterize_stroke(stroke: &Stroke, size: usize) -> Result<BinaryMap, RasterError> {
    let mut map = BinaryMap::new(size);
    draw_stroke(&mut map, stroke)?;
    Ok(map)
}

fn draw_stroke(map: &mut BinaryMap, stroke: &Stroke) -> Result<(), RasterError> {
    let max = map.size.saturating_sub(1);
    let mut cells = Vec::with_capacity(stroke.points.len());
    for p in &stroke.points {
        if !(p.x >= 0.0 && p.y >= 0.0 && p.x <= max as f64 && p.y <= max as f64) {
            return Err(RasterError::CoordinateOutOfRange { x: p.x, y: p.y, max });
        }
        cells.push((round_cell(p.x).min(max as i64), round_cell(p.y).min(max as i64)));
    }
    if let [(x, y)] = cells[..] {
        map.set(x as usize, y as usize);
    }
    for w in cells.windows(2) {
        for (x, y) in bresenham(w[0].0, w[0].1, w[1].0, w[1].1) {
            map.set(x as usize, y as usize);
        }
    }
    Ok(())
}

/// `depth` binary maps of `size x size`, one per stroke in writing order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StrokeMapStack {
    depth: usize,
    size: usize,
    data: Vec<u8>,
}

impl StrokeMapStack {
    pub fn zeros(depth: usize, size: usize) -> Self {
        StrokeMapStack {
            depth,
            size,
            data: vec![0; depth * size * size],
        }
    }

    pub fn from_cells(depth: usize, size: usize, cells: Vec<u8>) -> Option<Self> {
        (cells.len() == depth * size * size).then(|| StrokeMapStack {
            depth,
            size,
            data: cells.into_iter().map(|c| u8::from(c != 0)).collect(),
        })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Row-major `(depth, size, size)` cells.
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn map(&self, i: usize) -> BinaryMap {
        let n = self.size * self.size;
        BinaryMap {
            size: self.size,
            cells: self.data[i * n..(i + 1) * n].to_vec(),
        }
    }

    fn or_map(&mut self, i: usize, map: &BinaryMap) {
        let n = self.size * self.size;
        for (a, b) in self.data[i * n..(i + 1) * n].iter_mut().zip(&map.cells) {
            *a |= *b;
        }
    }

    pub fn union(&self) -> BinaryMap {
        let mut out = BinaryMap::new(self.size);
        for i in 0..self.depth {
            out.or_assign(&self.map(i));
        }
        out
    }
}

/// Stacks per-stroke rasterizations in writing order.
///
/// Maps past the stroke count stay all-zero. With more strokes than maps, the
/// surplus strokes are OR-merged into the last map.
pub fn build_stack(
    ink: &InkCharacter,
    depth: usize,
    size: usize,
) -> Result<StrokeMapStack, RasterError> {
    if depth == 0 || size == 0 {
        return Err(RasterError::EmptyGeometry);
    }
    let mut stack = StrokeMapStack::zeros(depth, size);
    for (i, stroke) in ink.strokes.iter().enumerate() {
        let map = rasterize_stroke(stroke, size)?;
        stack.or_map(i.min(depth - 1), &map);
    }
    Ok(stack)
}

/// Offline bitmap: OR of every stroke's rasterization.
pub fn to_static_image(ink: &InkCharacter, size: usize) -> Result<BinaryMap, RasterError> {
    let mut map = BinaryMap::new(size);
    for stroke in &ink.strokes {
        draw_stroke(&mut map, stroke)?;
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn vertical_line_fills_column() {
        let m = rasterize_stroke(&Stroke::from_xy(&[(0.0, 0.0), (0.0, 31.0)]), 32).unwrap();
        assert_eq!(m.popcount(), 32);
        assert!((0..32).all(|y| m.get(0, y)));
    }

    #[test]
    fn diagonal_line_hits_main_diagonal() {
        let m = rasterize_stroke(&Stroke::from_xy(&[(0.0, 0.0), (31.0, 31.0)]), 32).unwrap();
        assert_eq!(m.popcount(), 32);
        assert!((0..32).all(|i| m.get(i, i)));
    }

    #[test]
    fn dot_sets_one_cell() {
        let m = rasterize_stroke(&Stroke::from_xy(&[(5.0, 5.0)]), 32).unwrap();
        assert_eq!(m.popcount(), 1);
        assert!(m.get(5, 5));
    }

    #[test]
    fn half_coordinates_round_up() {
        let m = rasterize_stroke(&Stroke::from_xy(&[(15.5, 2.49)]), 32).unwrap();
        assert!(m.get(16, 2));
    }

    #[test]
    fn out_of_range_is_rejected() {
        assert!(matches!(
            rasterize_stroke(&Stroke::from_xy(&[(0.0, 32.0)]), 32),
            Err(RasterError::CoordinateOutOfRange { .. })
        ));
        assert!(rasterize_stroke(&Stroke::from_xy(&[(-0.1, 3.0)]), 32).is_err());
    }

    fn hline(y: f64) -> Stroke {
        Stroke::from_xy(&[(2.0, y), (20.0, y)])
    }

    #[test]
    fn padding_rule() {
        let ink = InkCharacter::new(vec![hline(1.0), hline(5.0)]);
        let st = build_stack(&ink, 28, 32).unwrap();
        assert!(st.map(0).popcount() > 0 && st.map(1).popcount() > 0);
        assert!((2..28).all(|i| st.map(i).popcount() == 0));
    }

    #[test]
    fn overflow_strokes_merge_into_last_map() {
        let strokes: Vec<Stroke> = (0..30).map(|i| hline(i as f64)).collect();
        let ink = InkCharacter::new(strokes.clone());
        let st = build_stack(&ink, 28, 32).unwrap();
        for i in 0..27 {
            assert_eq!(st.map(i), rasterize_stroke(&strokes[i], 32).unwrap());
        }
        let mut tail = BinaryMap::new(32);
        for s in &strokes[27..] {
            tail.or_assign(&rasterize_stroke(s, 32).unwrap());
        }
        assert_eq!(st.map(27), tail);
    }

    #[test]
    fn static_image_of_single_stroke() {
        let s = Stroke::from_xy(&[(3.0, 4.0), (17.2, 29.9), (30.0, 1.0)]);
        let ink = InkCharacter::new(vec![s.clone()]);
        assert_eq!(to_static_image(&ink, 32).unwrap(), rasterize_stroke(&s, 32).unwrap());
    }

    #[test]
    fn disjoint_strokes_add_popcounts() {
        let a = Stroke::from_xy(&[(1.0, 1.0), (10.0, 1.0)]);
        let b = Stroke::from_xy(&[(1.0, 20.0), (1.0, 30.0), (9.0, 30.0)]);
        let ink = InkCharacter::new(vec![a.clone(), b.clone()]);
        let total = rasterize_stroke(&a, 32).unwrap().popcount() + rasterize_stroke(&b, 32).unwrap().popcount();
        assert_eq!(to_static_image(&ink, 32).unwrap().popcount(), total);
        assert_eq!(total, 10 + 11 + 8);
    }

    #[test]
    fn pgm_header() {
        let pgm = BinaryMap::new(4).to_pgm();
        assert!(pgm.starts_with(b"P5\n4 4\n255\n"));
        assert_eq!(pgm.len(), 11 + 16);
    }

    fn arb_normalized_ink() -> impl Strategy<Value = InkCharacter> {
        let stroke = prop::collection::vec((0.0..31.0f64, 0.0..31.0f64), 1..8)
            .prop_map(|v| Stroke::from_xy(&v));
        prop::collection::vec(stroke, 1..28).prop_map(InkCharacter::new)
    }

    proptest! {
        #[test]
        fn stack_union_equals_static_image(ink in arb_normalized_ink()) {
            let st = build_stack(&ink, 28, 32).unwrap();
            prop_assert_eq!(st.union(), to_static_image(&ink, 32).unwrap());
            for i in 0..ink.strokes.len() {
                prop_assert!(st.map(i).popcount() >= 1);
            }
        }

        #[test]
        fn permuting_strokes_permutes_maps(ink in arb_normalized_ink()) {
            let mut rev = ink.clone();
            rev.strokes.reverse();
            let a = build_stack(&ink, 28, 32).unwrap();
            let b = build_stack(&rev, 28, 32).unwrap();
            let m = ink.strokes.len();
            for i in 0..m {
                prop_assert_eq!(a.map(i), b.map(m - 1 - i));
            }
        }

        #[test]
        fn bresenham_is_eight_connected(x0 in -40i64..40, y0 in -40i64..40, x1 in -40i64..40, y1 in -40i64..40) {
            let cells = bresenham(x0, y0, x1, y1);
            prop_assert_eq!(cells[0], (x0, y0));
            prop_assert_eq!(*cells.last().unwrap(), (x1, y1));
            prop_assert_eq!(cells.len() as i64, (x1 - x0).abs().max((y1 - y0).abs()) + 1);
            for w in cells.windows(2) {
                let (dx, dy) = ((w[1].0 - w[0].0).abs(), (w[1].1 - w[0].1).abs());
                prop_assert!(dx <= 1 && dy <= 1 && dx + dy >= 1);
            }
        }
    }
}
