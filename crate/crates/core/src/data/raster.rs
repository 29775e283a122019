//! Anti-aliased one-pixel stroke rendering of shape specs.

use super::shapes::ShapeSpec;
use crate::array::DenseArray;
use crate::error::{invalid, Error, Result};

/// Distance from `p` to the segment `a`–`b`.
fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 { 0.0 } else { (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0) };
    let (cx, cy) = (a[0] + t * dx - p[0], a[1] + t * dy - p[1]);
    (cx * cx + cy * cy).sqrt()
}

/// Renders `spec` onto a `(1, side, side)` canvas.
///
/// Each pixel takes `intensity · max(0, 1 − d)` where `d` is the pixel-unit distance from its center
/// to the nearest edge, so a one-pixel stroke covers neighbouring pixels in proportion to overlap.
pub fn rasterize(spec: &ShapeSpec, side: usize) -> Result<DenseArray<f32>> {
    if side < 8 {
        return Err(invalid("canvas side must be at least 8 pixels"));
    }
    if spec.vertices.len() < 2 {
        return Err(Error::DegenerateShape("spec needs at least two vertices".into()));
    }
    if !(spec.intensity > 0.0 && spec.intensity <= 1.0) {
        return Err(invalid("stroke intensity must lie in (0, 1]"));
    }
    let s = side as f64;
    // Pixel centers sit on integer coordinates.
    let edges: Vec<([f64; 2], [f64; 2])> = spec
        .edges()
        .into_iter()
        .map(|(a, b)| ([a[0] * s - 0.5, a[1] * s - 0.5], [b[0] * s - 0.5, b[1] * s - 0.5]))
        .collect();
    for (a, b) in &edges {
        let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        if len < 1.0 {
            return Err(Error::DegenerateShape(format!("edge of {len:.3} px is shorter than one pixel")));
        }
    }
    let mut img = vec![0.0f32; side * side];
    for (a, b) in &edges {
        let x0 = (a[0].min(b[0]) - 1.0).floor().max(0.0) as usize;
        let x1 = ((a[0].max(b[0]) + 1.0).ceil().max(0.0) as usize).min(side - 1);
        let y0 = (a[1].min(b[1]) - 1.0).floor().max(0.0) as usize;
        let y1 = ((a[1].max(b[1]) + 1.0).ceil().max(0.0) as usize).min(side - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let cover = 1.0 - segment_distance([x as f64, y as f64], *a, *b);
                if cover > 0.0 {
                    let v = (spec.intensity * cover).min(1.0) as f32;
                    let px = &mut img[y * side + x];
                    if v > *px {
                        *px = v;
                    }
                }
            }
        }
    }
    DenseArray::new(vec![1, side, side], img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::shapes::{sample_shape_spec, ShapeClass, ShapeVariation};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn horizontal(row: usize, side: usize) -> ShapeSpec {
        let s = side as f64;
        let y = (row as f64 + 0.5) / s;
        ShapeSpec {
            class: ShapeClass::Line,
            vertices: vec![[0.5 / s, y], [(s - 0.5) / s, y]],
            closed: false,
            intensity: 1.0,
            linear: [[1.0, 0.0], [0.0, 1.0]],
            translation: [0.0, 0.0],
        }
    }

    #[test]
    fn horizontal_segment_lights_one_row() {
        let img = rasterize(&horizontal(7, 16), 16).unwrap();
        for y in 0..16 {
            for x in 0..16 {
                let v = img.data()[y * 16 + x];
                if y == 7 {
                    assert_eq!(v, 1.0);
                } else {
                    assert_eq!(v, 0.0);
                }
            }
        }
    }

    #[test]
    fn empty_and_degenerate_specs_rejected() {
        let mut spec = horizontal(3, 16);
        spec.vertices.clear();
        assert!(rasterize(&spec, 16).is_err());
        let mut tiny = horizontal(3, 16);
        tiny.vertices = vec![[0.5, 0.5], [0.51, 0.5]];
        assert!(matches!(rasterize(&tiny, 16), Err(Error::DegenerateShape(_))));
    }

    /// Counts pixels a Bresenham-style walk would visit along each edge.
    fn bresenham_pixels(spec: &ShapeSpec, side: usize) -> usize {
        let s = side as f64;
        let mut total = 0;
        for (a, b) in spec.edges() {
            let (ax, ay) = (a[0] * s - 0.5, a[1] * s - 0.5);
            let (bx, by) = (b[0] * s - 0.5, b[1] * s - 0.5);
            total += ((bx - ax).abs().max((by - ay).abs())).round() as usize + 1;
        }
        total
    }

    #[test]
    fn triangle_lit_pixels_cover_perimeter() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let var = ShapeVariation::default();
        for _ in 0..200 {
            let spec = sample_shape_spec(ShapeClass::Triangle, &var, &mut rng);
            let img = rasterize(&spec, 25).unwrap();
            let lit = img.data().iter().filter(|&&v| v > 0.0).count();
            let perimeter = bresenham_pixels(&spec, 25);
            assert!(lit as f64 >= perimeter as f64 * 1.0 * 0.5, "{lit} lit vs {perimeter}");
        }
    }

    #[test]
    fn every_edge_contributes() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let var = ShapeVariation::default();
        for cls in ShapeClass::ALL {
            for _ in 0..50 {
                let spec = sample_shape_spec(cls, &var, &mut rng);
                let img = rasterize(&spec, 25).unwrap();
                for (a, b) in spec.edges() {
                    let mid = [(a[0] + b[0]) * 12.5 - 0.5, (a[1] + b[1]) * 12.5 - 0.5];
                    let (x, y) = (mid[0].round() as usize, mid[1].round() as usize);
                    assert!(img.data()[y * 25 + x] > 0.0);
                }
            }
        }
    }

    #[test]
    fn whole_pixel_shift_shifts_image() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let var = ShapeVariation { scale: (0.4, 0.5), ..Default::default() };
        for _ in 0..100 {
            let spec = sample_shape_spec(ShapeClass::Quadrilateral, &var, &mut rng);
            let pts = spec.canvas_vertices();
            let min_x = pts.iter().map(|p| p[0] * 25.0).fold(f64::INFINITY, f64::min);
            let max_y = pts.iter().map(|p| p[1] * 25.0).fold(f64::NEG_INFINITY, f64::max);
            if min_x < 4.5 || max_y > 21.5 {
                continue;
            }
            let base = rasterize(&spec, 25).unwrap();
            let moved = rasterize(&spec.shifted_px(-2, 2, 25), 25).unwrap();
            for y in 0..23 {
                for x in 2..25 {
                    let a = base.data()[y * 25 + x];
                    let b = moved.data()[(y + 2) * 25 + x - 2];
                    assert!((a - b).abs() < 1e-5);
                    assert_eq!(a > 1e-3, b > 1e-3);
                }
            }
        }
    }
}
