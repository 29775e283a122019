//! Synthetic geometric-shape classes, randomized shape specs and balanced dataset generation.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::raster::rasterize;
use super::{ClassAttribute, ClassInfo, LabeledDataset};
use crate::array::DenseArray;
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeClass {
    Line,
    Angle,
    Triangle,
    Quadrilateral,
    Pentagon,
}

impl ShapeClass {
    pub const ALL: [ShapeClass; 5] =
        [ShapeClass::Line, ShapeClass::Angle, ShapeClass::Triangle, ShapeClass::Quadrilateral, ShapeClass::Pentagon];

    /// The four training classes of the canonical experiment; `Angle` is held out.
    pub const KNOWN: [ShapeClass; 4] =
        [ShapeClass::Line, ShapeClass::Triangle, ShapeClass::Quadrilateral, ShapeClass::Pentagon];

    pub fn edge_count(self) -> u32 {
        match self {
            ShapeClass::Line => 1,
            ShapeClass::Angle => 2,
            ShapeClass::Triangle => 3,
            ShapeClass::Quadrilateral => 4,
            ShapeClass::Pentagon => 5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ShapeClass::Line => "line",
            ShapeClass::Angle => "angle",
            ShapeClass::Triangle => "triangle",
            ShapeClass::Quadrilateral => "quadrilateral",
            ShapeClass::Pentagon => "pentagon",
        }
    }

    /// Closed polygons join the last vertex back to the first.
    pub fn is_closed(self) -> bool {
        !matches!(self, ShapeClass::Line | ShapeClass::Angle)
    }

    pub fn vertex_count(self) -> usize {
        let e = self.edge_count() as usize;
        if self.is_closed() {
            e
        } else {
            e + 1
        }
    }

    pub fn info(self) -> ClassInfo {
        ClassInfo::new(self.name(), ClassAttribute::EdgeCount(self.edge_count()))
    }
}

impl fmt::Display for ShapeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ShapeClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ShapeClass::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| invalid(format!("unknown shape class {s:?}")))
    }
}

/// Ranges of the random factors of variation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShapeVariation {
    /// Canvas side in pixels.
    pub side: usize,
    /// Isotropic scale as a fraction of the canvas.
    pub scale: (f64, f64),
    /// Maximum absolute off-diagonal shear entry.
    pub shear: f64,
    pub intensity: (f64, f64),
    /// Minimum edge length in pixels accepted while sampling.
    pub min_edge_px: f64,
}

impl Default for ShapeVariation {
    fn default() -> Self {
        Self { side: 25, scale: (0.4, 0.9), shear: 0.2, intensity: (0.4, 1.0), min_edge_px: 3.0 }
    }
}

/// Vertices in canonical unit coordinates plus the affine map onto the unit canvas.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeSpec {
    pub class: ShapeClass,
    pub vertices: Vec<[f64; 2]>,
    pub closed: bool,
    pub intensity: f64,
    /// Row-major 2×2 linear part.
    pub linear: [[f64; 2]; 2],
    /// Offset in unit-canvas coordinates.
    pub translation: [f64; 2],
}

impl ShapeSpec {
    /// Vertex positions on the unit canvas, `(x, y)` with `y` growing downwards.
    pub fn canvas_vertices(&self) -> Vec<[f64; 2]> {
        self.vertices
            .iter()
            .map(|v| {
                [
                    self.linear[0][0] * v[0] + self.linear[0][1] * v[1] + self.translation[0],
                    self.linear[1][0] * v[0] + self.linear[1][1] * v[1] + self.translation[1],
                ]
            })
            .collect()
    }

    pub fn edges(&self) -> Vec<([f64; 2], [f64; 2])> {
        let pts = self.canvas_vertices();
        let mut edges: Vec<_> = pts.windows(2).map(|w| (w[0], w[1])).collect();
        if self.closed && pts.len() > 2 {
            edges.push((pts[pts.len() - 1], pts[0]));
        }
        edges
    }

    /// Shifts the shape by a whole number of pixels on a `side`-pixel canvas.
    pub fn shifted_px(&self, dx: i32, dy: i32, side: usize) -> ShapeSpec {
        let mut s = self.clone();
        s.translation[0] += dx as f64 / side as f64;
        s.translation[1] += dy as f64 / side as f64;
        s
    }
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Sine of the turn at every interior vertex (all vertices when closed), signed.
fn turn_sines(pts: &[[f64; 2]], closed: bool) -> Vec<f64> {
    let n = pts.len();
    let range: Vec<usize> = if closed { (0..n).collect() } else { (1..n.saturating_sub(1)).collect() };
    range
        .into_iter()
        .map(|i| {
            let prev = pts[(i + n - 1) % n];
            let next = pts[(i + 1) % n];
            cross(prev, pts[i], next) / (dist(prev, pts[i]) * dist(pts[i], next))
        })
        .collect()
}

/// True when the closed polygon is strictly convex with every turn at least `min_sin` away from straight.
pub fn is_convex_position(pts: &[[f64; 2]], min_sin: f64) -> bool {
    let sines = turn_sines(pts, true);
    let all_pos = sines.iter().all(|&s| s > min_sin);
    let all_neg = sines.iter().all(|&s| s < -min_sin);
    if !(all_pos || all_neg) {
        return false;
    }
    // A star polygon can turn consistently and still self-intersect; its winding exceeds one turn.
    let n = pts.len();
    let mut total = 0.0;
    for i in 0..n {
        let a = pts[i];
        let b = pts[(i + 1) % n];
        let c = pts[(i + 2) % n];
        let h1 = (b[1] - a[1]).atan2(b[0] - a[0]);
        let h2 = (c[1] - b[1]).atan2(c[0] - b[0]);
        let mut d = h2 - h1;
        while d > PI {
            d -= 2.0 * PI;
        }
        while d < -PI {
            d += 2.0 * PI;
        }
        total += d;
    }
    (total.abs() - 2.0 * PI).abs() < 1e-6
}

/// Minimum |sin| of any turn; keeps consecutive vertices visibly non-collinear.
const MIN_TURN_SIN: f64 = 0.25;

fn canonical_vertices<R: Rng>(cls: ShapeClass, rng: &mut R) -> Vec<[f64; 2]> {
    match cls {
        ShapeClass::Line => vec![[-0.5, 0.0], [0.5, 0.0]],
        ShapeClass::Angle => loop {
            let opening = rng.gen_range(35f64..145.0).to_radians();
            let l1 = rng.gen_range(0.6..1.0);
            let l2 = rng.gen_range(0.6..1.0);
            let a = [l1, 0.0];
            let b = [l2 * opening.cos(), l2 * opening.sin()];
            let pts = recenter(vec![a, [0.0, 0.0], b]);
            if turn_sines(&pts, false).iter().all(|s| s.abs() > MIN_TURN_SIN) {
                break pts;
            }
        },
        _ => {
            let n = cls.vertex_count();
            let step = 2.0 * PI / n as f64;
            loop {
                let phase = rng.gen_range(0.0..2.0 * PI);
                let pts: Vec<[f64; 2]> = (0..n)
                    .map(|i| {
                        let theta = phase + i as f64 * step + rng.gen_range(-0.3..0.3) * step;
                        let r = 0.5 * rng.gen_range(0.75..1.0);
                        [r * theta.cos(), r * theta.sin()]
                    })
                    .collect();
                if is_convex_position(&pts, MIN_TURN_SIN) {
                    break recenter(pts);
                }
            }
        }
    }
}

fn recenter(mut pts: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in &pts {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    for p in pts.iter_mut() {
        for k in 0..2 {
            p[k] -= 0.5 * (lo[k] + hi[k]);
        }
    }
    pts
}

/// Draws a random instance of `cls` under the given variation ranges.
pub fn sample_shape_spec<R: Rng>(cls: ShapeClass, var: &ShapeVariation, rng: &mut R) -> ShapeSpec {
    let side = var.side as f64;
    let margin = 1.5 / side;
    loop {
        let vertices = canonical_vertices(cls, rng);
        let scale = rng.gen_range(var.scale.0..=var.scale.1);
        let theta = rng.gen_range(0.0..2.0 * PI);
        let (h1, h2) = if var.shear > 0.0 {
            (rng.gen_range(-var.shear..=var.shear), rng.gen_range(-var.shear..=var.shear))
        } else {
            (0.0, 0.0)
        };
        let (c, s) = (theta.cos(), theta.sin());
        // scale · rotation · shear
        let sh = [[1.0, h1], [h2, 1.0]];
        let rot = [[c, -s], [s, c]];
        let mut linear = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                linear[i][j] = scale * (rot[i][0] * sh[0][j] + rot[i][1] * sh[1][j]);
            }
        }
        let intensity = rng.gen_range(var.intensity.0..=var.intensity.1);
        let mut spec =
            ShapeSpec { class: cls, vertices, closed: cls.is_closed(), intensity, linear, translation: [0.0, 0.0] };
        let pts = spec.canvas_vertices();
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in &pts {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let room = [1.0 - 2.0 * margin - (hi[0] - lo[0]), 1.0 - 2.0 * margin - (hi[1] - lo[1])];
        if room[0] < 0.0 || room[1] < 0.0 {
            continue;
        }
        for k in 0..2 {
            spec.translation[k] = margin - lo[k] + rng.gen_range(0.0..=room[k]);
        }
        let short = spec.edges().iter().any(|(a, b)| dist(*a, *b) * side < var.min_edge_px);
        let flat = spec.vertices.len() > 2
            && turn_sines(&spec.canvas_vertices(), spec.closed).iter().any(|s| s.abs() < MIN_TURN_SIN);
        if !short && !flat {
            return spec;
        }
    }
}

/// Balanced dataset of `n` images: example `i` has class `classes[i % classes.len()]`
/// and draws from its own random stream derived from `(seed, i)`.
pub fn generate_dataset(n: usize, classes: &[ShapeClass], var: &ShapeVariation, seed: u64) -> Result<LabeledDataset> {
    if classes.is_empty() {
        return Err(Error::Empty("class list"));
    }
    if n == 0 || n % classes.len() != 0 {
        return Err(invalid(format!("{n} examples cannot be split evenly over {} classes", classes.len())));
    }
    if var.side < 8 {
        return Err(invalid("canvas side must be at least 8 pixels"));
    }
    let side = var.side;
    let images: Vec<Vec<f32>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let cls = classes[i % classes.len()];
            loop {
                let spec = sample_shape_spec(cls, var, &mut rng);
                if let Ok(img) = rasterize(&spec, side) {
                    return img.into_data();
                }
            }
        })
        .collect();
    let data: Vec<f32> = images.into_iter().flatten().collect();
    let labels = (0..n).map(|i| i % classes.len()).collect();
    let table = classes.iter().map(|c| c.info()).collect();
    LabeledDataset::new(DenseArray::new(vec![n, 1, side, side], data)?, labels, table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vertex_counts_follow_class() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let var = ShapeVariation::default();
        let tri = sample_shape_spec(ShapeClass::Triangle, &var, &mut rng);
        assert_eq!(tri.vertices.len(), 3);
        assert!(tri.closed);
        let line = sample_shape_spec(ShapeClass::Line, &var, &mut rng);
        assert_eq!(line.vertices.len(), 2);
        assert!(!line.closed);
        let angle = sample_shape_spec(ShapeClass::Angle, &var, &mut rng);
        assert_eq!(angle.vertices.len(), 3);
        assert_eq!(angle.edges().len(), 2);
    }

    #[test]
    fn pentagons_stay_convex() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let var = ShapeVariation::default();
        for _ in 0..10_000 {
            let spec = sample_shape_spec(ShapeClass::Pentagon, &var, &mut rng);
            assert!(is_convex_position(&spec.canvas_vertices(), 0.0));
            for v in spec.canvas_vertices() {
                assert!(v[0] * 25.0 >= 1.0 && v[0] * 25.0 <= 24.0);
                assert!(v[1] * 25.0 >= 1.0 && v[1] * 25.0 <= 24.0);
            }
        }
    }

    #[test]
    fn convexity_oracle_rejects_star() {
        let star: Vec<[f64; 2]> = (0..5)
            .map(|i| {
                let t = i as f64 * 4.0 * PI / 5.0;
                [t.cos(), t.sin()]
            })
            .collect();
        assert!(!is_convex_position(&star, 0.0));
        let square = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        assert!(is_convex_position(&square, 0.5));
    }

    #[test]
    fn balanced_and_deterministic() {
        let var = ShapeVariation::default();
        let a = generate_dataset(40, &ShapeClass::KNOWN, &var, 5).unwrap();
        assert_eq!(a.class_counts(), vec![10; 4]);
        let b = generate_dataset(40, &ShapeClass::KNOWN, &var, 5).unwrap();
        assert_eq!(a, b);
        let one_each = generate_dataset(4, &ShapeClass::KNOWN, &var, 0).unwrap();
        assert_eq!(one_each.class_counts(), vec![1; 4]);
        assert!(generate_dataset(10, &ShapeClass::KNOWN, &var, 0).is_err());
    }

    #[test]
    fn parse_names() {
        for c in ShapeClass::ALL {
            assert_eq!(c.name().parse::<ShapeClass>().unwrap(), c);
        }
        assert!("hexagon".parse::<ShapeClass>().is_err());
    }
}
