//! Three small operations exported to the browser page in `www/`.
//!
//! Each has a plain Rust form that returns [`DemoError`] and a `#[wasm_bindgen]` wrapper that
//! hands JSON to JavaScript.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

use relmem::bank::{greedy_select, kmeans_medoids, kmedoids_loss, pairwise_dissimilarity, Metric};
use relmem::data::raster::rasterize;
use relmem::data::shapes::{sample_shape_spec, ShapeClass, ShapeVariation};
use relmem::eval::{characterize, decide, ExpectedSignatureTable, Verdict};
use relmem::DenseArray;

#[derive(Debug, thiserror::Error)]
pub enum DemoError {
    #[error(transparent)]
    Core(#[from] relmem::Error),
    #[error("point list has odd length {0}")]
    OddPoints(usize),
    #[error("expected {expected} category scores, got {actual}")]
    ScoreCount { expected: usize, actual: usize },
}

#[derive(Debug, Serialize)]
pub struct Shape {
    pub class: &'static str,
    pub side: usize,
    pub pixels: Vec<f32>,
    pub vertices: Vec<[f64; 2]>,
}

/// Random instance of a shape class, rasterized at the training resolution.
pub fn render_shape(class: &str, seed: u64) -> Result<Shape, DemoError> {
    let cls: ShapeClass = class.parse()?;
    let var = ShapeVariation::default();
    let spec = sample_shape_spec(cls, &var, &mut ChaCha8Rng::seed_from_u64(seed));
    let img = rasterize(&spec, var.side)?;
    Ok(Shape { class: cls.name(), side: var.side, pixels: img.data().to_vec(), vertices: spec.canvas_vertices() })
}

#[derive(Debug, Serialize)]
pub struct Selection {
    pub indices: Vec<usize>,
    pub loss: f64,
}

#[derive(Debug, Serialize)]
pub struct Comparison {
    pub greedy: Selection,
    pub kmeans: Selection,
}

/// Greedy submodular selection and k-means medoids of `k` exemplars from flat `[x0, y0, x1, y1, ...]`.
pub fn compare_selection(points: &[f32], k: usize, seed: u64) -> Result<Comparison, DemoError> {
    if points.len() % 2 != 0 {
        return Err(DemoError::OddPoints(points.len()));
    }
    let pts = DenseArray::new(vec![points.len() / 2, 2], points.to_vec())?;
    let pool = pairwise_dissimilarity(&pts, Metric::SquaredEuclidean);
    let greedy = greedy_select(&pool, k)?.selected;
    let kmeans = kmeans_medoids(&pts, k, seed)?.medoids;
    Ok(Comparison {
        greedy: Selection { loss: kmedoids_loss(&greedy, &pool)?, indices: greedy },
        kmeans: Selection { loss: kmedoids_loss(&kmeans, &pool)?, indices: kmeans },
    })
}

#[derive(Debug, Serialize)]
pub struct Judgement {
    pub signature: Vec<i8>,
    /// Known class name, or `None` when the signature matches no known row.
    pub known: Option<&'static str>,
    /// Every shape class, known or not, whose ground-truth signature this is.
    pub matches: Vec<&'static str>,
}

/// Thresholds four category scores (against line, triangle, quadrilateral, pentagon) at `gamma`.
pub fn judge_scores(scores: &[f64], gamma: f64) -> Result<Judgement, DemoError> {
    let known: Vec<_> = ShapeClass::KNOWN.iter().map(|c| c.info()).collect();
    if scores.len() != known.len() {
        return Err(DemoError::ScoreCount { expected: known.len(), actual: scores.len() });
    }
    let table = ExpectedSignatureTable::new(&known)?;
    let signature = characterize(scores, gamma);
    let known_name = match decide(&signature, &table) {
        Verdict::Known(k) => Some(ShapeClass::KNOWN[k].name()),
        Verdict::Novel => None,
    };
    let mut matches = Vec::new();
    for c in ShapeClass::ALL {
        if table.ground_truth(c.info().attribute)? == signature {
            matches.push(c.name());
        }
    }
    Ok(Judgement { signature, known: known_name, matches })
}

fn to_js<T: Serialize>(r: Result<T, DemoError>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = renderShape)]
pub fn render_shape_js(class: &str, seed: u64) -> Result<String, JsError> {
    to_js(render_shape(class, seed))
}

#[wasm_bindgen(js_name = compareSelection)]
pub fn compare_selection_js(points: &[f32], k: usize, seed: u64) -> Result<String, JsError> {
    to_js(compare_selection(points, k, seed))
}

#[wasm_bindgen(js_name = judgeScores)]
pub fn judge_scores_js(scores: &[f64], gamma: f64) -> Result<String, JsError> {
    to_js(judge_scores(scores, gamma))
}
