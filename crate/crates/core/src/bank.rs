//! Memory-bank selection: k-medoids loss, its monotone submodular surrogate with an auxiliary
//! element, greedy maximization, Lloyd k-means medoids, and the relational memory graph.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::array::DenseArray;
use crate::binio::{ByteReader, ByteWriter};
use crate::data::persist::{read_classes, write_classes};
use crate::data::{ClassInfo, LabeledDataset};
use crate::error::{invalid, Error, Result};
use crate::primary::PrimaryModel;
use crate::relation::relation;

pub const BANK_MAGIC: &[u8; 4] = b"RBNK";
const VERSION: u32 = 1;
const KMEANS_MAX_ITER: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    SquaredEuclidean,
    Euclidean,
}

/// Dense symmetric `n × n` dissimilarity matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dissimilarity {
    n: usize,
    d: Vec<f64>,
}

impl Dissimilarity {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.d[i * self.n..(i + 1) * self.n]
    }

    /// Largest entry; the auxiliary element sits at this distance from every point.
    pub fn max(&self) -> f64 {
        self.d.iter().copied().fold(0.0, f64::max)
    }

    /// Builds from an explicit matrix (row-major), checking symmetry and a zero diagonal.
    pub fn from_matrix(n: usize, d: Vec<f64>) -> Result<Self> {
        if d.len() != n * n {
            return Err(invalid("dissimilarity matrix has wrong size"));
        }
        for i in 0..n {
            if d[i * n + i] != 0.0 {
                return Err(invalid("dissimilarity diagonal must be zero"));
            }
            for j in 0..i {
                if d[i * n + j] != d[j * n + i] || d[i * n + j] < 0.0 {
                    return Err(invalid("dissimilarity must be symmetric and non-negative"));
                }
            }
        }
        Ok(Self { n, d })
    }
}

/// Pairwise dissimilarities between the rows of `vectors` (computed in f64).
pub fn pairwise_dissimilarity(vectors: &DenseArray<f32>, metric: Metric) -> Dissimilarity {
    let n = vectors.outer();
    let mut d = vec![0.0f64; n * n];
    d.par_chunks_mut(n.max(1)).enumerate().for_each(|(i, row)| {
        let a = vectors.row(i);
        for (j, out) in row.iter_mut().enumerate() {
            if i == j {
                continue;
            }
            let b = vectors.row(j);
            let sq: f64 = a.iter().zip(b).map(|(&x, &y)| (x as f64 - y as f64).powi(2)).sum();
            *out = match metric {
                Metric::SquaredEuclidean => sq,
                Metric::Euclidean => sq.sqrt(),
            };
        }
    });
    // Summation order differs between (i, j) and (j, i) only through operand order, which is exact
    // for squared differences; mirror anyway so symmetry never depends on that.
    for i in 0..n {
        for j in 0..i {
            d[j * n + i] = d[i * n + j];
        }
    }
    Dissimilarity { n, d }
}

/// Mean over all points of the distance to the nearest member of `s`.
pub fn kmedoids_loss(s: &[usize], pool: &Dissimilarity) -> Result<f64> {
    if s.is_empty() {
        return Err(Error::Empty("medoid set"));
    }
    if s.iter().any(|&e| e >= pool.n) {
        return Err(invalid("medoid index outside pool"));
    }
    let total: f64 = (0..pool.n).map(|v| s.iter().map(|&e| pool.get(e, v)).fold(f64::INFINITY, f64::min)).sum();
    Ok(total / pool.n as f64)
}

/// Loss of `s ∪ {e0}` where the auxiliary element is at distance `d_max` from everything.
fn aux_loss(s: &[usize], pool: &Dissimilarity, d_max: f64) -> f64 {
    let total: f64 = (0..pool.n).map(|v| s.iter().map(|&e| pool.get(e, v)).fold(d_max, f64::min)).sum();
    total / pool.n as f64
}

/// Decrease in loss obtained by adding `s` to the auxiliary element. Zero for the empty set.
pub fn submodular_value(s: &[usize], pool: &Dissimilarity) -> f64 {
    if pool.is_empty() {
        return 0.0;
    }
    let d_max = pool.max();
    d_max - aux_loss(s, pool, d_max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyTrace {
    /// Selected indices in pick order.
    pub selected: Vec<usize>,
    /// Marginal gain of each pick.
    pub gains: Vec<f64>,
    /// `L(S)` after each pick.
    pub losses: Vec<f64>,
}

/// Greedy maximization of the submodular value; ties go to the lowest index.
pub fn greedy_select(pool: &Dissimilarity, k: usize) -> Result<GreedyTrace> {
    let n = pool.n;
    if k == 0 {
        return Err(invalid("greedy budget must be positive"));
    }
    if k > n {
        return Err(invalid(format!("budget {k} exceeds pool of {n}")));
    }
    let d_max = pool.max();
    let mut nearest = vec![d_max; n];
    let mut taken = vec![false; n];
    let mut trace = GreedyTrace { selected: Vec::with_capacity(k), gains: Vec::new(), losses: Vec::new() };
    for _ in 0..k {
        let gains: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|e| {
                if taken[e] {
                    return f64::NEG_INFINITY;
                }
                pool.row(e).iter().zip(&nearest).map(|(&d, &cur)| (cur - d).max(0.0)).sum::<f64>() / n as f64
            })
            .collect();
        let mut best = usize::MAX;
        for (e, &g) in gains.iter().enumerate() {
            if !taken[e] && (best == usize::MAX || g > gains[best]) {
                best = e;
            }
        }
        taken[best] = true;
        for (cur, &d) in nearest.iter_mut().zip(pool.row(best)) {
            *cur = cur.min(d);
        }
        trace.selected.push(best);
        trace.gains.push(gains[best]);
        trace.losses.push(kmedoids_loss(&trace.selected, pool)?);
    }
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    /// One pool index per cluster, all distinct.
    pub medoids: Vec<usize>,
    /// Sum of squared distances to assigned centroids, after each assignment step.
    pub objective: Vec<f64>,
    pub converged: bool,
}

fn sq_dist(a: &[f32], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| (x as f64 - y).powi(2)).sum()
}

/// Lloyd's algorithm from a k-means++ start, then each centroid is replaced by its nearest pool point.
pub fn kmeans_medoids(vectors: &DenseArray<f32>, k: usize, seed: u64) -> Result<KMeansResult> {
    kmeans_medoids_with(vectors, k, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn kmeans_medoids_with(vectors: &DenseArray<f32>, k: usize, rng: &mut ChaCha8Rng) -> Result<KMeansResult> {
    let n = vectors.outer();
    let width = vectors.inner();
    if k == 0 {
        return Err(invalid("k-means needs k ≥ 1"));
    }
    if k > n {
        return Err(invalid(format!("k = {k} exceeds pool of {n}")));
    }
    let point = |i: usize| vectors.row(i).iter().map(|&v| v as f64).collect::<Vec<f64>>();

    // k-means++ seeding.
    let mut centroids: Vec<Vec<f64>> = vec![point(rng.gen_range(0..n))];
    let mut best_d: Vec<f64> = (0..n).map(|i| sq_dist(vectors.row(i), &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = best_d.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in best_d.iter().enumerate() {
                if d > 0.0 && target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        let c = point(pick);
        for (i, d) in best_d.iter_mut().enumerate() {
            *d = d.min(sq_dist(vectors.row(i), &c));
        }
        centroids.push(c);
    }

    let assign = |centroids: &[Vec<f64>]| -> Vec<(usize, f64)> {
        (0..n)
            .into_par_iter()
            .map(|i| {
                let row = vectors.row(i);
                let mut best = (0, f64::INFINITY);
                for (c, cen) in centroids.iter().enumerate() {
                    let d = sq_dist(row, cen);
                    if d < best.1 {
                        best = (c, d);
                    }
                }
                best
            })
            .collect()
    };

    let mut objective = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    let mut converged = false;
    for _ in 0..KMEANS_MAX_ITER {
        let mut assigned = assign(&centroids);
        // Re-seed empty clusters at the point farthest from its centroid.
        loop {
            let mut counts = vec![0usize; k];
            for &(c, _) in &assigned {
                counts[c] += 1;
            }
            let Some(empty) = counts.iter().position(|&c| c == 0) else { break };
            let far = (0..n)
                .filter(|&i| counts[assigned[i].0] > 1)
                .fold(None, |acc: Option<usize>, i| match acc {
                    Some(b) if assigned[b].1 >= assigned[i].1 => Some(b),
                    _ => Some(i),
                })
                .expect("k ≤ n leaves a cluster with two members");
            centroids[empty] = point(far);
            assigned[far] = (empty, 0.0);
        }
        objective.push(assigned.iter().map(|&(_, d)| d).sum());
        let new_labels: Vec<usize> = assigned.iter().map(|&(c, _)| c).collect();
        if new_labels == labels {
            converged = true;
            break;
        }
        labels = new_labels;
        let mut sums = vec![vec![0.0f64; width]; k];
        let mut counts = vec![0usize; k];
        for (i, &c) in labels.iter().enumerate() {
            counts[c] += 1;
            for (s, &v) in sums[c].iter_mut().zip(vectors.row(i)) {
                *s += v as f64;
            }
        }
        for c in 0..k {
            centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
        }
    }

    let mut taken = vec![false; n];
    let mut medoids = Vec::with_capacity(k);
    for cen in &centroids {
        let mut best = (usize::MAX, f64::INFINITY);
        for i in 0..n {
            let d = sq_dist(vectors.row(i), cen);
            if !taken[i] && d < best.1 {
                best = (i, d);
            }
        }
        taken[best.0] = true;
        medoids.push(best.0);
    }
    Ok(KMeansResult { medoids, objective, converged })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMethod {
    Greedy,
    KMeans,
}

impl SelectionMethod {
    fn tag(self) -> u8 {
        match self {
            SelectionMethod::Greedy => 0,
            SelectionMethod::KMeans => 1,
        }
    }
}

impl fmt::Display for SelectionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SelectionMethod::Greedy => "greedy",
            SelectionMethod::KMeans => "kmeans",
        })
    }
}

impl FromStr for SelectionMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy" => Ok(SelectionMethod::Greedy),
            "kmeans" => Ok(SelectionMethod::KMeans),
            other => Err(invalid(format!("unknown selection method {other:?}"))),
        }
    }
}

/// `M` stored representations with their class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct RepresentationBank {
    pub rows: DenseArray<f32>,
    pub labels: Vec<usize>,
    pub classes: Vec<ClassInfo>,
    pub layer: String,
    pub method: SelectionMethod,
    /// Fingerprint of the dataset the rows were drawn from.
    pub source: u64,
}

/// Equal split of `m` over `c` classes with the remainder going to the lowest indices.
pub fn class_budgets(m: usize, c: usize) -> Vec<usize> {
    (0..c).map(|k| m / c + usize::from(k < m % c)).collect()
}

/// Selects a bank from precomputed representations, independently within each class.
pub fn select_bank(
    reps: &DenseArray<f32>,
    labels: &[usize],
    classes: &[ClassInfo],
    m: usize,
    method: SelectionMethod,
    seed: u64,
) -> Result<(Vec<usize>, RepresentationBank)> {
    let c = classes.len();
    if reps.outer() != labels.len() {
        return Err(invalid("representations and labels differ in count"));
    }
    if m < c {
        return Err(invalid(format!("bank size {m} is smaller than the {c} classes")));
    }
    if !reps.is_finite() {
        return Err(invalid("representations contain non-finite values"));
    }
    let mut chosen = Vec::with_capacity(m);
    for (class, budget) in class_budgets(m, c).into_iter().enumerate() {
        let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < budget {
            return Err(Error::ClassTooSmall { class, available: members.len(), needed: budget });
        }
        let pool = reps.select_rows(&members)?;
        let picks = match method {
            SelectionMethod::Greedy => {
                greedy_select(&pairwise_dissimilarity(&pool, Metric::SquaredEuclidean), budget)?.selected
            }
            SelectionMethod::KMeans => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(class as u64);
                kmeans_medoids_with(&pool, budget, &mut rng)?.medoids
            }
        };
        chosen.extend(picks.into_iter().map(|p| members[p]));
    }
    let rows = reps.select_rows(&chosen)?;
    let bank_labels = chosen.iter().map(|&i| labels[i]).collect();
    let bank = RepresentationBank {
        rows,
        labels: bank_labels,
        classes: classes.to_vec(),
        layer: String::new(),
        method,
        source: 0,
    };
    Ok((chosen, bank))
}

/// Extracts representations of `train` at `point` and selects `m` of them.
pub fn build_bank(
    model: &PrimaryModel,
    train: &LabeledDataset,
    point: &str,
    m: usize,
    method: SelectionMethod,
    seed: u64,
) -> Result<RepresentationBank> {
    if train.classes() != model.classes.as_slice() {
        return Err(invalid("training set classes differ from the model's"));
    }
    let reps = model.extract_batch(train.images(), point)?;
    let (_, mut bank) = select_bank(&reps, train.labels(), train.classes(), m, method, seed)?;
    bank.layer = point.to_string();
    bank.source = train.fingerprint();
    Ok(bank)
}

impl RepresentationBank {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn width(&self) -> usize {
        self.rows.inner()
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        self.rows.row(i)
    }

    /// Row indices belonging to each class.
    pub fn class_rows(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.classes.len()];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows.outer() != self.labels.len() {
            return Err(invalid("bank rows and labels differ in count"));
        }
        if let Some(&l) = self.labels.iter().find(|&&l| l >= self.classes.len()) {
            return Err(invalid(format!("bank label {l} outside the class table")));
        }
        if let Some(k) = self.class_rows().iter().position(|r| r.is_empty()) {
            return Err(invalid(format!("bank has no rows for class {}", self.classes[k].name)));
        }
        if !self.rows.is_finite() {
            return Err(invalid("bank rows contain non-finite values"));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = ByteWriter::new();
        out.bytes(BANK_MAGIC);
        out.u32(VERSION);
        out.u32(self.len() as u32);
        out.u32(self.width() as u32);
        out.u32(self.classes.len() as u32);
        out.str(&self.layer);
        out.u8(self.method.tag());
        out.u64(self.source);
        for &l in &self.labels {
            out.u32(l as u32);
        }
        out.f32s(self.rows.data());
        write_classes(&mut out, &self.classes);
        out.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes, "bank");
        r.magic(BANK_MAGIC)?;
        let version = r.u32()?;
        if version != VERSION {
            return Err(r.error(format!("unsupported version {version}")));
        }
        let m = r.u32()? as usize;
        let width = r.u32()? as usize;
        let c = r.u32()? as usize;
        let layer = r.str()?;
        let method = match r.u8()? {
            0 => SelectionMethod::Greedy,
            1 => SelectionMethod::KMeans,
            t => return Err(r.error(format!("unknown method tag {t}"))),
        };
        let source = r.u64()?;
        let labels = (0..m).map(|_| r.u32().map(|l| l as usize)).collect::<Result<Vec<_>>>()?;
        let at = r.offset();
        let data = r.f32s(m * width)?;
        let classes = read_classes(&mut r)?;
        r.expect_end()?;
        if classes.len() != c {
            return Err(Error::Format { what: "bank", offset: at as u64, reason: "class count mismatch".into() });
        }
        let rows = DenseArray::new(vec![m, width], data).map_err(|e| Error::Format {
            what: "bank",
            offset: at as u64,
            reason: e.to_string(),
        })?;
        let bank = Self { rows, labels, classes, layer, method, source };
        bank.validate()?;
        Ok(bank)
    }

    pub fn fingerprint(&self) -> u64 {
        crate::fingerprint(&self.to_bytes())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphNode {
    pub id: String,
    pub class: usize,
}

/// Directed graph over nodes whose edge weights are relation values; `W = −Wᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryGraph {
    pub nodes: Vec<GraphNode>,
    weights: Vec<f64>,
}

impl MemoryGraph {
    fn from_nodes(nodes: Vec<GraphNode>, classes: &[ClassInfo]) -> Result<Self> {
        let n = nodes.len();
        let mut weights = vec![0.0; n * n];
        for p in 0..n {
            for q in 0..n {
                let rel = relation(classes[nodes[p].class].attribute, classes[nodes[q].class].attribute)?;
                weights[p * n + q] = rel as f64;
            }
        }
        Ok(Self { nodes, weights })
    }

    /// One node per class.
    pub fn class_level(classes: &[ClassInfo]) -> Result<Self> {
        let nodes = classes.iter().enumerate().map(|(k, c)| GraphNode { id: c.name.clone(), class: k }).collect();
        Self::from_nodes(nodes, classes)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn weight(&self, p: usize, q: usize) -> f64 {
        self.weights[p * self.nodes.len() + q]
    }

    /// CSV adjacency with one line per ordered pair of distinct nodes.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("source,target,weight\n");
        for p in 0..self.len() {
            for q in 0..self.len() {
                if p != q {
                    out.push_str(&format!("{},{},{}\n", self.nodes[p].id, self.nodes[q].id, self.weight(p, q)));
                }
            }
        }
        out
    }
}

/// One node per bank row; `attributes` is indexed by bank label.
pub fn build_memory_graph(bank: &RepresentationBank, attributes: &[ClassInfo]) -> Result<MemoryGraph> {
    if attributes.len() < bank.num_classes() {
        return Err(invalid("attribute table does not cover the bank classes"));
    }
    let mut seen = vec![0usize; attributes.len()];
    let nodes = bank
        .labels
        .iter()
        .map(|&l| {
            let id = format!("{}#{}", attributes[l].name, seen[l]);
            seen[l] += 1;
            GraphNode { id, class: l }
        })
        .collect();
    MemoryGraph::from_nodes(nodes, attributes)
}
