//! Labeled image datasets: synthetic shapes, CIFAR-10 ingestion, filtering, splitting and persistence.

pub mod cifar;
pub(crate) mod persist;
pub mod raster;
pub mod shapes;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::array::DenseArray;
use crate::error::{invalid, Error, Result};

pub use persist::DATASET_MAGIC;

/// Per-class attribute from which relation targets are derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClassAttribute {
    EdgeCount(u32),
    /// 1 for living objects, 0 otherwise.
    Liveliness(u8),
}

impl ClassAttribute {
    pub fn same_kind(&self, other: &ClassAttribute) -> bool {
        std::mem::discriminant(self) == std::mem::discriminant(other)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassInfo {
    pub name: String,
    pub attribute: ClassAttribute,
}

impl ClassInfo {
    pub fn new(name: impl Into<String>, attribute: ClassAttribute) -> Self {
        Self { name: name.into(), attribute }
    }
}

/// Images `(n, channels, height, width)` in `[0, 1]` with class labels indexing `classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    images: DenseArray<f32>,
    labels: Vec<usize>,
    classes: Vec<ClassInfo>,
}

impl LabeledDataset {
    pub fn new(images: DenseArray<f32>, labels: Vec<usize>, classes: Vec<ClassInfo>) -> Result<Self> {
        if images.shape().len() != 4 {
            return Err(Error::InvalidShape(format!("dataset images must be (n, c, h, w), got {:?}", images.shape())));
        }
        if images.outer() != labels.len() {
            return Err(invalid(format!("{} images but {} labels", images.outer(), labels.len())));
        }
        if classes.is_empty() {
            return Err(Error::Empty("class table"));
        }
        if classes.iter().any(|c| !c.attribute.same_kind(&classes[0].attribute)) {
            return Err(Error::MixedAttributes);
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes.len()) {
            return Err(invalid(format!("label {bad} outside class table of {}", classes.len())));
        }
        if images.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(invalid("image values must lie in [0, 1]"));
        }
        Ok(Self { images, labels, classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn images(&self) -> &DenseArray<f32> {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn classes(&self) -> &[ClassInfo] {
        &self.classes
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    /// Per-example shape `(channels, height, width)`.
    pub fn image_shape(&self) -> &[usize] {
        &self.images.shape()[1..]
    }

    pub fn image(&self, i: usize) -> &[f32] {
        self.images.row(i)
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c.name == name)
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes.len()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Indices of examples with label `class`, in dataset order.
    pub fn indices_of(&self, class: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i] == class).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        Ok(Self {
            images: self.images.select_rows(indices)?,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes.clone(),
        })
    }

    /// Stable content hash over the persisted representation.
    pub fn fingerprint(&self) -> u64 {
        crate::fingerprint(&self.to_bytes())
    }
}

/// Keeps only the named classes. With `relabel`, labels become positions in `keep`.
pub fn filter_classes(ds: &LabeledDataset, keep: &[&str], relabel: bool) -> Result<LabeledDataset> {
    if keep.is_empty() {
        return Err(Error::Empty("class keep list"));
    }
    let kept: Vec<usize> = keep
        .iter()
        .map(|name| ds.class_index(name).ok_or_else(|| invalid(format!("unknown class {name:?}"))))
        .collect::<Result<_>>()?;
    let indices: Vec<usize> = (0..ds.len()).filter(|&i| kept.contains(&ds.labels[i])).collect();
    if indices.is_empty() {
        return Err(Error::Empty("filtered dataset"));
    }
    let mut out = ds.subset(&indices)?;
    if relabel {
        for l in out.labels.iter_mut() {
            *l = kept.iter().position(|k| k == l).expect("kept label");
        }
        out.classes = kept.iter().map(|&k| ds.classes[k].clone()).collect();
    }
    Ok(out)
}

/// Stratified split into `fractions.len()` disjoint parts; within each part the original order is kept.
pub fn split(ds: &LabeledDataset, fractions: &[f64], seed: u64) -> Result<Vec<LabeledDataset>> {
    if fractions.is_empty() || fractions.iter().any(|&f| !(f > 0.0)) {
        return Err(invalid("split fractions must be positive"));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(invalid(format!("split fractions sum to {total}, not 1")));
    }
    let parts = fractions.len();
    let mut assigned: Vec<Vec<usize>> = vec![Vec::new(); parts];
    for class in 0..ds.num_classes() {
        let mut idx = ds.indices_of(class);
        if idx.is_empty() {
            continue;
        }
        if idx.len() < parts {
            return Err(Error::ClassTooSmall { class, available: idx.len(), needed: parts });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(class as u64);
        idx.shuffle(&mut rng);
        let n = idx.len() as f64;
        let mut cum = 0.0;
        let mut lo = 0;
        for (p, &f) in fractions.iter().enumerate() {
            cum += f;
            let hi = if p + 1 == parts { idx.len() } else { (cum * n).round() as usize };
            if hi <= lo {
                return Err(Error::ClassTooSmall { class, available: idx.len(), needed: parts });
            }
            assigned[p].extend_from_slice(&idx[lo..hi]);
            lo = hi;
        }
    }
    assigned
        .into_iter()
        .map(|mut idx| {
            idx.sort_unstable();
            ds.subset(&idx)
        })
        .collect()
}

/// Concatenates datasets that share a class table and image shape.
pub fn concat(parts: &[LabeledDataset]) -> Result<LabeledDataset> {
    let first = parts.first().ok_or(Error::Empty("dataset list"))?;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for p in parts {
        if p.classes != first.classes || p.image_shape() != first.image_shape() {
            return Err(invalid("cannot concatenate datasets with different classes or shapes"));
        }
        data.extend_from_slice(p.images.data());
        labels.extend_from_slice(&p.labels);
    }
    let mut shape = first.images.shape().to_vec();
    shape[0] = labels.len();
    LabeledDataset::new(DenseArray::new(shape, data)?, labels, first.classes.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(per_class: usize, classes: usize) -> LabeledDataset {
        let n = per_class * classes;
        let images = DenseArray::new(vec![n, 1, 2, 2], (0..n * 4).map(|i| (i % 7) as f32 / 7.0).collect()).unwrap();
        let labels = (0..n).map(|i| i % classes).collect();
        let table =
            (0..classes).map(|c| ClassInfo::new(format!("c{c}"), ClassAttribute::EdgeCount(c as u32 + 1))).collect();
        LabeledDataset::new(images, labels, table).unwrap()
    }

    #[test]
    fn filter_keep_all_is_identity() {
        let ds = toy(3, 3);
        assert_eq!(filter_classes(&ds, &["c0", "c1", "c2"], true).unwrap(), ds);
        assert!(filter_classes(&ds, &[], true).is_err());
    }

    #[test]
    fn filter_relabels_in_keep_order() {
        let ds = toy(2, 4);
        let f = filter_classes(&ds, &["c3", "c1"], true).unwrap();
        assert_eq!(f.num_classes(), 2);
        assert_eq!(f.classes()[0].name, "c3");
        assert_eq!(f.class_counts(), vec![2, 2]);
        let single = filter_classes(&ds, &["c2"], false).unwrap();
        assert_eq!(single.num_classes(), 4);
        assert!(single.labels().iter().all(|&l| l == 2));
    }

    #[test]
    fn split_counts_and_partition() {
        let ds = toy(50, 2);
        let parts = split(&ds, &[0.8, 0.1, 0.1], 3).unwrap();
        let counts: Vec<_> = parts.iter().map(|p| p.class_counts()).collect();
        assert_eq!(counts, vec![vec![40, 40], vec![5, 5], vec![5, 5]]);
        let whole = split(&ds, &[1.0], 3).unwrap();
        assert_eq!(whole[0], ds);
        assert!(matches!(split(&toy(2, 2), &[0.4, 0.3, 0.3], 0), Err(Error::ClassTooSmall { .. })));
        assert!(split(&ds, &[0.5, 0.6], 0).is_err());
    }

    #[test]
    fn split_is_deterministic() {
        let ds = toy(20, 3);
        assert_eq!(split(&ds, &[0.5, 0.5], 9).unwrap(), split(&ds, &[0.5, 0.5], 9).unwrap());
    }

    #[test]
    fn rejects_mixed_attributes_and_bad_labels() {
        let images = DenseArray::new(vec![2, 1, 1, 1], vec![0.0, 1.0]).unwrap();
        let mixed =
            vec![ClassInfo::new("a", ClassAttribute::EdgeCount(1)), ClassInfo::new("b", ClassAttribute::Liveliness(1))];
        assert!(matches!(LabeledDataset::new(images.clone(), vec![0, 1], mixed), Err(Error::MixedAttributes)));
        let one = vec![ClassInfo::new("a", ClassAttribute::EdgeCount(1))];
        assert!(LabeledDataset::new(images, vec![0, 1], one).is_err());
    }
}
