//! Inference-time characterization of test inputs against the bank, known-vs-novel verdicts,
//! and the detection / false-positive metrics and sweeps built on them.

use std::fmt::Write as _;

use serde::Serialize;

use crate::array::DenseArray;
use crate::bank::RepresentationBank;
use crate::comparator::{ComparatorModel, HeadMode};
use crate::data::{ClassAttribute, ClassInfo, LabeledDataset};
use crate::error::{invalid, Error, Result};
use crate::primary::{uncertainty_gate, GateOutcome, PrimaryModel, UncertaintyGate};
use crate::relation::relation;

pub type Signature = Vec<i8>;

const PAIR_CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Known(usize),
    Novel,
}

/// Per-known-class expected signatures, `row[k][j] = relation(class j, class k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedSignatureTable {
    pub classes: Vec<ClassInfo>,
    pub known: Vec<Signature>,
}

impl ExpectedSignatureTable {
    pub fn new(classes: &[ClassInfo]) -> Result<Self> {
        let known: Vec<Signature> =
            classes.iter().map(|k| Self::signature_of(classes, k.attribute)).collect::<Result<_>>()?;
        Ok(Self { classes: classes.to_vec(), known })
    }

    /// Like `new`, but rejects tables where two classes share a row.
    pub fn distinct(classes: &[ClassInfo]) -> Result<Self> {
        let t = Self::new(classes)?;
        if let Some((a, b)) = t.shared_pair() {
            return Err(invalid(format!(
                "classes {} and {} share a signature and cannot be told apart",
                classes[a].name, classes[b].name
            )));
        }
        Ok(t)
    }

    /// First pair of classes with identical rows. Binary attributes such as liveliness always
    /// produce one once more than two classes are known.
    pub fn shared_pair(&self) -> Option<(usize, usize)> {
        (0..self.known.len()).flat_map(|a| (0..a).map(move |b| (b, a))).find(|&(b, a)| self.known[a] == self.known[b])
    }

    /// Ground-truth signature of a class with `attribute` relative to the bank classes.
    pub fn signature_of(classes: &[ClassInfo], attribute: ClassAttribute) -> Result<Signature> {
        classes.iter().map(|j| relation(j.attribute, attribute)).collect()
    }

    pub fn ground_truth(&self, attribute: ClassAttribute) -> Result<Signature> {
        Self::signature_of(&self.classes, attribute)
    }
}

/// Mean comparator output `t(bank row, test)` per bank class, accumulated in f64 in row order.
pub fn category_scores(comparator: &ComparatorModel, bank: &RepresentationBank, r_test: &[f32]) -> Result<Vec<f64>> {
    let test = DenseArray::new(vec![1, r_test.len()], r_test.to_vec())?;
    Ok(category_scores_batch(comparator, bank, &test)?.remove(0))
}

fn check_widths(
    comparator: &ComparatorModel,
    bank: &RepresentationBank,
    tests: &DenseArray<f32>,
) -> Result<Vec<Vec<usize>>> {
    if bank.width() != comparator.input_width() || tests.inner() != comparator.input_width() {
        return Err(Error::ShapeMismatch {
            layer: 0,
            expected: vec![comparator.input_width()],
            actual: vec![bank.width(), tests.inner()],
        });
    }
    let rows = bank.class_rows();
    if let Some(k) = rows.iter().position(|r| r.is_empty()) {
        return Err(invalid(format!("bank has no rows for class {}", bank.classes[k].name)));
    }
    Ok(rows)
}

/// Evaluates `f(bank rows, test rows)` over every (bank row, test) pair; returns `out[test][row]`.
fn all_pairs<T: Clone + Default>(
    bank: &RepresentationBank,
    tests: &DenseArray<f32>,
    mut f: impl FnMut(&DenseArray<f32>, &DenseArray<f32>) -> Result<Vec<T>>,
) -> Result<Vec<Vec<T>>> {
    let (m, n) = (bank.len(), tests.outer());
    let per_chunk = (PAIR_CHUNK / m).max(1);
    let mut out = Vec::with_capacity(n);
    for start in (0..n).step_by(per_chunk) {
        let end = (start + per_chunk).min(n);
        let left: Vec<usize> = (start..end).flat_map(|_| 0..m).collect();
        let right: Vec<usize> = (start..end).flat_map(|i| std::iter::repeat(i).take(m)).collect();
        let vals = f(&bank.rows.select_rows(&left)?, &tests.select_rows(&right)?)?;
        out.extend(vals.chunks(m).map(<[T]>::to_vec));
    }
    Ok(out)
}

/// Score vectors for a batch of test representations `(n, width)`.
pub fn category_scores_batch(
    comparator: &ComparatorModel,
    bank: &RepresentationBank,
    tests: &DenseArray<f32>,
) -> Result<Vec<Vec<f64>>> {
    let rows = check_widths(comparator, bank, tests)?;
    let t = all_pairs(bank, tests, |a, b| comparator.relate(a, b))?;
    Ok(t.iter()
        .map(|per_row| {
            rows.iter()
                .map(|members| members.iter().map(|&j| per_row[j] as f64).sum::<f64>() / members.len() as f64)
                .collect()
        })
        .collect())
}

/// Symmetric dead zone: +1 above γ, −1 below −γ, 0 otherwise.
pub fn characterize(scores: &[f64], gamma: f64) -> Signature {
    scores
        .iter()
        .map(|&s| {
            if s > gamma {
                1
            } else if s < -gamma {
                -1
            } else {
                0
            }
        })
        .collect()
}

/// Majority of ternary votes; ties prefer 0, then −1.
pub fn majority(votes: &[i8]) -> i8 {
    let count = |v: i8| votes.iter().filter(|&&x| x == v).count();
    let (neg, zero, pos) = (count(-1), count(0), count(1));
    let top = neg.max(zero).max(pos);
    if zero == top {
        0
    } else if neg == top {
        -1
    } else {
        1
    }
}

/// Class-wise majority vote of the three-class comparator's per-pair decisions.
pub fn vote_characterize(comparator: &ComparatorModel, bank: &RepresentationBank, r_test: &[f32]) -> Result<Signature> {
    let test = DenseArray::new(vec![1, r_test.len()], r_test.to_vec())?;
    Ok(vote_characterize_batch(comparator, bank, &test)?.remove(0))
}

pub fn vote_characterize_batch(
    comparator: &ComparatorModel,
    bank: &RepresentationBank,
    tests: &DenseArray<f32>,
) -> Result<Vec<Signature>> {
    if comparator.mode != HeadMode::ThreeClass {
        return Err(invalid("voting needs a three-class comparator"));
    }
    let rows = check_widths(comparator, bank, tests)?;
    let votes = all_pairs(bank, tests, |a, b| crate::comparator::predicted_relation(comparator, a, b))?;
    Ok(votes
        .iter()
        .map(|per_row| {
            rows.iter().map(|members| majority(&members.iter().map(|&j| per_row[j]).collect::<Vec<_>>())).collect()
        })
        .collect())
}

/// `Known(k)` iff the signature equals class `k`'s expected row exactly.
pub fn decide(signature: &[i8], table: &ExpectedSignatureTable) -> Verdict {
    decide_preferring(signature, table, None)
}

/// As `decide`, but when several classes share the matching row, `prefer` wins if it is one of them.
pub fn decide_preferring(signature: &[i8], table: &ExpectedSignatureTable, prefer: Option<usize>) -> Verdict {
    if let Some(k) = prefer.filter(|&k| table.known.get(k).is_some_and(|row| row.as_slice() == signature)) {
        return Verdict::Known(k);
    }
    match table.known.iter().position(|row| row.as_slice() == signature) {
        Some(k) => Verdict::Known(k),
        None => Verdict::Novel,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Composition {
    /// Every input goes through the comparator.
    #[default]
    ComparatorOnly,
    /// Confident inputs take the primary's label; only uncertain ones are characterized.
    GateFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    /// Mean relation per class with a γ dead zone.
    #[default]
    Mean,
    /// Class-wise majority of three-class decisions; γ is ignored.
    Vote,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CharacterizationResult {
    pub scores: Vec<f64>,
    pub signature: Signature,
    pub verdict: Verdict,
    pub gate: Option<GateOutcomeTag>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GateOutcomeTag {
    Confident,
    Uncertain,
}

impl From<GateOutcome> for GateOutcomeTag {
    fn from(g: GateOutcome) -> Self {
        match g {
            GateOutcome::Confident => GateOutcomeTag::Confident,
            GateOutcome::Uncertain => GateOutcomeTag::Uncertain,
        }
    }
}

/// Trained components wired together for evaluation.
#[derive(Debug, Clone)]
pub struct Pipeline<'a> {
    pub primary: &'a PrimaryModel,
    pub comparator: &'a ComparatorModel,
    pub bank: &'a RepresentationBank,
    pub table: ExpectedSignatureTable,
    pub composition: Composition,
    pub pooling: Pooling,
}

/// γ-independent evaluation state of a set of inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSet {
    pub scores: Vec<Vec<f64>>,
    pub votes: Option<Vec<Signature>>,
    /// Top softmax class and probability.
    pub top: Vec<(usize, f32)>,
    pub gate: Option<Vec<GateOutcome>>,
}

impl<'a> Pipeline<'a> {
    pub fn new(
        primary: &'a PrimaryModel,
        comparator: &'a ComparatorModel,
        bank: &'a RepresentationBank,
    ) -> Result<Self> {
        if bank.classes != primary.classes {
            return Err(invalid("bank classes differ from the primary model's"));
        }
        if primary.representation_width(&bank.layer)? != comparator.input_width() {
            return Err(invalid("comparator width differs from the bank layer"));
        }
        Ok(Self {
            primary,
            comparator,
            bank,
            table: ExpectedSignatureTable::new(&bank.classes)?,
            composition: Composition::default(),
            pooling: Pooling::default(),
        })
    }

    pub fn score(&self, images: &DenseArray<f32>) -> Result<ScoredSet> {
        let reps = self.primary.extract_batch(images, &self.bank.layer)?;
        let probs = self.primary.classify_batch(images)?;
        let top = (0..probs.outer()).map(|i| {
            let k = probs.argmax_row(i);
            (k, probs.row(i)[k])
        });
        let top: Vec<(usize, f32)> = top.collect();
        let scores = category_scores_batch(self.comparator, self.bank, &reps)?;
        let votes = match self.pooling {
            Pooling::Vote => Some(vote_characterize_batch(self.comparator, self.bank, &reps)?),
            Pooling::Mean => None,
        };
        let gate = match self.composition {
            Composition::GateFirst => {
                let g = self.primary.gate.ok_or_else(|| invalid("gate-first composition needs a calibrated gate"))?;
                Some((0..probs.outer()).map(|i| uncertainty_gate(&g, probs.row(i))).collect())
            }
            Composition::ComparatorOnly => None,
        };
        Ok(ScoredSet { scores, votes, top, gate })
    }

    /// Characterization of scored example `i` at threshold `gamma`.
    pub fn result(&self, set: &ScoredSet, i: usize, gamma: f64) -> CharacterizationResult {
        let gate = set.gate.as_ref().map(|g| g[i]);
        let (signature, verdict) = if gate == Some(GateOutcome::Confident) {
            let k = set.top[i].0;
            (self.table.known[k].clone(), Verdict::Known(k))
        } else {
            let sig = match &set.votes {
                Some(v) => v[i].clone(),
                None => characterize(&set.scores[i], gamma),
            };
            let verdict = decide_preferring(&sig, &self.table, Some(set.top[i].0));
            (sig, verdict)
        };
        CharacterizationResult { scores: set.scores[i].clone(), signature, verdict, gate: gate.map(Into::into) }
    }

    pub fn characterize_set(&self, images: &DenseArray<f32>, gamma: f64) -> Result<Vec<CharacterizationResult>> {
        let set = self.score(images)?;
        Ok((0..set.scores.len()).map(|i| self.result(&set, i, gamma)).collect())
    }
}

fn rate(hits: usize, n: usize) -> f64 {
    hits as f64 / n as f64
}

/// Fraction of scored novel inputs whose full signature equals `ground`.
pub fn novelty_rate(p: &Pipeline, set: &ScoredSet, ground: &[i8], gamma: f64) -> Result<f64> {
    if set.scores.is_empty() {
        return Err(Error::Empty("novel set"));
    }
    let hits = (0..set.scores.len()).filter(|&i| p.result(set, i, gamma).signature == ground).count();
    Ok(rate(hits, set.scores.len()))
}

/// Fraction of scored known inputs judged novel or given a signature other than their class row.
/// With distinct rows this is exactly `verdict != Known(label)`.
pub fn false_positive_rate(p: &Pipeline, set: &ScoredSet, labels: &[usize], gamma: f64) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::Empty("known test set"));
    }
    let misses = labels
        .iter()
        .enumerate()
        .filter(|&(i, &l)| {
            let r = p.result(set, i, gamma);
            r.verdict == Verdict::Novel || r.signature != p.table.known[l]
        })
        .count();
    Ok(rate(misses, labels.len()))
}

pub fn eval_novelty(p: &Pipeline, novel: &DenseArray<f32>, ground: &[i8], gamma: f64) -> Result<f64> {
    if novel.outer() == 0 {
        return Err(Error::Empty("novel set"));
    }
    novelty_rate(p, &p.score(novel)?, ground, gamma)
}

pub fn eval_false_positive(p: &Pipeline, known: &LabeledDataset, gamma: f64) -> Result<f64> {
    if known.classes() != p.bank.classes.as_slice() {
        return Err(invalid("known test set classes differ from the bank's"));
    }
    false_positive_rate(p, &p.score(known.images())?, known.labels(), gamma)
}

/// Fraction of softmax rows failing the gate.
pub fn uncertain_rate(gate: &UncertaintyGate, probs: &DenseArray<f32>) -> f64 {
    let n = probs.outer();
    let flagged = (0..n).filter(|&i| uncertainty_gate(gate, probs.row(i)) == GateOutcome::Uncertain).count();
    rate(flagged, n)
}

/// Share of novel inputs the softmax-confidence baseline flags as uncertain.
pub fn eval_uncertainty_baseline(model: &PrimaryModel, gate: &UncertaintyGate, novel: &DenseArray<f32>) -> Result<f64> {
    if novel.outer() == 0 {
        return Err(Error::Empty("novel set"));
    }
    Ok(uncertain_rate(gate, &model.classify_batch(novel)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct SweepRow {
    pub sweep_param: f64,
    pub novelty_detection_rate: f64,
    pub false_positive_rate: f64,
    pub characterization_accuracy: f64,
    pub n_novel: usize,
    pub n_known: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, serde::Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "sweep_param,novelty_detection_rate,false_positive_rate,characterization_accuracy,n_novel,n_known,seed\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:.6},{:.6},{:.6},{},{},{}",
                r.sweep_param,
                r.novelty_detection_rate,
                r.false_positive_rate,
                r.characterization_accuracy,
                r.n_novel,
                r.n_known,
                r.seed
            );
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or(Error::Empty("report"))?;
        if header.split(',').count() != 7 {
            return Err(invalid("report header must have seven columns"));
        }
        let rows = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                let bad = || invalid(format!("bad report line {l:?}"));
                if f.len() != 7 {
                    return Err(bad());
                }
                let num = |i: usize| f[i].parse::<f64>().map_err(|_| bad());
                let int = |i: usize| f[i].parse::<u64>().map_err(|_| bad());
                Ok(SweepRow {
                    sweep_param: num(0)?,
                    novelty_detection_rate: num(1)?,
                    false_positive_rate: num(2)?,
                    characterization_accuracy: num(3)?,
                    n_novel: int(4)? as usize,
                    n_known: int(5)? as usize,
                    seed: int(6)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { rows })
    }
}

/// Scored known and novel evaluation sets with their ground truth.
#[derive(Debug, Clone)]
pub struct EvalSets {
    pub known: ScoredSet,
    pub known_labels: Vec<usize>,
    pub novel: ScoredSet,
    pub novel_signature: Signature,
}

impl EvalSets {
    pub fn new(
        p: &Pipeline,
        known: &LabeledDataset,
        novel: &DenseArray<f32>,
        novel_attribute: ClassAttribute,
    ) -> Result<Self> {
        if known.is_empty() || novel.outer() == 0 {
            return Err(Error::Empty("evaluation set"));
        }
        if known.classes() != p.bank.classes.as_slice() {
            return Err(invalid("known test set classes differ from the bank's"));
        }
        let novel_signature = p.table.ground_truth(novel_attribute)?;
        // With a shared row only the gate can flag the novel class, so gate-first is required.
        if decide(&novel_signature, &p.table) != Verdict::Novel && p.composition != Composition::GateFirst {
            return Err(invalid("novel class signature coincides with a known class; use gate-first composition"));
        }
        Ok(Self {
            known: p.score(known.images())?,
            known_labels: known.labels().to_vec(),
            novel: p.score(novel)?,
            novel_signature,
        })
    }

    pub fn row(&self, p: &Pipeline, gamma: f64, sweep_param: f64, seed: u64) -> Result<SweepRow> {
        let n_novel = self.novel.scores.len();
        let novel_correct =
            (0..n_novel).filter(|&i| p.result(&self.novel, i, gamma).signature == self.novel_signature).count();
        let detection = rate(novel_correct, n_novel);
        let fp = false_positive_rate(p, &self.known, &self.known_labels, gamma)?;
        let known_correct = self
            .known_labels
            .iter()
            .enumerate()
            .filter(|&(i, &l)| p.result(&self.known, i, gamma).signature == p.table.known[l])
            .count();
        let n_known = self.known_labels.len();
        Ok(SweepRow {
            sweep_param,
            novelty_detection_rate: detection,
            false_positive_rate: fp,
            characterization_accuracy: rate(known_correct + novel_correct, n_known + n_novel),
            n_novel,
            n_known,
            seed,
        })
    }
}

/// One row per γ with every other piece of state held fixed.
pub fn sweep_gamma(p: &Pipeline, sets: &EvalSets, gammas: &[f64], seed: u64) -> Result<SweepReport> {
    if gammas.iter().any(|&g| g.is_nan() || g < 0.0) {
        return Err(invalid("γ values must be non-negative"));
    }
    if gammas.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid("γ values must be sorted"));
    }
    let rows = gammas.iter().map(|&g| sets.row(p, g, g, seed)).collect::<Result<_>>()?;
    Ok(SweepReport { rows })
}

/// Per-example audit lines: index, truth, verdict, signature, scores.
pub fn signatures_csv(results: &[CharacterizationResult], truth: &[String], classes: &[ClassInfo]) -> String {
    let mut out = String::from("index,truth,verdict,signature,scores\n");
    for (i, r) in results.iter().enumerate() {
        let verdict = match r.verdict {
            Verdict::Known(k) => classes[k].name.clone(),
            Verdict::Novel => "novel".into(),
        };
        let sig = r.signature.iter().map(i8::to_string).collect::<Vec<_>>().join(" ");
        let scores = r.scores.iter().map(|s| format!("{s:.4}")).collect::<Vec<_>>().join(" ");
        let _ = writeln!(out, "{i},{},{verdict},{sig},{scores}", truth.get(i).map(String::as_str).unwrap_or(""));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bank::SelectionMethod;
    use crate::comparator::comparator_forward;
    use crate::data::shapes::ShapeClass;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn shape_classes() -> Vec<ClassInfo> {
        ShapeClass::KNOWN.iter().map(|c| c.info()).collect()
    }

    fn random_bank(per_class: &[usize], width: usize, seed: u64) -> RepresentationBank {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut labels = Vec::new();
        for (c, &n) in per_class.iter().enumerate() {
            labels.extend(std::iter::repeat(c).take(n));
        }
        let data = (0..labels.len() * width).map(|_| rng.gen_range(-1.0..1.0)).collect();
        RepresentationBank {
            rows: DenseArray::new(vec![labels.len(), width], data).unwrap(),
            labels,
            classes: shape_classes(),
            layer: "FC2".into(),
            method: SelectionMethod::Greedy,
            source: 0,
        }
    }

    #[test]
    fn table_rows() {
        let t = ExpectedSignatureTable::new(&shape_classes()).unwrap();
        assert_eq!(t.known[1], vec![-1, 0, 1, 1]);
        assert_eq!(t.ground_truth(ShapeClass::Angle.info().attribute).unwrap(), vec![-1, 1, 1, 1]);
        for (k, row) in t.known.iter().enumerate() {
            assert_eq!(row[k], 0);
        }
        let cifar = crate::data::cifar::class_table();
        let dup: Vec<ClassInfo> = [1, 9].iter().map(|&i| cifar[i].clone()).collect();
        assert!(ExpectedSignatureTable::distinct(&dup).is_err());
        let shared = ExpectedSignatureTable::new(&dup).unwrap();
        assert_eq!(shared.shared_pair(), Some((0, 1)));
        assert_eq!(ExpectedSignatureTable::distinct(&shape_classes()).unwrap().shared_pair(), None);
    }

    #[test]
    fn decide_rules() {
        let t = ExpectedSignatureTable::new(&shape_classes()).unwrap();
        assert_eq!(decide(&[-1, 0, 1, 1], &t), Verdict::Known(1));
        assert_eq!(decide(&[-1, 1, 1, 1], &t), Verdict::Novel);
        assert_eq!(decide(&[0, 0, 0, 0], &t), Verdict::Novel);
        assert_eq!(decide_preferring(&[-1, 0, 1, 1], &t, Some(3)), Verdict::Known(1));
    }

    #[test]
    fn shared_rows_defer_to_preference() {
        let cifar = crate::data::cifar::class_table();
        let known: Vec<ClassInfo> = [1, 9, 7, 5].iter().map(|&i| cifar[i].clone()).collect();
        let t = ExpectedSignatureTable::new(&known).unwrap();
        let row = t.known[0].clone();
        assert_eq!(row, t.known[1]);
        assert_eq!(decide(&row, &t), Verdict::Known(0));
        assert_eq!(decide_preferring(&row, &t, Some(1)), Verdict::Known(1));
        assert_eq!(decide_preferring(&row, &t, Some(2)), Verdict::Known(0));
    }

    #[test]
    fn dead_zone() {
        assert_eq!(characterize(&[0.9, -0.8, 0.01, -0.9], 0.2), vec![1, -1, 0, -1]);
        assert_eq!(characterize(&[0.3, -0.01], 0.0), vec![1, -1]);
        assert_eq!(characterize(&[0.2, -0.2], 0.2), vec![0, 0]);
    }

    #[test]
    fn vote_ties() {
        assert_eq!(majority(&[1, 1, 1]), 1);
        assert_eq!(majority(&[1, -1, 0]), 0);
        assert_eq!(majority(&[1, -1]), -1);
        assert_eq!(majority(&[1, 1, -1]), 1);
    }

    #[test]
    fn scores_match_naive_loop() {
        let bank = random_bank(&[3, 5, 2, 4], 6, 1);
        let cmp = ComparatorModel::new(HeadMode::Antisymmetric, 6, 8, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let tests = DenseArray::new(vec![7, 6], (0..42).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let fast = category_scores_batch(&cmp, &bank, &tests).unwrap();
        for i in 0..7 {
            let mut sums = [0.0f64; 4];
            let mut counts = [0usize; 4];
            for j in (0..bank.len()).rev() {
                sums[bank.labels[j]] += comparator_forward(&cmp, bank.row(j), tests.row(i)).unwrap() as f64;
                counts[bank.labels[j]] += 1;
            }
            for k in 0..4 {
                assert!((fast[i][k] - sums[k] / counts[k] as f64).abs() <= 1e-9);
            }
            assert_eq!(category_scores(&cmp, &bank, tests.row(i)).unwrap(), fast[i]);
        }
    }

    #[test]
    fn zero_comparator_gives_zero_scores() {
        let bank = random_bank(&[2, 2, 2, 2], 3, 1);
        let mut cmp = ComparatorModel::new(HeadMode::Antisymmetric, 3, 0, 2).unwrap();
        for a in cmp.params.head.arrays_mut() {
            a.fill(0.0);
        }
        assert_eq!(category_scores(&cmp, &bank, &[0.5, 0.1, -0.3]).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn sole_row_scores_zero_against_itself() {
        let bank = random_bank(&[1, 1, 1, 1], 4, 5);
        let cmp = ComparatorModel::new(HeadMode::Antisymmetric, 4, 0, 6).unwrap();
        for j in 0..4 {
            assert_eq!(category_scores(&cmp, &bank, bank.row(j)).unwrap()[j], 0.0);
        }
    }

    #[test]
    fn empty_class_rejected() {
        let mut bank = random_bank(&[2, 2, 2, 2], 3, 1);
        bank.labels[2] = 0;
        bank.labels[3] = 0;
        let cmp = ComparatorModel::new(HeadMode::Antisymmetric, 3, 0, 2).unwrap();
        assert!(category_scores(&cmp, &bank, &[0.0; 3]).is_err());
    }

    #[test]
    fn report_csv_round_trip() {
        let report = SweepReport {
            rows: vec![SweepRow {
                sweep_param: 0.2,
                novelty_detection_rate: 0.5,
                false_positive_rate: 0.125,
                characterization_accuracy: 0.75,
                n_novel: 10,
                n_known: 20,
                seed: 3,
            }],
        };
        let csv = report.to_csv();
        assert!(csv.starts_with("sweep_param,novelty_detection_rate,false_positive_rate"));
        assert_eq!(SweepReport::from_csv(&csv).unwrap(), report);
    }
}
