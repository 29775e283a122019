//! Numeric self-checks: gradient verification and the submodularity properties of bank selection.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::array::DenseArray;
use crate::bank::{greedy_select, kmedoids_loss, pairwise_dissimilarity, submodular_value, Metric};
use crate::error::{invalid, Result};
use crate::nn::gradcheck::kink_free_draw;
use crate::nn::{grad_check, loss, LayerSpec, Network};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientCheck {
    pub name: &'static str,
    pub max_relative_error: f64,
    pub tolerance: f64,
    pub checked: usize,
}

impl GradientCheck {
    pub fn passed(&self) -> bool {
        self.max_relative_error < self.tolerance
    }
}

fn stacks() -> Result<Vec<(&'static str, Network, Vec<usize>, f64, f64)>> {
    use LayerSpec::*;
    Ok(vec![
        ("dense-softmax", Network::new(vec![5], vec![Dense { units: 4 }, Softmax])?, vec![3, 5], 1e-6, 1e-3),
        (
            "dense-relu-softmax",
            Network::new(
                vec![6],
                vec![Dense { units: 8 }, Relu, Dense { units: 5 }, Relu, Dense { units: 4 }, Softmax],
            )?,
            vec![3, 6],
            1e-6,
            1e-3,
        ),
        (
            "conv-pool-dense",
            Network::new(
                vec![2, 8, 8],
                vec![
                    Conv2d { filters: 3, kernel: 3 },
                    Relu,
                    MaxPool2d { size: 2 },
                    Conv2d { filters: 2, kernel: 2 },
                    Flatten,
                    Dense { units: 3 },
                    Softmax,
                ],
            )?,
            vec![2, 2, 8, 8],
            1e-5,
            1e-4,
        ),
    ])
}

/// Central-difference checks of the 64-bit backward pass on cross-entropy, away from ReLU and pool kinks.
pub fn gradient_suite() -> Result<Vec<GradientCheck>> {
    let mut out = Vec::new();
    for (name, net, shape, tolerance, margin) in stacks()? {
        let (params, batch) =
            kink_free_draw(&net, &shape, margin, 500)?.ok_or_else(|| invalid(format!("{name}: no kink-free draw")))?;
        let labels: Vec<usize> = (0..shape[0]).map(|i| i % net.output_shape()[0]).collect();
        let report = grad_check(&net, &params, &batch, |y| loss::cross_entropy(y, &labels), 1e-6)?;
        out.push(GradientCheck {
            name,
            max_relative_error: report.max_relative_error,
            tolerance,
            checked: report.checked,
        });
    }
    Ok(out)
}

/// Counts of violated properties over random pools; all zero means the suite passed.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct SubmodularReport {
    pub pools: usize,
    pub triples: usize,
    pub diminishing_returns_violations: usize,
    pub greedy_runs: usize,
    /// Smallest `f(greedy) / f(optimal)` seen; at least `1 − 1/e` when the guarantee holds.
    pub worst_greedy_ratio: f64,
    pub greedy_bound_violations: usize,
    pub loss_increase_violations: usize,
}

impl SubmodularReport {
    pub fn passed(&self) -> bool {
        self.diminishing_returns_violations == 0
            && self.greedy_bound_violations == 0
            && self.loss_increase_violations == 0
    }
}

fn subsets(n: usize) -> Vec<Vec<usize>> {
    (0u32..1 << n).map(|m| (0..n).filter(|&i| m & (1 << i) != 0).collect()).collect()
}

/// Random pools of 2 to `max_points` points in 1 to 3 dimensions, exhaustively checked.
pub fn submodular_suite(pools: usize, max_points: usize, seed: u64) -> Result<SubmodularReport> {
    if !(2..=12).contains(&max_points) {
        return Err(invalid("max_points must be within 2..=12 for exhaustive enumeration"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bound = 1.0 - (-1.0f64).exp();
    let mut r = SubmodularReport { pools, worst_greedy_ratio: f64::INFINITY, ..Default::default() };
    for _ in 0..pools {
        let n = rng.gen_range(2..=max_points);
        let w = rng.gen_range(1..=3);
        let pts = DenseArray::new(vec![n, w], (0..n * w).map(|_| rng.gen_range(-5.0f32..5.0)).collect())?;
        let d = pairwise_dissimilarity(&pts, Metric::SquaredEuclidean);
        let all = subsets(n);
        let value: Vec<f64> = all.iter().map(|s| submodular_value(s, &d)).collect();
        let mask = |s: &[usize]| s.iter().fold(0usize, |m, &i| m | 1 << i);
        for (bi, b) in all.iter().enumerate() {
            let bm = mask(b);
            for (ai, _) in all.iter().enumerate().filter(|&(ai, _)| ai & !bm == 0) {
                for e in (0..n).filter(|e| bm & (1 << e) == 0) {
                    r.triples += 1;
                    let gain_a = value[ai | 1 << e] - value[ai];
                    let gain_b = value[bi | 1 << e] - value[bi];
                    if gain_a < gain_b - 1e-9 {
                        r.diminishing_returns_violations += 1;
                    }
                }
            }
        }
        for k in 1..=3.min(n) {
            let best = all.iter().zip(&value).filter(|(s, _)| s.len() == k).map(|(_, &v)| v).fold(0.0, f64::max);
            let trace = greedy_select(&d, k)?;
            let got = submodular_value(&trace.selected, &d);
            r.greedy_runs += 1;
            if best > 0.0 {
                r.worst_greedy_ratio = r.worst_greedy_ratio.min(got / best);
            }
            if got < bound * best - 1e-9 {
                r.greedy_bound_violations += 1;
            }
            let losses: Vec<f64> = (1..=k).map(|i| kmedoids_loss(&trace.selected[..i], &d)).collect::<Result<_>>()?;
            if losses.windows(2).any(|p| p[1] > p[0] + 1e-12) {
                r.loss_increase_violations += 1;
            }
        }
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_suite_passes() {
        let checks = gradient_suite().unwrap();
        assert_eq!(checks.len(), 3);
        for c in &checks {
            assert!(c.passed(), "{c:?}");
            assert!(c.checked > 0);
        }
    }

    #[test]
    fn submodular_suite_passes() {
        let r = submodular_suite(20, 6, 1).unwrap();
        assert!(r.passed(), "{r:?}");
        assert!(r.triples > 0 && r.greedy_runs >= 20);
        assert!(r.worst_greedy_ratio >= 1.0 - (-1.0f64).exp());
    }

    #[test]
    fn rejects_oversized_pools() {
        assert!(submodular_suite(1, 20, 0).is_err());
    }
}
