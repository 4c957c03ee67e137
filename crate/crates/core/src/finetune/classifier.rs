//! Margin classifier `f(h, p) = w_e . phi(h) + w_p * p + b` fitted on the
//! hinge objective `1/2 |w_e|^2 + 1/2 w_p^2 + C * sum(xi)`.
//!
//! The monotone fit keeps `w_p <= 0` after every step, so the predicted
//! bottleneck probability never rises with parallelism. The unconstrained
//! fit used for the ablation drops that projection and also feeds the
//! parallelism through the nonlinear lift, which makes the score
//! non-monotone in `p` in general.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use super::FineTuneError;
use crate::encoder::sigmoid;

/// One labeled operator observation: agnostic embedding, parallelism and
/// bottleneck flag.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub h: Vec<f64>,
    pub p: u32,
    pub y: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureMap {
    Identity,
    /// Random Fourier features of a Gaussian kernel, appended to the
    /// standardized input.
    RandomFourier { dim: usize, bandwidth: f64, seed: u64 },
}

/// How parallelism enters the score. Any increasing transform keeps the
/// score monotone under `w_p <= 0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParallelismScale {
    Linear,
    /// Processing ability grows roughly as a power of parallelism, so the
    /// feasibility boundary is close to linear in `ln p`.
    Log,
}

impl ParallelismScale {
    pub fn apply(self, p: u32) -> f64 {
        match self {
            ParallelismScale::Linear => f64::from(p),
            ParallelismScale::Log => f64::from(p).ln(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub c: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub feature_map: FeatureMap,
    pub parallelism_scale: ParallelismScale,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            c: 10.0,
            epochs: 2000,
            learning_rate: 0.5,
            feature_map: FeatureMap::Identity,
            parallelism_scale: ParallelismScale::Log,
        }
    }
}

/// Fixed lift applied after standardization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Lift {
    mean: Vec<f64>,
    scale: Vec<f64>,
    /// Row-major `dim x input` frequencies and per-row phases.
    omega: Vec<f64>,
    phase: Vec<f64>,
    /// Parallelism divisor when `p` is part of the lifted input.
    p_scale: Option<f64>,
}

impl Lift {
    fn fit(examples: &[TrainingExample], map: &FeatureMap, p_scale: Option<f64>) -> Self {
        let d = examples[0].h.len();
        let n = examples.len() as f64;
        let mut mean = vec![0.0; d];
        for e in examples {
            for (m, x) in mean.iter_mut().zip(&e.h) {
                *m += x / n;
            }
        }
        let mut var = vec![0.0; d];
        for e in examples {
            for ((v, x), m) in var.iter_mut().zip(&e.h).zip(&mean) {
                *v += (x - m).powi(2) / n;
            }
        }
        let scale = var.iter().map(|v| if v.sqrt() > 1e-9 { v.sqrt() } else { 1.0 }).collect();
        let input = d + usize::from(p_scale.is_some());
        let (omega, phase) = match *map {
            FeatureMap::Identity => (Vec::new(), Vec::new()),
            FeatureMap::RandomFourier { dim, bandwidth, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let normal = Normal::new(0.0, 1.0 / (bandwidth * (input as f64).sqrt())).expect("positive bandwidth");
                let omega = (0..dim * input).map(|_| normal.sample(&mut rng)).collect();
                let uniform = Uniform::new(0.0, std::f64::consts::TAU);
                let phase = (0..dim).map(|_| uniform.sample(&mut rng)).collect();
                (omega, phase)
            }
        };
        Lift {
            mean,
            scale,
            omega,
            phase,
            p_scale,
        }
    }

    fn dim(&self) -> usize {
        self.mean.len() + usize::from(self.p_scale.is_some()) + self.phase.len()
    }

    fn apply(&self, h: &[f64], p: u32) -> Vec<f64> {
        let mut z: Vec<f64> = h.iter().zip(&self.mean).zip(&self.scale).map(|((x, m), s)| (x - m) / s).collect();
        if let Some(ps) = self.p_scale {
            z.push(f64::from(p) / ps);
        }
        let input = z.len();
        let norm = (2.0 / self.phase.len().max(1) as f64).sqrt();
        let mut out = z.clone();
        for (k, phase) in self.phase.iter().enumerate() {
            let row = &self.omega[k * input..(k + 1) * input];
            let dot: f64 = row.iter().zip(&z).map(|(w, x)| w * x).sum();
            out.push(norm * (dot + phase).cos());
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotonicClassifier {
    pub w_e: Vec<f64>,
    pub w_p: f64,
    pub b: f64,
    pub c: f64,
    pub feature_map: FeatureMap,
    pub parallelism_scale: ParallelismScale,
    /// Whether `w_p <= 0` was enforced during fitting.
    pub constrained: bool,
    /// Set when the dataset held a single class.
    pub degenerate: bool,
    pub objective: f64,
    lift: Lift,
}

impl MonotonicClassifier {
    /// The all-zero classifier: probability 1/2 everywhere.
    pub fn zero(input_dim: usize) -> Self {
        MonotonicClassifier {
            w_e: vec![0.0; input_dim],
            w_p: 0.0,
            b: 0.0,
            c: 1.0,
            feature_map: FeatureMap::Identity,
            parallelism_scale: ParallelismScale::Linear,
            constrained: true,
            degenerate: true,
            objective: 0.0,
            lift: Lift {
                mean: vec![0.0; input_dim],
                scale: vec![1.0; input_dim],
                omega: Vec::new(),
                phase: Vec::new(),
                p_scale: None,
            },
        }
    }

    /// Builds a classifier from explicit weights over the raw embedding.
    pub fn from_weights(w_e: Vec<f64>, w_p: f64, b: f64) -> Self {
        let mut c = Self::zero(w_e.len());
        c.w_e = w_e;
        c.w_p = w_p;
        c.b = b;
        c.degenerate = false;
        c.constrained = w_p <= 0.0;
        c
    }

    pub fn score(&self, h: &[f64], p: u32) -> f64 {
        let z = self.lift.apply(h, p);
        let dot: f64 = self.w_e.iter().zip(&z).map(|(w, x)| w * x).sum();
        dot + self.w_p * self.parallelism_scale.apply(p) + self.b
    }

    pub fn predict_prob(&self, h: &[f64], p: u32) -> f64 {
        sigmoid(self.score(h, p))
    }
}

pub fn predict_prob(classifier: &MonotonicClassifier, h: &[f64], p: u32) -> f64 {
    classifier.predict_prob(h, p)
}

fn check(dataset: &[TrainingExample]) -> Result<(), FineTuneError> {
    if dataset.is_empty() {
        return Err(FineTuneError::EmptyDataset);
    }
    let d = dataset[0].h.len();
    if dataset.iter().any(|e| e.h.len() != d || e.y > 1) {
        return Err(FineTuneError::InconsistentDataset);
    }
    Ok(())
}

pub fn fit_monotone(dataset: &[TrainingExample], config: &FitConfig) -> Result<MonotonicClassifier, FineTuneError> {
    check(dataset)?;
    let lift = Lift::fit(dataset, &config.feature_map, None);
    Ok(fit(dataset, config, lift, true))
}

/// Ablation: unconstrained `w_p`, parallelism also enters the lift.
pub fn fit_unconstrained(
    dataset: &[TrainingExample],
    config: &FitConfig,
    p_max: u32,
) -> Result<MonotonicClassifier, FineTuneError> {
    check(dataset)?;
    let lift = Lift::fit(dataset, &config.feature_map, Some(f64::from(p_max.max(1))));
    Ok(fit(dataset, config, lift, false))
}

/// Projected subgradient descent with a diagonal (AdaGrad) preconditioner.
/// The constraint is a coordinate bound, so clamping is the exact
/// projection under the diagonal metric. Returns the best iterate seen.
fn fit(dataset: &[TrainingExample], config: &FitConfig, lift: Lift, constrained: bool) -> MonotonicClassifier {
    let positives = dataset.iter().filter(|e| e.y == 1).count();
    let dim = lift.dim();
    let mut out = MonotonicClassifier {
        w_e: vec![0.0; dim],
        w_p: 0.0,
        b: 0.0,
        c: config.c,
        feature_map: config.feature_map.clone(),
        parallelism_scale: config.parallelism_scale,
        constrained,
        degenerate: false,
        objective: 0.0,
        lift,
    };
    if positives == 0 || positives == dataset.len() {
        out.degenerate = true;
        out.b = if positives == 0 { -2.0 } else { 2.0 };
        out.objective = config.c * dataset.len() as f64 * (1.0 - 2.0f64).max(0.0);
        return out;
    }

    let xs: Vec<Vec<f64>> = dataset.iter().map(|e| out.lift.apply(&e.h, e.p)).collect();
    let ps: Vec<f64> = dataset.iter().map(|e| config.parallelism_scale.apply(e.p)).collect();
    let ys: Vec<f64> = dataset.iter().map(|e| if e.y == 1 { 1.0 } else { -1.0 }).collect();

    // theta = [w_e.., w_p, b]
    let n_theta = dim + 2;
    let mut theta = vec![0.0; n_theta];
    let mut accum = vec![0.0; n_theta];
    let mut grad = vec![0.0; n_theta];
    let objective = |theta: &[f64]| -> f64 {
        let reg: f64 = theta[..=dim].iter().map(|w| 0.5 * w * w).sum();
        let hinge: f64 = xs
            .iter()
            .zip(&ps)
            .zip(&ys)
            .map(|((x, p), y)| (1.0 - y * margin(theta, x, *p, dim)).max(0.0))
            .sum();
        reg + config.c * hinge
    };
    let mut best = (objective(&theta), theta.clone());
    for _ in 0..config.epochs {
        grad[..=dim].copy_from_slice(&theta[..=dim]);
        grad[dim + 1] = 0.0;
        for ((x, p), y) in xs.iter().zip(&ps).zip(&ys) {
            if y * margin(&theta, x, *p, dim) < 1.0 {
                for (g, xi) in grad[..dim].iter_mut().zip(x) {
                    *g -= config.c * y * xi;
                }
                grad[dim] -= config.c * y * p;
                grad[dim + 1] -= config.c * y;
            }
        }
        for i in 0..n_theta {
            accum[i] += grad[i] * grad[i];
            if accum[i] > 0.0 {
                theta[i] -= config.learning_rate * grad[i] / accum[i].sqrt();
            }
        }
        if constrained {
            theta[dim] = theta[dim].min(0.0);
        }
        let j = objective(&theta);
        if j < best.0 {
            best = (j, theta.clone());
        }
    }
    let (j, theta) = best;
    out.w_e = theta[..dim].to_vec();
    out.w_p = theta[dim];
    out.b = theta[dim + 1];
    out.objective = j;
    out
}

fn margin(theta: &[f64], x: &[f64], p: f64, dim: usize) -> f64 {
    let dot: f64 = theta[..dim].iter().zip(x).map(|(w, x)| w * x).sum();
    dot + theta[dim] * p + theta[dim + 1]
}

/// Smallest `p` in `[1, p_max]` predicted bottleneck-free, by binary
/// search; sound for monotone classifiers. `None` when even `p_max` is
/// predicted to bottleneck.
pub fn min_feasible_parallelism(classifier: &MonotonicClassifier, h: &[f64], p_max: u32, decision_threshold: f64) -> Option<u32> {
    let ok = |p: u32| classifier.predict_prob(h, p) < decision_threshold;
    if p_max == 0 || !ok(p_max) {
        return None;
    }
    let (mut lo, mut hi) = (1u32, p_max);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Some(lo)
}

/// Literal minimum of the predicted-feasible set by exhaustive scan; the
/// recommendation rule for classifiers without the monotone guarantee.
pub fn min_feasible_scan(classifier: &MonotonicClassifier, h: &[f64], p_max: u32, decision_threshold: f64) -> Option<u32> {
    (1..=p_max).find(|&p| classifier.predict_prob(h, p) < decision_threshold)
}
