use serde::{Deserialize, Serialize};

use streamtune::baseline::Ds2Config;
use streamtune::bottleneck::DEFAULT_THRESHOLD;
use streamtune::clustering::{DEFAULT_MAX_ITER, DEFAULT_TAU};
use streamtune::encoder::TrainConfig;
use streamtune::finetune::{TuneConfig, DEFAULT_ITERATION_CAP, DEFAULT_WARMUP_SIZE};
use streamtune::pipeline::PretrainConfig;
use streamtune::workload::{CorpusSpec, HistorySpec, RateSchedule};

/// Everything a run depends on. The top-level knobs win over the copies
/// inside the nested sections; see [`RunConfig::resolve`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub p_max: u32,
    pub threshold: f64,
    pub tau: u32,
    pub k: usize,
    /// Inclusive k range scanned by `cluster` instead of a single k.
    pub elbow: Option<[usize; 2]>,
    pub max_iter: usize,
    pub iteration_cap: usize,
    pub warmup_size: usize,
    /// Queries taken from the corpus by `compare`.
    pub queries: usize,
    pub ds2_noise: f64,
    pub encoder: TrainConfig,
    pub tune: TuneConfig,
    pub corpus: CorpusSpec,
    pub history: HistorySpec,
    pub schedule: RateSchedule,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            p_max: 100,
            threshold: DEFAULT_THRESHOLD,
            tau: DEFAULT_TAU,
            k: 3,
            elbow: None,
            max_iter: DEFAULT_MAX_ITER,
            iteration_cap: DEFAULT_ITERATION_CAP,
            warmup_size: DEFAULT_WARMUP_SIZE,
            queries: 50,
            ds2_noise: 0.0,
            encoder: TrainConfig::default(),
            tune: TuneConfig::default(),
            corpus: CorpusSpec::default(),
            history: HistorySpec::default(),
            schedule: RateSchedule::default(),
        }
    }
}

impl RunConfig {
    /// Pushes the top-level values into the nested sections so the config
    /// written next to the outputs has a single value for each knob.
    pub fn resolve(mut self) -> Self {
        self.encoder.gnn.p_max = self.p_max;
        self.encoder.seed = self.seed;
        self.corpus.p_max = self.p_max;
        self.history.threshold = self.threshold;
        self.tune.p_max = self.p_max;
        self.tune.label_threshold = self.threshold;
        self.tune.iteration_cap = self.iteration_cap;
        self.tune.warmup_size = self.warmup_size;
        self.tune.seed = self.seed;
        self
    }

    pub fn pretrain(&self) -> PretrainConfig {
        PretrainConfig {
            k: self.k,
            tau: self.tau,
            max_iter: self.max_iter,
            train: self.encoder.clone(),
            seed: self.seed,
        }
    }

    pub fn ds2(&self) -> Ds2Config {
        Ds2Config {
            p_max: self.p_max,
            iteration_cap: self.iteration_cap,
            label_threshold: self.threshold,
            noise: self.ds2_noise,
            seed: self.seed,
        }
    }
}
