//! Desk-scale trainable agent: supervised multi-task training followed by
//! latency-aware preference optimization on a synthetic task.

mod checkpoint;
mod eval;
mod model;
mod task;
mod train;
mod vocab;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use eval::{evaluate_tradeoff, mean_confidence, simulate_corpus, Aligner, EvalItem, ToyAgent};
pub use model::{SequencePass, SourceContext, StepCache, ToyModel, LOOKAHEAD};
pub use task::{SyntheticExample, SyntheticTask, SyntheticTaskSpec};
pub use train::{
    msft_eval_loss, msft_samples, preference_triples, train_msft, train_preference, PhaseConfig,
    PreferenceConfig, PreferenceLoss, PrefixSample, PrefixTriple, TrainReport,
};
pub use vocab::{Vocab, Vocabs, BOS, EOS, UNK};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::losses::LossConfig;

/// Every knob of an end-to-end toy run.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyConfig {
    pub seed: u64,
    pub task: SyntheticTaskSpec,
    pub train_size: usize,
    pub eval_size: usize,
    pub hidden: usize,
    pub init_scale: f64,
    pub batch_size: usize,
    pub msft_epochs: usize,
    pub msft_lr: f64,
    pub pref_epochs: usize,
    pub pref_lr: f64,
    pub preference: PreferenceConfig,
    pub threshold: f64,
    pub max_target_len: usize,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            task: SyntheticTaskSpec::default(),
            train_size: 400,
            eval_size: 100,
            hidden: 32,
            init_scale: 0.1,
            batch_size: 16,
            msft_epochs: 30,
            msft_lr: 0.5,
            pref_epochs: 16,
            pref_lr: 0.005,
            preference: PreferenceConfig {
                loss_cfg: LossConfig::default(),
                ..Default::default()
            },
            threshold: 0.5,
            max_target_len: 40,
        }
    }
}

impl ToyConfig {
    /// The synthetic task instance of this run.
    pub fn task(&self) -> Result<SyntheticTask> {
        SyntheticTaskSpec {
            seed: self.seed,
            ..self.task
        }
        .build()
    }
}

/// Independent stream seeds derived from the run seed.
fn sub_seed(seed: u64, stream: u64) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(stream)
}

/// Task, data, and the supervised model of one run.
#[derive(Debug, Clone)]
pub struct MsftRun {
    pub task: SyntheticTask,
    pub train: Vec<SyntheticExample>,
    pub eval: Vec<SyntheticExample>,
    pub model: ToyModel,
    pub report: TrainReport,
}

impl MsftRun {
    pub fn eval_items(&self) -> Vec<EvalItem> {
        self.eval
            .iter()
            .map(|e| EvalItem {
                source: e.example.source.clone(),
                reference: e.example.preferred.clone(),
            })
            .collect()
    }

    /// Gold aligner for hypotheses of this task.
    pub fn aligner(&self) -> impl Fn(&crate::corpus::Sentence, &[String]) -> Result<crate::corpus::AlignmentMap> + Sync + '_ {
        move |src, hyp| self.task.hypothesis_alignment(src, hyp)
    }

    pub fn eval_prefix_samples(&self) -> Result<Vec<PrefixSample>> {
        msft_samples(&self.eval)
    }
}

pub fn run_msft(cfg: &ToyConfig) -> Result<MsftRun> {
    let task = cfg.task()?;
    let train = task.generate(cfg.train_size, sub_seed(cfg.seed, 1))?;
    let eval = task.generate(cfg.eval_size, sub_seed(cfg.seed, 2))?;
    let mut init_rng = ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, 3));
    let mut model = ToyModel::new(task.vocabs()?, cfg.hidden, &mut init_rng, cfg.init_scale);
    let phase = PhaseConfig {
        epochs: cfg.msft_epochs,
        learning_rate: cfg.msft_lr,
        batch_size: cfg.batch_size,
        seed: sub_seed(cfg.seed, 4),
    };
    let report = train_msft(&mut model, &msft_samples(&train)?, &phase)?;
    Ok(MsftRun {
        task,
        train,
        eval,
        model,
        report,
    })
}

/// Preference phase starting from (and referenced against) the supervised
/// model of `base`.
pub fn run_preference(cfg: &ToyConfig, base: &MsftRun) -> Result<(ToyModel, TrainReport)> {
    let mut model = base.model.clone();
    let phase = PhaseConfig {
        epochs: cfg.pref_epochs,
        learning_rate: cfg.pref_lr,
        batch_size: cfg.batch_size,
        seed: sub_seed(cfg.seed, 5),
    };
    let triples = preference_triples(&base.train)?;
    let report = train_preference(&mut model, &base.model, &triples, &cfg.preference, &phase)?;
    Ok((model, report))
}
