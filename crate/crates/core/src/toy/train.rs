//! Mini-batch gradient descent for the supervised and preference phases.
//!
//! Per-example gradients are computed in parallel and summed in input
//! order, so results do not depend on the thread count.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::corpus::Sentence;
use crate::error::{Error, Result};
use crate::losses::{
    estimate_kto_shift, msft_loss, simulcpo_loss, simuldpo_loss, simulkto_loss, LossConfig,
    LossValueWithGrad, TokenScores,
};
use crate::prefix::{build_prefix_preference_dataset, prefix_examples};

use super::model::{SequencePass, SourceContext, ToyModel};
use super::task::SyntheticExample;
use super::vocab::EOS;

/// One supervised prefix pair. Targets of complete sources end with the
/// end-of-sequence token.
#[derive(Debug, Clone, PartialEq)]
pub struct PrefixSample {
    pub source: Vec<String>,
    pub complete: bool,
    pub target: Vec<String>,
}

/// One prefix-level preference triple plus the full source for the
/// reference model.
#[derive(Debug, Clone, PartialEq)]
pub struct PrefixTriple {
    pub source: Vec<String>,
    pub full_source: Vec<String>,
    pub preferred: Vec<String>,
    pub rejected: Vec<String>,
}

impl PrefixTriple {
    fn complete(&self) -> bool {
        self.source.len() == self.full_source.len()
    }
}

fn with_eos(s: &Sentence, complete: bool) -> Vec<String> {
    let mut v = s.tokens().to_vec();
    if complete {
        v.push(EOS.to_string());
    }
    v
}

pub fn msft_samples(data: &[SyntheticExample]) -> Result<Vec<PrefixSample>> {
    let mut out = Vec::new();
    for item in data {
        let ex = &item.example;
        for p in prefix_examples(&ex.source, &ex.preferred, &item.align_w)? {
            let complete = p.source.len() == ex.source.len();
            out.push(PrefixSample {
                target: with_eos(&p.preferred, complete),
                source: p.source.tokens().to_vec(),
                complete,
            });
        }
    }
    Ok(out)
}

pub fn preference_triples(data: &[SyntheticExample]) -> Result<Vec<PrefixTriple>> {
    let mut out = Vec::new();
    for item in data {
        let (Some(pref), Some(align_l)) = (item.example.preference(), &item.align_l) else {
            continue;
        };
        for t in build_prefix_preference_dataset(&pref, &item.align_w, align_l)? {
            let complete = t.source.len() == pref.source.len();
            out.push(PrefixTriple {
                source: t.source.tokens().to_vec(),
                full_source: pref.source.tokens().to_vec(),
                preferred: with_eos(&t.preferred, complete),
                rejected: with_eos(&t.rejected, complete),
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PreferenceLoss {
    SimulDpo,
    SimulCpo,
    SimulKto,
}

impl PreferenceLoss {
    pub fn name(self) -> &'static str {
        match self {
            Self::SimulDpo => "simuldpo",
            Self::SimulCpo => "simulcpo",
            Self::SimulKto => "simulkto",
        }
    }
}

impl std::str::FromStr for PreferenceLoss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Self::SimulDpo, Self::SimulCpo, Self::SimulKto]
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown preference loss '{s}'")))
    }
}

/// Step sizes and schedule of one training phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl PhaseConfig {
    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Mean training loss of every epoch, measured before each batch update.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
}

/// Shared epoch/batch loop. `batch_grad` returns the summed loss and the
/// summed parameter gradient of one batch.
fn descend<T: Sync>(
    model: &mut ToyModel,
    data: &[T],
    phase: &PhaseConfig,
    batch_grad: impl Fn(&ToyModel, &[&T]) -> Result<(f64, Vec<f64>)>,
) -> Result<TrainReport> {
    phase.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(phase.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut report = TrainReport::default();
    let mut step = 0usize;
    for _ in 0..phase.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(phase.batch_size) {
            step += 1;
            let batch: Vec<&T> = chunk.iter().map(|&i| &data[i]).collect();
            let (loss, grad) = batch_grad(model, &batch).map_err(|e| Error::Training {
                step,
                message: e.to_string(),
            })?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Training {
                    step,
                    message: format!("non-finite loss or gradient (loss {loss})"),
                });
            }
            let scale = phase.learning_rate / batch.len() as f64;
            for (p, g) in model.params_mut().iter_mut().zip(&grad) {
                *p -= scale * g;
            }
            total += loss;
        }
        report
            .epoch_losses
            .push(if data.is_empty() { 0.0 } else { total / data.len() as f64 });
    }
    Ok(report)
}

/// Sums per-item `(loss, grad)` results in input order.
fn reduce(items: Vec<Result<(f64, Vec<f64>)>>, dim: usize) -> Result<(f64, Vec<f64>)> {
    let mut grad = vec![0.0; dim];
    let mut loss = 0.0;
    for item in items {
        let (l, g) = item?;
        loss += l;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    Ok((loss, grad))
}

struct Encoded {
    ctx: SourceContext,
    target: Vec<usize>,
}

fn encode_sample(model: &ToyModel, s: &PrefixSample) -> Result<Encoded> {
    Ok(Encoded {
        ctx: model.context(&model.vocabs.encode_source(&s.source), s.complete),
        target: model.vocabs.encode_target(&s.target)?,
    })
}

/// Multi-task supervised training on prefix pairs.
pub fn train_msft(model: &mut ToyModel, data: &[PrefixSample], phase: &PhaseConfig) -> Result<TrainReport> {
    let encoded: Vec<Encoded> = data.iter().map(|s| encode_sample(model, s)).collect::<Result<_>>()?;
    let dim = model.param_count();
    descend(model, &encoded, phase, |m, batch| {
        let items = batch
            .par_iter()
            .map(|e| {
                let pass = m.score(&e.ctx, &e.target);
                let out = msft_loss(&pass.token_scores(vec![0.0; pass.logp.len()])?)?;
                let mut g = vec![0.0; dim];
                m.backward(&e.ctx, &pass, &out.grads[0], &mut g);
                Ok((out.value, g))
            })
            .collect();
        reduce(items, dim)
    })
}

/// Mean loss over `data` under the current model, without updating it.
pub fn msft_eval_loss(model: &ToyModel, data: &[PrefixSample]) -> Result<f64> {
    let mut total = 0.0;
    for s in data {
        let e = encode_sample(model, s)?;
        let pass = model.score(&e.ctx, &e.target);
        total += msft_loss(&pass.token_scores(vec![0.0; pass.logp.len()])?)?.value;
    }
    Ok(total / data.len().max(1) as f64)
}

struct EncodedTriple {
    ctx: SourceContext,
    w: Vec<usize>,
    l: Vec<usize>,
    ref_w: Vec<f64>,
    ref_l: Vec<f64>,
}

/// Preference-phase options.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreferenceConfig {
    pub loss: PreferenceLoss,
    pub loss_cfg: LossConfig,
    /// Condition the reference on the source prefix instead of the full
    /// source.
    pub prefix_conditioned_ref: bool,
}

impl Default for PreferenceConfig {
    fn default() -> Self {
        Self {
            loss: PreferenceLoss::SimulDpo,
            loss_cfg: LossConfig::default(),
            prefix_conditioned_ref: false,
        }
    }
}

fn encode_triples(
    policy: &ToyModel,
    reference: &ToyModel,
    data: &[PrefixTriple],
    prefix_conditioned_ref: bool,
) -> Result<Vec<EncodedTriple>> {
    data.par_iter()
        .map(|t| {
            let v = &policy.vocabs;
            let ctx = policy.context(&v.encode_source(&t.source), t.complete());
            let ref_ctx = if prefix_conditioned_ref {
                ctx.clone()
            } else {
                reference.context(&v.encode_source(&t.full_source), true)
            };
            let w = v.encode_target(&t.preferred)?;
            let l = v.encode_target(&t.rejected)?;
            Ok(EncodedTriple {
                ref_w: reference.score_logp(&ref_ctx, &w),
                ref_l: reference.score_logp(&ref_ctx, &l),
                ctx,
                w,
                l,
            })
        })
        .collect()
}

fn pair_scores(m: &ToyModel, e: &EncodedTriple) -> Result<(SequencePass, SequencePass, TokenScores, TokenScores)> {
    let pw = m.score(&e.ctx, &e.w);
    let pl = m.score(&e.ctx, &e.l);
    let sw = pw.token_scores(e.ref_w.clone())?;
    let sl = pl.token_scores(e.ref_l.clone())?;
    Ok((pw, pl, sw, sl))
}

/// Preference optimization of `model` against the frozen `reference`.
pub fn train_preference(
    model: &mut ToyModel,
    reference: &ToyModel,
    data: &[PrefixTriple],
    cfg: &PreferenceConfig,
    phase: &PhaseConfig,
) -> Result<TrainReport> {
    cfg.loss_cfg.validate()?;
    let encoded = encode_triples(model, reference, data, cfg.prefix_conditioned_ref)?;
    let dim = model.param_count();
    let lc = cfg.loss_cfg;
    descend(model, &encoded, phase, |m, batch| {
        let passes: Vec<_> = batch
            .par_iter()
            .map(|e| pair_scores(m, e))
            .collect::<Result<_>>()?;
        let z0 = if cfg.loss == PreferenceLoss::SimulKto {
            let all: Vec<TokenScores> = passes
                .iter()
                .flat_map(|(_, _, sw, sl)| [sw.clone(), sl.clone()])
                .collect();
            estimate_kto_shift(&all)
        } else {
            0.0
        };
        let items = batch
            .par_iter()
            .zip(passes.par_iter())
            .map(|(e, (pw, pl, sw, sl))| {
                let mut g = vec![0.0; dim];
                let (value, gw, gl) = match cfg.loss {
                    PreferenceLoss::SimulDpo | PreferenceLoss::SimulCpo => {
                        let LossValueWithGrad { value, mut grads } = if cfg.loss == PreferenceLoss::SimulDpo {
                            simuldpo_loss(sw, sl, &lc)?
                        } else {
                            simulcpo_loss(sw, sl, &lc)?
                        };
                        let gl = grads.pop().expect("two gradients");
                        let gw = grads.pop().expect("two gradients");
                        (value, gw, gl)
                    }
                    PreferenceLoss::SimulKto => {
                        let mut w = simulkto_loss(sw, true, z0, &lc)?;
                        let mut l = simulkto_loss(sl, false, z0, &lc)?;
                        (w.value + l.value, w.grads.remove(0), l.grads.remove(0))
                    }
                };
                m.backward(&e.ctx, pw, &gw, &mut g);
                m.backward(&e.ctx, pl, &gl, &mut g);
                Ok((value, g))
            })
            .collect();
        reduce(items, dim)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{max_relative_error, numerical_gradient};
    use crate::toy::task::SyntheticTaskSpec;

    fn setup() -> (ToyModel, Vec<SyntheticExample>) {
        let task = SyntheticTaskSpec::default().build().unwrap();
        let data = task.generate(12, 5).unwrap();
        let model = ToyModel::new(task.vocabs().unwrap(), 6, &mut ChaCha8Rng::seed_from_u64(1), 0.5);
        (model, data)
    }

    #[test]
    fn complete_prefixes_end_with_eos() {
        let (_, data) = setup();
        let samples = msft_samples(&data).unwrap();
        for s in &samples {
            assert_eq!(s.complete, s.target.last().map(String::as_str) == Some(EOS));
        }
        assert_eq!(samples.iter().filter(|s| s.complete).count(), data.len());
        for t in preference_triples(&data).unwrap() {
            assert_ne!(t.preferred, t.rejected);
        }
    }

    #[test]
    fn full_msft_step_matches_finite_differences() {
        let (model, data) = setup();
        let sample = msft_samples(&data[..1]).unwrap().pop().unwrap();
        let e = encode_sample(&model, &sample).unwrap();
        let loss_at = |p: &[f64]| {
            let mut m = model.clone();
            m.params_mut().copy_from_slice(p);
            let pass = m.score(&e.ctx, &e.target);
            msft_loss(&pass.token_scores(vec![0.0; pass.logp.len()]).unwrap())
                .unwrap()
                .value
        };
        let pass = model.score(&e.ctx, &e.target);
        let out = msft_loss(&pass.token_scores(vec![0.0; pass.logp.len()]).unwrap()).unwrap();
        let mut g = vec![0.0; model.param_count()];
        model.backward(&e.ctx, &pass, &out.grads[0], &mut g);
        let num = numerical_gradient(loss_at, model.params(), 1e-5);
        assert!(max_relative_error(&g, &num) < 1e-3);
    }

    #[test]
    fn full_dpo_step_matches_finite_differences() {
        let (model, data) = setup();
        let triple = preference_triples(&data).unwrap().swap_remove(0);
        let reference = model.clone();
        let e = encode_triples(&model, &reference, &[triple], false).unwrap().pop().unwrap();
        let cfg = LossConfig::default();
        let loss_at = |p: &[f64]| {
            let mut m = model.clone();
            m.params_mut().copy_from_slice(p);
            let (_, _, sw, sl) = pair_scores(&m, &e).unwrap();
            simuldpo_loss(&sw, &sl, &cfg).unwrap().value
        };
        let (pw, pl, sw, sl) = pair_scores(&model, &e).unwrap();
        let out = simuldpo_loss(&sw, &sl, &cfg).unwrap();
        let mut g = vec![0.0; model.param_count()];
        model.backward(&e.ctx, &pw, &out.grads[0], &mut g);
        model.backward(&e.ctx, &pl, &out.grads[1], &mut g);
        let num = numerical_gradient(loss_at, model.params(), 1e-5);
        assert!(max_relative_error(&g, &num) < 1e-3);
    }

    #[test]
    fn nan_reports_step() {
        let (mut model, data) = setup();
        model.params_mut()[0] = f64::NAN;
        let samples = msft_samples(&data).unwrap();
        let phase = PhaseConfig {
            epochs: 1,
            learning_rate: 0.1,
            batch_size: 4,
            seed: 0,
        };
        assert!(matches!(
            train_msft(&mut model, &samples, &phase),
            Err(Error::Training { step: 1, .. })
        ));
    }
}
