//! Central finite differences and the loss gradient-check suite.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::losses::{
    msft_loss, simulcpo_loss, simuldpo_loss, simulkto_loss, LossConfig, LossValueWithGrad,
    TerminalMode, TokenScores,
};

/// Gradients below this magnitude are compared absolutely.
pub const REL_ERROR_FLOOR: f64 = 1e-3;

/// Central-difference gradient of `f` at `x` with step `h`.
pub fn numerical_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `max_i |a_i - b_i| / max(|a_i|, |b_i|, REL_ERROR_FLOOR)`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient length mismatch");
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(REL_ERROR_FLOOR))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    Msft,
    SimulDpo,
    SimulCpo,
    SimulKto,
}

impl LossKind {
    pub const ALL: [LossKind; 4] = [Self::Msft, Self::SimulDpo, Self::SimulCpo, Self::SimulKto];

    pub fn name(self) -> &'static str {
        match self {
            Self::Msft => "msft",
            Self::SimulDpo => "simuldpo",
            Self::SimulCpo => "simulcpo",
            Self::SimulKto => "simulkto",
        }
    }
}

impl std::str::FromStr for LossKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| crate::Error::Config(format!("unknown loss '{s}'")))
    }
}

/// One randomly drawn loss evaluation problem.
#[derive(Debug, Clone)]
pub struct GradInstance {
    pub preferred: TokenScores,
    pub rejected: TokenScores,
    pub cfg: LossConfig,
    pub z0: f64,
    pub kto_preferred: bool,
}

impl GradInstance {
    pub fn random(rng: &mut impl Rng) -> Self {
        let scores = |rng: &mut dyn rand::RngCore| {
            let n = rng.gen_range(2..8);
            TokenScores::new(
                (0..n).map(|_| -rng.gen_range(0.01..4.0)).collect(),
                (0..n).map(|_| -rng.gen_range(0.01..4.0)).collect(),
                (0..n).map(|_| rng.gen_range(0.05..0.95)).collect(),
            )
            .expect("generated scores are valid")
        };
        let preferred = scores(rng);
        let rejected = scores(rng);
        let cfg = LossConfig {
            alpha: rng.gen_range(0.0..1.0),
            beta: rng.gen_range(0.05..1.0),
            lambda_w: rng.gen_range(0.5..2.0),
            lambda_l: rng.gen_range(0.5..2.0),
            terminal_mode: if rng.gen_bool(0.5) {
                TerminalMode::EosLogRatio
            } else {
                TerminalMode::PenaltyOnly
            },
        };
        Self {
            preferred,
            rejected,
            cfg,
            z0: rng.gen_range(-1.0..1.0),
            kto_preferred: rng.gen_bool(0.5),
        }
    }

    fn eval(&self, kind: LossKind, w: &TokenScores, l: &TokenScores) -> LossValueWithGrad {
        match kind {
            LossKind::Msft => msft_loss(w),
            LossKind::SimulDpo => simuldpo_loss(w, l, &self.cfg),
            LossKind::SimulCpo => simulcpo_loss(w, l, &self.cfg),
            LossKind::SimulKto => simulkto_loss(w, self.kto_preferred, self.z0, &self.cfg),
        }
        .expect("instance inputs are valid")
    }

    /// Largest relative error between the analytic gradient and central
    /// differences over every differentiable input of `kind`.
    pub fn max_error(&self, kind: LossKind, h: f64) -> f64 {
        let out = self.eval(kind, &self.preferred, &self.rejected);
        let mut worst = 0.0f64;
        for (side, grad) in out.grads.iter().enumerate() {
            let base = if side == 0 { &self.preferred } else { &self.rejected };
            for confidence in [false, true] {
                let x0 = if confidence { &base.confidence } else { &base.logp_policy };
                let num = numerical_gradient(
                    |x| {
                        let mut s = base.clone();
                        if confidence {
                            s.confidence = x.to_vec();
                        } else {
                            s.logp_policy = x.to_vec();
                        }
                        if side == 0 {
                            self.eval(kind, &s, &self.rejected).value
                        } else {
                            self.eval(kind, &self.preferred, &s).value
                        }
                    },
                    x0,
                    h,
                );
                let ana = if confidence { &grad.confidence } else { &grad.logp_policy };
                worst = worst.max(max_relative_error(ana, &num));
            }
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckRow {
    pub kind: LossKind,
    pub instances: usize,
    pub max_rel_error: f64,
}

/// Runs every loss against `instances` seeded random problems.
pub fn loss_gradient_suite(seed: u64, instances: usize, h: f64) -> Vec<GradCheckRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let problems: Vec<GradInstance> = (0..instances).map(|_| GradInstance::random(&mut rng)).collect();
    LossKind::ALL
        .into_iter()
        .map(|kind| GradCheckRow {
            kind,
            instances,
            max_rel_error: problems
                .iter()
                .map(|p| p.max_error(kind, h))
                .fold(0.0, f64::max),
        })
        .collect()
}
