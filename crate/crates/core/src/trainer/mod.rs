//! Minibatch training of a denoiser policy with a preference estimator,
//! plus the linear-model experiments used to study convergence rates.

pub mod eval;
pub mod optim;
pub mod rate;
pub mod reference;

use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::annotators::{self_training_label, Annotator, Augment};
use crate::data::{Dataset, WorldSpec};
use crate::diffusion::{NoiseSchedule, ToyDenoiser};
use crate::error::{invalid, Error, Result};
use crate::preference::{
    draw_for, objective, Annotate, DeDpoForm, DiffusionDpo, EstimatorKind, ImportanceWeight, MarginDraw, Point,
    PreferenceTriplet, PseudoLabel,
};
use crate::rng::{self, purpose};

pub use eval::win_rate;
pub use optim::{piecewise_lr, warmup_lr, Adam, Optimizer, OptimizerKind};
pub use rate::{fit_rate, fit_residuals, LinearExperiment};
pub use reference::{cached_reference, pretrain_reference, PretrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub estimator: EstimatorKind,
    /// Temperature multiplying the preference margin.
    pub beta: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub warmup_steps: usize,
    /// Fractions of `steps` at which the learning rate is multiplied by `lr_decay`.
    pub lr_milestones: Vec<f64>,
    pub lr_decay: f64,
    pub seed: u64,
    /// Steps between self-training snapshot refreshes.
    pub snapshot_every: usize,
    pub eval_prompts: usize,
    /// Steps between intermediate win-rate evaluations; 0 evaluates only at the end.
    pub eval_every: usize,
    /// Guidance scale used when sampling for evaluation.
    pub guidance: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            estimator: EstimatorKind::DeDpo,
            beta: 1.0,
            steps: 2000,
            batch_size: 64,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::AdaptiveMoments,
            warmup_steps: 10,
            lr_milestones: vec![0.5, 0.75],
            lr_decay: 0.1,
            seed: 0,
            snapshot_every: 100,
            eval_prompts: 400,
            eval_every: 0,
            guidance: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(invalid("steps must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch_size must be at least 1"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid(format!("learning_rate must be non-negative, got {}", self.learning_rate)));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(invalid(format!("lr_decay must lie in (0, 1], got {}", self.lr_decay)));
        }
        if self.lr_milestones.iter().any(|m| !(0.0..=1.0).contains(m)) {
            return Err(invalid("lr_milestones must be fractions in [0, 1]"));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(invalid(format!("beta must be positive, got {}", self.beta)));
        }
        if self.snapshot_every == 0 {
            return Err(invalid("snapshot_every must be at least 1"));
        }
        if self.eval_prompts == 0 {
            return Err(invalid("eval_prompts must be at least 1"));
        }
        Ok(())
    }
}

/// Outcome of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub estimator: EstimatorKind,
    pub annotator: Option<String>,
    pub n_l: usize,
    pub n_u: usize,
    pub seed: u64,
    pub steps: usize,
    pub final_loss: f64,
    /// Minibatch loss before each update.
    pub loss_trace: Vec<f64>,
    /// `(step, win_rate)` at intermediate evaluations.
    pub eval_trace: Vec<(usize, f64)>,
    pub win_rate: f64,
    pub param_error: Option<f64>,
    pub assumption_flags: Vec<String>,
    pub wall_time_s: f64,
}

/// Write `step,loss,win_rate_eval`, leaving the last column empty where no
/// evaluation happened.
pub fn write_trace_csv<W: Write>(mut w: W, report: &RunReport) -> Result<()> {
    writeln!(w, "step,loss,win_rate_eval")?;
    let mut evals = report.eval_trace.iter().peekable();
    for (step, loss) in report.loss_trace.iter().enumerate() {
        write!(w, "{step},{loss},")?;
        if let Some((_, wr)) = evals.next_if(|(s, _)| *s == step) {
            write!(w, "{wr}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Fixed pieces shared by every run on one world.
#[derive(Debug, Clone)]
pub struct TrainContext {
    pub world: Arc<WorldSpec>,
    pub schedule: NoiseSchedule,
    pub reference: Arc<ToyDenoiser>,
}

pub struct TrainOutcome {
    pub policy: ToyDenoiser,
    pub report: RunReport,
}

struct Pool<'a> {
    items: Vec<&'a PreferenceTriplet>,
    pseudo: Vec<PseudoLabel>,
    order: Vec<usize>,
    cursor: usize,
    epoch: u64,
    tag: u64,
}

impl<'a> Pool<'a> {
    fn new(items: Vec<&'a PreferenceTriplet>, pseudo: Vec<PseudoLabel>, tag: u64, seed: u64) -> Self {
        let mut p = Self {
            order: (0..items.len()).collect(),
            items,
            pseudo,
            cursor: 0,
            epoch: 0,
            tag,
        };
        p.shuffle(seed);
        p
    }

    fn shuffle(&mut self, seed: u64) {
        self.order.sort_unstable();
        let mut r = rng::stream(seed, purpose::SHUFFLE, (self.tag << 40) | self.epoch);
        self.order.shuffle(&mut r);
    }

    /// Next `k` items as `(index, epoch)`.
    fn take(&mut self, k: usize, seed: u64) -> Vec<(usize, u64)> {
        let mut out = Vec::with_capacity(k);
        while out.len() < k {
            if self.cursor == self.order.len() {
                self.epoch += 1;
                self.cursor = 0;
                self.shuffle(seed);
            }
            out.push((self.order[self.cursor], self.epoch));
            self.cursor += 1;
        }
        out
    }
}

fn epoch_seed(seed: u64, epoch: u64) -> u64 {
    rng::derive(rng::derive(seed, purpose::DRAW), epoch)
}

/// Labeled share of a minibatch, in global proportion.
fn labeled_share(batch: usize, n_l: usize, n_u: usize) -> usize {
    if n_u == 0 {
        return batch;
    }
    let share = (batch as f64 * n_l as f64 / (n_l + n_u) as f64).round() as usize;
    share.clamp(1, batch.saturating_sub(1).max(1))
}

type SelfTrainingView<'s> = Option<(&'s DiffusionDpo, (f64, Augment))>;

fn make_points<'a>(
    model: &DiffusionDpo,
    pool: &Pool<'a>,
    picks: &[(usize, u64)],
    self_training: SelfTrainingView<'_>,
    seed: u64,
) -> Result<Vec<Point<'a, MarginDraw>>> {
    picks
        .iter()
        .map(|&(i, epoch)| {
            let t = pool.items[i];
            let draw = draw_for(model, t, epoch_seed(seed, epoch), 0);
            let pseudo = match self_training {
                Some((snapshot, (tau, augment))) => self_training_label(snapshot, t, &draw, tau, augment, seed, epoch)?,
                None => pool.pseudo[i],
            };
            Ok(Point { triplet: t, draw, pseudo })
        })
        .collect()
}

/// Train `policy` against the context's frozen reference.
pub fn train(
    ctx: &TrainContext,
    policy: ToyDenoiser,
    dataset: &Dataset,
    annotator: Option<&Annotator>,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    let started = Instant::now();
    let kind = config.estimator;
    let (labeled, unlabeled): (Vec<&PreferenceTriplet>, Vec<&PreferenceTriplet>) =
        dataset.triplets.iter().partition(|t| t.is_labeled());
    if labeled.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let unlabeled = match kind {
        EstimatorKind::FullLabelDpo => {
            if let Some(t) = unlabeled.first() {
                return Err(Error::MissingLabel { id: t.id });
            }
            unlabeled
        }
        EstimatorKind::LabeledOnlyDpo => Vec::new(),
        _ => unlabeled,
    };
    let needs_annotator = kind.uses_annotator();
    let annotator = if needs_annotator {
        Some(annotator.ok_or_else(|| invalid(format!("{kind} needs an annotator")))?)
    } else {
        None
    };
    let self_training = annotator.and_then(|a| a.self_training_params());

    let mut flags = Vec::new();
    if let Some(a) = annotator {
        if self_training.is_some() {
            flags.push("assumption1_violated: pseudo-labels come from snapshots of the policy being trained".to_string());
        }
        let shared = a.overlap(dataset.ids());
        if shared > 0 {
            flags.push(format!("assumption1_overlap: {shared} training triplets were used to calibrate the annotator"));
        }
        flags.push("assumption3_assumed: importance-weight estimation error is not measured".to_string());
        flags.push("assumption4_assumed: complexity of the annotator class is not measured".to_string());
    }

    let frozen = |items: &[&PreferenceTriplet]| -> Result<Vec<PseudoLabel>> {
        match annotator {
            Some(a) if self_training.is_none() => items.iter().map(|t| Ok(PseudoLabel::new(a.annotate(t)?))).collect(),
            _ => Ok(vec![PseudoLabel::unused(); items.len()]),
        }
    };
    let (n_l, n_u) = (labeled.len(), unlabeled.len());
    let pseudo_l = if kind == EstimatorKind::DeDpo { frozen(&labeled)? } else { vec![PseudoLabel::unused(); n_l] };
    let pseudo_u = frozen(&unlabeled)?;
    let mut pool_l = Pool::new(labeled, pseudo_l, 1, config.seed);
    let mut pool_u = Pool::new(unlabeled, pseudo_u, 2, config.seed);
    let b_l = labeled_share(config.batch_size, n_l, n_u);
    let b_u = if n_u == 0 { 0 } else { config.batch_size - b_l };
    let weight = ImportanceWeight::Global((n_l + n_u) as f64 / n_l as f64);

    let mut model = DiffusionDpo::new(policy, Arc::clone(&ctx.reference), ctx.schedule.clone(), config.beta);
    let mut snapshot = model.clone();
    let mut opt = Optimizer::new(config.optimizer, model.policy.num_params());
    let mut grad = vec![0.0; model.policy.num_params()];
    let mut trace = Vec::with_capacity(config.steps);
    let mut eval_trace = Vec::new();
    let eval_seed = rng::derive(config.seed, purpose::EVAL);

    for step in 0..config.steps {
        if self_training.is_some() && step % config.snapshot_every == 0 {
            snapshot = model.clone();
        }
        let picks_l = pool_l.take(b_l, config.seed);
        let picks_u = pool_u.take(b_u, config.seed);
        let st = |with_pseudo: bool| self_training.filter(|_| with_pseudo).map(|p| (&snapshot, p));
        let pts_l = make_points(&model, &pool_l, &picks_l, st(kind == EstimatorKind::DeDpo), config.seed)?;
        let pts_u = make_points(&model, &pool_u, &picks_u, st(needs_annotator), config.seed)?;
        let loss = objective(kind, DeDpoForm::Combined, &model, &pts_l, &pts_u, &weight, Some(&mut grad))?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                step,
                detail: format!("{kind} minibatch loss is {loss}"),
            });
        }
        trace.push(loss);
        let lr = piecewise_lr(
            config.learning_rate,
            step,
            config.steps,
            config.warmup_steps,
            &config.lr_milestones,
            config.lr_decay,
        );
        opt.step(model.policy.params_mut(), &grad, lr);
        if !model.policy.is_finite() {
            return Err(Error::NonFiniteLoss {
                step,
                detail: "parameters became non-finite".into(),
            });
        }
        if config.eval_every > 0 && (step + 1) % config.eval_every == 0 && step + 1 < config.steps {
            let wr = win_rate(&model.policy, &*ctx.reference, &ctx.world, &ctx.schedule, config.eval_prompts, config.guidance, eval_seed)?;
            eval_trace.push((step, wr));
        }
    }
    let wr = win_rate(&model.policy, &*ctx.reference, &ctx.world, &ctx.schedule, config.eval_prompts, config.guidance, eval_seed)?;
    eval_trace.push((config.steps - 1, wr));

    let report = RunReport {
        estimator: kind,
        annotator: annotator.map(|a| a.kind().label()),
        n_l,
        n_u,
        seed: config.seed,
        steps: config.steps,
        final_loss: *trace.last().expect("steps >= 1"),
        loss_trace: trace,
        eval_trace,
        win_rate: wr,
        param_error: None,
        assumption_flags: flags,
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    Ok(TrainOutcome {
        policy: model.policy,
        report,
    })
}
