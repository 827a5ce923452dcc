//! Cooperative training and the comparison baselines.
//!
//! Every method is a deterministic function of the data and its
//! [`TrainConfig`]. Random streams are split from `config.seed`:
//! network `k` is initialized from stream `(INIT, k)`; single-network phases
//! shuffle with `(SHUFFLE, k)`; the joint CooL phase and both dual-network
//! baselines share the batch order of one stream.

mod config;
mod record;

pub use config::{Method, TrainConfig};
pub use record::{RunRecord, RunSummary, SCHEMA_VERSION};

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::cooperation::{self, build_peer_supervision, build_supervision, CoolLossSpec};
use crate::error::{Error, Result};
use crate::metrics::{self, estimate_diag_off, EpochMetrics};
use crate::nn::{self, accumulate_backward, forward_raw, init_params, LossSpec, MlpParams, Momentum};
use crate::noise::{partition, NoisyDataset, TrainerView};
use crate::riskmath::{cooperation_risk, optimal_lambda_multi, risk_matrix, CooperationWeights, ProbVector};
use crate::seed;

const STREAM_INIT: u64 = 1;
const STREAM_SHUFFLE: u64 = 2;
const STREAM_JOINT: u64 = 3;
const STREAM_PARTITION: u64 = 4;
const STREAM_RISK: u64 = 5;

/// Trained networks with their training curve.
#[derive(Debug, Clone)]
pub struct Trained {
    pub classifiers: Vec<MlpParams>,
    pub record: RunRecord,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub per_classifier: Vec<f64>,
    /// Accuracy of the averaged prediction.
    pub ensemble: f64,
}

/// Arg-max accuracy of each classifier and of their soft vote against the
/// true labels of `test`.
pub fn evaluate(classifiers: &[MlpParams], test: &NoisyDataset) -> Result<Evaluation> {
    if classifiers.is_empty() {
        return Err(Error::InvalidArgument("no classifiers to evaluate".into()));
    }
    let truth = test.true_labels();
    let probs = classifiers
        .iter()
        .map(|p| predict_all(p, test.trainer_view()))
        .collect::<Result<Vec<_>>>()?;
    let per_classifier = probs
        .iter()
        .map(|rows| metrics::accuracy(rows, &truth))
        .collect::<Result<Vec<_>>>()?;
    let ensemble = metrics::accuracy(&average_rows(&probs), &truth)?;
    Ok(Evaluation {
        per_classifier,
        ensemble,
    })
}

fn predict_all(params: &MlpParams, view: TrainerView) -> Result<Vec<Vec<f64>>> {
    (0..view.len()).map(|i| forward_raw(params, view.features(i))).collect()
}

fn average_rows(per_net: &[Vec<Vec<f64>>]) -> Vec<Vec<f64>> {
    let n = per_net.len() as f64;
    (0..per_net[0].len())
        .map(|i| {
            let mut row = vec![0.0; per_net[0][i].len()];
            for net in per_net {
                row.iter_mut().zip(&net[i]).for_each(|(r, v)| *r += v / n);
            }
            row
        })
        .collect()
}

fn one_hot_raw(c: usize, y: usize) -> Vec<f64> {
    let mut v = vec![0.0; c];
    v[y] = 1.0;
    v
}

/// `ceil((1 − r)·batch)` samples kept by small-loss selection.
pub fn coteaching_keep(batch_len: usize, noise_rate: f64) -> usize {
    let keep = ((1.0 - noise_rate) * batch_len as f64 - 1e-9).ceil() as usize;
    keep.clamp(1.min(batch_len), batch_len)
}

/// Positions of the `keep` smallest losses; equal losses keep batch order.
pub fn select_small_loss(losses: &[f64], keep: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..losses.len()).collect();
    order.sort_by(|&a, &b| losses[a].total_cmp(&losses[b]).then(a.cmp(&b)));
    order.truncate(keep);
    order
}

struct Member {
    params: MlpParams,
    momentum: Momentum,
}

struct Objective {
    target: Vec<f64>,
    hard_label: Option<usize>,
    alpha: f64,
    beta: f64,
}

impl Objective {
    fn hard(c: usize, y: usize) -> Self {
        Objective {
            target: one_hot_raw(c, y),
            hard_label: None,
            alpha: 0.0,
            beta: 0.0,
        }
    }

    fn spec(&self) -> LossSpec<'_> {
        LossSpec {
            soft_target: &self.target,
            hard_label: self.hard_label,
            alpha: self.alpha,
            beta: self.beta,
        }
    }
}

/// Mean gradient over a batch; returns the summed loss.
fn batch_gradient(
    params: &MlpParams,
    view: TrainerView,
    batch: &[usize],
    objectives: &[Objective],
) -> Result<(f64, nn::Gradients)> {
    let mut grads = params.zero_gradients();
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for (&i, obj) in batch.iter().zip(objectives) {
        loss += accumulate_backward(params, view.features(i), &obj.spec(), scale, &mut grads)?;
    }
    Ok((loss, grads))
}

fn shuffled_batches(indices: &[usize], batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order = indices.to_vec();
    order.shuffle(rng);
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

/// Oracle-side measurements. This is the only place that reads true labels
/// of the training set.
struct Monitor<'a> {
    train: &'a NoisyDataset,
    test: &'a NoisyDataset,
    train_truth: Vec<usize>,
    test_truth: Vec<usize>,
    risk_idx: Vec<usize>,
    risk_truth: Vec<ProbVector>,
    weights: CooperationWeights,
}

/// What the networks are being trained against, for label precision.
enum SupervisionKind {
    /// `Σλ_i p_i` with the given weights.
    Combined(CooperationWeights),
    NoisyLabels,
    /// `λ·e_y + (1 − λ)·own prediction`.
    Bootstrap(f64),
    /// `λ·e_y + (1 − λ)·peer prediction`, averaged over both networks.
    Codistill(f64),
    /// Precision and true-class mass over the samples selected this epoch.
    Selected {
        precision: f64,
    },
}

impl<'a> Monitor<'a> {
    fn new(train: &'a NoisyDataset, test: &'a NoisyDataset, config: &TrainConfig) -> Result<Self> {
        let mut idx: Vec<usize> = (0..train.len()).collect();
        if train.len() > config.risk_subsample {
            idx.shuffle(&mut seed::stream_rng(config.seed, STREAM_RISK, 0));
            idx.truncate(config.risk_subsample);
            idx.sort_unstable();
        }
        let train_truth = train.true_labels();
        let risk_truth = idx
            .iter()
            .map(|&i| ProbVector::one_hot(train.classes(), train_truth[i]))
            .collect::<Result<Vec<_>>>()?;
        Ok(Monitor {
            train,
            test,
            train_truth,
            test_truth: test.true_labels(),
            risk_idx: idx,
            risk_truth,
            weights: config.weights()?,
        })
    }

    fn measure(
        &self,
        epoch: usize,
        warmup: bool,
        members: &[Member],
        kind: SupervisionKind,
        train_loss: f64,
    ) -> Result<EpochMetrics> {
        let c = self.train.classes();
        let test_probs = members
            .iter()
            .map(|m| predict_all(&m.params, self.test.trainer_view()))
            .collect::<Result<Vec<_>>>()?;
        let test_acc = test_probs
            .iter()
            .map(|rows| metrics::accuracy(rows, &self.test_truth))
            .collect::<Result<Vec<_>>>()?;
        let ensemble_acc = metrics::accuracy(&average_rows(&test_probs), &self.test_truth)?;

        let train_probs = members
            .iter()
            .map(|m| predict_all(&m.params, self.train.trainer_view()))
            .collect::<Result<Vec<_>>>()?;
        let noisy = self.train.noisy_labels();
        let (label_precision, true_class_mass) = match kind {
            SupervisionKind::Combined(w) => {
                let sups = (0..self.train.len())
                    .map(|i| {
                        let preds = train_probs
                            .iter()
                            .map(|net| ProbVector::new(net[i].clone()))
                            .collect::<Result<Vec<_>>>()?;
                        cooperation::combine(&w, &preds)
                    })
                    .collect::<Result<Vec<_>>>()?;
                (
                    metrics::label_precision(&sups, &self.train_truth)?,
                    metrics::true_class_mass(&sups, &self.train_truth)?,
                )
            }
            SupervisionKind::NoisyLabels => {
                let p = metrics::hard_label_precision(&noisy, &self.train_truth)?;
                (p, p)
            }
            SupervisionKind::Bootstrap(l) | SupervisionKind::Codistill(l) => {
                let peer = matches!(kind, SupervisionKind::Codistill(_));
                let mut precision = 0.0;
                let mut mass = 0.0;
                for k in 0..members.len() {
                    let source = if peer { &train_probs[1 - k] } else { &train_probs[k] };
                    let sups = (0..self.train.len())
                        .map(|i| {
                            let mut t = one_hot_raw(c, noisy[i]);
                            t.iter_mut()
                                .zip(&source[i])
                                .for_each(|(t, p)| *t = l * *t + (1.0 - l) * p);
                            ProbVector::new(t)
                        })
                        .collect::<Result<Vec<_>>>()?;
                    precision += metrics::label_precision(&sups, &self.train_truth)?;
                    mass += metrics::true_class_mass(&sups, &self.train_truth)?;
                }
                let n = members.len() as f64;
                (precision / n, mass / n)
            }
            SupervisionKind::Selected { precision } => (precision, precision),
        };

        let risk_preds = train_probs
            .iter()
            .map(|net| {
                self.risk_idx
                    .iter()
                    .map(|&i| ProbVector::new(net[i].clone()))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let r = risk_matrix(&risk_preds, &self.risk_truth)?;
        let weights = if self.weights.len() == members.len() {
            self.weights.clone()
        } else {
            CooperationWeights::uniform(members.len())?
        };
        let r_hat = cooperation_risk(&weights, &r)?;
        let est = estimate_diag_off(&r);
        let r_min = optimal_lambda_multi(&r).ok().map(|o| o.min_risk);
        let cross_risk_condition = (members.len() == 2).then(|| {
            let r12 = r.get(0, 1);
            r12 >= 0.0 && r12 < r.get(0, 0).min(r.get(1, 1))
        });
        Ok(EpochMetrics {
            epoch,
            warmup,
            test_acc,
            ensemble_acc,
            label_precision,
            true_class_mass,
            r_hat,
            r_diag: est.r_diag,
            r_off: est.r_off,
            diag_off_deviation: est.max_deviation,
            r_min,
            cross_risk_condition,
            train_loss,
            risk_entries: r.entries().to_vec(),
        })
    }
}

fn init_members(config: &TrainConfig, networks: usize, dim: usize, classes: usize) -> Result<Vec<Member>> {
    let mut dims = vec![dim];
    dims.extend_from_slice(&config.hidden);
    dims.push(classes);
    (0..networks)
        .map(|k| {
            let stream = if config.identical_init { 0 } else { k as u64 };
            let init_seed = seed::derive_seed(seed::derive_seed(config.seed, STREAM_INIT), stream);
            Ok(Member {
                params: init_params(&dims, init_seed)?,
                momentum: Momentum::new(config.momentum),
            })
        })
        .collect()
}

fn step(member: &mut Member, grads: &nn::Gradients, lr: f64) -> Result<()> {
    nn::sgd_step(&mut member.params, grads, lr, &mut member.momentum)
}

/// One epoch of plain cross-entropy on the observed labels of `indices`.
fn standard_epoch(
    member: &mut Member,
    view: TrainerView,
    indices: &[usize],
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
    epoch: usize,
) -> Result<(f64, usize)> {
    let c = view.classes();
    let mut loss = 0.0;
    for (b, batch) in shuffled_batches(indices, config.batch_size, rng).iter().enumerate() {
        let objectives: Vec<Objective> = batch.iter().map(|&i| Objective::hard(c, view.label(i))).collect();
        let (l, g) = batch_gradient(&member.params, view, batch, &objectives).map_err(|e| e.at(epoch, b))?;
        step(member, &g, config.learning_rate).map_err(|e| e.at(epoch, b))?;
        loss += l;
    }
    Ok((loss, indices.len()))
}

fn check_config(config: &TrainConfig, expected: Method, train: &NoisyDataset) -> Result<()> {
    config.validate()?;
    if config.method != expected {
        return Err(Error::InvalidArgument(format!(
            "config is for {} but {} was requested",
            config.method, expected
        )));
    }
    if config.networks() > train.len() {
        return Err(Error::InvalidArgument("more networks than training instances".into()));
    }
    Ok(())
}

/// Trains the networks of `config.method`.
pub fn run(train: &NoisyDataset, test: &NoisyDataset, config: &TrainConfig) -> Result<Trained> {
    match config.method {
        Method::Cool => train_cool(train, test, config),
        Method::Standard => train_standard(train, test, config),
        Method::Bootstrap => train_bootstrap(train, test, config),
        Method::Codistill => train_codistillation(train, test, config),
        Method::Coteaching => train_coteaching(train, test, config),
        Method::Bagging => train_bagging(train, test, config),
    }
}

fn finish(config: &TrainConfig, members: Vec<Member>, rows: Vec<EpochMetrics>) -> Result<Trained> {
    let networks = members.len();
    Ok(Trained {
        classifiers: members.into_iter().map(|m| m.params).collect(),
        record: RunRecord::new(config.method, networks, rows, config.last_k)?,
    })
}

fn check_test(train: &NoisyDataset, test: &NoisyDataset) -> Result<()> {
    if test.dim() != train.dim() || test.classes() != train.classes() {
        return Err(Error::Dimension("test set does not match the training set".into()));
    }
    Ok(())
}

/// Partition pre-training: network `k` is trained on the `k`-th random part
/// of the data for `start_epoch` epochs. With a monitor, one row per epoch
/// is recorded.
fn pretrain_members(
    train: &NoisyDataset,
    config: &TrainConfig,
    epochs: usize,
    monitor: Option<(&Monitor, SupervisionKindFn)>,
) -> Result<(Vec<Member>, Vec<Vec<usize>>, Vec<EpochMetrics>)> {
    let n = config.networks();
    let mut members = init_members(config, n, train.dim(), train.classes())?;
    let parts: Vec<Vec<usize>> = partition(train, n, seed::derive_seed(config.seed, STREAM_PARTITION))?
        .iter()
        .map(|p| p.indices().to_vec())
        .collect();
    if parts.iter().any(Vec::is_empty) {
        return Err(Error::InvalidArgument("empty partition".into()));
    }
    let mut rngs: Vec<ChaCha8Rng> = (0..n)
        .map(|k| seed::stream_rng(config.seed, STREAM_SHUFFLE, k as u64))
        .collect();
    let view = train.trainer_view();
    let mut rows = Vec::new();
    for epoch in 0..epochs {
        let mut loss = 0.0;
        let mut count = 0;
        for k in 0..n {
            let (l, c) = standard_epoch(&mut members[k], view, &parts[k], config, &mut rngs[k], epoch)?;
            loss += l;
            count += c;
        }
        if let Some((m, kind)) = &monitor {
            let warmup = epoch < config.start_epoch && config.method == Method::Cool;
            rows.push(m.measure(epoch + 1, warmup, &members, kind(), loss / count as f64)?);
        }
    }
    Ok((members, parts, rows))
}

type SupervisionKindFn = Box<dyn Fn() -> SupervisionKind>;

/// Networks after partition pre-training alone (`start_epoch` epochs).
pub fn pretrain(train: &NoisyDataset, config: &TrainConfig) -> Result<Vec<MlpParams>> {
    config.validate()?;
    let (members, _, _) = pretrain_members(train, config, config.start_epoch, None)?;
    Ok(members.into_iter().map(|m| m.params).collect())
}

/// CooL: partition pre-training, then every network is trained on all of the
/// data against the shared combined prediction, plus the annealed
/// noisy-label and entropy terms on its own partition.
pub fn train_cool(train: &NoisyDataset, test: &NoisyDataset, config: &TrainConfig) -> Result<Trained> {
    check_config(config, Method::Cool, train)?;
    check_test(train, test)?;
    let monitor = Monitor::new(train, test, config)?;
    let weights = config.weights()?;
    let w = weights.clone();
    let (mut members, parts, mut rows) = pretrain_members(
        train,
        config,
        config.start_epoch,
        Some((&monitor, Box::new(move || SupervisionKind::Combined(w.clone())))),
    )?;
    let n = members.len();
    let mut owner = vec![usize::MAX; train.len()];
    for (k, part) in parts.iter().enumerate() {
        part.iter().for_each(|&i| owner[i] = k);
    }
    let view = train.trainer_view();
    let all: Vec<usize> = (0..train.len()).collect();
    let mut rng = seed::stream_rng(config.seed, STREAM_JOINT, 0);
    for epoch in config.start_epoch..config.epochs {
        let alpha = cooperation::alpha_at(&config.alpha, epoch - config.start_epoch)?;
        let mut loss = 0.0;
        for (b, batch) in shuffled_batches(&all, config.batch_size, &mut rng).iter().enumerate() {
            let ctx = |e: Error| e.at(epoch, b);
            // Snapshot of every network's prediction before any update.
            let preds = batch
                .iter()
                .map(|&i| {
                    members
                        .iter()
                        .map(|m| nn::forward(&m.params, view.features(i)))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()
                .map_err(ctx)?;
            let mut updates = Vec::with_capacity(n);
            for (k, member) in members.iter().enumerate() {
                let objectives = batch
                    .iter()
                    .zip(&preds)
                    .map(|(&i, sample_preds)| {
                        let target = if config.include_self || n == 1 {
                            build_supervision(sample_preds, &weights)?
                        } else {
                            build_peer_supervision(sample_preds, &weights, k)?
                        };
                        let own = (owner[i] == k).then(|| view.label(i));
                        let spec = CoolLossSpec::new(target, own, alpha, config.beta, config.entropy_scope)?;
                        let ls = spec.as_loss_spec();
                        Ok(Objective {
                            target: ls.soft_target.to_vec(),
                            hard_label: ls.hard_label,
                            alpha: ls.alpha,
                            beta: ls.beta,
                        })
                    })
                    .collect::<Result<Vec<_>>>()
                    .map_err(ctx)?;
                let (l, g) = batch_gradient(&member.params, view, batch, &objectives).map_err(ctx)?;
                loss += l;
                updates.push(g);
            }
            for (member, g) in members.iter_mut().zip(&updates) {
                step(member, g, config.learning_rate).map_err(ctx)?;
            }
        }
        rows.push(monitor.measure(
            epoch + 1,
            false,
            &members,
            SupervisionKind::Combined(weights.clone()),
            loss / (n * train.len()) as f64,
        )?);
    }
    finish(config, members, rows)
}

/// Plain cross-entropy on the observed labels.
pub fn train_standard(train: &NoisyDataset, test: &NoisyDataset, config: &TrainConfig) -> Result<Trained> {
    check_config(config, Method::Standard, train)?;
    check_test(train, test)?;
    single_network(train, test, config, None)
}

/// Single network trained against `λ·e_y + (1 − λ)·p`, where `p` is its own
/// current prediction.
pub fn train_bootstrap(train: &NoisyDataset, test: &NoisyDataset, config: &TrainConfig) -> Result<Trained> {
    check_config(config, Method::Bootstrap, train)?;
    check_test(train, test)?;
    single_network(train, test, config, Some(config.bootstrap_lambda))
}

fn single_network(
    train: &NoisyDataset,
    test: &NoisyDataset,
    config: &TrainConfig,
    bootstrap: Option<f64>,
) -> Result<Trained> {
    let monitor = Monitor::new(train, test, config)?;
    let mut members = init_members(config, 1, train.dim(), train.classes())?;
    let mut rng = seed::stream_rng(config.seed, STREAM_SHUFFLE, 0);
    let view = train.trainer_view();
    let all: Vec<usize> = (0..train.len()).collect();
    let c = train.classes();
    let mut rows = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let warmup = epoch < config.start_epoch;
        let (loss, kind) = match bootstrap {
            Some(l) if !warmup => {
                let mut loss = 0.0;
                for (b, batch) in shuffled_batches(&all, config.batch_size, &mut rng).iter().enumerate() {
                    let ctx = |e: Error| e.at(epoch, b);
                    let member = &mut members[0];
                    let objectives = batch
                        .iter()
                        .map(|&i| {
                            let p = forward_raw(&member.params, view.features(i))?;
                            let mut t = one_hot_raw(c, view.label(i));
                            t.iter_mut().zip(&p).for_each(|(t, p)| *t = l * *t + (1.0 - l) * p);
                            Ok(Objective {
                                target: t,
                                hard_label: None,
                                alpha: 0.0,
                                beta: 0.0,
                            })
                        })
                        .collect::<Result<Vec<_>>>()
                        .map_err(ctx)?;
                    let (bl, g) = batch_gradient(&member.params, view, batch, &objectives).map_err(ctx)?;
                    step(member, &g, config.learning_rate).map_err(ctx)?;
                    loss += bl;
                }
                (loss, SupervisionKind::Bootstrap(l))
            }
            _ => {
                let (loss, _) = standard_epoch(&mut members[0], view, &all, config, &mut rng, epoch)?;
                (loss, SupervisionKind::NoisyLabels)
            }
        };
        rows.push(monitor.measure(epoch + 1, warmup, &members, kind, loss / train.len() as f64)?);
    }
    finish(config, members, rows)
}

/// Two networks; each is trained against `λ·e_y + (1 − λ)·p_peer` with the
/// peer prediction taken before the batch update.
pub fn train_codistillation(train: &NoisyDataset, test: &NoisyDataset, config: &TrainConfig) -> Result<Trained> {
    check_config(config, Method::Codistill, train)?;
    check_test(train, test)?;
    let l = config.codistill_lambda;
    dual_network(
        train,
        test,
        config,
        |members, view, batch, c, epoch, b| {
            let ctx = |e: Error| e.at(epoch, b);
            let preds = members
                .iter()
                .map(|m| {
                    batch
                        .iter()
                        .map(|&i| forward_raw(&m.params, view.features(i)))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()
                .map_err(ctx)?;
            let mut loss = 0.0;
            let mut updates = Vec::with_capacity(2);
            for (k, member) in members.iter().enumerate() {
                let objectives: Vec<Objective> = batch
                    .iter()
                    .zip(&preds[1 - k])
                    .map(|(&i, p)| {
                        let mut t = one_hot_raw(c, view.label(i));
                        t.iter_mut().zip(p).for_each(|(t, p)| *t = l * *t + (1.0 - l) * p);
                        Objective {
                            target: t,
                            hard_label: None,
                            alpha: 0.0,
                            beta: 0.0,
                        }
                    })
                    .collect();
                let (bl, g) = batch_gradient(&member.params, view, batch, &objectives).map_err(ctx)?;
                loss += bl;
                updates.push(g);
            }
            Ok((loss, updates, None))
        },
        SupervisionKind::Codistill(l),
    )
}

/// Two networks; each ranks the batch by its own loss on the observed
/// labels and its peer updates on the `⌈(1 − r)·batch⌉` smallest.
pub fn train_coteaching(train: &NoisyDataset, test: &NoisyDataset, config: &TrainConfig) -> Result<Trained> {
    check_config(config, Method::Coteaching, train)?;
    check_test(train, test)?;
    let r = config.noise_rate;
    let truth = train.true_labels();
    dual_network(
        train,
        test,
        config,
        |members, view, batch, c, epoch, b| {
            let ctx = |e: Error| e.at(epoch, b);
            let keep = coteaching_keep(batch.len(), r);
            let mut selections = Vec::with_capacity(2);
            for m in members.iter() {
                let losses = batch
                    .iter()
                    .map(|&i| {
                        let p = forward_raw(&m.params, view.features(i))?;
                        Ok(nn::cross_entropy_raw(&p, &one_hot_raw(c, view.label(i))))
                    })
                    .collect::<Result<Vec<_>>>()
                    .map_err(ctx)?;
                let mut positions = select_small_loss(&losses, keep);
                positions.sort_unstable();
                let picked: Vec<usize> = positions.into_iter().map(|j| batch[j]).collect();
                selections.push(picked);
            }
            let mut loss = 0.0;
            let mut updates = Vec::with_capacity(2);
            let mut clean = 0usize;
            let mut total = 0usize;
            for (k, member) in members.iter().enumerate() {
                let chosen = &selections[1 - k];
                let objectives: Vec<Objective> = chosen.iter().map(|&i| Objective::hard(c, view.label(i))).collect();
                let (bl, g) = batch_gradient(&member.params, view, chosen, &objectives).map_err(ctx)?;
                loss += bl * batch.len() as f64 / chosen.len() as f64;
                updates.push(g);
                // Oracle bookkeeping for label precision of the selected subset.
                clean += chosen.iter().filter(|&&i| view.label(i) == truth[i]).count();
                total += chosen.len();
            }
            Ok((loss, updates, Some((clean, total))))
        },
        SupervisionKind::NoisyLabels,
    )
}

type DualBatchResult = (f64, Vec<nn::Gradients>, Option<(usize, usize)>);

/// Shared loop of the dual-network baselines: both networks warm up with
/// cross-entropy on the full data, then `method_step` produces their updates
/// for each batch.
fn dual_network<F>(
    train: &NoisyDataset,
    test: &NoisyDataset,
    config: &TrainConfig,
    method_step: F,
    kind: SupervisionKind,
) -> Result<Trained>
where
    F: Fn(&[Member], TrainerView, &[usize], usize, usize, usize) -> Result<DualBatchResult>,
{
    let monitor = Monitor::new(train, test, config)?;
    let mut members = init_members(config, 2, train.dim(), train.classes())?;
    let mut rng = seed::stream_rng(config.seed, STREAM_SHUFFLE, 0);
    let view = train.trainer_view();
    let all: Vec<usize> = (0..train.len()).collect();
    let c = train.classes();
    let mut rows = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let warmup = epoch < config.start_epoch;
        let mut loss = 0.0;
        let mut selected = (0usize, 0usize);
        for (b, batch) in shuffled_batches(&all, config.batch_size, &mut rng).iter().enumerate() {
            let ctx = |e: Error| e.at(epoch, b);
            let updates = if warmup {
                let objectives: Vec<Objective> = batch.iter().map(|&i| Objective::hard(c, view.label(i))).collect();
                members
                    .iter()
                    .map(|m| batch_gradient(&m.params, view, batch, &objectives))
                    .collect::<Result<Vec<_>>>()
                    .map_err(ctx)?
                    .into_iter()
                    .map(|(l, g)| {
                        loss += l;
                        g
                    })
                    .collect::<Vec<_>>()
            } else {
                let (l, g, sel) = method_step(&members, view, batch, c, epoch, b)?;
                loss += l;
                if let Some((clean, total)) = sel {
                    selected.0 += clean;
                    selected.1 += total;
                }
                g
            };
            for (member, g) in members.iter_mut().zip(&updates) {
                step(member, g, config.learning_rate).map_err(ctx)?;
            }
        }
        let epoch_kind = match (&kind, warmup) {
            (_, true) => SupervisionKind::NoisyLabels,
            (SupervisionKind::Codistill(l), false) => SupervisionKind::Codistill(*l),
            (_, false) if selected.1 > 0 => SupervisionKind::Selected {
                precision: selected.0 as f64 / selected.1 as f64,
            },
            _ => SupervisionKind::NoisyLabels,
        };
        rows.push(monitor.measure(epoch + 1, warmup, &members, epoch_kind, loss / (2 * train.len()) as f64)?);
    }
    finish(config, members, rows)
}

/// Networks trained with cross-entropy on disjoint random parts of the data
/// for every epoch; evaluation uses their soft vote.
pub fn train_bagging(train: &NoisyDataset, test: &NoisyDataset, config: &TrainConfig) -> Result<Trained> {
    check_config(config, Method::Bagging, train)?;
    check_test(train, test)?;
    let monitor = Monitor::new(train, test, config)?;
    let (members, _, rows) = pretrain_members(
        train,
        config,
        config.epochs,
        Some((&monitor, Box::new(|| SupervisionKind::NoisyLabels))),
    )?;
    finish(config, members, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{make_blobs, make_two_moons, NoiseSpec};

    fn data(noise: f64) -> (NoisyDataset, NoisyDataset) {
        let full = make_blobs(3, 6, 80, 0.4, 1).unwrap();
        let (train, test) = full.split_holdout(0.25, 2).unwrap();
        (
            train.with_noise(&NoiseSpec::Symmetric { rate: noise }, 3).unwrap(),
            test,
        )
    }

    fn cfg(method: Method) -> TrainConfig {
        TrainConfig {
            method,
            epochs: 6,
            start_epoch: 2,
            last_k: 3,
            hidden: vec![8],
            batch_size: 16,
            alpha: cooperation::AlphaSchedule::linear(0.05, 4),
            ..TrainConfig::default()
        }
    }

    #[test]
    fn small_loss_selection() {
        assert_eq!(coteaching_keep(32, 0.0), 32);
        assert_eq!(coteaching_keep(10, 0.2), 8);
        assert_eq!(coteaching_keep(32, 0.45), 18);
        assert_eq!(coteaching_keep(7, 0.5), 4);
        assert_eq!(select_small_loss(&[0.3, 0.1, 0.3, 0.05], 3), vec![3, 1, 0]);
    }

    #[test]
    fn planted_batch_selection_recovers_clean_subset() {
        // Samples 1, 4 and 6 carry flipped labels, so a network that has
        // learned the clean rule assigns them the largest losses.
        let losses = [0.10, 2.30, 0.05, 0.20, 1.90, 0.15, 2.70, 0.12];
        let keep = coteaching_keep(losses.len(), 3.0 / 8.0);
        let mut picked = select_small_loss(&losses, keep);
        picked.sort_unstable();
        assert_eq!(picked, vec![0, 2, 3, 5, 7]);
    }

    #[test]
    fn every_method_runs_and_records_each_epoch() {
        let (train, test) = data(0.3);
        for method in Method::ALL {
            let c = TrainConfig {
                noise_rate: 0.3,
                ..cfg(method)
            };
            let out = run(&train, &test, &c).unwrap();
            let rows = &out.record.rows;
            assert_eq!(rows.len(), 6, "{method}");
            assert!(rows.windows(2).all(|w| w[1].epoch == w[0].epoch + 1));
            assert_eq!(out.classifiers.len(), c.networks());
            for r in rows {
                assert!((0.0..=1.0).contains(&r.label_precision));
                assert!(r.r_hat >= 0.0);
            }
        }
    }

    #[test]
    fn method_mismatch_is_rejected() {
        let (train, test) = data(0.0);
        assert!(train_cool(&train, &test, &cfg(Method::Standard)).is_err());
        let bad = TrainConfig {
            start_epoch: 6,
            ..cfg(Method::Cool)
        };
        assert!(train_cool(&train, &test, &bad).is_err());
    }

    #[test]
    fn pretraining_produces_diverse_networks() {
        let (train, _) = data(0.2);
        let start0 = TrainConfig {
            start_epoch: 0,
            ..cfg(Method::Cool)
        };
        let fresh = pretrain(&train, &start0).unwrap();
        let members = init_members(&start0, 2, train.dim(), train.classes()).unwrap();
        assert_eq!(fresh[0], members[0].params);
        assert_eq!(fresh[1], members[1].params);

        let trained = pretrain(&train, &cfg(Method::Cool)).unwrap();
        assert!(trained[0].distance(&trained[1]).unwrap() > 0.0);
        assert!(trained[0].distance(&fresh[0]).unwrap() > 0.0);
    }

    #[test]
    fn bootstrap_with_full_label_weight_is_standard() {
        let (train, test) = data(0.3);
        let s = train_standard(&train, &test, &cfg(Method::Standard)).unwrap();
        let b = train_bootstrap(
            &train,
            &test,
            &TrainConfig {
                bootstrap_lambda: 1.0,
                ..cfg(Method::Bootstrap)
            },
        )
        .unwrap();
        assert_eq!(s.classifiers, b.classifiers);
        assert_eq!(s.record.mean_acc_curve(), b.record.mean_acc_curve());
    }

    #[test]
    fn codistillation_with_full_label_weight_is_two_standards() {
        let (train, test) = data(0.3);
        let s = train_standard(&train, &test, &cfg(Method::Standard)).unwrap();
        let d = train_codistillation(
            &train,
            &test,
            &TrainConfig {
                codistill_lambda: 1.0,
                ..cfg(Method::Codistill)
            },
        )
        .unwrap();
        assert_eq!(d.classifiers[0], s.classifiers[0]);
    }

    #[test]
    fn twin_codistillation_stays_identical() {
        let (train, test) = data(0.3);
        let d = train_codistillation(
            &train,
            &test,
            &TrainConfig {
                identical_init: true,
                ..cfg(Method::Codistill)
            },
        )
        .unwrap();
        assert_eq!(d.classifiers[0], d.classifiers[1]);
        assert!(d.record.rows.iter().all(|r| r.test_acc[0] == r.test_acc[1]));
    }

    #[test]
    fn coteaching_without_noise_trains_on_full_batches() {
        let (train, test) = data(0.0);
        let t = train_coteaching(&train, &test, &cfg(Method::Coteaching)).unwrap();
        let d = train_codistillation(
            &train,
            &test,
            &TrainConfig {
                codistill_lambda: 1.0,
                ..cfg(Method::Codistill)
            },
        )
        .unwrap();
        // With r = 0 both selections are the whole batch, so each network
        // receives exactly the plain cross-entropy update.
        assert_eq!(t.classifiers, d.classifiers);
    }

    #[test]
    fn single_bag_is_standard() {
        let (train, test) = data(0.3);
        let s = train_standard(&train, &test, &cfg(Method::Standard)).unwrap();
        let b = train_bagging(
            &train,
            &test,
            &TrainConfig {
                n_classifiers: 1,
                ..cfg(Method::Bagging)
            },
        )
        .unwrap();
        assert_eq!(s.classifiers, b.classifiers);
    }

    #[test]
    fn identical_bags_vote_like_one() {
        let (train, test) = data(0.0);
        let one = evaluate(&[init_params(&[6, 8, 3], 4).unwrap()], &test).unwrap();
        let p = init_params(&[6, 8, 3], 4).unwrap();
        let three = evaluate(&[p.clone(), p.clone(), p], &test).unwrap();
        assert_eq!(three.ensemble, one.per_classifier[0]);
        assert_eq!(one.ensemble, one.per_classifier[0]);
        assert!(evaluate(&[], &train).is_err());
    }

    #[test]
    fn dual_cool_shares_one_supervision() {
        let preds = [
            ProbVector::new(vec![0.7, 0.2, 0.1]).unwrap(),
            ProbVector::new(vec![0.1, 0.3, 0.6]).unwrap(),
        ];
        let w = CooperationWeights::uniform(2).unwrap();
        let a = build_supervision(&preds, &w).unwrap();
        let b = build_supervision(&preds, &w).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn self_distillation_loss_bounded_by_target_entropy() {
        let (train, test) = data(0.2);
        let c = TrainConfig {
            n_classifiers: 1,
            alpha: cooperation::AlphaSchedule::constant(0.0),
            beta: 0.0,
            ..cfg(Method::Cool)
        };
        let out = train_cool(&train, &test, &c).unwrap();
        // One network, no label or entropy term: the per-sample loss is
        // CE(p, p) = H(p), the entropy of its own prediction.
        let p = &out.classifiers[0];
        for i in 0..train.len() {
            let pred = nn::forward(p, train.trainer_view().features(i)).unwrap();
            let spec = CoolLossSpec::new(
                build_supervision(std::slice::from_ref(&pred), &CooperationWeights::uniform(1).unwrap()).unwrap(),
                None,
                0.0,
                0.0,
                crate::cooperation::EntropyScope::OwnPartition,
            )
            .unwrap();
            let loss = cooperation::cool_loss(&pred, &spec).unwrap();
            assert!(loss >= cooperation::target_entropy(&spec) - 1e-12);
        }
        assert!(out.record.rows.iter().all(|r| r.train_loss >= 0.0));
    }

    #[test]
    fn runs_are_deterministic() {
        let (train, test) = data(0.3);
        for method in [Method::Cool, Method::Coteaching] {
            let c = TrainConfig {
                noise_rate: 0.3,
                ..cfg(method)
            };
            let a = run(&train, &test, &c).unwrap();
            let b = run(&train, &test, &c).unwrap();
            assert_eq!(a.record.to_csv().unwrap(), b.record.to_csv().unwrap());
            assert_eq!(a.classifiers, b.classifiers);
        }
    }

    #[test]
    fn standard_fits_noiseless_moons() {
        let full = make_two_moons(150, 0.1, 5).unwrap();
        let (train, test) = full.split_holdout(0.2, 1).unwrap();
        let c = TrainConfig {
            method: Method::Standard,
            epochs: 200,
            start_epoch: 0,
            hidden: vec![16],
            batch_size: 32,
            learning_rate: 0.05,
            ..TrainConfig::default()
        };
        let out = train_standard(&train, &test, &c).unwrap();
        let train_eval = evaluate(&out.classifiers, &train).unwrap();
        assert!(train_eval.per_classifier[0] >= 0.95, "{train_eval:?}");
    }
}
