//! Triplet sampling, the SGD loop and per-epoch embedding snapshots.
//!
//! One epoch is one batch and one SGD step, so each snapshot lines up with
//! one animation frame of the training slice. Snapshot 0 is the untrained
//! network; snapshot `e` is taken after the step of epoch `e` and carries that
//! epoch's mean batch loss, measured with the parameters before the step.

use serde::{Deserialize, Serialize};

use crate::dataset::{Image, LabeledDataset};
use crate::error::{Error, Result};
use crate::fingerprint;
use crate::losses::{contrastive_loss, triplet_loss, LabeledPair, LossKind, Margin, Triplet};
use crate::matrix::Matrix;
use crate::net::{Checkpoint, EmbeddingNet};
use crate::rng::{self, SplitMix64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingStrategy {
    Random,
    /// Prefer negatives with `‖a−p‖² < ‖a−n‖² < ‖a−p‖² + m`.
    SemiHard,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub epochs: usize,
    pub batch_triplets: usize,
    pub learning_rate: f64,
    pub margin: Margin,
    pub loss_kind: LossKind,
    pub sampling: SamplingStrategy,
    pub seed: u64,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            epochs: 30,
            batch_triplets: 64,
            learning_rate: 0.05,
            margin: Margin::DEFAULT,
            loss_kind: LossKind::Triplet,
            sampling: SamplingStrategy::Random,
            seed: 42,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        if self.batch_triplets == 0 {
            return Err(Error::Config("batch_triplets must be ≥ 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        Ok(())
    }
}

/// Row indices of one (anchor, positive, negative) triplet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TripletIndices {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

/// Class membership lists, built once per sampling call.
struct ClassIndex {
    class_of: Vec<usize>,
    members: Vec<Vec<usize>>,
}

impl ClassIndex {
    fn new(labels: &[&str]) -> Result<Self> {
        let mut names: Vec<&str> = Vec::new();
        let mut class_of = Vec::with_capacity(labels.len());
        let mut members: Vec<Vec<usize>> = Vec::new();
        for (i, l) in labels.iter().enumerate() {
            let c = match names.iter().position(|n| n == l) {
                Some(c) => c,
                None => {
                    names.push(l);
                    members.push(Vec::new());
                    names.len() - 1
                }
            };
            class_of.push(c);
            members[c].push(i);
        }
        if members.len() < 2 {
            return Err(Error::Dataset("triplet sampling needs ≥ 2 classes".into()));
        }
        if let Some(c) = members.iter().position(|m| m.len() < 2) {
            return Err(Error::Dataset(format!(
                "class {:?} needs ≥ 2 items for triplet sampling",
                names[c]
            )));
        }
        Ok(ClassIndex { class_of, members })
    }

    /// The `k`-th item (in index order) outside class `c`.
    fn nth_outside(&self, c: usize, k: usize) -> usize {
        self.class_of
            .iter()
            .enumerate()
            .filter(|(_, &cl)| cl != c)
            .nth(k)
            .map(|(i, _)| i)
            .expect("k is below the number of items outside the class")
    }
}

fn squared(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Draws `count` triplets. Every triplet consumes exactly three draws from
/// `rng`: anchor, positive and negative. Semi-hard sampling spends the third
/// draw on the semi-hard window when it is non-empty and otherwise falls back
/// to the same uniform negative that random sampling would pick.
pub fn sample_triplets(
    labels: &[&str],
    count: usize,
    strategy: SamplingStrategy,
    embeddings: Option<&Matrix>,
    margin: Margin,
    rng: &mut SplitMix64,
) -> Result<Vec<TripletIndices>> {
    let index = ClassIndex::new(labels)?;
    let n = labels.len();
    if strategy == SamplingStrategy::SemiHard {
        match embeddings {
            Some(e) if e.rows() == n => {}
            _ => {
                return Err(Error::Shape(
                    "semi-hard sampling needs one embedding row per item".into(),
                ))
            }
        }
    }
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let anchor = rng::index(rng, n);
        let c = index.class_of[anchor];
        let same = &index.members[c];
        let k = rng::index(rng, same.len() - 1);
        // skip over the anchor itself
        let pos_slot = same
            .iter()
            .position(|&i| i == anchor)
            .expect("anchor is a member");
        let positive = same[if k >= pos_slot { k + 1 } else { k }];
        let outside = n - same.len();

        let negative = match (strategy, embeddings) {
            (SamplingStrategy::SemiHard, Some(e)) => {
                let a = e.row(anchor);
                let d_ap = squared(a, e.row(positive));
                let window: Vec<usize> = (0..n)
                    .filter(|&j| index.class_of[j] != c)
                    .filter(|&j| {
                        let d_an = squared(a, e.row(j));
                        d_ap < d_an && d_an < d_ap + margin.value()
                    })
                    .collect();
                if window.is_empty() {
                    index.nth_outside(c, rng::index(rng, outside))
                } else {
                    window[rng::index(rng, window.len())]
                }
            }
            _ => index.nth_outside(c, rng::index(rng, outside)),
        };
        out.push(TripletIndices {
            anchor,
            positive,
            negative,
        });
    }
    Ok(out)
}

/// Per-triplet losses and the mean-loss gradient with respect to the rows of
/// `embeddings`. For contrastive loss a triplet contributes the mean of its
/// similar (a, p) and dissimilar (a, n) pair losses.
pub fn batch_loss(
    embeddings: &Matrix,
    triplets: &[TripletIndices],
    kind: LossKind,
    margin: Margin,
) -> (Vec<f64>, Matrix) {
    let mut grad = Matrix::zeros(embeddings.rows(), embeddings.cols());
    let scale = 1.0 / triplets.len().max(1) as f64;
    let mut losses = Vec::with_capacity(triplets.len());
    let add = |grad: &mut Matrix, row: usize, g: &[f64], s: f64| {
        for (dst, v) in grad.row_mut(row).iter_mut().zip(g) {
            *dst += s * v;
        }
    };
    for t in triplets {
        let (a, p, n) = (
            embeddings.row(t.anchor).to_vec(),
            embeddings.row(t.positive).to_vec(),
            embeddings.row(t.negative).to_vec(),
        );
        match kind {
            LossKind::Triplet => {
                let l = triplet_loss(
                    &Triplet {
                        anchor: a,
                        positive: p,
                        negative: n,
                    },
                    margin,
                );
                add(&mut grad, t.anchor, &l.grad_anchor, scale);
                add(&mut grad, t.positive, &l.grad_positive, scale);
                add(&mut grad, t.negative, &l.grad_negative, scale);
                losses.push(l.loss);
            }
            LossKind::Contrastive => {
                let sim = contrastive_loss(
                    &LabeledPair {
                        a: a.clone(),
                        b: p,
                        similar: true,
                    },
                    margin,
                );
                let dis = contrastive_loss(
                    &LabeledPair {
                        a,
                        b: n,
                        similar: false,
                    },
                    margin,
                );
                let half = 0.5 * scale;
                add(&mut grad, t.anchor, &sim.grad_a, half);
                add(&mut grad, t.positive, &sim.grad_b, half);
                add(&mut grad, t.anchor, &dis.grad_a, half);
                add(&mut grad, t.negative, &dis.grad_b, half);
                losses.push(0.5 * (sim.loss + dis.loss));
            }
        }
    }
    (losses, grad)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochSnapshot {
    pub epoch: usize,
    /// One row per dataset item, in dataset order.
    pub embeddings: Matrix,
    pub mean_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingRun {
    pub dataset_fingerprint: u64,
    pub item_ids: Vec<String>,
    pub hyperparams: HyperParams,
    /// `epochs + 1` snapshots; index 0 is the untrained network.
    pub snapshots: Vec<EpochSnapshot>,
    /// First triplet drawn, used by the distance and loss slices.
    pub first_triplet: TripletIndices,
    pub final_net: EmbeddingNet,
}

impl TrainingRun {
    pub fn loss_curve(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.mean_loss).collect()
    }

    pub fn final_embeddings(&self) -> &Matrix {
        &self
            .snapshots
            .last()
            .expect("at least one snapshot")
            .embeddings
    }
}

/// Embeds the whole dataset in dataset order.
pub fn embed_dataset(net: &EmbeddingNet, data: &LabeledDataset) -> Result<Matrix> {
    let all: Vec<&Image> = data.items.iter().collect();
    net.embed(&all)
}

/// Mean loss and gradient of one batch, evaluated at `net`.
fn batch_step(
    net: &EmbeddingNet,
    data: &LabeledDataset,
    triplets: &[TripletIndices],
    hp: &HyperParams,
) -> Result<(f64, crate::net::GradientSet)> {
    // forward only the distinct items the batch touches
    let mut rows: Vec<usize> = Vec::new();
    let mut slot = vec![usize::MAX; data.len()];
    for t in triplets {
        for i in [t.anchor, t.positive, t.negative] {
            if slot[i] == usize::MAX {
                slot[i] = rows.len();
                rows.push(i);
            }
        }
    }
    let batch: Vec<&Image> = rows.iter().map(|&i| &data.items[i]).collect();
    let (emb, cache) = net.forward(&batch)?;
    let local: Vec<TripletIndices> = triplets
        .iter()
        .map(|t| TripletIndices {
            anchor: slot[t.anchor],
            positive: slot[t.positive],
            negative: slot[t.negative],
        })
        .collect();
    let (losses, upstream) = batch_loss(&emb, &local, hp.loss_kind, hp.margin);
    let mean = losses.iter().sum::<f64>() / losses.len() as f64;
    let grads = net.backward(&cache, &upstream)?;
    Ok((mean, grads))
}

pub fn train(net: &EmbeddingNet, data: &LabeledDataset, hp: &HyperParams) -> Result<TrainingRun> {
    hp.validate()?;
    data.validate()?;
    let labels = data.labels();
    let mut rng = rng::seeded(hp.seed);
    let mut current = net.clone();
    let mut embeddings = embed_dataset(&current, data)?;
    let mut batch = sample_triplets(
        &labels,
        hp.batch_triplets,
        hp.sampling,
        Some(&embeddings),
        hp.margin,
        &mut rng,
    )?;
    let first_triplet = batch[0];
    let (initial_loss, _) = batch_step(&current, data, &batch, hp)?;
    let mut snapshots = Vec::with_capacity(hp.epochs + 1);
    snapshots.push(EpochSnapshot {
        epoch: 0,
        embeddings: embeddings.clone(),
        mean_loss: initial_loss,
    });
    for epoch in 1..=hp.epochs {
        let (mean_loss, grads) = batch_step(&current, data, &batch, hp)?;
        current = current.apply_gradients(&grads, hp.learning_rate)?;
        embeddings = embed_dataset(&current, data)?;
        snapshots.push(EpochSnapshot {
            epoch,
            embeddings: embeddings.clone(),
            mean_loss,
        });
        if epoch < hp.epochs {
            batch = sample_triplets(
                &labels,
                hp.batch_triplets,
                hp.sampling,
                Some(&embeddings),
                hp.margin,
                &mut rng,
            )?;
        }
    }
    Ok(TrainingRun {
        dataset_fingerprint: data.fingerprint(),
        item_ids: data.items.iter().map(|i| i.id.clone()).collect(),
        hyperparams: *hp,
        snapshots,
        first_triplet,
        final_net: current,
    })
}

/// Leave-one-out top-1 accuracy: the fraction of rows whose nearest other row
/// shares their label. Ties go to the lowest index.
pub fn retrieval_accuracy(embeddings: &Matrix, labels: &[&str]) -> Result<f64> {
    let n = embeddings.rows();
    if n < 2 || labels.len() != n {
        return Err(Error::Dataset(format!(
            "retrieval needs ≥ 2 items with one label each, got {n} rows and {} labels",
            labels.len()
        )));
    }
    let mut hits = 0usize;
    for i in 0..n {
        let mut best = (f64::INFINITY, usize::MAX);
        for j in (0..n).filter(|&j| j != i) {
            let d = squared(embeddings.row(i), embeddings.row(j));
            if d < best.0 {
                best = (d, j);
            }
        }
        if labels[best.1] == labels[i] {
            hits += 1;
        }
    }
    Ok(hits as f64 / n as f64)
}

pub fn evaluate_retrieval(net: &EmbeddingNet, data: &LabeledDataset) -> Result<f64> {
    if data.len() < 2 {
        return Err(Error::Dataset("retrieval needs ≥ 2 items".into()));
    }
    retrieval_accuracy(&embed_dataset(net, data)?, &data.labels())
}

// ---------------------------------------------------------------------------
// File format
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotFile {
    pub epoch: usize,
    pub embeddings: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripletIdsFile {
    pub anchor: String,
    pub positive: String,
    pub negative: String,
}

/// Training run document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRunFile {
    pub format_version: u32,
    pub hyperparams: HyperParams,
    pub dataset_fingerprint: String,
    pub item_ids: Vec<String>,
    pub first_triplet: TripletIdsFile,
    pub loss_curve: Vec<f64>,
    pub snapshots: Vec<SnapshotFile>,
    pub final_net: Checkpoint,
}

impl From<&TrainingRun> for TrainingRunFile {
    fn from(run: &TrainingRun) -> Self {
        let id = |i: usize| run.item_ids[i].clone();
        TrainingRunFile {
            format_version: 1,
            hyperparams: run.hyperparams,
            dataset_fingerprint: fingerprint::to_hex(run.dataset_fingerprint),
            item_ids: run.item_ids.clone(),
            first_triplet: TripletIdsFile {
                anchor: id(run.first_triplet.anchor),
                positive: id(run.first_triplet.positive),
                negative: id(run.first_triplet.negative),
            },
            loss_curve: run.loss_curve(),
            snapshots: run
                .snapshots
                .iter()
                .map(|s| SnapshotFile {
                    epoch: s.epoch,
                    embeddings: s.embeddings.clone(),
                })
                .collect(),
            final_net: run.final_net.to_checkpoint(),
        }
    }
}

impl TryFrom<TrainingRunFile> for TrainingRun {
    type Error = Error;

    fn try_from(f: TrainingRunFile) -> Result<Self> {
        if f.format_version != 1 {
            return Err(Error::Config(format!(
                "unsupported training run format_version {}",
                f.format_version
            )));
        }
        let fp = fingerprint::from_hex(&f.dataset_fingerprint)
            .ok_or_else(|| Error::Config("malformed dataset_fingerprint".into()))?;
        if f.loss_curve.len() != f.snapshots.len() || f.snapshots.is_empty() {
            return Err(Error::Config(format!(
                "{} loss values for {} snapshots",
                f.loss_curve.len(),
                f.snapshots.len()
            )));
        }
        let final_net = EmbeddingNet::from_checkpoint(&f.final_net)?;
        let mut snapshots = Vec::with_capacity(f.snapshots.len());
        for (k, (s, loss)) in f.snapshots.into_iter().zip(f.loss_curve).enumerate() {
            if s.epoch != k {
                return Err(Error::Config(format!(
                    "snapshot {k} is labeled epoch {}",
                    s.epoch
                )));
            }
            if s.embeddings.rows() != f.item_ids.len()
                || s.embeddings.cols() != final_net.embedding_dim()
            {
                return Err(Error::Shape(format!(
                    "snapshot {k} embedding matrix has the wrong shape"
                )));
            }
            snapshots.push(EpochSnapshot {
                epoch: s.epoch,
                embeddings: s.embeddings,
                mean_loss: loss,
            });
        }
        let find = |id: &str| {
            f.item_ids
                .iter()
                .position(|i| i == id)
                .ok_or_else(|| Error::Config(format!("first_triplet id {id:?} is not an item")))
        };
        let first_triplet = TripletIndices {
            anchor: find(&f.first_triplet.anchor)?,
            positive: find(&f.first_triplet.positive)?,
            negative: find(&f.first_triplet.negative)?,
        };
        Ok(TrainingRun {
            dataset_fingerprint: fp,
            item_ids: f.item_ids,
            hyperparams: f.hyperparams,
            snapshots,
            first_triplet,
            final_net,
        })
    }
}
