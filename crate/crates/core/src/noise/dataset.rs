use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::transition::{inject_noise, NoiseSpec};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledInstance {
    pub id: usize,
    pub features: Vec<f64>,
    pub noisy_label: usize,
    /// Ground truth. Only evaluation code reads this; trainers see the
    /// dataset through [`TrainerView`].
    pub true_label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub generator: String,
    pub seed: u64,
    pub noise: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoisyDataset {
    instances: Vec<LabeledInstance>,
    classes: usize,
    dim: usize,
    provenance: Provenance,
}

impl NoisyDataset {
    pub fn new(instances: Vec<LabeledInstance>, classes: usize, provenance: Provenance) -> Result<Self> {
        let first = instances
            .first()
            .ok_or_else(|| Error::InvalidArgument("dataset is empty".into()))?;
        let dim = first.features.len();
        if dim == 0 {
            return Err(Error::InvalidArgument("zero-dimensional features".into()));
        }
        if classes < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 classes, got {classes}"
            )));
        }
        for inst in &instances {
            if inst.features.len() != dim {
                return Err(Error::Dimension(format!(
                    "instance {} has {} features, expected {dim}",
                    inst.id,
                    inst.features.len()
                )));
            }
            if inst.true_label >= classes || inst.noisy_label >= classes {
                return Err(Error::InvalidArgument(format!(
                    "instance {} has a label outside [0, {classes})",
                    inst.id
                )));
            }
            if inst.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("features of instance {}", inst.id)));
            }
        }
        Ok(NoisyDataset {
            instances,
            classes,
            dim,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn instances(&self) -> &[LabeledInstance] {
        &self.instances
    }

    pub fn trainer_view(&self) -> TrainerView<'_> {
        TrainerView { data: self }
    }

    pub fn true_labels(&self) -> Vec<usize> {
        self.instances.iter().map(|i| i.true_label).collect()
    }

    pub fn noisy_labels(&self) -> Vec<usize> {
        self.instances.iter().map(|i| i.noisy_label).collect()
    }

    /// Fraction of instances whose observed label differs from the truth.
    pub fn noise_rate(&self) -> f64 {
        self.instances.iter().filter(|i| i.noisy_label != i.true_label).count() as f64 / self.len() as f64
    }

    /// Replaces every observed label by a draw from the noise process applied
    /// to the true label.
    pub fn with_noise(&self, noise: &NoiseSpec, seed: u64) -> Result<Self> {
        let t = noise.transition(self.classes)?;
        let noisy = inject_noise(&self.true_labels(), &t, seed)?;
        let instances = self
            .instances
            .iter()
            .zip(noisy)
            .map(|(inst, y)| LabeledInstance {
                noisy_label: y,
                ..inst.clone()
            })
            .collect();
        let provenance = Provenance {
            noise: noise.label(),
            ..self.provenance.clone()
        };
        Self::new(instances, self.classes, provenance)
    }

    /// Copies of the instances at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let instances = indices
            .iter()
            .map(|&i| {
                self.instances
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::InvalidArgument(format!("index {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(instances, self.classes, self.provenance.clone())
    }

    /// Stratified random split into `(train, holdout)` with roughly
    /// `holdout_fraction` of every class held out.
    pub fn split_holdout(&self, holdout_fraction: f64, seed: u64) -> Result<(Self, Self)> {
        if !(holdout_fraction > 0.0 && holdout_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "holdout fraction {holdout_fraction} outside (0, 1)"
            )));
        }
        let mut rng = seed::rng(seed);
        let mut train = Vec::new();
        let mut hold = Vec::new();
        for class in 0..self.classes {
            let mut idx: Vec<usize> = (0..self.len())
                .filter(|&i| self.instances[i].true_label == class)
                .collect();
            idx.shuffle(&mut rng);
            let k = (idx.len() as f64 * holdout_fraction).round() as usize;
            hold.extend_from_slice(&idx[..k]);
            train.extend_from_slice(&idx[k..]);
        }
        train.sort_unstable();
        hold.sort_unstable();
        if train.is_empty() || hold.is_empty() {
            return Err(Error::InvalidArgument("split leaves an empty side".into()));
        }
        Ok((self.subset(&train)?, self.subset(&hold)?))
    }
}

/// Read access to features and observed labels only.
#[derive(Debug, Clone, Copy)]
pub struct TrainerView<'a> {
    data: &'a NoisyDataset,
}

impl<'a> TrainerView<'a> {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.data.classes
    }

    pub fn dim(&self) -> usize {
        self.data.dim
    }

    pub fn features(&self, i: usize) -> &'a [f64] {
        &self.data.instances[i].features
    }

    pub fn label(&self, i: usize) -> usize {
        self.data.instances[i].noisy_label
    }
}

/// `n` class means on the unit sphere in `d` dimensions. With `c ≤ d` the
/// means are mutually orthogonal; otherwise they are spread evenly on a
/// circle (`d = 2`) or drawn uniformly on the sphere.
fn class_means(c: usize, d: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    if c <= d {
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(c);
        while basis.len() < c {
            let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            for b in &basis {
                let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-6 {
                basis.push(v.into_iter().map(|x| x / norm).collect());
            }
        }
        basis
    } else if d == 2 {
        (0..c)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * k as f64 / c as f64;
                vec![a.cos(), a.sin()]
            })
            .collect()
    } else {
        (0..c)
            .map(|_| {
                let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                v.into_iter().map(|x| x / norm).collect()
            })
            .collect()
    }
}

/// Isotropic Gaussian blobs around unit-norm class means; labels are clean.
pub fn make_blobs(c: usize, d: usize, per_class: usize, spread: f64, seed: u64) -> Result<NoisyDataset> {
    if c < 2 || d < 2 || per_class == 0 || !(spread >= 0.0 && spread.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "degenerate blob parameters c={c} d={d} per_class={per_class} spread={spread}"
        )));
    }
    let mut rng = seed::rng(seed);
    let means = class_means(c, d, &mut rng);
    let mut instances = Vec::with_capacity(c * per_class);
    for _ in 0..per_class {
        for (label, mean) in means.iter().enumerate() {
            let features = mean
                .iter()
                .map(|m| m + spread * rng.sample::<f64, _>(StandardNormal))
                .collect();
            instances.push(LabeledInstance {
                id: instances.len(),
                features,
                noisy_label: label,
                true_label: label,
            });
        }
    }
    NoisyDataset::new(
        instances,
        c,
        Provenance {
            generator: format!("blobs(c={c},d={d},per_class={per_class},spread={spread})"),
            seed,
            noise: "none".into(),
        },
    )
}

/// Two interleaving half circles in the plane with Gaussian jitter.
pub fn make_two_moons(per_class: usize, noise_std: f64, seed: u64) -> Result<NoisyDataset> {
    if per_class < 2 || !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "degenerate moon parameters per_class={per_class} noise_std={noise_std}"
        )));
    }
    let mut rng = seed::rng(seed);
    let mut instances = Vec::with_capacity(2 * per_class);
    for k in 0..per_class {
        let t = std::f64::consts::PI * k as f64 / (per_class - 1) as f64;
        let points = [[t.cos(), t.sin()], [1.0 - t.cos(), 0.5 - t.sin()]];
        for (label, p) in points.iter().enumerate() {
            let features = p
                .iter()
                .map(|v| v + noise_std * rng.sample::<f64, _>(StandardNormal))
                .collect();
            instances.push(LabeledInstance {
                id: instances.len(),
                features,
                noisy_label: label,
                true_label: label,
            });
        }
    }
    NoisyDataset::new(
        instances,
        2,
        Provenance {
            generator: format!("two_moons(per_class={per_class},noise_std={noise_std})"),
            seed,
            noise: "none".into(),
        },
    )
}

/// A subset of a dataset by instance index.
#[derive(Debug, Clone)]
pub struct DatasetView<'a> {
    data: &'a NoisyDataset,
    indices: Vec<usize>,
}

impl<'a> DatasetView<'a> {
    pub fn full(data: &'a NoisyDataset) -> Self {
        DatasetView {
            data,
            indices: (0..data.len()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Indices into the parent dataset, ascending.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn instances(&self) -> impl Iterator<Item = &'a LabeledInstance> + '_ {
        self.indices.iter().map(|&i| &self.data.instances[i])
    }

    pub fn to_dataset(&self) -> Result<NoisyDataset> {
        self.data.subset(&self.indices)
    }
}

/// Splits the dataset into `n` disjoint parts whose sizes differ by at most
/// one, assigning instances uniformly at random.
pub fn partition(data: &NoisyDataset, n: usize, seed: u64) -> Result<Vec<DatasetView<'_>>> {
    if n == 0 || n > data.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot split {} instances into {n} parts",
            data.len()
        )));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut seed::rng(seed));
    let mut parts = vec![Vec::with_capacity(data.len() / n + 1); n];
    for (k, i) in order.into_iter().enumerate() {
        parts[k % n].push(i);
    }
    Ok(parts
        .into_iter()
        .map(|mut indices| {
            indices.sort_unstable();
            DatasetView { data, indices }
        })
        .collect())
}
