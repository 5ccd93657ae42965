use alloc::vec::Vec;
use core::fmt;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use super::features::FeatureLayout;
use super::kdtree::{KdTree, Neighbor};
use crate::datagen::{Dataset, Provenance};
use crate::geom::{ControllerLimits, DeltaAction, GripperCommand, Vec3};
use crate::world::Observation;

/// Added to neighbor distances before inverting them into weights.
pub const DISTANCE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum WeightsMode {
    #[default]
    Uniform,
    /// Non-base rows weighted by `base steps / non-base steps`.
    Balanced,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct FitConfig {
    pub k: usize,
    pub weights: WeightsMode,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig { k: 3, weights: WeightsMode::Uniform }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FitError {
    EmptyDataset,
    InconsistentLayout { episode: usize, step: usize },
    InvalidK,
    InvalidRow(usize),
}

impl fmt::Display for FitError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FitError::EmptyDataset => f.write_str("cannot fit on an empty dataset"),
            FitError::InconsistentLayout { episode, step } => {
                write!(f, "observation layout differs at episode {episode}, step {step}")
            }
            FitError::InvalidK => f.write_str("k must be at least 1"),
            FitError::InvalidRow(i) => write!(f, "row {i} has a non-finite value or non-positive weight"),
        }
    }
}

impl core::error::Error for FitError {}

/// Serializable content of a fitted model.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ModelData {
    pub layout: FeatureLayout,
    pub k: usize,
    pub limits: ControllerLimits,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    /// Raw (unnormalized) feature rows, row-major.
    pub features: Vec<f64>,
    pub actions: Vec<DeltaAction>,
    pub weights: Vec<f64>,
    pub provenance: Vec<Provenance>,
}

/// Nonparametric cloned policy: weighted k-nearest-neighbor regression on
/// z-scored observation features.
#[derive(Debug, Clone)]
pub struct PolicyModel {
    data: ModelData,
    /// Columns that vary across rows; the others add the same term to every
    /// distance and are left out of the search.
    active: Vec<usize>,
    /// Normalized rows restricted to `active` columns.
    normalized: Vec<f64>,
    /// Normalized value shared by every row in each constant column.
    constant: Vec<(usize, f64)>,
    tree: KdTree,
}

/// Row sample for [`PolicyModel::fit_rows`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingRow {
    pub features: Vec<f64>,
    pub action: DeltaAction,
    pub provenance: Provenance,
}

impl PolicyModel {
    pub fn fit(dataset: &Dataset, config: &FitConfig) -> Result<PolicyModel, FitError> {
        let layout = FeatureLayout::for_task(&dataset.task);
        let mut rows = Vec::with_capacity(dataset.step_count());
        for (ei, e) in dataset.episodes.iter().enumerate() {
            for (si, s) in e.steps.iter().enumerate() {
                if !layout.matches(&s.obs) {
                    return Err(FitError::InconsistentLayout { episode: ei, step: si });
                }
                rows.push(TrainingRow {
                    features: layout.extract(&s.obs),
                    action: s.action,
                    provenance: e.header.provenance,
                });
            }
        }
        PolicyModel::fit_rows(layout, dataset.task.limits, rows, config)
    }

    pub fn fit_rows(
        layout: FeatureLayout,
        limits: ControllerLimits,
        rows: Vec<TrainingRow>,
        config: &FitConfig,
    ) -> Result<PolicyModel, FitError> {
        if config.k == 0 {
            return Err(FitError::InvalidK);
        }
        if rows.is_empty() {
            return Err(FitError::EmptyDataset);
        }
        let dims = layout.dims();
        let n = rows.len();
        let base = rows.iter().filter(|r| r.provenance == Provenance::Base).count();
        let other = n - base;
        let boost = match config.weights {
            WeightsMode::Balanced if base > 0 && other > 0 => base as f64 / other as f64,
            _ => 1.0,
        };
        let mut features = Vec::with_capacity(n * dims);
        let mut actions = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        let mut provenance = Vec::with_capacity(n);
        for (i, r) in rows.into_iter().enumerate() {
            if r.features.len() != dims {
                return Err(FitError::InconsistentLayout { episode: 0, step: i });
            }
            if r.features.iter().any(|v| !v.is_finite()) {
                return Err(FitError::InvalidRow(i));
            }
            features.extend_from_slice(&r.features);
            actions.push(r.action);
            weights.push(if r.provenance == Provenance::Base { 1.0 } else { boost });
            provenance.push(r.provenance);
        }
        let (mean, scale) = column_stats(&features, dims);
        PolicyModel::from_data(ModelData {
            layout,
            k: config.k,
            limits,
            mean,
            scale,
            features,
            actions,
            weights,
            provenance,
        })
    }

    /// Rebuilds the search index from stored content.
    pub fn from_data(data: ModelData) -> Result<PolicyModel, FitError> {
        let dims = data.layout.dims();
        let n = data.actions.len();
        if n == 0 {
            return Err(FitError::EmptyDataset);
        }
        if data.k == 0 {
            return Err(FitError::InvalidK);
        }
        if data.features.len() != n * dims
            || data.weights.len() != n
            || data.provenance.len() != n
            || data.mean.len() != dims
            || data.scale.len() != dims
        {
            return Err(FitError::InconsistentLayout { episode: 0, step: 0 });
        }
        if let Some(i) = data.weights.iter().position(|w| !(*w > 0.0)) {
            return Err(FitError::InvalidRow(i));
        }
        if data.scale.iter().any(|s| !(*s > 0.0)) {
            return Err(FitError::InvalidRow(0));
        }
        let mut full = data.features.clone();
        for row in full.chunks_mut(dims) {
            normalize_in_place(row, &data.mean, &data.scale);
        }
        let first = &data.features[..dims];
        let mut active: Vec<usize> =
            (0..dims).filter(|&j| data.features.chunks(dims).any(|r| r[j].to_bits() != first[j].to_bits())).collect();
        if active.is_empty() {
            active.push(0);
        }
        let constant = (0..dims).filter(|j| !active.contains(j)).map(|j| (j, full[j])).collect();
        let normalized: Vec<f64> = full.chunks(dims).flat_map(|r| active.iter().map(move |&j| r[j])).collect();
        let tree = KdTree::build(&normalized, active.len());
        Ok(PolicyModel { data, active, normalized, constant, tree })
    }

    pub fn data(&self) -> &ModelData {
        &self.data
    }

    pub fn layout(&self) -> &FeatureLayout {
        &self.data.layout
    }

    pub fn rows(&self) -> usize {
        self.data.actions.len()
    }

    pub fn k(&self) -> usize {
        self.data.k
    }

    pub fn normalize(&self, raw: &[f64]) -> Vec<f64> {
        let mut v = raw.to_vec();
        normalize_in_place(&mut v, &self.data.mean, &self.data.scale);
        v
    }

    /// Nearest training rows to `obs`, nearest first.
    pub fn neighbors(&self, obs: &Observation) -> Vec<Neighbor> {
        self.neighbors_of_row(&self.data.layout.extract(obs))
    }

    /// Nearest training rows to an unnormalized feature row.
    pub fn neighbors_of_row(&self, raw: &[f64]) -> Vec<Neighbor> {
        let q = self.normalize(raw);
        let fixed: f64 = self.constant.iter().map(|&(j, v)| (q[j] - v) * (q[j] - v)).sum();
        let reduced: Vec<f64> = self.active.iter().map(|&j| q[j]).collect();
        let mut nb = self.tree.nearest(&self.normalized, &reduced, self.data.k);
        for n in &mut nb {
            n.dist2 += fixed;
        }
        nb
    }

    /// Action for an unnormalized feature row.
    pub fn act_row(&self, raw: &[f64]) -> DeltaAction {
        self.blend(&self.neighbors_of_row(raw))
    }

    pub fn act(&self, obs: &Observation) -> DeltaAction {
        self.act_explained(obs).0
    }

    /// Action plus the neighbors it was computed from.
    pub fn act_explained(&self, obs: &Observation) -> (DeltaAction, Vec<Neighbor>) {
        let nb = self.neighbors(obs);
        (self.blend(&nb), nb)
    }

    fn blend(&self, nb: &[Neighbor]) -> DeltaAction {
        if nb.len() == 1 {
            return self.data.actions[nb[0].index].clamped(&self.data.limits).0;
        }
        let w: Vec<f64> = nb
            .iter()
            .map(|n| self.data.weights[n.index] / (libm::sqrt(n.dist2) + DISTANCE_FLOOR))
            .collect();
        let total: f64 = w.iter().sum();
        let mut translation = Vec3::ZERO;
        let mut rotation = Vec3::ZERO;
        let mut votes = [0.0f64; 3];
        for (n, wi) in nb.iter().zip(&w) {
            let a = &self.data.actions[n.index];
            let f = wi / total;
            translation += a.translation * f;
            rotation += a.rotation * f;
            votes[gripper_slot(a.gripper)] += wi;
        }
        let gripper = vote(votes);
        DeltaAction { translation, rotation, gripper }.clamped(&self.data.limits).0
    }
}

fn gripper_slot(g: GripperCommand) -> usize {
    match g {
        GripperCommand::Open => 0,
        GripperCommand::Close => 1,
        GripperCommand::Hold => 2,
    }
}

/// Weighted majority; any tie for the top goes to hold.
fn vote(v: [f64; 3]) -> GripperCommand {
    let max = v[0].max(v[1]).max(v[2]);
    let winners = v.iter().filter(|&&x| x == max).count();
    if winners > 1 || v[2] == max {
        GripperCommand::Hold
    } else if v[0] == max {
        GripperCommand::Open
    } else {
        GripperCommand::Close
    }
}

fn normalize_in_place(row: &mut [f64], mean: &[f64], scale: &[f64]) {
    for ((v, m), s) in row.iter_mut().zip(mean).zip(scale) {
        *v = (*v - m) / s;
    }
}

/// Column means and standard deviations; near-constant columns get scale 1.
fn column_stats(features: &[f64], dims: usize) -> (Vec<f64>, Vec<f64>) {
    let n = (features.len() / dims) as f64;
    let mut mean = alloc::vec![0.0; dims];
    for row in features.chunks(dims) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut var = alloc::vec![0.0; dims];
    for row in features.chunks(dims) {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
            let d = v - m;
            *s += d * d;
        }
    }
    let scale = var
        .into_iter()
        .map(|s| {
            let sd = libm::sqrt(s / n);
            if sd < 1e-12 {
                1.0
            } else {
                sd
            }
        })
        .collect();
    (mean, scale)
}
