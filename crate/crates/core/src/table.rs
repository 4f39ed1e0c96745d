use serde::{Deserialize, Serialize};

/// A per-stage `[s][a]` table over one agent's local space (rewards, Q-values, advantages).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalTable {
    num_states: usize,
    num_actions: usize,
    layers: Vec<Vec<f64>>,
}

impl LocalTable {
    pub fn zeros(num_states: usize, num_actions: usize, horizon: usize) -> Self {
        Self {
            num_states,
            num_actions,
            layers: vec![vec![0.0; num_states * num_actions]; horizon],
        }
    }

    pub fn from_layers(num_states: usize, num_actions: usize, layers: Vec<Vec<f64>>) -> Self {
        debug_assert!(layers.iter().all(|l| l.len() == num_states * num_actions));
        Self {
            num_states,
            num_actions,
            layers,
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn horizon(&self) -> usize {
        self.layers.len()
    }

    pub fn get(&self, h: usize, s: usize, a: usize) -> f64 {
        self.layers[h][s * self.num_actions + a]
    }

    pub fn set(&mut self, h: usize, s: usize, a: usize, value: f64) {
        self.layers[h][s * self.num_actions + a] = value;
    }

    pub fn row(&self, h: usize, s: usize) -> &[f64] {
        &self.layers[h][s * self.num_actions..(s + 1) * self.num_actions]
    }

    pub fn row_mut(&mut self, h: usize, s: usize) -> &mut [f64] {
        let na = self.num_actions;
        &mut self.layers[h][s * na..(s + 1) * na]
    }

    pub fn layer(&self, h: usize) -> &[f64] {
        &self.layers[h]
    }

    pub fn layers(&self) -> &[Vec<f64>] {
        &self.layers
    }

    pub fn same_shape(&self, other: &LocalTable) -> bool {
        self.num_states == other.num_states
            && self.num_actions == other.num_actions
            && self.layers.len() == other.layers.len()
    }

    /// `max_{s,a} |self - other|` at stage `h`.
    pub fn stage_max_abs_diff(&self, other: &LocalTable, h: usize) -> f64 {
        self.layers[h]
            .iter()
            .zip(&other.layers[h])
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &LocalTable) -> f64 {
        (0..self.horizon())
            .map(|h| self.stage_max_abs_diff(other, h))
            .fold(0.0, f64::max)
    }

    pub fn stage_max(&self, h: usize) -> f64 {
        self.layers[h].iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn all_finite(&self) -> bool {
        self.layers.iter().flatten().all(|x| x.is_finite())
    }
}
