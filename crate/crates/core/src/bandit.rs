//! Diagonal linear upper-confidence residual policy, scored in shadow.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureVector, FEATURE_DIM};
use crate::ranker::SCORE_CAP;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BanditHyper {
    pub lambda: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub delta_max: f64,
    pub temperature: f64,
    pub top_kb: usize,
}

impl Default for BanditHyper {
    fn default() -> Self {
        BanditHyper {
            lambda: 1.0,
            gamma: 0.5,
            alpha: 1.0,
            delta_max: 0.05,
            temperature: 0.2,
            top_kb: 8,
        }
    }
}

impl BanditHyper {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.lambda,
            self.gamma,
            self.alpha,
            self.delta_max,
            self.temperature,
        ];
        if finite.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config(
                "bandit hyperparameters must be finite".into(),
            ));
        }
        if self.lambda <= 0.0 || self.temperature <= 0.0 || self.delta_max < 0.0 || self.top_kb == 0
        {
            return Err(Error::Config(
                "bandit needs lambda > 0, temperature > 0, delta_max >= 0, top_kb >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditState {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub n: Vec<u64>,
    pub hyper: BanditHyper,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShadowScore {
    pub mu: f64,
    pub uncertainty: f64,
    pub delta: f64,
    pub shadow_score: f64,
}

impl BanditState {
    pub fn new(hyper: BanditHyper) -> Self {
        BanditState {
            a: vec![hyper.lambda; FEATURE_DIM],
            b: vec![0.0; FEATURE_DIM],
            n: vec![0; FEATURE_DIM],
            hyper,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        if self.a.len() != FEATURE_DIM || self.b.len() != FEATURE_DIM || self.n.len() != FEATURE_DIM
        {
            return Err(Error::DimensionMismatch {
                expected: FEATURE_DIM,
                got: self.a.len(),
            });
        }
        if self
            .a
            .iter()
            .any(|a| !(a.is_finite() && *a >= self.hyper.lambda))
            || self.b.iter().any(|b| !b.is_finite())
        {
            return Err(Error::Schema(
                "bandit statistics must be finite with A_j >= lambda".into(),
            ));
        }
        Ok(())
    }

    pub fn theta(&self) -> Vec<f64> {
        self.a.iter().zip(&self.b).map(|(a, b)| b / a).collect()
    }

    /// Residual shadow score around the deterministic score `s0`.
    pub fn shadow_score(&self, s0: f64, features: &FeatureVector) -> ShadowScore {
        let phi = features.values();
        let mut mu = 0.0;
        let mut var = 0.0;
        for ((&a, &b), &p) in self.a.iter().zip(&self.b).zip(phi) {
            mu += b / a * p;
            var += p * p / a;
        }
        let uncertainty = var.sqrt();
        let h = &self.hyper;
        let delta = (h.gamma * (mu + h.alpha * uncertainty)).clamp(-h.delta_max, h.delta_max);
        ShadowScore {
            mu,
            uncertainty,
            delta,
            shadow_score: (s0 + delta).clamp(0.0, SCORE_CAP),
        }
    }

    /// Confidence-weighted diagonal update; a no-op unless `learnable`.
    pub fn update(
        &mut self,
        features: &FeatureVector,
        reward: f64,
        learnable: bool,
        confidence: f64,
    ) -> Result<()> {
        if !(-1.0..=1.0).contains(&reward) {
            return Err(Error::InvalidArgument(format!(
                "reward {reward} outside [-1,1]"
            )));
        }
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::InvalidArgument(format!(
                "confidence {confidence} outside [0,1]"
            )));
        }
        if !learnable {
            return Ok(());
        }
        for (j, &phi) in features.values().iter().enumerate() {
            if phi.abs() > 0.0 {
                self.a[j] += confidence * phi * phi;
                self.b[j] += confidence * reward * phi;
                self.n[j] += 1;
            }
        }
        Ok(())
    }
}

/// Softmax of `scores / temperature`, computed with the max subtracted.
pub fn target_propensities(scores: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::InvalidArgument(
            "target propensities need at least one score".into(),
        ));
    }
    if !(temperature > 0.0) {
        return Err(Error::InvalidArgument(
            "temperature must be positive".into(),
        ));
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores
        .iter()
        .map(|s| ((s - max) / temperature).exp())
        .collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// Deterministic live policy: all mass on rank 1.
pub fn behavior_propensity(rank: usize) -> f64 {
    if rank == 1 {
        1.0
    } else {
        0.0
    }
}
