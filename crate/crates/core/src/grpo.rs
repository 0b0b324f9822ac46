//! Group-relative advantages, top-variance group selection and the softmax
//! pool policy used as a stand-in learner.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GrpoError {
    #[error("advantage group is empty")]
    EmptyGroup,
    #[error("bad shape: {0}")]
    Shape(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvantageGroup {
    pub rewards: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub advantages: Vec<f64>,
}

/// Population mean and standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// `(r - mean) / std` with population statistics; a constant group yields
/// exact zeros.
pub fn group_advantages(rewards: &[f64]) -> Result<AdvantageGroup, GrpoError> {
    if rewards.is_empty() {
        return Err(GrpoError::EmptyGroup);
    }
    let (mean, std) = mean_std(rewards);
    let constant = rewards.iter().all(|&r| r == rewards[0]);
    let advantages = if constant || std == 0.0 {
        vec![0.0; rewards.len()]
    } else {
        rewards.iter().map(|r| (r - mean) / std).collect()
    };
    Ok(AdvantageGroup { rewards: rewards.to_vec(), mean, std: if constant { 0.0 } else { std }, advantages })
}

/// Indices of the `ell` rows with the largest population standard deviation,
/// ties to the lower index, returned in ascending order.
pub fn topvar_select(rewards: &[Vec<f64>], ell: usize) -> Result<Vec<usize>, GrpoError> {
    let m = rewards.len();
    if ell == 0 || ell > m {
        return Err(GrpoError::Shape(format!("ell={ell} with {m} groups")));
    }
    let n = rewards[0].len();
    if n == 0 || rewards.iter().any(|r| r.len() != n) {
        return Err(GrpoError::Shape("groups must be non-empty and of equal size".into()));
    }
    let stds: Vec<f64> = rewards.iter().map(|r| group_advantages(r).map(|g| g.std)).collect::<Result<_, _>>()?;
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| stds[b].total_cmp(&stds[a]).then(a.cmp(&b)));
    let mut picked = order[..ell].to_vec();
    picked.sort_unstable();
    Ok(picked)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolPolicy {
    pub arms: Vec<String>,
    pub weights: Vec<f64>,
    pub temperature: f64,
    pub rng_seed: u64,
}

impl PoolPolicy {
    pub fn new(arms: Vec<String>, temperature: f64, rng_seed: u64) -> Result<Self, GrpoError> {
        if arms.is_empty() {
            return Err(GrpoError::Shape("pool needs at least one arm".into()));
        }
        if !(temperature > 0.0) {
            return Err(GrpoError::Shape(format!("temperature must be positive, got {temperature}")));
        }
        let weights = vec![0.0; arms.len()];
        Ok(Self { arms, weights, temperature, rng_seed })
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self, GrpoError> {
        if weights.len() != self.arms.len() {
            return Err(GrpoError::Shape("one weight per arm".into()));
        }
        self.weights = weights;
        Ok(self)
    }

    pub fn probabilities(&self) -> Vec<f64> {
        let scaled: Vec<f64> = self.weights.iter().map(|w| w / self.temperature).collect();
        let max = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = scaled.iter().map(|s| (s - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        exps.iter().map(|e| e / total).collect()
    }

    /// `n` i.i.d. draws using a generator seeded with `seed`.
    pub fn sample_with_seed(&self, n: usize, seed: u64) -> Vec<(usize, String)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(n, &mut rng)
    }

    /// `n` i.i.d. draws using the policy's own seed.
    pub fn sample(&self, n: usize) -> Vec<(usize, String)> {
        self.sample_with_seed(n, self.rng_seed)
    }

    pub fn sample_with<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<(usize, String)> {
        let probs = self.probabilities();
        (0..n)
            .map(|_| {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                let mut idx = probs.len() - 1;
                for (i, p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        idx = i;
                        break;
                    }
                }
                (idx, self.arms[idx].clone())
            })
            .collect()
    }

    /// Moves only the drawn arm by `lr * advantage`, then re-centers the
    /// weights to mean zero.
    pub fn update(&mut self, drawn: usize, advantage: f64, lr: f64) {
        self.weights[drawn] += lr * advantage;
        let mean = self.weights.iter().sum::<f64>() / self.weights.len() as f64;
        for w in &mut self.weights {
            *w -= mean;
        }
    }

    pub fn arm_index(&self, text: &str) -> Option<usize> {
        self.arms.iter().position(|a| a == text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_group_has_zero_advantages() {
        let g = group_advantages(&[1.0; 4]).unwrap();
        assert_eq!(g.advantages, vec![0.0; 4]);
        assert_eq!(g.std, 0.0);
        assert_eq!(group_advantages(&[]), Err(GrpoError::EmptyGroup));
    }

    #[test]
    fn two_point_group() {
        assert_eq!(group_advantages(&[0.0, 1.0]).unwrap().advantages, vec![-1.0, 1.0]);
    }

    #[test]
    fn topvar_examples() {
        let rows = |stds: &[f64]| -> Vec<Vec<f64>> { stds.iter().map(|s| vec![-s, *s]).collect() };
        assert_eq!(topvar_select(&rows(&[0.1, 0.3, 0.0, 0.2]), 2).unwrap(), vec![1, 3]);
        assert_eq!(topvar_select(&vec![vec![0.5; 3]; 4], 1).unwrap(), vec![0]);
        assert!(topvar_select(&rows(&[0.1]), 2).is_err());
    }

    #[test]
    fn sampling_is_symmetric_and_saturates() {
        let p = PoolPolicy::new(vec!["a".into(), "b".into()], 1.0, 7).unwrap();
        let zeros = p.sample(1000).iter().filter(|(i, _)| *i == 0).count();
        assert!((440..=560).contains(&zeros), "{zeros}");
        let p = p.with_weights(vec![10.0, -10.0]).unwrap();
        assert!(p.probabilities()[0] > 0.999);
    }

    #[test]
    fn update_moves_only_drawn_arm() {
        let mut p = PoolPolicy::new(vec!["a".into(), "b".into(), "c".into()], 1.0, 0).unwrap();
        p.update(0, 0.0, 0.1);
        assert_eq!(p.weights, vec![0.0; 3]);
        let before = p.probabilities()[0];
        p.update(0, 1.0, 0.1);
        assert!(p.probabilities()[0] > before);
        assert!(p.weights.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn repeated_positive_advantage_concentrates() {
        let mut p = PoolPolicy::new(vec!["a".into(), "b".into()], 1.0, 0).unwrap();
        // Independent recurrence: the weight gap grows by lr per step.
        let mut gap: f64 = 0.0;
        for _ in 0..50 {
            p.update(0, 1.0, 0.1);
            gap += 0.1;
        }
        let oracle = 1.0 / (1.0 + (-gap).exp());
        assert!((p.probabilities()[0] - oracle).abs() < 1e-12);
        assert!(p.probabilities()[0] > 0.99);
    }
}
