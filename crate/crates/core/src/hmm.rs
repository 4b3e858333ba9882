//! Window-level transition optimization with a discrete HMM.
//!
//! Hidden states are true activities, observations are the classifier's
//! argmax predictions. Naming follows the activity-recognition convention
//! used throughout this crate: `emission[y][x] = P(predicted x | true y)` and
//! `transition[i][j] = P(state j at t | state i at t−1)`.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HmmParams {
    pub start: Array1<f64>,
    pub emission: Array2<f64>,
    pub transition: Array2<f64>,
}

impl HmmParams {
    pub fn num_states(&self) -> usize {
        self.start.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.num_states();
        if k == 0 || self.emission.dim() != (k, k) || self.transition.dim() != (k, k) {
            return Err(Error::shape("hmm parameters", format!("{k} states, square {k}×{k}"), format!("{:?} / {:?}", self.emission.dim(), self.transition.dim())));
        }
        let all = self.start.iter().chain(self.emission.iter()).chain(self.transition.iter());
        if all.clone().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::Param("hmm probabilities must be positive and finite".into()));
        }
        let close = |s: f64| (s - 1.0).abs() < 1e-9;
        if !close(self.start.sum())
            || !self.emission.sum_axis(Axis(1)).iter().all(|&s| close(s))
            || !self.transition.sum_axis(Axis(1)).iter().all(|&s| close(s))
        {
            return Err(Error::Param("hmm distributions must sum to one".into()));
        }
        Ok(())
    }

    /// Log joint probability of a state path and the observations.
    pub fn path_log_prob(&self, states: &[usize], obs: &[usize]) -> f64 {
        let mut lp = 0.0;
        for (t, (&s, &o)) in states.iter().zip(obs).enumerate() {
            lp += if t == 0 {
                self.start[s].ln()
            } else {
                self.transition[[states[t - 1], s]].ln()
            };
            lp += self.emission[[s, o]].ln();
        }
        lp
    }
}

/// Laplace-smoothed counts accumulated over one or more labeled sequences.
#[derive(Clone, Debug)]
pub struct HmmCounts {
    start: Array1<f64>,
    emission: Array2<f64>,
    transition: Array2<f64>,
}

impl HmmCounts {
    pub fn new(num_states: usize) -> Self {
        Self {
            start: Array1::zeros(num_states),
            emission: Array2::zeros((num_states, num_states)),
            transition: Array2::zeros((num_states, num_states)),
        }
    }

    /// Adds one sequence. `start` counts every truth label (unigram
    /// frequencies), not only the first of each sequence.
    pub fn add_sequence(&mut self, preds: &[usize], truths: &[usize]) -> Result<()> {
        if preds.len() != truths.len() {
            return Err(Error::LengthMismatch { left: preds.len(), right: truths.len() });
        }
        let k = self.start.len();
        if preds.iter().chain(truths).any(|&c| c >= k) {
            return Err(Error::Param(format!("class id out of range for {k} states")));
        }
        for (t, (&p, &y)) in preds.iter().zip(truths).enumerate() {
            self.start[y] += 1.0;
            self.emission[[y, p]] += 1.0;
            if t > 0 {
                self.transition[[truths[t - 1], y]] += 1.0;
            }
        }
        Ok(())
    }

    pub fn finish(&self, alpha: f64) -> Result<HmmParams> {
        if !(alpha > 0.0) {
            return Err(Error::Param(format!("Laplace pseudo-count {alpha} must be > 0")));
        }
        if self.start.sum() == 0.0 {
            return Err(Error::EmptyInput("no labeled windows to fit"));
        }
        let start = (&self.start + alpha) / (self.start.sum() + alpha * self.start.len() as f64);
        let rows = |m: &Array2<f64>| {
            let s = m + alpha;
            let totals = s.sum_axis(Axis(1)).insert_axis(Axis(1));
            s / &totals
        };
        Ok(HmmParams {
            start,
            emission: rows(&self.emission),
            transition: rows(&self.transition),
        })
    }
}

pub fn fit(preds: &[usize], truths: &[usize], num_states: usize, alpha: f64) -> Result<HmmParams> {
    if preds.len() != truths.len() {
        return Err(Error::LengthMismatch { left: preds.len(), right: truths.len() });
    }
    if preds.len() < 2 {
        return Err(Error::EmptyInput("fitting needs at least two windows"));
    }
    let mut counts = HmmCounts::new(num_states);
    counts.add_sequence(preds, truths)?;
    counts.finish(alpha)
}

/// One step of the normalized forward recursion.
pub fn forward_filter(params: &HmmParams, obs: usize, previous: Option<&[f64]>) -> Result<Vec<f64>> {
    let k = params.num_states();
    if obs >= k {
        return Err(Error::Param(format!("observation {obs} out of range for {k} states")));
    }
    let mut post: Vec<f64> = match previous {
        None => (0..k).map(|j| params.start[j] * params.emission[[j, obs]]).collect(),
        Some(prev) => {
            if prev.len() != k {
                return Err(Error::LengthMismatch { left: prev.len(), right: k });
            }
            (0..k)
                .map(|j| {
                    let predicted: f64 = (0..k).map(|i| prev[i] * params.transition[[i, j]]).sum();
                    params.emission[[j, obs]] * predicted
                })
                .collect()
        }
    };
    let total: f64 = post.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::Numeric("forward filter lost all probability mass".into()));
    }
    for v in &mut post {
        *v /= total;
    }
    Ok(post)
}

/// Filtered posteriors for a whole observation sequence.
pub fn filter_sequence(params: &HmmParams, obs: &[usize]) -> Result<Vec<Vec<f64>>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(obs.len());
    for &o in obs {
        let next = forward_filter(params, o, out.last().map(|v| v.as_slice()))?;
        out.push(next);
    }
    Ok(out)
}

/// Most likely state path in log space; ties go to the lower class id.
pub fn viterbi(params: &HmmParams, obs: &[usize]) -> Result<Vec<usize>> {
    let k = params.num_states();
    if obs.is_empty() {
        return Ok(Vec::new());
    }
    if let Some(&bad) = obs.iter().find(|&&o| o >= k) {
        return Err(Error::Param(format!("observation {bad} out of range for {k} states")));
    }
    let log_b = params.transition.mapv(f64::ln);
    let log_a = params.emission.mapv(f64::ln);
    let mut score: Vec<f64> = (0..k).map(|j| params.start[j].ln() + log_a[[j, obs[0]]]).collect();
    let mut back = vec![vec![0usize; k]; obs.len()];
    for t in 1..obs.len() {
        let mut next = vec![f64::NEG_INFINITY; k];
        for j in 0..k {
            let (mut best_i, mut best) = (0, f64::NEG_INFINITY);
            for i in 0..k {
                let s = score[i] + log_b[[i, j]];
                if s > best {
                    best = s;
                    best_i = i;
                }
            }
            next[j] = best + log_a[[j, obs[t]]];
            back[t][j] = best_i;
        }
        score = next;
    }
    let mut state = argmax(&score);
    let mut path = vec![0; obs.len()];
    for t in (0..obs.len()).rev() {
        path[t] = state;
        state = back[t][state];
    }
    Ok(path)
}

/// Index of the first maximum.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
