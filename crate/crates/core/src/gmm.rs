//! Diagonal-covariance Gaussian mixtures, fitted with EM, and the tokenizer that
//! replaces each frame by the mean of its best-scoring component.
//!
//! All scoring happens in the log domain; at 40 dimensions the linear-domain
//! densities underflow.

use std::f64::consts::PI;

use log::{debug, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Matrix;

pub const VARIANCE_FLOOR: f64 = 1e-6;
pub const DEFAULT_COMPONENTS: usize = 128;

/// A component whose responsibility mass falls below this is considered empty.
const EMPTY_MASS: f64 = 1e-12;

/// `ln N(x; mean, diag(variance))`.
pub fn gaussian_logpdf(x: &[f64], mean: &[f64], variance: &[f64]) -> Result<f64> {
    if x.len() != mean.len() || x.len() != variance.len() {
        return Err(Error::Shape(format!(
            "logpdf of a {}-vector against a {}-dim mean and {}-dim variance",
            x.len(),
            mean.len(),
            variance.len()
        )));
    }
    if let Some(v) = variance.iter().find(|v| !(**v >= VARIANCE_FLOOR)) {
        return Err(Error::Parameter(format!(
            "variance {v} is below the floor {VARIANCE_FLOOR}"
        )));
    }
    let mut log_det = 0.0;
    let mut maha = 0.0;
    for ((xd, md), vd) in x.iter().zip(mean).zip(variance) {
        log_det += vd.ln();
        maha += (xd - md) * (xd - md) / vd;
    }
    Ok(-0.5 * (x.len() as f64 * (2.0 * PI).ln() + log_det + maha))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Covariance {
    #[default]
    Diag,
    /// Accepted by the parser but not implemented.
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GmmConfig {
    pub max_iters: usize,
    /// Stop when the relative log-likelihood improvement drops below this.
    pub tol: f64,
    pub seed: u64,
    pub kmeans_iters: usize,
    pub covariance: Covariance,
}

impl Default for GmmConfig {
    fn default() -> Self {
        Self {
            max_iters: 100,
            tol: 1e-6,
            seed: 0,
            kmeans_iters: 10,
            covariance: Covariance::Diag,
        }
    }
}

impl GmmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.covariance == Covariance::Full {
            return Err(Error::Config(
                "full covariance is not supported; use diag".into(),
            ));
        }
        if !(self.tol >= 0.0 && self.tol.is_finite()) {
            return Err(Error::Config(format!(
                "tolerance must be nonnegative, got {}",
                self.tol
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    weights: Vec<f64>,
    means: Matrix,
    variances: Matrix,
    target_speaker_id: String,
}

impl GmmModel {
    pub fn new(
        weights: Vec<f64>,
        means: Matrix,
        variances: Matrix,
        target_speaker_id: impl Into<String>,
    ) -> Result<Self> {
        let k = weights.len();
        if k == 0 {
            return Err(Error::Parameter(
                "a mixture needs at least one component".into(),
            ));
        }
        if means.rows() != k || variances.shape() != means.shape() || means.cols() == 0 {
            return Err(Error::Shape(format!(
                "{k} weights with means {:?} and variances {:?}",
                means.shape(),
                variances.shape()
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::Parameter(
                "mixture weights must be finite and nonnegative".into(),
            ));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Parameter(format!(
                "mixture weights sum to {sum}, not 1"
            )));
        }
        if !means.is_finite() {
            return Err(Error::Parameter("non-finite mixture mean".into()));
        }
        if variances
            .as_slice()
            .iter()
            .any(|v| !(*v >= VARIANCE_FLOOR && v.is_finite()))
        {
            return Err(Error::Parameter(format!(
                "mixture variances must be finite and at least {VARIANCE_FLOOR}"
            )));
        }
        Ok(Self {
            weights,
            means,
            variances,
            target_speaker_id: target_speaker_id.into(),
        })
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.means.cols()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &Matrix {
        &self.means
    }

    pub fn variances(&self) -> &Matrix {
        &self.variances
    }

    pub fn target_speaker_id(&self) -> &str {
        &self.target_speaker_id
    }

    pub fn set_target_speaker_id(&mut self, id: impl Into<String>) {
        self.target_speaker_id = id.into();
    }

    fn scorer(&self) -> Scorer<'_> {
        Scorer::new(&self.weights, &self.means, &self.variances)
    }

    fn check_dim(&self, frames: &Matrix) -> Result<()> {
        if frames.cols() != self.feature_dim() {
            return Err(Error::Shape(format!(
                "frames have {} columns, mixture expects {}",
                frames.cols(),
                self.feature_dim()
            )));
        }
        Ok(())
    }

    /// `ln Σ_i w_i g(x | μ_i, Σ_i)` for every frame.
    pub fn frame_log_likelihoods(&self, frames: &Matrix) -> Result<Vec<f64>> {
        self.check_dim(frames)?;
        let scorer = self.scorer();
        let mut joint = vec![0.0; self.components()];
        Ok(frames
            .row_iter()
            .map(|x| {
                scorer.joint(x, &mut joint);
                log_sum_exp(&joint)
            })
            .collect())
    }

    pub fn mean_log_likelihood(&self, frames: &Matrix) -> Result<f64> {
        let ll = self.frame_log_likelihoods(frames)?;
        if ll.is_empty() {
            return Err(Error::Data("cannot score an empty frame set".into()));
        }
        Ok(ll.iter().sum::<f64>() / ll.len() as f64)
    }
}

/// Per-component constants for log-domain scoring.
struct Scorer<'a> {
    means: &'a Matrix,
    inv_var: Vec<f64>,
    /// `ln w_i − ½(D ln 2π + Σ_d ln σ²_id)`.
    constant: Vec<f64>,
}

impl<'a> Scorer<'a> {
    fn new(weights: &[f64], means: &'a Matrix, variances: &Matrix) -> Self {
        let d = means.cols() as f64;
        let inv_var = variances.as_slice().iter().map(|v| 1.0 / v).collect();
        let constant = weights
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let log_det: f64 = variances.row(i).iter().map(|v| v.ln()).sum();
                w.ln() - 0.5 * (d * (2.0 * PI).ln() + log_det)
            })
            .collect();
        Self {
            means,
            inv_var,
            constant,
        }
    }

    /// Writes `ln w_i + ln g(x | i)` for every component into `out`.
    fn joint(&self, x: &[f64], out: &mut [f64]) {
        let dim = x.len();
        for (i, o) in out.iter_mut().enumerate() {
            let mean = self.means.row(i);
            let iv = &self.inv_var[i * dim..(i + 1) * dim];
            let mut maha = 0.0;
            for d in 0..dim {
                let diff = x[d] - mean[d];
                maha += diff * diff * iv[d];
            }
            *o = self.constant[i] - 0.5 * maha;
        }
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Index of the largest value; the lowest index wins ties.
fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Replaces every frame by the mean of the component maximizing `ln w_i + ln g(x | i)`.
pub fn gmm_tokenize(model: &GmmModel, frames: &Matrix) -> Result<(Matrix, Vec<usize>)> {
    model.check_dim(frames)?;
    let scorer = model.scorer();
    let mut joint = vec![0.0; model.components()];
    let mut out = Matrix::zeros(frames.rows(), model.feature_dim());
    let mut indices = Vec::with_capacity(frames.rows());
    for (r, x) in frames.row_iter().enumerate() {
        scorer.joint(x, &mut joint);
        let best = argmax(&joint);
        out.row_mut(r).copy_from_slice(model.means.row(best));
        indices.push(best);
    }
    Ok((out, indices))
}

/// Fits a `components`-mixture to `frames`.
///
/// Returns the model and the total data log-likelihood of every parameter set
/// visited, starting with the k-means initialization; the last entry belongs to
/// the returned model.
pub fn gmm_fit(
    frames: &Matrix,
    components: usize,
    config: &GmmConfig,
) -> Result<(GmmModel, Vec<f64>)> {
    config.validate()?;
    let (n, dim) = frames.shape();
    if components == 0 {
        return Err(Error::Config("need at least one mixture component".into()));
    }
    if n < components {
        return Err(Error::Data(format!(
            "{n} frames cannot support {components} mixture components"
        )));
    }
    if dim == 0 || !frames.is_finite() {
        return Err(Error::Data(
            "mixture training frames must be finite and non-empty".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut centers = kmeans_plus_plus(frames, components, &mut rng);
    let assignment = lloyd(frames, &mut centers, config.kmeans_iters);
    let (mut weights, mut variances) = initial_spread(frames, &centers, &assignment);
    let mut means = centers;
    let global_var = floored(frames.column_variances());

    let mut trace = Vec::new();
    let mut resp = Matrix::zeros(n, components);
    for iter in 0..=config.max_iters {
        let ll = e_step(frames, &weights, &means, &variances, &mut resp);
        if !ll.is_finite() {
            return Err(Error::Training(format!(
                "non-finite mixture log-likelihood at iteration {iter}"
            )));
        }
        debug!("EM iteration {iter}: log-likelihood {ll:.6}");
        let prev = trace.last().copied();
        trace.push(ll);
        if iter == config.max_iters {
            break;
        }
        if let Some(p) = prev {
            if (ll - p) / p.abs().max(f64::MIN_POSITIVE) < config.tol {
                break;
            }
        }
        m_step(
            frames,
            &resp,
            &mut weights,
            &mut means,
            &mut variances,
            &global_var,
        );
    }
    let model = GmmModel::new(weights, means, variances, String::new())?;
    Ok((model, trace))
}

fn floored(mut v: Vec<f64>) -> Vec<f64> {
    for x in &mut v {
        *x = x.max(VARIANCE_FLOOR);
    }
    v
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Seeds centers with probability proportional to squared distance from the nearest chosen one.
fn kmeans_plus_plus(frames: &Matrix, k: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let n = frames.rows();
    let mut centers = Matrix::zeros(k, frames.cols());
    let first = rng.random_range(0..n);
    centers.row_mut(0).copy_from_slice(frames.row(first));
    let mut dist: Vec<f64> = frames
        .row_iter()
        .map(|x| sq_dist(x, frames.row(first)))
        .collect();
    for c in 1..k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random_range(0.0..total);
            let mut chosen = n - 1;
            for (i, d) in dist.iter().enumerate() {
                if u < *d {
                    chosen = i;
                    break;
                }
                u -= d;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.row_mut(c).copy_from_slice(frames.row(pick));
        for (i, x) in frames.row_iter().enumerate() {
            dist[i] = dist[i].min(sq_dist(x, centers.row(c)));
        }
    }
    centers
}

fn nearest(x: &[f64], centers: &Matrix) -> usize {
    let d: Vec<f64> = centers.row_iter().map(|c| -sq_dist(x, c)).collect();
    argmax(&d)
}

/// Lloyd refinement. Empty clusters keep their previous center.
fn lloyd(frames: &Matrix, centers: &mut Matrix, iters: usize) -> Vec<usize> {
    let (k, dim) = centers.shape();
    let mut assignment: Vec<usize> = frames.row_iter().map(|x| nearest(x, centers)).collect();
    for _ in 0..iters {
        let mut sums = Matrix::zeros(k, dim);
        let mut counts = vec![0usize; k];
        for (x, &a) in frames.row_iter().zip(&assignment) {
            counts[a] += 1;
            for (s, v) in sums.row_mut(a).iter_mut().zip(x) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                for (dst, s) in centers.row_mut(c).iter_mut().zip(sums.row(c)) {
                    *dst = s * inv;
                }
            }
        }
        let next: Vec<usize> = frames.row_iter().map(|x| nearest(x, centers)).collect();
        if next == assignment {
            break;
        }
        assignment = next;
    }
    assignment
}

/// Weights and per-cluster variances from a hard assignment. Clusters with fewer
/// than two points borrow the global variance.
fn initial_spread(frames: &Matrix, centers: &Matrix, assignment: &[usize]) -> (Vec<f64>, Matrix) {
    let (k, dim) = centers.shape();
    let n = frames.rows() as f64;
    let global = floored(frames.column_variances());
    let mut counts = vec![0usize; k];
    let mut var = Matrix::zeros(k, dim);
    for (x, &a) in frames.row_iter().zip(assignment) {
        counts[a] += 1;
        let mean = centers.row(a);
        for (d, v) in var.row_mut(a).iter_mut().enumerate() {
            *v += (x[d] - mean[d]) * (x[d] - mean[d]);
        }
    }
    for c in 0..k {
        if counts[c] >= 2 {
            let inv = 1.0 / counts[c] as f64;
            for v in var.row_mut(c) {
                *v = (*v * inv).max(VARIANCE_FLOOR);
            }
        } else {
            var.row_mut(c).copy_from_slice(&global);
        }
    }
    let mut weights: Vec<f64> = counts.iter().map(|&c| (c as f64).max(1.0) / n).collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    (weights, var)
}

/// Fills `resp` with posteriors and returns the total log-likelihood.
fn e_step(
    frames: &Matrix,
    weights: &[f64],
    means: &Matrix,
    variances: &Matrix,
    resp: &mut Matrix,
) -> f64 {
    let scorer = Scorer::new(weights, means, variances);
    let mut total = 0.0;
    for (r, x) in frames.row_iter().enumerate() {
        let row = resp.row_mut(r);
        scorer.joint(x, row);
        let lse = log_sum_exp(row);
        for v in row.iter_mut() {
            *v = (*v - lse).exp();
        }
        total += lse;
    }
    total
}

fn m_step(
    frames: &Matrix,
    resp: &Matrix,
    weights: &mut [f64],
    means: &mut Matrix,
    variances: &mut Matrix,
    global_var: &[f64],
) {
    let (n, dim) = frames.shape();
    let k = weights.len();
    let mut mass = vec![0.0; k];
    let mut sums = Matrix::zeros(k, dim);
    for (x, r) in frames.row_iter().zip(resp.row_iter()) {
        for c in 0..k {
            let g = r[c];
            if g == 0.0 {
                continue;
            }
            mass[c] += g;
            for (s, v) in sums.row_mut(c).iter_mut().zip(x) {
                *s += g * v;
            }
        }
    }
    let mut empty = Vec::new();
    for c in 0..k {
        if mass[c] < EMPTY_MASS {
            empty.push(c);
            continue;
        }
        let inv = 1.0 / mass[c];
        for (m, s) in means.row_mut(c).iter_mut().zip(sums.row(c)) {
            *m = s * inv;
        }
    }
    let mut sq = Matrix::zeros(k, dim);
    for (x, r) in frames.row_iter().zip(resp.row_iter()) {
        for c in 0..k {
            let g = r[c];
            if g == 0.0 || mass[c] < EMPTY_MASS {
                continue;
            }
            let mean = means.row(c);
            for (d, s) in sq.row_mut(c).iter_mut().enumerate() {
                let diff = x[d] - mean[d];
                *s += g * diff * diff;
            }
        }
    }
    for c in 0..k {
        if mass[c] < EMPTY_MASS {
            continue;
        }
        let inv = 1.0 / mass[c];
        for (v, s) in variances.row_mut(c).iter_mut().zip(sq.row(c)) {
            *v = (s * inv).max(VARIANCE_FLOOR);
        }
        weights[c] = mass[c] / n as f64;
    }
    if !empty.is_empty() {
        reinitialize(frames, &empty, weights, means, variances, global_var);
    }
}

/// Moves each empty component onto the frame with the lowest likelihood under the
/// surviving components, with the global variance and a small weight.
fn reinitialize(
    frames: &Matrix,
    empty: &[usize],
    weights: &mut [f64],
    means: &mut Matrix,
    variances: &mut Matrix,
    global_var: &[f64],
) {
    let n = frames.rows() as f64;
    let mut live_w = weights.to_vec();
    for &c in empty {
        live_w[c] = 0.0;
    }
    let scorer = Scorer::new(&live_w, means, variances);
    let mut joint = vec![0.0; weights.len()];
    let mut scores: Vec<(f64, usize)> = frames
        .row_iter()
        .enumerate()
        .map(|(i, x)| {
            scorer.joint(x, &mut joint);
            (log_sum_exp(&joint), i)
        })
        .collect();
    scores.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    for (slot, &c) in empty.iter().enumerate() {
        let idx = scores[slot % scores.len()].1;
        warn!("mixture component {c} lost all responsibility; reseeding it at frame {idx}");
        means.row_mut(c).copy_from_slice(frames.row(idx));
        variances.row_mut(c).copy_from_slice(global_var);
        weights[c] = 1.0 / n;
    }
    let total: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= total;
    }
}
