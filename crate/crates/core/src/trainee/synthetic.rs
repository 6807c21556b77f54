//! Quadratic student-teacher trainee.
//!
//! Each bin k is a linear regression task `y = x . target_k + sigma_k * noise` with
//! `x ~ N(0, I_d)`. All targets are unit vectors; every non-zero bin's target has
//! cosine `relatedness` with the bin-0 target, so training on bin k moves the
//! student partly toward the bin-0 solution. The student is a parameter vector
//! trained with plain mini-batch SGD on squared error.

use rand::Rng;
use rand_distr::StandardNormal;

use super::{check_bin, Trainee, TraineeCheckpoint};
use crate::config::{ConfigErrors, SyntheticTraineeSpec};
use crate::container::{format, put_f64s, Reader};
use crate::error::{Error, Result};
use crate::rng::{seeded_rng, RngState, Stream};
use crate::types::{BinId, SampleRef};

/// Samples stored row-major: `xs[i * dim .. (i + 1) * dim]` pairs with `ys[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub dim: usize,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

impl Dataset {
    pub fn from_rows(rows: &[Vec<f64>], ys: Vec<f64>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.len() != ys.len() || rows.iter().any(|r| r.len() != dim) || dim == 0 {
            return Err(Error::InvalidArgument("ragged dataset".into()));
        }
        Ok(Self {
            dim,
            xs: rows.concat(),
            ys,
        })
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.xs[i * self.dim..(i + 1) * self.dim]
    }

    fn residual(&self, i: usize, theta: &[f64]) -> f64 {
        dot(self.x(i), theta) - self.ys[i]
    }

    fn mean_loss(&self, theta: &[f64]) -> f64 {
        let total: f64 = (0..self.len()).map(|i| self.residual(i, theta).powi(2)).sum();
        total / self.len() as f64
    }

    fn generate(rng: &mut Stream, n: usize, target: &[f64], sigma: f64) -> Self {
        let dim = target.len();
        let mut xs = Vec::with_capacity(n * dim);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            let start = xs.len();
            xs.extend((0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)));
            let noise: f64 = rng.sample(StandardNormal);
            ys.push(dot(&xs[start..], target) + sigma * noise);
        }
        Self { dim, xs, ys }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Unit targets: bin 0 is `e0`, bin k is `rho * e0 + sqrt(1 - rho^2) * e_k`, where
/// `e_0..e_{n-1}` are Gram-Schmidt orthonormalised Gaussian draws.
fn make_targets(rng: &mut Stream, dim: usize, n_bins: usize, rho: f64) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n_bins);
    while basis.len() < n_bins {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        for e in &basis {
            let c = dot(&v, e);
            v.iter_mut().zip(e).for_each(|(vi, ei)| *vi -= c * ei);
        }
        let norm = dot(&v, &v).sqrt();
        // A degenerate draw is astronomically unlikely; redraw if it happens.
        if norm > 1e-8 {
            v.iter_mut().for_each(|vi| *vi /= norm);
            basis.push(v);
        }
    }
    let ortho = (1.0 - rho * rho).max(0.0).sqrt();
    let e0 = basis[0].clone();
    let mut targets = vec![e0.clone()];
    for e in &basis[1..] {
        targets.push(e0.iter().zip(e).map(|(a, b)| rho * a + ortho * b).collect());
    }
    targets
}

#[derive(Debug, Clone)]
pub struct SyntheticTrainee {
    learning_rate: f64,
    batch_size: usize,
    targets: Vec<Vec<f64>>,
    bins: Vec<Dataset>,
    validation: Dataset,
    theta: Vec<f64>,
    steps: u64,
    rng: Stream,
}

impl SyntheticTrainee {
    pub fn new(spec: &SyntheticTraineeSpec, seed: u64) -> Result<Self> {
        let errs = spec.check();
        if !errs.is_empty() {
            return Err(ConfigErrors(errs).into());
        }
        let mut gen = seeded_rng(seed, "trainee");
        let targets = make_targets(&mut gen, spec.dim, spec.n_bins(), spec.relatedness);
        let bins = targets
            .iter()
            .zip(&spec.samples_per_bin)
            .zip(&spec.noise_sigma)
            .map(|((t, &n), &sigma)| Dataset::generate(&mut gen, n, t, sigma))
            .collect();
        let validation =
            Dataset::generate(&mut gen, spec.validation_size, &targets[0], spec.noise_sigma[0]);
        Ok(Self {
            learning_rate: spec.learning_rate,
            batch_size: spec.batch_size,
            targets,
            bins,
            validation,
            theta: vec![0.0; spec.dim],
            steps: 0,
            rng: seeded_rng(seed, "trainee/batches"),
        })
    }

    /// Assemble a trainee from explicit data. `targets` are informational only.
    pub fn from_parts(
        targets: Vec<Vec<f64>>,
        bins: Vec<Dataset>,
        validation: Dataset,
        learning_rate: f64,
        batch_size: usize,
        seed: u64,
    ) -> Result<Self> {
        let dim = validation.dim;
        if bins.is_empty() || bins.iter().any(|b| b.dim != dim || b.is_empty()) {
            return Err(Error::InvalidArgument(
                "bins must be non-empty and share the validation dimension".into(),
            ));
        }
        if batch_size == 0 || validation.is_empty() {
            return Err(Error::InvalidArgument("sizes must be >= 1".into()));
        }
        Ok(Self {
            learning_rate,
            batch_size,
            targets,
            bins,
            validation,
            theta: vec![0.0; dim],
            steps: 0,
            rng: seeded_rng(seed, "trainee/batches"),
        })
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn set_theta(&mut self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.theta.len() {
            return Err(Error::Dimension {
                expected: self.theta.len(),
                found: theta.len(),
            });
        }
        self.theta.copy_from_slice(theta);
        Ok(())
    }

    pub fn targets(&self) -> &[Vec<f64>] {
        &self.targets
    }

    pub fn dataset(&self, bin: BinId) -> Option<&Dataset> {
        self.bins.get(bin.index())
    }

    pub fn validation_set(&self) -> &Dataset {
        &self.validation
    }

    /// Mean squared error of `theta` over `samples`, and its gradient.
    pub fn loss_and_gradient(&self, theta: &[f64], samples: &[SampleRef]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; theta.len()];
        let mut loss = 0.0;
        for s in samples {
            let data = &self.bins[s.bin.index()];
            let r = data.residual(s.index, theta);
            loss += r * r;
            grad.iter_mut()
                .zip(data.x(s.index))
                .for_each(|(g, x)| *g += 2.0 * r * x);
        }
        let n = samples.len().max(1) as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        (loss / n, grad)
    }

    pub fn mean_loss(&self, theta: &[f64], samples: &[SampleRef]) -> f64 {
        let total: f64 = samples
            .iter()
            .map(|s| self.bins[s.bin.index()].residual(s.index, theta).powi(2))
            .sum();
        total / samples.len().max(1) as f64
    }

    fn encode_payload(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 8 * self.theta.len() + RngState::ENCODED_LEN);
        out.extend_from_slice(&(self.theta.len() as u64).to_le_bytes());
        put_f64s(&mut out, &self.theta);
        RngState::capture(&self.rng).write_to(&mut out);
        out
    }
}

impl Trainee for SyntheticTrainee {
    fn n_bins(&self) -> usize {
        self.bins.len()
    }

    fn bin_sizes(&self) -> Vec<usize> {
        self.bins.iter().map(Dataset::len).collect()
    }

    fn train_step(&mut self, bin: BinId) -> Result<f64> {
        check_bin(bin, self.bins.len())?;
        let n = self.bins[bin.index()].len();
        let batch: Vec<SampleRef> = (0..self.batch_size)
            .map(|_| SampleRef {
                bin,
                index: self.rng.random_range(0..n),
            })
            .collect();
        let (loss, grad) = self.loss_and_gradient(&self.theta, &batch);
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("synthetic trainee gradient"));
        }
        let lr = self.learning_rate;
        self.theta.iter_mut().zip(&grad).for_each(|(t, g)| *t -= lr * g);
        self.steps += 1;
        Ok(loss)
    }

    fn validation_perplexity(&mut self) -> Result<f64> {
        let ppl = self.validation.mean_loss(&self.theta).exp();
        if ppl.is_finite() {
            Ok(ppl)
        } else {
            Err(Error::NonFinite("validation perplexity"))
        }
    }

    fn score_samples(&mut self, samples: &[SampleRef]) -> Result<Vec<f64>> {
        samples
            .iter()
            .map(|s| {
                check_bin(s.bin, self.bins.len())?;
                let data = &self.bins[s.bin.index()];
                if s.index >= data.len() {
                    return Err(Error::InvalidArgument(format!(
                        "sample {} out of range for {} ({} samples)",
                        s.index,
                        s.bin,
                        data.len()
                    )));
                }
                Ok(-data.residual(s.index, &self.theta).powi(2))
            })
            .collect()
    }

    fn checkpoint(&mut self) -> Result<TraineeCheckpoint> {
        Ok(TraineeCheckpoint {
            format_version: format::SYNTHETIC_TRAINEE,
            step: self.steps,
            payload: self.encode_payload(),
        })
    }

    fn restore(&mut self, cp: &TraineeCheckpoint) -> Result<()> {
        cp.expect_version(format::SYNTHETIC_TRAINEE)?;
        let mut r = Reader::new(&cp.payload);
        let dim = r.u64()? as usize;
        if dim != self.theta.len() {
            return Err(Error::Corrupt(format!(
                "checkpoint has dim {dim}, trainee has {}",
                self.theta.len()
            )));
        }
        let theta = r.f64s(dim)?;
        let rng = RngState::read_from(r.take(RngState::ENCODED_LEN)?)?;
        r.finish()?;
        self.theta = theta;
        self.rng = rng.restore();
        self.steps = cp.step;
        Ok(())
    }

    fn steps_taken(&self) -> u64 {
        self.steps
    }
}
