//! Single-layer LSTM sequence classifier with backpropagation through time.
//!
//! Gate pre-activations are `z = W·[x_t; h_{t−1}] + b`, with `W` stored
//! `4H × (n + H)` row-major and gate blocks ordered input, forget, output,
//! candidate. The recurrence starts from zero hidden and cell states; the
//! class distribution is `softmax(Vᵀ h_T + c)` with `V` stored `H × n`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::landmark::SEQUENCE_LEN;
use crate::nn::{cross_entropy, cross_entropy_grad, softmax};
use crate::scalar::Real;
use crate::train::{check_class_coverage, TrainError, TrainingLog};

/// Per-step simplex tolerance for [`SequenceSample`].
pub const STEP_SUM_TOL: f64 = 1e-5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LstmError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("sequence must have {SEQUENCE_LEN} steps, found {0}")]
    WrongLength(usize),
    #[error("step {step} sums to {sum}, not 1")]
    NotNormalized { step: usize, sum: f64 },
    #[error("step {step} has a negative or non-finite entry")]
    InvalidEntry { step: usize },
}

impl From<LstmError> for TrainError {
    fn from(e: LstmError) -> Self {
        match e {
            LstmError::DimensionMismatch { expected, found } => {
                TrainError::DimensionMismatch { expected, found }
            }
            other => TrainError::DimensionMismatch {
                expected: SEQUENCE_LEN,
                found: match other {
                    LstmError::WrongLength(n) => n,
                    _ => 0,
                },
            },
        }
    }
}

/// 101 per-frame class-confidence vectors plus the video's class.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceSample<T> {
    n: usize,
    steps: Vec<T>,
    pub label: usize,
}

impl<T: Real> SequenceSample<T> {
    pub fn new(steps: &[Vec<T>], label: usize) -> Result<Self, LstmError> {
        if steps.len() != SEQUENCE_LEN {
            return Err(LstmError::WrongLength(steps.len()));
        }
        let n = steps[0].len();
        let mut flat = Vec::with_capacity(n * SEQUENCE_LEN);
        for (t, s) in steps.iter().enumerate() {
            if s.len() != n {
                return Err(LstmError::DimensionMismatch {
                    expected: n,
                    found: s.len(),
                });
            }
            if s.iter().any(|v| !(*v >= T::zero()) || !v.is_finite()) {
                return Err(LstmError::InvalidEntry { step: t });
            }
            let sum: T = s.iter().copied().sum();
            if !((sum - T::one()).abs() <= T::lit(STEP_SUM_TOL)) {
                return Err(LstmError::NotNormalized {
                    step: t,
                    sum: sum.to_f64_lossy(),
                });
            }
            flat.extend_from_slice(s);
        }
        Ok(Self {
            n,
            steps: flat,
            label,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.n
    }

    pub fn step(&self, t: usize) -> &[T] {
        &self.steps[t * self.n..(t + 1) * self.n]
    }

    /// Row-major `101 × n`.
    pub fn flat(&self) -> &[T] {
        &self.steps
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        self.steps.chunks(self.n).map(<[T]>::to_vec).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmModel<T> {
    input_dim: usize,
    hidden_dim: usize,
    /// `4H × (n + H)`, gate blocks `[i, f, o, g]`.
    pub gate_weights: Vec<T>,
    pub gate_bias: Vec<T>,
    /// `H × n`.
    pub readout_weights: Vec<T>,
    pub readout_bias: Vec<T>,
}

/// Same layout as [`LstmModel`].
#[derive(Clone, Debug, PartialEq)]
pub struct LstmGradient<T> {
    pub gate_weights: Vec<T>,
    pub gate_bias: Vec<T>,
    pub readout_weights: Vec<T>,
    pub readout_bias: Vec<T>,
}

impl<T: Real> LstmGradient<T> {
    pub fn zeros_like(m: &LstmModel<T>) -> Self {
        Self {
            gate_weights: vec![T::zero(); m.gate_weights.len()],
            gate_bias: vec![T::zero(); m.gate_bias.len()],
            readout_weights: vec![T::zero(); m.readout_weights.len()],
            readout_bias: vec![T::zero(); m.readout_bias.len()],
        }
    }

    fn clear(&mut self) {
        for v in [
            &mut self.gate_weights,
            &mut self.gate_bias,
            &mut self.readout_weights,
            &mut self.readout_bias,
        ] {
            v.iter_mut().for_each(|x| *x = T::zero());
        }
    }

    /// All entries in the order gate weights, gate bias, readout weights,
    /// readout bias.
    pub fn flat(&self) -> Vec<T> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.gate_weights);
        out.extend_from_slice(&self.gate_bias);
        out.extend_from_slice(&self.readout_weights);
        out.extend_from_slice(&self.readout_bias);
        out
    }
}

fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

impl<T: Real> LstmModel<T> {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        let cols = input_dim + hidden_dim;
        Self {
            input_dim,
            hidden_dim,
            gate_weights: vec![T::zero(); 4 * hidden_dim * cols],
            gate_bias: vec![T::zero(); 4 * hidden_dim],
            readout_weights: vec![T::zero(); hidden_dim * input_dim],
            readout_bias: vec![T::zero(); input_dim],
        }
    }

    /// Every parameter uniform in `[−scale, scale]`, drawn in layout order.
    pub fn random<R: Rng + ?Sized>(input_dim: usize, hidden_dim: usize, scale: f64, rng: &mut R) -> Self {
        let mut m = Self::zeros(input_dim, hidden_dim);
        for i in 0..m.param_count() {
            m.set_param(i, T::lit(rng.gen_range(-scale..=scale)));
        }
        m
    }

    pub fn from_parts(
        input_dim: usize,
        hidden_dim: usize,
        gate_weights: Vec<T>,
        gate_bias: Vec<T>,
        readout_weights: Vec<T>,
        readout_bias: Vec<T>,
    ) -> Result<Self, LstmError> {
        let m = Self {
            input_dim,
            hidden_dim,
            gate_weights,
            gate_bias,
            readout_weights,
            readout_bias,
        };
        let z = Self::zeros(input_dim, hidden_dim);
        for (have, want) in [
            (m.gate_weights.len(), z.gate_weights.len()),
            (m.gate_bias.len(), z.gate_bias.len()),
            (m.readout_weights.len(), z.readout_weights.len()),
            (m.readout_bias.len(), z.readout_bias.len()),
        ] {
            if have != want {
                return Err(LstmError::DimensionMismatch {
                    expected: want,
                    found: have,
                });
            }
        }
        Ok(m)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn param_count(&self) -> usize {
        self.gate_weights.len() + self.gate_bias.len() + self.readout_weights.len() + self.readout_bias.len()
    }

    fn locate(&self, mut i: usize) -> (usize, usize) {
        for (k, len) in [
            self.gate_weights.len(),
            self.gate_bias.len(),
            self.readout_weights.len(),
            self.readout_bias.len(),
        ]
        .into_iter()
        .enumerate()
        {
            if i < len {
                return (k, i);
            }
            i -= len;
        }
        panic!("parameter index out of range");
    }

    /// Parameter `i` in flat layout order (see [`LstmGradient::flat`]).
    pub fn param(&self, i: usize) -> T {
        match self.locate(i) {
            (0, j) => self.gate_weights[j],
            (1, j) => self.gate_bias[j],
            (2, j) => self.readout_weights[j],
            (_, j) => self.readout_bias[j],
        }
    }

    pub fn set_param(&mut self, i: usize, v: T) {
        let slot = match self.locate(i) {
            (0, j) => &mut self.gate_weights[j],
            (1, j) => &mut self.gate_bias[j],
            (2, j) => &mut self.readout_weights[j],
            (_, j) => &mut self.readout_bias[j],
        };
        *slot = v;
    }

    pub fn is_finite(&self) -> bool {
        self.gate_weights
            .iter()
            .chain(&self.gate_bias)
            .chain(&self.readout_weights)
            .chain(&self.readout_bias)
            .all(|v| v.is_finite())
    }

    fn check_input(&self, steps: &[T]) -> Result<usize, LstmError> {
        let n = self.input_dim;
        if steps.is_empty() || steps.len() % n != 0 {
            return Err(LstmError::DimensionMismatch {
                expected: n,
                found: steps.len(),
            });
        }
        Ok(steps.len() / n)
    }

    /// Runs the recurrence over row-major `steps` (`T × n`), recording every
    /// step's activations when `trace` is given.
    fn run(&self, steps: &[T], mut trace: Option<&mut Trace<T>>) -> Result<Vec<T>, LstmError> {
        let len = self.check_input(steps)?;
        let (n, h) = (self.input_dim, self.hidden_dim);
        let cols = n + h;
        let mut xh = vec![T::zero(); cols];
        let mut c = vec![T::zero(); h];
        let mut z = vec![T::zero(); 4 * h];
        if let Some(tr) = trace.as_deref_mut() {
            tr.reset(len, h, cols);
        }
        for t in 0..len {
            xh[..n].copy_from_slice(&steps[t * n..(t + 1) * n]);
            for (r, zr) in z.iter_mut().enumerate() {
                let row = &self.gate_weights[r * cols..(r + 1) * cols];
                let mut acc = self.gate_bias[r];
                for (&w, &v) in row.iter().zip(&xh) {
                    acc += w * v;
                }
                *zr = acc;
            }
            if let Some(tr) = trace.as_deref_mut() {
                tr.inputs[t * cols..(t + 1) * cols].copy_from_slice(&xh);
                tr.c_prev[t * h..(t + 1) * h].copy_from_slice(&c);
            }
            for j in 0..h {
                let i_g = sigmoid(z[j]);
                let f_g = sigmoid(z[h + j]);
                let o_g = sigmoid(z[2 * h + j]);
                let g_g = z[3 * h + j].tanh();
                let c_new = f_g * c[j] + i_g * g_g;
                let tc = c_new.tanh();
                c[j] = c_new;
                xh[n + j] = o_g * tc;
                if let Some(tr) = trace.as_deref_mut() {
                    let base = t * 4 * h;
                    tr.gates[base + j] = i_g;
                    tr.gates[base + h + j] = f_g;
                    tr.gates[base + 2 * h + j] = o_g;
                    tr.gates[base + 3 * h + j] = g_g;
                    tr.tanh_c[t * h + j] = tc;
                }
            }
        }
        let h_final = &xh[n..];
        if let Some(tr) = trace {
            tr.h_final.copy_from_slice(h_final);
        }
        Ok(self.readout(h_final))
    }

    fn readout(&self, h_final: &[T]) -> Vec<T> {
        let n = self.input_dim;
        let mut logits = self.readout_bias.clone();
        for (j, &hj) in h_final.iter().enumerate() {
            for (l, &w) in logits.iter_mut().zip(&self.readout_weights[j * n..(j + 1) * n]) {
                *l += w * hj;
            }
        }
        logits
    }

    /// Class logits for row-major `steps`.
    pub fn logits(&self, steps: &[T]) -> Result<Vec<T>, LstmError> {
        self.run(steps, None)
    }

    pub fn loss(&self, steps: &[T], label: usize) -> Result<T, LstmError> {
        Ok(cross_entropy(&self.logits(steps)?, label))
    }

    /// Adds the cross-entropy gradient for one sequence into `grad` and
    /// returns the loss.
    pub fn accumulate_gradient(
        &self,
        steps: &[T],
        label: usize,
        grad: &mut LstmGradient<T>,
        trace: &mut Trace<T>,
    ) -> Result<T, LstmError> {
        let logits = self.run(steps, Some(trace))?;
        let loss = cross_entropy(&logits, label);
        let (_, dlogits) = cross_entropy_grad(&logits, label);
        let (n, h) = (self.input_dim, self.hidden_dim);
        let cols = n + h;
        let len = trace.len;

        let mut dh = vec![T::zero(); h];
        for j in 0..h {
            let hj = trace.h_final[j];
            let row = &self.readout_weights[j * n..(j + 1) * n];
            let grow = &mut grad.readout_weights[j * n..(j + 1) * n];
            let mut acc = T::zero();
            for k in 0..n {
                grow[k] += hj * dlogits[k];
                acc += row[k] * dlogits[k];
            }
            dh[j] = acc;
        }
        for (gb, &d) in grad.readout_bias.iter_mut().zip(&dlogits) {
            *gb += d;
        }

        let mut dc_next = vec![T::zero(); h];
        let mut dz = vec![T::zero(); 4 * h];
        let one = T::one();
        for t in (0..len).rev() {
            let base = t * 4 * h;
            for j in 0..h {
                let i_g = trace.gates[base + j];
                let f_g = trace.gates[base + h + j];
                let o_g = trace.gates[base + 2 * h + j];
                let g_g = trace.gates[base + 3 * h + j];
                let tc = trace.tanh_c[t * h + j];
                let dc = dc_next[j] + dh[j] * o_g * (one - tc * tc);
                let d_o = dh[j] * tc;
                dz[j] = dc * g_g * i_g * (one - i_g);
                dz[h + j] = dc * trace.c_prev[t * h + j] * f_g * (one - f_g);
                dz[2 * h + j] = d_o * o_g * (one - o_g);
                dz[3 * h + j] = dc * i_g * (one - g_g * g_g);
                dc_next[j] = dc * f_g;
            }
            let inputs = &trace.inputs[t * cols..(t + 1) * cols];
            dh.iter_mut().for_each(|v| *v = T::zero());
            for (r, &d) in dz.iter().enumerate() {
                grad.gate_bias[r] += d;
                let grow = &mut grad.gate_weights[r * cols..(r + 1) * cols];
                for (g, &v) in grow.iter_mut().zip(inputs) {
                    *g += d * v;
                }
                let wrow = &self.gate_weights[r * cols + n..(r + 1) * cols];
                for (dhj, &w) in dh.iter_mut().zip(wrow) {
                    *dhj += d * w;
                }
            }
        }
        Ok(loss)
    }
}

/// Activations recorded by the forward pass for backpropagation.
#[derive(Clone, Debug)]
pub struct Trace<T> {
    len: usize,
    inputs: Vec<T>,
    c_prev: Vec<T>,
    gates: Vec<T>,
    tanh_c: Vec<T>,
    h_final: Vec<T>,
}

impl<T> Default for Trace<T> {
    fn default() -> Self {
        Self {
            len: 0,
            inputs: Vec::new(),
            c_prev: Vec::new(),
            gates: Vec::new(),
            tanh_c: Vec::new(),
            h_final: Vec::new(),
        }
    }
}

impl<T: Real> Trace<T> {
    fn reset(&mut self, len: usize, h: usize, cols: usize) {
        self.len = len;
        self.inputs.resize(len * cols, T::zero());
        self.c_prev.resize(len * h, T::zero());
        self.gates.resize(len * 4 * h, T::zero());
        self.tanh_c.resize(len * h, T::zero());
        self.h_final.resize(h, T::zero());
    }
}

fn check_dims<T: Real>(m: &LstmModel<T>, s: &SequenceSample<T>) -> Result<(), LstmError> {
    if s.input_dim() != m.input_dim() {
        return Err(LstmError::DimensionMismatch {
            expected: m.input_dim(),
            found: s.input_dim(),
        });
    }
    Ok(())
}

/// Class distribution for one sample.
pub fn lstm_forward<T: Real>(m: &LstmModel<T>, s: &SequenceSample<T>) -> Result<Vec<T>, LstmError> {
    check_dims(m, s)?;
    Ok(softmax(&m.logits(s.flat())?))
}

/// Loss and exact gradient of the cross-entropy against `label`.
pub fn lstm_backward<T: Real>(
    m: &LstmModel<T>,
    s: &SequenceSample<T>,
    label: usize,
) -> Result<(T, LstmGradient<T>), LstmError> {
    check_dims(m, s)?;
    let mut g = LstmGradient::zeros_like(m);
    let mut trace = Trace::default();
    let loss = m.accumulate_gradient(s.flat(), label, &mut g, &mut trace)?;
    Ok((loss, g))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LstmTrainConfig {
    pub hidden_dim: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub init_scale: f64,
    /// Rescale each batch gradient to at most this L2 norm.
    pub clip_norm: Option<f64>,
}

impl Default for LstmTrainConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 64,
            batch_size: 100,
            epochs: 100,
            learning_rate: 0.5,
            seed: 0,
            init_scale: 0.1,
            clip_norm: Some(5.0),
        }
    }
}

/// Mean cross-entropy over `samples`.
pub fn mean_loss<T: Real>(m: &LstmModel<T>, samples: &[SequenceSample<T>]) -> Result<T, LstmError> {
    let mut total = T::zero();
    for s in samples {
        total += m.loss(s.flat(), s.label)?;
    }
    Ok(total / T::lit(samples.len().max(1) as f64))
}

/// Mini-batch gradient descent with per-epoch reshuffling. The log records
/// the mean training loss accumulated during each epoch's batches (entry 0
/// is the loss of the initial model).
pub fn train_lstm<T: Real>(
    samples: &[SequenceSample<T>],
    n_classes: usize,
    config: &LstmTrainConfig,
) -> Result<(LstmModel<T>, TrainingLog), TrainError> {
    let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
    check_class_coverage(&labels, n_classes)?;
    for s in samples {
        if s.input_dim() != n_classes {
            return Err(TrainError::DimensionMismatch {
                expected: n_classes,
                found: s.input_dim(),
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = LstmModel::random(n_classes, config.hidden_dim, config.init_scale, &mut rng);
    let mut log = TrainingLog::default();
    log.push(0, mean_loss(&model, samples)?.to_f64_lossy())?;

    let mut grad = LstmGradient::zeros_like(&model);
    let mut trace = Trace::default();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let batch = config.batch_size.max(1);
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = T::zero();
        for chunk in order.chunks(batch) {
            grad.clear();
            for &i in chunk {
                let s = &samples[i];
                epoch_loss += model.accumulate_gradient(s.flat(), s.label, &mut grad, &mut trace)?;
            }
            let mut step = T::lit(config.learning_rate) / T::lit(chunk.len() as f64);
            if let Some(max_norm) = config.clip_norm {
                let sq: T = grad.flat().iter().map(|g| *g * *g).sum();
                let norm = sq.sqrt() / T::lit(chunk.len() as f64);
                if norm > T::lit(max_norm) {
                    step = step * T::lit(max_norm) / norm;
                }
            }
            apply_step(&mut model, &grad, step);
        }
        log.push(epoch, (epoch_loss / T::lit(samples.len() as f64)).to_f64_lossy())?;
        if !model.is_finite() {
            return Err(TrainError::DivergenceDetected { epoch });
        }
    }
    Ok((model, log))
}

fn apply_step<T: Real>(m: &mut LstmModel<T>, g: &LstmGradient<T>, step: T) {
    for (p, d) in [
        (&mut m.gate_weights, &g.gate_weights),
        (&mut m.gate_bias, &g.gate_bias),
        (&mut m.readout_weights, &g.readout_weights),
        (&mut m.readout_bias, &g.readout_bias),
    ] {
        for (w, &gw) in p.iter_mut().zip(d) {
            *w -= step * gw;
        }
    }
}
