use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::lstm::{LstmCellParams, LstmStep};
use super::matrix::Matrix;
use super::NeuralError;

/// Layer widths and dropout rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkConfig {
    pub price_features: usize,
    pub tweet_features: usize,
    /// Width of all three LSTM layers.
    pub hidden: usize,
    /// Width of the two hidden dense layers.
    pub dense: usize,
    pub dropout_p: f64,
}

impl NetworkConfig {
    pub const DEFAULT_HIDDEN: usize = 200;
    pub const DEFAULT_DENSE: usize = 200;
    pub const DEFAULT_DROPOUT: f64 = 0.2;

    pub fn new(price_features: usize, tweet_features: usize) -> Self {
        Self {
            price_features,
            tweet_features,
            hidden: Self::DEFAULT_HIDDEN,
            dense: Self::DEFAULT_DENSE,
            dropout_p: Self::DEFAULT_DROPOUT,
        }
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        if self.hidden == 0 || self.dense == 0 {
            return Err(NeuralError::DimensionMismatch("layer widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(NeuralError::InvalidDropout(self.dropout_p));
        }
        Ok(())
    }
}

/// Fully connected layer, `out = weight * x + bias`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl DenseParams {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Matrix::zeros(outputs, inputs),
            bias: vec![0.0; outputs],
        }
    }

    pub fn init<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        Self {
            weight: Matrix::xavier(outputs, inputs, inputs, outputs, rng),
            bias: vec![0.0; outputs],
        }
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.bias.clone();
        self.weight.mul_vec_add(x, &mut out);
        out
    }

    /// Accumulates parameter gradients and returns `d/dx`.
    fn backward(&self, x: &[f64], dy: &[f64], grad: &mut DenseParams) -> Vec<f64> {
        grad.weight.add_outer(dy, x);
        for (b, d) in grad.bias.iter_mut().zip(dy) {
            *b += d;
        }
        let mut dx = vec![0.0; x.len()];
        self.weight.t_mul_vec_add(dy, &mut dx);
        dx
    }
}

/// All weights of the dual-branch network:
///
/// ```text
/// price window -> LSTM --h1_t--\
///                               concat -> merge LSTM -> h_last
/// tweet window -> LSTM --h2_t--/
/// h_last -> dense1 -> tanh -> dropout -> dense2 -> tanh -> dropout -> dense_out
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub config: NetworkConfig,
    pub branch_price: LstmCellParams,
    pub branch_tweet: LstmCellParams,
    pub merge: LstmCellParams,
    pub dense1: DenseParams,
    pub dense2: DenseParams,
    pub dense_out: DenseParams,
    revision: u64,
}

/// Parameter gradients share the parameter layout.
pub type Gradients = NetworkParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

impl NetworkParams {
    pub fn zeros(config: NetworkConfig) -> Self {
        let NetworkConfig {
            price_features,
            tweet_features,
            hidden,
            dense,
            ..
        } = config;
        Self {
            config,
            branch_price: LstmCellParams::zeros(price_features, hidden),
            branch_tweet: LstmCellParams::zeros(tweet_features, hidden),
            merge: LstmCellParams::zeros(2 * hidden, hidden),
            dense1: DenseParams::zeros(hidden, dense),
            dense2: DenseParams::zeros(dense, dense),
            dense_out: DenseParams::zeros(dense, 1),
            revision: 0,
        }
    }

    pub fn init(config: NetworkConfig, seed: u64) -> Result<Self, NeuralError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let NetworkConfig {
            price_features,
            tweet_features,
            hidden,
            dense,
            ..
        } = config;
        Ok(Self {
            config,
            branch_price: LstmCellParams::init(price_features, hidden, &mut rng),
            branch_tweet: LstmCellParams::init(tweet_features, hidden, &mut rng),
            merge: LstmCellParams::init(2 * hidden, hidden, &mut rng),
            dense1: DenseParams::init(hidden, dense, &mut rng),
            dense2: DenseParams::init(dense, dense, &mut rng),
            dense_out: DenseParams::init(dense, 1, &mut rng),
            revision: 0,
        })
    }

    /// A zero tensor set with this layout, used to accumulate gradients.
    pub fn zeros_like(&self) -> Gradients {
        Self::zeros(self.config)
    }

    /// Bumped by every in-place update; tapes from older revisions are stale.
    pub fn revision(&self) -> u64 {
        self.revision
    }

    /// Tensor names in checkpoint order.
    pub const TENSOR_NAMES: [&'static str; 12] = [
        "branch_price.weight",
        "branch_price.bias",
        "branch_tweet.weight",
        "branch_tweet.bias",
        "merge.weight",
        "merge.bias",
        "dense1.weight",
        "dense1.bias",
        "dense2.weight",
        "dense2.bias",
        "dense_out.weight",
        "dense_out.bias",
    ];

    pub fn tensors(&self) -> [&[f64]; 12] {
        [
            self.branch_price.weight.as_slice(),
            &self.branch_price.bias,
            self.branch_tweet.weight.as_slice(),
            &self.branch_tweet.bias,
            self.merge.weight.as_slice(),
            &self.merge.bias,
            self.dense1.weight.as_slice(),
            &self.dense1.bias,
            self.dense2.weight.as_slice(),
            &self.dense2.bias,
            self.dense_out.weight.as_slice(),
            &self.dense_out.bias,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 12] {
        [
            self.branch_price.weight.as_mut_slice(),
            &mut self.branch_price.bias,
            self.branch_tweet.weight.as_mut_slice(),
            &mut self.branch_tweet.bias,
            self.merge.weight.as_mut_slice(),
            &mut self.merge.bias,
            self.dense1.weight.as_mut_slice(),
            &mut self.dense1.bias,
            self.dense2.weight.as_mut_slice(),
            &mut self.dense2.bias,
            self.dense_out.weight.as_mut_slice(),
            &mut self.dense_out.bias,
        ]
    }

    /// `(rows, cols)` of each tensor; biases are single-column.
    pub fn tensor_shapes(&self) -> [(usize, usize); 12] {
        let m = |x: &Matrix| (x.rows(), x.cols());
        let v = |x: &[f64]| (x.len(), 1);
        [
            m(&self.branch_price.weight),
            v(&self.branch_price.bias),
            m(&self.branch_tweet.weight),
            v(&self.branch_tweet.bias),
            m(&self.merge.weight),
            v(&self.merge.bias),
            m(&self.dense1.weight),
            v(&self.dense1.bias),
            m(&self.dense2.weight),
            v(&self.dense2.bias),
            m(&self.dense_out.weight),
            v(&self.dense_out.bias),
        ]
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, k: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= k);
        }
    }

    fn check_input(&self, x: &[Vec<f64>], features: usize, which: &str) -> Result<(), NeuralError> {
        match x.iter().find(|row| row.len() != features) {
            Some(row) => Err(NeuralError::DimensionMismatch(format!(
                "{which} window rows need {features} features, got {}",
                row.len()
            ))),
            None => Ok(()),
        }
    }

    /// Scalar prediction for one window pair. In train mode, inverted
    /// dropout masks are drawn from `rng_seed`.
    pub fn forward(
        &self,
        x_price: &[Vec<f64>],
        x_tweet: &[Vec<f64>],
        mode: Mode,
        rng_seed: u64,
    ) -> Result<(f64, Tape), NeuralError> {
        if x_price.len() != x_tweet.len() || x_price.is_empty() {
            return Err(NeuralError::DimensionMismatch(format!(
                "window lengths differ or are empty: {} vs {}",
                x_price.len(),
                x_tweet.len()
            )));
        }
        self.check_input(x_price, self.config.price_features, "price")?;
        self.check_input(x_tweet, self.config.tweet_features, "tweet")?;

        let price_steps = self.branch_price.forward_sequence(x_price)?;
        let tweet_steps = self.branch_tweet.forward_sequence(x_tweet)?;
        let merged_inputs: Vec<Vec<f64>> = price_steps
            .iter()
            .zip(&tweet_steps)
            .map(|(a, b)| [a.h.as_slice(), b.h.as_slice()].concat())
            .collect();
        let merge_steps = self.merge.forward_sequence(&merged_inputs)?;
        let h_last = merge_steps.last().expect("non-empty window").h.clone();

        let p = self.config.dropout_p;
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let mut mask = |n: usize| -> Option<Vec<f64>> {
            (mode == Mode::Train && p > 0.0).then(|| {
                let keep = 1.0 / (1.0 - p);
                (0..n)
                    .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
                    .collect()
            })
        };
        let apply = |a: &[f64], m: &Option<Vec<f64>>| -> Vec<f64> {
            match m {
                Some(m) => a.iter().zip(m).map(|(x, k)| x * k).collect(),
                None => a.to_vec(),
            }
        };

        let a1: Vec<f64> = self.dense1.forward(&h_last).iter().map(|v| v.tanh()).collect();
        let mask1 = mask(a1.len());
        let d1 = apply(&a1, &mask1);
        let a2: Vec<f64> = self.dense2.forward(&d1).iter().map(|v| v.tanh()).collect();
        let mask2 = mask(a2.len());
        let d2 = apply(&a2, &mask2);
        let prediction = self.dense_out.forward(&d2)[0];

        Ok((
            prediction,
            Tape {
                revision: self.revision,
                config: self.config,
                price_steps,
                tweet_steps,
                merge_steps,
                merged_inputs,
                h_last,
                a1,
                mask1,
                d1,
                a2,
                mask2,
                d2,
                prediction,
            },
        ))
    }

    /// Gradient of `d_loss_d_pred * prediction` with respect to every
    /// parameter, for the forward pass recorded in `tape`.
    pub fn backward(&self, tape: &Tape, d_loss_d_pred: f64) -> Result<Gradients, NeuralError> {
        if tape.revision != self.revision || tape.config != self.config {
            return Err(NeuralError::StaleTape);
        }
        let mut grad = self.zeros_like();

        let dd2 = self
            .dense_out
            .backward(&tape.d2, &[d_loss_d_pred], &mut grad.dense_out);
        let da2 = unmask(&dd2, &tape.mask2);
        let dz2: Vec<f64> = da2.iter().zip(&tape.a2).map(|(d, a)| d * (1.0 - a * a)).collect();
        let dd1 = self.dense2.backward(&tape.d1, &dz2, &mut grad.dense2);
        let da1 = unmask(&dd1, &tape.mask1);
        let dz1: Vec<f64> = da1.iter().zip(&tape.a1).map(|(d, a)| d * (1.0 - a * a)).collect();
        let dh_last = self.dense1.backward(&tape.h_last, &dz1, &mut grad.dense1);

        let window = tape.merge_steps.len();
        let h = self.config.hidden;
        let mut dh_merge = vec![vec![0.0; h]; window];
        dh_merge[window - 1] = dh_last;
        let d_merged = self
            .merge
            .backward_sequence(&tape.merge_steps, &dh_merge, &mut grad.merge);

        let dh_price: Vec<Vec<f64>> = d_merged.iter().map(|d| d[..h].to_vec()).collect();
        let dh_tweet: Vec<Vec<f64>> = d_merged.iter().map(|d| d[h..].to_vec()).collect();
        self.branch_price
            .backward_sequence(&tape.price_steps, &dh_price, &mut grad.branch_price);
        self.branch_tweet
            .backward_sequence(&tape.tweet_steps, &dh_tweet, &mut grad.branch_tweet);
        Ok(grad)
    }

    /// Clips `grad` to a global L2 norm of `clip_norm`, then takes one SGD
    /// step. Returns the pre-clip gradient norm.
    pub fn sgd_update(
        &mut self,
        grad: &Gradients,
        learning_rate: f64,
        clip_norm: f64,
    ) -> Result<f64, NeuralError> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(NeuralError::InvalidLearningRate(learning_rate));
        }
        if grad.config != self.config {
            return Err(NeuralError::DimensionMismatch("gradient layout differs".into()));
        }
        let norm = grad.l2_norm();
        if !norm.is_finite() {
            return Err(NeuralError::NonFiniteGradient);
        }
        let scale = if clip_norm > 0.0 && norm > clip_norm {
            clip_norm / norm
        } else {
            1.0
        };
        let step = learning_rate * scale;
        for (p, g) in self.tensors_mut().into_iter().zip(grad.tensors()) {
            p.iter_mut().zip(g).for_each(|(w, d)| *w -= step * d);
        }
        self.revision += 1;
        Ok(norm)
    }
}

fn unmask(d: &[f64], mask: &Option<Vec<f64>>) -> Vec<f64> {
    match mask {
        Some(m) => d.iter().zip(m).map(|(x, k)| x * k).collect(),
        None => d.to_vec(),
    }
}

/// Activations recorded by [`NetworkParams::forward`] for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Tape {
    revision: u64,
    config: NetworkConfig,
    pub price_steps: Vec<LstmStep>,
    pub tweet_steps: Vec<LstmStep>,
    pub merge_steps: Vec<LstmStep>,
    merged_inputs: Vec<Vec<f64>>,
    h_last: Vec<f64>,
    /// First dense layer output before dropout.
    pub a1: Vec<f64>,
    /// Inverted-dropout mask of the first dense layer (train mode only).
    pub mask1: Option<Vec<f64>>,
    /// First dense layer output after dropout.
    pub d1: Vec<f64>,
    pub a2: Vec<f64>,
    pub mask2: Option<Vec<f64>>,
    pub d2: Vec<f64>,
    pub prediction: f64,
}

impl Tape {
    pub fn window(&self) -> usize {
        self.merge_steps.len()
    }

    pub fn merged_inputs(&self) -> &[Vec<f64>] {
        &self.merged_inputs
    }
}
