//! A single LSTM layer unrolled over a window.
//!
//! Gate pre-activations are computed from the concatenation `[h_prev, x_t]`
//! with one stacked weight matrix whose row blocks are, in order, the
//! forget, input, candidate and output gates:
//!
//! ```text
//! f = sigmoid(W_f [h, x] + b_f)     i = sigmoid(W_i [h, x] + b_i)
//! g = tanh(W_g [h, x] + b_g)        o = sigmoid(W_o [h, x] + b_o)
//! c_t = f * c_prev + i * g          h_t = o * tanh(c_t)
//! ```

use rand::Rng;

use super::matrix::Matrix;
use super::NeuralError;

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Forget = 0,
    Input = 1,
    Candidate = 2,
    Output = 3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmCellParams {
    pub hidden: usize,
    pub inputs: usize,
    /// `4 * hidden` rows, `hidden + inputs` columns.
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl LstmCellParams {
    pub fn zeros(inputs: usize, hidden: usize) -> Self {
        Self {
            hidden,
            inputs,
            weight: Matrix::zeros(4 * hidden, hidden + inputs),
            bias: vec![0.0; 4 * hidden],
        }
    }

    /// Xavier-uniform weights per gate, forget-gate bias 1.
    pub fn init<R: Rng>(inputs: usize, hidden: usize, rng: &mut R) -> Self {
        let weight = Matrix::xavier(4 * hidden, hidden + inputs, hidden + inputs, hidden, rng);
        let mut bias = vec![0.0; 4 * hidden];
        bias[..hidden].fill(1.0);
        Self {
            hidden,
            inputs,
            weight,
            bias,
        }
    }

    /// Row block of one gate's weights (`hidden` rows).
    pub fn gate_weight_rows(&self, gate: Gate) -> &[f64] {
        let cols = self.hidden + self.inputs;
        let g = gate as usize;
        &self.weight.as_slice()[g * self.hidden * cols..(g + 1) * self.hidden * cols]
    }

    pub fn gate_bias(&self, gate: Gate) -> &[f64] {
        let g = gate as usize;
        &self.bias[g * self.hidden..(g + 1) * self.hidden]
    }

    /// One time step from `(h_prev, c_prev)`.
    pub fn step(&self, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> Result<LstmStep, NeuralError> {
        let h = self.hidden;
        if x.len() != self.inputs || h_prev.len() != h || c_prev.len() != h {
            return Err(NeuralError::DimensionMismatch(format!(
                "lstm step expects x[{}], h[{h}], c[{h}]; got x[{}], h[{}], c[{}]",
                self.inputs,
                x.len(),
                h_prev.len(),
                c_prev.len()
            )));
        }
        let mut concat = Vec::with_capacity(h + self.inputs);
        concat.extend_from_slice(h_prev);
        concat.extend_from_slice(x);

        let mut z = self.bias.clone();
        self.weight.mul_vec_add(&concat, &mut z);

        let f: Vec<f64> = z[..h].iter().map(|&v| sigmoid(v)).collect();
        let i: Vec<f64> = z[h..2 * h].iter().map(|&v| sigmoid(v)).collect();
        let g: Vec<f64> = z[2 * h..3 * h].iter().map(|&v| v.tanh()).collect();
        let o: Vec<f64> = z[3 * h..].iter().map(|&v| sigmoid(v)).collect();
        let c: Vec<f64> = (0..h).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
        let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
        let h_out: Vec<f64> = (0..h).map(|k| o[k] * tanh_c[k]).collect();
        Ok(LstmStep {
            concat,
            c_prev: c_prev.to_vec(),
            f,
            i,
            g,
            o,
            tanh_c,
            c,
            h: h_out,
        })
    }

    /// Runs the window from zero state.
    pub fn forward_sequence(&self, xs: &[Vec<f64>]) -> Result<Vec<LstmStep>, NeuralError> {
        let mut steps: Vec<LstmStep> = Vec::with_capacity(xs.len());
        let zero = vec![0.0; self.hidden];
        for x in xs {
            let (h_prev, c_prev) = match steps.last() {
                Some(s) => (s.h.as_slice(), s.c.as_slice()),
                None => (zero.as_slice(), zero.as_slice()),
            };
            let step = self.step(x, h_prev, c_prev)?;
            steps.push(step);
        }
        Ok(steps)
    }

    /// Backpropagation through time. `dh_out[t]` is the loss gradient
    /// arriving at `h_t` from outside the layer. Parameter gradients are
    /// accumulated into `grad`; returns the gradient for each input `x_t`.
    pub fn backward_sequence(
        &self,
        steps: &[LstmStep],
        dh_out: &[Vec<f64>],
        grad: &mut LstmCellParams,
    ) -> Vec<Vec<f64>> {
        let h = self.hidden;
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        let mut dxs = vec![Vec::new(); steps.len()];
        let mut dz = vec![0.0; 4 * h];
        for t in (0..steps.len()).rev() {
            let s = &steps[t];
            for k in 0..h {
                let dh = dh_out[t][k] + dh_next[k];
                let d_o = dh * s.tanh_c[k];
                let dc = dc_next[k] + dh * s.o[k] * (1.0 - s.tanh_c[k] * s.tanh_c[k]);
                let df = dc * s.c_prev[k];
                let di = dc * s.g[k];
                let dg = dc * s.i[k];
                dc_next[k] = dc * s.f[k];
                dz[k] = df * s.f[k] * (1.0 - s.f[k]);
                dz[h + k] = di * s.i[k] * (1.0 - s.i[k]);
                dz[2 * h + k] = dg * (1.0 - s.g[k] * s.g[k]);
                dz[3 * h + k] = d_o * s.o[k] * (1.0 - s.o[k]);
            }
            grad.weight.add_outer(&dz, &s.concat);
            for (b, d) in grad.bias.iter_mut().zip(&dz) {
                *b += d;
            }
            let mut dconcat = vec![0.0; h + self.inputs];
            self.weight.t_mul_vec_add(&dz, &mut dconcat);
            dh_next.copy_from_slice(&dconcat[..h]);
            dxs[t] = dconcat[h..].to_vec();
        }
        dxs
    }
}

/// Cached activations of one step, needed by the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmStep {
    pub concat: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub f: Vec<f64>,
    pub i: Vec<f64>,
    pub g: Vec<f64>,
    pub o: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub c: Vec<f64>,
    pub h: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_params_zero_state() {
        let p = LstmCellParams::zeros(3, 4);
        let s = p.step(&[0.3, -1.0, 2.0], &[0.0; 4], &[0.0; 4]).unwrap();
        assert!(s.f.iter().chain(&s.i).chain(&s.o).all(|&v| v == 0.5));
        assert!(s.g.iter().all(|&v| v == 0.0));
        assert!(s.c.iter().chain(&s.h).all(|&v| v == 0.0));
    }

    #[test]
    fn zero_params_carry_half_the_cell() {
        let p = LstmCellParams::zeros(2, 3);
        let c_prev = [1.0, -2.0, 0.4];
        let s = p.step(&[1.0, 1.0], &[0.0; 3], &c_prev).unwrap();
        for (k, c) in c_prev.iter().enumerate() {
            assert_eq!(s.c[k], 0.5 * c);
            assert_eq!(s.h[k], 0.5 * (0.5 * c).tanh());
        }
    }

    #[test]
    fn dimension_checks() {
        let p = LstmCellParams::zeros(2, 3);
        assert!(matches!(
            p.step(&[1.0], &[0.0; 3], &[0.0; 3]),
            Err(NeuralError::DimensionMismatch(_))
        ));
        assert!(matches!(
            p.step(&[1.0, 2.0], &[0.0; 2], &[0.0; 3]),
            Err(NeuralError::DimensionMismatch(_))
        ));
    }

    // Independent per-gate scalar loops over separately indexed W_f/W_i/W_g/W_o.
    fn scalar_step(p: &LstmCellParams, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let hid = p.hidden;
        let gate = |g: Gate, k: usize| {
            let w = p.gate_weight_rows(g);
            let cols = hid + p.inputs;
            let mut acc = p.gate_bias(g)[k];
            for j in 0..hid {
                acc += w[k * cols + j] * h[j];
            }
            for j in 0..p.inputs {
                acc += w[k * cols + hid + j] * x[j];
            }
            acc
        };
        let mut h_out = vec![0.0; hid];
        let mut c_out = vec![0.0; hid];
        for k in 0..hid {
            let f = 1.0 / (1.0 + (-gate(Gate::Forget, k)).exp());
            let i = 1.0 / (1.0 + (-gate(Gate::Input, k)).exp());
            let g = gate(Gate::Candidate, k).tanh();
            let o = 1.0 / (1.0 + (-gate(Gate::Output, k)).exp());
            c_out[k] = f * c[k] + i * g;
            h_out[k] = o * c_out[k].tanh();
        }
        (h_out, c_out)
    }

    #[test]
    fn matches_scalar_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let p = LstmCellParams::init(3, 4, &mut rng);
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let h: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let c: Vec<f64> = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
            let s = p.step(&x, &h, &c).unwrap();
            let (h2, c2) = scalar_step(&p, &x, &h, &c);
            for k in 0..4 {
                assert!((s.h[k] - h2[k]).abs() <= 1e-12);
                assert!((s.c[k] - c2[k]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn gate_ranges() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = LstmCellParams::init(5, 6, &mut rng);
        let xs: Vec<Vec<f64>> = (0..10)
            .map(|_| (0..5).map(|_| rng.random_range(-3.0..3.0)).collect())
            .collect();
        for s in p.forward_sequence(&xs).unwrap() {
            assert!(s.f.iter().chain(&s.i).chain(&s.o).all(|&v| v > 0.0 && v < 1.0));
            assert!(s.g.iter().all(|&v| v > -1.0 && v < 1.0));
        }
    }
}
