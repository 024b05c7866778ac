use ndarray::{s, Array1, Array2, Array3, ArrayView1, ArrayView2, ArrayView3, Axis};
use rand::Rng;

use super::glorot_uniform;
use crate::{Error, Result, Scalar};

/// Single-layer LSTM.
///
/// Gate pre-activations are `z = x W_xᵀ + h W_hᵀ + b`, laid out as four
/// blocks of `hidden` columns in the order input, forget, candidate, output:
///
/// ```text
/// i = σ(z_i)   f = σ(z_f)   g = tanh(z_g)   o = σ(z_o)
/// c' = f ⊙ c + i ⊙ g
/// h' = o ⊙ tanh(c')
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct Lstm<T> {
    w_input: Array2<T>,
    w_hidden: Array2<T>,
    bias: Array1<T>,
}

#[derive(Clone, Debug)]
struct StepCache<T> {
    x: Array2<T>,
    h_prev: Array2<T>,
    c_prev: Array2<T>,
    i: Array2<T>,
    f: Array2<T>,
    g: Array2<T>,
    o: Array2<T>,
    tanh_c: Array2<T>,
}

/// Activations recorded by [`Lstm::forward_sequence`] for backpropagation through time.
#[derive(Clone, Debug)]
pub struct LstmCache<T> {
    steps: Vec<StepCache<T>>,
}

#[derive(Clone, Debug)]
pub struct LstmGrads<T> {
    pub w_input: Array2<T>,
    pub w_hidden: Array2<T>,
    pub bias: Array1<T>,
    /// `batch × steps × input` gradient with respect to the input sequence.
    pub input: Array3<T>,
}

fn sigmoid<T: Scalar>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

impl<T: Scalar> Lstm<T> {
    pub fn new(w_input: Array2<T>, w_hidden: Array2<T>, bias: Array1<T>) -> Result<Self> {
        let hidden = w_hidden.ncols();
        if w_hidden.nrows() != 4 * hidden {
            return Err(Error::shape((4 * hidden, hidden), w_hidden.dim()));
        }
        if w_input.nrows() != 4 * hidden {
            return Err(Error::shape((4 * hidden, w_input.ncols()), w_input.dim()));
        }
        if bias.len() != 4 * hidden {
            return Err(Error::shape(4 * hidden, bias.len()));
        }
        Ok(Self {
            w_input: w_input.as_standard_layout().into_owned(),
            w_hidden: w_hidden.as_standard_layout().into_owned(),
            bias,
        })
    }

    /// Per-gate Glorot-uniform weights, zero biases except the forget gate (1).
    pub fn glorot(input_dim: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let mut w_input = Array2::zeros((4 * hidden, input_dim));
        let mut w_hidden = Array2::zeros((4 * hidden, hidden));
        for gate in 0..4 {
            let rows = gate * hidden..(gate + 1) * hidden;
            w_input
                .slice_mut(s![rows.clone(), ..])
                .assign(&glorot_uniform::<T>(hidden, input_dim, input_dim, hidden, rng));
            w_hidden
                .slice_mut(s![rows, ..])
                .assign(&glorot_uniform::<T>(hidden, hidden, hidden, hidden, rng));
        }
        let mut bias = Array1::zeros(4 * hidden);
        bias.slice_mut(s![hidden..2 * hidden]).fill(T::one());
        Self {
            w_input,
            w_hidden,
            bias,
        }
    }

    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        Self {
            w_input: Array2::zeros((4 * hidden, input_dim)),
            w_hidden: Array2::zeros((4 * hidden, hidden)),
            bias: Array1::zeros(4 * hidden),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_input.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_hidden.ncols()
    }

    pub fn w_input(&self) -> &Array2<T> {
        &self.w_input
    }

    pub fn w_hidden(&self) -> &Array2<T> {
        &self.w_hidden
    }

    pub fn bias(&self) -> &Array1<T> {
        &self.bias
    }

    /// One cell update for a single example.
    pub fn step(
        &self,
        x: ArrayView1<T>,
        h_prev: ArrayView1<T>,
        c_prev: ArrayView1<T>,
    ) -> Result<(Array1<T>, Array1<T>)> {
        let hd = self.hidden_dim();
        if x.len() != self.input_dim() {
            return Err(Error::shape(self.input_dim(), x.len()));
        }
        if h_prev.len() != hd || c_prev.len() != hd {
            return Err(Error::shape((hd, hd), (h_prev.len(), c_prev.len())));
        }
        let row = |v: ArrayView1<T>| v.insert_axis(Axis(0)).to_owned();
        let cache = self.step_batch(row(x), row(h_prev), row(c_prev));
        let h = &cache.o * &cache.tanh_c;
        let c = &cache.f * &cache.c_prev + &cache.i * &cache.g;
        Ok((h.row(0).to_owned(), c.row(0).to_owned()))
    }

    fn step_batch(&self, x: Array2<T>, h_prev: Array2<T>, c_prev: Array2<T>) -> StepCache<T> {
        let hd = self.hidden_dim();
        let z = x.dot(&self.w_input.t()) + h_prev.dot(&self.w_hidden.t()) + &self.bias;
        let i = z.slice(s![.., 0..hd]).mapv(sigmoid);
        let f = z.slice(s![.., hd..2 * hd]).mapv(sigmoid);
        let g = z.slice(s![.., 2 * hd..3 * hd]).mapv(|v| v.tanh());
        let o = z.slice(s![.., 3 * hd..4 * hd]).mapv(sigmoid);
        let c = &f * &c_prev + &i * &g;
        let tanh_c = c.mapv(|v| v.tanh());
        StepCache {
            x,
            h_prev,
            c_prev,
            i,
            f,
            g,
            o,
            tanh_c,
        }
    }

    /// Unrolls over `batch × steps × input` starting from zero state and
    /// returns the final hidden state.
    pub fn forward_sequence(&self, seqs: ArrayView3<T>) -> Result<(Array2<T>, LstmCache<T>)> {
        let (batch, steps, width) = seqs.dim();
        if width != self.input_dim() {
            return Err(Error::shape((batch, steps, self.input_dim()), seqs.dim()));
        }
        let hd = self.hidden_dim();
        let mut h = Array2::zeros((batch, hd));
        let mut c = Array2::zeros((batch, hd));
        let mut cache = Vec::with_capacity(steps);
        for t in 0..steps {
            let x = seqs.index_axis(Axis(1), t).to_owned();
            let step = self.step_batch(x, h, c);
            c = &step.f * &step.c_prev + &step.i * &step.g;
            h = &step.o * &step.tanh_c;
            cache.push(step);
        }
        Ok((h, LstmCache { steps: cache }))
    }

    pub fn final_hidden(&self, seqs: ArrayView3<T>) -> Result<Array2<T>> {
        self.forward_sequence(seqs).map(|(h, _)| h)
    }

    /// Backpropagation through time from a gradient on the final hidden state.
    pub fn backward(&self, cache: &LstmCache<T>, grad_h_final: ArrayView2<T>) -> LstmGrads<T> {
        let hd = self.hidden_dim();
        let steps = cache.steps.len();
        let batch = grad_h_final.nrows();
        let one = T::one();

        let mut g_w_input = Array2::zeros(self.w_input.raw_dim());
        let mut g_w_hidden = Array2::zeros(self.w_hidden.raw_dim());
        let mut g_bias = Array1::zeros(self.bias.raw_dim());
        let mut g_input = Array3::zeros((batch, steps, self.input_dim()));

        let mut dh = grad_h_final.to_owned();
        let mut dc = Array2::<T>::zeros((batch, hd));
        let mut dz = Array2::<T>::zeros((batch, 4 * hd));
        for t in (0..steps).rev() {
            let st = &cache.steps[t];
            let d_o = &dh * &st.tanh_c;
            dc = dc + &dh * &st.o * &st.tanh_c.mapv(|v| one - v * v);
            let d_i = &dc * &st.g;
            let d_g = &dc * &st.i;
            let d_f = &dc * &st.c_prev;

            dz.slice_mut(s![.., 0..hd])
                .assign(&(d_i * &st.i.mapv(|v| v * (one - v))));
            dz.slice_mut(s![.., hd..2 * hd])
                .assign(&(d_f * &st.f.mapv(|v| v * (one - v))));
            dz.slice_mut(s![.., 2 * hd..3 * hd])
                .assign(&(d_g * &st.g.mapv(|v| one - v * v)));
            dz.slice_mut(s![.., 3 * hd..4 * hd])
                .assign(&(d_o * &st.o.mapv(|v| v * (one - v))));

            g_w_input += &dz.t().dot(&st.x);
            g_w_hidden += &dz.t().dot(&st.h_prev);
            g_bias += &dz.sum_axis(Axis(0));
            g_input
                .index_axis_mut(Axis(1), t)
                .assign(&dz.dot(&self.w_input));
            dh = dz.dot(&self.w_hidden);
            dc *= &st.f;
        }
        LstmGrads {
            w_input: g_w_input,
            w_hidden: g_w_hidden,
            bias: g_bias,
            input: g_input,
        }
    }

    pub(crate) fn param_slices(&self) -> [&[T]; 3] {
        [
            self.w_input.as_slice().expect("standard layout"),
            self.w_hidden.as_slice().expect("standard layout"),
            self.bias.as_slice().expect("contiguous"),
        ]
    }

    pub(crate) fn param_slices_mut(&mut self) -> [&mut [T]; 3] {
        [
            self.w_input.as_slice_mut().expect("standard layout"),
            self.w_hidden.as_slice_mut().expect("standard layout"),
            self.bias.as_slice_mut().expect("contiguous"),
        ]
    }
}
