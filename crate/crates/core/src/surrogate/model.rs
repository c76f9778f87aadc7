//! Stacked GRU with a per-step linear head.
//!
//! Gate convention (columns of every kernel are laid out `[z | r | h]`):
//!
//! ```text
//! z  = σ(x W_z + h U_z + b_z)
//! r  = σ(x W_r + h U_r + b_r)
//! h~ = tanh(x W_h + (r ⊙ h) U_h + b_h)
//! h' = (1 - z) ⊙ h + z ⊙ h~
//! ```
//!
//! Batches are stored time-major: row `t * batch + i` holds step `t` of
//! sequence `i`, so each step is a contiguous block of rows.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Weights of one GRU layer.
#[derive(Debug, Clone, PartialEq)]
pub struct GruLayer {
    /// Input kernel, in x 3H.
    pub w: Array2<f64>,
    /// Recurrent kernel, H x 3H.
    pub u: Array2<f64>,
    /// Bias, 3H.
    pub b: Array1<f64>,
}

impl GruLayer {
    pub fn zeros(n_in: usize, hidden: usize) -> Self {
        GruLayer {
            w: Array2::zeros((n_in, 3 * hidden)),
            u: Array2::zeros((hidden, 3 * hidden)),
            b: Array1::zeros(3 * hidden),
        }
    }

    fn init<R: Rng>(n_in: usize, hidden: usize, rng: &mut R) -> Self {
        let mut layer = Self::zeros(n_in, hidden);
        let a = (6.0 / (n_in + hidden) as f64).sqrt();
        layer.w.mapv_inplace(|_| rng.random_range(-a..a));
        let a = (6.0 / (2 * hidden) as f64).sqrt();
        layer.u.mapv_inplace(|_| rng.random_range(-a..a));
        layer
    }

    pub fn n_inputs(&self) -> usize {
        self.w.nrows()
    }

    pub fn hidden(&self) -> usize {
        self.u.nrows()
    }

    pub fn n_params(&self) -> usize {
        self.w.len() + self.u.len() + self.b.len()
    }

    /// One step for a single sequence.
    pub fn cell(&self, x: &[f64], h_prev: &[f64]) -> Result<Vec<f64>> {
        let hd = self.hidden();
        if x.len() != self.n_inputs() || h_prev.len() != hd {
            return Err(Error::invalid(format!(
                "cell expects input {} and state {}, got {} and {}",
                self.n_inputs(),
                hd,
                x.len(),
                h_prev.len()
            )));
        }
        let pre = |col: usize, h: &[f64]| {
            let mut v = self.b[col];
            for (i, xi) in x.iter().enumerate() {
                v += xi * self.w[[i, col]];
            }
            for (k, hk) in h.iter().enumerate() {
                v += hk * self.u[[k, col]];
            }
            v
        };
        let mut z = vec![0.0; hd];
        let mut r = vec![0.0; hd];
        for j in 0..hd {
            z[j] = sigmoid(pre(j, h_prev));
            r[j] = sigmoid(pre(hd + j, h_prev));
        }
        let rh: Vec<f64> = r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
        Ok((0..hd)
            .map(|j| {
                let c = pre(2 * hd + j, &rh).tanh();
                (1.0 - z[j]) * h_prev[j] + z[j] * c
            })
            .collect())
    }
}

/// Activations kept from the forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct LayerCache {
    x: Array2<f64>,
    /// States h_0..h_T, (T + 1) * B rows; h_0 = 0.
    h: Array2<f64>,
    z: Array2<f64>,
    r: Array2<f64>,
    c: Array2<f64>,
    rh: Array2<f64>,
}

impl GruLayer {
    /// Runs the layer over a time-major batch. Returns the cache; the output
    /// sequence is `h_1..h_T` inside it.
    fn forward(&self, x: Array2<f64>, steps: usize, batch: usize) -> Result<LayerCache> {
        let hd = self.hidden();
        let rows = steps * batch;
        let mut a = x.dot(&self.w);
        a += &self.b;
        let mut h = Array2::zeros(((steps + 1) * batch, hd));
        let mut z = Array2::zeros((rows, hd));
        let mut r = Array2::zeros((rows, hd));
        let mut c = Array2::zeros((rows, hd));
        let mut rh = Array2::zeros((rows, hd));
        let u_zr = self.u.slice(s![.., ..2 * hd]);
        let u_h = self.u.slice(s![.., 2 * hd..]);
        let mut rec = Array2::zeros((batch, 2 * hd));
        let mut cand = Array2::zeros((batch, hd));
        for t in 0..steps {
            let (r0, r1) = (t * batch, (t + 1) * batch);
            let hp = h.slice(s![r0..r1, ..]);
            general_mat_mul(1.0, &hp, &u_zr, 0.0, &mut rec);
            for i in 0..batch {
                for j in 0..hd {
                    let zz = sigmoid(a[[r0 + i, j]] + rec[[i, j]]);
                    let rr = sigmoid(a[[r0 + i, hd + j]] + rec[[i, hd + j]]);
                    z[[r0 + i, j]] = zz;
                    r[[r0 + i, j]] = rr;
                    rh[[r0 + i, j]] = rr * hp[[i, j]];
                }
            }
            general_mat_mul(1.0, &rh.slice(s![r0..r1, ..]), &u_h, 0.0, &mut cand);
            let mut finite = true;
            for i in 0..batch {
                for j in 0..hd {
                    let cc = (a[[r0 + i, 2 * hd + j]] + cand[[i, j]]).tanh();
                    c[[r0 + i, j]] = cc;
                    let hprev = h[[r0 + i, j]];
                    let hn = hprev + z[[r0 + i, j]] * (cc - hprev);
                    finite &= hn.is_finite();
                    h[[r1 + i, j]] = hn;
                }
            }
            if !finite {
                return Err(Error::NumericFailure { step: t });
            }
        }
        Ok(LayerCache { x, h, z, r, c, rh })
    }

    /// Backpropagates `dh_out` (gradient w.r.t. h_1..h_T). Accumulates into
    /// `grad` and returns the gradient w.r.t. the layer input.
    fn backward(
        &self,
        cache: &LayerCache,
        dh_out: &Array2<f64>,
        steps: usize,
        batch: usize,
        grad: &mut GruLayer,
    ) -> Array2<f64> {
        let hd = self.hidden();
        let rows = steps * batch;
        let mut da = Array2::<f64>::zeros((rows, 3 * hd));
        let mut carry = Array2::<f64>::zeros((batch, hd));
        let mut d_rh = Array2::<f64>::zeros((batch, hd));
        let u_zr_t = self.u.slice(s![.., ..2 * hd]).reversed_axes();
        let u_h_t = self.u.slice(s![.., 2 * hd..]).reversed_axes();
        for t in (0..steps).rev() {
            let r0 = t * batch;
            // gates and candidate pre-activation gradients
            for i in 0..batch {
                for j in 0..hd {
                    let row = r0 + i;
                    let dh = dh_out[[row, j]] + carry[[i, j]];
                    let (zz, cc, hp) = (cache.z[[row, j]], cache.c[[row, j]], cache.h[[row, j]]);
                    carry[[i, j]] = dh * (1.0 - zz);
                    da[[row, 2 * hd + j]] = dh * zz * (1.0 - cc * cc);
                    da[[row, j]] = dh * (cc - hp) * zz * (1.0 - zz);
                }
            }
            let dac = da.slice(s![r0..r0 + batch, 2 * hd..]);
            general_mat_mul(1.0, &dac, &u_h_t, 0.0, &mut d_rh);
            for i in 0..batch {
                for j in 0..hd {
                    let row = r0 + i;
                    let rr = cache.r[[row, j]];
                    carry[[i, j]] += d_rh[[i, j]] * rr;
                    da[[row, hd + j]] = d_rh[[i, j]] * cache.h[[row, j]] * rr * (1.0 - rr);
                }
            }
            let dazr = da.slice(s![r0..r0 + batch, ..2 * hd]);
            general_mat_mul(1.0, &dazr, &u_zr_t, 1.0, &mut carry);
        }
        let h_prev = cache.h.slice(s![..rows, ..]);
        general_mat_mul(
            1.0,
            &h_prev.t(),
            &da.slice(s![.., ..2 * hd]),
            1.0,
            &mut grad.u.slice_mut(s![.., ..2 * hd]),
        );
        general_mat_mul(
            1.0,
            &cache.rh.t(),
            &da.slice(s![.., 2 * hd..]),
            1.0,
            &mut grad.u.slice_mut(s![.., 2 * hd..]),
        );
        general_mat_mul(1.0, &cache.x.t(), &da, 1.0, &mut grad.w);
        grad.b += &da.sum_axis(Axis(0));
        da.dot(&self.w.t())
    }
}

/// Layer sizes of a model.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Architecture {
    pub n_inputs: usize,
    pub hidden: Vec<usize>,
    pub n_outputs: usize,
}

impl Architecture {
    /// Desk-scale default: three layers of 64 units.
    pub fn desk(n_inputs: usize, n_outputs: usize) -> Self {
        Architecture {
            n_inputs,
            hidden: vec![64; 3],
            n_outputs,
        }
    }

    /// Closed-form count: Σ 3(in·H + H² + H) + H_last·out + out.
    pub fn param_count(&self) -> usize {
        let mut n_in = self.n_inputs;
        let mut total = 0;
        for &h in &self.hidden {
            total += 3 * (n_in * h + h * h + h);
            n_in = h;
        }
        total + n_in * self.n_outputs + self.n_outputs
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_inputs == 0
            || self.n_outputs == 0
            || self.hidden.is_empty()
            || self.hidden.contains(&0)
        {
            return Err(Error::invalid(format!("degenerate architecture {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateModel {
    pub layers: Vec<GruLayer>,
    /// Head kernel, H_last x out.
    pub head_w: Array2<f64>,
    pub head_b: Array1<f64>,
}

/// Forward activations of a batch.
pub struct ForwardCache {
    layers: Vec<LayerCache>,
    top: Array2<f64>,
    steps: usize,
    batch: usize,
}

impl SurrogateModel {
    pub fn zeros(arch: &Architecture) -> Result<Self> {
        arch.validate()?;
        let mut layers = Vec::new();
        let mut n_in = arch.n_inputs;
        for &h in &arch.hidden {
            layers.push(GruLayer::zeros(n_in, h));
            n_in = h;
        }
        Ok(SurrogateModel {
            layers,
            head_w: Array2::zeros((n_in, arch.n_outputs)),
            head_b: Array1::zeros(arch.n_outputs),
        })
    }

    /// Uniform Glorot-style kernels, zero biases.
    pub fn init(arch: &Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::new();
        let mut n_in = arch.n_inputs;
        for &h in &arch.hidden {
            layers.push(GruLayer::init(n_in, h, &mut rng));
            n_in = h;
        }
        let a = (6.0 / (n_in + arch.n_outputs) as f64).sqrt();
        let head_w = Array2::from_shape_fn((n_in, arch.n_outputs), |_| rng.random_range(-a..a));
        Ok(SurrogateModel {
            layers,
            head_w,
            head_b: Array1::zeros(arch.n_outputs),
        })
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            n_inputs: self.layers[0].n_inputs(),
            hidden: self.layers.iter().map(GruLayer::hidden).collect(),
            n_outputs: self.head_b.len(),
        }
    }

    pub fn n_inputs(&self) -> usize {
        self.layers[0].n_inputs()
    }

    pub fn n_outputs(&self) -> usize {
        self.head_b.len()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(GruLayer::n_params).sum::<usize>()
            + self.head_w.len()
            + self.head_b.len()
    }

    /// All tensors in a fixed order (layers w, u, b, then head w, b).
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for l in &self.layers {
            out.push(l.w.as_slice().expect("standard layout"));
            out.push(l.u.as_slice().expect("standard layout"));
            out.push(l.b.as_slice().expect("standard layout"));
        }
        out.push(self.head_w.as_slice().expect("standard layout"));
        out.push(self.head_b.as_slice().expect("standard layout"));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for l in &mut self.layers {
            out.push(l.w.as_slice_mut().expect("standard layout"));
            out.push(l.u.as_slice_mut().expect("standard layout"));
            out.push(l.b.as_slice_mut().expect("standard layout"));
        }
        out.push(self.head_w.as_slice_mut().expect("standard layout"));
        out.push(self.head_b.as_slice_mut().expect("standard layout"));
        out
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Forward pass over a time-major batch (`steps * batch` rows). Returns
    /// outputs in the same layout plus the cache for [`Self::backward`].
    pub fn forward_batch(
        &self,
        x: ArrayView2<f64>,
        steps: usize,
        batch: usize,
    ) -> Result<(Array2<f64>, ForwardCache)> {
        if x.nrows() != steps * batch || x.ncols() != self.n_inputs() || steps == 0 || batch == 0 {
            return Err(Error::invalid(format!(
                "batch shape {:?} does not match {steps} steps x {batch} sequences x {} inputs",
                x.shape(),
                self.n_inputs()
            )));
        }
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut input = x.to_owned();
        for layer in &self.layers {
            let cache = layer.forward(input, steps, batch)?;
            input = cache.h.slice(s![batch.., ..]).to_owned();
            caches.push(cache);
        }
        let mut y = input.dot(&self.head_w);
        y += &self.head_b;
        if let Some(bad) = y
            .outer_iter()
            .position(|r| r.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::NumericFailure { step: bad / batch });
        }
        Ok((
            y,
            ForwardCache {
                layers: caches,
                top: input,
                steps,
                batch,
            },
        ))
    }

    /// Backpropagation through time given dL/dY for the cached batch.
    pub fn backward(&self, cache: &ForwardCache, dy: &Array2<f64>) -> SurrogateModel {
        let mut grad = SurrogateModel::zeros(&self.architecture()).expect("valid architecture");
        grad.head_w = cache.top.t().dot(dy);
        grad.head_b = dy.sum_axis(Axis(0));
        let mut dh = dy.dot(&self.head_w.t());
        for (k, layer) in self.layers.iter().enumerate().rev() {
            dh = layer.backward(
                &cache.layers[k],
                &dh,
                cache.steps,
                cache.batch,
                &mut grad.layers[k],
            );
        }
        grad
    }

    /// Single-sequence forward pass.
    pub fn forward(&self, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let steps = inputs.len();
        let n_in = self.n_inputs();
        let mut x = Array2::zeros((steps, n_in));
        for (t, row) in inputs.iter().enumerate() {
            if row.len() != n_in {
                return Err(Error::invalid(format!(
                    "step {t} has {} inputs, expected {n_in}",
                    row.len()
                )));
            }
            x.row_mut(t)
                .assign(&ndarray::ArrayView1::from(row.as_slice()));
        }
        let (y, _) = self.forward_batch(x.view(), steps, 1)?;
        Ok(y.outer_iter().map(|r| r.to_vec()).collect())
    }
}

/// Packs equal-length sequences time-major.
pub fn pack<const C: usize>(seqs: &[&[[f64; C]]]) -> Result<(Array2<f64>, usize)> {
    let batch = seqs.len();
    let steps = seqs.first().map_or(0, |s| s.len());
    if batch == 0 || steps == 0 || seqs.iter().any(|s| s.len() != steps) {
        return Err(Error::invalid(
            "batch needs non-empty sequences of equal length",
        ));
    }
    let mut out = Array2::zeros((steps * batch, C));
    for (i, s) in seqs.iter().enumerate() {
        for (t, row) in s.iter().enumerate() {
            let mut dst = out.row_mut(t * batch + i);
            for c in 0..C {
                dst[c] = row[c];
            }
        }
    }
    Ok((out, steps))
}

/// Inverse of [`pack`] for one sequence.
pub fn unpack<const C: usize>(
    y: &Array2<f64>,
    steps: usize,
    batch: usize,
    i: usize,
) -> Vec<[f64; C]> {
    (0..steps)
        .map(|t| {
            let r = y.row(t * batch + i);
            std::array::from_fn(|c| r[c])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_cell_halves_state() {
        let l = GruLayer::zeros(3, 2);
        assert_eq!(
            l.cell(&[1.0, 2.0, 3.0], &[0.0, 0.0]).unwrap(),
            vec![0.0, 0.0]
        );
        assert_eq!(
            l.cell(&[1.0, 2.0, 3.0], &[0.4, -0.8]).unwrap(),
            vec![0.2, -0.4]
        );
        assert!(l.cell(&[1.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn cell_output_bounded() {
        let arch = Architecture {
            n_inputs: 3,
            hidden: vec![5],
            n_outputs: 1,
        };
        let mut m = SurrogateModel::init(&arch, 1).unwrap();
        m.layers[0].w.mapv_inplace(|v| 40.0 * v);
        let mut h = vec![0.99, -0.99, 0.5, 0.0, -0.3];
        for _ in 0..20 {
            h = m.layers[0].cell(&[9.0, -7.0, 3.0], &h).unwrap();
            // tanh saturates to exactly 1.0 in floating point
            assert!(h.iter().all(|v| v.abs() <= 1.0));
        }
    }

    #[test]
    fn zero_model_replicates_head_bias() {
        let arch = Architecture {
            n_inputs: 8,
            hidden: vec![4, 4],
            n_outputs: 4,
        };
        let mut m = SurrogateModel::zeros(&arch).unwrap();
        m.head_b = Array1::from(vec![1.0, -2.0, 3.0, 0.5]);
        let y = m.forward(&[vec![0.3; 8]]).unwrap();
        assert_eq!(y, vec![vec![1.0, -2.0, 3.0, 0.5]]);
    }

    #[test]
    fn batched_pass_matches_cell_recursion() {
        let arch = Architecture {
            n_inputs: 3,
            hidden: vec![4, 5],
            n_outputs: 2,
        };
        let m = SurrogateModel::init(&arch, 7).unwrap();
        let seq: Vec<Vec<f64>> = (0..6)
            .map(|t| vec![0.1 * t as f64, -0.3, (t as f64).sin()])
            .collect();
        let y = m.forward(&seq).unwrap();
        let mut h0 = vec![0.0; 4];
        let mut h1 = vec![0.0; 5];
        for (t, x) in seq.iter().enumerate() {
            h0 = m.layers[0].cell(x, &h0).unwrap();
            h1 = m.layers[1].cell(&h0, &h1).unwrap();
            for o in 0..2 {
                let v = m.head_b[o] + (0..5).map(|k| h1[k] * m.head_w[[k, o]]).sum::<f64>();
                assert_relative_eq!(y[t][o], v, max_relative = 1e-12, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn batch_order_does_not_couple_samples() {
        let arch = Architecture {
            n_inputs: 2,
            hidden: vec![3],
            n_outputs: 1,
        };
        let m = SurrogateModel::init(&arch, 2).unwrap();
        let a: Vec<[f64; 2]> = (0..4).map(|t| [t as f64, 1.0]).collect();
        let b: Vec<[f64; 2]> = (0..4).map(|t| [-1.0, 0.5 * t as f64]).collect();
        let (x1, st) = pack(&[&a, &b]).unwrap();
        let (x2, _) = pack(&[&b, &a]).unwrap();
        let (y1, _) = m.forward_batch(x1.view(), st, 2).unwrap();
        let (y2, _) = m.forward_batch(x2.view(), st, 2).unwrap();
        assert_eq!(unpack::<1>(&y1, st, 2, 0), unpack::<1>(&y2, st, 2, 1));
        assert_eq!(unpack::<1>(&y1, st, 2, 1), unpack::<1>(&y2, st, 2, 0));
    }

    #[test]
    fn parameter_count_formula() {
        let arch = Architecture {
            n_inputs: 8,
            hidden: vec![475; 3],
            n_outputs: 4,
        };
        let m = SurrogateModel::zeros(&arch).unwrap();
        assert_eq!(m.n_params(), arch.param_count());
        let by_hand =
            3 * (8 * 475 + 475 * 475 + 475) + 2 * 3 * (475 * 475 + 475 * 475 + 475) + 475 * 4 + 4;
        assert_eq!(arch.param_count(), by_hand);
        let desk = Architecture::desk(8, 4);
        assert_eq!(
            SurrogateModel::init(&desk, 0).unwrap().n_params(),
            desk.param_count()
        );
    }

    #[test]
    fn non_finite_input_reports_step() {
        let arch = Architecture {
            n_inputs: 1,
            hidden: vec![2],
            n_outputs: 1,
        };
        let m = SurrogateModel::init(&arch, 0).unwrap();
        let err = m
            .forward(&[vec![0.0], vec![0.0], vec![f64::NAN]])
            .unwrap_err();
        assert!(matches!(err, Error::NumericFailure { step: 2 }), "{err:?}");
    }
}
