//! Layer-wise propagation of input jets.
//!
//! A jet at a layer is stored as a `units × cols` row-major block whose
//! column 0 is the value, columns `1..=d` the first derivatives with respect
//! to the `d` raw inputs and columns `d+1..=2d` the diagonal second
//! derivatives. Value-only evaluation is the same code with `cols = 1`, so
//! [`Mlp::forward`] and the value component of [`Mlp::jet`] agree bit for
//! bit.
//!
//! Affine layers act on every column (`∂z = W ∂a`, `∂²z = W ∂²a`), with the
//! bias entering column 0 only. Activations follow
//! `∂a = φ'(z) ∂z` and `∂²a = φ''(z) (∂z)² + φ'(z) ∂²z`.

use crate::error::{Error, Result};

use super::mlp::{Mlp, ParamVector};

/// Value, gradient and diagonal Hessian of a network output with respect to
/// its raw inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct InputJet {
    pub out_dim: usize,
    pub in_dim: usize,
    pub value: Vec<f64>,
    /// `out_dim × in_dim`, row-major.
    pub grad: Vec<f64>,
    /// `out_dim × in_dim`, row-major.
    pub diag2: Vec<f64>,
}

impl InputJet {
    pub fn grad(&self, o: usize, k: usize) -> f64 {
        self.grad[o * self.in_dim + k]
    }

    pub fn diag2(&self, o: usize, k: usize) -> f64 {
        self.diag2[o * self.in_dim + k]
    }

    /// Sum of the diagonal second derivatives of output `o` over `coords`.
    pub fn laplacian_over(&self, o: usize, coords: std::ops::Range<usize>) -> f64 {
        coords.map(|k| self.diag2(o, k)).sum()
    }

    pub fn laplacian(&self, o: usize) -> f64 {
        self.laplacian_over(o, 0..self.in_dim)
    }

    fn from_block(block: &[f64], out_dim: usize, in_dim: usize) -> Self {
        let cols = 1 + 2 * in_dim;
        let mut jet = InputJet {
            out_dim,
            in_dim,
            value: Vec::with_capacity(out_dim),
            grad: Vec::with_capacity(out_dim * in_dim),
            diag2: Vec::with_capacity(out_dim * in_dim),
        };
        for o in 0..out_dim {
            let row = &block[o * cols..(o + 1) * cols];
            jet.value.push(row[0]);
            jet.grad.extend_from_slice(&row[1..=in_dim]);
            jet.diag2.extend_from_slice(&row[1 + in_dim..]);
        }
        jet
    }
}

/// Intermediates of one propagation, kept for the reverse sweep.
#[derive(Clone, Debug)]
pub struct JetCache {
    pub(crate) cols: usize,
    /// Input block of every affine layer (the embedding output for layer 0).
    pub(crate) inputs: Vec<Vec<f64>>,
    /// Pre-activation block of every hidden layer.
    pub(crate) pre: Vec<Vec<f64>>,
    /// Output block of the last layer.
    pub(crate) output: Vec<f64>,
}

impl JetCache {
    pub fn output(&self) -> &[f64] {
        &self.output
    }

    pub fn cols(&self) -> usize {
        self.cols
    }
}

#[inline]
fn affine(w: &[f64], b: &[f64], x: &[f64], n_in: usize, n_out: usize, cols: usize, z: &mut [f64]) {
    for i in 0..n_out {
        let zi = &mut z[i * cols..(i + 1) * cols];
        zi.fill(0.0);
        let wi = &w[i * n_in..(i + 1) * n_in];
        for (j, &wij) in wi.iter().enumerate() {
            let xj = &x[j * cols..(j + 1) * cols];
            for c in 0..cols {
                zi[c] += wij * xj[c];
            }
        }
        zi[0] += b[i];
    }
}

/// Propagates `cols` columns through the network. With `cols == 1` only
/// values are computed. Callers validate shapes and smoothness first.
pub(crate) fn propagate(
    net: &Mlp,
    params: &ParamVector,
    x: &[f64],
    cols: usize,
    mut cache: Option<&mut JetCache>,
) -> Vec<f64> {
    let widths = net.widths();
    let act = net.activation();
    let d = x.len();
    let mut cur = vec![0.0; widths[0] * cols];
    net.embedding().embed(x, cols, &mut cur);
    let offsets = net.layer_offsets();
    let last = net.n_layers();
    for l in 0..last {
        let (n_in, n_out) = net.layer_shape(l);
        let w = &params[offsets[l]..offsets[l] + n_in * n_out];
        let b = &params[offsets[l] + n_in * n_out..offsets[l] + n_in * n_out + n_out];
        let mut z = vec![0.0; n_out * cols];
        affine(w, b, &cur, n_in, n_out, cols, &mut z);
        let input = std::mem::replace(&mut cur, z);
        if let Some(c) = cache.as_deref_mut() {
            c.inputs.push(input);
        }
        if l + 1 == last {
            break;
        }
        if let Some(c) = cache.as_deref_mut() {
            c.pre.push(cur.clone());
        }
        if cols == 1 {
            for v in cur.iter_mut() {
                *v = act.eval(*v);
            }
            continue;
        }
        for unit in cur.chunks_exact_mut(cols) {
            let [phi, d1, d2, _] = act
                .derivatives(unit[0])
                .expect("smoothness checked before propagation");
            unit[0] = phi;
            for k in 0..d {
                let g = unit[1 + k];
                unit[1 + k] = d1 * g;
                unit[1 + d + k] = d2 * g * g + d1 * unit[1 + d + k];
            }
        }
    }
    if let Some(c) = cache {
        c.output = cur.clone();
    }
    cur
}

impl Mlp {
    fn check_smooth(&self) -> Result<()> {
        if self.activation().is_smooth() || self.n_layers() <= 1 {
            Ok(())
        } else {
            Err(Error::UnsupportedActivation(self.activation().name()))
        }
    }

    /// Exact value, input gradient and diagonal input Hessian at `x`.
    pub fn jet(&self, params: &ParamVector, x: &[f64]) -> Result<InputJet> {
        self.check_params(params)?;
        self.check_input(x)?;
        self.check_smooth()?;
        let d = self.input_dim();
        let block = propagate(self, params, x, 1 + 2 * d, None);
        Ok(InputJet::from_block(&block, self.output_dim(), d))
    }

    /// Like [`Mlp::jet`] (or [`Mlp::forward`] when `full` is false) but keeps
    /// the intermediates needed by [`Mlp::jet_vjp`].
    pub fn jet_with_cache(&self, params: &ParamVector, x: &[f64], full: bool) -> Result<JetCache> {
        self.check_params(params)?;
        self.check_input(x)?;
        if full {
            self.check_smooth()?;
        }
        let cols = if full { 1 + 2 * self.input_dim() } else { 1 };
        let mut cache = JetCache {
            cols,
            inputs: Vec::with_capacity(self.n_layers()),
            pre: Vec::with_capacity(self.n_layers()),
            output: Vec::new(),
        };
        propagate(self, params, x, cols, Some(&mut cache));
        Ok(cache)
    }

    /// Reverse sweep through a cached propagation: given the adjoint of the
    /// output block (same layout as [`JetCache::output`]), accumulates the
    /// parameter gradient into `grad` (layer part only).
    pub fn jet_vjp(&self, params: &ParamVector, cache: &JetCache, out_adjoint: &[f64], grad: &mut [f64]) {
        let cols = cache.cols;
        let d = (cols - 1) / 2;
        let act = self.activation();
        let offsets = self.layer_offsets();
        let mut zbar = out_adjoint.to_vec();
        for l in (0..self.n_layers()).rev() {
            let (n_in, n_out) = self.layer_shape(l);
            let w0 = offsets[l];
            let w = &params[w0..w0 + n_in * n_out];
            let x = &cache.inputs[l];
            {
                let (gw, gb) = grad[w0..w0 + n_in * n_out + n_out].split_at_mut(n_in * n_out);
                for i in 0..n_out {
                    let zi = &zbar[i * cols..(i + 1) * cols];
                    gb[i] += zi[0];
                    let gwi = &mut gw[i * n_in..(i + 1) * n_in];
                    for (j, g) in gwi.iter_mut().enumerate() {
                        let xj = &x[j * cols..(j + 1) * cols];
                        let mut acc = 0.0;
                        for c in 0..cols {
                            acc += zi[c] * xj[c];
                        }
                        *g += acc;
                    }
                }
            }
            if l == 0 {
                break;
            }
            // adjoint of this layer's input block
            let mut xbar = vec![0.0; n_in * cols];
            for i in 0..n_out {
                let zi = &zbar[i * cols..(i + 1) * cols];
                let wi = &w[i * n_in..(i + 1) * n_in];
                for (j, &wij) in wi.iter().enumerate() {
                    let xj = &mut xbar[j * cols..(j + 1) * cols];
                    for c in 0..cols {
                        xj[c] += wij * zi[c];
                    }
                }
            }
            // through the activation of layer l-1
            let pre = &cache.pre[l - 1];
            for (ab, zp) in xbar.chunks_exact_mut(cols).zip(pre.chunks_exact(cols)) {
                if cols == 1 {
                    ab[0] *= act.slope(zp[0]);
                    continue;
                }
                let [_, d1, d2, d3] = act.derivatives(zp[0]).expect("smooth activation");
                let mut z_adj = ab[0] * d1;
                for k in 0..d {
                    let gz = zp[1 + k];
                    let hz = zp[1 + d + k];
                    let g_adj = ab[1 + k];
                    let h_adj = ab[1 + d + k];
                    z_adj += g_adj * d2 * gz + h_adj * (d3 * gz * gz + d2 * hz);
                    ab[1 + k] = g_adj * d1 + 2.0 * h_adj * d2 * gz;
                    ab[1 + d + k] = h_adj * d1;
                }
                ab[0] = z_adj;
            }
            zbar = xbar;
        }
    }
}
