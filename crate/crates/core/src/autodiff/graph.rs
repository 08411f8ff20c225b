//! Parameter gradients of losses built from network jets.
//!
//! [`JetGraph`] records two kinds of nodes: jet-propagation primitives (one
//! per network evaluation, holding the layer intermediates) and ordinary
//! scalar arithmetic on a [`Tape`]. The outputs of a jet primitive enter the
//! tape as leaves. One reverse sweep over the tape gives the adjoint of
//! every jet component; each primitive then runs its own reverse sweep
//! ([`Mlp::jet_vjp`]) to turn those adjoints into parameter gradients. The
//! result is the exact gradient of losses that contain input derivatives,
//! such as PDE residuals, with respect to the network parameters.

use std::cell::RefCell;

use crate::error::{Error, Result};
use crate::par::{self, Exec};

use super::jet::JetCache;
use super::mlp::{Mlp, ParamVector};
use super::tape::{Tape, Var};

const VJP_CHUNK: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NetId(usize);

struct NetEntry<'a> {
    net: &'a Mlp,
    params: &'a ParamVector,
    trainable: bool,
}

struct JetBatch {
    net: usize,
    caches: Vec<JetCache>,
    first_leaf: Vec<usize>,
}

/// Jet components of one network output block as tape variables.
#[derive(Clone, Debug)]
pub struct JetVars<'g> {
    leaves: Vec<Var<'g>>,
    in_dim: usize,
    cols: usize,
}

impl<'g> JetVars<'g> {
    pub fn value(&self, o: usize) -> Var<'g> {
        self.leaves[o * self.cols]
    }

    pub fn grad(&self, o: usize, k: usize) -> Var<'g> {
        assert!(self.cols > 1, "value-only evaluation has no derivatives");
        self.leaves[o * self.cols + 1 + k]
    }

    pub fn diag2(&self, o: usize, k: usize) -> Var<'g> {
        assert!(self.cols > 1, "value-only evaluation has no derivatives");
        self.leaves[o * self.cols + 1 + self.in_dim + k]
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn laplacian_over(&self, o: usize, coords: std::ops::Range<usize>) -> Var<'g> {
        let tape = self.leaves[0].tape();
        tape.sum(coords.map(|k| self.diag2(o, k)))
    }

    pub fn laplacian(&self, o: usize) -> Var<'g> {
        self.laplacian_over(o, 0..self.in_dim)
    }
}

/// Gradients returned by [`JetGraph::backward`], one vector per registered
/// network (zeros for frozen ones).
#[derive(Clone, Debug)]
pub struct Gradients {
    pub nets: Vec<ParamVector>,
}

impl Gradients {
    pub fn of(&self, id: NetId) -> &ParamVector {
        &self.nets[id.0]
    }

    pub fn take(&mut self, id: NetId) -> ParamVector {
        std::mem::take(&mut self.nets[id.0])
    }
}

pub struct JetGraph<'a> {
    tape: Tape,
    nets: RefCell<Vec<NetEntry<'a>>>,
    batches: RefCell<Vec<JetBatch>>,
    /// `(net, parameter index, tape leaf)` for directly used parameters.
    direct: RefCell<Vec<(usize, usize, usize)>>,
    exec: Exec,
}

impl<'a> Default for JetGraph<'a> {
    fn default() -> Self {
        Self::new(Exec::default())
    }
}

impl<'a> JetGraph<'a> {
    pub fn new(exec: Exec) -> Self {
        JetGraph {
            tape: Tape::new(),
            nets: RefCell::new(Vec::new()),
            batches: RefCell::new(Vec::new()),
            direct: RefCell::new(Vec::new()),
            exec,
        }
    }

    pub fn tape(&self) -> &Tape {
        &self.tape
    }

    pub fn constant(&self, v: f64) -> Var<'_> {
        self.tape.constant(v)
    }

    /// Registers a network. Frozen networks contribute values but receive no
    /// gradient.
    pub fn network(&self, net: &'a Mlp, params: &'a ParamVector, trainable: bool) -> Result<NetId> {
        net.check_params(params)?;
        let mut nets = self.nets.borrow_mut();
        nets.push(NetEntry { net, params, trainable });
        Ok(NetId(nets.len() - 1))
    }

    /// Parameter `index` of a registered network as a tape variable, e.g. a
    /// trainable scalar stored among the network's extras.
    pub fn parameter(&self, id: NetId, index: usize) -> Result<Var<'_>> {
        let nets = self.nets.borrow();
        let entry = &nets[id.0];
        if index >= entry.params.len() {
            return Err(Error::IndexOutOfRange { index, len: entry.params.len() });
        }
        let v = self.tape.var(entry.params[index]);
        self.direct.borrow_mut().push((id.0, index, v.index()));
        Ok(v)
    }

    /// Evaluates the network at every point. With `full` the first and
    /// diagonal second input derivatives are available as well.
    pub fn eval_batch(&self, id: NetId, points: &[Vec<f64>], full: bool) -> Result<Vec<JetVars<'_>>> {
        let (net, params, trainable) = {
            let nets = self.nets.borrow();
            let e = &nets[id.0];
            (e.net, e.params, e.trainable)
        };
        let caches: Vec<JetCache> = par::map_indexed(self.exec, points.len(), |i| {
            net.jet_with_cache(params, &points[i], full)
        })
        .into_iter()
        .collect::<Result<_>>()?;
        let mut out = Vec::with_capacity(points.len());
        let mut first_leaf = Vec::with_capacity(points.len());
        for cache in &caches {
            let leaves: Vec<Var<'_>> = cache.output().iter().map(|&v| self.tape.var(v)).collect();
            first_leaf.push(leaves[0].index());
            out.push(JetVars { leaves, in_dim: net.input_dim(), cols: cache.cols() });
        }
        if trainable {
            self.batches.borrow_mut().push(JetBatch { net: id.0, caches, first_leaf });
        }
        Ok(out)
    }

    pub fn eval(&self, id: NetId, x: &[f64], full: bool) -> Result<JetVars<'_>> {
        Ok(self.eval_batch(id, &[x.to_vec()], full)?.pop().expect("one point"))
    }

    /// Exact gradient of `loss` with respect to every trainable network.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        if !loss.value().is_finite() {
            return Err(Error::NonFinite(format!("loss value {}", loss.value())));
        }
        let adj = self.tape.gradient(loss);
        let nets = self.nets.borrow();
        let mut grads: Vec<ParamVector> = nets.iter().map(|e| ParamVector::zeros(e.params.len())).collect();
        for batch in self.batches.borrow().iter() {
            let entry = &nets[batch.net];
            let (net, params) = (entry.net, entry.params);
            let width = net.output_dim() * batch.caches.first().map_or(1, |c| c.cols());
            let idx: Vec<usize> = (0..batch.caches.len()).collect();
            let partials = par::map_chunks(self.exec, &idx, VJP_CHUNK, |_, chunk| {
                let mut g = vec![0.0; net.layer_param_count()];
                for &s in chunk {
                    let a = &adj[batch.first_leaf[s]..batch.first_leaf[s] + width];
                    if a.iter().all(|&v| v == 0.0) {
                        continue;
                    }
                    net.jet_vjp(params, &batch.caches[s], a, &mut g);
                }
                g
            });
            let target = &mut grads[batch.net];
            for g in partials {
                for (t, v) in target.iter_mut().zip(g) {
                    *t += v;
                }
            }
        }
        for &(net, index, leaf) in self.direct.borrow().iter() {
            if nets[net].trainable {
                grads[net][index] += adj[leaf];
            }
        }
        for (e, g) in nets.iter().zip(&grads) {
            if e.trainable && !g.is_finite() {
                return Err(Error::NonFinite("parameter gradient".into()));
            }
        }
        Ok(Gradients { nets: grads })
    }
}

/// Loss value and exact parameter gradient of a loss built on one network.
pub fn loss_param_grad<F>(net: &Mlp, params: &ParamVector, loss: F) -> Result<(f64, ParamVector)>
where
    F: for<'g> FnOnce(&'g JetGraph<'_>, NetId) -> Result<Var<'g>>,
{
    let graph = JetGraph::new(Exec::Sequential);
    let id = graph.network(net, params, true)?;
    let l = loss(&graph, id)?;
    let value = l.value();
    let mut g = graph.backward(l)?;
    Ok((value, g.take(id)))
}
