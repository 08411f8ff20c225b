//! Scalar reverse-mode tape.
//!
//! Every node stores at most two parents with their local partial
//! derivatives. Leaves have none. A single reverse sweep over the node list
//! yields the adjoint of every node.

use std::cell::RefCell;
use std::ops::{Add, Div, Mul, Neg, Sub};

const NONE: u32 = u32::MAX;

#[derive(Clone, Copy, Debug)]
struct Node {
    parents: [u32; 2],
    partials: [f64; 2],
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// A scalar recorded on a [`Tape`].
#[derive(Clone, Copy, Debug)]
pub struct Var<'t> {
    tape: &'t Tape,
    index: u32,
    value: f64,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, parents: [u32; 2], partials: [f64; 2]) -> u32 {
        let mut nodes = self.nodes.borrow_mut();
        let index = nodes.len() as u32;
        nodes.push(Node { parents, partials });
        index
    }

    /// A new independent variable.
    pub fn var(&self, value: f64) -> Var<'_> {
        let index = self.push([NONE, NONE], [0.0, 0.0]);
        Var { tape: self, index, value }
    }

    /// A constant: a leaf whose adjoint nobody reads.
    pub fn constant(&self, value: f64) -> Var<'_> {
        self.var(value)
    }

    /// Sum of many variables as a single chain of nodes.
    pub fn sum<'t, I: IntoIterator<Item = Var<'t>>>(&'t self, items: I) -> Var<'t> {
        let mut acc = self.constant(0.0);
        for v in items {
            acc = acc + v;
        }
        acc
    }

    /// Adjoints `∂out/∂node` for every node on the tape.
    pub fn gradient(&self, out: Var<'_>) -> Vec<f64> {
        assert!(std::ptr::eq(out.tape, self), "variable recorded on another tape");
        let nodes = self.nodes.borrow();
        let mut adj = vec![0.0; nodes.len()];
        adj[out.index as usize] = 1.0;
        for i in (0..=out.index as usize).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            let node = nodes[i];
            for k in 0..2 {
                let p = node.parents[k];
                if p != NONE {
                    adj[p as usize] += a * node.partials[k];
                }
            }
        }
        adj
    }
}

impl<'t> Var<'t> {
    pub fn value(self) -> f64 {
        self.value
    }

    pub fn index(self) -> usize {
        self.index as usize
    }

    pub fn tape(self) -> &'t Tape {
        self.tape
    }

    fn unary(self, value: f64, partial: f64) -> Self {
        let index = self.tape.push([self.index, NONE], [partial, 0.0]);
        Var { tape: self.tape, index, value }
    }

    fn binary(self, other: Self, value: f64, da: f64, db: f64) -> Self {
        debug_assert!(std::ptr::eq(self.tape, other.tape));
        let index = self.tape.push([self.index, other.index], [da, db]);
        Var { tape: self.tape, index, value }
    }

    pub fn square(self) -> Self {
        self.unary(self.value * self.value, 2.0 * self.value)
    }

    pub fn exp(self) -> Self {
        let e = self.value.exp();
        self.unary(e, e)
    }

    pub fn ln(self) -> Self {
        self.unary(self.value.ln(), 1.0 / self.value)
    }

    pub fn sin(self) -> Self {
        let (s, c) = self.value.sin_cos();
        self.unary(s, c)
    }

    pub fn cos(self) -> Self {
        let (s, c) = self.value.sin_cos();
        self.unary(c, -s)
    }

    pub fn tanh(self) -> Self {
        let t = self.value.tanh();
        self.unary(t, 1.0 - t * t)
    }

    pub fn sqrt(self) -> Self {
        let r = self.value.sqrt();
        self.unary(r, 0.5 / r)
    }

    pub fn powi(self, n: i32) -> Self {
        self.unary(self.value.powi(n), n as f64 * self.value.powi(n - 1))
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Self) -> Self {
        self.binary(rhs, self.value + rhs.value, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Self) -> Self {
        self.binary(rhs, self.value - rhs.value, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Self) -> Self {
        self.binary(rhs, self.value * rhs.value, rhs.value, self.value)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: Self) -> Self {
        let q = self.value / rhs.value;
        self.binary(rhs, q, 1.0 / rhs.value, -q / rhs.value)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Self {
        self.unary(-self.value, -1.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: f64) -> Self {
        self.unary(self.value + rhs, 1.0)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: f64) -> Self {
        self.unary(self.value - rhs, 1.0)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: f64) -> Self {
        self.unary(self.value * rhs, rhs)
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: f64) -> Self {
        self.unary(self.value / rhs, 1.0 / rhs)
    }
}

impl<'t> Add<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        rhs + self
    }
}

impl<'t> Sub<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        rhs.unary(self - rhs.value, -1.0)
    }
}

impl<'t> Mul<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        rhs * self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule() {
        let tape = Tape::new();
        let x = tape.var(3.0);
        let y = tape.var(-2.0);
        let f = x * x * y + x.sin();
        let g = tape.gradient(f);
        assert_eq!(f.value(), -18.0 + 3.0f64.sin());
        assert!((g[x.index()] - (2.0 * 3.0 * -2.0 + 3.0f64.cos())).abs() < 1e-15);
        assert_eq!(g[y.index()], 9.0);
    }

    #[test]
    fn quotient_and_log() {
        let tape = Tape::new();
        let x = tape.var(2.0);
        let f = (x.exp() / x).ln(); // x - ln x
        let g = tape.gradient(f);
        assert!((g[x.index()] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn constants_have_no_influence() {
        let tape = Tape::new();
        let x = tape.var(1.5);
        let f = 2.0 * x - 1.0 + (3.0 - x) * 0.5;
        let g = tape.gradient(f);
        assert_eq!(g[x.index()], 1.5);
    }
}
