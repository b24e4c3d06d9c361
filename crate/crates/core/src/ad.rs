//! Reverse-mode automatic differentiation over a flat tape.
//!
//! Model code is written once against the [`Real`] trait. Evaluating it with
//! `f64` gives plain values; evaluating it with [`Var`] records every
//! operation on a [`Tape`], and [`Tape::gradient`] sweeps the recorded nodes
//! backwards to produce exact partial derivatives.
//!
//! Nodes may have any number of parents, so sums and dot products over long
//! vectors cost a single node instead of a chain of binary additions.

use std::cell::RefCell;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use statrs::function::gamma::{digamma, ln_gamma};

/// Scalar type the model equations are generic over.
pub trait Real:
    Copy
    + fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    /// A constant that carries no derivative information.
    fn cst(v: f64) -> Self;
    fn value(&self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn ln_1p(self) -> Self;
    fn sqrt(self) -> Self;
    fn ln_gamma(self) -> Self;
    /// `ln(1 + e^x)`, evaluated without overflow.
    fn softplus(self) -> Self;
    /// `1 / (1 + e^{-x})`.
    fn logistic(self) -> Self;
    fn sum(xs: &[Self]) -> Self;
    /// `Σ coefs[i] * xs[i]`.
    fn dot(coefs: &[f64], xs: &[Self]) -> Self;

    fn square(self) -> Self {
        self * self
    }
}

fn softplus_f64(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn logistic_f64(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Real for f64 {
    #[inline]
    fn cst(v: f64) -> Self {
        v
    }
    #[inline]
    fn value(&self) -> f64 {
        *self
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn ln_1p(self) -> Self {
        f64::ln_1p(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn ln_gamma(self) -> Self {
        ln_gamma(self)
    }
    #[inline]
    fn softplus(self) -> Self {
        softplus_f64(self)
    }
    #[inline]
    fn logistic(self) -> Self {
        logistic_f64(self)
    }
    fn sum(xs: &[Self]) -> Self {
        xs.iter().sum()
    }
    fn dot(coefs: &[f64], xs: &[Self]) -> Self {
        coefs.iter().zip(xs).map(|(c, x)| c * x).sum()
    }
}

const NO_NODE: u32 = u32::MAX;

#[derive(Default)]
struct TapeInner {
    /// `(start, len)` into `parents` / `partials` for every node.
    nodes: Vec<(u32, u32)>,
    parents: Vec<u32>,
    partials: Vec<f64>,
}

impl TapeInner {
    fn push(&mut self, parents: &[(u32, f64)]) -> u32 {
        let idx = self.nodes.len() as u32;
        let start = self.parents.len() as u32;
        for &(p, d) in parents {
            self.parents.push(p);
            self.partials.push(d);
        }
        self.nodes.push((start, parents.len() as u32));
        idx
    }
}

/// Recording of one forward evaluation.
#[derive(Default)]
pub struct Tape {
    inner: RefCell<TapeInner>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Drops all recorded nodes but keeps the allocations.
    pub fn clear(&self) {
        let mut t = self.inner.borrow_mut();
        t.nodes.clear();
        t.parents.clear();
        t.partials.clear();
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Registers an independent variable.
    pub fn var(&self, value: f64) -> Var<'_> {
        let idx = self.inner.borrow_mut().push(&[]);
        Var {
            tape: Some(self),
            idx,
            val: value,
        }
    }

    /// Registers a slice of independent variables; their gradient slots are
    /// the node indices `0..values.len()` when called on an empty tape.
    pub fn vars(&self, values: &[f64]) -> Vec<Var<'_>> {
        values.iter().map(|&v| self.var(v)).collect()
    }

    /// Adjoints of `output` with respect to the first `n_inputs` nodes.
    pub fn gradient(&self, output: Var<'_>, n_inputs: usize) -> Vec<f64> {
        let t = self.inner.borrow();
        let mut adj = vec![0.0; t.nodes.len()];
        if output.idx == NO_NODE {
            adj.truncate(n_inputs);
            adj.resize(n_inputs, 0.0);
            return adj;
        }
        adj[output.idx as usize] = 1.0;
        for i in (0..=output.idx as usize).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            let (start, len) = t.nodes[i];
            let (start, len) = (start as usize, len as usize);
            for k in start..start + len {
                adj[t.parents[k] as usize] += a * t.partials[k];
            }
        }
        adj.truncate(n_inputs);
        adj
    }
}

/// A scalar tracked on a [`Tape`]. Constants have no tape and no node.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: Option<&'t Tape>,
    idx: u32,
    val: f64,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var({})", self.val)
    }
}

impl<'t> Var<'t> {
    pub fn constant(val: f64) -> Self {
        Var {
            tape: None,
            idx: NO_NODE,
            val,
        }
    }

    fn unary(self, val: f64, d: f64) -> Self {
        match self.tape {
            None => Var::constant(val),
            Some(tape) => Var {
                tape: Some(tape),
                idx: tape.inner.borrow_mut().push(&[(self.idx, d)]),
                val,
            },
        }
    }

    fn binary(a: Self, b: Self, val: f64, da: f64, db: f64) -> Self {
        match (a.tape, b.tape) {
            (None, None) => Var::constant(val),
            (Some(_), None) => a.unary(val, da),
            (None, Some(_)) => b.unary(val, db),
            (Some(tape), Some(_)) => Var {
                tape: Some(tape),
                idx: tape.inner.borrow_mut().push(&[(a.idx, da), (b.idx, db)]),
                val,
            },
        }
    }

    fn nary(xs: &[Self], partial: impl Fn(usize) -> f64, val: f64) -> Self {
        let Some(tape) = xs.iter().find_map(|x| x.tape) else {
            return Var::constant(val);
        };
        let parents: Vec<(u32, f64)> = xs
            .iter()
            .enumerate()
            .filter(|(_, x)| x.tape.is_some())
            .map(|(i, x)| (x.idx, partial(i)))
            .collect();
        Var {
            tape: Some(tape),
            idx: tape.inner.borrow_mut().push(&parents),
            val,
        }
    }
}

impl Add for Var<'_> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Var::binary(self, rhs, self.val + rhs.val, 1.0, 1.0)
    }
}

impl Sub for Var<'_> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Var::binary(self, rhs, self.val - rhs.val, 1.0, -1.0)
    }
}

impl Mul for Var<'_> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        Var::binary(self, rhs, self.val * rhs.val, rhs.val, self.val)
    }
}

impl Div for Var<'_> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let q = self.val / rhs.val;
        Var::binary(self, rhs, q, 1.0 / rhs.val, -q / rhs.val)
    }
}

impl Neg for Var<'_> {
    type Output = Self;
    fn neg(self) -> Self {
        self.unary(-self.val, -1.0)
    }
}

impl Add<f64> for Var<'_> {
    type Output = Self;
    fn add(self, rhs: f64) -> Self {
        self.unary(self.val + rhs, 1.0)
    }
}

impl Sub<f64> for Var<'_> {
    type Output = Self;
    fn sub(self, rhs: f64) -> Self {
        self.unary(self.val - rhs, 1.0)
    }
}

impl Mul<f64> for Var<'_> {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        self.unary(self.val * rhs, rhs)
    }
}

impl Div<f64> for Var<'_> {
    type Output = Self;
    fn div(self, rhs: f64) -> Self {
        self.unary(self.val / rhs, 1.0 / rhs)
    }
}

impl Real for Var<'_> {
    fn cst(v: f64) -> Self {
        Var::constant(v)
    }
    #[inline]
    fn value(&self) -> f64 {
        self.val
    }
    fn exp(self) -> Self {
        let e = self.val.exp();
        self.unary(e, e)
    }
    fn ln(self) -> Self {
        self.unary(self.val.ln(), 1.0 / self.val)
    }
    fn ln_1p(self) -> Self {
        self.unary(self.val.ln_1p(), 1.0 / (1.0 + self.val))
    }
    fn sqrt(self) -> Self {
        let s = self.val.sqrt();
        self.unary(s, 0.5 / s)
    }
    fn ln_gamma(self) -> Self {
        self.unary(ln_gamma(self.val), digamma(self.val))
    }
    fn softplus(self) -> Self {
        self.unary(softplus_f64(self.val), logistic_f64(self.val))
    }
    fn logistic(self) -> Self {
        let s = logistic_f64(self.val);
        self.unary(s, s * (1.0 - s))
    }
    fn sum(xs: &[Self]) -> Self {
        let val = xs.iter().map(|x| x.val).sum();
        Var::nary(xs, |_| 1.0, val)
    }
    fn dot(coefs: &[f64], xs: &[Self]) -> Self {
        let val = coefs.iter().zip(xs).map(|(c, x)| c * x.val).sum();
        Var::nary(&xs[..coefs.len().min(xs.len())], |i| coefs[i], val)
    }
}
