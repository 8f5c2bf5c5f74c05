//! Tape-based reverse-mode automatic differentiation over scalar graphs.
//!
//! A [`Tape`] records every operation as a node holding its operands and
//! cached value. [`Var`] is a cheap `Copy` handle into a tape; arithmetic
//! on vars appends nodes. [`Tape::backward`] walks the nodes in reverse and
//! accumulates adjoints.
//!
//! ```
//! use evpinn::autodiff::Tape;
//!
//! let tape = Tape::new();
//! let x = tape.lift(2.0);
//! let y = tape.lift(3.0);
//! let f = x * y;
//! let grads = tape.backward(f).unwrap();
//! assert_eq!(grads.wrt(x), 3.0);
//! assert_eq!(grads.wrt(y), 2.0);
//! ```
//!
//! Fallible operations (division, logarithm, non-integer powers) go through
//! [`Tape::apply`] or the `try_*` methods on [`Var`] and report domain
//! violations as [`AutodiffError`]. Overflow anywhere in the graph is caught
//! by [`Tape::backward`].

use std::cell::RefCell;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AutodiffError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("logarithm of non-positive value {0}")]
    LogDomain(f64),
    #[error("power {exponent} undefined for base {base}")]
    PowDomain { base: f64, exponent: f64 },
    #[error("{op} expects {expected} operand(s), got {got}")]
    Arity {
        op: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite operand {0}")]
    NonFiniteOperand(f64),
    #[error("arithmetic overflow at tape node {node}")]
    Overflow { node: usize },
    #[error("operand does not belong to this tape")]
    ForeignVar,
}

/// Operation kinds accepted by [`Tape::apply`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OpKind {
    Add,
    Sub,
    Mul,
    Div,
    /// `x^p` for a constant exponent `p`.
    PowConst(f64),
    Tanh,
    Exp,
    Ln,
    Neg,
    Abs,
}

impl OpKind {
    fn arity(self) -> usize {
        match self {
            OpKind::Add | OpKind::Sub | OpKind::Mul | OpKind::Div => 2,
            _ => 1,
        }
    }

    fn name(self) -> &'static str {
        match self {
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::Div => "div",
            OpKind::PowConst(_) => "pow",
            OpKind::Tanh => "tanh",
            OpKind::Exp => "exp",
            OpKind::Ln => "ln",
            OpKind::Neg => "neg",
            OpKind::Abs => "abs",
        }
    }

    fn eval(self, a: f64, b: f64) -> f64 {
        match self {
            OpKind::Add => a + b,
            OpKind::Sub => a - b,
            OpKind::Mul => a * b,
            OpKind::Div => a / b,
            OpKind::PowConst(p) => a.powf(p),
            OpKind::Tanh => a.tanh(),
            OpKind::Exp => a.exp(),
            OpKind::Ln => a.ln(),
            OpKind::Neg => -a,
            OpKind::Abs => a.abs(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum NodeOp {
    Leaf,
    Op(OpKind),
}

#[derive(Debug, Clone, Copy)]
struct Node {
    op: NodeOp,
    lhs: usize,
    rhs: usize,
    value: f64,
}

/// Append-only record of a scalar computation.
///
/// Single-threaded by construction (`!Sync`); independent tapes can live on
/// separate threads.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tape").field("len", &self.len()).finish()
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
    value: f64,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("value", &self.value)
            .finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(capacity: usize) -> Self {
        Self {
            nodes: RefCell::new(Vec::with_capacity(capacity)),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drops every node. Outstanding vars are invalidated by the borrow.
    pub fn clear(&mut self) {
        self.nodes.get_mut().clear();
    }

    fn push(&self, op: NodeOp, lhs: usize, rhs: usize, value: f64) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        debug_assert!(matches!(op, NodeOp::Leaf) || (lhs < id && rhs < id));
        nodes.push(Node {
            op,
            lhs,
            rhs,
            value,
        });
        Var {
            tape: self,
            id,
            value,
        }
    }

    /// Records a leaf holding `value`.
    pub fn lift(&self, value: f64) -> Var<'_> {
        let id = self.len();
        self.push(NodeOp::Leaf, id, id, value)
    }

    /// Records `op` applied to `operands`, validating arity and domain.
    pub fn apply<'t>(&'t self, op: OpKind, operands: &[Var<'t>]) -> Result<Var<'t>, AutodiffError> {
        if operands.len() != op.arity() {
            return Err(AutodiffError::Arity {
                op: op.name(),
                expected: op.arity(),
                got: operands.len(),
            });
        }
        for v in operands {
            if !std::ptr::eq(v.tape, self) {
                return Err(AutodiffError::ForeignVar);
            }
            if !v.value.is_finite() {
                return Err(AutodiffError::NonFiniteOperand(v.value));
            }
        }
        let a = operands[0];
        let b = operands.get(1).copied().unwrap_or(a);
        match op {
            OpKind::Div if b.value == 0.0 => return Err(AutodiffError::DivisionByZero),
            OpKind::Ln if a.value <= 0.0 => return Err(AutodiffError::LogDomain(a.value)),
            OpKind::PowConst(p) => {
                let integral = p.fract() == 0.0;
                if (a.value < 0.0 && !integral) || (a.value == 0.0 && p < 1.0 && p != 0.0) {
                    return Err(AutodiffError::PowDomain {
                        base: a.value,
                        exponent: p,
                    });
                }
            }
            _ => {}
        }
        let value = op.eval(a.value, b.value);
        let node = self.push(NodeOp::Op(op), a.id, b.id, value);
        if !value.is_finite() {
            return Err(AutodiffError::Overflow { node: node.id });
        }
        Ok(node)
    }

    fn unchecked(&self, op: OpKind, a: Var<'_>, b: Var<'_>) -> Var<'_> {
        debug_assert!(std::ptr::eq(a.tape, self) && std::ptr::eq(b.tape, self));
        self.push(NodeOp::Op(op), a.id, b.id, op.eval(a.value, b.value))
    }

    /// Recomputes every node from the leaves, returning the fresh values.
    pub fn replay(&self) -> Vec<f64> {
        let nodes = self.nodes.borrow();
        let mut values = Vec::with_capacity(nodes.len());
        for n in nodes.iter() {
            let v = match n.op {
                NodeOp::Leaf => n.value,
                NodeOp::Op(op) => op.eval(values[n.lhs], values[n.rhs]),
            };
            values.push(v);
        }
        values
    }

    /// True when every operation node only references earlier nodes.
    pub fn is_topological(&self) -> bool {
        self.nodes
            .borrow()
            .iter()
            .enumerate()
            .all(|(i, n)| matches!(n.op, NodeOp::Leaf) || (n.lhs < i && n.rhs < i))
    }

    /// Reverse accumulation from `output` with seed 1.
    pub fn backward(&self, output: Var<'_>) -> Result<Gradients, AutodiffError> {
        if !std::ptr::eq(output.tape, self) {
            return Err(AutodiffError::ForeignVar);
        }
        let nodes = self.nodes.borrow();
        let mut adj = vec![0.0f64; output.id + 1];
        adj[output.id] = 1.0;
        for i in (0..=output.id).rev() {
            let n = nodes[i];
            if !n.value.is_finite() {
                return Err(AutodiffError::Overflow { node: i });
            }
            let g = adj[i];
            if g == 0.0 {
                continue;
            }
            if !g.is_finite() {
                return Err(AutodiffError::Overflow { node: i });
            }
            let NodeOp::Op(op) = n.op else { continue };
            let a = nodes[n.lhs].value;
            let b = nodes[n.rhs].value;
            match op {
                OpKind::Add => {
                    adj[n.lhs] += g;
                    adj[n.rhs] += g;
                }
                OpKind::Sub => {
                    adj[n.lhs] += g;
                    adj[n.rhs] -= g;
                }
                OpKind::Mul => {
                    adj[n.lhs] += g * b;
                    adj[n.rhs] += g * a;
                }
                OpKind::Div => {
                    adj[n.lhs] += g / b;
                    adj[n.rhs] -= g * a / (b * b);
                }
                OpKind::PowConst(p) => {
                    if p != 0.0 {
                        adj[n.lhs] += g * p * a.powf(p - 1.0);
                    }
                }
                OpKind::Tanh => adj[n.lhs] += g * (1.0 - n.value * n.value),
                OpKind::Exp => adj[n.lhs] += g * n.value,
                OpKind::Ln => adj[n.lhs] += g / a,
                OpKind::Neg => adj[n.lhs] -= g,
                // subgradient 0 at the kink
                OpKind::Abs => {
                    if a != 0.0 {
                        adj[n.lhs] += g * a.signum();
                    }
                }
            }
        }
        if let Some(node) = adj.iter().position(|g| !g.is_finite()) {
            return Err(AutodiffError::Overflow { node });
        }
        let leaves = nodes[..=output.id]
            .iter()
            .enumerate()
            .filter(|(_, n)| matches!(n.op, NodeOp::Leaf))
            .map(|(i, _)| i)
            .collect();
        Ok(Gradients { adj, leaves })
    }
}

/// Adjoints produced by [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    adj: Vec<f64>,
    leaves: Vec<usize>,
}

impl Gradients {
    /// Partial derivative of the output with respect to `v`; zero when `v`
    /// was recorded after the output or does not reach it.
    pub fn wrt(&self, v: Var<'_>) -> f64 {
        self.adj.get(v.id).copied().unwrap_or(0.0)
    }

    pub fn wrt_all(&self, vars: &[Var<'_>]) -> Vec<f64> {
        vars.iter().map(|&v| self.wrt(v)).collect()
    }

    /// `(leaf id, partial)` for every leaf recorded up to the output.
    pub fn leaves(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.leaves.iter().map(|&i| (i, self.adj[i]))
    }
}

impl<'t> Var<'t> {
    pub fn value(self) -> f64 {
        self.value
    }

    pub fn id(self) -> usize {
        self.id
    }

    pub fn tape(self) -> &'t Tape {
        self.tape
    }

    /// Lifts a constant onto the same tape.
    pub fn constant(self, value: f64) -> Var<'t> {
        self.tape.lift(value)
    }

    pub fn tanh(self) -> Var<'t> {
        self.tape.unchecked(OpKind::Tanh, self, self)
    }

    pub fn exp(self) -> Var<'t> {
        self.tape.unchecked(OpKind::Exp, self, self)
    }

    pub fn abs(self) -> Var<'t> {
        self.tape.unchecked(OpKind::Abs, self, self)
    }

    /// Integer power; defined for every base.
    pub fn powi(self, n: u32) -> Var<'t> {
        self.tape.unchecked(OpKind::PowConst(n as f64), self, self)
    }

    pub fn try_powf(self, p: f64) -> Result<Var<'t>, AutodiffError> {
        self.tape.apply(OpKind::PowConst(p), &[self])
    }

    pub fn try_div(self, rhs: Var<'t>) -> Result<Var<'t>, AutodiffError> {
        self.tape.apply(OpKind::Div, &[self, rhs])
    }

    pub fn try_ln(self) -> Result<Var<'t>, AutodiffError> {
        self.tape.apply(OpKind::Ln, &[self])
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        self.tape.unchecked(OpKind::Add, self, rhs)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        self.tape.unchecked(OpKind::Sub, self, rhs)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        self.tape.unchecked(OpKind::Mul, self, rhs)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.tape.unchecked(OpKind::Neg, self, self)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: f64) -> Var<'t> {
        self + self.constant(rhs)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: f64) -> Var<'t> {
        self - self.constant(rhs)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: f64) -> Var<'t> {
        self * self.constant(rhs)
    }
}

impl<'t> Mul<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        rhs.constant(self) * rhs
    }
}

/// Scalars the physics code is generic over: plain `f64` or a tape [`Var`].
pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
{
    fn value(self) -> f64;
    fn int_pow(self, n: u32) -> Self;
    fn tanh_(self) -> Self;
    fn checked_div(self, rhs: Self) -> Result<Self, AutodiffError>;
}

impl Real for f64 {
    fn value(self) -> f64 {
        self
    }

    fn int_pow(self, n: u32) -> Self {
        self.powf(n as f64)
    }

    fn tanh_(self) -> Self {
        self.tanh()
    }

    fn checked_div(self, rhs: Self) -> Result<Self, AutodiffError> {
        if rhs == 0.0 {
            Err(AutodiffError::DivisionByZero)
        } else {
            Ok(self / rhs)
        }
    }
}

impl<'t> Real for Var<'t> {
    fn value(self) -> f64 {
        self.value
    }

    fn int_pow(self, n: u32) -> Self {
        self.powi(n)
    }

    fn tanh_(self) -> Self {
        self.tanh()
    }

    fn checked_div(self, rhs: Self) -> Result<Self, AutodiffError> {
        self.try_div(rhs)
    }
}

/// Compares reverse-mode gradients of `f` at `at` against central
/// differences with step `h`.
///
/// Returns `max_i |analytic_i - numeric_i| / max(1, |analytic_i|)`.
pub fn check_gradient<F>(f: F, at: &[f64], h: f64) -> Result<f64, AutodiffError>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>, AutodiffError>,
{
    assert!(h > 0.0, "finite-difference step must be positive");
    let analytic = {
        let tape = Tape::new();
        let xs: Vec<Var<'_>> = at.iter().map(|&x| tape.lift(x)).collect();
        let out = f(&tape, &xs)?;
        tape.backward(out)?.wrt_all(&xs)
    };
    let eval = |point: &[f64]| -> Result<f64, AutodiffError> {
        let tape = Tape::new();
        let xs: Vec<Var<'_>> = point.iter().map(|&x| tape.lift(x)).collect();
        Ok(f(&tape, &xs)?.value())
    };
    let mut point = at.to_vec();
    let mut worst = 0.0f64;
    for i in 0..at.len() {
        point[i] = at[i] + h;
        let plus = eval(&point)?;
        point[i] = at[i] - h;
        let minus = eval(&point)?;
        point[i] = at[i];
        let numeric = (plus - minus) / (2.0 * h);
        let err = (analytic[i] - numeric).abs() / analytic[i].abs().max(1.0);
        worst = worst.max(err);
    }
    Ok(worst)
}
