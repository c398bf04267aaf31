//! Append-only Wengert tape for scalar reverse-mode differentiation.
//!
//! Every recorded operation stores its parents and local partial derivatives,
//! so a single reverse sweep yields the adjoint of one output with respect to
//! every node. Parents always precede their children, which makes the reverse
//! sweep a plain backwards loop over the node list.

use std::cell::{Cell, RefCell};
use std::fmt;

use super::scalar::Scalar;
use crate::error::{Error, Result};

pub const DEFAULT_EPS: f64 = 1e-12;

/// Kind of a recorded node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Exp,
    Log,
    Pow,
    Sqrt,
    Sigmoid,
    Softplus,
    NormCdf,
}

impl OpKind {
    pub fn name(self) -> &'static str {
        match self {
            OpKind::Leaf => "leaf",
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::Div => "div",
            OpKind::Neg => "neg",
            OpKind::Exp => "exp",
            OpKind::Log => "log",
            OpKind::Pow => "pow",
            OpKind::Sqrt => "sqrt",
            OpKind::Sigmoid => "sigmoid",
            OpKind::Softplus => "softplus",
            OpKind::NormCdf => "norm_cdf",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Exp,
    Log,
    Neg,
    /// `x^c` for a constant exponent `c`.
    PowConst,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Node {
    pub kind: OpKind,
    pub arity: u8,
    pub parents: [u32; 2],
    pub partials: [f64; 2],
}

/// Recording of scalar operations.
///
/// A tape is single-writer. Monte Carlo paths each own their own tape.
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    values: RefCell<Vec<f64>>,
    leaves: RefCell<Vec<u32>>,
    eps: f64,
    guard_hits: Cell<u64>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tape")
            .field("nodes", &self.len())
            .field("leaves", &self.leaves.borrow().len())
            .field("eps", &self.eps)
            .field("guard_hits", &self.guard_hits.get())
            .finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::with_eps(DEFAULT_EPS)
    }

    /// Tape whose division and log guards use `eps`.
    pub fn with_eps(eps: f64) -> Self {
        assert!(eps > 0.0, "guard eps must be positive");
        Tape {
            nodes: RefCell::new(Vec::with_capacity(1024)),
            values: RefCell::new(Vec::with_capacity(1024)),
            leaves: RefCell::new(Vec::new()),
            eps,
            guard_hits: Cell::new(0),
        }
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves.borrow().len()
    }

    /// Number of times a division or log guard had to step in.
    pub fn guard_hits(&self) -> u64 {
        self.guard_hits.get()
    }

    pub(crate) fn flag_guard(&self) {
        self.guard_hits.set(self.guard_hits.get() + 1);
    }

    /// Registers an independent variable.
    pub fn var(&self, value: f64) -> Var<'_> {
        let idx = self.push(
            Node {
                kind: OpKind::Leaf,
                arity: 0,
                parents: [0; 2],
                partials: [0.0; 2],
            },
            value,
        );
        self.leaves.borrow_mut().push(idx);
        Var {
            tape: Some(self),
            idx,
            value,
        }
    }

    pub fn value(&self, node: usize) -> f64 {
        self.values.borrow()[node]
    }

    /// `(kind, parents, partials)` of a node, for inspection.
    pub fn node(&self, node: usize) -> (OpKind, Vec<usize>, Vec<f64>) {
        let n = self.nodes.borrow()[node];
        let a = n.arity as usize;
        (
            n.kind,
            n.parents[..a].iter().map(|&p| p as usize).collect(),
            n.partials[..a].to_vec(),
        )
    }

    fn push(&self, node: Node, value: f64) -> u32 {
        let mut nodes = self.nodes.borrow_mut();
        let idx = u32::try_from(nodes.len()).expect("tape exceeds u32 node capacity");
        nodes.push(node);
        self.values.borrow_mut().push(value);
        idx
    }

    pub(crate) fn push_unary(&self, kind: OpKind, parent: u32, partial: f64, value: f64) -> u32 {
        self.push(
            Node {
                kind,
                arity: 1,
                parents: [parent, 0],
                partials: [partial, 0.0],
            },
            value,
        )
    }

    pub(crate) fn push_binary(
        &self,
        kind: OpKind,
        parents: [u32; 2],
        partials: [f64; 2],
        value: f64,
    ) -> u32 {
        self.push(
            Node {
                kind,
                arity: 2,
                parents,
                partials,
            },
            value,
        )
    }

    /// Records `a op b`.
    pub fn record_binary<'t>(&'t self, op: BinaryOp, a: Var<'t>, b: Var<'t>) -> Var<'t> {
        match op {
            BinaryOp::Add => a + b,
            BinaryOp::Sub => a - b,
            BinaryOp::Mul => a * b,
            BinaryOp::Div => a.div_guarded(b, self.eps),
        }
    }

    /// Records a unary operation. `c` is the exponent for [`UnaryOp::PowConst`].
    pub fn record_unary<'t>(&'t self, op: UnaryOp, a: Var<'t>, c: Option<f64>) -> Result<Var<'t>> {
        match op {
            UnaryOp::Exp => Ok(a.exp()),
            UnaryOp::Neg => Ok(-a),
            UnaryOp::PowConst => {
                let c = c.ok_or_else(|| Error::Config("pow_const needs an exponent".into()))?;
                Ok(a.powf(c))
            }
            UnaryOp::Log => {
                if a.value <= -self.eps {
                    return Err(Error::LogDomain {
                        node: a.idx as usize,
                        value: a.value,
                    });
                }
                Ok(a.ln_guarded(self.eps))
            }
        }
    }

    /// Reverse sweep from `output`. The tape itself is left untouched.
    pub fn backward(&self, output: Var<'_>) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        let values = self.values.borrow();
        let mut adjoint = vec![0.0f64; nodes.len()];
        if let Some(t) = output.tape {
            assert!(std::ptr::eq(t, self), "output recorded on another tape");
            adjoint[output.idx as usize] = 1.0;
            for i in (0..=output.idx as usize).rev() {
                let a = adjoint[i];
                if a == 0.0 {
                    continue;
                }
                let node = &nodes[i];
                if a.is_nan() || values[i].is_nan() {
                    return Err(Error::NanInBackward {
                        node: i,
                        kind: node.kind.name(),
                    });
                }
                for k in 0..node.arity as usize {
                    let contrib = a * node.partials[k];
                    if contrib.is_nan() {
                        return Err(Error::NanInBackward {
                            node: i,
                            kind: node.kind.name(),
                        });
                    }
                    adjoint[node.parents[k] as usize] += contrib;
                }
            }
        }
        Ok(Gradients {
            adjoint,
            leaves: self.leaves.borrow().clone(),
        })
    }
}

/// Adjoints produced by one reverse sweep.
#[derive(Debug, Clone)]
pub struct Gradients {
    adjoint: Vec<f64>,
    leaves: Vec<u32>,
}

impl Gradients {
    /// Derivative of the output with respect to `v`. Zero for constants.
    pub fn wrt(&self, v: Var<'_>) -> f64 {
        if v.tape.is_none() {
            return 0.0;
        }
        self.adjoint.get(v.idx as usize).copied().unwrap_or(0.0)
    }

    /// Gradient over leaf variables, in registration order.
    pub fn leaf_gradients(&self) -> Vec<f64> {
        self.leaves
            .iter()
            .map(|&i| self.adjoint[i as usize])
            .collect()
    }
}

/// Scalar tracked on a [`Tape`], or an untracked constant.
///
/// Constants carry no tape, and operations on constants only are never
/// recorded.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    pub(crate) tape: Option<&'t Tape>,
    pub(crate) idx: u32,
    pub(crate) value: f64,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.tape {
            Some(_) => write!(f, "Var(#{} = {})", self.idx, self.value),
            None => write!(f, "Var(const {})", self.value),
        }
    }
}

impl<'t> Var<'t> {
    pub fn constant(value: f64) -> Self {
        Var {
            tape: None,
            idx: 0,
            value,
        }
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    /// Node index, or `None` for a constant.
    pub fn node_id(&self) -> Option<usize> {
        self.tape.map(|_| self.idx as usize)
    }

    pub fn is_constant(&self) -> bool {
        self.tape.is_none()
    }

    pub(crate) fn unary(self, kind: OpKind, value: f64, partial: f64) -> Self {
        match self.tape {
            None => Var::constant(value),
            Some(t) => Var {
                tape: Some(t),
                idx: t.push_unary(kind, self.idx, partial, value),
                value,
            },
        }
    }

    pub(crate) fn binary(self, rhs: Self, kind: OpKind, value: f64, da: f64, db: f64) -> Self {
        match (self.tape, rhs.tape) {
            (None, None) => Var::constant(value),
            (Some(t), None) => Var {
                tape: Some(t),
                idx: t.push_unary(kind, self.idx, da, value),
                value,
            },
            (None, Some(t)) => Var {
                tape: Some(t),
                idx: t.push_unary(kind, rhs.idx, db, value),
                value,
            },
            (Some(t), Some(u)) => {
                assert!(std::ptr::eq(t, u), "operands recorded on different tapes");
                Var {
                    tape: Some(t),
                    idx: t.push_binary(kind, [self.idx, rhs.idx], [da, db], value),
                    value,
                }
            }
        }
    }

    pub(crate) fn flag_guard(&self) {
        if let Some(t) = self.tape {
            t.flag_guard();
        }
    }
}
