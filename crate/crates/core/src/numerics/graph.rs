//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation in creation order, so the tape is
//! already topologically sorted and cycles cannot be expressed. Each node keeps
//! its forward value and a boxed vector-Jacobian product. Parameters enter the
//! tape through [`Graph::param`] and their gradients are handed back to the
//! [`ParamStore`] with [`Graph::accumulate_into`].

use std::collections::BTreeMap;

use super::params::ParamStore;
use super::tensor::Tensor;
use crate::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F64,
    /// Every op output is rounded to the nearest `f32`.
    F32,
}

/// Inputs of a vector-Jacobian product.
pub struct VjpCtx<'a> {
    pub out_grad: &'a [f64],
    pub inputs: Vec<&'a Tensor>,
    pub output: &'a Tensor,
}

pub(crate) type Vjp = Box<dyn Fn(&VjpCtx) -> Vec<Option<Vec<f64>>>>;

struct Node {
    value: Tensor,
    parents: Vec<Var>,
    vjp: Option<Vjp>,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    params: BTreeMap<String, Var>,
    precision: Precision,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_precision(precision: Precision) -> Self {
        Graph {
            precision,
            ..Self::default()
        }
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push_node(&mut self, mut value: Tensor, parents: Vec<Var>, vjp: Option<Vjp>, leaf_grad: bool) -> Var {
        if self.precision == Precision::F32 {
            for x in value.data_mut() {
                *x = *x as f32 as f64;
            }
        }
        let requires_grad = leaf_grad || parents.iter().any(|p| self.nodes[p.0].requires_grad);
        let vjp = if requires_grad { vjp } else { None };
        value.grad = None;
        self.nodes.push(Node {
            value,
            parents,
            vjp,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a derived value. `vjp` is dropped if no parent needs gradients.
    pub(crate) fn push(&mut self, value: Tensor, parents: Vec<Var>, vjp: Vjp) -> Var {
        self.push_node(value, parents, Some(vjp), false)
    }

    /// A value that never receives gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_node(value, vec![], None, false)
    }

    /// A leaf that receives gradient; read it back with [`Graph::grad`].
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push_node(value, vec![], None, true)
    }

    /// Registers (once) a parameter from the store as a gradient leaf.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Var> {
        if let Some(&v) = self.params.get(name) {
            return Ok(v);
        }
        let t = store
            .get(name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown parameter {name}")))?;
        let v = self.leaf(t.clone());
        self.params.insert(name.to_string(), v);
        Ok(v)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn data(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.data()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Back-propagates from a single-element `loss`. Gradients accumulate
    /// across calls until [`Graph::zero_grad`].
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::Shape(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut local: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        local[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = local[idx].take() else { continue };
            let node = &self.nodes[idx];
            if let Some(vjp) = node.vjp.as_ref() {
                let ctx = VjpCtx {
                    out_grad: &g,
                    inputs: node.parents.iter().map(|p| &self.nodes[p.0].value).collect(),
                    output: &node.value,
                };
                let pg = vjp(&ctx);
                debug_assert_eq!(pg.len(), node.parents.len());
                for (p, pg) in node.parents.iter().zip(pg) {
                    let (Some(pg), true) = (pg, self.nodes[p.0].requires_grad) else { continue };
                    match local[p.0].as_mut() {
                        Some(acc) => acc.iter_mut().zip(&pg).for_each(|(a, b)| *a += b),
                        None => local[p.0] = Some(pg),
                    }
                }
            }
            local[idx] = Some(g);
        }
        if self.grads.len() < self.nodes.len() {
            self.grads.resize(self.nodes.len(), None);
        }
        for (idx, g) in local.into_iter().enumerate() {
            let Some(g) = g else { continue };
            match self.grads[idx].as_mut() {
                Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                None => self.grads[idx] = Some(g),
            }
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.grads.clear();
    }

    /// Adds the gradients of all registered parameters into the store.
    pub fn accumulate_into(&self, store: &mut ParamStore) {
        for (name, v) in &self.params {
            if let Some(g) = self.grad(*v) {
                if let Some(t) = store.get_mut(name) {
                    t.accumulate_grad(g);
                }
            }
        }
    }

    pub fn params(&self) -> impl Iterator<Item = (&str, Var)> {
        self.params.iter().map(|(k, v)| (k.as_str(), *v))
    }
}
