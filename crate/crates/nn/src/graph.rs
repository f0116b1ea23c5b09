//! Define-by-run tape. A fresh [`Graph`] is built for every forward pass;
//! [`Graph::backward`] walks it in reverse creation order.

use crate::{ParamId, ParamStore, Real, Tensor};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

/// Vector-Jacobian product of one op:
/// `(inputs, output, grad_output, input_needs_grad) -> grad_inputs`.
pub(crate) type BackFn<T> =
    Box<dyn Fn(&[&Tensor<T>], &Tensor<T>, &Tensor<T>, &[bool]) -> Vec<Option<Tensor<T>>>>;

struct Node<T> {
    value: Tensor<T>,
    inputs: Vec<Var>,
    back: Option<BackFn<T>>,
    needs_grad: bool,
    param: Option<ParamId>,
}

pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    /// Forward passes use batch statistics when true.
    pub training: bool,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), training: true }
    }

    pub fn eval() -> Self {
        Self { nodes: Vec::new(), training: false }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Constant input; receives no gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false, None)
    }

    /// Leaf that receives a gradient but is not tied to a parameter.
    pub fn variable(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true, None)
    }

    /// Leaf bound to a stored parameter.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        let trainable = store.is_trainable(id);
        self.leaf(store.get(id).clone(), trainable, Some(id))
    }

    fn leaf(&mut self, value: Tensor<T>, needs_grad: bool, param: Option<ParamId>) -> Var {
        self.nodes.push(Node { value, inputs: Vec::new(), back: None, needs_grad, param });
        Var(self.nodes.len() - 1)
    }

    pub(crate) fn push(&mut self, value: Tensor<T>, inputs: Vec<Var>, back: BackFn<T>) -> Var {
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        let back = if needs_grad { Some(back) } else { None };
        self.nodes.push(Node { value, inputs, back, needs_grad, param: None });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn take_value(&mut self, v: Var) -> Tensor<T> {
        std::mem::replace(&mut self.nodes[v.0].value, Tensor::zeros(&[0]))
    }

    pub fn needs_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Reverse pass from a scalar `root` (seed gradient 1).
    pub fn backward(&self, root: Var) -> Gradients<T> {
        assert_eq!(self.nodes[root.0].value.numel(), 1, "backward root must be a scalar");
        let mut grads: Vec<Option<Tensor<T>>> = (0..=root.0).map(|_| None).collect();
        grads[root.0] = Some(Tensor::full(self.nodes[root.0].value.shape(), T::one()));
        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            let Some(back) = node.back.as_ref() else { continue };
            let Some(g) = grads[idx].take() else { continue };
            let inputs: Vec<&Tensor<T>> = node.inputs.iter().map(|v| &self.nodes[v.0].value).collect();
            let needs: Vec<bool> = node.inputs.iter().map(|v| self.nodes[v.0].needs_grad).collect();
            let in_grads = back(&inputs, &node.value, &g, &needs);
            debug_assert_eq!(in_grads.len(), node.inputs.len());
            for (var, ig) in node.inputs.iter().zip(in_grads) {
                let Some(ig) = ig else { continue };
                if !self.nodes[var.0].needs_grad {
                    continue;
                }
                debug_assert_eq!(ig.shape(), self.nodes[var.0].value.shape());
                match &mut grads[var.0] {
                    Some(acc) => acc.add_assign(&ig),
                    slot @ None => *slot = Some(ig),
                }
            }
        }
        let params = self
            .nodes
            .iter()
            .enumerate()
            .take(root.0 + 1)
            .filter_map(|(i, n)| n.param.map(|p| (i, p)))
            .collect();
        Gradients { grads, params }
    }
}

pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
    params: Vec<(usize, ParamId)>,
}

impl<T: Real> Gradients<T> {
    /// Gradient of a leaf (constant leaves and unreachable nodes give `None`).
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradients of every bound parameter; repeated bindings are summed.
    pub fn params(&self) -> Vec<(ParamId, Tensor<T>)> {
        let mut out: Vec<(ParamId, Tensor<T>)> = Vec::new();
        for &(node, pid) in &self.params {
            let Some(g) = self.grads[node].as_ref() else { continue };
            match out.iter_mut().find(|(p, _)| *p == pid) {
                Some((_, acc)) => acc.add_assign(g),
                None => out.push((pid, g.clone())),
            }
        }
        out.sort_by_key(|(p, _)| p.0);
        out
    }
}
