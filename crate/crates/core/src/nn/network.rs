use super::layer::{Layer, LayerKind, LayerSpec};
use super::tensor::{Param, Tensor};
use crate::error::{HarError, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;

/// A fixed stack of layers with exact reverse-mode backpropagation.
#[derive(Debug, Clone)]
pub struct Network<S> {
    layers: Vec<Layer<S>>,
    specs: Vec<LayerSpec>,
    input_shape: Vec<usize>,
    shapes: Vec<Vec<usize>>,
    has_cache: bool,
}

impl<S: Scalar> Network<S> {
    /// Build and initialize the stack for per-sample input shape `input_shape`.
    pub fn build(specs: &[LayerSpec], input_shape: &[usize], rng: &mut Rng) -> Result<Self> {
        if specs.is_empty() {
            return Err(HarError::invalid("network needs at least one layer"));
        }
        let mut layers = Vec::with_capacity(specs.len());
        let mut shapes = Vec::with_capacity(specs.len());
        let mut shape = input_shape.to_vec();
        for spec in specs {
            let (layer, out) = Layer::build(spec, &shape, rng)?;
            layers.push(layer);
            shapes.push(out.clone());
            shape = out;
        }
        Ok(Network {
            layers,
            specs: specs.to_vec(),
            input_shape: input_shape.to_vec(),
            shapes,
            has_cache: false,
        })
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn layers(&self) -> &[Layer<S>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<S>] {
        &mut self.layers
    }

    /// Per-sample input shape.
    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    /// Per-sample output shape of each layer.
    pub fn layer_shapes(&self) -> &[Vec<usize>] {
        &self.shapes
    }

    pub fn output_shape(&self) -> &[usize] {
        self.shapes.last().unwrap()
    }

    fn check_input(&self, x: &Tensor<S>) -> Result<()> {
        if x.shape().len() != self.input_shape.len() + 1 || x.shape()[1..] != self.input_shape[..] {
            return Err(HarError::shape(format!(
                "network expects [batch, {:?}], got {:?}",
                self.input_shape,
                x.shape()
            )));
        }
        Ok(())
    }

    /// Inference: dropout disabled, batch normalization on running statistics.
    pub fn infer(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        self.check_input(x)?;
        let mut cur = x.clone();
        for layer in &self.layers {
            cur = layer.infer(&cur)?;
        }
        Ok(cur)
    }

    /// Inference that also returns every intermediate layer output, in order.
    /// The final element is identical to what [`Network::infer`] returns.
    pub fn infer_with_taps(&self, x: &Tensor<S>) -> Result<Vec<Tensor<S>>> {
        self.check_input(x)?;
        let mut taps: Vec<Tensor<S>> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let next = layer.infer(taps.last().unwrap_or(x))?;
            taps.push(next);
        }
        Ok(taps)
    }

    /// Caching forward pass. Pass the dropout generator for training mode,
    /// `None` for inference behaviour with caches kept (used by gradient checks).
    pub fn forward(&mut self, x: &Tensor<S>, mut training: Option<&mut Rng>) -> Result<Tensor<S>> {
        self.check_input(x)?;
        let mut cur = x.clone();
        for layer in &mut self.layers {
            cur = layer.forward(&cur, training.as_deref_mut())?;
        }
        self.has_cache = true;
        Ok(cur)
    }

    /// Propagate `grad` (w.r.t. the network output) back through every
    /// layer, accumulating parameter gradients. Returns the input gradient.
    pub fn backward(&mut self, grad: &Tensor<S>) -> Result<Tensor<S>> {
        self.backward_range(self.layers.len(), grad)
    }

    /// Backward pass that starts below a trailing softmax, taking the
    /// gradient with respect to the logits.
    pub fn backward_from_logits(&mut self, logits_grad: &Tensor<S>) -> Result<Tensor<S>> {
        match self.layers.last() {
            Some(l) if l.kind() == LayerKind::Softmax => {}
            _ => return Err(HarError::invalid("network does not end in softmax")),
        }
        self.backward_range(self.layers.len() - 1, logits_grad)
    }

    fn backward_range(&mut self, end: usize, grad: &Tensor<S>) -> Result<Tensor<S>> {
        if !self.has_cache {
            return Err(HarError::NoForwardCache("network"));
        }
        let mut g = grad.clone();
        for layer in self.layers[..end].iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok(g)
    }

    pub fn clear_cache(&mut self) {
        self.layers.iter_mut().for_each(Layer::clear_cache);
        self.has_cache = false;
    }

    pub fn zero_grad(&mut self) {
        for layer in &mut self.layers {
            for (_, p) in layer.params_mut() {
                p.zero_grad();
            }
        }
    }

    fn qualified(index: usize, kind: LayerKind, name: &str) -> String {
        format!("{index}.{}.{name}", kind.short_name())
    }

    /// Trainable parameters as `("<index>.<kind>.<name>", param)`.
    pub fn named_params(&self) -> Vec<(String, &Param<S>)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                let kind = l.kind();
                l.params()
                    .into_iter()
                    .map(move |(n, p)| (Self::qualified(i, kind, n), p))
            })
            .collect()
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Param<S>)> {
        self.layers
            .iter_mut()
            .enumerate()
            .flat_map(|(i, l)| {
                let kind = l.kind();
                l.params_mut()
                    .into_iter()
                    .map(move |(n, p)| (Self::qualified(i, kind, n), p))
            })
            .collect()
    }

    /// Every tensor needed to restore the network: parameter values then buffers, per layer.
    pub fn named_state(&self) -> Vec<(String, &Tensor<S>)> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            let kind = l.kind();
            for (n, p) in l.params() {
                out.push((Self::qualified(i, kind, n), &p.value));
            }
            for (n, b) in l.buffers() {
                out.push((Self::qualified(i, kind, n), b));
            }
        }
        out
    }

    /// Overwrite state by name. Every tensor of the network must be supplied
    /// exactly once with a matching shape.
    pub fn load_state(&mut self, state: Vec<(String, Tensor<S>)>) -> Result<()> {
        let mut map: std::collections::BTreeMap<String, Tensor<S>> = std::collections::BTreeMap::new();
        for (name, t) in state {
            if map.insert(name.clone(), t).is_some() {
                return Err(HarError::ModelFormat(format!("duplicate tensor {name}")));
            }
        }
        for (i, l) in self.layers.iter_mut().enumerate() {
            let kind = l.kind();
            for (n, slot) in l.state_mut() {
                let name = Self::qualified(i, kind, n);
                let t = map
                    .remove(&name)
                    .ok_or_else(|| HarError::ModelFormat(format!("missing tensor {name}")))?;
                if t.shape() != slot.shape() {
                    return Err(HarError::ModelFormat(format!(
                        "tensor {name} has shape {:?}, architecture needs {:?}",
                        t.shape(),
                        slot.shape()
                    )));
                }
                *slot = t;
            }
        }
        if let Some(extra) = map.keys().next() {
            return Err(HarError::ModelFormat(format!("unexpected tensor {extra}")));
        }
        self.clear_cache();
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, p)| p.value.len()).sum()
    }

    /// Name of the first parameter or buffer holding a non-finite value.
    pub fn first_non_finite(&self) -> Option<String> {
        self.named_state()
            .into_iter()
            .find(|(_, t)| !t.all_finite())
            .map(|(n, _)| n)
    }
}
