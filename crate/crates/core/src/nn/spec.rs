//! Model structure: layer list, shape inference and the TOML spec format.
//!
//! ```toml
//! name = "lenet"
//! input = [1, 28, 28]
//! num_classes = 10
//! initializer = "fan_in_uniform"
//!
//! [[layers]]
//! kind = "conv2d"
//! in_channels = 1
//! out_channels = 6
//! kernel = 5
//!
//! [[layers]]
//! kind = "relu"
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ring::{ConvGeometry, PoolGeometry};

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        padding: usize,
    },
    FullyConnected {
        inputs: usize,
        outputs: usize,
    },
    AvgPool {
        kernel: usize,
        stride: usize,
    },
    Relu,
    Flatten,
}

/// Per-sample activation shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActShape {
    Image { c: usize, h: usize, w: usize },
    Flat(usize),
}

impl ActShape {
    pub fn size(&self) -> usize {
        match *self {
            ActShape::Image { c, h, w } => c * h * w,
            ActShape::Flat(n) => n,
        }
    }

    /// Full tensor shape for a batch.
    pub fn with_batch(&self, batch: usize) -> Vec<usize> {
        match *self {
            ActShape::Image { c, h, w } => vec![batch, c, h, w],
            ActShape::Flat(n) => vec![batch, n],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    /// `[channels, height, width]` of one input sample.
    pub input: [usize; 3],
    pub num_classes: usize,
    #[serde(default = "default_initializer")]
    pub initializer: String,
    pub layers: Vec<LayerSpec>,
}

fn default_initializer() -> String {
    "fan_in_uniform".to_string()
}

/// Largest class count the private softmax supports (its reciprocal bound).
pub const MAX_CLASSES: usize = 200;

impl LayerSpec {
    pub fn conv_geometry(&self, batch: usize, input: ActShape) -> Result<ConvGeometry> {
        match (self, input) {
            (&LayerSpec::Conv2d { in_channels, out_channels, kernel, stride, padding }, ActShape::Image { c, h, w }) => {
                if c != in_channels {
                    return Err(Error::shape(format!("conv expects {in_channels} channels, got {c}")));
                }
                let g = ConvGeometry {
                    batch,
                    in_channels,
                    height: h,
                    width: w,
                    out_channels,
                    kernel_h: kernel,
                    kernel_w: kernel,
                    stride,
                    padding,
                };
                g.validate()?;
                Ok(g)
            }
            _ => Err(Error::shape(format!("{self:?} cannot take input {input:?}"))),
        }
    }

    pub fn pool_geometry(&self, batch: usize, input: ActShape) -> Result<PoolGeometry> {
        match (self, input) {
            (&LayerSpec::AvgPool { kernel, stride }, ActShape::Image { c, h, w }) => {
                let g = PoolGeometry { batch, channels: c, height: h, width: w, kernel, stride };
                g.validate()?;
                Ok(g)
            }
            _ => Err(Error::shape(format!("{self:?} cannot take input {input:?}"))),
        }
    }

    pub fn output_shape(&self, input: ActShape) -> Result<ActShape> {
        match *self {
            LayerSpec::Conv2d { .. } => {
                let g = self.conv_geometry(1, input)?;
                Ok(ActShape::Image { c: g.out_channels, h: g.out_h(), w: g.out_w() })
            }
            LayerSpec::AvgPool { .. } => {
                let g = self.pool_geometry(1, input)?;
                Ok(ActShape::Image { c: g.channels, h: g.out_h(), w: g.out_w() })
            }
            LayerSpec::FullyConnected { inputs, outputs } => match input {
                ActShape::Flat(n) if n == inputs => Ok(ActShape::Flat(outputs)),
                other => Err(Error::shape(format!("fully connected layer expects {inputs} features, got {other:?}"))),
            },
            LayerSpec::Relu => Ok(input),
            LayerSpec::Flatten => Ok(ActShape::Flat(input.size())),
        }
    }

    /// Shapes of `(weight, bias)` for parameterised layers.
    pub fn param_shapes(&self) -> Option<(Vec<usize>, Vec<usize>)> {
        match *self {
            LayerSpec::Conv2d { in_channels, out_channels, kernel, .. } => {
                Some((vec![out_channels, in_channels, kernel, kernel], vec![out_channels]))
            }
            LayerSpec::FullyConnected { inputs, outputs } => Some((vec![outputs, inputs], vec![outputs])),
            _ => None,
        }
    }

    /// Number of inputs feeding each output (for initialisation).
    pub fn fan_in(&self) -> Option<usize> {
        match *self {
            LayerSpec::Conv2d { in_channels, kernel, .. } => Some(in_channels * kernel * kernel),
            LayerSpec::FullyConnected { inputs, .. } => Some(inputs),
            _ => None,
        }
    }
}

/// A validated model structure with per-layer activation shapes.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelGraph {
    pub spec: ModelSpec,
    /// `shapes[i]` is the input of layer `i`; the last entry is the output.
    pub shapes: Vec<ActShape>,
}

impl ModelGraph {
    pub fn new(spec: ModelSpec) -> Result<Self> {
        if spec.num_classes == 0 || spec.num_classes > MAX_CLASSES {
            return Err(Error::Config(format!(
                "num_classes must lie in 1..={MAX_CLASSES}, got {}",
                spec.num_classes
            )));
        }
        let [c, h, w] = spec.input;
        let mut shapes = vec![ActShape::Image { c, h, w }];
        for layer in &spec.layers {
            let next = layer.output_shape(*shapes.last().expect("non-empty"))?;
            shapes.push(next);
        }
        if *shapes.last().expect("non-empty") != ActShape::Flat(spec.num_classes) {
            return Err(Error::shape(format!(
                "model ends in {:?}, expected {} logits",
                shapes.last(),
                spec.num_classes
            )));
        }
        Ok(ModelGraph { spec, shapes })
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let spec: ModelSpec = toml::from_str(s).map_err(|e| Error::format(format!("model spec: {e}")))?;
        ModelGraph::new(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        ModelGraph::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(&self.spec).map_err(|e| Error::format(format!("model spec: {e}")))
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.spec.layers
    }

    pub fn num_classes(&self) -> usize {
        self.spec.num_classes
    }

    pub fn input_shape(&self, batch: usize) -> Vec<usize> {
        self.shapes[0].with_batch(batch)
    }

    /// `(weight, bias)` shapes in layer order, skipping parameterless layers.
    pub fn param_shapes(&self) -> Vec<(Vec<usize>, Vec<usize>)> {
        self.spec.layers.iter().filter_map(LayerSpec::param_shapes).collect()
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes()
            .iter()
            .map(|(w, b)| w.iter().product::<usize>() + b.iter().product::<usize>())
            .sum()
    }
}

/// LeNet variant: ReLU activations and average pooling, 28×28 grey input.
pub fn lenet() -> ModelGraph {
    use LayerSpec::*;
    ModelGraph::new(ModelSpec {
        name: "lenet".into(),
        input: [1, 28, 28],
        num_classes: 10,
        initializer: default_initializer(),
        layers: vec![
            Conv2d { in_channels: 1, out_channels: 6, kernel: 5, stride: 1, padding: 0 },
            Relu,
            AvgPool { kernel: 2, stride: 2 },
            Conv2d { in_channels: 6, out_channels: 16, kernel: 5, stride: 1, padding: 0 },
            Relu,
            AvgPool { kernel: 2, stride: 2 },
            Flatten,
            FullyConnected { inputs: 256, outputs: 120 },
            Relu,
            FullyConnected { inputs: 120, outputs: 10 },
        ],
    })
    .expect("lenet fixture is well-formed")
}

/// AlexNet base adapted to 32×32×3 inputs with the 256-256-10 head.
pub fn alexnet_cifar() -> ModelGraph {
    use LayerSpec::*;
    ModelGraph::new(ModelSpec {
        name: "alexnet_cifar".into(),
        input: [3, 32, 32],
        num_classes: 10,
        initializer: default_initializer(),
        layers: vec![
            Conv2d { in_channels: 3, out_channels: 96, kernel: 11, stride: 4, padding: 9 },
            Relu,
            AvgPool { kernel: 3, stride: 2 },
            Conv2d { in_channels: 96, out_channels: 256, kernel: 5, stride: 1, padding: 1 },
            Relu,
            AvgPool { kernel: 2, stride: 1 },
            Conv2d { in_channels: 256, out_channels: 384, kernel: 3, stride: 1, padding: 1 },
            Relu,
            Conv2d { in_channels: 384, out_channels: 384, kernel: 3, stride: 1, padding: 1 },
            Relu,
            Conv2d { in_channels: 384, out_channels: 256, kernel: 3, stride: 1, padding: 1 },
            Relu,
            Flatten,
            FullyConnected { inputs: 256, outputs: 256 },
            Relu,
            FullyConnected { inputs: 256, outputs: 256 },
            Relu,
            FullyConnected { inputs: 256, outputs: 10 },
        ],
    })
    .expect("alexnet fixture is well-formed")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lenet_shapes() {
        let g = lenet();
        assert_eq!(g.shapes[1], ActShape::Image { c: 6, h: 24, w: 24 });
        assert_eq!(g.shapes[6], ActShape::Image { c: 16, h: 4, w: 4 });
        assert_eq!(*g.shapes.last().unwrap(), ActShape::Flat(10));
        assert_eq!(g.param_count(), 156 + 2416 + 30_840 + 1210);
    }

    #[test]
    fn alexnet_cifar_shapes() {
        let g = alexnet_cifar();
        assert_eq!(g.shapes[1], ActShape::Image { c: 96, h: 10, w: 10 });
        assert_eq!(g.shapes[3], ActShape::Image { c: 96, h: 4, w: 4 });
        assert_eq!(g.shapes[4], ActShape::Image { c: 256, h: 2, w: 2 });
        assert_eq!(g.shapes[6], ActShape::Image { c: 256, h: 1, w: 1 });
        assert_eq!(g.shapes[12], ActShape::Image { c: 256, h: 1, w: 1 });
    }

    #[test]
    fn toml_roundtrip() {
        let g = lenet();
        let text = g.to_toml_string().unwrap();
        assert_eq!(ModelGraph::from_toml_str(&text).unwrap(), g);
    }

    #[test]
    fn incompatible_layers_are_rejected() {
        let mut spec = lenet().spec;
        spec.layers.remove(6); // drop the flatten
        assert!(matches!(ModelGraph::new(spec), Err(Error::Shape(_))));
        let mut spec = lenet().spec;
        spec.num_classes = 201;
        assert!(matches!(ModelGraph::new(spec), Err(Error::Config(_))));
    }
}
