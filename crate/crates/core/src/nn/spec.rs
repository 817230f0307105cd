//! Network architecture descriptions.
//!
//! A [`NetworkSpec`] is a validated, declarative layer stack; the parameter
//! layout and per-layer shapes derived from it are a pure function of the
//! spec, so two classifiers built from equal specs always share a layout.

use crate::error::{Error, Result};

/// Convolution kernels are fixed at 3x3 and pooling windows at 2x2.
pub const CONV_KERNEL: usize = 3;
pub const POOL_WINDOW: usize = 2;

/// One layer of the stack.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense { units: usize },
    Conv2d { filters: usize },
    MaxPool,
    Relu,
    Dropout { rate: f64 },
    Softmax,
}

/// Activation shape flowing between layers, as (height, width, channels).
/// Dense outputs collapse to (1, 1, units).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Shape {
    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A validated network architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub layers: Vec<Layer>,
    pub input_shape: (usize, usize, usize),
    /// Total output classes, including the NULL slot when `has_null`.
    pub class_count: usize,
    /// Whether the last output slot is the NULL class.
    pub has_null: bool,
}

impl NetworkSpec {
    /// Validates shape chaining and the final-softmax requirement.
    pub fn new(
        layers: Vec<Layer>,
        input_shape: (usize, usize, usize),
        class_count: usize,
        has_null: bool,
    ) -> Result<Self> {
        let spec = NetworkSpec {
            layers,
            input_shape,
            class_count,
            has_null,
        };
        spec.plan()?;
        Ok(spec)
    }

    /// Valid (non-NULL) classes.
    pub fn valid_class_count(&self) -> usize {
        if self.has_null {
            self.class_count - 1
        } else {
            self.class_count
        }
    }

    /// Index of the NULL slot, when present. NULL is always last.
    pub fn null_index(&self) -> Option<usize> {
        self.has_null.then(|| self.class_count - 1)
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.0 * self.input_shape.1 * self.input_shape.2
    }

    /// Two conv layers (32 and 64 filters, 3x3), max pooling, and two
    /// 200-unit dense layers. Accurate but slow on desk hardware.
    pub fn paper_cnn(input_shape: (usize, usize, usize), class_count: usize, has_null: bool) -> Result<Self> {
        Self::new(
            vec![
                Layer::Conv2d { filters: 32 },
                Layer::Relu,
                Layer::Conv2d { filters: 64 },
                Layer::Relu,
                Layer::MaxPool,
                Layer::Dense { units: 200 },
                Layer::Relu,
                Layer::Dense { units: 200 },
                Layer::Relu,
                Layer::Dense { units: class_count },
                Layer::Softmax,
            ],
            input_shape,
            class_count,
            has_null,
        )
    }

    /// Small dense network for fast experiments: 128 and 64 hidden units.
    pub fn desk_mlp(input_shape: (usize, usize, usize), class_count: usize, has_null: bool) -> Result<Self> {
        Self::new(
            vec![
                Layer::Dense { units: 128 },
                Layer::Relu,
                Layer::Dense { units: 64 },
                Layer::Relu,
                Layer::Dense { units: class_count },
                Layer::Softmax,
            ],
            input_shape,
            class_count,
            has_null,
        )
    }

    /// Looks up a named profile ("paper-cnn" or "desk-mlp").
    pub fn profile(
        name: &str,
        input_shape: (usize, usize, usize),
        class_count: usize,
        has_null: bool,
    ) -> Result<Self> {
        match name {
            "paper-cnn" => Self::paper_cnn(input_shape, class_count, has_null),
            "desk-mlp" => Self::desk_mlp(input_shape, class_count, has_null),
            other => Err(Error::config(format!("unknown network profile '{other}'"))),
        }
    }

    /// Derives per-layer shapes and the flat parameter layout.
    pub(crate) fn plan(&self) -> Result<Plan> {
        if self.class_count < 2 {
            return Err(Error::config("class_count must be at least 2"));
        }
        if self.has_null && self.class_count < 3 {
            return Err(Error::config(
                "a NULL slot requires at least two valid classes",
            ));
        }
        let (h, w, c) = self.input_shape;
        if h * w * c == 0 {
            return Err(Error::config("input shape has zero volume"));
        }
        if self.layers.is_empty() {
            return Err(Error::config("network has no layers"));
        }

        let mut shape = Shape {
            height: h,
            width: w,
            channels: c,
        };
        let mut offset = 0usize;
        let mut plans = Vec::with_capacity(self.layers.len());
        for (idx, layer) in self.layers.iter().enumerate() {
            let is_last = idx == self.layers.len() - 1;
            let in_shape = shape;
            let (out_shape, param_len) = match layer {
                Layer::Dense { units } => {
                    if *units == 0 {
                        return Err(Error::config("dense layer with zero units"));
                    }
                    let fan_in = in_shape.len();
                    (
                        Shape {
                            height: 1,
                            width: 1,
                            channels: *units,
                        },
                        fan_in * units + units,
                    )
                }
                Layer::Conv2d { filters } => {
                    if *filters == 0 {
                        return Err(Error::config("conv layer with zero filters"));
                    }
                    if in_shape.height < CONV_KERNEL || in_shape.width < CONV_KERNEL {
                        return Err(Error::config(format!(
                            "layer {idx}: input {}x{} too small for a {CONV_KERNEL}x{CONV_KERNEL} kernel",
                            in_shape.height, in_shape.width
                        )));
                    }
                    (
                        Shape {
                            height: in_shape.height - CONV_KERNEL + 1,
                            width: in_shape.width - CONV_KERNEL + 1,
                            channels: *filters,
                        },
                        filters * CONV_KERNEL * CONV_KERNEL * in_shape.channels + filters,
                    )
                }
                Layer::MaxPool => {
                    if in_shape.height < POOL_WINDOW || in_shape.width < POOL_WINDOW {
                        return Err(Error::config(format!(
                            "layer {idx}: input {}x{} too small for {POOL_WINDOW}x{POOL_WINDOW} pooling",
                            in_shape.height, in_shape.width
                        )));
                    }
                    (
                        Shape {
                            height: in_shape.height / POOL_WINDOW,
                            width: in_shape.width / POOL_WINDOW,
                            channels: in_shape.channels,
                        },
                        0,
                    )
                }
                Layer::Relu => (in_shape, 0),
                Layer::Dropout { rate } => {
                    if !(0.0..1.0).contains(rate) {
                        return Err(Error::config(format!(
                            "dropout rate {rate} must lie in [0, 1)"
                        )));
                    }
                    (in_shape, 0)
                }
                Layer::Softmax => {
                    if !is_last {
                        return Err(Error::config("softmax must be the final layer"));
                    }
                    if in_shape.len() != self.class_count {
                        return Err(Error::config(format!(
                            "softmax input has {} values but class_count is {}",
                            in_shape.len(),
                            self.class_count
                        )));
                    }
                    (in_shape, 0)
                }
            };
            if is_last && !matches!(layer, Layer::Softmax) {
                return Err(Error::config("final layer must be softmax"));
            }
            plans.push(LayerPlan {
                layer: layer.clone(),
                in_shape,
                out_shape,
                param_offset: offset,
                param_len,
            });
            shape = out_shape;
            offset += param_len;
        }
        Ok(Plan {
            layers: plans,
            param_count: offset,
        })
    }

    /// Number of parameters implied by the spec.
    pub fn param_count(&self) -> usize {
        // Spec was validated at construction, so the plan cannot fail.
        self.plan().expect("validated spec").param_count
    }
}

/// One layer with resolved shapes and its slice of the flat parameter vector.
#[derive(Debug, Clone)]
pub(crate) struct LayerPlan {
    pub layer: Layer,
    pub in_shape: Shape,
    pub out_shape: Shape,
    pub param_offset: usize,
    pub param_len: usize,
}

/// Resolved execution plan for a spec.
#[derive(Debug, Clone)]
pub(crate) struct Plan {
    pub layers: Vec<LayerPlan>,
    pub param_count: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_stack_shapes_chain() {
        let spec = NetworkSpec::desk_mlp((4, 4, 1), 3, false).unwrap();
        // 16*128+128 + 128*64+64 + 64*3+3
        assert_eq!(spec.param_count(), 16 * 128 + 128 + 128 * 64 + 64 + 64 * 3 + 3);
    }

    #[test]
    fn conv_stack_shapes_chain() {
        let spec = NetworkSpec::paper_cnn((28, 28, 1), 10, false).unwrap();
        let plan = spec.plan().unwrap();
        // conv(28) -> 26 -> conv -> 24 -> pool -> 12
        assert_eq!(
            plan.layers[4].out_shape,
            Shape {
                height: 12,
                width: 12,
                channels: 64
            }
        );
        assert_eq!(plan.layers.last().unwrap().out_shape.len(), 10);
    }

    #[test]
    fn rejects_missing_or_misplaced_softmax() {
        let err = NetworkSpec::new(
            vec![Layer::Dense { units: 3 }],
            (2, 2, 1),
            3,
            false,
        );
        assert!(err.is_err());
        let err = NetworkSpec::new(
            vec![Layer::Softmax, Layer::Dense { units: 3 }],
            (3, 1, 1),
            3,
            false,
        );
        assert!(err.is_err());
    }

    #[test]
    fn rejects_mismatched_output_width() {
        let err = NetworkSpec::new(
            vec![Layer::Dense { units: 4 }, Layer::Softmax],
            (2, 2, 1),
            3,
            false,
        );
        assert!(err.is_err());
    }

    #[test]
    fn null_index_is_last() {
        let spec = NetworkSpec::desk_mlp((4, 4, 1), 11, true).unwrap();
        assert_eq!(spec.null_index(), Some(10));
        assert_eq!(spec.valid_class_count(), 10);
        let plain = NetworkSpec::desk_mlp((4, 4, 1), 10, false).unwrap();
        assert_eq!(plain.null_index(), None);
    }
}
