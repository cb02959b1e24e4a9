//! Coordinate MLP: encoded point -> (density, rgb).
//!
//! Output columns are (density, r, g, b): density through softplus, color
//! through the logistic. Hidden layers are rectifier-activated except the
//! sinusoidal first layer of the `spe` variant. A dropout mask zeroes
//! individual entries of one hidden layer's weight matrix, with no rescaling
//! of the survivors.
//!
//! Batched application is chunked over rows with a fixed chunk size, so each
//! output element is accumulated in the same order at any worker count.

use super::encoding::{encode_features, EncodingConfig};
use super::{c, Mask, Real};
use crate::rng::{stream, tag};
use ndarray::linalg::general_mat_mul;
use ndarray::parallel::prelude::*;
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Rows per parallel work item; fixed so chunk boundaries never depend on
/// the worker count.
pub(crate) const ROW_CHUNK: usize = 4096;

pub const DEFAULT_HIDDEN_WIDTH: usize = 32;
pub const DEFAULT_HIDDEN_LAYERS: usize = 4;
/// Index of the layer whose weight matrix dropout targets: the second
/// hidden layer, i.e. the one after the first fully connected layer.
pub const DEFAULT_DROPOUT_LAYER: usize = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Sin,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply<T: Real>(self, x: T) -> T {
        match self {
            Activation::Relu => x.max(T::zero()),
            Activation::Sin => x.sin(),
            Activation::Identity => x,
        }
    }

    /// Derivative as a function of the pre-activation.
    #[inline]
    pub fn deriv<T: Real>(self, x: T) -> T {
        match self {
            Activation::Relu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Sin => x.cos(),
            Activation::Identity => T::one(),
        }
    }
}

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[inline]
pub fn softplus<T: Real>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer<T> {
    /// [input width, output width]; rows index the input dimension.
    pub w: Array2<T>,
    pub b: Array1<T>,
    pub act: Activation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpNet<T> {
    pub encoding: EncodingConfig,
    /// Hash table entries, [levels * table_size, features]; hash variant only.
    pub tables: Option<Array2<T>>,
    pub layers: Vec<Layer<T>>,
    pub dropout_layer: usize,
}

impl<T: Real> MlpNet<T> {
    /// Fresh network with rectifier hidden layers (sinusoidal first layer for
    /// the `spe` encoding), Xavier-uniform weights, zero biases, and small
    /// uniform hash tables. Weight draws come from per-layer streams keyed by
    /// `seed`, so layer shapes can change without reshuffling other layers.
    pub fn new(
        encoding: EncodingConfig,
        hidden_width: usize,
        hidden_layers: usize,
        dropout_layer: usize,
        seed: u64,
    ) -> MlpNet<T> {
        encoding.validate().expect("encoding config");
        assert!(hidden_layers >= 2, "need at least two hidden layers");
        assert!(
            (1..hidden_layers).contains(&dropout_layer),
            "dropout layer {dropout_layer} must index a hidden layer after the first"
        );
        let fw = encoding.feature_width();
        let sin_first = matches!(encoding, EncodingConfig::Spe { .. });

        let mut dims = vec![fw];
        dims.extend(std::iter::repeat_n(hidden_width, hidden_layers));
        dims.push(4);

        let mut layers = Vec::with_capacity(dims.len() - 1);
        for l in 0..dims.len() - 1 {
            let (fan_in, fan_out) = (dims[l], dims[l + 1]);
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let mut rng = stream(&[seed, tag("init"), l as u64]);
            let w = Array2::from_shape_simple_fn((fan_in, fan_out), || {
                c::<T>(a * (2.0 * rng.gen::<f64>() - 1.0))
            });
            let act = if l == dims.len() - 2 {
                Activation::Identity
            } else if l == 0 && sin_first {
                Activation::Sin
            } else {
                Activation::Relu
            };
            layers.push(Layer {
                w,
                b: Array1::zeros(fan_out),
                act,
            });
        }

        let tables = match encoding {
            EncodingConfig::Hash(h) => {
                let mut rng = stream(&[seed, tag("tables")]);
                Some(Array2::from_shape_simple_fn(
                    (encoding.table_rows(), h.features as usize),
                    || c::<T>(1e-2 * (2.0 * rng.gen::<f64>() - 1.0)),
                ))
            }
            _ => None,
        };

        MlpNet {
            encoding,
            tables,
            layers,
            dropout_layer,
        }
    }

    pub fn feature_width(&self) -> usize {
        self.encoding.feature_width()
    }

    pub fn hidden_width(&self) -> usize {
        self.layers[0].w.ncols()
    }

    pub fn hidden_layers(&self) -> usize {
        self.layers.len() - 1
    }

    /// Maskable units: entries of the dropout layer's weight matrix.
    pub fn dropout_units(&self) -> usize {
        self.layers[self.dropout_layer].w.len()
    }

    pub fn param_count(&self) -> usize {
        let t = self.tables.as_ref().map_or(0, |t| t.len());
        t + self
            .layers
            .iter()
            .map(|l| l.w.len() + l.b.len())
            .sum::<usize>()
    }

    pub fn all_finite(&self) -> bool {
        let layers_ok = self
            .layers
            .iter()
            .all(|l| l.w.iter().all(|v| v.is_finite()) && l.b.iter().all(|v| v.is_finite()));
        let tables_ok = self
            .tables
            .as_ref()
            .is_none_or(|t| t.iter().all(|v| v.is_finite()));
        layers_ok && tables_ok
    }

    /// Same parameters at a different float precision.
    pub fn cast<U: Real>(&self) -> MlpNet<U> {
        let conv = |x: &T| c::<U>(x.to_f64().expect("finite parameter"));
        MlpNet {
            encoding: self.encoding,
            tables: self.tables.as_ref().map(|t| t.map(conv)),
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    w: l.w.map(conv),
                    b: l.b.map(conv),
                    act: l.act,
                })
                .collect(),
            dropout_layer: self.dropout_layer,
        }
    }

    /// Dropout-layer weight with masked entries zeroed (row-major indexing),
    /// survivors untouched.
    pub fn masked_weight(&self, mask: &Mask) -> Array2<T> {
        let mut w = self.layers[self.dropout_layer].w.clone();
        assert_eq!(
            mask.units(),
            w.len(),
            "mask covers {} units, dropout layer has {}",
            mask.units(),
            w.len()
        );
        for (v, dropped) in w.iter_mut().zip(&mask.dropped) {
            if *dropped {
                *v = T::zero();
            }
        }
        w
    }

    /// Encodes world points [N, 3] into features [N, feature_width].
    pub fn encode_batch(&self, points: &ArrayView2<T>, bound: f64) -> Array2<T> {
        let n = points.nrows();
        let mut feats = Array2::zeros((n, self.feature_width()));
        points
            .axis_chunks_iter(Axis(0), ROW_CHUNK)
            .into_par_iter()
            .zip(
                feats
                    .axis_chunks_iter_mut(Axis(0), ROW_CHUNK)
                    .into_par_iter(),
            )
            .for_each(|(pc, mut fc)| {
                for (p, mut f) in pc.axis_iter(Axis(0)).zip(fc.axis_iter_mut(Axis(0))) {
                    encode_features(
                        &self.encoding,
                        self.tables.as_ref(),
                        bound,
                        [p[0], p[1], p[2]],
                        f.as_slice_mut().expect("contiguous feature row"),
                    );
                }
            });
        feats
    }

    /// Activations entering the dropout layer.
    pub fn forward_prefix(&self, feats: &ArrayView2<T>) -> Array2<T> {
        let mut a = affine(feats, &self.layers[0].w, &self.layers[0].b);
        act_inplace(&mut a, self.layers[0].act);
        for layer in &self.layers[1..self.dropout_layer] {
            let mut z = affine(&a.view(), &layer.w, &layer.b);
            act_inplace(&mut z, layer.act);
            a = z;
        }
        a
    }

    /// Applies the dropout layer with the given weight (masked or original)
    /// and every layer after it; returns activated (density, r, g, b) rows.
    pub fn forward_suffix(&self, prefix: &ArrayView2<T>, dropout_w: &Array2<T>) -> Array2<T> {
        let dl = &self.layers[self.dropout_layer];
        let mut a = affine(prefix, dropout_w, &dl.b);
        act_inplace(&mut a, dl.act);
        for layer in &self.layers[self.dropout_layer + 1..] {
            let mut z = affine(&a.view(), &layer.w, &layer.b);
            act_inplace(&mut z, layer.act);
            a = z;
        }
        heads_inplace(&mut a);
        a
    }

    /// Full forward pass; the masked and unmasked paths share the prefix and
    /// suffix code, so a ratio-0 mask is bitwise identical to no mask.
    pub fn forward_batch(&self, feats: &ArrayView2<T>, mask: Option<&Mask>) -> Array2<T> {
        let prefix = self.forward_prefix(feats);
        match mask {
            Some(m) => self.forward_suffix(&prefix.view(), &self.masked_weight(m)),
            None => self.forward_suffix(&prefix.view(), &self.layers[self.dropout_layer].w),
        }
    }

    /// Forward pass recording everything backprop needs. Unmasked: training
    /// never drops weights.
    pub fn forward_tape(&self, points: Array2<T>, bound: f64) -> Tape<T> {
        let feats = self.encode_batch(&points.view(), bound);
        let n_layers = self.layers.len();
        let mut z = Vec::with_capacity(n_layers);
        let mut a = Vec::with_capacity(n_layers - 1);
        let mut x = feats.view();
        for (l, layer) in self.layers.iter().enumerate() {
            let zl = affine(&x, &layer.w, &layer.b);
            z.push(zl);
            if l < n_layers - 1 {
                let mut al = z[l].clone();
                act_inplace(&mut al, layer.act);
                a.push(al);
                x = a[l].view();
            }
        }
        let mut y = z[n_layers - 1].clone();
        heads_inplace(&mut y);
        Tape {
            points,
            feats,
            z,
            a,
            y,
        }
    }
}

/// Everything recorded during a training forward pass: inputs, per-layer
/// pre/post activations, and the activated (density, rgb) outputs.
pub struct Tape<T> {
    pub points: Array2<T>,
    pub feats: Array2<T>,
    /// Pre-activations, one per layer.
    pub z: Vec<Array2<T>>,
    /// Post-activations for all but the output layer; `a[l]` feeds layer l+1.
    pub a: Vec<Array2<T>>,
    /// Activated outputs, columns (density, r, g, b).
    pub y: Array2<T>,
}

/// out = x @ w + b over fixed row chunks.
pub(crate) fn affine<T: Real>(x: &ArrayView2<T>, w: &Array2<T>, b: &Array1<T>) -> Array2<T> {
    let mut out = Array2::zeros((x.nrows(), w.ncols()));
    x.axis_chunks_iter(Axis(0), ROW_CHUNK)
        .into_par_iter()
        .zip(out.axis_chunks_iter_mut(Axis(0), ROW_CHUNK).into_par_iter())
        .for_each(|(xc, mut oc)| {
            general_mat_mul(T::one(), &xc, &w.view(), T::zero(), &mut oc);
            oc += b;
        });
    out
}

pub(crate) fn act_inplace<T: Real>(z: &mut Array2<T>, act: Activation) {
    match act {
        Activation::Identity => {}
        Activation::Relu => z.par_mapv_inplace(|v| v.max(T::zero())),
        Activation::Sin => z.par_mapv_inplace(|v| v.sin()),
    }
}

/// Column 0 through softplus, columns 1..4 through the logistic.
pub(crate) fn heads_inplace<T: Real>(out: &mut Array2<T>) {
    out.axis_chunks_iter_mut(Axis(0), ROW_CHUNK)
        .into_par_iter()
        .for_each(|mut chunk| {
            for mut row in chunk.axis_iter_mut(Axis(0)) {
                row[0] = softplus(row[0]);
                for k in 1..4 {
                    row[k] = sigmoid(row[k]);
                }
            }
        });
}
