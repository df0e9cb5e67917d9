//! The radiance-field MLP.
//!
//! Four ReLU layers of width 256 consume the integrated positional encoding, with the
//! encoding concatenated back in before the third layer. Density is read from the last
//! hidden layer alone; color comes from a 128-unit ReLU branch that also sees the
//! encoded view direction, followed by a sigmoid.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{kernels, Tape, Tensor};
use crate::encoding::EncodingConfig;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityActivation {
    #[default]
    Softplus,
    Relu,
}

impl DensityActivation {
    fn apply(self, x: f64) -> f64 {
        match self {
            DensityActivation::Softplus => kernels::softplus(x),
            DensityActivation::Relu => kernels::relu(x),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldConfig {
    pub ipe_width: usize,
    pub dir_width: usize,
    pub hidden_width: usize,
    pub color_width: usize,
    pub density_activation: DensityActivation,
    /// Initial density (per meter) targeted by the density-head bias.
    pub initial_density: f64,
}

impl FieldConfig {
    pub fn from_encoding(enc: &EncodingConfig) -> Self {
        FieldConfig {
            ipe_width: enc.ipe_width(),
            dir_width: enc.dir_width(),
            ..FieldConfig::default()
        }
    }

    /// `(name, rows, cols)` of every parameter tensor, in storage order.
    pub fn layout(&self) -> Vec<(&'static str, usize, usize)> {
        let (i, d, w, c) = (self.ipe_width, self.dir_width, self.hidden_width, self.color_width);
        vec![
            ("layer0.weight", i, w),
            ("layer0.bias", 1, w),
            ("layer1.weight", w, w),
            ("layer1.bias", 1, w),
            ("layer2.weight", w + i, w),
            ("layer2.bias", 1, w),
            ("layer3.weight", w, w),
            ("layer3.bias", 1, w),
            ("density.weight", w, 1),
            ("density.bias", 1, 1),
            ("color0.weight", w + d, c),
            ("color0.bias", 1, c),
            ("color1.weight", c, 3),
            ("color1.bias", 1, 3),
        ]
    }

    pub fn parameter_count(&self) -> usize {
        self.layout().iter().map(|(_, r, c)| r * c).sum()
    }
}

impl Default for FieldConfig {
    fn default() -> Self {
        let enc = EncodingConfig::default();
        FieldConfig {
            ipe_width: enc.ipe_width(),
            dir_width: enc.dir_width(),
            hidden_width: 256,
            color_width: 128,
            density_activation: DensityActivation::Softplus,
            initial_density: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldParams {
    pub config: FieldConfig,
    pub tensors: Vec<Param>,
}

// indices into `FieldParams::tensors`, matching `FieldConfig::layout`
const L0_W: usize = 0;
const L0_B: usize = 1;
const L1_W: usize = 2;
const L1_B: usize = 3;
const L2_W: usize = 4;
const L2_B: usize = 5;
const L3_W: usize = 6;
const L3_B: usize = 7;
const DENSITY_W: usize = 8;
const DENSITY_B: usize = 9;
const COLOR0_W: usize = 10;
const COLOR0_B: usize = 11;
const COLOR1_W: usize = 12;
const COLOR1_B: usize = 13;

impl FieldParams {
    /// He-uniform weights scaled by fan-in, zero hidden biases, and a density bias
    /// chosen so an input-independent field would emit `initial_density`.
    pub fn init(config: FieldConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let density_bias = inverse_activation(config.density_activation, config.initial_density);
        let tensors = config
            .layout()
            .into_iter()
            .map(|(name, rows, cols)| {
                let values = if name.ends_with(".weight") {
                    let bound = (6.0 / rows as f64).sqrt();
                    let bound = if name == "density.weight" { bound * 0.1 } else { bound };
                    (0..rows * cols).map(|_| rng.random_range(-bound..bound)).collect()
                } else if name == "density.bias" {
                    vec![density_bias]
                } else {
                    vec![0.0; rows * cols]
                };
                Param {
                    name: name.to_string(),
                    rows,
                    cols,
                    values,
                }
            })
            .collect();
        FieldParams { config, tensors }
    }

    /// Every parameter set to zero.
    pub fn zeros(config: FieldConfig) -> Self {
        let tensors = config
            .layout()
            .into_iter()
            .map(|(name, rows, cols)| Param {
                name: name.to_string(),
                rows,
                cols,
                values: vec![0.0; rows * cols],
            })
            .collect();
        FieldParams { config, tensors }
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(|p| p.values.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|p| p.values.iter().all(|v| v.is_finite()))
    }

    /// Checks that the stored tensors match the configured layout.
    pub fn validate(&self) -> Result<()> {
        let layout = self.config.layout();
        if layout.len() != self.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter tensors, found {}",
                layout.len(),
                self.tensors.len()
            )));
        }
        for ((name, rows, cols), p) in layout.iter().zip(&self.tensors) {
            if p.name != *name || p.rows != *rows || p.cols != *cols || p.values.len() != rows * cols {
                return Err(Error::Checkpoint(format!(
                    "parameter {} has shape {}x{}, expected {name} {rows}x{cols}",
                    p.name, p.rows, p.cols
                )));
            }
        }
        Ok(())
    }

    /// Records every tensor as a trainable leaf on `tape`, in storage order.
    pub fn register(&self, tape: &mut Tape) -> Vec<Tensor> {
        self.tensors
            .iter()
            .map(|p| tape.leaf(p.rows, p.cols, p.values.clone()))
            .collect()
    }
}

fn inverse_activation(act: DensityActivation, target: f64) -> f64 {
    match act {
        DensityActivation::Softplus => target.exp_m1().ln(),
        DensityActivation::Relu => target,
    }
}

/// Per-sample outputs recorded on a tape.
#[derive(Clone, Copy, Debug)]
pub struct FieldTensors {
    /// rows×1, non-negative.
    pub density: Tensor,
    /// rows×3 in [0, 1].
    pub rgb: Tensor,
}

fn dense(tape: &mut Tape, x: Tensor, w: Tensor, b: Tensor) -> Result<Tensor> {
    let y = tape.matmul(x, w)?;
    tape.add_bias(y, b)
}

/// Differentiable forward pass. `ipe` is rows×ipe_width, `dir` rows×dir_width.
pub fn forward(
    tape: &mut Tape,
    config: &FieldConfig,
    params: &[Tensor],
    ipe: Tensor,
    dir: Tensor,
) -> Result<FieldTensors> {
    if ipe.cols() != config.ipe_width || dir.cols() != config.dir_width || ipe.rows() != dir.rows() {
        return Err(Error::Shape {
            op: "field::forward",
            lhs: ipe.shape(),
            rhs: dir.shape(),
        });
    }
    if params.len() != config.layout().len() {
        return Err(Error::Config(format!("field expects {} parameter tensors", config.layout().len())));
    }
    let p = params;
    let h = dense(tape, ipe, p[L0_W], p[L0_B])?;
    let h = tape.relu(h);
    let h = dense(tape, h, p[L1_W], p[L1_B])?;
    let h = tape.relu(h);
    let skip = tape.concat(h, ipe)?;
    let h = dense(tape, skip, p[L2_W], p[L2_B])?;
    let h = tape.relu(h);
    let h = dense(tape, h, p[L3_W], p[L3_B])?;
    let features = tape.relu(h);

    let raw_density = dense(tape, features, p[DENSITY_W], p[DENSITY_B])?;
    let density = match config.density_activation {
        DensityActivation::Softplus => tape.softplus(raw_density),
        DensityActivation::Relu => tape.relu(raw_density),
    };

    let with_dir = tape.concat(features, dir)?;
    let c = dense(tape, with_dir, p[COLOR0_W], p[COLOR0_B])?;
    let c = tape.relu(c);
    let c = dense(tape, c, p[COLOR1_W], p[COLOR1_B])?;
    let rgb = tape.sigmoid(c);
    Ok(FieldTensors { density, rgb })
}

/// Plain-value outputs of [`forward_values`].
#[derive(Clone, Debug, PartialEq)]
pub struct FieldOutput {
    pub density: Vec<f64>,
    /// Row-major rows×3.
    pub rgb: Vec<f64>,
}

fn dense_values(x: &[f64], rows: usize, w: &Param, b: &Param, relu: bool) -> Vec<f64> {
    let mut y = kernels::matmul(x, &w.values, rows, w.rows, w.cols);
    kernels::add_bias_in_place(&mut y, &b.values, w.cols);
    if relu {
        y.iter_mut().for_each(|v| *v = kernels::relu(*v));
    }
    y
}

/// Tape-free forward pass for inference; bit-identical to [`forward`].
pub fn forward_values(params: &FieldParams, ipe: &[f64], dir: &[f64], rows: usize) -> Result<FieldOutput> {
    let cfg = &params.config;
    if ipe.len() != rows * cfg.ipe_width || dir.len() != rows * cfg.dir_width {
        return Err(Error::Shape {
            op: "field::forward_values",
            lhs: (rows, ipe.len() / rows.max(1)),
            rhs: (rows, dir.len() / rows.max(1)),
        });
    }
    let t = &params.tensors;
    let w = cfg.hidden_width;
    let h = dense_values(ipe, rows, &t[L0_W], &t[L0_B], true);
    let h = dense_values(&h, rows, &t[L1_W], &t[L1_B], true);
    let skip = kernels::concat_cols(&h, w, ipe, cfg.ipe_width);
    let h = dense_values(&skip, rows, &t[L2_W], &t[L2_B], true);
    let features = dense_values(&h, rows, &t[L3_W], &t[L3_B], true);

    let mut density = dense_values(&features, rows, &t[DENSITY_W], &t[DENSITY_B], false);
    density.iter_mut().for_each(|v| *v = cfg.density_activation.apply(*v));

    let with_dir = kernels::concat_cols(&features, w, dir, cfg.dir_width);
    let c = dense_values(&with_dir, rows, &t[COLOR0_W], &t[COLOR0_B], true);
    let mut rgb = dense_values(&c, rows, &t[COLOR1_W], &t[COLOR1_B], false);
    rgb.iter_mut().for_each(|v| *v = kernels::sigmoid(*v));
    Ok(FieldOutput { density, rgb })
}
