//! Simulated blockwise-absmax weight quantisation (quantise then dequantise).

use crate::autodiff::ParamVector;
use crate::error::{Error, Result};
use crate::model::{ModelState, TensorRole, TensorSpec};
use serde::{Deserialize, Serialize};

pub const DEFAULT_BLOCK_SIZE: usize = 64;

/// The 16 normal-float levels of the 4-bit NF4 format, ascending.
pub const NF4_LEVELS: [f64; 16] = [
    -1.0,
    -0.696_192_800_998_687_7,
    -0.525_073_051_452_636_7,
    -0.394_917_488_098_144_53,
    -0.284_441_381_692_886_35,
    -0.184_773_431_718_349_46,
    -0.091_050_036_251_544_95,
    0.0,
    0.079_580_299_556_255_34,
    0.160_930_201_411_247_25,
    0.246_112_301_945_686_34,
    0.337_915_241_718_292_24,
    0.440_709_829_330_444_34,
    0.562_617_003_917_694_1,
    0.722_956_836_223_602_3,
    1.0,
];

const INT8_MAX: f64 = 127.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum QuantBits {
    Four,
    Eight,
}

impl QuantBits {
    pub fn bits(self) -> u8 {
        match self {
            QuantBits::Four => 4,
            QuantBits::Eight => 8,
        }
    }

    /// Representable values after absmax scaling, ascending, on `[-1, 1]`.
    pub fn levels(self) -> Vec<f64> {
        match self {
            QuantBits::Four => NF4_LEVELS.to_vec(),
            QuantBits::Eight => (-127..=127).map(|q| q as f64 / INT8_MAX).collect(),
        }
    }
}

impl TryFrom<u8> for QuantBits {
    type Error = Error;
    fn try_from(b: u8) -> Result<Self> {
        match b {
            4 => Ok(QuantBits::Four),
            8 => Ok(QuantBits::Eight),
            other => Err(Error::Config(format!("unsupported bit width {other}; expected 4 or 8"))),
        }
    }
}

impl From<QuantBits> for u8 {
    fn from(b: QuantBits) -> u8 {
        b.bits()
    }
}

/// Output head name; kept in full precision like the embeddings.
pub const OUTPUT_HEAD: &str = "lm_head.weight";

/// Norm gains, biases, embeddings and the output head stay in full precision.
pub fn is_exempt(spec: &TensorSpec) -> bool {
    spec.role != TensorRole::Weight || spec.name == OUTPUT_HEAD
}

fn nearest_nf4(y: f64) -> f64 {
    // ties go to the lower level
    let mut best = NF4_LEVELS[0];
    let mut dist = (y - best).abs();
    for &l in &NF4_LEVELS[1..] {
        let d = (y - l).abs();
        if d < dist {
            best = l;
            dist = d;
        }
    }
    best
}

/// Quantise one block in place.
pub fn quantize_block(block: &mut [f64], bits: QuantBits) {
    let absmax = block.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if absmax == 0.0 {
        block.fill(0.0);
        return;
    }
    for x in block.iter_mut() {
        // the extreme element maps to exactly ±absmax, which keeps the
        // block scale (and hence the whole map) idempotent
        if x.abs() == absmax {
            *x = absmax.copysign(*x);
            continue;
        }
        let y = *x / absmax;
        *x = match bits {
            QuantBits::Eight => {
                let k = (y * INT8_MAX).round();
                if k.abs() == INT8_MAX {
                    absmax.copysign(k)
                } else {
                    k * (absmax / INT8_MAX)
                }
            }
            QuantBits::Four => nearest_nf4(y) * absmax,
        };
    }
}

/// Quantise a flat slice in consecutive blocks of `block_size` (the last may be short).
pub fn quantize_values(values: &[f64], bits: QuantBits, block_size: usize) -> Result<Vec<f64>> {
    if block_size < 2 {
        return Err(Error::Config(format!("block_size {block_size} must be >= 2")));
    }
    let mut out = values.to_vec();
    for chunk in out.chunks_mut(block_size) {
        quantize_block(chunk, bits);
    }
    Ok(out)
}

/// Quantise every non-exempt tensor. Blocks never straddle tensors.
pub fn quantize(state: &ModelState, bits: QuantBits, block_size: usize) -> Result<ModelState> {
    if block_size < 2 {
        return Err(Error::Config(format!("block_size {block_size} must be >= 2")));
    }
    let mut params = state.params().to_vec();
    for spec in state.layout().tensors() {
        if is_exempt(spec) {
            continue;
        }
        let t = &mut params[spec.offset..spec.offset + spec.len()];
        for chunk in t.chunks_mut(block_size) {
            quantize_block(chunk, bits);
        }
    }
    state.with_params(ParamVector::new(params)?)
}

/// Names of the tensors `quantize` leaves untouched.
pub fn exempt_tensors(state: &ModelState) -> Vec<String> {
    state.layout().tensors().iter().filter(|s| is_exempt(s)).map(|s| s.name.clone()).collect()
}
