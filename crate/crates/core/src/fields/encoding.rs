//! Input encodings for the coordinate MLP.
//!
//! `Pe`: raw point followed by per-level sin/cos features,
//! p | sin(2^l pi p_i), cos(2^l pi p_i) for l = 0..L-1, width 3 + 6L.
//! `Spe`: the same features; the difference is the network's sinusoidal
//! first-layer activation, recorded here so the checkpoint can rebuild it.
//! `Hash`: multiresolution hash grid with trilinearly interpolated learned
//! table entries; corner (x, y, z) maps to slot (x*p1 ^ y*p2 ^ z*p3) mod T
//! with wrapping multiplies.

use super::{c, Real};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

pub const HASH_PRIMES: [u32; 3] = [1, 2654435761, 805459861];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashConfig {
    pub levels: u32,
    /// Coarsest grid resolution; level i uses base_res << i cells per axis.
    pub base_res: u32,
    /// Slots per level (T).
    pub table_size: u32,
    /// Feature width per level.
    pub features: u32,
}

impl Default for HashConfig {
    fn default() -> Self {
        HashConfig {
            levels: 4,
            base_res: 4,
            table_size: 1 << 10,
            features: 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EncodingConfig {
    Pe { l: u32 },
    Spe { l: u32 },
    Hash(HashConfig),
}

pub const DEFAULT_PE_LEVELS: u32 = 6;

impl EncodingConfig {
    pub fn feature_width(&self) -> usize {
        match *self {
            EncodingConfig::Pe { l } | EncodingConfig::Spe { l } => 3 + 6 * l as usize,
            EncodingConfig::Hash(h) => (h.levels * h.features) as usize,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match *self {
            EncodingConfig::Pe { l } | EncodingConfig::Spe { l } => {
                if !(1..=12).contains(&l) {
                    return Err(format!("encoding levels {l} outside [1, 12]"));
                }
            }
            EncodingConfig::Hash(h) => {
                if h.levels == 0 || h.features == 0 {
                    return Err("hash encoding needs at least one level and feature".into());
                }
                if h.base_res < 2 {
                    return Err("hash base resolution must be at least 2".into());
                }
                if !h.table_size.is_power_of_two() {
                    return Err("hash table size must be a power of two".into());
                }
            }
        }
        Ok(())
    }

    /// Rows of the hash table parameter matrix (levels stacked), 0 otherwise.
    pub fn table_rows(&self) -> usize {
        match *self {
            EncodingConfig::Hash(h) => (h.levels * h.table_size) as usize,
            _ => 0,
        }
    }
}

pub fn hash_slot(corner: [u32; 3], table_size: u32) -> u32 {
    let h = corner[0].wrapping_mul(HASH_PRIMES[0])
        ^ corner[1].wrapping_mul(HASH_PRIMES[1])
        ^ corner[2].wrapping_mul(HASH_PRIMES[2]);
    h % table_size
}

/// Writes the encoding of world point `p` into `out` (len = feature_width).
/// `bound` is the scene's half-extent: hash grids normalize into [0, 1)^3
/// and clamp; sin/cos features use world coordinates directly.
pub fn encode_features<T: Real>(
    cfg: &EncodingConfig,
    tables: Option<&Array2<T>>,
    bound: f64,
    p: [T; 3],
    out: &mut [T],
) {
    match *cfg {
        EncodingConfig::Pe { l } | EncodingConfig::Spe { l } => {
            debug_assert_eq!(out.len(), 3 + 6 * l as usize);
            out[0] = p[0];
            out[1] = p[1];
            out[2] = p[2];
            let mut k = 3;
            let pi = c::<T>(std::f64::consts::PI);
            for lev in 0..l {
                let freq = c::<T>((1u64 << lev) as f64) * pi;
                for &coord in &p {
                    let s = freq * coord;
                    out[k] = s.sin();
                    out[k + 1] = s.cos();
                    k += 2;
                }
            }
        }
        EncodingConfig::Hash(h) => {
            let tables = tables.expect("hash encoding requires tables");
            debug_assert_eq!(out.len(), (h.levels * h.features) as usize);
            for v in out.iter_mut() {
                *v = T::zero();
            }
            let inv = c::<T>(1.0 / (2.0 * bound));
            let one_minus = c::<T>(1.0 - 1e-9);
            let q = [
                ((p[0] + c(bound)) * inv).max(T::zero()).min(one_minus),
                ((p[1] + c(bound)) * inv).max(T::zero()).min(one_minus),
                ((p[2] + c(bound)) * inv).max(T::zero()).min(one_minus),
            ];
            for lev in 0..h.levels {
                let res = (h.base_res << lev) as f64;
                let mut cell = [0u32; 3];
                let mut frac = [T::zero(); 3];
                for i in 0..3 {
                    let x = q[i] * c::<T>(res);
                    let f = x.floor();
                    cell[i] = f.to_u32().unwrap_or(0).min(res as u32 - 1);
                    frac[i] = x - c::<T>(cell[i] as f64);
                }
                let level_off = (lev * h.table_size) as usize;
                let fw = h.features as usize;
                for corner in 0..8u32 {
                    let mut w = T::one();
                    let mut idx = [0u32; 3];
                    for i in 0..3 {
                        if corner >> i & 1 == 1 {
                            idx[i] = cell[i] + 1;
                            w *= frac[i];
                        } else {
                            idx[i] = cell[i];
                            w *= T::one() - frac[i];
                        }
                    }
                    let slot = level_off + hash_slot(idx, h.table_size) as usize;
                    let row = tables.row(slot);
                    for f in 0..fw {
                        out[lev as usize * fw + f] += w * row[f];
                    }
                }
            }
        }
    }
}

/// Trilinear corner weights and table slots for one point at one level, in
/// the same corner order the encoder uses. Exposed for the gradient scatter.
pub fn hash_corners<T: Real>(h: &HashConfig, level: u32, bound: f64, p: [T; 3]) -> [(usize, T); 8] {
    let inv = c::<T>(1.0 / (2.0 * bound));
    let one_minus = c::<T>(1.0 - 1e-9);
    let res = (h.base_res << level) as f64;
    let mut cell = [0u32; 3];
    let mut frac = [T::zero(); 3];
    for i in 0..3 {
        let q = ((p[i] + c(bound)) * inv).max(T::zero()).min(one_minus);
        let x = q * c::<T>(res);
        let f = x.floor();
        cell[i] = f.to_u32().unwrap_or(0).min(res as u32 - 1);
        frac[i] = x - c::<T>(cell[i] as f64);
    }
    let level_off = (level * h.table_size) as usize;
    std::array::from_fn(|cnr| {
        let mut w = T::one();
        let mut idx = [0u32; 3];
        for i in 0..3 {
            if cnr >> i & 1 == 1 {
                idx[i] = cell[i] + 1;
                w *= frac[i];
            } else {
                idx[i] = cell[i];
                w *= T::one() - frac[i];
            }
        }
        (level_off + hash_slot(idx, h.table_size) as usize, w)
    })
}
