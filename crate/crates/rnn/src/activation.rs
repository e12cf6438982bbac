//! Element-wise activations written so the compiler can vectorise them.

use ndarray::ArrayViewMut2;

const LOG2E: f64 = std::f64::consts::LOG2_E;
const LN2_HI: f64 = 6.931_471_803_691_238_2e-1;
const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
/// 1.5·2⁵²: adding and subtracting it rounds to the nearest integer.
const ROUND_MAGIC: f64 = 6_755_399_441_055_744.0;

/// e^x within a few ulp for |x| ≤ 708; saturates outside that range.
#[inline(always)]
pub fn exp(x: f64) -> f64 {
    let x = x.clamp(-708.0, 708.0);
    let t = x * LOG2E + ROUND_MAGIC;
    let k = t - ROUND_MAGIC;
    let r = x - k * LN2_HI - k * LN2_LO;
    // Taylor series to r¹³ on |r| ≤ ln2/2
    let mut p = 1.0 / 6_227_020_800.0;
    p = p * r + 1.0 / 479_001_600.0;
    p = p * r + 1.0 / 39_916_800.0;
    p = p * r + 1.0 / 3_628_800.0;
    p = p * r + 1.0 / 362_880.0;
    p = p * r + 1.0 / 40_320.0;
    p = p * r + 1.0 / 5_040.0;
    p = p * r + 1.0 / 720.0;
    p = p * r + 1.0 / 120.0;
    p = p * r + 1.0 / 24.0;
    p = p * r + 1.0 / 6.0;
    p = p * r + 0.5;
    p = p * r + 1.0;
    p = p * r + 1.0;
    // low bits of t hold k
    let scale = f64::from_bits(t.to_bits().wrapping_add(1023) << 52);
    p * scale
}

#[inline(always)]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + exp(-x))
}

#[inline(always)]
pub fn tanh(x: f64) -> f64 {
    2.0 / (1.0 + exp(-2.0 * x)) - 1.0
}

fn rows_inplace(mut a: ArrayViewMut2<f64>, f: impl Fn(f64) -> f64 + Copy) {
    for mut row in a.rows_mut() {
        match row.as_slice_mut() {
            Some(s) => s.iter_mut().for_each(|v| *v = f(*v)),
            None => row.mapv_inplace(f),
        }
    }
}

pub fn sigmoid_inplace(a: ArrayViewMut2<f64>) {
    rows_inplace(a, sigmoid);
}

pub fn tanh_inplace(a: ArrayViewMut2<f64>) {
    rows_inplace(a, tanh);
}
