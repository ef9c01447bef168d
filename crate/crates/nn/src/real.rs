//! Scalar abstraction: training runs in f32 for throughput, gradient checks
//! and analytic oracles in f64.

use ndarray::NdFloat;

pub trait Real: NdFloat + ndarray::LinalgScalar {
    const DTYPE: &'static str;
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
    fn machine_epsilon() -> f64;
    fn write_le_bytes(values: &[Self], out: &mut Vec<u8>);
    fn read_le_bytes(bytes: &[u8]) -> Vec<Self>;
}

impl Real for f32 {
    const DTYPE: &'static str = "f32";
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn machine_epsilon() -> f64 {
        f64::from(f32::EPSILON)
    }
    fn as_f64(self) -> f64 {
        f64::from(self)
    }
    fn write_le_bytes(values: &[Self], out: &mut Vec<u8>) {
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    fn read_le_bytes(bytes: &[u8]) -> Vec<Self> {
        bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect()
    }
}

impl Real for f64 {
    const DTYPE: &'static str = "f64";
    fn from_f64(v: f64) -> Self {
        v
    }
    fn machine_epsilon() -> f64 {
        f64::EPSILON
    }
    fn as_f64(self) -> f64 {
        self
    }
    fn write_le_bytes(values: &[Self], out: &mut Vec<u8>) {
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    fn read_le_bytes(bytes: &[u8]) -> Vec<Self> {
        bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]))
            .collect()
    }
}
