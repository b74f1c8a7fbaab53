use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// `[x, sin(2^k pi x), cos(2^k pi x)]` per coordinate, `k < L`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PositionalEncoding {
    pub frequencies: usize,
}

impl Default for PositionalEncoding {
    fn default() -> Self {
        PositionalEncoding { frequencies: 4 }
    }
}

impl PositionalEncoding {
    pub fn new(frequencies: usize) -> Self {
        PositionalEncoding { frequencies }
    }

    pub fn dim(&self, input: usize) -> usize {
        input * (2 * self.frequencies + 1)
    }

    pub fn encode_into(&self, x: &[f64], out: &mut [f64]) {
        let w = 2 * self.frequencies + 1;
        for (i, &v) in x.iter().enumerate() {
            let o = &mut out[i * w..(i + 1) * w];
            o[0] = v;
            for k in 0..self.frequencies {
                let (s, c) = ((1u64 << k) as f64 * PI * v).sin_cos();
                o[1 + 2 * k] = s;
                o[2 + 2 * k] = c;
            }
        }
    }

    /// `dL/dx` from `dL/d(encoding)`.
    pub fn backward(&self, x: &[f64], d_enc: &[f64], d_x: &mut [f64]) {
        let w = 2 * self.frequencies + 1;
        for (i, &v) in x.iter().enumerate() {
            let g = &d_enc[i * w..(i + 1) * w];
            let mut acc = g[0];
            for k in 0..self.frequencies {
                let f = (1u64 << k) as f64 * PI;
                let (s, c) = (f * v).sin_cos();
                acc += f * (c * g[1 + 2 * k] - s * g[2 + 2 * k]);
            }
            d_x[i] += acc;
        }
    }
}

/// Maps room coordinates `[0, room]` onto `[-1, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoomNorm {
    pub room: [f64; 3],
}

impl RoomNorm {
    pub fn apply(&self, p: &[f64; 3]) -> [f64; 3] {
        std::array::from_fn(|k| 2.0 * p[k] / self.room[k] - 1.0)
    }

    /// Derivative of each normalized coordinate.
    pub fn slope(&self) -> [f64; 3] {
        std::array::from_fn(|k| 2.0 / self.room[k])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_and_dimension() {
        let pe = PositionalEncoding::default();
        assert_eq!(pe.dim(3), 27);
        let mut out = vec![0.0; 27];
        pe.encode_into(&[0.5, 0.0, -1.0], &mut out);
        assert_eq!(out[0], 0.5);
        assert!((out[1] - 1.0).abs() < 1e-15);
        assert!((out[2]).abs() < 1e-15);
        assert_eq!(out[9], 0.0);
        assert_eq!(out[10], 0.0);
        assert_eq!(out[11], 1.0);
        let zero = PositionalEncoding::new(0);
        let mut o = vec![0.0; 3];
        zero.encode_into(&[1.0, 2.0, 3.0], &mut o);
        assert_eq!(o, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn backward_matches_differences() {
        let pe = PositionalEncoding::default();
        let x = [0.3, -0.7, 0.11];
        let up: Vec<f64> = (0..27).map(|i| ((i * 7) % 11) as f64 / 11.0 - 0.5).collect();
        let f = |x: &[f64]| {
            let mut o = vec![0.0; 27];
            pe.encode_into(x, &mut o);
            o.iter().zip(&up).map(|(a, b)| a * b).sum::<f64>()
        };
        let mut g = [0.0; 3];
        pe.backward(&x, &up, &mut g);
        for k in 0..3 {
            let (mut a, mut b) = (x, x);
            a[k] += 1e-6;
            b[k] -= 1e-6;
            let fd = (f(&a) - f(&b)) / 2e-6;
            assert!((fd - g[k]).abs() < 1e-6 * fd.abs().max(1.0));
        }
    }
}
