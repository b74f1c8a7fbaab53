use crate::nets::{Mlp, MlpGrads};
use crate::splat::PARAMS_PER_GAUSSIAN;

type Packed = [f64; PARAMS_PER_GAUSSIAN];

/// Shared step counter and bias corrections.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamClock {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
}

impl AdamClock {
    pub fn new(beta1: f64, beta2: f64, eps: f64) -> Self {
        AdamClock {
            beta1,
            beta2,
            eps,
            t: 0,
        }
    }

    pub fn tick(&mut self) {
        self.t += 1;
    }

    #[inline]
    fn update(&self, m: &mut f64, v: &mut f64, p: &mut f64, g: f64, lr: f64) {
        *m = self.beta1 * *m + (1.0 - self.beta1) * g;
        *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
        let mh = *m / (1.0 - self.beta1.powi(self.t as i32));
        let vh = *v / (1.0 - self.beta2.powi(self.t as i32));
        *p -= lr * mh / (vh.sqrt() + self.eps);
    }
}

/// Per-Gaussian moment buffers that follow clones and prunes.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GaussianMoments {
    pub m: Vec<Packed>,
    pub v: Vec<Packed>,
}

impl GaussianMoments {
    pub fn new(n: usize) -> Self {
        GaussianMoments {
            m: vec![[0.0; PARAMS_PER_GAUSSIAN]; n],
            v: vec![[0.0; PARAMS_PER_GAUSSIAN]; n],
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn push_zero(&mut self) {
        self.m.push([0.0; PARAMS_PER_GAUSSIAN]);
        self.v.push([0.0; PARAMS_PER_GAUSSIAN]);
    }

    pub fn retain(&mut self, keep: &[bool]) {
        let mut it = keep.iter();
        self.m.retain(|_| *it.next().unwrap());
        let mut it = keep.iter();
        self.v.retain(|_| *it.next().unwrap());
    }

    pub fn step(&mut self, clock: &AdamClock, i: usize, params: &mut Packed, grad: &Packed, lr: impl Fn(usize) -> f64) {
        for k in 0..PARAMS_PER_GAUSSIAN {
            clock.update(&mut self.m[i][k], &mut self.v[i][k], &mut params[k], grad[k], lr(k));
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetMoments {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl NetMoments {
    pub fn new(net: &Mlp) -> Self {
        NetMoments {
            m: vec![0.0; net.param_count()],
            v: vec![0.0; net.param_count()],
        }
    }

    pub fn step(&mut self, clock: &AdamClock, net: &mut Mlp, grads: &MlpGrads, lr: f64) {
        let (m, v) = (&mut self.m, &mut self.v);
        net.update(grads, |i, p, g| clock.update(&mut m[i], &mut v[i], p, g, lr));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut clock = AdamClock::new(0.9, 0.999, 1e-8);
        clock.tick();
        let mut mo = GaussianMoments::new(1);
        let mut p = [1.0; PARAMS_PER_GAUSSIAN];
        let mut g = [0.0; PARAMS_PER_GAUSSIAN];
        g[0] = 3.0;
        g[4] = -0.01;
        mo.step(&clock, 0, &mut p, &g, |k| if k == 0 { 0.1 } else { 0.5 });
        assert!((p[0] - 0.9).abs() < 1e-7);
        assert!((p[4] - 1.5).abs() < 1e-5);
        assert_eq!(p[1], 1.0);
    }

    #[test]
    fn converges_on_a_quadratic() {
        let mut clock = AdamClock::new(0.9, 0.999, 1e-8);
        let mut mo = GaussianMoments::new(1);
        let mut p = [0.0; PARAMS_PER_GAUSSIAN];
        for _ in 0..3000 {
            clock.tick();
            let g: Packed = std::array::from_fn(|k| p[k] - k as f64 * 0.1);
            mo.step(&clock, 0, &mut p, &g, |_| 0.01);
        }
        assert!(p.iter().enumerate().all(|(k, v)| (v - k as f64 * 0.1).abs() < 1e-3));
    }

    #[test]
    fn retain_drops_matching_rows() {
        let mut mo = GaussianMoments::new(3);
        mo.m[1][0] = 5.0;
        mo.retain(&[false, true, false]);
        assert_eq!(mo.len(), 1);
        assert_eq!(mo.m[0][0], 5.0);
    }
}
