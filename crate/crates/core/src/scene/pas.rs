use serde::{Deserialize, Serialize};

use super::config::{Scene, V3};
use super::trace::{trace_paths, PathContribution};
use crate::error::{Error, Result};

pub const PAS_ROWS: usize = 90;
pub const PAS_COLS: usize = 360;
pub const PAS_LEN: usize = PAS_ROWS * PAS_COLS;

/// Angular blur of the emulated array, in pixels (one pixel per degree).
pub const KERNEL_SIGMA_PX: f64 = 7.0;
const KERNEL_HALF: i64 = 35;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PasMeta {
    pub scene: String,
    pub rx: [f64; 3],
    pub human: Option<[f64; 3]>,
}

/// Power per (elevation, azimuth) bin. Row `i` is elevation `i` degrees,
/// column `j` is azimuth `j` degrees; storage is elevation-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PasImage {
    pub data: Vec<f64>,
    pub meta: PasMeta,
}

impl Default for PasImage {
    fn default() -> Self {
        PasImage::zeros()
    }
}

impl PasImage {
    pub fn zeros() -> Self {
        PasImage {
            data: vec![0.0; PAS_LEN],
            meta: PasMeta::default(),
        }
    }

    pub fn from_vec(data: Vec<f64>) -> Result<Self> {
        if data.len() != PAS_LEN {
            return Err(Error::Contract(format!(
                "PAS needs {PAS_LEN} values, got {}",
                data.len()
            )));
        }
        Ok(PasImage {
            data,
            meta: PasMeta::default(),
        })
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * PAS_COLS + col]
    }

    pub fn total(&self) -> f64 {
        self.data.iter().sum()
    }

    /// (row, col) of the largest bin; first occurrence wins.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, v) in self.data.iter().enumerate() {
            if *v > self.data[best] {
                best = i;
            }
        }
        (best / PAS_COLS, best % PAS_COLS)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    pub fn check_valid(&self) -> Result<()> {
        if self.data.len() != PAS_LEN {
            return Err(Error::Contract("PAS has the wrong shape".into()));
        }
        match self.data.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            Some(i) => Err(Error::Numeric(format!(
                "PAS bin ({}, {}) is {}",
                i / PAS_COLS,
                i % PAS_COLS,
                self.data[i]
            ))),
            None => Ok(()),
        }
    }
}

fn gauss_1d(center: f64) -> (i64, [f64; (2 * KERNEL_HALF + 1) as usize]) {
    let c = center.round() as i64;
    let mut w = [0.0; (2 * KERNEL_HALF + 1) as usize];
    for (k, wk) in w.iter_mut().enumerate() {
        let x = (c - KERNEL_HALF + k as i64) as f64 - center;
        *wk = (-0.5 * x * x / (KERNEL_SIGMA_PX * KERNEL_SIGMA_PX)).exp();
    }
    (c - KERNEL_HALF, w)
}

/// Fraction of a unit-power path at elevation `el_deg` that lands inside the image.
pub fn retained_fraction(el_deg: f64) -> f64 {
    let (r0, w) = gauss_1d(el_deg);
    let total: f64 = w.iter().sum();
    let kept: f64 = w
        .iter()
        .enumerate()
        .filter(|(k, _)| (0..PAS_ROWS as i64).contains(&(r0 + *k as i64)))
        .map(|(_, v)| v)
        .sum();
    kept / total
}

/// Adds one path to the image through the normalized angular kernel.
pub fn splat_path(img: &mut [f64], p: &PathContribution) {
    let (r0, we) = gauss_1d(p.arrival_el_deg);
    let (c0, wa) = gauss_1d(p.arrival_az_deg);
    let norm = we.iter().sum::<f64>() * wa.iter().sum::<f64>();
    let scale = p.power_w / norm;
    for (ke, wel) in we.iter().enumerate() {
        let r = r0 + ke as i64;
        if !(0..PAS_ROWS as i64).contains(&r) {
            continue;
        }
        let row = &mut img[r as usize * PAS_COLS..(r as usize + 1) * PAS_COLS];
        let f = scale * wel;
        for (ka, waz) in wa.iter().enumerate() {
            let c = (c0 + ka as i64).rem_euclid(PAS_COLS as i64) as usize;
            row[c] += f * waz;
        }
    }
}

pub fn render_paths(paths: &[PathContribution]) -> Vec<f64> {
    let mut img = vec![0.0; PAS_LEN];
    for p in paths {
        splat_path(&mut img, p);
    }
    img
}

pub fn render_ground_truth_pas(scene: &Scene, rx_index: usize, human_index: Option<usize>) -> Result<PasImage> {
    let paths = trace_paths(scene, rx_index, human_index)?;
    let ep = scene.endpoints(rx_index);
    let img = PasImage {
        data: render_paths(&paths),
        meta: PasMeta {
            scene: scene.name().to_string(),
            rx: to_arr(&ep.viewpoint),
            human: human_index.map(|h| to_arr(&scene.humans[h])),
        },
    };
    img.check_valid()?;
    Ok(img)
}

fn to_arr(v: &V3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::PathKind;

    fn path(az: f64, el: f64, p: f64) -> PathContribution {
        PathContribution {
            kind: PathKind::Direct,
            power_w: p,
            arrival_az_deg: az,
            arrival_el_deg: el,
            total_length_m: 1.0,
        }
    }

    #[test]
    fn single_lobe_lands_on_its_bin() {
        let img = PasImage::from_vec(render_paths(&[path(90.0, 30.0, 1e-6)])).unwrap();
        assert_eq!(img.argmax(), (30, 90));
    }

    #[test]
    fn energy_accounts_for_clipping() {
        let paths = [
            path(3.0, 2.0, 1.0),
            path(358.6, 45.0, 2.0),
            path(180.0, 88.2, 0.5),
            path(10.0, -20.0, 1.0),
        ];
        let img = render_paths(&paths);
        let expect: f64 = paths
            .iter()
            .map(|p| p.power_w * retained_fraction(p.arrival_el_deg))
            .sum();
        let got: f64 = img.iter().sum();
        assert!((got - expect).abs() <= 1e-12 * expect);
        assert!((retained_fraction(45.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn azimuth_wraps() {
        let img = PasImage::from_vec(render_paths(&[path(359.6, 40.0, 1.0)])).unwrap();
        assert!(img.at(40, 0) > 0.0 && img.at(40, 359) > 0.0);
        assert!(img.at(40, 0) > img.at(40, 359));
    }
}
