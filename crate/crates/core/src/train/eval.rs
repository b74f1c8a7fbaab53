use std::collections::HashMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{Model, View};
use crate::error::Result;
use crate::scene::{PasImage, Sample, PAS_COLS, PAS_ROWS};
use crate::splat::ssim;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub sample_id: usize,
    pub rx: usize,
    pub human: Option<usize>,
    pub ssim: f64,
    pub l1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub mean_ssim: f64,
    pub median_ssim: f64,
    pub mean_l1: f64,
}

pub fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

impl EvalReport {
    pub fn from_rows(rows: Vec<EvalRow>) -> Self {
        let n = rows.len().max(1) as f64;
        let ssims: Vec<f64> = rows.iter().map(|r| r.ssim).collect();
        EvalReport {
            mean_ssim: ssims.iter().sum::<f64>() / n,
            median_ssim: median(&ssims),
            mean_l1: rows.iter().map(|r| r.l1).sum::<f64>() / n,
            rows,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("sample_id,rx,human,ssim,l1\n");
        for r in &self.rows {
            let h = r.human.map(|h| h.to_string()).unwrap_or_default();
            writeln!(out, "{},{},{},{:.9},{:.9}", r.sample_id, r.rx, h, r.ssim, r.l1).unwrap();
        }
        out
    }
}

/// Prediction and per-sample scores.
pub fn score(pred: &[f64], target: &[f64]) -> Result<(f64, f64)> {
    let s = ssim(pred, target, PAS_COLS, PAS_ROWS)?;
    let l1 = pred.iter().zip(target).map(|(a, b)| (a - b).abs()).sum::<f64>() / pred.len() as f64;
    Ok((s, l1))
}

/// Renders every sample; the background net runs once per antenna position.
pub fn render_samples(model: &Model, samples: &[&Sample]) -> Result<Vec<PasImage>> {
    let mut antennas: Vec<[f64; 3]> = Vec::new();
    let mut index: HashMap<[u64; 3], usize> = HashMap::new();
    for s in samples {
        let k = s.antenna.map(f64::to_bits);
        if let std::collections::hash_map::Entry::Vacant(e) = index.entry(k) {
            e.insert(antennas.len());
            antennas.push(s.antenna);
        }
    }
    let sp: Vec<Vec<f64>> = antennas
        .par_iter()
        .map(|a| model.background_softplus(*a))
        .collect::<Result<_>>()?;
    samples
        .par_iter()
        .map(|s| {
            let k = index[&s.antenna.map(f64::to_bits)];
            model.render_with(&View::from(*s), Some(&sp[k])).map(|(img, _)| img)
        })
        .collect()
}

pub fn evaluate(model: &Model, samples: &[&Sample]) -> Result<EvalReport> {
    let imgs = render_samples(model, samples)?;
    let rows = samples
        .par_iter()
        .zip(imgs.par_iter())
        .map(|(s, img)| {
            let (ssim, l1) = score(&img.data, &s.target)?;
            Ok(EvalRow {
                sample_id: s.id,
                rx: s.rx,
                human: s.human,
                ssim,
                l1,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_rows(rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_and_aggregates() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        let rows: Vec<EvalRow> = [0.2, 0.9, 0.5]
            .iter()
            .enumerate()
            .map(|(i, &s)| EvalRow {
                sample_id: i,
                rx: i,
                human: if i == 0 { None } else { Some(i) },
                ssim: s,
                l1: 0.1,
            })
            .collect();
        let r = EvalReport::from_rows(rows);
        assert!(r.mean_ssim <= 0.9);
        assert_eq!(r.median_ssim, 0.5);
        let csv = r.to_csv();
        assert!(csv.starts_with("sample_id,rx,human,ssim,l1\n0,0,,"));
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn identical_images_score_one() {
        let img: Vec<f64> = (0..PAS_COLS * PAS_ROWS)
            .map(|i| ((i * 13) % 101) as f64 / 100.0)
            .collect();
        let (s, l1) = score(&img, &img).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
        assert_eq!(l1, 0.0);
    }
}
