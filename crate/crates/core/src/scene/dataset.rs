use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::Scene;
use super::pas::{render_ground_truth_pas, PasImage, PasMeta, PAS_COLS, PAS_LEN, PAS_ROWS};
use crate::em::watts_to_dbm;
use crate::error::{Error, Result};

pub const MIN_RX_FOR_SPLIT: usize = 5;
const TEST_RX_FRACTION: f64 = 0.20;
const VAL_DYNAMIC_FRACTION: f64 = 0.19;
/// Stand-in for empty bins when taking logarithms.
const PREVIEW_FLOOR_W: f64 = 1e-18;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Train,
    Val,
    Test,
}

/// Which RX indices train and which are held out, plus the train/val
/// assignment of dynamic samples at train RX.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub train_rx: Vec<usize>,
    pub test_rx: Vec<usize>,
    /// `(rx, human)` pairs of train RX kept for validation.
    pub val_pairs: Vec<(usize, usize)>,
}

impl Partition {
    /// Seeded 80/20 RX split followed by an 81/19 split of the dynamic
    /// samples at train RX.
    pub fn seeded(n_rx: usize, n_humans: usize, seed: u64) -> Result<Partition> {
        if n_rx < MIN_RX_FOR_SPLIT {
            return Err(Error::Config(format!(
                "need at least {MIN_RX_FOR_SPLIT} RX positions to split, got {n_rx}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..n_rx).collect();
        order.shuffle(&mut rng);
        let n_test = ((n_rx as f64 * TEST_RX_FRACTION).round() as usize).clamp(1, n_rx - 1);
        let test_rx = order[..n_test].to_vec();
        let train_rx = order[n_test..].to_vec();
        Partition::explicit(train_rx, test_rx, n_humans, seed)
    }

    /// Caller-chosen RX sets; the dynamic train/val split is still seeded.
    pub fn explicit(
        mut train_rx: Vec<usize>,
        mut test_rx: Vec<usize>,
        n_humans: usize,
        seed: u64,
    ) -> Result<Partition> {
        train_rx.sort_unstable();
        test_rx.sort_unstable();
        if train_rx.is_empty() || test_rx.is_empty() {
            return Err(Error::Config("train and test RX sets must both be non-empty".into()));
        }
        if train_rx.windows(2).any(|w| w[0] == w[1]) || test_rx.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("duplicate RX index in partition".into()));
        }
        if train_rx.iter().any(|r| test_rx.binary_search(r).is_ok()) {
            return Err(Error::Config("train and test RX sets overlap".into()));
        }
        let mut pairs: Vec<(usize, usize)> = train_rx
            .iter()
            .flat_map(|&r| (0..n_humans).map(move |h| (r, h)))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xD1B5_4A32_D192_ED03);
        pairs.shuffle(&mut rng);
        let n_val = (pairs.len() as f64 * VAL_DYNAMIC_FRACTION).round() as usize;
        let mut val_pairs = pairs[..n_val].to_vec();
        val_pairs.sort_unstable();
        Ok(Partition {
            train_rx,
            test_rx,
            val_pairs,
        })
    }

    pub fn role(&self, rx: usize, human: Option<usize>) -> Role {
        if self.test_rx.binary_search(&rx).is_ok() {
            return Role::Test;
        }
        match human {
            Some(h) if self.val_pairs.binary_search(&(rx, h)).is_ok() => Role::Val,
            _ => Role::Train,
        }
    }
}

/// Maps watts to [0, 1] on a decibel scale anchored at the dataset maximum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PasScale {
    pub ref_max_dbm: f64,
    pub range_db: f64,
}

impl PasScale {
    pub const DEFAULT_RANGE_DB: f64 = 60.0;

    pub fn from_images<'a>(images: impl IntoIterator<Item = &'a PasImage>) -> PasScale {
        let max = images.into_iter().map(|p| p.max()).fold(0.0, f64::max);
        PasScale {
            ref_max_dbm: if max > 0.0 { watts_to_dbm(max) } else { 0.0 },
            range_db: Self::DEFAULT_RANGE_DB,
        }
    }

    #[inline]
    pub fn normalize_value(&self, watts: f64) -> f64 {
        if !(watts > 0.0) {
            return 0.0;
        }
        ((watts_to_dbm(watts) - (self.ref_max_dbm - self.range_db)) / self.range_db).clamp(0.0, 1.0)
    }

    pub fn normalize(&self, img: &PasImage) -> Vec<f64> {
        img.data.iter().map(|w| self.normalize_value(*w)).collect()
    }
}

#[derive(Clone, Debug)]
pub struct Sample {
    pub id: usize,
    pub rx: usize,
    pub human: Option<usize>,
    /// Copy number in the duplicated-data ablation; 0 for originals.
    pub copy: usize,
    pub role: Role,
    pub antenna: [f64; 3],
    pub viewpoint: [f64; 3],
    pub human_pos: Option<[f64; 3]>,
    pub pas: Arc<PasImage>,
    pub target: Arc<Vec<f64>>,
}

impl Sample {
    pub fn is_static(&self) -> bool {
        self.human.is_none()
    }

    pub fn is_duplicate(&self) -> bool {
        self.copy > 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetOptions {
    pub split_seed: u64,
    /// Each static sample appears this many times; 1 disables duplication.
    pub duplicate: usize,
    pub include_dynamic: bool,
    /// Overrides the seeded RX split.
    pub partition: Option<Partition>,
    /// Restricts simulation to these RX; `None` means all.
    pub rx_subset: Option<Vec<usize>>,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        DatasetOptions {
            split_seed: 0,
            duplicate: 1,
            include_dynamic: true,
            partition: None,
            rx_subset: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub scene: String,
    pub samples: Vec<Sample>,
    pub partition: Partition,
    pub scale: PasScale,
    pub n_rx: usize,
    pub n_humans: usize,
}

impl Dataset {
    pub fn static_samples(&self) -> impl Iterator<Item = &Sample> {
        self.samples.iter().filter(|s| s.is_static())
    }

    pub fn dynamic_samples(&self) -> impl Iterator<Item = &Sample> {
        self.samples.iter().filter(|s| !s.is_static())
    }

    pub fn select(&self, dynamic: bool, role: Role) -> Vec<&Sample> {
        self.samples
            .iter()
            .filter(|s| s.is_static() != dynamic && s.role == role)
            .collect()
    }
}

pub fn generate_dataset(scene: &Scene, split_seed: u64) -> Result<Dataset> {
    generate_dataset_with(
        scene,
        &DatasetOptions {
            split_seed,
            ..DatasetOptions::default()
        },
    )
}

pub fn generate_dataset_with(scene: &Scene, opts: &DatasetOptions) -> Result<Dataset> {
    if opts.duplicate == 0 {
        return Err(Error::Config("duplicate factor must be >= 1".into()));
    }
    let n_rx = scene.rx.len();
    let n_humans = scene.humans.len();
    let partition = match &opts.partition {
        Some(p) => {
            if p.train_rx.iter().chain(&p.test_rx).any(|&r| r >= n_rx) {
                return Err(Error::Config("partition refers to an RX outside the scene".into()));
            }
            p.clone()
        }
        None => Partition::seeded(n_rx, n_humans, opts.split_seed)?,
    };
    let rx_list: Vec<usize> = match &opts.rx_subset {
        Some(v) => {
            let mut v = v.clone();
            v.sort_unstable();
            v.dedup();
            if v.iter().any(|&r| r >= n_rx) {
                return Err(Error::Config("rx_subset refers to an RX outside the scene".into()));
            }
            v
        }
        None => (0..n_rx).collect(),
    };

    let mut jobs: Vec<(usize, Option<usize>)> = rx_list.iter().map(|&r| (r, None)).collect();
    if opts.include_dynamic {
        for &r in &rx_list {
            jobs.extend((0..n_humans).map(|h| (r, Some(h))));
        }
    }
    let images: Vec<PasImage> = jobs
        .par_iter()
        .map(|&(r, h)| render_ground_truth_pas(scene, r, h))
        .collect::<Result<_>>()?;
    let scale = PasScale::from_images(&images);

    let mut samples = Vec::with_capacity(jobs.len() + rx_list.len() * (opts.duplicate - 1));
    let mut copies = Vec::new();
    for (&(r, h), img) in jobs.iter().zip(images) {
        let ep = scene.endpoints(r);
        let target = Arc::new(scale.normalize(&img));
        let s = Sample {
            id: 0,
            rx: r,
            human: h,
            copy: 0,
            role: partition.role(r, h),
            antenna: ep.antenna.into(),
            viewpoint: ep.viewpoint.into(),
            human_pos: h.map(|h| scene.humans[h].into()),
            pas: Arc::new(img),
            target,
        };
        if h.is_none() {
            for k in 1..opts.duplicate {
                copies.push(Sample { copy: k, ..s.clone() });
            }
        }
        samples.push(s);
    }
    let n_static = rx_list.len();
    let tail = samples.split_off(n_static);
    samples.extend(copies);
    samples.extend(tail);
    for (i, s) in samples.iter_mut().enumerate() {
        s.id = i;
    }
    Ok(Dataset {
        scene: scene.name().to_string(),
        samples,
        partition,
        scale,
        n_rx,
        n_humans,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct SampleRecord {
    id: usize,
    rx: usize,
    human: Option<usize>,
    copy: usize,
    role: Role,
    antenna: [f64; 3],
    viewpoint: [f64; 3],
    human_pos: Option<[f64; 3]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct DatasetMeta {
    scene: String,
    rows: usize,
    cols: usize,
    dtype: String,
    n_rx: usize,
    n_humans: usize,
    partition: Partition,
    scale: PasScale,
    samples: Vec<SampleRecord>,
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes `meta.json`, `samples/NNNNN.bin` (little-endian f32 watts) and
/// `previews/NNNNN.png`. Copies share the file of their original.
pub fn write_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    let sdir = dir.join("samples");
    let pdir = dir.join("previews");
    for d in [dir, &sdir, &pdir] {
        std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let originals: Vec<&Sample> = ds.samples.iter().filter(|s| !s.is_duplicate()).collect();
    let encoded: Vec<(usize, Vec<u8>, Vec<u8>)> = originals
        .par_iter()
        .map(|s| Ok((s.id, pas_to_bytes(&s.pas), preview_png(&s.pas)?)))
        .collect::<Result<_>>()?;
    for (id, bin, png) in encoded {
        write_file(&sdir.join(format!("{id:05}.bin")), &bin)?;
        write_file(&pdir.join(format!("{id:05}.png")), &png)?;
    }
    let meta = DatasetMeta {
        scene: ds.scene.clone(),
        rows: PAS_ROWS,
        cols: PAS_COLS,
        dtype: "f32le".into(),
        n_rx: ds.n_rx,
        n_humans: ds.n_humans,
        partition: ds.partition.clone(),
        scale: ds.scale,
        samples: ds
            .samples
            .iter()
            .map(|s| SampleRecord {
                id: s.id,
                rx: s.rx,
                human: s.human,
                copy: s.copy,
                role: s.role,
                antenna: s.antenna,
                viewpoint: s.viewpoint,
                human_pos: s.human_pos,
            })
            .collect(),
    };
    let text = serde_json::to_string_pretty(&meta).map_err(|e| Error::json("meta.json", e))?;
    write_file(&dir.join("meta.json"), text.as_bytes())
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let mpath = dir.join("meta.json");
    let text = std::fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let meta: DatasetMeta = serde_json::from_str(&text).map_err(|e| Error::json(mpath.display().to_string(), e))?;
    if meta.rows != PAS_ROWS || meta.cols != PAS_COLS || meta.dtype != "f32le" {
        return Err(Error::Config(format!(
            "{} describes an unsupported layout",
            mpath.display()
        )));
    }
    let mut by_key: std::collections::HashMap<(usize, Option<usize>), (Arc<PasImage>, Arc<Vec<f64>>)> =
        Default::default();
    let mut samples = Vec::with_capacity(meta.samples.len());
    for r in meta.samples {
        let (pas, target) = match by_key.get(&(r.rx, r.human)) {
            Some(v) => v.clone(),
            None => {
                let path = dir.join("samples").join(format!("{:05}.bin", r.id));
                let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
                let mut img = pas_from_bytes(&bytes)?;
                img.meta = PasMeta {
                    scene: meta.scene.clone(),
                    rx: r.viewpoint,
                    human: r.human_pos,
                };
                let target = Arc::new(meta.scale.normalize(&img));
                let v = (Arc::new(img), target);
                by_key.insert((r.rx, r.human), v.clone());
                v
            }
        };
        samples.push(Sample {
            id: r.id,
            rx: r.rx,
            human: r.human,
            copy: r.copy,
            role: r.role,
            antenna: r.antenna,
            viewpoint: r.viewpoint,
            human_pos: r.human_pos,
            pas,
            target,
        });
    }
    Ok(Dataset {
        scene: meta.scene,
        samples,
        partition: meta.partition,
        scale: meta.scale,
        n_rx: meta.n_rx,
        n_humans: meta.n_humans,
    })
}

pub fn pas_to_bytes(img: &PasImage) -> Vec<u8> {
    img.data.iter().flat_map(|v| (*v as f32).to_le_bytes()).collect()
}

pub fn pas_from_bytes(bytes: &[u8]) -> Result<PasImage> {
    if bytes.len() != PAS_LEN * 4 {
        return Err(Error::Config(format!(
            "PAS file has {} bytes, expected {}",
            bytes.len(),
            PAS_LEN * 4
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let img = PasImage::from_vec(data)?;
    img.check_valid()?;
    Ok(img)
}

/// Grayscale PNG of `log10` power, stretched to the image's own range.
pub fn preview_png(img: &PasImage) -> Result<Vec<u8>> {
    let logs: Vec<f64> = img.data.iter().map(|v| v.max(PREVIEW_FLOOR_W).log10()).collect();
    gray_png(&logs, PAS_COLS as u32, PAS_ROWS as u32)
}

/// Min-max stretch to 8-bit gray, elevation 90 at the top.
pub fn gray_png(values: &[f64], width: u32, height: u32) -> Result<Vec<u8>> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let (w, h) = (width as usize, height as usize);
    let mut pixels = vec![0u8; w * h];
    for r in 0..h {
        for c in 0..w {
            let v = (values[r * w + c] - lo) / span;
            pixels[(h - 1 - r) * w + c] = (v * 255.0).round().clamp(0.0, 255.0) as u8;
        }
    }
    let buf =
        image::GrayImage::from_raw(width, height, pixels).ok_or_else(|| Error::Image("buffer size mismatch".into()))?;
    let mut out = std::io::Cursor::new(Vec::new());
    buf.write_to(&mut out, image::ImageFormat::Png)
        .map_err(|e| Error::Image(e.to_string()))?;
    Ok(out.into_inner())
}
