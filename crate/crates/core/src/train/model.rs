use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::config::{Anchor, TrainConfig};
use crate::error::{Error, Result};
use crate::nets::{
    apply_deformation, deformation_backward, DeformCache, DeformNet, EmCache, EmNet, EmVariant, Mlp, MlpGrads,
    PositionalEncoding, RoomNorm,
};
use crate::scene::{PasImage, Sample, Scene};
use crate::splat::{
    logit, rasterize, rasterize_backward, Checkpoint, GaussianPrimitive, GaussianSet, RenderInput, SetTag,
    SplatWorkspace, PARAMS_PER_GAUSSIAN,
};

type Packed = [f64; PARAMS_PER_GAUSSIAN];

/// Where a render is seen from and what conditions it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct View {
    pub viewpoint: [f64; 3],
    pub antenna: [f64; 3],
    pub human: Option<[f64; 3]>,
}

impl From<&Sample> for View {
    fn from(s: &Sample) -> Self {
        View {
            viewpoint: s.viewpoint,
            antenna: s.antenna,
            human: s.human_pos,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HumanModel {
    pub set: GaussianSet,
    pub em: EmNet,
    pub deform: DeformNet,
    pub anchor: Anchor,
}

impl HumanModel {
    fn rest(&self, human: &[f64; 3]) -> Vec<GaussianPrimitive> {
        let off = match self.anchor {
            Anchor::Human => *human,
            Anchor::World => [0.0; 3],
        };
        self.set
            .gaussians
            .iter()
            .map(|g| GaussianPrimitive {
                position: std::array::from_fn(|k| g.position[k] + off[k]),
                ..*g
            })
            .collect()
    }
}

/// Background Gaussians with their radiance net, plus the optional person part.
///
/// Rendered radiance is `radiance_base * softplus(net)` per Gaussian.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub room: [f64; 3],
    pub background: GaussianSet,
    pub em_background: EmNet,
    pub human: Option<HumanModel>,
    /// Angular blur applied to every footprint, px (standard deviation).
    pub beam_px: f64,
}

struct HumanTape {
    rest: Vec<GaussianPrimitive>,
    out: Array2<f64>,
    deform: DeformCache,
    em: EmCache,
    sp: Vec<f64>,
    set: GaussianSet,
}

/// Everything the backward pass needs from one render.
pub struct Tape {
    view: View,
    bg_sp: Vec<f64>,
    bg_em: Option<EmCache>,
    human: Option<HumanTape>,
    sig: Vec<f64>,
    ws: SplatWorkspace,
}

impl Tape {
    /// Radiance of every rendered Gaussian, background first.
    pub fn radiance(&self) -> &[f64] {
        &self.sig
    }

    pub fn background_len(&self) -> usize {
        self.bg_sp.len()
    }

    pub fn has_human(&self) -> bool {
        self.human.is_some()
    }

    pub fn visible(&self, flat_index: usize) -> bool {
        self.ws.projected[flat_index].is_some()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PartGrads {
    pub gaussians: Vec<Packed>,
    pub mean2d: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelGrads {
    /// `None` when the background is frozen.
    pub background: Option<PartGrads>,
    pub em_background: Option<MlpGrads>,
    pub human: Option<PartGrads>,
    pub em_human: Option<MlpGrads>,
    pub deform: Option<MlpGrads>,
}

impl ModelGrads {
    pub fn is_finite(&self) -> bool {
        let parts = [&self.background, &self.human]
            .into_iter()
            .flatten()
            .all(|p| p.gaussians.iter().all(|g| g.iter().all(|v| v.is_finite())));
        let nets = [&self.em_background, &self.em_human, &self.deform]
            .into_iter()
            .flatten()
            .all(|n| {
                n.layers
                    .iter()
                    .all(|l| l.w.iter().chain(l.b.iter()).all(|v| v.is_finite()))
            });
        parts && nets
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ModelMeta {
    room: [f64; 3],
    frequencies: usize,
    anchor: Option<Anchor>,
    #[serde(default)]
    beam_px: f64,
}

fn positions(gs: &[GaussianPrimitive]) -> Vec<[f64; 3]> {
    gs.iter().map(|g| g.position).collect()
}

/// Jittered points on the slab surfaces, spaced by their 3-nearest-neighbour distance.
pub fn init_background(scene: &Scene, cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> GaussianSet {
    let areas: Vec<f64> = scene.slabs.iter().map(|s| s.area()).collect();
    let total: f64 = areas.iter().sum();
    let mut pts: Vec<[f64; 3]> = Vec::with_capacity(cfg.init_points + cfg.source_points);
    for _ in 0..cfg.init_points {
        let mut pick = rng.gen_range(0.0..total);
        let mut k = 0;
        while k + 1 < areas.len() && pick >= areas[k] {
            pick -= areas[k];
            k += 1;
        }
        let s = &scene.slabs[k];
        let mut p = [0.0; 3];
        p[s.u] = rng.gen_range(s.span_u[0]..=s.span_u[1]);
        p[s.v] = rng.gen_range(s.span_v[0]..=s.span_v[1]);
        p[s.axis] = s.offset + rng.gen_range(-0.02..=0.02);
        for (k, v) in p.iter_mut().enumerate() {
            *v = v.clamp(0.0, scene.room[k]);
        }
        pts.push(p);
    }
    let source = scene.endpoints(0).source;
    let fixed = (0..scene.rx.len()).all(|i| scene.endpoints(i).source == source);
    if fixed {
        for _ in 0..cfg.source_points {
            pts.push(std::array::from_fn(|k| source[k] + rng.gen_range(-0.15..=0.15)));
        }
    }
    let scales = knn_scales(&pts, 3);
    let dl = logit(cfg.init_delta);
    let gaussians = pts
        .iter()
        .zip(scales)
        .map(|(p, s)| GaussianPrimitive::isotropic(*p, s.clamp(0.01, 0.5), 0.0, 1.0))
        .map(|mut g| {
            g.delta_logit = dl;
            g
        })
        .collect();
    GaussianSet::new(SetTag::Background, gaussians)
}

fn knn_scales(pts: &[[f64; 3]], k: usize) -> Vec<f64> {
    pts.iter()
        .enumerate()
        .map(|(i, p)| {
            let mut best = vec![f64::INFINITY; k];
            for (j, q) in pts.iter().enumerate() {
                if i == j {
                    continue;
                }
                let d = (0..3).map(|a| (p[a] - q[a]).powi(2)).sum::<f64>();
                if d < best[k - 1] {
                    best[k - 1] = d;
                    best.sort_by(f64::total_cmp);
                }
            }
            let finite: Vec<f64> = best.iter().filter(|d| d.is_finite()).map(|d| d.sqrt()).collect();
            if finite.is_empty() {
                0.1
            } else {
                finite.iter().sum::<f64>() / finite.len() as f64
            }
        })
        .collect()
}

/// Person Gaussians inside the body ellipsoid.
pub fn init_human(scene: &Scene, cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> GaussianSet {
    let axes = scene.human_axes();
    let centre = match cfg.anchor {
        Anchor::Human => [0.0; 3],
        Anchor::World => std::array::from_fn(|k| 0.5 * scene.room[k]),
    };
    let spread: [f64; 3] = match cfg.anchor {
        Anchor::Human => axes.into(),
        Anchor::World => std::array::from_fn(|k| 0.5 * scene.room[k]),
    };
    let scale = axes[0] * cfg.human_scale;
    let gaussians = (0..cfg.human_gaussians)
        .map(|_| {
            let u = loop {
                let u: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-1.0..=1.0));
                if u.iter().map(|v| v * v).sum::<f64>() <= 1.0 {
                    break u;
                }
            };
            let p = std::array::from_fn(|k| centre[k] + spread[k] * u[k]);
            GaussianPrimitive::isotropic(p, scale, cfg.human_delta, 0.0)
        })
        .collect();
    GaussianSet::new(SetTag::Human, gaussians)
}

impl Model {
    pub fn new_background(scene: &Scene, cfg: &TrainConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let room: [f64; 3] = scene.room.into();
        let background = init_background(scene, cfg, &mut rng);
        let enc = PositionalEncoding::new(cfg.frequencies);
        Model {
            room,
            background,
            em_background: EmNet::with_shape(EmVariant::Background, room, enc, cfg.hidden, cfg.depth, cfg.seed ^ 0x11),
            human: None,
            beam_px: cfg.beam_px,
        }
    }

    pub fn attach_human(&mut self, scene: &Scene, cfg: &TrainConfig) {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0002);
        let enc = PositionalEncoding::new(cfg.frequencies);
        let mut set = init_human(scene, cfg, &mut rng);
        let n = self.background.len().max(1) as f64;
        let rb = cfg.human_radiance * self.background.gaussians.iter().map(|g| g.radiance_base).sum::<f64>() / n;
        for g in &mut set.gaussians {
            g.radiance_base = rb;
        }
        self.human = Some(HumanModel {
            set,
            em: EmNet::with_shape(EmVariant::Human, self.room, enc, cfg.hidden, cfg.depth, cfg.seed ^ 0x22),
            deform: DeformNet::with_shape(self.room, enc, cfg.hidden, cfg.depth, cfg.seed ^ 0x33),
            anchor: cfg.anchor,
        });
    }

    fn beam_px2(&self) -> f64 {
        self.beam_px * self.beam_px
    }

    pub fn gaussian_count(&self) -> usize {
        self.background.len() + self.human.as_ref().map_or(0, |h| h.set.len())
    }

    pub fn is_finite(&self) -> bool {
        let sets = self.background.gaussians.iter().all(|g| g.is_finite())
            && self
                .human
                .as_ref()
                .is_none_or(|h| h.set.gaussians.iter().all(|g| g.is_finite()));
        let nets = self.em_background.mlp.is_finite()
            && self
                .human
                .as_ref()
                .is_none_or(|h| h.em.mlp.is_finite() && h.deform.mlp.is_finite());
        sets && nets
    }

    /// Background radiance net outputs for one antenna position.
    pub fn background_softplus(&self, antenna: [f64; 3]) -> Result<Vec<f64>> {
        Ok(self
            .em_background
            .forward(&positions(&self.background.gaussians), antenna, None)?
            .0)
    }

    pub fn render(&self, view: &View) -> Result<(PasImage, Tape)> {
        self.render_with(view, None)
    }

    /// `bg_softplus` replaces the background net outputs, e.g. a cache for a frozen background.
    pub fn render_with(&self, view: &View, bg_softplus: Option<&[f64]>) -> Result<(PasImage, Tape)> {
        let (bg_sp, bg_em) = match bg_softplus {
            Some(sp) => {
                if sp.len() != self.background.len() {
                    return Err(Error::Contract(
                        "cached background radiance has the wrong length".into(),
                    ));
                }
                (sp.to_vec(), None)
            }
            None => {
                let (sp, cache) =
                    self.em_background
                        .forward(&positions(&self.background.gaussians), view.antenna, None)?;
                (sp, Some(cache))
            }
        };
        let mut sig: Vec<f64> = self
            .background
            .gaussians
            .iter()
            .zip(&bg_sp)
            .map(|(g, s)| g.radiance_base * s)
            .collect();
        let human = match (&self.human, view.human) {
            (Some(hm), Some(h)) => {
                let rest = hm.rest(&h);
                let rest_pos = positions(&rest);
                let (out, deform) = hm.deform.forward(&rest_pos, h)?;
                let (sp, em) = hm.em.forward(&rest_pos, view.antenna, Some(h))?;
                let moved = rest
                    .iter()
                    .zip(out.rows())
                    .map(|(g, o)| apply_deformation(g, o.as_slice().unwrap()))
                    .collect();
                sig.extend(rest.iter().zip(&sp).map(|(g, s)| g.radiance_base * s));
                Some(HumanTape {
                    rest,
                    out,
                    deform,
                    em,
                    sp,
                    set: GaussianSet {
                        tag: SetTag::Human,
                        frozen: hm.set.frozen,
                        gaussians: moved,
                    },
                })
            }
            _ => None,
        };
        let (img, ws) = {
            let mut sets = vec![&self.background];
            if let Some(h) = &human {
                sets.push(&h.set);
            }
            rasterize(
                &RenderInput::new(&sets, view.viewpoint)
                    .with_radiance(&sig)
                    .with_beam(self.beam_px2()),
            )?
        };
        Ok((
            img,
            Tape {
                view: *view,
                bg_sp,
                bg_em,
                human,
                sig,
                ws,
            },
        ))
    }

    /// Gradients of `sum_p d_image[p] * I[p]` with respect to every trainable part.
    pub fn backward(&self, tape: &Tape, d_image: &[f64]) -> Result<ModelGrads> {
        let mut sets = vec![&self.background];
        if let Some(h) = &tape.human {
            sets.push(&h.set);
        }
        let input = RenderInput::new(&sets, tape.view.viewpoint)
            .with_radiance(&tape.sig)
            .with_beam(self.beam_px2());
        let sg = rasterize_backward(&input, &tape.ws, d_image)?;
        let nb = self.background.len();
        let d_sig = &sg.radiance;

        let (background, em_background) = match (&sg.sets[0], self.background.frozen) {
            (Some(bg), false) => {
                let d_sp: Vec<f64> = (0..nb)
                    .map(|i| d_sig[i] * self.background.gaussians[i].radiance_base)
                    .collect();
                let cache = tape
                    .bg_em
                    .as_ref()
                    .ok_or_else(|| Error::Contract("trainable background rendered from a radiance cache".into()))?;
                let (net, d_pos) = self.em_background.backward(cache, &d_sp)?;
                let gaussians = bg
                    .grads
                    .iter()
                    .enumerate()
                    .map(|(i, g)| {
                        let mut a = g.to_array();
                        for k in 0..3 {
                            a[k] += d_pos[i][k];
                        }
                        a[11] = d_sig[i] * tape.bg_sp[i];
                        a
                    })
                    .collect();
                (
                    Some(PartGrads {
                        gaussians,
                        mean2d: bg.mean2d_norm.clone(),
                    }),
                    Some(net),
                )
            }
            _ => (None, None),
        };

        let (mut human, mut em_human, mut deform) = (None, None, None);
        if let (Some(ht), Some(hm)) = (&tape.human, &self.human) {
            let hg = sg.sets[1]
                .as_ref()
                .ok_or_else(|| Error::Contract("person set cannot be frozen".into()))?;
            let n = ht.rest.len();
            let mut d_out = Array2::zeros((n, ht.out.ncols()));
            let mut rest_grads: Vec<Packed> = Vec::with_capacity(n);
            for i in 0..n {
                let (r, d) = deformation_backward(&ht.rest[i], ht.out.row(i).as_slice().unwrap(), &hg.grads[i]);
                d_out.row_mut(i).as_slice_mut().unwrap().copy_from_slice(&d);
                rest_grads.push(r.to_array());
            }
            let (dnet, d_pos_def) = hm.deform.backward(&ht.deform, &d_out)?;
            let d_sp: Vec<f64> = (0..n).map(|i| d_sig[nb + i] * ht.rest[i].radiance_base).collect();
            let (enet, d_pos_em) = hm.em.backward(&ht.em, &d_sp)?;
            for (i, a) in rest_grads.iter_mut().enumerate() {
                for k in 0..3 {
                    a[k] += d_pos_def[i][k] + d_pos_em[i][k];
                }
                a[11] = d_sig[nb + i] * ht.sp[i];
            }
            human = Some(PartGrads {
                gaussians: rest_grads,
                mean2d: hg.mean2d_norm.clone(),
            });
            em_human = Some(enet);
            deform = Some(dnet);
        }
        Ok(ModelGrads {
            background,
            em_background,
            human,
            em_human,
            deform,
        })
    }

    pub fn to_checkpoint(&self, extra: serde_json::Value) -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.sets.push(("background".into(), self.background.clone()));
        ck.tensors.extend(self.em_background.mlp.to_tensors("em_background"));
        if let Some(h) = &self.human {
            ck.sets.push(("human".into(), h.set.clone()));
            ck.tensors.extend(h.em.mlp.to_tensors("em_human"));
            ck.tensors.extend(h.deform.mlp.to_tensors("deform"));
        }
        let meta = ModelMeta {
            room: self.room,
            frequencies: self.em_background.encoding.frequencies,
            anchor: self.human.as_ref().map(|h| h.anchor),
            beam_px: self.beam_px,
        };
        ck.extra = json!({ "model": meta, "run": extra });
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Model> {
        let meta: ModelMeta = serde_json::from_value(ck.extra["model"].clone())
            .map_err(|e| Error::json("checkpoint model metadata", e))?;
        let enc = PositionalEncoding::new(meta.frequencies);
        let norm = RoomNorm { room: meta.room };
        let background = ck
            .set("background")
            .cloned()
            .ok_or_else(|| Error::Config("checkpoint has no background set".into()))?;
        let em_background = EmNet {
            variant: EmVariant::Background,
            mlp: Mlp::from_checkpoint(ck, "em_background")?,
            encoding: enc,
            norm,
        };
        let human = match ck.set("human") {
            Some(set) => Some(HumanModel {
                set: set.clone(),
                em: EmNet {
                    variant: EmVariant::Human,
                    mlp: Mlp::from_checkpoint(ck, "em_human")?,
                    encoding: enc,
                    norm,
                },
                deform: DeformNet {
                    mlp: Mlp::from_checkpoint(ck, "deform")?,
                    encoding: enc,
                    norm,
                },
                anchor: meta.anchor.unwrap_or_default(),
            }),
            None => None,
        };
        let m = Model {
            room: meta.room,
            background,
            em_background,
            human,
            beam_px: meta.beam_px,
        };
        let expect = enc.dim(6);
        if m.em_background.mlp.input_dim() != expect {
            return Err(Error::Config(
                "background radiance net does not match the encoding".into(),
            ));
        }
        Ok(m)
    }
}
