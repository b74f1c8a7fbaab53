use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rfsplat_core::nets::{DeformNet, EmNet, EmVariant};
use rfsplat_core::scene::PAS_LEN;
use rfsplat_core::splat::{GaussianPrimitive, GaussianSet, SetTag};
use rfsplat_core::train::{Anchor, HumanModel, Model, View};

pub const ROOM: [f64; 3] = [4.0, 3.0, 2.5];
pub const VIEW: [f64; 3] = [2.0, 1.5, 1.0];

pub fn random_gaussian(rng: &mut ChaCha8Rng, centre: [f64; 3], spread: f64) -> GaussianPrimitive {
    let mut q: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    q = q.map(|v| v / n);
    GaussianPrimitive {
        position: std::array::from_fn(|k| centre[k] + rng.gen_range(-spread..spread)),
        log_scale: std::array::from_fn(|_| rng.gen_range(0.05f64..0.2).ln()),
        rotation: q,
        delta_logit: rng.gen_range(-1.0..1.5),
        radiance_base: rng.gen_range(0.3..1.5),
    }
}

pub fn jitter(net: &mut rfsplat_core::nets::Mlp, rng: &mut ChaCha8Rng) {
    let v: Vec<f64> = net.flatten().iter().map(|w| w + rng.gen_range(-0.3..0.3)).collect();
    net.set_flat(&v).unwrap();
}

/// Five background and five person Gaussians above `VIEW`, every net randomised.
pub fn pipeline_model(seed: u64) -> (Model, View) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bg: Vec<_> = (0..5)
        .map(|_| random_gaussian(&mut rng, [2.0, 1.5, 2.1], 0.9))
        .collect();
    let person: Vec<_> = (0..5)
        .map(|_| random_gaussian(&mut rng, [0.0, 0.0, 0.0], 0.25))
        .collect();
    let mut em_background = EmNet::new(EmVariant::Background, ROOM, seed);
    let mut em = EmNet::new(EmVariant::Human, ROOM, seed + 1);
    let mut deform = DeformNet::new(ROOM, seed + 2);
    jitter(&mut em_background.mlp, &mut rng);
    jitter(&mut em.mlp, &mut rng);
    for layer in &mut deform.mlp.layers {
        layer.w.mapv_inplace(|w| w + rng.gen_range(-0.05..0.05));
    }
    let model = Model {
        room: ROOM,
        background: GaussianSet::new(SetTag::Background, bg),
        em_background,
        human: Some(HumanModel {
            set: GaussianSet::new(SetTag::Human, person),
            em,
            deform,
            anchor: Anchor::Human,
        }),
        beam_px: 3.0,
    };
    let view = View {
        viewpoint: VIEW,
        antenna: VIEW,
        human: Some([2.6, 1.9, 1.7]),
    };
    (model, view)
}

pub fn objective(m: &Model, view: &View, w: &[f64]) -> f64 {
    let (img, _) = m.render(view).unwrap();
    img.data.iter().zip(w).map(|(a, b)| a * b).sum()
}

pub fn five_point(f: impl Fn(f64) -> f64, h: f64) -> f64 {
    (8.0 * (f(0.5 * h) - f(-0.5 * h)) - (f(h) - f(-h))) / (6.0 * h)
}

/// Largest relative error seen, with where it happened.
#[derive(Debug, Default)]
pub struct Worst {
    pub error: f64,
    pub at: String,
}

impl Worst {
    fn check(&mut self, what: impl FnOnce() -> String, fd: f64, an: f64, floor: f64) {
        let err = (fd - an).abs() / fd.abs().max(an.abs()).max(floor);
        if err > self.error {
            self.error = err;
            self.at = format!("{}: fd {fd} vs analytic {an}", what());
        }
    }
}

/// Finite differences against the full background + person + nets backward pass.
pub fn pipeline_gradient_check(seeds: std::ops::Range<u64>) -> Worst {
    let mut worst = Worst::default();
    for seed in seeds {
        let (model, view) = pipeline_model(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let w: Vec<f64> = (0..PAS_LEN).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (_, tape) = model.render(&view).unwrap();
        let g = model.backward(&tape, &w).unwrap();
        let bg = g.background.as_ref().unwrap();
        let hu = g.human.as_ref().unwrap();
        let scale = bg
            .gaussians
            .iter()
            .chain(&hu.gaussians)
            .flatten()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let floor = 1e-3 * scale;

        for (part, grads) in [(0, &bg.gaussians), (1, &hu.gaussians)] {
            for (i, an) in grads.iter().enumerate() {
                for k in 0..12 {
                    let base = if part == 0 {
                        model.background.gaussians[i].to_array()
                    } else {
                        model.human.as_ref().unwrap().set.gaussians[i].to_array()
                    };
                    // ReLU kinks sit closer than 1e-4 surprisingly often
                    let h = if k < 3 { 1e-6 } else { 1e-4 * base[k].abs().max(1.0) };
                    let fd = five_point(
                        |d| {
                            let mut m = model.clone();
                            let mut p = base;
                            p[k] += d;
                            let g = GaussianPrimitive::from_array(&p);
                            if part == 0 {
                                m.background.gaussians[i] = g;
                            } else {
                                m.human.as_mut().unwrap().set.gaussians[i] = g;
                            }
                            objective(&m, &view, &w)
                        },
                        h,
                    );
                    worst.check(
                        || format!("seed {seed} part {part} gaussian {i} slot {k}"),
                        fd,
                        an[k],
                        floor,
                    );
                }
            }
        }

        let nets = [
            ("em_background", g.em_background.as_ref().unwrap().flatten()),
            ("em_human", g.em_human.as_ref().unwrap().flatten()),
            ("deform", g.deform.as_ref().unwrap().flatten()),
        ];
        for (name, an) in nets {
            let net_scale = an.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let picks: Vec<usize> = (0..12).map(|_| rng.gen_range(0..an.len())).collect();
            for idx in picks {
                let fd = five_point(
                    |d| {
                        let mut m = model.clone();
                        let net = match name {
                            "em_background" => &mut m.em_background.mlp,
                            "em_human" => &mut m.human.as_mut().unwrap().em.mlp,
                            _ => &mut m.human.as_mut().unwrap().deform.mlp,
                        };
                        let mut v = net.flatten();
                        v[idx] += d;
                        net.set_flat(&v).unwrap();
                        objective(&m, &view, &w)
                    },
                    1e-6,
                );
                worst.check(
                    || format!("seed {seed} {name} weight {idx}"),
                    fd,
                    an[idx],
                    1e-3 * net_scale,
                );
            }
        }
    }
    worst
}
