use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::em::{fresnel_rta, human_power_budget, Material, PowerBudget, Rta};
use crate::error::{Error, Result};

pub type V3 = Vector3<f64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    /// The two in-plane axes; the second is `z` for vertical slabs.
    pub fn plane_axes(self) -> (usize, usize) {
        match self {
            Axis::X => (1, 2),
            Axis::Y => (0, 2),
            Axis::Z => (0, 1),
        }
    }
}

/// Axis-aligned rectangle: the plane `axis = offset`, bounded by `span_u`
/// and `span_v` along the in-plane axes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlabSpec {
    #[serde(default)]
    pub name: String,
    pub axis: Axis,
    pub offset: f64,
    pub span_u: [f64; 2],
    pub span_v: [f64; 2],
    pub material: String,
}

/// A list of points, a regular grid, or evenly spaced samples along a polyline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PositionSpec {
    List(Vec<[f64; 3]>),
    Grid { grid: GridSpec },
    Polyline { polyline: PolylineSpec },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub min: [f64; 3],
    pub max: [f64; 3],
    pub counts: [usize; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolylineSpec {
    pub points: Vec<[f64; 3]>,
    pub count: usize,
}

impl PositionSpec {
    pub fn expand(&self) -> Result<Vec<V3>> {
        match self {
            PositionSpec::List(v) => Ok(v.iter().map(|p| V3::from(*p)).collect()),
            PositionSpec::Grid { grid } => {
                let mut out = Vec::new();
                let coord = |k: usize, i: usize| {
                    let n = grid.counts[k];
                    if n <= 1 {
                        0.5 * (grid.min[k] + grid.max[k])
                    } else {
                        grid.min[k] + (grid.max[k] - grid.min[k]) * i as f64 / (n - 1) as f64
                    }
                };
                for iz in 0..grid.counts[2] {
                    for iy in 0..grid.counts[1] {
                        for ix in 0..grid.counts[0] {
                            out.push(V3::new(coord(0, ix), coord(1, iy), coord(2, iz)));
                        }
                    }
                }
                Ok(out)
            }
            PositionSpec::Polyline { polyline } => {
                let pts: Vec<V3> = polyline.points.iter().map(|p| V3::from(*p)).collect();
                if pts.len() < 2 || polyline.count == 0 {
                    return Err(Error::Config("polyline needs >= 2 points and count >= 1".into()));
                }
                let seg: Vec<f64> = pts.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
                let total: f64 = seg.iter().sum();
                if !(total > 0.0) {
                    return Err(Error::Config("polyline has zero length".into()));
                }
                let n = polyline.count;
                Ok((0..n)
                    .map(|i| {
                        let mut s = if n == 1 { 0.0 } else { total * i as f64 / (n - 1) as f64 };
                        for (k, len) in seg.iter().enumerate() {
                            if s <= *len || k == seg.len() - 1 {
                                let t = if *len > 0.0 { (s / len).min(1.0) } else { 0.0 };
                                return pts[k] + (pts[k + 1] - pts[k]) * t;
                            }
                            s -= len;
                        }
                        unreachable!()
                    })
                    .collect())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transmitter {
    pub position: [f64; 3],
    pub power_dbm: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HumanShape {
    pub radius: f64,
    pub half_height: f64,
}

impl Default for HumanShape {
    fn default() -> Self {
        HumanShape {
            radius: 0.25,
            half_height: 0.84,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    #[default]
    MovingRx,
    MovingTx,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PasAt {
    #[default]
    Rx,
    Tx,
}

fn default_human_material() -> String {
    "human".into()
}

fn default_diffuse_samples() -> usize {
    16
}

/// Scene description as read from JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub name: String,
    pub room: [f64; 3],
    pub freq_hz: f64,
    #[serde(default)]
    pub materials: Vec<Material>,
    #[serde(default)]
    pub slabs: Vec<SlabSpec>,
    pub tx: Transmitter,
    pub rx_grid: PositionSpec,
    #[serde(default)]
    pub human_path: Option<PositionSpec>,
    #[serde(default)]
    pub human_shape: HumanShape,
    #[serde(default = "default_human_material")]
    pub human_material: String,
    #[serde(default)]
    pub human_budget: Option<PowerBudget>,
    #[serde(default)]
    pub task: Task,
    #[serde(default)]
    pub pas_at: PasAt,
    #[serde(default = "default_diffuse_samples")]
    pub diffuse_samples: usize,
    #[serde(default)]
    pub seed: u64,
}

/// Slab with its material resolved.
#[derive(Clone, Debug)]
pub struct Slab {
    pub name: String,
    pub axis: usize,
    pub u: usize,
    pub v: usize,
    pub offset: f64,
    pub span_u: [f64; 2],
    pub span_v: [f64; 2],
    pub material: Material,
    pub rta: Rta,
}

impl Slab {
    pub fn contains_in_plane(&self, p: &V3) -> bool {
        const TOL: f64 = 1e-9;
        p[self.u] >= self.span_u[0] - TOL
            && p[self.u] <= self.span_u[1] + TOL
            && p[self.v] >= self.span_v[0] - TOL
            && p[self.v] <= self.span_v[1] + TOL
    }

    pub fn mirror(&self, p: &V3) -> V3 {
        let mut q = *p;
        q[self.axis] = 2.0 * self.offset - p[self.axis];
        q
    }

    pub fn area(&self) -> f64 {
        (self.span_u[1] - self.span_u[0]) * (self.span_v[1] - self.span_v[0])
    }

    pub fn is_vertical(&self) -> bool {
        self.axis != 2
    }
}

/// One simulated measurement geometry: the moving antenna conditions the
/// model, the viewpoint is where the hemisphere is rendered.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Endpoints {
    pub source: V3,
    pub viewpoint: V3,
    pub antenna: V3,
}

/// Validated scene with expanded positions and resolved materials.
#[derive(Clone, Debug)]
pub struct Scene {
    pub config: SceneConfig,
    pub room: V3,
    pub slabs: Vec<Slab>,
    pub tx: V3,
    pub tx_power_dbm: f64,
    pub rx: Vec<V3>,
    pub humans: Vec<V3>,
    pub human_material: Material,
    pub human_rta: Rta,
    pub human_budget: PowerBudget,
}

const BUNDLED: [(&str, &str); 4] = [
    ("bedroom", include_str!("../../data/scenes/bedroom.json")),
    ("living_room", include_str!("../../data/scenes/living_room.json")),
    ("dining", include_str!("../../data/scenes/dining.json")),
    ("large", include_str!("../../data/scenes/large.json")),
];

pub fn bundled_scene_names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(n, _)| *n)
}

impl Scene {
    /// One of the scenes shipped with the crate.
    pub fn bundled(name: &str) -> Result<Scene> {
        let (_, text) = BUNDLED
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| Error::Config(format!("no bundled scene named '{name}'")))?;
        Scene::from_json(text)
    }

    pub fn from_json(text: &str) -> Result<Scene> {
        let cfg: SceneConfig = serde_json::from_str(text).map_err(|e| Error::json("scene", e))?;
        Scene::new(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Scene> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: SceneConfig = serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))?;
        Scene::new(cfg)
    }

    pub fn material(cfg: &SceneConfig, name: &str) -> Result<Material> {
        if let Some(m) = cfg.materials.iter().find(|m| m.name == name) {
            m.validate()?;
            return Ok(m.clone());
        }
        Material::preset(name)
    }

    pub fn new(cfg: SceneConfig) -> Result<Scene> {
        let room = V3::from(cfg.room);
        if room.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Config(format!(
                "room dimensions must be positive: {:?}",
                cfg.room
            )));
        }
        if !(cfg.freq_hz > 0.0 && cfg.freq_hz.is_finite()) {
            return Err(Error::Config("freq_hz must be positive".into()));
        }
        let inside = |p: &V3| (0..3).all(|k| p[k] >= 0.0 && p[k] <= room[k]);
        let mut slabs = Vec::with_capacity(cfg.slabs.len());
        for s in &cfg.slabs {
            let material = Scene::material(&cfg, &s.material)?;
            let rta = fresnel_rta(&material, cfg.freq_hz)?;
            let (u, v) = s.axis.plane_axes();
            if !(s.span_u[0] < s.span_u[1] && s.span_v[0] < s.span_v[1]) {
                return Err(Error::Config(format!("slab '{}' has an empty span", s.name)));
            }
            slabs.push(Slab {
                name: s.name.clone(),
                axis: s.axis.index(),
                u,
                v,
                offset: s.offset,
                span_u: s.span_u,
                span_v: s.span_v,
                material,
                rta,
            });
        }
        let tx = V3::from(cfg.tx.position);
        if !inside(&tx) {
            return Err(Error::Config("tx position outside the room".into()));
        }
        let rx = cfg.rx_grid.expand()?;
        if rx.is_empty() {
            return Err(Error::Config("rx_grid is empty".into()));
        }
        if let Some(i) = rx.iter().position(|p| !inside(p)) {
            return Err(Error::Config(format!("rx position {i} outside the room")));
        }
        let humans = match &cfg.human_path {
            Some(spec) => spec.expand()?,
            None => Vec::new(),
        };
        if let Some(i) = humans.iter().position(|p| !inside(p)) {
            return Err(Error::Config(format!("human position {i} outside the room")));
        }
        for i in 0..humans.len() {
            for j in 0..i {
                if (humans[i] - humans[j]).norm() < 1e-9 {
                    return Err(Error::Config(format!("human positions {j} and {i} coincide")));
                }
            }
        }
        let human_material = Scene::material(&cfg, &cfg.human_material)?;
        let human_rta = fresnel_rta(&human_material, cfg.freq_hz)?;
        let human_budget = match (&cfg.human_budget, &human_material.scatter_budget) {
            (Some(b), _) => *b,
            (None, Some(b)) => *b,
            (None, None) => human_power_budget(),
        };
        human_budget.validate()?;
        let shape = cfg.human_shape;
        if !(shape.radius > 0.0 && shape.half_height > 0.0) {
            return Err(Error::Config("human shape must have positive axes".into()));
        }
        Ok(Scene {
            room,
            slabs,
            tx,
            tx_power_dbm: cfg.tx.power_dbm,
            rx,
            humans,
            human_material,
            human_rta,
            human_budget,
            config: cfg,
        })
    }

    pub fn name(&self) -> &str {
        &self.config.name
    }

    pub fn freq(&self) -> f64 {
        self.config.freq_hz
    }

    pub fn wavelength(&self) -> f64 {
        crate::em::wavelength(self.config.freq_hz)
    }

    pub fn human_axes(&self) -> V3 {
        let s = self.config.human_shape;
        V3::new(s.radius, s.radius, s.half_height)
    }

    pub fn endpoints(&self, rx_index: usize) -> Endpoints {
        let moving = self.rx[rx_index];
        let fixed = self.tx;
        let (source, viewpoint) = match (self.config.task, self.config.pas_at) {
            (Task::MovingRx, PasAt::Rx) | (Task::MovingTx, PasAt::Tx) => (fixed, moving),
            (Task::MovingRx, PasAt::Tx) | (Task::MovingTx, PasAt::Rx) => (moving, fixed),
        };
        Endpoints {
            source,
            viewpoint,
            antenna: moving,
        }
    }

    pub fn room_diagonal(&self) -> f64 {
        self.room.norm()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> SceneConfig {
        SceneConfig {
            name: "t".into(),
            room: [4.0, 3.0, 2.5],
            freq_hz: 2.4e9,
            materials: vec![],
            slabs: vec![],
            tx: Transmitter {
                position: [0.5, 0.5, 2.0],
                power_dbm: 20.0,
            },
            rx_grid: PositionSpec::Grid {
                grid: GridSpec {
                    min: [1.0, 1.0, 0.6],
                    max: [3.0, 2.0, 0.6],
                    counts: [3, 2, 1],
                },
            },
            human_path: Some(PositionSpec::Polyline {
                polyline: PolylineSpec {
                    points: vec![[1.0, 1.5, 0.9], [3.0, 1.5, 0.9]],
                    count: 5,
                },
            }),
            human_shape: HumanShape::default(),
            human_material: "human".into(),
            human_budget: None,
            task: Task::MovingRx,
            pas_at: PasAt::Rx,
            diffuse_samples: 8,
            seed: 0,
        }
    }

    #[test]
    fn expands_grid_and_polyline() {
        let s = Scene::new(base()).unwrap();
        assert_eq!(s.rx.len(), 6);
        assert_eq!(s.humans.len(), 5);
        assert!((s.humans[2] - V3::new(2.0, 1.5, 0.9)).norm() < 1e-12);
        assert!((s.rx[5] - V3::new(3.0, 2.0, 0.6)).norm() < 1e-12);
    }

    #[test]
    fn rejects_outside_and_duplicates() {
        let mut c = base();
        c.tx.position = [5.0, 0.5, 1.0];
        assert!(Scene::new(c).is_err());
        let mut c = base();
        c.human_path = Some(PositionSpec::List(vec![[1.0, 1.0, 0.9], [1.0, 1.0, 0.9]]));
        assert!(Scene::new(c).is_err());
        let mut c = base();
        c.rx_grid = PositionSpec::List(vec![]);
        assert!(Scene::new(c).is_err());
    }

    #[test]
    fn json_errors_carry_position() {
        let err = Scene::from_json("{\n  \"name\": \"x\",\n  \"room\": [1, 2,\n}").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line") && msg.contains("column"), "{msg}");
    }

    #[test]
    fn moving_tx_swaps_roles() {
        let mut c = base();
        c.task = Task::MovingTx;
        let s = Scene::new(c).unwrap();
        let e = s.endpoints(1);
        assert_eq!(e.source, s.rx[1]);
        assert_eq!(e.viewpoint, s.tx);
        assert_eq!(e.antenna, s.rx[1]);
    }
}
