//! Synthetic tabletop scenes and demonstrations.
//!
//! Scenes are rejection-sampled object layouts on a `width × height` table
//! with the start point bottom-left and the goal top-right. They render to
//! channel-first RGB grids; each user type's oracle labels trajectories by
//! clearance to the object kinds that type avoids.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{sample_bezier, BezierParam, ObjectKind, Point2, Scene, SceneObject, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UserType {
    Careful,
    Normal,
    Aggressive,
}

impl UserType {
    pub const ALL: [UserType; 3] = [UserType::Careful, UserType::Normal, UserType::Aggressive];

    pub fn name(&self) -> &'static str {
        match self {
            UserType::Careful => "careful",
            UserType::Normal => "normal",
            UserType::Aggressive => "aggressive",
        }
    }

    pub fn index(&self) -> usize {
        *self as usize
    }
}

impl std::fmt::Display for UserType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for UserType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "careful" | "safe" => Ok(UserType::Careful),
            "normal" => Ok(UserType::Normal),
            "aggressive" => Ok(UserType::Aggressive),
            other => Err(Error::InvalidInput(format!("unknown user type `{other}`"))),
        }
    }
}

/// splitmix64 finalizer, used to derive independent stream seeds.
pub fn mix_seed(base: u64, stream: &[u64]) -> u64 {
    let mut z = base;
    for &s in stream {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(s.wrapping_mul(0xD6E8_FEB8_6659_FD93));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

pub fn rng_for(base: u64, stream: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(base, stream))
}

/// Per-type clearance radii. A kind absent from a type's map is not avoided.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    pub clearance: BTreeMap<UserType, BTreeMap<ObjectKind, f64>>,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self::with_clearance(20.0)
    }
}

impl OracleConfig {
    pub fn with_clearance(r: f64) -> Self {
        let mut clearance = BTreeMap::new();
        clearance.insert(UserType::Careful, ObjectKind::ALL.iter().map(|&k| (k, r)).collect());
        clearance.insert(UserType::Normal, [(ObjectKind::Glass, r)].into_iter().collect());
        clearance.insert(UserType::Aggressive, BTreeMap::new());
        Self { clearance }
    }

    pub fn avoids(&self, s: UserType, kind: ObjectKind) -> Option<f64> {
        self.clearance.get(&s).and_then(|m| m.get(&kind)).copied()
    }

    pub fn avoid_set(&self, s: UserType) -> Vec<ObjectKind> {
        self.clearance.get(&s).map(|m| m.keys().copied().collect()).unwrap_or_default()
    }

    /// Careful avoids every kind, normal only glasses, aggressive nothing.
    pub fn validate(&self) -> Result<()> {
        let expect = |s: UserType, kinds: &[ObjectKind]| -> Result<()> {
            if self.avoid_set(s) != kinds {
                return Err(Error::Config(format!(
                    "{s} must avoid exactly {:?}, got {:?}",
                    kinds,
                    self.avoid_set(s)
                )));
            }
            Ok(())
        };
        expect(UserType::Careful, &ObjectKind::ALL)?;
        expect(UserType::Normal, &[ObjectKind::Glass])?;
        expect(UserType::Aggressive, &[])?;
        for m in self.clearance.values() {
            if m.values().any(|r| !(r.is_finite() && *r >= 0.0)) {
                return Err(Error::Config("clearances must be finite and non-negative".into()));
            }
        }
        Ok(())
    }
}

/// False iff some trajectory point lies within the type's clearance of an
/// avoided object's center.
pub fn oracle_validity(tr: &Trajectory, scene: &Scene, s: UserType, cfg: &OracleConfig) -> bool {
    for o in &scene.objects {
        if let Some(r) = cfg.avoids(s, o.kind) {
            if tr.points.iter().any(|p| p.distance(&o.center) <= r) {
                return false;
            }
        }
    }
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneGenConfig {
    pub width: f64,
    pub height: f64,
    pub p_init: Point2,
    pub p_f: Point2,
    /// No object center may lie within this distance of either endpoint.
    pub endpoint_clearance: f64,
    /// Minimum gap between the bounding circles of two objects.
    pub object_gap: f64,
    /// Inclusive radius range per kind, `[bowl, plate, cutlery, glass]`.
    pub radius_range: [(f64, f64); 4],
    pub max_retries: usize,
    /// Points per sampled demonstration curve.
    pub traj_points: usize,
    /// Control points are drawn uniformly from the table inflated by this
    /// fraction on every side.
    pub control_margin: f64,
    /// Bound on extra draws used to obtain both validity labels in a scene.
    pub label_retries: usize,
    /// When set, object centers are drawn within this perpendicular distance
    /// of the segment between the endpoints instead of anywhere on the table.
    #[serde(default)]
    pub corridor: Option<f64>,
}

impl Default for SceneGenConfig {
    fn default() -> Self {
        Self {
            width: 100.0,
            height: 100.0,
            p_init: Point2::new(10.0, 10.0),
            p_f: Point2::new(90.0, 90.0),
            endpoint_clearance: 18.0,
            object_gap: 2.0,
            radius_range: [(10.0, 13.0), (12.0, 15.0), (9.0, 12.0), (8.0, 10.0)],
            max_retries: 1000,
            traj_points: 50,
            control_margin: 0.25,
            label_retries: 100,
            corridor: None,
        }
    }
}

impl SceneGenConfig {
    /// The box control points are drawn from (and refinement clamps to).
    pub fn control_box(&self) -> (Point2, Point2) {
        let mx = self.width * self.control_margin;
        let my = self.height * self.control_margin;
        (Point2::new(-mx, -my), Point2::new(self.width + mx, self.height + my))
    }

    pub fn empty_scene(&self) -> Scene {
        Scene::empty(self.width, self.height, self.p_init, self.p_f)
    }

    pub fn sample_object(&self, rng: &mut impl Rng, kind: ObjectKind, variant: bool) -> SceneObject {
        let (lo, hi) = self.radius_range[kind.index()];
        let radius = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
        let center = match self.corridor {
            Some(w) if w > 0.0 => {
                let t: f64 = rng.gen_range(0.0..1.0);
                let off: f64 = rng.gen_range(-w..w);
                let (dx, dy) = (self.p_f.x - self.p_init.x, self.p_f.y - self.p_init.y);
                let len = dx.hypot(dy).max(f64::EPSILON);
                let base = self.p_init.lerp(&self.p_f, t);
                Point2::new(base.x - dy / len * off, base.y + dx / len * off)
            }
            _ => Point2::new(rng.gen_range(radius..self.width - radius), rng.gen_range(radius..self.height - radius)),
        };
        let angle = rng.gen_range(0.0..std::f64::consts::PI);
        SceneObject { kind, center, radius, angle, variant }
    }

    /// Whether `o` can join `scene` without overlapping objects or endpoint disks.
    pub fn placement_ok(&self, scene: &Scene, o: &SceneObject) -> bool {
        let r = o.radius;
        if o.center.x < r || o.center.y < r || o.center.x > self.width - r || o.center.y > self.height - r {
            return false;
        }
        if o.center.distance(&self.p_init) < self.endpoint_clearance + o.radius * 0.5
            || o.center.distance(&self.p_f) < self.endpoint_clearance + o.radius * 0.5
        {
            return false;
        }
        scene
            .objects
            .iter()
            .all(|q| q.center.distance(&o.center) >= q.radius + o.radius + self.object_gap)
    }

    pub fn sample_control(&self, rng: &mut impl Rng) -> BezierParam {
        let (lo, hi) = self.control_box();
        BezierParam::new(rng.gen_range(lo.x..hi.x), rng.gen_range(lo.y..hi.y))
    }
}

/// Place `n_objects` objects with kinds drawn uniformly from `palette`.
pub fn generate_scene(
    seed: u64,
    n_objects: usize,
    palette: &[ObjectKind],
    variant: bool,
    cfg: &SceneGenConfig,
) -> Result<Scene> {
    generate_scene_containing(seed, n_objects, palette, &[], variant, cfg)
}

/// Like [`generate_scene`], but when `required` is non-empty the first
/// object's kind is drawn from it instead of from `palette`.
pub fn generate_scene_containing(
    seed: u64,
    n_objects: usize,
    palette: &[ObjectKind],
    required: &[ObjectKind],
    variant: bool,
    cfg: &SceneGenConfig,
) -> Result<Scene> {
    if n_objects > 0 && palette.is_empty() {
        return Err(Error::InvalidInput("empty palette with objects requested".into()));
    }
    let mut rng = rng_for(seed, &[0x5CE7E]);
    let mut scene = cfg.empty_scene();
    for i in 0..n_objects {
        let from = if i == 0 && !required.is_empty() { required } else { palette };
        let kind = from[rng.gen_range(0..from.len())];
        let mut placed = false;
        for _ in 0..cfg.max_retries {
            let o = cfg.sample_object(&mut rng, kind, variant);
            if cfg.placement_ok(&scene, &o) {
                scene.objects.push(o);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::SceneGeneration(format!(
                "could not place object {i} ({kind}) after {} attempts",
                cfg.max_retries
            )));
        }
    }
    Ok(scene)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demonstration {
    pub scene_id: usize,
    pub trajectory: Trajectory,
    pub user_type: UserType,
    pub valid: bool,
}

/// Draw `n_traj` random curves for one scene and label them with the oracle.
///
/// With `n_traj >= 2` both labels are made present when possible by drawing
/// up to `label_retries` extra curves; the replacement overwrites the last
/// demo of the majority label.
pub fn generate_demos(
    scene: &Scene,
    scene_id: usize,
    s: UserType,
    n_traj: usize,
    seed: u64,
    cfg: &SceneGenConfig,
    oracle: &OracleConfig,
) -> Result<Vec<Demonstration>> {
    if n_traj == 0 {
        return Err(Error::InvalidInput("generate_demos needs n_traj >= 1".into()));
    }
    let mut rng = rng_for(seed, &[0xDE305, scene_id as u64, s.index() as u64]);
    let draw = |rng: &mut ChaCha8Rng| -> Result<Demonstration> {
        let c = cfg.sample_control(rng);
        let trajectory = sample_bezier(&c, scene.endpoints(), cfg.traj_points)?;
        let valid = oracle_validity(&trajectory, scene, s, oracle);
        Ok(Demonstration { scene_id, trajectory, user_type: s, valid })
    };
    let mut demos = (0..n_traj).map(|_| draw(&mut rng)).collect::<Result<Vec<_>>>()?;
    let avoid = oracle.avoid_set(s);
    // nothing in the scene can make a demonstration invalid
    let avoidable = scene.objects.iter().any(|o| avoid.contains(&o.kind));
    if n_traj >= 2 && avoidable {
        let n_valid = demos.iter().filter(|d| d.valid).count();
        if n_valid == 0 || n_valid == n_traj {
            let wanted = n_valid == 0;
            let mut found = None;
            for _ in 0..cfg.label_retries {
                let d = draw(&mut rng)?;
                if d.valid == wanted {
                    found = Some(d);
                    break;
                }
            }
            match found {
                Some(d) => {
                    let last = demos.len() - 1;
                    demos[last] = d;
                }
                None => log::warn!(
                    "scene {scene_id} ({s}): no {} demonstration within {} retries",
                    if wanted { "valid" } else { "invalid" },
                    cfg.label_retries
                ),
            }
        }
    }
    Ok(demos)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rgb(pub f64, pub f64, pub f64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderConfig {
    /// Square image side in pixels.
    pub size: usize,
    pub background: Rgb,
    /// `[bowl, plate, cutlery, glass]` training appearance.
    pub colors: [Rgb; 4],
    /// Held-out appearance used for test scenes.
    pub variant_colors: [Rgb; 4],
    /// Cutlery bar half-width as a fraction of its half-length.
    pub bar_width: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            size: 100,
            background: Rgb(0.05, 0.05, 0.08),
            colors: [
                Rgb(0.85, 0.15, 0.10),
                Rgb(0.95, 0.95, 0.90),
                Rgb(0.60, 0.60, 0.60),
                Rgb(0.15, 0.45, 0.95),
            ],
            variant_colors: [
                Rgb(0.95, 0.35, 0.05),
                Rgb(0.85, 0.90, 0.98),
                Rgb(0.70, 0.70, 0.65),
                Rgb(0.25, 0.75, 0.90),
            ],
            bar_width: 0.3,
        }
    }
}

/// Channel-first `3 × size × size` image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneImage {
    pub size: usize,
    pub data: Vec<f64>,
}

impl SceneImage {
    pub fn filled(size: usize, c: Rgb) -> Self {
        let plane = size * size;
        let mut data = vec![0.0; 3 * plane];
        data[..plane].fill(c.0);
        data[plane..2 * plane].fill(c.1);
        data[2 * plane..].fill(c.2);
        Self { size, data }
    }

    pub fn pixel(&self, row: usize, col: usize) -> Rgb {
        let plane = self.size * self.size;
        let i = row * self.size + col;
        Rgb(self.data[i], self.data[plane + i], self.data[2 * plane + i])
    }

    fn set(&mut self, row: usize, col: usize, c: Rgb) {
        let plane = self.size * self.size;
        let i = row * self.size + col;
        self.data[i] = c.0;
        self.data[plane + i] = c.1;
        self.data[2 * plane + i] = c.2;
    }

    /// Number of 4-connected regions whose color differs from `background`.
    pub fn count_blobs(&self, background: Rgb, tol: f64) -> usize {
        let n = self.size;
        let differs = |r: usize, c: usize| {
            let p = self.pixel(r, c);
            (p.0 - background.0).abs() > tol
                || (p.1 - background.1).abs() > tol
                || (p.2 - background.2).abs() > tol
        };
        let mut seen = vec![false; n * n];
        let mut count = 0;
        let mut stack = Vec::new();
        for r0 in 0..n {
            for c0 in 0..n {
                if seen[r0 * n + c0] || !differs(r0, c0) {
                    continue;
                }
                count += 1;
                seen[r0 * n + c0] = true;
                stack.push((r0, c0));
                while let Some((r, c)) = stack.pop() {
                    let mut visit = |rr: usize, cc: usize| {
                        if !seen[rr * n + cc] && differs(rr, cc) {
                            seen[rr * n + cc] = true;
                            stack.push((rr, cc));
                        }
                    };
                    if r > 0 {
                        visit(r - 1, c);
                    }
                    if r + 1 < n {
                        visit(r + 1, c);
                    }
                    if c > 0 {
                        visit(r, c - 1);
                    }
                    if c + 1 < n {
                        visit(r, c + 1);
                    }
                }
            }
        }
        count
    }
}

fn draw_object(img: &mut SceneImage, o: &SceneObject, table: (f64, f64), cfg: &RenderConfig) {
    let n = img.size;
    let sx = n as f64 / table.0;
    let sy = n as f64 / table.1;
    // image column grows with x, row grows downward (y up on the table)
    let cx = o.center.x * sx;
    let cy = (table.1 - o.center.y) * sy;
    let r = o.radius * sx.min(sy);
    let color = if o.variant { cfg.variant_colors[o.kind.index()] } else { cfg.colors[o.kind.index()] };
    let (ca, sa) = (o.angle.cos(), o.angle.sin());
    let half_w = (r * cfg.bar_width).max(0.75);
    let lo_r = ((cy - r - 1.0).floor().max(0.0)) as usize;
    let hi_r = ((cy + r + 1.0).ceil().min(n as f64)) as usize;
    let lo_c = ((cx - r - 1.0).floor().max(0.0)) as usize;
    let hi_c = ((cx + r + 1.0).ceil().min(n as f64)) as usize;
    for row in lo_r..hi_r {
        for col in lo_c..hi_c {
            let dx = col as f64 + 0.5 - cx;
            let dy = row as f64 + 0.5 - cy;
            let inside = match o.kind {
                ObjectKind::Cutlery => {
                    // image rows point down, so flip dy for a table-frame angle
                    let along = dx * ca - dy * sa;
                    let across = dx * sa + dy * ca;
                    along.abs() <= r && across.abs() <= half_w
                }
                _ => dx * dx + dy * dy <= r * r,
            };
            if inside {
                img.set(row, col, color);
            }
        }
    }
}

/// Rasterize a scene. Objects are painted in list order over a constant background.
pub fn render(scene: &Scene, cfg: &RenderConfig) -> SceneImage {
    let mut img = SceneImage::filled(cfg.size, cfg.background);
    for o in &scene.objects {
        draw_object(&mut img, o, (scene.width, scene.height), cfg);
    }
    img
}

/// Paint `o` over a copy of `img`, as if it were appended to the scene.
pub fn composite_object(
    img: &SceneImage,
    o: &SceneObject,
    table: (f64, f64),
    cfg: &RenderConfig,
) -> Result<SceneImage> {
    if img.size != cfg.size {
        return Err(Error::Shape { op: "composite_object", left: vec![img.size], right: vec![cfg.size] });
    }
    let inside = o.center.x >= 0.0 && o.center.y >= 0.0 && o.center.x < table.0 && o.center.y < table.1;
    if !inside || !o.radius.is_finite() || o.radius <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "object at ({}, {}) r={} is outside the {}x{} table",
            o.center.x, o.center.y, o.radius, table.0, table.1
        )));
    }
    let mut out = img.clone();
    draw_object(&mut out, o, table, cfg);
    Ok(out)
}
