//! Planar tabletop geometry: points, polyline trajectories, the quadratic
//! Bézier reparameterization that maps a trajectory to its free central
//! control point (and back), and nearest-object queries.
//!
//! Coordinates are table pixels with `x` to the right and `y` up, so the
//! bottom-left corner of the table is `(0, 0)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn lerp(&self, other: &Point2, t: f64) -> Point2 {
        Point2::new(self.x + (other.x - self.x) * t, self.y + (other.y - self.y) * t)
    }

    pub fn midpoint(&self, other: &Point2) -> Point2 {
        self.lerp(other, 0.5)
    }
}

/// An ordered open polyline from a scene's start point to its goal point.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Trajectory {
    pub points: Vec<Point2>,
}

impl Trajectory {
    pub fn new(points: Vec<Point2>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn first(&self) -> Option<&Point2> {
        self.points.first()
    }

    pub fn last(&self) -> Option<&Point2> {
        self.points.last()
    }

    pub fn arc_length(&self) -> f64 {
        self.points.windows(2).map(|w| w[0].distance(&w[1])).sum()
    }

    /// Cumulative arc length normalized to `[0, 1]`.
    ///
    /// A zero-length polyline falls back to uniform spacing.
    pub fn chord_parameters(&self) -> Vec<f64> {
        let n = self.points.len();
        if n == 0 {
            return Vec::new();
        }
        if n == 1 {
            return vec![0.0];
        }
        let mut acc = Vec::with_capacity(n);
        let mut total = 0.0;
        acc.push(0.0);
        for w in self.points.windows(2) {
            total += w[0].distance(&w[1]);
            acc.push(total);
        }
        if total <= 0.0 {
            return (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        }
        for v in acc.iter_mut() {
            *v /= total;
        }
        // pin the last value exactly
        acc[n - 1] = 1.0;
        acc
    }

    /// Resample to `n` points evenly spaced by arc length. Endpoints are kept exactly.
    pub fn resample(&self, n: usize) -> Result<Trajectory> {
        if n < 2 {
            return Err(Error::InvalidInput(format!("resample needs n >= 2, got {n}")));
        }
        if self.points.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "cannot resample a trajectory with {} points",
                self.points.len()
            )));
        }
        let params = self.chord_parameters();
        let mut out = Vec::with_capacity(n);
        let mut seg = 0;
        for j in 0..n {
            let t = j as f64 / (n - 1) as f64;
            while seg + 2 < params.len() && params[seg + 1] < t {
                seg += 1;
            }
            let (t0, t1) = (params[seg], params[seg + 1]);
            let local = if t1 > t0 { ((t - t0) / (t1 - t0)).clamp(0.0, 1.0) } else { 0.0 };
            out.push(self.points[seg].lerp(&self.points[seg + 1], local));
        }
        out[0] = self.points[0];
        out[n - 1] = *self.points.last().unwrap();
        Ok(Trajectory::new(out))
    }
}

/// The free central control point of a quadratic Bézier whose endpoints are
/// fixed by the scene. This is the two-dimensional trajectory code.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BezierParam {
    pub control: Point2,
}

impl BezierParam {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { control: Point2::new(x, y) }
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.control.x, self.control.y]
    }
}

impl From<Point2> for BezierParam {
    fn from(control: Point2) -> Self {
        Self { control }
    }
}

/// Evaluate `B(t) = (1-t)^2 p0 + 2t(1-t) c + t^2 p1`.
pub fn bezier_point(t: f64, start: Point2, control: Point2, end: Point2) -> Point2 {
    let u = 1.0 - t;
    let a = u * u;
    let b = 2.0 * t * u;
    let c = t * t;
    Point2::new(
        a * start.x + b * control.x + c * end.x,
        a * start.y + b * control.y + c * end.y,
    )
}

/// Sample `n` points of the quadratic Bézier at uniformly spaced parameters.
pub fn sample_bezier(z: &BezierParam, endpoints: (Point2, Point2), n: usize) -> Result<Trajectory> {
    if n < 2 {
        return Err(Error::InvalidInput(format!("sample_bezier needs n >= 2, got {n}")));
    }
    if !z.control.is_finite() {
        return Err(Error::InvalidInput(format!(
            "non-finite control point ({}, {})",
            z.control.x, z.control.y
        )));
    }
    let (start, end) = endpoints;
    let mut pts: Vec<Point2> = (0..n)
        .map(|j| bezier_point(j as f64 / (n - 1) as f64, start, z.control, end))
        .collect();
    pts[0] = start;
    pts[n - 1] = end;
    Ok(Trajectory::new(pts))
}

fn check_fit_input(tr: &Trajectory) -> Result<()> {
    if tr.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "fit_bezier needs at least 3 points, got {}",
            tr.len()
        )));
    }
    if tr.points.iter().any(|p| !p.is_finite()) {
        return Err(Error::InvalidInput("trajectory contains non-finite points".into()));
    }
    Ok(())
}

/// Closed-form least-squares control point for fixed curve parameters.
///
/// With `w_j = 2 t_j (1 - t_j)` and `r_j = p_j - (1-t_j)^2 p0 - t_j^2 p1`, the
/// minimizer of `Σ |r_j - w_j c|^2` is `c = Σ w_j r_j / Σ w_j^2` per axis.
fn solve_control(points: &[Point2], params: &[f64]) -> Result<Point2> {
    let start = points[0];
    let end = *points.last().unwrap();
    let (mut sx, mut sy, mut sw) = (0.0, 0.0, 0.0);
    for (p, &t) in points.iter().zip(params) {
        let u = 1.0 - t;
        let w = 2.0 * t * u;
        sx += w * (p.x - u * u * start.x - t * t * end.x);
        sy += w * (p.y - u * u * start.y - t * t * end.y);
        sw += w * w;
    }
    if sw <= f64::EPSILON {
        return Err(Error::DegenerateFit);
    }
    Ok(Point2::new(sx / sw, sy / sw))
}

/// Least-squares control point under chord-length parameters only.
pub fn fit_bezier_chord(tr: &Trajectory) -> Result<BezierParam> {
    check_fit_input(tr)?;
    solve_control(&tr.points, &tr.chord_parameters()).map(BezierParam::from)
}

/// Parameter of the point on the curve nearest to `p`, refined from `t0`.
fn project_parameter(p: Point2, start: Point2, c: Point2, end: Point2, t0: f64) -> f64 {
    // B(t) = a t^2 + b t + start with a = start - 2c + end, b = 2(c - start)
    let (ax, ay) = (start.x - 2.0 * c.x + end.x, start.y - 2.0 * c.y + end.y);
    let (bx, by) = (2.0 * (c.x - start.x), 2.0 * (c.y - start.y));
    let dist2 = |t: f64| {
        let q = bezier_point(t, start, c, end);
        (q.x - p.x).powi(2) + (q.y - p.y).powi(2)
    };
    let mut t = t0.clamp(0.0, 1.0);
    for _ in 0..30 {
        let q = bezier_point(t, start, c, end);
        let (dx, dy) = (q.x - p.x, q.y - p.y);
        let (d1x, d1y) = (2.0 * ax * t + bx, 2.0 * ay * t + by);
        let g = dx * d1x + dy * d1y;
        let h = d1x * d1x + d1y * d1y + dx * 2.0 * ax + dy * 2.0 * ay;
        let step = if h > 0.0 { g / h } else { g.signum() * 1e-3 };
        let mut next = (t - step).clamp(0.0, 1.0);
        // Newton can overshoot on strongly curved arcs; halve until it improves
        let mut tries = 0;
        while dist2(next) > dist2(t) && tries < 30 {
            next = 0.5 * (next + t);
            tries += 1;
        }
        if (next - t).abs() < 1e-15 {
            t = next;
            break;
        }
        t = next;
    }
    t
}

/// Least-squares central control point for a polyline with fixed endpoints.
///
/// Two starts are tried, chord-length and uniform parameters. From each, the
/// closed-form control solve alternates with nearest-point reprojection of
/// every interior sample, then a Levenberg-Marquardt pass over the control
/// point and all parameters jointly removes the slow tail of the alternation.
/// The start with the smaller residual wins.
pub fn fit_bezier(tr: &Trajectory) -> Result<BezierParam> {
    check_fit_input(tr)?;
    // degeneracy is judged on the chord-length assignment
    let chord = tr.chord_parameters();
    if chord.iter().all(|&t| t * (1.0 - t) == 0.0) {
        return Err(Error::DegenerateFit);
    }
    let n = tr.len();
    let uniform: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
    let mut best: Option<(Point2, f64)> = None;
    for init in [chord, uniform] {
        let (c, sse) = match fit_from(&tr.points, init) {
            Ok(fit) => fit,
            Err(Error::DegenerateFit) => continue,
            Err(e) => return Err(e),
        };
        if best.map_or(true, |(_, b)| sse < b) {
            best = Some((c, sse));
        }
    }
    best.map(|(c, _)| BezierParam::from(c)).ok_or(Error::DegenerateFit)
}

fn fit_from(pts: &[Point2], mut params: Vec<f64>) -> Result<(Point2, f64)> {
    let (start, end) = (pts[0], *pts.last().unwrap());
    let n = params.len();
    let mut c = solve_control(pts, &params)?;
    for _ in 0..FIT_MAX_ITERS {
        for j in 1..n - 1 {
            params[j] = project_parameter(pts[j], start, c, end, params[j]);
        }
        let next = match solve_control(pts, &params) {
            Ok(next) => next,
            Err(_) => break,
        };
        let moved = next.distance(&c);
        c = next;
        if moved < 1e-9 * (1.0 + c.x.abs() + c.y.abs()) {
            break;
        }
    }
    let sse = levenberg_marquardt(pts, &mut c, &mut params);
    Ok((c, sse))
}

fn joint_sse(pts: &[Point2], c: Point2, params: &[f64]) -> f64 {
    let (start, end) = (pts[0], *pts.last().unwrap());
    pts.iter()
        .zip(params)
        .map(|(p, &t)| {
            let q = bezier_point(t, start, c, end);
            (q.x - p.x).powi(2) + (q.y - p.y).powi(2)
        })
        .sum()
}

/// Damped Gauss-Newton on `Σ |B(t_j; c) − p_j|²` over `(c, t_1..t_{n-2})`.
/// Each `t_j` couples only with `c`, so the normal equations reduce to a
/// 2×2 Schur complement.
fn levenberg_marquardt(pts: &[Point2], c: &mut Point2, params: &mut [f64]) -> f64 {
    let (start, end) = (pts[0], *pts.last().unwrap());
    let n = params.len();
    let mut sse = joint_sse(pts, *c, params);
    let mut lambda = 1e-6;
    for _ in 0..LM_MAX_ITERS {
        if sse == 0.0 {
            break;
        }
        // J^T J = [[a I, C_j], [C_j^T, b_j]], gradient (g_c, g_t)
        let mut a = 0.0;
        let mut g_c = [0.0; 2];
        let mut cols = Vec::with_capacity(n);
        for j in 1..n - 1 {
            let t = params[j];
            let q = bezier_point(t, start, *c, end);
            let r = [q.x - pts[j].x, q.y - pts[j].y];
            let w = 2.0 * t * (1.0 - t);
            let d = [
                2.0 * (1.0 - t) * (c.x - start.x) + 2.0 * t * (end.x - c.x),
                2.0 * (1.0 - t) * (c.y - start.y) + 2.0 * t * (end.y - c.y),
            ];
            a += w * w;
            g_c[0] += w * r[0];
            g_c[1] += w * r[1];
            let b = d[0] * d[0] + d[1] * d[1];
            let g_t = d[0] * r[0] + d[1] * r[1];
            cols.push((j, w, d, b, g_t));
        }
        let mut m = [[a + lambda * a.max(1e-12), 0.0], [0.0, a + lambda * a.max(1e-12)]];
        let mut rhs = [-g_c[0], -g_c[1]];
        for &(_, w, d, b, g_t) in &cols {
            let den = b + lambda * b.max(1e-12);
            let cj = [w * d[0], w * d[1]];
            for u in 0..2 {
                for v in 0..2 {
                    m[u][v] -= cj[u] * cj[v] / den;
                }
                rhs[u] += cj[u] * g_t / den;
            }
        }
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        if !(det.is_finite() && det.abs() > 0.0) {
            break;
        }
        let dc = [(rhs[0] * m[1][1] - rhs[1] * m[0][1]) / det, (m[0][0] * rhs[1] - m[1][0] * rhs[0]) / det];
        let trial_c = Point2::new(c.x + dc[0], c.y + dc[1]);
        let mut trial_t = params.to_vec();
        for &(j, w, d, b, g_t) in &cols {
            let den = b + lambda * b.max(1e-12);
            let dt = (-g_t - w * (d[0] * dc[0] + d[1] * dc[1])) / den;
            trial_t[j] = (params[j] + dt).clamp(0.0, 1.0);
        }
        let trial = joint_sse(pts, trial_c, &trial_t);
        if trial < sse {
            let gain = sse - trial;
            *c = trial_c;
            params.copy_from_slice(&trial_t);
            sse = trial;
            lambda = (lambda / 3.0).max(1e-15);
            if gain <= 1e-16 * (1.0 + sse) {
                break;
            }
        } else {
            lambda *= 4.0;
            if lambda > 1e12 {
                break;
            }
        }
    }
    sse
}

const LM_MAX_ITERS: usize = 500;
const FIT_MAX_ITERS: usize = 200;

/// Sum over samples of the squared distance to the nearest point of the
/// curve with control `c`. This is the residual [`fit_bezier`] minimizes.
pub fn bezier_residual(tr: &Trajectory, c: Point2) -> f64 {
    let start = tr.points[0];
    let end = *tr.points.last().unwrap();
    let params = tr.chord_parameters();
    tr.points
        .iter()
        .zip(&params)
        .map(|(p, &t0)| {
            let t = project_parameter(*p, start, c, end, t0);
            let q = bezier_point(t, start, c, end);
            (p.x - q.x).powi(2) + (p.y - q.y).powi(2)
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectKind {
    Bowl,
    Plate,
    #[serde(alias = "utensils")]
    Cutlery,
    #[serde(alias = "cup")]
    Glass,
}

impl ObjectKind {
    pub const ALL: [ObjectKind; 4] =
        [ObjectKind::Bowl, ObjectKind::Plate, ObjectKind::Cutlery, ObjectKind::Glass];

    pub fn name(&self) -> &'static str {
        match self {
            ObjectKind::Bowl => "bowl",
            ObjectKind::Plate => "plate",
            ObjectKind::Cutlery => "cutlery",
            ObjectKind::Glass => "glass",
        }
    }

    pub fn index(&self) -> usize {
        *self as usize
    }
}

impl std::fmt::Display for ObjectKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ObjectKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bowl" => Ok(ObjectKind::Bowl),
            "plate" => Ok(ObjectKind::Plate),
            "cutlery" | "utensils" | "utensil" => Ok(ObjectKind::Cutlery),
            "glass" | "cup" => Ok(ObjectKind::Glass),
            other => Err(Error::InvalidInput(format!("unknown object kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub kind: ObjectKind,
    pub center: Point2,
    pub radius: f64,
    /// Bar orientation for cutlery, ignored for round objects.
    #[serde(default)]
    pub angle: f64,
    /// Render with the held-out appearance variant.
    #[serde(default)]
    pub variant: bool,
}

impl SceneObject {
    pub fn new(kind: ObjectKind, center: Point2, radius: f64) -> Self {
        Self { kind, center, radius, angle: 0.0, variant: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub objects: Vec<SceneObject>,
    pub width: f64,
    pub height: f64,
    pub p_init: Point2,
    pub p_f: Point2,
}

impl Scene {
    pub fn empty(width: f64, height: f64, p_init: Point2, p_f: Point2) -> Self {
        Self { objects: Vec::new(), width, height, p_init, p_f }
    }

    pub fn endpoints(&self) -> (Point2, Point2) {
        (self.p_init, self.p_f)
    }

    pub fn contains(&self, p: &Point2) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x < self.width && p.y < self.height
    }

    pub fn with_object(&self, o: SceneObject) -> Scene {
        let mut s = self.clone();
        s.objects.push(o);
        s
    }

    pub fn diagonal(&self) -> f64 {
        self.width.hypot(self.height)
    }
}

/// Distance from `p` to the nearest object center, with that object's index.
pub fn min_distance(p: &Point2, scene: &Scene) -> (f64, Option<usize>) {
    scene
        .objects
        .iter()
        .enumerate()
        .map(|(i, o)| (p.distance(&o.center), i))
        .fold((f64::INFINITY, None), |best, (d, i)| {
            if d < best.0 {
                (d, Some(i))
            } else {
                best
            }
        })
}
