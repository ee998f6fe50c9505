//! Spatial region shapes and the geometric queries the editor and the
//! statistics commands rely on.
//!
//! Coordinates live in image pixel space: origin at the top-left corner,
//! y growing downward, real-valued so sub-pixel positions survive a
//! save/load cycle. Containment is boundary inclusive everywhere.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Hit tolerance used for `Point` and `Polyline` shapes when the caller has
/// no better value.
pub const DEFAULT_HIT_TOLERANCE: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<(f64, f64)> for Point {
    fn from((x, y): (f64, f64)) -> Self {
        Self { x, y }
    }
}

/// One of the six region geometries.
///
/// On disk a shape is an object tagged by `"name"`, using the field names
/// most existing annotation tools understand (`x/y/width/height` for
/// rectangles, `all_points_x/all_points_y` for polygons and polylines).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ShapeRepr", try_from = "ShapeRepr")]
pub enum Shape {
    Rect { x: f64, y: f64, w: f64, h: f64 },
    Circle { cx: f64, cy: f64, r: f64 },
    /// Axis-aligned; there is no rotation field.
    Ellipse { cx: f64, cy: f64, rx: f64, ry: f64 },
    Point { x: f64, y: f64 },
    Polygon { vertices: Vec<Point> },
    Polyline { vertices: Vec<Point> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Rect,
    Circle,
    Ellipse,
    Point,
    Polygon,
    Polyline,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 6] = [
        ShapeKind::Rect,
        ShapeKind::Circle,
        ShapeKind::Ellipse,
        ShapeKind::Point,
        ShapeKind::Polygon,
        ShapeKind::Polyline,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ShapeKind::Rect => "rect",
            ShapeKind::Circle => "circle",
            ShapeKind::Ellipse => "ellipse",
            ShapeKind::Point => "point",
            ShapeKind::Polygon => "polygon",
            ShapeKind::Polyline => "polyline",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub xmin: f64,
    pub ymin: f64,
    pub xmax: f64,
    pub ymax: f64,
}

impl BBox {
    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.xmin && p.x <= self.xmax && p.y >= self.ymin && p.y <= self.ymax
    }

    pub fn width(&self) -> f64 {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> f64 {
        self.ymax - self.ymin
    }

    fn from_points<'a>(points: impl IntoIterator<Item = &'a Point>) -> Self {
        let mut b = BBox {
            xmin: f64::INFINITY,
            ymin: f64::INFINITY,
            xmax: f64::NEG_INFINITY,
            ymax: f64::NEG_INFINITY,
        };
        for p in points {
            b.xmin = b.xmin.min(p.x);
            b.ymin = b.ymin.min(p.y);
            b.xmax = b.xmax.max(p.x);
            b.ymax = b.ymax.max(p.y);
        }
        b
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ShapeViolation {
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("{field} must be positive")]
    NonPositive { field: &'static str },
    #[error("{kind} needs at least {min} vertices, found {found}")]
    TooFewVertices {
        kind: &'static str,
        min: usize,
        found: usize,
    },
    #[error("vertex {index} repeats the previous vertex")]
    RepeatedVertex { index: usize },
    #[error("polygon edges {first} and {second} intersect")]
    SelfIntersecting { first: usize, second: usize },
}

impl ShapeViolation {
    /// Warnings are reported but do not make a shape invalid.
    pub fn is_warning(&self) -> bool {
        matches!(self, ShapeViolation::SelfIntersecting { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum GeometryError {
    #[error("scale factor must be positive, got {0}")]
    NonPositiveFactor(f64),
}

impl Shape {
    pub fn kind(&self) -> ShapeKind {
        match self {
            Shape::Rect { .. } => ShapeKind::Rect,
            Shape::Circle { .. } => ShapeKind::Circle,
            Shape::Ellipse { .. } => ShapeKind::Ellipse,
            Shape::Point { .. } => ShapeKind::Point,
            Shape::Polygon { .. } => ShapeKind::Polygon,
            Shape::Polyline { .. } => ShapeKind::Polyline,
        }
    }

    pub fn polygon<I, P>(vertices: I) -> Self
    where
        I: IntoIterator<Item = P>,
        P: Into<Point>,
    {
        Shape::Polygon {
            vertices: vertices.into_iter().map(Into::into).collect(),
        }
    }

    pub fn polyline<I, P>(vertices: I) -> Self
    where
        I: IntoIterator<Item = P>,
        P: Into<Point>,
    {
        Shape::Polyline {
            vertices: vertices.into_iter().map(Into::into).collect(),
        }
    }

    /// True when `validate` reports no error-class violation.
    pub fn is_valid(&self) -> bool {
        self.validate().iter().all(ShapeViolation::is_warning)
    }

    pub fn validate(&self) -> Vec<ShapeViolation> {
        let mut out = Vec::new();
        let positive = |out: &mut Vec<ShapeViolation>, field, v: f64| {
            if v.is_finite() && v <= 0.0 {
                out.push(ShapeViolation::NonPositive { field });
            }
        };
        let finite = |values: &[f64]| values.iter().all(|v| v.is_finite());
        match self {
            Shape::Rect { x, y, w, h } => {
                if !finite(&[*x, *y, *w, *h]) {
                    out.push(ShapeViolation::NonFinite);
                }
                positive(&mut out, "width", *w);
                positive(&mut out, "height", *h);
            }
            Shape::Circle { cx, cy, r } => {
                if !finite(&[*cx, *cy, *r]) {
                    out.push(ShapeViolation::NonFinite);
                }
                positive(&mut out, "radius", *r);
            }
            Shape::Ellipse { cx, cy, rx, ry } => {
                if !finite(&[*cx, *cy, *rx, *ry]) {
                    out.push(ShapeViolation::NonFinite);
                }
                positive(&mut out, "rx", *rx);
                positive(&mut out, "ry", *ry);
            }
            Shape::Point { x, y } => {
                if !finite(&[*x, *y]) {
                    out.push(ShapeViolation::NonFinite);
                }
            }
            Shape::Polygon { vertices } | Shape::Polyline { vertices } => {
                let (kind, min) = match self {
                    Shape::Polygon { .. } => ("polygon", 3),
                    _ => ("polyline", 2),
                };
                if !vertices.iter().all(|p| p.is_finite()) {
                    out.push(ShapeViolation::NonFinite);
                }
                if vertices.len() < min {
                    out.push(ShapeViolation::TooFewVertices {
                        kind,
                        min,
                        found: vertices.len(),
                    });
                }
                for (i, pair) in vertices.windows(2).enumerate() {
                    if pair[0] == pair[1] {
                        out.push(ShapeViolation::RepeatedVertex { index: i + 1 });
                    }
                }
                if matches!(self, Shape::Polygon { .. }) && out.is_empty() {
                    if let Some((first, second)) = first_self_intersection(vertices) {
                        out.push(ShapeViolation::SelfIntersecting { first, second });
                    }
                }
            }
        }
        out
    }

    /// Tests whether `p` selects this shape.
    ///
    /// Area shapes test containment (boundary inclusive), widened by `tol`
    /// pixels. `Point` and `Polyline` test distance `<= tol`. Polygon
    /// containment follows the even-odd rule.
    pub fn hit_test(&self, p: Point, tol: f64) -> bool {
        let tol = tol.max(0.0);
        match self {
            Shape::Rect { x, y, w, h } => {
                let dx = (x - p.x).max(p.x - (x + w)).max(0.0);
                let dy = (y - p.y).max(p.y - (y + h)).max(0.0);
                dx * dx + dy * dy <= tol * tol
            }
            Shape::Circle { cx, cy, r } => {
                let (dx, dy) = (p.x - cx, p.y - cy);
                let reach = r + tol;
                dx * dx + dy * dy <= reach * reach
            }
            // Tolerance grows both semi-axes, which approximates the
            // offset curve of the ellipse.
            Shape::Ellipse { cx, cy, rx, ry } => {
                let nx = (p.x - cx) / (rx + tol);
                let ny = (p.y - cy) / (ry + tol);
                nx * nx + ny * ny <= 1.0
            }
            Shape::Point { x, y } => p.distance(Point::new(*x, *y)) <= tol,
            Shape::Polygon { vertices } => {
                edges(vertices, true).any(|(a, b)| near_segment(p, a, b, tol))
                    || even_odd_contains(vertices, p)
            }
            Shape::Polyline { vertices } => {
                edges(vertices, false).any(|(a, b)| near_segment(p, a, b, tol))
            }
        }
    }

    pub fn bbox(&self) -> BBox {
        match self {
            Shape::Rect { x, y, w, h } => BBox {
                xmin: *x,
                ymin: *y,
                xmax: x + w,
                ymax: y + h,
            },
            Shape::Circle { cx, cy, r } => BBox {
                xmin: cx - r,
                ymin: cy - r,
                xmax: cx + r,
                ymax: cy + r,
            },
            Shape::Ellipse { cx, cy, rx, ry } => BBox {
                xmin: cx - rx,
                ymin: cy - ry,
                xmax: cx + rx,
                ymax: cy + ry,
            },
            Shape::Point { x, y } => BBox {
                xmin: *x,
                ymin: *y,
                xmax: *x,
                ymax: *y,
            },
            Shape::Polygon { vertices } | Shape::Polyline { vertices } => {
                BBox::from_points(vertices)
            }
        }
    }

    /// Area in square pixels. Self-intersecting polygons report the
    /// absolute shoelace sum, so bow-tie lobes of opposite winding cancel.
    pub fn area(&self) -> f64 {
        match self {
            Shape::Rect { w, h, .. } => w * h,
            Shape::Circle { r, .. } => std::f64::consts::PI * r * r,
            Shape::Ellipse { rx, ry, .. } => std::f64::consts::PI * rx * ry,
            Shape::Point { .. } | Shape::Polyline { .. } => 0.0,
            Shape::Polygon { vertices } => shoelace(vertices).abs(),
        }
    }

    /// Editing handles, in a fixed order:
    ///
    /// * rect: top-left, top-right, bottom-right, bottom-left
    /// * circle: center, then the rightmost rim point
    /// * ellipse: center, rightmost rim point, bottom rim point
    /// * point: the point itself
    /// * polygon / polyline: the vertices
    pub fn control_points(&self) -> Vec<Point> {
        match self {
            Shape::Rect { x, y, w, h } => vec![
                Point::new(*x, *y),
                Point::new(x + w, *y),
                Point::new(x + w, y + h),
                Point::new(*x, y + h),
            ],
            Shape::Circle { cx, cy, r } => vec![Point::new(*cx, *cy), Point::new(cx + r, *cy)],
            Shape::Ellipse { cx, cy, rx, ry } => vec![
                Point::new(*cx, *cy),
                Point::new(cx + rx, *cy),
                Point::new(*cx, cy + ry),
            ],
            Shape::Point { x, y } => vec![Point::new(*x, *y)],
            Shape::Polygon { vertices } | Shape::Polyline { vertices } => vertices.clone(),
        }
    }

    /// Index and distance of the control point closest to `p`; the lowest
    /// index wins ties.
    pub fn nearest_vertex(&self, p: Point) -> (usize, f64) {
        self.control_points()
            .into_iter()
            .map(|c| c.distance(p))
            .enumerate()
            .fold((0, f64::INFINITY), |best, (i, d)| if d < best.1 { (i, d) } else { best })
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Shape {
        let shift = |p: &Point| Point::new(p.x + dx, p.y + dy);
        match self {
            Shape::Rect { x, y, w, h } => Shape::Rect {
                x: x + dx,
                y: y + dy,
                w: *w,
                h: *h,
            },
            Shape::Circle { cx, cy, r } => Shape::Circle {
                cx: cx + dx,
                cy: cy + dy,
                r: *r,
            },
            Shape::Ellipse { cx, cy, rx, ry } => Shape::Ellipse {
                cx: cx + dx,
                cy: cy + dy,
                rx: *rx,
                ry: *ry,
            },
            Shape::Point { x, y } => Shape::Point {
                x: x + dx,
                y: y + dy,
            },
            Shape::Polygon { vertices } => Shape::Polygon {
                vertices: vertices.iter().map(shift).collect(),
            },
            Shape::Polyline { vertices } => Shape::Polyline {
                vertices: vertices.iter().map(shift).collect(),
            },
        }
    }

    /// Uniform scale about `origin`.
    pub fn scale(&self, factor: f64, origin: Point) -> Result<Shape, GeometryError> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(GeometryError::NonPositiveFactor(factor));
        }
        let sx = |x: f64| origin.x + (x - origin.x) * factor;
        let sy = |y: f64| origin.y + (y - origin.y) * factor;
        let sp = |p: &Point| Point::new(sx(p.x), sy(p.y));
        Ok(match self {
            Shape::Rect { x, y, w, h } => Shape::Rect {
                x: sx(*x),
                y: sy(*y),
                w: w * factor,
                h: h * factor,
            },
            Shape::Circle { cx, cy, r } => Shape::Circle {
                cx: sx(*cx),
                cy: sy(*cy),
                r: r * factor,
            },
            Shape::Ellipse { cx, cy, rx, ry } => Shape::Ellipse {
                cx: sx(*cx),
                cy: sy(*cy),
                rx: rx * factor,
                ry: ry * factor,
            },
            Shape::Point { x, y } => Shape::Point { x: sx(*x), y: sy(*y) },
            Shape::Polygon { vertices } => Shape::Polygon {
                vertices: vertices.iter().map(sp).collect(),
            },
            Shape::Polyline { vertices } => Shape::Polyline {
                vertices: vertices.iter().map(sp).collect(),
            },
        })
    }
}

fn edges(vertices: &[Point], closed: bool) -> impl Iterator<Item = (Point, Point)> + '_ {
    let n = vertices.len();
    let count = match (closed, n) {
        (_, 0) => 0,
        (true, 1) => 1,
        (true, _) => n,
        (false, _) => n - 1,
    };
    (0..count).map(move |i| (vertices[i], vertices[(i + 1) % n]))
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

fn within_box(p: Point, a: Point, b: Point) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

pub(crate) fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return p.distance(a);
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    p.distance(Point::new(a.x + t * dx, a.y + t * dy))
}

// Exact collinearity check first so tol = 0 still counts boundary points
// that the projection arithmetic would miss by an ulp.
fn near_segment(p: Point, a: Point, b: Point, tol: f64) -> bool {
    (cross(a, b, p) == 0.0 && within_box(p, a, b)) || segment_distance(p, a, b) <= tol
}

fn even_odd_contains(vertices: &[Point], p: Point) -> bool {
    let mut inside = false;
    for (a, b) in edges(vertices, true) {
        if (a.y > p.y) != (b.y > p.y) {
            let x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x_cross {
                inside = !inside;
            }
        }
    }
    inside
}

fn shoelace(vertices: &[Point]) -> f64 {
    edges(vertices, true)
        .map(|(a, b)| a.x * b.y - b.x * a.y)
        .sum::<f64>()
        / 2.0
}

fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && within_box(a, c, d))
        || (d2 == 0.0 && within_box(b, c, d))
        || (d3 == 0.0 && within_box(c, a, b))
        || (d4 == 0.0 && within_box(d, a, b))
}

/// First pair of non-adjacent polygon edges that touch or cross.
fn first_self_intersection(vertices: &[Point]) -> Option<(usize, usize)> {
    let n = vertices.len();
    if n < 4 {
        return None;
    }
    for i in 0..n {
        for j in (i + 2)..n {
            // edge n-1 and edge 0 share vertex 0
            if i == 0 && j == n - 1 {
                continue;
            }
            let (a, b) = (vertices[i], vertices[(i + 1) % n]);
            let (c, d) = (vertices[j], vertices[(j + 1) % n]);
            if segments_intersect(a, b, c, d) {
                return Some((i, j));
            }
        }
    }
    None
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
enum ShapeRepr {
    Rect {
        x: f64,
        y: f64,
        width: f64,
        height: f64,
    },
    Circle {
        cx: f64,
        cy: f64,
        r: f64,
    },
    Ellipse {
        cx: f64,
        cy: f64,
        rx: f64,
        ry: f64,
    },
    Point {
        cx: f64,
        cy: f64,
    },
    Polygon {
        all_points_x: Vec<f64>,
        all_points_y: Vec<f64>,
    },
    Polyline {
        all_points_x: Vec<f64>,
        all_points_y: Vec<f64>,
    },
}

impl From<Shape> for ShapeRepr {
    fn from(shape: Shape) -> Self {
        let split = |v: Vec<Point>| -> (Vec<f64>, Vec<f64>) { v.into_iter().map(|p| (p.x, p.y)).unzip() };
        match shape {
            Shape::Rect { x, y, w, h } => ShapeRepr::Rect {
                x,
                y,
                width: w,
                height: h,
            },
            Shape::Circle { cx, cy, r } => ShapeRepr::Circle { cx, cy, r },
            Shape::Ellipse { cx, cy, rx, ry } => ShapeRepr::Ellipse { cx, cy, rx, ry },
            Shape::Point { x, y } => ShapeRepr::Point { cx: x, cy: y },
            Shape::Polygon { vertices } => {
                let (all_points_x, all_points_y) = split(vertices);
                ShapeRepr::Polygon {
                    all_points_x,
                    all_points_y,
                }
            }
            Shape::Polyline { vertices } => {
                let (all_points_x, all_points_y) = split(vertices);
                ShapeRepr::Polyline {
                    all_points_x,
                    all_points_y,
                }
            }
        }
    }
}

impl TryFrom<ShapeRepr> for Shape {
    type Error = String;

    fn try_from(repr: ShapeRepr) -> Result<Self, Self::Error> {
        let join = |xs: Vec<f64>, ys: Vec<f64>| -> Result<Vec<Point>, String> {
            if xs.len() != ys.len() {
                return Err(format!(
                    "all_points_x has {} values but all_points_y has {}",
                    xs.len(),
                    ys.len()
                ));
            }
            Ok(xs.into_iter().zip(ys).map(Point::from).collect())
        };
        Ok(match repr {
            ShapeRepr::Rect {
                x,
                y,
                width,
                height,
            } => Shape::Rect {
                x,
                y,
                w: width,
                h: height,
            },
            ShapeRepr::Circle { cx, cy, r } => Shape::Circle { cx, cy, r },
            ShapeRepr::Ellipse { cx, cy, rx, ry } => Shape::Ellipse { cx, cy, rx, ry },
            ShapeRepr::Point { cx, cy } => Shape::Point { x: cx, y: cy },
            ShapeRepr::Polygon {
                all_points_x,
                all_points_y,
            } => Shape::Polygon {
                vertices: join(all_points_x, all_points_y)?,
            },
            ShapeRepr::Polyline {
                all_points_x,
                all_points_y,
            } => Shape::Polyline {
                vertices: join(all_points_x, all_points_y)?,
            },
        })
    }
}
