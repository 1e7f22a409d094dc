//! Stock polarized toric manifolds, their section spaces, and quadrature over
//! the dense torus chart.
//!
//! A model is a lattice polytope `P`; sections of `L^m` are the monomials
//! `z^u` for lattice points `u` of `mP`. Integrals over `M` are taken over the
//! dense chart `(C^*)^n` in logarithmic coordinates `w = log z = x + i theta`.

use std::f64::consts::PI;

use gauss_quad::GaussLegendre;
use nalgebra::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::scalar::Scalar;

/// Largest dilation factor `m` accepted by the lattice-point enumerator.
pub const MAX_LEVEL: i64 = 256;

/// Full-dimensional convex lattice polytope, stored by its hull vertices
/// (counter-clockwise in dimension 2) and integer facet inequalities
/// `normal . u <= offset`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticePolytope {
    dim: usize,
    vertices: Vec<Vec<i64>>,
    #[serde(skip)]
    facets: Vec<(Vec<i64>, i64)>,
}

impl LatticePolytope {
    pub fn new(vertices: Vec<Vec<i64>>) -> Result<Self> {
        let dim = match vertices.first() {
            Some(v) => v.len(),
            None => return invalid("polytope needs at least one vertex"),
        };
        if dim == 0 || vertices.iter().any(|v| v.len() != dim) {
            return invalid("vertex coordinates must share a positive dimension");
        }
        match dim {
            1 => {
                let lo = vertices.iter().map(|v| v[0]).min().unwrap();
                let hi = vertices.iter().map(|v| v[0]).max().unwrap();
                if lo == hi {
                    return invalid("degenerate segment");
                }
                Ok(Self {
                    dim,
                    vertices: vec![vec![lo], vec![hi]],
                    facets: vec![(vec![-1], -lo), (vec![1], hi)],
                })
            }
            2 => {
                let hull = convex_hull_2d(&vertices);
                if hull.len() < 3 {
                    return invalid("degenerate polygon");
                }
                let facets = (0..hull.len())
                    .map(|i| {
                        let p = &hull[i];
                        let q = &hull[(i + 1) % hull.len()];
                        let normal = vec![q[1] - p[1], p[0] - q[0]];
                        let offset = normal[0] * p[0] + normal[1] * p[1];
                        (normal, offset)
                    })
                    .collect();
                Ok(Self { dim, vertices: hull, facets })
            }
            _ => invalid(format!("polytopes of dimension {dim} are not supported (n <= 2)")),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vertices(&self) -> &[Vec<i64>] {
        &self.vertices
    }

    /// `n! * vol(P)`, an integer for lattice polytopes.
    pub fn normalized_volume(&self) -> i64 {
        match self.dim {
            1 => self.vertices[1][0] - self.vertices[0][0],
            _ => {
                let v = &self.vertices;
                let mut twice_area = 0;
                for i in 0..v.len() {
                    let p = &v[i];
                    let q = &v[(i + 1) % v.len()];
                    twice_area += p[0] * q[1] - q[0] * p[1];
                }
                twice_area.abs()
            }
        }
    }

    /// Whether `u` lies in `mP`.
    pub fn contains_dilated(&self, u: &[i64], m: i64) -> bool {
        self.facets
            .iter()
            .all(|(nrm, off)| nrm.iter().zip(u).map(|(a, b)| a * b).sum::<i64>() <= m * off)
    }

    /// Barycenter of `P`.
    pub fn barycenter(&self) -> Vec<f64> {
        match self.dim {
            1 => vec![0.5 * (self.vertices[0][0] + self.vertices[1][0]) as f64],
            _ => {
                let v = &self.vertices;
                let (mut a, mut cx, mut cy) = (0.0, 0.0, 0.0);
                for i in 0..v.len() {
                    let (x0, y0) = (v[i][0] as f64, v[i][1] as f64);
                    let (x1, y1) = (v[(i + 1) % v.len()][0] as f64, v[(i + 1) % v.len()][1] as f64);
                    let cross = x0 * y1 - x1 * y0;
                    a += cross;
                    cx += (x0 + x1) * cross;
                    cy += (y0 + y1) * cross;
                }
                vec![cx / (3.0 * a), cy / (3.0 * a)]
            }
        }
    }

    fn bounding_box(&self, m: i64) -> (Vec<i64>, Vec<i64>) {
        let lo = (0..self.dim)
            .map(|k| m * self.vertices.iter().map(|v| v[k]).min().unwrap())
            .collect();
        let hi = (0..self.dim)
            .map(|k| m * self.vertices.iter().map(|v| v[k]).max().unwrap())
            .collect();
        (lo, hi)
    }
}

fn convex_hull_2d(points: &[Vec<i64>]) -> Vec<Vec<i64>> {
    let mut pts: Vec<Vec<i64>> = points.to_vec();
    pts.sort();
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: &[i64], a: &[i64], b: &[i64]| {
        (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
    };
    let mut lower: Vec<Vec<i64>> = Vec::new();
    for p in &pts {
        while lower.len() >= 2 && cross(&lower[lower.len() - 2], &lower[lower.len() - 1], p) <= 0 {
            lower.pop();
        }
        lower.push(p.clone());
    }
    let mut upper: Vec<Vec<i64>> = Vec::new();
    for p in pts.iter().rev() {
        while upper.len() >= 2 && cross(&upper[upper.len() - 2], &upper[upper.len() - 1], p) <= 0 {
            upper.pop();
        }
        upper.push(p.clone());
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Named toric models with known intersection numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StockModel {
    /// `P^1` with `O(1)`: the segment `[0, 1]`.
    #[serde(rename = "P1")]
    ProjectiveLine,
    /// `P^1 x P^1` with `O(1, 1)`: the unit square.
    #[serde(rename = "P1xP1")]
    ProductOfLines,
    /// `P^2` with `O(1)`: the unit triangle.
    #[serde(rename = "P2")]
    ProjectivePlane,
    /// First Hirzebruch surface (not CSC; useful as a destabilized example).
    #[serde(rename = "F1")]
    Hirzebruch1,
}

impl StockModel {
    pub fn vertices(self) -> Vec<Vec<i64>> {
        match self {
            StockModel::ProjectiveLine => vec![vec![0], vec![1]],
            StockModel::ProductOfLines => vec![vec![0, 0], vec![1, 0], vec![1, 1], vec![0, 1]],
            StockModel::ProjectivePlane => vec![vec![0, 0], vec![1, 0], vec![0, 1]],
            StockModel::Hirzebruch1 => vec![vec![0, 0], vec![2, 0], vec![1, 1], vec![0, 1]],
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "P1" => Ok(StockModel::ProjectiveLine),
            "P1xP1" => Ok(StockModel::ProductOfLines),
            "P2" => Ok(StockModel::ProjectivePlane),
            "F1" => Ok(StockModel::Hirzebruch1),
            other => invalid(format!("unknown stock model {other:?}")),
        }
    }
}

/// A polarized toric manifold `(M, L)` given by its polytope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarizedModel {
    pub polytope: LatticePolytope,
    pub stock: Option<StockModel>,
}

impl PolarizedModel {
    pub fn from_polytope(polytope: LatticePolytope) -> Self {
        Self { polytope, stock: None }
    }

    pub fn stock(kind: StockModel) -> Self {
        let polytope = LatticePolytope::new(kind.vertices()).expect("stock polytope");
        Self { polytope, stock: Some(kind) }
    }

    pub fn projective_line() -> Self {
        Self::stock(StockModel::ProjectiveLine)
    }

    pub fn product_of_lines() -> Self {
        Self::stock(StockModel::ProductOfLines)
    }

    pub fn dim(&self) -> usize {
        self.polytope.dim()
    }

    /// `c_1(L)^n[M] = n! vol(P)`.
    pub fn degree_volume(&self) -> Result<f64> {
        let v = self.polytope.normalized_volume();
        if v <= 0 {
            return invalid("degenerate polytope");
        }
        Ok(v as f64)
    }

    pub fn degree_volume_as<S: Scalar>(&self) -> S {
        S::from_i64_lossy(self.polytope.normalized_volume())
    }
}

/// Monomial basis of `H^0(M, L^m)`: the lattice points of `mP` in
/// lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionSet {
    pub level: usize,
    pub dim: usize,
    pub exponents: Vec<Vec<i64>>,
}

impl SectionSet {
    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    /// `N_m`, one less than the number of sections.
    pub fn n_m(&self) -> usize {
        self.exponents.len() - 1
    }
}

pub fn enumerate_sections(model: &PolarizedModel, m: i64) -> Result<SectionSet> {
    if m <= 0 {
        return invalid(format!("level must be positive, got {m}"));
    }
    if m > MAX_LEVEL {
        return invalid(format!("level {m} exceeds the enumeration bound {MAX_LEVEL}"));
    }
    let poly = &model.polytope;
    let (lo, hi) = poly.bounding_box(m);
    let mut exponents = Vec::new();
    let mut cur = lo.clone();
    loop {
        if poly.contains_dilated(&cur, m) {
            exponents.push(cur.clone());
        }
        // odometer, last coordinate fastest: yields lexicographic order
        let mut k = poly.dim();
        loop {
            if k == 0 {
                return Ok(SectionSet { level: m as usize, dim: poly.dim(), exponents });
            }
            k -= 1;
            if cur[k] < hi[k] {
                cur[k] += 1;
                for j in k + 1..poly.dim() {
                    cur[j] = lo[j];
                }
                break;
            }
        }
    }
}

pub fn degree_volume(model: &PolarizedModel) -> Result<f64> {
    model.degree_volume()
}

/// Monomial values `z^u` at a chart point, in section order.
pub fn evaluate_sections<S: Scalar>(sections: &SectionSet, point: &[Complex<S>]) -> Vec<Complex<S>> {
    sections
        .exponents
        .iter()
        .map(|u| {
            u.iter().zip(point).fold(Complex::new(S::one(), S::zero()), |acc, (&e, z)| {
                acc * z.powi(e as i32)
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadratureKind {
    /// Gauss-Legendre in `t` with `r = tan t` per coordinate, periodic
    /// trapezoid in the angles.
    TensorGauss,
    /// Composite Gauss-Legendre panels over a box in log coordinates with
    /// logarithmic tails, periodic trapezoid in the angles.
    Adapted,
    /// Seeded uniform sampling of `(t, theta)`.
    MonteCarlo,
    /// One complex dimension: composite panels in `(x, theta)` with graded
    /// patches around points where the volume form concentrates.
    Refined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureDescriptor {
    pub kind: QuadratureKind,
    pub resolution: usize,
    pub angular: usize,
    pub seed: u64,
    /// Observed error integrating the reference volume form.
    pub tolerance: f64,
}

/// How a node set treats the angular directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeMode {
    /// Integrand independent of the angles; they are integrated analytically.
    Invariant,
    /// Full tensor grid in radial and angular variables.
    Full,
}

/// A quadrature node. `weight` is the measure of `dx dtheta / pi^n`, so that
/// `int f omega^n ~ sum weight * f * n! * det(g)` with `g` the Hermitian
/// metric in log coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Node<S> {
    pub x: Vec<S>,
    pub theta: Vec<S>,
    pub weight: S,
}

#[derive(Debug, Clone)]
struct Sample<S> {
    x: Vec<S>,
    theta: Vec<S>,
    weight: S,
}

#[derive(Debug, Clone)]
pub struct QuadratureScheme<S> {
    dim: usize,
    descriptor: QuadratureDescriptor,
    /// Per coordinate `(x, w)`; weights include the Jacobian `dx`.
    radial: Vec<Vec<(S, S)>>,
    samples: Vec<Sample<S>>,
}

/// Minimum accepted radial resolution.
pub const MIN_RESOLUTION: usize = 4;

const PANEL_NODES: usize = 8;
const TAIL_NODES: usize = 16;

fn gauss(n: usize) -> Result<Vec<(f64, f64)>> {
    let rule = GaussLegendre::new(n).map_err(|e| Error::InvalidArgument(format!("gauss-legendre: {e}")))?;
    let mut v: Vec<(f64, f64)> = rule.nodes().zip(rule.weights()).map(|(&x, &w)| (x, w)).collect();
    v.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    Ok(v)
}

/// `x = log tan t` with Gauss-Legendre in `t`.
fn log_tan_rule(resolution: usize) -> Result<Vec<(f64, f64)>> {
    let half = PI / 4.0;
    Ok(gauss(resolution)?
        .into_iter()
        .map(|(s, w)| {
            let t = half * (s + 1.0);
            let (sn, cs) = t.sin_cos();
            ((sn / cs).ln(), half * w / (sn * cs))
        })
        .collect())
}

/// Panels of width at most `panel` over `[lo, hi]`, and tails
/// `x = lo + log s`, `x = hi - log s` with Gauss-Legendre in `s`.
/// Logarithmic tails `(-inf, lo]` and `[hi, inf)`.
fn tail_rule(lo: f64, hi: f64) -> Result<Vec<(f64, f64)>> {
    let tail = gauss(TAIL_NODES)?;
    let mut out = Vec::with_capacity(2 * TAIL_NODES);
    for &(s, w) in &tail {
        let s = 0.5 * (s + 1.0);
        out.push((lo + s.ln(), 0.5 * w / s));
        out.push((hi - s.ln(), 0.5 * w / s));
    }
    Ok(out)
}

/// Gauss-Legendre nodes on each panel between consecutive breaks.
fn panel_rule(breaks: &[f64], g: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(breaks.len() * g.len());
    for p in breaks.windows(2) {
        let (mid, half) = (0.5 * (p[0] + p[1]), 0.5 * (p[1] - p[0]));
        out.extend(g.iter().map(|&(s, w)| (mid + half * s, half * w)));
    }
    out
}

fn composite_rule(lo: f64, hi: f64, panel: f64) -> Result<Vec<(f64, f64)>> {
    let count = ((hi - lo) / panel).ceil().max(1.0) as usize;
    let breaks: Vec<f64> = (0..=count).map(|p| lo + (hi - lo) * p as f64 / count as f64).collect();
    let mut out = panel_rule(&breaks, &gauss(PANEL_NODES)?);
    out.extend(tail_rule(lo, hi)?);
    out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    Ok(out)
}

/// A point of the plane, in log-polar coordinates, where the integrand
/// concentrates on the scale `width`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spot {
    pub x: f64,
    pub theta: f64,
    pub width: f64,
}

/// Largest half-side of the square patch around a spot.
const PATCH_HALF: f64 = 0.5;
/// Widest graded angular panel, in trapezoid spacings.
const GRADED_SPACINGS: f64 = 3.0;
/// Strips closer than this many trapezoid spacings to a spot get graded
/// angular panels.
const NEAR_SPACINGS: f64 = 5.0;

fn circle_distance(a: f64, b: f64) -> f64 {
    let r = (a - b).rem_euclid(2.0 * PI);
    r.min(2.0 * PI - r)
}

/// Breakpoints of `[lo, hi]` whose panels have width `h` next to each anchor
/// `(p, h)`, doubling away from it, and never exceed `cap`.
fn graded_breaks(lo: f64, hi: f64, anchors: &[(f64, f64)], cap: f64) -> Vec<f64> {
    let mut b = vec![lo, hi];
    for &(p, h) in anchors {
        b.push(p);
        let (mut d, mut w) = (0.0, h.min(cap));
        while d < hi - lo {
            d += w;
            b.push(p - d);
            b.push(p + d);
            if w >= cap {
                break;
            }
            w = (2.0 * w).min(cap);
        }
    }
    b.retain(|&v| v >= lo && v <= hi);
    b.sort_by(|a, c| a.partial_cmp(c).unwrap());
    b.dedup_by(|a, c| (*a - *c).abs() <= 1e-12 * (1.0 + c.abs()));
    let mut out = vec![b[0]];
    for w in b.windows(2) {
        let n = ((w[1] - w[0]) / cap).ceil().max(1.0) as usize;
        out.extend((1..=n).map(|i| w[0] + (w[1] - w[0]) * i as f64 / n as f64));
    }
    out
}

/// Nodes `(dx, dy, w)` on the square `[-half, half]^2` in polar-like
/// coordinates about its centre: four triangles over the edges, radial
/// panels halving towards the centre down to the scale `width`.
fn graded_square(half: f64, width: f64, g: &[(f64, f64)]) -> Vec<(f64, f64, f64)> {
    let mut radial = Vec::new();
    let mut hi = 1.0;
    for _ in 0..60 {
        let lo = 0.5 * hi;
        if hi * half <= 0.5 * width {
            break;
        }
        radial.extend(panel_rule(&[lo, hi], g));
        hi = lo;
    }
    radial.extend(panel_rule(&[0.0, hi], g));
    let along = panel_rule(&[-1.0, 0.0, 1.0], g);
    let mut out = Vec::with_capacity(4 * radial.len() * along.len());
    for (cx, cy) in [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)] {
        for &(r, wr) in &radial {
            for &(t, wt) in &along {
                let (ex, ey) = (cx - cy * t, cy + cx * t);
                out.push((r * half * ex, r * half * ey, half * half * r * wr * wt));
            }
        }
    }
    out
}

impl<S: Scalar> QuadratureScheme<S> {
    /// Tensor Gauss scheme with `resolution` radial nodes and as many angular
    /// nodes per coordinate.
    pub fn tensor(dim: usize, resolution: usize) -> Result<Self> {
        Self::tensor_with_angular(dim, resolution, resolution)
    }

    pub fn tensor_with_angular(dim: usize, resolution: usize, angular: usize) -> Result<Self> {
        if resolution < MIN_RESOLUTION {
            return invalid(format!(
                "quadrature resolution {resolution} is below the minimum {MIN_RESOLUTION}"
            ));
        }
        if angular < 1 || dim == 0 {
            return invalid("angular resolution and dimension must be positive");
        }
        let rule: Vec<(S, S)> =
            log_tan_rule(resolution)?.into_iter().map(|(x, w)| (S::lit(x), S::lit(w))).collect();
        Ok(Self {
            dim,
            descriptor: QuadratureDescriptor {
                kind: QuadratureKind::TensorGauss,
                resolution,
                angular,
                seed: 0,
                tolerance: f64::NAN,
            },
            radial: vec![rule; dim],
            samples: Vec::new(),
        })
    }

    /// Composite scheme concentrating nodes on the box `ranges` (one
    /// interval per coordinate) with panels no wider than `panels[k]`.
    pub fn adapted(ranges: &[(f64, f64)], panels: &[f64], angular: usize) -> Result<Self> {
        let dim = ranges.len();
        if dim == 0 || panels.len() != dim || angular < 1 {
            return invalid("adapted scheme needs one range and panel width per coordinate");
        }
        if ranges.iter().any(|&(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo < hi))
            || panels.iter().any(|&p| !(p > 0.0))
        {
            return invalid("adapted scheme ranges must be finite and nonempty");
        }
        let radial = ranges
            .iter()
            .zip(panels)
            .map(|(&(lo, hi), &p)| {
                Ok(composite_rule(lo, hi, p)?.into_iter().map(|(x, w)| (S::lit(x), S::lit(w))).collect())
            })
            .collect::<Result<Vec<Vec<(S, S)>>>>()?;
        let resolution = radial.iter().map(Vec::len).max().unwrap_or(0);
        Ok(Self {
            dim,
            descriptor: QuadratureDescriptor {
                kind: QuadratureKind::Adapted,
                resolution,
                angular,
                seed: 0,
                tolerance: f64::NAN,
            },
            radial,
            samples: Vec::new(),
        })
    }

    /// One-dimensional scheme on `[lo, hi]` (plus tails) that resolves the
    /// given spots: a graded square patch around each, graded panels around
    /// the patches, and the trapezoid rule in the angle elsewhere.
    pub fn refined(range: (f64, f64), panel: f64, angular: usize, spots: &[Spot]) -> Result<Self> {
        let (mut lo, mut hi) = range;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) || !(panel > 0.0) || angular < 1 {
            return invalid("refined scheme needs a finite range, a positive panel and angles");
        }
        if spots.iter().any(|s| !(s.x.is_finite() && s.theta.is_finite() && s.width > 0.0)) {
            return invalid("refinement spots must be finite with positive width");
        }
        let half: Vec<f64> = spots
            .iter()
            .enumerate()
            .map(|(i, s)| {
                spots
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, r)| 0.45 * (s.x - r.x).abs().max(circle_distance(s.theta, r.theta)))
                    .fold(PATCH_HALF, f64::min)
            })
            .collect();
        if half.iter().any(|&a| !(a > 0.0)) {
            return invalid("refinement spots must be distinct");
        }
        for (s, &a) in spots.iter().zip(&half) {
            lo = lo.min(s.x - 2.0 * a);
            hi = hi.max(s.x + 2.0 * a);
        }
        let g = gauss(PANEL_NODES)?;
        let anchors: Vec<(f64, f64)> =
            spots.iter().zip(&half).flat_map(|(s, &a)| [(s.x - a, a), (s.x + a, a)]).collect();
        let xb = graded_breaks(lo, hi, &anchors, panel);
        let spacing = 2.0 * PI / angular as f64;
        let cap = spacing * GRADED_SPACINGS;
        let trapezoid: Vec<(f64, f64)> = (0..angular).map(|j| (spacing * j as f64, spacing)).collect();
        let mut samples = Vec::new();
        let mut push = |x: f64, theta: f64, w: f64| {
            samples.push(Sample { x: vec![S::lit(x)], theta: vec![S::lit(theta)], weight: S::lit(w / PI) });
        };
        for (x, wx) in tail_rule(lo, hi)? {
            for &(t, wt) in &trapezoid {
                push(x, t, wx * wt);
            }
        }
        for p in xb.windows(2) {
            let (xa, xc) = (p[0], p[1]);
            let mid = 0.5 * (xa + xc);
            let mut cut = Vec::new();
            let mut grade = Vec::new();
            for (s, &a) in spots.iter().zip(&half) {
                let d = (s.x - mid).abs() - 0.5 * (xc - xa);
                if d < a * (1.0 - 1e-9) {
                    cut.push((s.theta, a));
                    grade.extend([(s.theta - a, a), (s.theta + a, a)]);
                } else if d < NEAR_SPACINGS * spacing {
                    grade.push((s.theta, d.max(a)));
                }
            }
            let angles = if grade.is_empty() {
                trapezoid.clone()
            } else {
                let shifted: Vec<(f64, f64)> = grade
                    .iter()
                    .flat_map(|&(t, h)| [(t - 2.0 * PI, h), (t, h), (t + 2.0 * PI, h)])
                    .collect();
                let tb = graded_breaks(0.0, 2.0 * PI, &shifted, cap);
                panel_rule(&tb, &g)
                    .into_iter()
                    .filter(|&(t, _)| cut.iter().all(|&(c, a)| circle_distance(t, c) > a))
                    .collect()
            };
            for (x, wx) in panel_rule(&[xa, xc], &g) {
                for &(t, wt) in &angles {
                    push(x, t, wx * wt);
                }
            }
        }
        for (s, &a) in spots.iter().zip(&half) {
            for (dx, dt, w) in graded_square(a, s.width, &g) {
                push(s.x + dx, s.theta + dt, w);
            }
        }
        Ok(Self {
            dim: 1,
            descriptor: QuadratureDescriptor {
                kind: QuadratureKind::Refined,
                resolution: samples.len(),
                angular,
                seed: 0,
                tolerance: f64::NAN,
            },
            radial: Vec::new(),
            samples,
        })
    }

    /// Seeded Monte Carlo scheme with `samples` points.
    pub fn monte_carlo(dim: usize, samples: usize, seed: u64) -> Result<Self> {
        if samples < MIN_RESOLUTION || dim == 0 {
            return invalid("Monte Carlo needs a positive dimension and at least 4 samples");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = (PI / 2.0).powi(dim as i32) * 2f64.powi(dim as i32) / samples as f64;
        let samples = (0..samples)
            .map(|_| {
                let mut x = Vec::with_capacity(dim);
                let mut theta = Vec::with_capacity(dim);
                let mut w = scale;
                for _ in 0..dim {
                    let t: f64 = rng.random_range(1e-12..(PI / 2.0 - 1e-12));
                    let (sn, cs) = t.sin_cos();
                    x.push(S::lit((sn / cs).ln()));
                    w /= sn * cs;
                    theta.push(S::lit(rng.random_range(0.0..2.0 * PI)));
                }
                Sample { x, theta, weight: S::lit(w) }
            })
            .collect::<Vec<_>>();
        Ok(Self {
            dim,
            descriptor: QuadratureDescriptor {
                kind: QuadratureKind::MonteCarlo,
                resolution: samples.len(),
                angular: 0,
                seed,
                tolerance: f64::NAN,
            },
            radial: Vec::new(),
            samples,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn descriptor(&self) -> &QuadratureDescriptor {
        &self.descriptor
    }

    pub(crate) fn set_tolerance(&mut self, tol: f64) {
        self.descriptor.tolerance = tol;
    }

    pub fn is_monte_carlo(&self) -> bool {
        self.descriptor.kind == QuadratureKind::MonteCarlo
    }

    fn explicit(&self) -> bool {
        !self.samples.is_empty()
    }

    pub fn node_count(&self, mode: NodeMode) -> usize {
        if self.explicit() {
            return self.samples.len();
        }
        let a = match mode {
            NodeMode::Invariant => 1,
            NodeMode::Full => self.descriptor.angular,
        };
        self.radial.iter().map(|r| r.len() * a).product()
    }

    /// The `idx`-th node in a fixed order (first coordinate slowest).
    pub fn node(&self, mode: NodeMode, idx: usize) -> Node<S> {
        let mut node = Node { x: vec![S::zero(); self.dim], theta: vec![S::zero(); self.dim], weight: S::zero() };
        self.fill_node(mode, idx, &mut node);
        node
    }

    /// [`node`](Self::node) into existing storage.
    pub fn fill_node(&self, mode: NodeMode, idx: usize, node: &mut Node<S>) {
        if self.explicit() {
            let s = &self.samples[idx];
            node.x.copy_from_slice(&s.x);
            match mode {
                NodeMode::Invariant => node.theta.iter_mut().for_each(|t| *t = S::zero()),
                NodeMode::Full => node.theta.copy_from_slice(&s.theta),
            }
            node.weight = s.weight;
            return;
        }
        let a = self.descriptor.angular;
        let mut weight = S::one();
        let mut rest = idx;
        for k in (0..self.dim).rev() {
            let r = self.radial[k].len();
            match mode {
                NodeMode::Invariant => {
                    let (xr, wr) = self.radial[k][rest % r];
                    rest /= r;
                    node.x[k] = xr;
                    node.theta[k] = S::zero();
                    weight *= wr * S::lit(2.0);
                }
                NodeMode::Full => {
                    let j = rest % (r * a);
                    rest /= r * a;
                    let (xr, wr) = self.radial[k][j / a];
                    node.x[k] = xr;
                    node.theta[k] = S::lit(2.0 * PI * (j % a) as f64 / a as f64);
                    weight *= wr * S::lit(2.0 / a as f64);
                }
            }
        }
        node.weight = weight;
    }
}

/// Builds the stock tensor scheme for a model and records the observed error
/// integrating the reference (monomial Fubini-Study) volume form.
pub fn build_quadrature<S: Scalar>(
    model: &PolarizedModel,
    resolution: usize,
    seed: u64,
) -> Result<QuadratureScheme<S>> {
    let mut quad = QuadratureScheme::<S>::tensor(model.dim(), resolution)?;
    quad.descriptor.seed = seed;
    let sections = enumerate_sections(model, 1)?;
    let reference = crate::kernel::SectionBasis::<S>::identity(&sections);
    let vol = crate::kernel::integrate(&reference, &quad, |_| S::one())?;
    let err = (vol.to_f64_lossy() - model.degree_volume()?).abs();
    quad.set_tolerance(err.max(f64::EPSILON * 16.0));
    Ok(quad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segment_counts() {
        let p1 = PolarizedModel::projective_line();
        let s = enumerate_sections(&p1, 2).unwrap();
        assert_eq!(s.exponents, vec![vec![0], vec![1], vec![2]]);
        assert_eq!(s.n_m(), 2);
    }

    #[test]
    fn ehrhart_segment() {
        let p1 = PolarizedModel::projective_line();
        for m in 1..=32 {
            assert_eq!(enumerate_sections(&p1, m).unwrap().len(), m as usize + 1);
        }
    }

    #[test]
    fn square_and_triangle() {
        let sq = PolarizedModel::product_of_lines();
        assert_eq!(enumerate_sections(&sq, 1).unwrap().len(), 4);
        let tri = PolarizedModel::stock(StockModel::ProjectivePlane);
        let s = enumerate_sections(&tri, 2).unwrap();
        // brute force {u >= 0, u1 + u2 <= 2}
        let mut brute = Vec::new();
        for a in 0..=2i64 {
            for b in 0..=2i64 {
                if a + b <= 2 {
                    brute.push(vec![a, b]);
                }
            }
        }
        assert_eq!(s.exponents, brute);
    }

    #[test]
    fn nonpositive_level_rejected() {
        let p1 = PolarizedModel::projective_line();
        assert!(matches!(enumerate_sections(&p1, 0), Err(Error::InvalidArgument(_))));
        assert!(enumerate_sections(&p1, -3).is_err());
    }

    #[test]
    fn volumes() {
        assert_eq!(PolarizedModel::projective_line().degree_volume().unwrap(), 1.0);
        assert_eq!(PolarizedModel::product_of_lines().degree_volume().unwrap(), 2.0);
        let tri = PolarizedModel::stock(StockModel::ProjectivePlane);
        assert_eq!(tri.degree_volume().unwrap(), 1.0);
        assert!(LatticePolytope::new(vec![vec![0, 0], vec![1, 1], vec![2, 2]]).is_err());
        assert!(LatticePolytope::new(vec![vec![3], vec![3]]).is_err());
    }

    #[test]
    fn hull_drops_interior_points() {
        let p = LatticePolytope::new(vec![
            vec![0, 0],
            vec![2, 0],
            vec![1, 1],
            vec![2, 2],
            vec![0, 2],
        ])
        .unwrap();
        assert_eq!(p.vertices().len(), 4);
        assert_eq!(p.normalized_volume(), 8);
    }

    #[test]
    fn monomial_values() {
        let p1 = PolarizedModel::projective_line();
        let s = enumerate_sections(&p1, 2).unwrap();
        let at = |z: f64| -> Vec<f64> {
            evaluate_sections(&s, &[Complex::new(z, 0.0)]).iter().map(|c| c.re).collect()
        };
        assert_eq!(at(0.0), vec![1.0, 0.0, 0.0]);
        assert_eq!(at(1.0), vec![1.0, 1.0, 1.0]);
        assert_eq!(at(2.0), vec![1.0, 2.0, 4.0]);
    }

    #[test]
    fn resolution_floor() {
        let p1 = PolarizedModel::projective_line();
        assert!(build_quadrature::<f64>(&p1, 3, 0).is_err());
    }

    #[test]
    fn fs_volume_closed_forms() {
        let p1 = PolarizedModel::projective_line();
        let q = build_quadrature::<f64>(&p1, 64, 0).unwrap();
        assert!(q.descriptor().tolerance < 1e-10);
        let sq = PolarizedModel::product_of_lines();
        let q = build_quadrature::<f64>(&sq, 32, 0).unwrap();
        assert!(q.descriptor().tolerance < 1e-8);
    }

    #[test]
    fn schemes_are_deterministic() {
        let a = QuadratureScheme::<f64>::monte_carlo(2, 100, 9).unwrap();
        let b = QuadratureScheme::<f64>::monte_carlo(2, 100, 9).unwrap();
        for i in 0..100 {
            assert_eq!(a.node(NodeMode::Full, i), b.node(NodeMode::Full, i));
        }
        let t1 = QuadratureScheme::<f64>::tensor(2, 8).unwrap();
        let t2 = QuadratureScheme::<f64>::tensor(2, 8).unwrap();
        assert_eq!(t1.node(NodeMode::Full, 77), t2.node(NodeMode::Full, 77));
    }
}
