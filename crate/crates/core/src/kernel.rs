//! Pointwise evaluation of algebraic potentials at quadrature nodes, and the
//! deterministic parallel integrator built on it.

use nalgebra::{Complex, DMatrix};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Node, NodeMode, QuadratureScheme, SectionSet, Spot};
use crate::linalg::CMat;
use crate::scalar::{abs2, factorial, Scalar};

const CHUNK: usize = 2048;

/// A basis `tau_j = sum_i C_ij e_i` of sections together with per-element
/// weights `exp(l_j)`; the potential is `F = sum_j exp(l_j) |tau_j|^2`.
#[derive(Debug, Clone)]
pub struct SectionBasis<S: Scalar> {
    pub(crate) dim: usize,
    pub(crate) level: usize,
    pub(crate) exps: Vec<Vec<S>>,
    /// Sparse columns of `C`.
    cols: Vec<Vec<(usize, Complex<S>)>>,
    log_weights: Vec<S>,
    pub(crate) d: Vec<S>,
    aligned: bool,
}

impl<S: Scalar> SectionBasis<S> {
    pub fn new(sections: &SectionSet, coeffs: &CMat<S>) -> Result<Self> {
        let k = sections.len();
        if coeffs.nrows() != k || coeffs.ncols() != k {
            return Err(Error::InvalidArgument(format!(
                "coefficient matrix is {}x{}, expected {k}x{k}",
                coeffs.nrows(),
                coeffs.ncols()
            )));
        }
        let cols: Vec<Vec<(usize, Complex<S>)>> = (0..k)
            .map(|j| {
                (0..k)
                    .filter(|&i| coeffs[(i, j)] != Complex::new(S::zero(), S::zero()))
                    .map(|i| (i, coeffs[(i, j)]))
                    .collect()
            })
            .collect();
        let aligned = cols.iter().all(|c| c.len() == 1);
        let exps = sections
            .exponents
            .iter()
            .map(|u| u.iter().map(|&a| S::from_i64_lossy(a)).collect())
            .collect();
        Ok(Self {
            dim: sections.dim,
            level: sections.level,
            exps,
            cols,
            log_weights: vec![S::zero(); k],
            d: vec![S::one(); k],
            aligned,
        })
    }

    pub fn identity(sections: &SectionSet) -> Self {
        Self::new(sections, &CMat::<S>::identity(sections.len(), sections.len()))
            .expect("square identity")
    }

    /// Replaces the element weights by `exp(l_j)`, normalized by the max.
    pub fn with_log_weights(mut self, log_weights: Vec<S>) -> Self {
        let top = log_weights.iter().copied().fold(S::min_value().unwrap(), S::max);
        self.d = log_weights.iter().map(|&l| (l - top).exp()).collect();
        self.log_weights = log_weights;
        self
    }

    pub fn log_weights(&self) -> &[S] {
        &self.log_weights
    }

    pub fn len(&self) -> usize {
        self.cols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cols.is_empty()
    }

    /// Each `tau_j` is a multiple of a single monomial.
    pub fn is_aligned(&self) -> bool {
        self.aligned
    }

    pub fn natural_mode(&self) -> NodeMode {
        if self.aligned {
            NodeMode::Invariant
        } else {
            NodeMode::Full
        }
    }
}

impl<S: Scalar> SectionBasis<S> {
    /// Bounding box (per log coordinate) of the vertices of the tropical
    /// envelope `max_i (2 u_i . x + a_i)`, `a_i = log sum_j D_j |C_ij|^2`,
    /// widened by `margin`. The volume form concentrates near these vertices.
    pub fn mass_box(&self, margin: f64) -> Vec<(f64, f64)> {
        let k = self.len();
        let mut acc = vec![0.0f64; k];
        for (j, col) in self.cols.iter().enumerate() {
            let dj = self.d[j].to_f64_lossy();
            for &(i, c) in col {
                acc[i] += dj * abs2(c).to_f64_lossy();
            }
        }
        let top = acc.iter().copied().fold(0.0, f64::max);
        let active: Vec<usize> = (0..k).filter(|&i| acc[i] > top * 1e-300 && acc[i] > 0.0).collect();
        let a: Vec<f64> = active.iter().map(|&i| acc[i].ln()).collect();
        let u: Vec<Vec<f64>> = active
            .iter()
            .map(|&i| self.exps[i].iter().map(|v| v.to_f64_lossy()).collect())
            .collect();
        let n = self.dim;
        let envelope = |x: &[f64]| {
            u.iter()
                .zip(&a)
                .map(|(ui, ai)| 2.0 * ui.iter().zip(x).map(|(p, q)| p * q).sum::<f64>() + ai)
                .fold(f64::NEG_INFINITY, f64::max)
        };
        let on_top = |i: usize, x: &[f64]| {
            let v = 2.0 * u[i].iter().zip(x).map(|(p, q)| p * q).sum::<f64>() + a[i];
            let e = envelope(x);
            v >= e - 1e-9 * (1.0 + e.abs())
        };
        let mut vertices: Vec<Vec<f64>> = Vec::new();
        let c = u.len();
        match n {
            1 => {
                for i in 0..c {
                    for j in i + 1..c {
                        let du = u[j][0] - u[i][0];
                        if du != 0.0 {
                            let x = [(a[i] - a[j]) / (2.0 * du)];
                            if on_top(i, &x) && on_top(j, &x) {
                                vertices.push(x.to_vec());
                            }
                        }
                    }
                }
            }
            2 => {
                for i in 0..c {
                    for j in i + 1..c {
                        for l in j + 1..c {
                            let (p, q) = ([u[j][0] - u[i][0], u[j][1] - u[i][1]], [u[l][0] - u[i][0], u[l][1] - u[i][1]]);
                            let det = p[0] * q[1] - p[1] * q[0];
                            if det == 0.0 {
                                continue;
                            }
                            let (r1, r2) = ((a[i] - a[j]) / 2.0, (a[i] - a[l]) / 2.0);
                            let x = [(r1 * q[1] - p[1] * r2) / det, (p[0] * r2 - r1 * q[0]) / det];
                            if on_top(i, &x) && on_top(j, &x) && on_top(l, &x) {
                                vertices.push(x.to_vec());
                            }
                        }
                    }
                }
            }
            _ => {}
        }
        if vertices.is_empty() {
            let spread = a.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                - a.iter().copied().fold(f64::INFINITY, f64::min);
            let r = if spread.is_finite() { spread / 2.0 } else { 0.0 };
            return vec![(-r - margin, r + margin); n];
        }
        (0..n)
            .map(|d| {
                let lo = vertices.iter().map(|v| v[d]).fold(f64::INFINITY, f64::min);
                let hi = vertices.iter().map(|v| v[d]).fold(f64::NEG_INFINITY, f64::max);
                (lo - margin, hi + margin)
            })
            .collect()
    }

    /// Widest exponent difference along each coordinate.
    pub fn exponent_widths(&self) -> Vec<f64> {
        (0..self.dim)
            .map(|d| {
                let vals = self.exps.iter().map(|u| u[d].to_f64_lossy());
                let hi = vals.clone().fold(f64::NEG_INFINITY, f64::max);
                let lo = vals.fold(f64::INFINITY, f64::min);
                (hi - lo).max(1.0)
            })
            .collect()
    }

    /// Composite scheme fitted to where this basis' volume form lives,
    /// keeping the angular resolution of `like`. Its radial resolution sets
    /// the panel width, `PANEL_REFERENCE / (resolution * w)` for exponent
    /// spread `w`. Monte Carlo schemes are returned unchanged.
    pub fn fitted_quadrature(&self, like: &QuadratureScheme<S>) -> Result<QuadratureScheme<S>> {
        if like.is_monte_carlo() {
            return Ok(like.clone());
        }
        let ranges = self.mass_box(MASS_MARGIN);
        let scale = PANEL_REFERENCE / like.descriptor().resolution.max(1) as f64;
        let panels: Vec<f64> = self.exponent_widths().iter().map(|w| scale / w).collect();
        let angular = like.descriptor().angular;
        if self.dim == 1 && !self.aligned {
            let spots = self.spots((RESOLVED_SPACINGS / angular as f64).max(RESOLVED_PANELS * panels[0]));
            if !spots.is_empty() {
                return QuadratureScheme::refined(ranges[0], panels[0], angular, &spots);
            }
        }
        QuadratureScheme::adapted(&ranges, &panels, angular)
    }

    /// In one dimension, the points near zeros of a dominant `tau_j` where
    /// the volume form concentrates on a relative scale below `limit`.
    pub fn spots(&self, limit: f64) -> Vec<Spot> {
        if self.dim != 1 {
            return Vec::new();
        }
        let exps: Vec<i64> = self.exps.iter().map(|u| u[0].to_f64_lossy().round() as i64).collect();
        let d: Vec<f64> = self.d.iter().map(|v| v.to_f64_lossy()).collect();
        let cols: Vec<Vec<(i64, Complex<f64>)>> = self
            .cols
            .iter()
            .map(|c| {
                c.iter()
                    .map(|&(i, v)| (exps[i], Complex::new(v.re.to_f64_lossy(), v.im.to_f64_lossy())))
                    .collect()
            })
            .collect();
        let value = |col: &[(i64, Complex<f64>)], z: Complex<f64>| -> (Complex<f64>, Complex<f64>) {
            col.iter().fold((Complex::new(0.0, 0.0), Complex::new(0.0, 0.0)), |(v, dv), &(u, c)| {
                let zu = z.powi(u as i32);
                (v + c * zu, dv + c * zu * (u as f64) / z)
            })
        };
        let mut found: Vec<Spot> = Vec::new();
        for (j, col) in cols.iter().enumerate() {
            if d[j] == 0.0 {
                continue;
            }
            for z in polynomial_roots(col) {
                if !(z.norm().ln().abs() < ROOT_RANGE) {
                    continue;
                }
                let rest: f64 = cols
                    .iter()
                    .enumerate()
                    .filter(|&(l, _)| l != j)
                    .map(|(l, c)| d[l] * value(c, z).0.norm_sqr())
                    .sum();
                let slope = d[j] * value(col, z).1.norm_sqr();
                let width = (rest / slope).sqrt() / z.norm();
                if width.is_finite() && width > 0.0 && width < limit {
                    found.push(Spot { x: z.norm().ln(), theta: z.arg(), width });
                }
            }
        }
        found.sort_by(|a, b| a.width.partial_cmp(&b.width).unwrap());
        let mut out: Vec<Spot> = Vec::new();
        for s in found {
            let clear = out.iter().all(|r| {
                let dist = (s.x - r.x).abs().max(circle_distance(s.theta, r.theta));
                dist > 2.0 * s.width
            });
            if clear {
                out.push(s);
            }
        }
        out
    }
}

/// Margin added around the tropical vertices in fitted schemes; the
/// logarithmic tails cover the rest.
const MASS_MARGIN: f64 = 2.0;
/// Radial resolution at which fitted panels are one over the exponent spread.
pub const PANEL_REFERENCE: f64 = 48.0;
/// Trapezoid spacings per unit of relative concentration width below which
/// the angular rule is not trusted.
const RESOLVED_SPACINGS: f64 = 30.0;
/// Concentration widths, in radial panels, below which Gauss-Legendre
/// panels are not trusted.
const RESOLVED_PANELS: f64 = 2.0;
/// Roots with `|log |z||` beyond this are ignored.
const ROOT_RANGE: f64 = 40.0;

fn circle_distance(a: f64, b: f64) -> f64 {
    let r = (a - b).rem_euclid(2.0 * std::f64::consts::PI);
    r.min(2.0 * std::f64::consts::PI - r)
}

/// Nonzero roots of `sum c z^u` from the companion matrix.
fn polynomial_roots(terms: &[(i64, Complex<f64>)]) -> Vec<Complex<f64>> {
    let live: Vec<(i64, Complex<f64>)> = terms.iter().copied().filter(|t| t.1.norm() > 0.0).collect();
    let (Some(lo), Some(hi)) = (live.iter().map(|t| t.0).min(), live.iter().map(|t| t.0).max()) else {
        return Vec::new();
    };
    let deg = (hi - lo) as usize;
    if deg == 0 {
        return Vec::new();
    }
    let mut a = vec![Complex::new(0.0, 0.0); deg + 1];
    for (u, c) in live {
        a[(u - lo) as usize] += c;
    }
    let lead = a[deg];
    let mut comp = DMatrix::<Complex<f64>>::zeros(deg, deg);
    for i in 1..deg {
        comp[(i, i - 1)] = Complex::new(1.0, 0.0);
    }
    for i in 0..deg {
        comp[(i, deg - 1)] = -a[i] / lead;
    }
    match nalgebra::linalg::Schur::try_new(comp, 1e-14, 10_000) {
        Some(schur) => schur.eigenvalues().map(|v| v.iter().copied().collect()).unwrap_or_default(),
        None => Vec::new(),
    }
}

/// Everything the integrands need at one node.
#[derive(Debug, Clone)]
pub struct NodeEval<S: Scalar> {
    pub x: Vec<S>,
    pub theta: Vec<S>,
    /// Shifted monomials `exp(u.x - s) e^{i u.theta}`.
    pub e: Vec<Complex<S>>,
    /// Log of the monomial shift `s`.
    pub shift: S,
    pub tau: Vec<Complex<S>>,
    /// `dtau[a][j] = d tau_j / d w_a`.
    pub dtau: Vec<Vec<Complex<S>>>,
    pub f: S,
    pub fa: Vec<Complex<S>>,
    /// `d dbar log F` in log coordinates (unnormalized curvature).
    pub phi: DMatrix<Complex<S>>,
    /// `det(phi / m)`.
    pub det_g: S,
    /// Quadrature weight times the volume density of `omega^n`.
    pub vol: S,
    d: Vec<S>,
    weights: Vec<S>,
    level: S,
    scratch: Vec<S>,
    v: Vec<Complex<S>>,
}

impl<S: Scalar> NodeEval<S> {
    pub fn new(basis: &SectionBasis<S>, node: &Node<S>) -> Self {
        let n = basis.dim;
        let k = basis.len();
        let zero = Complex::new(S::zero(), S::zero());
        let mut ev = Self {
            x: vec![S::zero(); n],
            theta: vec![S::zero(); n],
            e: vec![zero; k],
            shift: S::zero(),
            tau: vec![zero; k],
            dtau: vec![vec![zero; k]; n],
            f: S::zero(),
            fa: vec![zero; n],
            phi: DMatrix::from_element(n, n, zero),
            det_g: S::zero(),
            vol: S::zero(),
            d: basis.d.clone(),
            weights: vec![S::zero(); k],
            level: S::from_usize_lossy(basis.level),
            scratch: vec![S::zero(); k],
            v: vec![zero; n],
        };
        ev.update(basis, node);
        ev
    }

    /// Re-evaluates at another node of the same basis, reusing storage.
    pub fn update(&mut self, basis: &SectionBasis<S>, node: &Node<S>) {
        let n = basis.dim;
        let k = basis.len();
        self.x.copy_from_slice(&node.x);
        self.theta.copy_from_slice(&node.theta);
        let s = &mut self.scratch;
        for (si, u) in s.iter_mut().zip(&basis.exps) {
            *si = u.iter().zip(&node.x).fold(S::zero(), |acc, (&a, &b)| acc + a * b);
        }
        let shift = s.iter().copied().fold(S::min_value().unwrap(), S::max);
        self.shift = shift;
        for ((ei, u), &si) in self.e.iter_mut().zip(&basis.exps).zip(s.iter()) {
            let ph = u.iter().zip(&node.theta).fold(S::zero(), |acc, (&a, &b)| acc + a * b);
            let r = (si - shift).exp();
            *ei = if ph == S::zero() { Complex::new(r, S::zero()) } else { Complex::new(r * ph.cos(), r * ph.sin()) };
        }
        let zero = Complex::new(S::zero(), S::zero());
        let (tau, dtau, e) = (&mut self.tau, &mut self.dtau, &self.e);
        tau.iter_mut().for_each(|t| *t = zero);
        dtau.iter_mut().for_each(|row| row.iter_mut().for_each(|t| *t = zero));
        for (j, col) in basis.cols.iter().enumerate() {
            for &(i, c) in col {
                let v = c * e[i];
                tau[j] += v;
                for a in 0..n {
                    dtau[a][j] += v * basis.exps[i][a];
                }
            }
        }
        let d = &basis.d;
        let mut f = S::zero();
        self.fa.iter_mut().for_each(|t| *t = zero);
        for j in 0..k {
            f += d[j] * abs2(tau[j]);
            for a in 0..n {
                self.fa[a] += tau[j].conj() * dtau[a][j] * d[j];
            }
        }
        self.f = f;
        for (w, (t, &dj)) in self.weights.iter_mut().zip(tau.iter().zip(d)) {
            *w = dj * abs2(*t) / f;
        }
        let mu: &mut Vec<Complex<S>> = &mut self.v;
        for (m, &c) in mu.iter_mut().zip(&self.fa) {
            *m = c / f;
        }
        self.phi.fill(zero);
        let mut v = [zero; 4];
        let mut big = if n > 4 { vec![zero; n] } else { Vec::new() };
        for j in 0..k {
            let dj = d[j] / f;
            if dj == S::zero() {
                continue;
            }
            let v: &mut [Complex<S>] = if n > 4 { &mut big } else { &mut v[..n] };
            for a in 0..n {
                v[a] = dtau[a][j] - tau[j] * mu[a];
            }
            for a in 0..n {
                for b in 0..n {
                    self.phi[(a, b)] += v[a] * v[b].conj() * dj;
                }
            }
        }
        self.det_g = small_det(&self.phi).re / self.level.powi(n as i32);
        self.vol = node.weight * factorial::<S>(n) * self.det_g;
    }

    /// Weights `w_j = D_j |tau_j|^2 / F`, summing to one.
    pub fn element_weights(&self) -> &[S] {
        &self.weights
    }

    /// `Q = sum_j w_j gamma_j`.
    pub fn mean(&self, gamma: &[S]) -> S {
        self.weights.iter().zip(gamma).fold(S::zero(), |acc, (&w, &g)| acc + w * g)
    }

    /// Weighted variance of `gamma` under `w`.
    pub fn variance(&self, gamma: &[S]) -> S {
        let q = self.mean(gamma);
        self.weights.iter().zip(gamma).fold(S::zero(), |acc, (&w, &g)| acc + w * (g - q) * (g - q))
    }

    /// `d Q / d w_a`.
    pub fn grad_mean(&self, gamma: &[S]) -> Vec<Complex<S>> {
        let n = self.fa.len();
        let q = self.mean(gamma);
        (0..n)
            .map(|a| {
                let na = (0..self.tau.len()).fold(Complex::new(S::zero(), S::zero()), |acc, j| {
                    acc + self.tau[j].conj() * self.dtau[a][j] * (self.d[j] * gamma[j])
                });
                na / self.f - self.fa[a] * (q / self.f)
            })
            .collect()
    }

    /// `|v|^2` in the dual of the curvature form `phi`.
    pub fn dual_norm_phi(&self, v: &[Complex<S>]) -> S {
        let inv = small_inverse(&self.phi);
        let n = v.len();
        let mut acc = Complex::new(S::zero(), S::zero());
        for a in 0..n {
            for b in 0..n {
                acc += v[a].conj() * inv[(a, b)] * v[b];
            }
        }
        acc.re
    }

    /// `phi` recomputed in the cancellation-free pairwise form.
    pub fn stable_phi(&self) -> DMatrix<Complex<S>> {
        pairwise_phi(&self.tau, &self.dtau, &self.d, self.f)
    }

    /// `phi^{-1}`.
    pub fn phi_inverse(&self) -> DMatrix<Complex<S>> {
        small_inverse(&self.phi)
    }

    /// Moment map `mu_a = Re(F_a) / (m F)`, a point of `P`.
    pub fn moment(&self) -> Vec<S> {
        self.fa.iter().map(|c| c.re / (self.level * self.f)).collect()
    }

    /// `log F` including the monomial shift.
    pub fn log_f(&self) -> S {
        self.f.ln() + S::lit(2.0) * self.shift
    }
}

/// `sum_{j<k} D_j D_k v_jk v_jk^* / F^2` with `v_jk = tau_k dtau_j - tau_j dtau_k`.
fn pairwise_phi<S: Scalar>(tau: &[Complex<S>], dtau: &[Vec<Complex<S>>], d: &[S], f: S) -> DMatrix<Complex<S>> {
    let n = dtau.len();
    let k = tau.len();
    let zero = Complex::new(S::zero(), S::zero());
    let mut out = DMatrix::from_element(n, n, zero);
    let mut v = vec![zero; n];
    for j in 0..k {
        for l in j + 1..k {
            let dd = d[j] * d[l];
            if dd == S::zero() {
                continue;
            }
            for (a, va) in v.iter_mut().enumerate() {
                *va = tau[l] * dtau[a][j] - tau[j] * dtau[a][l];
            }
            for a in 0..n {
                for b in 0..n {
                    out[(a, b)] += v[a] * v[b].conj() * dd;
                }
            }
        }
    }
    let f2 = f * f;
    out.map(|z| z / f2)
}

fn small_det<S: Scalar>(m: &DMatrix<Complex<S>>) -> Complex<S> {
    match m.nrows() {
        1 => m[(0, 0)],
        2 => m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)],
        _ => m.clone().determinant(),
    }
}

fn small_inverse<S: Scalar>(m: &DMatrix<Complex<S>>) -> DMatrix<Complex<S>> {
    match m.nrows() {
        1 => DMatrix::from_element(1, 1, Complex::new(S::one(), S::zero()) / m[(0, 0)]),
        2 => {
            let det = small_det(m);
            DMatrix::from_row_slice(
                2,
                2,
                &[m[(1, 1)] / det, -m[(0, 1)] / det, -m[(1, 0)] / det, m[(0, 0)] / det],
            )
        }
        _ => m
            .clone()
            .try_inverse()
            .unwrap_or_else(|| DMatrix::from_element(m.nrows(), m.ncols(), Complex::new(S::lit(f64::NAN), S::zero()))),
    }
}

/// `sum_nodes vol * f(eval)` for vector-valued integrands, using the basis'
/// natural node mode.
pub fn integrate_vec<S, F>(
    basis: &SectionBasis<S>,
    quad: &QuadratureScheme<S>,
    len: usize,
    f: F,
) -> Result<Vec<S>>
where
    S: Scalar,
    F: Fn(&NodeEval<S>, &mut [S]) + Sync,
{
    integrate_vec_mode(basis, quad, basis.natural_mode(), len, f)
}

pub fn integrate_vec_mode<S, F>(
    basis: &SectionBasis<S>,
    quad: &QuadratureScheme<S>,
    mode: NodeMode,
    len: usize,
    f: F,
) -> Result<Vec<S>>
where
    S: Scalar,
    F: Fn(&NodeEval<S>, &mut [S]) + Sync,
{
    if quad.dim() != basis.dim {
        return Err(Error::InvalidArgument("quadrature dimension mismatch".into()));
    }
    let total = quad.node_count(mode);
    let chunks = total.div_ceil(CHUNK);
    let floor = -S::eps().sqrt();
    let partials: Vec<Result<Vec<S>>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![S::zero(); len];
            let mut buf = vec![S::zero(); len];
            let first = c * CHUNK;
            let mut node = quad.node(mode, first);
            let mut ev = NodeEval::new(basis, &node);
            for idx in first..((c + 1) * CHUNK).min(total) {
                if idx > first {
                    quad.fill_node(mode, idx, &mut node);
                    ev.update(basis, &node);
                }
                if !ev.det_g.is_finite() || ev.det_g < floor {
                    return Err(Error::SingularMetric(format!(
                        "volume form is not positive at node {idx} (det = {})",
                        ev.det_g.to_f64_lossy()
                    )));
                }
                if ev.det_g <= S::zero() {
                    ev.det_g = S::zero();
                    continue;
                }
                buf.iter_mut().for_each(|b| *b = S::zero());
                f(&ev, &mut buf);
                for (a, &b) in acc.iter_mut().zip(&buf) {
                    *a += ev.vol * b;
                }
            }
            Ok(acc)
        })
        .collect();
    let mut out = vec![S::zero(); len];
    for p in partials {
        let p = p?;
        for (o, v) in out.iter_mut().zip(p) {
            *o += v;
        }
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Overflow("non-finite quadrature sum".into()));
    }
    Ok(out)
}

/// Scalar version of [`integrate_vec`].
pub fn integrate<S, F>(basis: &SectionBasis<S>, quad: &QuadratureScheme<S>, f: F) -> Result<S>
where
    S: Scalar,
    F: Fn(&NodeEval<S>) -> S + Sync,
{
    Ok(integrate_vec(basis, quad, 1, |ev, out| out[0] = f(ev))?[0])
}
