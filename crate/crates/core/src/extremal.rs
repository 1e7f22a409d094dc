//! Scalar curvature, the Futaki character on the big torus, the extremal
//! vector field, `alpha_0`, the `Z` density, and Bergman densities of a fixed
//! Hermitian metric at other levels.
//!
//! Torus generators act on `z^u` with weights `u`; the holomorphy potential of
//! `Y` is normalized by the lattice barycenter of `mP`, which is the
//! linearization whose weights on `V_m` are traceless.

use nalgebra::{Complex, DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{enumerate_sections, Node, NodeMode, PolarizedModel, QuadratureScheme};
use crate::kernel::{integrate_vec_mode, NodeEval, SectionBasis};
use crate::linalg::{self, CMat};
use crate::scalar::{factorial, Scalar};
use crate::sections::{gram, AlgebraicMetric, DensityProfile};
use crate::weights::{IndexVector, WeightBlocks};

/// Relative fit residual above which a Lu fit is flagged.
pub const LU_FLAG: f64 = 0.05;

/// Largest first-order residual coefficient accepted by [`order0_consistency`].
pub const ORDER0_TOL: f64 = 1e-4;

/// Scalar curvature sampled at the natural nodes of a quadrature scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureField<S> {
    pub x: Vec<Vec<S>>,
    pub theta: Vec<Vec<S>>,
    pub sigma: Vec<S>,
    /// Moment map at each node.
    pub moment: Vec<Vec<S>>,
    /// Quadrature weight times the density of `omega^n`.
    pub weights: Vec<S>,
    /// `int sigma omega^n`.
    pub integral: S,
    /// `int omega^n`.
    pub volume: S,
    pub mean: S,
}

fn log_det<S: Scalar>(basis: &SectionBasis<S>, x: &[S], theta: &[S]) -> Result<S> {
    let node = Node { x: x.to_vec(), theta: theta.to_vec(), weight: S::one() };
    let ev = NodeEval::new(basis, &node);
    let level = S::from_usize_lossy(basis.level);
    let phi = ev.stable_phi().map(|z| z / level);
    let det = phi.determinant().re;
    if !(det > S::zero()) || !det.is_finite() {
        return Err(Error::SingularMetric("metric is not positive at a curvature node".into()));
    }
    Ok(det.ln())
}

/// Hessian of `L` in the `2n` real variables `(x, theta)`, or `(x)` alone for
/// invariant states, by Richardson-extrapolated central differences.
fn real_hessian<S: Scalar>(l: &dyn Fn(&[S]) -> Result<S>, p: &[S], h: S) -> Result<DMatrix<S>> {
    let d = p.len();
    let l0 = l(p)?;
    let at = |shift: &[(usize, S)]| -> Result<S> {
        let mut q = p.to_vec();
        for &(i, s) in shift {
            q[i] += s;
        }
        l(&q)
    };
    let two = S::lit(2.0);
    let four = S::lit(4.0);
    let mut out = DMatrix::zeros(d, d);
    for i in 0..d {
        let est = |h: S| -> Result<S> { Ok((at(&[(i, h)])? - two * l0 + at(&[(i, -h)])?) / (h * h)) };
        let (a, b) = (est(h)?, est(h / two)?);
        out[(i, i)] = (four * b - a) / S::lit(3.0);
        for j in i + 1..d {
            let est = |h: S| -> Result<S> {
                Ok((at(&[(i, h), (j, h)])? - at(&[(i, h), (j, -h)])? - at(&[(i, -h), (j, h)])?
                    + at(&[(i, -h), (j, -h)])?)
                    / (four * h * h))
            };
            let (a, b) = (est(h)?, est(h / two)?);
            let v = (four * b - a) / S::lit(3.0);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Ok(out)
}

/// `sigma = -tr(g^{-1} d dbar log det g)` at one point.
fn sigma_at<S: Scalar>(basis: &SectionBasis<S>, ev: &NodeEval<S>) -> Result<S> {
    let n = ev.x.len();
    let level = S::from_usize_lossy(basis.level);
    let g = ev.stable_phi().map(|z| z / level);
    let det = g.determinant().re;
    let small = det / g.trace().re.powi(n as i32 - 1);
    let l0 = det.ln().abs().max(S::one());
    let sixth = S::lit(1.0 / 6.0);
    let h = S::eps()
        .powf(sixth)
        .max((S::eps() * l0 / small).powf(sixth))
        .min(S::lit(0.1));
    let quarter = S::lit(0.25);
    let mut cx = DMatrix::from_element(n, n, Complex::new(S::zero(), S::zero()));
    if basis.is_aligned() {
        let theta = ev.theta.clone();
        let l = |x: &[S]| log_det(basis, x, &theta);
        let hx = real_hessian(&l, &ev.x, h)?;
        for a in 0..n {
            for b in 0..n {
                cx[(a, b)] = Complex::new(quarter * hx[(a, b)], S::zero());
            }
        }
    } else {
        let l = |p: &[S]| log_det(basis, &p[..n], &p[n..]);
        let mut p = ev.x.clone();
        p.extend_from_slice(&ev.theta);
        let hr = real_hessian(&l, &p, h)?;
        for a in 0..n {
            for b in 0..n {
                let re = hr[(a, b)] + hr[(n + a, n + b)];
                let im = hr[(a, n + b)] - hr[(n + a, b)];
                cx[(a, b)] = Complex::new(quarter * re, quarter * im);
            }
        }
    }
    let ginv = g
        .try_inverse()
        .ok_or_else(|| Error::SingularMetric("metric is degenerate at a curvature node".into()))?;
    Ok(-(ginv * cx).trace().re)
}

/// Scalar curvature of `omega_B`, normalized so that `rho_m = 1 + (sigma/2)/m + ...`.
pub fn scalar_curvature<S: Scalar>(state: &AlgebraicMetric<S>, quad: &QuadratureScheme<S>) -> Result<CurvatureField<S>> {
    let basis = state.section_basis()?;
    if quad.dim() != state.dim() {
        return Err(Error::InvalidArgument("quadrature dimension mismatch".into()));
    }
    let mode = basis.natural_mode();
    let count = quad.node_count(mode);
    let rows: Vec<Result<Option<(NodeEval<S>, S)>>> = (0..count)
        .into_par_iter()
        .map(|idx| {
            let ev = NodeEval::new(&basis, &quad.node(mode, idx));
            if !ev.det_g.is_finite() || ev.det_g < -S::eps().sqrt() {
                return Err(Error::SingularMetric(format!("volume form is not positive at node {idx}")));
            }
            if ev.det_g <= S::zero() {
                return Ok(None);
            }
            let s = sigma_at(&basis, &ev)?;
            Ok(Some((ev, s)))
        })
        .collect();
    let mut field = CurvatureField {
        x: Vec::new(),
        theta: Vec::new(),
        sigma: Vec::new(),
        moment: Vec::new(),
        weights: Vec::new(),
        integral: S::zero(),
        volume: S::zero(),
        mean: S::zero(),
    };
    for row in rows {
        let Some((ev, s)) = row? else { continue };
        field.integral += ev.vol * s;
        field.volume += ev.vol;
        field.moment.push(ev.moment());
        field.weights.push(ev.vol);
        field.sigma.push(s);
        field.x.push(ev.x);
        field.theta.push(ev.theta);
    }
    field.mean = field.integral / field.volume;
    Ok(field)
}

/// Lattice barycenter of the sections divided by the level.
fn linearization_center<S: Scalar>(state: &AlgebraicMetric<S>) -> Vec<S> {
    let s = state.sections();
    let k = S::from_usize_lossy(s.len()) * S::from_usize_lossy(s.level);
    (0..s.dim)
        .map(|a| s.exponents.iter().fold(S::zero(), |acc, u| acc + S::from_i64_lossy(u[a])) / k)
        .collect()
}

/// `F(Y) = (1/2pi) int h^{-1}(sqrt(-1) Y h) omega^n` with the potential
/// `-2 <mu - c, Y>`.
pub fn futaki<S: Scalar>(state: &AlgebraicMetric<S>, y: &[S], quad: &QuadratureScheme<S>) -> Result<S> {
    if y.len() != state.dim() {
        return Err(Error::InvalidArgument("direction has the wrong dimension".into()));
    }
    let basis = state.section_basis()?;
    let c = linearization_center(state);
    let v = integrate_vec_mode(&basis, quad, basis.natural_mode(), 1, |ev, out| {
        out[0] = ev.moment().iter().zip(&c).zip(y).fold(S::zero(), |acc, ((&m, &c), &y)| acc + (m - c) * y);
    })?[0];
    Ok(-v / S::pi())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremalData<S> {
    /// `pr(sigma) = projection[0] + sum_a projection[a + 1] mu_a`.
    pub projection: Vec<S>,
    /// Components of the extremal vector field on the torus generators.
    pub field: Vec<S>,
    /// `F` on each torus generator.
    pub futaki: Vec<S>,
    pub alpha0: S,
    /// `int sigma omega^n`.
    pub total_curvature: S,
    pub volume: S,
}

impl<S: Scalar> ExtremalData<S> {
    pub fn field_norm(&self) -> S {
        self.field.iter().fold(S::zero(), |a, &v| a + v * v).sqrt()
    }
}

fn require_invariant<S: Scalar>(state: &AlgebraicMetric<S>) -> Result<()> {
    if !linalg::is_diagonal(state.form()) {
        return Err(Error::Precondition("state is not invariant under the big torus".into()));
    }
    Ok(())
}

/// Projects `sigma` onto affine functions of the moment map and assembles
/// the extremal data.
pub fn extremal_field<S: Scalar>(state: &AlgebraicMetric<S>, quad: &QuadratureScheme<S>) -> Result<ExtremalData<S>> {
    require_invariant(state)?;
    let curv = scalar_curvature(state, quad)?;
    extremal_from_curvature(state, &curv, quad)
}

/// [`extremal_field`] for a precomputed curvature field.
pub fn extremal_from_curvature<S: Scalar>(
    state: &AlgebraicMetric<S>,
    curv: &CurvatureField<S>,
    quad: &QuadratureScheme<S>,
) -> Result<ExtremalData<S>> {
    require_invariant(state)?;
    let n = state.dim();
    let mut a = DMatrix::<S>::zeros(n + 1, n + 1);
    let mut rhs = DVector::<S>::zeros(n + 1);
    let mut psi = vec![S::zero(); n + 1];
    for ((mu, &w), &s) in curv.moment.iter().zip(&curv.weights).zip(&curv.sigma) {
        psi[0] = S::one();
        psi[1..].copy_from_slice(mu);
        for i in 0..=n {
            rhs[i] += w * s * psi[i];
            for j in 0..=n {
                a[(i, j)] += w * psi[i] * psi[j];
            }
        }
    }
    let coef = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::SingularMetric("Gram matrix of holomorphy potentials is singular".into()))?
        .solve(&rhs);
    let projection: Vec<S> = coef.iter().copied().collect();
    let field: Vec<S> = projection[1..].iter().map(|&v| v / S::lit(2.0)).collect();
    let futaki_values = (0..n)
        .map(|a| {
            let mut y = vec![S::zero(); n];
            y[a] = S::one();
            futaki(state, &y, quad)
        })
        .collect::<Result<Vec<_>>>()?;
    let f_v = futaki_values.iter().zip(&field).fold(S::zero(), |acc, (&f, &v)| acc + f * v);
    let alpha0 = (curv.integral + S::two_pi() * f_v) / (S::lit(2.0) * state.volume());
    Ok(ExtremalData {
        projection,
        field,
        futaki: futaki_values,
        alpha0,
        total_curvature: curv.integral,
        volume: curv.volume,
    })
}

/// `alpha_0 = (int sigma omega^n + 2 pi F(V)) / (2 Vol)`.
pub fn alpha0<S: Scalar>(state: &AlgebraicMetric<S>, quad: &QuadratureScheme<S>) -> Result<S> {
    Ok(extremal_field(state, quad)?.alpha0)
}

/// `Z(q, omega; Y) = (n!/m^n) sum_k exp(-<chi_k, Y>) b_k sum_i |s_{k,i}|^2`
/// for the admissible normal basis of index `b`, evaluated without pulling
/// back by `exp Y`. At `Y = 0` and `b = 1` this is the Bergman density.
pub fn z_profile<S: Scalar>(
    state: &AlgebraicMetric<S>,
    blocks: &WeightBlocks,
    y: &[S],
    b: &IndexVector<S>,
    quad: &QuadratureScheme<S>,
) -> Result<DensityProfile<S>> {
    let b = IndexVector::new(b.values.clone(), blocks)?;
    if blocks.total() != state.len() {
        return Err(Error::InvalidArgument("blocks do not match the section count".into()));
    }
    if !blocks.is_block_diagonal(state.form(), S::zero()) {
        return Err(Error::Precondition("state is not invariant under the torus".into()));
    }
    let g = gram(state, quad)?;
    let inv = linalg::hermitize(&linalg::structured_inverse(&g.matrix, "Gram matrix")?);
    let mut factor = vec![S::one(); state.len()];
    for k in 0..blocks.count() {
        let chi = blocks.character(k);
        if chi.len() != y.len() {
            return Err(Error::InvalidArgument("direction does not match the torus rank".into()));
        }
        let pairing = chi.iter().zip(y).fold(S::zero(), |acc, (&c, &v)| acc + S::from_i64_lossy(c) * v);
        let f = (-pairing).exp() * b.values[k];
        for &i in blocks.members(k) {
            factor[i] = f;
        }
    }
    let p = CMat::from_fn(inv.nrows(), inv.ncols(), |i, j| {
        if factor[i] == S::one() {
            inv[(i, j)]
        } else {
            inv[(i, j)] * factor[i]
        }
    });
    let n = state.dim();
    let scale = factorial::<S>(n) / S::from_usize_lossy(state.level()).powi(n as i32);
    crate::sections::weighted_profile(state, quad, &p, scale, S::one())
}

/// Radial scheme fine enough for level-`level` sections of the metric.
fn level_quadrature<S: Scalar>(basis: &SectionBasis<S>, like: &QuadratureScheme<S>, level: usize) -> Result<QuadratureScheme<S>> {
    if like.is_monte_carlo() {
        return Ok(like.clone());
    }
    let ranges = basis.mass_box(4.0);
    let root = 1.5 * (level as f64).sqrt();
    let panels: Vec<f64> = basis.exponent_widths().iter().map(|w| 1.0 / w.max(root)).collect();
    QuadratureScheme::adapted(&ranges, &panels, like.descriptor().angular.max(2 * level + 2))
}

/// Bergman density of `h^level`, where `h = F_B^{-1/m}` is the metric of the
/// state, sampled at the state's natural nodes of `probe`.
pub fn bergman_density_at_level<S: Scalar>(
    model: &PolarizedModel,
    state: &AlgebraicMetric<S>,
    level: usize,
    probe: &QuadratureScheme<S>,
) -> Result<DensityProfile<S>> {
    let basis = state.section_basis()?;
    let sections = enumerate_sections(model, level as i64)?;
    if sections.dim != state.dim() {
        return Err(Error::InvalidArgument("model does not match the state".into()));
    }
    let ratio = S::from_usize_lossy(level) / S::from_usize_lossy(state.level());
    let exps: Vec<Vec<S>> = sections.exponents.iter().map(|u| u.iter().map(|&v| S::from_i64_lossy(v)).collect()).collect();
    let k = exps.len();
    let two = S::lit(2.0);
    let fine = level_quadrature(&basis, probe, level)?;
    let aligned = basis.is_aligned();
    let amplitude = |ev: &NodeEval<S>, u: &[S]| -> Complex<S> {
        let (mut re, mut ph) = (S::zero(), S::zero());
        for a in 0..u.len() {
            re += u[a] * ev.x[a];
            ph += u[a] * ev.theta[a];
        }
        let r = (re - ratio * ev.log_f() / two).exp();
        Complex::new(r * ph.cos(), r * ph.sin())
    };
    let ginv: CMat<S> = if aligned {
        let diag = integrate_vec_mode(&basis, &fine, NodeMode::Invariant, k, |ev, out| {
            for (o, u) in out.iter_mut().zip(&exps) {
                let (mut s, _) = (S::zero(), ());
                for a in 0..u.len() {
                    s += u[a] * ev.x[a];
                }
                *o = (two * s - ratio * ev.log_f()).exp();
            }
        })?;
        CMat::from_fn(k, k, |i, j| if i == j { Complex::new(S::one() / diag[i], S::zero()) } else { Complex::new(S::zero(), S::zero()) })
    } else {
        let flat = integrate_vec_mode(&basis, &fine, NodeMode::Full, 2 * k * k, |ev, out| {
            let e: Vec<Complex<S>> = exps.iter().map(|u| amplitude(ev, u)).collect();
            for i in 0..k {
                for j in 0..k {
                    let z = e[i] * e[j].conj();
                    out[2 * (i * k + j)] = z.re;
                    out[2 * (i * k + j) + 1] = z.im;
                }
            }
        })?;
        let g = CMat::from_fn(k, k, |i, j| Complex::new(flat[2 * (i * k + j)], flat[2 * (i * k + j) + 1]));
        linalg::hermitize(&linalg::structured_inverse(&linalg::hermitize(&g), "level Gram matrix")?)
    };
    let n = state.dim();
    let scale = factorial::<S>(n) / S::from_usize_lossy(level).powi(n as i32);
    let mode = basis.natural_mode();
    let count = probe.node_count(mode);
    let rows: Vec<(Vec<S>, S)> = (0..count)
        .into_par_iter()
        .map(|idx| {
            let ev = NodeEval::new(&basis, &probe.node(mode, idx));
            let e: Vec<Complex<S>> = exps.iter().map(|u| amplitude(&ev, u)).collect();
            let mut acc = Complex::new(S::zero(), S::zero());
            for i in 0..k {
                if aligned {
                    acc += ginv[(i, i)] * e[i].conj() * e[i];
                } else {
                    for j in 0..k {
                        acc += e[i].conj() * ginv[(i, j)] * e[j];
                    }
                }
            }
            (ev.x, scale * acc.re)
        })
        .collect();
    let target = S::one();
    let mut sup = S::zero();
    let (mut x, mut values) = (Vec::with_capacity(count), Vec::with_capacity(count));
    for (xi, v) in rows {
        sup = sup.max((v - target).abs());
        x.push(xi);
        values.push(v);
    }
    let integral = scale * S::from_usize_lossy(k);
    Ok(DensityProfile { x, values, target, sup_residual: sup, integral })
}

/// Pointwise fit of `m (rho_m - 1) = a_1 + a_2 / m`.
#[derive(Debug, Clone, PartialEq)]
pub struct LuFit<S> {
    pub levels: Vec<usize>,
    pub x: Vec<Vec<S>>,
    pub a1: Vec<S>,
    /// RMS residual of the fit at each node.
    pub residual: Vec<S>,
    pub max_residual: S,
    pub flagged: bool,
}

fn linear_fit<S: Scalar>(q: &[S], y: &[S]) -> (S, S, S) {
    let n = S::from_usize_lossy(q.len());
    let mq = q.iter().fold(S::zero(), |a, &v| a + v) / n;
    let my = y.iter().fold(S::zero(), |a, &v| a + v) / n;
    let (mut sxy, mut sxx) = (S::zero(), S::zero());
    for (&a, &b) in q.iter().zip(y) {
        sxy += (a - mq) * (b - my);
        sxx += (a - mq) * (a - mq);
    }
    let slope = sxy / sxx;
    let icpt = my - slope * mq;
    let rss = q.iter().zip(y).fold(S::zero(), |acc, (&a, &b)| {
        let r = b - icpt - slope * a;
        acc + r * r
    });
    (icpt, slope, (rss / n).sqrt())
}

pub fn lu_fit<S: Scalar>(
    model: &PolarizedModel,
    state: &AlgebraicMetric<S>,
    levels: &[usize],
    probe: &QuadratureScheme<S>,
) -> Result<LuFit<S>> {
    let mut distinct = levels.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 3 || distinct[0] == 0 {
        return Err(Error::InvalidArgument("a Lu fit needs at least three positive levels".into()));
    }
    let profiles = distinct
        .iter()
        .map(|&m| bergman_density_at_level(model, state, m, probe))
        .collect::<Result<Vec<_>>>()?;
    let q: Vec<S> = distinct.iter().map(|&m| S::one() / S::from_usize_lossy(m)).collect();
    let nodes = profiles[0].values.len();
    let (mut a1, mut residual) = (Vec::with_capacity(nodes), Vec::with_capacity(nodes));
    let mut worst = S::zero();
    for i in 0..nodes {
        let y: Vec<S> = profiles
            .iter()
            .zip(&distinct)
            .map(|(p, &m)| S::from_usize_lossy(m) * (p.values[i] - S::one()))
            .collect();
        let (icpt, _, rms) = linear_fit(&q, &y);
        worst = worst.max(rms / icpt.abs().max(S::one()));
        a1.push(icpt);
        residual.push(rms);
    }
    Ok(LuFit {
        levels: distinct,
        x: profiles[0].x.clone(),
        a1,
        residual,
        max_residual: worst,
        flagged: worst > S::lit(LU_FLAG),
    })
}

/// Order-zero check of `rho_m ~ (1 + alpha_0 q)(1 + (sigma/2 - alpha_0) q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Order0Report<S> {
    pub levels: Vec<usize>,
    pub alpha0: S,
    /// `sup |rho_m - C_{q,0} (1 + (sigma/2 - alpha_0) q)|` per level.
    pub residuals: Vec<S>,
    /// `residual / q^2` per level.
    pub scaled: Vec<S>,
    /// `|int omega^n - Vol| / Vol`.
    pub normalization_defect: S,
    /// Fit `residual = c q^2 + d q`: the `q^2` coefficient `c`.
    pub q2_coefficient: S,
    /// The first-order coefficient `d`, zero when the identity holds.
    pub q1_coefficient: S,
    /// `|d|` below [`ORDER0_TOL`] and `c` finite.
    pub bounded: bool,
    pub flagged: bool,
}

pub fn order0_consistency<S: Scalar>(
    model: &PolarizedModel,
    state: &AlgebraicMetric<S>,
    levels: &[usize],
    quad: &QuadratureScheme<S>,
) -> Result<Order0Report<S>> {
    let mut distinct = levels.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.is_empty() || distinct[0] == 0 {
        return Err(Error::InvalidArgument("levels must be positive".into()));
    }
    let curv = scalar_curvature(state, quad)?;
    let data = extremal_from_curvature(state, &curv, quad)?;
    let a0 = data.alpha0;
    let half = S::lit(0.5);
    let mut residuals = Vec::new();
    let mut scaled = Vec::new();
    for &m in &distinct {
        let rho = bergman_density_at_level(model, state, m, quad)?;
        if rho.values.len() != curv.sigma.len() {
            return Err(Error::SingularMetric("curvature and density node sets differ".into()));
        }
        let q = S::one() / S::from_usize_lossy(m);
        let r = rho.values.iter().zip(&curv.sigma).fold(S::zero(), |acc, (&v, &s)| {
            let model = (S::one() + a0 * q) * (S::one() + (half * s - a0) * q);
            acc.max((v - model).abs())
        });
        residuals.push(r);
        scaled.push(r / (q * q));
    }
    let defect = (curv.volume - state.volume()).abs() / state.volume();
    let ms: Vec<S> = distinct.iter().map(|&m| S::from_usize_lossy(m)).collect();
    let (c, d) = if ms.len() >= 2 {
        let (c, d, _) = linear_fit(&ms, &scaled);
        (c, d)
    } else {
        (scaled[0], S::zero())
    };
    let bounded = c.is_finite() && d.is_finite() && d.abs() <= S::lit(ORDER0_TOL) * a0.abs().max(S::one());
    let flagged = !bounded || defect > S::lit(1e-6);
    Ok(Order0Report {
        levels: distinct,
        alpha0: a0,
        residuals,
        scaled,
        q2_coefficient: c,
        q1_coefficient: d,
        normalization_defect: defect,
        bounded,
        flagged,
    })
}
