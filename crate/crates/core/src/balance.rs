//! Solvers for critical metrics relative to a torus, index extraction and the
//! uniqueness path between two critical states.

use gauss_quad::GaussLegendre;
use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::chow::{path_profile, OneParamSubgroup};
use crate::error::{Error, Result};
use crate::geometry::QuadratureScheme;
use crate::kernel::{integrate_vec, SectionBasis};
use crate::linalg::{self, CMat};
use crate::scalar::{cplx, Scalar};
use crate::sections::{density_e_with_gram, gram, AlgebraicMetric, GramMatrix};
use crate::weights::{IndexVector, WeightBlocks};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    FixedPoint,
    ChowDescent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Converged,
    NotConverged,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub method: Method,
    pub tol: f64,
    pub max_iter: usize,
    /// Record `f(new) - f(old)` for every accepted step.
    pub track_energy: bool,
    /// Anderson mixing depth for the fixed-point method (0 = plain iteration).
    pub anderson: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { method: Method::FixedPoint, tol: 1e-8, max_iter: 50, track_energy: true, anderson: 5 }
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport<S: Scalar> {
    pub state: AlgebraicMetric<S>,
    pub index: IndexVector<S>,
    /// `sup |E - C|` before each step, and for the final state.
    pub residuals: Vec<S>,
    /// `max_k || G_k - b_k I ||` alongside the residuals.
    pub gram_defects: Vec<S>,
    /// Chow energy change of each accepted step.
    pub energy_deltas: Vec<S>,
    pub iterations: usize,
    pub status: SolveStatus,
}

fn require_block_diagonal<S: Scalar>(state: &AlgebraicMetric<S>, blocks: &WeightBlocks) -> Result<()> {
    if blocks.total() != state.len() {
        return Err(Error::InvalidArgument("blocks do not match the section count".into()));
    }
    let scale = state.form().iter().fold(S::zero(), |a, z| a.max(crate::scalar::cabs(*z)));
    if blocks.count() > 1 && !blocks.is_block_diagonal(state.form(), scale * S::lit(1e-12)) {
        return Err(Error::Precondition("state is not block-diagonal for the torus".into()));
    }
    Ok(())
}

/// `b_k = tr G_k / n_k`, rescaled so that `sum n_k b_k = N_m + 1`.
fn index_estimate<S: Scalar>(g: &GramMatrix<S>, blocks: &WeightBlocks) -> Result<IndexVector<S>> {
    let values = (0..blocks.count())
        .map(|k| linalg::trace_re(&g.block(blocks, k)) / S::from_usize_lossy(blocks.members(k).len()))
        .collect();
    IndexVector::normalized(values, blocks)
}

/// Basis transform of one balancing step and the new state.
fn step_from_gram<S: Scalar>(
    state: &AlgebraicMetric<S>,
    blocks: &WeightBlocks,
    g: &GramMatrix<S>,
) -> Result<AlgebraicMetric<S>> {
    let k = state.len();
    let mut x = CMat::<S>::zeros(k, k);
    let mut trace = S::zero();
    for (b, idx) in blocks.all_members().iter().enumerate() {
        let gk = g.block(blocks, b);
        let nk = S::from_usize_lossy(idx.len());
        let scale = linalg::hermitian_det(&gk).powf(S::one() / nk);
        trace += nk * scale;
        let xk = linalg::inv_sqrt(&gk, "Gram block")?.transpose() * cplx(scale.sqrt());
        linalg::scatter(&mut x, &xk, idx);
    }
    let global = (S::from_usize_lossy(k) / trace).sqrt();
    let basis = state.basis() * x * cplx(global);
    let next = AlgebraicMetric::from_basis(state.sections().clone(), state.volume(), basis)?;
    if blocks.count() > 1 {
        let form = crate::sections::project_blocks(next.form(), blocks);
        let basis = next.basis().clone();
        let projected = AlgebraicMetric::new(state.sections().clone(), state.volume(), form)?;
        // keep the continuous basis; the projection only removes roundoff
        return AlgebraicMetric::from_basis(projected.sections().clone(), projected.volume(), basis);
    }
    Ok(next)
}

/// One fixed-point step: replace each block of the orthonormal basis by
/// `sigma_k G_k^{-1/2} det(G_k)^{1/(2 n_k)}`, then fix the global scale so
/// the linearized Gram trace is `N_m + 1`.
pub fn balancing_step<S: Scalar>(
    state: &AlgebraicMetric<S>,
    blocks: &WeightBlocks,
    quad: &QuadratureScheme<S>,
) -> Result<AlgebraicMetric<S>> {
    require_block_diagonal(state, blocks)?;
    let g = gram(state, quad)?;
    step_from_gram(state, blocks, &g)
}

/// Index of a near-critical state; fails when some Gram block deviates from
/// a scalar matrix by more than `10 tol`.
pub fn extract_index<S: Scalar>(
    state: &AlgebraicMetric<S>,
    blocks: &WeightBlocks,
    quad: &QuadratureScheme<S>,
    tol: S,
) -> Result<IndexVector<S>> {
    require_block_diagonal(state, blocks)?;
    let g = gram(state, quad)?;
    let defect = g.scalar_defect(blocks);
    if defect > S::lit(10.0) * tol {
        return Err(Error::NotCritical(format!(
            "Gram blocks deviate from scalars by {:e}",
            defect.to_f64_lossy()
        )));
    }
    index_estimate(&g, blocks)
}

/// `f(B) - f(A)` along the path `S_A U diag(exp(t a))`, `S_B = S_A U diag(exp a) V^*`,
/// with bases `S = C X`.
fn transition_energy<S: Scalar>(
    from: &AlgebraicMetric<S>,
    from_x: &CMat<S>,
    to_basis: &CMat<S>,
    quad: &QuadratureScheme<S>,
) -> Result<S> {
    let s_a = from.basis() * from_x;
    let (u, a) = blockwise_polar(&s_a, to_basis)?;
    let lambda = OneParamSubgroup::new(a);
    let transform = from_x * u;
    energy_along(from, &transform, &lambda, S::one(), quad)
}

/// `int_0^s f'(t) dt` by 8-point Gauss-Legendre.
fn energy_along<S: Scalar>(
    state: &AlgebraicMetric<S>,
    transform: &CMat<S>,
    lambda: &OneParamSubgroup<S>,
    s: S,
    quad: &QuadratureScheme<S>,
) -> Result<S> {
    if lambda.is_zero() || s == S::zero() {
        return Ok(S::zero());
    }
    let rule = GaussLegendre::new(8).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let half = s / S::lit(2.0);
    let mut acc = S::zero();
    for (&x, &w) in rule.nodes().zip(rule.weights()) {
        let t = half * (S::one() + S::lit(x));
        acc += S::lit(w) * half * crate::chow::first_variation_at(state, Some(transform), lambda, t, quad)?;
    }
    Ok(acc)
}

/// For `g = S_A^{-1} S_B` computed per connected component, returns the
/// left singular vectors `U` and `log` singular values `a`, so that
/// `S_B V = S_A U diag(exp a)`.
fn blockwise_polar<S: Scalar>(s_a: &CMat<S>, s_b: &CMat<S>) -> Result<(CMat<S>, Vec<S>)> {
    let inv = linalg::structured_inverse(s_a, "basis")?;
    let g = inv * s_b;
    let k = g.nrows();
    let mut u = CMat::<S>::zeros(k, k);
    let mut a = vec![S::zero(); k];
    for idx in linalg::components(&g) {
        let gk = linalg::principal(&g, &idx);
        let svd = gk.svd(true, false);
        let uk = svd.u.ok_or_else(|| Error::SingularMetric("SVD failed".into()))?;
        linalg::scatter(&mut u, &uk, &idx);
        for (pos, &i) in idx.iter().enumerate() {
            let sv = svd.singular_values[pos];
            if !(sv > S::zero()) {
                return Err(Error::SingularMetric("transition matrix is singular".into()));
            }
            a[i] = sv.ln();
        }
    }
    Ok((u, a))
}

/// Residual `sup |E - C|`, Gram defect and index of a state.
pub fn criticality<S: Scalar>(
    state: &AlgebraicMetric<S>,
    blocks: &WeightBlocks,
    quad: &QuadratureScheme<S>,
) -> Result<(S, S, IndexVector<S>, GramMatrix<S>)> {
    let g = gram(state, quad)?;
    let b = index_estimate(&g, blocks)?;
    let e = density_e_with_gram(state, blocks, &b, &g, quad)?;
    Ok((e.sup_residual, g.scalar_defect(blocks), b, g))
}

pub fn solve_critical<S: Scalar>(
    state0: &AlgebraicMetric<S>,
    blocks: &WeightBlocks,
    options: &SolveOptions,
    quad: &QuadratureScheme<S>,
) -> Result<SolveReport<S>> {
    if !(options.tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    require_block_diagonal(state0, blocks)?;
    let tol = S::lit(options.tol);
    let mut state = state0.clone();
    let mut mixer = Anderson::new(options.anderson, linalg::trace_re(state0.form()));
    let mut residuals = Vec::new();
    let mut gram_defects = Vec::new();
    let mut energy_deltas = Vec::new();
    let mut iterations = 0;
    loop {
        let (residual, defect, index, g) = criticality(&state, blocks, quad)?;
        if !residual.is_finite() {
            return Err(Error::SingularMetric("non-finite residual".into()));
        }
        residuals.push(residual);
        gram_defects.push(defect);
        if residual <= tol || iterations >= options.max_iter {
            let status = if residual <= tol { SolveStatus::Converged } else { SolveStatus::NotConverged };
            return Ok(SolveReport { state, index, residuals, gram_defects, energy_deltas, iterations, status });
        }
        iterations += 1;
        let next = match options.method {
            Method::FixedPoint => {
                let mut next = step_from_gram(&state, blocks, &g)?;
                if options.anderson > 0 {
                    next = mixer.mix(&state, &next, blocks, residual)?;
                }
                if options.track_energy {
                    let id = CMat::<S>::identity(state.len(), state.len());
                    energy_deltas.push(transition_energy(&state, &id, next.basis(), quad)?);
                }
                next
            }
            Method::ChowDescent => match descent_step(&state, blocks, &g, quad)? {
                Some((next, delta)) => {
                    energy_deltas.push(delta);
                    next
                }
                None => {
                    let (residual, defect, index, _) = criticality(&state, blocks, quad)?;
                    residuals.push(residual);
                    gram_defects.push(defect);
                    return Ok(SolveReport {
                        state,
                        index,
                        residuals,
                        gram_defects,
                        energy_deltas,
                        iterations,
                        status: SolveStatus::NotConverged,
                    });
                }
            },
        };
        state = next;
    }
}

/// Anderson mixing on the real coordinates of the trace-normalized form.
struct Anderson<S: Scalar> {
    depth: usize,
    scale: S,
    xs: Vec<Vec<S>>,
    gs: Vec<Vec<S>>,
    last_residual: Option<S>,
}

impl<S: Scalar> Anderson<S> {
    fn new(depth: usize, scale: S) -> Self {
        Self { depth, scale, xs: Vec::new(), gs: Vec::new(), last_residual: None }
    }

    fn normalize(&self, b: &CMat<S>) -> CMat<S> {
        b * cplx(self.scale / linalg::trace_re(b))
    }

    fn mix(
        &mut self,
        state: &AlgebraicMetric<S>,
        plain: &AlgebraicMetric<S>,
        blocks: &WeightBlocks,
        residual: S,
    ) -> Result<AlgebraicMetric<S>> {
        if self.last_residual.is_some_and(|r| residual > r * S::lit(2.0)) {
            self.xs.clear();
            self.gs.clear();
        }
        self.last_residual = Some(residual);
        let k = state.len();
        let g_form = self.normalize(plain.form());
        self.xs.push(pack(&self.normalize(state.form())));
        self.gs.push(pack(&g_form));
        if self.xs.len() > self.depth + 1 {
            self.xs.remove(0);
            self.gs.remove(0);
        }
        let fallback = || AlgebraicMetric::new(state.sections().clone(), state.volume(), g_form.clone());
        let h = self.xs.len();
        if h < 2 {
            return fallback();
        }
        let f: Vec<Vec<S>> = self.xs.iter().zip(&self.gs).map(|(x, g)| g.iter().zip(x).map(|(a, b)| *a - *b).collect()).collect();
        let p = f[0].len();
        let df = nalgebra::DMatrix::<S>::from_fn(p, h - 1, |r, c| f[c + 1][r] - f[c][r]);
        let dg = nalgebra::DMatrix::<S>::from_fn(p, h - 1, |r, c| self.gs[c + 1][r] - self.gs[c][r]);
        let rhs = nalgebra::DVector::<S>::from_column_slice(&f[h - 1]);
        let gamma = match df.svd(true, true).solve(&rhs, S::lit(1e-12)) {
            Ok(g) => g,
            Err(_) => return fallback(),
        };
        let mixed = nalgebra::DVector::<S>::from_column_slice(&self.gs[h - 1]) - dg * gamma;
        let mut form = unpack(mixed.as_slice(), k);
        if blocks.count() > 1 {
            form = crate::sections::project_blocks(&form, blocks);
            match match_block_determinants(&form, &g_form, blocks) {
                Some(f) => form = f,
                None => {
                    self.xs.clear();
                    self.gs.clear();
                    return fallback();
                }
            }
        }
        match AlgebraicMetric::new(state.sections().clone(), state.volume(), form) {
            Ok(m) => Ok(m),
            Err(_) => {
                self.xs.clear();
                self.gs.clear();
                fallback()
            }
        }
    }
}

/// Rescales each block of `form` to the block determinant of `reference`,
/// keeping the mixed iterate in the orbit of the plain step.
fn match_block_determinants<S: Scalar>(form: &CMat<S>, reference: &CMat<S>, blocks: &WeightBlocks) -> Option<CMat<S>> {
    let mut out = form.clone();
    for idx in blocks.all_members() {
        let have = linalg::hermitian_det(&linalg::principal(form, idx));
        let want = linalg::hermitian_det(&linalg::principal(reference, idx));
        if !(have > S::zero() && want > S::zero()) {
            return None;
        }
        let c = cplx((want / have).powf(S::one() / S::from_usize_lossy(idx.len())));
        for &i in idx {
            for &j in idx {
                out[(i, j)] *= c;
            }
        }
    }
    Some(out)
}

fn pack<S: Scalar>(b: &CMat<S>) -> Vec<S> {
    let k = b.nrows();
    let mut out = Vec::with_capacity(k * k);
    for i in 0..k {
        out.push(b[(i, i)].re);
        for j in i + 1..k {
            out.push(b[(i, j)].re);
            out.push(b[(i, j)].im);
        }
    }
    out
}

fn unpack<S: Scalar>(v: &[S], k: usize) -> CMat<S> {
    let mut out = CMat::<S>::zeros(k, k);
    let mut pos = 0;
    for i in 0..k {
        out[(i, i)] = cplx(v[pos]);
        pos += 1;
        for j in i + 1..k {
            out[(i, j)] = Complex::new(v[pos], v[pos + 1]);
            out[(j, i)] = out[(i, j)].conj();
            pos += 2;
        }
    }
    out
}

const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 30;

/// One steepest-descent step over block-traceless diagonal directions in a
/// basis diagonalizing every Gram block. Returns `None` if the line search
/// fails.
fn descent_step<S: Scalar>(
    state: &AlgebraicMetric<S>,
    blocks: &WeightBlocks,
    g: &GramMatrix<S>,
    quad: &QuadratureScheme<S>,
) -> Result<Option<(AlgebraicMetric<S>, S)>> {
    let k = state.len();
    let mut rot = CMat::<S>::zeros(k, k);
    let mut lam = vec![S::zero(); k];
    for (b, idx) in blocks.all_members().iter().enumerate() {
        let (vals, vecs) = linalg::hermitian_eigen(&g.block(blocks, b));
        linalg::scatter(&mut rot, &vecs.map(|z| z.conj()), idx);
        for (pos, &i) in idx.iter().enumerate() {
            lam[i] = vals[pos];
        }
    }
    // d f'/d gamma_j = (n+1) m^n int |tau_j|^2 / F omega^n = (n+1) m^n G_jj / C
    let n = state.dim();
    let factor = S::from_usize_lossy(n + 1) * S::from_usize_lossy(state.level()).powi(n as i32)
        / state.density_constant();
    let mut grad = vec![S::zero(); k];
    for idx in blocks.all_members() {
        let mean = idx.iter().fold(S::zero(), |a, &i| a + lam[i]) / S::from_usize_lossy(idx.len());
        for &i in idx {
            grad[i] = factor * (lam[i] - mean);
        }
    }
    let norm2 = grad.iter().fold(S::zero(), |a, &v| a + v * v);
    if norm2 == S::zero() {
        return Ok(None);
    }
    let lambda = OneParamSubgroup::new(grad.iter().map(|&v| -v).collect());
    let curvature = {
        let profile = path_profile(state, Some(&rot), &lambda, &[S::zero()], quad)?;
        profile.f_second[0]
    };
    let mut s = if curvature > S::zero() { norm2 / curvature } else { S::one() };
    for _ in 0..=MAX_HALVINGS {
        let delta = energy_along(state, &rot, &lambda, s, quad)?;
        if delta <= -S::lit(ARMIJO) * s * norm2 {
            let scale = CMat::<S>::from_diagonal(&nalgebra::DVector::from_iterator(
                k,
                lambda.gamma.iter().map(|&v| cplx((s * v).exp())),
            ));
            let basis = state.basis() * &rot * scale;
            let next = AlgebraicMetric::from_basis(state.sections().clone(), state.volume(), basis)?;
            return Ok(Some((next, delta)));
        }
        s /= S::lit(2.0);
    }
    Ok(None)
}

/// Path diagnostics between two critical states of the same index.
#[derive(Debug, Clone)]
pub struct UniquenessReport<S> {
    /// `f'(0) / (n+1)`.
    pub d0: S,
    /// `f'(1) / (n+1)`.
    pub d1: S,
    pub max_abs_second: S,
    /// Exponents `a` of the connecting path.
    pub exponents: Vec<S>,
    pub t: Vec<S>,
    pub f_prime: Vec<S>,
    pub f_second: Vec<S>,
}

/// Connects admissible bases `s` (of `a`) and `s'` (of `b_state`) by
/// `t -> s U diag(exp(t a))`, where `s^{-1} s' = U diag(exp a) V^*` blockwise.
pub fn uniqueness_path<S: Scalar>(
    a: &AlgebraicMetric<S>,
    b_state: &AlgebraicMetric<S>,
    blocks: &WeightBlocks,
    b: &IndexVector<S>,
    quad: &QuadratureScheme<S>,
    tol: S,
) -> Result<UniquenessReport<S>> {
    let b = IndexVector::new(b.values.clone(), blocks)?;
    let ia = extract_index(a, blocks, quad, tol)?;
    let ib = extract_index(b_state, blocks, quad, tol)?;
    let close = |x: &IndexVector<S>| {
        x.values.iter().zip(&b.values).all(|(p, q)| (*p - *q).abs() <= S::lit(1e3) * tol.max(S::eps()))
    };
    if !close(&ia) || !close(&ib) {
        return Err(Error::InvalidArgument("states do not share the requested index".into()));
    }
    let xa = crate::weights::admissible_basis(&gram(a, quad)?, blocks, &b)?.transform;
    let xb = crate::weights::admissible_basis(&gram(b_state, quad)?, blocks, &b)?.transform;
    let s_a = a.basis() * &xa;
    let s_b = b_state.basis() * &xb;
    let (u, exps) = blockwise_polar(&s_a, &s_b)?;
    let lambda = OneParamSubgroup::new(exps.clone());
    let transform = xa * u;
    let grid: Vec<S> = (0..=10).map(|i| S::lit(i as f64 / 10.0)).collect();
    let path = path_profile(a, Some(&transform), &lambda, &grid, quad)?;
    let n1 = S::from_usize_lossy(a.dim() + 1);
    let max_abs_second = path.f_second.iter().fold(S::zero(), |m, v| m.max(v.abs()));
    Ok(UniquenessReport {
        d0: path.f_prime[0] / n1,
        d1: *path.f_prime.last().unwrap() / n1,
        max_abs_second,
        exponents: exps,
        t: path.t.clone(),
        f_prime: path.f_prime.clone(),
        f_second: path.f_second.clone(),
    })
}

/// Volume of a state's form, used as a sanity figure in reports.
pub fn state_volume<S: Scalar>(state: &AlgebraicMetric<S>, quad: &QuadratureScheme<S>) -> Result<S> {
    let basis = SectionBasis::new(state.sections(), state.basis())?;
    Ok(integrate_vec(&basis, quad, 1, |_, o| o[0] = S::one())?[0])
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PolarizedModel;
    use crate::weights::{decompose, SubtorusAction};

    fn q() -> QuadratureScheme<f64> {
        QuadratureScheme::tensor(1, 64).unwrap()
    }

    #[test]
    fn fs_is_a_fixed_point() {
        let m = AlgebraicMetric::<f64>::fubini_study(&PolarizedModel::projective_line(), 3).unwrap();
        let blocks = WeightBlocks::single(4);
        let next = balancing_step(&m, &blocks, &q()).unwrap();
        assert!(linalg::max_abs_diff(next.form(), m.form()) < 1e-12);
    }

    #[test]
    fn full_torus_converges_immediately() {
        let m = AlgebraicMetric::<f64>::fubini_study(&PolarizedModel::projective_line(), 2)
            .unwrap()
            .perturbed(0.4, 3, true, None)
            .unwrap();
        let blocks = decompose(m.sections(), &SubtorusAction::full(1));
        let r = solve_critical(&m, &blocks, &SolveOptions { tol: 1e-12, ..Default::default() }, &q()).unwrap();
        assert_eq!(r.status, SolveStatus::Converged);
        assert_eq!(r.iterations, 0);
        let sum: f64 = r.index.values.iter().sum();
        assert!((sum - 3.0).abs() < 1e-12);
    }

    #[test]
    fn fixed_point_reduces_residual() {
        let m = AlgebraicMetric::<f64>::fubini_study(&PolarizedModel::projective_line(), 2)
            .unwrap()
            .perturbed(0.3, 5, true, None)
            .unwrap();
        let blocks = WeightBlocks::single(3);
        let r = solve_critical(&m, &blocks, &SolveOptions { max_iter: 2, anderson: 0, ..Default::default() }, &q()).unwrap();
        assert!(r.residuals[1] < r.residuals[0]);
        assert!(r.residuals[2] < r.residuals[1]);
    }

    #[test]
    fn descent_converges() {
        let m = AlgebraicMetric::<f64>::fubini_study(&PolarizedModel::projective_line(), 2)
            .unwrap()
            .perturbed(0.3, 5, true, None)
            .unwrap();
        let blocks = WeightBlocks::single(3);
        let opts = SolveOptions { method: Method::ChowDescent, max_iter: 60, ..Default::default() };
        let r = solve_critical(&m, &blocks, &opts, &q()).unwrap();
        assert_eq!(r.status, SolveStatus::Converged, "{:?}", r.residuals);
        assert!(r.energy_deltas.iter().all(|&d| d <= 1e-9));
    }

    #[test]
    fn index_requires_criticality() {
        let m = AlgebraicMetric::<f64>::fubini_study(&PolarizedModel::projective_line(), 2)
            .unwrap()
            .perturbed(0.3, 5, true, None)
            .unwrap();
        let blocks = WeightBlocks::single(3);
        assert!(matches!(extract_index(&m, &blocks, &q(), 1e-8), Err(Error::NotCritical(_))));
        let fs = AlgebraicMetric::<f64>::fubini_study(&PolarizedModel::projective_line(), 2).unwrap();
        let b = extract_index(&fs, &blocks, &q(), 1e-8).unwrap();
        assert!((b.values[0] - 1.0).abs() < 1e-12);
    }
}
