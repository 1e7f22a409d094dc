//! Algebraic metrics `h_B` from positive Hermitian forms on the section space,
//! their Gram matrices, and the densities `E_{omega,b}` and `rho_m`.

use nalgebra::{Complex, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::geometry::{enumerate_sections, NodeMode, PolarizedModel, QuadratureScheme, SectionSet, StockModel};
use crate::kernel::{integrate_vec, integrate_vec_mode, NodeEval, SectionBasis};
use crate::linalg::{self, CMat};
use crate::scalar::{abs2, cabs, factorial, Scalar};
use crate::weights::{IndexVector, WeightBlocks};

/// A state: positive Hermitian form `B` on `V_m` and a `B`-orthonormal basis
/// `sigma_j = sum_i C_ij z^{u_i}` (so `C^T B conj(C) = I`).
#[derive(Debug, Clone, PartialEq)]
pub struct AlgebraicMetric<S: Scalar> {
    sections: SectionSet,
    volume: S,
    form: CMat<S>,
    basis: CMat<S>,
}

impl<S: Scalar> AlgebraicMetric<S> {
    pub fn new(sections: SectionSet, volume: S, form: CMat<S>) -> Result<Self> {
        let k = sections.len();
        if form.nrows() != k || form.ncols() != k {
            return Err(Error::InvalidArgument(format!("form must be {k}x{k}")));
        }
        let scale = form.iter().fold(S::zero(), |a, z| a.max(cabs(*z)));
        if linalg::hermitian_defect(&form) > S::lit(1e3) * S::eps() * scale {
            return Err(Error::InvalidArgument("form is not Hermitian".into()));
        }
        let form = linalg::hermitize(&form);
        let basis = linalg::inv_sqrt(&form, "metric form")?.transpose();
        Ok(Self { sections, volume, form, basis })
    }

    /// State with a prescribed orthonormal basis; `B = (conj(C) C^T)^{-1}`.
    pub fn from_basis(sections: SectionSet, volume: S, basis: CMat<S>) -> Result<Self> {
        let k = sections.len();
        if basis.nrows() != k || basis.ncols() != k {
            return Err(Error::InvalidArgument(format!("basis must be {k}x{k}")));
        }
        let gram = basis.conjugate() * basis.transpose();
        linalg::check_positive(&gram, "basis")?;
        let form = linalg::structured_inverse(&gram, "basis")?;
        Ok(Self { sections, volume, form: linalg::hermitize(&form), basis })
    }

    /// Toric Fubini-Study state: `B = diag(1 / c_u)` with the multinomial
    /// weights of the stock model, or the monomial state `B = I` otherwise.
    pub fn fubini_study(model: &PolarizedModel, m: i64) -> Result<Self> {
        let sections = enumerate_sections(model, m)?;
        let weights: Vec<f64> = sections
            .exponents
            .iter()
            .map(|u| fs_weight(model.stock, m, u))
            .collect();
        let form = CMat::<S>::from_diagonal(&DVector::from_iterator(
            weights.len(),
            weights.iter().map(|&w| Complex::new(S::lit(1.0 / w), S::zero())),
        ));
        Self::new(sections, model.degree_volume_as(), form)
    }

    /// Seeded random perturbation `B^{1/2} exp(eps H) B^{1/2}`, with `H`
    /// Gaussian Hermitian (or diagonal when `diagonal`). With `blocks`, `H` is
    /// projected onto the block-diagonal part and made traceless on each
    /// block, so block determinants are preserved.
    pub fn perturbed(&self, eps: f64, seed: u64, diagonal: bool, blocks: Option<&WeightBlocks>) -> Result<Self> {
        let k = self.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut h = CMat::<S>::zeros(k, k);
        for i in 0..k {
            let d: f64 = StandardNormal.sample(&mut rng);
            h[(i, i)] = Complex::new(S::lit(d), S::zero());
            if diagonal {
                continue;
            }
            for j in i + 1..k {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                h[(i, j)] = Complex::new(S::lit(re), S::lit(im)) * S::lit(0.5);
                h[(j, i)] = h[(i, j)].conj();
            }
        }
        if let Some(blocks) = blocks {
            h = project_blocks(&h, blocks);
            for idx in blocks.all_members() {
                let mean = idx.iter().map(|&i| h[(i, i)].re).fold(S::zero(), |a, b| a + b) / S::from_usize_lossy(idx.len());
                for &i in idx {
                    h[(i, i)].re -= mean;
                }
            }
        }
        let root = linalg::hermitian_power(&self.form, S::lit(0.5), "metric form")?;
        let pert = &root * linalg::hermitian_exp(&(h * Complex::new(S::lit(eps), S::zero()))) * &root;
        let mut out = Self::new(self.sections.clone(), self.volume, linalg::hermitize(&pert))?;
        if let Some(blocks) = blocks {
            out = out.block_projected(blocks)?;
        }
        Ok(out)
    }

    /// Drops entries coupling different blocks.
    pub fn block_projected(&self, blocks: &WeightBlocks) -> Result<Self> {
        Self::new(self.sections.clone(), self.volume, project_blocks(&self.form, blocks))
    }

    pub fn sections(&self) -> &SectionSet {
        &self.sections
    }

    pub fn level(&self) -> usize {
        self.sections.level
    }

    pub fn dim(&self) -> usize {
        self.sections.dim
    }

    pub fn len(&self) -> usize {
        self.sections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sections.is_empty()
    }

    /// `c_1(L)^n [M]`.
    pub fn volume(&self) -> S {
        self.volume
    }

    pub fn form(&self) -> &CMat<S> {
        &self.form
    }

    pub fn basis(&self) -> &CMat<S> {
        &self.basis
    }

    /// Density constant `(N_m + 1) / c_1(L)^n [M]`.
    pub fn density_constant(&self) -> S {
        S::from_usize_lossy(self.len()) / self.volume
    }

    pub fn section_basis(&self) -> Result<SectionBasis<S>> {
        SectionBasis::new(&self.sections, &self.basis)
    }

    /// Same metric with basis `C X`.
    pub fn rebased(&self, x: &CMat<S>) -> Result<Self> {
        Self::from_basis(self.sections.clone(), self.volume, &self.basis * x)
    }

    /// Gram matrix of the raw monomials, `M_ik = int C z^{u_i} conj(z^{u_k}) / F omega^n`.
    pub fn raw_gram(&self, quad: &QuadratureScheme<S>) -> Result<CMat<S>> {
        let basis = self.section_basis()?;
        let k = self.len();
        let c = self.density_constant();
        if basis.natural_mode() == NodeMode::Invariant {
            let diag = integrate_vec(&basis, quad, k, |ev, out| {
                for (o, e) in out.iter_mut().zip(&ev.e) {
                    *o = c * abs2(*e) / ev.f;
                }
            })?;
            return Ok(CMat::from_diagonal(&DVector::from_iterator(
                k,
                diag.into_iter().map(|d| Complex::new(d, S::zero())),
            )));
        }
        let flat = integrate_vec_mode(&basis, quad, NodeMode::Full, 2 * k * k, |ev, out| {
            for i in 0..k {
                for j in 0..k {
                    let v = ev.e[i] * ev.e[j].conj() * (c / ev.f);
                    out[2 * (i * k + j)] = v.re;
                    out[2 * (i * k + j) + 1] = v.im;
                }
            }
        })?;
        Ok(linalg::hermitize(&CMat::from_fn(k, k, |i, j| {
            Complex::new(flat[2 * (i * k + j)], flat[2 * (i * k + j) + 1])
        })))
    }

    /// Integral of `omega_B^n`.
    pub fn volume_integral(&self, quad: &QuadratureScheme<S>) -> Result<S> {
        let basis = self.section_basis()?;
        Ok(integrate_vec(&basis, quad, 1, |_, out| out[0] = S::one())?[0])
    }
}

fn fs_weight(stock: Option<StockModel>, m: i64, u: &[i64]) -> f64 {
    let binom = |n: i64, k: i64| -> f64 { (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64) };
    match stock {
        Some(StockModel::ProjectiveLine) => binom(m, u[0]),
        Some(StockModel::ProductOfLines) => binom(m, u[0]) * binom(m, u[1]),
        Some(StockModel::ProjectivePlane) => binom(m, u[0]) * binom(m - u[0], u[1]),
        _ => 1.0,
    }
}

pub(crate) fn project_blocks<S: Scalar>(m: &CMat<S>, blocks: &WeightBlocks) -> CMat<S> {
    let owner = blocks.block_of();
    CMat::from_fn(m.nrows(), m.ncols(), |i, j| {
        if owner[i] == owner[j] {
            m[(i, j)]
        } else {
            Complex::new(S::zero(), S::zero())
        }
    })
}

/// `G_ij = (sigma_i, sigma_j)` in the `L^2` product of the state.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix<S: Scalar> {
    pub matrix: CMat<S>,
}

impl<S: Scalar> GramMatrix<S> {
    pub fn block(&self, blocks: &WeightBlocks, k: usize) -> CMat<S> {
        linalg::principal(&self.matrix, blocks.members(k))
    }

    pub fn min_eigenvalue(&self) -> S {
        linalg::hermitian_eigen(&self.matrix).0[0]
    }

    pub fn trace(&self) -> S {
        linalg::trace_re(&self.matrix)
    }

    /// `max_k || G_k - b_k I ||` with `b_k` the block mean of the diagonal.
    pub fn scalar_defect(&self, blocks: &WeightBlocks) -> S {
        (0..blocks.count())
            .map(|k| {
                let g = self.block(blocks, k);
                let mean = linalg::trace_re(&g) / S::from_usize_lossy(g.nrows());
                let dev = g - CMat::<S>::identity(blocks.members(k).len(), blocks.members(k).len()) * Complex::new(mean, S::zero());
                dev.iter().fold(S::zero(), |a, z| a.max(cabs(*z)))
            })
            .fold(S::zero(), S::max)
    }
}

/// Gram matrix of the state's orthonormal basis, `G = C^T M conj(C)`.
pub fn gram<S: Scalar>(metric: &AlgebraicMetric<S>, quad: &QuadratureScheme<S>) -> Result<GramMatrix<S>> {
    let raw = metric.raw_gram(quad)?;
    let c = metric.basis();
    let g = linalg::hermitize(&(c.transpose() * raw * c.conjugate()));
    linalg::check_positive(&g, "Gram matrix")?;
    Ok(GramMatrix { matrix: g })
}

/// Sampled density over the natural node set of a state.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityProfile<S> {
    pub x: Vec<Vec<S>>,
    pub values: Vec<S>,
    pub target: S,
    pub sup_residual: S,
    pub integral: S,
}

/// Evaluates a pointwise Hermitian density `(C / F) tau^* P tau` at every
/// node, with `P` given in the orthonormal basis.
pub(crate) fn weighted_profile<S: Scalar>(
    metric: &AlgebraicMetric<S>,
    quad: &QuadratureScheme<S>,
    p: &CMat<S>,
    scale: S,
    target: S,
) -> Result<DensityProfile<S>> {
    let basis = metric.section_basis()?;
    let mode = basis.natural_mode();
    let c = metric.density_constant() * scale;
    let diagonal = linalg::is_diagonal(p);
    let eval = |ev: &NodeEval<S>| -> S {
        let t = &ev.tau;
        let mut acc = Complex::new(S::zero(), S::zero());
        if diagonal {
            for i in 0..t.len() {
                acc += p[(i, i)] * abs2(t[i]);
            }
        } else {
            for i in 0..t.len() {
                let mut row = Complex::new(S::zero(), S::zero());
                for j in 0..t.len() {
                    row += p[(i, j)] * t[j];
                }
                acc += t[i].conj() * row;
            }
        }
        c * acc.re / ev.f
    };
    let integral = integrate_vec_mode(&basis, quad, mode, 1, |ev, out| out[0] = eval(ev))?[0];
    let count = quad.node_count(mode);
    let mut x = Vec::with_capacity(count);
    let mut values = Vec::with_capacity(count);
    let mut sup = S::zero();
    for idx in 0..count {
        let ev = NodeEval::new(&basis, &quad.node(mode, idx));
        let v = eval(&ev);
        sup = sup.max((v - target).abs());
        values.push(v);
        x.push(ev.x);
    }
    Ok(DensityProfile { x, values, target, sup_residual: sup, integral })
}

/// `E_{omega,b} = sum_k sum_i |tau_{k,i}|^2_h` for the admissible normal basis
/// of index `b`.
pub fn density_e<S: Scalar>(
    metric: &AlgebraicMetric<S>,
    blocks: &WeightBlocks,
    b: &IndexVector<S>,
    quad: &QuadratureScheme<S>,
) -> Result<DensityProfile<S>> {
    let g = gram(metric, quad)?;
    density_e_with_gram(metric, blocks, b, &g, quad)
}

/// [`density_e`] for a precomputed Gram matrix.
pub fn density_e_with_gram<S: Scalar>(
    metric: &AlgebraicMetric<S>,
    blocks: &WeightBlocks,
    b: &IndexVector<S>,
    g: &GramMatrix<S>,
    quad: &QuadratureScheme<S>,
) -> Result<DensityProfile<S>> {
    let b = IndexVector::new(b.values.clone(), blocks)?;
    let mut p = CMat::<S>::zeros(metric.len(), metric.len());
    for (k, idx) in blocks.all_members().iter().enumerate() {
        let gk = g.block(blocks, k);
        let inv = gk
            .try_inverse()
            .ok_or_else(|| Error::SingularMetric("Gram block is singular".into()))?;
        linalg::scatter(&mut p, &(inv * Complex::new(b.values[k], S::zero())), idx);
    }
    weighted_profile(metric, quad, &p, S::one(), metric.density_constant())
}

/// `rho_m = (n! / m^n) sum_j |s_j|^2_h` for an `L^2`-orthonormal basis.
pub fn bergman_density<S: Scalar>(metric: &AlgebraicMetric<S>, quad: &QuadratureScheme<S>) -> Result<DensityProfile<S>> {
    let g = gram(metric, quad)?;
    let inv = linalg::structured_inverse(&g.matrix, "Gram matrix")?;
    let n = metric.dim();
    let scale = factorial::<S>(n) / S::from_usize_lossy(metric.level()).powi(n as i32);
    let target = S::one();
    weighted_profile(metric, quad, &linalg::hermitize(&inv), scale, target)
}

/// Value matrix helper used by tests: `sigma` evaluated at a chart point.
pub fn basis_values<S: Scalar>(metric: &AlgebraicMetric<S>, z: &[Complex<S>]) -> Vec<Complex<S>> {
    let e = crate::geometry::evaluate_sections(metric.sections(), z);
    let ev = DVector::from_vec(e);
    (metric.basis().transpose() * ev).iter().copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::{decompose, SubtorusAction};

    fn quad1(res: usize) -> QuadratureScheme<f64> {
        QuadratureScheme::tensor(1, res).unwrap()
    }

    #[test]
    fn fs_gram_is_identity() {
        let m = AlgebraicMetric::<f64>::fubini_study(&PolarizedModel::projective_line(), 2).unwrap();
        let g = gram(&m, &quad1(64)).unwrap();
        let err = linalg::max_abs_diff(&g.matrix, &CMat::identity(3, 3));
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn raw_gram_is_beta_oracle() {
        let m = AlgebraicMetric::<f64>::fubini_study(&PolarizedModel::projective_line(), 2).unwrap();
        let raw = m.raw_gram(&quad1(64)).unwrap();
        // int 2 r^{2j+1} (1+r^2)^{-4} dr = j!(2-j)!/3!, scaled by C = 3
        let want = [1.0 / 3.0, 1.0 / 6.0, 1.0 / 3.0];
        for j in 0..3 {
            assert!((raw[(j, j)].re - 3.0 * want[j]).abs() < 1e-10);
        }
        // balanced: the raw Gram reproduces the form
        assert!(linalg::max_abs_diff(&raw, m.form()) < 1e-10);
    }

    #[test]
    fn fs_density_is_constant() {
        let model = PolarizedModel::projective_line();
        let m = AlgebraicMetric::<f64>::fubini_study(&model, 2).unwrap();
        let blocks = decompose(m.sections(), &SubtorusAction::full(1));
        let e = density_e(&m, &blocks, &IndexVector::uniform(&blocks), &quad1(64)).unwrap();
        assert!(e.sup_residual < 1e-10);
        assert!((e.target - 3.0).abs() < 1e-15);
        let bad = IndexVector { values: vec![1.0, 1.0, 0.5] };
        assert!(matches!(density_e(&m, &blocks, &bad, &quad1(16)), Err(Error::InvalidIndex(_))));
    }

    #[test]
    fn bergman_fs_closed_forms() {
        for mm in 1..=5 {
            let m = AlgebraicMetric::<f64>::fubini_study(&PolarizedModel::projective_line(), mm).unwrap();
            let r = bergman_density(&m, &quad1(64)).unwrap();
            let want = (mm as f64 + 1.0) / mm as f64;
            assert!(r.values.iter().all(|v| (v - want).abs() < 1e-9));
        }
        let sq = PolarizedModel::product_of_lines();
        let m = AlgebraicMetric::<f64>::fubini_study(&sq, 2).unwrap();
        let r = bergman_density(&m, &QuadratureScheme::tensor(2, 32).unwrap()).unwrap();
        assert!(r.values.iter().all(|v| (v - 9.0 / 4.0).abs() < 1e-8));
    }

    #[test]
    fn from_basis_round_trip() {
        let m = AlgebraicMetric::<f64>::fubini_study(&PolarizedModel::projective_line(), 3).unwrap();
        let p = m.perturbed(0.2, 4, false, None).unwrap();
        let q = AlgebraicMetric::from_basis(p.sections().clone(), 1.0, p.basis().clone()).unwrap();
        assert!(linalg::max_abs_diff(p.form(), q.form()) < 1e-12);
        let c = p.basis();
        let id = c.transpose() * p.form() * c.conjugate();
        assert!(linalg::max_abs_diff(&id, &CMat::identity(4, 4)) < 1e-12);
    }

    #[test]
    fn rejects_singular_and_non_hermitian() {
        let s = enumerate_sections(&PolarizedModel::projective_line(), 1).unwrap();
        let mut b = CMat::<f64>::identity(2, 2);
        b[(1, 1)] = Complex::new(1e-14, 0.0);
        assert!(matches!(AlgebraicMetric::new(s.clone(), 1.0, b), Err(Error::SingularMetric(_))));
        let mut b = CMat::<f64>::identity(2, 2);
        b[(0, 1)] = Complex::new(0.5, 0.0);
        assert!(matches!(AlgebraicMetric::new(s, 1.0, b), Err(Error::InvalidArgument(_))));
    }
}
