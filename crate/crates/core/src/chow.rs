//! Variations of the log Chow norm along one-parameter paths
//! `tau_j -> exp(t gamma_j + delta_j) tau_j`.
//!
//! `f'(t) = (n+1) int Q_t (m omega_t)^n` with `Q_t = sum_j gamma_j |tau_j|^2 / sum_j |tau_j|^2`
//! evaluated in the rescaled basis. `f''` is computed in closed form by
//! integration by parts:
//! `f''(t) = (n+1) int [2 Var_t(gamma) - 2 |dQ_t|^2] (m omega_t)^n`, which is
//! pointwise nonnegative.

use gauss_quad::GaussLegendre;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{QuadratureScheme, SectionSet};
use crate::kernel::{integrate_vec, SectionBasis};
use crate::linalg::CMat;
use crate::scalar::Scalar;
use crate::sections::AlgebraicMetric;
use crate::weights::WeightBlocks;

/// Bound on `t (max gamma - min gamma)` in natural log units.
pub const OVERFLOW_GUARD: f64 = 600.0;

/// Step of the finite-difference cross-check of `f''`.
pub const FD_STEP: f64 = 0.05;

/// A real one-parameter subgroup, diagonal in a chosen basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneParamSubgroup<S> {
    pub gamma: Vec<S>,
    pub delta: Vec<S>,
    pub special: bool,
}

impl<S: Scalar> OneParamSubgroup<S> {
    pub fn new(gamma: Vec<S>) -> Self {
        let delta = vec![S::zero(); gamma.len()];
        Self { gamma, delta, special: false }
    }

    pub fn with_offsets(gamma: Vec<S>, delta: Vec<S>) -> Result<Self> {
        if gamma.len() != delta.len() {
            return Err(Error::InvalidArgument("weights and offsets differ in length".into()));
        }
        Ok(Self { gamma, delta, special: false })
    }

    /// Integer weights with vanishing block sums.
    pub fn special(gamma: &[i64], blocks: &WeightBlocks) -> Result<Self> {
        if gamma.len() != blocks.total() {
            return Err(Error::InvalidArgument("weight vector length mismatch".into()));
        }
        for k in 0..blocks.count() {
            let sum: i64 = blocks.members(k).iter().map(|&i| gamma[i]).sum();
            if sum != 0 {
                return Err(Error::InvalidArgument(format!("block {k} weights sum to {sum}, not 0")));
            }
        }
        let mut out = Self::new(gamma.iter().map(|&g| S::from_i64_lossy(g)).collect());
        out.special = true;
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gamma.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.gamma.iter().all(|g| *g == S::zero())
    }

    /// `max gamma - min gamma`.
    pub fn spread(&self) -> S {
        let hi = self.gamma.iter().copied().fold(S::min_value().unwrap(), S::max);
        let lo = self.gamma.iter().copied().fold(S::max_value().unwrap(), S::min);
        if self.gamma.is_empty() {
            S::zero()
        } else {
            hi - lo
        }
    }

    pub fn log_weights(&self, t: S) -> Vec<S> {
        self.gamma
            .iter()
            .zip(&self.delta)
            .map(|(&g, &d)| S::lit(2.0) * (t * g + d))
            .collect()
    }

    fn check_guard(&self, t: S) -> Result<()> {
        let load = t.abs() * self.spread();
        if !(load.to_f64_lossy() <= OVERFLOW_GUARD) {
            return Err(Error::Overflow(format!(
                "|t| (max gamma - min gamma) = {} exceeds {OVERFLOW_GUARD}",
                load.to_f64_lossy()
            )));
        }
        Ok(())
    }
}

/// Base data of a path: sections and coefficients of the basis `tau`.
#[derive(Debug, Clone)]
struct PathBase<S: Scalar> {
    sections: SectionSet,
    coeffs: CMat<S>,
    factor: S,
}

impl<S: Scalar> PathBase<S> {
    fn new(metric: &AlgebraicMetric<S>, transform: Option<&CMat<S>>, len: usize) -> Result<Self> {
        if len != metric.len() {
            return Err(Error::InvalidArgument(format!(
                "subgroup has {len} weights for {} sections",
                metric.len()
            )));
        }
        let coeffs = match transform {
            Some(x) => metric.basis() * x,
            None => metric.basis().clone(),
        };
        let n = metric.dim();
        let factor = S::from_usize_lossy(n + 1) * S::from_usize_lossy(metric.level()).powi(n as i32);
        Ok(Self { sections: metric.sections().clone(), coeffs, factor })
    }

    /// `(f'(t), f''(t))`.
    fn derivatives(&self, lambda: &OneParamSubgroup<S>, t: S, quad: &QuadratureScheme<S>) -> Result<(S, S)> {
        lambda.check_guard(t)?;
        let basis = SectionBasis::new(&self.sections, &self.coeffs)?.with_log_weights(lambda.log_weights(t));
        let quad = &basis.fitted_quadrature(quad)?;
        let two = S::lit(2.0);
        let gamma = &lambda.gamma;
        let v = integrate_vec(&basis, quad, 2, |ev, out| {
            out[0] = ev.mean(gamma);
            out[1] = two * ev.variance(gamma) - two * ev.dual_norm_phi(&ev.grad_mean(gamma));
        })?;
        Ok((self.factor * v[0], self.factor * v[1]))
    }
}

/// `f'(0) = (n+1) int Q (m omega)^n` for the basis `sigma X` (`X = I` when
/// `transform` is `None`).
pub fn first_variation<S: Scalar>(
    metric: &AlgebraicMetric<S>,
    transform: Option<&CMat<S>>,
    lambda: &OneParamSubgroup<S>,
    quad: &QuadratureScheme<S>,
) -> Result<S> {
    first_variation_at(metric, transform, lambda, S::zero(), quad)
}

/// `f'(t)`.
pub fn first_variation_at<S: Scalar>(
    metric: &AlgebraicMetric<S>,
    transform: Option<&CMat<S>>,
    lambda: &OneParamSubgroup<S>,
    t: S,
    quad: &QuadratureScheme<S>,
) -> Result<S> {
    if lambda.is_zero() {
        return Ok(S::zero());
    }
    let base = PathBase::new(metric, transform, lambda.len())?;
    Ok(base.derivatives(lambda, t, quad)?.0)
}

/// Samples of `f'` and `f''` along a path.
#[derive(Debug, Clone)]
pub struct ChowPath<S: Scalar> {
    base: PathBase<S>,
    quad: QuadratureScheme<S>,
    pub lambda: OneParamSubgroup<S>,
    pub t: Vec<S>,
    pub f_prime: Vec<S>,
    /// Closed-form second derivative.
    pub f_second: Vec<S>,
    /// Richardson-extrapolated central difference of `f'`.
    pub f_second_fd: Vec<S>,
}

pub fn path_profile<S: Scalar>(
    metric: &AlgebraicMetric<S>,
    transform: Option<&CMat<S>>,
    lambda: &OneParamSubgroup<S>,
    grid: &[S],
    quad: &QuadratureScheme<S>,
) -> Result<ChowPath<S>> {
    sample_path(metric, transform, lambda, grid, quad, true)
}

/// [`path_profile`] without the finite-difference check; `f_second_fd` is
/// left as NaN.
pub fn path_samples<S: Scalar>(
    metric: &AlgebraicMetric<S>,
    transform: Option<&CMat<S>>,
    lambda: &OneParamSubgroup<S>,
    grid: &[S],
    quad: &QuadratureScheme<S>,
) -> Result<ChowPath<S>> {
    sample_path(metric, transform, lambda, grid, quad, false)
}

fn sample_path<S: Scalar>(
    metric: &AlgebraicMetric<S>,
    transform: Option<&CMat<S>>,
    lambda: &OneParamSubgroup<S>,
    grid: &[S],
    quad: &QuadratureScheme<S>,
    fd: bool,
) -> Result<ChowPath<S>> {
    if grid.is_empty() || grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidArgument("t-grid must be finite and nonempty".into()));
    }
    for &t in grid {
        lambda.check_guard(t.abs() + S::lit(FD_STEP))?;
    }
    let base = PathBase::new(metric, transform, lambda.len())?;
    let h = S::lit(FD_STEP);
    let all = [S::zero(), -h, h, -h / S::lit(2.0), h / S::lit(2.0)];
    let offsets = if fd { &all[..] } else { &all[..1] };
    let evals: Vec<Result<Vec<(S, S)>>> = grid
        .par_iter()
        .map(|&t| {
            offsets
                .iter()
                .map(|&o| {
                    if lambda.is_zero() {
                        Ok((S::zero(), S::zero()))
                    } else {
                        base.derivatives(lambda, t + o, quad)
                    }
                })
                .collect()
        })
        .collect();
    let mut f_prime = Vec::with_capacity(grid.len());
    let mut f_second = Vec::with_capacity(grid.len());
    let mut f_second_fd = Vec::with_capacity(grid.len());
    for e in evals {
        let e = e?;
        f_prime.push(e[0].0);
        f_second.push(e[0].1);
        if !fd {
            f_second_fd.push(S::lit(f64::NAN));
            continue;
        }
        let d1 = (e[2].0 - e[1].0) / (S::lit(2.0) * h);
        let d2 = (e[4].0 - e[3].0) / h;
        f_second_fd.push((S::lit(4.0) * d2 - d1) / S::lit(3.0));
    }
    Ok(ChowPath {
        base,
        quad: quad.clone(),
        lambda: lambda.clone(),
        t: grid.to_vec(),
        f_prime,
        f_second,
        f_second_fd,
    })
}

impl<S: Scalar> ChowPath<S> {
    /// `f''` at an arbitrary parameter.
    pub fn second_derivative_at(&self, t: S) -> Result<S> {
        if self.lambda.is_zero() {
            return Ok(S::zero());
        }
        Ok(self.base.derivatives(&self.lambda, t, &self.quad)?.1)
    }

    /// `f'` at an arbitrary parameter.
    pub fn first_derivative_at(&self, t: S) -> Result<S> {
        if self.lambda.is_zero() {
            return Ok(S::zero());
        }
        Ok(self.base.derivatives(&self.lambda, t, &self.quad)?.0)
    }

    /// `int_a^b f'(t) dt` by Gauss-Legendre with `nodes` points.
    pub fn energy_difference(&self, a: S, b: S, nodes: usize) -> Result<S> {
        let rule = GaussLegendre::new(nodes.max(2)).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let half = (b - a) / S::lit(2.0);
        let mid = (a + b) / S::lit(2.0);
        let mut acc = S::zero();
        for (&x, &w) in rule.nodes().zip(rule.weights()) {
            acc += S::lit(w) * half * self.first_derivative_at(mid + half * S::lit(x))?;
        }
        Ok(acc)
    }

    /// `f(t_i) - f(t_0)` by cubic Hermite integration of `f'`.
    pub fn energy(&self) -> Vec<S> {
        let mut out = vec![S::zero()];
        for i in 1..self.t.len() {
            let h = self.t[i] - self.t[i - 1];
            let step = h / S::lit(2.0) * (self.f_prime[i - 1] + self.f_prime[i])
                + h * h / S::lit(12.0) * (self.f_second[i - 1] - self.f_second[i]);
            out.push(out[i - 1] + step);
        }
        out
    }
}

/// Outcome of [`convexity_residual`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvexityReport<S> {
    /// Minimum discrete second difference of `f` over the grid.
    pub residual: S,
    /// `max_r |f'(r) - f'(t_0) - int_{t_0}^r f''|`.
    pub identity_error: S,
    /// Minimum of the sampled `f''`.
    pub min_second: S,
}

pub fn convexity_residual<S: Scalar>(path: &ChowPath<S>) -> Result<ConvexityReport<S>> {
    let t = &path.t;
    if t.len() < 3 {
        return Err(Error::InvalidArgument("convexity needs at least 3 grid points".into()));
    }
    if t.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("grid must be strictly increasing".into()));
    }
    let f = path.energy();
    let mut residual = S::max_value().unwrap();
    for i in 1..t.len() - 1 {
        let (h0, h1) = (t[i] - t[i - 1], t[i + 1] - t[i]);
        let d2 = S::lit(2.0) * ((f[i + 1] - f[i]) / h1 - (f[i] - f[i - 1]) / h0) / (h0 + h1);
        residual = residual.min(d2);
    }
    let min_second = path.f_second.iter().copied().fold(S::max_value().unwrap(), S::min);
    let pieces: Vec<Result<S>> = (1..t.len())
        .into_par_iter()
        .map(|i| lobatto_kronrod(path, t[i - 1], t[i], path.f_second[i - 1], path.f_second[i], 0))
        .collect();
    let mut integral = S::zero();
    let mut identity_error = S::zero();
    for (i, p) in pieces.into_iter().enumerate() {
        integral += p?;
        let lhs = path.f_prime[i + 1] - path.f_prime[0];
        identity_error = identity_error.max((lhs - integral).abs());
    }
    Ok(ConvexityReport { residual, identity_error, min_second })
}

/// Relative tolerance on the gap between the two rules, and the depth
/// limit, of the adaptive `f''` integration.
const SECOND_RTOL: f64 = 1e-5;
const SECOND_DEPTH: usize = 6;

/// `int_a^b f''` by the 7-point Kronrod extension of the 4-point
/// Gauss-Lobatto rule, bisecting while the two disagree.
fn lobatto_kronrod<S: Scalar>(path: &ChowPath<S>, a: S, b: S, fa: S, fb: S, depth: usize) -> Result<S> {
    let h = (b - a) / S::lit(2.0);
    let c = (a + b) / S::lit(2.0);
    let (alpha, beta) = (S::lit((2.0f64 / 3.0).sqrt()), S::lit(1.0 / 5.0f64.sqrt()));
    let f = |x: S| path.second_derivative_at(c + h * x);
    let (fm, fp) = (f(-alpha)?, f(alpha)?);
    let (gm, gp) = (f(-beta)?, f(beta)?);
    let fc = f(S::zero())?;
    let kronrod = h
        * (S::lit(11.0 / 210.0) * (fa + fb)
            + S::lit(72.0 / 245.0) * (fm + fp)
            + S::lit(125.0 / 294.0) * (gm + gp)
            + S::lit(16.0 / 35.0) * fc);
    let lobatto = h * (S::lit(1.0 / 6.0) * (fa + fb) + S::lit(5.0 / 6.0) * (gm + gp));
    let scale = h.abs() * (fa.abs() + fb.abs() + fc.abs() + S::one());
    if depth >= SECOND_DEPTH || (kronrod - lobatto).abs() <= S::lit(SECOND_RTOL) * scale {
        return Ok(kronrod);
    }
    Ok(lobatto_kronrod(path, a, c, fa, fc, depth + 1)? + lobatto_kronrod(path, c, b, fc, fb, depth + 1)?)
}

/// Orbit behaviour as `t -> +-infinity`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Closed,
    NotClosedPositiveEnd,
    NotClosedNegativeEnd,
    Fixed,
    Inconclusive,
}

/// Verdict together with the sampled endpoint derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerdictReport<S> {
    pub verdict: Verdict,
    pub f_minus: S,
    pub f_zero: S,
    pub f_plus: S,
    pub noise: S,
}

pub fn asymptotic_verdict<S: Scalar>(
    metric: &AlgebraicMetric<S>,
    transform: Option<&CMat<S>>,
    lambda: &OneParamSubgroup<S>,
    t_max: S,
    quad: &QuadratureScheme<S>,
) -> Result<VerdictReport<S>> {
    if !lambda.special {
        return Err(Error::Precondition("asymptotic verdict requires a special subgroup".into()));
    }
    if !(t_max > S::zero()) {
        return Err(Error::InvalidArgument("t_max must be positive".into()));
    }
    lambda.check_guard(t_max)?;
    let n = metric.dim();
    let noise = S::lit(1e-9)
        * S::from_usize_lossy(n + 1)
        * S::from_usize_lossy(metric.level()).powi(n as i32)
        * metric.volume();
    let grid = [-t_max, S::zero(), t_max];
    let base = PathBase::new(metric, transform, lambda.len())?;
    let vals: Vec<S> = if lambda.is_zero() {
        vec![S::zero(); 3]
    } else {
        grid.iter().map(|&t| Ok(base.derivatives(lambda, t, quad)?.0)).collect::<Result<_>>()?
    };
    let (fm, f0, fp) = (vals[0], vals[1], vals[2]);
    let verdict = if vals.iter().all(|v| v.abs() < noise) {
        Verdict::Fixed
    } else if fm < -noise && fp > noise {
        Verdict::Closed
    } else if fp < -noise {
        Verdict::NotClosedPositiveEnd
    } else if fm > noise {
        Verdict::NotClosedNegativeEnd
    } else {
        Verdict::Inconclusive
    };
    Ok(VerdictReport { verdict, f_minus: fm, f_zero: f0, f_plus: fp, noise })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PolarizedModel;
    use crate::weights::{decompose, SubtorusAction};

    fn fs_line(m: i64) -> AlgebraicMetric<f64> {
        AlgebraicMetric::fubini_study(&PolarizedModel::projective_line(), m).unwrap()
    }

    fn q() -> QuadratureScheme<f64> {
        QuadratureScheme::tensor(1, 96).unwrap()
    }

    #[test]
    fn balanced_line_values() {
        let m = fs_line(1);
        let odd = OneParamSubgroup::new(vec![1.0, -1.0]);
        assert!(first_variation(&m, None, &odd, &q()).unwrap().abs() < 1e-10);
        let one = OneParamSubgroup::new(vec![1.0, 0.0]);
        assert!((first_variation(&m, None, &one, &q()).unwrap() - 1.0).abs() < 1e-10);
        let zero = OneParamSubgroup::new(vec![0.0, 0.0]);
        assert_eq!(first_variation(&m, None, &zero, &q()).unwrap(), 0.0);
    }

    #[test]
    fn constant_weights_give_constant_derivative() {
        let m = fs_line(2);
        let c = 0.7;
        let lam = OneParamSubgroup::new(vec![c; 3]);
        let p = path_profile(&m, None, &lam, &[-1.0, 0.0, 1.0], &q()).unwrap();
        for v in &p.f_prime {
            assert!((v - 2.0 * c * 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn closed_form_second_derivative_matches_differences() {
        let m = fs_line(3).perturbed(0.3, 1, true, None).unwrap();
        let lam = OneParamSubgroup::new(vec![1.0, -0.5, 0.2, -0.7]);
        let p = path_profile(&m, None, &lam, &[-0.5, 0.0, 0.4], &QuadratureScheme::tensor(1, 128).unwrap()).unwrap();
        for (a, b) in p.f_second.iter().zip(&p.f_second_fd) {
            assert!((a - b).abs() < 1e-5 * a.abs().max(1.0), "{a} vs {b}");
            assert!(*a > 0.0);
        }
    }

    #[test]
    fn guard_refuses_large_paths() {
        let m = fs_line(1);
        let lam = OneParamSubgroup::new(vec![100.0, -100.0]);
        assert!(matches!(path_profile(&m, None, &lam, &[0.0, 3.5], &q()), Err(Error::Overflow(_))));
    }

    #[test]
    fn verdicts() {
        let m = fs_line(2);
        let blocks = decompose(m.sections(), &SubtorusAction::trivial(1));
        let lam = OneParamSubgroup::special(&[1, -2, 1], &blocks).unwrap();
        let v = asymptotic_verdict(&m, None, &lam, 5.0, &q()).unwrap();
        assert_eq!(v.verdict, Verdict::Closed);
        let zero = OneParamSubgroup::special(&[0, 0, 0], &blocks).unwrap();
        assert_eq!(asymptotic_verdict(&m, None, &zero, 5.0, &q()).unwrap().verdict, Verdict::Fixed);
        // a linear weight is the torus action itself: the orbit is a point
        let linear = OneParamSubgroup::special(&[1, 0, -1], &blocks).unwrap();
        assert_eq!(asymptotic_verdict(&m, None, &linear, 5.0, &q()).unwrap().verdict, Verdict::Fixed);
        assert!(OneParamSubgroup::<f64>::special(&[1, 0, 0], &blocks).is_err());
    }
}
