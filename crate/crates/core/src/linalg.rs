//! Hermitian matrix helpers built on nalgebra's eigendecomposition.

use nalgebra::{Complex, DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::scalar::{abs2, cplx, Scalar};

/// Dense complex matrix.
pub type CMat<S> = DMatrix<Complex<S>>;

/// Relative eigenvalue floor below which a Hermitian form is treated as singular.
pub const EIGEN_FLOOR: f64 = 1e-12;

pub fn is_diagonal<S: Scalar>(m: &CMat<S>) -> bool {
    let n = m.nrows();
    (0..n).all(|i| (0..n).all(|j| i == j || m[(i, j)] == Complex::new(S::zero(), S::zero())))
}

pub fn hermitize<S: Scalar>(m: &CMat<S>) -> CMat<S> {
    let half = S::lit(0.5);
    let adj = m.adjoint();
    (m + adj).map(|z| z * half)
}

/// Largest `|m_ij - conj(m_ji)|`.
pub fn hermitian_defect<S: Scalar>(m: &CMat<S>) -> S {
    let n = m.nrows();
    let mut worst = S::zero();
    for i in 0..n {
        for j in 0..n {
            let d = abs2(m[(i, j)] - m[(j, i)].conj()).sqrt();
            if d > worst {
                worst = d;
            }
        }
    }
    worst
}

/// Eigenvalues (ascending) and unitary eigenvectors of a Hermitian matrix.
pub fn hermitian_eigen<S: Scalar>(m: &CMat<S>) -> (Vec<S>, CMat<S>) {
    let n = m.nrows();
    if is_diagonal(m) {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| m[(a, a)].re.partial_cmp(&m[(b, b)].re).unwrap());
        let vals = order.iter().map(|&i| m[(i, i)].re).collect();
        let mut vecs = CMat::zeros(n, n);
        for (col, &i) in order.iter().enumerate() {
            vecs[(i, col)] = cplx(S::one());
        }
        return (vals, vecs);
    }
    let eig = SymmetricEigen::new(hermitize(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = CMat::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        vecs.set_column(col, &eig.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// Checks that a Hermitian matrix is positive definite above the relative floor.
pub fn check_positive<S: Scalar>(m: &CMat<S>, what: &str) -> Result<Vec<S>> {
    let (vals, _) = hermitian_eigen(m);
    let max = vals.last().copied().unwrap_or_else(S::zero);
    let min = vals.first().copied().unwrap_or_else(S::zero);
    if !(max > S::zero()) || !(min > max * S::lit(EIGEN_FLOOR)) {
        return Err(Error::SingularMetric(format!(
            "{what}: eigenvalues in [{:e}, {:e}] violate the floor",
            min.to_f64_lossy(),
            max.to_f64_lossy()
        )));
    }
    Ok(vals)
}

/// Index sets of the connected components of the nonzero pattern of `m`.
pub fn components<S: Scalar>(m: &CMat<S>) -> Vec<Vec<usize>> {
    let n = m.nrows();
    let zero = Complex::new(S::zero(), S::zero());
    let mut label = vec![usize::MAX; n];
    let mut out = Vec::new();
    for start in 0..n {
        if label[start] != usize::MAX {
            continue;
        }
        let id = out.len();
        let mut stack = vec![start];
        let mut members = Vec::new();
        label[start] = id;
        while let Some(i) = stack.pop() {
            members.push(i);
            for j in 0..n {
                if label[j] == usize::MAX && (m[(i, j)] != zero || m[(j, i)] != zero) {
                    label[j] = id;
                    stack.push(j);
                }
            }
        }
        members.sort_unstable();
        out.push(members);
    }
    out
}

/// Inverse computed per connected component, so structural zeros stay zero.
pub fn structured_inverse<S: Scalar>(m: &CMat<S>, what: &str) -> Result<CMat<S>> {
    let mut out = CMat::zeros(m.nrows(), m.ncols());
    for idx in components(m) {
        let inv = principal(m, &idx)
            .try_inverse()
            .ok_or_else(|| Error::SingularMetric(format!("{what} is not invertible")))?;
        scatter(&mut out, &inv, &idx);
    }
    Ok(out)
}

/// `m^p` for Hermitian positive definite `m`, computed per connected
/// component of the sparsity pattern; exact on diagonal input.
pub fn hermitian_power<S: Scalar>(m: &CMat<S>, p: S, what: &str) -> Result<CMat<S>> {
    let n = m.nrows();
    if !is_diagonal(m) {
        let comps = components(m);
        if comps.len() > 1 {
            check_positive(m, what)?;
            let mut out = CMat::zeros(n, n);
            for idx in comps {
                scatter(&mut out, &hermitian_power(&principal(m, &idx), p, what)?, &idx);
            }
            return Ok(out);
        }
    }
    if is_diagonal(m) {
        check_positive(m, what)?;
        let mut out = CMat::zeros(n, n);
        for i in 0..n {
            out[(i, i)] = cplx(m[(i, i)].re.powf(p));
        }
        return Ok(out);
    }
    check_positive(m, what)?;
    let (vals, vecs) = hermitian_eigen(m);
    let mut scaled = vecs.clone();
    for (j, v) in vals.iter().enumerate() {
        let f = cplx(v.powf(p));
        for i in 0..n {
            scaled[(i, j)] *= f;
        }
    }
    Ok(hermitize(&(scaled * vecs.adjoint())))
}

/// `exp(m)` for Hermitian `m`.
pub fn hermitian_exp<S: Scalar>(m: &CMat<S>) -> CMat<S> {
    let (vals, vecs) = hermitian_eigen(m);
    let mut scaled = vecs.clone();
    for (j, v) in vals.iter().enumerate() {
        let f = cplx(v.exp());
        for i in 0..m.nrows() {
            scaled[(i, j)] *= f;
        }
    }
    hermitize(&(scaled * vecs.adjoint()))
}

pub fn inv_sqrt<S: Scalar>(m: &CMat<S>, what: &str) -> Result<CMat<S>> {
    hermitian_power(m, S::lit(-0.5), what)
}

/// Determinant of a Hermitian positive definite matrix (real).
pub fn hermitian_det<S: Scalar>(m: &CMat<S>) -> S {
    match m.nrows() {
        0 => S::one(),
        1 => m[(0, 0)].re,
        2 => (m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]).re,
        _ => m.clone().determinant().re,
    }
}

pub fn principal<S: Scalar>(m: &CMat<S>, idx: &[usize]) -> CMat<S> {
    CMat::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])])
}

pub fn scatter<S: Scalar>(target: &mut CMat<S>, block: &CMat<S>, idx: &[usize]) {
    for (i, &gi) in idx.iter().enumerate() {
        for (j, &gj) in idx.iter().enumerate() {
            target[(gi, gj)] = block[(i, j)];
        }
    }
}

pub fn trace_re<S: Scalar>(m: &CMat<S>) -> S {
    (0..m.nrows()).fold(S::zero(), |acc, i| acc + m[(i, i)].re)
}

pub fn identity<S: Scalar>(n: usize) -> CMat<S> {
    CMat::identity(n, n)
}

/// Largest entry modulus of `a - b`.
pub fn max_abs_diff<S: Scalar>(a: &CMat<S>, b: &CMat<S>) -> S {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| abs2(*x - *y).sqrt())
        .fold(S::zero(), |m, v| if v > m { v } else { m })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn herm(seed: u64, n: usize) -> CMat<f64> {
        let mut s = seed;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let a = CMat::<f64>::from_fn(n, n, |_, _| Complex::new(next(), next()));
        &a * a.adjoint() + CMat::identity(n, n)
    }

    #[test]
    fn inverse_square_root_squares_to_inverse() {
        let m = herm(7, 4);
        let r = inv_sqrt(&m, "m").unwrap();
        let prod = &r * &r * &m;
        assert!(max_abs_diff(&prod, &identity(4)) < 1e-12);
    }

    #[test]
    fn diagonal_power_is_exact() {
        let m = CMat::<f64>::from_diagonal(&nalgebra::DVector::from_vec(vec![
            cplx(4.0),
            cplx(9.0),
        ]));
        let r = inv_sqrt(&m, "m").unwrap();
        assert_eq!(r[(0, 0)].re, 0.5);
        assert_eq!(r[(0, 1)], Complex::new(0.0, 0.0));
    }

    #[test]
    fn floor_rejects_singular() {
        let mut m = identity::<f64>(2);
        m[(1, 1)] = cplx(1e-14);
        assert!(matches!(check_positive(&m, "m"), Err(Error::SingularMetric(_))));
    }

    #[test]
    fn eigen_sorted_and_unitary() {
        let m = herm(3, 5);
        let (vals, vecs) = hermitian_eigen(&m);
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        let u = &vecs.adjoint() * &vecs;
        assert!(max_abs_diff(&u, &identity(5)) < 1e-12);
    }
}
