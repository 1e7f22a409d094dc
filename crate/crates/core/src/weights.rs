//! Torus actions on the section space, weight-space blocks, index vectors
//! and admissible normal bases.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::SectionSet;
use crate::linalg::{self, CMat};
use crate::scalar::{cabs, Scalar};
use crate::sections::GramMatrix;

/// A subtorus of the big torus, given by its character matrix `Q` (`r x n`).
/// The section `z^u` has character `Q u`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubtorusAction {
    dim: usize,
    q: Vec<Vec<i64>>,
}

impl SubtorusAction {
    /// An all-zero matrix is accepted as the trivial torus.
    pub fn new(dim: usize, q: Vec<Vec<i64>>) -> Result<Self> {
        if q.iter().any(|row| row.len() != dim) {
            return Err(Error::InvalidArgument(format!("character rows must have length {dim}")));
        }
        let q: Vec<Vec<i64>> = if q.iter().all(|r| r.iter().all(|&v| v == 0)) {
            Vec::new()
        } else {
            q
        };
        if integer_rank(&q) != q.len() {
            return Err(Error::InvalidArgument("character matrix rows are dependent".into()));
        }
        Ok(Self { dim, q })
    }

    /// The full torus `(C^*)^n`.
    pub fn full(dim: usize) -> Self {
        let q = (0..dim).map(|i| (0..dim).map(|j| i64::from(i == j)).collect()).collect();
        Self { dim, q }
    }

    pub fn trivial(dim: usize) -> Self {
        Self { dim, q: Vec::new() }
    }

    pub fn rank(&self) -> usize {
        self.q.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &[Vec<i64>] {
        &self.q
    }

    pub fn character(&self, u: &[i64]) -> Vec<i64> {
        self.q.iter().map(|row| row.iter().zip(u).map(|(a, b)| a * b).sum()).collect()
    }
}

pub(crate) fn integer_rank(rows: &[Vec<i64>]) -> usize {
    let mut m: Vec<Vec<i128>> = rows.iter().map(|r| r.iter().map(|&v| v as i128).collect()).collect();
    let cols = m.first().map_or(0, |r| r.len());
    let mut rank = 0;
    for c in 0..cols {
        let Some(p) = (rank..m.len()).find(|&i| m[i][c] != 0) else { continue };
        m.swap(rank, p);
        for i in rank + 1..m.len() {
            let (a, b) = (m[rank][c], m[i][c]);
            if b != 0 {
                for j in 0..cols {
                    m[i][j] = m[i][j] * a - m[rank][j] * b;
                }
                let g = m[i].iter().fold(0i128, |g, &v| gcd(g, v.abs()));
                if g > 1 {
                    m[i].iter_mut().for_each(|v| *v /= g);
                }
            }
        }
        rank += 1;
    }
    rank
}

fn gcd(a: i128, b: i128) -> i128 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Partition of section indices into torus weight spaces.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightBlocks {
    characters: Vec<Vec<i64>>,
    members: Vec<Vec<usize>>,
    len: usize,
}

impl WeightBlocks {
    /// Builds blocks from explicit member lists (used when loading states).
    pub fn from_members(members: Vec<Vec<usize>>) -> Result<Self> {
        let len: usize = members.iter().map(Vec::len).sum();
        let mut seen = vec![false; len];
        for &i in members.iter().flatten() {
            if i >= len || seen[i] {
                return Err(Error::InvalidIndex("blocks do not partition the sections".into()));
            }
            seen[i] = true;
        }
        if members.iter().any(Vec::is_empty) {
            return Err(Error::InvalidIndex("empty block".into()));
        }
        let characters = (0..members.len()).map(|k| vec![k as i64]).collect();
        Ok(Self { characters, members, len })
    }

    /// Blocks with explicit characters.
    pub fn with_characters(characters: Vec<Vec<i64>>, members: Vec<Vec<usize>>) -> Result<Self> {
        if characters.len() != members.len() {
            return Err(Error::InvalidArgument("one character per block is required".into()));
        }
        let mut blocks = Self::from_members(members)?;
        blocks.characters = characters;
        Ok(blocks)
    }

    /// Single block holding every section.
    pub fn single(len: usize) -> Self {
        Self { characters: vec![Vec::new()], members: vec![(0..len).collect()], len }
    }

    /// `nu_m`.
    pub fn count(&self) -> usize {
        self.members.len()
    }

    pub fn total(&self) -> usize {
        self.len
    }

    pub fn dims(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }

    pub fn members(&self, k: usize) -> &[usize] {
        &self.members[k]
    }

    pub fn all_members(&self) -> &[Vec<usize>] {
        &self.members
    }

    pub fn character(&self, k: usize) -> &[i64] {
        &self.characters[k]
    }

    /// `l(k, i) = i + sum_{j<k} n_j` with zero-based `i`.
    pub fn flat_index(&self, k: usize, i: usize) -> Result<usize> {
        if k >= self.count() || i >= self.members[k].len() {
            return Err(Error::InvalidIndex(format!("no element ({k}, {i})")));
        }
        Ok(i + self.members[..k].iter().map(Vec::len).sum::<usize>())
    }

    /// Block and in-block position of section `s`.
    pub fn locate(&self, s: usize) -> Option<(usize, usize)> {
        self.members
            .iter()
            .enumerate()
            .find_map(|(k, m)| m.iter().position(|&x| x == s).map(|i| (k, i)))
    }

    /// Block number of every section.
    pub fn block_of(&self) -> Vec<usize> {
        let mut out = vec![0; self.len];
        for (k, m) in self.members.iter().enumerate() {
            for &s in m {
                out[s] = k;
            }
        }
        out
    }

    /// All blocks one-dimensional.
    pub fn is_full(&self) -> bool {
        self.members.iter().all(|m| m.len() == 1)
    }

    /// Whether `m` has no entries coupling different blocks.
    pub fn is_block_diagonal<S: Scalar>(&self, m: &CMat<S>, tol: S) -> bool {
        let owner = self.block_of();
        (0..self.len).all(|i| {
            (0..self.len).all(|j| owner[i] == owner[j] || cabs(m[(i, j)]) <= tol)
        })
    }
}

/// Groups sections by character value, blocks in lexicographic character order.
pub fn decompose(sections: &SectionSet, action: &SubtorusAction) -> WeightBlocks {
    let mut groups: BTreeMap<Vec<i64>, Vec<usize>> = BTreeMap::new();
    for (i, u) in sections.exponents.iter().enumerate() {
        groups.entry(action.character(u)).or_default().push(i);
    }
    let (characters, members) = groups.into_iter().unzip();
    WeightBlocks { characters, members, len: sections.len() }
}

/// Positive index `b` with `sum_k n_k b_k = N_m + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexVector<S> {
    pub values: Vec<S>,
}

impl<S: Scalar> IndexVector<S> {
    pub fn new(values: Vec<S>, blocks: &WeightBlocks) -> Result<Self> {
        if values.len() != blocks.count() {
            return Err(Error::InvalidIndex(format!(
                "index has {} entries for {} blocks",
                values.len(),
                blocks.count()
            )));
        }
        if values.iter().any(|&b| !(b > S::zero()) || !b.is_finite()) {
            return Err(Error::InvalidIndex("index entries must be positive".into()));
        }
        let target = S::from_usize_lossy(blocks.total());
        let sum = weighted_sum(&values, blocks);
        if (sum - target).abs() > S::lit(1e3) * S::eps() * target {
            return Err(Error::InvalidIndex(format!(
                "sum n_k b_k = {} differs from N_m + 1 = {}",
                sum.to_f64_lossy(),
                blocks.total()
            )));
        }
        Ok(Self { values })
    }

    /// All ones.
    pub fn uniform(blocks: &WeightBlocks) -> Self {
        Self { values: vec![S::one(); blocks.count()] }
    }

    /// Rescales positive values so the index sum holds.
    pub fn normalized(values: Vec<S>, blocks: &WeightBlocks) -> Result<Self> {
        let sum = weighted_sum(&values, blocks);
        let scale = S::from_usize_lossy(blocks.total()) / sum;
        Self::new(values.into_iter().map(|v| v * scale).collect(), blocks)
    }

    /// Entry for each section, `b_{k(s)}`.
    pub fn per_section(&self, blocks: &WeightBlocks) -> Vec<S> {
        blocks.block_of().into_iter().map(|k| self.values[k]).collect()
    }
}

fn weighted_sum<S: Scalar>(values: &[S], blocks: &WeightBlocks) -> S {
    values
        .iter()
        .zip(blocks.dims())
        .fold(S::zero(), |acc, (&b, n)| acc + b * S::from_usize_lossy(n))
}

/// Blockwise transform `X` from the orthonormal basis `sigma` to an admissible
/// normal basis `tau = sigma X`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibleBasis<S: Scalar> {
    pub transform: CMat<S>,
    pub index: IndexVector<S>,
}

/// `X_k = sqrt(b_k) (G_k^{-1/2})^T` on each block, zero across blocks.
pub fn admissible_basis<S: Scalar>(
    gram: &GramMatrix<S>,
    blocks: &WeightBlocks,
    b: &IndexVector<S>,
) -> Result<AdmissibleBasis<S>> {
    let b = IndexVector::new(b.values.clone(), blocks)?;
    let g = &gram.matrix;
    if g.nrows() != blocks.total() {
        return Err(Error::InvalidArgument("Gram size does not match blocks".into()));
    }
    let mut x = CMat::<S>::zeros(g.nrows(), g.ncols());
    for (k, idx) in blocks.all_members().iter().enumerate() {
        let gk = linalg::principal(g, idx);
        let xk = linalg::inv_sqrt(&gk, "Gram block")?.transpose() * nalgebra::Complex::new(b.values[k].sqrt(), S::zero());
        linalg::scatter(&mut x, &xk, idx);
    }
    Ok(AdmissibleBasis { transform: x, index: b })
}

/// Largest Gram entry coupling different blocks.
pub fn block_orthogonality_residual<S: Scalar>(gram: &GramMatrix<S>, blocks: &WeightBlocks) -> S {
    let owner = blocks.block_of();
    let g = &gram.matrix;
    let mut worst = S::zero();
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            if owner[i] != owner[j] {
                worst = worst.max(cabs(g[(i, j)]));
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{enumerate_sections, PolarizedModel};
    use nalgebra::Complex;

    #[test]
    fn projective_line_blocks() {
        let s = enumerate_sections(&PolarizedModel::projective_line(), 2).unwrap();
        let full = decompose(&s, &SubtorusAction::full(1));
        assert_eq!(full.dims(), vec![1, 1, 1]);
        let triv = decompose(&s, &SubtorusAction::new(1, vec![vec![0]]).unwrap());
        assert_eq!(triv.dims(), vec![3]);
    }

    #[test]
    fn square_second_factor() {
        let s = enumerate_sections(&PolarizedModel::product_of_lines(), 1).unwrap();
        let b = decompose(&s, &SubtorusAction::new(2, vec![vec![0, 1]]).unwrap());
        assert_eq!(b.dims(), vec![2, 2]);
        assert_eq!(b.members(0), &[0, 2]);
        assert_eq!(b.flat_index(1, 1).unwrap(), 3);
        assert!(b.flat_index(2, 0).is_err());
    }

    #[test]
    fn dependent_rows_rejected() {
        assert!(SubtorusAction::new(2, vec![vec![1, 2], vec![2, 4]]).is_err());
        assert!(SubtorusAction::new(2, vec![vec![1, 2], vec![2, 3]]).is_ok());
    }

    #[test]
    fn admissible_from_diagonal_gram() {
        let g = GramMatrix {
            matrix: CMat::<f64>::from_diagonal(&nalgebra::DVector::from_vec(vec![
                Complex::new(1.0 / 3.0, 0.0),
                Complex::new(1.0 / 6.0, 0.0),
                Complex::new(1.0 / 3.0, 0.0),
            ])),
        };
        let blocks = WeightBlocks::single(3);
        let a = admissible_basis(&g, &blocks, &IndexVector::uniform(&blocks)).unwrap();
        let want = [3f64.sqrt(), 6f64.sqrt(), 3f64.sqrt()];
        for i in 0..3 {
            assert!((a.transform[(i, i)].re - want[i]).abs() < 1e-14);
        }
        let short = IndexVector { values: vec![2.0 / 3.0] };
        assert!(matches!(admissible_basis(&g, &blocks, &short), Err(Error::InvalidIndex(_))));
    }
}
