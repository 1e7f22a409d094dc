//! Exact orbit-closedness tests for torus representations and a sampling
//! probe for stability relative to a torus.
//!
//! For weights `chi_alpha` of the support of a point `w`, the torus orbit of
//! `w` is closed iff `0` lies in the relative interior of the convex hull of
//! the weights. Equivalently no nonzero direction `A` has `chi(A) >= 0` on every
//! weight with one inequality strict. All decisions are made in exact integer
//! arithmetic.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chow::{asymptotic_verdict, OneParamSubgroup, Verdict};
use crate::error::{Error, Result};
use crate::geometry::QuadratureScheme;
use crate::linalg::{self, CMat};
use crate::scalar::Scalar;
use crate::sections::AlgebraicMetric;
use crate::weights::WeightBlocks;

/// Weights `chi_alpha in Z^r` of the support of a point.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightConfiguration {
    rank: usize,
    weights: Vec<Vec<i64>>,
}

impl WeightConfiguration {
    pub fn new(weights: Vec<Vec<i64>>) -> Result<Self> {
        let rank = match weights.first() {
            Some(w) => w.len(),
            None => return Err(Error::InvalidArgument("empty support".into())),
        };
        if rank == 0 || weights.iter().any(|w| w.len() != rank) {
            return Err(Error::InvalidArgument("weights must share a positive length".into()));
        }
        Ok(Self { rank, weights })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn weights(&self) -> &[Vec<i64>] {
        &self.weights
    }

    /// `chi_alpha(A)` for every weight.
    pub fn pairings(&self, a: &[i64]) -> Vec<i128> {
        self.weights
            .iter()
            .map(|w| w.iter().zip(a).map(|(&x, &y)| x as i128 * y as i128).sum())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrbitStatus {
    Closed,
    NotClosed,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    pub status: OrbitStatus,
    /// Integer direction with `chi(A) >= 0` for all weights, one strict.
    pub witness: Option<Vec<i64>>,
    /// `0` lies in the hull (closed orbits and boundary cases).
    pub semistable: bool,
}

/// One-dimensional torus: closed iff the weights take both signs.
pub fn orbit_closed_1ps(support_weights: &[i64]) -> Result<StabilityVerdict> {
    let config = WeightConfiguration::new(support_weights.iter().map(|&w| vec![w]).collect())?;
    Ok(torus_stable(&config))
}

fn gcd(a: i128, b: i128) -> i128 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Fraction-free determinant; `None` on overflow.
fn bareiss(mut m: Vec<Vec<i128>>) -> Option<i128> {
    let n = m.len();
    if n == 0 {
        return Some(1);
    }
    let mut sign = 1i128;
    let mut prev = 1i128;
    for k in 0..n - 1 {
        if m[k][k] == 0 {
            let Some(p) = (k + 1..n).find(|&i| m[i][k] != 0) else { return Some(0) };
            m.swap(k, p);
            sign = -sign;
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let v = m[i][j].checked_mul(m[k][k])?.checked_sub(m[i][k].checked_mul(m[k][j])?)?;
                m[i][j] = v / prev;
            }
        }
        prev = m[k][k];
    }
    Some(sign * m[n - 1][n - 1])
}

/// Columns on which the weights keep their full rank, and that rank.
fn independent_columns(weights: &[Vec<i64>], r: usize) -> Vec<usize> {
    let mut cols: Vec<usize> = Vec::new();
    let mut rank = 0;
    for c in 0..r {
        let mut trial = cols.clone();
        trial.push(c);
        let rows: Vec<Vec<i64>> = weights.iter().map(|w| trial.iter().map(|&j| w[j]).collect()).collect();
        let rk = crate::weights::integer_rank(&transpose(&rows));
        if rk > rank {
            rank = rk;
            cols = trial;
        }
    }
    cols
}

fn transpose(rows: &[Vec<i64>]) -> Vec<Vec<i64>> {
    if rows.is_empty() {
        return Vec::new();
    }
    (0..rows[0].len()).map(|j| rows.iter().map(|r| r[j]).collect()).collect()
}

/// Kernel direction of `rows` (`len = d - 1` rows in `Z^d`) by signed minors.
fn cross(rows: &[Vec<i128>], d: usize) -> Option<Vec<i128>> {
    (0..d)
        .map(|c| {
            let minor: Vec<Vec<i128>> =
                rows.iter().map(|r| r.iter().enumerate().filter(|&(j, _)| j != c).map(|(_, &v)| v).collect()).collect();
            let det = bareiss(minor)?;
            Some(if c % 2 == 0 { det } else { -det })
        })
        .collect()
}

fn reduce(v: &mut [i128]) {
    let g = v.iter().fold(0, |g, &x| gcd(g, x));
    if g > 1 {
        v.iter_mut().for_each(|x| *x /= g);
    }
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

/// Exact verdict for a torus representation.
pub fn torus_stable(config: &WeightConfiguration) -> StabilityVerdict {
    let weights = &config.weights;
    if weights.iter().all(|w| w.iter().all(|&v| v == 0)) {
        return StabilityVerdict { status: OrbitStatus::Fixed, witness: None, semistable: true };
    }
    let cols = independent_columns(weights, config.rank);
    let d = cols.len();
    let k: Vec<Vec<i128>> = weights.iter().map(|w| cols.iter().map(|&c| w[c] as i128).collect()).collect();
    let distinct: Vec<Vec<i128>> = {
        let mut v: Vec<Vec<i128>> = k.iter().filter(|r| r.iter().any(|&x| x != 0)).cloned().collect();
        v.sort();
        v.dedup();
        v
    };
    let eval = |y: &[i128]| -> Vec<i128> { k.iter().map(|r| r.iter().zip(y).map(|(a, b)| a * b).sum()).collect() };
    let mut rays: Vec<Vec<i128>> = Vec::new();
    for subset in combinations(distinct.len(), d - 1) {
        let rows: Vec<Vec<i128>> = subset.iter().map(|&i| distinct[i].clone()).collect();
        let Some(mut dir) = cross(&rows, d) else { continue };
        if dir.iter().all(|&x| x == 0) {
            continue;
        }
        reduce(&mut dir);
        for sign in [1i128, -1] {
            let y: Vec<i128> = dir.iter().map(|&x| sign * x).collect();
            let vals = eval(&y);
            if vals.iter().all(|&v| v >= 0) && vals.iter().any(|&v| v > 0) && !rays.contains(&y) {
                rays.push(y);
            }
        }
    }
    if rays.is_empty() {
        return StabilityVerdict { status: OrbitStatus::Closed, witness: None, semistable: true };
    }
    let mut sum = vec![0i128; d];
    for r in &rays {
        for (s, v) in sum.iter_mut().zip(r) {
            *s += v;
        }
    }
    let strictly_positive = eval(&sum).iter().all(|&v| v > 0);
    let witness_y = &rays[0];
    let mut witness = vec![0i64; config.rank];
    for (pos, &c) in cols.iter().enumerate() {
        witness[c] = witness_y[pos] as i64;
    }
    StabilityVerdict { status: OrbitStatus::NotClosed, witness: Some(witness), semistable: !strictly_positive }
}

/// Checks on `n_samples` random real directions (and on directions lying on
/// each weight hyperplane) that some pair of weights takes opposite strict
/// signs. Requires a closed configuration.
pub fn covering_consistency(config: &WeightConfiguration, n_samples: usize, seed: u64) -> Result<bool> {
    let verdict = torus_stable(config);
    if verdict.status != OrbitStatus::Closed {
        return Err(Error::Precondition("covering check needs a closed orbit".into()));
    }
    let r = config.rank;
    let w: Vec<Vec<f64>> = config.weights.iter().map(|v| v.iter().map(|&x| x as f64).collect()).collect();
    let basis = orthonormal_span(&w, r);
    let project = |a: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; r];
        for b in &basis {
            let c: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            for (o, y) in out.iter_mut().zip(b) {
                *o += c * y;
            }
        }
        out
    };
    let covered = |a: &[f64]| -> bool {
        let norm: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-9 {
            return true;
        }
        let vals: Vec<f64> = w.iter().map(|wi| wi.iter().zip(a).map(|(x, y)| x * y).sum::<f64>() / norm).collect();
        vals.iter().any(|&v| v > 1e-12) && vals.iter().any(|&v| v < -1e-12)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..n_samples {
        let a: Vec<f64> = (0..r).map(|_| StandardNormal.sample(&mut rng)).collect();
        if !covered(&project(&a)) {
            return Ok(false);
        }
    }
    for wi in &w {
        let n2: f64 = wi.iter().map(|x| x * x).sum();
        if n2 == 0.0 {
            continue;
        }
        let a: Vec<f64> = (0..r).map(|_| StandardNormal.sample(&mut rng)).collect();
        let a = project(&a);
        let c: f64 = a.iter().zip(wi).map(|(x, y)| x * y).sum::<f64>() / n2;
        let on_plane: Vec<f64> = a.iter().zip(wi).map(|(x, y)| x - c * y).collect();
        if !covered(&on_plane) {
            return Ok(false);
        }
    }
    Ok(true)
}

fn orthonormal_span(w: &[Vec<f64>], r: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for v in w {
        let mut u = v.clone();
        for b in &basis {
            let c: f64 = u.iter().zip(b).map(|(x, y)| x * y).sum();
            u.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
        let n: f64 = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-9 {
            basis.push(u.into_iter().map(|x| x / n).collect());
        }
        if basis.len() == r {
            break;
        }
    }
    basis
}

/// Outcome of [`relative_stability_probe`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub seed: u64,
    /// Integer weights of each probed subgroup, in its probe basis.
    pub directions: Vec<Vec<i64>>,
    pub verdicts: Vec<Verdict>,
    /// Indices of directions with a not-closed verdict.
    pub witnesses: Vec<usize>,
    pub inconclusive: usize,
    /// No directions were probed.
    pub vacuous: bool,
}

impl ProbeReport {
    pub fn passed(&self) -> bool {
        self.witnesses.is_empty()
    }
}

/// Samples special one-parameter subgroups of `prod SL(V(chi_k))` and runs
/// the asymptotic Chow verdict on each, at `t_max / 8, t_max / 4, t_max / 2`
/// and `t_max`. By convexity a closed verdict at any of these is final; other
/// verdicts are read at `t_max`. When the state's orthonormal basis is
/// monomial, the generators of the big torus (made block-traceless) are
/// probed first; remaining directions are random integer block-traceless
/// weights in a randomly rotated orthonormal basis.
pub fn relative_stability_probe<S: Scalar>(
    state: &AlgebraicMetric<S>,
    blocks: &WeightBlocks,
    n_directions: usize,
    t_max: S,
    seed: u64,
    quad: &QuadratureScheme<S>,
) -> Result<ProbeReport> {
    let k = state.len();
    if blocks.total() != k {
        return Err(Error::InvalidArgument("blocks do not match the section count".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut plans: Vec<(Vec<i64>, CMat<S>)> = Vec::new();
    if linalg::is_diagonal(state.basis()) {
        let exps = &state.sections().exponents;
        for xi in 0..state.dim() {
            if plans.len() == n_directions {
                break;
            }
            let mut gamma = vec![0i64; k];
            for idx in blocks.all_members() {
                let total: i64 = idx.iter().map(|&i| exps[i][xi]).sum();
                for &i in idx {
                    gamma[i] = idx.len() as i64 * exps[i][xi] - total;
                }
            }
            plans.push((gamma, CMat::<S>::identity(k, k)));
        }
    }
    while plans.len() < n_directions {
        let mut gamma = vec![0i64; k];
        for idx in blocks.all_members() {
            let mut sum = 0;
            for &i in &idx[..idx.len() - 1] {
                let g = rng.random_range(-3..=3i64);
                gamma[i] = g;
                sum += g;
            }
            gamma[*idx.last().unwrap()] = -sum;
        }
        plans.push((gamma, random_block_unitary(blocks, &mut rng)));
    }
    let results: Vec<Result<Verdict>> = plans
        .par_iter()
        .map(|(gamma, rot)| {
            let lambda = OneParamSubgroup::<S>::special(gamma, blocks)?;
            let mut last = Verdict::Inconclusive;
            for div in [8.0, 4.0, 2.0, 1.0] {
                last = asymptotic_verdict(state, Some(rot), &lambda, t_max / S::lit(div), quad)?.verdict;
                if last == Verdict::Closed {
                    break;
                }
            }
            Ok(last)
        })
        .collect();
    let verdicts = results.into_iter().collect::<Result<Vec<_>>>()?;
    let witnesses = verdicts
        .iter()
        .enumerate()
        .filter(|(_, v)| matches!(v, Verdict::NotClosedPositiveEnd | Verdict::NotClosedNegativeEnd))
        .map(|(i, _)| i)
        .collect();
    let inconclusive = verdicts.iter().filter(|v| **v == Verdict::Inconclusive).count();
    Ok(ProbeReport {
        seed,
        directions: plans.into_iter().map(|(g, _)| g).collect(),
        verdicts,
        witnesses,
        inconclusive,
        vacuous: n_directions == 0,
    })
}

/// Block-diagonal unitary from the QR factors of Gaussian blocks.
fn random_block_unitary<S: Scalar>(blocks: &WeightBlocks, rng: &mut ChaCha8Rng) -> CMat<S> {
    let k = blocks.total();
    let mut u = CMat::<S>::zeros(k, k);
    for idx in blocks.all_members() {
        let n = idx.len();
        let z = CMat::<S>::from_fn(n, n, |_, _| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            nalgebra::Complex::new(S::lit(re), S::lit(im))
        });
        let q = z.qr().q();
        linalg::scatter(&mut u, &q, idx);
    }
    u
}
