//! Elementary symmetric functions of spectra and symmetric matrices.

use crate::error::{invalid, Result};
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

/// Tolerance used for membership in the Gårding cones.
pub const CONE_TOL: f64 = 1e-9;

/// Largest supported ambient dimension.
pub const MAX_DIM: usize = 8;

/// Binomial coefficient as a float, zero when `k > n`.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut c = 1.0;
    for i in 0..k {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c.round()
}

/// All of `S_0, ..., S_n` for the given values.
///
/// Expands `prod (1 + λ_i t)` one factor at a time, so `S_n` is formed as a
/// plain product and no power sums are involved.
pub fn elementary_symmetric_all(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut e = vec![0.0; n + 1];
    e[0] = 1.0;
    for (i, &l) in values.iter().enumerate() {
        for j in (1..=i + 1).rev() {
            e[j] += l * e[j - 1];
        }
    }
    e
}

/// `S_k` of the values; `S_0 = 1` and `S_k = 0` for `k` above the length.
pub fn elementary_symmetric(values: &[f64], k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > values.len() {
        return 0.0;
    }
    let mut e = vec![0.0; k + 1];
    e[0] = 1.0;
    for (i, &l) in values.iter().enumerate() {
        for j in (1..=(i + 1).min(k)).rev() {
            e[j] += l * e[j - 1];
        }
    }
    e[k]
}

/// `S_k` of the values with entry `skip` removed.
pub fn elementary_symmetric_without(values: &[f64], skip: usize, k: usize) -> f64 {
    let rest: Vec<f64> = values
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != skip)
        .map(|(_, &v)| v)
        .collect();
    elementary_symmetric(&rest, k)
}

/// A validated spectrum with `1 <= n <= 8` finite entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum(Vec<f64>);

impl Spectrum {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.len() > MAX_DIM {
            return invalid(format!("spectrum length {} outside 1..={MAX_DIM}", values.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return invalid("spectrum has a non-finite entry");
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn sk(&self, k: usize) -> Result<f64> {
        check_k(k, self.dim())?;
        Ok(elementary_symmetric(&self.0, k))
    }

    /// Membership in `Γ_k = {S_1 >= 0, ..., S_k >= 0}` up to [`CONE_TOL`].
    pub fn in_gamma(&self, k: usize) -> Result<bool> {
        check_k(k, self.dim())?;
        let e = elementary_symmetric_all(&self.0);
        Ok(e[1..=k].iter().all(|&s| s >= -CONE_TOL))
    }
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k > n {
        return invalid(format!("k = {k} exceeds ambient dimension {n}"));
    }
    Ok(())
}

/// A real symmetric matrix stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    /// Validates shape, finiteness and symmetry (relative tolerance 1e-12).
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || n > MAX_DIM || data.len() != n * n {
            return invalid(format!("matrix of order {n} with {} entries", data.len()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return invalid("matrix has a non-finite entry");
        }
        let scale = data.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for i in 0..n {
            for j in 0..i {
                if (data[i * n + j] - data[j * n + i]).abs() > 1e-12 * scale {
                    return invalid(format!("matrix is not symmetric at ({i}, {j})"));
                }
            }
        }
        let mut m = Self { n, data };
        m.symmetrize();
        Ok(m)
    }

    /// Builds without validation; the caller guarantees symmetry.
    pub(crate) fn from_raw(n: usize, data: Vec<f64>) -> Self {
        Self { n, data }
    }

    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        let n = d.len();
        let mut m = Self::zeros(n);
        for (i, &v) in d.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
    }

    /// `V diag(d) V^T` where the columns of `v` (row-major, n×n) are eigenvectors.
    pub(crate) fn from_eigen(d: &[f64], v: &[f64]) -> Self {
        let n = d.len();
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in i..n {
                let s: f64 = (0..n).map(|l| v[i * n + l] * d[l] * v[j * n + l]).sum();
                m.data[i * n + j] = s;
                m.data[j * n + i] = s;
            }
        }
        m
    }

    fn symmetrize(&mut self) {
        let n = self.n;
        for i in 0..n {
            for j in 0..i {
                let a = 0.5 * (self.data[i * n + j] + self.data[j * n + i]);
                self.data[i * n + j] = a;
                self.data[j * n + i] = a;
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    /// Frobenius inner product `sum_ij a_ij b_ij`.
    pub fn contract(&self, other: &SymMatrix) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn frobenius(&self) -> f64 {
        self.contract(self).sqrt()
    }

    pub fn matmul(&self, other: &SymMatrix) -> DMatrix<f64> {
        self.to_dmatrix() * other.to_dmatrix()
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.data)
    }

    /// `x^T A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let n = self.n;
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += x[i] * self.data[i * n + j] * y[j];
            }
        }
        s
    }

    pub fn scaled(&self, c: f64) -> SymMatrix {
        Self { n: self.n, data: self.data.iter().map(|v| c * v).collect() }
    }

    pub fn sub(&self, other: &SymMatrix) -> SymMatrix {
        Self {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.eigen().0
    }

    /// Ascending eigenvalues and the matching eigenvectors as columns of a
    /// row-major matrix.
    pub fn eigen(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.n;
        if n == 1 {
            return (vec![self.data[0]], vec![1.0]);
        }
        if n == 2 {
            return eigen2(self.data[0], self.data[1], self.data[3]);
        }
        let se = SymmetricEigen::new(self.to_dmatrix());
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
        let vals = order.iter().map(|&i| se.eigenvalues[i]).collect();
        let mut vecs = vec![0.0; n * n];
        for (c, &i) in order.iter().enumerate() {
            for r in 0..n {
                vecs[r * n + c] = se.eigenvectors[(r, i)];
            }
        }
        (vals, vecs)
    }
}

fn eigen2(a: f64, b: f64, d: f64) -> (Vec<f64>, Vec<f64>) {
    let m = 0.5 * (a + d);
    let r = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    let (l1, l2) = (m - r, m + r);
    if b == 0.0 {
        return if a <= d {
            (vec![a, d], vec![1.0, 0.0, 0.0, 1.0])
        } else {
            (vec![d, a], vec![0.0, 1.0, 1.0, 0.0])
        };
    }
    // Eigenvector for l2 from the better-conditioned row.
    let (vx, vy) = if (l2 - a).abs() >= (l2 - d).abs() { (b, l2 - a) } else { (l2 - d, b) };
    let nrm = vx.hypot(vy);
    let (cx, cy) = (vx / nrm, vy / nrm);
    (vec![l1, l2], vec![-cy, cx, cx, cy])
}

/// `S_k` of the eigenvalues of `a`.
pub fn sk_matrix(a: &SymMatrix, k: usize) -> Result<f64> {
    check_k(k, a.dim())?;
    if k == 0 {
        return Ok(1.0);
    }
    if a.dim() == 2 {
        let (p, q, r) = (a.get(0, 0), a.get(0, 1), a.get(1, 1));
        return Ok(if k == 1 { p + r } else { p * r - q * q });
    }
    Ok(elementary_symmetric(&a.eigenvalues(), k))
}

/// The tensor `S_k^{ij}(A) = ∂S_k/∂a_ij`, so that `S_k = (1/k) S_k^{ij} a_ij`.
///
/// Built in the eigenbasis, where it is diagonal with entries
/// `S_{k-1}(λ | i)`.
pub fn sk_ij(a: &SymMatrix, k: usize) -> Result<SymMatrix> {
    check_k(k, a.dim())?;
    if k == 0 {
        return invalid("S_0 has no derivative tensor");
    }
    let n = a.dim();
    if n == 2 {
        let (p, q, r) = (a.get(0, 0), a.get(0, 1), a.get(1, 1));
        return Ok(if k == 1 {
            SymMatrix::identity(2)
        } else {
            SymMatrix::from_raw(2, vec![r, -q, -q, p])
        });
    }
    let (vals, vecs) = a.eigen();
    let d: Vec<f64> = (0..n).map(|i| elementary_symmetric_without(&vals, i, k - 1)).collect();
    Ok(SymMatrix::from_eigen(&d, &vecs))
}

/// The normalized chain `(S_j / C(n, j))^{1/j}` for `j = 1..n`.
///
/// An entry is `None` from the first `j` with `S_j < 0` onward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewtonChain {
    pub terms: Vec<Option<f64>>,
}

impl NewtonChain {
    /// True when all defined terms are non-increasing up to `tol`
    /// (relative to the first term).
    pub fn is_non_increasing(&self, tol: f64) -> bool {
        let defined: Vec<f64> = self.terms.iter().map_while(|t| *t).collect();
        let scale = defined.first().map_or(1.0, |v| v.abs().max(1.0));
        defined.windows(2).all(|w| w[1] <= w[0] + tol * scale)
    }

    pub fn is_complete(&self) -> bool {
        self.terms.iter().all(Option::is_some)
    }
}

pub fn newton_chain(spec: &Spectrum) -> NewtonChain {
    let n = spec.dim();
    let e = elementary_symmetric_all(spec.values());
    let mut terms = Vec::with_capacity(n);
    let mut broken = false;
    for (j, &s) in e.iter().enumerate().skip(1) {
        if broken || s < 0.0 {
            broken = true;
            terms.push(None);
        } else {
            terms.push(Some((s / binomial(n, j)).powf(1.0 / j as f64)));
        }
    }
    NewtonChain { terms }
}

/// `(S_k / C(n,k))^{(k+1)/k} - S_{k+1} / C(n,k+1)`, non-negative on `Γ_{k+1}`.
/// The second term vanishes when `k = n`.
pub fn newton_deficit(values: &[f64], k: usize) -> f64 {
    let n = values.len();
    let sk = elementary_symmetric(values, k) / binomial(n, k);
    let lead = sk.max(0.0).powf((k + 1) as f64 / k as f64);
    if k >= n {
        lead
    } else {
        lead - elementary_symmetric(values, k + 1) / binomial(n, k + 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomials() {
        assert_eq!(binomial(5, 2), 10.0);
        assert_eq!(binomial(8, 8), 1.0);
        assert_eq!(binomial(3, 4), 0.0);
    }

    #[test]
    fn sk_of_123() {
        let s = Spectrum::new(vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.sk(1).unwrap(), 6.0);
        assert_eq!(s.sk(2).unwrap(), 11.0);
        assert_eq!(s.sk(3).unwrap(), 6.0);
        assert!(s.sk(4).is_err());
    }

    #[test]
    fn rejects_bad_spectra() {
        assert!(Spectrum::new(vec![]).is_err());
        assert!(Spectrum::new(vec![1.0; 9]).is_err());
        assert!(Spectrum::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn cone_example() {
        let s = Spectrum::new(vec![1.0, 1.0, -0.4]).unwrap();
        assert!(s.in_gamma(2).unwrap());
        assert!(!s.in_gamma(3).unwrap());
    }

    #[test]
    fn chain_example() {
        let s = Spectrum::new(vec![1.0, 2.0, 3.0]).unwrap();
        let c = newton_chain(&s);
        let want = [2.0, (11.0f64 / 3.0).sqrt(), 6f64.powf(1.0 / 3.0)];
        for (t, w) in c.terms.iter().zip(want) {
            assert!((t.unwrap() - w).abs() < 1e-12);
        }
        assert!(c.is_non_increasing(0.0));
    }

    #[test]
    fn chain_breaks_on_negative() {
        let c = newton_chain(&Spectrum::new(vec![1.0, 1.0, -0.4]).unwrap());
        assert!(c.terms[1].is_some());
        assert!(c.terms[2].is_none());
    }

    #[test]
    fn non_symmetric_rejected() {
        assert!(SymMatrix::new(2, vec![1.0, 2.0, 2.1, 1.0]).is_err());
    }

    #[test]
    fn tensor_in_two_dimensions() {
        let a = SymMatrix::new(2, vec![2.0, 0.5, 0.5, 3.0]).unwrap();
        let t = sk_ij(&a, 2).unwrap();
        assert_eq!(t.as_slice(), &[3.0, -0.5, -0.5, 2.0]);
        assert_eq!(sk_matrix(&a, 2).unwrap(), 5.75);
    }

    #[test]
    fn eigen2_matches_general() {
        let a = SymMatrix::new(2, vec![1.0, 0.3, 0.3, -2.0]).unwrap();
        let (v, w) = a.eigen();
        let g = SymmetricEigen::new(a.to_dmatrix());
        let mut gv: Vec<f64> = g.eigenvalues.iter().copied().collect();
        gv.sort_by(f64::total_cmp);
        assert!((v[0] - gv[0]).abs() < 1e-14 && (v[1] - gv[1]).abs() < 1e-14);
        let back = SymMatrix::from_eigen(&v, &w);
        assert!(back.sub(&a).frobenius() < 1e-14);
    }
}
