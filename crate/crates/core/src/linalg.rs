//! Dense complex matrices: norms, Hermitian eigensystems, SVD, functional
//! calculus, range projections and the matrix exponential.
//!
//! Everything here is desk scale (at most a few hundred rows). Eigen- and
//! singular-value decompositions use cyclic Jacobi sweeps, which are slow for
//! large inputs but accurate to working precision on small ones.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };
pub const I: C64 = C64 { re: 0.0, im: 1.0 };

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Row-major dense complex matrix.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                let z = self[(i, j)];
                write!(f, "{:>9.4}{:+.4}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::input(format!(
                "matrix data has {} entries, expected {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds from real rows; convenient for literals in tests and examples.
    pub fn from_real(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let cc = if r == 0 { 0 } else { rows[0].len() };
        Self::from_fn(r, cc, |i, j| c(rows[i][j], 0.0))
    }

    pub fn from_rows(rows: &[Vec<C64>]) -> Self {
        let r = rows.len();
        let cc = if r == 0 { 0 } else { rows[0].len() };
        Self::from_fn(r, cc, |i, j| rows[i][j])
    }

    pub fn diag_real(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &x) in d.iter().enumerate() {
            m[(i, i)] = c(x, 0.0);
        }
        m
    }

    pub fn diag(d: &[C64]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &x) in d.iter().enumerate() {
            m[(i, i)] = x;
        }
        m
    }

    /// Matrix unit `E_ij` of the given shape.
    pub fn unit(rows: usize, cols: usize, i: usize, j: usize) -> Self {
        let mut m = Self::zeros(rows, cols);
        m[(i, j)] = ONE;
        m
    }

    pub fn column(v: &[C64]) -> Self {
        Self {
            rows: v.len(),
            cols: 1,
            data: v.to_vec(),
        }
    }

    pub fn random_gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        Self::from_fn(rows, cols, |_, _| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            c(re, im) * std::f64::consts::FRAC_1_SQRT_2
        })
    }

    pub fn random_hermitian<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let g = Self::random_gaussian(n, n, rng);
        (&g + &g.adjoint()).scale_real(0.5)
    }

    pub fn random_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let g = Self::random_gaussian(n, n, rng);
        orthonormalize_columns(&g, 0.0)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<C64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn ensure_finite(&self) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::input("matrix has non-finite entries"))
        }
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn conj(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn scale_real(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    /// `self += s * other`
    pub fn axpy(&mut self, s: C64, other: &CMatrix) {
        assert_eq!(self.shape(), other.shape(), "axpy shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn matmul(&self, other: &CMatrix) -> CMatrix {
        assert_eq!(
            self.cols, other.rows,
            "matmul shape mismatch {:?} x {:?}",
            self.shape(),
            other.shape()
        );
        let mut out = CMatrix::zeros(self.rows, other.cols);
        let n = other.cols;
        for i in 0..self.rows {
            let orow = &mut out.data[i * n..(i + 1) * n];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a.re == 0.0 && a.im == 0.0 {
                    continue;
                }
                let brow = &other.data[k * n..(k + 1) * n];
                for (o, b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self^* other` without forming the adjoint.
    pub fn adjoint_mul(&self, other: &CMatrix) -> CMatrix {
        assert_eq!(self.rows, other.rows, "adjoint_mul shape mismatch");
        let mut out = CMatrix::zeros(self.cols, other.cols);
        let n = other.cols;
        for k in 0..self.rows {
            let arow = self.row(k);
            let brow = other.row(k);
            for (i, a) in arow.iter().enumerate() {
                let a = a.conj();
                if a.re == 0.0 && a.im == 0.0 {
                    continue;
                }
                let orow = &mut out.data[i * n..(i + 1) * n];
                for (o, b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn kron(&self, other: &CMatrix) -> CMatrix {
        let (r1, c1) = self.shape();
        let (r2, c2) = other.shape();
        CMatrix::from_fn(r1 * r2, c1 * c2, |i, j| {
            self[(i / r2, j / c2)] * other[(i % r2, j % c2)]
        })
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frob_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Frobenius inner product `tr(self^* other)`.
    pub fn inner(&self, other: &CMatrix) -> C64 {
        assert_eq!(self.shape(), other.shape());
        self.data.iter().zip(&other.data).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn hermitian_part(&self) -> CMatrix {
        (self + &self.adjoint()).scale_real(0.5)
    }

    pub fn hermitian_defect(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let mut d: f64 = 0.0;
        for i in 0..self.rows {
            for j in i..self.cols {
                d = d.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        d
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermitian_defect() <= tol * self.max_abs().max(1.0)
    }

    pub fn submatrix(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> CMatrix {
        CMatrix::from_fn(rows, cols, |i, j| self[(r0 + i, c0 + j)])
    }

    pub fn set_block(&mut self, r0: usize, c0: usize, block: &CMatrix) {
        for i in 0..block.rows {
            for j in 0..block.cols {
                self[(r0 + i, c0 + j)] = block[(i, j)];
            }
        }
    }

    pub fn add_block(&mut self, r0: usize, c0: usize, block: &CMatrix, s: C64) {
        for i in 0..block.rows {
            for j in 0..block.cols {
                self[(r0 + i, c0 + j)] += s * block[(i, j)];
            }
        }
    }

    pub fn vstack(blocks: &[&CMatrix]) -> CMatrix {
        let cols = blocks.first().map_or(0, |b| b.cols);
        let rows = blocks.iter().map(|b| b.rows).sum();
        let mut out = CMatrix::zeros(rows, cols);
        let mut r = 0;
        for b in blocks {
            assert_eq!(b.cols, cols, "vstack column mismatch");
            out.set_block(r, 0, b);
            r += b.rows;
        }
        out
    }

    pub fn hstack(blocks: &[&CMatrix]) -> CMatrix {
        let rows = blocks.first().map_or(0, |b| b.rows);
        let cols = blocks.iter().map(|b| b.cols).sum();
        let mut out = CMatrix::zeros(rows, cols);
        let mut cc = 0;
        for b in blocks {
            assert_eq!(b.rows, rows, "hstack row mismatch");
            out.set_block(0, cc, b);
            cc += b.cols;
        }
        out
    }

    pub fn block_diag(blocks: &[&CMatrix]) -> CMatrix {
        let rows = blocks.iter().map(|b| b.rows).sum();
        let cols = blocks.iter().map(|b| b.cols).sum();
        let mut out = CMatrix::zeros(rows, cols);
        let (mut r, mut cc) = (0, 0);
        for b in blocks {
            out.set_block(r, cc, b);
            r += b.rows;
            cc += b.cols;
        }
        out
    }

    pub fn dist(&self, other: &CMatrix) -> f64 {
        (self - other).max_abs()
    }
}

impl Add for &CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.shape(), rhs.shape(), "add shape mismatch");
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.shape(), rhs.shape(), "sub shape mismatch");
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Mul for &CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        self.matmul(rhs)
    }
}

impl Neg for &CMatrix {
    type Output = CMatrix;
    fn neg(self) -> CMatrix {
        self.scale_real(-1.0)
    }
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct HermEig {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl HermEig {
    pub fn reconstruct(&self, f: impl Fn(f64) -> C64) -> CMatrix {
        let n = self.values.len();
        let u = &self.vectors;
        let fv: Vec<C64> = self.values.iter().map(|&x| f(x)).collect();
        CMatrix::from_fn(n, n, |i, j| {
            (0..n).map(|k| u[(i, k)] * fv[k] * u[(j, k)].conj()).sum()
        })
    }
}

const HERM_TOL: f64 = 1e-10;

/// Hermitian eigensolver.
pub fn herm_eig(a: &CMatrix) -> Result<HermEig> {
    a.ensure_finite()?;
    if !a.is_square() {
        return Err(Error::input("herm_eig requires a square matrix"));
    }
    if !a.is_hermitian(HERM_TOL) {
        return Err(Error::input(format!(
            "herm_eig requires a Hermitian matrix (defect {:.3e})",
            a.hermitian_defect()
        )));
    }
    let h = a.hermitian_part();
    if h.rows() <= 6 {
        return Ok(jacobi_eig(&h));
    }
    tridiagonal_eig(&h).ok_or_else(|| Error::Solver("tridiagonal QL did not converge".into()))
}

/// Householder reduction to real tridiagonal form followed by implicit QL.
fn tridiagonal_eig(h: &CMatrix) -> Option<HermEig> {
    let n = h.rows();
    // column-major working copy
    let mut a: Vec<C64> = (0..n * n).map(|t| h[(t % n, t / n)]).collect();
    let mut q: Vec<C64> = vec![ZERO; n * n];
    for i in 0..n {
        q[i * n + i] = ONE;
    }
    let at = |i: usize, j: usize| j * n + i;
    let mut u = vec![ZERO; n];
    let mut p = vec![ZERO; n];
    for k in 0..n.saturating_sub(2) {
        let m0 = k + 1;
        let alpha = (m0..n).map(|i| a[at(i, k)].norm_sqr()).sum::<f64>().sqrt();
        let tail = (m0 + 1..n).map(|i| a[at(i, k)].norm_sqr()).sum::<f64>();
        if alpha == 0.0 || tail == 0.0 {
            continue;
        }
        let x0 = a[at(m0, k)];
        let ph = if x0.norm() > 0.0 { x0 / x0.norm() } else { ONE };
        for i in m0..n {
            u[i] = a[at(i, k)];
        }
        u[m0] += ph * alpha;
        let un = (m0..n).map(|i| u[i].norm_sqr()).sum::<f64>().sqrt();
        for z in &mut u[m0..n] {
            *z /= un;
        }
        // p = B u, K = u* p, q = p - K u
        for i in m0..n {
            let mut s = ZERO;
            for j in m0..n {
                s += a[at(i, j)] * u[j];
            }
            p[i] = s;
        }
        let kk: C64 = (m0..n).map(|i| u[i].conj() * p[i]).sum();
        for i in m0..n {
            p[i] -= u[i] * kk.re;
        }
        for j in m0..n {
            let (uj, pj) = (u[j].conj(), p[j].conj());
            for i in m0..n {
                a[at(i, j)] -= (u[i] * pj + p[i] * uj) * 2.0;
            }
        }
        let beta = -ph * alpha;
        for i in m0..n {
            a[at(i, k)] = ZERO;
            a[at(k, i)] = ZERO;
        }
        a[at(m0, k)] = beta;
        a[at(k, m0)] = beta.conj();
        for r in 0..n {
            let mut s = ZERO;
            for j in m0..n {
                s += q[at(r, j)] * u[j];
            }
            s *= 2.0;
            for j in m0..n {
                q[at(r, j)] -= s * u[j].conj();
            }
        }
    }
    let mut d: Vec<f64> = (0..n).map(|i| a[at(i, i)].re).collect();
    let mut e = vec![0.0; n];
    let mut phase = ONE;
    for i in 0..n {
        if i > 0 {
            let off = a[at(i, i - 1)];
            let mag = off.norm();
            e[i - 1] = mag;
            if mag > 0.0 {
                phase *= off / mag;
            }
            for r in 0..n {
                q[at(r, i)] *= phase;
            }
        }
    }
    tql2(&mut d, &mut e, &mut q, n)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].total_cmp(&d[j]));
    let values = order.iter().map(|&i| d[i]).collect();
    let vectors = CMatrix::from_fn(n, n, |i, j| q[order[j] * n + i]);
    Some(HermEig { values, vectors })
}

/// Implicit QL on a real symmetric tridiagonal matrix (`e[i]` couples `i`
/// and `i + 1`), rotating the columns of the column-major `z`.
fn tql2(d: &mut [f64], e: &mut [f64], z: &mut [C64], n: usize) -> Option<()> {
    let eps = f64::EPSILON;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 && e[m].abs() > eps * tst1 {
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > 100 {
                    return None;
                }
                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di -= h;
                }
                f += h;
                p = d[m];
                let (mut cc, mut c2, mut c3) = (1.0, 1.0, 1.0);
                let el1 = e[l + 1];
                let (mut s, mut s2) = (0.0, 0.0);
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = cc;
                    s2 = s;
                    let g = cc * e[i];
                    h = cc * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    cc = p / r;
                    p = cc * d[i] - s * g;
                    d[i + 1] = h + s * (cc * g + s * d[i]);
                    let (lo, hi) = z.split_at_mut((i + 1) * n);
                    let zi = &mut lo[i * n..];
                    let zj = &mut hi[..n];
                    for k in 0..n {
                        let hk = zj[k];
                        zj[k] = zi[k] * s + hk * cc;
                        zi[k] = zi[k] * cc - hk * s;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = cc * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Some(())
}

/// Thin singular value decomposition `a = u diag(s) v^*`, singular values
/// descending. `u` is `m x k`, `v` is `n x k` with `k = min(m, n)`.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: CMatrix,
    pub s: Vec<f64>,
    pub v: CMatrix,
}

pub fn svd(a: &CMatrix) -> Svd {
    if a.rows() < a.cols() {
        let t = svd(&a.adjoint());
        return Svd {
            u: t.v,
            s: t.s,
            v: t.u,
        };
    }
    one_sided_jacobi(a)
}

fn jacobi_eig(a0: &CMatrix) -> HermEig {
    let n = a0.rows();
    let mut a = a0.clone();
    let mut v = CMatrix::identity(n);
    let scale = a.frob_norm().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[(p, q)].norm_sqr();
            }
        }
        if off.sqrt() <= 1e-16 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                let mag = apq.norm();
                if mag <= 1e-300 || mag <= 1e-18 * scale {
                    continue;
                }
                let phase = apq / mag;
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let tau = (aqq - app) / (2.0 * mag);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let t = if tau == 0.0 { 1.0 } else { t };
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = t * cs;
                // G = D J with D = diag(1, conj(phase)), J = [[c, s], [-s, c]]
                let g_pp = c(cs, 0.0);
                let g_pq = c(sn, 0.0);
                let g_qp = -phase.conj() * sn;
                let g_qq = phase.conj() * cs;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = akp * g_pp + akq * g_qp;
                    a[(k, q)] = akp * g_pq + akq * g_qq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = g_pp.conj() * apk + g_qp.conj() * aqk;
                    a[(q, k)] = g_pq.conj() * apk + g_qq.conj() * aqk;
                }
                a[(p, q)] = ZERO;
                a[(q, p)] = ZERO;
                a[(p, p)] = c(a[(p, p)].re, 0.0);
                a[(q, q)] = c(a[(q, q)].re, 0.0);
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * g_pp + vkq * g_qp;
                    v[(k, q)] = vkp * g_pq + vkq * g_qq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re));
    let values = order.iter().map(|&i| a[(i, i)].re).collect();
    let vectors = CMatrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    HermEig { values, vectors }
}

fn one_sided_jacobi(a0: &CMatrix) -> Svd {
    let (m, n) = a0.shape();
    // columns stored contiguously for cache-friendly rotations
    let mut cols: Vec<Vec<C64>> = (0..n).map(|j| a0.col(j)).collect();
    let mut vcols: Vec<Vec<C64>> = (0..n)
        .map(|j| {
            let mut e = vec![ZERO; n];
            e[j] = ONE;
            e
        })
        .collect();
    for _sweep in 0..80 {
        let mut rotated = false;
        for i in 0..n {
            for j in (i + 1)..n {
                let alpha: f64 = cols[i].iter().map(|z| z.norm_sqr()).sum();
                let beta: f64 = cols[j].iter().map(|z| z.norm_sqr()).sum();
                let gamma: C64 = cols[i].iter().zip(&cols[j]).map(|(x, y)| x.conj() * y).sum();
                let g = gamma.norm();
                if g <= 1e-15 * (alpha * beta).sqrt() || g <= 1e-300 {
                    continue;
                }
                rotated = true;
                let phase = gamma / g;
                let zeta = (beta - alpha) / (2.0 * g);
                let t = if zeta == 0.0 {
                    1.0
                } else {
                    zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt())
                };
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                let e_neg = phase.conj() * sn;
                let e_pos = phase * sn;
                let (left, right) = cols.split_at_mut(j);
                let ci = &mut left[i];
                let cj = &mut right[0];
                for k in 0..m {
                    let x = ci[k];
                    let y = cj[k];
                    ci[k] = x * cs - y * e_neg;
                    cj[k] = x * e_pos + y * cs;
                }
                let (left, right) = vcols.split_at_mut(j);
                let vi = &mut left[i];
                let vj = &mut right[0];
                for k in 0..n {
                    let x = vi[k];
                    let y = vj[k];
                    vi[k] = x * cs - y * e_neg;
                    vj[k] = x * e_pos + y * cs;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<(f64, usize)> = cols
        .iter()
        .enumerate()
        .map(|(j, cj)| (cj.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt(), j))
        .collect();
    sv.sort_by(|a, b| b.0.total_cmp(&a.0));
    let s: Vec<f64> = sv.iter().map(|x| x.0).collect();
    let u = CMatrix::from_fn(m, n, |r, k| {
        let (sig, j) = sv[k];
        if sig > 0.0 {
            cols[j][r] / sig
        } else {
            ZERO
        }
    });
    let v = CMatrix::from_fn(n, n, |r, k| vcols[sv[k].1][r]);
    Svd { u, s, v }
}

/// Largest singular value.
pub fn op_norm(a: &CMatrix) -> Result<f64> {
    a.ensure_finite()?;
    Ok(op_norm_unchecked(a))
}

pub(crate) fn op_norm_unchecked(a: &CMatrix) -> f64 {
    if a.rows() == 0 || a.cols() == 0 {
        return 0.0;
    }
    if a.rows() == 1 || a.cols() == 1 {
        return a.frob_norm();
    }
    let g = if a.rows() <= a.cols() {
        a * &a.adjoint()
    } else {
        &a.adjoint() * a
    };
    match herm_eig(&g.hermitian_part()) {
        Ok(e) => e.values.last().copied().unwrap_or(0.0).max(0.0).sqrt(),
        Err(_) => svd(a).s[0],
    }
}

/// Top singular triple `(sigma, u, v)` with `a v = sigma u`.
pub fn top_singular(a: &CMatrix) -> (f64, Vec<C64>, Vec<C64>) {
    let d = svd(a);
    let sigma = d.s.first().copied().unwrap_or(0.0);
    let mut u = d.u.col(0);
    let mut v = d.v.col(0);
    if sigma == 0.0 {
        u = vec![ZERO; a.rows()];
        v = vec![ZERO; a.cols()];
        if !u.is_empty() {
            u[0] = ONE;
        }
        if !v.is_empty() {
            v[0] = ONE;
        }
    }
    (sigma, u, v)
}

/// Matrix function `U f(diag(lambda)) U^*` of a Hermitian matrix.
pub fn spectral_fn(a: &CMatrix, f: impl Fn(f64) -> Option<f64>) -> Result<CMatrix> {
    let e = herm_eig(a)?;
    for &x in &e.values {
        if f(x).is_none() {
            return Err(Error::Domain(format!(
                "function undefined at eigenvalue {x:.6e}"
            )));
        }
    }
    Ok(e.reconstruct(|x| c(f(x).unwrap_or(0.0), 0.0)))
}

/// Principal square root of a PSD matrix; tiny negative eigenvalues
/// (above `-1e-8 * lambda_max`) are clamped.
pub fn sqrt_psd(a: &CMatrix) -> Result<CMatrix> {
    let e = herm_eig(a)?;
    let lmax = e.values.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let floor = -1e-8 * lmax.max(1e-300);
    if let Some(&x) = e.values.iter().find(|&&x| x < floor) {
        return Err(Error::Domain(format!("sqrt of negative eigenvalue {x:.6e}")));
    }
    let cut = 1e-14 * lmax;
    Ok(e.reconstruct(|x| c(if x > cut { x.sqrt() } else { 0.0 }, 0.0)))
}

/// Orthogonal projection onto the range of a PSD matrix.
pub fn range_projection(a: &CMatrix) -> Result<CMatrix> {
    let e = herm_eig(a)?;
    let lmax = e.values.iter().fold(0.0f64, |m, x| m.max(*x));
    if let Some(&x) = e.values.iter().find(|&&x| x < -1e-8) {
        return Err(Error::input(format!(
            "range_projection requires PSD input (eigenvalue {x:.6e})"
        )));
    }
    let cut = 1e-8 * lmax;
    Ok(e.reconstruct(|x| if lmax > 0.0 && x > cut { ONE } else { ZERO }))
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

fn one_norm(a: &CMatrix) -> f64 {
    (0..a.cols())
        .map(|j| (0..a.rows()).map(|i| a[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring around a degree-13 Padé core.
pub fn expm(a: &CMatrix) -> Result<CMatrix> {
    a.ensure_finite()?;
    if !a.is_square() {
        return Err(Error::input("expm requires a square matrix"));
    }
    let n = a.rows();
    if n == 0 {
        return Ok(a.clone());
    }
    let theta13 = 5.371920351148152;
    let nrm = one_norm(a);
    let s = if nrm > theta13 {
        (nrm / theta13).log2().ceil() as i32
    } else {
        0
    };
    let a = a.scale_real(0.5f64.powi(s));
    let id = CMatrix::identity(n);
    let a2 = a.matmul(&a);
    let a4 = a2.matmul(&a2);
    let a6 = a4.matmul(&a2);
    let b = &PADE13;
    let mut u_inner = a6.scale_real(b[13]);
    u_inner.axpy(c(b[11], 0.0), &a4);
    u_inner.axpy(c(b[9], 0.0), &a2);
    let mut u = a6.matmul(&u_inner);
    u.axpy(c(b[7], 0.0), &a6);
    u.axpy(c(b[5], 0.0), &a4);
    u.axpy(c(b[3], 0.0), &a2);
    u.axpy(c(b[1], 0.0), &id);
    let u = a.matmul(&u);
    let mut v_inner = a6.scale_real(b[12]);
    v_inner.axpy(c(b[10], 0.0), &a4);
    v_inner.axpy(c(b[8], 0.0), &a2);
    let mut v = a6.matmul(&v_inner);
    v.axpy(c(b[6], 0.0), &a6);
    v.axpy(c(b[4], 0.0), &a4);
    v.axpy(c(b[2], 0.0), &a2);
    v.axpy(c(b[0], 0.0), &id);
    let p = &v + &u;
    let q = &v - &u;
    let mut r = solve(&q, &p)?;
    for _ in 0..s {
        r = r.matmul(&r);
    }
    Ok(r)
}

/// LU with partial pivoting; solves `a x = b` for square `a`.
pub fn solve(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    let n = a.rows();
    if !a.is_square() || b.rows() != n {
        return Err(Error::input("solve shape mismatch"));
    }
    let mut lu = a.clone();
    let mut x = b.clone();
    let m = b.cols();
    let scale = a.max_abs().max(1e-300);
    for k in 0..n {
        let (piv, pmag) = (k..n)
            .map(|i| (i, lu[(i, k)].norm()))
            .fold((k, -1.0), |acc, v| if v.1 > acc.1 { v } else { acc });
        if pmag <= 1e-14 * scale {
            return Err(Error::Domain("singular matrix in solve".into()));
        }
        if piv != k {
            for j in 0..n {
                let t = lu[(k, j)];
                lu[(k, j)] = lu[(piv, j)];
                lu[(piv, j)] = t;
            }
            for j in 0..m {
                let t = x[(k, j)];
                x[(k, j)] = x[(piv, j)];
                x[(piv, j)] = t;
            }
        }
        let d = lu[(k, k)];
        for i in (k + 1)..n {
            let f = lu[(i, k)] / d;
            if f.re == 0.0 && f.im == 0.0 {
                continue;
            }
            for j in k..n {
                let t = lu[(k, j)];
                lu[(i, j)] -= f * t;
            }
            for j in 0..m {
                let t = x[(k, j)];
                x[(i, j)] -= f * t;
            }
        }
    }
    for k in (0..n).rev() {
        let d = lu[(k, k)];
        for j in 0..m {
            let mut s = x[(k, j)];
            for i in (k + 1)..n {
                s -= lu[(k, i)] * x[(i, j)];
            }
            x[(k, j)] = s / d;
        }
    }
    Ok(x)
}

pub fn inverse(a: &CMatrix) -> Result<CMatrix> {
    solve(a, &CMatrix::identity(a.rows()))
}

/// Moore-Penrose pseudo-inverse with relative singular cutoff.
pub fn pinv(a: &CMatrix, rel_tol: f64) -> CMatrix {
    let d = svd(a);
    let smax = d.s.first().copied().unwrap_or(0.0);
    let k = d.s.len();
    let mut out = CMatrix::zeros(a.cols(), a.rows());
    for t in 0..k {
        let s = d.s[t];
        if s <= rel_tol * smax || s == 0.0 {
            continue;
        }
        for i in 0..a.cols() {
            let vi = d.v[(i, t)] / s;
            for j in 0..a.rows() {
                out[(i, j)] += vi * d.u[(j, t)].conj();
            }
        }
    }
    out
}

/// Numerical rank with a relative cutoff on singular values.
pub fn rank(a: &CMatrix, rel_tol: f64) -> usize {
    if a.rows() == 0 || a.cols() == 0 {
        return 0;
    }
    let s = svd(a).s;
    let smax = s[0];
    if smax == 0.0 {
        return 0;
    }
    s.iter().filter(|&&x| x > rel_tol * smax).count()
}

/// Orthonormal basis (as columns) of the column span.
pub fn column_space(a: &CMatrix, rel_tol: f64) -> CMatrix {
    if a.cols() == 0 || a.rows() == 0 {
        return CMatrix::zeros(a.rows(), 0);
    }
    let d = svd(a);
    let smax = d.s[0];
    let k = d
        .s
        .iter()
        .filter(|&&x| smax > 0.0 && x > rel_tol * smax)
        .count();
    d.u.submatrix(0, 0, a.rows(), k)
}

/// Orthonormal basis (as columns) of the null space.
pub fn null_space(a: &CMatrix, rel_tol: f64) -> CMatrix {
    let n = a.cols();
    if a.rows() == 0 {
        return CMatrix::identity(n);
    }
    // null(a) = null(a^* a); eigenvectors of the Gram with small eigenvalues
    // lose accuracy, so use the SVD of the padded square matrix instead.
    let padded = if a.rows() < n {
        let mut p = CMatrix::zeros(n, n);
        p.set_block(0, 0, a);
        p
    } else {
        a.clone()
    };
    let d = svd(&padded);
    let smax = d.s.first().copied().unwrap_or(0.0);
    let idx: Vec<usize> = (0..d.s.len())
        .filter(|&t| smax == 0.0 || d.s[t] <= rel_tol * smax)
        .collect();
    CMatrix::from_fn(n, idx.len(), |i, k| d.v[(i, idx[k])])
}

/// Null space with the cutoff `tol * max(scale, σ_max)`, so that a matrix
/// that is zero up to roundoff relative to `scale` has a full null space.
pub fn null_space_scaled(a: &CMatrix, tol: f64, scale: f64) -> CMatrix {
    let smax = if a.rows() == 0 { 0.0 } else { op_norm_unchecked(a) };
    let denom = smax.max(scale);
    if denom == 0.0 {
        return CMatrix::identity(a.cols());
    }
    null_space(a, (tol * denom / smax.max(1e-300)).min(1.0))
}

/// Gram-Schmidt on columns (twice for stability); drops columns whose
/// residual falls below `tol` relative to the original column norm.
pub fn orthonormalize_columns(a: &CMatrix, tol: f64) -> CMatrix {
    let mut basis: Vec<Vec<C64>> = Vec::new();
    for j in 0..a.cols() {
        let mut v = a.col(j);
        let n0: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for _ in 0..2 {
            for b in &basis {
                let proj: C64 = b.iter().zip(&v).map(|(x, y)| x.conj() * y).sum();
                for (vi, bi) in v.iter_mut().zip(b) {
                    *vi -= proj * bi;
                }
            }
        }
        let n1: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if n1 > tol * n0.max(1e-300) && n1 > 1e-300 {
            for vi in v.iter_mut() {
                *vi /= n1;
            }
            basis.push(v);
        }
    }
    CMatrix::from_fn(a.rows(), basis.len(), |i, k| basis[k][i])
}

/// Cholesky factor `L` with `a = L L^*` for Hermitian positive definite `a`.
pub fn cholesky(a: &CMatrix) -> Result<CMatrix> {
    let n = a.rows();
    let mut l = CMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(Error::Domain(format!(
                "matrix not positive definite at pivot {j} ({d:.3e})"
            )));
        }
        let d = d.sqrt();
        l[(j, j)] = c(d, 0.0);
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// Solves `L x = b` for lower-triangular `L`.
pub fn lower_solve(l: &CMatrix, b: &CMatrix) -> CMatrix {
    let n = l.rows();
    let mut x = b.clone();
    for j in 0..b.cols() {
        for i in 0..n {
            let mut s = x[(i, j)];
            for k in 0..i {
                s -= l[(i, k)] * x[(k, j)];
            }
            x[(i, j)] = s / l[(i, i)];
        }
    }
    x
}

/// Least-squares coordinates of `target` in the span of `basis` (all of equal
/// shape) together with the residual norm.
pub fn span_coordinates(basis: &[CMatrix], target: &CMatrix) -> (Vec<C64>, f64) {
    let k = basis.len();
    if k == 0 {
        return (Vec::new(), target.frob_norm());
    }
    let len = target.data().len();
    let stacked = CMatrix::from_fn(len, k, |i, j| basis[j].data()[i]);
    let pinv = pinv(&stacked, 1e-12);
    let coords = pinv.matvec(target.data());
    let fit = stacked.matvec(&coords);
    let resid = fit
        .iter()
        .zip(target.data())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        .sqrt();
    (coords, resid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn op_norm_examples() {
        assert!(approx(op_norm(&CMatrix::identity(2)).unwrap(), 1.0, 1e-14));
        assert!(approx(op_norm(&CMatrix::diag_real(&[1.0, 2.0])).unwrap(), 2.0, 1e-14));
        let col = CMatrix::from_real(&[&[1.0], &[1.0]]);
        assert!(approx(op_norm(&col).unwrap(), 2f64.sqrt(), 1e-14));
    }

    #[test]
    fn op_norm_rejects_nan() {
        let mut m = CMatrix::identity(2);
        m[(0, 1)] = c(f64::NAN, 0.0);
        assert!(matches!(op_norm(&m), Err(Error::Input(_))));
    }

    #[test]
    fn herm_eig_examples() {
        let e = herm_eig(&CMatrix::diag_real(&[3.0, 1.0])).unwrap();
        assert!(approx(e.values[0], 1.0, 1e-14) && approx(e.values[1], 3.0, 1e-14));
        let x = CMatrix::from_real(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let e = herm_eig(&x).unwrap();
        assert!(approx(e.values[0], -1.0, 1e-14) && approx(e.values[1], 1.0, 1e-14));
        let e = herm_eig(&CMatrix::zeros(2, 2)).unwrap();
        assert_eq!(e.values, vec![0.0, 0.0]);
        assert!(e.vectors.dist(&CMatrix::identity(2)) < 1e-15);
    }

    #[test]
    fn herm_eig_rejects_non_hermitian() {
        let a = CMatrix::from_real(&[&[0.0, 1.0], &[0.0, 0.0]]);
        assert!(matches!(herm_eig(&a), Err(Error::Input(_))));
    }

    #[test]
    fn herm_eig_residual_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [1, 3, 8, 20] {
            let a = CMatrix::random_hermitian(n, &mut rng);
            let e = herm_eig(&a).unwrap();
            let r = e.reconstruct(|x| c(x, 0.0));
            assert!(r.dist(&a) <= 1e-10 * op_norm(&a).unwrap());
            assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn svd_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (m, n) in [(3, 5), (6, 2), (4, 4)] {
            let a = CMatrix::random_gaussian(m, n, &mut rng);
            let d = svd(&a);
            let k = d.s.len();
            let r = CMatrix::from_fn(m, n, |i, j| {
                (0..k).map(|t| d.u[(i, t)] * d.s[t] * d.v[(j, t)].conj()).sum()
            });
            assert!(r.dist(&a) < 1e-12);
        }
    }

    #[test]
    fn spectral_fn_examples() {
        let s = spectral_fn(&CMatrix::diag_real(&[4.0, 9.0]), |x| {
            (x >= 0.0).then(|| x.sqrt())
        })
        .unwrap();
        assert!(s.dist(&CMatrix::diag_real(&[2.0, 3.0])) < 1e-14);
        let p = CMatrix::from_real(&[&[0.5, 0.5], &[0.5, 0.5]]);
        for n in [1, 2, 7, 64] {
            let r = spectral_fn(&p, |x| Some(x.max(0.0).powf(1.0 / n as f64))).unwrap();
            assert!(r.dist(&p) < 1e-12);
        }
        let sum = CMatrix::identity(2);
        let r = spectral_fn(&sum, |x| Some(x.powf(1.0 / 9.0))).unwrap();
        assert!(r.dist(&CMatrix::identity(2)) < 1e-14);
    }

    #[test]
    fn spectral_fn_domain_error() {
        let a = CMatrix::diag_real(&[-1.0, 1.0]);
        let r = spectral_fn(&a, |x| (x >= 0.0).then(|| x.sqrt()));
        assert!(matches!(r, Err(Error::Domain(_))));
    }

    #[test]
    fn range_projection_examples() {
        let r = range_projection(&CMatrix::diag_real(&[5.0, 0.0])).unwrap();
        assert!(r.dist(&CMatrix::diag_real(&[1.0, 0.0])) < 1e-14);
        let v = [c(0.6, 0.0), c(0.0, 0.8)];
        let vv = CMatrix::from_fn(2, 2, |i, j| v[i] * v[j].conj());
        assert!(range_projection(&vv).unwrap().dist(&vv) < 1e-12);
        assert!(matches!(
            range_projection(&CMatrix::diag_real(&[1.0, -1.0])),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn range_projection_of_commuting_sum() {
        // P + Q for commuting projections has range projection P + Q - PQ
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = CMatrix::random_unitary(4, &mut rng);
        let p = &(&u * &CMatrix::diag_real(&[1.0, 1.0, 0.0, 0.0])) * &u.adjoint();
        let q = &(&u * &CMatrix::diag_real(&[0.0, 1.0, 1.0, 0.0])) * &u.adjoint();
        let join = range_projection(&(&p + &q)).unwrap();
        let expected = &(&p + &q) - &p.matmul(&q);
        assert!(join.dist(&expected) < 1e-10);
    }

    #[test]
    fn expm_examples() {
        assert!(expm(&CMatrix::zeros(2, 2)).unwrap().dist(&CMatrix::identity(2)) < 1e-15);
        let t = 0.7;
        let e = expm(&CMatrix::identity(2).scale(c(0.0, t))).unwrap();
        assert!(e.dist(&CMatrix::identity(2).scale(c(0.0, t).exp())) < 1e-14);
        let n = CMatrix::from_real(&[&[0.0, 1.0], &[0.0, 0.0]]);
        let e = expm(&n).unwrap();
        assert!(e.dist(&CMatrix::from_real(&[&[1.0, 1.0], &[0.0, 1.0]])) < 1e-15);
    }

    #[test]
    fn expm_large_norm_matches_eig() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = CMatrix::random_hermitian(4, &mut rng).scale_real(4.0);
        let e1 = expm(&h).unwrap();
        let e2 = spectral_fn(&h, |x| Some(x.exp())).unwrap();
        assert!(e1.dist(&e2) <= 1e-10 * op_norm(&e2).unwrap());
    }

    #[test]
    fn null_and_column_space() {
        let a = CMatrix::from_real(&[&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]]);
        assert_eq!(rank(&a, 1e-10), 1);
        let ns = null_space(&a, 1e-10);
        assert_eq!(ns.cols(), 2);
        assert!(a.matmul(&ns).max_abs() < 1e-12);
        assert_eq!(column_space(&a, 1e-10).cols(), 1);
    }
}
