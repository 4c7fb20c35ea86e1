//! Small dense semidefinite programs over complex Hermitian blocks.
//!
//! Standard form:
//!
//! ```text
//! minimise   <C, X>
//! subject to <A_i, X> = b_i      i = 1..m
//!            X = diag(X_1, ..., X_k),  X_j Hermitian PSD
//! ```
//!
//! with dual `maximise b'y s.t. C - sum_i y_i A_i = S ⪰ 0`. Every functional
//! (`A_i` and `C`) is given as a sparse list of entries, each meaning
//! `Re(coef * X_block[row, col])`; the implied Hermitian coefficient matrix is
//! `(conj(coef) E_rc + coef E_cr) / 2`.
//!
//! The solver is a homogeneous self-dual interior point method with
//! Nesterov-Todd scaling and a Mehrotra predictor-corrector. Infeasibility
//! is reported when `tau / kappa` collapses.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, herm_eig, svd, CMatrix, C64, ZERO};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub block: usize,
    pub row: usize,
    pub col: usize,
    pub coef: C64,
}

impl Entry {
    pub fn new(block: usize, row: usize, col: usize, coef: C64) -> Self {
        Self {
            block,
            row,
            col,
            coef,
        }
    }
}

/// Entries whose implied coefficient matrix equals the Hermitian `h`.
pub fn hermitian_entries(block: usize, h: &CMatrix) -> Vec<Entry> {
    let n = h.rows();
    let mut out = Vec::new();
    for a in 0..n {
        if h[(a, a)].re != 0.0 {
            out.push(Entry::new(block, a, a, c(h[(a, a)].re, 0.0)));
        }
        for b in (a + 1)..n {
            let v = h[(a, b)];
            if v != ZERO {
                out.push(Entry::new(block, a, b, v.conj() * 2.0));
            }
        }
    }
    out
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SdpProblem {
    pub blocks: Vec<usize>,
    pub constraints: Vec<Vec<Entry>>,
    pub rhs: Vec<f64>,
    pub objective: Vec<Entry>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdpStatus {
    Optimal,
    PrimalInfeasible,
    DualInfeasible,
    MaxIterations,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SdpResult {
    pub status: SdpStatus,
    pub primal_value: f64,
    pub dual_value: f64,
    pub gap: f64,
    pub primal_infeas: f64,
    pub dual_infeas: f64,
    pub iterations: usize,
    #[serde(skip)]
    pub x: Vec<CMatrix>,
    #[serde(skip)]
    pub s: Vec<CMatrix>,
    pub y: Vec<f64>,
    pub diagnostic: String,
}

#[derive(Clone, Copy, Debug)]
pub struct SdpOptions {
    pub gap_tol: f64,
    pub feas_tol: f64,
    pub max_iter: usize,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self {
            gap_tol: 1e-7,
            feas_tol: 1e-8,
            max_iter: 120,
        }
    }
}

impl From<&crate::Config> for SdpOptions {
    fn from(cfg: &crate::Config) -> Self {
        Self {
            gap_tol: cfg.sdp_gap_tol,
            feas_tol: cfg.sdp_feas_tol,
            max_iter: cfg.sdp_max_iter,
        }
    }
}

const MAX_REAL_DIM: usize = 10_000;

impl SdpProblem {
    pub fn new(blocks: Vec<usize>) -> Self {
        Self {
            blocks,
            ..Self::default()
        }
    }

    pub fn add_constraint(&mut self, entries: Vec<Entry>, rhs: f64) {
        self.constraints.push(entries);
        self.rhs.push(rhs);
    }

    pub fn real_dim(&self) -> usize {
        self.blocks.iter().map(|n| n * n).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks.is_empty() || self.blocks.contains(&0) {
            return Err(Error::input("sdp needs nonempty positive blocks"));
        }
        if self.real_dim() > MAX_REAL_DIM {
            return Err(Error::input(format!(
                "sdp has {} real scalars, above the {} guard",
                self.real_dim(),
                MAX_REAL_DIM
            )));
        }
        if self.constraints.len() != self.rhs.len() {
            return Err(Error::input("constraint and rhs counts differ"));
        }
        let check = |e: &Entry| -> Result<()> {
            let n = *self
                .blocks
                .get(e.block)
                .ok_or_else(|| Error::input(format!("entry refers to block {}", e.block)))?;
            if e.row >= n || e.col >= n {
                return Err(Error::input("entry outside its block"));
            }
            if !(e.coef.re.is_finite() && e.coef.im.is_finite()) {
                return Err(Error::input("non-finite coefficient"));
            }
            Ok(())
        };
        for e in self.constraints.iter().flatten().chain(&self.objective) {
            check(e)?;
        }
        if self.rhs.iter().any(|b| !b.is_finite()) {
            return Err(Error::input("non-finite right-hand side"));
        }
        Ok(())
    }

    fn eval(entries: &[Entry], x: &[CMatrix]) -> f64 {
        entries
            .iter()
            .map(|e| (e.coef * x[e.block][(e.row, e.col)]).re)
            .sum()
    }

    /// `<C, X>`
    pub fn objective_value(&self, x: &[CMatrix]) -> f64 {
        Self::eval(&self.objective, x)
    }

    /// `A(X)`
    pub fn apply(&self, x: &[CMatrix]) -> Vec<f64> {
        self.constraints.iter().map(|a| Self::eval(a, x)).collect()
    }

    fn add_functional(&self, out: &mut [CMatrix], entries: &[Entry], s: f64) {
        for e in entries {
            let m = &mut out[e.block];
            let h = e.coef * (0.5 * s);
            m[(e.row, e.col)] += h.conj();
            m[(e.col, e.row)] += h;
        }
    }

    /// `C - A^*(y)` as dense blocks.
    pub fn dual_slack(&self, y: &[f64]) -> Vec<CMatrix> {
        let mut out = self.zero_blocks();
        self.add_functional(&mut out, &self.objective, 1.0);
        for (a, &yi) in self.constraints.iter().zip(y) {
            self.add_functional(&mut out, a, -yi);
        }
        out
    }

    fn zero_blocks(&self) -> Vec<CMatrix> {
        self.blocks.iter().map(|&n| CMatrix::zeros(n, n)).collect()
    }

    fn dense_objective(&self) -> Vec<CMatrix> {
        let mut out = self.zero_blocks();
        self.add_functional(&mut out, &self.objective, 1.0);
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).unwrap_or_default()
    }
}

/// Residuals recomputed from scratch for a candidate primal/dual pair.
#[derive(Clone, Copy, Debug)]
pub struct Verification {
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub min_eig_x: f64,
    pub min_eig_s: f64,
    pub gap: f64,
}

impl SdpResult {
    pub fn verify(&self, prob: &SdpProblem) -> Verification {
        let ax = prob.apply(&self.x);
        let primal_residual = ax
            .iter()
            .zip(&prob.rhs)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let slack = prob.dual_slack(&self.y);
        let dual_residual = slack
            .iter()
            .zip(&self.s)
            .map(|(a, b)| (a - b).frob_norm().powi(2))
            .sum::<f64>()
            .sqrt();
        let min_eig = |ms: &[CMatrix]| {
            ms.iter()
                .map(|m| {
                    herm_eig(&m.hermitian_part())
                        .map(|e| e.values[0])
                        .unwrap_or(f64::NEG_INFINITY)
                })
                .fold(f64::INFINITY, f64::min)
        };
        let pv = prob.objective_value(&self.x);
        let dv: f64 = prob.rhs.iter().zip(&self.y).map(|(b, y)| b * y).sum();
        Verification {
            primal_residual,
            dual_residual,
            min_eig_x: min_eig(&self.x),
            min_eig_s: min_eig(&slack),
            gap: pv - dv,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SdpStatus::Optimal
    }
}

struct Scaling {
    g: CMatrix,
    ginv: CMatrix,
    w: CMatrix,
    lam: Vec<f64>,
}

fn psd_factor(m: &CMatrix) -> CMatrix {
    if let Ok(l) = crate::linalg::cholesky(&m.hermitian_part()) {
        return l;
    }
    let e = crate::linalg::herm_eig(&m.hermitian_part()).expect("hermitian iterate");
    let n = m.rows();
    let top = e.values.last().copied().unwrap_or(1.0).max(1e-300);
    CMatrix::from_fn(n, n, |i, j| {
        e.vectors[(i, j)] * e.values[j].max(1e-300 * top).sqrt()
    })
}

fn nt_scaling(x: &CMatrix, s: &CMatrix) -> Scaling {
    let lx = psd_factor(x);
    let ls = psd_factor(s);
    let d = svd(&ls.adjoint_mul(&lx));
    let n = x.rows();
    let lam: Vec<f64> = d.s.iter().map(|v| v.max(1e-300)).collect();
    let g = CMatrix::from_fn(n, n, |i, j| {
        (0..n).map(|k| lx[(i, k)] * d.v[(k, j)]).sum::<C64>() / lam[j].sqrt()
    });
    let ginv = CMatrix::from_fn(n, n, |i, j| {
        (0..n).map(|k| d.u[(k, i)].conj() * ls[(j, k)].conj()).sum::<C64>() / lam[i].sqrt()
    });
    let w = g.matmul(&g.adjoint());
    Scaling { g, ginv, w, lam }
}

fn sandwich(w: &CMatrix, m: &CMatrix) -> CMatrix {
    w.matmul(m).matmul(w)
}

fn inner_re(a: &[CMatrix], b: &[CMatrix]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.inner(y).re).sum()
}

/// Largest step in [0, inf) keeping `Λ + α D` PSD, where `D` is scaled.
fn max_step(lam: &[f64], d: &CMatrix) -> f64 {
    let n = lam.len();
    let m = CMatrix::from_fn(n, n, |i, j| d[(i, j)] / (lam[i] * lam[j]).sqrt());
    let Ok(e) = herm_eig(&m.hermitian_part()) else {
        return 0.0;
    };
    let lmin = e.values[0];
    if lmin < 0.0 {
        -1.0 / lmin
    } else {
        f64::INFINITY
    }
}

fn real_cholesky(m: &mut [f64], n: usize) -> bool {
    for j in 0..n {
        let mut d = m[j * n + j];
        for k in 0..j {
            d -= m[j * n + k] * m[j * n + k];
        }
        if d <= 0.0 || !d.is_finite() {
            return false;
        }
        let d = d.sqrt();
        m[j * n + j] = d;
        for i in (j + 1)..n {
            let mut s = m[i * n + j];
            for k in 0..j {
                s -= m[i * n + k] * m[j * n + k];
            }
            m[i * n + j] = s / d;
        }
    }
    true
}

fn chol_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut x = b.to_vec();
    for i in 0..n {
        let mut s = x[i];
        for k in 0..i {
            s -= l[i * n + k] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in (i + 1)..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    x
}

struct Direction {
    dx: Vec<CMatrix>,
    dy: Vec<f64>,
    ds: Vec<CMatrix>,
    dtau: f64,
    dkappa: f64,
}

#[derive(Clone)]
struct Iterate {
    x: Vec<CMatrix>,
    s: Vec<CMatrix>,
    y: Vec<f64>,
    tau: f64,
    kappa: f64,
}

pub fn solve(prob: &SdpProblem) -> Result<SdpResult> {
    solve_with(prob, &SdpOptions::default())
}

pub fn solve_with(prob: &SdpProblem, opts: &SdpOptions) -> Result<SdpResult> {
    prob.validate()?;
    let m = prob.constraints.len();
    let nb = prob.blocks.len();
    let ntot: usize = prob.blocks.iter().sum();
    let cmat = prob.dense_objective();
    let b = &prob.rhs;
    let bnorm = 1.0 + b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let cnorm = 1.0
        + cmat
            .iter()
            .map(|m| m.frob_norm().powi(2))
            .sum::<f64>()
            .sqrt();

    // constraint entries grouped by block, for the Schur complement
    let by_block: Vec<Vec<Vec<Entry>>> = prob
        .constraints
        .iter()
        .map(|a| {
            let mut g = vec![Vec::new(); nb];
            for e in a {
                g[e.block].push(*e);
            }
            g
        })
        .collect();

    let mut it = Iterate {
        x: prob.blocks.iter().map(|&n| CMatrix::identity(n)).collect(),
        s: prob.blocks.iter().map(|&n| CMatrix::identity(n)).collect(),
        y: vec![0.0; m],
        tau: 1.0,
        kappa: 1.0,
    };

    let result = |it: &Iterate, status: SdpStatus, iters: usize, diag: String| {
        let x: Vec<CMatrix> = it.x.iter().map(|m| m.scale_real(1.0 / it.tau)).collect();
        let s: Vec<CMatrix> = it.s.iter().map(|m| m.scale_real(1.0 / it.tau)).collect();
        let y: Vec<f64> = it.y.iter().map(|v| v / it.tau).collect();
        let (x, s, y) = match status {
            SdpStatus::PrimalInfeasible | SdpStatus::DualInfeasible => {
                (it.x.clone(), it.s.clone(), it.y.clone())
            }
            _ => (x, s, y),
        };
        let pv = prob.objective_value(&x);
        let dv: f64 = b.iter().zip(&y).map(|(bi, yi)| bi * yi).sum();
        let ax = prob.apply(&x);
        let pinf = ax
            .iter()
            .zip(b)
            .map(|(a, bi)| (a - bi).powi(2))
            .sum::<f64>()
            .sqrt()
            / bnorm;
        let slack = prob.dual_slack(&y);
        let dinf = slack
            .iter()
            .zip(&s)
            .map(|(a, bb)| (a - bb).frob_norm().powi(2))
            .sum::<f64>()
            .sqrt()
            / cnorm;
        SdpResult {
            status,
            primal_value: pv,
            dual_value: dv,
            gap: pv - dv,
            primal_infeas: pinf,
            dual_infeas: dinf,
            iterations: iters,
            x,
            s,
            y,
            diagnostic: diag,
        }
    };

    // best iterate by a combined merit, returned on stagnation or breakdown
    let mut best: Option<(f64, Iterate, usize)> = None;
    for iter in 0..opts.max_iter {
        // residuals
        let ax = prob.apply(&it.x);
        let rp: Vec<f64> = b.iter().zip(&ax).map(|(bi, a)| bi * it.tau - a).collect();
        let mut rd = prob.dual_slack(&it.y);
        for (k, r) in rd.iter_mut().enumerate() {
            let extra = cmat[k].scale_real(it.tau - 1.0);
            *r = &(&*r + &extra) - &it.s[k];
        }
        let cx = inner_re(&cmat, &it.x);
        let by: f64 = b.iter().zip(&it.y).map(|(bi, yi)| bi * yi).sum();
        let rg = cx - by + it.kappa;
        let mu = (inner_re(&it.x, &it.s) + it.tau * it.kappa) / (ntot as f64 + 1.0);

        // termination
        let pinf = rp.iter().map(|v| v * v).sum::<f64>().sqrt() / it.tau / bnorm;
        let dinf = rd.iter().map(|r| r.frob_norm().powi(2)).sum::<f64>().sqrt() / it.tau / cnorm;
        let pobj = cx / it.tau;
        let dobj = by / it.tau;
        let rel_gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        if pinf <= opts.feas_tol && dinf <= opts.feas_tol && rel_gap <= opts.gap_tol {
            return Ok(result(&it, SdpStatus::Optimal, iter, String::new()));
        }
        let merit = (pinf / opts.feas_tol)
            .max(dinf / opts.feas_tol)
            .max(rel_gap / opts.gap_tol);
        if it.tau >= it.kappa {
            match &best {
                Some((bm, _, _)) if *bm <= merit => {}
                _ => best = Some((merit, it.clone(), iter)),
            }
        }
        if let Some((bm, b, bi)) = &best {
            if iter > bi + 15 && *bm < 1e6 {
                return Ok(result(b, SdpStatus::MaxIterations, iter, "stalled".into()));
            }
        }
        if it.tau / it.kappa < 1e-8 && mu / (it.kappa.max(1e-300)) < 1e-6 {
            let status = if by > 0.0 {
                SdpStatus::PrimalInfeasible
            } else if cx < 0.0 {
                SdpStatus::DualInfeasible
            } else {
                SdpStatus::MaxIterations
            };
            return Ok(result(
                &it,
                status,
                iter,
                format!("tau/kappa = {:.3e}", it.tau / it.kappa),
            ));
        }

        // scaling and Schur complement
        let sc: Vec<Scaling> = it.x.iter().zip(&it.s).map(|(x, s)| nt_scaling(x, s)).collect();
        let mut schur = vec![0.0; m * m];
        for i in 0..m {
            for j in i..m {
                let mut v = 0.0;
                for blk in 0..nb {
                    let ai = &by_block[i][blk];
                    let aj = &by_block[j][blk];
                    if ai.is_empty() || aj.is_empty() {
                        continue;
                    }
                    let w = &sc[blk].w;
                    for ej in aj {
                        let (a1, b1) = (ej.row, ej.col);
                        let h = ej.coef * 0.5;
                        for ei in ai {
                            let (r, cc) = (ei.row, ei.col);
                            // (W A_j W)[r, cc] with A_j = (conj(h') E_ab + h' E_ba)
                            let val = h.conj() * w[(r, a1)] * w[(b1, cc)]
                                + h * w[(r, b1)] * w[(a1, cc)];
                            v += (ei.coef * val).re;
                        }
                    }
                }
                schur[i * m + j] = v;
                schur[j * m + i] = v;
            }
        }
        let diag_max = (0..m).map(|i| schur[i * m + i]).fold(0.0f64, f64::max);
        let mut lfac = schur.clone();
        let mut reg = 0.0;
        while !real_cholesky(&mut lfac, m) {
            reg = if reg == 0.0 { 1e-14 * diag_max.max(1e-300) } else { reg * 100.0 };
            if reg > 1e-2 * diag_max.max(1.0) {
                return Ok(result(
                    &it,
                    SdpStatus::MaxIterations,
                    iter,
                    "schur complement is singular (dependent constraints?)".into(),
                ));
            }
            lfac = schur.clone();
            for i in 0..m {
                lfac[i * m + i] += reg;
            }
        }
        let wcw: Vec<CMatrix> = (0..nb).map(|k| sandwich(&sc[k].w, &cmat[k])).collect();
        let a_c = prob.apply(&wcw);
        let c_w = inner_re(&cmat, &wcw);
        let rhs_v: Vec<f64> = a_c.iter().zip(b).map(|(a, bi)| a + bi).collect();
        let v = chol_solve(&lfac, m, &rhs_v);
        let wrdw: Vec<CMatrix> = (0..nb).map(|k| sandwich(&sc[k].w, &rd[k])).collect();
        let a_wrdw = prob.apply(&wrdw);
        let c_wrdw = inner_re(&cmat, &wrdw);
        let amc: Vec<f64> = a_c.iter().zip(b).map(|(a, bi)| a - bi).collect();
        let coef_tau = amc.iter().zip(&v).map(|(a, vv)| a * vv).sum::<f64>() - c_w - it.kappa / it.tau;

        let solve_dir = |eta: f64, rr: &[CMatrix], q_tk: f64| -> Direction {
            let a_r = prob.apply(rr);
            let rhs_u: Vec<f64> = (0..m)
                .map(|i| eta * rp[i] - a_r[i] + eta * a_wrdw[i])
                .collect();
            let u = chol_solve(&lfac, m, &rhs_u);
            let c_r = inner_re(&cmat, rr);
            let num = -eta * rg - c_r + eta * c_wrdw
                - amc.iter().zip(&u).map(|(a, uu)| a * uu).sum::<f64>()
                - q_tk / it.tau;
            let dtau = num / coef_tau;
            let dkappa = (q_tk - it.kappa * dtau) / it.tau;
            let dy: Vec<f64> = u.iter().zip(&v).map(|(uu, vv)| uu + vv * dtau).collect();
            let mut ds = prob.zero_blocks();
            for (a, &yi) in prob.constraints.iter().zip(&dy) {
                prob.add_functional(&mut ds, a, -yi);
            }
            for k in 0..nb {
                ds[k].axpy(c(dtau, 0.0), &cmat[k]);
                ds[k].axpy(c(eta, 0.0), &rd[k]);
            }
            let dx: Vec<CMatrix> = (0..nb)
                .map(|k| &rr[k] - &sandwich(&sc[k].w, &ds[k]))
                .collect();
            Direction {
                dx,
                dy,
                ds,
                dtau,
                dkappa,
            }
        };

        let step_len = |d: &Direction| -> f64 {
            let mut a = f64::INFINITY;
            for k in 0..nb {
                let s = &sc[k];
                let dxs = s.ginv.matmul(&d.dx[k]).matmul(&s.ginv.adjoint());
                let dss = s.g.adjoint().matmul(&d.ds[k]).matmul(&s.g);
                a = a.min(max_step(&s.lam, &dxs)).min(max_step(&s.lam, &dss));
            }
            if d.dtau < 0.0 {
                a = a.min(-it.tau / d.dtau);
            }
            if d.dkappa < 0.0 {
                a = a.min(-it.kappa / d.dkappa);
            }
            a
        };

        // predictor
        let r_aff: Vec<CMatrix> = it.x.iter().map(|x| -x).collect();
        let d_aff = solve_dir(1.0, &r_aff, -it.tau * it.kappa);
        let a_aff = step_len(&d_aff).min(1.0);
        let mut mu_aff = 0.0;
        for k in 0..nb {
            let mut xa = it.x[k].clone();
            xa.axpy(c(a_aff, 0.0), &d_aff.dx[k]);
            let mut sa = it.s[k].clone();
            sa.axpy(c(a_aff, 0.0), &d_aff.ds[k]);
            mu_aff += xa.inner(&sa).re;
        }
        mu_aff += (it.tau + a_aff * d_aff.dtau) * (it.kappa + a_aff * d_aff.dkappa);
        mu_aff /= ntot as f64 + 1.0;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        // corrector
        let r_cor: Vec<CMatrix> = (0..nb)
            .map(|k| {
                let s = &sc[k];
                let n = s.lam.len();
                let dxs = s.ginv.matmul(&d_aff.dx[k]).matmul(&s.ginv.adjoint());
                let dss = s.g.adjoint().matmul(&d_aff.ds[k]).matmul(&s.g);
                let corr = &dxs.matmul(&dss) + &dss.matmul(&dxs);
                let rt = CMatrix::from_fn(n, n, |i, j| {
                    let mut r = -corr[(i, j)];
                    if i == j {
                        r += c(2.0 * sigma * mu - 2.0 * s.lam[i] * s.lam[i], 0.0);
                    }
                    r / (s.lam[i] + s.lam[j])
                });
                s.g.matmul(&rt).matmul(&s.g.adjoint())
            })
            .collect();
        let q_tk = sigma * mu - it.tau * it.kappa - d_aff.dtau * d_aff.dkappa;
        let d = solve_dir(1.0 - sigma, &r_cor, q_tk);
        let alpha = (0.98 * step_len(&d)).min(1.0);
        if !(alpha > 0.0) || !alpha.is_finite() {
            let b = best.as_ref().map_or(&it, |b| &b.1);
            return Ok(result(b, SdpStatus::MaxIterations, iter, "numerical breakdown".into()));
        }
        let prev = it.clone();
        for k in 0..nb {
            it.x[k].axpy(c(alpha, 0.0), &d.dx[k]);
            it.s[k].axpy(c(alpha, 0.0), &d.ds[k]);
            it.x[k] = it.x[k].hermitian_part();
            it.s[k] = it.s[k].hermitian_part();
        }
        for (yi, dyi) in it.y.iter_mut().zip(&d.dy) {
            *yi += alpha * dyi;
        }
        it.tau += alpha * d.dtau;
        it.kappa += alpha * d.dkappa;
        let finite = it.tau.is_finite()
            && it.kappa.is_finite()
            && it.x.iter().chain(&it.s).all(|m| m.is_finite())
            && it.y.iter().all(|v| v.is_finite());
        if !finite || it.tau <= 0.0 {
            let b = best.as_ref().map_or(&prev, |b| &b.1);
            return Ok(result(b, SdpStatus::MaxIterations, iter, "numerical breakdown".into()));
        }
        // keep the embedding well scaled
        let scale = it.tau.max(it.kappa);
        if !(1e-8..=1e8).contains(&scale) {
            let f = 1.0 / scale;
            for k in 0..nb {
                it.x[k] = it.x[k].scale_real(f);
                it.s[k] = it.s[k].scale_real(f);
            }
            it.y.iter_mut().for_each(|v| *v *= f);
            it.tau *= f;
            it.kappa *= f;
        }
    }
    Ok(result(
        best.as_ref().map_or(&it, |b| &b.1),
        SdpStatus::MaxIterations,
        opts.max_iter,
        "iteration limit reached".into(),
    ))
}

/// Encodes `min t s.t. [[tI, a], [a^*, tI]] ⪰ 0` in standard form and solves.
/// Used as an independent check of the solver against singular values.
pub fn op_norm_sdp(a: &CMatrix) -> Result<SdpResult> {
    let (p, q) = a.shape();
    let n = p + q;
    // dual form: maximise -t s.t. [[0, a], [a^*, 0]] + t I ⪰ 0
    let mut cm = CMatrix::zeros(n, n);
    cm.set_block(0, p, a);
    cm.set_block(p, 0, &a.adjoint());
    let mut prob = SdpProblem::new(vec![n]);
    prob.objective = hermitian_entries(0, &cm);
    prob.add_constraint(hermitian_entries(0, &CMatrix::identity(n).scale_real(-1.0)), -1.0);
    solve(&prob)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ONE;
    use crate::linalg::op_norm;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn scalar_nonnegativity() {
        // min t s.t. t >= 0: one 1x1 block, no constraints but t itself
        let mut prob = SdpProblem::new(vec![1]);
        prob.objective = vec![Entry::new(0, 0, 0, ONE)];
        let r = solve(&prob).unwrap();
        assert_eq!(r.status, SdpStatus::Optimal);
        assert!(r.primal_value.abs() < 1e-7);
    }

    #[test]
    fn eigenvalue_bound() {
        // min t s.t. t I - diag(1,2) ⪰ 0, dual form
        let mut prob = SdpProblem::new(vec![2]);
        prob.objective = hermitian_entries(0, &CMatrix::diag_real(&[-1.0, -2.0]));
        prob.add_constraint(hermitian_entries(0, &CMatrix::diag_real(&[-1.0, -1.0])), -1.0);
        let r = solve(&prob).unwrap();
        assert_eq!(r.status, SdpStatus::Optimal);
        // dual value is -t
        assert!((r.dual_value + 2.0).abs() < 1e-6, "{r:?}");
        let v = r.verify(&prob);
        assert!(v.primal_residual < 1e-7 && v.min_eig_x > -1e-9 && v.min_eig_s > -1e-7);
    }

    #[test]
    fn op_norm_matches_svd() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let a = CMatrix::random_gaussian(3, 3, &mut rng);
            let r = op_norm_sdp(&a).unwrap();
            assert_eq!(r.status, SdpStatus::Optimal);
            assert!((-r.dual_value - op_norm(&a).unwrap()).abs() < 1e-6);
            assert!(r.gap >= -1e-9);
        }
    }

    #[test]
    fn detects_primal_infeasibility() {
        // X ⪰ 0 with trace(X) = -1
        let mut prob = SdpProblem::new(vec![2]);
        prob.objective = vec![Entry::new(0, 0, 0, ONE)];
        prob.add_constraint(hermitian_entries(0, &CMatrix::identity(2)), -1.0);
        let r = solve(&prob).unwrap();
        assert_eq!(r.status, SdpStatus::PrimalInfeasible);
        // improving ray: b'y > 0 with -A^*y ⪰ 0
        let by: f64 = -r.y[0];
        assert!(by > 0.0 && r.y[0] < 0.0);
    }

    #[test]
    fn rejects_bad_blocks() {
        let prob = SdpProblem::new(vec![0]);
        assert!(solve(&prob).is_err());
    }
}
