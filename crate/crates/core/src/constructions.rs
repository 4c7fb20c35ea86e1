//! Tensor and sum constructions, and the transfer of multipliers through them.
//!
//! The Haagerup tensor product is presented through a norm oracle. Its upper
//! bound is an explicit factorization `u = x ⊙ y`, recovered from a
//! semidefinite program over the Gram data `(x x^*, y^* y)`; its lower bound
//! comes from completely contractive bilinear pairings `(x, y) -> φ(x) ψ(y)`.

use std::sync::{Arc, OnceLock};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::linalg::{c, expm, herm_eig, op_norm_unchecked, pinv, svd, top_singular, CMatrix, C64, ONE, ZERO};
use crate::multipliers::{multiplier_invariance_check, multiplier_norm, verify_adjointable, Decision, MultiplierNorm};
use crate::normcore::{self, certify_complete_contraction, cb_norm_bounds, map_norm_at_level, CbNormCertificate, MapProblem, SearchStop};
use crate::opspace::{Bounds, NormOracle, OpSpace, Provenance, SpaceMap, StandardKind};
use crate::par;
use crate::sdp::{hermitian_entries, solve_with, Entry, SdpOptions, SdpProblem, SdpStatus};

// ------------------------------------------------------------ minimal tensor

/// `X ⊗_min M_k`, spanned by `b_i ⊗ E_rs` in `(pk) x (qk)` matrices.
/// Coordinate index `i k^2 + r k + s`.
pub fn min_tensor(x: &OpSpace, k: usize) -> Result<OpSpace> {
    if k == 0 {
        return Err(Error::input("tensor factor size must be at least 1"));
    }
    let mut basis = Vec::with_capacity(x.dim() * k * k);
    for b in x.basis() {
        for r in 0..k {
            for s in 0..k {
                basis.push(b.kron(&CMatrix::unit(k, k, r, s)));
            }
        }
    }
    let label = if k == 1 { x.label().to_string() } else { format!("{}(x)M_{k}", x.label()) };
    OpSpace::new(basis, label, x.shilov_flag())
}

/// `T ⊗ Id_{M_k}` on `X ⊗_min M_k`.
pub fn min_tensor_map(t: &SpaceMap, k: usize) -> Result<SpaceMap> {
    let dom = Arc::new(min_tensor(t.domain(), k)?);
    let cod = if t.is_endo() { dom.clone() } else { Arc::new(min_tensor(t.codomain(), k)?) };
    SpaceMap::new(dom, cod, t.matrix().kron(&CMatrix::identity(k * k)))
}

// ------------------------------------------------------------ Haagerup tensor

/// Result of comparing the oracle with exact `M_{p,q}` norms on `C_p ⊗h R_q`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub p: usize,
    pub q: usize,
    pub samples: usize,
    pub max_error: f64,
    pub passed: bool,
}

/// `X ⊗h Y` for concrete factors.
#[derive(Clone, Debug)]
pub struct HaagerupSpace {
    x: Arc<OpSpace>,
    y: Arc<OpSpace>,
    /// `a_a a_a'^*` and `b_b^* b_b'`.
    left_grams: Vec<CMatrix>,
    right_grams: Vec<CMatrix>,
    level_cap: usize,
    /// Ampliation used by the pairing lower bound.
    pairing_mult: usize,
    pairing_starts: usize,
    seed: u64,
    opts: SdpOptions,
    calibration: CalibrationReport,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HaagerupFile {
    pub schema: String,
    pub left: String,
    pub right: String,
    pub dim: usize,
    pub level_cap: usize,
    pub calibration: CalibrationReport,
}

const CALIBRATION_TOL: f64 = 1e-4;

fn calibration_cache() -> &'static OnceLock<CalibrationReport> {
    static CELL: OnceLock<CalibrationReport> = OnceLock::new();
    &CELL
}

impl HaagerupSpace {
    fn bare(x: Arc<OpSpace>, y: Arc<OpSpace>, cfg: &Config) -> Self {
        let left_grams = x
            .basis()
            .iter()
            .flat_map(|a| x.basis().iter().map(move |a2| a.matmul(&a2.adjoint())))
            .collect();
        let right_grams = y
            .basis()
            .iter()
            .flat_map(|b| y.basis().iter().map(move |b2| b.adjoint().matmul(b2)))
            .collect();
        Self {
            x,
            y,
            left_grams,
            right_grams,
            level_cap: cfg.oracle_level_cap.max(1),
            pairing_mult: 2,
            pairing_starts: cfg.oracle_multistarts.max(2),
            seed: cfg.seed,
            opts: SdpOptions {
                gap_tol: cfg.sdp_gap_tol.min(1e-8),
                feas_tol: cfg.sdp_feas_tol.min(1e-9),
                max_iter: cfg.sdp_max_iter.max(150),
            },
            calibration: CalibrationReport {
                p: 0,
                q: 0,
                samples: 0,
                max_error: 0.0,
                passed: false,
            },
        }
    }

    pub fn left(&self) -> &Arc<OpSpace> {
        &self.x
    }

    pub fn right(&self) -> &Arc<OpSpace> {
        &self.y
    }

    pub fn calibration(&self) -> &CalibrationReport {
        &self.calibration
    }

    pub fn to_file(&self) -> HaagerupFile {
        HaagerupFile {
            schema: "haagerup/v1".into(),
            left: self.x.label().to_string(),
            right: self.y.label().to_string(),
            dim: self.x.dim() * self.y.dim(),
            level_cap: self.level_cap,
            calibration: self.calibration.clone(),
        }
    }

    fn coeff_blocks(&self, n1: usize, n2: usize, coords: &[C64]) -> CMatrix {
        let (dx, dy) = (self.x.dim(), self.y.dim());
        let mut u = CMatrix::zeros(dx * n1, dy * n2);
        for i in 0..n1 {
            for j in 0..n2 {
                for a in 0..dx {
                    for b in 0..dy {
                        u[(a * n1 + i, b * n2 + j)] = coords[((i * n2 + j) * dx + a) * dy + b];
                    }
                }
            }
        }
        u
    }

    /// `Σ_{a,a'} G_{aa'} ⊗ grams[a, a']` for a `(d n) x (d n)` Gram matrix.
    fn gram_image(grams: &[CMatrix], d: usize, n: usize, g: &CMatrix) -> CMatrix {
        let p = grams[0].rows();
        let mut out = CMatrix::zeros(n * p, n * p);
        for a in 0..d {
            for a2 in 0..d {
                let gm = &grams[a * d + a2];
                for i in 0..n {
                    for i2 in 0..n {
                        let v = g[(a * n + i, a2 * n + i2)];
                        if v != ZERO {
                            out.add_block(i * p, i2 * p, gm, v);
                        }
                    }
                }
            }
        }
        out
    }

    /// Upper bound from the triangle inequality over elementary tensors.
    fn crude_upper(&self, n1: usize, n2: usize, coords: &[C64]) -> f64 {
        let u = self.coeff_blocks(n1, n2, coords);
        let (dx, dy) = (self.x.dim(), self.y.dim());
        let mut total = 0.0;
        for a in 0..dx {
            let na = op_norm_unchecked(&self.x.basis()[a]);
            for b in 0..dy {
                let nb = op_norm_unchecked(&self.y.basis()[b]);
                total += op_norm_unchecked(&u.submatrix(a * n1, b * n2, n1, n2)) * na * nb;
            }
        }
        total
    }

    /// Factorization upper bound for an `n1 x n2` matrix over `X ⊗ Y`.
    ///
    /// Solves `min t` over Hermitian `G, H` with `[[G, U], [U^*, H]] ⪰ 0`,
    /// `Φ(G) ⪯ t` and `Ψ(H) ⪯ t`, then repairs the returned Gram pair to
    /// exact positivity so that it encodes a genuine factorization.
    pub fn factorization_upper(&self, n1: usize, n2: usize, coords: &[C64]) -> Result<f64> {
        let (dx, dy) = (self.x.dim(), self.y.dim());
        let u = self.coeff_blocks(n1, n2, coords);
        if u.max_abs() == 0.0 {
            return Ok(0.0);
        }
        let (nx, ny) = (dx * n1, dy * n2);
        let (px, qy) = (self.x.p(), self.y.q());
        let (b1, b2) = (n1 * px, n2 * qy);
        let nb = nx + ny;
        let mut prob = SdpProblem::new(vec![nb, b1, b2]);
        let mut cm = CMatrix::zeros(nb, nb);
        cm.set_block(0, nx, &u);
        cm.set_block(nx, 0, &u.adjoint());
        prob.objective = hermitian_entries(0, &cm);
        let gens_x = herm_generators(nx);
        let gens_y = herm_generators(ny);
        for e in &gens_x {
            let mut blk0 = CMatrix::zeros(nb, nb);
            blk0.set_block(0, 0, &e.scale_real(-1.0));
            let mut entries = hermitian_entries(0, &blk0);
            entries.extend(hermitian_entries(1, &Self::gram_image(&self.left_grams, dx, n1, e)));
            prob.add_constraint(entries, 0.0);
        }
        for e in &gens_y {
            let mut blk0 = CMatrix::zeros(nb, nb);
            blk0.set_block(nx, nx, &e.scale_real(-1.0));
            let mut entries = hermitian_entries(0, &blk0);
            entries.extend(hermitian_entries(2, &Self::gram_image(&self.right_grams, dy, n2, e)));
            prob.add_constraint(entries, 0.0);
        }
        let mut entries: Vec<Entry> = hermitian_entries(1, &CMatrix::identity(b1).scale_real(-1.0));
        entries.extend(hermitian_entries(2, &CMatrix::identity(b2).scale_real(-1.0)));
        prob.add_constraint(entries, -1.0);
        let crude = self.crude_upper(n1, n2, coords);
        let res = match solve_with(&prob, &self.opts) {
            Ok(r) => r,
            Err(_) => return Ok(crude),
        };
        if res.status == SdpStatus::PrimalInfeasible || res.status == SdpStatus::DualInfeasible {
            return Ok(crude);
        }
        let mut g = CMatrix::zeros(nx, nx);
        for (e, y) in gens_x.iter().zip(&res.y) {
            g.axpy(c(*y, 0.0), e);
        }
        let mut h = CMatrix::zeros(ny, ny);
        for (e, y) in gens_y.iter().zip(&res.y[gens_x.len()..]) {
            h.axpy(c(*y, 0.0), e);
        }
        let mut m = CMatrix::zeros(nb, nb);
        m.set_block(0, 0, &g);
        m.set_block(0, nx, &u);
        m.set_block(nx, 0, &u.adjoint());
        m.set_block(nx, nx, &h);
        let lam = herm_eig(&m.hermitian_part())?.values[0];
        let shift = if lam < 0.0 { -lam * (1.0 + 1e-9) + 1e-14 } else { 0.0 };
        let g2 = &g + &CMatrix::identity(nx).scale_real(shift);
        let h2 = &h + &CMatrix::identity(ny).scale_real(shift);
        let fx = top_eig(&Self::gram_image(&self.left_grams, dx, n1, &g2))?;
        let fy = top_eig(&Self::gram_image(&self.right_grams, dy, n2, &h2))?;
        let ub = (fx.max(0.0) * fy.max(0.0)).sqrt();
        Ok(if ub.is_finite() { ub.min(crude) } else { crude })
    }

    /// `Σ U_ab ⊗ (a_a ⊗ I_r) D (b_b ⊗ I_s)`.
    fn pairing_image(&self, u: &CMatrix, n1: usize, n2: usize, lifts: &Lifts, dm: &CMatrix) -> CMatrix {
        let (dx, dy) = (self.x.dim(), self.y.dim());
        let mut out = CMatrix::zeros(n1 * lifts.rows, n2 * lifts.cols);
        for a in 0..dx {
            let left = lifts.x[a].matmul(dm);
            for b in 0..dy {
                let blk = u.submatrix(a * n1, b * n2, n1, n2);
                if blk.max_abs() == 0.0 {
                    continue;
                }
                let w = left.matmul(&lifts.y[b]);
                out = &out + &blk.kron(&w);
            }
        }
        out
    }

    /// Lower bound by ascent over contractions `D` in the pairing
    /// `(x, y) -> (x ⊗ I_r) D (y ⊗ I_s)`.
    pub fn pairing_lower(&self, n1: usize, n2: usize, coords: &[C64]) -> f64 {
        let u = self.coeff_blocks(n1, n2, coords);
        if u.max_abs() == 0.0 {
            return 0.0;
        }
        let lifts = Lifts::new(&self.x, &self.y, self.pairing_mult);
        let (dr, dc) = (lifts.mid_rows, lifts.mid_cols);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x4a6e);
        let mut starts = vec![CMatrix::from_fn(dr, dc, |i, j| if i == j { ONE } else { ZERO })];
        for _ in 1..self.pairing_starts {
            let g = CMatrix::random_gaussian(dr, dc, &mut rng);
            let s = op_norm_unchecked(&g);
            starts.push(g.scale_real(1.0 / s));
        }
        let mut best: f64 = 0.0;
        for d0 in starts {
            let mut dm = d0;
            let mut val = op_norm_unchecked(&self.pairing_image(&u, n1, n2, &lifts, &dm));
            for _ in 0..200 {
                let img = self.pairing_image(&u, n1, n2, &lifts, &dm);
                let (_, xi, eta) = top_singular(&img);
                let k = self.pairing_gradient(&u, n1, n2, &lifts, &xi, &eta);
                let next = polar(&k).adjoint();
                let v = op_norm_unchecked(&self.pairing_image(&u, n1, n2, &lifts, &next));
                if v <= val * (1.0 + 1e-13) {
                    break;
                }
                val = v;
                dm = next;
            }
            best = best.max(val);
        }
        best
    }

    /// `K` with `ξ^* L(D) η = tr(D K)`.
    fn pairing_gradient(&self, u: &CMatrix, n1: usize, n2: usize, lifts: &Lifts, xi: &[C64], eta: &[C64]) -> CMatrix {
        let (dx, dy) = (self.x.dim(), self.y.dim());
        let mut k = CMatrix::zeros(lifts.mid_cols, lifts.mid_rows);
        let xi_blocks: Vec<CMatrix> = (0..n1)
            .map(|i| CMatrix::column(&xi[i * lifts.rows..(i + 1) * lifts.rows]))
            .collect();
        let eta_blocks: Vec<CMatrix> = (0..n2)
            .map(|j| CMatrix::column(&eta[j * lifts.cols..(j + 1) * lifts.cols]))
            .collect();
        for a in 0..dx {
            let xa: Vec<CMatrix> = xi_blocks.iter().map(|v| lifts.x[a].adjoint().matmul(v)).collect();
            for b in 0..dy {
                let yb: Vec<CMatrix> = eta_blocks.iter().map(|v| lifts.y[b].matmul(v)).collect();
                for i in 0..n1 {
                    for j in 0..n2 {
                        let coef = u[(a * n1 + i, b * n2 + j)];
                        if coef != ZERO {
                            k.axpy(coef, &yb[j].matmul(&xa[i].adjoint()));
                        }
                    }
                }
            }
        }
        k
    }

    /// Two-sided bounds for a rectangular `n1 x n2` matrix over `X ⊗h Y`.
    /// Coordinate index `((i n2 + j) d_X + a) d_Y + b`.
    pub fn rect_bounds(&self, n1: usize, n2: usize, coords: &[C64]) -> Result<Bounds> {
        let d = self.x.dim() * self.y.dim();
        if coords.len() != n1 * n2 * d {
            return Err(Error::input("coordinate length mismatch"));
        }
        let ub = self.factorization_upper(n1, n2, coords)?;
        let lb = self.pairing_lower(n1, n2, coords).min(ub.max(0.0) * (1.0 + 1e-9));
        Ok(Bounds { lb, ub })
    }

    fn calibrate(cfg: &Config) -> CalibrationReport {
        calibration_cache()
            .get_or_init(|| {
                let x = Arc::new(OpSpace::standard(StandardKind::Column(2)).expect("standard space"));
                let y = Arc::new(OpSpace::standard(StandardKind::Row(2)).expect("standard space"));
                let hs = Self::bare(x, y, &Config { seed: 11, ..cfg.clone() });
                let mut rng = ChaCha8Rng::seed_from_u64(0xca1b);
                let mut max_error: f64 = 0.0;
                let mut samples = 0;
                for n in [1usize, 1, 1, 2, 2] {
                    let coords = CMatrix::random_gaussian(n * n * 4, 1, &mut rng).into_data();
                    let exact = calibration_exact(&hs, n, &coords);
                    match hs.rect_bounds(n, n, &coords) {
                        Ok(b) => {
                            max_error = max_error.max((b.ub - exact).abs()).max((b.lb - exact).abs());
                        }
                        Err(_) => max_error = f64::INFINITY,
                    }
                    samples += 1;
                }
                CalibrationReport {
                    p: 2,
                    q: 2,
                    samples,
                    max_error,
                    passed: max_error <= CALIBRATION_TOL,
                }
            })
            .clone()
    }
}

/// Exact norm of a level-n element of `C_p ⊗h R_q`, read as a matrix over `M_{p,q}`.
pub fn calibration_exact(hs: &HaagerupSpace, n: usize, coords: &[C64]) -> f64 {
    let (p, q) = (hs.x.dim(), hs.y.dim());
    let m = CMatrix::from_fn(n * p, n * q, |r, s| {
        let (i, a) = (r / p, r % p);
        let (j, b) = (s / q, s % q);
        coords[((i * n + j) * p + a) * q + b]
    });
    op_norm_unchecked(&m)
}

impl NormOracle for HaagerupSpace {
    fn dim(&self) -> usize {
        self.x.dim() * self.y.dim()
    }

    fn level_cap(&self) -> usize {
        self.level_cap
    }

    fn provenance(&self) -> Provenance {
        Provenance::Haagerup
    }

    fn norm_bounds(&self, n: usize, coords: &[C64]) -> Result<Bounds> {
        self.rect_bounds(n, n, coords)
    }
}

/// Builds the oracle after the engine passes its `C_2 ⊗h R_2` calibration.
pub fn haagerup_space(x: Arc<OpSpace>, y: Arc<OpSpace>, cfg: &Config) -> Result<HaagerupSpace> {
    if x.dim() * y.dim() > 16 {
        return Err(Error::input(format!(
            "Haagerup oracle limited to d_X d_Y <= 16 (got {})",
            x.dim() * y.dim()
        )));
    }
    let calibration = HaagerupSpace::calibrate(cfg);
    if !calibration.passed {
        return Err(Error::Oracle(format!(
            "Haagerup oracle calibration failed (error {:.3e})",
            calibration.max_error
        )));
    }
    let mut hs = HaagerupSpace::bare(x, y, cfg);
    hs.calibration = calibration;
    Ok(hs)
}

struct Lifts {
    /// `a ⊗ I_r` and `b ⊗ I_s`.
    x: Vec<CMatrix>,
    y: Vec<CMatrix>,
    rows: usize,
    cols: usize,
    mid_rows: usize,
    mid_cols: usize,
}

impl Lifts {
    fn new(x: &OpSpace, y: &OpSpace, r: usize) -> Self {
        let id = CMatrix::identity(r);
        Self {
            x: x.basis().iter().map(|a| a.kron(&id)).collect(),
            y: y.basis().iter().map(|b| b.kron(&id)).collect(),
            rows: x.p() * r,
            cols: y.q() * r,
            mid_rows: x.q() * r,
            mid_cols: y.p() * r,
        }
    }
}

/// Real basis of the `n x n` Hermitian matrices.
fn herm_generators(n: usize) -> Vec<CMatrix> {
    let mut out = Vec::with_capacity(n * n);
    for r in 0..n {
        out.push(CMatrix::unit(n, n, r, r));
        for s in (r + 1)..n {
            let mut sym = CMatrix::zeros(n, n);
            sym[(r, s)] = ONE;
            sym[(s, r)] = ONE;
            out.push(sym);
            let mut anti = CMatrix::zeros(n, n);
            anti[(r, s)] = c(0.0, 1.0);
            anti[(s, r)] = c(0.0, -1.0);
            out.push(anti);
        }
    }
    out
}

fn top_eig(h: &CMatrix) -> Result<f64> {
    let e = herm_eig(&h.hermitian_part())?;
    Ok(e.values.last().copied().unwrap_or(0.0))
}

fn polar(a: &CMatrix) -> CMatrix {
    let d = svd(a);
    let (m, n) = a.shape();
    let smax = d.s.first().copied().unwrap_or(0.0);
    let mut w = CMatrix::zeros(m, n);
    for t in 0..d.s.len() {
        if d.s[t] <= 1e-12 * smax {
            continue;
        }
        for i in 0..m {
            for j in 0..n {
                w[(i, j)] += d.u[(i, t)] * d.v[(j, t)].conj();
            }
        }
    }
    w
}

// ------------------------------------------------- multipliers on X ⊗h Y

/// Elementary `x ⊙ (y I_n)` for a rectangular `n1 x n2` matrix `x` over `X`.
fn elementary(dx: usize, dy: usize, x_rect: &[C64], y: &[C64]) -> Vec<C64> {
    let blocks = x_rect.len() / dx;
    let mut out = vec![ZERO; blocks * dx * dy];
    for blk in 0..blocks {
        for a in 0..dx {
            for b in 0..dy {
                out[(blk * dx + a) * dy + b] = x_rect[blk * dx + a] * y[b];
            }
        }
    }
    out
}

/// Level-n element of `C_2(X)` as a `2n x n` matrix over `X` (row `2i + slot`).
fn column2_to_rect(n: usize, d: usize, coords: &[C64]) -> Vec<C64> {
    let mut out = vec![ZERO; 2 * n * n * d];
    for i in 0..n {
        for j in 0..n {
            for slot in 0..2 {
                let src = (i * n + j) * 2 * d + slot * d;
                let dst = ((2 * i + slot) * n + j) * d;
                out[dst..dst + d].copy_from_slice(&coords[src..src + d]);
            }
        }
    }
    out
}

/// `τ_{T/λ} ⊗ Id` on a `2n x n` matrix over `X ⊗ Y` laid out by `column2_to_rect`.
fn tau_tensor(t: &CMatrix, dy: usize, n: usize, u: &[C64], lambda: f64) -> Vec<C64> {
    let dx = t.rows();
    let mut out = u.to_vec();
    for r in (0..2 * n).step_by(2) {
        for j in 0..n {
            let base = (r * n + j) * dx * dy;
            for b in 0..dy {
                let col: Vec<C64> = (0..dx).map(|a| u[base + a * dy + b]).collect();
                let img = t.matvec(&col);
                for a in 0..dx {
                    out[base + a * dy + b] = img[a] / lambda;
                }
            }
        }
    }
    out
}

/// Certified sup of `λ` with `lb ||τ_{T/λ} u|| > ub ||u||`; `None` if no `λ ≥ lo` qualifies.
fn crossing(hs: &HaagerupSpace, t: &CMatrix, n: usize, u: &[C64], lo: f64, hi: f64) -> Result<Option<f64>> {
    let dy = hs.y.dim();
    let ub = hs.rect_bounds(2 * n, n, u)?.ub;
    if ub == 0.0 {
        return Ok(None);
    }
    let beats = |lambda: f64| hs.pairing_lower(2 * n, n, &tau_tensor(t, dy, n, u, lambda)) > ub;
    if !beats(lo) {
        return Ok(None);
    }
    let (mut a, mut b) = (lo, hi);
    for _ in 0..40 {
        let mid = 0.5 * (a + b);
        if beats(mid) {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(Some(a))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HaagerupMultiplierReport {
    /// `||T||_Ml` on `X`.
    pub concrete_lower: f64,
    pub concrete_upper: f64,
    /// Certified lower bound for `||T ⊗ Id||_Ml` on the oracle.
    pub oracle_lower: f64,
    /// Largest certified `||τ u|| / ||u||` at `λ = ||T||_Ml` over a probe bank.
    pub probe_max_ratio: f64,
    pub agree: Decision,
}

/// Compares the multiplier norm of `T` on `X` with that of `T ⊗ Id_Y` on `X ⊗h Y`.
pub fn haagerup_multiplier_check(t: &SpaceMap, hs: &HaagerupSpace, cfg: &Config) -> Result<HaagerupMultiplierReport> {
    if t.domain().as_ref() != hs.x.as_ref() || !t.is_endo() {
        return Err(Error::input("map must be an endomorphism of the left factor"));
    }
    let mn: MultiplierNorm = multiplier_norm(t, cfg)?;
    if mn.is_multiplier != Decision::Yes {
        return Err(Error::input("map is not a verified multiplier of the left factor"));
    }
    let (dx, dy) = (hs.x.dim(), hs.y.dim());
    let y0 = unit_element(&hs.y);
    let mut bank: Vec<(usize, Vec<C64>)> = Vec::new();
    if let Some(w) = &mn.witness {
        bank.push((w.level, column2_to_rect(w.level, dx, &w.coords)));
    }
    for k in 0..dx {
        let mut v = vec![ZERO; 2 * dx];
        v[k] = ONE;
        bank.push((1, v));
    }
    let hi = (mn.upper * 2.0).max(1.0);
    let lo = mn.lower.max(mn.upper * 0.5) * 0.5;
    let tm = t.matrix();
    let crossings = par::map_slice(&bank, cfg.parallel, |(n, xr)| {
        crossing(hs, tm, *n, &elementary(dx, dy, xr, &y0), lo.max(1e-6), hi)
    });
    let mut oracle_lower: f64 = 0.0;
    for cr in crossings {
        if let Some(v) = cr? {
            oracle_lower = oracle_lower.max(v);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7e45);
    let mut probes: Vec<(usize, Vec<C64>)> = Vec::new();
    for n in 1..=hs.level_cap.min(2) {
        for _ in 0..cfg.oracle_multistarts.max(2) {
            probes.push((n, CMatrix::random_gaussian(2 * n * n * dx * dy, 1, &mut rng).into_data()));
        }
    }
    for (n, xr) in &bank {
        probes.push((*n, elementary(dx, dy, xr, &y0)));
    }
    let lambda = mn.upper.max(1e-12);
    let ratios = par::map_slice(&probes, cfg.parallel, |(n, u)| -> Result<f64> {
        let ub = hs.rect_bounds(2 * n, *n, u)?.ub;
        let lb = hs.pairing_lower(2 * n, *n, &tau_tensor(tm, dy, *n, u, lambda));
        Ok(if ub > 0.0 { lb / ub } else { 0.0 })
    });
    let mut probe_max_ratio: f64 = 0.0;
    for r in ratios {
        probe_max_ratio = probe_max_ratio.max(r?);
    }
    let tol = cfg.oracle_tol * mn.upper.max(1.0);
    let over = probe_max_ratio > 1.0 + cfg.oracle_tol || oracle_lower > mn.upper + tol;
    let agree = if over {
        Decision::No
    } else if (oracle_lower - mn.lower).abs() <= tol {
        Decision::Yes
    } else {
        Decision::Inconclusive
    };
    Ok(HaagerupMultiplierReport {
        concrete_lower: mn.lower,
        concrete_upper: mn.upper,
        oracle_lower,
        probe_max_ratio,
        agree,
    })
}

fn unit_element(y: &OpSpace) -> Vec<C64> {
    let mut v = vec![ZERO; y.dim()];
    v[0] = ONE;
    let s = y.norm(1, &v);
    v[0] = c(1.0 / s, 0.0);
    v
}

/// Witnessed lower bound for `max_t ||exp(i t T) ⊗ Id|| - 1` on `X ⊗h Y`, which
/// bounds the Hermitian defect of `T ⊗ Id` from below.
pub fn haagerup_defect_lower(t: &SpaceMap, hs: &HaagerupSpace, cfg: &Config) -> Result<f64> {
    if t.domain().as_ref() != hs.x.as_ref() || !t.is_endo() {
        return Err(Error::input("map must be an endomorphism of the left factor"));
    }
    let (dx, dy) = (hs.x.dim(), hs.y.dim());
    let y0 = unit_element(&hs.y);
    let grid = cfg.defect_grid();
    let vals = par::map_slice(&grid, cfg.parallel, |&time| -> Result<f64> {
        let e = expm(&t.matrix().scale(c(0.0, time)))?;
        let map = t.with_matrix(e.clone())?;
        let w = map_norm_at_level(&MapProblem::from_map(&map), 1, cfg, &[], SearchStop::never())?;
        if w.ratio <= 1.0 + 1e-12 {
            return Ok(0.0);
        }
        let u = elementary(dx, dy, &w.coords, &y0);
        let img: Vec<C64> = {
            let mut out = u.clone();
            for b in 0..dy {
                let col: Vec<C64> = (0..dx).map(|a| u[a * dy + b]).collect();
                let v = e.matvec(&col);
                for a in 0..dx {
                    out[a * dy + b] = v[a];
                }
            }
            out
        };
        let ub = hs.rect_bounds(1, 1, &u)?.ub;
        let lb = hs.pairing_lower(1, 1, &img);
        Ok(if ub > 0.0 { lb / ub - 1.0 } else { 0.0 })
    });
    let mut best: f64 = 0.0;
    for v in vals {
        best = best.max(v?);
    }
    Ok(best)
}

// -------------------------------------------------------------- direct sums

#[derive(Clone, Debug)]
pub struct DiagonalSum {
    pub map: SpaceMap,
    pub norm: MultiplierNorm,
    /// `max_i ||T_i||_Ml` (upper bounds).
    pub expected: f64,
    pub norm_matches: bool,
    /// `(⊕ T_i)⋆ = ⊕ T_i⋆`, when every summand is adjointable.
    pub involution_distributes: Option<bool>,
}

/// `⊕ T_i` on `⊕ X_i`, with its multiplier norm compared to `max ||T_i||`.
pub fn diagonal_sum_multiplier(ts: &[SpaceMap], cfg: &Config, check_adjoint: bool) -> Result<DiagonalSum> {
    let first = ts.first().ok_or_else(|| Error::input("empty family"))?;
    let norms = par::map_slice(ts, cfg.parallel, |t| multiplier_norm(t, cfg));
    let mut expected: f64 = 0.0;
    for (i, n) in norms.into_iter().enumerate() {
        let n = n?;
        if n.is_multiplier != Decision::Yes {
            return Err(Error::input(format!("summand {i} is not a verified multiplier")));
        }
        expected = expected.max(n.upper);
    }
    let mut space = first.domain().as_ref().clone();
    for t in &ts[1..] {
        space = space.direct_sum(t.domain());
    }
    let space = Arc::new(space);
    let mats: Vec<&CMatrix> = ts.iter().map(|t| t.matrix()).collect();
    let map = SpaceMap::endo(space, CMatrix::block_diag(&mats))?;
    let norm = multiplier_norm(&map, cfg)?;
    let norm_matches = (norm.upper - expected).abs() <= cfg.mult_rel_tol.max(1e-6) * expected.max(1.0) * 10.0;
    let involution_distributes = if check_adjoint {
        let mut stars = Vec::with_capacity(ts.len());
        for t in ts {
            let rep = verify_adjointable(t, cfg.confirm_tol.max(1e-6), cfg)?;
            match (rep.decision, rep.adjoint) {
                (Decision::Yes, Some(a)) => stars.push(a.matrix().clone()),
                _ => return Ok(DiagonalSum { map, norm, expected, norm_matches, involution_distributes: None }),
            }
        }
        let rep = verify_adjointable(&map, cfg.confirm_tol.max(1e-6), cfg)?;
        let refs: Vec<&CMatrix> = stars.iter().collect();
        let want = CMatrix::block_diag(&refs);
        Some(rep.decision == Decision::Yes && rep.adjoint.is_some_and(|a| a.matrix().dist(&want) < 1e-6))
    } else {
        None
    };
    Ok(DiagonalSum {
        map,
        norm,
        expected,
        norm_matches,
        involution_distributes,
    })
}

// ------------------------------------------------- subspaces and quotients

#[derive(Clone, Debug)]
pub struct RestrictQuotient {
    pub restriction: SpaceMap,
    pub restriction_norm: MultiplierNorm,
    /// `τ^c` of the induced map on `X / Y`, certified on the quotient.
    pub quotient_tau: CbNormCertificate,
    /// cb-norm of the induced map `X / Y -> X / Y`.
    pub quotient_norm: CbNormCertificate,
    pub restriction_ok: Decision,
    pub quotient_ok: Decision,
}

/// `T|_Y` and `T / Y` for a contractive multiplier leaving `Y` invariant.
pub fn restrict_and_quotient_multiplier(t: &SpaceMap, y_spans: &[Vec<C64>], cfg: &Config) -> Result<RestrictQuotient> {
    if !t.is_endo() {
        return Err(Error::input("map must be an endomorphism"));
    }
    let mn = multiplier_norm(t, cfg)?;
    if mn.is_multiplier != Decision::Yes || mn.upper > 1.0 + cfg.contraction_tol {
        return Err(Error::input(format!("map is not a verified multiplier of norm <= 1 ({:.6})", mn.upper)));
    }
    if y_spans.is_empty() || !multiplier_invariance_check(t, y_spans, 1e-8)? {
        return Err(Error::input("subspace is not invariant under the map"));
    }
    let x = t.domain();
    let d = x.dim();
    let ysub = Arc::new(x.subspace(y_spans, format!("Y<{}", x.label()))?);
    let s = CMatrix::from_fn(d, y_spans.len(), |i, j| y_spans[j][i]);
    let restricted = pinv(&s, 1e-12).matmul(&t.matrix().matmul(&s));
    let restriction = SpaceMap::endo(ysub, restricted)?;
    let restriction_norm = multiplier_norm(&restriction, cfg)?;
    let restriction_ok = if restriction_norm.is_multiplier == Decision::Yes
        && restriction_norm.upper <= 1.0 + cfg.contraction_tol
    {
        Decision::Yes
    } else {
        restriction_norm.is_multiplier.and(Decision::No)
    };
    let c2_kernel: Vec<Vec<C64>> = (0..2)
        .flat_map(|slot| {
            y_spans.iter().map(move |k| {
                let mut v = vec![ZERO; 2 * d];
                v[slot * d..(slot + 1) * d].copy_from_slice(k);
                v
            })
        })
        .collect();
    let quotient_tau = certify_complete_contraction(
        &MapProblem::quotient(&normcore::tau_c(t)?, c2_kernel),
        cfg,
        cfg.oracle_tol,
        &[],
    )?;
    let quotient_norm = cb_norm_bounds(&MapProblem::quotient(t, y_spans.to_vec()), cfg, &[])?;
    let quotient_ok = Decision::from_verdict(quotient_tau.verdict);
    Ok(RestrictQuotient {
        restriction,
        restriction_norm,
        quotient_tau,
        quotient_norm,
        restriction_ok,
        quotient_ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn std(kind: StandardKind) -> Arc<OpSpace> {
        Arc::new(OpSpace::standard(kind).unwrap())
    }

    #[test]
    fn min_tensor_with_m1_is_the_space() {
        let c2 = std(StandardKind::Column(2));
        let t = min_tensor(&c2, 1).unwrap();
        assert_eq!((t.p(), t.q(), t.dim()), (2, 1, 2));
        let l = min_tensor(&std(StandardKind::Diag(2)), 2).unwrap();
        assert_eq!(l.dim(), 8);
    }

    #[test]
    fn haagerup_column_row_calibration() {
        let cfg = Config::quick();
        let hs = haagerup_space(std(StandardKind::Column(2)), std(StandardKind::Row(2)), &cfg).unwrap();
        assert!(hs.calibration().passed, "{:?}", hs.calibration());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..3 {
            let coords = CMatrix::random_gaussian(4, 1, &mut rng).into_data();
            let b = hs.norm_bounds(1, &coords).unwrap();
            let exact = calibration_exact(&hs, 1, &coords);
            assert!((b.ub - exact).abs() < 1e-5 && (b.lb - exact).abs() < 1e-5, "{b:?} {exact}");
        }
    }

    #[test]
    fn haagerup_diagonal_unit() {
        let cfg = Config::quick();
        let l2 = std(StandardKind::Diag(2));
        let hs = haagerup_space(l2.clone(), l2, &cfg).unwrap();
        let mut u = vec![ZERO; 4];
        u[0] = ONE;
        u[3] = ONE;
        let b = hs.norm_bounds(1, &u).unwrap();
        assert!((b.ub - 1.0).abs() < 1e-6 && (b.lb - 1.0).abs() < 1e-6, "{b:?}");
        assert_eq!(hs.norm_bounds(1, &[ZERO; 4]).unwrap().ub, 0.0);
    }

    #[test]
    fn multiplier_transfer_to_haagerup() {
        let cfg = Config::quick();
        let l2 = std(StandardKind::Diag(2));
        let hs = haagerup_space(l2.clone(), l2.clone(), &cfg).unwrap();
        let t = SpaceMap::endo(l2.clone(), CMatrix::diag_real(&[1.0, 2.0])).unwrap();
        let r = haagerup_multiplier_check(&t, &hs, &cfg).unwrap();
        assert_eq!(r.agree, Decision::Yes, "{r:?}");
        assert!((r.oracle_lower - 2.0).abs() < 1e-3, "{r:?}");
        let id = SpaceMap::identity(l2.clone());
        let r = haagerup_multiplier_check(&id, &hs, &cfg).unwrap();
        assert!((r.oracle_lower - 1.0).abs() < 1e-3, "{r:?}");
        let swap = SpaceMap::endo(l2, CMatrix::from_real(&[&[0.0, 1.0], &[1.0, 0.0]])).unwrap();
        let d = haagerup_defect_lower(&swap, &hs, &cfg).unwrap();
        assert!(d > 0.05, "{d}");
    }

    #[test]
    fn sums_and_quotients() {
        let cfg = Config::quick();
        let l2 = std(StandardKind::Diag(2));
        let one = SpaceMap::identity(l2.clone());
        let two = one.scale(c(2.0, 0.0));
        let s = diagonal_sum_multiplier(&[one.clone(), two], &cfg, false).unwrap();
        assert!(s.norm_matches && (s.expected - 2.0).abs() < 1e-5, "{s:?}");
        let full: Vec<Vec<C64>> = vec![vec![ONE, ZERO], vec![ZERO, ONE]];
        let rq = restrict_and_quotient_multiplier(&one, &full, &cfg).unwrap();
        assert!(rq.quotient_norm.upper_value() < 1e-6);
        let p = SpaceMap::endo(l2, CMatrix::diag_real(&[1.0, 0.0])).unwrap();
        assert!(restrict_and_quotient_multiplier(&p, &[vec![ONE, ONE]], &cfg).is_err());
    }
}
