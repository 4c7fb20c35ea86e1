//! Multiplier norms, Hermitian defects, and the adjointable multiplier algebra.
//!
//! The algebra is found spatially. The embedding is first compressed onto the
//! smallest set of central blocks of `C*(X X^*)` on which it stays completely
//! isometric; on that embedding the adjointable multipliers are exactly the
//! left multiplications `x -> A x` with `A X ⊂ X` and `A^* X ⊂ X`. Every
//! basis element is then re-verified through its Hermitian defect.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::linalg::{
    c, column_space, expm, herm_eig, null_space_scaled, op_norm_unchecked, pinv, CMatrix, C64, I, ONE, ZERO,
};
use crate::normcore::{
    self, cb_upper_bound, cb_upper_bound_with, certify_complete_contraction, certify_complete_isometry,
    max_contractive_scale, MapProblem, SearchStop, Verdict, Witness,
};
use crate::opspace::{Element, OpSpace, SpaceMap};
use crate::par;
use crate::sdp::{SdpOptions, SdpStatus};

/// Three-valued outcome of a numerical test.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Yes,
    No,
    Inconclusive,
}

impl Decision {
    pub fn from_verdict(v: Verdict) -> Self {
        match v {
            Verdict::Contraction => Decision::Yes,
            Verdict::NotContraction => Decision::No,
            Verdict::Inconclusive => Decision::Inconclusive,
        }
    }

    pub fn is_yes(self) -> bool {
        self == Decision::Yes
    }

    pub fn and(self, other: Decision) -> Decision {
        match (self, other) {
            (Decision::No, _) | (_, Decision::No) => Decision::No,
            (Decision::Yes, Decision::Yes) => Decision::Yes,
            _ => Decision::Inconclusive,
        }
    }
}

// ---------------------------------------------------------- multiplier norm

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MultiplierNorm {
    pub lower: f64,
    pub upper: f64,
    pub is_multiplier: Decision,
    /// `upper - lower <= mult_rel_tol * upper`.
    pub tight: bool,
    pub witness: Option<Witness>,
    pub status: SdpStatus,
}

fn tau_parts(d: usize, t: &CMatrix) -> (CMatrix, CMatrix) {
    let mut fixed = CMatrix::zeros(2 * d, 2 * d);
    fixed.set_block(d, d, &CMatrix::identity(d));
    let mut scaled = CMatrix::zeros(2 * d, 2 * d);
    scaled.set_block(0, 0, t);
    (fixed, scaled)
}

/// Norm of `τ_{T/λ}` at a fixed element of `C_2(X)`, relative to the element.
fn tau_ratio(c2: &OpSpace, t: &CMatrix, w: &Witness, lambda: f64) -> f64 {
    let n = w.level;
    let d = t.rows();
    let mut img = w.coords.clone();
    for blk in 0..n * n {
        let top = t.matvec(&w.coords[blk * 2 * d..blk * 2 * d + d]);
        for (k, v) in top.into_iter().enumerate() {
            img[blk * 2 * d + k] = v / lambda;
        }
    }
    c2.norm(n, &img) / c2.norm(n, &w.coords)
}

/// `inf { λ : τ_{T/λ}^c completely contractive }`, bracketed by a single
/// scale-maximization SDP (upper) and a witnessed ratio (lower).
pub fn multiplier_norm(t: &SpaceMap, cfg: &Config) -> Result<MultiplierNorm> {
    if !t.is_endo() {
        return Err(Error::input("multiplier norm needs an endomorphism"));
    }
    let x = t.domain();
    let d = x.dim();
    if t.matrix().max_abs() == 0.0 {
        t.cache_multiplier_norm((0.0, 0.0));
        return Ok(MultiplierNorm {
            lower: 0.0,
            upper: 0.0,
            is_multiplier: Decision::Yes,
            tight: true,
            witness: None,
            status: SdpStatus::Optimal,
        });
    }
    let c2 = normcore::column2(x);
    let (fixed, scaled) = tau_parts(d, t.matrix());
    let (smax, status) = max_contractive_scale(&c2, &c2, &fixed, &scaled, cfg)?;
    let cb_ub = cb_upper_bound(&MapProblem::from_map(t), cfg)?.value;
    let upper = if smax > 0.0 { 1.0 / smax } else { f64::INFINITY };
    if !upper.is_finite() || upper > cfg.mult_ceiling * cb_ub.max(1e-12) {
        return Ok(MultiplierNorm {
            lower: cb_ub.min(upper),
            upper: f64::INFINITY,
            is_multiplier: Decision::No,
            tight: false,
            witness: None,
            status,
        });
    }
    let lambda = upper * (1.0 - cfg.mult_rel_tol / 4.0);
    let tau = SpaceMap::endo(c2.clone(), &fixed + &scaled.scale(c(1.0 / lambda, 0.0)))?;
    let cert = certify_complete_contraction(&MapProblem::from_map(&tau), cfg, 1e-10, &[])?;
    let mut lower = 0.0;
    let witness = cert.witness.filter(|w| w.ratio > 1.0 + 1e-12);
    if let Some(w) = &witness {
        // ratio is decreasing in λ; find where it crosses 1
        let (mut lo, mut hi) = (lambda, upper * 2.0);
        if tau_ratio(&c2, t.matrix(), w, hi) > 1.0 + 1e-13 {
            hi = upper * 1e3;
        }
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if tau_ratio(&c2, t.matrix(), w, mid) > 1.0 + 1e-13 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lower = lo.min(upper);
    }
    let tight = upper - lower <= cfg.mult_rel_tol * upper;
    t.cache_multiplier_norm((lower, upper));
    Ok(MultiplierNorm {
        lower,
        upper,
        is_multiplier: Decision::Yes,
        tight,
        witness,
        status,
    })
}

// ---------------------------------------------------------- hermitian defect

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DefectReport {
    /// Certified upper bound on the defect.
    pub upper: f64,
    /// Witnessed lower bound (only searched for when the upper bound is large).
    pub lower: f64,
    pub worst_t: f64,
    pub grid: Vec<(f64, f64)>,
}

impl DefectReport {
    pub fn decide(&self, tol: f64) -> Decision {
        if self.upper <= tol {
            Decision::Yes
        } else if self.lower > tol {
            Decision::No
        } else {
            Decision::Inconclusive
        }
    }
}

fn exp_tau(t: &SpaceMap, time: f64) -> Result<SpaceMap> {
    let d = t.domain().dim();
    let e = expm(&t.matrix().scale(c(0.0, time)))?;
    let mut m = CMatrix::zeros(2 * d, 2 * d);
    m.set_block(0, 0, &e);
    m.set_block(d, d, &CMatrix::identity(d).scale(C64::from_polar(1.0, time)));
    SpaceMap::endo(normcore::column2(t.domain()), m)
}

fn defect_options(cfg: &Config) -> SdpOptions {
    SdpOptions {
        gap_tol: cfg.sdp_gap_tol.min(1e-8),
        feas_tol: cfg.sdp_feas_tol.min(1e-8),
        max_iter: cfg.sdp_max_iter.max(150),
    }
}

/// `max_t (||exp(i t τ_T^c)||_cb - 1)^+` over the configured grid.
pub fn hermitian_defect(t: &SpaceMap, cfg: &Config) -> Result<DefectReport> {
    if !t.is_endo() {
        return Err(Error::input("hermitian defect needs an endomorphism"));
    }
    let grid = cfg.defect_grid();
    let opts = defect_options(cfg);
    let vals = par::map_slice(&grid, cfg.parallel, |&time| -> Result<f64> {
        let e = exp_tau(t, time)?;
        Ok(cb_upper_bound_with(&MapProblem::from_map(&e), &opts)?.value)
    });
    let mut pts = Vec::with_capacity(grid.len());
    for (time, v) in grid.iter().zip(vals) {
        pts.push((*time, (v? - 1.0).max(0.0)));
    }
    let (worst_t, upper) = pts
        .iter()
        .copied()
        .fold((grid[0], 0.0), |a, b| if b.1 > a.1 { b } else { a });
    let mut lower = 0.0;
    if upper > cfg.detect_tol {
        let e = exp_tau(t, worst_t)?;
        let stop = SearchStop {
            above: f64::INFINITY,
            reach: 1.0 + upper - cfg.search_stop_gap,
        };
        let (w, _) = normcore::search_lower_bound(&MapProblem::from_map(&e), cfg, &[], stop)?;
        lower = (w.ratio - 1.0).max(0.0);
    }
    Ok(DefectReport {
        upper,
        lower,
        worst_t,
        grid: pts,
    })
}

pub fn verify_selfadjoint(t: &SpaceMap, tol: f64, cfg: &Config) -> Result<(Decision, DefectReport)> {
    let rep = hermitian_defect(t, cfg)?;
    Ok((rep.decide(tol), rep))
}

#[derive(Clone, Debug)]
pub struct AdjointableReport {
    pub decision: Decision,
    /// Distance of `T` from the span of the presentation, in coordinates.
    pub residual: f64,
    pub real_part: Option<SpaceMap>,
    pub imag_part: Option<SpaceMap>,
    pub adjoint: Option<SpaceMap>,
    pub defects: Option<(f64, f64)>,
}

/// Adjointability relative to a discovered presentation: `T = T1 + i T2`
/// with both parts re-verified Hermitian.
pub fn verify_adjointable_in(
    t: &SpaceMap,
    pres: &StarAlgebraPresentation,
    tol: f64,
    cfg: &Config,
) -> Result<AdjointableReport> {
    let (coords, residual) = pres.project_map(t)?;
    let scale = t.matrix().frob_norm().max(1.0);
    if residual > cfg.closure_tol.max(1e-6) * scale {
        return Ok(AdjointableReport {
            decision: Decision::No,
            residual,
            real_part: None,
            imag_part: None,
            adjoint: None,
            defects: None,
        });
    }
    let star = pres.star_coords(&coords);
    let re: Vec<C64> = coords.iter().zip(&star).map(|(a, b)| (a + b) * 0.5).collect();
    let im: Vec<C64> = coords
        .iter()
        .zip(&star)
        .map(|(a, b)| (a - b) * c(0.0, -0.5))
        .collect();
    let t1 = pres.map_from_coords(&re)?;
    let t2 = pres.map_from_coords(&im)?;
    let d1 = hermitian_defect(&t1, cfg)?;
    let d2 = hermitian_defect(&t2, cfg)?;
    let decision = d1.decide(tol).and(d2.decide(tol));
    Ok(AdjointableReport {
        decision,
        residual,
        real_part: Some(t1),
        imag_part: Some(t2),
        adjoint: Some(pres.map_from_coords(&star)?),
        defects: Some((d1.upper, d2.upper)),
    })
}

pub fn verify_adjointable(t: &SpaceMap, tol: f64, cfg: &Config) -> Result<AdjointableReport> {
    let pres = discover_algebra(t.domain(), cfg)?;
    verify_adjointable_in(t, &pres, tol, cfg)
}

// ---------------------------------------------------------- algebra helpers

fn vecs_to_matrix(mats: &[CMatrix]) -> CMatrix {
    let len = mats.first().map_or(0, |m| m.data().len());
    CMatrix::from_fn(len, mats.len(), |i, j| mats[j].data()[i])
}

/// Hilbert-Schmidt orthonormal basis of a span of equal-shape matrices.
fn span_basis(mats: &[CMatrix], tol: f64) -> Vec<CMatrix> {
    if mats.is_empty() {
        return Vec::new();
    }
    let (r, cc) = mats[0].shape();
    let q = crate::linalg::orthonormalize_columns(&vecs_to_matrix(mats), tol);
    (0..q.cols())
        .map(|j| CMatrix::from_vec(r, cc, q.col(j)).expect("shape"))
        .collect()
}

/// Basis of the algebra generated by `gens` (no unit adjoined).
pub(crate) fn generated_algebra(gens: &[CMatrix], tol: f64) -> Vec<CMatrix> {
    let scale = gens.iter().map(|g| g.frob_norm()).fold(0.0, f64::max).max(1e-300);
    let normed: Vec<CMatrix> = gens.iter().map(|g| g.scale_real(1.0 / scale)).collect();
    let mut basis = span_basis(&normed, tol);
    let mut frontier = basis.clone();
    while !frontier.is_empty() {
        let mut fresh = Vec::new();
        for a in &frontier {
            for b in basis.clone().iter() {
                for prod in [a.matmul(b), b.matmul(a)] {
                    let n = prod.frob_norm();
                    if n < 1e-14 {
                        continue;
                    }
                    let mut r = prod.scale_real(1.0 / n);
                    for _ in 0..2 {
                        for bb in basis.iter() {
                            let pr = bb.inner(&r);
                            r.axpy(-pr, bb);
                        }
                    }
                    let rn = r.frob_norm();
                    if rn > tol {
                        let r = r.scale_real(1.0 / rn);
                        basis.push(r.clone());
                        fresh.push(r);
                    }
                }
            }
        }
        frontier = fresh;
    }
    basis
}

/// Elements of `span(basis)` commuting with every generator.
fn center_of(basis: &[CMatrix], gens: &[CMatrix], tol: f64) -> Vec<CMatrix> {
    if basis.is_empty() {
        return Vec::new();
    }
    let n = basis[0].rows();
    let rows = gens.len() * n * n;
    let mut sys = CMatrix::zeros(rows, basis.len());
    for (j, b) in basis.iter().enumerate() {
        for (g_i, g) in gens.iter().enumerate() {
            let cm = &b.matmul(g) - &g.matmul(b);
            for (e, v) in cm.data().iter().enumerate() {
                sys[(g_i * n * n + e, j)] = *v;
            }
        }
    }
    let ns = null_space_scaled(&sys, tol, 1.0);
    (0..ns.cols())
        .map(|k| {
            let mut m = CMatrix::zeros(n, n);
            for (j, b) in basis.iter().enumerate() {
                m.axpy(ns[(j, k)], b);
            }
            m
        })
        .collect()
}

/// Minimal central projections from a generic Hermitian central element.
fn central_projections(center: &[CMatrix], unit: &CMatrix, rng: &mut ChaCha8Rng) -> Result<Vec<CMatrix>> {
    let n = unit.rows();
    let mut h = CMatrix::zeros(n, n);
    for z in center {
        let re = z.hermitian_part();
        let im = (z - &z.adjoint()).scale(c(0.0, -0.5));
        h.axpy(c(rng.gen_range(-1.0..1.0), 0.0), &re);
        h.axpy(c(rng.gen_range(-1.0..1.0), 0.0), &im);
    }
    let h = h.hermitian_part();
    let shift = 3.0 * op_norm_unchecked(&h) + 1.0;
    let mut hs = h.clone();
    hs.axpy(c(shift, 0.0), unit);
    let hs = hs.hermitian_part();
    let eig = herm_eig(&hs)?;
    let cut = 0.5 * shift;
    let gap = 1e-6 * shift;
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut last = f64::NEG_INFINITY;
    for (i, &lam) in eig.values.iter().enumerate() {
        if lam < cut {
            continue;
        }
        if lam - last > gap || groups.is_empty() {
            groups.push(Vec::new());
        }
        groups.last_mut().expect("group").push(i);
        last = lam;
    }
    Ok(groups
        .iter()
        .map(|g| {
            CMatrix::from_fn(n, n, |a, b| {
                g.iter()
                    .map(|&k| eig.vectors[(a, k)] * eig.vectors[(b, k)].conj())
                    .sum()
            })
        })
        .collect())
}

// ---------------------------------------------------------- boundary compression

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundaryCompression {
    /// Row projection in `M_p` realizing the compressed embedding.
    pub projection: CMatrix,
    pub blocks_total: usize,
    pub blocks_dropped: Vec<usize>,
}

/// Compresses the embedding onto the central blocks of `C*(X X^*)` it needs.
/// A block is dropped when `x -> (1 - e_i) x` stays completely isometric.
pub fn boundary_compression(x: &OpSpace, cfg: &Config) -> Result<BoundaryCompression> {
    let p = x.p();
    let mut gens = Vec::new();
    for a in x.basis() {
        for b in x.basis() {
            gens.push(a.matmul(&b.adjoint()));
        }
    }
    let alg = generated_algebra(&gens, 1e-9);
    let mut gram = CMatrix::zeros(p, p);
    for b in x.basis() {
        gram = &gram + &b.matmul(&b.adjoint());
    }
    let unit = crate::linalg::range_projection(&gram.hermitian_part())?;
    let center = center_of(&alg, &gens, 1e-9);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xb0da);
    let blocks = central_projections(&center, &unit, &mut rng)?;
    let mut dropped = Vec::new();
    if blocks.len() > 1 {
        for (i, e) in blocks.iter().enumerate() {
            let f = &unit - e;
            let imgs: Vec<CMatrix> = x.basis().iter().map(|b| f.matmul(b)).collect();
            let Ok(y) = OpSpace::new(imgs, "compressed", false) else {
                continue;
            };
            let prob = MapProblem {
                domain: Arc::new(y),
                codomain: Arc::new(x.clone()),
                matrix: CMatrix::identity(x.dim()),
                codomain_kernel: Vec::new(),
            };
            let ub = cb_upper_bound(&prob, cfg)?.value;
            if ub <= 1.0 + cfg.contraction_tol {
                dropped.push(i);
            }
        }
    }
    let mut proj = unit;
    for &i in &dropped {
        proj = &proj - &blocks[i];
    }
    Ok(BoundaryCompression {
        projection: proj,
        blocks_total: blocks.len(),
        blocks_dropped: dropped,
    })
}

// ---------------------------------------------------------- presentation

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AlgebraBlock {
    /// Coordinates of the minimal central projection.
    pub projection: Vec<C64>,
    pub rank: usize,
    pub multiplicity: usize,
}

/// A verified finite-dimensional *-algebra of maps on a space, carried by a
/// Hermitian basis with a faithful matrix representation.
#[derive(Clone, Debug)]
pub struct StarAlgebraPresentation {
    space: Arc<OpSpace>,
    maps: Vec<CMatrix>,
    reps: Vec<CMatrix>,
    rep_pinv: CMatrix,
    map_pinv: CMatrix,
    structure: Vec<Vec<Vec<C64>>>,
    unit: Vec<C64>,
    center: Vec<Vec<C64>>,
    blocks: Vec<AlgebraBlock>,
    defect: f64,
    closure_residual: f64,
    boundary: Option<BoundaryCompression>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PresentationFile {
    pub schema: String,
    pub space: String,
    pub note: String,
    pub dim: usize,
    /// Coordinate matrices of the Hermitian basis, as `[re, im]` pairs.
    pub basis: Vec<Vec<Vec<[f64; 2]>>>,
    pub representation: Vec<Vec<Vec<[f64; 2]>>>,
    pub structure_constants: Vec<Vec<Vec<[f64; 2]>>>,
    /// Involution in coordinates: `(Σ c_j T_j)⋆ = Σ conj(c_j) T_j`.
    pub involution: String,
    pub unit: Vec<[f64; 2]>,
    pub center: Vec<Vec<[f64; 2]>>,
    pub blocks: Vec<AlgebraBlock>,
    pub defect: f64,
    pub closure_residual: f64,
}

fn pairs(v: &[C64]) -> Vec<[f64; 2]> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

fn matrix_pairs(m: &CMatrix) -> Vec<Vec<[f64; 2]>> {
    (0..m.rows()).map(|i| pairs(m.row(i))).collect()
}

impl StarAlgebraPresentation {
    /// Assembles and verifies a presentation from a Hermitian basis given by
    /// coordinate maps and a faithful *-representation.
    pub fn assemble(
        space: Arc<OpSpace>,
        maps: Vec<CMatrix>,
        reps: Vec<CMatrix>,
        defect: f64,
        cfg: &Config,
    ) -> Result<Self> {
        let dim = maps.len();
        if dim == 0 || reps.len() != dim {
            return Err(Error::input("presentation needs a nonempty matched basis"));
        }
        if reps.iter().any(|r| !r.is_hermitian(1e-9)) {
            return Err(Error::Rejected("representation basis is not Hermitian".into()));
        }
        let rep_pinv = pinv(&vecs_to_matrix(&reps), 1e-12);
        let map_pinv = pinv(&vecs_to_matrix(&maps), 1e-12);
        let mut structure = vec![vec![Vec::new(); dim]; dim];
        let mut closure_residual: f64 = 0.0;
        for i in 0..dim {
            for j in 0..dim {
                let prod = reps[i].matmul(&reps[j]);
                let coef = rep_pinv.matvec(prod.data());
                let mut fit = CMatrix::zeros(prod.rows(), prod.cols());
                let mut mfit = CMatrix::zeros(maps[0].rows(), maps[0].cols());
                for (k, cf) in coef.iter().enumerate() {
                    fit.axpy(*cf, &reps[k]);
                    mfit.axpy(*cf, &maps[k]);
                }
                let mprod = maps[i].matmul(&maps[j]);
                closure_residual = closure_residual
                    .max(fit.dist(&prod))
                    .max(mfit.dist(&mprod));
                structure[i][j] = coef;
            }
        }
        if closure_residual > cfg.closure_tol.max(1e-9) * 10.0 {
            return Err(Error::Rejected(format!(
                "products escape the span (residual {closure_residual:.3e})"
            )));
        }
        let m = reps[0].rows();
        let unit = rep_pinv.matvec(CMatrix::identity(m).data());
        let mut ufit = CMatrix::zeros(maps[0].rows(), maps[0].cols());
        for (k, u) in unit.iter().enumerate() {
            ufit.axpy(*u, &maps[k]);
        }
        let d = space.dim();
        if ufit.dist(&CMatrix::identity(d)) > 1e-7 {
            return Err(Error::Rejected("identity map is not represented by the unit".into()));
        }
        let center_mats = center_of(&reps, &reps, 1e-9);
        let center: Vec<Vec<C64>> = center_mats
            .iter()
            .map(|z| rep_pinv.matvec(z.data()))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xce17);
        let projs = central_projections(&center_mats, &CMatrix::identity(m), &mut rng)?;
        let mut blocks = Vec::new();
        for e in &projs {
            let comp: Vec<CMatrix> = reps.iter().map(|r| e.matmul(r)).collect();
            let bdim = span_basis(&comp, 1e-8).len();
            let rank = (bdim as f64).sqrt().round() as usize;
            if rank * rank != bdim || rank == 0 {
                return Err(Error::Rejected(format!(
                    "central block of dimension {bdim} is not a full matrix algebra"
                )));
            }
            let tr = e.trace().re.round() as usize;
            blocks.push(AlgebraBlock {
                projection: rep_pinv.matvec(e.data()),
                rank,
                multiplicity: tr / rank,
            });
        }
        Ok(Self {
            space,
            maps,
            reps,
            rep_pinv,
            map_pinv,
            structure,
            unit,
            center,
            blocks,
            defect,
            closure_residual,
            boundary: None,
        })
    }

    pub fn space(&self) -> &Arc<OpSpace> {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.maps.len()
    }

    pub fn rep_dim(&self) -> usize {
        self.reps[0].rows()
    }

    pub fn blocks(&self) -> &[AlgebraBlock] {
        &self.blocks
    }

    pub fn block_ranks(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.rank).collect()
    }

    pub fn center(&self) -> &[Vec<C64>] {
        &self.center
    }

    pub fn unit(&self) -> &[C64] {
        &self.unit
    }

    pub fn defect(&self) -> f64 {
        self.defect
    }

    pub fn closure_residual(&self) -> f64 {
        self.closure_residual
    }

    pub fn structure_constants(&self) -> &[Vec<Vec<C64>>] {
        &self.structure
    }

    pub fn boundary(&self) -> Option<&BoundaryCompression> {
        self.boundary.as_ref()
    }

    pub fn basis_maps(&self) -> Result<Vec<SpaceMap>> {
        self.maps
            .iter()
            .map(|m| SpaceMap::endo(self.space.clone(), m.clone()))
            .collect()
    }

    pub fn basis_reps(&self) -> &[CMatrix] {
        &self.reps
    }

    /// Least-squares coordinates of a map and the residual of the fit.
    pub fn project_map(&self, t: &SpaceMap) -> Result<(Vec<C64>, f64)> {
        if t.domain().as_ref() != self.space.as_ref() || !t.is_endo() {
            return Err(Error::input("map does not act on the presented space"));
        }
        let coords = self.map_pinv.matvec(t.matrix().data());
        let fit = self.map_matrix(&coords);
        Ok((coords, fit.dist(t.matrix())))
    }

    pub fn coords_of_map(&self, t: &SpaceMap) -> Result<Vec<C64>> {
        let (coords, res) = self.project_map(t)?;
        if res > 1e-6 * t.matrix().frob_norm().max(1.0) {
            return Err(Error::input(format!(
                "map is not in the presentation (residual {res:.3e})"
            )));
        }
        Ok(coords)
    }

    pub fn coords_of_rep(&self, r: &CMatrix) -> Result<Vec<C64>> {
        let coords = self.rep_pinv.matvec(r.data());
        let res = self.rep_matrix(&coords).dist(r);
        if res > 1e-6 * r.frob_norm().max(1.0) {
            return Err(Error::input(format!(
                "matrix is not in the represented algebra (residual {res:.3e})"
            )));
        }
        Ok(coords)
    }

    pub fn map_matrix(&self, coords: &[C64]) -> CMatrix {
        let mut m = CMatrix::zeros(self.maps[0].rows(), self.maps[0].cols());
        for (k, cf) in coords.iter().enumerate() {
            m.axpy(*cf, &self.maps[k]);
        }
        m
    }

    pub fn rep_matrix(&self, coords: &[C64]) -> CMatrix {
        let n = self.rep_dim();
        let mut m = CMatrix::zeros(n, n);
        for (k, cf) in coords.iter().enumerate() {
            m.axpy(*cf, &self.reps[k]);
        }
        m
    }

    pub fn map_from_coords(&self, coords: &[C64]) -> Result<SpaceMap> {
        SpaceMap::endo(self.space.clone(), self.map_matrix(coords))
    }

    pub fn rep_of(&self, t: &SpaceMap) -> Result<CMatrix> {
        Ok(self.rep_matrix(&self.coords_of_map(t)?))
    }

    pub fn map_of_rep(&self, r: &CMatrix) -> Result<SpaceMap> {
        self.map_from_coords(&self.coords_of_rep(r)?)
    }

    /// Involution on coordinates of the Hermitian basis.
    pub fn star_coords(&self, coords: &[C64]) -> Vec<C64> {
        coords.iter().map(|z| z.conj()).collect()
    }

    pub fn star(&self, t: &SpaceMap) -> Result<SpaceMap> {
        let coords = self.coords_of_map(t)?;
        self.map_from_coords(&self.star_coords(&coords))
    }

    pub fn product_coords(&self, a: &[C64], b: &[C64]) -> Vec<C64> {
        let mut out = vec![ZERO; self.dim()];
        for (i, ai) in a.iter().enumerate() {
            if *ai == ZERO {
                continue;
            }
            for (j, bj) in b.iter().enumerate() {
                if *bj == ZERO {
                    continue;
                }
                for (k, s) in self.structure[i][j].iter().enumerate() {
                    out[k] += ai * bj * s;
                }
            }
        }
        out
    }

    /// Block projections in the representation.
    pub fn block_projection_reps(&self) -> Vec<CMatrix> {
        self.blocks.iter().map(|b| self.rep_matrix(&b.projection)).collect()
    }

    /// Maximum associativity residual over basis triples, in coordinates.
    pub fn associativity_residual(&self) -> f64 {
        let d = self.dim();
        let unitv = |i: usize| {
            let mut v = vec![ZERO; d];
            v[i] = ONE;
            v
        };
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                let ij = self.product_coords(&unitv(i), &unitv(j));
                for k in 0..d {
                    let l = self.product_coords(&ij, &unitv(k));
                    let jk = self.product_coords(&unitv(j), &unitv(k));
                    let r = self.product_coords(&unitv(i), &jk);
                    let diff = l
                        .iter()
                        .zip(&r)
                        .map(|(a, b)| (a - b).norm_sqr())
                        .sum::<f64>()
                        .sqrt();
                    worst = worst.max(diff);
                }
            }
        }
        worst
    }

    pub fn random_coords(&self, rng: &mut impl Rng) -> Vec<C64> {
        (0..self.dim())
            .map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect()
    }

    pub fn to_file(&self) -> PresentationFile {
        PresentationFile {
            schema: "presentation/v1".into(),
            space: self.space.label().to_string(),
            note: "verified subalgebra of Al(X)".into(),
            dim: self.dim(),
            basis: self.maps.iter().map(matrix_pairs).collect(),
            representation: self.reps.iter().map(matrix_pairs).collect(),
            structure_constants: self
                .structure
                .iter()
                .map(|row| row.iter().map(|v| pairs(v)).collect())
                .collect(),
            involution: "conjugate-coordinates".into(),
            unit: pairs(&self.unit),
            center: self.center.iter().map(|v| pairs(v)).collect(),
            blocks: self.blocks.clone(),
            defect: self.defect,
            closure_residual: self.closure_residual,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("presentation serializes")
    }
}

/// Real Gram-Schmidt of Hermitian pairs `(lift, rep)` under `Re tr(rep_a rep_b)`.
fn hermitian_basis(pairs_in: Vec<(CMatrix, CMatrix)>, tol: f64) -> Vec<(CMatrix, CMatrix)> {
    let mut out: Vec<(CMatrix, CMatrix)> = Vec::new();
    for (mut a, mut r) in pairs_in {
        let n0 = r.frob_norm();
        if n0 < 1e-14 {
            continue;
        }
        for _ in 0..2 {
            for (ba, br) in &out {
                let pr = br.inner(&r).re;
                a.axpy(c(-pr, 0.0), ba);
                r.axpy(c(-pr, 0.0), br);
            }
        }
        let n1 = r.frob_norm();
        if n1 > tol * n0 {
            out.push((a.scale_real(1.0 / n1), r.scale_real(1.0 / n1)));
        }
    }
    out
}

/// Discovers the adjointable multiplier algebra of `x` and verifies it.
pub fn discover_algebra(x: &Arc<OpSpace>, cfg: &Config) -> Result<StarAlgebraPresentation> {
    if x.dim() > cfg.max_discover_dim {
        return Err(Error::input(format!(
            "space dimension {} exceeds max_discover_dim {}",
            x.dim(),
            cfg.max_discover_dim
        )));
    }
    let boundary = boundary_compression(x, cfg)?;
    let e = &boundary.projection;
    let (p, q, d) = (x.p(), x.q(), x.dim());
    let comp: Vec<CMatrix> = x.basis().iter().map(|b| e.matmul(b)).collect();
    let xc = OpSpace::new(comp.clone(), "boundary", false)?;
    // projector onto the complement of span(comp) in C^{pq}
    let qb = column_space(&vecs_to_matrix(&comp), 1e-12);
    let proj_out = &CMatrix::identity(p * q) - &qb.matmul(&qb.adjoint());
    let proj_out_conj = proj_out.conj();
    let mut rows: Vec<Vec<C64>> = Vec::new();
    for ck in &comp {
        // vec(A c_k)[(i,j)] = sum_l A[i,l] c_k[l,j]
        let mk = CMatrix::from_fn(p * q, p * p, |ij, il| {
            let (i, j) = (ij / q, ij % q);
            let (i2, l) = (il / p, il % p);
            if i == i2 {
                ck[(l, j)]
            } else {
                ZERO
            }
        });
        // conj(vec(A^* c_k))[(i,j)] = sum_l A[l,i] conj(c_k[l,j])
        let nk = CMatrix::from_fn(p * q, p * p, |ij, li| {
            let (i, j) = (ij / q, ij % q);
            let (l, i2) = (li / p, li % p);
            if i == i2 {
                ck[(l, j)].conj()
            } else {
                ZERO
            }
        });
        for m in [proj_out.matmul(&mk), proj_out_conj.matmul(&nk)] {
            for r in 0..m.rows() {
                rows.push(m.row(r).to_vec());
            }
        }
    }
    let sys = CMatrix::from_rows(&rows);
    let ns = null_space_scaled(&sys, 1e-9, 1.0);
    let v = column_space(&CMatrix::hstack(&comp.iter().collect::<Vec<_>>()), 1e-10);
    let rho = |a: &CMatrix| v.adjoint().matmul(&a.matmul(&v)).hermitian_part();
    let mut cands = Vec::new();
    for k in 0..ns.cols() {
        let a = CMatrix::from_vec(p, p, ns.col(k))?;
        let h1 = a.hermitian_part();
        let h2 = (&a - &a.adjoint()).scale(c(0.0, -0.5));
        for h in [h1, h2] {
            let r = rho(&h);
            cands.push((h, r));
        }
    }
    let herm = hermitian_basis(cands, 1e-8);
    let mut maps = Vec::with_capacity(herm.len());
    let mut reps = Vec::with_capacity(herm.len());
    for (a, r) in herm {
        let mut t = CMatrix::zeros(d, d);
        for (k, ck) in comp.iter().enumerate() {
            let img = a.matmul(ck);
            let (coords, resid) = xc.project_coords(&img);
            if resid > 1e-7 {
                return Err(Error::Rejected(format!(
                    "spatial multiplier leaves the space (residual {resid:.3e})"
                )));
            }
            for (i, z) in coords.into_iter().enumerate() {
                t[(i, k)] = z;
            }
        }
        maps.push(t);
        reps.push(r);
    }
    let defects = par::map_slice(&maps, cfg.parallel, |m| -> Result<f64> {
        let t = SpaceMap::endo(x.clone(), m.clone())?;
        Ok(hermitian_defect(&t, cfg)?.upper)
    });
    let mut defect: f64 = 0.0;
    for dv in defects {
        defect = defect.max(dv?);
    }
    if defect > cfg.confirm_tol.max(cfg.detect_tol) {
        return Err(Error::Rejected(format!(
            "basis element fails Hermitian confirmation (defect {defect:.3e})"
        )));
    }
    let mut pres = StarAlgebraPresentation::assemble(x.clone(), maps, reps, defect, cfg)?;
    let rank_sum: usize = pres.blocks.iter().map(|b| b.rank).sum();
    if rank_sum > d {
        return Err(Error::Rejected(format!(
            "block rank sum {rank_sum} exceeds dim {d}"
        )));
    }
    pres.boundary = Some(boundary);
    Ok(pres)
}

// ---------------------------------------------------------- centralizer

#[derive(Clone, Debug)]
pub struct CentralizerReport {
    pub decision: Decision,
    pub basis: Vec<SpaceMap>,
    pub principal_cosines: Vec<f64>,
    pub commutative: bool,
}

impl CentralizerReport {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }
}

/// `Z(X) = Al(X) ∩ Ar(X)`, with `Ar(X)` taken as `Al(X^op)` in the same coordinates.
pub fn centralizer(x: &Arc<OpSpace>, cfg: &Config) -> Result<CentralizerReport> {
    let left = discover_algebra(x, cfg)?;
    let right = discover_algebra(&Arc::new(x.opposite()), cfg)?;
    centralizer_of(x, &left, &right)
}

pub fn centralizer_of(
    x: &Arc<OpSpace>,
    left: &StarAlgebraPresentation,
    right: &StarAlgebraPresentation,
) -> Result<CentralizerReport> {
    let qa = column_space(&vecs_to_matrix(&left.maps), 1e-12);
    let qb = column_space(&vecs_to_matrix(&right.maps), 1e-12);
    let cross = qa.adjoint().matmul(&qb);
    let dec = crate::linalg::svd(&cross);
    let cosines = dec.s.clone();
    let mut basis = Vec::new();
    let mut ambiguous = false;
    let d = x.dim();
    for (k, &s) in dec.s.iter().enumerate() {
        if s > 1.0 - 1e-7 {
            let v = qa.matvec(&dec.u.col(k));
            basis.push(SpaceMap::endo(x.clone(), CMatrix::from_vec(d, d, v)?)?);
        } else if s > 1.0 - 1e-4 {
            ambiguous = true;
        }
    }
    let mut commutative = true;
    for a in &basis {
        for b in &basis {
            let cm = &a.matrix().matmul(b.matrix()) - &b.matrix().matmul(a.matrix());
            if cm.max_abs() > 1e-7 {
                commutative = false;
            }
        }
    }
    Ok(CentralizerReport {
        decision: if ambiguous { Decision::Inconclusive } else { Decision::Yes },
        basis,
        principal_cosines: cosines,
        commutative,
    })
}

// ---------------------------------------------------------- M-projection tests

#[derive(Clone, Debug)]
pub struct CompleteMReport {
    pub complete: Decision,
    pub left: Decision,
    pub right: Decision,
    pub witness: Option<Witness>,
}

fn nu_isometry(p: &SpaceMap, cfg: &Config, hints: &[Element]) -> Result<normcore::IsometryCertificate> {
    let nu = normcore::nu_c(p)?;
    certify_complete_isometry(&nu, cfg, cfg.contraction_tol, hints)
}

/// Complete M-projection test: `x -> (P x) ⊕ ((Id - P) x)` completely
/// isometric into `X ⊕_∞ X`, checked against the left and right verdicts.
pub fn complete_m_projection_test(p: &SpaceMap, cfg: &Config) -> Result<CompleteMReport> {
    if !p.is_endo() {
        return Err(Error::input("projection must be an endomorphism"));
    }
    if p.idempotent_defect() > cfg.idempotent_tol.max(1e-8) {
        return Err(Error::input("map is not idempotent"));
    }
    let x = p.domain();
    let d = x.dim();
    let sum = Arc::new(x.direct_sum(x));
    let comp = &CMatrix::identity(d) - p.matrix();
    let split = SpaceMap::new(x.clone(), sum, CMatrix::vstack(&[p.matrix(), &comp]))?;
    let lemma = certify_complete_isometry(&split, cfg, cfg.contraction_tol, &[])?;
    let complete = Decision::from_verdict(lemma.verdict);
    let left = Decision::from_verdict(nu_isometry(p, cfg, &[])?.verdict);
    let right = Decision::from_verdict(nu_isometry(&p.opposite(), cfg, &[])?.verdict);
    let both = left.and(right);
    if complete != Decision::Inconclusive && both != Decision::Inconclusive && complete != both {
        return Err(Error::Inconsistent(format!(
            "complete-M test {complete:?} disagrees with left {left:?} and right {right:?}"
        )));
    }
    Ok(CompleteMReport {
        complete,
        left,
        right,
        witness: lemma.defect_witness.or(lemma.forward.witness.filter(|w| w.ratio > 1.0 + cfg.contraction_tol)),
    })
}

/// `T(J) ⊂ J` in coordinates.
pub fn multiplier_invariance_check(t: &SpaceMap, j_spans: &[Vec<C64>], tol: f64) -> Result<bool> {
    if !t.is_endo() {
        return Err(Error::input("invariance check needs an endomorphism"));
    }
    let d = t.domain().dim();
    let basis: Vec<CMatrix> = j_spans.iter().map(|v| CMatrix::column(v)).collect();
    if basis.iter().any(|b| b.rows() != d) {
        return Err(Error::input("subspace coordinates have wrong length"));
    }
    let q = column_space(&CMatrix::hstack(&basis.iter().collect::<Vec<_>>()), 1e-10);
    for v in j_spans {
        let img = t.matrix().matvec(v);
        let pr = q.matvec(&q.adjoint().matvec(&img));
        let res = img
            .iter()
            .zip(&pr)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        let scale = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt().max(1.0);
        if res > tol * scale {
            return Ok(false);
        }
    }
    Ok(true)
}

/// `T(1)` Hermitian in a unital algebra space: `||exp(i t T(1))|| <= 1` on the grid.
pub fn hermitian_image_check(x: &OpSpace, unit: &[C64], t: &SpaceMap, cfg: &Config) -> Result<(Decision, f64)> {
    if x.p() != x.q() {
        return Err(Error::input("hermitian image check needs a square ambient"));
    }
    let one = x.realize1(unit);
    if one.dist(&CMatrix::identity(x.p())) > 1e-9 {
        return Err(Error::input("designated unit does not realize the identity"));
    }
    let h = x.realize1(&t.matrix().matvec(unit));
    let mut worst: f64 = 0.0;
    for time in cfg.defect_grid() {
        let e = expm(&h.scale(I * time))?;
        worst = worst.max(op_norm_unchecked(&e) - 1.0);
    }
    let worst = worst.max(0.0);
    Ok((
        if worst <= cfg.confirm_tol { Decision::Yes } else { Decision::No },
        worst,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opspace::StandardKind;

    fn std(kind: StandardKind) -> Arc<OpSpace> {
        Arc::new(OpSpace::standard(kind).unwrap())
    }

    #[test]
    fn multiplier_norm_of_left_mult() {
        let cfg = Config::quick();
        let t = SpaceMap::left_mult(std(StandardKind::Full(2, 2)), &CMatrix::diag_real(&[1.0, 2.0])).unwrap();
        let m = multiplier_norm(&t, &cfg).unwrap();
        assert!((m.upper - 2.0).abs() < 1e-5 && (m.lower - 2.0).abs() < 1e-4, "{m:?}");
        let id = SpaceMap::identity(std(StandardKind::Column(2)));
        let m = multiplier_norm(&id, &cfg).unwrap();
        assert!((m.upper - 1.0).abs() < 1e-5, "{m:?}");
    }

    #[test]
    fn row_space_has_scalar_multipliers_only() {
        let cfg = Config::quick();
        let r2 = std(StandardKind::Row(2));
        let t = SpaceMap::endo(r2, CMatrix::diag_real(&[1.0, 0.0])).unwrap();
        let m = multiplier_norm(&t, &cfg).unwrap();
        assert_eq!(m.is_multiplier, Decision::No, "{m:?}");
    }

    #[test]
    fn defects() {
        let cfg = Config::quick();
        let c2 = std(StandardKind::Column(2));
        let p = SpaceMap::endo(c2.clone(), CMatrix::diag_real(&[1.0, 0.0])).unwrap();
        assert!(hermitian_defect(&p, &cfg).unwrap().upper <= 1e-7);
        let l2 = std(StandardKind::Diag(2));
        let swap = SpaceMap::endo(l2, CMatrix::from_real(&[&[0.0, 1.0], &[1.0, 0.0]])).unwrap();
        let rep = hermitian_defect(&swap, &cfg).unwrap();
        assert!(rep.upper > 0.1 && rep.lower > 0.1, "{rep:?}");
        let iid = SpaceMap::identity(c2).scale(I);
        assert!(hermitian_defect(&iid, &cfg).unwrap().upper > 0.0);
    }

    #[test]
    fn discovered_dimensions() {
        let cfg = Config::quick();
        for (kind, dim, ranks) in [
            (StandardKind::Column(3), 9, vec![3]),
            (StandardKind::Row(3), 1, vec![1]),
            (StandardKind::Diag(3), 3, vec![1, 1, 1]),
            (StandardKind::Full(2, 2), 4, vec![2]),
            (StandardKind::UpperTriangular2, 2, vec![1, 1]),
        ] {
            let pres = discover_algebra(&std(kind), &cfg).unwrap();
            assert_eq!(pres.dim(), dim, "{kind:?}");
            let mut r = pres.block_ranks();
            r.sort();
            assert_eq!(r, ranks, "{kind:?}");
            assert!(pres.defect() <= 1e-6);
            assert!(pres.associativity_residual() <= 1e-7);
        }
    }

    #[test]
    fn adjointable_split() {
        let cfg = Config::quick();
        let m2 = std(StandardKind::Full(2, 2));
        let pres = discover_algebra(&m2, &cfg).unwrap();
        let t = SpaceMap::left_mult(m2.clone(), &CMatrix::from_real(&[&[0.0, 1.0], &[0.0, 0.0]])).unwrap();
        let rep = verify_adjointable_in(&t, &pres, 1e-6, &cfg).unwrap();
        assert_eq!(rep.decision, Decision::Yes);
        let expect = SpaceMap::left_mult(m2, &CMatrix::from_real(&[&[0.0, 0.0], &[1.0, 0.0]])).unwrap();
        assert!(rep.adjoint.unwrap().matrix().dist(expect.matrix()) < 1e-8);
        let l2 = std(StandardKind::Diag(2));
        let pl = discover_algebra(&l2, &cfg).unwrap();
        let swap = SpaceMap::endo(l2, CMatrix::from_real(&[&[0.0, 1.0], &[1.0, 0.0]])).unwrap();
        assert_eq!(verify_adjointable_in(&swap, &pl, 1e-6, &cfg).unwrap().decision, Decision::No);
    }

    #[test]
    fn centralizers() {
        let cfg = Config::quick();
        assert_eq!(centralizer(&std(StandardKind::Diag(2)), &cfg).unwrap().dim(), 2);
        assert_eq!(centralizer(&std(StandardKind::Column(2)), &cfg).unwrap().dim(), 1);
        let z = centralizer(&std(StandardKind::Full(2, 2)), &cfg).unwrap();
        assert_eq!(z.dim(), 1);
        assert!(z.commutative);
    }

    #[test]
    fn complete_m_projections() {
        let cfg = Config::quick();
        let l2 = std(StandardKind::Diag(2));
        let p = SpaceMap::endo(l2, CMatrix::diag_real(&[1.0, 0.0])).unwrap();
        assert_eq!(complete_m_projection_test(&p, &cfg).unwrap().complete, Decision::Yes);
        let c2 = std(StandardKind::Column(2));
        let p = SpaceMap::endo(c2.clone(), CMatrix::diag_real(&[1.0, 0.0])).unwrap();
        let r = complete_m_projection_test(&p, &cfg).unwrap();
        assert_eq!((r.left, r.right, r.complete), (Decision::Yes, Decision::No, Decision::No));
        let id = SpaceMap::identity(c2);
        assert_eq!(complete_m_projection_test(&id, &cfg).unwrap().complete, Decision::Yes);
    }

    #[test]
    fn invariance_and_hermitian_image() {
        let cfg = Config::quick();
        let t2 = std(StandardKind::UpperTriangular2);
        let e = CMatrix::diag_real(&[1.0, 0.0]);
        let t = SpaceMap::left_mult(t2.clone(), &e).unwrap();
        let spans: Vec<Vec<C64>> = t2
            .basis()
            .iter()
            .map(|b| t2.coords_of(&e.matmul(b)).unwrap())
            .filter(|v| v.iter().any(|z| z.norm() > 0.0))
            .collect();
        assert!(multiplier_invariance_check(&t, &spans, 1e-9).unwrap());
        let unit = t2.coords_of(&CMatrix::identity(2)).unwrap();
        assert_eq!(hermitian_image_check(&t2, &unit, &t, &cfg).unwrap().0, Decision::Yes);
    }
}
