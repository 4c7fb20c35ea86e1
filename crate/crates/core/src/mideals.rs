//! One-sided M-projections, the projection lattice of the adjointable
//! multiplier algebra, partial isometries, and polar decomposition.
//!
//! Classification runs three independent norm criteria for a left
//! M-projection and demands that they agree. Lattice and polar computations
//! happen inside a verified [`StarAlgebraPresentation`] using its faithful
//! matrix representation; every result is mapped back to the space and
//! checked there by exact rank statements.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::linalg::{c, column_space, herm_eig, op_norm_unchecked, rank, spectral_fn, sqrt_psd, svd, CMatrix, C64, ZERO};
use crate::multipliers::{discover_algebra, Decision, StarAlgebraPresentation};
use crate::normcore::{
    self, certify_complete_contraction, certify_complete_isometry, dual_ratio_probe, lift_to_column2,
    CbNormCertificate, IsometryCertificate, MapProblem, Witness,
};
use crate::opspace::{Element, OpSpace, SpaceMap};
use crate::par;

// ------------------------------------------------------------ records

/// Outcome of one criterion, with its two-sided bound.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CriterionResult {
    pub name: String,
    pub decision: Decision,
    pub lower: f64,
    pub upper: f64,
    pub witness: Option<Witness>,
}

impl CriterionResult {
    fn contraction(name: &str, cert: &CbNormCertificate) -> Self {
        Self {
            name: name.into(),
            decision: Decision::from_verdict(cert.verdict),
            lower: cert.lower,
            upper: cert.upper_value(),
            witness: cert.witness.clone(),
        }
    }

    fn isometry(name: &str, cert: &IsometryCertificate) -> Self {
        let inv_lower = cert.inverse.as_ref().map_or(f64::INFINITY, |c| c.lower);
        Self {
            name: name.into(),
            decision: Decision::from_verdict(cert.verdict),
            lower: cert.forward.lower.max(inv_lower),
            upper: cert.forward.upper_value().max(cert.inverse_upper()),
            witness: cert
                .defect_witness
                .clone()
                .or_else(|| cert.forward.witness.clone().filter(|w| w.ratio > 1.0)),
        }
    }
}

/// A supplied test element and the norms of the element and its `ν` image.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HintEvaluation {
    pub element: Element,
    pub norm: f64,
    pub image_norm: f64,
}

/// A classified idempotent.
#[derive(Clone, Debug)]
pub struct ProjectionRecord {
    pub projection: SpaceMap,
    pub complement: SpaceMap,
    pub range_basis: Vec<Vec<C64>>,
    pub left_m: Decision,
    pub right_m: Decision,
    pub complete_m: Decision,
    pub right_l: Option<Decision>,
    pub criteria: Vec<CriterionResult>,
    pub hints: Vec<HintEvaluation>,
    pub note: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordFile {
    pub schema: String,
    pub space: String,
    pub matrix: Vec<Vec<C64>>,
    pub range_basis: Vec<Vec<C64>>,
    pub left_m: Decision,
    pub right_m: Decision,
    pub complete_m: Decision,
    pub right_l: Option<Decision>,
    pub criteria: Vec<CriterionResult>,
    pub hints: Vec<HintEvaluation>,
    pub note: String,
}

impl ProjectionRecord {
    pub fn to_file(&self) -> RecordFile {
        let m = self.projection.matrix();
        RecordFile {
            schema: "record/v1".into(),
            space: self.projection.domain().label().to_string(),
            matrix: (0..m.rows()).map(|i| m.row(i).to_vec()).collect(),
            range_basis: self.range_basis.clone(),
            left_m: self.left_m,
            right_m: self.right_m,
            complete_m: self.complete_m,
            right_l: self.right_l,
            criteria: self.criteria.clone(),
            hints: self.hints.clone(),
            note: self.note.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("record serializes")
    }

    pub fn criterion(&self, name: &str) -> Option<&CriterionResult> {
        self.criteria.iter().find(|c| c.name == name)
    }
}

fn check_idempotent(p: &SpaceMap, cfg: &Config) -> Result<()> {
    if !p.is_endo() {
        return Err(Error::input("projection must be an endomorphism"));
    }
    let def = p.idempotent_defect();
    if def > cfg.idempotent_tol.max(1e-8) {
        return Err(Error::input(format!("map is not idempotent (defect {def:.3e})")));
    }
    Ok(())
}

fn range_spans(m: &CMatrix, tol: f64) -> Vec<Vec<C64>> {
    let q = column_space(m, tol);
    (0..q.cols()).map(|j| q.col(j)).collect()
}

/// Unanimous verdict of independent criteria; conclusive disagreement is an error.
fn unanimous(results: &[&CriterionResult]) -> Result<(Decision, String)> {
    let yes = results.iter().any(|r| r.decision == Decision::Yes);
    let no = results.iter().any(|r| r.decision == Decision::No);
    if yes && no {
        let summary: Vec<String> = results
            .iter()
            .map(|r| format!("{} {:?} [{:.6}, {:.6}]", r.name, r.decision, r.lower, r.upper))
            .collect();
        return Err(Error::Inconsistent(format!(
            "left M-projection criteria disagree: {}",
            summary.join("; ")
        )));
    }
    let open: Vec<&str> = results
        .iter()
        .filter(|r| r.decision == Decision::Inconclusive)
        .map(|r| r.name.as_str())
        .collect();
    if !open.is_empty() {
        return Ok((Decision::Inconclusive, format!("inconclusive: {}", open.join(", "))));
    }
    Ok((if yes { Decision::Yes } else { Decision::No }, String::new()))
}

/// The three left M-projection criteria on `p`.
fn left_criteria(p: &SpaceMap, cfg: &Config, hints: &[Element]) -> Result<Vec<CriterionResult>> {
    let d = p.domain().dim();
    let lifted: Vec<Element> = hints.iter().map(|h| lift_to_column2(h, d, 0)).collect();
    let jobs: [usize; 3] = [0, 1, 2];
    let out = par::map_slice(&jobs, cfg.parallel, |&job| -> Result<Vec<CriterionResult>> {
        match job {
            0 => {
                let tau = normcore::tau_c(p)?;
                let cert = certify_complete_contraction(&MapProblem::from_map(&tau), cfg, cfg.contraction_tol, &lifted)?;
                Ok(vec![CriterionResult::contraction("tau_contractive", &cert)])
            }
            1 => {
                let nu = normcore::nu_c(p)?;
                let cert = certify_complete_isometry(&nu, cfg, cfg.contraction_tol, hints)?;
                let fwd = CriterionResult::contraction("nu_contractive", &cert.forward);
                Ok(vec![CriterionResult::isometry("nu_isometric", &cert), fwd])
            }
            _ => {
                let mu = normcore::mu_c(p)?;
                let cert = certify_complete_contraction(&MapProblem::from_map(&mu), cfg, cfg.contraction_tol, &lifted)?;
                Ok(vec![CriterionResult::contraction("mu_contractive", &cert)])
            }
        }
    });
    let mut all = Vec::new();
    for r in out {
        all.extend(r?);
    }
    Ok(all)
}

fn combine_v(nu: &CriterionResult, mu: &CriterionResult) -> CriterionResult {
    CriterionResult {
        name: "nu_mu_contractive".into(),
        decision: nu.decision.and(mu.decision),
        lower: nu.lower.max(mu.lower),
        upper: nu.upper.max(mu.upper),
        witness: if nu.lower >= mu.lower { nu.witness.clone() } else { mu.witness.clone() },
    }
}

/// Classifies an idempotent: left (three criteria, unanimous), right (on the
/// opposite space) and complete (split into `X ⊕ X`) M-projection verdicts.
pub fn classify_projection(p: &SpaceMap, cfg: &Config, hints: &[Element]) -> Result<ProjectionRecord> {
    check_idempotent(p, cfg)?;
    let x = p.domain();
    let d = x.dim();
    let mut criteria = left_criteria(p, cfg, hints)?;
    let v = combine_v(&criteria[2], &criteria[3]);
    criteria.push(v);
    let by = |n: &str| criteria.iter().find(|c| c.name == n).expect("criterion present");
    let (left_m, mut note) = unanimous(&[by("tau_contractive"), by("nu_isometric"), by("nu_mu_contractive")])?;

    let right = certify_complete_isometry(&normcore::nu_c(&p.opposite())?, cfg, cfg.contraction_tol, &[])?;
    let right_c = CriterionResult::isometry("right_nu_isometric", &right);
    let right_m = right_c.decision;

    let sum = Arc::new(x.direct_sum(x));
    let comp = &CMatrix::identity(d) - p.matrix();
    let split = SpaceMap::new(x.clone(), sum, CMatrix::vstack(&[p.matrix(), &comp]))?;
    let split_cert = certify_complete_isometry(&split, cfg, cfg.contraction_tol, hints)?;
    let split_c = CriterionResult::isometry("split_isometric", &split_cert);
    let complete_m = split_c.decision;
    let both = left_m.and(right_m);
    if complete_m != Decision::Inconclusive && both != Decision::Inconclusive && complete_m != both {
        return Err(Error::Inconsistent(format!(
            "complete M-test {complete_m:?} disagrees with left {left_m:?} and right {right_m:?}"
        )));
    }
    criteria.push(right_c);
    criteria.push(split_c);

    let nu = normcore::nu_c(p)?;
    let c2 = nu.codomain().clone();
    let hint_evals = hints
        .iter()
        .map(|h| HintEvaluation {
            element: h.clone(),
            norm: x.norm(h.n, &h.coords),
            image_norm: c2.norm(h.n, &nu.apply_coords(h.n, &h.coords)),
        })
        .collect();
    if note.is_empty() && left_m == Decision::No {
        note = "not a left M-projection".into();
    }
    Ok(ProjectionRecord {
        projection: p.clone(),
        complement: p.with_matrix(comp)?,
        range_basis: range_spans(p.matrix(), 1e-9),
        left_m,
        right_m,
        complete_m,
        right_l: None,
        criteria,
        hints: hint_evals,
        note,
    })
}

/// Left M-projection test for the map induced by `p` on `X / L`, where
/// `p(L) ⊂ L`. Criteria (ii) and (v) are evaluated on the lifted maps
/// `C_2(X) -> C_2(X) / C_2(L)` and so on, which have the same cb-norms as
/// the induced maps; (v) forces `ν` to be a complete isometry since `μ ν = Id`.
#[derive(Clone, Debug)]
pub struct QuotientRecord {
    pub left_m: Decision,
    pub criteria: Vec<CriterionResult>,
    pub note: String,
}

pub fn classify_quotient_projection(p: &SpaceMap, kernel: &[Vec<C64>], cfg: &Config) -> Result<QuotientRecord> {
    check_idempotent(p, cfg)?;
    let d = p.domain().dim();
    if kernel.iter().any(|k| k.len() != d) {
        return Err(Error::input("kernel coordinates have wrong length"));
    }
    if !crate::multipliers::multiplier_invariance_check(p, kernel, 1e-8)? {
        return Err(Error::input("projection does not leave the kernel invariant"));
    }
    let c2_kernel: Vec<Vec<C64>> = (0..2)
        .flat_map(|slot| {
            kernel.iter().map(move |k| {
                let mut v = vec![ZERO; 2 * d];
                v[slot * d..(slot + 1) * d].copy_from_slice(k);
                v
            })
        })
        .collect();
    let tau = MapProblem::quotient(&normcore::tau_c(p)?, c2_kernel.clone());
    let nu = MapProblem::quotient(&normcore::nu_c(p)?, c2_kernel);
    let mu = MapProblem::quotient(&normcore::mu_c(p)?, kernel.to_vec());
    let probs = [("tau_contractive", tau), ("nu_contractive", nu), ("mu_contractive", mu)];
    let certs = par::map_slice(&probs, cfg.parallel, |(_, pr)| {
        certify_complete_contraction(pr, cfg, cfg.oracle_tol, &[])
    });
    let mut criteria = Vec::new();
    for ((name, _), cert) in probs.iter().zip(certs) {
        criteria.push(CriterionResult::contraction(name, &cert?));
    }
    let v = combine_v(&criteria[1], &criteria[2]);
    let (left_m, note) = unanimous(&[&criteria[0], &v])?;
    criteria.push(v);
    Ok(QuotientRecord { left_m, criteria, note })
}

// ---------------------------------------------------- right L via duality

#[derive(Clone, Debug)]
pub struct RightLReport {
    pub decision: Decision,
    /// `||ν^r_{P*}||_cb = ||μ^c_P||_cb` and `||μ^r_{P*}||_cb = ||ν^c_P||_cb`.
    pub nu_dual: CriterionResult,
    pub mu_dual: CriterionResult,
    /// Level-1 dual-oracle ratios for `ν^r_{P*}` and `μ^r_{P*}`.
    pub probe_ratios: (f64, f64),
    /// Left M verdict of `P` on `X` from the column isometry, for cross-checking.
    pub left_m: Decision,
}

/// Tests whether `P*` is a right L-projection on `X*`: `ν^r_{P*}` and its
/// left inverse `μ^r_{P*}` must both be complete contractions. They are the
/// Banach adjoints of `μ^c_P` and `ν^c_P`, whose cb-norms are computed on
/// `X`; dual-oracle probes look for a violating functional directly.
pub fn right_l_projection_test(p: &SpaceMap, cfg: &Config) -> Result<RightLReport> {
    check_idempotent(p, cfg)?;
    let nu = normcore::nu_c(p)?;
    let mu = normcore::mu_c(p)?;
    let mu_cert = certify_complete_contraction(&MapProblem::from_map(&mu), cfg, cfg.contraction_tol, &[])?;
    let nu_cert = certify_complete_contraction(&MapProblem::from_map(&nu), cfg, cfg.contraction_tol, &[])?;
    let nu_dual = CriterionResult::contraction("dual_nu_row_contractive", &mu_cert);
    let mu_dual = CriterionResult::contraction("dual_mu_row_contractive", &nu_cert);
    let (r1, _) = dual_ratio_probe(&mu, cfg, &[])?;
    let (r2, _) = dual_ratio_probe(&nu, cfg, &[])?;
    let iso = certify_complete_isometry(&nu, cfg, cfg.contraction_tol, &[])?;
    let left_m = Decision::from_verdict(iso.verdict);
    let mut decision = nu_dual.decision.and(mu_dual.decision);
    if r1.max(r2) > 1.0 + cfg.oracle_tol {
        decision = Decision::No;
    }
    if decision != Decision::Inconclusive && left_m != Decision::Inconclusive && decision != left_m {
        return Err(Error::Inconsistent(format!(
            "right L verdict {decision:?} on the dual disagrees with left M verdict {left_m:?}"
        )));
    }
    Ok(RightLReport {
        decision,
        nu_dual,
        mu_dual,
        probe_ratios: (r1, r2),
        left_m,
    })
}

// ------------------------------------------------------ presentation calculus

fn spans_equal(a: &CMatrix, b: &CMatrix, tol: f64) -> bool {
    let ra = floored_rank(a, tol);
    let rb = floored_rank(b, tol);
    ra == rb && floored_rank(&CMatrix::hstack(&[a, b]), tol) == ra
}

fn span_contains(big: &CMatrix, small: &CMatrix, tol: f64) -> bool {
    floored_rank(&CMatrix::hstack(&[big, small]), tol) == floored_rank(big, tol)
}

/// `ran(a) = ran(b)` as coordinate subspaces.
pub fn same_range(a: &SpaceMap, b: &SpaceMap, tol: f64) -> bool {
    spans_equal(a.matrix(), b.matrix(), tol)
}

/// `ker(a) = ker(b)`, via equality of row spaces.
pub fn same_kernel(a: &SpaceMap, b: &SpaceMap, tol: f64) -> bool {
    spans_equal(&a.matrix().adjoint(), &b.matrix().adjoint(), tol)
}

fn rank_tol(cfg: &Config) -> f64 {
    cfg.rank_tol.max(1e-9)
}

fn is_projection_rep(r: &CMatrix, tol: f64) -> bool {
    r.is_hermitian(tol) && r.matmul(r).dist(r) <= tol * r.frob_norm().max(1.0)
}

/// Representation of a projection of the presentation; errors if `p` is
/// outside the presentation or not a self-adjoint idempotent there.
fn projection_rep(pres: &StarAlgebraPresentation, p: &SpaceMap) -> Result<CMatrix> {
    let r = pres.rep_of(p)?;
    if !is_projection_rep(&r, 1e-7) {
        return Err(Error::input("map is not a projection of the presentation"));
    }
    Ok(r.hermitian_part())
}

/// Psd-safe range projection computed from eigenvalues above `cut * λ_max`.
fn support(a: &CMatrix, cut: f64) -> Result<CMatrix> {
    let e = herm_eig(&a.hermitian_part())?;
    let top = e.values.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    Ok(e.reconstruct(|x| if top > 0.0 && x > cut * top { c(1.0, 0.0) } else { ZERO }))
}

#[derive(Clone, Debug)]
pub struct OrderReport {
    /// `P Q = P` in the algebra.
    pub algebraic: bool,
    /// `ran(P) ⊂ ran(Q)`.
    pub spatial: bool,
}

/// `P ≤ Q`, decided both algebraically and by ranges; the two must agree.
pub fn order_test(p: &SpaceMap, q: &SpaceMap, pres: &StarAlgebraPresentation, cfg: &Config) -> Result<OrderReport> {
    let rp = projection_rep(pres, p)?;
    let rq = projection_rep(pres, q)?;
    let algebraic = rp.matmul(&rq).dist(&rp) <= 1e-7;
    let spatial = span_contains(q.matrix(), p.matrix(), rank_tol(cfg));
    if algebraic != spatial {
        return Err(Error::Inconsistent(format!(
            "order test disagrees: algebraic {algebraic}, spatial {spatial}"
        )));
    }
    Ok(OrderReport { algebraic, spatial })
}

#[derive(Clone, Debug)]
pub struct LatticeResult {
    pub projection: SpaceMap,
    /// The spatial dictionary holds: range equals the sum / intersection.
    pub spatial_ok: bool,
    pub rank: usize,
    pub expected_rank: usize,
}

/// Rank with roundoff-sized maps counted as zero.
fn floored_rank(a: &CMatrix, tol: f64) -> usize {
    if a.max_abs() < 1e-8 {
        return 0;
    }
    rank(a, tol)
}

/// `P ∨ Q`: support projection of `P + Q`, checked against `ran P + ran Q`.
pub fn lattice_join(p: &SpaceMap, q: &SpaceMap, pres: &StarAlgebraPresentation, cfg: &Config) -> Result<LatticeResult> {
    let rp = projection_rep(pres, p)?;
    let rq = projection_rep(pres, q)?;
    let j = support(&(&rp + &rq), 1e-9)?;
    let map = pres.map_of_rep(&j)?;
    let tol = rank_tol(cfg);
    let both = CMatrix::hstack(&[p.matrix(), q.matrix()]);
    let rank_j = floored_rank(map.matrix(), tol);
    let expected = floored_rank(&both, tol);
    let spatial_ok = rank_j == expected && span_contains(map.matrix(), &both, tol);
    Ok(LatticeResult {
        projection: map,
        spatial_ok,
        rank: rank_j,
        expected_rank: expected,
    })
}

/// `P ∧ Q = Id - ((Id - P) ∨ (Id - Q))`, checked against `ran P ∩ ran Q`.
pub fn lattice_meet(p: &SpaceMap, q: &SpaceMap, pres: &StarAlgebraPresentation, cfg: &Config) -> Result<LatticeResult> {
    let rp = projection_rep(pres, p)?;
    let rq = projection_rep(pres, q)?;
    let m = rp.rows();
    let id = CMatrix::identity(m);
    let comp = &(&id - &rp) + &(&id - &rq);
    let meet = &id - &support(&comp, 1e-9)?;
    let map = pres.map_of_rep(&meet)?;
    let tol = rank_tol(cfg);
    let rp_x = floored_rank(p.matrix(), tol);
    let rq_x = floored_rank(q.matrix(), tol);
    let rsum = floored_rank(&CMatrix::hstack(&[p.matrix(), q.matrix()]), tol);
    let expected = rp_x + rq_x - rsum;
    let rank_m = floored_rank(map.matrix(), tol);
    let spatial_ok = rank_m == expected
        && span_contains(p.matrix(), map.matrix(), tol)
        && span_contains(q.matrix(), map.matrix(), tol);
    Ok(LatticeResult {
        projection: map,
        spatial_ok,
        rank: rank_m,
        expected_rank: expected,
    })
}

/// Distance (operator norm in the representation) between `(P + Q)^{1/n}`
/// and `P ∨ Q`.
pub fn iterative_join_distance(
    p: &SpaceMap,
    q: &SpaceMap,
    n: u32,
    pres: &StarAlgebraPresentation,
) -> Result<f64> {
    let rp = projection_rep(pres, p)?;
    let rq = projection_rep(pres, q)?;
    let s = &rp + &rq;
    let root = spectral_fn(&s.hermitian_part(), |x| Some(x.max(0.0).powf(1.0 / f64::from(n))))?;
    let j = support(&s, 1e-9)?;
    Ok(op_norm_unchecked(&(&root - &j)))
}

#[derive(Clone, Debug)]
pub struct PartialIsometryRecord {
    pub is_partial_isometry: bool,
    /// `W⋆W` and `WW⋆`.
    pub initial: SpaceMap,
    pub fin: SpaceMap,
    pub ran_initial_eq_ran_wstar: bool,
    pub ker_initial_eq_ker_w: bool,
    pub ran_final_eq_ran_w: bool,
    pub ker_final_eq_ker_wstar: bool,
}

impl PartialIsometryRecord {
    pub fn identities_hold(&self) -> bool {
        self.ran_initial_eq_ran_wstar && self.ker_initial_eq_ker_w && self.ran_final_eq_ran_w && self.ker_final_eq_ker_wstar
    }
}

pub fn partial_isometry_check(w: &SpaceMap, pres: &StarAlgebraPresentation, cfg: &Config) -> Result<PartialIsometryRecord> {
    let rw = pres.rep_of(w)?;
    let pi = rw.adjoint().matmul(&rw);
    let pf = rw.matmul(&rw.adjoint());
    let is_pi = is_projection_rep(&pi, 1e-7) && is_projection_rep(&pf, 1e-7);
    let initial = pres.map_of_rep(&pi)?;
    let fin = pres.map_of_rep(&pf)?;
    let wstar = pres.star(w)?;
    let tol = rank_tol(cfg);
    Ok(PartialIsometryRecord {
        is_partial_isometry: is_pi,
        ran_initial_eq_ran_wstar: same_range(&initial, &wstar, tol),
        ker_initial_eq_ker_w: same_kernel(&initial, w, tol),
        ran_final_eq_ran_w: same_range(&fin, w, tol),
        ker_final_eq_ker_wstar: same_kernel(&fin, &wstar, tol),
        initial,
        fin,
    })
}

/// Polar part `U V^*` of a matrix, over singular values above `cut * σ_max`.
fn polar_part(a: &CMatrix, cut: f64) -> CMatrix {
    let d = svd(a);
    let smax = d.s.first().copied().unwrap_or(0.0);
    let (m, n) = a.shape();
    let mut w = CMatrix::zeros(m, n);
    for (t, &s) in d.s.iter().enumerate() {
        if smax > 0.0 && s > cut * smax {
            for i in 0..m {
                for j in 0..n {
                    w[(i, j)] += d.u[(i, t)] * d.v[(j, t)].conj();
                }
            }
        }
    }
    w
}

/// Ranks of a projection inside each central block, in units of the block's
/// minimal projections.
pub fn block_ranks_of(pres: &StarAlgebraPresentation, r: &CMatrix) -> Vec<usize> {
    pres.blocks()
        .iter()
        .zip(pres.block_projection_reps())
        .map(|(b, e)| {
            let tr = e.matmul(r).trace().re;
            (tr / b.multiplicity.max(1) as f64).round().max(0.0) as usize
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct MvnReport {
    pub equivalent: bool,
    pub ranks_p: Vec<usize>,
    pub ranks_q: Vec<usize>,
    /// `V` with `V⋆V = P` and `VV⋆ = Q`.
    pub partial_isometry: Option<SpaceMap>,
    pub residual: f64,
}

/// Murray-von Neumann equivalence, decided blockwise by rank; on success an
/// explicit `V` is built as the polar part of `Q a P` for generic `a`.
pub fn mvn_equivalent(p: &SpaceMap, q: &SpaceMap, pres: &StarAlgebraPresentation, cfg: &Config) -> Result<MvnReport> {
    let rp = projection_rep(pres, p)?;
    let rq = projection_rep(pres, q)?;
    let ranks_p = block_ranks_of(pres, &rp);
    let ranks_q = block_ranks_of(pres, &rq);
    if ranks_p != ranks_q {
        return Ok(MvnReport {
            equivalent: false,
            ranks_p,
            ranks_q,
            partial_isometry: None,
            residual: f64::NAN,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x3a7e);
    let mut best: Option<(f64, CMatrix)> = None;
    for _ in 0..8 {
        let a = pres.rep_matrix(&pres.random_coords(&mut rng));
        let v = polar_part(&rq.matmul(&a).matmul(&rp), 1e-8);
        let res = v.adjoint().matmul(&v).dist(&rp).max(v.matmul(&v.adjoint()).dist(&rq));
        if best.as_ref().is_none_or(|b| res < b.0) {
            best = Some((res, v));
        }
        if res < 1e-9 {
            break;
        }
    }
    let (residual, v) = best.expect("at least one attempt");
    let equivalent = residual < 1e-7;
    Ok(MvnReport {
        equivalent,
        ranks_p,
        ranks_q,
        partial_isometry: if equivalent { Some(pres.map_of_rep(&v)?) } else { None },
        residual,
    })
}

#[derive(Clone, Debug)]
pub struct PolarRecord {
    pub w: SpaceMap,
    pub abs: SpaceMap,
    /// `||T - W|T|||` on coordinate matrices.
    pub residual: f64,
    pub ker_t_eq_ker_abs: bool,
    pub ker_w_eq_ker_t: bool,
    pub ker_wstar_eq_ker_tstar: bool,
    pub ran_w_eq_ran_t: bool,
    pub ran_wstar_eq_ran_tstar: bool,
    /// `X = ran(T⋆) ⊕ ker(T)` as coordinate subspaces.
    pub direct_sum: bool,
    pub invertible: bool,
    /// Only meaningful when `invertible`.
    pub w_unitary: bool,
    pub w_partial_isometry: bool,
}

impl PolarRecord {
    pub fn identities_hold(&self) -> bool {
        self.ker_t_eq_ker_abs
            && self.ker_w_eq_ker_t
            && self.ker_wstar_eq_ker_tstar
            && self.ran_w_eq_ran_t
            && self.ran_wstar_eq_ran_tstar
            && self.direct_sum
    }
}

/// `T = W|T|` inside the presentation.
pub fn polar_decompose(t: &SpaceMap, pres: &StarAlgebraPresentation, cfg: &Config) -> Result<PolarRecord> {
    let limit = cfg.confirm_tol.max(cfg.detect_tol);
    if pres.defect() > limit {
        return Err(Error::Rejected(format!(
            "presentation defect {:.3e} exceeds {limit:.1e}",
            pres.defect()
        )));
    }
    let rt = pres.rep_of(t)?;
    let abs_r = sqrt_psd(&rt.adjoint().matmul(&rt).hermitian_part())?;
    let w_r = polar_part(&rt, 1e-10);
    let abs = pres.map_of_rep(&abs_r)?;
    let w = pres.map_of_rep(&w_r)?;
    let tstar = pres.star(t)?;
    let wstar = pres.star(&w)?;
    let residual = t.matrix().dist(&w.matrix().matmul(abs.matrix()));
    let tol = rank_tol(cfg);
    let d = t.domain().dim();
    let rk = floored_rank(t.matrix(), tol);
    let ran_ts = column_space(tstar.matrix(), tol);
    let ker_t = crate::linalg::null_space(t.matrix(), tol);
    let direct_sum = ran_ts.cols() + ker_t.cols() == d
        && floored_rank(&CMatrix::hstack(&[&ran_ts, &ker_t]), tol) == d;
    let m = rt.rows();
    let id = CMatrix::identity(m);
    let wtw = w_r.adjoint().matmul(&w_r);
    let wwt = w_r.matmul(&w_r.adjoint());
    Ok(PolarRecord {
        residual,
        ker_t_eq_ker_abs: same_kernel(t, &abs, tol),
        ker_w_eq_ker_t: same_kernel(&w, t, tol),
        ker_wstar_eq_ker_tstar: same_kernel(&wstar, &tstar, tol),
        ran_w_eq_ran_t: same_range(&w, t, tol),
        ran_wstar_eq_ran_tstar: same_range(&wstar, &tstar, tol),
        direct_sum,
        invertible: rk == d,
        w_unitary: wtw.dist(&id) < 1e-8 && wwt.dist(&id) < 1e-8,
        w_partial_isometry: is_projection_rep(&wtw, 1e-8),
        w,
        abs,
    })
}

#[derive(Clone, Debug)]
pub struct AngleReport {
    pub commute: bool,
    /// `||P (Q - P ∧ Q)||` in the algebra norm.
    pub angle: f64,
    pub angle_below_one: bool,
    /// For commuting pairs: `P ∨ Q = P + Q - PQ` and `P ∧ Q = PQ`.
    pub join_formula: Option<bool>,
    pub meet_formula: Option<bool>,
    /// `ran(P ∨ Q) = ran P + ran Q` and `ran(P ∧ Q) = ran P ∩ ran Q`.
    pub sum_is_summand: bool,
    pub intersection_is_summand: bool,
}

pub fn angle_and_sum_tests(p: &SpaceMap, q: &SpaceMap, pres: &StarAlgebraPresentation, cfg: &Config) -> Result<AngleReport> {
    let rp = projection_rep(pres, p)?;
    let rq = projection_rep(pres, q)?;
    let pq = rp.matmul(&rq);
    let commute = pq.dist(&rq.matmul(&rp)) < 1e-8;
    let join = lattice_join(p, q, pres, cfg)?;
    let meet = lattice_meet(p, q, pres, cfg)?;
    let rmeet = pres.rep_of(&meet.projection)?;
    let rjoin = pres.rep_of(&join.projection)?;
    let angle = op_norm_unchecked(&rp.matmul(&(&rq - &rmeet)));
    let (join_formula, meet_formula) = if commute {
        let formula = &(&rp + &rq) - &pq;
        (Some(formula.dist(&rjoin) < 1e-7), Some(pq.dist(&rmeet) < 1e-7))
    } else {
        (None, None)
    };
    Ok(AngleReport {
        commute,
        angle,
        angle_below_one: angle < 1.0 - 1e-9,
        join_formula,
        meet_formula,
        sum_is_summand: join.spatial_ok,
        intersection_is_summand: meet.spatial_ok,
    })
}

// ------------------------------------------------------ families and columns

#[derive(Clone, Debug)]
pub struct FamilyEmbedding {
    pub map: SpaceMap,
    /// The family sums to the identity, so no complement slot is used.
    pub truncated: bool,
    pub certificate: IsometryCertificate,
    /// Spatial orthogonality `σ(x)^* σ(y) = 0` between ranges, when the
    /// embedding is flagged as Shilov; a sufficient certificate only.
    pub spatial_orthogonality: Option<bool>,
}

/// `x -> (P_1 x; ...; P_n x; (Id - Σ P_i) x)` into `C_{n+1}(X)`, certified
/// completely isometric.
pub fn orthogonal_family_embed(projs: &[SpaceMap], cfg: &Config) -> Result<FamilyEmbedding> {
    let first = projs.first().ok_or_else(|| Error::input("empty projection family"))?;
    let x = first.domain().clone();
    let d = x.dim();
    for p in projs {
        check_idempotent(p, cfg)?;
        if p.domain().as_ref() != x.as_ref() {
            return Err(Error::input("family members act on different spaces"));
        }
    }
    for (i, a) in projs.iter().enumerate() {
        for b in &projs[i + 1..] {
            let ab = a.matrix().matmul(b.matrix()).max_abs();
            let ba = b.matrix().matmul(a.matrix()).max_abs();
            if ab.max(ba) > 1e-8 {
                return Err(Error::input(format!("family is not orthogonal ({:.3e})", ab.max(ba))));
            }
        }
    }
    let mut rest = CMatrix::identity(d);
    for p in projs {
        rest = &rest - p.matrix();
    }
    let truncated = rest.max_abs() <= 1e-10;
    let mut blocks: Vec<&CMatrix> = projs.iter().map(|p| p.matrix()).collect();
    if !truncated {
        blocks.push(&rest);
    }
    let slots = blocks.len();
    let target = Arc::new(x.column_over(slots));
    let map = SpaceMap::new(x.clone(), target, CMatrix::vstack(&blocks))?;
    let certificate = certify_complete_isometry(&map, cfg, cfg.contraction_tol, &[])?;
    let spatial_orthogonality = if x.shilov_flag() {
        let ranges: Vec<Vec<CMatrix>> = projs
            .iter()
            .map(|p| range_spans(p.matrix(), 1e-9).iter().map(|v| x.realize1(v)).collect())
            .collect();
        let mut ok = true;
        for i in 0..ranges.len() {
            for j in 0..ranges.len() {
                if i == j {
                    continue;
                }
                for a in &ranges[i] {
                    for b in &ranges[j] {
                        ok &= a.adjoint().matmul(b).max_abs() <= 1e-9;
                    }
                }
            }
        }
        Some(ok)
    } else {
        None
    };
    Ok(FamilyEmbedding {
        map,
        truncated,
        certificate,
        spatial_orthogonality,
    })
}

/// Clusters sorted eigenvalues into groups separated by more than `gap`.
fn clusters(values: &[f64], gap: f64) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = Vec::new();
    for (i, &v) in values.iter().enumerate() {
        match out.last_mut() {
            Some(g) if v - values[*g.last().expect("nonempty")] <= gap => g.push(i),
            _ => out.push(vec![i]),
        }
    }
    out
}

/// Matrix units `e_ij` of one central block, in the representation.
fn block_matrix_units(
    pres: &StarAlgebraPresentation,
    e: &CMatrix,
    rank_k: usize,
    mult: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<CMatrix>>> {
    let m = e.rows();
    for _ in 0..16 {
        let h = e.matmul(&pres.rep_matrix(&pres.random_coords(rng)).hermitian_part()).matmul(e);
        // shift the block's spectrum away from the zero eigenvalues outside it
        let shifted = &h + &e.scale_real(10.0 * (1.0 + op_norm_unchecked(&h)));
        let eig = herm_eig(&shifted.hermitian_part())?;
        let inside: Vec<usize> = (0..m).filter(|&i| eig.values[i] > 5.0).collect();
        let vals: Vec<f64> = inside.iter().map(|&i| eig.values[i]).collect();
        let groups = clusters(&vals, 1e-6 * (1.0 + vals.last().copied().unwrap_or(0.0).abs()));
        if groups.len() != rank_k || groups.iter().any(|g| g.len() != mult) {
            continue;
        }
        let f: Vec<CMatrix> = groups
            .iter()
            .map(|g| {
                let mut pr = CMatrix::zeros(m, m);
                for &gi in g {
                    let v = eig.vectors.col(inside[gi]);
                    for a in 0..m {
                        for b in 0..m {
                            pr[(a, b)] += v[a] * v[b].conj();
                        }
                    }
                }
                pr
            })
            .collect();
        let mut v1 = vec![f[0].clone()];
        let mut ok = true;
        for fj in &f[1..] {
            let a = pres.rep_matrix(&pres.random_coords(rng));
            let w = polar_part(&fj.matmul(&a).matmul(&f[0]), 1e-8);
            if w.adjoint().matmul(&w).dist(&f[0]) > 1e-8 || w.matmul(&w.adjoint()).dist(fj) > 1e-8 {
                ok = false;
                break;
            }
            v1.push(w);
        }
        if !ok {
            continue;
        }
        let units = (0..rank_k)
            .map(|i| (0..rank_k).map(|j| v1[i].matmul(&v1[j].adjoint())).collect())
            .collect();
        return Ok(units);
    }
    Err(Error::Rejected("could not split a central block into matrix units".into()))
}

#[derive(Clone, Debug)]
pub struct ColumnStructure {
    pub n: usize,
    /// Mutually orthogonal, pairwise equivalent projections summing to `Id`.
    pub projections: Vec<SpaceMap>,
    /// `V_j` with `V_j⋆ V_j = P_1` and `V_j V_j⋆ = P_j`.
    pub shuffles: Vec<SpaceMap>,
    pub x0: Arc<OpSpace>,
    /// `X -> C_n(X_0)`, `x -> (V_j⋆ x)_j`.
    pub map: SpaceMap,
    pub certificate: IsometryCertificate,
}

/// Finds the largest `n ≥ 2` with `X ≅ C_n(X_0)` visible in the block
/// structure of the presentation (every block rank divisible by `n`).
pub fn column_structure_detect(pres: &StarAlgebraPresentation, cfg: &Config) -> Result<Option<ColumnStructure>> {
    let ranks = pres.block_ranks();
    let n = ranks.iter().fold(0usize, |g, &r| gcd(g, r));
    if n < 2 {
        return Ok(None);
    }
    let x = pres.space().clone();
    let d = x.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xc01d);
    let m = pres.rep_dim();
    let mut projs = vec![CMatrix::zeros(m, m); n];
    let mut shuffles = vec![CMatrix::zeros(m, m); n];
    for (b, e) in pres.blocks().iter().zip(pres.block_projection_reps()) {
        let units = block_matrix_units(pres, &e, b.rank, b.multiplicity, &mut rng)?;
        let per = b.rank / n;
        for i in 0..n {
            for t in 0..per {
                let row = i * per + t;
                projs[i] = &projs[i] + &units[row][row];
                shuffles[i] = &shuffles[i] + &units[row][t];
            }
        }
    }
    let proj_maps: Vec<SpaceMap> = projs.iter().map(|r| pres.map_of_rep(r)).collect::<Result<_>>()?;
    let shuffle_maps: Vec<SpaceMap> = shuffles.iter().map(|r| pres.map_of_rep(r)).collect::<Result<_>>()?;
    let s = column_space(proj_maps[0].matrix(), 1e-9);
    let spans: Vec<Vec<C64>> = (0..s.cols()).map(|j| s.col(j)).collect();
    let x0 = Arc::new(x.subspace(&spans, format!("X0({})", x.label()))?);
    let d0 = x0.dim();
    let target = Arc::new(x0.column_over(n));
    let mut mat = CMatrix::zeros(n * d0, d);
    for (j, v) in shuffle_maps.iter().enumerate() {
        let vstar = pres.star(v)?;
        let block = s.adjoint().matmul(vstar.matrix());
        mat.set_block(j * d0, 0, &block);
    }
    let map = SpaceMap::new(x, target, mat)?;
    let certificate = certify_complete_isometry(&map, cfg, cfg.contraction_tol, &[])?;
    Ok(Some(ColumnStructure {
        n,
        projections: proj_maps,
        shuffles: shuffle_maps,
        x0,
        map,
        certificate,
    }))
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

// ------------------------------------------------------------ hereditary

#[derive(Clone, Debug)]
pub struct HereditaryReport {
    pub hereditary: bool,
    /// Dimension of `{ P T P |_J : T ∈ Al(X) }`.
    pub restricted_dim: usize,
    pub summand_algebra_dim: usize,
    pub summand: Arc<OpSpace>,
    /// A projection of `Al(J)` outside the restriction image.
    pub witness: Option<SpaceMap>,
}

/// Compares `P Al(X) P` restricted to `J = ran(P)` with `Al(J)`.
pub fn hereditary_check(p: &SpaceMap, pres: &StarAlgebraPresentation, cfg: &Config) -> Result<HereditaryReport> {
    projection_rep(pres, p)?;
    let x = pres.space();
    let s = column_space(p.matrix(), 1e-9);
    let spans: Vec<Vec<C64>> = (0..s.cols()).map(|j| s.col(j)).collect();
    let j_space = Arc::new(x.subspace(&spans, format!("ran({})", x.label()))?);
    let restricted: Vec<CMatrix> = pres
        .basis_maps()?
        .iter()
        .map(|t| s.adjoint().matmul(&p.matrix().matmul(t.matrix()).matmul(p.matrix())).matmul(&s))
        .collect();
    let dj = j_space.dim();
    let stack = CMatrix::from_fn(dj * dj, restricted.len(), |i, k| restricted[k].data()[i]);
    let rq = column_space(&stack, 1e-8);
    let restricted_dim = rq.cols();
    let pres_j = discover_algebra(&j_space, cfg)?;
    let summand_algebra_dim = pres_j.dim();
    let hereditary = restricted_dim == summand_algebra_dim;
    let mut witness = None;
    if !hereditary {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x4e4e);
        'search: for _ in 0..8 {
            let coords: Vec<C64> = (0..pres_j.dim()).map(|_| c(rng.gen_range(-1.0..1.0), 0.0)).collect();
            let h = pres_j.rep_matrix(&coords).hermitian_part();
            let eig = herm_eig(&h)?;
            for k in 0..eig.values.len() {
                let v = eig.vectors.col(k);
                let pr = CMatrix::from_fn(h.rows(), h.rows(), |a, b| v[a] * v[b].conj());
                let Ok(map) = pres_j.map_of_rep(&pr) else { continue };
                let vecm = CMatrix::column(map.matrix().data());
                let res = (&vecm - &rq.matmul(&rq.adjoint().matmul(&vecm))).frob_norm();
                if res > 1e-6 {
                    witness = Some(map);
                    break 'search;
                }
            }
        }
    }
    Ok(HereditaryReport {
        hereditary,
        restricted_dim,
        summand_algebra_dim,
        summand: j_space,
        witness,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opspace::StandardKind;

    fn std(kind: StandardKind) -> Arc<OpSpace> {
        Arc::new(OpSpace::standard(kind).unwrap())
    }

    fn wedge() -> Arc<OpSpace> {
        let u = |i, j| CMatrix::unit(4, 2, i, j);
        let a = &u(0, 0) + &u(2, 1).scale_real(0.5);
        let b = &u(1, 0) + &u(2, 1).scale_real(0.5);
        Arc::new(OpSpace::new(vec![a, b, u(3, 1)], "W", false).unwrap())
    }

    #[test]
    fn column_projection_is_left_not_right() {
        let cfg = Config::quick();
        let p = SpaceMap::endo(std(StandardKind::Column(2)), CMatrix::diag_real(&[1.0, 0.0])).unwrap();
        let r = classify_projection(&p, &cfg, &[]).unwrap();
        assert_eq!(r.left_m, Decision::Yes, "{:?}", r.criteria);
        assert_eq!(r.right_m, Decision::No);
        assert_eq!(r.complete_m, Decision::No);
        let json = r.to_json();
        assert!(json.contains("record/v1"));
    }

    #[test]
    fn wedge_projections() {
        let cfg = Config::quick();
        let x = wedge();
        let p = SpaceMap::endo(x.clone(), CMatrix::diag_real(&[1.0, 1.0, 0.0])).unwrap();
        assert_eq!(classify_projection(&p, &cfg, &[]).unwrap().left_m, Decision::Yes);
        let e = SpaceMap::endo(x, CMatrix::diag_real(&[1.0, 0.0, 0.0])).unwrap();
        let hint = Element::level1(vec![c(1.0, 0.0), c(1.0, 0.0), c(2.0, 0.0)]);
        let r = classify_projection(&e, &cfg, &[hint]).unwrap();
        assert_eq!(r.left_m, Decision::No);
        let h = &r.hints[0];
        assert!((h.norm - 5f64.sqrt()).abs() < 1e-8, "{h:?}");
        assert!((h.image_norm - 4.5f64.sqrt()).abs() < 1e-8, "{h:?}");
    }

    #[test]
    fn column_structure_of_c2() {
        let cfg = Config::quick();
        let pres = discover_algebra(&std(StandardKind::Column(2)), &cfg).unwrap();
        let cs = column_structure_detect(&pres, &cfg).unwrap().expect("column structure");
        assert_eq!(cs.n, 2);
        assert_eq!(cs.x0.dim(), 1);
        assert_eq!(cs.certificate.verdict, crate::normcore::Verdict::Contraction);
    }

    #[test]
    fn polar_of_shift() {
        let cfg = Config::quick();
        let x = std(StandardKind::Full(2, 2));
        let pres = discover_algebra(&x, &cfg).unwrap();
        let shift = CMatrix::from_real(&[&[0.0, 2.0], &[0.0, 0.0]]);
        let t = SpaceMap::left_mult(x, &shift).unwrap();
        let pr = polar_decompose(&t, &pres, &cfg).unwrap();
        assert!(pr.residual < 1e-8);
        assert!(pr.identities_hold(), "{pr:?}");
        assert!(pr.w_partial_isometry && !pr.invertible);
        let pi = partial_isometry_check(&pr.w, &pres, &cfg).unwrap();
        assert!(pi.is_partial_isometry && pi.identities_hold());
    }

    #[test]
    fn lattice_in_diag() {
        let cfg = Config::quick();
        let x = std(StandardKind::Diag(3));
        let pres = discover_algebra(&x, &cfg).unwrap();
        let p = SpaceMap::endo(x.clone(), CMatrix::diag_real(&[1.0, 1.0, 0.0])).unwrap();
        let q = SpaceMap::endo(x, CMatrix::diag_real(&[0.0, 1.0, 1.0])).unwrap();
        let j = lattice_join(&p, &q, &pres, &cfg).unwrap();
        let m = lattice_meet(&p, &q, &pres, &cfg).unwrap();
        assert!(j.spatial_ok && j.rank == 3);
        assert!(m.spatial_ok && m.rank == 1);
        assert!(!order_test(&p, &q, &pres, &cfg).unwrap().algebraic);
        let a = angle_and_sum_tests(&p, &q, &pres, &cfg).unwrap();
        assert!(a.commute && a.join_formula == Some(true) && a.meet_formula == Some(true));
        let mvn = mvn_equivalent(&p, &q, &pres, &cfg).unwrap();
        assert!(!mvn.equivalent);
    }

    #[test]
    fn wedge_summand_is_not_hereditary() {
        let cfg = Config::quick();
        let x = wedge();
        let pres = discover_algebra(&x, &cfg).unwrap();
        let p = SpaceMap::endo(x, CMatrix::diag_real(&[1.0, 1.0, 0.0])).unwrap();
        let h = hereditary_check(&p, &pres, &cfg).unwrap();
        assert!(!h.hereditary);
        assert_eq!(h.summand_algebra_dim, 4);
        assert_eq!(h.restricted_dim, 2);
        assert!(h.witness.is_some());
    }
}
