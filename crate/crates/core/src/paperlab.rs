//! Registry of worked examples as executable golden cases.
//!
//! Every case builds its spaces, runs the engines and compares each computed
//! quantity against an expected value carrying a provenance tag. Expected
//! values given by closed forms are evaluated at runtime.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::constructions::{haagerup_defect_lower, haagerup_multiplier_check, haagerup_space};
use crate::error::{Error, Result};
use crate::linalg::{c, op_norm_unchecked, rank, CMatrix, C64};
use crate::mideals::{
    angle_and_sum_tests, classify_projection, classify_quotient_projection, column_structure_detect,
    iterative_join_distance, lattice_join, lattice_meet, order_test,
};
use crate::multipliers::{centralizer, discover_algebra, hermitian_image_check, Decision, StarAlgebraPresentation};
use crate::normcore::{self, Verdict};
use crate::opspace::{Element, NormOracle, OpSpace, SpaceMap, StandardKind};
use crate::par;

/// Where an expected value comes from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "source", rename_all = "snake_case")]
pub enum Tag {
    Paper(String),
    Trivial,
    /// Independent oracle used to derive the value.
    Derived(String),
}

impl Tag {
    fn short(&self) -> String {
        match self {
            Tag::Paper(s) => format!("PAPER {s}"),
            Tag::Trivial => "TRIVIAL".into(),
            Tag::Derived(s) => format!("DERIVED {s}"),
        }
    }
}

fn paper(s: &str) -> Tag {
    Tag::Paper(s.into())
}

fn derived(s: &str) -> Tag {
    Tag::Derived(s.into())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Assertion {
    pub description: String,
    pub computed: String,
    pub expected: String,
    pub tolerance: Option<f64>,
    /// `tolerance - |error|` for numeric checks, `±1` for discrete ones.
    pub margin: f64,
    pub passed: bool,
    pub provenance: Tag,
}

impl Assertion {
    pub fn value(desc: impl Into<String>, computed: f64, expected: f64, tol: f64, tag: Tag) -> Self {
        let err = (computed - expected).abs();
        let passed = err <= tol;
        Self {
            description: desc.into(),
            computed: format!("{computed:.10}"),
            expected: format!("{expected:.10}"),
            tolerance: Some(tol),
            margin: if err.is_nan() { f64::NEG_INFINITY } else { tol - err },
            passed,
            provenance: tag,
        }
    }

    pub fn at_most(desc: impl Into<String>, computed: f64, bound: f64, tag: Tag) -> Self {
        let passed = computed <= bound;
        Self {
            description: desc.into(),
            computed: format!("{computed:.3e}"),
            expected: format!("<= {bound:.1e}"),
            tolerance: Some(bound),
            margin: if computed.is_nan() { f64::NEG_INFINITY } else { bound - computed },
            passed,
            provenance: tag,
        }
    }

    pub fn at_least(desc: impl Into<String>, computed: f64, bound: f64, tag: Tag) -> Self {
        let passed = computed >= bound;
        Self {
            description: desc.into(),
            computed: format!("{computed:.6}"),
            expected: format!(">= {bound}"),
            tolerance: Some(bound),
            margin: if computed.is_nan() { f64::NEG_INFINITY } else { computed - bound },
            passed,
            provenance: tag,
        }
    }

    pub fn check(desc: impl Into<String>, ok: bool, tag: Tag) -> Self {
        Self::equal(desc, ok, true, tag)
    }

    pub fn equal<T: std::fmt::Debug + PartialEq>(desc: impl Into<String>, computed: T, expected: T, tag: Tag) -> Self {
        let passed = computed == expected;
        Self {
            description: desc.into(),
            computed: format!("{computed:?}"),
            expected: format!("{expected:?}"),
            tolerance: None,
            margin: if passed { 1.0 } else { -1.0 },
            passed,
            provenance: tag,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CaseReport {
    pub id: String,
    pub title: String,
    pub assertions: Vec<Assertion>,
    pub error: Option<String>,
    pub passed: bool,
    /// Smallest assertion margin.
    pub margin: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SuiteReport {
    pub schema: String,
    pub config: Config,
    pub cases: Vec<CaseReport>,
    pub passed: usize,
    pub failed: usize,
}

impl SuiteReport {
    pub fn all_passed(&self) -> bool {
        self.failed == 0
    }
}

type Builder = fn(&Config) -> Result<Vec<Assertion>>;

struct ExampleCase {
    id: &'static str,
    title: &'static str,
    build: Builder,
}

const CASES: &[ExampleCase] = &[
    ExampleCase { id: "CENT-Z", title: "centralizers and the left/right/complete matrix in dimension two", build: cent_z },
    ExampleCase { id: "CLASS-2DIM", title: "multiplier algebras of two-dimensional spaces", build: class_2dim },
    ExampleCase { id: "COLDETECT", title: "column structure detection", build: coldetect },
    ExampleCase { id: "CSTAR-M2", title: "M_2 as a C*-algebra", build: cstar_m2 },
    ExampleCase { id: "EX-IVB4", title: "a right M-summand of a right M-summand that is not one", build: ex_ivb4 },
    ExampleCase { id: "EX-IVB6", title: "a quotient summand with no lift", build: ex_ivb6 },
    ExampleCase { id: "HAAG-IVH3", title: "multipliers of l_inf_2 (x)h l_inf_2", build: haag_ivh3 },
    ExampleCase { id: "HILB-CHAR", title: "one-dimensional summands characterize columns", build: hilb_char },
    ExampleCase { id: "LATTICE", title: "projection lattice of M_2", build: lattice },
    ExampleCase { id: "NSA-T2", title: "upper triangular 2x2 matrices", build: nsa_t2 },
];

pub fn list_cases() -> Vec<(&'static str, &'static str)> {
    CASES.iter().map(|c| (c.id, c.title)).collect()
}

fn run(case: &ExampleCase, cfg: &Config) -> CaseReport {
    let (assertions, error) = match (case.build)(cfg) {
        Ok(a) => (a, None),
        Err(e) => (Vec::new(), Some(e.to_string())),
    };
    let passed = error.is_none() && !assertions.is_empty() && assertions.iter().all(|a| a.passed);
    let margin = assertions.iter().map(|a| a.margin).fold(f64::INFINITY, f64::min);
    CaseReport {
        id: case.id.into(),
        title: case.title.into(),
        assertions,
        error,
        passed,
        margin: if error_free(margin) { margin } else { f64::NEG_INFINITY },
    }
}

fn error_free(m: f64) -> bool {
    m.is_finite()
}

pub fn run_case(id: &str, cfg: &Config) -> Result<CaseReport> {
    let case = CASES
        .iter()
        .find(|c| c.id.eq_ignore_ascii_case(id))
        .ok_or_else(|| Error::UnknownCase(id.to_string()))?;
    Ok(run(case, cfg))
}

/// Runs the given cases (all when empty) concurrently; reports are ordered by id.
pub fn run_suite(ids: &[String], cfg: &Config) -> Result<SuiteReport> {
    let selected: Vec<&ExampleCase> = if ids.is_empty() {
        CASES.iter().collect()
    } else {
        let mut v = Vec::new();
        for id in ids {
            v.push(
                CASES
                    .iter()
                    .find(|c| c.id.eq_ignore_ascii_case(id))
                    .ok_or_else(|| Error::UnknownCase(id.clone()))?,
            );
        }
        v
    };
    let mut cases = par::map_slice(&selected, cfg.parallel, |c| run(c, cfg));
    cases.sort_by(|a, b| a.id.cmp(&b.id));
    let passed = cases.iter().filter(|c| c.passed).count();
    Ok(SuiteReport {
        schema: "report/v1".into(),
        config: cfg.clone(),
        failed: cases.len() - passed,
        passed,
        cases,
    })
}

pub fn run_all(cfg: &Config) -> SuiteReport {
    run_suite(&[], cfg).expect("registered ids")
}

pub fn render_table(report: &SuiteReport) -> String {
    let mut out = String::new();
    for case in &report.cases {
        let _ = writeln!(
            out,
            "{} {}  {}",
            if case.passed { "PASS" } else { "FAIL" },
            case.id,
            case.title
        );
        if let Some(e) = &case.error {
            let _ = writeln!(out, "    error: {e}");
        }
        for a in &case.assertions {
            let _ = writeln!(
                out,
                "    [{}] {}: computed {} expected {} (margin {:.3e}; {})",
                if a.passed { "ok" } else { "!!" },
                a.description,
                a.computed,
                a.expected,
                a.margin,
                a.provenance.short()
            );
        }
    }
    let _ = writeln!(out, "{} passed, {} failed", report.passed, report.failed);
    out
}

// ------------------------------------------------------------------ helpers

fn standard(kind: StandardKind) -> Result<Arc<OpSpace>> {
    Ok(Arc::new(OpSpace::standard(kind)?))
}

/// `X = {[[a,0],[b,0],[0,(a+b)/2],[0,c]]} ⊂ M_{4,2}` with coordinates `(a, b, c)`.
pub fn wedge_space() -> Arc<OpSpace> {
    let u = |i, j| CMatrix::unit(4, 2, i, j);
    let a = &u(0, 0) + &u(2, 1).scale_real(0.5);
    let b = &u(1, 0) + &u(2, 1).scale_real(0.5);
    Arc::new(OpSpace::new(vec![a, b, u(3, 1)], "X_wedge", false).expect("independent basis"))
}

fn re(v: &[f64]) -> Vec<C64> {
    v.iter().map(|&x| c(x, 0.0)).collect()
}

fn diag_map(x: &Arc<OpSpace>, d: &[f64]) -> Result<SpaceMap> {
    SpaceMap::endo(x.clone(), CMatrix::diag_real(d))
}

fn rank_one(v: &[C64]) -> CMatrix {
    CMatrix::from_fn(v.len(), v.len(), |i, j| v[i] * v[j].conj())
}

fn random_unit<R: rand::Rng>(n: usize, rng: &mut R) -> Vec<C64> {
    let g = CMatrix::random_gaussian(n, 1, rng).into_data();
    let s = g.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    g.into_iter().map(|z| z / s).collect()
}

// ------------------------------------------------------------------- cases

fn ex_ivb4(cfg: &Config) -> Result<Vec<Assertion>> {
    let tag = || paper("summand of a summand");
    let x = wedge_space();
    let p = diag_map(&x, &[1.0, 1.0, 0.0])?;
    let e = diag_map(&x, &[1.0, 0.0, 0.0])?;
    let j = Arc::new(x.subspace(&[re(&[1.0, 0.0, 0.0]), re(&[0.0, 1.0, 0.0])], "J")?);
    let q = diag_map(&j, &[1.0, 0.0])?;
    let nu_e = normcore::nu_c(&e)?;
    let mut out = Vec::new();
    for lambda in [2.0f64, 3.0] {
        let xl = re(&[1.0, 1.0, lambda]);
        let norm = x.norm(1, &xl);
        let img = nu_e.codomain().norm(1, &nu_e.apply_coords(1, &xl));
        out.push(Assertion::value(
            format!("||x_lambda|| at lambda = {lambda}"),
            norm,
            2f64.sqrt().max((1.0 + lambda * lambda).sqrt()),
            1e-8,
            tag(),
        ));
        out.push(Assertion::value(
            format!("||nu_E(x_lambda)|| at lambda = {lambda}"),
            img,
            2f64.sqrt().max((0.5 + lambda * lambda).sqrt()),
            1e-8,
            tag(),
        ));
    }
    let rp = classify_projection(&p, cfg, &[])?;
    out.push(Assertion::equal("P is a left M-projection", rp.left_m, Decision::Yes, tag()));
    let rq = classify_projection(&q, cfg, &[])?;
    out.push(Assertion::equal("Q is a left M-projection on J", rq.left_m, Decision::Yes, tag()));
    let hint = Element::level1(re(&[1.0, 1.0, 2.0]));
    let re_ = classify_projection(&e, cfg, &[hint])?;
    out.push(Assertion::equal("E = QP is not a left M-projection", re_.left_m, Decision::No, tag()));
    let h = &re_.hints[0];
    out.push(Assertion::check(
        "x_2 witnesses ||nu_E(x_2)|| < ||x_2||",
        h.image_norm < h.norm - 1e-8,
        tag(),
    ));
    Ok(out)
}

fn ex_ivb6(cfg: &Config) -> Result<Vec<Assertion>> {
    let tag = || paper("quotient summand without lift");
    let x = wedge_space();
    let f = diag_map(&x, &[1.0, 0.0, 1.0])?;
    let rf = classify_projection(&f, cfg, &[])?;
    let mut out = vec![Assertion::equal(
        "natural projection F onto Y + J~ is not a left M-projection",
        rf.left_m,
        Decision::No,
        tag(),
    )];
    let e = diag_map(&x, &[1.0, 0.0, 0.0])?;
    let jt = vec![re(&[0.0, 0.0, 1.0])];
    let qr = classify_quotient_projection(&e, &jt, &Config { oracle_tol: 1e-4, ..cfg.clone() })?;
    out.push(Assertion::equal(
        "(Y + J~)/J~ summand projection on X/J~ is a left M-projection",
        qr.left_m,
        Decision::Yes,
        tag(),
    ));
    let worst = qr.criteria.iter().map(|c| c.upper).fold(0.0, f64::max);
    out.push(Assertion::at_most(
        "quotient criterion upper bounds - 1",
        worst - 1.0,
        1e-4,
        paper("quotient summand without lift"),
    ));
    Ok(out)
}

fn class_2dim(cfg: &Config) -> Result<Vec<Assertion>> {
    let tag = || paper("two-dimensional classification");
    let c2 = standard(StandardKind::Column(2))?;
    let l2 = standard(StandardKind::Diag(2))?;
    let r2 = standard(StandardKind::Row(2))?;
    let spaces = [c2.clone(), l2.clone(), Arc::new(l2.opposite()), r2];
    let dims = par::map_slice(&spaces, cfg.parallel, |x| discover_algebra(x, cfg).map(|p| p.dim()));
    let dims: Vec<usize> = dims.into_iter().collect::<Result<_>>()?;
    let mut out = vec![
        Assertion::equal("dim Al(C_2)", dims[0], 4, tag()),
        Assertion::equal("dim Al(l_inf_2)", dims[1], 2, tag()),
        Assertion::equal("dim Ar(l_inf_2)", dims[2], 2, tag()),
        Assertion::equal("dim Al(R_2)", dims[3], 1, tag()),
    ];
    let s = c2.basis()[0].clone();
    let t = c2.basis()[1].clone();
    out.push(Assertion::check(
        "C_2 realized by norm-one S, T with S*T = 0",
        (op_norm_unchecked(&s) - 1.0).abs() < 1e-12
            && (op_norm_unchecked(&t) - 1.0).abs() < 1e-12
            && s.adjoint().matmul(&t).max_abs() == 0.0,
        paper("two-dimensional summand realization"),
    ));
    let p = diag_map(&c2, &[1.0, 0.0])?;
    let r = classify_projection(&p, cfg, &[])?;
    out.push(Assertion::equal("span(e_1) is a right M-summand of C_2", r.left_m, Decision::Yes, paper("two-dimensional summand realization")));
    Ok(out)
}

fn cstar_m2(cfg: &Config) -> Result<Vec<Assertion>> {
    let tag = || paper("C*-algebra summands");
    let x = standard(StandardKind::Full(2, 2))?;
    let pres = discover_algebra(&x, cfg)?;
    let mut out = vec![
        Assertion::equal("dim Al(M_2)", pres.dim(), 4, tag()),
        Assertion::equal("block ranks", pres.block_ranks(), vec![2], derived("presentation block analysis")),
        Assertion::at_most("presentation defect", pres.defect(), 1e-6, derived("Hermitian defect grid")),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x0c2);
    let v = random_unit(2, &mut rng);
    let e = rank_one(&v);
    let p = SpaceMap::left_mult(x.clone(), &e)?;
    let rp = classify_projection(&p, cfg, &[])?;
    out.push(Assertion::equal("left multiplication by a projection is a left M-projection", rp.left_m, Decision::Yes, tag()));
    out.push(Assertion::equal("... and not a right M-projection", rp.right_m, Decision::No, tag()));
    let ideal: Vec<CMatrix> = (0..2)
        .flat_map(|i| (0..2).map(move |j| (i, j)))
        .map(|(i, j)| CMatrix::column(&x.coords_of(&e.matmul(&CMatrix::unit(2, 2, i, j))).expect("in M_2")))
        .collect();
    let ideal_span = CMatrix::hstack(&ideal.iter().collect::<Vec<_>>());
    let rk = rank(&ideal_span, 1e-10);
    let joint = rank(&CMatrix::hstack(&[&ideal_span, p.matrix()]), 1e-10);
    out.push(Assertion::check(
        "range of the projection is the right ideal e M_2",
        rk == 2 && joint == 2 && rank(p.matrix(), 1e-10) == 2,
        tag(),
    ));
    let skew = SpaceMap::left_mult(x.clone(), &CMatrix::from_real(&[&[1.0, 1.0], &[0.0, 0.0]]))?;
    let rs = classify_projection(&skew, cfg, &[])?;
    out.push(Assertion::equal("non-selfadjoint idempotent multiplier is not a left M-projection", rs.left_m, Decision::No, tag()));
    let rr = classify_projection(&SpaceMap::right_mult(x, &e)?, cfg, &[])?;
    out.push(Assertion::equal("right multiplication by a projection is a right M-projection", rr.right_m, Decision::Yes, tag()));
    Ok(out)
}

fn nsa_t2(cfg: &Config) -> Result<Vec<Assertion>> {
    let tag = || paper("nonselfadjoint algebra summands");
    let x = standard(StandardKind::UpperTriangular2)?;
    let pres = discover_algebra(&x, cfg)?;
    let mut out = vec![Assertion::equal("dim Al(T_2) (diagonal of T_2)", pres.dim(), 2, tag())];
    for (name, d) in [("diag(1,0)", [1.0, 0.0]), ("diag(0,1)", [0.0, 1.0])] {
        let e = CMatrix::diag_real(&d);
        let p = SpaceMap::left_mult(x.clone(), &e)?;
        let r = classify_projection(&p, cfg, &[])?;
        out.push(Assertion::equal(format!("left multiplication by {name} is a left M-projection"), r.left_m, Decision::Yes, tag()));
        let ideal: Vec<CMatrix> = x
            .basis()
            .iter()
            .map(|b| CMatrix::column(&x.coords_of(&e.matmul(b)).expect("ideal in T_2")))
            .collect();
        let ideal_span = CMatrix::hstack(&ideal.iter().collect::<Vec<_>>());
        let ok = rank(&ideal_span, 1e-10) == rank(p.matrix(), 1e-10)
            && rank(&CMatrix::hstack(&[&ideal_span, p.matrix()]), 1e-10) == rank(p.matrix(), 1e-10);
        out.push(Assertion::check(format!("its range is the principal right ideal {name} T_2"), ok, paper("principal right ideals")));
    }
    let unit = x.coords_of(&CMatrix::identity(2))?;
    let h = SpaceMap::left_mult(x.clone(), &CMatrix::diag_real(&[1.0, -2.0]))?;
    let (dh, _) = hermitian_image_check(&x, &unit, &h, cfg)?;
    out.push(Assertion::equal("Hermitian multiplier maps 1 to a Hermitian", dh, Decision::Yes, paper("Hermitian image of the unit")));
    let n = SpaceMap::left_mult(x.clone(), &CMatrix::from_real(&[&[0.0, 1.0], &[0.0, 0.0]]))?;
    let (dn, _) = hermitian_image_check(&x, &unit, &n, cfg)?;
    out.push(Assertion::equal("left multiplication by E_12 maps 1 to a non-Hermitian", dn, Decision::No, derived("exp(itE_12) norm grid")));
    let ue = SpaceMap::left_mult(x, &CMatrix::from_real(&[&[0.0, 1.0], &[0.0, 0.0]]))?;
    let in_alg = pres.coords_of_map(&ue).is_ok();
    out.push(Assertion::check("left multiplication by E_12 lies outside Al(T_2)", !in_alg, tag()));
    Ok(out)
}

fn hilb_char(cfg: &Config) -> Result<Vec<Assertion>> {
    let tag = || paper("column characterization");
    let c3 = standard(StandardKind::Column(3))?;
    let r3 = standard(StandardKind::Row(3))?;
    let l3 = standard(StandardKind::Diag(3))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x3b1);
    let v = random_unit(3, &mut rng);
    let flat = re(&[1.0 / 3f64.sqrt(); 3]);
    let jobs: Vec<(String, SpaceMap, Decision)> = vec![
        ("C_3: onto span(e_1)".into(), diag_map(&c3, &[1.0, 0.0, 0.0])?, Decision::Yes),
        ("C_3: onto span(e_3)".into(), diag_map(&c3, &[0.0, 0.0, 1.0])?, Decision::Yes),
        ("C_3: onto a random line".into(), SpaceMap::endo(c3, rank_one(&v))?, Decision::Yes),
        ("R_3: onto span(e_1)".into(), diag_map(&r3, &[1.0, 0.0, 0.0])?, Decision::No),
        ("l_inf_3: onto span(1,1,1)".into(), SpaceMap::endo(l3, rank_one(&flat))?, Decision::No),
    ];
    let res = par::map_slice(&jobs, cfg.parallel, |(_, p, _)| classify_projection(p, cfg, &[]));
    let mut out = Vec::new();
    for ((name, _, want), r) in jobs.iter().zip(res) {
        out.push(Assertion::equal(format!("{name} is a left M-projection"), r?.left_m, *want, tag()));
    }
    Ok(out)
}

fn coldetect(cfg: &Config) -> Result<Vec<Assertion>> {
    let tag = || paper("column structure");
    let l2 = OpSpace::standard(StandardKind::Diag(2))?;
    let spaces = [
        (standard(StandardKind::Column(2))?, 2usize, 1usize),
        (standard(StandardKind::Column(3))?, 3, 1),
        (Arc::new(l2.column_over(2)), 2, 2),
    ];
    let mut out = Vec::new();
    for (x, n, d0) in &spaces {
        let pres = discover_algebra(x, cfg)?;
        let cs = column_structure_detect(&pres, cfg)?;
        let Some(cs) = cs else {
            out.push(Assertion::check(format!("{}: column structure found", x.label()), false, tag()));
            continue;
        };
        out.push(Assertion::equal(format!("{}: n", x.label()), cs.n, *n, tag()));
        out.push(Assertion::equal(format!("{}: dim X_0", x.label()), cs.x0.dim(), *d0, derived("presentation analysis")));
        let defect = (cs.certificate.forward.upper_value() - 1.0)
            .abs()
            .max((cs.certificate.inverse_upper() - 1.0).abs());
        out.push(Assertion::at_most(format!("{}: isometry defect", x.label()), defect, 1e-6, tag()));
        out.push(Assertion::equal(
            format!("{}: isometry verdict", x.label()),
            cs.certificate.verdict,
            Verdict::Contraction,
            tag(),
        ));
    }
    Ok(out)
}

/// Smallest `n` with `|λ^{1/n} - 1| <= eps` for every nonzero eigenvalue.
fn steps_needed(eigs: &[f64], eps: f64) -> u32 {
    let mut need: f64 = 1.0;
    for &l in eigs.iter().filter(|&&l| l > 1e-12) {
        let n = if l > 1.0 { l.ln() / (1.0 + eps).ln() } else { (1.0 / l).ln() / -(1.0 - eps).ln() };
        need = need.max(n.ceil());
    }
    need as u32
}

fn lattice(cfg: &Config) -> Result<Vec<Assertion>> {
    let x = standard(StandardKind::Full(2, 2))?;
    let pres: StarAlgebraPresentation = discover_algebra(&x, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x1a7);
    let u = random_unit(2, &mut rng);
    let w = random_unit(2, &mut rng);
    let e1 = CMatrix::diag_real(&[1.0, 0.0]);
    let e2 = CMatrix::diag_real(&[0.0, 1.0]);
    let pairs: Vec<(&str, CMatrix, CMatrix)> = vec![
        ("orthogonal", e1.clone(), e2),
        ("equal", e1.clone(), e1),
        ("generic rank-one", rank_one(&u), rank_one(&w)),
    ];
    let mut out = Vec::new();
    for (name, a, b) in pairs {
        let p = SpaceMap::left_mult(x.clone(), &a)?;
        let q = SpaceMap::left_mult(x.clone(), &b)?;
        let j = lattice_join(&p, &q, &pres, cfg)?;
        let m = lattice_meet(&p, &q, &pres, cfg)?;
        out.push(Assertion::check(format!("{name}: ran(P v Q) = ran P + ran Q"), j.spatial_ok, paper("lattice dictionary")));
        out.push(Assertion::check(format!("{name}: ran(P ^ Q) = ran P ∩ ran Q"), m.spatial_ok, paper("lattice dictionary")));
        let ord = order_test(&p, &j.projection, &pres, cfg)?;
        out.push(Assertion::check(format!("{name}: P <= P v Q"), ord.algebraic, Tag::Trivial));
        let ang = angle_and_sum_tests(&p, &q, &pres, cfg)?;
        if ang.commute {
            out.push(Assertion::check(
                format!("{name}: commuting join/meet formulas"),
                ang.join_formula == Some(true) && ang.meet_formula == Some(true),
                Tag::Trivial,
            ));
        }
        // spectrum of a + b in M_2: for projections it is {0,1,2} or 1 ± |<u,w>|
        let s = &a + &b;
        let tr = s.trace().re;
        let det = (s[(0, 0)] * s[(1, 1)] - s[(0, 1)] * s[(1, 0)]).re;
        let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
        let eigs = [tr / 2.0 - disc, tr / 2.0 + disc];
        let predicted = eigs
            .iter()
            .filter(|&&l| l > 1e-12)
            .map(|&l| (l.powf(1.0 / 64.0) - 1.0).abs())
            .fold(0.0, f64::max);
        let dist64 = iterative_join_distance(&p, &q, 64, &pres)?;
        out.push(Assertion::value(
            format!("{name}: ||(P+Q)^(1/64) - P v Q|| against spectral prediction"),
            dist64,
            predicted,
            1e-9,
            derived("closed-form 2x2 spectrum"),
        ));
        out.push(Assertion::at_most(
            format!("{name}: ||(P+Q)^(1/64) - P v Q||"),
            dist64,
            1e-6,
            paper("iterative join"),
        ));
        let n_star = steps_needed(&eigs, 1e-6);
        let dist = iterative_join_distance(&p, &q, n_star, &pres)?;
        out.push(Assertion::at_most(
            format!("{name}: ||(P+Q)^(1/n) - P v Q|| at n = {n_star}"),
            dist,
            1e-6 * (1.0 + 1e-6),
            derived("closed-form 2x2 spectrum"),
        ));
    }
    Ok(out)
}

fn haag_ivh3(cfg: &Config) -> Result<Vec<Assertion>> {
    let tag = || paper("Haagerup left multipliers");
    let l2 = standard(StandardKind::Diag(2))?;
    let hs = haagerup_space(l2.clone(), l2.clone(), cfg)?;
    let mut out = vec![Assertion::check("oracle calibration on C_2 (x)h R_2", hs.calibration().passed, derived("M_2 norms"))];
    let unit = re(&[1.0, 0.0, 0.0, 1.0]);
    let b = hs.norm_bounds(1, &unit)?;
    out.push(Assertion::value("||e1(x)e1 + e2(x)e2|| upper", b.ub, 1.0, 1e-6, derived("factorization (e1 e2)(e1; e2)")));
    out.push(Assertion::value("||e1(x)e1 + e2(x)e2|| lower", b.lb, 1.0, 1e-6, derived("multiplication pairing")));
    for (name, d, want) in [("e_1", [1.0, 0.0], 1.0), ("e_2", [0.0, 1.0], 1.0), ("diag(1,2)", [1.0, 2.0], 2.0)] {
        let t = SpaceMap::left_mult(l2.clone(), &CMatrix::diag_real(&d))?;
        let r = haagerup_multiplier_check(&t, &hs, cfg)?;
        out.push(Assertion::equal(format!("{name} (x) Id: multiplier norm transfers"), r.agree, Decision::Yes, tag()));
        out.push(Assertion::value(format!("{name} (x) Id: oracle multiplier norm"), r.oracle_lower, want, 1e-3, derived("oracle bisection vs concrete")));
    }
    let swap = SpaceMap::endo(l2, CMatrix::from_real(&[&[0.0, 1.0], &[1.0, 0.0]]))?;
    let defect = haagerup_defect_lower(&swap, &hs, cfg)?;
    out.push(Assertion::at_least("swap (x) Id: Hermitian defect lower bound", defect, 0.05, derived("grid defect on oracle")));
    Ok(out)
}

fn cent_z(cfg: &Config) -> Result<Vec<Assertion>> {
    let l2 = standard(StandardKind::Diag(2))?;
    let c2 = standard(StandardKind::Column(2))?;
    let r2 = standard(StandardKind::Row(2))?;
    let zl = centralizer(&l2, cfg)?;
    let zc = centralizer(&c2, cfg)?;
    let mut out = vec![
        Assertion::equal("dim Z(l_inf_2)", zl.dim(), 2, paper("centralizer")),
        Assertion::equal("dim Z(C_2)", zc.dim(), 1, paper("centralizer")),
    ];
    let cases = [
        (c2, [Decision::Yes, Decision::No, Decision::No]),
        (l2, [Decision::Yes, Decision::Yes, Decision::Yes]),
        (r2, [Decision::No, Decision::Yes, Decision::No]),
    ];
    for (x, want) in cases {
        let p = diag_map(&x, &[1.0, 0.0])?;
        let r = classify_projection(&p, cfg, &[])?;
        out.push(Assertion::equal(
            format!("{}: (left, right, complete) for the first coordinate", x.label()),
            [r.left_m, r.right_m, r.complete_m],
            want,
            paper("two-dimensional classification"),
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_case_is_an_error() {
        assert!(matches!(run_case("NOPE", &Config::quick()), Err(Error::UnknownCase(_))));
        assert_eq!(list_cases().len(), 10);
    }

    #[test]
    fn steps_for_eigenvalue_two() {
        let n = steps_needed(&[2.0, 0.0], 1e-6);
        assert!(2f64.powf(1.0 / f64::from(n)) - 1.0 <= 1e-6);
        assert!(2f64.powf(1.0 / f64::from(n - 1)) - 1.0 > 1e-6);
    }

    #[test]
    fn ex_ivb4_case() {
        let r = run_case("EX-IVB4", &Config::quick()).unwrap();
        assert!(r.passed, "{}", serde_json::to_string_pretty(&r).unwrap());
    }
}

