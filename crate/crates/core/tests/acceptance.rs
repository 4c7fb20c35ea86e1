//! Acceptance criteria 1-11. Prints one PASS/FAIL line per criterion.
//!
//! Criterion 6 asks for `||(P+Q)^{1/64} - P v Q|| <= 1e-6`, which no pair with
//! an eigenvalue of `P + Q` outside `{0, 1}` can meet: `2^{1/64} - 1 ≈ 0.0109`.
//! Such failures are reported as FAIL; the run only aborts when a failure is
//! not the one predicted by the closed-form spectrum.

use std::sync::Arc;
use std::time::Instant;

use mstruct::constructions::haagerup_space;
use mstruct::linalg::{herm_eig, svd};
use mstruct::mideals::{
    classify_projection, classify_quotient_projection, iterative_join_distance, lattice_join, lattice_meet,
    polar_decompose,
};
use mstruct::multipliers::{discover_algebra, multiplier_norm, Decision, StarAlgebraPresentation};
use mstruct::normcore::{cb_norm_bounds, map_cb_norm, nu_c, MapProblem};
use mstruct::opspace::{Element, NormOracle, OpSpace, SpaceMap, StandardKind};
use mstruct::paperlab::{run_all, wedge_space, SuiteReport};
use mstruct::{c, CMatrix, Config, Error, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    passed: bool,
    detail: String,
    /// The failure is the one the closed-form spectrum predicts.
    predicted_failure: bool,
}

impl Outcome {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self { passed, detail: detail.into(), predicted_failure: false }
    }
}

fn re(v: &[f64]) -> Vec<C64> {
    v.iter().map(|&x| c(x, 0.0)).collect()
}

fn diag_map(x: &Arc<OpSpace>, d: &[f64]) -> SpaceMap {
    SpaceMap::endo(x.clone(), CMatrix::diag_real(d)).unwrap()
}

fn standard(k: StandardKind) -> Arc<OpSpace> {
    Arc::new(OpSpace::standard(k).unwrap())
}

fn rank_of(m: &CMatrix) -> usize {
    if m.rows() == 0 || m.cols() == 0 {
        return 0;
    }
    let s = svd(m).s;
    let top = s.first().copied().unwrap_or(0.0).max(1.0);
    s.iter().filter(|&&x| x > 1e-9 * top).count()
}

fn same_columns(a: &CMatrix, b: &CMatrix) -> bool {
    let ra = rank_of(a);
    ra == rank_of(b) && ra == rank_of(&CMatrix::hstack(&[a, b]))
}

fn contains_columns(big: &CMatrix, small: &CMatrix) -> bool {
    rank_of(big) == rank_of(&CMatrix::hstack(&[big, small]))
}

fn unit_vector(n: usize, rng: &mut ChaCha8Rng) -> Vec<C64> {
    let g = CMatrix::random_gaussian(n, 1, rng).into_data();
    let s = g.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    g.into_iter().map(|z| z / s).collect()
}

fn rank_one(v: &[C64]) -> CMatrix {
    CMatrix::from_fn(v.len(), v.len(), |i, j| v[i] * v[j].conj())
}

fn eig2(s: &CMatrix) -> [f64; 2] {
    let tr = s.trace().re;
    let det = (s[(0, 0)] * s[(1, 1)] - s[(0, 1)] * s[(1, 0)]).re;
    let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
    [tr / 2.0 - disc, tr / 2.0 + disc]
}

/// Spectral projection of a random Hermitian element onto a random nonempty,
/// proper union of eigenvalue clusters, as a representation matrix.
fn random_projection_rep(pres: &StarAlgebraPresentation, rng: &mut ChaCha8Rng) -> Option<CMatrix> {
    let coords: Vec<C64> = (0..pres.dim()).map(|_| c(rng.gen_range(-1.0..1.0), 0.0)).collect();
    let h = pres.rep_matrix(&coords).hermitian_part();
    let e = herm_eig(&h).unwrap();
    let mut order: Vec<usize> = (0..e.values.len()).collect();
    order.sort_by(|&a, &b| e.values[a].total_cmp(&e.values[b]));
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for &i in &order {
        match clusters.last_mut() {
            Some(cl) if (e.values[i] - e.values[*cl.last().unwrap()]).abs() < 1e-6 => cl.push(i),
            _ => clusters.push(vec![i]),
        }
    }
    if clusters.len() < 2 {
        return None;
    }
    let k = clusters.len();
    let mask = rng.gen_range(1..(1u32 << k) - 1);
    let m = h.rows();
    let mut r = CMatrix::zeros(m, m);
    for (j, cl) in clusters.iter().enumerate() {
        if mask & (1 << j) != 0 {
            for &i in cl {
                let v = e.vectors.col(i);
                r = &r + &rank_one(&v);
            }
        }
    }
    Some(r)
}

struct Lab {
    c2: StarAlgebraPresentation,
    c3: StarAlgebraPresentation,
    r3: StarAlgebraPresentation,
    l3: StarAlgebraPresentation,
    m2: StarAlgebraPresentation,
    t2: StarAlgebraPresentation,
}

impl Lab {
    fn build(cfg: &Config) -> Self {
        let d = |k| discover_algebra(&standard(k), cfg).unwrap();
        Self {
            c2: d(StandardKind::Column(2)),
            c3: d(StandardKind::Column(3)),
            r3: d(StandardKind::Row(3)),
            l3: d(StandardKind::Diag(3)),
            m2: d(StandardKind::Full(2, 2)),
            t2: d(StandardKind::UpperTriangular2),
        }
    }

    fn five(&self) -> [(&str, &StarAlgebraPresentation); 5] {
        [("C_2", &self.c2), ("C_3", &self.c3), ("l_inf_3", &self.l3), ("M_2", &self.m2), ("T_2", &self.t2)]
    }
}

fn criterion_1(cfg: &Config) -> Outcome {
    let x = wedge_space();
    let lambda = 2.0f64;
    let xl = re(&[1.0, 1.0, lambda]);
    let e = diag_map(&x, &[1.0, 0.0, 0.0]);
    let nu = nu_c(&e).unwrap();
    let norm = x.norm(1, &xl);
    let img = nu.codomain().norm(1, &nu.apply_coords(1, &xl));
    let want_norm = 2f64.sqrt().max((1.0 + lambda * lambda).sqrt());
    let want_img = 2f64.sqrt().max((0.5 + lambda * lambda).sqrt());
    let values_ok = (norm - 5f64.sqrt()).abs() <= 1e-8
        && (norm - want_norm).abs() <= 1e-8
        && (img - 4.5f64.sqrt()).abs() <= 1e-8
        && (img - want_img).abs() <= 1e-8;
    let p = classify_projection(&diag_map(&x, &[1.0, 1.0, 0.0]), cfg, &[]).unwrap();
    let j = Arc::new(x.subspace(&[re(&[1.0, 0.0, 0.0]), re(&[0.0, 1.0, 0.0])], "J").unwrap());
    let q = classify_projection(&diag_map(&j, &[1.0, 0.0]), cfg, &[]).unwrap();
    let er = classify_projection(&e, cfg, &[Element::level1(xl)]).unwrap();
    let h = &er.hints[0];
    let witness_ok = h.image_norm < h.norm - 1e-8;
    Outcome::new(
        values_ok && p.left_m == Decision::Yes && q.left_m == Decision::Yes && er.left_m == Decision::No && witness_ok,
        format!(
            "||x_2|| = {norm:.12} (sqrt 5 = {:.12}), ||nu_E(x_2)|| = {img:.12} (sqrt 4.5 = {:.12}); P {:?}, Q {:?}, E {:?}",
            5f64.sqrt(),
            4.5f64.sqrt(),
            p.left_m,
            q.left_m,
            er.left_m
        ),
    )
}

fn criterion_2(cfg: &Config) -> Outcome {
    let x = wedge_space();
    let f = classify_projection(&diag_map(&x, &[1.0, 0.0, 1.0]), cfg, &[]).unwrap();
    let qcfg = Config { oracle_tol: 1e-4, ..cfg.clone() };
    let q = classify_quotient_projection(&diag_map(&x, &[1.0, 0.0, 0.0]), &[re(&[0.0, 0.0, 1.0])], &qcfg).unwrap();
    let worst = q.criteria.iter().map(|c| c.upper).fold(0.0, f64::max);
    Outcome::new(
        f.left_m == Decision::No && q.left_m == Decision::Yes && worst <= 1.0 + 1e-4,
        format!("lift F {:?}; quotient summand {:?} (max criterion upper {worst:.8})", f.left_m, q.left_m),
    )
}

fn criterion_3(lab: &Lab) -> Outcome {
    // Al(C_n) = M_n, Al(R_n) = C, Al(l_inf_n) = l_inf_n, Al(M_2) = M_2 by left multiplication.
    let cases: [(&str, &StarAlgebraPresentation, usize, Vec<usize>); 4] = [
        ("C_3", &lab.c3, 9, vec![3]),
        ("R_3", &lab.r3, 1, vec![1]),
        ("l_inf_3", &lab.l3, 3, vec![1, 1, 1]),
        ("M_2", &lab.m2, 4, vec![2]),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, pres, dim, ranks) in cases {
        let mut got = pres.block_ranks();
        got.sort_unstable();
        let good = pres.dim() == dim && got == ranks && pres.defect() <= 1e-6;
        ok &= good;
        parts.push(format!("{name}: dim {} ranks {:?} defect {:.1e}", pres.dim(), got, pres.defect()));
    }
    Outcome::new(ok, parts.join("; "))
}

fn criterion_4(cfg: &Config) -> Outcome {
    let m2 = standard(StandardKind::Full(2, 2));
    let mut transpose = CMatrix::zeros(4, 4);
    for i in 0..2 {
        for j in 0..2 {
            transpose[(j * 2 + i, i * 2 + j)] = c(1.0, 0.0);
        }
    }
    let tc = map_cb_norm(&SpaceMap::endo(m2.clone(), transpose).unwrap(), cfg).unwrap();
    let ic = map_cb_norm(&SpaceMap::identity(m2), cfg).unwrap();
    let t_ok = tc.lower >= 2.0 - 1e-4 && tc.upper_value() <= 2.0 + 1e-4;
    let i_ok = (ic.lower - 1.0).abs() <= 1e-6 && (ic.upper_value() - 1.0).abs() <= 1e-6;
    let shapes = [((2, 2), (2, 2)), ((1, 2), (2, 1)), ((2, 1), (2, 2)), ((2, 2), (1, 3)), ((3, 1), (1, 2))];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xcb4);
    let mut worst = 0.0f64;
    for k in 0..50 {
        let ((p, q), (r, s)) = shapes[k % shapes.len()];
        let dom = standard(StandardKind::Full(p, q));
        let cod = standard(StandardKind::Full(r, s));
        let a = CMatrix::random_gaussian(r * s, p * q, &mut rng);
        let m = SpaceMap::new(dom, cod, a).unwrap();
        let cert = cb_norm_bounds(&MapProblem::from_map(&m), cfg, &[]).unwrap();
        worst = worst.max(cert.gap().abs());
    }
    Outcome::new(
        t_ok && i_ok && worst <= 1e-5,
        format!(
            "transpose [{:.8}, {:.8}], identity [{:.8}, {:.8}], worst random gap {worst:.2e}",
            tc.lower,
            tc.upper_value(),
            ic.lower,
            ic.upper_value()
        ),
    )
}

fn criterion_5(lab: &Lab, cfg: &Config) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x1a3);
    let mut violations = 0;
    let mut count = 0;
    let mut worst = f64::NEG_INFINITY;
    for (_, pres) in lab.five() {
        for _ in 0..20 {
            let t = pres.map_from_coords(&pres.random_coords(&mut rng)).unwrap();
            let mn = multiplier_norm(&t, cfg).unwrap();
            let cb = map_cb_norm(&t, cfg).unwrap();
            let excess = cb.lower - mn.upper;
            worst = worst.max(excess);
            if excess > 1e-6 {
                violations += 1;
            }
            count += 1;
        }
    }
    Outcome::new(
        violations == 0 && count == 100,
        format!("{count} multipliers, {violations} violations, max(cb lower - mult upper) = {worst:.2e}"),
    )
}

fn criterion_6(lab: &Lab, cfg: &Config) -> Outcome {
    let x = lab.m2.space().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x1a6);
    let mut rank_failures = 0;
    let mut iter_failures = 0;
    let mut unpredicted = 0;
    let mut worst = 0.0f64;
    for k in 0..50 {
        let u = rank_one(&unit_vector(2, &mut rng));
        let w = rank_one(&unit_vector(2, &mut rng));
        let (a, b) = match k % 5 {
            0 => (u, w),
            1 => (u.clone(), u),
            2 => (u.clone(), &CMatrix::identity(2) - &u),
            3 => (u, CMatrix::identity(2)),
            _ => (CMatrix::zeros(2, 2), u),
        };
        let p = SpaceMap::left_mult(x.clone(), &a).unwrap();
        let q = SpaceMap::left_mult(x.clone(), &b).unwrap();
        let j = lattice_join(&p, &q, &lab.m2, cfg).unwrap();
        let m = lattice_meet(&p, &q, &lab.m2, cfg).unwrap();
        let (pm, qm) = (p.matrix(), q.matrix());
        let sum = CMatrix::hstack(&[pm, qm]);
        let inter = rank_of(pm) + rank_of(qm) - rank_of(&sum);
        let join_ok = same_columns(j.projection.matrix(), &sum);
        let meet_ok = rank_of(m.projection.matrix()) == inter
            && contains_columns(pm, m.projection.matrix())
            && contains_columns(qm, m.projection.matrix());
        if !(join_ok && meet_ok && j.spatial_ok && m.spatial_ok) {
            rank_failures += 1;
        }
        let dist = iterative_join_distance(&p, &q, 64, &lab.m2).unwrap();
        worst = worst.max(dist);
        if dist > 1e-6 {
            iter_failures += 1;
            let predicted = eig2(&(&a + &b))
                .iter()
                .filter(|&&l| l > 1e-12)
                .map(|&l| (l.powf(1.0 / 64.0) - 1.0).abs())
                .fold(0.0, f64::max);
            if (dist - predicted).abs() > 1e-9 {
                unpredicted += 1;
            }
        }
    }
    let mut o = Outcome::new(
        rank_failures == 0 && iter_failures == 0,
        format!(
            "50 pairs: {rank_failures} rank-equality failures; (P+Q)^(1/64) within 1e-6 of the join on {}/50 \
             (worst {worst:.3e}; {unpredicted} failures off the closed-form spectrum)",
            50 - iter_failures
        ),
    );
    o.predicted_failure = rank_failures == 0 && unpredicted == 0;
    o
}

fn criterion_7(lab: &Lab, cfg: &Config) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x1a7);
    let mut bad = 0;
    let mut worst = 0.0f64;
    let mut invertible = 0;
    for (_, pres) in lab.five() {
        for k in 0..20 {
            let mut r = pres.rep_matrix(&pres.random_coords(&mut rng));
            if k % 2 == 1 {
                if let Some(e) = random_projection_rep(pres, &mut rng) {
                    r = r.matmul(&e);
                }
            }
            let t = pres.map_of_rep(&r).unwrap();
            let rec = polar_decompose(&t, pres, cfg).unwrap();
            let (tm, wm, am) = (t.matrix(), rec.w.matrix(), rec.abs.matrix());
            let ts = pres.star(&t).unwrap();
            let ws = pres.star(&rec.w).unwrap();
            let identities = same_columns(&tm.adjoint(), &am.adjoint())
                && same_columns(wm, tm)
                && same_columns(&wm.adjoint(), &tm.adjoint())
                && same_columns(ws.matrix(), ts.matrix());
            let inv = rank_of(tm) == tm.cols();
            if inv {
                invertible += 1;
            }
            worst = worst.max(rec.residual);
            if rec.residual > 1e-8 || !identities || !rec.identities_hold() || (inv && !rec.w_unitary) {
                bad += 1;
            }
        }
    }
    Outcome::new(
        bad == 0,
        format!("100 elements ({invertible} invertible): {bad} failures, worst residual {worst:.2e}"),
    )
}

fn criterion_8(lab: &Lab, cfg: &Config) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x1a8);
    let mut total = 0;
    let mut disagreements = 0;
    let mut inconclusive = 0;
    let mut constructed_missed = 0;
    let mut perturbed_accepted = 0;
    for (_, pres) in lab.five() {
        let x = pres.space().clone();
        let d = x.dim();
        let mut made = 0;
        while made < 40 {
            let Some(e) = random_projection_rep(pres, &mut rng) else { continue };
            let p = pres.map_of_rep(&e).unwrap();
            let constructed = made % 2 == 0;
            let p = if constructed {
                p
            } else {
                let g = CMatrix::random_gaussian(d, d, &mut rng);
                let s = &CMatrix::identity(d) + &g.scale_real(0.4);
                let Ok(si) = mstruct::linalg::inverse(&s) else { continue };
                SpaceMap::endo(x.clone(), s.matmul(p.matrix()).matmul(&si)).unwrap()
            };
            made += 1;
            total += 1;
            let rec = match classify_projection(&p, cfg, &[]) {
                Ok(r) => r,
                Err(Error::Inconsistent(_)) => {
                    disagreements += 1;
                    continue;
                }
                Err(e) => panic!("classification failed: {e}"),
            };
            let ds: Vec<Decision> = ["tau_contractive", "nu_isometric", "nu_mu_contractive"]
                .iter()
                .map(|n| rec.criterion(n).expect("criterion present").decision)
                .collect();
            if ds.contains(&Decision::Yes) && ds.contains(&Decision::No) {
                disagreements += 1;
            }
            if ds.contains(&Decision::Inconclusive) {
                inconclusive += 1;
            }
            if constructed && rec.left_m != Decision::Yes {
                constructed_missed += 1;
            }
            if !constructed && rec.left_m == Decision::Yes {
                perturbed_accepted += 1;
            }
        }
    }
    Outcome::new(
        disagreements == 0 && constructed_missed == 0 && perturbed_accepted == 0,
        format!(
            "{total} idempotents: {disagreements} disagreements, {inconclusive} inconclusive, \
             {constructed_missed} constructed not accepted, {perturbed_accepted} perturbed accepted"
        ),
    )
}

fn case_outcome(suite: &SuiteReport, id: &str) -> (bool, String) {
    let case = suite.cases.iter().find(|c| c.id == id).expect("registered case");
    let failing: Vec<&str> = case.assertions.iter().filter(|a| !a.passed).map(|a| a.description.as_str()).collect();
    (
        case.passed,
        format!("{id}: {}/{} assertions", case.assertions.len() - failing.len(), case.assertions.len()),
    )
}

fn criterion_9(suite: &SuiteReport) -> Outcome {
    let (ok, detail) = case_outcome(suite, "COLDETECT");
    Outcome::new(ok, detail)
}

fn criterion_10(cfg: &Config, suite: &SuiteReport) -> Outcome {
    let c2 = standard(StandardKind::Column(2));
    let r2 = standard(StandardKind::Row(2));
    let hs = haagerup_space(c2, r2, cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x1aa);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let coords = CMatrix::random_gaussian(4, 1, &mut rng).into_data();
        // e_a (x) e_b is the matrix unit E_ab, so the norm is that of [c_ab]
        let m = CMatrix::from_fn(2, 2, |a, b| coords[a * 2 + b]);
        let exact = svd(&m).s[0];
        let b = hs.norm_bounds(1, &coords).unwrap();
        worst = worst.max((b.lb - exact).abs()).max((b.ub - exact).abs());
    }
    let (ok, detail) = case_outcome(suite, "HAAG-IVH3");
    Outcome::new(ok && worst <= 1e-4, format!("20 elements, worst error {worst:.2e}; {detail}"))
}

fn criterion_11(suite: &SuiteReport) -> Outcome {
    let failed: Vec<&str> = suite.cases.iter().filter(|c| !c.passed).map(|c| c.id.as_str()).collect();
    let mut o = Outcome::new(
        suite.all_passed(),
        format!("{}/{} cases pass; failing: {:?}", suite.passed, suite.cases.len(), failed),
    );
    // The only admissible failures are the n = 64 iterative-join assertions.
    o.predicted_failure = suite.cases.iter().all(|c| {
        c.passed
            || (c.id == "LATTICE"
                && c.error.is_none()
                && c.assertions.iter().filter(|a| !a.passed).all(|a| a.description.ends_with("P v Q||")))
    });
    o
}

fn main() {
    mstruct::par::init_threads_from_env();
    let cfg = Config::default();
    let start = Instant::now();
    let lab = Lab::build(&cfg);
    let suite = run_all(&cfg);
    let mut results: Vec<(usize, Outcome, f64)> = Vec::new();
    let mut timed = |n: usize, f: &dyn Fn() -> Outcome| {
        let t = Instant::now();
        let o = f();
        let secs = t.elapsed().as_secs_f64();
        println!("criterion {n:>2}: {} ({secs:.1}s) {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
        results.push((n, o, secs));
    };
    timed(1, &|| criterion_1(&cfg));
    timed(2, &|| criterion_2(&cfg));
    timed(3, &|| criterion_3(&lab));
    timed(4, &|| criterion_4(&cfg));
    timed(5, &|| criterion_5(&lab, &cfg));
    timed(6, &|| criterion_6(&lab, &cfg));
    timed(7, &|| criterion_7(&lab, &cfg));
    timed(8, &|| criterion_8(&lab, &cfg));
    timed(9, &|| criterion_9(&suite));
    timed(10, &|| criterion_10(&cfg, &suite));
    timed(11, &|| criterion_11(&suite));
    let passed = results.iter().filter(|r| r.1.passed).count();
    println!("{passed}/{} criteria pass in {:.1}s", results.len(), start.elapsed().as_secs_f64());
    let unexpected: Vec<usize> = results
        .iter()
        .filter(|(_, o, _)| !o.passed && !o.predicted_failure)
        .map(|(n, _, _)| *n)
        .collect();
    assert!(unexpected.is_empty(), "criteria failed unexpectedly: {unexpected:?}");
}
