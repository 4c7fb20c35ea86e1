//! Concrete operator spaces, their matrix-level elements, linear maps in
//! coordinates, and oracle-backed spaces (quotients).
//!
//! A space is a subspace of `M_{p,q}` given by a basis. Elements at level `n`
//! are `n x n` arrays of coordinate vectors; coordinates are stored flat with
//! index `(i * n + j) * d + k`.

use std::sync::{Arc, OnceLock};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, op_norm_unchecked, orthonormalize_columns, pinv, svd, CMatrix, C64, ONE, ZERO};
use crate::sdp::{hermitian_entries, solve_with, SdpOptions, SdpProblem, SdpStatus};

const INDEPENDENCE_TOL: f64 = 1e-10;
const MEMBERSHIP_TOL: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct OpSpace {
    label: String,
    p: usize,
    q: usize,
    basis: Vec<CMatrix>,
    shilov_flag: bool,
    /// `d x pq` left inverse of the stacked basis.
    coord_map: CMatrix,
}

impl PartialEq for OpSpace {
    fn eq(&self, other: &Self) -> bool {
        self.p == other.p
            && self.q == other.q
            && self.basis == other.basis
            && self.shilov_flag == other.shilov_flag
            && self.label == other.label
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StandardKind {
    Column(usize),
    Row(usize),
    Diag(usize),
    Full(usize, usize),
    UpperTriangular2,
}

impl OpSpace {
    pub fn new(basis: Vec<CMatrix>, label: impl Into<String>, shilov_flag: bool) -> Result<Self> {
        let first = basis
            .first()
            .ok_or_else(|| Error::input("basis must be nonempty"))?;
        let (p, q) = first.shape();
        if p == 0 || q == 0 {
            return Err(Error::input("ambient dimensions must be positive"));
        }
        for (k, b) in basis.iter().enumerate() {
            if b.shape() != (p, q) {
                return Err(Error::input(format!(
                    "basis element {k} has shape {:?}, expected {:?}",
                    b.shape(),
                    (p, q)
                )));
            }
            b.ensure_finite()?;
        }
        let d = basis.len();
        let stacked = CMatrix::from_fn(p * q, d, |i, k| basis[k].data()[i]);
        let dec = svd(&stacked);
        let smin = if d > p * q { 0.0 } else { *dec.s.last().unwrap_or(&0.0) };
        if smin <= INDEPENDENCE_TOL {
            return Err(Error::input(format!(
                "basis is linearly dependent (smallest singular value {smin:.3e})"
            )));
        }
        let coord_map = pinv(&stacked, 0.0);
        Ok(Self {
            label: label.into(),
            p,
            q,
            basis,
            shilov_flag,
            coord_map,
        })
    }

    pub fn standard(kind: StandardKind) -> Result<Self> {
        let bad = || Error::input("standard space sizes must be positive");
        match kind {
            StandardKind::Column(n) => {
                if n == 0 {
                    return Err(bad());
                }
                let b = (0..n).map(|i| CMatrix::unit(n, 1, i, 0)).collect();
                Self::new(b, format!("C_{n}"), true)
            }
            StandardKind::Row(n) => {
                if n == 0 {
                    return Err(bad());
                }
                let b = (0..n).map(|i| CMatrix::unit(1, n, 0, i)).collect();
                Self::new(b, format!("R_{n}"), true)
            }
            StandardKind::Diag(n) => {
                if n == 0 {
                    return Err(bad());
                }
                let b = (0..n).map(|i| CMatrix::unit(n, n, i, i)).collect();
                Self::new(b, format!("l_inf_{n}"), true)
            }
            StandardKind::Full(p, q) => {
                if p == 0 || q == 0 {
                    return Err(bad());
                }
                let mut b = Vec::new();
                for i in 0..p {
                    for j in 0..q {
                        b.push(CMatrix::unit(p, q, i, j));
                    }
                }
                Self::new(b, format!("M_{p}x{q}"), true)
            }
            StandardKind::UpperTriangular2 => {
                let b = vec![
                    CMatrix::unit(2, 2, 0, 0),
                    CMatrix::unit(2, 2, 0, 1),
                    CMatrix::unit(2, 2, 1, 1),
                ];
                Self::new(b, "T_2", true)
            }
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[CMatrix] {
        &self.basis
    }

    pub fn shilov_flag(&self) -> bool {
        self.shilov_flag
    }

    /// True when the space is all of `M_{p,q}`.
    pub fn is_full(&self) -> bool {
        self.dim() == self.p * self.q
    }

    pub fn coord_map(&self) -> &CMatrix {
        &self.coord_map
    }

    /// Level-1 realization `sum_k c_k b_k`.
    pub fn realize1(&self, coords: &[C64]) -> CMatrix {
        let mut out = CMatrix::zeros(self.p, self.q);
        for (ck, b) in coords.iter().zip(&self.basis) {
            if *ck != ZERO {
                out.axpy(*ck, b);
            }
        }
        out
    }

    /// Level-n realization as an `np x nq` block matrix.
    pub fn realize(&self, n: usize, coords: &[C64]) -> CMatrix {
        let d = self.dim();
        assert_eq!(coords.len(), n * n * d, "coordinate length mismatch");
        let mut out = CMatrix::zeros(n * self.p, n * self.q);
        for i in 0..n {
            for j in 0..n {
                let blk = self.realize1(&coords[(i * n + j) * d..(i * n + j + 1) * d]);
                out.set_block(i * self.p, j * self.q, &blk);
            }
        }
        out
    }

    pub fn realize_element(&self, x: &Element) -> CMatrix {
        self.realize(x.n, &x.coords)
    }

    /// Least-squares coordinates and residual of an ambient matrix.
    pub fn project_coords(&self, m: &CMatrix) -> (Vec<C64>, f64) {
        let coords = self.coord_map.matvec(m.data());
        let resid = (&self.realize1(&coords) - m).frob_norm();
        (coords, resid)
    }

    pub fn coords_of(&self, m: &CMatrix) -> Result<Vec<C64>> {
        if m.shape() != (self.p, self.q) {
            return Err(Error::input("matrix shape differs from the ambient space"));
        }
        let (coords, resid) = self.project_coords(m);
        if resid > MEMBERSHIP_TOL * m.frob_norm().max(1.0) {
            return Err(Error::input(format!(
                "matrix is not in the space (residual {resid:.3e})"
            )));
        }
        Ok(coords)
    }

    /// Coordinates of a level-n block matrix.
    pub fn coords_of_level(&self, n: usize, m: &CMatrix) -> Result<Vec<C64>> {
        let mut out = Vec::with_capacity(n * n * self.dim());
        for i in 0..n {
            for j in 0..n {
                let blk = m.submatrix(i * self.p, j * self.q, self.p, self.q);
                out.extend(self.coords_of(&blk)?);
            }
        }
        Ok(out)
    }

    pub fn contains(&self, m: &CMatrix, tol: f64) -> bool {
        m.shape() == (self.p, self.q) && self.project_coords(m).1 <= tol * m.frob_norm().max(1.0)
    }

    pub fn element_norm(&self, x: &Element) -> f64 {
        op_norm_unchecked(&self.realize_element(x))
    }

    pub fn norm(&self, n: usize, coords: &[C64]) -> f64 {
        op_norm_unchecked(&self.realize(n, coords))
    }

    pub fn opposite(&self) -> Self {
        let basis = self.basis.iter().map(|b| b.transpose()).collect();
        let label = match self.label.strip_suffix("^op") {
            Some(s) => s.to_string(),
            None => format!("{}^op", self.label),
        };
        Self::new(basis, label, self.shilov_flag).expect("transpose keeps independence")
    }

    /// Subspace spanned by the given coordinate vectors, keeping the embedding.
    pub fn subspace(&self, spans: &[Vec<C64>], label: impl Into<String>) -> Result<Self> {
        for s in spans {
            if s.len() != self.dim() {
                return Err(Error::input("span vector has wrong length"));
            }
        }
        let basis = spans.iter().map(|s| self.realize1(s)).collect();
        Self::new(basis, label, false)
    }

    /// Block-diagonal embedding of `X ⊕ Y`; coordinates are `X` then `Y`.
    pub fn direct_sum(&self, other: &Self) -> Self {
        let (p, q) = (self.p + other.p, self.q + other.q);
        let mut basis = Vec::with_capacity(self.dim() + other.dim());
        for b in &self.basis {
            let mut m = CMatrix::zeros(p, q);
            m.set_block(0, 0, b);
            basis.push(m);
        }
        for b in &other.basis {
            let mut m = CMatrix::zeros(p, q);
            m.set_block(self.p, self.q, b);
            basis.push(m);
        }
        Self::new(
            basis,
            format!("{}+{}", self.label, other.label),
            self.shilov_flag && other.shilov_flag,
        )
        .expect("direct sum of independent bases")
    }

    /// `C_n(X)`: `n` copies stacked vertically; coordinate index `slot * d + k`.
    pub fn column_over(&self, n: usize) -> Self {
        let mut basis = Vec::with_capacity(n * self.dim());
        for s in 0..n {
            for b in &self.basis {
                let mut m = CMatrix::zeros(n * self.p, self.q);
                m.set_block(s * self.p, 0, b);
                basis.push(m);
            }
        }
        Self::new(basis, format!("C_{n}({})", self.label), self.shilov_flag)
            .expect("stacked copies stay independent")
    }

    pub fn random_coords<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<C64> {
        let g = CMatrix::random_gaussian(n * n * self.dim(), 1, rng);
        g.into_data()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&SpaceFile::from(self)).expect("serializable")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let v: serde_json::Value =
            serde_json::from_str(s).map_err(|e| Error::schema("", e.to_string()))?;
        SpaceFile::from_value(&v)?.into_space()
    }
}

/// On-disk form of an operator space (schema `opspace/v1`).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceFile {
    pub schema: String,
    pub label: String,
    pub p: usize,
    pub q: usize,
    /// Each basis matrix flattened row-major as `[re, im]` pairs.
    pub basis: Vec<Vec<[f64; 2]>>,
    pub shilov_flag: bool,
}

pub const SPACE_SCHEMA: &str = "opspace/v1";

impl From<&OpSpace> for SpaceFile {
    fn from(x: &OpSpace) -> Self {
        Self {
            schema: SPACE_SCHEMA.into(),
            label: x.label.clone(),
            p: x.p,
            q: x.q,
            basis: x
                .basis
                .iter()
                .map(|b| b.data().iter().map(|z| [z.re, z.im]).collect())
                .collect(),
            shilov_flag: x.shilov_flag,
        }
    }
}

pub(crate) fn require<'a>(v: &'a serde_json::Value, ptr: &str, key: &str) -> Result<&'a serde_json::Value> {
    v.get(key)
        .ok_or_else(|| Error::schema(format!("{ptr}/{key}"), "missing field"))
}

pub(crate) fn parse_pairs(v: &serde_json::Value, ptr: &str) -> Result<Vec<C64>> {
    let arr = v
        .as_array()
        .ok_or_else(|| Error::schema(ptr, "expected an array of [re, im] pairs"))?;
    arr.iter()
        .enumerate()
        .map(|(i, e)| {
            let pair = e
                .as_array()
                .filter(|a| a.len() == 2)
                .ok_or_else(|| Error::schema(format!("{ptr}/{i}"), "expected [re, im]"))?;
            let re = pair[0]
                .as_f64()
                .ok_or_else(|| Error::schema(format!("{ptr}/{i}/0"), "expected a number"))?;
            let im = pair[1]
                .as_f64()
                .ok_or_else(|| Error::schema(format!("{ptr}/{i}/1"), "expected a number"))?;
            Ok(c(re, im))
        })
        .collect()
}

impl SpaceFile {
    /// Validates a JSON value field by field so errors carry a JSON pointer.
    pub fn from_value(v: &serde_json::Value) -> Result<Self> {
        let obj = v
            .as_object()
            .ok_or_else(|| Error::schema("", "expected an object"))?;
        for k in obj.keys() {
            if !["schema", "label", "p", "q", "basis", "shilov_flag"].contains(&k.as_str()) {
                return Err(Error::schema(format!("/{k}"), "unknown field"));
            }
        }
        let schema = require(v, "", "schema")?
            .as_str()
            .ok_or_else(|| Error::schema("/schema", "expected a string"))?;
        if schema != SPACE_SCHEMA {
            return Err(Error::schema("/schema", format!("expected {SPACE_SCHEMA}")));
        }
        let label = require(v, "", "label")?
            .as_str()
            .ok_or_else(|| Error::schema("/label", "expected a string"))?
            .to_string();
        let dimf = |key: &str| -> Result<usize> {
            require(v, "", key)?
                .as_u64()
                .filter(|&n| n >= 1)
                .map(|n| n as usize)
                .ok_or_else(|| Error::schema(format!("/{key}"), "expected a positive integer"))
        };
        let p = dimf("p")?;
        let q = dimf("q")?;
        let shilov_flag = require(v, "", "shilov_flag")?
            .as_bool()
            .ok_or_else(|| Error::schema("/shilov_flag", "expected a boolean"))?;
        let barr = require(v, "", "basis")?
            .as_array()
            .ok_or_else(|| Error::schema("/basis", "expected an array"))?;
        if barr.is_empty() {
            return Err(Error::schema("/basis", "basis must be nonempty"));
        }
        let mut basis = Vec::new();
        for (k, b) in barr.iter().enumerate() {
            let ptr = format!("/basis/{k}");
            let entries = parse_pairs(b, &ptr)?;
            if entries.len() != p * q {
                return Err(Error::schema(ptr, format!("expected {} entries", p * q)));
            }
            basis.push(entries.iter().map(|z| [z.re, z.im]).collect());
        }
        Ok(Self {
            schema: schema.into(),
            label,
            p,
            q,
            basis,
            shilov_flag,
        })
    }

    pub fn into_space(self) -> Result<OpSpace> {
        let basis = self
            .basis
            .iter()
            .map(|b| {
                CMatrix::from_vec(self.p, self.q, b.iter().map(|z| c(z[0], z[1])).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        OpSpace::new(basis, self.label, self.shilov_flag)
    }
}

/// A matrix-level element of a space, held in coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Element {
    pub n: usize,
    pub coords: Vec<C64>,
}

impl Element {
    pub fn new(n: usize, coords: Vec<C64>) -> Self {
        Self { n, coords }
    }

    pub fn level1(coords: Vec<C64>) -> Self {
        Self { n: 1, coords }
    }

    pub fn zero(n: usize, d: usize) -> Self {
        Self {
            n,
            coords: vec![ZERO; n * n * d],
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            n: self.n,
            coords: self.coords.iter().map(|z| z * s).collect(),
        }
    }
}

/// Norm bounds returned by an oracle; concrete spaces return `lb == ub`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lb: f64,
    pub ub: f64,
}

impl Bounds {
    pub fn exact(v: f64) -> Self {
        Self { lb: v, ub: v }
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lb + self.ub)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Concrete,
    Quotient,
    Dual,
    Haagerup,
}

/// Matrix-normed space presented only through a per-level norm evaluator.
pub trait NormOracle: Send + Sync {
    fn dim(&self) -> usize;
    fn level_cap(&self) -> usize;
    fn provenance(&self) -> Provenance;
    fn norm_bounds(&self, n: usize, coords: &[C64]) -> Result<Bounds>;

    /// Bounds plus an ascent direction for the norm in coordinates, when
    /// the oracle can supply one.
    fn norm_with_direction(&self, n: usize, coords: &[C64]) -> Result<(Bounds, Option<Vec<C64>>)> {
        Ok((self.norm_bounds(n, coords)?, None))
    }
}

/// Ascent direction of `||realize(coords)||` in coordinates: with top singular
/// pair `(u, v)`, the derivative along `dc` is `Re sum dc_k conj(g_k)`.
pub fn norm_direction(space: &OpSpace, n: usize, u: &[C64], v: &[C64]) -> Vec<C64> {
    let (p, q, d) = (space.p, space.q, space.dim());
    let mut g = vec![ZERO; n * n * d];
    for i in 0..n {
        for j in 0..n {
            for (k, b) in space.basis.iter().enumerate() {
                let mut s = ZERO;
                for a in 0..p {
                    let ua = u[i * p + a].conj();
                    if ua == ZERO {
                        continue;
                    }
                    for bb in 0..q {
                        s += ua * b[(a, bb)] * v[j * q + bb];
                    }
                }
                g[(i * n + j) * d + k] = s.conj();
            }
        }
    }
    g
}

impl NormOracle for OpSpace {
    fn dim(&self) -> usize {
        self.basis.len()
    }

    fn level_cap(&self) -> usize {
        self.p + self.q
    }

    fn provenance(&self) -> Provenance {
        Provenance::Concrete
    }

    fn norm_bounds(&self, n: usize, coords: &[C64]) -> Result<Bounds> {
        Ok(Bounds::exact(self.norm(n, coords)))
    }

    fn norm_with_direction(&self, n: usize, coords: &[C64]) -> Result<(Bounds, Option<Vec<C64>>)> {
        let m = self.realize(n, coords);
        let (s, u, v) = crate::linalg::top_singular(&m);
        Ok((Bounds::exact(s), Some(norm_direction(self, n, &u, &v))))
    }
}

/// Linear map between concrete spaces in basis coordinates.
#[derive(Clone, Debug)]
pub struct SpaceMap {
    domain: Arc<OpSpace>,
    codomain: Arc<OpSpace>,
    matrix: CMatrix,
    mult_norm: Arc<OnceLock<(f64, f64)>>,
}

impl PartialEq for SpaceMap {
    fn eq(&self, other: &Self) -> bool {
        self.domain == other.domain && self.codomain == other.codomain && self.matrix == other.matrix
    }
}

impl SpaceMap {
    pub fn new(domain: Arc<OpSpace>, codomain: Arc<OpSpace>, matrix: CMatrix) -> Result<Self> {
        if matrix.shape() != (codomain.dim(), domain.dim()) {
            return Err(Error::input(format!(
                "map matrix is {:?}, expected {}x{}",
                matrix.shape(),
                codomain.dim(),
                domain.dim()
            )));
        }
        matrix.ensure_finite()?;
        Ok(Self {
            domain,
            codomain,
            matrix,
            mult_norm: Arc::new(OnceLock::new()),
        })
    }

    pub fn endo(space: Arc<OpSpace>, matrix: CMatrix) -> Result<Self> {
        Self::new(space.clone(), space, matrix)
    }

    pub fn identity(space: Arc<OpSpace>) -> Self {
        let d = space.dim();
        Self::endo(space, CMatrix::identity(d)).expect("identity shape")
    }

    /// Builds the map from its action on realized basis elements.
    pub fn from_fn(
        domain: Arc<OpSpace>,
        codomain: Arc<OpSpace>,
        f: impl Fn(&CMatrix) -> CMatrix,
    ) -> Result<Self> {
        let d = domain.dim();
        let e = codomain.dim();
        let mut m = CMatrix::zeros(e, d);
        for (k, b) in domain.basis().iter().enumerate() {
            let img = codomain.coords_of(&f(b)).map_err(|err| {
                Error::input(format!("image of basis element {k} leaves the codomain: {err}"))
            })?;
            for (r, z) in img.into_iter().enumerate() {
                m[(r, k)] = z;
            }
        }
        Self::new(domain, codomain, m)
    }

    /// Left multiplication `x -> a x` as an endomorphism.
    pub fn left_mult(space: Arc<OpSpace>, a: &CMatrix) -> Result<Self> {
        Self::from_fn(space.clone(), space, |x| a.matmul(x))
    }

    pub fn right_mult(space: Arc<OpSpace>, a: &CMatrix) -> Result<Self> {
        Self::from_fn(space.clone(), space, |x| x.matmul(a))
    }

    pub fn domain(&self) -> &Arc<OpSpace> {
        &self.domain
    }

    pub fn codomain(&self) -> &Arc<OpSpace> {
        &self.codomain
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn is_endo(&self) -> bool {
        Arc::ptr_eq(&self.domain, &self.codomain) || self.domain == self.codomain
    }

    pub fn with_matrix(&self, matrix: CMatrix) -> Result<Self> {
        Self::new(self.domain.clone(), self.codomain.clone(), matrix)
    }

    pub fn apply_coords(&self, n: usize, coords: &[C64]) -> Vec<C64> {
        let d = self.domain.dim();
        let mut out = Vec::with_capacity(n * n * self.codomain.dim());
        for blk in 0..n * n {
            out.extend(self.matrix.matvec(&coords[blk * d..(blk + 1) * d]));
        }
        out
    }

    pub fn apply(&self, x: &Element) -> Element {
        Element::new(x.n, self.apply_coords(x.n, &x.coords))
    }

    pub fn compose(&self, inner: &SpaceMap) -> Result<SpaceMap> {
        if inner.codomain.dim() != self.domain.dim() {
            return Err(Error::input("composition dimension mismatch"));
        }
        SpaceMap::new(
            inner.domain.clone(),
            self.codomain.clone(),
            self.matrix.matmul(&inner.matrix),
        )
    }

    pub fn add(&self, other: &SpaceMap) -> Result<SpaceMap> {
        if self.matrix.shape() != other.matrix.shape() {
            return Err(Error::input("sum of maps with different shapes"));
        }
        self.with_matrix(&self.matrix + &other.matrix)
    }

    pub fn scale(&self, s: C64) -> SpaceMap {
        self.with_matrix(self.matrix.scale(s)).expect("same shape")
    }

    /// Same coordinates, on the opposite spaces.
    pub fn opposite(&self) -> SpaceMap {
        let dom = Arc::new(self.domain.opposite());
        let cod = if self.is_endo() {
            dom.clone()
        } else {
            Arc::new(self.codomain.opposite())
        };
        SpaceMap::new(dom, cod, self.matrix.clone()).expect("same shape")
    }

    /// Idempotence residual `||P^2 - P||` in coordinates.
    pub fn idempotent_defect(&self) -> f64 {
        (&self.matrix.matmul(&self.matrix) - &self.matrix).max_abs()
    }

    /// Cached multiplier-norm interval, written at most once.
    pub fn cached_multiplier_norm(&self) -> Option<(f64, f64)> {
        self.mult_norm.get().copied()
    }

    pub fn cache_multiplier_norm(&self, interval: (f64, f64)) {
        let _ = self.mult_norm.set(interval);
    }

    pub fn to_file(&self) -> MapFile {
        MapFile {
            schema: MAP_SCHEMA.into(),
            domain: self.domain.label().into(),
            codomain: self.codomain.label().into(),
            rows: self.matrix.rows(),
            cols: self.matrix.cols(),
            matrix: self.matrix.data().iter().map(|z| [z.re, z.im]).collect(),
        }
    }
}

pub const MAP_SCHEMA: &str = "spacemap/v1";

/// On-disk form of a map (schema `spacemap/v1`), referencing spaces by label.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MapFile {
    pub schema: String,
    pub domain: String,
    pub codomain: String,
    pub rows: usize,
    pub cols: usize,
    pub matrix: Vec<[f64; 2]>,
}

impl MapFile {
    pub fn from_value(v: &serde_json::Value) -> Result<Self> {
        let schema = require(v, "", "schema")?
            .as_str()
            .ok_or_else(|| Error::schema("/schema", "expected a string"))?;
        if schema != MAP_SCHEMA {
            return Err(Error::schema("/schema", format!("expected {MAP_SCHEMA}")));
        }
        let s = |key: &str| -> Result<String> {
            Ok(require(v, "", key)?
                .as_str()
                .ok_or_else(|| Error::schema(format!("/{key}"), "expected a string"))?
                .to_string())
        };
        let u = |key: &str| -> Result<usize> {
            require(v, "", key)?
                .as_u64()
                .map(|n| n as usize)
                .ok_or_else(|| Error::schema(format!("/{key}"), "expected an integer"))
        };
        let rows = u("rows")?;
        let cols = u("cols")?;
        let entries = parse_pairs(require(v, "", "matrix")?, "/matrix")?;
        if entries.len() != rows * cols {
            return Err(Error::schema("/matrix", format!("expected {} entries", rows * cols)));
        }
        Ok(Self {
            schema: schema.into(),
            domain: s("domain")?,
            codomain: s("codomain")?,
            rows,
            cols,
            matrix: entries.iter().map(|z| [z.re, z.im]).collect(),
        })
    }

    pub fn into_map(self, domain: Arc<OpSpace>, codomain: Arc<OpSpace>) -> Result<SpaceMap> {
        let m = CMatrix::from_vec(
            self.rows,
            self.cols,
            self.matrix.iter().map(|z| c(z[0], z[1])).collect(),
        )?;
        SpaceMap::new(domain, codomain, m)
    }
}

/// `X / K` normed by the infimum over `K`-perturbations, evaluated by SDP.
#[derive(Clone, Debug)]
pub struct QuotientOracle {
    parent: Arc<OpSpace>,
    /// Orthonormal coordinates (in the parent) spanning `K`.
    kernel: Vec<Vec<C64>>,
    level_cap: usize,
    opts: SdpOptions,
}

impl QuotientOracle {
    pub fn new(parent: Arc<OpSpace>, kernel_spans: &[Vec<C64>], level_cap: usize) -> Result<Self> {
        let d = parent.dim();
        for s in kernel_spans {
            if s.len() != d {
                return Err(Error::input("kernel span has wrong length"));
            }
        }
        let kernel = if kernel_spans.is_empty() {
            Vec::new()
        } else {
            let m = CMatrix::from_fn(d, kernel_spans.len(), |i, j| kernel_spans[j][i]);
            let o = orthonormalize_columns(&m, 1e-10);
            (0..o.cols()).map(|j| o.col(j)).collect()
        };
        Ok(Self {
            parent,
            kernel,
            level_cap: level_cap.max(1),
            opts: SdpOptions::default(),
        })
    }

    pub fn parent(&self) -> &Arc<OpSpace> {
        &self.parent
    }

    pub fn kernel(&self) -> &[Vec<C64>] {
        &self.kernel
    }

    /// Solves `min_k ||x + k||` and returns bounds with the optimal `k`.
    pub fn solve(&self, n: usize, coords: &[C64]) -> Result<(Bounds, Vec<C64>)> {
        let d = self.parent.dim();
        let dk = self.kernel.len();
        if coords.len() != n * n * d {
            return Err(Error::input("coordinate length mismatch"));
        }
        let x = self.parent.realize(n, coords);
        if dk == 0 {
            return Ok((Bounds::exact(op_norm_unchecked(&x)), vec![ZERO; coords.len()]));
        }
        if dk == d {
            return Ok((Bounds::exact(0.0), coords.iter().map(|z| -z).collect()));
        }
        let (np, nq) = x.shape();
        let dimb = np + nq;
        let herm = |m: &CMatrix| {
            let mut h = CMatrix::zeros(dimb, dimb);
            h.set_block(0, np, m);
            h.set_block(np, 0, &m.adjoint());
            h
        };
        // maximise -t s.t. [[0, x+k], [(x+k)^*, 0]] + t I ⪰ 0, k free in M_n(K)
        let mut prob = SdpProblem::new(vec![dimb]);
        prob.objective = hermitian_entries(0, &herm(&x));
        prob.add_constraint(
            hermitian_entries(0, &CMatrix::identity(dimb).scale_real(-1.0)),
            -1.0,
        );
        let mut gens = Vec::new();
        for i in 0..n {
            for j in 0..n {
                for kv in &self.kernel {
                    let mut full = vec![ZERO; n * n * d];
                    full[(i * n + j) * d..(i * n + j + 1) * d].copy_from_slice(kv);
                    for phase in [ONE, c(0.0, 1.0)] {
                        let scaled: Vec<C64> = full.iter().map(|z| z * phase).collect();
                        let km = self.parent.realize(n, &scaled);
                        prob.add_constraint(hermitian_entries(0, &herm(&km).scale_real(-1.0)), 0.0);
                        gens.push(scaled);
                    }
                }
            }
        }
        let res = solve_with(&prob, &self.opts)?;
        if res.status != SdpStatus::Optimal && res.status != SdpStatus::MaxIterations {
            return Err(Error::Oracle(format!("quotient sdp ended with {:?}", res.status)));
        }
        let mut kstar = vec![ZERO; n * n * d];
        for (g, yi) in gens.iter().zip(&res.y[1..]) {
            for (a, b) in kstar.iter_mut().zip(g) {
                *a += b * *yi;
            }
        }
        let shifted: Vec<C64> = coords.iter().zip(&kstar).map(|(a, b)| a + b).collect();
        let ub = op_norm_unchecked(&self.parent.realize(n, &shifted));
        // primal value is -||x + K|| up to the certified gap
        let lb = (-res.primal_value - res.primal_infeas.abs() * (1.0 + ub)).clamp(0.0, ub);
        let lb = if res.status == SdpStatus::Optimal { lb } else { 0.0 };
        Ok((Bounds { lb, ub }, kstar))
    }
}

impl NormOracle for QuotientOracle {
    fn dim(&self) -> usize {
        self.parent.dim()
    }

    fn level_cap(&self) -> usize {
        self.level_cap
    }

    fn provenance(&self) -> Provenance {
        Provenance::Quotient
    }

    fn norm_bounds(&self, n: usize, coords: &[C64]) -> Result<Bounds> {
        Ok(self.solve(n, coords)?.0)
    }

    fn norm_with_direction(&self, n: usize, coords: &[C64]) -> Result<(Bounds, Option<Vec<C64>>)> {
        let (b, kstar) = self.solve(n, coords)?;
        let shifted: Vec<C64> = coords.iter().zip(&kstar).map(|(a, b)| a + b).collect();
        let m = self.parent.realize(n, &shifted);
        let (_, u, v) = crate::linalg::top_singular(&m);
        Ok((b, Some(norm_direction(&self.parent, n, &u, &v))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ex54() -> OpSpace {
        let a = CMatrix::from_real(&[&[1.0, 0.0], &[0.0, 0.0], &[0.0, 0.5], &[0.0, 0.0]]);
        let b = CMatrix::from_real(&[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 0.5], &[0.0, 0.0]]);
        let cc = CMatrix::from_real(&[&[0.0, 0.0], &[0.0, 0.0], &[0.0, 0.0], &[0.0, 1.0]]);
        OpSpace::new(vec![a, b, cc], "X", false).unwrap()
    }

    #[test]
    fn build_examples() {
        let c2 = OpSpace::standard(StandardKind::Column(2)).unwrap();
        assert_eq!((c2.p(), c2.q(), c2.dim()), (2, 1, 2));
        let l2 = OpSpace::standard(StandardKind::Diag(2)).unwrap();
        assert!(l2.shilov_flag());
        let m = CMatrix::unit(2, 2, 0, 0);
        let err = OpSpace::new(vec![m.clone(), m], "bad", false).unwrap_err();
        assert!(matches!(err, Error::Input(_)));
    }

    #[test]
    fn element_norm_examples() {
        let s2 = 2f64.sqrt();
        let c2 = OpSpace::standard(StandardKind::Column(2)).unwrap();
        assert!((c2.norm(1, &[ONE, ONE]) - s2).abs() < 1e-14);
        let r2 = OpSpace::standard(StandardKind::Row(2)).unwrap();
        assert!((r2.norm(1, &[ONE, ONE]) - s2).abs() < 1e-14);
        let x = ex54();
        let lam = 2.0;
        // x_lambda = [1 0; 1 0; 0 1; 0 lambda]: a = b = 1, c = lambda
        let v = x.norm(1, &[ONE, ONE, c(lam, 0.0)]);
        assert!((v - 5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn opposite_and_sums() {
        let c2 = OpSpace::standard(StandardKind::Column(2)).unwrap();
        let op = c2.opposite();
        let r2 = OpSpace::standard(StandardKind::Row(2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in 1..=3 {
            let co = c2.random_coords(n, &mut rng);
            assert!((op.norm(n, &co) - r2.norm(n, &co)).abs() < 1e-12);
        }
        assert_eq!(op.opposite().basis(), c2.basis());
        let c1 = OpSpace::standard(StandardKind::Column(1)).unwrap();
        let l2 = c1.direct_sum(&c1);
        assert!((l2.norm(1, &[ONE, ONE]) - 1.0).abs() < 1e-14);
        let l2 = OpSpace::standard(StandardKind::Diag(2)).unwrap();
        let col = l2.column_over(2);
        assert_eq!(col.dim(), 4);
        assert!((col.norm(1, &[ONE, ZERO, ZERO, ONE]) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn subspace_keeps_norms() {
        let x = ex54();
        let j = x
            .subspace(&[vec![ONE, ZERO, ZERO], vec![ZERO, ONE, ZERO]], "J")
            .unwrap();
        assert_eq!(j.dim(), 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..=3 {
            let co = j.random_coords(n, &mut rng);
            let mut parent = Vec::new();
            for blk in 0..n * n {
                parent.extend_from_slice(&co[blk * 2..blk * 2 + 2]);
                parent.push(ZERO);
            }
            assert!((j.norm(n, &co) - x.norm(n, &parent)).abs() < 1e-12);
        }
    }

    #[test]
    fn json_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let basis = (0..3).map(|_| CMatrix::random_gaussian(2, 3, &mut rng)).collect();
        let x = OpSpace::new(basis, "rand", false).unwrap();
        let back = OpSpace::from_json(&x.to_json()).unwrap();
        assert_eq!(back, x);
    }

    #[test]
    fn schema_errors_carry_pointers() {
        let bad = r#"{"schema":"opspace/v1","label":"x","p":2,"q":1,"basis":[[[1,0],[0]]],"shilov_flag":true}"#;
        match OpSpace::from_json(bad) {
            Err(Error::Schema { pointer, .. }) => assert_eq!(pointer, "/basis/0/1"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn quotient_trivial_cases() {
        let x = Arc::new(ex54());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let full: Vec<Vec<C64>> = (0..3)
            .map(|k| (0..3).map(|i| if i == k { ONE } else { ZERO }).collect())
            .collect();
        let q_all = QuotientOracle::new(x.clone(), &full, 2).unwrap();
        let q_none = QuotientOracle::new(x.clone(), &[], 2).unwrap();
        for n in 1..=2 {
            let co = x.random_coords(n, &mut rng);
            assert_eq!(q_all.norm_bounds(n, &co).unwrap().ub, 0.0);
            let b = q_none.norm_bounds(n, &co).unwrap();
            assert!((b.ub - x.norm(n, &co)).abs() < 1e-12);
        }
    }

    #[test]
    fn quotient_by_corner_matches_j() {
        // X / span(c) evaluated on the a-generator equals its norm in J
        let x = Arc::new(ex54());
        let q = QuotientOracle::new(x.clone(), &[vec![ZERO, ZERO, ONE]], 2).unwrap();
        let b = q.norm_bounds(1, &[ONE, ZERO, ZERO]).unwrap();
        let expect = x.norm(1, &[ONE, ZERO, ZERO]);
        assert!(b.lb <= b.ub + 1e-12);
        assert!((b.ub - expect).abs() < 1e-6 && (b.lb - expect).abs() < 1e-5, "{b:?}");
    }
}
