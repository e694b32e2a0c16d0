//! Exact scalar and sparse multivariate polynomial arithmetic.
//!
//! Coefficients are Gaussian rationals (complex numbers with exact rational
//! real and imaginary parts); purely real computation is the `im = 0` subcase.
//! Monomials are sparse exponent maps over the real coordinates of a
//! [`CoordLayout`], ordered graded-lexicographically so that serialization and
//! iteration are deterministic.
//!
//! A polynomial in `k` matrix columns over ℝ/ℂ/ℍ is stored in the flattened
//! real coordinates: column `c` occupies a contiguous block of `β·n` entries,
//! component `ℓ` of column `c` the slice `[c·βn + ℓ·n, c·βn + (ℓ+1)·n)`.

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::Rng;
use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

pub type Rational = num_rational::BigRational;
pub type GaussRational = num_complex::Complex<Rational>;

/// Exact rational from an integer.
pub fn rat(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// Exact rational `p/q`.
pub fn ratio(p: i64, q: i64) -> Rational {
    Rational::new(BigInt::from(p), BigInt::from(q))
}

/// Gaussian rational with zero imaginary part.
pub fn gauss(re: Rational) -> GaussRational {
    GaussRational::new(re, Rational::zero())
}

pub fn gauss_i64(n: i64) -> GaussRational {
    gauss(rat(n))
}

/// Round an exact rational to the nearest `f64`, robust to numerators and
/// denominators far beyond the `f64` range.
pub fn rational_to_f64(r: &Rational) -> f64 {
    if r.is_zero() {
        return 0.0;
    }
    let nb = r.numer().bits() as i64;
    let db = r.denom().bits() as i64;
    // scale the quotient to ~80 significant bits before converting
    let shift = 80 - (nb - db);
    let q = if shift >= 0 {
        (r.numer() << shift as u64) / r.denom()
    } else {
        r.numer() / (r.denom() << (-shift) as u64)
    };
    let qf = q.to_f64().unwrap_or(if q.is_negative() {
        f64::NEG_INFINITY
    } else {
        f64::INFINITY
    });
    qf * 2f64.powi(-shift as i32)
}

/// Exact rational equal to the given `f64` (every finite double is rational).
pub fn rational_from_f64(x: f64) -> Option<Rational> {
    Rational::from_float(x)
}

pub fn gauss_to_c64(z: &GaussRational) -> num_complex::Complex64 {
    num_complex::Complex64::new(rational_to_f64(&z.re), rational_to_f64(&z.im))
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AlgebraError {
    #[error("coordinate layouts do not match: {0} vs {1}")]
    LayoutMismatch(CoordLayout, CoordLayout),
    #[error("coordinate index {coord} out of range for layout of dimension {dim}")]
    CoordOutOfRange { coord: usize, dim: usize },
    #[error("evaluation point has length {got}, layout dimension is {expected}")]
    PointLength { expected: usize, got: usize },
    #[error("polynomial parse error: {0}")]
    Parse(String),
}

/// Identification of the matrix space `Gl^(β)(n, n−k)` with `ℝ^{β·n·k}`.
///
/// `beta` counts the real components per matrix entry (1, 2 or 4 for the
/// division algebras; 3 is also allowed for the general Clifford functional).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CoordLayout {
    pub beta: u32,
    pub n: u32,
    pub k: u32,
}

impl CoordLayout {
    pub fn new(beta: u32, n: u32, k: u32) -> Self {
        assert!(beta >= 1 && beta <= 4, "component count must be 1..=4");
        assert!(n >= 1 && k >= 1, "layout dimensions must be positive");
        CoordLayout { beta, n, k }
    }

    /// Total number of real coordinates, `β·n·k`.
    pub fn dim(&self) -> usize {
        (self.beta * self.n * self.k) as usize
    }

    /// Flat index of (column, real component, row).
    pub fn index(&self, col: u32, comp: u32, row: u32) -> usize {
        debug_assert!(col < self.k && comp < self.beta && row < self.n);
        (col * self.beta * self.n + comp * self.n + row) as usize
    }

    /// Inverse of [`CoordLayout::index`].
    pub fn unindex(&self, idx: usize) -> (u32, u32, u32) {
        let bn = (self.beta * self.n) as usize;
        let col = idx / bn;
        let rem = idx % bn;
        (col as u32, (rem / self.n as usize) as u32, (rem % self.n as usize) as u32)
    }

    /// Flat coordinate range of one column (a `β·n`-dimensional real vector).
    pub fn col_range(&self, col: u32) -> std::ops::Range<usize> {
        let bn = (self.beta * self.n) as usize;
        (col as usize) * bn..(col as usize + 1) * bn
    }

    /// Real dimension of a single column, `β·n`.
    pub fn col_dim(&self) -> usize {
        (self.beta * self.n) as usize
    }
}

impl fmt::Display for CoordLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(beta={}, n={}, k={})", self.beta, self.n, self.k)
    }
}

/// Sparse monomial: sorted `(coordinate, exponent)` pairs, no zero exponents.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Monomial(Vec<(u32, u32)>);

impl Monomial {
    pub fn one() -> Self {
        Monomial(Vec::new())
    }

    pub fn var(coord: u32) -> Self {
        Monomial(vec![(coord, 1)])
    }

    /// Build from unsorted (coordinate, exponent) pairs; merges duplicates.
    pub fn from_pairs(pairs: &[(u32, u32)]) -> Self {
        let mut map: BTreeMap<u32, u32> = BTreeMap::new();
        for &(c, e) in pairs {
            if e > 0 {
                *map.entry(c).or_insert(0) += e;
            }
        }
        Monomial(map.into_iter().collect())
    }

    pub fn exponents(&self) -> &[(u32, u32)] {
        &self.0
    }

    pub fn exponent(&self, coord: u32) -> u32 {
        self.0
            .binary_search_by_key(&coord, |&(c, _)| c)
            .map(|i| self.0[i].1)
            .unwrap_or(0)
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().map(|&(_, e)| e).sum()
    }

    pub fn is_one(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max_coord(&self) -> Option<u32> {
        self.0.last().map(|&(c, _)| c)
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let mut out = Vec::with_capacity(self.0.len() + other.0.len());
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() && j < other.0.len() {
            match self.0[i].0.cmp(&other.0[j].0) {
                Ordering::Less => {
                    out.push(self.0[i]);
                    i += 1;
                }
                Ordering::Greater => {
                    out.push(other.0[j]);
                    j += 1;
                }
                Ordering::Equal => {
                    out.push((self.0[i].0, self.0[i].1 + other.0[j].1));
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&self.0[i..]);
        out.extend_from_slice(&other.0[j..]);
        Monomial(out)
    }

    /// Divide by `coord^e`; `None` if the exponent is too small.
    pub fn div_coord(&self, coord: u32, e: u32) -> Option<Monomial> {
        let i = self.0.binary_search_by_key(&coord, |&(c, _)| c).ok()?;
        if self.0[i].1 < e {
            return None;
        }
        let mut out = self.0.clone();
        if out[i].1 == e {
            out.remove(i);
        } else {
            out[i].1 -= e;
        }
        Some(Monomial(out))
    }
}

impl Ord for Monomial {
    /// Graded lexicographic: first by total degree, ties by exponent vector
    /// with lower coordinate indices weighted heavier.
    fn cmp(&self, other: &Self) -> Ordering {
        match self.degree().cmp(&other.degree()) {
            Ordering::Equal => {}
            ord => return ord,
        }
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() && j < other.0.len() {
            let (ca, ea) = self.0[i];
            let (cb, eb) = other.0[j];
            match ca.cmp(&cb) {
                // positive exponent on an earlier coordinate sorts higher
                Ordering::Less => return Ordering::Greater,
                Ordering::Greater => return Ordering::Less,
                Ordering::Equal => match ea.cmp(&eb) {
                    Ordering::Equal => {
                        i += 1;
                        j += 1;
                    }
                    ord => return ord,
                },
            }
        }
        // equal degree and equal shared prefix forces both exhausted
        self.0.len().cmp(&other.0.len()).reverse()
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Sparse multivariate polynomial over Gaussian rationals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Polynomial {
    layout: CoordLayout,
    terms: BTreeMap<Monomial, GaussRational>,
}

impl Polynomial {
    pub fn zero(layout: CoordLayout) -> Self {
        Polynomial { layout, terms: BTreeMap::new() }
    }

    pub fn constant(layout: CoordLayout, c: GaussRational) -> Self {
        let mut p = Self::zero(layout);
        if !c.is_zero() {
            p.terms.insert(Monomial::one(), c);
        }
        p
    }

    pub fn one(layout: CoordLayout) -> Self {
        Self::constant(layout, gauss_i64(1))
    }

    pub fn var(layout: CoordLayout, coord: usize) -> Self {
        assert!(coord < layout.dim());
        let mut p = Self::zero(layout);
        p.terms.insert(Monomial::var(coord as u32), gauss_i64(1));
        p
    }

    pub fn from_terms<I>(layout: CoordLayout, terms: I) -> Self
    where
        I: IntoIterator<Item = (Monomial, GaussRational)>,
    {
        let mut p = Self::zero(layout);
        for (m, c) in terms {
            p.add_term(m, c);
        }
        p
    }

    pub fn layout(&self) -> CoordLayout {
        self.layout
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &GaussRational)> {
        self.terms.iter()
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|m| m.degree()).max().unwrap_or(0)
    }

    pub fn constant_term(&self) -> GaussRational {
        self.terms.get(&Monomial::one()).cloned().unwrap_or_else(GaussRational::zero)
    }

    pub fn coeff(&self, m: &Monomial) -> GaussRational {
        self.terms.get(m).cloned().unwrap_or_else(GaussRational::zero)
    }

    pub fn is_real(&self) -> bool {
        self.terms.values().all(|c| c.im.is_zero())
    }

    pub fn add_term(&mut self, m: Monomial, c: GaussRational) {
        if c.is_zero() {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.terms.entry(m) {
            Entry::Vacant(v) => {
                v.insert(c);
            }
            Entry::Occupied(mut o) => {
                let sum = o.get().clone() + c;
                if sum.is_zero() {
                    o.remove();
                } else {
                    *o.get_mut() = sum;
                }
            }
        }
    }

    fn check_layout(&self, other: &Polynomial) -> Result<(), AlgebraError> {
        if self.layout != other.layout {
            Err(AlgebraError::LayoutMismatch(self.layout, other.layout))
        } else {
            Ok(())
        }
    }

    pub fn add(&self, other: &Polynomial) -> Result<Polynomial, AlgebraError> {
        self.check_layout(other)?;
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), c.clone());
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Polynomial) -> Result<Polynomial, AlgebraError> {
        self.check_layout(other)?;
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), -c.clone());
        }
        Ok(out)
    }

    pub fn neg(&self) -> Polynomial {
        let mut out = self.clone();
        for c in out.terms.values_mut() {
            *c = -c.clone();
        }
        out
    }

    pub fn mul(&self, other: &Polynomial) -> Result<Polynomial, AlgebraError> {
        self.check_layout(other)?;
        let mut out = Polynomial::zero(self.layout);
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                out.add_term(ma.mul(mb), ca.clone() * cb.clone());
            }
        }
        Ok(out)
    }

    pub fn scale(&self, c: &GaussRational) -> Polynomial {
        if c.is_zero() {
            return Polynomial::zero(self.layout);
        }
        let mut out = self.clone();
        for v in out.terms.values_mut() {
            *v = v.clone() * c.clone();
        }
        out
    }

    pub fn scale_rat(&self, c: &Rational) -> Polynomial {
        self.scale(&gauss(c.clone()))
    }

    pub fn pow(&self, e: u32) -> Polynomial {
        let mut out = Polynomial::one(self.layout);
        for _ in 0..e {
            out = out.mul(self).expect("same layout");
        }
        out
    }

    /// Exact formal partial derivative with respect to one coordinate.
    pub fn diff(&self, coord: usize) -> Result<Polynomial, AlgebraError> {
        if coord >= self.layout.dim() {
            return Err(AlgebraError::CoordOutOfRange { coord, dim: self.layout.dim() });
        }
        let coord = coord as u32;
        let mut out = Polynomial::zero(self.layout);
        for (m, c) in &self.terms {
            let e = m.exponent(coord);
            if e > 0 {
                let dm = m.div_coord(coord, 1).unwrap();
                out.add_term(dm, c.clone() * gauss_i64(e as i64));
            }
        }
        Ok(out)
    }

    /// Maximum total degree in the coordinates of one column.
    pub fn degree_in_col(&self, col: u32) -> u32 {
        let range = self.layout.col_range(col);
        self.terms
            .keys()
            .map(|m| {
                m.exponents()
                    .iter()
                    .filter(|&&(c, _)| range.contains(&(c as usize)))
                    .map(|&(_, e)| e)
                    .sum()
            })
            .max()
            .unwrap_or(0)
    }

    /// Set all coordinates of one column to zero (drop every monomial that
    /// contains them).
    pub fn restrict_col_zero(&self, col: u32) -> Polynomial {
        let range = self.layout.col_range(col);
        let mut out = Polynomial::zero(self.layout);
        for (m, c) in &self.terms {
            if m.exponents().iter().all(|&(co, _)| !range.contains(&(co as usize))) {
                out.terms.insert(m.clone(), c.clone());
            }
        }
        out
    }

    /// Substitute `x_i ← sign[i] · x_{perm[i]}` (an exact signed-permutation
    /// change of variables).
    pub fn substitute_signed_perm(&self, perm: &[usize], sign: &[i8]) -> Polynomial {
        assert_eq!(perm.len(), self.layout.dim());
        assert_eq!(sign.len(), self.layout.dim());
        let mut out = Polynomial::zero(self.layout);
        for (m, c) in &self.terms {
            let mut flips = 0u32;
            let pairs: Vec<(u32, u32)> = m
                .exponents()
                .iter()
                .map(|&(co, e)| {
                    if sign[co as usize] < 0 {
                        flips += e;
                    }
                    (perm[co as usize] as u32, e)
                })
                .collect();
            let nm = Monomial::from_pairs(&pairs);
            let nc = if flips % 2 == 0 { c.clone() } else { -c.clone() };
            out.add_term(nm, nc);
        }
        out
    }

    /// Direct term-by-term evaluation with compensated summation, iterating
    /// monomials in canonical order so the result is deterministic.
    pub fn eval(&self, point: &[f64]) -> Result<num_complex::Complex64, AlgebraError> {
        if point.len() != self.layout.dim() {
            return Err(AlgebraError::PointLength { expected: self.layout.dim(), got: point.len() });
        }
        let mut sum_re = KahanSum::new();
        let mut sum_im = KahanSum::new();
        for (m, c) in &self.terms {
            let mut t = 1.0f64;
            for &(co, e) in m.exponents() {
                t *= point[co as usize].powi(e as i32);
            }
            sum_re.add(rational_to_f64(&c.re) * t);
            sum_im.add(rational_to_f64(&c.im) * t);
        }
        Ok(num_complex::Complex64::new(sum_re.value(), sum_im.value()))
    }

    /// Precompute float coefficients for repeated evaluation (hot loops).
    pub fn compile(&self) -> CompiledPoly {
        CompiledPoly {
            dim: self.layout.dim(),
            terms: self
                .terms
                .iter()
                .map(|(m, c)| CompiledTerm {
                    coeff: gauss_to_c64(c),
                    real_coeff: rational_to_f64(&c.re),
                    factors: m.exponents().to_vec(),
                })
                .collect(),
        }
    }
}

/// Kahan compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let y = x - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

#[derive(Debug, Clone)]
struct CompiledTerm {
    coeff: num_complex::Complex64,
    real_coeff: f64,
    factors: Vec<(u32, u32)>,
}

/// Float-coefficient view of a polynomial for fast repeated evaluation.
#[derive(Debug, Clone)]
pub struct CompiledPoly {
    dim: usize,
    terms: Vec<CompiledTerm>,
}

impl CompiledPoly {
    pub fn eval_real(&self, point: &[f64]) -> f64 {
        debug_assert_eq!(point.len(), self.dim);
        let mut sum = KahanSum::new();
        for t in &self.terms {
            let mut v = t.real_coeff;
            for &(co, e) in &t.factors {
                let x = point[co as usize];
                v *= match e {
                    1 => x,
                    2 => x * x,
                    _ => x.powi(e as i32),
                };
            }
            sum.add(v);
        }
        sum.value()
    }

    pub fn eval(&self, point: &[f64]) -> num_complex::Complex64 {
        debug_assert_eq!(point.len(), self.dim);
        let mut re = KahanSum::new();
        let mut im = KahanSum::new();
        for t in &self.terms {
            let mut v = 1.0f64;
            for &(co, e) in &t.factors {
                v *= point[co as usize].powi(e as i32);
            }
            re.add(t.coeff.re * v);
            im.add(t.coeff.im * v);
        }
        num_complex::Complex64::new(re.value(), im.value())
    }
}

// ---------------------------------------------------------------------------
// JSON serialization
//
// {"layout":{"beta":B,"n":N,"k":K},
//  "terms":[{"m":{"<coord>":<exp>,...},"c":"p/q" | {"re":"p/q","im":"p/q"}},...]}
// ---------------------------------------------------------------------------

fn parse_rational_str(s: &str) -> Result<Rational, AlgebraError> {
    let err = |m: String| AlgebraError::Parse(m);
    let (p, q) = match s.split_once('/') {
        Some((p, q)) => (p.trim(), q.trim()),
        None => (s.trim(), "1"),
    };
    let p: BigInt = p.parse().map_err(|_| err(format!("bad integer `{p}`")))?;
    let q: BigInt = q.parse().map_err(|_| err(format!("bad integer `{q}`")))?;
    if q <= BigInt::zero() {
        return Err(err(format!("denominator must be positive in `{s}`")));
    }
    let r = Rational::new(p.clone(), q.clone());
    if r.numer() != &p || r.denom() != &q {
        return Err(err(format!("rational `{s}` is not in lowest terms")));
    }
    Ok(r)
}

fn rational_to_string(r: &Rational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

fn coeff_to_json(c: &GaussRational) -> serde_json::Value {
    if c.im.is_zero() {
        serde_json::Value::String(rational_to_string(&c.re))
    } else {
        serde_json::json!({
            "re": rational_to_string(&c.re),
            "im": rational_to_string(&c.im),
        })
    }
}

fn coeff_from_json(v: &serde_json::Value) -> Result<GaussRational, AlgebraError> {
    match v {
        serde_json::Value::String(s) => Ok(gauss(parse_rational_str(s)?)),
        serde_json::Value::Object(o) => {
            let get = |key: &str| -> Result<Rational, AlgebraError> {
                match o.get(key) {
                    None => Ok(Rational::zero()),
                    Some(serde_json::Value::String(s)) => parse_rational_str(s),
                    Some(_) => Err(AlgebraError::Parse(format!("coefficient field `{key}` must be a string"))),
                }
            };
            Ok(GaussRational::new(get("re")?, get("im")?))
        }
        _ => Err(AlgebraError::Parse("coefficient must be a string or {re, im} object".into())),
    }
}

pub fn poly_serialize(f: &Polynomial) -> serde_json::Value {
    let terms: Vec<serde_json::Value> = f
        .terms
        .iter()
        .rev() // leading term first
        .map(|(m, c)| {
            let mut mo = serde_json::Map::new();
            for &(co, e) in m.exponents() {
                mo.insert(co.to_string(), serde_json::json!(e));
            }
            serde_json::json!({"m": mo, "c": coeff_to_json(c)})
        })
        .collect();
    serde_json::json!({
        "layout": {"beta": f.layout.beta, "n": f.layout.n, "k": f.layout.k},
        "terms": terms,
    })
}

pub fn poly_serialize_string(f: &Polynomial) -> String {
    poly_serialize(f).to_string()
}

pub fn poly_from_json(v: &serde_json::Value) -> Result<Polynomial, AlgebraError> {
    let err = |m: &str| AlgebraError::Parse(m.to_string());
    let lay = v.get("layout").ok_or_else(|| err("missing `layout`"))?;
    let get_u32 = |key: &str| -> Result<u32, AlgebraError> {
        lay.get(key)
            .and_then(|x| x.as_u64())
            .map(|x| x as u32)
            .ok_or_else(|| err(&format!("layout field `{key}` must be a non-negative integer")))
    };
    let beta = get_u32("beta")?;
    let n = get_u32("n")?;
    let k = get_u32("k")?;
    if !(1..=4).contains(&beta) || n == 0 || k == 0 {
        return Err(err("invalid layout parameters"));
    }
    let layout = CoordLayout::new(beta, n, k);
    let terms = v
        .get("terms")
        .and_then(|t| t.as_array())
        .ok_or_else(|| err("missing `terms` array"))?;
    let mut f = Polynomial::zero(layout);
    for t in terms {
        let mv = t.get("m").ok_or_else(|| err("term missing `m`"))?;
        let mo = mv.as_object().ok_or_else(|| err("`m` must be an object"))?;
        let mut pairs = Vec::with_capacity(mo.len());
        for (key, ev) in mo {
            let coord: usize = key
                .parse()
                .map_err(|_| AlgebraError::Parse(format!("bad coordinate index `{key}`")))?;
            if coord >= layout.dim() {
                return Err(AlgebraError::CoordOutOfRange { coord, dim: layout.dim() });
            }
            // exponents may be JSON numbers or decimal strings
            let e: i64 = match ev {
                serde_json::Value::Number(x) => {
                    x.as_i64().ok_or_else(|| err("exponent must be an integer"))?
                }
                serde_json::Value::String(s) => s
                    .parse()
                    .map_err(|_| AlgebraError::Parse(format!("bad exponent `{s}`")))?,
                _ => return Err(err("exponent must be an integer")),
            };
            if e < 0 {
                return Err(AlgebraError::Parse(format!("negative exponent {e}")));
            }
            pairs.push((coord as u32, e as u32));
        }
        let c = coeff_from_json(t.get("c").ok_or_else(|| err("term missing `c`"))?)?;
        f.add_term(Monomial::from_pairs(&pairs), c);
    }
    Ok(f)
}

pub fn poly_parse(json: &str) -> Result<Polynomial, AlgebraError> {
    let v: serde_json::Value =
        serde_json::from_str(json).map_err(|e| AlgebraError::Parse(e.to_string()))?;
    poly_from_json(&v)
}

/// Random sparse polynomial with small rational coefficients, for randomized
/// exactness tests.
pub fn random_polynomial<R: Rng>(
    layout: CoordLayout,
    max_degree: u32,
    max_terms: usize,
    rng: &mut R,
) -> Polynomial {
    let dim = layout.dim();
    let mut f = Polynomial::zero(layout);
    for _ in 0..max_terms {
        let d = rng.gen_range(0..=max_degree);
        let mut pairs = Vec::with_capacity(d as usize);
        for _ in 0..d {
            pairs.push((rng.gen_range(0..dim) as u32, 1));
        }
        let mut num = 0i64;
        while num == 0 {
            num = rng.gen_range(-9..=9);
        }
        let den = rng.gen_range(1..=4);
        f.add_term(Monomial::from_pairs(&pairs), gauss(ratio(num, den)));
    }
    f
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn small_layout() -> CoordLayout {
        CoordLayout::new(1, 4, 2)
    }

    #[test]
    fn layout_index_bijective() {
        let l = CoordLayout::new(4, 3, 2);
        let mut seen = vec![false; l.dim()];
        for col in 0..l.k {
            for comp in 0..l.beta {
                for row in 0..l.n {
                    let idx = l.index(col, comp, row);
                    assert!(!seen[idx]);
                    seen[idx] = true;
                    assert_eq!(l.unindex(idx), (col, comp, row));
                }
            }
        }
        assert!(seen.iter().all(|&b| b));
    }

    #[test]
    fn product_of_conjugates() {
        // (x0+1)(x0-1) = x0^2 - 1
        let l = small_layout();
        let x0 = Polynomial::var(l, 0);
        let one = Polynomial::one(l);
        let p = x0.add(&one).unwrap().mul(&x0.sub(&one).unwrap()).unwrap();
        let expected = x0.mul(&x0).unwrap().sub(&one).unwrap();
        assert_eq!(p, expected);
    }

    #[test]
    fn additive_identity_and_exponents() {
        let l = small_layout();
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let f = random_polynomial(l, 5, 8, &mut rng);
        assert_eq!(f.add(&Polynomial::zero(l)).unwrap(), f);
        let x0x1 = Polynomial::var(l, 0).mul(&Polynomial::var(l, 1)).unwrap();
        let sq = x0x1.mul(&x0x1).unwrap();
        assert_eq!(sq.degree(), 4);
        assert_eq!(sq.num_terms(), 1);
        let (m, _) = sq.terms().next().unwrap();
        assert_eq!(m.exponent(0), 2);
        assert_eq!(m.exponent(1), 2);
    }

    #[test]
    fn layout_mismatch_rejected() {
        let a = Polynomial::one(CoordLayout::new(1, 3, 1));
        let b = Polynomial::one(CoordLayout::new(1, 4, 1));
        assert!(matches!(a.add(&b), Err(AlgebraError::LayoutMismatch(_, _))));
    }

    #[test]
    fn diff_examples() {
        let l = small_layout();
        let x0 = Polynomial::var(l, 0);
        let x1 = Polynomial::var(l, 1);
        // d/dx0 x0^2 = 2 x0
        assert_eq!(x0.pow(2).diff(0).unwrap(), x0.scale(&gauss_i64(2)));
        // d/dx0 x1^3 = 0
        assert!(x1.pow(3).diff(0).unwrap().is_zero());
        // d/dx0 (x0 x1) = x1
        assert_eq!(x0.mul(&x1).unwrap().diff(0).unwrap(), x1);
        assert!(x0.diff(l.dim()).is_err());
    }

    #[test]
    fn eval_examples() {
        let l = small_layout();
        let mut point = vec![0.0; l.dim()];
        point[0] = 2.0;
        point[1] = 1.0;
        assert_eq!(Polynomial::one(l).eval(&point).unwrap().re, 1.0);
        assert_eq!(Polynomial::var(l, 0).pow(2).eval(&point).unwrap().re, 4.0);
        let s = Polynomial::var(l, 0).add(&Polynomial::var(l, 1)).unwrap();
        assert_eq!(s.eval(&point).unwrap().re, 3.0);
        assert!(s.eval(&point[..3]).is_err());
    }

    #[test]
    fn parse_examples() {
        let f = poly_parse(r#"{"layout":{"beta":1,"n":4,"k":2},"terms":[{"m":{"0":2},"c":"1"}]}"#)
            .unwrap();
        assert_eq!(f, Polynomial::var(small_layout(), 0).pow(2));
        let zero = poly_parse(r#"{"layout":{"beta":1,"n":4,"k":2},"terms":[]}"#).unwrap();
        assert!(zero.is_zero());
        // non-reduced and negative-denominator rationals are rejected
        assert!(poly_parse(r#"{"layout":{"beta":1,"n":4,"k":2},"terms":[{"m":{},"c":"2/4"}]}"#).is_err());
        assert!(poly_parse(r#"{"layout":{"beta":1,"n":4,"k":2},"terms":[{"m":{},"c":"1/-2"}]}"#).is_err());
        assert!(poly_parse(r#"{"layout":{"beta":1,"n":4,"k":2},"terms":[{"m":{"0":-1},"c":"1"}]}"#).is_err());
    }

    #[test]
    fn rational_f64_roundtrip() {
        for &x in &[0.0, 1.5, -3.25, 1e-12, 7.0 / 3.0, 1e100, -2.5e-200] {
            let r = rational_from_f64(x).unwrap();
            assert_eq!(rational_to_f64(&r), x);
        }
        // huge magnitudes saturate sensibly
        let big = Rational::from_integer(BigInt::from(10).pow(400));
        assert!(rational_to_f64(&big).is_infinite());
        assert!(rational_to_f64(&(Rational::one() / big)).abs() < 1e-300);
    }

    fn arb_poly() -> impl Strategy<Value = Polynomial> {
        (0u64..u64::MAX).prop_map(|seed| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            random_polynomial(small_layout(), 4, 6, &mut rng)
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn ring_axioms(a in arb_poly(), b in arb_poly(), c in arb_poly()) {
            let ab_c = a.mul(&b).unwrap().mul(&c).unwrap();
            let a_bc = a.mul(&b.mul(&c).unwrap()).unwrap();
            prop_assert_eq!(&ab_c, &a_bc);
            let dist = a.mul(&b.add(&c).unwrap()).unwrap();
            let expand = a.mul(&b).unwrap().add(&a.mul(&c).unwrap()).unwrap();
            prop_assert_eq!(&dist, &expand);
            prop_assert_eq!(a.mul(&b).unwrap(), b.mul(&a).unwrap());
        }

        #[test]
        fn mixed_partials_commute(a in arb_poly(), i in 0usize..8, j in 0usize..8) {
            let dij = a.diff(i).unwrap().diff(j).unwrap();
            let dji = a.diff(j).unwrap().diff(i).unwrap();
            prop_assert_eq!(dij, dji);
        }

        #[test]
        fn serialization_round_trip(a in arb_poly()) {
            let s = poly_serialize_string(&a);
            let back = poly_parse(&s).unwrap();
            prop_assert_eq!(&back, &a);
            // canonical form is a fixed point
            prop_assert_eq!(poly_serialize_string(&back), s);
        }

        #[test]
        fn mul_degree_adds(a in arb_poly(), b in arb_poly()) {
            prop_assume!(!a.is_zero() && !b.is_zero());
            prop_assert_eq!(a.mul(&b).unwrap().degree(), a.degree() + b.degree());
        }
    }
}
