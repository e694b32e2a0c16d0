//! Constant-coefficient differential operators and the invariant operators
//! I₁, I₂ on the matrix space `Gl^(β)(n, n−k)`.
//!
//! A [`DiffOp`] is a polynomial in the partial-derivative symbols ∂₀,…,∂_{d−1}
//! with Gaussian-rational coefficients; composition is polynomial
//! multiplication, so any two constant-coefficient operators commute. The
//! non-constant-coefficient operators needed for commutator checks and the
//! column-peeling recursion (multiplication by `u²` or `⟨u,v⟩`, the Euler
//! operator, and the mixed first-order operators `⟨u_i, J∇_{u_j}⟩`) are
//! provided as direct polynomial transformations.

use crate::algebra::{
    gauss, gauss_i64, random_polynomial, rat, AlgebraError, CoordLayout, GaussRational, Monomial,
    Polynomial, Rational,
};
use crate::clifford::{build_jset, SignedPerm};
use crate::pizzetti::StiefelSpec;
use num_traits::{One, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DiffOpError {
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error("operator requires k = 2 columns, layout has k = {0}")]
    NeedsTwoColumns(u32),
    #[error("column index {col} out of range (k = {k})")]
    ColumnOutOfRange { col: u32, k: u32 },
    #[error("structure matrix dimension {got} does not match column dimension {expected}")]
    JDimension { expected: usize, got: usize },
    #[error("gradient-matrix construction is defined for beta in {{2, 4}}, got {0}")]
    GradientBeta(u32),
}

/// A constant-coefficient differential operator, stored as a polynomial in
/// the derivative symbols over the same coordinate layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiffOp {
    symbol: Polynomial,
}

impl DiffOp {
    pub fn from_symbol(symbol: Polynomial) -> Self {
        DiffOp { symbol }
    }

    pub fn zero(layout: CoordLayout) -> Self {
        DiffOp { symbol: Polynomial::zero(layout) }
    }

    pub fn identity(layout: CoordLayout) -> Self {
        DiffOp { symbol: Polynomial::one(layout) }
    }

    /// The single first-order operator ∂_coord.
    pub fn partial(layout: CoordLayout, coord: usize) -> Self {
        DiffOp { symbol: Polynomial::var(layout, coord) }
    }

    pub fn symbol(&self) -> &Polynomial {
        &self.symbol
    }

    pub fn layout(&self) -> CoordLayout {
        self.symbol.layout()
    }

    pub fn add(&self, other: &DiffOp) -> Result<DiffOp, DiffOpError> {
        Ok(DiffOp { symbol: self.symbol.add(&other.symbol)? })
    }

    pub fn sub(&self, other: &DiffOp) -> Result<DiffOp, DiffOpError> {
        Ok(DiffOp { symbol: self.symbol.sub(&other.symbol)? })
    }

    /// Composition; commutative because the coefficients are constant.
    pub fn compose(&self, other: &DiffOp) -> Result<DiffOp, DiffOpError> {
        Ok(DiffOp { symbol: self.symbol.mul(&other.symbol)? })
    }

    pub fn scale(&self, c: &GaussRational) -> DiffOp {
        DiffOp { symbol: self.symbol.scale(c) }
    }

    pub fn pow(&self, e: u32) -> DiffOp {
        DiffOp { symbol: self.symbol.pow(e) }
    }

    /// Apply the operator to a polynomial, exactly.
    pub fn apply(&self, f: &Polynomial) -> Result<Polynomial, DiffOpError> {
        if self.layout() != f.layout() {
            return Err(AlgebraError::LayoutMismatch(self.layout(), f.layout()).into());
        }
        let mut out = Polynomial::zero(f.layout());
        for (alpha, c) in self.symbol.terms() {
            apply_monomial_derivative(alpha, c, f, &mut out);
        }
        Ok(out)
    }
}

/// Accumulate `c · ∂^alpha f` into `out`.
fn apply_monomial_derivative(
    alpha: &Monomial,
    c: &GaussRational,
    f: &Polynomial,
    out: &mut Polynomial,
) {
    'term: for (mu, fc) in f.terms() {
        let mut factor = Rational::one();
        let mut m = mu.clone();
        for &(coord, e) in alpha.exponents() {
            let have = m.exponent(coord);
            if have < e {
                continue 'term;
            }
            for t in 0..e {
                factor *= rat((have - t) as i64);
            }
            m = m.div_coord(coord, e).unwrap();
        }
        out.add_term(m, fc.clone() * c.clone() * gauss(factor));
    }
}

/// Flat index of offset `a` within column `col` (offset = component·n + row).
pub fn col_coord(layout: CoordLayout, col: u32, a: usize) -> usize {
    layout.col_range(col).start + a
}

/// Laplacian of one column: `Δ_c = Σ_a ∂_{(c,a)}²`.
pub fn column_laplacian(layout: CoordLayout, col: u32) -> DiffOp {
    let mut sym = Polynomial::zero(layout);
    for a in 0..layout.col_dim() {
        let idx = col_coord(layout, col, a) as u32;
        sym.add_term(Monomial::from_pairs(&[(idx, 2)]), gauss_i64(1));
    }
    DiffOp::from_symbol(sym)
}

/// The paired second-order operator `⟨∇_{u_i}, J ∇_{u_j}⟩ = Σ_{a,b} J_{ab}
/// ∂_{(i,a)} ∂_{(j,b)}`.
pub fn pair_op(
    layout: CoordLayout,
    i: u32,
    j: u32,
    jmat: &SignedPerm,
) -> Result<DiffOp, DiffOpError> {
    if i >= layout.k || j >= layout.k {
        return Err(DiffOpError::ColumnOutOfRange { col: i.max(j), k: layout.k });
    }
    if jmat.dim() != layout.col_dim() {
        return Err(DiffOpError::JDimension { expected: layout.col_dim(), got: jmat.dim() });
    }
    let mut sym = Polynomial::zero(layout);
    for a in 0..jmat.dim() {
        let s = jmat.sign[a];
        if s == 0 {
            continue;
        }
        let ia = col_coord(layout, i, a) as u32;
        let jb = col_coord(layout, j, jmat.pos[a]) as u32;
        sym.add_term(Monomial::from_pairs(&[(ia, 1), (jb, 1)]), gauss_i64(s as i64));
    }
    Ok(DiffOp::from_symbol(sym))
}

/// The invariant operators on a codimension-2 layout:
/// `I₁ = Δ_u + Δ_v` and `I₂ = Δ_u Δ_v − Σ_l ⟨∇_u, J^(l) ∇_v⟩²`.
pub fn invariant_ops(spec: &StiefelSpec) -> Result<(DiffOp, DiffOp), DiffOpError> {
    let layout = spec.layout();
    if layout.k != 2 {
        return Err(DiffOpError::NeedsTwoColumns(layout.k));
    }
    let js = build_jset(spec.beta, spec.n as usize).expect("validated beta");
    let lap_u = column_laplacian(layout, 0);
    let lap_v = column_laplacian(layout, 1);
    let i1 = lap_u.add(&lap_v)?;
    let mut i2 = lap_u.compose(&lap_v)?;
    for jm in &js.mats {
        let p = pair_op(layout, 0, 1, jm)?;
        i2 = i2.sub(&p.compose(&p)?)?;
    }
    Ok((i1, i2))
}

// ---------------------------------------------------------------------------
// Gradient-matrix construction for beta = 2, 4
// ---------------------------------------------------------------------------

/// First-order complex gradient entries of the operator matrix, in the
/// convention `(β/γ)·∂/∂z = ∂_x − i·∂_y` (the β/γ scaling absorbs the 1/2 of
/// the complex derivative, so the trace of ∇†∇ reproduces the full real
/// Laplacian without extra constants).
fn wirtinger(layout: CoordLayout, col: u32, comp_x: u32, comp_y: u32, row: u32, conj: bool) -> Polynomial {
    let x = Polynomial::var(layout, layout.index(col, comp_x, row));
    let y = Polynomial::var(layout, layout.index(col, comp_y, row));
    let i_unit = GaussRational::new(Rational::zero(), rat(if conj { 1 } else { -1 }));
    x.add(&y.scale(&i_unit)).expect("same layout")
}

/// Entry `(q, p)` of the complex-represented gradient matrix ∇ for β = 4,
/// with `q` indexing the 2n complex rows and `p` the 2k complex columns.
fn quat_gradient_entry(layout: CoordLayout, q: usize, p: usize, conj: bool) -> Polynomial {
    let n = layout.n as usize;
    let (col, s) = ((p / 2) as u32, p % 2);
    let (top, row) = (q < n, (q % n) as u32);
    let var = |comp: u32| Polynomial::var(layout, layout.index(col, comp, row));
    let i_rat = |sgn: i64| GaussRational::new(Rational::zero(), rat(sgn));
    let sign = |sgn: i64| gauss(rat(sgn));
    // quaternion entry (a0,a1,a2,a3) embeds as [[a0+i a1, a2+i a3],
    //                                           [-a2+i a3, a0-i a1]]
    let (re_comp, im_comp, re_sign, im_sign): (u32, u32, i64, i64) = match (top, s) {
        (true, 0) => (0, 1, 1, -1),
        (true, _) => (2, 3, 1, -1),
        (false, 0) => (2, 3, -1, -1),
        (false, _) => (0, 1, 1, 1),
    };
    let (re_sign, im_sign) = if conj { (re_sign, -im_sign) } else { (re_sign, im_sign) };
    var(re_comp)
        .scale(&sign(re_sign))
        .add(&var(im_comp).scale(&i_rat(im_sign)))
        .expect("same layout")
}

/// Traces `tr((∇†∇)^p)/γ` for `p = 1..=p_max`, as exact differential
/// operators.
///
/// The returned normalization divides the complex-representation trace by γ,
/// so for β = 4 the Kramers doubling is removed and `p = 1` reproduces
/// `I₁ = Σ_c Δ_c` exactly; Newton's identities applied to these traces give
/// the elementary invariants directly.
pub fn gradient_matrix_invariants(
    spec: &StiefelSpec,
    p_max: u32,
) -> Result<Vec<DiffOp>, DiffOpError> {
    if spec.beta != 2 && spec.beta != 4 {
        return Err(DiffOpError::GradientBeta(spec.beta));
    }
    let layout = spec.layout();
    let (rows, cols) = if spec.beta == 2 {
        (layout.n as usize, layout.k as usize)
    } else {
        (2 * layout.n as usize, 2 * layout.k as usize)
    };
    // m[a][b] = sum_q conj(grad[q][a]) * grad[q][b]
    let mut m = vec![vec![Polynomial::zero(layout); cols]; cols];
    for a in 0..cols {
        for b in 0..cols {
            let mut acc = Polynomial::zero(layout);
            for q in 0..rows {
                let ga = if spec.beta == 2 {
                    wirtinger(layout, a as u32, 0, 1, q as u32, true)
                } else {
                    quat_gradient_entry(layout, q, a, true)
                };
                let gb = if spec.beta == 2 {
                    wirtinger(layout, b as u32, 0, 1, q as u32, false)
                } else {
                    quat_gradient_entry(layout, q, b, false)
                };
                acc = acc.add(&ga.mul(&gb)?)?;
            }
            m[a][b] = acc;
        }
    }
    let gamma = gauss(Rational::new(1.into(), i64::from(spec.gamma()).into()));
    let mut traces = Vec::with_capacity(p_max as usize);
    let mut power = m.clone();
    for p in 1..=p_max {
        if p > 1 {
            let mut next = vec![vec![Polynomial::zero(layout); cols]; cols];
            for a in 0..cols {
                for b in 0..cols {
                    let mut acc = Polynomial::zero(layout);
                    for c in 0..cols {
                        acc = acc.add(&power[a][c].mul(&m[c][b])?)?;
                    }
                    next[a][b] = acc;
                }
            }
            power = next;
        }
        let mut tr = Polynomial::zero(layout);
        for (a, row) in power.iter().enumerate() {
            tr = tr.add(&row[a])?;
        }
        traces.push(DiffOp::from_symbol(tr.scale(&gamma)));
    }
    Ok(traces)
}

/// Elementary invariants `e_1..e_count` from power-sum traces via Newton's
/// identities: `j·e_j = Σ_{i=1}^{j} (−1)^{i−1} e_{j−i} p_i`.
pub fn newton_invariants(traces: &[DiffOp], count: usize) -> Result<Vec<DiffOp>, DiffOpError> {
    assert!(traces.len() >= count, "need at least `count` power sums");
    let layout = traces[0].layout();
    let mut e: Vec<DiffOp> = vec![DiffOp::identity(layout)];
    for j in 1..=count {
        let mut acc = DiffOp::zero(layout);
        for i in 1..=j {
            let term = e[j - i].compose(&traces[i - 1])?;
            let sgn = if (i - 1) % 2 == 0 { 1 } else { -1 };
            acc = acc.add(&term.scale(&gauss_i64(sgn)))?;
        }
        e.push(acc.scale(&gauss(Rational::new(1.into(), (j as i64).into()))));
    }
    Ok(e.into_iter().skip(1).collect())
}

// ---------------------------------------------------------------------------
// Non-constant-coefficient helpers
// ---------------------------------------------------------------------------

/// Multiplication by `⟨u_i, u_j⟩ = Σ_a x_{(i,a)} x_{(j,a)}`.
pub fn mul_col_pair(f: &Polynomial, i: u32, j: u32) -> Polynomial {
    let layout = f.layout();
    f.mul(&col_pair_poly(layout, i, j)).expect("same layout")
}

/// The quadratic `⟨u_i, u_j⟩` itself.
pub fn col_pair_poly(layout: CoordLayout, i: u32, j: u32) -> Polynomial {
    let mut p = Polynomial::zero(layout);
    for a in 0..layout.col_dim() {
        let ia = col_coord(layout, i, a) as u32;
        let ja = col_coord(layout, j, a) as u32;
        p.add_term(Monomial::from_pairs(&[(ia, 1), (ja, 1)]), gauss_i64(1));
    }
    p
}

/// The pairing `⟨u_i, J u_j⟩ = Σ_a sign[a]·x_{(i,a)} x_{(j,pos[a])}` as a
/// polynomial.
pub fn col_pair_poly_j(layout: CoordLayout, i: u32, j: u32, jmat: &SignedPerm) -> Polynomial {
    assert_eq!(jmat.dim(), layout.col_dim());
    let mut p = Polynomial::zero(layout);
    for a in 0..jmat.dim() {
        let ia = col_coord(layout, i, a) as u32;
        let jb = col_coord(layout, j, jmat.pos[a]) as u32;
        p.add_term(Monomial::from_pairs(&[(ia, 1), (jb, 1)]), gauss_i64(jmat.sign[a] as i64));
    }
    p
}

/// Euler operator of one column: scales each monomial by its degree in that
/// column's coordinates.
pub fn euler(f: &Polynomial, col: u32) -> Polynomial {
    let layout = f.layout();
    let range = layout.col_range(col);
    let terms: Vec<(Monomial, GaussRational)> = f
        .terms()
        .map(|(m, c)| {
            let d: u32 = m
                .exponents()
                .iter()
                .filter(|&&(co, _)| range.contains(&(co as usize)))
                .map(|&(_, e)| e)
                .sum();
            (m.clone(), c.clone() * gauss_i64(d as i64))
        })
        .collect();
    Polynomial::from_terms(layout, terms)
}

/// The first-order operator `⟨u_i, J ∇_{u_j}⟩ f = Σ_a sign[a]·x_{(i,a)}
/// ∂_{(j,pos[a])} f`.
pub fn mixed_first_order(f: &Polynomial, i: u32, j: u32, jmat: &SignedPerm) -> Polynomial {
    let layout = f.layout();
    assert_eq!(jmat.dim(), layout.col_dim());
    let mut out = Polynomial::zero(layout);
    for a in 0..jmat.dim() {
        let s = jmat.sign[a];
        if s == 0 {
            continue;
        }
        let df = f.diff(col_coord(layout, j, jmat.pos[a])).expect("coord in range");
        if df.is_zero() {
            continue;
        }
        let xi = Polynomial::var(layout, col_coord(layout, i, a));
        out = out.add(&df.mul(&xi).expect("layout").scale(&gauss_i64(s as i64))).expect("layout");
    }
    out
}

/// `⟨u_i, ∇_{u_j}⟩ f` with the identity structure matrix.
pub fn dir_op(f: &Polynomial, i: u32, j: u32) -> Polynomial {
    mixed_first_order(f, i, j, &SignedPerm::identity(f.layout().col_dim()))
}

// ---------------------------------------------------------------------------
// Commutator relations
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct CheckReport {
    pub passed: bool,
    pub trials: u32,
    pub failures: Vec<String>,
}

impl CheckReport {
    pub fn ok(trials: u32) -> Self {
        CheckReport { passed: true, trials, failures: Vec::new() }
    }

    pub fn record(&mut self, msg: String) {
        self.passed = false;
        if self.failures.len() < 8 {
            self.failures.push(msg);
        }
    }
}

/// Verify the eight commutation relations between the Laplacian, mixed
/// gradient, Euler and multiplication operators on the first two columns by
/// exact application of both sides to random polynomials of degree ≤ 5.
///
/// With `u = u_0`, `v = u_1` and `d` the real column dimension:
///
/// ```text
/// [Δ_u, u²]         = 4𝔼_u + 2d        [⟨u,∇_v⟩, ⟨∇_u,∇_v⟩] = −Δ_v
/// [⟨∇_u,∇_v⟩, u²]   = 2⟨u,∇_v⟩          [Δ_u, ⟨u,∇_v⟩]       = 2⟨∇_u,∇_v⟩
/// [⟨v,∇_u⟩, u²]     = 2⟨u,v⟩            [⟨u,∇_v⟩, ⟨u,v⟩]     = u²
/// [Δ_u, ⟨u,v⟩]      = 2⟨v,∇_u⟩          [⟨∇_u,∇_v⟩, ⟨u,v⟩]   = 𝔼_u + 𝔼_v + d
/// ```
pub fn check_commutators(layout: CoordLayout, trials: u32, seed: u64) -> CheckReport {
    assert!(layout.k >= 2, "mixed relations need at least two columns");
    let d = layout.col_dim() as i64;
    let id = SignedPerm::identity(layout.col_dim());
    let lap_u = column_laplacian(layout, 0);
    let lap_v = column_laplacian(layout, 1);
    let grad_uv = pair_op(layout, 0, 1, &id).expect("valid columns");

    let u2 = |f: &Polynomial| mul_col_pair(f, 0, 0);
    let uv = |f: &Polynomial| mul_col_pair(f, 0, 1);
    let u_dv = |f: &Polynomial| dir_op(f, 0, 1);
    let v_du = |f: &Polynomial| dir_op(f, 1, 0);
    let shift = |f: &Polynomial, c: i64| f.scale(&gauss_i64(c));

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut report = CheckReport::ok(trials);
    for trial in 0..trials {
        let f = if trial == 0 {
            Polynomial::one(layout)
        } else {
            random_polynomial(layout, 5, 8, &mut rng)
        };
        let lap_u_f = lap_u.apply(&f).unwrap();
        let relations: Vec<(&str, Polynomial, Polynomial)> = vec![
            (
                "[lap_u, u^2] = 4 E_u + 2d",
                lap_u.apply(&u2(&f)).unwrap().sub(&u2(&lap_u_f)).unwrap(),
                euler(&f, 0).scale(&gauss_i64(4)).add(&shift(&f, 2 * d)).unwrap(),
            ),
            (
                "[<u,grad_v>, <grad_u,grad_v>] = -lap_v",
                grad_uv.apply(&u_dv(&f)).unwrap().neg().add(&u_dv(&grad_uv.apply(&f).unwrap())).unwrap(),
                lap_v.apply(&f).unwrap().neg(),
            ),
            (
                "[<grad_u,grad_v>, u^2] = 2<u,grad_v>",
                grad_uv.apply(&u2(&f)).unwrap().sub(&u2(&grad_uv.apply(&f).unwrap())).unwrap(),
                shift(&u_dv(&f), 2),
            ),
            (
                "[lap_u, <u,grad_v>] = 2<grad_u,grad_v>",
                lap_u.apply(&u_dv(&f)).unwrap().sub(&u_dv(&lap_u_f)).unwrap(),
                grad_uv.apply(&f).unwrap().scale(&gauss_i64(2)),
            ),
            (
                "[<v,grad_u>, u^2] = 2<u,v>",
                v_du(&u2(&f)).sub(&u2(&v_du(&f))).unwrap(),
                shift(&uv(&f), 2),
            ),
            (
                "[<u,grad_v>, <u,v>] = u^2",
                u_dv(&uv(&f)).sub(&uv(&u_dv(&f))).unwrap(),
                u2(&f),
            ),
            (
                "[lap_u, <u,v>] = 2<v,grad_u>",
                lap_u.apply(&uv(&f)).unwrap().sub(&uv(&lap_u_f)).unwrap(),
                shift(&v_du(&f), 2),
            ),
            (
                "[<grad_u,grad_v>, <u,v>] = E_u + E_v + d",
                grad_uv.apply(&uv(&f)).unwrap().sub(&uv(&grad_uv.apply(&f).unwrap())).unwrap(),
                euler(&f, 0).add(&euler(&f, 1)).unwrap().add(&shift(&f, d)).unwrap(),
            ),
        ];
        for (name, lhs, rhs) in relations {
            if lhs != rhs {
                report.record(format!(
                    "relation `{name}` failed on trial {trial} (witness: {})",
                    crate::algebra::poly_serialize_string(&f)
                ));
            }
        }
        if !report.passed {
            break;
        }
    }
    report
}
