//! Independent integration oracles: Haar samplers for the three group
//! families, reproducible parallel Monte Carlo, closed-form sphere moments
//! and low-dimensional angle quadrature.
//!
//! Sampling uses the QR construction: a Ginibre matrix orthonormalized by
//! modified Gram–Schmidt (with one re-orthogonalization pass) in real,
//! complex or quaternion arithmetic. Gram–Schmidt makes every R-diagonal
//! entry a positive real, which is exactly the diagonal fix required for the
//! result to be Haar rather than merely invariant up to signs/phases. For
//! β = 4 the quaternion arithmetic keeps the self-conjugacy structure of the
//! complex embedding exact by construction.
//!
//! Monte Carlo is blocked: each block of `MC_BLOCK` samples draws from its
//! own counter-indexed ChaCha stream and keeps streaming (count, mean, M2)
//! statistics; block results are merged in fixed order, so the estimate is
//! bit-identical for a given seed regardless of thread count. The block size
//! is part of the reproducibility contract.

use crate::algebra::{rat, CompiledPoly, CoordLayout, Polynomial, Rational};
use crate::pizzetti::StiefelSpec;
use num_complex::Complex64;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

/// Samples per RNG stream; fixed as part of the determinism contract.
pub const MC_BLOCK: u64 = 8192;

#[derive(Debug, Error)]
pub enum HaarError {
    #[error("Monte Carlo integrand must have real coefficients")]
    ComplexIntegrand,
    #[error("quadrature not implemented for spec (beta={beta}, n={n}, k={k})")]
    UnsupportedQuadrature { beta: u32, n: u32, k: u32 },
    #[error("polynomial layout {got} does not match spec layout {expected}")]
    WrongLayout { expected: CoordLayout, got: CoordLayout },
}

/// The first k columns of a Haar-distributed group element, stored as flat
/// real coordinates in layout order.
#[derive(Debug, Clone)]
pub struct HaarSample {
    pub coords: Vec<f64>,
}

/// Monte Carlo estimate with standard error `s/√N`.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Quat([f64; 4]);

impl Quat {
    fn conj(self) -> Quat {
        Quat([self.0[0], -self.0[1], -self.0[2], -self.0[3]])
    }

    fn mul(self, p: Quat) -> Quat {
        let q = self.0;
        let p = p.0;
        Quat([
            q[0] * p[0] - q[1] * p[1] - q[2] * p[2] - q[3] * p[3],
            q[0] * p[1] + q[1] * p[0] + q[2] * p[3] - q[3] * p[2],
            q[0] * p[2] - q[1] * p[3] + q[2] * p[0] + q[3] * p[1],
            q[0] * p[3] + q[1] * p[2] - q[2] * p[1] + q[3] * p[0],
        ])
    }

    fn scale(self, s: f64) -> Quat {
        Quat([self.0[0] * s, self.0[1] * s, self.0[2] * s, self.0[3] * s])
    }

    fn sub(self, p: Quat) -> Quat {
        Quat([self.0[0] - p.0[0], self.0[1] - p.0[1], self.0[2] - p.0[2], self.0[3] - p.0[3]])
    }

    fn zero() -> Quat {
        Quat([0.0; 4])
    }
}

/// Draw one Haar sample of the first k columns of `U^(β)(n)`.
pub fn sample_stiefel<R: Rng>(spec: &StiefelSpec, rng: &mut R) -> HaarSample {
    let layout = spec.layout();
    let n = spec.n as usize;
    let k = spec.k as usize;
    let mut coords = vec![0.0f64; layout.dim()];
    match spec.beta {
        1 => {
            let cols = gram_schmidt(n, k, rng, |r| r.sample::<f64, _>(StandardNormal), metric_real());
            for (c, col) in cols.iter().enumerate() {
                for (r, &x) in col.iter().enumerate() {
                    coords[layout.index(c as u32, 0, r as u32)] = x;
                }
            }
        }
        2 => {
            let draw = |r: &mut R| {
                Complex64::new(r.sample::<f64, _>(StandardNormal), r.sample::<f64, _>(StandardNormal))
            };
            let cols = gram_schmidt(n, k, rng, draw, metric_complex());
            for (c, col) in cols.iter().enumerate() {
                for (r, z) in col.iter().enumerate() {
                    coords[layout.index(c as u32, 0, r as u32)] = z.re;
                    coords[layout.index(c as u32, 1, r as u32)] = z.im;
                }
            }
        }
        4 => {
            let draw = |r: &mut R| {
                Quat([
                    r.sample::<f64, _>(StandardNormal),
                    r.sample::<f64, _>(StandardNormal),
                    r.sample::<f64, _>(StandardNormal),
                    r.sample::<f64, _>(StandardNormal),
                ])
            };
            let cols = gram_schmidt(n, k, rng, draw, metric_quat());
            for (c, col) in cols.iter().enumerate() {
                for (r, q) in col.iter().enumerate() {
                    for comp in 0..4 {
                        coords[layout.index(c as u32, comp as u32, r as u32)] = q.0[comp];
                    }
                }
            }
        }
        _ => unreachable!("validated beta"),
    }
    HaarSample { coords }
}

struct Metric<T> {
    dot: fn(&[T], &[T]) -> T, // sum conj(a_i) b_i
    axpy: fn(&mut [T], T, &[T]), // v_i -= u_i · c (right-module projection)
    re: fn(&T) -> f64,
    scale: fn(&mut [T], f64),
}

fn metric_real() -> Metric<f64> {
    Metric {
        dot: |a, b| a.iter().zip(b).map(|(x, y)| x * y).sum(),
        axpy: |v, c, u| v.iter_mut().zip(u).for_each(|(x, y)| *x -= y * c),
        re: |c| *c,
        scale: |v, s| v.iter_mut().for_each(|x| *x *= s),
    }
}

fn metric_complex() -> Metric<Complex64> {
    Metric {
        dot: |a, b| a.iter().zip(b).map(|(x, y)| x.conj() * y).sum(),
        axpy: |v, c, u| v.iter_mut().zip(u).for_each(|(x, y)| *x -= y * c),
        re: |c| c.re,
        scale: |v, s| v.iter_mut().for_each(|x| *x *= s),
    }
}

fn metric_quat() -> Metric<Quat> {
    Metric {
        dot: |a, b| {
            a.iter().zip(b).fold(Quat::zero(), |acc, (x, y)| {
                let p = x.conj().mul(*y);
                Quat([acc.0[0] + p.0[0], acc.0[1] + p.0[1], acc.0[2] + p.0[2], acc.0[3] + p.0[3]])
            })
        },
        axpy: |v, c, u| v.iter_mut().zip(u).for_each(|(x, y)| *x = x.sub(y.mul(c))),
        re: |c| c.0[0],
        scale: |v, s| v.iter_mut().for_each(|x| *x = x.scale(s)),
    }
}

/// Modified Gram–Schmidt with one re-orthogonalization pass; redraws a column
/// on (measure-zero) rank deficiency. The diagonal normalizers are positive
/// reals, which is the Haar-correct choice of QR representative.
fn gram_schmidt<T: Copy, R: Rng>(
    n: usize,
    k: usize,
    rng: &mut R,
    mut draw: impl FnMut(&mut R) -> T,
    m: Metric<T>,
) -> Vec<Vec<T>> {
    let mut cols: Vec<Vec<T>> = Vec::with_capacity(k);
    for _ in 0..k {
        loop {
            let mut v: Vec<T> = (0..n).map(|_| draw(rng)).collect();
            for _pass in 0..2 {
                for q in &cols {
                    let c = (m.dot)(q, &v);
                    (m.axpy)(&mut v, c, q);
                }
            }
            let norm = (m.re)(&(m.dot)(&v, &v)).sqrt();
            if norm > 1e-8 {
                (m.scale)(&mut v, 1.0 / norm);
                cols.push(v);
                break;
            }
        }
    }
    cols
}

/// Streaming (count, mean, M2) accumulator.
#[derive(Debug, Clone, Copy, Default)]
struct Welford {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    fn merge(self, other: Welford) -> Welford {
        if self.count == 0 {
            return other;
        }
        if other.count == 0 {
            return self;
        }
        let count = self.count + other.count;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * other.count as f64 / count as f64;
        let m2 = self.m2
            + other.m2
            + delta * delta * (self.count as f64) * (other.count as f64) / count as f64;
        Welford { count, mean, m2 }
    }

    fn estimate(self, seed: u64) -> McEstimate {
        let stderr = if self.count > 1 {
            (self.m2 / (self.count - 1) as f64).sqrt() / (self.count as f64).sqrt()
        } else {
            0.0
        };
        McEstimate { mean: self.mean, stderr, samples: self.count, seed }
    }
}

/// Monte Carlo estimate of the Haar integral of a real-valued function of
/// the sample coordinates. Deterministic for fixed seed and sample count,
/// independent of thread count.
pub fn mc_integrate_fn<F>(spec: &StiefelSpec, f: F, samples: u64, seed: u64) -> McEstimate
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let blocks = samples.div_ceil(MC_BLOCK);
    let stats: Vec<Welford> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            rng.set_stream(b);
            let count = MC_BLOCK.min(samples - b * MC_BLOCK);
            let mut w = Welford::default();
            for _ in 0..count {
                let s = sample_stiefel(spec, &mut rng);
                w.push(f(&s.coords));
            }
            w
        })
        .collect();
    stats.into_iter().fold(Welford::default(), Welford::merge).estimate(seed)
}

/// Monte Carlo estimate of the Haar integral of a real polynomial.
pub fn mc_integrate(
    spec: &StiefelSpec,
    f: &Polynomial,
    samples: u64,
    seed: u64,
) -> Result<McEstimate, HaarError> {
    if f.layout() != spec.layout() {
        return Err(HaarError::WrongLayout { expected: spec.layout(), got: f.layout() });
    }
    if !f.is_real() {
        return Err(HaarError::ComplexIntegrand);
    }
    let compiled: CompiledPoly = f.compile();
    Ok(mc_integrate_fn(spec, |x| compiled.eval_real(x), samples, seed))
}

/// Exact moment of a monomial over the unit sphere `S^{N−1}`:
/// zero if any exponent is odd, else `Π_i (α_i−1)!! / Π_{j<|α|/2} (N+2j)`.
///
/// This is the classical Beta-function sphere moment, independent of the
/// operator engines by construction.
pub fn sphere_monomial_moment(n_dim: usize, exponents: &[u32]) -> Rational {
    if exponents.iter().any(|&e| e % 2 == 1) {
        return Rational::zero();
    }
    let total: u32 = exponents.iter().sum();
    let mut num = Rational::one();
    for &e in exponents {
        let mut t = 1i64;
        let mut x = e as i64 - 1;
        while x >= 2 {
            t *= x;
            x -= 2;
        }
        num *= rat(t);
    }
    let mut den = Rational::one();
    for j in 0..(total / 2) {
        den *= rat(n_dim as i64 + 2 * j as i64);
    }
    num / den
}

/// Gauss–Legendre nodes and weights on (−1, 1).
pub fn legendre_nodes(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            // P_n(x) and P_n'(x) by recurrence
            let (mut p0, mut p1) = (1.0f64, x);
            for m in 2..=n {
                let p2 = ((2 * m - 1) as f64 * x * p1 - (m - 1) as f64 * p0) / m as f64;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (mut p0, mut p1) = (1.0f64, x);
        for m in 2..=n {
            let p2 = ((2 * m - 1) as f64 * x * p1 - (m - 1) as f64 * p0) / m as f64;
            p0 = p1;
            p1 = p2;
        }
        let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// Quadrature oracle on the angle parametrizations of SO(2), SO(3) (Euler
/// angles with sin weight) and U(1). Product Gauss–Legendre with `nodes`
/// points per angle.
pub fn low_dim_quadrature(
    spec: &StiefelSpec,
    f: &Polynomial,
    nodes: usize,
) -> Result<f64, HaarError> {
    if f.layout() != spec.layout() {
        return Err(HaarError::WrongLayout { expected: spec.layout(), got: f.layout() });
    }
    let compiled = f.compile();
    let layout = spec.layout();
    let gl = legendre_nodes(nodes);
    let two_pi = 2.0 * std::f64::consts::PI;
    match (spec.beta, spec.n, spec.k) {
        (1, 2, 2) => {
            // SO(2): u = (cos t, sin t), v = (-sin t, cos t)
            let mut acc = 0.0;
            let mut point = vec![0.0; layout.dim()];
            for &(x, w) in &gl {
                let t = 0.5 * (x + 1.0) * two_pi;
                point[layout.index(0, 0, 0)] = t.cos();
                point[layout.index(0, 0, 1)] = t.sin();
                point[layout.index(1, 0, 0)] = -t.sin();
                point[layout.index(1, 0, 1)] = t.cos();
                acc += w * 0.5 * compiled.eval_real(&point);
            }
            Ok(acc)
        }
        (2, 1, 1) => {
            // U(1): single phase
            let mut acc = 0.0;
            let mut point = vec![0.0; layout.dim()];
            for &(x, w) in &gl {
                let t = 0.5 * (x + 1.0) * two_pi;
                point[layout.index(0, 0, 0)] = t.cos();
                point[layout.index(0, 1, 0)] = t.sin();
                acc += w * 0.5 * compiled.eval_real(&point);
            }
            Ok(acc)
        }
        (1, 3, k) if k <= 3 => {
            // SO(3) in ZYZ Euler angles, measure sin(b) da db dg / (8 pi^2)
            let mut acc = 0.0;
            let mut point = vec![0.0; layout.dim()];
            for &(xa, wa) in &gl {
                let a = 0.5 * (xa + 1.0) * two_pi;
                for &(xb, wb) in &gl {
                    let b = 0.5 * (xb + 1.0) * std::f64::consts::PI;
                    for &(xg, wg) in &gl {
                        let g = 0.5 * (xg + 1.0) * two_pi;
                        let r = so3_euler(a, b, g);
                        for c in 0..k {
                            for row in 0..3 {
                                point[layout.index(c, 0, row)] = r[row as usize][c as usize];
                            }
                        }
                        // (2pi/2)(pi/2)(2pi/2) Jacobians / (8 pi^2) = pi/16 * sin b
                        let weight = wa * wb * wg * b.sin() * std::f64::consts::PI / 16.0;
                        acc += weight * compiled.eval_real(&point);
                    }
                }
            }
            Ok(acc)
        }
        _ => Err(HaarError::UnsupportedQuadrature { beta: spec.beta, n: spec.n, k: spec.k }),
    }
}

fn so3_euler(a: f64, b: f64, g: f64) -> [[f64; 3]; 3] {
    let (ca, sa) = (a.cos(), a.sin());
    let (cb, sb) = (b.cos(), b.sin());
    let (cg, sg) = (g.cos(), g.sin());
    // Rz(a) * Ry(b) * Rz(g)
    [
        [ca * cb * cg - sa * sg, -ca * cb * sg - sa * cg, ca * sb],
        [sa * cb * cg + ca * sg, -sa * cb * sg + ca * cg, sa * sb],
        [-sb * cg, sb * sg, cb],
    ]
}

// ---------------------------------------------------------------------------
// Residuals for sampler quality checks
// ---------------------------------------------------------------------------

/// Max-norm residual of `A†A − 1` for a sample, computed in the native
/// arithmetic of the β family.
pub fn orthonormality_residual(spec: &StiefelSpec, s: &HaarSample) -> f64 {
    let layout = spec.layout();
    let n = spec.n as usize;
    let k = spec.k as usize;
    let mut res = 0.0f64;
    match spec.beta {
        1 => {
            for i in 0..k {
                for j in 0..k {
                    let mut d = 0.0;
                    for r in 0..n {
                        d += s.coords[layout.index(i as u32, 0, r as u32)]
                            * s.coords[layout.index(j as u32, 0, r as u32)];
                    }
                    res = res.max((d - if i == j { 1.0 } else { 0.0 }).abs());
                }
            }
        }
        2 => {
            for i in 0..k {
                for j in 0..k {
                    let mut d = Complex64::new(0.0, 0.0);
                    for r in 0..n {
                        let zi = Complex64::new(
                            s.coords[layout.index(i as u32, 0, r as u32)],
                            s.coords[layout.index(i as u32, 1, r as u32)],
                        );
                        let zj = Complex64::new(
                            s.coords[layout.index(j as u32, 0, r as u32)],
                            s.coords[layout.index(j as u32, 1, r as u32)],
                        );
                        d += zi.conj() * zj;
                    }
                    res = res.max((d - if i == j { 1.0 } else { 0.0 }).norm());
                }
            }
        }
        4 => {
            for i in 0..k {
                for j in 0..k {
                    let mut d = Quat::zero();
                    for r in 0..n {
                        let get = |c: usize, comp: usize| {
                            s.coords[layout.index(c as u32, comp as u32, r as u32)]
                        };
                        let qi = Quat([get(i, 0), get(i, 1), get(i, 2), get(i, 3)]);
                        let qj = Quat([get(j, 0), get(j, 1), get(j, 2), get(j, 3)]);
                        let p = qi.conj().mul(qj);
                        d = Quat([
                            d.0[0] + p.0[0],
                            d.0[1] + p.0[1],
                            d.0[2] + p.0[2],
                            d.0[3] + p.0[3],
                        ]);
                    }
                    let target = if i == j { 1.0 } else { 0.0 };
                    let r2 = (d.0[0] - target).powi(2) + d.0[1].powi(2) + d.0[2].powi(2) + d.0[3].powi(2);
                    res = res.max(r2.sqrt());
                }
            }
        }
        _ => unreachable!(),
    }
    res
}

/// Complex 2n×2k embedding of a β = 4 sample.
pub fn quaternion_embedding(spec: &StiefelSpec, s: &HaarSample) -> Vec<Vec<Complex64>> {
    assert_eq!(spec.beta, 4);
    let layout = spec.layout();
    let n = spec.n as usize;
    let k = spec.k as usize;
    let mut a = vec![vec![Complex64::new(0.0, 0.0); 2 * k]; 2 * n];
    // block layout (rows r / n+r, columns c / k+c) matching the enlarged
    // Pauli matrices tau2^(n), tau2^(k)
    for c in 0..k {
        for r in 0..n {
            let get = |comp: usize| s.coords[layout.index(c as u32, comp as u32, r as u32)];
            let (q0, q1, q2, q3) = (get(0), get(1), get(2), get(3));
            a[r][c] = Complex64::new(q0, q1);
            a[r][k + c] = Complex64::new(q2, q3);
            a[n + r][c] = Complex64::new(-q2, q3);
            a[n + r][k + c] = Complex64::new(q0, -q1);
        }
    }
    a
}

/// Residual of the self-conjugacy structure `A* = τ₂^(n) A τ₂^(k)` of the
/// complex embedding (exactly zero by construction; checked numerically).
pub fn quaternion_structure_residual(spec: &StiefelSpec, s: &HaarSample) -> f64 {
    let a = quaternion_embedding(spec, s);
    let n = spec.n as usize;
    let k = spec.k as usize;
    // tau2^(d)[p][q] = -i at (p, p+d) for p < d and +i at (p, p-d) for p >= d
    let tau = |p: usize, q: usize, d: usize| -> Complex64 {
        if p < d && q == p + d {
            Complex64::new(0.0, -1.0)
        } else if p >= d && q == p - d {
            Complex64::new(0.0, 1.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    };
    let mut res = 0.0f64;
    for p in 0..2 * n {
        for q in 0..2 * k {
            let mut v = Complex64::new(0.0, 0.0);
            for r in 0..2 * n {
                let lp = tau(p, r, n);
                if lp.norm_sqr() == 0.0 {
                    continue;
                }
                for c in 0..2 * k {
                    v += lp * a[r][c] * tau(c, q, k);
                }
            }
            res = res.max((a[p][q].conj() - v).norm());
        }
    }
    res
}
