//! Clifford J-matrix sets.
//!
//! A J-set on ℝ^d is a family `J^(0) = 1, J^(1), …, J^(κ−1)` of orthogonal
//! integer matrices with `(J^(i))ᵀ J^(j) + (J^(j))ᵀ J^(i) = 2δ_{ij}·1`; the
//! `J^(i)` for `i > 0` are antisymmetric and pairwise anticommuting. The cases
//! κ = 1, 2, 4 encode the real, complex and quaternion structures underlying
//! the three Stiefel families; general κ is built by block-embedding the
//! quaternion generators.
//!
//! Every matrix here is a signed permutation (one entry ±1 per row), so they
//! apply in O(d) and all verification is exact integer arithmetic.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CliffordError {
    #[error("invalid beta {0}: must be 1, 2 or 4")]
    InvalidBeta(u32),
    #[error("kappa {0} out of range: supported 1..=4")]
    InvalidKappa(u32),
    #[error("dimension {d} incompatible with kappa {kappa}: must be divisible by {min}")]
    IncompatibleDim { kappa: u32, d: usize, min: usize },
}

/// Signed permutation matrix: row `a` has its single nonzero `sign[a]` in
/// column `pos[a]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignedPerm {
    pub pos: Vec<usize>,
    pub sign: Vec<i8>,
}

impl SignedPerm {
    pub fn identity(d: usize) -> Self {
        SignedPerm { pos: (0..d).collect(), sign: vec![1; d] }
    }

    pub fn dim(&self) -> usize {
        self.pos.len()
    }

    /// Matrix entry `M[a][b]` (0 or ±1).
    pub fn entry(&self, a: usize, b: usize) -> i8 {
        if self.pos[a] == b {
            self.sign[a]
        } else {
            0
        }
    }

    /// Apply to a vector: `(Mv)[a] = sign[a] · v[pos[a]]`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        (0..self.dim()).map(|a| self.sign[a] as f64 * v[self.pos[a]]).collect()
    }

    pub fn matmul(&self, other: &SignedPerm) -> SignedPerm {
        let d = self.dim();
        assert_eq!(d, other.dim());
        let mut pos = vec![0usize; d];
        let mut sign = vec![0i8; d];
        for a in 0..d {
            let b = self.pos[a];
            pos[a] = other.pos[b];
            sign[a] = self.sign[a] * other.sign[b];
        }
        SignedPerm { pos, sign }
    }

    pub fn transpose(&self) -> SignedPerm {
        let d = self.dim();
        let mut pos = vec![0usize; d];
        let mut sign = vec![0i8; d];
        for a in 0..d {
            pos[self.pos[a]] = a;
            sign[self.pos[a]] = self.sign[a];
        }
        SignedPerm { pos, sign }
    }

    /// Kronecker product with the t×t identity acting on blocks of size t:
    /// coordinates are flattened as `block·t + offset`.
    pub fn kron_identity(&self, t: usize) -> SignedPerm {
        let d = self.dim() * t;
        let mut pos = vec![0usize; d];
        let mut sign = vec![0i8; d];
        for blk in 0..self.dim() {
            for off in 0..t {
                pos[blk * t + off] = self.pos[blk] * t + off;
                sign[blk * t + off] = self.sign[blk];
            }
        }
        SignedPerm { pos, sign }
    }

    pub fn to_dense(&self) -> Vec<Vec<i64>> {
        let d = self.dim();
        let mut m = vec![vec![0i64; d]; d];
        for a in 0..d {
            m[a][self.pos[a]] = self.sign[a] as i64;
        }
        m
    }
}

/// The 2×2 complex-structure pattern `[[0,1],[-1,0]]`.
fn pattern_complex() -> SignedPerm {
    SignedPerm { pos: vec![1, 0], sign: vec![1, -1] }
}

/// The three 4×4 quaternion-unit patterns (block signs of the standard
/// left-multiplication representation):
///
/// ```text
/// J1 = [[0, 1, 0, 0],   J2 = [[0, 0, 1, 0],   J3 = J1·J2 = [[0, 0, 0, 1],
///       [-1,0, 0, 0],         [0, 0, 0, 1],                 [0, 0,-1, 0],
///       [0, 0, 0,-1],         [-1,0, 0, 0],                 [0, 1, 0, 0],
///       [0, 0, 1, 0]]         [0,-1, 0, 0]]                 [-1,0, 0, 0]]
/// ```
fn pattern_quaternion() -> [SignedPerm; 3] {
    [
        SignedPerm { pos: vec![1, 0, 3, 2], sign: vec![1, -1, -1, 1] },
        SignedPerm { pos: vec![2, 3, 0, 1], sign: vec![1, 1, -1, -1] },
        SignedPerm { pos: vec![3, 2, 1, 0], sign: vec![1, -1, 1, -1] },
    ]
}

/// A verified family `{J^(0)=1, J^(1), …}` of mutually anticommuting
/// orthogonal structure matrices on ℝ^d.
#[derive(Debug, Clone)]
pub struct JSet {
    pub d: usize,
    pub mats: Vec<SignedPerm>,
}

impl JSet {
    pub fn kappa(&self) -> usize {
        self.mats.len()
    }
}

/// J-set for one of the three division algebras on ℝ^{β·n}.
pub fn build_jset(beta: u32, n: usize) -> Result<JSet, CliffordError> {
    match beta {
        1 | 2 | 4 => build_general_jset(beta, beta as usize * n),
        _ => Err(CliffordError::InvalidBeta(beta)),
    }
}

/// General κ-element J-set on ℝ^d, built by tensoring the complex or
/// quaternion generator patterns with an identity block.
pub fn build_general_jset(kappa: u32, d: usize) -> Result<JSet, CliffordError> {
    let min = match kappa {
        1 => 1,
        2 => 2,
        3 | 4 => 4,
        _ => return Err(CliffordError::InvalidKappa(kappa)),
    };
    if d == 0 || d % min != 0 {
        return Err(CliffordError::IncompatibleDim { kappa, d, min });
    }
    let mut mats = vec![SignedPerm::identity(d)];
    match kappa {
        1 => {}
        2 => mats.push(pattern_complex().kron_identity(d / 2)),
        3 | 4 => {
            let q = pattern_quaternion();
            for p in q.iter().take(kappa as usize - 1) {
                mats.push(p.kron_identity(d / 4));
            }
        }
        _ => unreachable!(),
    }
    let js = JSet { d, mats };
    debug_assert!(verify_jset(&js));
    Ok(js)
}

/// Exact integer verification of the defining relations:
/// `(J^(i))ᵀJ^(j) + (J^(j))ᵀJ^(i) = 2δ_{ij}·1`, `J^(0) = 1`, and for `i > 0`
/// antisymmetry and orthogonality.
pub fn verify_jset(js: &JSet) -> bool {
    let d = js.d;
    if js.mats.is_empty() || js.mats.iter().any(|m| m.dim() != d) {
        return false;
    }
    let dense: Vec<Vec<Vec<i64>>> = js.mats.iter().map(|m| m.to_dense()).collect();
    if dense[0] != SignedPerm::identity(d).to_dense() {
        return false;
    }
    for m in &dense[1..] {
        // antisymmetric
        for a in 0..d {
            for b in 0..d {
                if m[a][b] != -m[b][a] {
                    return false;
                }
            }
        }
    }
    for (i, mi) in dense.iter().enumerate() {
        for (j, mj) in dense.iter().enumerate().skip(i) {
            // (J^i)^T J^j + (J^j)^T J^i == 2 delta_ij
            for a in 0..d {
                for b in 0..d {
                    let mut s = 0i64;
                    for c in 0..d {
                        s += mi[c][a] * mj[c][b] + mj[c][a] * mi[c][b];
                    }
                    let expect = if i == j && a == b { 2 } else { 0 };
                    if s != expect {
                        return false;
                    }
                }
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta1_is_identity() {
        let js = build_jset(1, 5).unwrap();
        assert_eq!(js.kappa(), 1);
        assert_eq!(js.mats[0], SignedPerm::identity(5));
        assert!(verify_jset(&js));
    }

    #[test]
    fn beta2_structure() {
        let js = build_jset(2, 3).unwrap();
        assert_eq!(js.d, 6);
        assert!(verify_jset(&js));
        // J^2 = -1
        let j = &js.mats[1];
        let jj = j.matmul(j);
        let d = js.d;
        let minus_one: Vec<Vec<i64>> = (0..d)
            .map(|a| (0..d).map(|b| if a == b { -1 } else { 0 }).collect())
            .collect();
        assert_eq!(jj.to_dense(), minus_one);
    }

    #[test]
    fn quaternion_multiplication_table() {
        let js = build_jset(4, 3).unwrap();
        assert!(verify_jset(&js));
        let (j1, j2, j3) = (&js.mats[1], &js.mats[2], &js.mats[3]);
        assert_eq!(j1.matmul(j2), j3.clone());
        assert_eq!(j2.matmul(j3), j1.clone());
        assert_eq!(j3.matmul(j1), j2.clone());
        for j in [j1, j2, j3] {
            let sq = j.matmul(j).to_dense();
            for a in 0..js.d {
                for b in 0..js.d {
                    assert_eq!(sq[a][b], if a == b { -1 } else { 0 });
                }
            }
        }
    }

    #[test]
    fn general_sets() {
        assert_eq!(build_general_jset(1, 7).unwrap().kappa(), 1);
        let k2 = build_general_jset(2, 2).unwrap();
        assert_eq!(k2.mats[1].to_dense(), vec![vec![0, 1], vec![-1, 0]]);
        let k3 = build_general_jset(3, 4).unwrap();
        assert_eq!(k3.kappa(), 3);
        assert!(verify_jset(&k3));
        assert!(build_general_jset(3, 6).is_err());
        assert!(build_general_jset(5, 8).is_err());
        assert!(build_jset(3, 4).is_err());
    }

    #[test]
    fn verify_rejects_broken_sets() {
        let mut js = build_jset(4, 2).unwrap();
        // zero out the identity
        js.mats[0].sign = vec![0; js.d];
        assert!(!verify_jset(&js));
        let mut js2 = build_jset(2, 2).unwrap();
        js2.mats[1].sign[0] = -js2.mats[1].sign[0];
        assert!(!verify_jset(&js2));
    }
}
