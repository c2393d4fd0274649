//! Dense symmetric positive-definite matrices with rank-1 updates, Cholesky
//! solves, and Mahalanobis norms.
//!
//! Every estimator in this crate maintains its design matrix directly and
//! solves on demand through a [`Cholesky`] factor; no inverse is ever
//! tracked incrementally. Dimensions stay small (tens), so the O(d^3)
//! factorization per refresh is cheap and numerically safer than an
//! incrementally updated inverse. The rank-1 quadratic-form identity used
//! by the key-term selection fast path is exposed as
//! [`rank_one_updated_quadratic`].

use crate::error::{Error, Result};

/// Residual guarantee of [`PsdMatrix::solve`]: ||M v - b|| <= SOLVE_TOL * (1 + ||b||).
pub const SOLVE_TOL: f64 = 1e-8;

/// Absolute symmetry tolerance enforced when building from raw rows.
pub const SYMMETRY_TOL: f64 = 1e-9;

/// Quadratic forms may go this far negative before being treated as errors
/// rather than rounding noise.
pub const QUADRATIC_FORM_TOL: f64 = -1e-12;

/// Dense symmetric matrix, row-major, kept exactly symmetric by
/// construction: every mutation writes both triangles from one product.
///
/// Positive definiteness is not checked on every mutation; it holds by
/// construction for matrices of the form c*I + sum of w*x*x^T with c > 0,
/// w >= 0, and is verified at factorization time.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl PsdMatrix {
    /// `scale * I`. `scale` must be positive for the result to be PD.
    pub fn scaled_identity(dim: usize, scale: f64) -> Self {
        assert!(dim > 0, "matrix dimension must be positive");
        let mut data = vec![0.0; dim * dim];
        for i in 0..dim {
            data[i * dim + i] = scale;
        }
        PsdMatrix { dim, data }
    }

    /// Builds from explicit rows, enforcing squareness and symmetry within
    /// [`SYMMETRY_TOL`]. Entries are symmetrized (averaged) on ingest.
    #[allow(clippy::needless_range_loop)] // pairwise (i, j)/(j, i) access
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 || rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Config(format!(
                "expected square matrix, got {} rows of lengths {:?}",
                dim,
                rows.iter().map(Vec::len).collect::<Vec<_>>()
            )));
        }
        for i in 0..dim {
            for j in (i + 1)..dim {
                let gap = (rows[i][j] - rows[j][i]).abs();
                if !(gap <= SYMMETRY_TOL) {
                    return Err(Error::Config(format!(
                        "matrix not symmetric at ({i},{j}): |{} - {}| = {gap:.3e}",
                        rows[i][j], rows[j][i]
                    )));
                }
            }
        }
        let mut data = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                data[i * dim + j] = 0.5 * (rows[i][j] + rows[j][i]);
            }
        }
        Ok(PsdMatrix { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    /// M += w * x * x^T, in place. w must be nonnegative to preserve
    /// positive definiteness.
    pub fn rank_one_update(&mut self, x: &[f64], w: f64) {
        assert_eq!(x.len(), self.dim, "rank-1 update dimension mismatch");
        assert!(w >= 0.0, "rank-1 update weight must be nonnegative, got {w}");
        for i in 0..self.dim {
            let wi = w * x[i];
            let row = &mut self.data[i * self.dim..(i + 1) * self.dim];
            for (entry, &xj) in row.iter_mut().zip(x) {
                *entry += wi * xj;
            }
        }
    }

    /// M -= w * x x^T. The caller is responsible for keeping the matrix
    /// positive definite: the intended use is replacing one arm's
    /// contribution (downdate immediately followed by an update with the
    /// same weight), which preserves the ridge floor.
    pub fn rank_one_downdate(&mut self, x: &[f64], w: f64) {
        assert_eq!(x.len(), self.dim, "rank-1 downdate dimension mismatch");
        assert!(w >= 0.0, "rank-1 downdate weight must be nonnegative, got {w}");
        for i in 0..self.dim {
            let wi = w * x[i];
            let row = &mut self.data[i * self.dim..(i + 1) * self.dim];
            for (entry, &xj) in row.iter_mut().zip(x) {
                *entry -= wi * xj;
            }
        }
    }

    /// x^T M x (direct quadratic form, no factorization).
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim, "quadratic form dimension mismatch");
        let mut acc = 0.0;
        for i in 0..self.dim {
            let row = &self.data[i * self.dim..(i + 1) * self.dim];
            let mut rowdot = 0.0;
            for (&m, &xj) in row.iter().zip(x) {
                rowdot += m * xj;
            }
            acc += x[i] * rowdot;
        }
        acc
    }

    /// M * x.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim, "mat-vec dimension mismatch");
        (0..self.dim)
            .map(|i| dot(&self.data[i * self.dim..(i + 1) * self.dim], x))
            .collect()
    }

    /// Lower-triangular Cholesky factor. Fails with a pivot diagnostic when
    /// the matrix is not numerically positive definite.
    pub fn cholesky(&self) -> Result<Cholesky> {
        let n = self.dim;
        let mut lower = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut sum = self.data[i * n + j];
                for k in 0..j {
                    sum -= lower[i * n + k] * lower[j * n + k];
                }
                if i == j {
                    if !(sum > 0.0) {
                        return Err(Error::NotPositiveDefinite {
                            pivot: i,
                            value: sum,
                        });
                    }
                    lower[i * n + i] = sum.sqrt();
                } else {
                    lower[i * n + j] = sum / lower[j * n + j];
                }
            }
        }
        Ok(Cholesky { dim: n, lower })
    }

    /// Solves M v = b through a fresh factorization.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        Ok(self.cholesky()?.solve(b))
    }

    /// sqrt(x^T M x) in direct mode, sqrt(x^T M^-1 x) in inverse mode.
    pub fn mahalanobis_norm(&self, x: &[f64], mode: NormMode) -> Result<f64> {
        let q = match mode {
            NormMode::Direct => self.quadratic_form(x),
            NormMode::Inverse => self.cholesky()?.inverse_quadratic(x),
        };
        nonnegative_sqrt(q)
    }
}

/// Which bilinear form a Mahalanobis norm uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormMode {
    /// sqrt(x^T M x)
    Direct,
    /// sqrt(x^T M^-1 x)
    Inverse,
}

/// Lower-triangular Cholesky factor of a [`PsdMatrix`]; the workhorse for
/// all per-round solves. Factor once per refresh, reuse for every arm.
#[derive(Debug, Clone)]
pub struct Cholesky {
    dim: usize,
    lower: Vec<f64>,
}

impl Cholesky {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Solves M v = b (forward then backward substitution).
    #[allow(clippy::needless_range_loop)] // strided triangular access
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut v = self.forward(b);
        let n = self.dim;
        // L^T v = y, solved bottom-up.
        for i in (0..n).rev() {
            let mut sum = v[i];
            for k in (i + 1)..n {
                sum -= self.lower[k * n + i] * v[k];
            }
            v[i] = sum / self.lower[i * n + i];
        }
        v
    }

    /// Solves L z = b; `||z||^2` is then `b^T M^-1 b`.
    #[allow(clippy::needless_range_loop)] // strided triangular access
    pub fn forward(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.dim, "solve dimension mismatch");
        let n = self.dim;
        let mut z = vec![0.0; n];
        for i in 0..n {
            let mut sum = b[i];
            for k in 0..i {
                sum -= self.lower[i * n + k] * z[k];
            }
            z[i] = sum / self.lower[i * n + i];
        }
        z
    }

    /// x^T M^-1 x via one forward substitution.
    pub fn inverse_quadratic(&self, x: &[f64]) -> f64 {
        self.forward(x).iter().map(|z| z * z).sum()
    }
}

/// y^T (M + x x^T)^-1 y expressed in quadratic forms of M^-1: given
/// q_yy = y^T M^-1 y, q_yx = y^T M^-1 x, q_xx = x^T M^-1 x, the rank-1
/// inverse-update identity gives q_yy - q_yx^2 / (1 + q_xx).
///
/// This lets key-term scoring simulate a rank-1 update per candidate
/// without refactorizing.
pub fn rank_one_updated_quadratic(q_yy: f64, q_yx: f64, q_xx: f64) -> f64 {
    q_yy - q_yx * q_yx / (1.0 + q_xx)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

fn nonnegative_sqrt(q: f64) -> Result<f64> {
    if q < QUADRATIC_FORM_TOL {
        Err(Error::NegativeQuadraticForm { value: q })
    } else {
        Ok(q.max(0.0).sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_vec(rng: &mut StdRng, d: usize) -> Vec<f64> {
        (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    /// c*I + sum of random rank-1 terms, together with the pieces that
    /// built it so tests can recompute from scratch.
    fn random_psd(rng: &mut StdRng, d: usize, terms: usize) -> (PsdMatrix, f64, Vec<(Vec<f64>, f64)>) {
        let c = rng.random_range(0.1..2.0);
        let mut m = PsdMatrix::scaled_identity(d, c);
        let mut parts = Vec::new();
        for _ in 0..terms {
            let x = random_vec(rng, d);
            let w = rng.random_range(0.0..2.0);
            m.rank_one_update(&x, w);
            parts.push((x, w));
        }
        (m, c, parts)
    }

    fn to_na(m: &PsdMatrix) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(m.dim(), m.dim(), |i, j| m.get(i, j))
    }

    #[test]
    fn rank_one_identity_cases() {
        let mut m = PsdMatrix::scaled_identity(2, 1.0);
        m.rank_one_update(&[1.0, 0.0], 1.0);
        assert_eq!(
            (m.get(0, 0), m.get(0, 1), m.get(1, 0), m.get(1, 1)),
            (2.0, 0.0, 0.0, 1.0)
        );

        let mut m = PsdMatrix::scaled_identity(2, 1.0);
        m.rank_one_update(&[1.0, 1.0], 0.5);
        assert_eq!(
            (m.get(0, 0), m.get(0, 1), m.get(1, 0), m.get(1, 1)),
            (1.5, 0.5, 0.5, 1.5)
        );
    }

    #[test]
    fn incremental_matches_from_scratch_summation() {
        let mut rng = StdRng::seed_from_u64(7);
        let d = 5;
        let (m, c, parts) = random_psd(&mut rng, d, 12);
        for i in 0..d {
            for j in 0..d {
                let mut want = if i == j { c } else { 0.0 };
                for (x, w) in &parts {
                    want += w * x[i] * x[j];
                }
                assert!(
                    (m.get(i, j) - want).abs() < 1e-10,
                    "entry ({i},{j}): {} vs {}",
                    m.get(i, j),
                    want
                );
            }
        }
    }

    #[test]
    fn solve_scaled_identity() {
        let m = PsdMatrix::scaled_identity(2, 2.0);
        let v = m.solve(&[4.0, 0.0]).unwrap();
        assert!((v[0] - 2.0).abs() < 1e-12 && v[1].abs() < 1e-12);
    }

    #[test]
    fn solve_hand_inverted_2x2() {
        let m = PsdMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let v = m.solve(&[3.0, 3.0]).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-12 && (v[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn solve_residual_and_lu_oracle() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..20 {
            let d = 8;
            let (m, _, _) = random_psd(&mut rng, d, 20);
            let b = random_vec(&mut rng, d);
            let v = m.solve(&b).unwrap();

            let residual: f64 = norm2(
                &m.mul_vec(&v)
                    .iter()
                    .zip(&b)
                    .map(|(mv, bi)| mv - bi)
                    .collect::<Vec<_>>(),
            );
            assert!(residual <= SOLVE_TOL * (1.0 + norm2(&b)), "residual {residual:.3e}");

            let oracle = to_na(&m)
                .lu()
                .solve(&nalgebra::DVector::from_column_slice(&b))
                .unwrap();
            for i in 0..d {
                assert!((v[i] - oracle[i]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn non_pd_matrix_reports_pivot() {
        let m = PsdMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        match m.cholesky() {
            Err(Error::NotPositiveDefinite { pivot, value }) => {
                assert_eq!(pivot, 1);
                assert!(value <= 0.0);
            }
            other => panic!("expected NotPositiveDefinite, got {other:?}"),
        }
    }

    #[test]
    fn asymmetric_rows_rejected() {
        let err = PsdMatrix::from_rows(&[vec![1.0, 0.1], vec![0.0, 1.0]]).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn mahalanobis_trivial_cases() {
        let id = PsdMatrix::scaled_identity(2, 1.0);
        assert_eq!(id.mahalanobis_norm(&[1.0, 0.0], NormMode::Direct).unwrap(), 1.0);

        let four = PsdMatrix::scaled_identity(2, 4.0);
        let got = four.mahalanobis_norm(&[1.0, 0.0], NormMode::Inverse).unwrap();
        assert!((got - 0.5).abs() < 1e-12);
    }

    #[test]
    fn mahalanobis_inverse_matches_explicit_inverse() {
        let mut rng = StdRng::seed_from_u64(23);
        for _ in 0..20 {
            let d = 6;
            let (m, _, _) = random_psd(&mut rng, d, 10);
            let x = random_vec(&mut rng, d);
            let got = m.mahalanobis_norm(&x, NormMode::Inverse).unwrap();

            let inv = to_na(&m).try_inverse().unwrap();
            let xv = nalgebra::DVector::from_column_slice(&x);
            let want = (xv.transpose() * inv * xv)[(0, 0)].sqrt();
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
    }

    proptest! {
        #[test]
        fn prop_incremental_equals_from_scratch(seed in 0u64..500) {
            let mut rng = StdRng::seed_from_u64(seed);
            let d = rng.random_range(1..7usize);
            let terms = rng.random_range(0..15usize);
            let (m, c, parts) = random_psd(&mut rng, d, terms);
            for i in 0..d {
                for j in 0..d {
                    let mut want = if i == j { c } else { 0.0 };
                    for (x, w) in &parts {
                        want += w * x[i] * x[j];
                    }
                    prop_assert!((m.get(i, j) - want).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn prop_rank_one_quadratic_matches_refactorization(seed in 0u64..500) {
            let mut rng = StdRng::seed_from_u64(seed);
            let d = rng.random_range(1..7usize);
            let (m, _, _) = random_psd(&mut rng, d, 8);
            let x = random_vec(&mut rng, d);
            let y = random_vec(&mut rng, d);

            let chol = m.cholesky().unwrap();
            let m_inv_x = chol.solve(&x);
            let fast = rank_one_updated_quadratic(
                chol.inverse_quadratic(&y),
                dot(&y, &m_inv_x),
                dot(&x, &m_inv_x),
            );

            let mut updated = m.clone();
            updated.rank_one_update(&x, 1.0);
            let slow = updated.cholesky().unwrap().inverse_quadratic(&y);
            prop_assert!((fast - slow).abs() <= 1e-8 * (1.0 + slow.abs()),
                "{fast} vs {slow}");
        }

        #[test]
        fn prop_mahalanobis_degree_one_homogeneous(seed in 0u64..300, scale in -4.0f64..4.0) {
            let mut rng = StdRng::seed_from_u64(seed);
            let d = rng.random_range(1..6usize);
            let (m, _, _) = random_psd(&mut rng, d, 6);
            let x = random_vec(&mut rng, d);
            let scaled: Vec<f64> = x.iter().map(|v| v * scale).collect();
            for mode in [NormMode::Direct, NormMode::Inverse] {
                let base = m.mahalanobis_norm(&x, mode).unwrap();
                let got = m.mahalanobis_norm(&scaled, mode).unwrap();
                prop_assert!((got - scale.abs() * base).abs() < 1e-8 * (1.0 + base));
            }
        }

        #[test]
        fn prop_solve_residual_bound(seed in 0u64..300) {
            let mut rng = StdRng::seed_from_u64(seed);
            let d = rng.random_range(1..9usize);
            let (m, _, _) = random_psd(&mut rng, d, 2 * d);
            let b = random_vec(&mut rng, d);
            let v = m.solve(&b).unwrap();
            let r: Vec<f64> = m.mul_vec(&v).iter().zip(&b).map(|(mv, bi)| mv - bi).collect();
            prop_assert!(norm2(&r) <= SOLVE_TOL * (1.0 + norm2(&b)));
        }
    }
}
