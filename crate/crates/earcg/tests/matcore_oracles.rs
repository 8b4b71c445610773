//! Oracle tests for the dense Hermitian kernels.
//!
//! The Lyapunov and Sylvester solvers are checked against Kronecker-vectorized
//! dense solves: `S X + X S = B` becomes `(I⊗S + Sᵀ⊗I) vec(X) = vec(B)` and
//! `A Y − Y S = C` becomes `(I⊗A − Sᵀ⊗I) vec(Y) = vec(C)`, both solved by LU
//! on the `p²`-dimensional system. Hand-computed closed forms for diagonal
//! coefficients pin the convention (no transpose/conjugate mix-ups).

use earcg::matcore::{
    herm_eig, rank_revealing_qr, solve_lyapunov, solve_small_sylvester, HermMatrix, MatError,
};
use earcg::{C64, CMatrix};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn random_matrix(rng: &mut ChaCha20Rng, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| {
        c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
    })
}

fn random_hermitian(rng: &mut ChaCha20Rng, p: usize) -> HermMatrix {
    HermMatrix::new(random_matrix(rng, p, p)).unwrap()
}

fn random_spd(rng: &mut ChaCha20Rng, p: usize) -> HermMatrix {
    let a = random_matrix(rng, p, p);
    let m = &a * a.adjoint() + CMatrix::identity(p, p).scale(0.1);
    HermMatrix::new(m).unwrap()
}

fn vec_of(m: &CMatrix) -> DVector<C64> {
    DVector::from_column_slice(m.as_slice())
}

fn unvec(v: &DVector<C64>, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_column_slice(rows, cols, v.as_slice())
}

/// Dense Kronecker solve of `S X + X S = B`.
fn lyapunov_oracle(s: &CMatrix, b: &CMatrix) -> CMatrix {
    let p = s.nrows();
    let id = CMatrix::identity(p, p);
    let op = id.kronecker(s) + s.transpose().kronecker(&id);
    let x = op.lu().solve(&vec_of(b)).expect("oracle system is regular");
    unvec(&x, p, p)
}

/// Dense Kronecker solve of `A Y − Y S = C`.
fn sylvester_oracle(a: &CMatrix, s: &CMatrix, cmat: &CMatrix) -> CMatrix {
    let q = a.nrows();
    let p = s.nrows();
    let iq = CMatrix::identity(q, q);
    let ip = CMatrix::identity(p, p);
    let op = ip.kronecker(a) - s.transpose().kronecker(&iq);
    let y = op
        .lu()
        .solve(&vec_of(cmat))
        .expect("oracle system is regular");
    unvec(&y, q, p)
}

#[test]
fn herm_eig_two_by_two_frozen() {
    // [[2, i], [-i, 2]] has eigenvalues 1 and 3.
    let h = HermMatrix::new(CMatrix::from_row_slice(
        2,
        2,
        &[c(2.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(2.0, 0.0)],
    ))
    .unwrap();
    let eig = herm_eig(&h).unwrap();
    assert!((eig.values[0] - 1.0).abs() < 1e-14);
    assert!((eig.values[1] - 3.0).abs() < 1e-14);
}

#[test]
fn herm_eig_reassembles_and_sorts() {
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    for _ in 0..50 {
        let p = rng.gen_range(1..=12);
        let h = random_hermitian(&mut rng, p);
        let eig = herm_eig(&h).unwrap();
        for i in 1..p {
            assert!(eig.values[i] >= eig.values[i - 1], "eigenvalues sorted");
        }
        let unit = eig.vectors.adjoint() * &eig.vectors;
        assert!((unit - CMatrix::identity(p, p)).norm() < 1e-12, "unitarity");
        let re = eig.assemble(|x| x);
        let rel = (&re - h.as_matrix()).norm() / h.as_matrix().norm().max(1e-300);
        assert!(rel < 1e-12, "reassembly rel err {rel:e}");
    }
}

#[test]
fn lyapunov_diagonal_frozen() {
    // S = diag(1,2): X_ij = B_ij / (d_i + d_j).
    let s = HermMatrix::new(CMatrix::from_row_slice(
        2,
        2,
        &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(2.0, 0.0)],
    ))
    .unwrap();
    let b = HermMatrix::new(CMatrix::from_row_slice(
        2,
        2,
        &[c(2.0, 0.0), c(1.0, 1.0), c(1.0, -1.0), c(4.0, 0.0)],
    ))
    .unwrap();
    let x = solve_lyapunov(&s, &b).unwrap();
    let expected = CMatrix::from_row_slice(
        2,
        2,
        &[
            c(1.0, 0.0),
            c(1.0 / 3.0, 1.0 / 3.0),
            c(1.0 / 3.0, -1.0 / 3.0),
            c(1.0, 0.0),
        ],
    );
    assert!((x.as_matrix() - expected).norm() < 1e-14);
}

#[test]
fn lyapunov_matches_kronecker_oracle() {
    let mut rng = ChaCha20Rng::seed_from_u64(21);
    for _ in 0..100 {
        let p = rng.gen_range(1..=8);
        let s = random_spd(&mut rng, p);
        let b = random_hermitian(&mut rng, p);
        let x = solve_lyapunov(&s, &b).unwrap();
        let want = lyapunov_oracle(s.as_matrix(), b.as_matrix());
        let rel = (x.as_matrix() - &want).norm() / want.norm().max(1e-300);
        assert!(rel < 1e-10, "p={p} rel err {rel:e}");
        // Residual check on top of the oracle agreement.
        let res = s.as_matrix() * x.as_matrix() + x.as_matrix() * s.as_matrix()
            - b.as_matrix();
        assert!(res.norm() / b.as_matrix().norm().max(1e-300) < 1e-10);
    }
}

#[test]
fn lyapunov_rejects_indefinite() {
    let s = HermMatrix::new(CMatrix::from_row_slice(
        2,
        2,
        &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)],
    ))
    .unwrap();
    let b = HermMatrix::identity(2);
    assert!(matches!(
        solve_lyapunov(&s, &b),
        Err(MatError::NotPositiveDefinite { .. })
    ));
}

#[test]
fn sylvester_diagonal_frozen() {
    // A = diag(3), S = diag(1): Y = C / 2.
    let a = HermMatrix::scaled_identity(1, 3.0);
    let s = HermMatrix::scaled_identity(1, 1.0);
    let cm = CMatrix::from_row_slice(1, 1, &[c(4.0, -2.0)]);
    let y = solve_small_sylvester(&a, &s, &cm).unwrap();
    assert!((y[(0, 0)] - c(2.0, -1.0)).norm() < 1e-14);
}

#[test]
fn sylvester_matches_kronecker_oracle() {
    let mut rng = ChaCha20Rng::seed_from_u64(31);
    for trial in 0..100 {
        let q = rng.gen_range(1..=12);
        let p = rng.gen_range(1..=4);
        // Separate the spectra: A shifted up, S shifted down.
        let a = HermMatrix::new(
            random_hermitian(&mut rng, q).as_matrix() + CMatrix::identity(q, q).scale(4.0),
        )
        .unwrap();
        let s = HermMatrix::new(
            random_hermitian(&mut rng, p).as_matrix() - CMatrix::identity(p, p).scale(4.0),
        )
        .unwrap();
        let cm = random_matrix(&mut rng, q, p);
        let y = solve_small_sylvester(&a, &s, &cm).unwrap();
        let want = sylvester_oracle(a.as_matrix(), s.as_matrix(), &cm);
        let rel = (&y - &want).norm() / want.norm().max(1e-300);
        assert!(rel < 1e-10, "trial {trial} q={q} p={p} rel err {rel:e}");
        let res = a.as_matrix() * &y - &y * s.as_matrix() - &cm;
        assert!(res.norm() / cm.norm().max(1e-300) < 1e-10);
    }
}

#[test]
fn sylvester_rejects_overlapping_spectra() {
    let a = HermMatrix::scaled_identity(2, 1.5);
    let s = HermMatrix::scaled_identity(2, 1.5);
    let cm = CMatrix::identity(2, 2);
    assert!(matches!(
        solve_small_sylvester(&a, &s, &cm),
        Err(MatError::SingularPencil { .. })
    ));
}

#[test]
fn sylvester_rejects_shape_mismatch() {
    let a = HermMatrix::identity(2);
    let s = HermMatrix::identity(3);
    let cm = CMatrix::zeros(3, 2);
    assert!(matches!(
        solve_small_sylvester(&a, &s, &cm),
        Err(MatError::DimensionMismatch(_))
    ));
}

#[test]
fn rrqr_recovers_exact_rank() {
    let mut rng = ChaCha20Rng::seed_from_u64(41);
    for _ in 0..50 {
        let n = rng.gen_range(4..=40);
        let r = rng.gen_range(1..=n.min(6));
        let cols = rng.gen_range(r..=r + 4);
        let m = random_matrix(&mut rng, n, r) * random_matrix(&mut rng, r, cols);
        let (q, rank) = rank_revealing_qr(&m, 1e-10);
        assert_eq!(rank, r, "rank of random rank-{r} product");
        // Orthonormality of the basis.
        let unit = q.adjoint() * &q;
        assert!((unit - CMatrix::identity(rank, rank)).norm() < 1e-12);
        // Projection residual: M is reproduced by its Q-coordinates.
        let resid = &m - &q * (q.adjoint() * &m);
        assert!(resid.norm() <= 1e-9 * m.norm());
    }
}

#[test]
fn rrqr_is_idempotent_in_rank() {
    let mut rng = ChaCha20Rng::seed_from_u64(43);
    let m = random_matrix(&mut rng, 20, 5);
    let (q, rank) = rank_revealing_qr(&m, 1e-10);
    let (_, rank2) = rank_revealing_qr(&q, 1e-10);
    assert_eq!(rank, rank2);
}

#[test]
fn rrqr_zero_matrix_has_rank_zero() {
    let m = CMatrix::zeros(8, 3);
    let (q, rank) = rank_revealing_qr(&m, 1e-10);
    assert_eq!(rank, 0);
    assert_eq!(q.ncols(), 0);
    assert_eq!(q.nrows(), 8);
}

#[test]
fn rrqr_drops_columns_below_tolerance() {
    let mut rng = ChaCha20Rng::seed_from_u64(47);
    // Orthogonal directions with graded norms 1, 1e-4, 1e-8, 1e-14: the last
    // is below the relative drop tolerance 1e-10 and must be discarded.
    let raw = random_matrix(&mut rng, 32, 4);
    let (basis, _) = rank_revealing_qr(&raw, 1e-12);
    let scales = [1.0, 1e-4, 1e-8, 1e-14];
    let mut m = CMatrix::zeros(32, 4);
    for (j, &s) in scales.iter().enumerate() {
        m.set_column(j, &basis.column(j).scale(s));
    }
    let (_, rank) = rank_revealing_qr(&m, 1e-10);
    assert_eq!(rank, 3);
}
