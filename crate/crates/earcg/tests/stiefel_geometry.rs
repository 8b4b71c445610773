//! Geometry validation: retraction order, transport tangency, and agreement
//! of the closed-form transport with a finite-difference derivative of the
//! polar factor.

use earcg::stiefel::{
    dpf, is_on_manifold, is_tangent, outer, polar_retract, polar_transport, random_frame,
    random_tangent, real_pairing, retract_transport_scaled, vector_transport, BlockMat, Frame,
    GeometryError, Tangent,
};
use earcg::{C64, CMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Polar factor of a single block, used as the finite-difference reference.
fn polar_factor(m: &CMatrix) -> CMatrix {
    let gram = m.adjoint() * m;
    let eig = nalgebra::linalg::SymmetricEigen::new(gram);
    let p = m.ncols();
    let mut core = CMatrix::zeros(p, p);
    for j in 0..p {
        let col = eig.eigenvectors.column(j);
        let scale = C64::new(1.0 / eig.eigenvalues[j].sqrt(), 0.0);
        core += (col * col.adjoint()).scale(1.0) * scale;
    }
    m * core
}

fn pf_blocks(m: &BlockMat) -> BlockMat {
    BlockMat::new(m.blocks().iter().map(polar_factor).collect())
}

fn fit_slope(hs: &[f64], errs: &[f64]) -> f64 {
    let xs: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let xbar = xs.iter().sum::<f64>() / n;
    let ybar = ys.iter().sum::<f64>() / n;
    let num: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - xbar) * (y - ybar))
        .sum();
    let den: f64 = xs.iter().map(|x| (x - xbar) * (x - xbar)).sum();
    num / den
}

#[test]
fn retraction_is_orthonormal_and_second_order() {
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    for trial in 0..100 {
        let n = rng.gen_range(4..=64);
        let p = rng.gen_range(1..=4.min(n));
        let phi = random_frame(&[n], p, &mut rng);
        let eta = random_tangent(&phi, &mut rng);
        let eta = eta.scale(1.0 / eta.norm());

        // Orthonormality of the retracted frame.
        let r = polar_retract(&phi, &eta).unwrap();
        assert!(
            r.orthonormality_error() <= 1e-12,
            "trial {trial}: orthonormality {:.3e}",
            r.orthonormality_error()
        );

        // R(0) = phi.
        let r0 = polar_retract(&phi, &eta.scale(0.0)).unwrap();
        let dev0 = r0.as_mat().sub(phi.as_mat()).norm();
        assert!(dev0 <= 1e-13, "trial {trial}: R(0) deviation {dev0:.3e}");

        // ‖R(hη) − φ − hη‖ = O(h²): fitted exponent ≥ 1.9.
        let hs = [1e-2, 1e-3, 1e-4, 1e-5];
        let errs: Vec<f64> = hs
            .iter()
            .map(|&h| {
                let rh = polar_retract(&phi, &eta.scale(h)).unwrap();
                rh.as_mat()
                    .sub(&phi.as_mat().add_scaled(h, eta.as_mat()))
                    .norm()
            })
            .collect();
        let slope = fit_slope(&hs, &errs);
        assert!(slope >= 1.9, "trial {trial}: retraction order {slope:.3}");
    }
}

#[test]
fn transport_is_tangent_and_matches_dpf() {
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    for trial in 0..100 {
        let n = rng.gen_range(4..=64);
        let p = rng.gen_range(1..=4.min(n));
        let phi = random_frame(&[n], p, &mut rng);
        let eta = random_tangent(&phi, &mut rng);
        let eta = eta.scale(1.0 / eta.norm());
        let tau = rng.gen_range(0.1..1.5);

        let (r, t) = retract_transport_scaled(&phi, tau, &eta).unwrap();
        assert!(
            is_tangent(&r, &t, 1e-10),
            "trial {trial}: transported vector leaves the tangent space"
        );

        // Closed form vs the derivative of the polar factor.
        let via_dpf = vector_transport(&phi, tau, &eta, &eta).unwrap();
        let dev = t.as_mat().sub(via_dpf.as_mat()).norm();
        assert!(dev <= 1e-9, "trial {trial}: transport vs dpf {dev:.3e}");

        // dpf against central differences of the polar factor.
        let h = 1e-6;
        let psi = phi.as_mat().add_scaled(tau, eta.as_mat());
        let fd = pf_blocks(&psi.add_scaled(h, eta.as_mat()))
            .sub(&pf_blocks(&psi.add_scaled(-h, eta.as_mat())))
            .scale(0.5 / h);
        let fd_dev = via_dpf.as_mat().sub(&fd).norm();
        assert!(fd_dev <= 1e-6, "trial {trial}: dpf vs FD {fd_dev:.3e}");
    }
}

#[test]
fn self_transport_closed_form_frozen() {
    // For orthonormal φ ⟂ η with ‖η‖ = 1 and τ = 1:
    // S = √2, ηS⁻¹ = η/√2, R = (φ+η)/√2, ⟨ηS⁻¹,ηS⁻¹⟩ = 1/2,
    // so T = η/√2 − (φ+η)/(2√2) = (η − φ)/(2√2).
    let phi = Frame::from_blocks(vec![CMatrix::from_column_slice(
        2,
        1,
        &[C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
    )])
    .unwrap();
    let eta = Tangent::new(BlockMat::new(vec![CMatrix::from_column_slice(
        2,
        1,
        &[C64::new(0.0, 0.0), C64::new(1.0, 0.0)],
    )]));
    let t = polar_transport(&phi, 1.0, &eta).unwrap();
    let s = 1.0 / (2.0 * 2.0f64.sqrt());
    let expected = BlockMat::new(vec![CMatrix::from_column_slice(
        2,
        1,
        &[C64::new(-s, 0.0), C64::new(s, 0.0)],
    )]);
    assert!(t.as_mat().sub(&expected).norm() < 1e-14);
}

#[test]
fn degenerate_update_is_rejected() {
    let mut rng = ChaCha20Rng::seed_from_u64(9);
    let phi = random_frame(&[6], 2, &mut rng);
    // ψ = φ − φ = 0 is rank-deficient.
    let minus_phi = Tangent::new(phi.as_mat().scale(-1.0));
    assert!(matches!(
        polar_retract(&phi, &minus_phi),
        Err(GeometryError::RankDeficient { .. })
    ));
}

#[test]
fn frame_validation_rejects_skewed_columns() {
    let blocks = vec![CMatrix::from_column_slice(
        2,
        2,
        &[
            C64::new(1.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(1.0, 0.0),
            C64::new(1.0, 0.0),
        ],
    )];
    assert!(matches!(
        Frame::from_blocks(blocks),
        Err(GeometryError::NotOrthonormal { .. })
    ));
}

#[test]
fn random_constructions_satisfy_manifold_conditions() {
    let mut rng = ChaCha20Rng::seed_from_u64(13);
    for _ in 0..20 {
        let dims = [rng.gen_range(4..=32), rng.gen_range(4..=32)];
        let p = rng.gen_range(1..=3);
        let phi = random_frame(&dims, p, &mut rng);
        assert!(is_on_manifold(&phi, 1e-12));
        let eta = random_tangent(&phi, &mut rng);
        assert!(is_tangent(&phi, &eta, 1e-12 * (1.0 + eta.norm())));
    }
}

#[test]
fn product_manifold_transport_acts_blockwise() {
    let mut rng = ChaCha20Rng::seed_from_u64(17);
    let phi = random_frame(&[10, 14], 2, &mut rng);
    let eta = random_tangent(&phi, &mut rng);
    let eta = eta.scale(1.0 / eta.norm());
    let tau = 0.7;
    let (r, t) = retract_transport_scaled(&phi, tau, &eta).unwrap();
    // Each block must equal the single-block computation on that block alone.
    for k in 0..2 {
        let phi_k = Frame::from_blocks(vec![phi.blocks()[k].clone()]).unwrap();
        let eta_k = Tangent::new(BlockMat::new(vec![eta.as_mat().blocks()[k].clone()]));
        let (rk, tk) = retract_transport_scaled(&phi_k, tau, &eta_k).unwrap();
        assert!((rk.blocks()[0].clone() - r.blocks()[k].clone()).norm() < 1e-14);
        assert!(
            (tk.as_mat().blocks()[0].clone() - t.as_mat().blocks()[k].clone()).norm() < 1e-14
        );
    }
}

#[test]
fn pairing_and_outer_are_consistent() {
    let mut rng = ChaCha20Rng::seed_from_u64(19);
    let phi = random_frame(&[12, 9], 3, &mut rng);
    let a = random_tangent(&phi, &mut rng);
    let b = random_tangent(&phi, &mut rng);
    // real_pairing = Σ_k Re tr(outer_k).
    let traces: f64 = outer(a.as_mat(), b.as_mat())
        .iter()
        .map(|m| m.trace().re)
        .sum();
    let pairing = real_pairing(a.as_mat(), b.as_mat());
    assert!((traces - pairing).abs() <= 1e-12 * (1.0 + pairing.abs()));
}

#[test]
fn dpf_rejects_shape_mismatch() {
    let mut rng = ChaCha20Rng::seed_from_u64(23);
    let phi = random_frame(&[8], 2, &mut rng);
    let other = random_frame(&[9], 2, &mut rng);
    let res = dpf(phi.as_mat(), other.as_mat());
    assert!(matches!(res, Err(GeometryError::ShapeMismatch(_))));
}
