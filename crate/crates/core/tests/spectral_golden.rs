//! Frozen eigenvalues of the double well (h = 1, β = 4) on (0, 2.5).
//!
//! The reference values are Richardson extrapolations of the n = 999 and
//! n = 1999 grids (mesh halved exactly), which agree with the 1999/3999
//! extrapolation to 7e-9 relative.

use parrep::potential::{builtin_potential, PotentialName};
use parrep::spectral::build_spectral_model;

const LAMBDA1: f64 = 2.977_959_34e-2;
const LAMBDA2: f64 = 5.512_240_30;

fn eigenvalues(n: usize) -> Vec<f64> {
    let pot = builtin_potential(PotentialName::DoubleWell1d, &[1.0], 4.0).unwrap();
    build_spectral_model(&pot, 0.0, 2.5, n, 2).unwrap().eigenvalues().to_vec()
}

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

#[test]
fn fine_grid_matches_reference() {
    let l = eigenvalues(1999);
    assert!(rel(l[0], LAMBDA1) < 1e-6, "{}", l[0]);
    assert!(rel(l[1], LAMBDA2) < 1e-6, "{}", l[1]);
}

#[test]
fn second_order_convergence() {
    let coarse = eigenvalues(499);
    let mid = eigenvalues(999);
    let fine = eigenvalues(1999);
    for k in 0..2 {
        let r = (mid[k] - coarse[k]) / (fine[k] - mid[k]);
        assert!((r - 4.0).abs() < 0.1, "mode {k}: error ratio {r}");
        let extrapolated = (4.0 * fine[k] - mid[k]) / 3.0;
        assert!(rel(extrapolated, [LAMBDA1, LAMBDA2][k]) < 1e-7);
    }
}

#[test]
fn grid_independence() {
    let a = eigenvalues(1000);
    let b = eigenvalues(2000);
    assert!(rel(a[0], b[0]) < 0.002);
    assert!(rel(a[1], b[1]) < 0.002);
}
