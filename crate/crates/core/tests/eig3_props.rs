//! Eigen-solver properties on matrices built as `Q diag(λ) Qᵀ`, so the true
//! spectrum is known independently of any solver.

use alcmv_core::eig3::*;
use proptest::prelude::*;

fn rotation(axis: [f64; 3], angle: f64) -> [[f64; 3]; 3] {
    let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    let [x, y, z] = axis.map(|v| v / n);
    let (s, c) = angle.sin_cos();
    let t = 1.0 - c;
    [
        [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
        [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
        [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
    ]
}

fn compose(q: &[[f64; 3]; 3], lambda: [f64; 3]) -> Sym3 {
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = (0..3).map(|k| q[i][k] * lambda[k] * q[j][k]).sum();
        }
    }
    Sym3::from_rows(m).unwrap()
}

fn axis() -> impl Strategy<Value = [f64; 3]> {
    [-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64]
        .prop_filter("nonzero axis", |a| a.iter().map(|v| v * v).sum::<f64>() > 1e-3)
}

/// Spectra with optional near-ties between neighbours.
fn spectrum() -> impl Strategy<Value = [f64; 3]> {
    (-10.0..10.0f64, 0.0..10.0f64, 0.0..10.0f64, 0usize..4, -12i32..-2).prop_map(|(base, g1, g2, tie, exp)| {
        let tiny = 10f64.powi(exp);
        match tie {
            0 => [base, base + g1, base + g1 + g2],
            1 => [base, base + tiny * g1, base + g1 + g2],
            2 => [base, base + g1, base + g1 + tiny * g2],
            _ => [base, base, base + g2],
        }
    })
}

fn random_sym() -> impl Strategy<Value = Sym3> {
    prop::array::uniform6(-10.0..10.0f64).prop_map(|e| Sym3::new(e[0], e[1], e[2], e[3], e[4], e[5]).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4000))]

    #[test]
    fn eigenvalues_match_constructed_spectrum(ax in axis(), angle in 0.0..6.3f64, lambda in spectrum()) {
        let a = compose(&rotation(ax, angle), lambda);
        let got = eigvals_sym3(&a).unwrap();
        let tol = 1e-10 * (1.0 + a.frobenius_norm());
        for (g, w) in got.iter().zip(lambda) {
            prop_assert!((g - w).abs() <= tol, "{got:?} vs {lambda:?}");
        }
    }

    #[test]
    fn eigenvector_residual(a in random_sym()) {
        let vals = eigvals_sym3(&a).unwrap();
        for lambda in vals {
            let v = eigvec_sym3(&a, lambda).unwrap().vector;
            prop_assert!((norm3(&v) - 1.0).abs() < 1e-12);
            prop_assert!(a.residual(lambda, &v) <= 1e-9 * (1.0 + a.frobenius_norm()));
        }
    }

    #[test]
    fn eigenvector_residual_on_structured_spectra(ax in axis(), angle in 0.0..6.3f64, lambda in spectrum()) {
        let a = compose(&rotation(ax, angle), lambda);
        let vals = eigvals_sym3(&a).unwrap();
        for lambda in vals {
            let v = eigvec_sym3(&a, lambda).unwrap().vector;
            prop_assert!(a.residual(lambda, &v) <= 1e-9 * (1.0 + a.frobenius_norm()));
        }
    }

    #[test]
    fn smallest_eigvec_matches_rotation_column(ax in axis(), angle in 0.0..6.3f64, base in -5.0..5.0f64, g1 in 0.5..5.0f64, g2 in 0.0..5.0f64) {
        let q = rotation(ax, angle);
        let a = compose(&q, [base, base + g1, base + g1 + g2]);
        let v = smallest_eigvec(&a).unwrap();
        prop_assert!(!v.degenerate);
        let col = [q[0][0], q[1][0], q[2][0]];
        let align = dot3(&v.vector, &col).abs();
        prop_assert!((1.0 - align) < 1e-10, "alignment {align}");
    }

    #[test]
    fn agrees_with_jacobi(a in random_sym()) {
        let closed = eigen_sym3(&a).unwrap();
        let jac = jacobi_sym3(&a).unwrap().system;
        let n = a.frobenius_norm();
        for i in 0..3 {
            prop_assert!((closed.values[i] - jac.values[i]).abs() <= 1e-10 * (1.0 + n));
        }
        let gap = (jac.values[1] - jac.values[0]).min(jac.values[2] - jac.values[1]);
        if gap > 1e-6 * n {
            for i in 0..3 {
                prop_assert!(1.0 - dot3(&closed.vectors[i], &jac.vectors[i]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn eigenvectors_orthogonal_when_separated(ax in axis(), angle in 0.0..6.3f64, lambda in spectrum()) {
        let a = compose(&rotation(ax, angle), lambda);
        let sys = eigen_sym3(&a).unwrap();
        let n = a.frobenius_norm();
        let gap = (sys.values[1] - sys.values[0]).min(sys.values[2] - sys.values[1]);
        if gap > 1e-8 * n {
            for (i, j) in [(0, 1), (0, 2), (1, 2)] {
                prop_assert!(dot3(&sys.vectors[i], &sys.vectors[j]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn power_of_two_scaling_is_exact(a in random_sym(), e in -20i32..20) {
        let c = 2f64.powi(e);
        let vals = eigvals_sym3(&a).unwrap();
        let scaled = eigvals_sym3(&a.scaled(c)).unwrap();
        for i in 0..3 {
            prop_assert_eq!(scaled[i], c * vals[i]);
        }
        prop_assert_eq!(smallest_eigvec(&a.scaled(c)).unwrap(), smallest_eigvec(&a).unwrap());
    }

    #[test]
    fn positive_scaling_keeps_orientation(a in random_sym(), c in 1e-3..1e3f64) {
        let vals = eigvals_sym3(&a).unwrap();
        let scaled = eigvals_sym3(&a.scaled(c)).unwrap();
        let n = a.frobenius_norm();
        for i in 0..3 {
            prop_assert!((scaled[i] - c * vals[i]).abs() <= 1e-10 * c * (1.0 + n));
        }
        let gap = vals[1] - vals[0];
        prop_assume!(gap > 1e-6 * n);
        let v = smallest_eigvec(&a).unwrap().vector;
        let w = smallest_eigvec(&a.scaled(c)).unwrap().vector;
        for i in 0..3 {
            prop_assert!((v[i] - w[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn canonical_sign_is_idempotent(v in prop::array::uniform3(-1.0..1.0f64)) {
        let c = canonical_sign(v);
        prop_assert_eq!(canonical_sign(c), c);
        let big = c.iter().map(|x| x.abs()).fold(0.0, f64::max);
        let first = c.iter().position(|x| x.abs() == big).unwrap();
        prop_assert!(c[first] >= 0.0);
    }
}
