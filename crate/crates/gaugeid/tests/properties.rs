use gaugeid::cauchy::CauchyTransform;
use gaugeid::cgo::{make_incident, make_phase, solve_remainders, CgoKind, CgoOptions, DEFAULT_MARGIN};
use gaugeid::cli::ExperimentConfig;
use gaugeid::dirac::{check_clifford, BlockPotential, CliffordData, Layout};
use gaugeid::field::{build_domain, extend, l2_inner, restrict, trace_boundary, FormType, MatrixField, DEFAULT_TAPER};
use gaugeid::gauge::expm;
use gaugeid::linalg::Mat;
use gaugeid::schrodinger::{curvature, ConnectionData};
use gaugeid::Grid64;
use num_complex::Complex;
use proptest::prelude::*;

fn grid(n: usize) -> Grid64 {
    build_domain::<f64>(n, 1.25).unwrap()
}

fn coeffs(k: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), k)
}

/// Low-degree polynomial in z, z̄ with a Gaussian envelope.
fn poly_field(g: &Grid64, form: FormType, cs: &[(f64, f64)]) -> MatrixField<f64> {
    MatrixField::scalar(g, form, |z| {
        let mut acc = Complex::new(0.0, 0.0);
        let mut zp = Complex::new(1.0, 0.0);
        for (k, (a, b)) in cs.iter().enumerate() {
            let m = if k % 2 == 0 { zp } else { zp.conj() };
            acc += Complex::new(*a, *b) * m;
            if k % 2 == 1 {
                zp *= z;
            }
        }
        acc * (-z.norm_sqr()).exp()
    })
}

fn close(a: Complex<f64>, b: Complex<f64>, scale: f64) -> bool {
    (a - b).norm() <= 1e-12 * scale.max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn restriction_undoes_extension(cs in coeffs(5)) {
        let g = grid(32);
        let f = poly_field(&g, FormType::Function, &cs);
        let back = restrict(&extend(&f, DEFAULT_TAPER).unwrap());
        for k in 0..g.len() {
            if g.mask[k] {
                prop_assert_eq!(back.data[k], f.data[k]);
            }
        }
    }

    #[test]
    fn inner_product_is_hermitian_and_sesquilinear(a in coeffs(4), b in coeffs(4), s in (-2.0..2.0f64, -2.0..2.0f64)) {
        let g = grid(32);
        let f = poly_field(&g, FormType::Function, &a);
        let h = poly_field(&g, FormType::Function, &b);
        let alpha = Complex::new(s.0, s.1);
        let fh = l2_inner(&f, &h).unwrap();
        let hf = l2_inner(&h, &f).unwrap();
        let scale = f.norm_l2() * h.norm_l2();
        prop_assert!(close(fh, hf.conj(), scale));
        let lhs = l2_inner(&f.scale(alpha), &h).unwrap();
        prop_assert!(close(lhs, alpha * fh, scale * alpha.norm()));
        prop_assert!(l2_inner(&f, &f).unwrap().re >= 0.0);
    }

    #[test]
    fn boundary_trace_is_linear(a in coeffs(4), b in coeffs(4), s in -3.0..3.0f64) {
        let g = grid(32);
        let f = poly_field(&g, FormType::Function, &a);
        let h = poly_field(&g, FormType::Function, &b);
        let alpha = Complex::new(s, 0.5);
        let combined = trace_boundary(&f.scale(alpha).add(&h));
        let separate = trace_boundary(&f).scale(alpha).add(&trace_boundary(&h));
        prop_assert_eq!(combined.len(), 4 * 32);
        for (x, y) in combined.values.iter().zip(&separate.values) {
            prop_assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn cauchy_transforms_are_linear(a in coeffs(3), b in coeffs(3), s in (-2.0..2.0f64, -2.0..2.0f64)) {
        let g = grid(32);
        let t = CauchyTransform::new(&g);
        let f = poly_field(&g, FormType::Form01, &a);
        let h = poly_field(&g, FormType::Form01, &b);
        let alpha = Complex::new(s.0, s.1);
        let lhs = t.dbar_inv(&f.scale(alpha).add(&h));
        let rhs = t.dbar_inv(&f).scale(alpha).add(&t.dbar_inv(&h));
        prop_assert!(lhs.sub(&rhs).max_abs() < 1e-12 * (1.0 + rhs.max_abs()));
    }

    #[test]
    fn clifford_identities_survive_unitary_conjugation(k in prop::collection::vec(-1.0..1.0f64, 8)) {
        let cd = CliffordData::<f64>::standard(1);
        // unitary from a random skew-Hermitian generator
        let h = Mat::from_fn(2, 2, |i, j| {
            let v = Complex::new(k[2 * i + j], k[4 + 2 * i + j]);
            if i == j { Complex::new(0.0, v.im) } else if i < j { v } else { -Complex::new(k[2 * j + i], -k[4 + 2 * j + i]) }
        });
        let u = expm(&h);
        prop_assert!(u.mul(&u.adjoint()).sub(&Mat::identity(2)).max_abs() < 1e-12);
        let conj = cd.conjugated(&u).unwrap();
        prop_assert!(check_clifford(&conj).max() < 1e-12);
        let chi = conj.chirality();
        let id = Mat::identity(2);
        let half = Complex::new(0.5, 0.0);
        let p_plus = id.add(&chi).scale(half);
        let p_minus = id.sub(&chi).scale(half);
        prop_assert!(p_plus.mul(&p_plus).sub(&p_plus).max_abs() < 1e-12);
        prop_assert!(p_plus.add(&p_minus).sub(&id).max_abs() < 1e-12);
        prop_assert!(conj.gamma_x.mul(&p_plus).sub(&p_minus.mul(&conj.gamma_x)).max_abs() < 1e-12);
    }

    #[test]
    fn curvature_is_gauge_covariant(k in prop::collection::vec(-0.6..0.6f64, 2)) {
        let g = build_domain::<f64>(64, 1.5).unwrap();
        let a = MatrixField::scalar(&g, FormType::Form01, |z| z * Complex::new(0.3, 0.2) * (-2.0 * z.norm_sqr()).exp());
        let w = MatrixField::zeros(&g, 1, 1, FormType::Function);
        let conn = ConnectionData::new(a, w).unwrap();
        // scalar unitary gauge e^{iβ}, smooth and equal to 1 far out
        let f = MatrixField::scalar(&g, FormType::Function, |z| {
            Complex::from_polar(1.0, k[0] * (-3.0 * z.norm_sqr()).exp() + k[1] * z.re * (-3.0 * z.norm_sqr()).exp())
        });
        let gauged = conn.gauge(&f).unwrap();
        let omega = curvature(&gauged.x[0], &gauged.x[1]);
        let inner = g.interior_mask(8);
        let diff = omega.sub(&conn.omega).max_abs_on(&inner);
        prop_assert!(diff < 1e-6, "{}", diff);
    }

    #[test]
    fn h_lists_must_be_positive_and_decreasing(hs in prop::collection::vec(-0.5..0.5f64, 1..5)) {
        let list: Vec<String> = hs.iter().map(|h| format!("{h}")).collect();
        let text = format!(
            r#"{{"grid": {{"n": 32, "L": 1.25}}, "pipeline": "extract", "corpus": "bump-perturbation", "h_list": [{}], "output_dir": "out/x"}}"#,
            list.join(", ")
        );
        let valid = hs.iter().all(|h| *h > 0.0) && hs.windows(2).all(|w| w[1] < w[0]);
        let parsed = ExperimentConfig::from_json(&text).and_then(|c| c.validate());
        prop_assert_eq!(parsed.is_ok(), valid);
    }
}

#[test]
fn zero_potential_has_zero_remainders() {
    let g = grid(64);
    let v = BlockPotential::zero(&g, 2, Layout::Dirac);
    let phase = make_phase(&g, Complex::new(0.1, -0.2), DEFAULT_MARGIN).unwrap();
    for kind in [CgoKind::F, CgoKind::G] {
        for j in 0..2 {
            let inc = make_incident(&g, 2, kind, j).unwrap();
            let sol = solve_remainders(&v, &inc, &phase, 0.25, &CgoOptions::default()).unwrap();
            assert!(sol.r.data.iter().chain(&sol.s.data).all(|x| *x == Complex::new(0.0, 0.0)));
        }
    }
}
