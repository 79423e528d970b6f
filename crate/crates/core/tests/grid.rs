use ddm_core::grid::*;
use ddm_core::DdmError;
use proptest::prelude::*;

fn line(n: usize) -> GridSpec {
    GridSpec::cube(1, -2.0, 2.0, n).unwrap()
}

#[test]
fn rejects_degenerate_grids() {
    assert!(matches!(
        GridSpec::cube(1, 0.0, 1.0, 2),
        Err(DdmError::InvalidGrid(_))
    ));
    assert!(matches!(
        GridSpec::new(&[0.0], &[0.0], &[5]),
        Err(DdmError::InvalidGrid(_))
    ));
    assert!(matches!(
        GridSpec::new(&[0.0, 0.0], &[1.0, 2.0], &[5, 5]),
        Err(DdmError::InvalidGrid(_))
    ));
    assert!(GridSpec::new_anisotropic(&[0.0, 0.0], &[1.0, 2.0], &[5, 5]).is_ok());
    assert!(GridSpec::cube(4, 0.0, 1.0, 5).is_err());
}

#[test]
fn spacing_and_layout() {
    let g = GridSpec::cube(2, -1.0, 1.0, 5).unwrap();
    assert_eq!(g.len(), 25);
    assert_eq!(g.spacing(), 0.5);
    let idx = g.index([1, 3, 0]);
    assert_eq!(g.unravel(idx), [1, 3, 0]);
    assert_eq!(g.point(idx), [-0.5, 0.5, 0.0]);
    assert!(g.is_boundary(g.index([0, 2, 0])));
    assert!(!g.is_boundary(g.index([2, 2, 0])));
    assert_eq!(g.boundary_mask().iter().filter(|&&b| b).count(), 16);
    let c = g.coarsen(3).unwrap();
    assert_eq!(c.n(0), 3);
    assert_eq!(c.refine(), g);
}

#[test]
fn spacing_rule_keeps_boundary_off_grid() {
    let g = GridSpec::cube_with_spacing(1, -2.0, 2.0, 0.05 / 4.0).unwrap();
    let off = (0..g.len())
        .map(|i| (g.point(i)[0].abs() - 1.111).abs())
        .fold(f64::INFINITY, f64::min);
    assert!(
        off > 1e-6,
        "x = 1.111 should not be a node, nearest offset {off}"
    );
}

#[test]
fn gradient_of_constant_and_linear() {
    let g = line(17);
    let c = ScalarField::constant(g, 3.5);
    assert!(centered_gradient(&c)
        .component(0)
        .iter()
        .all(|v| v.abs() < 1e-14));
    let x = ScalarField::from_fn(g, |p| p[0]);
    assert!(centered_gradient(&x)
        .component(0)
        .iter()
        .all(|v| (v - 1.0).abs() < 1e-13));
}

#[test]
fn gradient_exact_on_quadratic() {
    // h = 0.25 on [-2, 2] has a node at 0.5; the centered quotient of x^2 there is
    // ((0.75)^2 - (0.25)^2) / 0.5 = 1.
    let g = line(17);
    let f = ScalarField::from_fn(g, |p| p[0] * p[0]);
    let i = (0..g.len())
        .find(|&i| (g.point(i)[0] - 0.5).abs() < 1e-12)
        .unwrap();
    let expect = (0.75_f64.powi(2) - 0.25_f64.powi(2)) / 0.5;
    assert!((centered_gradient(&f).component(0)[i] - expect).abs() < 1e-13);
    assert!((expect - 1.0).abs() < 1e-15);
}

#[test]
fn gradient_second_order() {
    let errs: Vec<f64> = [33, 65, 129, 257]
        .iter()
        .map(|&n| {
            let g = GridSpec::cube(2, -1.0, 1.0, n).unwrap();
            let f = ScalarField::from_fn(g, |p| (2.0 * p[0]).sin() * p[1].exp());
            let d = centered_gradient(&f);
            (0..g.len())
                .map(|i| {
                    let p = g.point(i);
                    let ex = [
                        2.0 * (2.0 * p[0]).cos() * p[1].exp(),
                        (2.0 * p[0]).sin() * p[1].exp(),
                    ];
                    (d.component(0)[i] - ex[0])
                        .abs()
                        .max((d.component(1)[i] - ex[1]).abs())
                })
                .fold(0.0, f64::max)
        })
        .collect();
    for w in errs.windows(2) {
        let slope = (w[0] / w[1]).log2();
        assert!(slope >= 1.9, "slope {slope} in {errs:?}");
    }
}

#[test]
fn flux_divergence_examples() {
    let g = line(41);
    let u = ScalarField::from_fn(g, |p| p[0] * p[0]);
    let lap = flux_divergence(&ScalarField::constant(g, 1.0), &u).unwrap();
    for i in 1..g.len() - 1 {
        assert!((lap[i] - 2.0).abs() < 1e-10);
    }
    let zero = flux_divergence(&ScalarField::zeros(g), &u).unwrap();
    assert!(zero.values().iter().all(|&v| v == 0.0));
    let other = GridSpec::cube(1, -2.0, 2.0, 21).unwrap();
    assert!(matches!(
        flux_divergence(&ScalarField::zeros(other), &u),
        Err(DdmError::GridMismatch)
    ));
}

fn torus_beta(p: [f64; 3]) -> f64 {
    7.0 + p[0] + 2.0 * p[1] + 3.0 * p[2]
}

/// Hand-differentiated `div(beta grad u)` for `u = x e^y + e^z sqrt(1 + y^2)`.
fn torus_div(p: [f64; 3]) -> f64 {
    let [x, y, z] = p;
    let s = (1.0 + y * y).sqrt();
    let ux = y.exp();
    let uy = x * y.exp() + z.exp() * y / s;
    let uz = z.exp() * s;
    let lap = x * y.exp() + z.exp() / (s * s * s) + z.exp() * s;
    torus_beta(p) * lap + ux + 2.0 * uy + 3.0 * uz
}

#[test]
fn flux_divergence_variable_coefficient_second_order() {
    let errs: Vec<f64> = [17, 33, 65]
        .iter()
        .map(|&n| {
            let g = GridSpec::cube(3, -1.0, 1.0, n).unwrap();
            let beta = ScalarField::from_fn(g, torus_beta);
            let u = ScalarField::from_fn(g, |p| {
                p[0] * p[1].exp() + p[2].exp() * (1.0 + p[1] * p[1]).sqrt()
            });
            let d = flux_divergence(&beta, &u).unwrap();
            (0..g.len())
                .filter(|&i| !g.is_boundary(i))
                .map(|i| (d[i] - torus_div(g.point(i))).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    for w in errs.windows(2) {
        let slope = (w[0] / w[1]).log2();
        assert!(slope > 1.8, "slope {slope} in {errs:?}");
    }
}

#[test]
fn l2_norm_examples() {
    let g = line(9);
    let one = ScalarField::constant(g, 1.0);
    assert_eq!(norm_l2_weighted(&one, &ScalarField::zeros(g)).unwrap(), 0.0);
    assert!((norm_l2_weighted(&one, &ScalarField::constant(g, 2.0)).unwrap() - 2.0).abs() < 1e-15);
    // Grids need three nodes, so the two-value example is carried by (3, 4, 0).
    let g3 = GridSpec::cube(1, 0.0, 1.0, 3).unwrap();
    let f = ScalarField::new(g3, vec![3.0, 4.0, 0.0]).unwrap();
    let ones = ScalarField::constant(g3, 1.0);
    assert!((norm_l2_weighted(&ones, &f).unwrap() - (25.0_f64 / 3.0).sqrt()).abs() < 1e-15);
}

#[test]
fn linf_masked_examples() {
    let g = GridSpec::cube_with_spacing(1, -2.0, 2.0, 0.0125).unwrap();
    assert_eq!(
        norm_linf_masked(|_| true, &ScalarField::zeros(g)).unwrap(),
        0.0
    );
    let x = ScalarField::from_fn(g, |p| p[0]);
    let inside = |i: usize| g.point(i)[0].abs() <= 1.111;
    let m = norm_linf_masked(inside, &x).unwrap();
    assert!(m <= 1.111 && m > 1.111 - g.spacing());
    assert!(matches!(
        norm_linf_masked(|_| false, &x),
        Err(DdmError::EmptyMask)
    ));
}

#[test]
fn refinement_flags() {
    let g = line(21);
    let one = ScalarField::constant(g, 1.0);
    let flags = flag_refinement(&ScalarField::constant(g, 0.3), &one, FLAG_THRESHOLD).unwrap();
    assert!(flags.iter().all(|f| !f));
    let step = ScalarField::from_fn(g, |p| if p[0] < 0.1 { 0.0 } else { 1.0 });
    let flags = flag_refinement(&step, &one, FLAG_THRESHOLD).unwrap();
    let jump = (0..g.len()).find(|&i| step[i] == 1.0).unwrap();
    let flagged: Vec<usize> = (0..g.len()).filter(|&i| flags[i]).collect();
    assert_eq!(flagged, vec![jump - 1, jump]);
}

#[test]
fn field_dump_round_trip() {
    let g = GridSpec::cube(2, -1.0, 1.0, 5).unwrap();
    let f = ScalarField::from_fn(g, |p| p[0] * 0.1 + p[1].sin());
    let mut buf = Vec::new();
    write_field(&mut buf, &f).unwrap();
    let back = read_field(buf.as_slice()).unwrap();
    assert_eq!(back, f);
    assert!(matches!(
        read_field("dim 1\nn 3\n".as_bytes()),
        Err(DdmError::Parse(_))
    ));
}

#[test]
fn shape_mismatch_rejected() {
    assert!(ScalarField::new(line(5), vec![0.0; 4]).is_err());
}

fn five_point(u: &ScalarField) -> Vec<f64> {
    let g = *u.grid();
    (0..g.len())
        .map(|i| {
            if g.is_boundary(i) {
                return 0.0;
            }
            (0..g.dim())
                .map(|a| {
                    let s = g.stride(a);
                    (u[i + s] - 2.0 * u[i] + u[i - s]) / (g.h(a) * g.h(a))
                })
                .sum()
        })
        .collect()
}

fn grid_2d() -> impl Strategy<Value = GridSpec> {
    (3usize..10).prop_map(|n| GridSpec::cube(2, 0.0, 1.0, n).unwrap())
}

fn field_on(g: GridSpec) -> impl Strategy<Value = ScalarField> {
    proptest::collection::vec(-5.0f64..5.0, g.len())
        .prop_map(move |v| ScalarField::new(g, v).unwrap())
}

/// Zeroes the box boundary.
fn interior_only(mut f: ScalarField) -> ScalarField {
    let g = *f.grid();
    for (i, v) in f.values_mut().iter_mut().enumerate() {
        if g.is_boundary(i) {
            *v = 0.0;
        }
    }
    f
}

proptest! {
    #[test]
    fn unit_coefficient_is_the_standard_laplacian(u in grid_2d().prop_flat_map(field_on)) {
        let g = *u.grid();
        let d = flux_divergence(&ScalarField::constant(g, 1.0), &u).unwrap();
        let s = five_point(&u);
        for i in 0..g.len() {
            prop_assert!((d[i] - s[i]).abs() <= 1e-12 * (1.0 + s[i].abs()));
        }
    }

    #[test]
    fn flux_divergence_is_symmetric(
        (c, u, v) in grid_2d().prop_flat_map(|g| {
            let coef = proptest::collection::vec(0.0f64..3.0, g.len()).prop_map(move |v| ScalarField::new(g, v).unwrap());
            (coef, field_on(g), field_on(g))
        })
    ) {
        let u = interior_only(u);
        let v = interior_only(v);
        let du = flux_divergence(&c, &u).unwrap();
        let dv = flux_divergence(&c, &v).unwrap();
        let a: f64 = v.values().iter().zip(du.values()).map(|(x, y)| x * y).sum();
        let b: f64 = u.values().iter().zip(dv.values()).map(|(x, y)| x * y).sum();
        let scale = v.values().iter().zip(du.values()).map(|(x, y)| (x * y).abs()).sum::<f64>().max(1e-300);
        prop_assert!((a - b).abs() <= 1e-12 * scale);
    }

    #[test]
    fn l2_norm_is_homogeneous(f in grid_2d().prop_flat_map(field_on), alpha in -10.0f64..10.0) {
        let g = *f.grid();
        let one = ScalarField::constant(g, 1.0);
        let base = norm_l2_weighted(&one, &f).unwrap();
        let scaled = norm_l2_weighted(&one, &f.map(|v| alpha * v)).unwrap();
        prop_assert!((scaled - alpha.abs() * base).abs() <= 1e-12 * (1.0 + scaled));
    }

    #[test]
    fn l2_norm_ignores_node_order(vals in proptest::collection::vec(-5.0f64..5.0, 9), seed in any::<u64>()) {
        let g = GridSpec::cube(2, 0.0, 1.0, 3).unwrap();
        let one = ScalarField::constant(g, 1.0);
        let mut perm = vals.clone();
        let k = (seed % 9) as usize;
        perm.rotate_left(k);
        perm.swap(0, 8 - k.min(8));
        let a = norm_l2_weighted(&one, &ScalarField::new(g, vals).unwrap()).unwrap();
        let b = norm_l2_weighted(&one, &ScalarField::new(g, perm).unwrap()).unwrap();
        prop_assert!((a - b).abs() <= 1e-14 * (1.0 + a));
    }
}
