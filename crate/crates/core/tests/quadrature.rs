use phasepop::grid::{first_moment_n, integrate, marginal_over_params, size_distribution, sup_norm_diff};
use phasepop::{Axis, AxisName, Field, GaussianComponent, InitialDistribution, PhaseGrid};
use proptest::prelude::*;

/// Mass of a 1D normal with weight 1 on `[lo, hi]`.
fn normal_mass(c: f64, s: f64, lo: f64, hi: f64) -> f64 {
    let z = |x: f64| libm::erf((x - c) / (s * std::f64::consts::SQRT_2));
    0.5 * (z(hi) - z(lo))
}

fn normal_pdf(x: f64, c: f64, s: f64) -> f64 {
    (-0.5 * ((x - c) / s).powi(2)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
}

fn plane(n: (f64, f64, usize), a: (f64, f64, usize)) -> PhaseGrid {
    PhaseGrid::new(vec![
        Axis::new(AxisName::N, n.0, n.1, n.2).unwrap(),
        Axis::new(AxisName::Alpha, a.0, a.1, a.2).unwrap(),
    ])
    .unwrap()
}

#[test]
fn gaussian_mass_matches_erf() {
    // truncated by the n = 0 face and by the window on alpha
    let g = plane((0.0, 12.0, 1201), (1.0, 9.0, 801));
    let u0 = InitialDistribution::mixture(vec![GaussianComponent::new(vec![1.5, 4.0], vec![1.0, 2.0], 3.0).unwrap()])
        .unwrap();
    let exact = 3.0 * normal_mass(1.5, 1.0, 0.0, 12.0) * normal_mass(4.0, 2.0, 1.0, 9.0);
    let got = integrate(&u0.sample(&g).unwrap());
    assert!((got - exact).abs() < 1e-5 * exact, "{got} vs {exact}");
}

#[test]
fn gaussian_marginal_matches_erf() {
    let g = plane((0.0, 30.0, 301), (0.0, 40.0, 401));
    let u0 = InitialDistribution::gaussian(vec![15.0, 20.0], vec![2.0, 2.0]).unwrap();
    let rho = marginal_over_params(&u0.sample(&g).unwrap()).unwrap();
    let a_mass = normal_mass(20.0, 2.0, 0.0, 40.0);
    for (i, r) in rho.values().iter().enumerate() {
        let n = g.n_axis().coord(i);
        let exact = normal_pdf(n, 15.0, 2.0) * a_mass;
        assert!((r - exact).abs() < 1e-9, "n = {n}: {r} vs {exact}");
    }
    let n_mean = first_moment_n(&u0.sample(&g).unwrap());
    assert!((n_mean - 15.0).abs() < 1e-8);
}

#[test]
fn two_peak_mass() {
    let g = PhaseGrid::new(vec![Axis::new(AxisName::N, 0.0, 12.0, 601).unwrap()]).unwrap();
    let u0 = InitialDistribution::mixture(vec![
        GaussianComponent::new(vec![4.2], vec![0.6], 0.5).unwrap(),
        GaussianComponent::new(vec![7.2], vec![0.6], 0.5).unwrap(),
    ])
    .unwrap();
    let f = u0.sample(&g).unwrap();
    let exact = 0.5 * normal_mass(4.2, 0.6, 0.0, 12.0) + 0.5 * normal_mass(7.2, 0.6, 0.0, 12.0);
    assert!((integrate(&f) - exact).abs() < 1e-12);
}

fn small_grid() -> impl Strategy<Value = PhaseGrid> {
    (2usize..12, 2usize..9, 2usize..6, 0.1f64..5.0, 0.1f64..5.0).prop_map(|(cn, ca, cg, hn, ha)| {
        PhaseGrid::new(vec![
            Axis::new(AxisName::N, 0.0, hn, cn).unwrap(),
            Axis::new(AxisName::Alpha, 0.5, 0.5 + ha, ca).unwrap(),
            Axis::new(AxisName::K, 1.0, 2.0, cg).unwrap(),
        ])
        .unwrap()
    })
}

fn field_on(grid: PhaseGrid) -> impl Strategy<Value = Field> {
    let len = grid.len();
    prop::collection::vec(0.0f64..10.0, len).prop_map(move |v| Field::new(grid.clone(), v).unwrap())
}

fn two_fields() -> impl Strategy<Value = (Field, Field)> {
    small_grid().prop_flat_map(|g| (field_on(g.clone()), field_on(g)))
}

proptest! {
    #[test]
    fn quadrature_is_linear(((a, b), s, t) in (two_fields(), 0.0f64..3.0, 0.0f64..3.0)) {
        let comb: Vec<f64> = a.values().iter().zip(b.values()).map(|(x, y)| s * x + t * y).collect();
        let comb = Field::new(a.grid().clone(), comb).unwrap();
        let lhs = integrate(&comb);
        let rhs = s * integrate(&a) + t * integrate(&b);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
    }

    #[test]
    fn marginal_is_consistent(f in small_grid().prop_flat_map(field_on)) {
        let rho = size_distribution(&f);
        prop_assert_eq!(integrate(&rho), integrate(&f));
        prop_assert!((first_moment_n(&rho) - first_moment_n(&f)).abs() <= 1e-12 * (1.0 + first_moment_n(&f)));
    }

    #[test]
    fn csv_round_trip(f in small_grid().prop_flat_map(field_on)) {
        let mut first = Vec::new();
        f.write_csv(&mut first, "u").unwrap();
        let back = Field::read_csv(first.as_slice()).unwrap();
        prop_assert_eq!(&back, &f);
        let mut second = Vec::new();
        back.write_csv(&mut second, "u").unwrap();
        prop_assert_eq!(first, second);
    }

    #[test]
    fn normalize_is_idempotent(
        c in (1.0f64..20.0, 1.0f64..20.0),
        s in (0.5f64..4.0, 0.5f64..4.0),
        count in 1.0f64..1e4,
    ) {
        let g = plane((0.0, 25.0, 101), (0.0, 25.0, 101));
        let u0 = InitialDistribution::gaussian(vec![c.0, c.1], vec![s.0, s.1]).unwrap();
        let once = u0.normalize_to_count(count, &g).unwrap();
        let twice = once.normalize_to_count(count, &g).unwrap();
        let (f1, f2) = (once.sample(&g).unwrap(), twice.sample(&g).unwrap());
        prop_assert!((integrate(&f1) - count).abs() <= 1e-9 * count);
        prop_assert!(sup_norm_diff(&f1, &f2).unwrap() <= 1e-12 * f1.max());
    }
}
