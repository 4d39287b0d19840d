use freemul_core::convolution::{density, find_lower_edge, find_upper_edge, quantiles, uniform_grid};
use freemul_core::measures::levy_distance;
use freemul_core::spiked::{DEFAULT_TAU1, DEFAULT_TAU2};
use freemul_core::subordination::{geometric_schedule, phi, solve_at, solve_path};
use freemul_core::{Complex64, SolverConfig, SpectralMeasure, Side, SpikeLabel, SpikedModel};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn two_atom() -> SpectralMeasure {
    SpectralMeasure::atomic([(1.0, 0.5), (3.0, 0.5)]).unwrap()
}

fn delta(x: f64) -> SpectralMeasure {
    SpectralMeasure::point_mass(x).unwrap()
}

fn bump_on(lo: f64, hi: f64) -> SpectralMeasure {
    let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
    SpectralMeasure::semicircle(mid, half, 801).unwrap()
}

#[test]
fn stieltjes_closed_forms() {
    let m = delta(1.0).stieltjes(c(0.0, 2.0)).unwrap();
    assert!((m - c(0.2, 0.4)).norm() < 1e-15);

    let m = two_atom().stieltjes(c(0.0, 2.0)).unwrap();
    let expected = 0.5 * (c(1.0, 2.0) / 5.0 + c(3.0, 2.0) / 13.0);
    assert!((m - expected).norm() < 1e-15);
    assert!((m.re - 0.215_384_6).abs() < 1e-6 && (m.im - 0.276_923_0).abs() < 1e-6);
}

#[test]
fn m_and_l_of_point_masses() {
    let z = c(3.0, 1.0);
    assert!((delta(2.0).m_transform(z).unwrap() - c(1.5, 0.5)).norm() < 1e-14);
    let t = delta(1.0).transforms(c(2.0, 1.0)).unwrap();
    assert!((t.big_m - c(2.0, 1.0)).norm() < 1e-14);
    assert!((t.l - 1.0).norm() < 1e-14);
}

#[test]
fn l_derivative_at_a_real_point() {
    let mu = two_atom();
    let h = 1e-6;
    let z = c(5.0, 0.0);
    let fd = (mu.transforms(z + h).unwrap().l - mu.transforms(z - h).unwrap().l) / (2.0 * h);
    let l1 = mu.transforms(z).unwrap().l1;
    assert!((fd - l1).norm() <= 1e-7 * l1.norm());
}

// Brute force: scan ε upwards and test the defining inequalities on a fine x grid
// that also contains every jump point and its neighbours.
fn levy_oracle(f1: &SpectralMeasure, f2: &SpectralMeasure) -> f64 {
    let mut xs: Vec<f64> = (0..=60_000).map(|i| -1.0 + i as f64 * 1e-4).collect();
    for b in f1.breakpoints().into_iter().chain(f2.breakpoints()) {
        for d in [-1e-9, 0.0, 1e-9] {
            xs.push(b + d);
        }
    }
    let ok = |eps: f64, a: &SpectralMeasure, b: &SpectralMeasure| {
        xs.iter().all(|&x| a.cdf(x - eps) - eps <= b.cdf(x) + 1e-12 && b.cdf(x) <= a.cdf(x + eps) + eps + 1e-12)
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    while hi - lo > 1e-7 {
        let mid = 0.5 * (lo + hi);
        if ok(mid, f1, f2) && ok(mid, f2, f1) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

#[test]
fn levy_distances() {
    let mu = two_atom();
    assert_eq!(levy_distance(&mu, &mu), 0.0);
    assert!((levy_distance(&delta(1.0), &delta(1.5)) - 0.5).abs() < 1e-6);
    let oracle = levy_oracle(&delta(1.0), &delta(1.5));
    assert!((oracle - 0.5).abs() < 1e-6);
    let oracle = levy_oracle(&mu, &delta(1.0));
    assert!((levy_distance(&mu, &delta(1.0)) - oracle).abs() < 1e-6, "oracle {oracle}");
}

#[test]
fn empirical_measures_merge_duplicates() {
    let mu = SpectralMeasure::empirical_from_samples(&[2.0, 1.0, 3.0]).unwrap();
    let third = 1.0 / 3.0;
    let atoms = mu.atoms();
    assert_eq!(atoms.len(), 3);
    for (got, want) in atoms.iter().zip([(3.0, third), (2.0, third), (1.0, third)]) {
        assert_eq!(got.0, want.0);
        assert!((got.1 - want.1).abs() < 1e-15);
    }
    assert_eq!(SpectralMeasure::empirical_from_samples(&[1.0]).unwrap().atoms(), &[(1.0, 1.0)]);
    let merged = SpectralMeasure::empirical_from_samples(&[1.0, 1.0, 1.0]).unwrap();
    assert_eq!(merged.atoms().len(), 1);
    assert!((merged.atoms()[0].1 - 1.0).abs() < 1e-12);
}

#[test]
fn phi_vanishes_at_known_solutions() {
    let z = c(0.0, 2.0);
    let mu_b = two_atom();
    let (pa, pb) = phi(&delta(1.0), &mu_b, z, mu_b.m_transform(z).unwrap(), z).unwrap();
    assert!(pa.norm() < 1e-14 && pb.norm() < 1e-14);

    let z = c(1.0, 1.0);
    let (pa, pb) = phi(&delta(2.0), &delta(3.0), z / 2.0, z / 3.0, z).unwrap();
    assert!(pa.norm() < 1e-14 && pb.norm() < 1e-14);
}

#[test]
fn identity_measure_solves_immediately() {
    let z = c(0.0, 2.0);
    let mu_b = two_atom();
    let sol = solve_at(&delta(1.0), &mu_b, z, None, &SolverConfig::default()).unwrap();
    assert!((sol.omega_a - z).norm() < 1e-12);
    assert!((sol.omega_b - mu_b.m_transform(z).unwrap()).norm() < 1e-12);
    assert!(sol.iterations <= 3);
}

#[test]
fn solution_near_the_axis_satisfies_the_product_identity() {
    let mu = two_atom();
    let cfg = SolverConfig::default();
    let sol = solve_path(&mu, &mu, 10.0, &geometric_schedule(90.0, 0.01, 0.7), &cfg).unwrap();
    let last = sol.last().unwrap();
    let lhs = last.omega_a * last.omega_b;
    let rhs = last.z * mu.m_transform(last.omega_b).unwrap();
    assert!((lhs - rhs).norm() <= 1e-10);
}

#[test]
fn interior_imaginary_part_stays_order_one() {
    let mu = two_atom();
    let cfg = SolverConfig::default();
    let lo = find_lower_edge(&mu, &mu, &cfg).unwrap().location;
    let hi = find_upper_edge(&mu, &mu, &cfg).unwrap().location;
    let path = solve_path(&mu, &mu, 0.5 * (lo + hi), &geometric_schedule(90.0, 1e-6, 0.7), &cfg).unwrap();
    assert!(path.last().unwrap().omega_a.im > 0.01);
}

#[test]
fn identity_path_is_exact() {
    let cfg = SolverConfig::default();
    let schedule = geometric_schedule(10.0, 1e-4, 0.7);
    let path = solve_path(&delta(1.0), &two_atom(), 2.0, &schedule, &cfg).unwrap();
    for (sol, eta) in path.iter().zip(&schedule) {
        assert!((sol.omega_a - c(2.0, *eta)).norm() < 1e-12);
    }
}

#[test]
fn continuation_to_the_real_line_outside_the_bulk() {
    let mu = two_atom();
    let cfg = SolverConfig::default();
    let path = solve_path(&mu, &mu, 10.0, &geometric_schedule(90.0, 0.0, 0.7), &cfg).unwrap();
    let last = path.last().unwrap();
    assert_eq!(last.z.im, 0.0);
    assert!(last.omega_b.im.abs() <= 1e-8);
    // Direct real solve from the previous continuation point lands on the same solution.
    let prev = path[path.len() - 2];
    let direct = solve_at(&mu, &mu, c(10.0, 0.0), Some((prev.omega_a, prev.omega_b)), &cfg).unwrap();
    assert!((direct.omega_b - last.omega_b).norm() < 1e-9);
}

#[test]
fn continuation_inside_the_bulk_stabilises() {
    let mu = two_atom();
    let path = solve_path(&mu, &mu, 4.0, &geometric_schedule(90.0, 1e-6, 0.7), &SolverConfig::default()).unwrap();
    let k = path.len();
    let (a, b) = (path[k - 2].omega_b.im, path[k - 1].omega_b.im);
    assert!(((a - b) / b).abs() < 5e-5, "{a} vs {b}");
}

fn interpolate(grid: &[f64], values: &[f64], x: f64) -> f64 {
    let k = grid.partition_point(|g| *g <= x).clamp(1, grid.len() - 1);
    let t = (x - grid[k - 1]) / (grid[k] - grid[k - 1]);
    values[k - 1] + t * (values[k] - values[k - 1])
}

#[test]
fn point_mass_dilates_a_density() {
    let mu_b = bump_on(1.0, 3.0);
    let mu_a = delta(2.0);
    let cfg = SolverConfig::default();
    let upper = find_upper_edge(&mu_a, &mu_b, &cfg).unwrap().location;
    let lower = find_lower_edge(&mu_a, &mu_b, &cfg).unwrap().location;
    assert!((upper - 6.0).abs() < 1e-6);
    assert!((lower - 2.0).abs() < 1e-6);

    let grid: Vec<f64> = uniform_grid(2.2, 5.8, 37);
    let result = density(&mu_a, &mu_b, &grid, 0.0, &cfg).unwrap();
    for (x, rho) in grid.iter().zip(&result.density) {
        let expected = 0.5 * interpolate(mu_b.grid(), mu_b.values(), x / 2.0);
        assert!((rho - expected).abs() < 1e-4, "x = {x}: {rho} vs {expected}");
    }
}

#[test]
fn uniform_quantiles() {
    let mu = SpectralMeasure::density(vec![1.0, 2.0], vec![1.0, 1.0]).unwrap();
    let cfg = SolverConfig::default();
    let grid = uniform_grid(0.9, 2.1, 241);
    let result = density(&delta(1.0), &mu, &grid, 0.0, &cfg).unwrap();
    let q = quantiles(&result, 4);
    for (g, want) in q.gammas.iter().zip([1.75, 1.5, 1.25, 1.0]) {
        assert!((g - want).abs() < 1e-3, "{:?}", q.gammas);
    }
}

fn spiked_two_atom(d_a: Vec<f64>, d_b: Vec<f64>, n: usize) -> SpikedModel {
    SpikedModel::new(two_atom(), two_atom(), d_a, d_b, n).unwrap()
}

// Strength putting â₁ at `threshold + offset`.
fn strength_for(offset: f64, n: usize) -> f64 {
    let base = spiked_two_atom(vec![0.0], vec![], n);
    (base.omega_at_edge(Side::B) + offset) / base.a_base()[0] - 1.0
}

#[test]
fn inverse_round_trip() {
    let m = spiked_two_atom(vec![1.0], vec![], 1000);
    let x0 = m.e_plus() + 0.5;
    let (target, _) = m.omega_forward(Side::B, x0).unwrap();
    assert!((m.omega_inverse(Side::B, target).unwrap() - x0).abs() < 1e-9);
}

#[test]
fn outlier_gap_grows_quadratically() {
    let m = spiked_two_atom(vec![1.0], vec![], 1000);
    let threshold = m.omega_at_edge(Side::B);
    let ratios: Vec<f64> = [0.2, 0.1, 0.05]
        .iter()
        .map(|eps| (m.omega_inverse(Side::B, threshold + eps).unwrap() - m.e_plus()) / (eps * eps))
        .collect();
    let (lo, hi) = ratios.iter().fold((f64::MAX, 0.0f64), |(l, h), r| (l.min(*r), h.max(*r)));
    assert!(lo > 0.0 && hi / lo <= 4.0, "{ratios:?}");
}

#[test]
fn classification_of_a_single_spike() {
    let n = 1000;
    let m = spiked_two_atom(vec![strength_for(0.5, n)], vec![], n);
    let cls = m.classify().unwrap();
    assert_eq!(cls.outliers, vec![SpikeLabel::FromA(0)]);
    assert_eq!(cls.supercritical, vec![SpikeLabel::FromA(0)]);
    assert_eq!(cls.rank_of(SpikeLabel::FromA(0)), Some(1));

    let near = spiked_two_atom(vec![strength_for(0.5 * (n as f64).powf(-1.0 / 3.0), n)], vec![], n);
    let cls = near.classify().unwrap();
    assert_eq!(cls.outliers, vec![SpikeLabel::FromA(0)]);
    assert!(cls.supercritical.is_empty());
}

#[test]
fn ranks_follow_predicted_locations() {
    // A weak A-spike and a strong B-spike: the B outlier lies further out.
    let m = spiked_two_atom(vec![0.5], vec![3.0], 1000);
    let la = m.omega_inverse(Side::B, m.a_hat()[0]).unwrap();
    let lb = m.omega_inverse(Side::A, m.b_hat()[0]).unwrap();
    assert!(la < lb);
    let cls = m.classify().unwrap();
    assert_eq!(cls.rank_of(SpikeLabel::FromB(0)), Some(1));
    assert_eq!(cls.rank_of(SpikeLabel::FromA(0)), Some(2));
}

#[test]
fn subcritical_spike_sits_at_the_edge() {
    let n = 1000;
    let m = spiked_two_atom(vec![0.01], vec![], n);
    let p = m.predict_outliers().unwrap();
    assert!(!p[0].supercritical);
    assert_eq!(p[0].location, m.e_plus());
    assert!((p[0].fluctuation - (n as f64).powf(-2.0 / 3.0)).abs() < 1e-15);
}

#[test]
fn overlap_increases_towards_one() {
    let n = 1000;
    let mut last = 0.0;
    for offset in [0.2, 0.5, 1.0, 2.0, 5.0, 20.0, 100.0] {
        let m = spiked_two_atom(vec![strength_for(offset, n)], vec![], n);
        let o = m.predict_overlaps(&[SpikeLabel::FromA(0)], DEFAULT_TAU1, DEFAULT_TAU2).unwrap();
        let g = o.g_a_diag[0].1;
        assert!(g > last && g < 1.0, "offset {offset}: {g}");
        last = g;
    }
    assert!(last > 0.95);
}

#[test]
fn equal_spikes_report_zero_separation() {
    let m = spiked_two_atom(vec![1.0, 1.0], vec![], 1000);
    assert_eq!(m.a_hat()[0], m.a_hat()[1]);
    // Separation counts only spikes outside the chosen set.
    let o = m.predict_overlaps(&[SpikeLabel::FromA(0)], DEFAULT_TAU1, DEFAULT_TAU2).unwrap();
    assert_eq!(o.delta_table.delta(SpikeLabel::FromA(0)), Some(0.0));
    assert!(!o.assumption_ok);
}
