use geodual_core::geometry::geopotential;
use geodual_core::oracle::{self, LatticeSpec};
use geodual_core::solver::{
    dual_functional, dual_gradient, surface_diagnostics, surface_height_crosscheck, Owner,
};
use geodual_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cloud(points: &[([f64; 3], f64)]) -> DualCloud {
    DualCloud::normalized(
        points.iter().map(|&(y, m)| Particle::new(y, m)).collect(),
        0.1,
    )
    .unwrap()
}

fn tight() -> SolverConfig {
    SolverConfig {
        mass_tolerance: 1e-10,
        ..Default::default()
    }
}

fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> DualCloud {
    let ps = (0..n)
        .map(|_| {
            Particle::new(
                [
                    rng.random_range(-0.2..1.2),
                    rng.random_range(-0.2..1.2),
                    rng.random_range(-1.6..-0.6),
                ],
                rng.random_range(0.5..1.5),
            )
        })
        .collect();
    DualCloud::normalized(ps, 0.1).unwrap()
}

#[test]
fn single_particle_weight_matches_quadrature_root() {
    let y = [0.0, 0.0, -1.0];
    let c = cloud(&[(y, 1.0)]);
    let domain = FluidDomain::free_surface([1.0, 1.0], 3.0, [64, 64]).unwrap();
    let sol = solve_weights(&c, &domain, &CostModel::incompressible(), &tight(), None).unwrap();
    let r_star = oracle::single_particle_weight(&y, [1.0, 1.0], 3.0, 2048).unwrap();
    assert!((sol.weights.values()[0] - r_star).abs() < 1e-4);

    // per-column paraboloid
    let r = sol.weights.values()[0];
    for col in 0..domain.column_count() {
        let [x1, x2] = domain.column_center(col);
        let expected = (-r - 0.5 * (x1 * x1 + x2 * x2)).max(0.0);
        assert!((sol.tessellation.heights().values()[col] - expected).abs() < 1e-10);
    }
}

#[test]
fn single_particle_dry_corner() {
    // Wide footprint: the far corner is dry and the cross-check agrees.
    let c = cloud(&[([0.0, 0.0, -1.0], 1.0)]);
    let domain = FluidDomain::free_surface([2.0, 2.0], 2.0, [32, 32]).unwrap();
    let inc = CostModel::incompressible();
    let sol = solve_weights(&c, &domain, &inc, &tight(), None).unwrap();
    let h = sol.tessellation.heights();
    assert_eq!(h.get(31, 31), 0.0);
    let check = surface_height_crosscheck(&c, &domain, &inc, &sol.weights, &sol.tessellation).unwrap();
    assert_eq!(check.heights.get(31, 31), 0.0);
    assert!(check.max_height_residual <= 1e-10);
    assert!(check.max_pressure_residual <= 1e-10);
}

#[test]
fn dual_value_equals_energy_at_optimum() {
    let y = [0.0, 0.0, -1.0];
    let c = cloud(&[(y, 1.0)]);
    let domain = FluidDomain::free_surface([1.0, 1.0], 3.0, [64, 64]).unwrap();
    let inc = CostModel::incompressible();
    let sol = solve_weights(&c, &domain, &inc, &tight(), None).unwrap();
    let f = dual_functional(&c, &domain, &inc, &sol.weights).unwrap();
    let r = sol.weights.values()[0];
    let direct = oracle::single_particle_energy(&y, r, [1.0, 1.0], 3.0, 512, 64);
    assert!((f - sol.tessellation.energy()).abs() < 1e-9);
    assert!((f - direct).abs() / direct < 1e-3, "F = {f}, quadrature {direct}");
}

#[test]
fn two_particles_match_weight_scan() {
    let c = cloud(&[([0.25, 0.5, -1.0], 0.5), ([-0.25, 0.5, -0.8], 0.5)]);
    let domain = FluidDomain::free_surface([1.0, 1.0], 3.0, [32, 32]).unwrap();
    let inc = CostModel::incompressible();
    let sol = solve_weights(&c, &domain, &inc, &tight(), None).unwrap();
    for v in sol.tessellation.volumes() {
        assert!((v - 0.5).abs() < 1e-9);
    }
    let scan = oracle::weight_scan(
        &c,
        &domain,
        &inc,
        &LatticeSpec {
            center: sol.weights.values().iter().map(|r| r + 0.01).collect(),
            half_width: 0.1,
            points: 64,
            refinements: 2,
        },
    )
    .unwrap();
    assert_eq!(scan.half_widths, vec![0.1, 0.05, 0.025]);
    for (a, b) in scan.weights.iter().zip(sol.weights.values()) {
        assert!((a - b).abs() <= scan.spacing, "scan {a} vs solver {b}");
    }
}

#[test]
fn weight_scan_brackets_single_root() {
    let y = [0.0, 0.0, -1.0];
    let c = cloud(&[(y, 1.0)]);
    let domain = FluidDomain::free_surface([1.0, 1.0], 3.0, [32, 32]).unwrap();
    let inc = CostModel::incompressible();
    let scan = oracle::weight_scan(
        &c,
        &domain,
        &inc,
        &LatticeSpec {
            center: vec![-1.0],
            half_width: 1.0,
            points: 41,
            refinements: 3,
        },
    )
    .unwrap();
    let sol = solve_weights(&c, &domain, &inc, &tight(), None).unwrap();
    assert!((scan.weights[0] - sol.weights.values()[0]).abs() <= scan.spacing);
}

// Mirroring x1 -> 1 - x1 maps the problem to itself when the particles are
// mirrored about x1 = 1/2 and R_i - |y_h,i|^2 / 2 agree.
fn mirror_pair() -> DualCloud {
    cloud(&[([0.0, 0.3, -1.0], 0.5), ([1.0, 0.3, -1.0], 0.5)])
}

fn reduced_weights(c: &DualCloud, w: &PotentialWeights) -> Vec<f64> {
    c.positions()
        .zip(w.values())
        .map(|(y, r)| r - 0.5 * (y[0] * y[0] + y[1] * y[1]))
        .collect()
}

#[test]
fn mirror_pair_has_equal_volumes() {
    let c = mirror_pair();
    let domain = FluidDomain::free_surface([1.0, 1.0], 3.0, [16, 16]).unwrap();
    let sol = solve_weights(&c, &domain, &CostModel::incompressible(), &SolverConfig::default(), None).unwrap();
    let v = sol.tessellation.volumes();
    assert!((v[0] - v[1]).abs() <= 1e-6);
    // Equal y3 leaves the cell boundary free to move between column centres.
    let r = reduced_weights(&c, &sol.weights);
    assert!((r[0] - r[1]).abs() <= 1.0 / 16.0, "{r:?}");
}

#[test]
fn symmetric_gradient_components() {
    let c = mirror_pair();
    let domain = FluidDomain::free_surface([1.0, 1.0], 3.0, [16, 16]).unwrap();
    let inc = CostModel::incompressible();
    let w = PotentialWeights::new(c.positions().map(|y| 0.5 * (y[0] * y[0] + y[1] * y[1]) - 0.9).collect()).unwrap();
    let g = dual_gradient(&c, &domain, &inc, &w).unwrap();
    assert!((g[0] - g[1]).abs() < 1e-14, "{g:?}");
}

#[test]
fn rigid_lid_gauge_and_symmetry() {
    let c = cloud(&[([0.25, 0.5, -1.0], 0.5), ([0.75, 0.5, -1.0], 0.5)]);
    let domain = FluidDomain::rigid_lid([1.0, 1.0], 1.0, [16, 16]).unwrap();
    let sol = solve_weights(&c, &domain, &CostModel::incompressible(), &SolverConfig::default(), None).unwrap();
    let r = sol.weights.values();
    assert!((r[0] + r[1]).abs() < 1e-14);
    // The cell boundary x1 = (R_1 - R_0) / (y1_1 - y1_0) may sit anywhere
    // between two column centres around x1 = 1/2.
    let boundary = (r[1] - r[0]) / 0.5;
    assert!((boundary - 0.5).abs() <= 1.0 / 16.0, "{r:?}");
}

#[test]
fn gradient_sign_for_low_weight() {
    let c = cloud(&[([0.0, 0.0, -1.0], 1.0)]);
    let domain = FluidDomain::free_surface([1.0, 1.0], 3.0, [32, 32]).unwrap();
    let inc = CostModel::incompressible();
    // R high: little fluid, V < m, g < 0; ascent lowers R.
    let w = PotentialWeights::new(vec![-0.3]).unwrap();
    let g = dual_gradient(&c, &domain, &inc, &w).unwrap();
    assert!(g[0] < 0.0);
    let fd = oracle::finite_difference_gradient(
        |r| dual_functional(&c, &domain, &inc, &PotentialWeights::new(r.to_vec())?),
        w.values(),
        1e-5,
    )
    .unwrap();
    assert!((fd[0] - g[0]).abs() <= 1e-6 * g[0].abs());
}

#[test]
fn gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let domain = FluidDomain::free_surface([1.0, 1.0], 4.0, [32, 32]).unwrap();
    let inc = CostModel::incompressible();
    for _ in 0..10 {
        let n = rng.random_range(2..=8);
        let c = random_cloud(&mut rng, n);
        let base = solve_weights(&c, &domain, &inc, &SolverConfig::default(), None).unwrap();
        let r: Vec<f64> = base
            .weights
            .values()
            .iter()
            .map(|v| v + rng.random_range(-0.05..0.05))
            .collect();
        let w = PotentialWeights::new(r.clone()).unwrap();
        let g = dual_gradient(&c, &domain, &inc, &w).unwrap();
        let fd = oracle::finite_difference_gradient(
            |x| dual_functional(&c, &domain, &inc, &PotentialWeights::new(x.to_vec())?),
            &r,
            1e-5,
        )
        .unwrap();
        let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in g.iter().zip(&fd) {
            assert!((a - b).abs() <= 1e-6 * scale, "g {a} fd {b} scale {scale}");
        }
    }
}

#[test]
fn dual_functional_is_concave_and_maximal() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let domain = FluidDomain::free_surface([1.0, 1.0], 4.0, [24, 24]).unwrap();
    let inc = CostModel::incompressible();
    for _ in 0..20 {
        let n = rng.random_range(1..=8);
        let c = random_cloud(&mut rng, n);
        let sol = solve_weights(&c, &domain, &inc, &SolverConfig::default(), None).unwrap();
        let f_star = dual_functional(&c, &domain, &inc, &sol.weights).unwrap();
        let jitter = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            sol.weights.values().iter().map(|v| v + rng.random_range(-0.3..0.3)).collect()
        };
        let a = jitter(&mut rng);
        let b = jitter(&mut rng);
        let f = |r: &[f64]| dual_functional(&c, &domain, &inc, &PotentialWeights::new(r.to_vec()).unwrap()).unwrap();
        let (fa, fb) = (f(&a), f(&b));
        for t in [0.25, 0.5, 0.75] {
            let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| t * x + (1.0 - t) * y).collect();
            assert!(f(&mix) >= t * fa + (1.0 - t) * fb - 1e-9);
        }
        assert!(fa <= f_star + 1e-9 && fb <= f_star + 1e-9);
    }
}

#[test]
fn free_surface_is_not_shift_invariant() {
    let c = cloud(&[([0.3, 0.4, -1.0], 0.5), ([0.6, 0.5, -0.8], 0.5)]);
    let domain = FluidDomain::free_surface([1.0, 1.0], 3.0, [16, 16]).unwrap();
    let inc = CostModel::incompressible();
    let w = PotentialWeights::new(vec![-0.8, -0.7]).unwrap();
    let shifted = PotentialWeights::new(vec![-0.7, -0.6]).unwrap();
    let f0 = dual_functional(&c, &domain, &inc, &w).unwrap();
    let f1 = dual_functional(&c, &domain, &inc, &shifted).unwrap();
    assert!((f0 - f1).abs() > 1e-6);
    let rigid = FluidDomain::rigid_lid([1.0, 1.0], 1.0, [16, 16]).unwrap();
    let f0 = dual_functional(&c, &rigid, &inc, &w).unwrap();
    let f1 = dual_functional(&c, &rigid, &inc, &shifted).unwrap();
    assert!((f0 - f1).abs() < 1e-12);
}

#[test]
fn converged_tessellations_are_single_valued() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let domain = FluidDomain::free_surface([1.5, 1.0], 4.0, [40, 30]).unwrap();
    let inc = CostModel::incompressible();
    for _ in 0..8 {
        let c = random_cloud(&mut rng, 5);
        let sol = solve_weights(&c, &domain, &inc, &SolverConfig::default(), None).unwrap();
        let t = &sol.tessellation;
        assert_eq!(t.single_valued_violations(), 0);
        assert!((t.total_volume() - 1.0).abs() <= 1e-6);
        assert!(t.mass_residual(&c) <= 1e-6 * c.max_mass());
        for col in 0..t.column_count() {
            let segs = t.column_segments(col);
            let vac = segs.iter().position(|s| s.owner == Owner::Vacuum);
            if let Some(k) = vac {
                assert!(segs[k..].iter().all(|s| s.owner == Owner::Vacuum));
            }
        }
        let check = surface_height_crosscheck(&c, &domain, &inc, &sol.weights, t).unwrap();
        assert!(check.max_height_residual <= 1e-10);
        assert!(check.max_pressure_residual <= 1e-10);
    }
}

#[test]
fn winners_reproduce_masses() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let domain = FluidDomain::free_surface([1.0, 1.0], 3.0, [64, 64]).unwrap();
    let inc = CostModel::incompressible();
    let c = random_cloud(&mut rng, 6);
    let sol = solve_weights(&c, &domain, &inc, &SolverConfig::default(), None).unwrap();
    let mut counts = vec![0usize; c.len()];
    let mut accepted = 0;
    while accepted < 1000 {
        let x = [rng.random::<f64>(), rng.random::<f64>(), 3.0 * rng.random::<f64>()];
        let e = geopotential(&x, &c, &sol.weights).unwrap();
        if e.value - 0.5 * (x[0] * x[0] + x[1] * x[1]) >= 0.0 {
            counts[e.winner] += 1;
            accepted += 1;
        }
    }
    let tv: f64 = counts
        .iter()
        .zip(c.particles())
        .map(|(k, p)| (*k as f64 / 1000.0 - p.mass).abs())
        .sum::<f64>()
        * 0.5;
    assert!(tv <= 4.0 / 1000f64.sqrt(), "tv {tv}");
}

#[test]
fn tessellation_is_thread_count_independent() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let c = random_cloud(&mut rng, 7);
    let domain = FluidDomain::free_surface([1.0, 1.0], 3.0, [48, 48]).unwrap();
    let inc = CostModel::incompressible();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| solve_weights(&c, &domain, &inc, &SolverConfig::default(), None).unwrap())
    };
    let a = run(1);
    let b = run(5);
    assert_eq!(a.weights, b.weights);
    assert_eq!(a.tessellation.volumes(), b.tessellation.volumes());
    assert_eq!(a.tessellation.energy().to_bits(), b.tessellation.energy().to_bits());
}

#[test]
fn surface_diagnostics_are_finite() {
    let c = cloud(&[([0.3, 0.4, -1.0], 0.5), ([0.7, 0.5, -0.8], 0.5)]);
    let domain = FluidDomain::free_surface([1.0, 1.0], 3.0, [64, 64]).unwrap();
    let sol = solve_weights(&c, &domain, &CostModel::incompressible(), &SolverConfig::default(), None).unwrap();
    let d = surface_diagnostics(&c, &domain, &sol.weights, &sol.tessellation);
    assert!(d.lipschitz.is_finite() && d.lipschitz > 0.0);
    assert!(d.height_min <= d.height_max);
    // single-sheet interior: grad p = rho grad h up to the O(dx^2) stencil error
    assert!(d.pressure_height_rms < 0.05, "{d:?}");
    let energy = sol.tessellation.energy();
    let c0 = 2.0 / c.density_band() * energy;
    assert!(d.vertical_moment <= 2.0 * c0);
}

#[test]
fn compressible_identity_map_is_bit_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let c = random_cloud(&mut rng, 4);
    let domain = FluidDomain::free_surface([1.0, 1.0], 3.0, [32, 32]).unwrap();
    let inc = solve_weights(&c, &domain, &CostModel::incompressible(), &SolverConfig::default(), None).unwrap();
    let comp_model = CostModel::compressible(1.0, 0.0, 1004.0, 1.0).unwrap();
    let comp = solve_weights(&c, &domain, &comp_model, &SolverConfig::default(), None).unwrap();
    assert_eq!(inc.weights, comp.weights);
    assert_eq!(inc.tessellation.volumes(), comp.tessellation.volumes());
    assert_eq!(inc.tessellation.heights(), comp.tessellation.heights());
    assert_eq!(inc.tessellation.energy().to_bits(), comp.tessellation.energy().to_bits());
}

#[test]
fn compressible_surface_crosscheck() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let c = random_cloud(&mut rng, 5);
    let domain = FluidDomain::free_surface([1.0, 1.0], 3.0, [32, 32]).unwrap();
    let model = CostModel::compressible(2.0, 0.0, 1004.0, 1.0).unwrap();
    let sol = solve_weights(&c, &domain, &model, &SolverConfig::default(), None).unwrap();
    assert_eq!(sol.tessellation.single_valued_violations(), 0);
    let check = surface_height_crosscheck(&c, &domain, &model, &sol.weights, &sol.tessellation).unwrap();
    assert!(check.max_height_residual <= 1e-10);
    assert!(check.max_pressure_residual <= 1e-10);
}

#[test]
fn compressible_single_particle_surface() {
    // kappa = 2, p_h = 0: p_s^2 = -R - |x_h|^2 / 2 per column.
    let c = cloud(&[([0.0, 0.0, -1.0], 1.0)]);
    let domain = FluidDomain::free_surface([1.0, 1.0], 3.0, [16, 16]).unwrap();
    let model = CostModel::compressible(2.0, 0.0, 1004.0, 1.0).unwrap();
    let sol = solve_weights(&c, &domain, &model, &tight(), None).unwrap();
    let r = sol.weights.values()[0];
    for col in 0..domain.column_count() {
        let [x1, x2] = domain.column_center(col);
        let expected = (-r - 0.5 * (x1 * x1 + x2 * x2)).max(0.0).sqrt();
        assert!((sol.tessellation.heights().values()[col] - expected).abs() < 1e-12);
    }
}

#[test]
fn lifted_energy_of_rigid_atom_is_second_order() {
    let c = cloud(&[([0.0, 0.0, -1.0], 1.0)]);
    let inc = CostModel::incompressible();
    let mut errs = Vec::new();
    for n in [16, 32, 64] {
        let domain = FluidDomain::rigid_lid([1.0, 1.0], 1.0, [n, n]).unwrap();
        let t = tessellate(&c, &domain, &inc, &PotentialWeights::zeros(1)).unwrap();
        errs.push((t.energy() - 5.0 / 6.0).abs());
    }
    assert!(errs[2] <= 1e-3);
    for w in errs.windows(2) {
        let ratio = w[0] / w[1];
        assert!((ratio - 4.0).abs() < 0.05, "ratio {ratio}");
    }
}

proptest::proptest! {
    #![proptest_config(proptest::prelude::ProptestConfig::with_cases(16))]

    #[test]
    fn converged_cells_carry_their_masses(seed in 0u64..1_000_000, n in 1usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = random_cloud(&mut rng, n);
        let domain = FluidDomain::free_surface([1.0, 1.0], 4.0, [20, 20]).unwrap();
        let inc = CostModel::incompressible();
        let sol = solve_weights(&c, &domain, &inc, &tight(), None).unwrap();
        proptest::prop_assert!(sol.tessellation.mass_residual(&c) <= 1e-10 * c.max_mass());
        proptest::prop_assert_eq!(sol.tessellation.single_valued_violations(), 0);
        let f_star = dual_functional(&c, &domain, &inc, &sol.weights).unwrap();
        let off: Vec<f64> = sol.weights.values().iter().map(|v| v + rng.random_range(-0.2..0.2)).collect();
        let f_off = dual_functional(&c, &domain, &inc, &PotentialWeights::new(off).unwrap()).unwrap();
        proptest::prop_assert!(f_off <= f_star + 1e-12);
    }
}
