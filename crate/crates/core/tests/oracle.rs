use geodual_core::geometry::cost;
use geodual_core::oracle::{self, DiscreteMeasurePair};
use geodual_core::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn atoms(rng: &mut ChaCha8Rng, n: usize, z: std::ops::Range<f64>) -> Vec<(Point3, f64)> {
    (0..n)
        .map(|_| {
            (
                [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(z.clone())],
                rng.random_range(0.2..1.0),
            )
        })
        .collect()
}

fn random_pair(rng: &mut ChaCha8Rng, ns: usize, nt: usize) -> DiscreteMeasurePair {
    DiscreteMeasurePair::normalized(atoms(rng, ns, 0.0..1.0), atoms(rng, nt, -2.0..-0.5)).unwrap()
}

fn plan_cost(pair: &DiscreteMeasurePair, plan: &[Vec<f64>], inc: &CostModel) -> f64 {
    let mut total = 0.0;
    for (i, (x, _)) in pair.sources.iter().enumerate() {
        for (j, (y, _)) in pair.targets.iter().enumerate() {
            total += plan[i][j] * cost(x, y, inc).unwrap();
        }
    }
    total
}

// North-west corner rule: always feasible.
fn north_west(pair: &DiscreteMeasurePair) -> Vec<Vec<f64>> {
    let mut a: Vec<f64> = pair.sources.iter().map(|s| s.1).collect();
    let mut b: Vec<f64> = pair.targets.iter().map(|t| t.1).collect();
    let mut plan = vec![vec![0.0; b.len()]; a.len()];
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        let f = a[i].min(b[j]);
        plan[i][j] = f;
        a[i] -= f;
        b[j] -= f;
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
    }
    plan
}

#[test]
fn plan_marginals_and_optimality_certificate() {
    let inc = CostModel::incompressible();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let pair = random_pair(&mut rng, 200, 5);
        let lp = oracle::lp_transport(&pair, &inc).unwrap();
        for (i, (_, m)) in pair.sources.iter().enumerate() {
            let row: f64 = (0..5).map(|j| lp.get(i, j)).sum();
            assert!((row - m).abs() <= 1e-10);
        }
        for (j, (_, m)) in pair.targets.iter().enumerate() {
            let col: f64 = (0..200).map(|i| lp.get(i, j)).sum();
            assert!((col - m).abs() <= 1e-10);
        }
        let product: Vec<Vec<f64>> = pair
            .sources
            .iter()
            .map(|s| pair.targets.iter().map(|t| s.1 * t.1).collect())
            .collect();
        assert!(lp.cost <= plan_cost(&pair, &product, &inc) + 1e-12);
        assert!(lp.cost <= plan_cost(&pair, &north_west(&pair), &inc) + 1e-12);
        // Dual potentials are feasible and close the gap.
        let mut dual = 0.0;
        for (i, (x, a)) in pair.sources.iter().enumerate() {
            dual += a * lp.source_potentials[i];
            for (j, (y, _)) in pair.targets.iter().enumerate() {
                let slack = cost(x, y, &inc).unwrap() - lp.source_potentials[i] - lp.target_potentials[j];
                assert!(slack >= -1e-9);
            }
        }
        dual += pair.targets.iter().zip(&lp.target_potentials).map(|(t, g)| t.1 * g).sum::<f64>();
        assert!((dual - lp.cost).abs() <= 1e-9);
    }
}

#[test]
fn two_atom_swap_matches_enumeration() {
    // Equal masses: the couplings are t * diag + (1/2 - t) * anti, t in [0, 1/2].
    let a = [[0.0, 0.0, 0.0], [1.0, 0.2, 0.0]];
    let b = [[0.9, 0.0, 0.1], [0.1, 0.3, -0.2]];
    let pair = DiscreteMeasurePair::new(
        a.iter().map(|&p| (p, 0.5)).collect(),
        b.iter().map(|&p| (p, 0.5)).collect(),
    )
    .unwrap();
    let d2 = |p: &Point3, q: &Point3| (0..3).map(|k| (p[k] - q[k]).powi(2)).sum::<f64>();
    let direct = 0.5 * (d2(&a[0], &b[0]) + d2(&a[1], &b[1]));
    let crossed = 0.5 * (d2(&a[0], &b[1]) + d2(&a[1], &b[0]));
    let best = (0..=1000)
        .map(|k| {
            let t = 0.5 * k as f64 / 1000.0;
            2.0 * t * direct + (1.0 - 2.0 * t) * crossed
        })
        .fold(f64::INFINITY, f64::min);
    assert!((best - direct.min(crossed)).abs() < 1e-15);
    let w2 = oracle::exact_w2(&pair).unwrap();
    assert!((w2 - best.sqrt()).abs() < 1e-12, "{w2} vs {}", best.sqrt());
}

#[test]
fn w2_of_identical_measures_is_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let src = atoms(&mut rng, 12, 0.0..1.0);
    let pair = DiscreteMeasurePair::normalized(src.clone(), src).unwrap();
    assert!(oracle::exact_w2(&pair).unwrap() < 1e-7);
}

#[test]
fn w2_triangle_inequality() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20 {
        let n = [rng.random_range(1..8), rng.random_range(1..8), rng.random_range(1..8)];
        let mu: Vec<_> = n.iter().map(|&k| atoms(&mut rng, k, -1.0..1.0)).collect();
        let w = |a: usize, b: usize| {
            oracle::exact_w2(&DiscreteMeasurePair::normalized(mu[a].clone(), mu[b].clone()).unwrap()).unwrap()
        };
        assert!(w(0, 2) <= w(0, 1) + w(1, 2) + 1e-9);
    }
}

#[test]
fn voxelized_region_matches_laguerre_energy() {
    let inc = CostModel::incompressible();
    let cloud = DualCloud::normalized(
        vec![
            Particle::new([0.2, 0.3, -1.0], 1.0),
            Particle::new([0.8, 0.4, -0.7], 1.0),
            Particle::new([0.5, 0.9, -1.3], 1.0),
        ],
        0.1,
    )
    .unwrap();
    let domain = FluidDomain::rigid_lid([1.0, 1.0], 1.0, [16, 16]).unwrap();
    let cfg = SolverConfig {
        mass_tolerance: 1e-10,
        ..Default::default()
    };
    let sol = solve_weights(&cloud, &domain, &inc, &cfg, None).unwrap();
    let vox = oracle::voxelize(&domain, &inc, sol.tessellation.heights(), 16).unwrap();
    assert_eq!(vox.len(), 16 * 16 * 16);
    let pair = DiscreteMeasurePair::with_cloud(vox, &cloud).unwrap();
    let lp = oracle::lp_transport(&pair, &inc).unwrap();
    let e = sol.tessellation.energy();
    assert!((e - lp.cost).abs() <= 0.02 * lp.cost.abs(), "E {e} LP {}", lp.cost);
}

#[test]
fn constant_function_has_zero_gradient() {
    let g = oracle::finite_difference_gradient(|_| Ok(3.5), &[0.1, -2.0, 7.0], 1e-3).unwrap();
    assert_eq!(g, vec![0.0; 3]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn lp_cost_is_relabel_invariant(seed in any::<u64>(), ns in 1usize..40, nt in 1usize..6) {
        let inc = CostModel::incompressible();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pair = random_pair(&mut rng, ns, nt);
        let mut s = pair.sources.clone();
        let mut t = pair.targets.clone();
        s.reverse();
        t.rotate_left(nt / 2);
        let shuffled = DiscreteMeasurePair::new(s, t).unwrap();
        let a = oracle::lp_transport(&pair, &inc).unwrap().cost;
        let b = oracle::lp_transport(&shuffled, &inc).unwrap().cost;
        prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
    }
}
