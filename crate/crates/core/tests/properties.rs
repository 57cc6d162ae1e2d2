//! Property tests over randomized inputs: exact cell-count identities,
//! invariances of the trilinear form, and the inverse pair of the cap
//! height/measure maps.

use proptest::prelude::*;
use sphere_symm::*;

fn small_sphere() -> std::sync::Arc<Grid> {
    Grid::sphere(24, 20)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // Near the endpoints one ulp of the height moves the measure by more
    // than 1e-12 (the density is singular for d = 1), so the round trip
    // is only meaningful away from them.
    #[test]
    fn cap_height_measure_round_trip(e in 1e-4f64..0.9999, d in 1u8..=4) {
        let t = cap_height(e, d).unwrap();
        prop_assert!((cap_measure(t, d).unwrap() - e).abs() <= 1e-12);
    }

    #[test]
    fn symm_diff_identity_in_cell_counts(
        e in 0.05f64..0.95,
        seed in any::<u64>(),
        ring in 0usize..20,
        az in 0usize..24,
        radius in 0.2f64..2.5,
    ) {
        let grid = small_sphere();
        let set = random_set(e, seed, &grid).unwrap();
        let center = grid.node(grid.cell_index(ring, az));
        let cap = rasterize_cap(&Cap::from_radius(center, radius, 2).unwrap(), &grid).unwrap();
        let inter = set.occupied().filter(|&i| cap.contains(i)).count() as i64;
        let lhs = set.symm_diff_count(&cap).unwrap() as i64;
        let rhs = set.occupied_count() as i64 + cap.occupied_count() as i64 - 2 * inter;
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn cap_overlap_identity(
        e in 0.05f64..0.95,
        seed in any::<u64>(),
        ring in 0usize..20,
        az in 0usize..24,
        radius in 0.2f64..2.5,
    ) {
        let grid = small_sphere();
        let set = random_set(e, seed, &grid).unwrap();
        let center = grid.node(grid.cell_index(ring, az));
        let cap = rasterize_cap(&Cap::from_radius(center, radius, 2).unwrap(), &grid).unwrap();
        let inter = set.occupied().filter(|&i| cap.contains(i)).count() as f64
            * grid.cell_measure();
        prop_assert!((cap_overlap(&set, &center, radius) - inter).abs() < 1e-15);
    }

    #[test]
    fn polarization_count_idempotence_alignment(
        e in 0.05f64..0.95,
        seed in any::<u64>(),
        nx in -1.0f64..1.0,
        ny in -1.0f64..1.0,
        nz in -1.0f64..1.0,
    ) {
        prop_assume!(nx * nx + ny * ny + nz * nz > 1e-4);
        let grid = small_sphere();
        let set = random_set(e, seed, &grid).unwrap();
        let h = Hyperplane::from_direction(nx, ny, nz).unwrap();
        let table = build_pairing(&grid, &h);
        let once = polarization::polarize_with(&set, &table);
        prop_assert_eq!(once.occupied_count(), set.occupied_count());
        prop_assert_eq!(&polarization::polarize_with(&once, &table), &once);
        let mass = |s: &SphericalSet| {
            s.occupied().filter(|&i| h.side(&grid.node(i)) > 0.0).count()
        };
        prop_assert!(mass(&once) >= mass(&set));
    }

    #[test]
    fn trilinear_symmetry_bounds_invariance(
        e1 in 0.05f64..0.95,
        e2 in 0.05f64..0.95,
        s1 in any::<u64>(),
        s2 in any::<u64>(),
        a in -0.95f64..0.95,
        shift in 0usize..24,
    ) {
        let grid = small_sphere();
        let x = random_set(e1, s1, &grid).unwrap();
        let y = random_set(e2, s2, &grid).unwrap();
        let v = evaluate_t(&x, &y, a).unwrap();
        prop_assert_eq!(evaluate_t(&y, &x, a).unwrap(), v);
        prop_assert!(v >= 0.0);
        prop_assert!(v <= x.measure() * y.measure() + 1e-15);
        let vr = evaluate_t(&x.rotate_azimuth(shift), &y.rotate_azimuth(shift), a).unwrap();
        prop_assert_eq!(vr, v);
    }

    #[test]
    fn rearrangement_never_decreases_the_form(
        e1 in 0.1f64..0.9,
        e2 in 0.1f64..0.9,
        s1 in any::<u64>(),
        s2 in any::<u64>(),
        a in -0.9f64..0.9,
    ) {
        let grid = small_sphere();
        let x = random_set(e1, s1, &grid).unwrap();
        let y = random_set(e2, s2, &grid).unwrap();
        let plain = evaluate_t(&x, &y, a).unwrap();
        let sorted = evaluate_t(&x.rearrange(), &y.rearrange(), a).unwrap();
        prop_assert!(sorted >= plain - grid.eps_grid());
    }

    #[test]
    fn kernel_stays_within_range(
        e1 in 0.05f64..0.95,
        e2 in 0.05f64..0.95,
        a in -0.95f64..0.95,
        t in -1.0f64..=1.0,
    ) {
        let triple = classify_triple(e1, e2, a, 2).unwrap();
        let k = kernel_k(&triple, 1, t).unwrap();
        prop_assert!(k >= 0.0);
        prop_assert!(k <= triple.e2 + 1e-12);
    }
}
