use std::sync::Arc;

use nsk_core::besov::{self, DyadicPartition, NormSpec};
use nsk_core::snapshot::Snapshot;
use nsk_core::{ops, Grid, SpectralField, State};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn grid2() -> Arc<Grid> {
    Grid::new(&[16, 12], &[7.0, 5.0]).unwrap()
}

fn random_field(grid: &Arc<Grid>, seed: u64) -> SpectralField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    SpectralField::random_hermitian(grid, &mut rng, |_| true)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn physical_round_trip(seed in any::<u64>()) {
        let g = grid2();
        let f = random_field(&g, seed);
        let back = SpectralField::from_physical(&g, &f.to_physical()).unwrap();
        prop_assert!(nsk_core::field::relative_difference(&f, &back) < 1e-13);
        prop_assert!(f.hermitian_defect() < 1e-14);
    }

    #[test]
    fn parseval_holds(seed in any::<u64>()) {
        let g = grid2();
        let f = random_field(&g, seed);
        let phys: f64 = f.to_physical().iter().map(|v| v * v).sum::<f64>() * g.cell_volume();
        let spec = f.l2_sq() * g.parseval_factor();
        prop_assert!((phys - spec).abs() <= 1e-12 * phys.max(1e-300));
    }

    #[test]
    fn besov_norm_is_homogeneous_and_subadditive(
        a in any::<u64>(), b in any::<u64>(), c in -5.0f64..5.0,
        s in -1.0f64..2.0, p in prop::sample::select(vec![1.0, 2.0, 4.0, f64::INFINITY]),
        sigma in prop::sample::select(vec![1.0, 2.0, f64::INFINITY]),
    ) {
        let g = grid2();
        let (f, h) = (random_field(&g, a), random_field(&g, b));
        let spec = NormSpec::new(s, p, sigma);
        let nf = besov::besov_norm(&f, &spec).unwrap();
        let nc = besov::besov_norm(&f.scaled(c), &spec).unwrap();
        prop_assert!((nc - c.abs() * nf).abs() <= 1e-12 * nf.max(1e-300) * c.abs().max(1.0));
        let sum = besov::besov_norm(&f.add(&h).unwrap(), &spec).unwrap();
        let nh = besov::besov_norm(&h, &spec).unwrap();
        prop_assert!(sum <= (nf + nh) * (1.0 + 1e-12));
    }

    #[test]
    fn snapshot_round_trip_is_bit_exact(seed in any::<u64>(), t in 0.0f64..1e3) {
        let g = grid2();
        let a = random_field(&g, seed);
        let m = vec![random_field(&g, seed ^ 1), random_field(&g, seed ^ 2)];
        let state = State::new(a, m, t).unwrap();
        let mut bytes = Vec::new();
        Snapshot::from_state(&state).write_to(&mut bytes).unwrap();
        prop_assert_eq!(&bytes[..8], b"NSKFLD01");
        let back = Snapshot::read_from(&bytes[..]).unwrap().to_state().unwrap();
        prop_assert_eq!(back.t.to_bits(), t.to_bits());
        for (x, y) in state.components().zip(back.components()) {
            prop_assert_eq!(x.coeffs(), y.coeffs());
        }
    }

    #[test]
    fn helmholtz_parts_sum_back_and_solenoidal_part_is_divergence_free(seed in any::<u64>()) {
        let g = grid2();
        let v = vec![random_field(&g, seed), random_field(&g, seed.wrapping_add(1))];
        let (sol, pot) = ops::helmholtz_project(&v).unwrap();
        for k in 0..2 {
            let recon = pot[k].add(&sol[k]).unwrap();
            prop_assert!(nsk_core::field::relative_difference(&recon, &v[k]) < 1e-14);
        }
        let div = ops::divergence(&sol).unwrap();
        prop_assert!(div.max_abs() <= 1e-10 * v[0].max_abs().max(v[1].max_abs()));
    }
}

#[test]
fn partition_of_unity_on_every_grid() {
    for g in [
        Grid::cube(1, 64, 6.0 * std::f64::consts::PI).unwrap(),
        grid2(),
        Grid::cube(3, 8, 1.0).unwrap(),
    ] {
        let part = DyadicPartition::new(&g);
        assert!(part.unity_defect(&g) < 1e-14);
        assert!(part.max_overlap(&g) <= 2);
    }
}

#[test]
fn derivative_of_a_sine() {
    let l = 2.0 * std::f64::consts::PI;
    let g = Grid::cube(1, 32, l).unwrap();
    let f = SpectralField::from_fn(&g, |x| (3.0 * x[0]).sin());
    let df = ops::partial(&f, 0).to_physical();
    for (i, v) in df.iter().enumerate() {
        let x = g.position(i)[0];
        assert!((v - 3.0 * (3.0 * x).cos()).abs() < 1e-12);
    }
}
