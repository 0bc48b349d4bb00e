use kse_core::spectral::{dft2, idft2, spectral_distance, GridSpec, PhysicalField};
use proptest::prelude::*;

fn field(n: usize, values: Vec<f64>) -> PhysicalField {
    PhysicalField::from_values(GridSpec::new(n, 10.0).unwrap(), values).unwrap()
}

fn sizes() -> impl Strategy<Value = (usize, Vec<f64>, Vec<f64>)> {
    prop_oneof![Just(8usize), Just(16), Just(32)].prop_flat_map(|n| {
        (Just(n), prop::collection::vec(-5.0..5.0f64, n * n), prop::collection::vec(-5.0..5.0f64, n * n))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn round_trip((n, a, _) in sizes()) {
        let f = field(n, a);
        let back = idft2(&dft2(&f).unwrap()).unwrap();
        for (x, y) in f.values().iter().zip(back.values()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn real_fields_have_hermitian_spectra((n, a, _) in sizes()) {
        prop_assert!(dft2(&field(n, a)).unwrap().hermitian_defect() < 1e-12);
    }

    #[test]
    fn unnormalized_parseval((n, a, b) in sizes()) {
        let d: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let (fa, fb) = (dft2(&field(n, a)).unwrap(), dft2(&field(n, b)).unwrap());
        let s = spectral_distance(&fa, &fb).unwrap();
        prop_assert!((s - n as f64 * d).abs() <= 1e-10 * (1.0 + s));
    }
}

#[test]
fn single_cosine_lands_on_one_mode_pair() {
    let grid = GridSpec::default();
    let k = std::f64::consts::PI / grid.half_length;
    let spec = dft2(&PhysicalField::from_fn(grid, |_, y| (k * y).cos())).unwrap();
    let half = (grid.n * grid.n) as f64 / 2.0;
    assert!((spec.get(0, 1).re - half).abs() < 1e-9);
    assert!((spec.get(0, grid.n - 1).re - half).abs() < 1e-9);
    assert!((spec.norm() - (2.0 * half * half).sqrt()).abs() < 1e-9);
}
