use iondyne::physics::{
    closure_gamma_ps, matrix_element, spin_flip_rates, stark_shift, LaserField,
};
use iondyne::{PhysicalConstants, TAU};
use proptest::prelude::*;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

prop_compose! {
    fn field()(det_ghz in prop_oneof![-50.0..-1.0f64, 1.0..50.0f64],
               rabi_mhz in 10.0..2000.0f64,
               plus in 0.0..1.0f64,
               pi in 0.0..0.2f64)
               -> LaserField<f64> {
        LaserField::from_fractions(TAU * det_ghz * 1e9, TAU * rabi_mhz * 1e6, plus, 1.0 - plus, pi).unwrap()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn stark_is_odd_under_circular_swap(f in field()) {
        let a = stark_shift(&f).unwrap();
        let b = stark_shift(&f.swap_circular()).unwrap();
        prop_assert!((a + b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn stark_is_odd_under_detuning_flip(f in field()) {
        let a = stark_shift(&f).unwrap();
        let b = stark_shift(&f.with_detuning(-f.detuning()).unwrap()).unwrap();
        prop_assert!((a + b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn rates_swap_with_polarization(f in field(), g_mhz in 1.0..100.0f64) {
        let g = TAU * g_mhz * 1e6;
        let a = spin_flip_rates(&f, g).unwrap();
        let b = spin_flip_rates(&f.swap_circular(), g).unwrap();
        prop_assert!(rel(a.r_plus, b.r_minus) < 1e-12);
        prop_assert!(rel(a.r_minus, b.r_plus) < 1e-12);
        let c = spin_flip_rates(&f.with_detuning(-f.detuning()).unwrap(), g).unwrap();
        prop_assert!(rel(a.r_plus, c.r_plus) < 1e-12);
    }

    #[test]
    fn closure_recovers_gamma(f in field(), g_mhz in 1.0..100.0f64) {
        let g = TAU * g_mhz * 1e6;
        let rates = spin_flip_rates(&f, g).unwrap();
        let stark = stark_shift(&f).unwrap();
        prop_assume!(rates.delta_r().abs() > 1e-6 * rates.r_plus.max(rates.r_minus));
        let back = closure_gamma_ps(f.detuning(), rates.delta_r(), stark).unwrap();
        prop_assert!(rel(back, g) < 1e-9, "{back} vs {g}");
    }

    #[test]
    fn matrix_element_scales_as_root_gamma(g_mhz in 0.1..1000.0f64) {
        let c = PhysicalConstants::reference();
        let g = TAU * g_mhz * 1e6;
        let d1 = matrix_element(g, &c).unwrap();
        let d4 = matrix_element(4.0 * g, &c).unwrap();
        prop_assert!(rel(d4, 2.0 * d1) < 1e-14);
    }

    #[test]
    fn single_precision_tracks_double(f in field(), g_mhz in 1.0..100.0f64) {
        let f32_field = LaserField::<f32>::new(
            f.detuning() as f32, f.rabi() as f32, f.eps_plus() as f32, f.eps_minus() as f32, f.eps_pi() as f32,
        ).unwrap();
        let a = stark_shift(&f).unwrap();
        let b = stark_shift(&f32_field).unwrap() as f64;
        let scale = f.rabi().powi(2) / f.detuning().abs();
        prop_assert!((a - b).abs() <= 1e-5 * scale);
        let g = TAU * g_mhz * 1e6;
        let r64 = spin_flip_rates(&f, g).unwrap();
        let r32 = spin_flip_rates(&f32_field, g as f32).unwrap();
        prop_assert!(rel(r64.r_plus, r32.r_plus as f64) < 1e-4 || r64.r_plus < 1e-30);
    }
}
