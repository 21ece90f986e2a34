use proptest::prelude::*;

use mbrir::directivity::{weight_source, DirectivityTable};
use mbrir::ism::{emission_directions, enumerate_images, synthesize, Interp, IsmParams, WallAbsorption};
use mbrir::mixture::{make_mixture, si_sdr, SignalModel};
use mbrir::room::{sample_room, sabine_absorption};
use mbrir::seed::derive_seed;
use mbrir::validate::{detect_onset_default, schroeder_t60};
use mbrir::{RoomConfig, SimParams, Variant, Vec3};

fn room(dims: (f64, f64, f64), src: (f64, f64, f64), rec: (f64, f64, f64)) -> RoomConfig {
    RoomConfig {
        id: "p".into(),
        seed: 0,
        dims_m: Vec3::new(dims.0, dims.1, dims.2),
        rec_pos_m: Vec3::new(rec.0 * dims.0, rec.1 * dims.1, rec.2 * dims.2),
        rec_yaw_deg: 0.0,
        rec_pitch_deg: 0.0,
        src_pos_m: Vec3::new(src.0 * dims.0, src.1 * dims.1, src.2 * dims.2),
        t60_bands_s: vec![0.3; 6],
        t60_scalar_s: 0.3,
        variant: Variant::Sb,
        t60_clamped: false,
    }
}

fn frac() -> impl Strategy<Value = f64> {
    0.05f64..0.95
}

#[test]
fn sampled_configs_satisfy_invariants() {
    let params = SimParams::default();
    for i in 0..100_000u64 {
        let c = sample_room(derive_seed(0xC0FFEE, i), Variant::Mb, &params).unwrap();
        if let Err(e) = c.validate() {
            panic!("seed index {i}: {e}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn omni_render_is_reciprocal(
        dx in 3.0f64..8.0, ry in 0.5f64..1.0, dz in 2.5f64..4.0,
        sx in frac(), sy in frac(), sz in frac(),
        rx in frac(), ry_ in frac(), rz in frac(),
        alpha in 0.2f64..0.9,
    ) {
        let c = room((dx, dx * ry, dz), (sx, sy, sz), (rx, ry_, rz));
        prop_assume!(c.source_distance_m() > 0.05);
        let abs = WallAbsorption::uniform(alpha).unwrap();
        let ism = IsmParams::from(&SimParams::default());
        let a = enumerate_images(&c, &abs, [3, 3, 3], &ism).unwrap();
        let b = enumerate_images(&c.swapped(), &abs, [3, 3, 3], &ism).unwrap();
        let len = (a.max_delay_s().max(b.max_delay_s()) * 48_000.0) as usize + 42;
        let ra = synthesize(&a, len, 48_000, Interp::Sinc).unwrap();
        let rb = synthesize(&b, len, 48_000, Interp::Sinc).unwrap();
        for (x, y) in ra.samples.iter().zip(&rb.samples) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn band_lists_share_geometry(alpha_a in 0.05f64..0.99, alpha_b in 0.05f64..0.99) {
        let c = room((6.0, 4.0, 3.0), (0.3, 0.4, 0.5), (0.6, 0.5, 0.4));
        let ism = IsmParams::from(&SimParams::default());
        let a = enumerate_images(&c, &WallAbsorption::uniform(alpha_a).unwrap(), [2, 2, 2], &ism).unwrap();
        let b = a.with_absorption(&WallAbsorption::uniform(alpha_b).unwrap(), ism.min_distance_m);
        let direct = enumerate_images(&c, &WallAbsorption::uniform(alpha_b).unwrap(), [2, 2, 2], &ism).unwrap();
        prop_assert_eq!(a.len(), b.len());
        for ((p, q), r) in a.iter().zip(b.iter()).zip(direct.iter()) {
            prop_assert_eq!(p.index, q.index);
            prop_assert_eq!(p.delay_s.to_bits(), q.delay_s.to_bits());
            prop_assert_eq!(q.amplitude.to_bits(), r.amplitude.to_bits());
        }
    }

    #[test]
    fn directivity_never_amplifies_a_tap(power in 0.1f64..3.0) {
        let c = room((7.0, 5.0, 3.0), (0.3, 0.3, 0.5), (0.6, 0.6, 0.4));
        let ism = IsmParams::from(&SimParams::default());
        let list = enumerate_images(&c, &WallAbsorption::uniform(0.4).unwrap(), [2, 2, 2], &ism).unwrap();
        let list = emission_directions(&c, list, &ism).unwrap();
        let weighted = weight_source(list.clone(), &DirectivityTable::cardioid(power, 10.0).unwrap()).unwrap();
        let mut omni_energy = 0.0;
        let mut dir_energy = 0.0;
        for (o, w) in list.iter().zip(weighted.iter()) {
            prop_assert!(w.effective_amplitude().abs() <= o.effective_amplitude().abs());
            omni_energy += o.effective_amplitude().powi(2);
            dir_energy += w.effective_amplitude().powi(2);
        }
        prop_assert!(dir_energy <= omni_energy);
    }

    #[test]
    fn onset_shifts_with_the_signal(shift in 0usize..2000, pre in 0.0f64..0.99, gap in 1usize..480) {
        let mut x = vec![0.0; 6000];
        x[1000] = 1.0;
        x[1000 - gap] = pre;
        x[1500] = 0.3;
        let base = detect_onset_default(&x, 48_000).unwrap();
        let mut shifted = vec![0.0; shift];
        shifted.extend_from_slice(&x);
        prop_assert_eq!(detect_onset_default(&shifted, 48_000).unwrap(), base + shift);
    }

    #[test]
    fn schroeder_is_scale_invariant(t60 in 0.1f64..1.5, gain in 1e-3f64..1e3) {
        let fs = 16_000u32;
        let n = (t60 * 1.2 * f64::from(fs)) as usize;
        let decay = -3.0 * 10f64.ln() / (t60 * f64::from(fs));
        let x: Vec<f64> = (0..n)
            .map(|i| (decay * i as f64).exp() * if i % 3 == 0 { 1.0 } else { -0.5 })
            .collect();
        let y: Vec<f64> = x.iter().map(|v| v * gain).collect();
        let a = schroeder_t60(&x, fs, (-5.0, -25.0)).unwrap().t60_s;
        let b = schroeder_t60(&y, fs, (-5.0, -25.0)).unwrap().t60_s;
        prop_assert!((a / b - 1.0).abs() < 1e-9);
    }

    #[test]
    fn si_sdr_ignores_estimate_scale(scale in prop_oneof![1e-3f64..1e3, -1e3f64..-1e-3], seed in any::<u64>()) {
        let mut r = mbrir::seed::rng(seed);
        use rand::Rng;
        let reference: Vec<f64> = (0..512).map(|_| r.random::<f64>() - 0.5).collect();
        let estimate: Vec<f64> = reference.iter().map(|v| v + 0.3 * (r.random::<f64>() - 0.5)).collect();
        let scaled: Vec<f64> = estimate.iter().map(|v| v * scale).collect();
        let a = si_sdr(&reference, &estimate).unwrap();
        let b = si_sdr(&reference, &scaled).unwrap();
        // a negative scale flips the projection sign but not the ratio
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn mixture_hits_requested_snr(snr in 0.0f64..30.0, seed in any::<u64>(), model_b in any::<bool>()) {
        let mut r = mbrir::seed::rng(seed);
        use rand::Rng;
        let y: Vec<f64> = (0..4000).map(|_| r.random::<f64>() - 0.5).collect();
        let n: Vec<f64> = (0..4000).map(|_| 0.1 * (r.random::<f64>() - 0.5)).collect();
        let h = [0.0, 0.0, 1.0, 0.5, -0.2];
        let model = if model_b { SignalModel::ReverbSum } else { SignalModel::ReverbSpeechPlusNoise };
        let m = make_mixture(&y, &n, &h, snr, model).unwrap();
        prop_assert!((m.achieved_snr_db - snr).abs() < 1e-6);
        prop_assert_eq!(m.onset_shift_samples, 2);
        prop_assert!(m.output_gain <= 1.0);
    }

    #[test]
    fn sabine_inverts(x in 3.0f64..30.0, yr in 0.5f64..1.0, z in 2.5f64..5.0, t60 in 0.2f64..3.0) {
        let y = x * yr;
        let a = sabine_absorption(Vec3::new(x, y, z), t60);
        prop_assume!(!a.clamped);
        let back = 0.161 * x * y * z / (2.0 * (x * y + x * z + y * z) * a.coefficient);
        prop_assert!((back / t60 - 1.0).abs() < 1e-12);
    }
}
