use lipmotion::audio::{ema_smooth, rms_envelope, Audio, ModulationParams};
use lipmotion::blendshape::{resample_trajectory, BlendshapeVector, ChannelId, FrameSeries, VisemeTrajectory};
use lipmotion::coarticulation::{
    blend_dual, blend_triple, fusion_weight, synthesize, FusionParams, Method, TimedScript,
};
use lipmotion::library::{deserialize_library, serialize_library, VisemeLibrary};
use lipmotion::metrics::{evaluate, jerk_series, maj, pcc};
use lipmotion::retarget::{raw_commands, CalibrationMatrix};
use lipmotion::{dtw, Exact, MappingTable, VisemeId, CHANNEL_COUNT};
use proptest::prelude::*;

fn vector() -> impl Strategy<Value = BlendshapeVector<f64>> {
    prop::collection::vec(0.0f64..=1.0, CHANNEL_COUNT)
        .prop_map(|v| BlendshapeVector::new(v.try_into().unwrap()).unwrap())
}

fn trajectory(n: usize) -> impl Strategy<Value = VisemeTrajectory<f64>> {
    prop::collection::vec(vector(), n).prop_map(|s| VisemeTrajectory::new(s).unwrap())
}

fn series(len: std::ops::Range<usize>) -> impl Strategy<Value = FrameSeries<f64>> {
    prop::collection::vec(vector(), len).prop_map(|f| FrameSeries::new(f, 60.0, 0.0).unwrap())
}

fn next_up(x: f64) -> f64 {
    f64::from_bits(x.to_bits() + 1)
}

proptest! {
    #[test]
    fn weight_monotone_and_early_biased(t1 in 0.0f64..=1.0, t2 in 0.0f64..=1.0, a in 0.05f64..4.0) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        prop_assert!(fusion_weight(lo, a).unwrap() <= fusion_weight(hi, a).unwrap());
        if a < 1.0 {
            prop_assert!(fusion_weight(lo, a).unwrap() >= fusion_weight(lo, 1.0).unwrap());
        }
    }

    #[test]
    fn dual_blend_endpoints_and_envelope(
        (v1, v2) in (2usize..12).prop_flat_map(|n| (trajectory(n), trajectory(n))),
        tau in 0.0f64..=1.0,
    ) {
        prop_assert_eq!(blend_dual(&v1, &v2, 0.0, 0.7).unwrap(), v1.sample_at(0.0));
        prop_assert_eq!(blend_dual(&v1, &v2, 1.0, 0.7).unwrap(), v2.sample_at(1.0));
        let out = blend_dual(&v1, &v2, tau, 0.7).unwrap();
        let (a, b) = (v1.sample_at(tau), v2.sample_at(tau));
        for c in ChannelId::all() {
            prop_assert!(out[c] >= a[c].min(b[c]) && out[c] <= a[c].max(b[c]));
        }
    }

    #[test]
    fn triple_blend_continuous_at_split(
        (v1, v2, v3) in (2usize..12).prop_flat_map(|n| (trajectory(n), trajectory(n), trajectory(n))),
        lambda in 0.05f64..0.95,
    ) {
        let at = blend_triple(&v1, &v2, &v3, lambda, lambda).unwrap();
        prop_assert_eq!(at, v2.sample_at(lambda));
        let after = blend_triple(&v1, &v2, &v3, next_up(lambda), lambda).unwrap();
        for c in ChannelId::all() {
            prop_assert!((at[c] - after[c]).abs() < 1e-12);
        }
    }

    #[test]
    fn resample_keeps_endpoints(t in (2usize..20).prop_flat_map(trajectory), n in 2usize..80) {
        let r = resample_trajectory(&t, n).unwrap();
        prop_assert_eq!(r.sample_count(), n);
        prop_assert_eq!(r.first(), t.first());
        prop_assert_eq!(r.last(), t.last());
        prop_assert_eq!(resample_trajectory(&t, t.sample_count()).unwrap(), t);
    }

    #[test]
    fn ema_stays_in_channel_range(s in series(2..40), alpha in 0.01f64..=1.0) {
        let y = ema_smooth(&s, alpha).unwrap();
        for c in ChannelId::all() {
            let x = s.channel(c);
            let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(y.channel(c).iter().all(|v| *v >= lo && *v <= hi));
        }
    }

    #[test]
    fn ema_does_not_raise_jerk(s in series(16..80), alpha in 0.05f64..0.95) {
        let all: Vec<ChannelId> = ChannelId::all().collect();
        let before = maj(&s, &all).unwrap();
        let after = maj(&ema_smooth(&s, alpha).unwrap(), &all).unwrap();
        prop_assert!(after <= before * (1.0 + 1e-12), "{} > {}", after, before);
    }

    #[test]
    fn pcc_affine_invariance(
        xy in (3usize..50).prop_flat_map(|n| (prop::collection::vec(0.0f64..1.0, n), prop::collection::vec(0.0f64..1.0, n))),
        scale in 0.1f64..10.0,
        shift in -5.0f64..5.0,
    ) {
        let (x, y) = xy;
        let Some(r) = pcc(&x, &y).unwrap() else { return Ok(()) };
        let pos: Vec<f64> = x.iter().map(|v| scale * v + shift).collect();
        let neg: Vec<f64> = x.iter().map(|v| -scale * v + shift).collect();
        prop_assert!((pcc(&pos, &y).unwrap().unwrap() - r).abs() < 1e-12);
        prop_assert!((pcc(&neg, &y).unwrap().unwrap() + r).abs() < 1e-12);
    }

    #[test]
    fn evaluate_self_has_zero_rmse(s in series(4..40)) {
        let r = evaluate(&s, &s).unwrap();
        prop_assert!(r.channels.iter().all(|c| c.rmse == 0.0));
    }

    #[test]
    fn jerk_exact_on_rational_cubics(c0 in -50i64..50, c1 in -50i64..50, c2 in -50i64..50, c3 in -50i64..50) {
        let dt = Exact::new(1, 60);
        let x: Vec<Exact> = (0..10)
            .map(|n| {
                let t = dt * n;
                Exact::from_integer(c0) + Exact::from_integer(c1) * t + Exact::from_integer(c2) * t * t + Exact::from_integer(c3) * t * t * t
            })
            .collect();
        let j = jerk_series(&x, Exact::from_integer(60)).unwrap();
        prop_assert!(j.iter().all(|v| *v == Exact::from_integer(6 * c3)));
    }

    #[test]
    fn retarget_raw_is_linear(v1 in vector(), v2 in vector(), a in 0.0f64..1.0) {
        let calib = CalibrationMatrix::demo();
        let mix = BlendshapeVector::from_fn(|c| a * v1[c] + (1.0 - a) * v2[c]).unwrap();
        let r1 = raw_commands(&v1, &calib);
        let r2 = raw_commands(&v2, &calib);
        for (k, r) in raw_commands(&mix, &calib).into_iter().enumerate() {
            prop_assert!((r - (a * r1[k] + (1.0 - a) * r2[k])).abs() < 1e-12);
        }
    }

    #[test]
    fn retarget_ignores_unweighted_channels(v in vector(), bump in 0.0f64..1.0, channel in 0usize..CHANNEL_COUNT) {
        let calib = CalibrationMatrix::demo();
        let c = ChannelId::from_index(channel).unwrap();
        let perturbed = BlendshapeVector::from_fn(|k| if k == c { bump } else { v[k] }).unwrap();
        let (a, b) = (raw_commands(&v, &calib), raw_commands(&perturbed, &calib));
        for (act, (x, y)) in calib.actuators().iter().zip(a.iter().zip(&b)) {
            if act.weights.iter().all(|(w, _)| *w != c) {
                prop_assert_eq!(x, y);
            }
        }
    }

    #[test]
    fn dtw_is_symmetric_and_zero_on_self(
        a in prop::collection::vec(vector(), 1..8),
        b in prop::collection::vec(vector(), 1..8),
    ) {
        let ab = dtw::dtw_distance(&a, &b).unwrap().cost;
        let ba = dtw::dtw_distance(&b, &a).unwrap().cost;
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert_eq!(dtw::dtw_distance(&a, &a).unwrap().cost, 0.0);
    }

    #[test]
    fn envelope_is_scale_invariant(seed_amp in prop::collection::vec(0.0f64..1.0, 8), scale in 0.05f64..1.0) {
        let samples: Vec<f64> = (0..8000)
            .map(|i| seed_amp[i / 1000] * (2.0 * std::f64::consts::PI * 120.0 * i as f64 / 16000.0).sin())
            .collect();
        let a = Audio { samples: samples.clone(), sample_rate: 16000 };
        let b = Audio { samples: samples.iter().map(|s| s * scale).collect(), sample_rate: 16000 };
        let p = ModulationParams::default();
        let ea = rms_envelope(&a, 60.0, 30, &p).unwrap();
        let eb = rms_envelope(&b, 60.0, 30, &p).unwrap();
        for (x, y) in ea.values().iter().zip(eb.values()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn library_round_trips(ts in prop::collection::vec(trajectory(6), 1..4)) {
        let mut lib = VisemeLibrary::new(6).unwrap();
        for (id, t) in VisemeId::ALL.into_iter().zip(ts) {
            lib.insert(id, t).unwrap();
        }
        let text = serialize_library(&lib);
        let back: VisemeLibrary<f64> = deserialize_library(&text).unwrap();
        prop_assert_eq!(&back, &lib);
        prop_assert_eq!(serialize_library(&back), text);
    }

    #[test]
    fn synthesis_is_bounded_and_deterministic(
        ts in prop::collection::vec(trajectory(8), 14),
        method in prop::sample::select(vec![Method::A, Method::B, Method::C]),
    ) {
        let mut lib = VisemeLibrary::new(8).unwrap();
        for (id, t) in VisemeId::ALL.into_iter().zip(ts) {
            lib.insert(id, t).unwrap();
        }
        let script = TimedScript::uniform(&["zuo", "ba", "a", "gua"], 0.1, 0.3, 0.05, 0.2).unwrap();
        let table = MappingTable::default_table();
        let params = FusionParams::with_method(method);
        let one = synthesize(&script, &lib, &table, &params).unwrap();
        let two = synthesize(&script, &lib, &table, &params).unwrap();
        prop_assert_eq!(&one, &two);
        for f in one.frames() {
            prop_assert!(f.values().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
