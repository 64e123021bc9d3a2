use proptest::prelude::*;

use nowcast::baselines::{extrapolation_forecast, BlockMatching};
use nowcast::blender::{blend, BlendWeights};
use nowcast::grid_store::{samples_from_frames, Timestamp};
use nowcast::losses::{balanced_loss, weight, wmae};
use nowcast::metrics::{confusion, csi, hss};
use nowcast::synthetic::{make_translation_scene, render_scene};
use nowcast::ForecastBundle;

fn rain() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.0), 0.0..0.5, 0.5..60.0]
}

fn pair(n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (prop::collection::vec(rain(), n), prop::collection::vec(rain(), n))
}

fn bundle(values: Vec<f64>) -> ForecastBundle {
    ForecastBundle {
        anchor: Timestamp(0),
        height: 1,
        width: values.len(),
        predictions: vec![values],
        attention: Vec::new(),
        source: "p".into(),
    }
}

proptest! {
    #[test]
    fn weight_is_monotone_in_rain(a in 0.0..100.0_f64, b in 0.0..100.0_f64, th in 0.0..0.5_f64) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(weight(lo, th) <= weight(hi, th));
    }

    #[test]
    fn loss_masks_partition_the_error((y, p) in pair(48)) {
        let n = y.len() as f64;
        let total: f64 = y
            .iter()
            .zip(&p)
            .map(|(&a, &b)| if a < 0.5 { (a - b).abs() } else { weight(a, 0.5) * (a - b).abs() })
            .sum::<f64>()
            / n;
        let split = wmae(&y, &p, 0.5).unwrap() + balanced_loss(&y, &p).unwrap();
        prop_assert!((total - split).abs() <= 1e-9 * total.max(1.0));
    }

    #[test]
    fn scores_ignore_pixel_order((y, p) in pair(64), seed in any::<u64>(), th in prop_oneof![Just(0.5), Just(1.0), Just(5.0)]) {
        let mut idx: Vec<usize> = (0..y.len()).collect();
        // Fisher-Yates with a tiny LCG keeps the shuffle reproducible per case.
        let mut s = seed | 1;
        for i in (1..idx.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            idx.swap(i, (s >> 33) as usize % (i + 1));
        }
        let ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
        let ps: Vec<f64> = idx.iter().map(|&i| p[i]).collect();
        let (a, b) = (confusion(&y, &p, th).unwrap(), confusion(&ys, &ps, th).unwrap());
        prop_assert_eq!(a, b);
        prop_assert_eq!(csi(&a), csi(&b));
        prop_assert_eq!(hss(&a), hss(&b));
    }

    #[test]
    fn csi_matches_set_counting((y, p) in pair(64), th in 0.5..20.0_f64) {
        let hits = y.iter().zip(&p).filter(|(&a, &b)| a >= th && b >= th).count();
        let either = y.iter().zip(&p).filter(|(&a, &b)| a >= th || b >= th).count();
        let c = csi(&confusion(&y, &p, th).unwrap());
        if either == 0 {
            prop_assert!(c.is_none());
        } else {
            prop_assert_eq!(c, Some(hits as f64 / either as f64));
        }
    }

    #[test]
    fn blend_stays_between_inputs_and_follows_weight(
        (m, q) in pair(32),
        w in prop::collection::vec(0.0..=1.0_f64, 32),
        bump in 0.0..=1.0_f64,
    ) {
        let weights = |w: Vec<f64>| BlendWeights { maps: vec![w], factors: vec![1.0] };
        let out = blend(&weights(w.clone()), &bundle(m.clone()), &bundle(q.clone())).unwrap();
        let raised: Vec<f64> = w.iter().map(|&x| x + (1.0 - x) * bump).collect();
        let up = blend(&weights(raised), &bundle(m.clone()), &bundle(q.clone())).unwrap();
        for i in 0..m.len() {
            let v = out.predictions[0][i];
            prop_assert!(m[i].min(q[i]) <= v && v <= m[i].max(q[i]));
            // More model weight moves the output toward the model value.
            let u = up.predictions[0][i];
            prop_assert!((u - m[i]).abs() <= (v - m[i]).abs() + 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn extrapolation_is_non_negative(dx in -4i64..=4, dy in -4i64..=4, seed in 0u64..1000) {
        let scene = make_translation_scene(32, 32, dx, dy, 24, seed).unwrap();
        let samples = samples_from_frames(&render_scene(&scene).unwrap()).unwrap();
        prop_assume!(!samples.is_empty());
        let f = extrapolation_forecast(&samples[0], &BlockMatching::default()).unwrap();
        for map in &f.predictions {
            prop_assert!(map.iter().all(|v| v.is_finite() && *v >= 0.0));
        }
    }
}
