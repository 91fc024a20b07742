//! Randomized invariants across the library.

use drivekws::analysis::{recall_fused, recall_gain, recall_single, RecallModelParams};
use drivekws::dnn::softmax;
use drivekws::dsp::{frame_signal, log_filterbank, stack_context, AudioBuffer, FeatureVector};
use drivekws::eval::{summarize, Metrics, UtteranceLabel, VarianceKind};
use drivekws::fusion::{align_telemetry, select_sensitivity, SensitivityPair};
use drivekws::scorer::{
    detected_frames, events_from_scores, FrameContext, ManeuverKind, Sensitivity,
};
use drivekws::telemetry::{
    classify_maneuver, derive_states, haversine_distance, GeoSample, ManeuverState,
    ManeuverThresholds, VehicleState,
};
use drivekws::vad::{detect_speech_regions, region_mask, VadConfig};
use drivekws::vad::{speech_posterior, GmmComponent, GmmModel};
use proptest::prelude::*;

fn features(frames: usize, dim: usize) -> impl Strategy<Value = Vec<FeatureVector>> {
    prop::collection::vec(prop::collection::vec(-10.0..10.0f64, dim), frames).prop_map(|rows| {
        rows.into_iter()
            .enumerate()
            .map(|(k, values)| FeatureVector {
                values,
                frame_index: k,
                timestamp: k as f64 * 0.01,
            })
            .collect()
    })
}

fn gmm(dim: usize) -> impl Strategy<Value = GmmModel> {
    prop::collection::vec(
        (
            0.1..1.0f64,
            prop::collection::vec(-3.0..3.0f64, dim),
            prop::collection::vec(0.1..4.0f64, dim),
        ),
        1..5,
    )
    .prop_map(move |parts| {
        let total: f64 = parts.iter().map(|p| p.0).sum();
        let components = parts
            .into_iter()
            .map(|(w, means, variances)| GmmComponent {
                weight: w / total,
                means,
                variances,
            })
            .collect();
        GmmModel::new(dim, components).unwrap()
    })
}

fn sens(v: f64) -> Sensitivity {
    Sensitivity::new(v).unwrap()
}

fn contexts(states: &[ManeuverKind], pair: &SensitivityPair) -> Vec<FrameContext> {
    states
        .iter()
        .enumerate()
        .map(|(k, &s)| FrameContext {
            timestamp_s: k as f64 * 0.01,
            in_speech: true,
            sensitivity: select_sensitivity(s, pair),
            maneuver_state: s,
        })
        .collect()
}

fn kind(b: bool) -> ManeuverKind {
    if b {
        ManeuverKind::Sensitive
    } else {
        ManeuverKind::Normal
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn framing_copies_samples(samples in prop::collection::vec(-1.0..1.0f64, 480..4000)) {
        let audio = AudioBuffer::new(samples.clone(), 16_000).unwrap();
        let frames = frame_signal(&audio, 30.0, 10.0).unwrap();
        prop_assert_eq!(frames.len(), (samples.len() - 480) / 160 + 1);
        for (k, f) in frames.frames().iter().enumerate() {
            prop_assert_eq!(f.as_slice(), &samples[k * 160..k * 160 + 480]);
        }
    }

    #[test]
    fn log_filterbank_is_finite(frame in prop::collection::vec(-1.0..1.0f64, 480), zero in any::<bool>()) {
        let frame = if zero { vec![0.0; 480] } else { frame };
        let out = log_filterbank(&frame, 16_000, 40).unwrap();
        prop_assert_eq!(out.len(), 40);
        prop_assert!(out.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn stack_context_indexes_clamped_frames(
        feats in (1usize..40).prop_flat_map(|n| features(n, 3)),
        past in 0usize..12,
        future in 0usize..6,
        pick in 0.0..1.0f64,
    ) {
        let center = ((feats.len() as f64 * pick) as usize).min(feats.len() - 1);
        let stacked = stack_context(&feats, center, past, future).unwrap();
        prop_assert_eq!(stacked.values.len(), (past + 1 + future) * 3);
        for i in 0..past + 1 + future {
            let src = (center as isize - past as isize + i as isize).clamp(0, feats.len() as isize - 1) as usize;
            for d in 0..3 {
                prop_assert_eq!(stacked.values[i * 3 + d], feats[src].values[d]);
            }
        }
    }

    #[test]
    fn gmm_permutation_invariant(m in gmm(3), x in prop::collection::vec(-5.0..5.0f64, 3), rot in 0usize..5) {
        let mut comps = m.components().to_vec();
        let r = rot % comps.len();
        comps.rotate_left(r);
        comps.reverse();
        let permuted = GmmModel::new(3, comps).unwrap();
        let a = m.log_likelihood(&x).unwrap();
        let b = permuted.log_likelihood(&x).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{} vs {}", a, b);
    }

    #[test]
    fn equal_models_give_even_posterior(m in gmm(4), x in prop::collection::vec(-5.0..5.0f64, 4)) {
        prop_assert_eq!(speech_posterior(&m, &m, &x, 0.5).unwrap(), 0.5);
    }

    #[test]
    fn vad_regions_monotone_in_threshold(
        posteriors in prop::collection::vec(0.0..1.0f64, 0..200),
        hi in 0.05..0.95f64,
        drop in 0.0..0.5f64,
        window in 1usize..15,
        hangover in 0usize..8,
    ) {
        let lo = (hi - drop).max(0.01);
        let cfg = |t| VadConfig { posterior_threshold: t, window_frames: window, hangover_frames: hangover, ..VadConfig::default() };
        let strict = detect_speech_regions(&posteriors, &cfg(hi));
        let loose = detect_speech_regions(&posteriors, &cfg(lo));
        for regions in [&strict, &loose] {
            for r in regions.iter() {
                prop_assert!(r.start_frame <= r.end_frame);
            }
            for w in regions.windows(2) {
                prop_assert!(w[0].end_frame + 1 < w[1].start_frame);
            }
        }
        let a = region_mask(&strict, posteriors.len());
        let b = region_mask(&loose, posteriors.len());
        prop_assert!(a.iter().zip(&b).all(|(x, y)| !x || *y));
    }

    #[test]
    fn softmax_normalized_and_shift_invariant(
        logits in prop::collection::vec(-50.0..50.0f64, 2..8),
        c in -100.0..100.0f64,
    ) {
        let p = softmax(&logits);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
        let shifted: Vec<f64> = logits.iter().map(|l| l + c).collect();
        for (a, b) in p.iter().zip(softmax(&shifted)) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn detection_monotone_in_sensitivity(
        scores in prop::collection::vec(0.0..1.0f64, 0..100),
        a in 0.0..1.0f64,
        b in 0.0..1.0f64,
    ) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let n = scores.len();
        let small = detected_frames(&scores, &vec![sens(lo); n]);
        let large = detected_frames(&scores, &vec![sens(hi); n]);
        prop_assert!(small.iter().all(|f| large.contains(f)));
    }

    #[test]
    fn fused_detection_is_sandwiched(
        frames in prop::collection::vec((0.0..1.0f64, any::<bool>()), 1..150),
        a in 0.0..0.99f64,
        gap in 0.005..0.5f64,
    ) {
        let pair = SensitivityPair::new(a, (a + gap).min(1.0)).unwrap();
        let scores: Vec<f64> = frames.iter().map(|f| f.0).collect();
        let states: Vec<ManeuverKind> = frames.iter().map(|f| kind(f.1)).collect();
        let n = scores.len();
        let fused: Vec<Sensitivity> = states.iter().map(|&s| select_sensitivity(s, &pair)).collect();
        let fused = detected_frames(&scores, &fused);
        let low = detected_frames(&scores, &vec![pair.sen_1; n]);
        let high = detected_frames(&scores, &vec![pair.sen_2; n]);
        prop_assert!(low.iter().all(|f| fused.contains(f)));
        prop_assert!(fused.iter().all(|f| high.contains(f)));
    }

    #[test]
    fn uniform_state_collapses_to_single(
        scores in prop::collection::vec(0.0..1.0f64, 1..300),
        a in 0.0..0.9f64,
        gap in 0.01..0.1f64,
        sensitive in any::<bool>(),
        refractory in 0usize..120,
    ) {
        let pair = SensitivityPair::new(a, a + gap).unwrap();
        let state = kind(sensitive);
        let fused = events_from_scores(&scores, &contexts(&vec![state; scores.len()], &pair), refractory);
        let fixed = if sensitive { pair.sen_2 } else { pair.sen_1 };
        let single = events_from_scores(&scores, &contexts(&vec![state; scores.len()], &SensitivityPair::constant(fixed)), refractory);
        prop_assert_eq!(fused, single);
    }

    #[test]
    fn alignment_uses_latest_fresh_state(
        state_times in prop::collection::btree_set(0u32..200, 0..30),
        flags in prop::collection::vec(any::<bool>(), 30),
        frame_times in prop::collection::vec(0.0..220.0f64, 0..60),
        limit in 0.5..10.0f64,
    ) {
        let states: Vec<ManeuverState> = state_times
            .iter()
            .zip(&flags)
            .map(|(&t, &f)| ManeuverState { timestamp_s: t as f64, state: kind(f), delta_s: 0.0, delta_d: 0.0 })
            .collect();
        let mut frame_times = frame_times;
        frame_times.sort_by(f64::total_cmp);
        for ctx in align_telemetry(&frame_times, &states, limit) {
            let latest = states.iter().rev().find(|s| s.timestamp_s <= ctx.timestamp_s);
            match latest {
                Some(s) => {
                    let age = ctx.timestamp_s - s.timestamp_s;
                    prop_assert_eq!(ctx.telemetry_age_s, Some(age));
                    prop_assert!(age >= 0.0);
                    let expected = if age <= limit { s.state } else { ManeuverKind::Normal };
                    prop_assert_eq!(ctx.maneuver_state, expected);
                }
                None => {
                    prop_assert_eq!(ctx.telemetry_age_s, None);
                    prop_assert_eq!(ctx.maneuver_state, ManeuverKind::Normal);
                }
            }
        }
    }

    #[test]
    fn maneuver_classification_ignores_bearing_offset(
        steps in prop::collection::vec((0.0..30.0f64, 0.0..360.0f64), 1..60),
        offset in 0.0..360.0f64,
        s_thd in 0.0..3.0f64,
        d_thd in 0.0..90.0f64,
    ) {
        let th = ManeuverThresholds { s_thd, d_thd };
        let build = |off: f64| -> Vec<VehicleState> {
            steps
                .iter()
                .enumerate()
                .map(|(k, &(speed, b))| VehicleState { timestamp_s: k as f64, speed_mps: speed, bearing_deg: (b + off) % 360.0 })
                .collect()
        };
        let a = classify_maneuver(&build(0.0), &th);
        let b = classify_maneuver(&build(offset), &th);
        prop_assert_eq!(a.len(), b.len());
        prop_assert_eq!(a[0].state, ManeuverKind::Normal);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x.delta_d - y.delta_d).abs() < 1e-9);
            let sensitive = x.delta_s > s_thd && x.delta_d > d_thd;
            prop_assert_eq!(x.state == ManeuverKind::Sensitive, sensitive);
            // Offsets can only move a difference by rounding, so only flag
            // changes right at the threshold are tolerated.
            if (x.delta_d - d_thd).abs() > 1e-9 {
                prop_assert_eq!(x.state, y.state);
            }
        }
    }

    #[test]
    fn haversine_triangle_inequality(
        p in prop::collection::vec((-90.0..90.0f64, -180.0..180.0f64), 3),
    ) {
        let g: Vec<GeoSample> = p.iter().map(|&(lat, lng)| GeoSample::new(0.0, lat, lng)).collect();
        let ab = haversine_distance(&g[0], &g[1]);
        let bc = haversine_distance(&g[1], &g[2]);
        let ac = haversine_distance(&g[0], &g[2]);
        prop_assert!(ac <= (ab + bc) * (1.0 + 1e-9) + 1e-9);
        prop_assert!((ab - haversine_distance(&g[1], &g[0])).abs() <= 1e-9 * ab.max(1.0));
    }

    #[test]
    fn derive_states_drops_one(
        n in 2usize..80,
        walk in prop::collection::vec((-1e-4..1e-4f64, -1e-4..1e-4f64), 80),
    ) {
        let mut lat = 39.96;
        let mut lng = 116.35;
        let trace: Vec<GeoSample> = (0..n)
            .map(|k| {
                lat += walk[k].0;
                lng += walk[k].1;
                GeoSample::new(k as f64, lat, lng)
            })
            .collect();
        let states = derive_states(&trace).unwrap();
        prop_assert_eq!(states.len(), n - 1);
        for s in &states {
            prop_assert!(s.speed_mps >= 0.0);
            prop_assert!((0.0..360.0).contains(&s.bearing_deg));
        }
    }

    #[test]
    fn metrics_identities(outcomes in prop::collection::vec((any::<bool>(), any::<bool>()), 0..200)) {
        let labelled = outcomes.iter().map(|&(pos, fired)| {
            (if pos { UtteranceLabel::Positive } else { UtteranceLabel::Negative }, fired)
        });
        let m = Metrics::from_outcomes(labelled);
        prop_assert_eq!(m.tp + m.fp + m.fn_ + m.tn, outcomes.len());
        let precision = if m.tp + m.fp == 0 { 1.0 } else { m.tp as f64 / (m.tp + m.fp) as f64 };
        let recall = if m.tp + m.fn_ == 0 { 1.0 } else { m.tp as f64 / (m.tp + m.fn_) as f64 };
        prop_assert_eq!(m.precision, precision);
        prop_assert_eq!(m.recall, recall);
    }

    #[test]
    fn summary_is_population_variance(values in prop::collection::vec(0.0..1.0f64, 1..20)) {
        let (mean, mse) = summarize(&values, VarianceKind::Population).unwrap();
        let n = values.len() as f64;
        let m = values.iter().sum::<f64>() / n;
        let v = values.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
        prop_assert!((mean - m).abs() < 1e-12);
        prop_assert!((mse - v).abs() < 1e-12);
        prop_assert!(mse >= 0.0);
    }

    #[test]
    fn recall_gain_identity_and_sign(p1 in 0.0..=1.0f64, p2 in 0.0..=1.0f64, p3 in 0.0..=1.0f64, k in 0.0..=1.0f64) {
        let params = RecallModelParams::new(p1, p2, p3, k).unwrap();
        let gain = recall_gain(&params);
        prop_assert!((recall_fused(&params) - recall_single(&params) - gain).abs() <= 1e-15);
        let bracket = (1.0 - k) * (1.0 - p3) + k * p3;
        if p2 > p1 && bracket > 0.0 {
            prop_assert!(gain > 0.0);
        }
        prop_assert!((0.0..=1.0).contains(&recall_fused(&params)));
    }
}
