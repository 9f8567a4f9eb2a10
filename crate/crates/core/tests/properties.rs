use std::io::Write;

use proptest::prelude::*;
use rand::Rng;
use suppresskit::image::{decode, encode, resize, to_grayscale, ImageBuffer, ImageFormat, ImageId};
use suppresskit::metrics::{high_frequency_energy_ratio, report, Aggregation, MetricParams};
use suppresskit::predictor::{load_predictions, restrict_to_requests, softmax, PredictRequest};
use suppresskit::reliance::{
    aggregate_domain, chance_map_multilabel, entry_level_decide, relative_accuracy, relative_accuracy_counts,
    DecisionRule, Normalization, RelianceCurve,
};
use suppresskit::stats::{cohens_d_paired, paired_t_test, t_cdf, t_two_sided_p};
use suppresskit::synth;
use suppresskit::transforms::{
    apply, bilateral, box_blur, channel_shuffle, gaussian_blur, grid_overlay, median_filter, nlmeans,
    overlay_band_mask, patch_rotation, patch_shuffle, seeded_rng, TransformSpec,
};

fn noise(width: usize, height: usize, channels: usize, seed: u64) -> ImageBuffer {
    let mut rng = seeded_rng(seed);
    ImageBuffer::from_fn(width, height, channels, |_, _, _| rng.random::<f64>()).unwrap()
}

/// Random image description: width, height, channels, seed.
fn image() -> impl Strategy<Value = ImageBuffer> {
    (8usize..28, 8usize..28, prop_oneof![Just(1usize), Just(3usize)], any::<u64>())
        .prop_map(|(w, h, c, s)| noise(w, h, c, s))
}

fn sorted(img: &ImageBuffer) -> Vec<f64> {
    let mut v = img.data().to_vec();
    v.sort_by(f64::total_cmp);
    v
}

fn in_unit(img: &ImageBuffer) -> bool {
    img.data().iter().all(|v| (0.0..=1.0).contains(v))
}

fn small_params() -> MetricParams {
    MetricParams { w: 4, r: 3.0, k: 3 }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn png_round_trip_is_quantization(img in image()) {
        let back = decode(&encode(&img, ImageFormat::Png, 100).unwrap(), "p").unwrap();
        prop_assert_eq!(back, img.quantize());
    }

    #[test]
    fn grayscale_is_idempotent_and_bounded(img in image()) {
        let g = to_grayscale(&img);
        prop_assert_eq!(g.channels(), 1);
        prop_assert!(in_unit(&g));
        prop_assert_eq!(to_grayscale(&g), g);
    }

    #[test]
    fn resize_keeps_constants(v in 0.0f64..=1.0, w in 1usize..20, h in 1usize..20, c in prop_oneof![Just(1usize), Just(3usize)]) {
        let img = ImageBuffer::constant(9, 7, c, v).unwrap();
        let out = resize(&img, w, h).unwrap();
        prop_assert!(out.data().iter().all(|x| (x - v).abs() < 1e-12));
    }

    #[test]
    fn patch_shuffle_permutes_pixels(grid in 2usize..6, tiles in 1usize..5, c in prop_oneof![Just(1usize), Just(3usize)], seed: u64) {
        let img = noise(grid * tiles, grid * (tiles + 1), c, seed);
        let out = patch_shuffle(&img, grid, seed).unwrap();
        prop_assert_eq!(sorted(&out), sorted(&img));
    }

    #[test]
    fn patch_rotation_permutes_pixels(img in image(), grid in 2usize..5, seed: u64) {
        let out = patch_rotation(&img, grid, seed).unwrap();
        prop_assert_eq!(sorted(&out), sorted(&img));
    }

    #[test]
    fn channel_shuffle_permutes_pixels(w in 1usize..20, h in 1usize..20, seed: u64) {
        let img = noise(w, h, 3, seed);
        let out = channel_shuffle(&img, seed).unwrap();
        prop_assert_eq!(sorted(&out), sorted(&img));
        for (a, b) in img.data().chunks(3).zip(out.data().chunks(3)) {
            let (mut a, mut b) = (a.to_vec(), b.to_vec());
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn smoothing_keeps_constants(v in 0.0f64..=1.0, c in prop_oneof![Just(1usize), Just(3usize)]) {
        let img = ImageBuffer::constant(13, 11, c, v).unwrap();
        let outs = [
            gaussian_blur(&img, 5, 1.3).unwrap(),
            box_blur(&img, 5).unwrap(),
            median_filter(&img, 5).unwrap(),
            bilateral(&img, 5, 40.0, 3.0).unwrap(),
            nlmeans(&img, 10.0, 3, 7).unwrap(),
        ];
        for out in outs {
            prop_assert!(out.data().iter().all(|x| (x - v).abs() < 1e-12));
        }
    }

    #[test]
    fn smoothing_stays_in_range(img in image(), k in prop_oneof![Just(3usize), Just(5usize)]) {
        prop_assert!(in_unit(&gaussian_blur(&img, k, 1.0).unwrap()));
        prop_assert!(in_unit(&box_blur(&img, k).unwrap()));
        prop_assert!(in_unit(&median_filter(&img, k).unwrap()));
        prop_assert!(in_unit(&bilateral(&img, k, 75.0, 5.0).unwrap()));
        prop_assert!(in_unit(&nlmeans(&img, 15.0, 3, k).unwrap()));
    }

    #[test]
    fn linear_blurs_preserve_the_mean(img in image(), k in prop_oneof![Just(3usize), Just(5usize), Just(7usize)]) {
        let m = img.mean();
        prop_assert!((gaussian_blur(&img, k, 1.5).unwrap().mean() - m).abs() < 1e-6);
        prop_assert!((box_blur(&img, k).unwrap().mean() - m).abs() < 1e-6);
    }

    #[test]
    fn grid_overlay_only_touches_the_bands(img in image(), grid in 2usize..5, seed: u64) {
        let out = grid_overlay(&img, grid, seed).unwrap();
        let mask = overlay_band_mask(img.width(), img.height(), grid).unwrap();
        let ch = img.channels();
        for (i, on) in mask.iter().enumerate() {
            if !on {
                prop_assert_eq!(&out.data()[i * ch..(i + 1) * ch], &img.data()[i * ch..(i + 1) * ch]);
            }
        }
    }

    #[test]
    fn transforms_are_deterministic(img in image(), grid in 2usize..5, global: u64, name in "[a-z0-9]{1,8}") {
        let id = ImageId::new(name).unwrap();
        let specs = [
            TransformSpec::patch_shuffle(grid),
            TransformSpec::patch_rotation(grid),
            TransformSpec::grid_overlay(grid),
            TransformSpec::channel_shuffle(),
            TransformSpec::median_filter(3),
        ];
        for spec in &specs {
            if spec.kind == suppresskit::transforms::TransformKind::ChannelShuffle && img.channels() != 3 {
                continue;
            }
            prop_assert_eq!(apply(spec, &img, &id, global).unwrap(), apply(spec, &img, &id, global).unwrap());
        }
    }

    #[test]
    fn metrics_of_identity_are_one(img in image()) {
        let r = report(&img, &img, &small_params(), Aggregation::Arithmetic).unwrap();
        for v in r.fields() {
            prop_assert!((v - 1.0).abs() < 1e-12, "{:?}", r);
        }
    }

    #[test]
    fn metric_fields_are_bounded_and_aggregate(w in 8usize..24, h in 8usize..24, c in prop_oneof![Just(1usize), Just(3usize)], s1: u64, s2: u64) {
        let (x, y) = (noise(w, h, c, s1), noise(w, h, c, s2));
        let r = report(&x, &y, &small_params(), Aggregation::Arithmetic).unwrap();
        for v in r.fields() {
            prop_assert!((0.0..=1.0).contains(&v), "{:?}", r);
        }
        prop_assert_eq!(r.texture, (r.lv + r.hfe) / 2.0);
        prop_assert_eq!(r.shape, (r.essim + r.gc) / 2.0);
    }

    #[test]
    fn relative_accuracy_anchors_and_monotone(a in 0.3f64..1.0, frac in 0.0f64..0.9, x in 0.0f64..1.0, y in 0.0f64..1.0) {
        let c = a * frac;
        let n = Normalization::ChanceRescaled;
        prop_assert!((relative_accuracy(a, a, c, n).unwrap() - 1.0).abs() < 1e-12);
        prop_assert!(relative_accuracy(c, a, c, n).unwrap().abs() < 1e-12);
        let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
        prop_assert!(relative_accuracy(lo, a, c, n).unwrap() <= relative_accuracy(hi, a, c, n).unwrap());
        prop_assert!(relative_accuracy(lo, a, c, Normalization::Ratio).unwrap() <= relative_accuracy(hi, a, c, Normalization::Ratio).unwrap());
    }

    #[test]
    fn count_form_agrees_with_fractions(total in 1usize..500, base in 1usize..500, cs in 0usize..500, co in 0usize..500, classes in 2usize..50) {
        let (cs, co) = (cs % (total + 1), co % (base + 1));
        for norm in [Normalization::Ratio, Normalization::ChanceRescaled] {
            let exact = relative_accuracy_counts((cs, total), (co, base), Some(classes), norm);
            let float = relative_accuracy(cs as f64 / total as f64, co as f64 / base as f64, 1.0 / classes as f64, norm);
            match (exact, float) {
                (Ok(e), Ok(f)) => prop_assert!((e - f).abs() <= 1e-9 * f.abs().max(1.0), "{} vs {}", e, f),
                (Err(_), Err(_)) => {}
                // Only a baseline exactly at chance can round either way.
                _ => prop_assert_eq!(co * classes, base),
            }
        }
    }

    #[test]
    fn argmax_ignores_increasing_rescaling(raw in prop::collection::vec(0.001f64..1.0, 2..12), gamma in 0.2f64..5.0) {
        let total: f64 = raw.iter().sum();
        let probs: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let powered: Vec<f64> = probs.iter().map(|p| p.powf(gamma)).collect();
        let norm: f64 = powered.iter().sum();
        let rescaled: Vec<f64> = powered.iter().map(|p| p / norm).collect();
        prop_assert_eq!(
            entry_level_decide(&probs, None, DecisionRule::Argmax).unwrap(),
            entry_level_decide(&rescaled, None, DecisionRule::Argmax).unwrap()
        );
    }

    #[test]
    fn thresholding_never_beats_argmax(raw in prop::collection::vec(0.001f64..1.0, 2..8), label in 0usize..8, theta in 0.0f64..1.0) {
        let total: f64 = raw.iter().sum();
        let probs: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let label = label % probs.len();
        let arg = entry_level_decide(&probs, None, DecisionRule::Argmax).unwrap() == Some(label);
        let thr = entry_level_decide(&probs, None, DecisionRule::SummedSoftmaxThreshold { theta }).unwrap() == Some(label);
        prop_assert!(arg || !thr);
    }

    #[test]
    fn domain_aggregate_ignores_curve_order(
        accs in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 4), 1..7),
        order in Just((0..7).collect::<Vec<usize>>()).prop_shuffle(),
    ) {
        let curves: Vec<RelianceCurve> = accs.iter().enumerate().map(|(m, a)| curve(&format!("m{m}"), a)).collect();
        let permuted: Vec<RelianceCurve> = order.iter().filter(|i| **i < curves.len()).map(|i| curves[*i].clone()).collect();
        let (x, y) = (aggregate_domain(&curves).unwrap(), aggregate_domain(&permuted).unwrap());
        prop_assert_eq!(&x.mean, &y.mean);
        prop_assert_eq!(&x.std, &y.std);
        for i in 0..4 {
            let same = accs.iter().all(|a| a[i] == accs[0][i]);
            prop_assert_eq!(x.std[i] == 0.0, same);
        }
    }

    #[test]
    fn paired_p_is_a_probability(a in prop::collection::vec(-10.0f64..10.0, 2..40), shift in prop::collection::vec(-3.0f64..3.0, 40)) {
        let b: Vec<f64> = a.iter().zip(&shift).map(|(x, s)| x + s).collect();
        if let Ok(t) = paired_t_test(&a, &b) {
            prop_assert!(t.p > 0.0 && t.p <= 1.0);
            let d = cohens_d_paired(&a, &b).unwrap();
            prop_assert_eq!(t.t, d * (a.len() as f64).sqrt());
        }
    }

    #[test]
    fn t_cdf_matches_the_closed_form(df in 1usize..=30, t in -10.0f64..10.0) {
        let want = t_cdf_oracle(t, df);
        prop_assert!((t_cdf(t, df as f64) - want).abs() < 1e-9, "df {} t {}: {} vs {}", df, t, t_cdf(t, df as f64), want);
    }

    #[test]
    fn softmax_is_normalized_and_shift_invariant(logits in prop::collection::vec(-50.0f64..50.0, 1..20), shift in -100.0f64..100.0) {
        let p = softmax(&logits);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        let shifted: Vec<f64> = logits.iter().map(|v| v + shift).collect();
        for (a, b) in p.iter().zip(softmax(&shifted)) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn ingestion_returns_each_request_once_or_fails(
        present in prop::collection::btree_set(0usize..12, 0..12),
        wanted in prop::collection::btree_set(0usize..12, 0..12),
    ) {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        for i in &present {
            writeln!(file, r#"{{"id":"i{i}","scores":[1.0,0.0],"prob":false}}"#).unwrap();
        }
        let requests: Vec<PredictRequest> = wanted
            .iter()
            .map(|i| PredictRequest { id: ImageId::new(format!("i{i}")).unwrap(), path: "x.png".into() })
            .collect();
        let records = load_predictions(file.path()).unwrap();
        match restrict_to_requests(records, &requests) {
            Ok(r) => {
                prop_assert!(wanted.is_subset(&present));
                let got: Vec<&str> = r.iter().map(|p| p.image_id.as_str()).collect();
                let mut want: Vec<String> = wanted.iter().map(|i| format!("i{i}")).collect();
                want.sort();
                prop_assert_eq!(got, want);
            }
            Err(e) => {
                prop_assert!(!wanted.is_subset(&present));
                let missing = wanted.difference(&present).next().unwrap();
                let text = e.to_string();
                let needle = format!("\"i{missing}\"");
                prop_assert!(text.contains(&needle), "{}", text);
            }
        }
    }
}

fn curve(model: &str, accs: &[f64]) -> RelianceCurve {
    let raw = accs
        .iter()
        .enumerate()
        .map(|(i, a)| (i as f64, format!("s{i}"), *a))
        .collect();
    RelianceCurve::from_accuracies("box_blur", model, Normalization::Ratio, 1.0, 0.1, raw).unwrap()
}

/// Student-t CDF from the finite trigonometric series for integer degrees of
/// freedom.
fn t_cdf_oracle(t: f64, df: usize) -> f64 {
    let theta = (t.abs() / (df as f64).sqrt()).atan();
    let (s, c) = theta.sin_cos();
    // P(|T| < |t|)
    let inside = if df % 2 == 1 {
        let mut sum = 0.0;
        let mut term = c;
        let mut k = 1;
        while k + 2 <= df {
            sum += term;
            term *= c * c * (k + 1) as f64 / (k + 2) as f64;
            k += 2;
        }
        2.0 / std::f64::consts::PI * (theta + s * sum)
    } else {
        let mut sum = 0.0;
        let mut term = 1.0;
        let mut k = 0;
        while k + 2 <= df {
            sum += term;
            term *= c * c * (k + 1) as f64 / (k + 2) as f64;
            k += 2;
        }
        s * sum
    };
    let upper_tail = 0.5 * (1.0 - inside);
    if t < 0.0 {
        upper_tail
    } else {
        1.0 - upper_tail
    }
}

#[test]
fn t_p_is_one_at_zero() {
    for df in [1.0, 2.0, 7.5, 100.0] {
        assert_eq!(t_two_sided_p(0.0, df), 1.0);
    }
}

#[test]
fn hfe_falls_as_gaussian_sigma_grows() {
    for (i, img) in synth::corpus(40, 224, 40).unwrap().iter().enumerate() {
        let mut last = f64::INFINITY;
        for sigma in [0.5, 1.0, 2.0, 4.0] {
            let k = 2 * (3.0 * sigma as f64).ceil() as usize + 1;
            let blurred = gaussian_blur(img, k, sigma).unwrap();
            let hfe = high_frequency_energy_ratio(img, &blurred, 11.0).unwrap();
            assert!(hfe <= last + 1e-12, "image {i}: sigma {sigma} gives {hfe} after {last}");
            last = hfe;
        }
    }
}

#[test]
fn chance_map_settles_as_trials_double() {
    let labels: Vec<Vec<bool>> = (0..40).map(|i| (0..5).map(|c| (i * 7 + c * 3) % 5 == 0).collect()).collect();
    for seed in 0..4u64 {
        let half = chance_map_multilabel(&labels, 500, seed).unwrap();
        let full = chance_map_multilabel(&labels, 1000, seed).unwrap();
        assert!(
            (full.mean - half.mean).abs() < 2.0 * half.std_error,
            "seed {seed}: {} vs {} (se {})",
            half.mean,
            full.mean,
            half.std_error
        );
    }
}
