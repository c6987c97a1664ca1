use std::f64::consts::PI;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::decoder::LinearWeights;
use crate::grid::{Grid2D, SmoothMaxVariant};
use crate::metrics::iou;
use crate::scene::{Detection, Rect};
use crate::shape::{fit_shape_bundle, ShapeKernelSpec, TrainingShapeSet};
use crate::synth::{blob_training_set, gen_keyed_bar, BlobParams};

const WIN: usize = 32;

fn blob_params() -> BlobParams {
    BlobParams {
        base_radius: 8.0,
        n_harmonics: 3,
        harmonic_amp: 0.25,
        rng_seed: 0,
    }
}

fn blob_model() -> (ShapeBundle, DecoderWeights) {
    let set = blob_training_set(&blob_params(), 30, WIN, 11).unwrap();
    let bundle = fit_shape_bundle(&set, ShapeKernelSpec::linear(8.0), 6, None).unwrap();
    let dec = DecoderWeights::Linear(LinearWeights::from_kpca(&bundle.kpca).unwrap());
    (bundle, dec)
}

fn bar_model() -> (ShapeBundle, DecoderWeights) {
    let mut masks = Vec::new();
    for l in [8.0, 9.0, 10.0, 11.0] {
        for t in [1.5, 2.5, 3.5] {
            masks.push(gen_keyed_bar(l, t, t + 1.5, WIN));
        }
    }
    let set = TrainingShapeSet::new(masks).unwrap();
    let bundle = fit_shape_bundle(&set, ShapeKernelSpec::linear(8.0), 6, None).unwrap();
    let dec = DecoderWeights::Linear(LinearWeights::from_kpca(&bundle.kpca).unwrap());
    (bundle, dec)
}

/// A `w x h` scene with `mask` pasted so that its window center lands on
/// `at`, and a detection with the given center and a box around the mask.
fn paste(mask: &BinaryMask, at: (usize, usize), w: usize, h: usize) -> BinaryMask {
    let (c, _) = crate::grid::window_center(mask.width(), mask.height());
    let c = c as usize;
    BinaryMask::from_fn(w, h, |x, y| {
        let u = x as i64 - at.0 as i64 + c as i64;
        let v = y as i64 - at.1 as i64 + c as i64;
        u >= 0 && v >= 0 && (u as usize) < mask.width() && (v as usize) < mask.height() && mask.get(u as usize, v as usize)
    })
}

fn ideal_inputs(union: &BinaryMask, dets: Vec<Detection>) -> SceneInputs {
    let p = Grid2D::from_fn(union.width(), union.height(), |x, y| if union.get(x, y) { 0.95 } else { 0.05 });
    SceneInputs::single_class(&p, dets, WIN).unwrap()
}

fn box_of(m: &BinaryMask) -> Rect {
    let (x0, y0, x1, y1) = m.bbox().unwrap();
    Rect { x0: x0 as f64 - 1.0, y0: y0 as f64 - 1.0, x1: x1 as f64 + 1.0, y1: y1 as f64 + 1.0 }
}

fn params() -> SegmentParams {
    SegmentParams::for_variant(DecoderVariant::Linear)
}

#[test]
fn crop_follows_box_and_class() {
    let union = BinaryMask::from_fn(40, 40, |x, y| (10..20).contains(&x) && (10..20).contains(&y));
    let det = Detection { center: (14.0, 14.0), bbox: Rect { x0: 12.0, y0: 10.0, x1: 30.0, y1: 30.0 }, class_id: 1 };
    let inputs = ideal_inputs(&union, vec![det.clone()]);
    let m = crop_init_mask(&inputs, &det, 8);
    // window covers image x, y in 10..18
    let want = BinaryMask::from_fn(8, 8, |u, _| u >= 2);
    assert_eq!(m, want);
}

#[test]
fn background_box_falls_back_to_mean_shape() {
    let (bundle, dec) = blob_model();
    let union = BinaryMask::from_fn(64, 64, |x, y| x < 10 && y < 10);
    let det = Detection { center: (40.0, 40.0), bbox: Rect { x0: 30.0, y0: 30.0, x1: 50.0, y1: 50.0 }, class_id: 1 };
    let inputs = ideal_inputs(&union, vec![det.clone(), det]);
    let p = params();
    let states = initialize_states(&inputs, &bundle.kpca, &dec, &p.orientation, &p.smooth, &p.init).unwrap();
    assert_eq!(states.len(), 2);
    for (i, s) in states.iter().enumerate() {
        assert_eq!(s.alpha, vec![0.0; 6]);
        assert_eq!((s.center, s.kappa, s.detection), ((40.0, 40.0), 0.0, i));
    }
}

#[test]
fn training_mask_reencodes_to_its_code() {
    let (bundle, dec) = blob_model();
    for i in [0, 7, 19] {
        let m = &bundle.kpca.train_phi[i];
        let mask = BinaryMask::from_fn(WIN, WIN, |x, y| m[y * WIN + x] > 0.0);
        let scene = paste(&mask, (30, 27), 64, 64);
        let det = Detection { center: (30.0, 27.0), bbox: box_of(&scene), class_id: 1 };
        let inputs = ideal_inputs(&scene, vec![det]);
        let p = params();
        let s = initialize_states(&inputs, &bundle.kpca, &dec, &p.orientation, &p.smooth, &p.init).unwrap();
        let want = bundle.kpca.train_code(i);
        for (a, b) in s[0].alpha.iter().zip(&want.0) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }
}

#[test]
fn rotating_disk_keeps_angle_zero() {
    let (bundle, dec) = blob_model();
    let disk = BinaryMask::from_fn(WIN, WIN, |x, y| (x as f64 - 16.0).hypot(y as f64 - 16.0) <= 7.0);
    let cfg = InitConfig { delta_kappa: PI / 2.0, ..Default::default() };
    for k in 1..4 {
        assert_eq!(rotate_mask(&disk, k as f64 * PI / 2.0), disk);
    }
    let k = init_rotation(&disk, &bundle.kpca, &dec, &OrientationModel::Uniform, &params().smooth, &cfg).unwrap();
    assert_eq!(k, 0.0);
}

fn angle_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}

#[test]
fn rotated_bar_is_turned_back() {
    let (bundle, dec) = bar_model();
    let bar = gen_keyed_bar(9.5, 2.0, 3.5, WIN);
    let turned = rotate_mask(&bar, 30f64.to_radians());
    let cfg = InitConfig { use_rotation_init: true, delta_kappa: 15f64.to_radians(), ..Default::default() };
    let k = init_rotation(&turned, &bundle.kpca, &dec, &OrientationModel::Uniform, &params().smooth, &cfg).unwrap();
    assert!(angle_gap(k, -30f64.to_radians()) <= 7.5f64.to_radians(), "{}", k.to_degrees());
}

#[test]
fn strong_orientation_prior_wins() {
    let (bundle, dec) = blob_model();
    let disk = BinaryMask::from_fn(WIN, WIN, |x, y| (x as f64 - 16.0).hypot(y as f64 - 16.0) <= 7.0);
    let mu = 100f64.to_radians();
    let ori = OrientationModel::VonMises { mu, concentration: 500.0 };
    let cfg = InitConfig { delta_kappa: 15f64.to_radians(), ..Default::default() };
    let k = init_rotation(&disk, &bundle.kpca, &dec, &ori, &params().smooth, &cfg).unwrap();
    assert!((k - 105f64.to_radians()).abs() < 1e-12, "{}", k.to_degrees());
}

fn hard_linear(values: &[f64]) -> (DecoderWeights, Vec<ShapeState>) {
    let dec = DecoderWeights::Linear(LinearWeights {
        mean_phi: Grid2D::zeros(4, 4),
        fields: vec![Grid2D::filled(4, 4, 1.0)],
    });
    let states = values
        .iter()
        .enumerate()
        .map(|(i, &v)| ShapeState { center: (5.0, 5.0), kappa: 0.0, alpha: vec![v], class_id: 1, detection: i })
        .collect();
    (dec, states)
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[test]
fn shared_pixels_go_to_the_larger_field() {
    let (dec, states) = hard_linear(&[logit(0.7), logit(0.9), logit(0.3)]);
    let cfg = EvolveConfig { empty_shape_area_threshold: 1, ..Default::default() };
    let smooth = SmoothParams::default();
    let r = extract_instance_masks(&states, &dec, &smooth, (12, 12), &cfg).unwrap();
    let block = BinaryMask::from_fn(12, 12, |x, y| (3..7).contains(&x) && (3..7).contains(&y));
    assert_eq!(r.owners, vec![1]);
    assert_eq!(r.masks, vec![block.clone()]);
    assert_eq!(r.pruned, vec![true, false, true]);

    let (dec, states) = hard_linear(&[1.0, 1.0]);
    let r = extract_instance_masks(&states, &dec, &smooth, (12, 12), &cfg).unwrap();
    assert_eq!((r.owners, r.masks), (vec![0], vec![block]));
}

#[test]
fn separate_fields_threshold_independently() {
    let (bundle, dec) = blob_model();
    let smooth = SmoothParams { delta: 1e-3, ..Default::default() };
    let states: Vec<ShapeState> = [(20.0, 20.0), (60.0, 22.0)]
        .iter()
        .enumerate()
        .map(|(i, &c)| ShapeState { center: c, kappa: 0.3 * i as f64, alpha: bundle.kpca.train_code(i).0, class_id: 1, detection: i })
        .collect();
    let r = extract_instance_masks(&states, &dec, &smooth, (80, 40), &EvolveConfig::default()).unwrap();
    let fields = composite_field(&states, &dec, &smooth, (80, 40)).unwrap();
    for (m, f) in r.masks.iter().zip(&fields) {
        assert_eq!(*m, f.to_image(80, 40).threshold(0.5));
    }
}

#[test]
fn small_shapes_are_pruned() {
    let dec = DecoderWeights::Linear(LinearWeights {
        mean_phi: Grid2D::from_fn(5, 5, |x, y| if x == 2 && y < 3 { 1.0 } else { -1.0 }),
        fields: vec![Grid2D::zeros(5, 5)],
    });
    let s = ShapeState { center: (10.0, 10.0), kappa: 0.0, alpha: vec![0.0], class_id: 1, detection: 0 };
    let r = extract_instance_masks(&[s], &dec, &SmoothParams::default(), (20, 20), &EvolveConfig::default()).unwrap();
    assert!(r.masks.is_empty());
    assert_eq!(r.pruned, vec![true]);
}

struct Fixture {
    bundle: ShapeBundle,
    dec: DecoderWeights,
}

impl Fixture {
    fn new() -> Self {
        let (bundle, dec) = blob_model();
        Fixture { bundle, dec }
    }

    fn model<'a>(&'a self, p: &SegmentParams) -> EnergyModel<'a> {
        EnergyModel {
            decoder: &self.dec,
            kde: &self.bundle.kde,
            location: p.location,
            orientation: p.orientation,
            weights: p.weights,
            smooth: p.smooth,
        }
    }
}

fn one_blob_scene(seed: u64, fx: &Fixture) -> (SceneInputs, BinaryMask) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blob = crate::synth::gen_blob(&blob_params().with_seed(1000 + seed), (WIN, WIN)).unwrap();
    let truth = paste(&blob, (32, 30), 64, 64);
    let c = truth.centroid().unwrap();
    let (r, t) = (3.0 * rng.random::<f64>().sqrt(), rng.random_range(0.0..2.0 * PI));
    let det = Detection { center: (c.0 + r * t.cos(), c.1 + r * t.sin()), bbox: box_of(&truth), class_id: 1 };
    let _ = fx;
    (ideal_inputs(&truth, vec![det]), truth)
}

#[test]
fn single_blob_is_recovered() {
    let fx = Fixture::new();
    let p = params();
    for seed in 0..3 {
        let (inputs, truth) = one_blob_scene(seed, &fx);
        let r = segment(&inputs, &fx.bundle, &fx.dec, &p).unwrap();
        assert_eq!(r.masks.len(), 1);
        let v = iou(&r.masks[0], &truth).unwrap();
        assert!(v >= 0.9, "seed {seed}: iou {v}, status {:?}", r.status);
        for w in r.trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-10);
        }
    }
}

#[test]
fn large_tolerance_returns_initial_states() {
    let fx = Fixture::new();
    let mut p = params();
    p.evolve.optimizer.grad_tolerance = 1e12;
    let (inputs, _) = one_blob_scene(0, &fx);
    let states = initialize_states(&inputs, &fx.bundle.kpca, &fx.dec, &p.orientation, &p.smooth, &p.init).unwrap();
    let r = run_evolution(&states, &fx.model(&p), &inputs, &code_scales(&fx.bundle.kpca), &p.evolve).unwrap();
    assert_eq!(r.iterations, 0);
    assert_eq!(r.states, states);
    assert_eq!(r.trace.len(), 1);
}

#[test]
fn evolution_is_deterministic_and_shift_equivariant() {
    let fx = Fixture::new();
    let p = params();
    let (inputs, _) = one_blob_scene(4, &fx);
    let a = segment(&inputs, &fx.bundle, &fx.dec, &p).unwrap();
    let b = segment(&inputs, &fx.bundle, &fx.dec, &p).unwrap();
    assert_eq!(a.states, b.states);
    assert_eq!(a.trace, b.trace);

    let (dx, dy) = (3usize, 2usize);
    let shift = |g: &Grid2D| Grid2D::from_fn(64, 64, |x, y| if x >= dx && y >= dy { g.get(x - dx, y - dy) } else { g.get(0, 0) });
    let mut det = inputs.detections[0].clone();
    det.center = (det.center.0 + dx as f64, det.center.1 + dy as f64);
    det.bbox = Rect { x0: det.bbox.x0 + dx as f64, y0: det.bbox.y0 + dy as f64, x1: det.bbox.x1 + dx as f64, y1: det.bbox.y1 + dy as f64 };
    let moved = SceneInputs::new(inputs.p_sem.iter().map(shift).collect(), vec![det], inputs.window_sizes.clone()).unwrap();
    let c = segment(&moved, &fx.bundle, &fx.dec, &p).unwrap();
    assert_eq!(c.masks[0], a.masks[0].shifted(dx as i64, dy as i64));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn extracted_masks_are_disjoint(
        shapes in prop::collection::vec((4.0..36.0f64, 4.0..36.0f64, 0.0..6.3f64, 0usize..30), 1..5),
        delta in 0.3..3.0f64,
    ) {
        let (bundle, dec) = blob_model();
        let states: Vec<ShapeState> = shapes
            .iter()
            .enumerate()
            .map(|(i, &(x, y, k, t))| ShapeState { center: (x, y), kappa: k, alpha: bundle.kpca.train_code(t).0, class_id: 1, detection: i })
            .collect();
        let smooth = SmoothParams { delta, gamma: 10.0, variant: SmoothMaxVariant::LogSumExp };
        let cfg = EvolveConfig { empty_shape_area_threshold: 1, ..Default::default() };
        let r = extract_instance_masks(&states, &dec, &smooth, (40, 40), &cfg).unwrap();
        for i in 0..r.masks.len() {
            for j in i + 1..r.masks.len() {
                prop_assert_eq!(r.masks[i].intersection_count(&r.masks[j]), 0);
            }
        }
    }
}
