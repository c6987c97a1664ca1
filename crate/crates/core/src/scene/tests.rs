use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::decoder::{DecoderWeights, DeepDecoderSpec, DeepWeights, LinearWeights};
use crate::grid::{smooth_heaviside, Grid2D, SmoothMaxVariant, SmoothParams, WarpRegion};
use crate::shape::{fit_kde, KdePrior, ShapeCode};

fn kde(c: usize, rng: &mut ChaCha8Rng) -> KdePrior {
    let codes: Vec<ShapeCode> = (0..6)
        .map(|_| ShapeCode((0..c).map(|_| rng.random_range(-1.0..1.0)).collect()))
        .collect();
    fit_kde(&codes, Some(0.8)).unwrap()
}

fn toy_deep(c: usize, rng: &mut ChaCha8Rng) -> DecoderWeights {
    let spec = DeepDecoderSpec { c, d_f: 3, n_conv0: 8, d0: 2, d_out: 16 };
    DecoderWeights::Deep(DeepWeights::init_with_std(spec, 0.3, rng).unwrap())
}

fn toy_linear(c: usize, rng: &mut ChaCha8Rng) -> DecoderWeights {
    let g = |rng: &mut ChaCha8Rng, amp: f64| {
        let (a, b) = (rng.random_range(0.2..0.6), rng.random_range(0.0..6.0));
        Grid2D::from_fn(16, 16, |x, y| amp * ((a * x as f64 + b).sin() + (a * y as f64 - b).cos()))
    };
    let mean = Grid2D::from_fn(16, 16, |x, y| 5.0 - ((x as f64 - 8.0).powi(2) + (y as f64 - 8.0).powi(2)).sqrt());
    DecoderWeights::Linear(LinearWeights {
        mean_phi: mean,
        fields: (0..c).map(|_| g(rng, 0.7)).collect(),
    })
}

fn det(x: f64, y: f64, class_id: usize) -> Detection {
    Detection {
        center: (x, y),
        bbox: Rect { x0: x - 4.0, y0: y - 4.0, x1: x + 4.0, y1: y + 4.0 },
        class_id,
    }
}

struct TestScene {
    inputs: SceneInputs,
    states: Vec<ShapeState>,
    graph: InteractionGraph,
}

fn random_scene(rng: &mut ChaCha8Rng, c: usize, n_fg: usize) -> TestScene {
    let (w, h) = (32, 32);
    let mut raw: Vec<Grid2D> = (0..=n_fg)
        .map(|_| {
            let (a, b) = (rng.random_range(0.1..0.4), rng.random_range(0.0..6.0));
            Grid2D::from_fn(w, h, |x, y| 1.0 + (a * x as f64 + b).sin() * (a * y as f64).cos())
        })
        .collect();
    for i in 0..w * h {
        let s: f64 = raw.iter().map(|g| g.data()[i]).sum();
        raw.iter_mut().for_each(|g| g.data_mut()[i] /= s);
    }
    let mut dets = Vec::new();
    let mut states = Vec::new();
    for k in 0..3 {
        let cls = 1 + k % n_fg;
        let d = det(rng.random_range(10.0..22.0), rng.random_range(10.0..22.0), cls);
        states.push(ShapeState {
            center: (d.center.0 + rng.random_range(-1.5..1.5), d.center.1 + rng.random_range(-1.5..1.5)),
            kappa: rng.random_range(0.0..std::f64::consts::TAU),
            alpha: (0..c).map(|_| rng.random_range(-1.0..1.0)).collect(),
            class_id: cls,
            detection: k,
        });
        dets.push(d);
    }
    let mut windows = vec![16; n_fg + 1];
    windows[0] = 0;
    let inputs = SceneInputs::new(raw, dets, windows).unwrap();
    let graph = build_interaction_graph(&inputs.detections, &LocationModel { sigma_loc: 2.0 }, &inputs.window_sizes);
    TestScene { inputs, states, graph }
}

fn model<'a>(decoder: &'a DecoderWeights, kde: &'a KdePrior, delta: f64) -> EnergyModel<'a> {
    EnergyModel {
        decoder,
        kde,
        location: LocationModel { sigma_loc: 2.0 },
        orientation: OrientationModel::VonMises { mu: 0.5, concentration: 1.0 },
        weights: EnergyWeights { gamma_shp: 1.0, gamma_loc: 0.1, gamma_ori: 0.3, gamma_ovp: 5.0 },
        smooth: SmoothParams { delta, gamma: 10.0, variant: SmoothMaxVariant::LogSumExp },
    }
}

fn flatten(states: &[ShapeState]) -> Vec<f64> {
    states
        .iter()
        .flat_map(|s| [s.center.0, s.center.1, s.kappa].into_iter().chain(s.alpha.iter().copied()))
        .collect()
}

fn unflatten(template: &[ShapeState], v: &[f64]) -> Vec<ShapeState> {
    let mut out = template.to_vec();
    let mut i = 0;
    for s in &mut out {
        s.center = (v[i], v[i + 1]);
        s.kappa = v[i + 2];
        i += 3;
        for a in &mut s.alpha {
            *a = v[i];
            i += 1;
        }
    }
    out
}

fn flat_grad(e: &EnergyEval) -> Vec<f64> {
    e.grads
        .iter()
        .flat_map(|g| [g.center.0, g.center.1, g.kappa].into_iter().chain(g.alpha.iter().copied()))
        .collect()
}

fn fd_rel_error(m: &EnergyModel, sc: &TestScene) -> f64 {
    let eval = total_energy_and_grad(&sc.states, m, &sc.inputs, &sc.graph).unwrap();
    let g = flat_grad(&eval);
    let x = flatten(&sc.states);
    let h = 1e-6;
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..x.len() {
        let mut a = x.clone();
        a[i] += h;
        let mut b = x.clone();
        b[i] -= h;
        let ea = total_energy(&unflatten(&sc.states, &a), m, &sc.inputs, &sc.graph).unwrap().total();
        let eb = total_energy(&unflatten(&sc.states, &b), m, &sc.inputs, &sc.graph).unwrap().total();
        let fd = (ea - eb) / (2.0 * h);
        num += (fd - g[i]).powi(2);
        den += fd * fd;
    }
    (num / den).sqrt()
}

#[test]
fn gradient_matches_fd_deep_single_class() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let dec = toy_deep(8, &mut rng);
    let k = kde(8, &mut rng);
    let sc = random_scene(&mut rng, 8, 1);
    let err = fd_rel_error(&model(&dec, &k, 0.1), &sc);
    assert!(err < 1e-4, "relative error {err}");
}

#[test]
fn gradient_matches_fd_linear_multi_class() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let dec = toy_linear(5, &mut rng);
    let k = kde(5, &mut rng);
    let sc = random_scene(&mut rng, 5, 2);
    let err = fd_rel_error(&model(&dec, &k, 1.0), &sc);
    assert!(err < 1e-4, "relative error {err}");
}

#[test]
fn gradient_matches_fd_other_smooth_max_variants() {
    for variant in [SmoothMaxVariant::ExpWeightedAverage, SmoothMaxVariant::PNorm] {
        let mut rng = ChaCha8Rng::seed_from_u64(102);
        let dec = toy_linear(4, &mut rng);
        let k = kde(4, &mut rng);
        let sc = random_scene(&mut rng, 4, 1);
        let mut m = model(&dec, &k, 1.0);
        m.smooth.variant = variant;
        let err = fd_rel_error(&m, &sc);
        assert!(err < 1e-4, "{variant}: relative error {err}");
    }
}

#[test]
fn energy_decreases_along_negative_gradient() {
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let dec = toy_linear(4, &mut rng);
        let k = kde(4, &mut rng);
        let sc = random_scene(&mut rng, 4, 1);
        let m = model(&dec, &k, 1.0);
        let eval = total_energy_and_grad(&sc.states, &m, &sc.inputs, &sc.graph).unwrap();
        let g = flat_grad(&eval);
        let gn: f64 = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        let x: Vec<f64> = flatten(&sc.states).iter().zip(&g).map(|(a, b)| a - 1e-4 * b / gn).collect();
        let moved = total_energy(&unflatten(&sc.states, &x), &m, &sc.inputs, &sc.graph).unwrap();
        assert!(moved.total() < eval.energy());
    }
}

#[test]
fn far_shape_shrinks_under_gradient() {
    // a shape on pure background: moving its code against the gradient
    // lowers the energy and reduces its foreground area
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let dec = toy_linear(3, &mut rng);
    let k = kde(3, &mut rng);
    let p = Grid2D::filled(32, 32, 0.02);
    let inputs = SceneInputs::single_class(&p, vec![det(16.0, 16.0, 1)], 16).unwrap();
    let graph = build_interaction_graph(&inputs.detections, &LocationModel::default(), &inputs.window_sizes);
    let mut m = model(&dec, &k, 1.0);
    m.weights = EnergyWeights { gamma_shp: 0.0, gamma_loc: 0.0, gamma_ori: 0.0, gamma_ovp: 0.0 };
    let s = ShapeState { center: (16.0, 16.0), kappa: 0.0, alpha: vec![0.2, -0.1, 0.3], class_id: 1, detection: 0 };
    let eval = total_energy_and_grad(std::slice::from_ref(&s), &m, &inputs, &graph).unwrap();
    let mut t = s.clone();
    for (a, g) in t.alpha.iter_mut().zip(&eval.grads[0].alpha) {
        *a -= 1e-3 * g;
    }
    let area = |st: &ShapeState| composite_field(std::slice::from_ref(st), &dec, &m.smooth, (32, 32)).unwrap()[0].h.sum();
    assert!(total_energy(&[t.clone()], &m, &inputs, &graph).unwrap().total() < eval.energy());
    assert!(area(&t) < area(&s));
}

#[test]
fn permutation_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(300);
    let dec = toy_linear(4, &mut rng);
    let k = kde(4, &mut rng);
    let sc = random_scene(&mut rng, 4, 1);
    let m = model(&dec, &k, 1.0);
    let a = total_energy_and_grad(&sc.states, &m, &sc.inputs, &sc.graph).unwrap();
    let perm = [2, 0, 1];
    let states: Vec<ShapeState> = perm.iter().map(|&i| sc.states[i].clone()).collect();
    let b = total_energy_and_grad(&states, &m, &sc.inputs, &sc.graph).unwrap();
    assert!((a.energy() - b.energy()).abs() <= 1e-9 * a.energy().abs());
    for (j, &i) in perm.iter().enumerate() {
        let (ga, gb) = (&a.grads[i], &b.grads[j]);
        assert!((ga.kappa - gb.kappa).abs() < 1e-9);
        assert!((ga.center.0 - gb.center.0).abs() < 1e-9);
        for (x, y) in ga.alpha.iter().zip(&gb.alpha) {
            assert!((x - y).abs() < 1e-9);
        }
    }
}

#[test]
fn prior_is_linear_in_weights() {
    let mut rng = ChaCha8Rng::seed_from_u64(301);
    let dec = toy_linear(4, &mut rng);
    let k = kde(4, &mut rng);
    let sc = random_scene(&mut rng, 4, 1);
    let m = model(&dec, &k, 1.0);
    let mut m2 = m;
    m2.weights = m.weights.scaled(2.0);
    let a = total_energy(&sc.states, &m, &sc.inputs, &sc.graph).unwrap();
    let b = total_energy(&sc.states, &m2, &sc.inputs, &sc.graph).unwrap();
    assert_eq!(a.image, b.image);
    assert!((b.prior() - 2.0 * a.prior()).abs() <= 1e-12 * a.prior().abs().max(1.0));
    let mut m0 = m;
    m0.weights = m.weights.scaled(0.0);
    let z = total_energy(&sc.states, &m0, &sc.inputs, &sc.graph).unwrap();
    assert_eq!(z.prior(), 0.0);
}

#[test]
fn composite_basic_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let dec = toy_linear(2, &mut rng);
    let smooth = SmoothParams::default();
    assert!(composite_field(&[], &dec, &smooth, (32, 32)).unwrap().is_empty());
    let s = ShapeState { center: (15.0, 13.0), kappa: 0.0, alpha: vec![0.4, -0.3], class_id: 1, detection: 0 };
    let f = &composite_field(std::slice::from_ref(&s), &dec, &smooth, (32, 32)).unwrap()[0];
    let phi = crate::decoder::decode_slice(&dec, &s.alpha).unwrap();
    let img = f.to_image(32, 32);
    for y in 0..32 {
        for x in 0..32 {
            let (sx, sy) = (x as i64 - 15 + 8, y as i64 - 13 + 8);
            let want = if (0..16).contains(&sx) && (0..16).contains(&sy) {
                smooth_heaviside(phi.get(sx as usize, sy as usize), smooth.delta)
            } else {
                0.0
            };
            assert_eq!(img.get(x, y), want, "({x}, {y})");
        }
    }
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sc = random_scene(&mut rng, 2, 1);
        for f in composite_field(&sc.states, &dec, &smooth, (32, 32)).unwrap() {
            assert!(f.h.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}

#[test]
fn cropped_at_image_edge() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let dec = toy_linear(2, &mut rng);
    let s = ShapeState { center: (1.0, 30.0), kappa: 0.3, alpha: vec![0.0, 0.0], class_id: 1, detection: 0 };
    let f = &composite_field(&[s], &dec, &SmoothParams::default(), (32, 32)).unwrap()[0];
    assert_eq!(f.region.x0, 0);
    assert!(f.region.y0 + f.region.height <= 32);
}

fn full(w: usize, h: usize, data: Vec<f64>) -> PlacedField {
    PlacedField {
        region: WarpRegion::full(w, h),
        h: Grid2D::new(w, h, data).unwrap(),
    }
}

#[test]
fn single_class_closed_forms() {
    let smooth = SmoothParams::default();
    let half = Grid2D::filled(5, 4, 0.5);
    let e = image_energy_single_class(&[], &half, &smooth).unwrap();
    assert!((e - 20.0 * 2f64.ln()).abs() < 1e-12);

    let hard = Grid2D::from_fn(5, 4, |x, _| if x < 2 { 1.0 } else { 0.0 });
    let e = image_energy_single_class(&[full(5, 4, hard.data().to_vec())], &hard, &smooth).unwrap();
    assert!((e - 20.0 * -(1.0f64 - 1e-6).ln()).abs() < 1e-12);

    // one field so the smooth max is the field itself
    let hv = [0.2, 0.9, 0.5, 0.0];
    let pv = [0.3, 0.8, 0.5, 0.1];
    let e = image_energy_single_class(&[full(2, 2, hv.to_vec())], &Grid2D::new(2, 2, pv.to_vec()).unwrap(), &smooth)
        .unwrap();
    let hand = -(0.2 * 0.3f64.ln() + 0.8 * 0.7f64.ln())
        - (0.9 * 0.8f64.ln() + 0.1 * 0.2f64.ln())
        - (0.5 * 0.5f64.ln() + 0.5 * 0.5f64.ln())
        - 0.9f64.ln();
    assert!((e - hand).abs() < 1e-12);
}

fn three_class_p(w: usize, h: usize, rng: &mut ChaCha8Rng) -> Vec<Grid2D> {
    let mut g: Vec<Grid2D> = (0..3).map(|_| Grid2D::from_fn(w, h, |_, _| rng.random_range(0.1..1.0))).collect();
    for i in 0..w * h {
        let s: f64 = g.iter().map(|x| x.data()[i]).sum();
        g.iter_mut().for_each(|x| x.data_mut()[i] /= s);
    }
    g
}

#[test]
fn multi_class_without_shapes_is_background_only() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let p = three_class_p(4, 3, &mut rng);
    let e = image_energy_multi_class(&[], &[], &p, &SmoothParams::default()).unwrap();
    let want: f64 = -p[0].data().iter().map(|v| v.ln()).sum::<f64>();
    assert!((e - want).abs() < 1e-12);
    assert!(image_energy_multi_class(&[], &[], &p[..2], &SmoothParams::default()).is_err());
}

#[test]
fn multi_class_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let p = three_class_p(3, 3, &mut rng);
    let a: Vec<f64> = (0..9).map(|_| rng.random_range(0.0..1.0)).collect();
    let b: Vec<f64> = (0..9).map(|_| rng.random_range(0.0..1.0)).collect();
    let smooth = SmoothParams { delta: 1.0, gamma: 4.0, variant: SmoothMaxVariant::LogSumExp };
    let e = image_energy_multi_class(&[full(3, 3, a.clone()), full(3, 3, b.clone())], &[1, 2], &p, &smooth).unwrap();
    let g = smooth.gamma;
    let mut want = 0.0;
    for i in 0..9 {
        // one shape per class: the per-class smooth max is the value itself
        let s1 = a[i];
        let s2 = b[i];
        let s0 = 1.0 - ((g * a[i]).exp() + (g * b[i]).exp()).ln() / g;
        let z = s0 + s1 + s2;
        want -= (s0 * p[0].data()[i].ln() + s1 * p[1].data()[i].ln() + s2 * p[2].data()[i].ln()) / z;
    }
    assert!((e - want).abs() < 1e-12, "{e} vs {want}");
}

#[test]
fn hard_membership_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..200 {
        let n = rng.random_range(1..6);
        let vals: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.4) { 1.0 } else { 0.0 }).collect();
        let ids: Vec<usize> = (0..n).map(|_| rng.random_range(1..4)).collect();
        let s = class_memberships(&vals, &ids, 4, None).unwrap();
        let m = vals.iter().copied().fold(0.0, f64::max);
        assert_eq!(s[0], 1.0 - m);
    }
}

#[test]
fn prior_closed_forms() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let dec = toy_linear(2, &mut rng);
    let k = kde(2, &mut rng);
    let p = Grid2D::filled(20, 20, 0.5);
    let dets = vec![det(8.0, 8.0, 1), det(9.0, 8.0, 1)];
    let inputs = SceneInputs::single_class(&p, dets, 16).unwrap();
    let graph = build_interaction_graph(&inputs.detections, &LocationModel::default(), &inputs.window_sizes);
    let mut m = model(&dec, &k, 1.0);
    m.orientation = OrientationModel::Uniform;
    m.weights = EnergyWeights { gamma_shp: 0.0, gamma_loc: 1.0, gamma_ori: 1.0, gamma_ovp: 2.0 };
    let states: Vec<ShapeState> = inputs
        .detections
        .iter()
        .enumerate()
        .map(|(i, d)| ShapeState { center: d.center, kappa: 0.1 * i as f64, alpha: vec![0.0; 2], class_id: 1, detection: i })
        .collect();
    let square = |x0: usize| PlacedField {
        region: WarpRegion { x0, y0: 4, width: 3, height: 3 },
        h: Grid2D::filled(3, 3, 1.0),
    };
    let t = prior_energy(&states, &m, &inputs, &graph, &[square(5), square(5)]).unwrap();
    assert_eq!(t.location, 0.0);
    assert!((t.orientation - 2.0 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-12);
    assert_eq!(t.overlap, 2.0 * 9.0);
    let t = prior_energy(&states, &m, &inputs, &graph, &[square(5), square(7)]).unwrap();
    assert_eq!(t.overlap, 2.0 * 3.0);
}

#[test]
fn rejects_inconsistent_scenes() {
    let p = Grid2D::filled(8, 8, 0.5);
    let bad = Grid2D::filled(8, 8, 0.7);
    assert!(SceneInputs::new(vec![p.clone(), bad], vec![], vec![0, 4]).is_err());
    assert!(SceneInputs::single_class(&p, vec![det(20.0, 3.0, 1)], 4).is_err());
    assert!(SceneInputs::single_class(&p, vec![], 9).is_err());
}
