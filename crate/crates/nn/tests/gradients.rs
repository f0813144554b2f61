use frucforge_nn::gradcheck::{check_layer, random_tensor, relative_error};
use frucforge_nn::norm::BatchNormConfig;
use frucforge_nn::{
    depthwise_separable, softmax_cross_entropy, AvgPool, BatchNorm, Conv2d, ConvGeometry, GlobalAvgPool, Layer, Linear,
    Mode, ParamStore, Relu, Residual, Sequential, Tensor, TwoPath,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-4;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random input with no entry closer than 0.05 to a ReLU kink.
fn away_from_zero(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    random_tensor(shape, rng).map(|v| if v.abs() < 0.05 { v.signum() * 0.05 + v } else { v })
}

fn assert_layer<L: Layer<f64>>(
    label: &str,
    layer: &mut L,
    store: &mut ParamStore<f64>,
    x: &Tensor<f64>,
    mode: Mode,
    step: f64,
    rng: &mut ChaCha8Rng,
) {
    let report = check_layer(layer, store, x, mode, step, 1e-6, 24, rng).unwrap();
    assert!(report.checked > 0);
    assert!(
        report.max_rel_err < TOL,
        "{label}: rel err {:.3e} at {}",
        report.max_rel_err,
        report.worst
    );
}

#[test]
fn conv_geometries() {
    let cases = [
        ("full 3x3", ConvGeometry::new(3, 4, 3)),
        ("grouped", ConvGeometry::new(6, 9, 3).with_groups(3)),
        ("depthwise", ConvGeometry::depthwise(4, 3)),
        ("pointwise stride 2", ConvGeometry::pointwise(3, 5).with_stride(2)),
        ("5x5 stride 2", ConvGeometry::new(2, 3, 5).with_stride(2)),
        ("no pad", ConvGeometry::new(2, 2, 3).with_pad(0)),
    ];
    for seed in 0..20 {
        for (label, g) in cases {
            for bias in [false, true] {
                let mut r = rng(seed);
                let mut store = ParamStore::new();
                let mut conv = Conv2d::new("c", g, bias, &mut store, &mut r).unwrap();
                let x = random_tensor(&[2, g.in_channels, 7, 6], &mut r);
                assert_layer(label, &mut conv, &mut store, &x, Mode::Train, 1e-3, &mut r);
            }
        }
    }
}

#[test]
fn batchnorm_train_and_eval() {
    for seed in 0..20 {
        let mut r = rng(100 + seed);
        let mut store = ParamStore::new();
        let mut bn = BatchNorm::new("bn", 3, BatchNormConfig::default(), &mut store).unwrap();
        for (name, p) in store.iter_mut() {
            let _ = name;
            let noise = random_tensor(p.value.shape(), &mut r);
            p.value.add_assign(&noise).unwrap();
        }
        let x = random_tensor(&[4, 3, 5, 5], &mut r).map(|v| 2.0 * v + 0.7);
        assert_layer("bn train", &mut bn, &mut store, &x, Mode::Train, 1e-3, &mut r);
        assert_layer("bn eval", &mut bn, &mut store, &x, Mode::Eval, 1e-3, &mut r);
    }
}

#[test]
fn parameter_free_layers() {
    for seed in 0..20 {
        let mut r = rng(200 + seed);
        let mut store = ParamStore::new();
        let x = away_from_zero(&[2, 3, 6, 6], &mut r);
        assert_layer("relu", &mut Relu::new(), &mut store, &x, Mode::Train, 1e-3, &mut r);
        assert_layer(
            "avgpool",
            &mut AvgPool::new(2, 2),
            &mut store,
            &x,
            Mode::Train,
            1e-3,
            &mut r,
        );
        assert_layer(
            "gap",
            &mut GlobalAvgPool::new(),
            &mut store,
            &x,
            Mode::Train,
            1e-3,
            &mut r,
        );
    }
}

#[test]
fn fully_connected() {
    for seed in 0..20 {
        let mut r = rng(300 + seed);
        let mut store = ParamStore::new();
        let mut fc = Linear::new("fc", 7, 2, &mut store, &mut r).unwrap();
        let x = random_tensor(&[3, 7], &mut r);
        assert_layer("fc", &mut fc, &mut store, &x, Mode::Train, 1e-3, &mut r);
    }
}

fn preact_unit(name: &str, ch: usize, store: &mut ParamStore<f64>, r: &mut ChaCha8Rng) -> Residual<f64> {
    let mut seq = Sequential::new();
    for i in 0..2 {
        seq.push(BatchNorm::new(&format!("{name}.bn{i}"), ch, BatchNormConfig::default(), store).unwrap());
        seq.push(Relu::new());
        seq.push(
            Conv2d::new(
                &format!("{name}.conv{i}"),
                ConvGeometry::new(ch, ch, 3).with_groups(ch / 2),
                false,
                store,
                r,
            )
            .unwrap(),
        );
    }
    Residual::new(seq)
}

#[test]
fn composite_blocks() {
    for seed in 0..20 {
        let mut r = rng(400 + seed);
        let mut store = ParamStore::new();
        let mut unit = preact_unit("u", 4, &mut store, &mut r);
        let x = random_tensor(&[3, 4, 6, 6], &mut r);
        assert_layer("residual", &mut unit, &mut store, &x, Mode::Train, 1e-5, &mut r);

        let mut store = ParamStore::new();
        let a = Sequential::new()
            .with(
                Conv2d::new(
                    "a",
                    ConvGeometry::pointwise(3, 4).with_stride(2),
                    false,
                    &mut store,
                    &mut r,
                )
                .unwrap(),
            )
            .with(BatchNorm::new("a.bn", 4, BatchNormConfig::default(), &mut store).unwrap());
        let b = depthwise_separable("b", 3, 4, 3, &mut store, &mut r)
            .unwrap()
            .with(BatchNorm::new("b.bn", 4, BatchNormConfig::default(), &mut store).unwrap())
            .with(Relu::new())
            .with(AvgPool::new(2, 2));
        let mut two = TwoPath::new(a, b);
        let x = random_tensor(&[3, 3, 8, 8], &mut r);
        assert_layer("two-path", &mut two, &mut store, &x, Mode::Train, 1e-5, &mut r);
    }
}

#[test]
fn fused_softmax_cross_entropy() {
    for seed in 0..20 {
        let mut r = rng(500 + seed);
        let logits = random_tensor(&[5, 2], &mut r).map(|v| 3.0 * v);
        let labels: Vec<u8> = (0..5).map(|i| ((i + seed) % 2) as u8).collect();
        let (_, _, grad) = softmax_cross_entropy(&logits, &labels).unwrap();
        let h = 1e-5;
        for i in 0..logits.len() {
            let mut p = logits.clone();
            p.data_mut()[i] += h;
            let mut m = logits.clone();
            m.data_mut()[i] -= h;
            let lp = softmax_cross_entropy(&p, &labels).unwrap().0;
            let lm = softmax_cross_entropy(&m, &labels).unwrap().0;
            let num = (lp - lm) / (2.0 * h);
            let rel = relative_error(grad.data()[i], num, 1e-6);
            assert!(rel < TOL, "logit {i}: {} vs {num}", grad.data()[i]);
        }
    }
}

/// Whole-chain check: conv -> BN -> ReLU -> GAP -> FC -> softmax -> loss.
#[test]
fn end_to_end_loss() {
    for seed in 0..20 {
        let mut r = rng(600 + seed);
        let mut store = ParamStore::new();
        let mut net = Sequential::new()
            .with(
                Conv2d::new(
                    "c1",
                    ConvGeometry::new(5, 10, 3).with_groups(5),
                    false,
                    &mut store,
                    &mut r,
                )
                .unwrap(),
            )
            .with(BatchNorm::new("bn1", 10, BatchNormConfig::default(), &mut store).unwrap())
            .with(Relu::new())
            .with(GlobalAvgPool::new())
            .with(Linear::new("fc", 10, 2, &mut store, &mut r).unwrap());
        let x = random_tensor(&[4, 5, 6, 6], &mut r);
        let labels = [0u8, 1, 1, 0];

        let logits = net.forward(&mut store, x.clone(), Mode::Train).unwrap();
        let (_, _, g) = softmax_cross_entropy(&logits, &labels).unwrap();
        store.zero_grads();
        net.backward(&mut store, g).unwrap();

        let h = 1e-5;
        let names: Vec<String> = store.iter().map(|(n, _)| n.to_string()).collect();
        for name in names {
            let analytic = store.param(&name).unwrap().grad.clone();
            for i in 0..analytic.len().min(5) {
                let mut loss = |store: &mut ParamStore<f64>, d: f64| {
                    let orig = store.value(&name).unwrap().data()[i];
                    store.param_mut(&name).unwrap().value.data_mut()[i] = orig + d;
                    let lg = net.forward(store, x.clone(), Mode::Train).unwrap();
                    store.param_mut(&name).unwrap().value.data_mut()[i] = orig;
                    softmax_cross_entropy(&lg, &labels).unwrap().0
                };
                let num = (loss(&mut store, h) - loss(&mut store, -h)) / (2.0 * h);
                let rel = relative_error(analytic.data()[i], num, 1e-6);
                assert!(rel < TOL, "{name}[{i}]: {} vs {num}", analytic.data()[i]);
            }
        }
    }
}
