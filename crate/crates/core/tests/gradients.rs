use rand::Rng;
use romcim_core::graph::{LayerSpec, NetworkGraph, Placement};
use romcim_core::rng::seeded;
use romcim_core::tensor::{FloatTensor, FloatWeights};
use romcim_core::train::{TrainConfig, TrainState};

fn trainable(l: LayerSpec) -> LayerSpec {
    l.placed(Placement::Sram, true)
}

fn frozen(l: LayerSpec) -> LayerSpec {
    l.placed(Placement::Rom, false)
}

fn gauss(rng: &mut impl Rng, shape: Vec<usize>, std: f64) -> FloatTensor {
    let n = shape.iter().product();
    let d = rand_distr::Normal::new(0.0, std).unwrap();
    FloatTensor::new(shape, (0..n).map(|_| rng.sample(d)).collect()).unwrap()
}

fn init(net: &NetworkGraph, seed: u64) -> FloatWeights {
    let mut rng = seeded(seed);
    net.parametric().map(|l| (l.name.clone(), gauss(&mut rng, l.weight_shape(), 0.5))).collect()
}

/// Largest relative gap between backprop and central differences (step 1e-4)
/// over every weight of every trainable layer.
fn max_rel_error(net: &NetworkGraph, weights: &FloatWeights, x: &FloatTensor, y: &[usize]) -> f64 {
    let state = TrainState::new(net.clone(), weights.clone(), TrainConfig::default()).unwrap();
    let grads = state.forward_backward(x, y).unwrap().grads;
    assert_eq!(grads.len(), net.parametric().filter(|l| l.trainable).count());
    let loss = |w: &FloatWeights| TrainState::new(net.clone(), w.clone(), TrainConfig::default()).unwrap().forward_backward(x, y).unwrap().loss;
    let h = 1e-4;
    let mut worst = 0.0f64;
    for (name, g) in &grads {
        for i in 0..g.len() {
            let mut w = weights.clone();
            let base = w[name].data()[i];
            w.get_mut(name).unwrap().data_mut()[i] = base + h;
            let up = loss(&w);
            w.get_mut(name).unwrap().data_mut()[i] = base - h;
            let down = loss(&w);
            let fd = (up - down) / (2.0 * h);
            let an = g.data()[i];
            worst = worst.max((fd - an).abs() / fd.abs().max(an.abs()).max(1e-6));
        }
    }
    worst
}

#[test]
fn conv_relu_pools_fc() {
    let net = NetworkGraph::new(
        "chain",
        [2, 6, 6],
        vec![
            trainable(LayerSpec::conv("c1", 2, 3, 3, 1, 1)),
            LayerSpec::relu("r1"),
            LayerSpec::max_pool("mp", 2, 2),
            trainable(LayerSpec::conv("c2", 3, 4, 3, 2, 1)),
            LayerSpec::avg_pool("ap", 2, 2),
            trainable(LayerSpec::fc("f", 4, 3)),
        ],
    );
    let mut rng = seeded(30);
    let x = gauss(&mut rng, vec![3, 2, 6, 6], 1.0);
    let err = max_rel_error(&net, &init(&net, 31), &x, &[0, 2, 1]);
    assert!(err < 1e-4, "max relative error {err}");
}

#[test]
fn pointwise_and_residual_add() {
    let net = NetworkGraph::new(
        "res",
        [3, 4, 4],
        vec![
            trainable(LayerSpec::conv("a", 3, 4, 3, 1, 1)),
            trainable(LayerSpec::pointwise("b", 3, 4).with_inputs(&["input"])),
            LayerSpec::add("s", "a", "b"),
            LayerSpec::relu("r"),
            trainable(LayerSpec::fc("f", 64, 2)),
        ],
    );
    let mut rng = seeded(32);
    let x = gauss(&mut rng, vec![2, 3, 4, 4], 1.0);
    let err = max_rel_error(&net, &init(&net, 33), &x, &[1, 0]);
    assert!(err < 1e-4, "max relative error {err}");
}

#[test]
fn gradients_flow_through_frozen_layers() {
    let net = NetworkGraph::new(
        "mixed",
        [2, 5, 5],
        vec![
            trainable(LayerSpec::conv("t", 2, 3, 3, 1, 1)),
            LayerSpec::relu("r"),
            frozen(LayerSpec::conv("fz", 3, 3, 3, 1, 1)),
            frozen(LayerSpec::fc("head", 75, 2)),
        ],
    );
    let mut rng = seeded(34);
    let x = gauss(&mut rng, vec![2, 2, 5, 5], 1.0);
    let err = max_rel_error(&net, &init(&net, 35), &x, &[0, 1]);
    assert!(err < 1e-4, "max relative error {err}");
}

#[test]
fn frozen_bytes_survive_a_hundred_steps() {
    let net = NetworkGraph::new(
        "mixed",
        [2, 5, 5],
        vec![
            frozen(LayerSpec::conv("fz", 2, 4, 3, 1, 1)),
            LayerSpec::relu("r"),
            trainable(LayerSpec::conv("t", 4, 4, 3, 1, 1)),
            frozen(LayerSpec::fc("head", 100, 3)),
        ],
    );
    let weights = init(&net, 36);
    let before: Vec<Vec<u8>> = ["fz", "head"].iter().map(|n| weights[*n].to_le_bytes()).collect();
    let mut s = TrainState::new(net, weights, TrainConfig { learning_rate: 0.05, momentum: 0.9, ..Default::default() }).unwrap();
    let digest = s.frozen_digest();
    let mut rng = seeded(37);
    let t0 = s.weights()["t"].clone();
    for _ in 0..100 {
        let x = gauss(&mut rng, vec![4, 2, 5, 5], 1.0);
        let y: Vec<usize> = (0..4).map(|_| rng.random_range(0..3)).collect();
        let r = s.forward_backward(&x, &y).unwrap();
        s.sgd_step(&r.grads).unwrap();
    }
    assert_eq!(s.step, 100);
    assert_ne!(s.weights()["t"], t0);
    assert_eq!(s.frozen_digest(), digest);
    let after: Vec<Vec<u8>> = ["fz", "head"].iter().map(|n| s.weights()[*n].to_le_bytes()).collect();
    assert_eq!(before, after);
}

#[test]
fn same_seed_same_trajectory() {
    let net = NetworkGraph::new("lin", [4, 1, 1], vec![trainable(LayerSpec::fc("f", 4, 2))]);
    let data = romcim_core::train::Dataset::new(
        [4, 1, 1],
        2,
        (0..64).map(|i| ((i * 7 % 13) as f64 - 6.0) / 6.0).collect(),
        (0..16).map(|i| i % 2).collect(),
    )
    .unwrap();
    let run = || {
        let mut s = TrainState::new(net.clone(), init(&net, 38), TrainConfig { batch_size: 4, seed: 9, ..Default::default() }).unwrap();
        let curve = s.fine_tune(&data, 5).unwrap();
        (curve, s.weights().clone())
    };
    assert_eq!(run(), run());
}
