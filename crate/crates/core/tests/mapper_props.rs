use proptest::prelude::*;
use rand::Rng;
use romcim_core::cim::MacroConfig;
use romcim_core::graph::{LayerSpec, NetworkGraph, Placement};
use romcim_core::mapper::{
    evaluate_plan, execute, lower_weights, pack_greedy, pack_naive, reassemble, tile_layer, tile_network, tile_weights,
    EvalOptions, Inventory,
};
use romcim_core::quant::QuantTensor;
use romcim_core::reference::{forward_ref_all, QuantWeights};
use romcim_core::rng::seeded;

fn rom(l: LayerSpec) -> LayerSpec {
    l.placed(Placement::Rom, false)
}

/// A random chain of convs with ReLUs, the odd pool and residual fork, and an
/// FC head. Output scales keep activations away from saturation.
fn random_net(seed: u64) -> NetworkGraph {
    let mut rng = seeded(seed);
    let mut c = rng.random_range(2..=16);
    let mut hw = rng.random_range(4..=8);
    let input = [c, hw, hw];
    let mut layers = Vec::new();
    let mut prev = "input".to_string();
    let mut s_in = 1.0;
    let n = rng.random_range(2..=5);
    for i in 0..n {
        let out = rng.random_range(2..=40);
        let k = if rng.random_bool(0.7) { 3 } else { 1 };
        let fan = (c * k * k) as f64;
        let scale = s_in * 110.0 * fan.sqrt();
        s_in = scale;
        let name = format!("c{i}");
        layers.push(rom(LayerSpec::conv(&name, c, out, k, 1, k / 2).with_inputs(&[&prev]).with_scale(scale)));
        if rng.random_bool(0.3) {
            // Parallel pointwise path off the same input, summed back in.
            let side = format!("s{i}");
            layers.push(rom(LayerSpec::pointwise(&side, c, out).with_inputs(&[&prev]).with_scale(scale)));
            layers.push(LayerSpec::add(&format!("a{i}"), &name, &side).with_scale(scale));
        }
        let act = format!("r{i}");
        layers.push(LayerSpec::relu(&act));
        prev = act;
        if hw >= 4 && rng.random_bool(0.3) {
            let p = format!("p{i}");
            layers.push(LayerSpec::max_pool(&p, 2, 2));
            prev = p;
            hw /= 2;
        }
        c = out;
    }
    let feats = c * hw * hw;
    layers.push(rom(LayerSpec::fc("head", feats, rng.random_range(2..=10)).with_scale(s_in * 110.0 * (feats as f64).sqrt())));
    NetworkGraph::new(&format!("rand{seed}"), input, layers)
}

fn random_weights(net: &NetworkGraph, seed: u64) -> QuantWeights {
    let mut rng = seeded(seed);
    net.parametric()
        .map(|l| {
            let shape = l.weight_shape();
            let n = shape.iter().product();
            (l.name.clone(), QuantTensor::new(shape, (0..n).map(|_| rng.random_range(-127..=127)).collect(), 8, true, 1.0).unwrap())
        })
        .collect()
}

fn random_input(net: &NetworkGraph, seed: u64) -> QuantTensor {
    let mut rng = seeded(seed);
    let [c, h, w] = net.input_shape;
    QuantTensor::new(vec![1, c, h, w], (0..c * h * w).map(|_| rng.random_range(-128..=127)).collect(), 8, true, 1.0).unwrap()
}

#[test]
fn greedy_never_slower_and_outputs_identical() {
    let cfg = MacroConfig::rom();
    for seed in 0..20 {
        let net = random_net(seed);
        let tiles = tile_network(&net, &cfg).unwrap();
        // Room for one fresh subarray per tile, in macros of four subarrays.
        let inv = Inventory::uniform(1, tiles.len().div_ceil(4) + 1, 0, 4);
        let greedy = pack_greedy(&tiles, &inv, &net, &cfg).unwrap();
        let naive = pack_naive(&tiles, &inv, &cfg).unwrap();
        let opts = EvalOptions::default();
        let lg = evaluate_plan(&greedy, &net, &cfg, &opts).unwrap().latency_cycles;
        let ln = evaluate_plan(&naive, &net, &cfg, &opts).unwrap().latency_cycles;
        assert!(lg <= ln, "seed {seed}: greedy {lg} > naive {ln}");

        let w = random_weights(&net, 100 + seed);
        let x = random_input(&net, 200 + seed);
        let (og, _) = execute(&net, &w, &greedy, &x, &cfg).unwrap();
        let (on, _) = execute(&net, &w, &naive, &x, &cfg).unwrap();
        assert_eq!(og, on, "seed {seed}");
        assert_eq!(og, forward_ref_all(&net, &x, &w).unwrap(), "seed {seed}");
        let last = og.last().unwrap();
        assert!(last.data().iter().any(|&v| v != 0 && v.abs() < 127), "seed {seed}: head output degenerate");
    }
}

#[test]
fn tiles_reassemble_bytewise() {
    let cfg = MacroConfig::rom();
    for seed in 0..20 {
        let net = random_net(seed);
        let w = random_weights(&net, seed);
        let mut tile_bits = 0u64;
        for (i, l) in net.layers.iter().enumerate().filter(|(_, l)| l.kind.is_parametric()) {
            let m = lower_weights(l, &w[&l.name]).unwrap();
            let tiles = tile_layer(i, l, &cfg).unwrap();
            tile_bits += tiles.iter().map(|t| t.bits()).sum::<u64>();
            let blocks: Vec<_> = tiles.iter().map(|t| (t.clone(), tile_weights(&m, t))).collect();
            assert_eq!(reassemble(m.rows, m.cols, &blocks).unwrap(), m);
        }
        let layer_bits: u64 = net.parametric().map(|l| (l.param_count() * l.weight_bits as usize) as u64).sum();
        assert_eq!(tile_bits, layer_bits);
    }
}

#[test]
fn double_height_partial_sums_add_up() {
    let cfg = MacroConfig::rom();
    let net = NetworkGraph::new("fc", [256, 1, 1], vec![rom(LayerSpec::fc("f", 256, 8).with_scale(1e9))]);
    let tiles = tile_network(&net, &cfg).unwrap();
    assert_eq!(tiles.len(), 2);
    let w = random_weights(&net, 5);
    let m = lower_weights(&net.layers[0], &w["f"]).unwrap();
    let a: Vec<i64> = (0..256).map(|i| (i * 13 % 256) as i64).collect();
    let full = m.mvm(&a);
    let parts: Vec<Vec<i64>> = tiles.iter().map(|t| tile_weights(&m, t).mvm(&a[t.row_start..t.row_start + t.rows])).collect();
    let summed: Vec<i64> = (0..8).map(|c| parts[0][c] + parts[1][c]).collect();
    assert_eq!(summed, full);
}

#[test]
fn report_matches_executed_event_counts() {
    let cfg = MacroConfig::rom();
    let net = NetworkGraph::new(
        "ev",
        [20, 5, 5],
        vec![rom(LayerSpec::conv("c", 20, 12, 3, 1, 0).with_scale(1e9)), rom(LayerSpec::pointwise("p", 12, 40).with_scale(1e9))],
    );
    let tiles = tile_network(&net, &cfg).unwrap();
    let plan = pack_greedy(&tiles, &Inventory::uniform(1, 4, 0, 2), &net, &cfg).unwrap();
    let report = evaluate_plan(&plan, &net, &cfg, &EvalOptions::default()).unwrap();
    // Full-scale unsigned input; the huge output scale keeps the second
    // layer's input at zero, so only the first layer runs at full scale.
    let x = QuantTensor::new(vec![1, 20, 5, 5], vec![255; 500], 8, false, 1.0).unwrap();
    let (_, stats) = execute(&net, &random_weights(&net, 6), &plan, &x, &cfg).unwrap();
    let first = NetworkGraph::new("ev1", [20, 5, 5], vec![net.layers[0].clone()]);
    let plan1 = pack_greedy(&tile_network(&first, &cfg).unwrap(), &Inventory::uniform(1, 4, 0, 2), &first, &cfg).unwrap();
    let r1 = evaluate_plan(&plan1, &first, &cfg, &EvalOptions::default()).unwrap();
    let (_, s1) = execute(&first, &random_weights(&first, 6), &plan1, &x, &cfg).unwrap();
    assert_eq!(s1.conversions, r1.useful_conversions);
    assert_eq!(s1.cycles, r1.conversion_slots / cfg.adc_count as u64);
    assert!(stats.conversions < report.useful_conversions);
    assert!((0.0..=1.0).contains(&report.adc_utilization));
}

#[test]
fn empty_plan_has_zero_utilization() {
    let cfg = MacroConfig::rom();
    let net = NetworkGraph::new("relu", [4, 2, 2], vec![LayerSpec::relu("r")]);
    let plan = pack_greedy(&[], &Inventory::uniform(1, 1, 0, 1), &net, &cfg).unwrap();
    assert_eq!(evaluate_plan(&plan, &net, &cfg, &EvalOptions::default()).unwrap().adc_utilization, 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn any_valid_plan_computes_the_same(seed in 0u64..1000, spm in 1usize..=4) {
        let cfg = MacroConfig::rom();
        let net = random_net(seed);
        let tiles = tile_network(&net, &cfg).unwrap();
        let inv = Inventory::uniform(1, tiles.len().div_ceil(spm) + 1, 0, spm);
        let w = random_weights(&net, seed + 1);
        let x = random_input(&net, seed + 2);
        let want = forward_ref_all(&net, &x, &w).unwrap();
        for plan in [pack_greedy(&tiles, &inv, &net, &cfg).unwrap(), pack_naive(&tiles, &inv, &cfg).unwrap()] {
            plan.validate(&net).unwrap();
            prop_assert_eq!(&execute(&net, &w, &plan, &x, &cfg).unwrap().0, &want);
        }
    }
}
