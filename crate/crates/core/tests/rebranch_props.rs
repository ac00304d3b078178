use proptest::prelude::*;
use rand::Rng;
use romcim_core::graph::{LayerSpec, NetworkGraph, Placement};
use romcim_core::quant::QuantTensor;
use romcim_core::rebranch::{
    atl_split, build_rebranch, equivalent_conv, memory_report, spwd_decorate, ReBranchConfig, SumPoint,
};
use romcim_core::reference::{forward_ref, QuantWeights};
use romcim_core::rng::seeded;
use romcim_core::sysmodel::{deploy_hybrid, deploy_sram, CostModel};
use romcim_core::tensor::{quantize_weights, FloatTensor, FloatWeights};
use romcim_core::train::ops::conv_forward;

fn gauss(rng: &mut impl Rng, shape: Vec<usize>) -> FloatTensor {
    let n = shape.iter().product();
    let d = rand_distr::Normal::new(0.0, 1.0).unwrap();
    FloatTensor::new(shape, (0..n).map(|_| rng.sample(d)).collect()).unwrap()
}

fn close(got: &[f64], want: &[f64], rel: f64) -> bool {
    got.len() == want.len() && got.iter().zip(want).all(|(a, b)| (a - b).abs() <= rel * b.abs().max(1e-9))
}

/// One trunk conv with a single-layer branch, random branch weights.
fn random_branch(rng: &mut impl Rng, cin: usize, cout: usize, k: usize, d: usize, u: usize) -> (NetworkGraph, FloatWeights, romcim_core::rebranch::BranchGroup) {
    let net = NetworkGraph::new("t", [cin, 6, 6], vec![LayerSpec::conv("c", cin, cout, k, 1, k / 2)]);
    let mut cfg = ReBranchConfig::new(&["c"], d, u);
    cfg.seed = rng.random();
    let t = build_rebranch(&net, &cfg).unwrap();
    let b = t.branches[0].clone();
    let mut w = t.weights;
    let res = t.net.layer(&b.res_conv[0]).unwrap().weight_shape();
    w.insert(b.res_conv[0].clone(), gauss(rng, res));
    (t.net, w, b)
}

#[test]
fn equivalent_conv_matches_pipeline() {
    let mut rng = seeded(20);
    for _ in 0..100 {
        let (d, u) = ([1, 2, 4][rng.random_range(0..3)], [1, 2, 4][rng.random_range(0..3)]);
        let cin = 4 * rng.random_range(1..=4);
        let cout = 4 * rng.random_range(1..=4);
        let k = [1, 3, 5][rng.random_range(0..3)];
        let (net, w, b) = random_branch(&mut rng, cin, cout, k, d, u);
        let x = gauss(&mut rng, vec![2, cin, 6, 6]);
        let l = |n: &str| net.layer(n).unwrap();
        let h = conv_forward(&x, &w[&b.compress], l(&b.compress));
        let h = conv_forward(&h, &w[&b.res_conv[0]], l(&b.res_conv[0]));
        let pipeline = conv_forward(&h, &w[&b.decompress], l(&b.decompress));
        let eq = equivalent_conv(&b, &w).unwrap();
        let direct = conv_forward(&x, &eq, l("c"));
        assert!(close(direct.data(), pipeline.data(), 1e-5));
    }
}

#[test]
fn contraction_oracle_on_8_2_2_8() {
    let mut rng = seeded(21);
    let (comp, res, dec) = (gauss(&mut rng, vec![2, 8, 1, 1]), gauss(&mut rng, vec![2, 2, 3, 3]), gauss(&mut rng, vec![8, 2, 1, 1]));
    // W[o,i,h,w] = Σ_a Σ_b Dec[o,a] Res[a,b,h,w] Comp[b,i], summed in the opposite order to the crate.
    let mut want = vec![0.0; 8 * 8 * 9];
    for o in 0..8 {
        for i in 0..8 {
            for s in 0..9 {
                let mut acc = 0.0;
                for b in 0..2 {
                    for a in 0..2 {
                        acc += dec.data()[o * 2 + a] * res.data()[(a * 2 + b) * 9 + s] * comp.data()[b * 8 + i];
                    }
                }
                want[(o * 8 + i) * 9 + s] = acc;
            }
        }
    }
    let got = romcim_core::rebranch::compose_branch(&comp, &res, &dec).unwrap();
    assert_eq!(got.shape(), &[8, 8, 3, 3]);
    assert!(close(got.data(), &want, 1e-12));
    let pipe = |x: &FloatTensor| {
        let h = conv_forward(x, &comp, &LayerSpec::pointwise("a", 8, 2));
        let h = conv_forward(&h, &res, &LayerSpec::conv("b", 2, 2, 3, 1, 1));
        conv_forward(&h, &dec, &LayerSpec::pointwise("c", 2, 8))
    };
    let x = gauss(&mut rng, vec![1, 8, 5, 5]);
    assert!(close(conv_forward(&x, &got, &LayerSpec::conv("e", 8, 8, 3, 1, 1)).data(), pipe(&x).data(), 1e-5));
}

#[test]
fn compression_law_over_ratio_grid() {
    for (cin, cout, k) in [(64, 64, 3), (32, 64, 3), (64, 128, 1), (128, 32, 5)] {
        let net = NetworkGraph::new("t", [cin, 8, 8], vec![LayerSpec::conv("c", cin, cout, k, 1, k / 2)]);
        let trunk = net.layers[0].param_count();
        for d in [1, 2, 4, 8] {
            for u in [1, 2, 4, 8] {
                let t = build_rebranch(&net, &ReBranchConfig::new(&["c"], d, u)).unwrap();
                let res = t.net.layer(&t.branches[0].res_conv[0]).unwrap().param_count();
                assert_eq!(res * d * u, trunk, "({cin},{cout},{k}) D={d} U={u}");
            }
        }
    }
    let net = NetworkGraph::new("t", [64, 8, 8], vec![LayerSpec::conv("c", 64, 64, 3, 1, 1)]);
    let t = build_rebranch(&net, &ReBranchConfig::new(&["c"], 4, 4)).unwrap();
    let res = t.net.layer(&t.branches[0].res_conv[0]).unwrap().param_count();
    assert_eq!(net.layers[0].param_count() / res, 16);
}

#[test]
fn deeper_groups_keep_the_law_per_layer() {
    let net = NetworkGraph::new(
        "g",
        [32, 8, 8],
        vec![
            LayerSpec::conv("c1", 32, 64, 3, 1, 1),
            LayerSpec::relu("r1"),
            LayerSpec::conv("c2", 64, 64, 3, 1, 1),
            LayerSpec::conv("c3", 64, 32, 3, 1, 1),
        ],
    );
    let t = build_rebranch(&net, &ReBranchConfig::new(&["c1", "c2", "c3"], 2, 4)).unwrap();
    for (trunk, res) in ["c1", "c2", "c3"].iter().zip(&t.branches[0].res_conv) {
        assert_eq!(t.net.layer(res).unwrap().param_count() * 8, net.layer(trunk).unwrap().param_count());
    }
}

fn toy() -> NetworkGraph {
    NetworkGraph::new(
        "toy",
        [8, 8, 8],
        vec![
            LayerSpec::conv("c1", 8, 16, 3, 1, 1).with_scale(16.0),
            LayerSpec::relu("r1"),
            LayerSpec::conv("c2", 16, 16, 3, 1, 1).with_scale(32.0),
            LayerSpec::relu("r2"),
            LayerSpec::max_pool("p", 2, 2),
            LayerSpec::fc("f", 256, 4).with_scale(64.0),
        ],
    )
}

fn toy_weights(rng: &mut impl Rng) -> QuantWeights {
    let mut w = QuantWeights::new();
    for (n, shape) in [("c1", vec![16, 8, 3, 3]), ("c2", vec![16, 16, 3, 3]), ("f", vec![4, 256])] {
        let len = shape.iter().product();
        w.insert(n.into(), QuantTensor::new(shape, (0..len).map(|_| rng.random_range(-127..=127)).collect(), 8, true, 0.05).unwrap());
    }
    w
}

fn with_added(net: &NetworkGraph, base: &QuantWeights, added: &FloatWeights) -> QuantWeights {
    let mut w = base.clone();
    w.extend(quantize_weights(added, |n| net.layer(n).ok().map(|l| l.weight_bits)).unwrap());
    w
}

#[test]
fn zero_init_transforms_are_bit_identical() {
    let mut rng = seeded(22);
    let net = toy();
    let base = toy_weights(&mut rng);
    let mut variants = Vec::new();
    for sum_point in [SumPoint::BeforeActivation, SumPoint::AfterActivation] {
        for group in [vec!["c2"], vec!["c1", "c2"]] {
            let cfg = ReBranchConfig { sum_point, seed: 7, ..ReBranchConfig::new(&group, 4, 4) };
            let t = build_rebranch(&net, &cfg).unwrap();
            let w = with_added(&t.net, &base, &t.weights);
            variants.push((t.net, w));
        }
    }
    for (layer, bits) in [("c1", 2), ("c2", 4)] {
        let d = spwd_decorate(&net, layer, bits).unwrap();
        let w = with_added(&d.net, &base, &d.weights);
        variants.push((d.net, w));
    }
    for _ in 0..50 {
        let signed = rng.random_bool(0.5);
        let data = (0..512).map(|_| if signed { rng.random_range(-128..=127) } else { rng.random_range(0..=255) }).collect();
        let x = QuantTensor::new(vec![1, 8, 8, 8], data, 8, signed, 0.1).unwrap();
        let want = forward_ref(&net, &x, &base).unwrap();
        for (n, w) in &variants {
            assert_eq!(forward_ref(n, &x, w).unwrap(), want, "{}", n.layers.len());
        }
    }
}

#[test]
fn atl_and_memory_accounting() {
    let six = NetworkGraph::new("six", [4, 8, 8], (0..6).map(|i| LayerSpec::conv(&format!("c{i}"), 4, 4, 3, 1, 1)).collect());
    let r = memory_report(&atl_split(&six, 3), 0.014, 0.3584).unwrap();
    assert_eq!(r.rom_params, 3 * 144);
    assert_eq!(r.sram_fraction, 0.5);
    assert_eq!(memory_report(&atl_split(&six, 6), 0.014, 0.3584).unwrap().sram_fraction, 0.0);
    assert_eq!(memory_report(&atl_split(&six, 0), 0.014, 0.3584).unwrap().sram_fraction, 1.0);
}

#[test]
fn uniform_stack_branch_fraction_is_one_seventeenth() {
    let stack = NetworkGraph::new("u", [64, 8, 8], (0..4).map(|i| LayerSpec::conv(&format!("c{i}"), 64, 64, 3, 1, 1)).collect());
    let names: Vec<String> = (0..4).map(|i| format!("c{i}")).collect();
    let t = romcim_core::rebranch::rebranch_each(&stack, &names, 4, 4, 0).unwrap();
    let trainable: usize = t.net.parametric().filter(|l| l.trainable).map(|l| l.param_count()).sum();
    let convs: usize = t.net.parametric().filter(|l| l.kernel == 3).map(|l| l.param_count()).sum();
    assert!((trainable as f64 / convs as f64 - 1.0 / 17.0).abs() < 1e-12);
}

/// VGG-8 with its first classifier layer written as the equivalent 4×4
/// convolution over the final 4×4 map, so it takes a branch like the convs.
fn vgg8_stack() -> NetworkGraph {
    let mut layers = Vec::new();
    let mut c = 3;
    for (i, out) in [128, 128, 256, 256, 512, 512].into_iter().enumerate() {
        layers.push(LayerSpec::conv(&format!("conv{}", i + 1), c, out, 3, 1, 1));
        layers.push(LayerSpec::relu(&format!("r{}", i + 1)));
        if i % 2 == 1 {
            layers.push(LayerSpec::max_pool(&format!("p{}", i + 1), 2, 2));
        }
        c = out;
    }
    layers.push(LayerSpec::conv("fc1", 512, 1024, 4, 1, 0));
    layers.push(LayerSpec::relu("fc1.act"));
    layers.push(LayerSpec::fc("fc2", 1024, 10));
    NetworkGraph::new("vgg8", [3, 32, 32], layers)
}

#[test]
fn vgg8_area_saving_band() {
    let cost = CostModel::default();
    let net = vgg8_stack();
    assert_eq!(net.param_count(), romcim_core::workloads::vgg8(10).param_count());
    let hybrid = memory_report(&deploy_hybrid(&net, 4, 4, 0).unwrap(), cost.rom_cell_area_um2, cost.sram_cell_area_um2).unwrap();
    let sram = memory_report(&deploy_sram(&net), cost.rom_cell_area_um2, cost.sram_cell_area_um2).unwrap();
    let ratio = sram.total_area_mm2() / hybrid.total_area_mm2();
    assert!((8.0..=12.0).contains(&ratio), "ratio {ratio}");
    assert!(hybrid.sram_fraction < 0.1);
}

proptest! {
    #[test]
    fn sram_params_never_grow_with_ratios(i in 0usize..3, j in 0usize..3) {
        let net = NetworkGraph::new("t", [64, 8, 8], vec![LayerSpec::conv("c", 64, 64, 3, 1, 1)]);
        let ratios = [1, 2, 4, 8];
        let sram = |d: usize, u: usize| {
            let t = build_rebranch(&net, &ReBranchConfig::new(&["c"], d, u)).unwrap();
            t.net.parametric().filter(|l| l.placement == Some(Placement::Sram)).map(|l| l.param_count()).sum::<usize>()
        };
        let (d, u) = (ratios[i], ratios[j]);
        prop_assert!(sram(ratios[i + 1], u) <= sram(d, u));
        prop_assert!(sram(d, ratios[j + 1]) <= sram(d, u));
    }
}
