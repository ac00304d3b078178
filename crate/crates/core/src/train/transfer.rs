//! Seeded two-task transfer experiment: pretrain on task A, then adapt to
//! task B three ways (head only, residual branches plus head, everything).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Dataset, EpochRecord, TrainConfig, TrainState, TransferTask, TransferTaskConfig};
use crate::error::Result;
use crate::graph::{LayerSpec, NetworkGraph, Placement};
use crate::rebranch::{eligible_convs, rebranch_each};
use crate::rng::derived;
use crate::tensor::{FloatTensor, FloatWeights};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransferConfig {
    pub task: TransferTaskConfig,
    /// Channels of every hidden convolution.
    pub width: usize,
    pub pretrain_epochs: usize,
    pub finetune_epochs: usize,
    pub pretrain: TrainConfig,
    pub finetune: TrainConfig,
    #[serde(rename = "D")]
    pub d: usize,
    #[serde(rename = "U")]
    pub u: usize,
}

impl Default for TransferConfig {
    fn default() -> Self {
        Self {
            task: TransferTaskConfig { overlap: 0.3, noise: 1.0, train_per_class_b: 32, ..Default::default() },
            width: 32,
            pretrain_epochs: 15,
            finetune_epochs: 15,
            pretrain: TrainConfig { learning_rate: 0.02, momentum: 0.9, batch_size: 16, seed: 1 },
            finetune: TrainConfig { learning_rate: 0.02, momentum: 0.9, batch_size: 16, seed: 2 },
            d: 4,
            u: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub test_acc: f64,
    pub trainable_params: u64,
    pub curve: Vec<EpochRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub pretrain_test_acc: f64,
    pub frozen_trunk: MethodResult,
    pub rebranch: MethodResult,
    pub full_finetune: MethodResult,
}

/// `conv-relu` ×3 with a pool after the second, global average pooling and a
/// linear head.
pub fn transfer_network(shape: [usize; 3], width: usize, classes: usize) -> NetworkGraph {
    let [c, h, _] = shape;
    NetworkGraph::new(
        "transfer",
        shape,
        vec![
            LayerSpec::conv("c1", c, width, 3, 1, 1),
            LayerSpec::relu("r1"),
            LayerSpec::conv("c2", width, width, 3, 1, 1),
            LayerSpec::relu("r2"),
            LayerSpec::max_pool("p2", 2, 2),
            LayerSpec::conv("c3", width, width, 3, 1, 1),
            LayerSpec::relu("r3"),
            LayerSpec::avg_pool("gap", h / 2, h / 2),
            LayerSpec::fc("head", width, classes),
        ],
    )
}

/// He-normal weights for every parametric layer.
pub fn he_init(net: &NetworkGraph, seed: u64) -> FloatWeights {
    net.parametric()
        .map(|l| {
            let fan_in = l.matrix_rows().max(1);
            let normal = Normal::new(0.0, libm::sqrt(2.0 / fan_in as f64)).expect("positive std");
            let mut rng = derived(seed, &format!("init-{}", l.name));
            let shape = l.weight_shape();
            let data = (0..shape.iter().product()).map(|_| normal.sample(&mut rng)).collect();
            (l.name.clone(), FloatTensor::new(shape, data).expect("finite"))
        })
        .collect()
}

fn place_all(net: &mut NetworkGraph, placement: Placement, trainable: bool) {
    for l in net.layers.iter_mut().filter(|l| l.kind.is_parametric()) {
        l.placement = Some(placement);
        l.trainable = trainable;
    }
}

fn run(
    net: NetworkGraph,
    weights: FloatWeights,
    cfg: TrainConfig,
    train: &Dataset,
    test: &Dataset,
    epochs: usize,
) -> Result<(MethodResult, TrainState)> {
    let trainable_params = net.parametric().filter(|l| l.trainable).map(|l| l.param_count() as u64).sum();
    let mut state = TrainState::new(net, weights, cfg)?;
    let curve = state.fine_tune(train, epochs)?;
    let (_, test_acc) = state.evaluate(test)?;
    Ok((MethodResult { test_acc, trainable_params, curve }, state))
}

pub fn run_transfer(cfg: &TransferConfig) -> Result<TransferReport> {
    let task = TransferTask::generate(&cfg.task)?;
    let classes = cfg.task.classes;
    let mut base = transfer_network(cfg.task.shape, cfg.width, classes);
    place_all(&mut base, Placement::Sram, true);
    let init = he_init(&base, cfg.pretrain.seed);
    let (pre, state) = run(base, init, cfg.pretrain, &task.a_train, &task.a_test, cfg.pretrain_epochs)?;
    let (_, pretrained) = state.into_parts();

    // A fresh head for task B, shared by every method.
    let head_seed = cfg.finetune.seed;
    let mut weights_b = pretrained.clone();
    let mut probe = transfer_network(cfg.task.shape, cfg.width, classes);
    place_all(&mut probe, Placement::Rom, false);
    weights_b.insert("head".into(), he_init(&probe, head_seed)["head"].clone());

    let set_head = |net: &mut NetworkGraph| {
        let h = net.layers.iter_mut().find(|l| l.name == "head").expect("head layer");
        h.placement = Some(Placement::Sram);
        h.trainable = true;
    };

    let mut frozen = probe.clone();
    set_head(&mut frozen);
    let (frozen_res, _) = run(frozen.clone(), weights_b.clone(), cfg.finetune, &task.b_train, &task.b_test, cfg.finetune_epochs)?;

    let convs = eligible_convs(&frozen, cfg.d, cfg.u);
    let rb = rebranch_each(&frozen, &convs, cfg.d, cfg.u, cfg.finetune.seed)?;
    let mut rb_weights = weights_b.clone();
    rb_weights.extend(rb.weights);
    let (rb_res, _) = run(rb.net.clone(), rb_weights, cfg.finetune, &task.b_train, &task.b_test, cfg.finetune_epochs)?;

    let mut full = probe;
    place_all(&mut full, Placement::Sram, true);
    let (full_res, _) = run(full, weights_b, cfg.finetune, &task.b_train, &task.b_test, cfg.finetune_epochs)?;

    Ok(TransferReport {
        pretrain_test_acc: pre.test_acc,
        frozen_trunk: frozen_res,
        rebranch: rb_res,
        full_finetune: full_res,
    })
}
