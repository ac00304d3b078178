//! Reference network shapes used by the system model. Layers are unplaced and
//! use 8-bit weights and activations; scales are left at their defaults since
//! only shapes matter for cost accounting.
//!
//! Layers the graph has no operator for are approximated: leaky ReLU becomes
//! ReLU, padded pooling becomes unpadded 2×2 pooling, and YOLOv2's passthrough
//! (reorg + concat) is dropped, so the third detection conv reads 1024 rather
//! than 1280 channels.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::graph::{LayerSpec, NetworkGraph};

struct Builder {
    layers: Vec<LayerSpec>,
    channels: usize,
}

impl Builder {
    fn new(channels: usize) -> Self {
        Self { layers: Vec::new(), channels }
    }

    fn conv(&mut self, name: &str, out: usize, k: usize) -> &mut Self {
        self.layers.push(LayerSpec::conv(name, self.channels, out, k, 1, k / 2));
        self.layers.push(LayerSpec::relu(&format!("{name}.act")));
        self.channels = out;
        self
    }

    fn pool(&mut self, name: &str) -> &mut Self {
        self.layers.push(LayerSpec::max_pool(name, 2, 2));
        self
    }

    fn finish(self, name: &str, input: [usize; 3]) -> NetworkGraph {
        NetworkGraph::new(name, input, self.layers)
    }
}

/// YOLOv2 with the Darknet-19 backbone at 416×416, 125 outputs per cell
/// (5 anchors × (20 VOC classes + 5)). About 46 M weights.
pub fn yolo_v2() -> NetworkGraph {
    let mut b = Builder::new(3);
    b.conv("conv1", 32, 3).pool("pool1");
    b.conv("conv2", 64, 3).pool("pool2");
    b.conv("conv3", 128, 3).conv("conv4", 64, 1).conv("conv5", 128, 3).pool("pool5");
    b.conv("conv6", 256, 3).conv("conv7", 128, 1).conv("conv8", 256, 3).pool("pool8");
    b.conv("conv9", 512, 3).conv("conv10", 256, 1).conv("conv11", 512, 3).conv("conv12", 256, 1).conv("conv13", 512, 3);
    b.pool("pool13");
    b.conv("conv14", 1024, 3).conv("conv15", 512, 1).conv("conv16", 1024, 3).conv("conv17", 512, 1).conv("conv18", 1024, 3);
    b.conv("det1", 1024, 3).conv("det2", 1024, 3).conv("det3", 1024, 3);
    b.layers.push(LayerSpec::pointwise("det_out", 1024, 125));
    b.finish("yolo-v2-darknet19", [3, 416, 416])
}

/// Tiny-YOLO (VOC) at 416×416. The stride-1 pool before the last 3×3 convs
/// is omitted. About 11 M weights.
pub fn tiny_yolo() -> NetworkGraph {
    let mut b = Builder::new(3);
    for (i, c) in [16, 32, 64, 128, 256].into_iter().enumerate() {
        b.conv(&format!("conv{}", i + 1), c, 3).pool(&format!("pool{}", i + 1));
    }
    b.conv("conv6", 512, 3).conv("conv7", 1024, 3).conv("conv8", 512, 3);
    b.layers.push(LayerSpec::pointwise("det_out", 512, 125));
    b.finish("tiny-yolo", [3, 416, 416])
}

/// ResNet-18 at 224×224 with 1000 classes. The stem pool is 2×2.
pub fn resnet18() -> NetworkGraph {
    let mut layers = vec![
        LayerSpec::conv("stem", 3, 64, 7, 2, 3),
        LayerSpec::relu("stem.act"),
        LayerSpec::max_pool("stem.pool", 2, 2),
    ];
    let mut prev = String::from("stem.pool");
    let mut ch = 64;
    for (stage, out) in [64usize, 128, 256, 512].into_iter().enumerate() {
        for block in 0..2 {
            let p = format!("l{}.{}", stage + 1, block);
            let stride = if stage > 0 && block == 0 { 2 } else { 1 };
            layers.push(LayerSpec::conv(&format!("{p}.c1"), ch, out, 3, stride, 1).with_inputs(&[&prev]));
            layers.push(LayerSpec::relu(&format!("{p}.r1")));
            layers.push(LayerSpec::conv(&format!("{p}.c2"), out, out, 3, 1, 1));
            let shortcut = if stride != 1 || ch != out {
                layers.push(LayerSpec::conv(&format!("{p}.down"), ch, out, 1, stride, 0).with_inputs(&[&prev]));
                format!("{p}.down")
            } else {
                prev.clone()
            };
            layers.push(LayerSpec::add(&format!("{p}.add"), &format!("{p}.c2"), &shortcut));
            layers.push(LayerSpec::relu(&format!("{p}.out")));
            prev = format!("{p}.out");
            ch = out;
        }
    }
    layers.push(LayerSpec::avg_pool("gap", 7, 7));
    layers.push(LayerSpec::fc("fc", 512, 1000));
    NetworkGraph::new("resnet18", [3, 224, 224], layers)
}

/// VGG-8 for 32×32 inputs: six 3×3 convs (128-128-256-256-512-512) with a
/// pool after every pair, then FC 8192→1024→`classes`.
pub fn vgg8(classes: usize) -> NetworkGraph {
    let mut b = Builder::new(3);
    b.conv("conv1", 128, 3).conv("conv2", 128, 3).pool("pool2");
    b.conv("conv3", 256, 3).conv("conv4", 256, 3).pool("pool4");
    b.conv("conv5", 512, 3).conv("conv6", 512, 3).pool("pool6");
    b.layers.push(LayerSpec::fc("fc1", 512 * 4 * 4, 1024));
    b.layers.push(LayerSpec::relu("fc1.act"));
    b.layers.push(LayerSpec::fc("fc2", 1024, classes));
    b.finish("vgg8", [3, 32, 32])
}

/// Named workloads known to the CLI.
pub fn by_name(name: &str) -> Option<NetworkGraph> {
    match name {
        "yolo" | "yolo-v2" => Some(yolo_v2()),
        "tiny-yolo" => Some(tiny_yolo()),
        "resnet18" => Some(resnet18()),
        "vgg8" => Some(vgg8(10)),
        _ => None,
    }
}

pub const NAMES: [&str; 4] = ["yolo", "tiny-yolo", "resnet18", "vgg8"];
