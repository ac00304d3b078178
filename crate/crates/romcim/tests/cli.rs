use std::path::{Path, PathBuf};
use std::process::Command;

use romcim::cli::{CompareDoc, MacroStatsDoc, MapDoc, PlanDoc, RebranchDoc, SimulateDoc, TrainDoc};
use romcim::formats::{parse, to_json, DatasetFile, NetFile, WeightsFile};
use romcim::manifest::RunManifest;
use romcim_core::graph::{LayerSpec, NetworkGraph, Placement};
use romcim_core::train::{he_init, Dataset};

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn romcim(args: &[&str], env_out: Option<&Path>) -> Run {
    let mut c = Command::new(env!("CARGO_BIN_EXE_romcim"));
    c.args(args).env_remove("ROMCIM_OUT_DIR");
    if let Some(d) = env_out {
        c.env("ROMCIM_OUT_DIR", d);
    }
    let o = c.output().unwrap();
    Run {
        code: o.status.code().unwrap(),
        stdout: String::from_utf8(o.stdout).unwrap(),
        stderr: String::from_utf8(o.stderr).unwrap(),
    }
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

fn toy() -> NetworkGraph {
    NetworkGraph::new(
        "toy",
        [8, 8, 8],
        vec![
            LayerSpec::conv("c1", 8, 16, 3, 1, 1),
            LayerSpec::relu("r1"),
            LayerSpec::conv("c2", 16, 16, 3, 1, 1),
            LayerSpec::relu("r2"),
            LayerSpec::max_pool("p", 2, 2),
            LayerSpec::fc("fc", 256, 10),
        ],
    )
}

fn write_net(dir: &Path, net: &NetworkGraph) -> PathBuf {
    let path = dir.join("net.json");
    std::fs::write(&path, to_json(&NetFile::new(net, Vec::new())).unwrap()).unwrap();
    path
}

#[test]
fn simulate_writes_three_files() {
    let dir = tempfile::tempdir().unwrap();
    let net = write_net(dir.path(), &toy());
    let out = dir.path().join("out");
    let r = romcim(&["simulate", "--net", p(&net), "--out", p(&out)], None);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let mut names: Vec<_> = std::fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names, ["breakdown.csv", "manifest.json", "report.json"]);
    let doc: SimulateDoc = parse(&read(&out.join("report.json")), "report").unwrap();
    let manifest: RunManifest = serde_json::from_str(&read(&out.join("manifest.json"))).unwrap();
    assert_eq!(doc.manifest, manifest);
    assert_eq!(manifest.inputs.len(), 1);
    let csv = read(&out.join("breakdown.csv"));
    assert_eq!(csv.lines().count(), 1 + 6 * doc.report.layers.len());
    let total: f64 = csv.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap()).sum();
    assert!((total - doc.report.energy_j).abs() <= 1e-9 * doc.report.energy_j);
}

#[test]
fn rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let net = write_net(dir.path(), &toy());
    let out = dir.path().join("out");
    let args = ["simulate", "--net", p(&net), "--config", "sram-chiplets", "--out", p(&out)];
    assert_eq!(romcim(&args, None).code, 0);
    let first: Vec<_> = ["report.json", "breakdown.csv", "manifest.json"].iter().map(|f| std::fs::read(out.join(f)).unwrap()).collect();
    assert_eq!(romcim(&args, None).code, 0);
    let second: Vec<_> = ["report.json", "breakdown.csv", "manifest.json"].iter().map(|f| std::fs::read(out.join(f)).unwrap()).collect();
    assert_eq!(first, second);
}

#[test]
fn missing_field_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let net = dir.path().join("net.json");
    std::fs::write(
        &net,
        r#"{"schema_version": "1.0", "input_shape": [8, 8, 8], "layers": [{"name": "c1", "kind": "conv2d", "in_ch": 8, "out_ch": 8}, {"name": "r"}]}"#,
    )
    .unwrap();
    let r = romcim(&["simulate", "--net", p(&net), "--out", p(&dir.path().join("o"))], None);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("layers[1]") && r.stderr.contains("missing field `kind`"), "{}", r.stderr);
    assert!(!dir.path().join("o").exists());
}

#[test]
fn unknown_major_and_bad_arguments_are_validation_errors() {
    let dir = tempfile::tempdir().unwrap();
    let net = write_net(dir.path(), &toy());
    let text = read(&net).replace("\"1.0\"", "\"3.1\"");
    std::fs::write(&net, text).unwrap();
    let r = romcim(&["simulate", "--net", p(&net)], None);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("schema_version"), "{}", r.stderr);
    assert_eq!(romcim(&["simulate", "--workload", "vgg8", "--config", "tpu"], None).code, 1);
    assert_eq!(romcim(&["frobnicate"], None).code, 1);
    assert_eq!(romcim(&["--help"], None).code, 0);
    let missing = romcim(&["simulate", "--net", p(&dir.path().join("absent.json"))], None);
    assert_eq!(missing.code, 2);
}

#[test]
fn out_dir_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let env_out = dir.path().join("from-env");
    let r = romcim(&["macro-stats"], Some(&env_out));
    assert_eq!(r.code, 0, "{}", r.stderr);
    let doc: MacroStatsDoc = parse(&read(&env_out.join("stats.json")), "stats").unwrap();
    assert!((doc.stats.density_mb_per_mm2 - 5.0).abs() < 0.05);
    assert_eq!(doc.manifest.out_dir, p(&env_out));
    let flag_out = dir.path().join("from-flag");
    assert_eq!(romcim(&["macro-stats", "--cell", "sram", "--out", p(&flag_out)], Some(&env_out)).code, 0);
    let sram: MacroStatsDoc = parse(&read(&flag_out.join("stats.json")), "stats").unwrap();
    assert!(sram.stats.standby_power_w > 0.0);
}

#[test]
fn rebranch_reports_compression() {
    let dir = tempfile::tempdir().unwrap();
    let net = write_net(dir.path(), &toy());
    for (d, u, want) in [("4", "4", 16.0), ("1", "1", 1.0)] {
        let out = dir.path().join(format!("rb{d}"));
        let r = romcim(&["rebranch", "--net", p(&net), "--D", d, "--U", u, "--group", "c2", "--out", p(&out)], None);
        assert_eq!(r.code, 0, "{}", r.stderr);
        let doc: RebranchDoc = parse(&read(&out.join("memory_report.json")), "mem").unwrap();
        assert_eq!(doc.params.len(), 1);
        assert_eq!(doc.params[0].compression, want);
        assert_eq!(doc.params[0].trunk_params, 16 * 16 * 9);
        assert!(doc.after.sram_params > doc.before.sram_params);
        // Compress and decompress are fixed 1×1 layers stored in ROM.
        let fixed = 2 * 16 * (16 / d.parse::<u64>().unwrap());
        assert_eq!(doc.after.rom_params, doc.before.rom_params + fixed);
        let transformed: NetFile = parse(&read(&out.join("net.json")), "net").unwrap();
        transformed.graph().analyze().unwrap();
        let w: WeightsFile = parse(&read(&out.join("weights.json")), "w").unwrap();
        assert!(w.weights.keys().any(|k| k.starts_with("c2.")));
    }
    let r = romcim(&["rebranch", "--net", p(&net), "--group", "nope", "--out", p(&dir.path().join("bad"))], None);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("nope"), "{}", r.stderr);
    let r = romcim(&["rebranch", "--net", p(&net), "--D", "3", "--U", "3", "--group", "c2", "--out", p(&dir.path().join("bad"))], None);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("divisible"), "{}", r.stderr);
}

fn train_fixture(dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
    let net = NetworkGraph::new(
        "tiny",
        [2, 4, 4],
        vec![
            LayerSpec::conv("c", 2, 4, 3, 1, 1).placed(Placement::Rom, false),
            LayerSpec::relu("r"),
            LayerSpec::fc("head", 64, 2).placed(Placement::Sram, true),
        ],
    );
    let (mut data, mut labels) = (Vec::new(), Vec::new());
    for i in 0..40 {
        let y = i % 2;
        let sign = if y == 0 { 1.0 } else { -1.0 };
        data.extend((0..32).map(|j| sign * (0.5 + ((i * 7 + j * 3) % 11) as f64 / 11.0) * if j < 16 { 1.0 } else { 0.2 }));
        labels.push(y);
    }
    let ds = Dataset::new([2, 4, 4], 2, data, labels).unwrap();
    let net_path = write_net(dir, &net);
    let data_path = dir.join("data.json");
    std::fs::write(&data_path, to_json(&DatasetFile::new(&ds)).unwrap()).unwrap();
    let w_path = dir.join("w0.json");
    std::fs::write(&w_path, to_json(&WeightsFile::new(he_init(&net, 5))).unwrap()).unwrap();
    (net_path, data_path, w_path)
}

#[test]
fn train_zero_epochs_keeps_weights() {
    let dir = tempfile::tempdir().unwrap();
    let (net, data, w0) = train_fixture(dir.path());
    let out = dir.path().join("t0");
    let r = romcim(&["train", "--net", p(&net), "--data", p(&data), "--weights", p(&w0), "--epochs", "0", "--out", p(&out)], None);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let before: WeightsFile = parse(&read(&w0), "w").unwrap();
    let after: WeightsFile = parse(&read(&out.join("weights.json")), "w").unwrap();
    assert_eq!(before, after);
    assert_eq!(read(&out.join("accuracy.csv")), "epoch,loss,acc\n");
}

#[test]
fn train_is_seeded_and_keeps_frozen_layers() {
    let dir = tempfile::tempdir().unwrap();
    let (net, data, w0) = train_fixture(dir.path());
    let run = |name: &str| {
        let out = dir.path().join(name);
        let r = romcim(
            &["train", "--net", p(&net), "--data", p(&data), "--weights", p(&w0), "--epochs", "5", "--seed", "3", "--batch-size", "8", "--out", p(&out)],
            None,
        );
        assert_eq!(r.code, 0, "{}", r.stderr);
        assert!(r.stderr.contains("frozen digest before") && r.stderr.contains("frozen digest after"));
        out
    };
    let (a, b) = (run("a"), run("b"));
    assert_eq!(read(&a.join("accuracy.csv")), read(&b.join("accuracy.csv")));
    assert_eq!(read(&a.join("accuracy.csv")).lines().count(), 6);
    let doc: TrainDoc = parse(&read(&a.join("train_report.json")), "t").unwrap();
    assert_eq!(doc.frozen_digest_before, doc.frozen_digest_after);
    assert_eq!(doc.trainable_params, 128);
    let before: WeightsFile = parse(&read(&w0), "w").unwrap();
    let after: WeightsFile = parse(&read(&a.join("weights.json")), "w").unwrap();
    assert_eq!(before.weights["c"], after.weights["c"]);
    assert_ne!(before.weights["head"], after.weights["head"]);
}

#[test]
fn train_rejects_weights_for_unknown_layers() {
    let dir = tempfile::tempdir().unwrap();
    let (net, data, _) = train_fixture(dir.path());
    let bogus = dir.path().join("bogus.json");
    let mut w = romcim_core::tensor::FloatWeights::new();
    w.insert("ghost".into(), romcim_core::tensor::FloatTensor::new(vec![1], vec![0.0]).unwrap());
    std::fs::write(&bogus, to_json(&WeightsFile::new(w)).unwrap()).unwrap();
    let r = romcim(&["train", "--net", p(&net), "--data", p(&data), "--weights", p(&bogus), "--out", p(&dir.path().join("x"))], None);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("weights.ghost"), "{}", r.stderr);
}

#[test]
fn compare_ratios() {
    let dir = tempfile::tempdir().unwrap();
    let net = write_net(dir.path(), &toy());
    let h = dir.path().join("h");
    assert_eq!(romcim(&["simulate", "--net", p(&net), "--out", p(&h)], None).code, 0);
    let same = dir.path().join("same");
    let r = romcim(&["compare", p(&h.join("report.json")), p(&h.join("report.json")), "--out", p(&same)], None);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(r.stdout.contains("energy_eff_ratio 1\n"));
    let doc: CompareDoc = parse(&read(&same.join("comparison.json")), "c").unwrap();
    assert_eq!((doc.comparison.energy_eff_ratio, doc.comparison.latency_ratio, doc.comparison.area_ratio), (1.0, 1.0, 1.0));
    // VGG-8 outgrows an iso-area SRAM chip and reloads from DRAM.
    let (vh, vs) = (dir.path().join("vh"), dir.path().join("vs"));
    assert_eq!(romcim(&["simulate", "--workload", "vgg8", "--out", p(&vh)], None).code, 0);
    assert_eq!(romcim(&["simulate", "--workload", "vgg8", "--config", "sram-single-chip", "--out", p(&vs)], None).code, 0);
    let hs = dir.path().join("hs");
    assert_eq!(romcim(&["compare", p(&vh.join("report.json")), p(&vs.join("report.json")), "--out", p(&hs)], None).code, 0);
    let doc: CompareDoc = parse(&read(&hs.join("comparison.json")), "c").unwrap();
    assert!(doc.comparison.energy_eff_ratio > 1.0);

    let mut other = toy();
    other.name = "other".into();
    other.layers[5] = LayerSpec::fc("fc", 256, 4);
    let other_dir = dir.path().join("other");
    std::fs::create_dir(&other_dir).unwrap();
    let onet = write_net(&other_dir, &other);
    let o = dir.path().join("o");
    assert_eq!(romcim(&["simulate", "--net", p(&onet), "--out", p(&o)], None).code, 0);
    let r = romcim(&["compare", p(&h.join("report.json")), p(&o.join("report.json")), "--out", p(&dir.path().join("x"))], None);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("workload mismatch"), "{}", r.stderr);
}

#[test]
fn map_emits_plan_and_utilization() {
    let dir = tempfile::tempdir().unwrap();
    let net = write_net(dir.path(), &toy());
    let mut latency = Vec::new();
    for packer in ["greedy", "naive"] {
        let out = dir.path().join(packer);
        let r = romcim(&["map", "--net", p(&net), "--packer", packer, "--out", p(&out)], None);
        assert_eq!(r.code, 0, "{}", r.stderr);
        let plan: PlanDoc = parse(&read(&out.join("plan.json")), "plan").unwrap();
        let doc: MapDoc = parse(&read(&out.join("report.json")), "map").unwrap();
        assert_eq!(plan.plan.assignments.len(), doc.tiles);
        assert!((0.0..=1.0).contains(&doc.utilization.adc_utilization));
        latency.push(doc.utilization.latency_cycles);
    }
    assert!(latency[0] <= latency[1]);
}
