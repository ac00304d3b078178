//! Argument parsing and the six subcommands.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use romcim_core::cim::MacroConfig;
use romcim_core::graph::{NetworkGraph, Placement};
use romcim_core::mapper::{evaluate_plan, pack_greedy, pack_naive, tile_network, Inventory, MappingPlan, UtilizationReport};
use romcim_core::rebranch::{apply_transforms, memory_report, BranchGroup, MemoryReport, SumPoint, TransformSpec};
use romcim_core::sysmodel::{
    compare, deploy_hybrid, deploy_rom_plain, deploy_sram, size_hybrid, subarrays_per_macro, Breakdown, Comparison, Prepared,
    SimReport, SystemConfig, SystemKind,
};
use romcim_core::train::{he_init, EpochRecord, TrainConfig, TrainState};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::formats::{read, to_json, CostFile, DatasetFile, NetFile, WeightsFile, SCHEMA_VERSION};
use crate::manifest::RunManifest;

#[derive(Debug, Parser)]
#[command(name = "romcim", version, about = "ROM compute-in-memory inference simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct OutArgs {
    /// Output directory. ROMCIM_OUT_DIR replaces the default.
    #[arg(long, env = "ROMCIM_OUT_DIR", default_value = "romcim-out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct NetArgs {
    /// Network file.
    #[arg(long, required_unless_present = "workload", conflicts_with = "workload")]
    pub net: Option<PathBuf>,
    /// Built-in workload: yolo, tiny-yolo, resnet18 or vgg8.
    #[arg(long)]
    pub workload: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Hybrid,
    SramSingleChip,
    SramChiplets,
}

impl From<Kind> for SystemKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Hybrid => SystemKind::Hybrid,
            Kind::SramSingleChip => SystemKind::SramSingleChip,
            Kind::SramChiplets => SystemKind::SramChiplets,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Cell {
    Rom,
    Sram,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Packer {
    Greedy,
    Naive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Deploy {
    /// Keep placements when every weight has one, otherwise `hybrid`.
    Auto,
    AsIs,
    Hybrid,
    Rom,
    Sram,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Sum {
    BeforeActivation,
    AfterActivation,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Energy, latency and area of one system running a network.
    Simulate {
        #[command(flatten)]
        net: NetArgs,
        /// Cost model file; built-in defaults otherwise.
        #[arg(long)]
        cost: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Kind::Hybrid)]
        config: Kind,
        /// Replaces the study seed of the cost file.
        #[arg(long)]
        seed: Option<u64>,
        /// Charge the power-on SRAM weight load to the inference.
        #[arg(long)]
        include_boot: bool,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Attach residual branches and report the memory split.
    Rebranch {
        #[arg(long)]
        net: PathBuf,
        #[arg(long = "D", default_value_t = 4)]
        d: usize,
        #[arg(long = "U", default_value_t = 4)]
        u: usize,
        /// Trunk convolutions of one branch, comma separated. Empty branches
        /// every eligible convolution on its own.
        #[arg(long, value_delimiter = ',')]
        group: Vec<String>,
        #[arg(long, value_enum, default_value_t = Sum::BeforeActivation)]
        sum_point: Sum,
        #[arg(long)]
        cost: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Fine-tune the trainable layers on a dataset.
    Train {
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Held-out dataset scored after training.
        #[arg(long)]
        test: Option<PathBuf>,
        /// Starting weights; missing layers are initialized from the seed.
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.01)]
        lr: f64,
        #[arg(long, default_value_t = 0.9)]
        momentum: f64,
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Tile and pack a network onto the smallest hybrid chip that holds it.
    Map {
        #[command(flatten)]
        net: NetArgs,
        #[arg(long)]
        cost: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Packer::Greedy)]
        packer: Packer,
        #[arg(long, value_enum, default_value_t = Deploy::Auto)]
        deploy: Deploy,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Ratios between two simulate reports of the same workload.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Density, throughput and efficiency of one macro.
    MacroStats {
        #[arg(long)]
        cost: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Cell::Rom)]
        cell: Cell,
        #[command(flatten)]
        out: OutArgs,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateDoc {
    pub schema_version: String,
    pub manifest: RunManifest,
    pub system: SystemConfig,
    pub report: SimReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchParams {
    pub trunk: Vec<String>,
    pub trunk_params: u64,
    pub res_conv_params: u64,
    /// `trunk_params / res_conv_params`.
    pub compression: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RebranchDoc {
    pub schema_version: String,
    pub manifest: RunManifest,
    pub before: MemoryReport,
    pub after: MemoryReport,
    pub branches: Vec<BranchGroup>,
    pub params: Vec<BranchParams>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Score {
    pub loss: f64,
    pub acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainDoc {
    pub schema_version: String,
    pub manifest: RunManifest,
    pub trainable_params: u64,
    pub frozen_digest_before: String,
    pub frozen_digest_after: String,
    pub curve: Vec<EpochRecord>,
    pub train: Score,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<Score>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanDoc {
    pub schema_version: String,
    pub manifest: RunManifest,
    pub system: SystemConfig,
    pub plan: MappingPlan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapDoc {
    pub schema_version: String,
    pub manifest: RunManifest,
    pub packer: String,
    pub system: SystemConfig,
    pub tiles: usize,
    pub utilization: UtilizationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareDoc {
    pub schema_version: String,
    pub manifest: RunManifest,
    pub comparison: Comparison,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MacroStatsDoc {
    pub schema_version: String,
    pub manifest: RunManifest,
    pub config: MacroConfig,
    pub stats: romcim_core::cim::MacroStats,
}

fn name_of<T: ValueEnum>(v: &T) -> String {
    v.to_possible_value().map(|p| p.get_name().to_string()).unwrap_or_default()
}

/// Writes `files` under `dir`, creating it first.
fn emit(dir: &Path, files: &[(&str, String)]) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
    for (name, body) in files {
        let p = dir.join(name);
        std::fs::write(&p, body).map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))?;
    }
    Ok(())
}

fn load_cost(path: Option<&Path>, m: &mut RunManifest) -> CliResult<CostFile> {
    match path {
        Some(p) => {
            m.input("cost", p)?;
            let f: CostFile = read(p)?;
            f.cost.validate()?;
            Ok(f)
        }
        None => Ok(CostFile::default()),
    }
}

fn load_net(args: &NetArgs, m: &mut RunManifest) -> CliResult<NetFile> {
    match (&args.net, &args.workload) {
        (Some(p), _) => {
            m.input("net", p)?;
            read(p)
        }
        (None, Some(w)) => {
            m.option("workload", w);
            let net = romcim_core::workloads::by_name(w).ok_or_else(|| {
                CliError::Validation(format!("unknown workload `{w}`; known: {}", romcim_core::workloads::NAMES.join(", ")))
            })?;
            Ok(NetFile::new(&net, Vec::new()))
        }
        (None, None) => Err(CliError::Validation("one of --net or --workload is required".into())),
    }
}

/// Unplaced weights go to ROM except the last parametric layer, which goes
/// to SRAM and trains.
fn fill_placements(net: &NetworkGraph) -> NetworkGraph {
    let mut out = net.clone();
    let last = out.layers.iter().rposition(|l| l.kind.is_parametric());
    for (i, l) in out.layers.iter_mut().enumerate() {
        if l.kind.is_parametric() && l.placement.is_none() {
            let sram = Some(i) == last;
            l.placement = Some(if sram { Placement::Sram } else { Placement::Rom });
            l.trainable = sram;
        }
    }
    out
}

fn breakdown_csv(r: &SimReport) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["layer", "component", "energy_j"])?;
    for l in &r.layers {
        for (c, v) in Breakdown::COMPONENTS.iter().zip(l.energy.values()) {
            w.write_record([l.layer.as_str(), c, &format!("{v:e}")])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Runtime(e.to_string()))
}

fn accuracy_csv(curve: &[EpochRecord]) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["epoch", "loss", "acc"])?;
    for r in curve {
        w.write_record([r.epoch.to_string(), format!("{:e}", r.loss), r.acc.to_string()])?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Runtime(e.to_string()))
}

fn simulate(net: &NetArgs, cost: Option<&Path>, config: Kind, seed: Option<u64>, include_boot: bool, out: &Path) -> CliResult<()> {
    let mut m = RunManifest::new("simulate", 0, out);
    let file = load_net(net, &mut m)?;
    let cf = load_cost(cost, &mut m)?;
    let mut study = cf.study;
    if let Some(s) = seed {
        study.seed = s;
    }
    study.options.include_boot |= include_boot;
    m.seed = study.seed;
    m.option("config", name_of(&config)).option("include_boot", study.options.include_boot);
    let cfg = cf.macro_config.clone().unwrap_or_else(MacroConfig::rom);
    // The network file is read as the base workload; the study builds each
    // deployment from it.
    let base = file.graph().base();
    let prepared = Prepared::new(&base, &cf.cost, &cfg, study)?;
    let s = prepared.simulate(&cf.cost, &cfg)?;
    let (system, report) = match config {
        Kind::Hybrid => (s.systems[0].clone(), s.hybrid),
        Kind::SramSingleChip => (s.systems[1].clone(), s.sram_single_chip),
        Kind::SramChiplets => (s.systems[2].clone(), s.sram_chiplets),
    };
    println!(
        "{} on {}: {:.6e} J, {:.6e} s, {:.4} mm², {:.6e} ops/J",
        report.workload,
        report.kind.as_str(),
        report.energy_j,
        report.latency_s,
        report.area_mm2,
        report.energy_efficiency_ops_per_j
    );
    let csv = breakdown_csv(&report)?;
    let doc = SimulateDoc { schema_version: SCHEMA_VERSION.into(), manifest: m.clone(), system, report };
    emit(out, &[("report.json", to_json(&doc)?), ("breakdown.csv", csv), ("manifest.json", to_json(&m)?)])
}

#[allow(clippy::too_many_arguments)]
fn rebranch(net: &Path, d: usize, u: usize, group: &[String], sum: Sum, cost: Option<&Path>, seed: u64, out: &Path) -> CliResult<()> {
    let mut m = RunManifest::new("rebranch", seed, out);
    m.input("net", net)?;
    let file: NetFile = read(net)?;
    let cf = load_cost(cost, &mut m)?;
    m.option("D", d).option("U", u).option("group", group.join(",")).option("sum_point", name_of(&sum));
    let sum_point = match sum {
        Sum::BeforeActivation => SumPoint::BeforeActivation,
        Sum::AfterActivation => SumPoint::AfterActivation,
    };
    let placed = fill_placements(&file.graph());
    let mut specs = file.transforms.clone();
    specs.push(TransformSpec::Rebranch { d, u, group: group.to_vec(), sum_point });
    let t = apply_transforms(&placed, &specs, seed)?;
    t.net.analyze()?;
    let (rc, sc) = (cf.cost.rom_cell_area_um2, cf.cost.sram_cell_area_um2);
    let params = t
        .branches
        .iter()
        .map(|b| {
            let count = |names: &[String]| -> CliResult<u64> {
                names.iter().map(|n| Ok(t.net.layer(n)?.param_count() as u64)).sum()
            };
            let (tp, rp) = (count(&b.trunk)?, count(&b.res_conv)?);
            Ok(BranchParams { trunk: b.trunk.clone(), trunk_params: tp, res_conv_params: rp, compression: tp as f64 / rp as f64 })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let doc = RebranchDoc {
        schema_version: SCHEMA_VERSION.into(),
        manifest: m.clone(),
        before: memory_report(&placed, rc, sc)?,
        after: memory_report(&t.net, rc, sc)?,
        branches: t.branches.clone(),
        params,
    };
    for p in &doc.params {
        println!("{}: trunk {} params, res_conv {} params, {}x", p.trunk.join("+"), p.trunk_params, p.res_conv_params, p.compression);
    }
    emit(
        out,
        &[
            ("net.json", to_json(&NetFile::new(&t.net, Vec::new()))?),
            ("weights.json", to_json(&WeightsFile::new(t.weights))?),
            ("memory_report.json", to_json(&doc)?),
            ("manifest.json", to_json(&m)?),
        ],
    )
}

#[allow(clippy::too_many_arguments)]
fn train(
    net: &Path,
    data: &Path,
    test: Option<&Path>,
    weights: Option<&Path>,
    epochs: usize,
    seed: u64,
    config: TrainConfig,
    out: &Path,
) -> CliResult<()> {
    let mut m = RunManifest::new("train", seed, out);
    m.input("net", net)?.input("data", data)?;
    let file: NetFile = read(net)?;
    let train_set = read::<DatasetFile>(data)?.dataset()?;
    let test_set = match test {
        Some(p) => {
            m.input("test", p)?;
            Some(read::<DatasetFile>(p)?.dataset()?)
        }
        None => None,
    };
    m.option("epochs", epochs)
        .option("lr", config.learning_rate)
        .option("momentum", config.momentum)
        .option("batch_size", config.batch_size);
    let t = apply_transforms(&file.graph(), &file.transforms, seed)?;
    let mut w = he_init(&t.net, seed);
    if let Some(p) = weights {
        m.input("weights", p)?;
        for (name, tensor) in read::<WeightsFile>(p)?.weights {
            if !w.contains_key(&name) {
                return Err(CliError::Validation(format!("{}: at `weights.{name}`: no such parametric layer", p.display())));
            }
            w.insert(name, tensor);
        }
    }
    w.extend(t.weights);
    let mut state = TrainState::new(t.net, w, config)?;
    let trainable_params: u64 = state.net().parametric().filter(|l| l.trainable).map(|l| l.param_count() as u64).sum();
    let before = hex::encode(state.frozen_digest());
    eprintln!("frozen digest before: {before}");
    let curve = state.fine_tune(&train_set, epochs)?;
    let after = hex::encode(state.frozen_digest());
    eprintln!("frozen digest after:  {after}");
    if before != after {
        return Err(CliError::Runtime("frozen weights changed during training".into()));
    }
    let (loss, acc) = state.evaluate(&train_set)?;
    let test = test_set.as_ref().map(|d| state.evaluate(d)).transpose()?.map(|(loss, acc)| Score { loss, acc });
    println!("train acc {acc:.4}{}", test.map(|s| format!(", test acc {:.4}", s.acc)).unwrap_or_default());
    let doc = TrainDoc {
        schema_version: SCHEMA_VERSION.into(),
        manifest: m.clone(),
        trainable_params,
        frozen_digest_before: before,
        frozen_digest_after: after,
        curve: curve.clone(),
        train: Score { loss, acc },
        test,
    };
    let (_, trained) = state.into_parts();
    emit(
        out,
        &[
            ("weights.json", to_json(&WeightsFile::new(trained))?),
            ("accuracy.csv", accuracy_csv(&curve)?),
            ("train_report.json", to_json(&doc)?),
            ("manifest.json", to_json(&m)?),
        ],
    )
}

fn map(net: &NetArgs, cost: Option<&Path>, packer: Packer, deploy: Deploy, seed: u64, out: &Path) -> CliResult<()> {
    let mut m = RunManifest::new("map", seed, out);
    let file = load_net(net, &mut m)?;
    let cf = load_cost(cost, &mut m)?;
    m.option("packer", name_of(&packer)).option("deploy", name_of(&deploy));
    let cfg = cf.macro_config.clone().unwrap_or_else(MacroConfig::rom);
    let g = apply_transforms(&file.graph(), &file.transforms, seed)?.net;
    let all_placed = g.parametric().all(|l| l.placement.is_some());
    let g = match deploy {
        Deploy::AsIs => g,
        Deploy::Auto if all_placed => g,
        Deploy::Auto | Deploy::Hybrid => deploy_hybrid(&g.base(), cf.study.d, cf.study.u, seed)?,
        Deploy::Rom => deploy_rom_plain(&g.base()),
        Deploy::Sram => deploy_sram(&g.base()),
    };
    let (system, _) = size_hybrid(&g, 1, &cf.cost, &cfg)?;
    let inv = Inventory::uniform(1, system.rom_macros, system.sram_macros, subarrays_per_macro(&cf.cost, &cfg));
    let tiles = tile_network(&g, &cfg)?;
    let plan = match packer {
        Packer::Greedy => pack_greedy(&tiles, &inv, &g, &cfg)?,
        Packer::Naive => pack_naive(&tiles, &inv, &cfg)?,
    };
    let utilization = evaluate_plan(&plan, &g, &cfg, &cf.study.options.eval)?;
    println!(
        "{} tiles on {} ROM + {} SRAM macros: {} cycles, ADC utilization {:.4}",
        tiles.len(),
        system.rom_macros,
        system.sram_macros,
        utilization.latency_cycles,
        utilization.adc_utilization
    );
    let plan_doc = PlanDoc { schema_version: SCHEMA_VERSION.into(), manifest: m.clone(), system: system.clone(), plan };
    let doc = MapDoc {
        schema_version: SCHEMA_VERSION.into(),
        manifest: m.clone(),
        packer: name_of(&packer),
        system,
        tiles: tiles.len(),
        utilization,
    };
    emit(out, &[("plan.json", to_json(&plan_doc)?), ("report.json", to_json(&doc)?), ("manifest.json", to_json(&m)?)])
}

fn compare_reports(a: &Path, b: &Path, out: &Path) -> CliResult<()> {
    let mut m = RunManifest::new("compare", 0, out);
    m.input("a", a)?.input("b", b)?;
    let (ra, rb): (SimulateDoc, SimulateDoc) = (read(a)?, read(b)?);
    let comparison = compare(&ra.report, &rb.report)?;
    println!("workload {}: {} vs {}", comparison.workload, comparison.a.as_str(), comparison.b.as_str());
    println!("energy_eff_ratio {}", comparison.energy_eff_ratio);
    println!("latency_ratio {}", comparison.latency_ratio);
    println!("area_ratio {}", comparison.area_ratio);
    let doc = CompareDoc { schema_version: SCHEMA_VERSION.into(), manifest: m.clone(), comparison };
    emit(out, &[("comparison.json", to_json(&doc)?), ("manifest.json", to_json(&m)?)])
}

fn macro_stats(cost: Option<&Path>, cell: Cell, out: &Path) -> CliResult<()> {
    let mut m = RunManifest::new("macro-stats", 0, out);
    let cf = load_cost(cost, &mut m)?;
    m.option("cell", name_of(&cell));
    let config = cf.macro_config.clone().unwrap_or_else(|| match cell {
        Cell::Rom => MacroConfig::rom(),
        Cell::Sram => MacroConfig::sram(),
    });
    let stats = config.stats()?;
    println!("capacity {} Mb", stats.capacity_mb);
    println!("density {} Mb/mm²", stats.density_mb_per_mm2);
    println!("throughput {} GOPS", stats.gops);
    println!("area efficiency {} GOPS/mm²", stats.area_eff_gops_per_mm2);
    println!("standby {} W", stats.standby_power_w);
    let doc = MacroStatsDoc { schema_version: SCHEMA_VERSION.into(), manifest: m.clone(), config, stats };
    emit(out, &[("stats.json", to_json(&doc)?), ("manifest.json", to_json(&m)?)])
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate { net, cost, config, seed, include_boot, out } => {
            simulate(&net, cost.as_deref(), config, seed, include_boot, &out.out)
        }
        Command::Rebranch { net, d, u, group, sum_point, cost, seed, out } => {
            rebranch(&net, d, u, &group, sum_point, cost.as_deref(), seed, &out.out)
        }
        Command::Train { net, data, test, weights, epochs, seed, lr, momentum, batch_size, out } => {
            let config = TrainConfig { learning_rate: lr, momentum, batch_size, seed };
            train(&net, &data, test.as_deref(), weights.as_deref(), epochs, seed, config, &out.out)
        }
        Command::Map { net, cost, packer, deploy, seed, out } => map(&net, cost.as_deref(), packer, deploy, seed, &out.out),
        Command::Compare { a, b, out } => compare_reports(&a, &b, &out.out),
        Command::MacroStats { cost, cell, out } => macro_stats(cost.as_deref(), cell, &out.out),
    }
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
