use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use hallunav::bench::{aggregate_report, generate_worlds, load_arms, load_worlds, run_suite, world_file_name, WorldGenParams};
use hallunav::datagen::{read_raw, run_exploration, write_raw, ExplorationParams, Preset};
use hallunav::halluc::{
    digest_records, read_train, synthesize_dataset, synthesize_most_constrained, write_train, HallucinationMode,
    HallucinationParams, TrainHeader, TRAIN_SCHEMA,
};
use hallunav::learn::{train, FeatureLayout, Hyper, Policy};
use hallunav::nav::{navigate_episode_traced, DwaParams, NavConfig, PlannerKind};
use hallunav::sim::{Limits, SensorConfig, World};
use hallunav::Error;

#[derive(Parser)]
#[command(name = "hallunav", about = "Hallucinated-obstacle training and navigation benchmark")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Varying,
    Constant04,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Minimal,
    MostConstrained,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlannerArg {
    Hlsd,
    Lfh,
    Dwa,
}

#[derive(Subcommand)]
enum Cmd {
    /// Random exploration in free space.
    Explore {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 505.0)]
        duration: f64,
        #[arg(long, value_enum, default_value = "varying")]
        preset: PresetArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Synthesize a training set from a raw log.
    Hallucinate {
        #[arg(long)]
        raw: PathBuf,
        #[arg(long, value_enum, default_value = "minimal")]
        mode: ModeArg,
        #[arg(long, default_value_t = 10)]
        sampling_count: usize,
        #[arg(long, default_value_t = 0.48)]
        alpha: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the planner network.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 50)]
        epochs: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long, default_value_t = 128)]
        batch: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Feed zeros in place of the current velocity.
        #[arg(long)]
        no_vel_input: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate benchmark worlds.
    Genworlds {
        #[arg(long, default_value_t = 30)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.4)]
        density: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one episode.
    Navigate {
        #[arg(long)]
        world: PathBuf,
        #[arg(long, value_enum)]
        planner: PlannerArg,
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        speed_cap: Option<f64>,
        #[arg(long, default_value_t = 60.0)]
        timeout: f64,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run every arm on every world and write table.txt and results.csv.
    Bench {
        #[arg(long)]
        worlds: PathBuf,
        #[arg(long)]
        arms: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 60.0)]
        timeout: f64,
        /// Concurrent episodes; defaults to the available cores.
        #[arg(long)]
        workers: Option<usize>,
    },
}

fn explore(seed: u64, duration: f64, preset: PresetArg, out: PathBuf) -> anyhow::Result<()> {
    let preset = match preset {
        PresetArg::Varying => Preset::Varying,
        PresetArg::Constant04 => Preset::Constant04,
    };
    let params = ExplorationParams::preset(preset, seed, duration);
    params.validate(&Limits::default())?;
    let records = run_exploration(&params);
    write_raw(BufWriter::new(File::create(&out).with_context(|| format!("creating {}", out.display()))?), &params, &records)?;
    eprintln!("wrote {} records to {}", records.len(), out.display());
    Ok(())
}

fn hallucinate(raw: PathBuf, mode: ModeArg, sampling_count: usize, alpha: f64, seed: u64, out: PathBuf) -> anyhow::Result<()> {
    let (_, records) = read_raw(BufReader::new(File::open(&raw).map_err(Error::from)?))?;
    let params = HallucinationParams { sampling_count, alpha, ..Default::default() };
    let sensor = SensorConfig::default();
    let (mode, samples) = match mode {
        ModeArg::Minimal => (HallucinationMode::Minimal, synthesize_dataset(&records, &sensor, &params, seed)?),
        ModeArg::MostConstrained => {
            (HallucinationMode::MostConstrained, synthesize_most_constrained(&records, &sensor, &params)?)
        }
    };
    let header = TrainHeader {
        schema: TRAIN_SCHEMA.to_string(),
        mode,
        params,
        sensor,
        seed,
        source_digest: digest_records(&records),
        samples: samples.len(),
    };
    write_train(BufWriter::new(File::create(&out).map_err(Error::from)?), &header, &samples)?;
    eprintln!("wrote {} samples to {}", samples.len(), out.display());
    Ok(())
}

fn train_cmd(
    data: PathBuf,
    epochs: usize,
    lr: f64,
    batch: usize,
    seed: u64,
    no_vel_input: bool,
    out: PathBuf,
) -> anyhow::Result<()> {
    let (header, samples) = read_train(BufReader::new(File::open(&data).map_err(Error::from)?))?;
    let hyper = Hyper {
        learning_rate: lr,
        batch_size: batch,
        epochs,
        seed,
        layout: FeatureLayout { use_velocity: !no_vel_input, ..Default::default() },
        ..Default::default()
    };
    let outcome = train::<f32>(&samples, &hyper)?;
    if let Some(last) = outcome.loss_trace.last() {
        eprintln!("final epoch loss {last:.6}");
    }
    let digest = format!("{}:{}", header.source_digest, header.samples);
    Policy::new(outcome.net, hyper, digest, outcome.loss_trace).save(&out)?;
    eprintln!("wrote {}", out.display());
    Ok(())
}

fn genworlds(count: usize, seed: u64, density: f64, out: PathBuf) -> anyhow::Result<()> {
    let worlds = generate_worlds(&WorldGenParams { density, ..WorldGenParams::new(seed) }, count)?;
    fs::create_dir_all(&out).map_err(Error::from)?;
    for (i, w) in worlds.iter().enumerate() {
        w.save(out.join(world_file_name(i)))?;
    }
    eprintln!("wrote {} worlds to {}", worlds.len(), out.display());
    Ok(())
}

fn load_policy(weights: Option<PathBuf>) -> anyhow::Result<Arc<Policy>> {
    let path = weights.ok_or_else(|| Error::InvalidConfig("learned planners need --weights".into()))?;
    Ok(Arc::new(Policy::load(path)?))
}

fn navigate(
    world: PathBuf,
    planner: PlannerArg,
    weights: Option<PathBuf>,
    speed_cap: Option<f64>,
    timeout: f64,
    trace: Option<PathBuf>,
) -> anyhow::Result<()> {
    let world = World::load(&world)?;
    let planner = match planner {
        PlannerArg::Hlsd => PlannerKind::Hlsd(load_policy(weights)?),
        PlannerArg::Lfh => PlannerKind::Lfh(load_policy(weights)?),
        PlannerArg::Dwa => PlannerKind::Dwa(DwaParams::default()),
    };
    let mut cfg = NavConfig::new(planner);
    cfg.speed_cap = speed_cap;
    let mut steps = Vec::new();
    let result = navigate_episode_traced(&world, &cfg, timeout, trace.is_some().then_some(&mut steps))?;
    if let Some(path) = trace {
        let mut w = BufWriter::new(File::create(&path).map_err(Error::from)?);
        for s in &steps {
            serde_json::to_writer(&mut w, s)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
    }
    println!(
        "success={} time={} collisions={} recoveries={} path_length={:.3}",
        result.success, result.time, result.collisions, result.recovery_invocations, result.path_length
    );
    Ok(())
}

fn bench(worlds: PathBuf, arms: PathBuf, out: PathBuf, timeout: f64, workers: Option<usize>) -> anyhow::Result<()> {
    let worlds = load_worlds(&worlds)?;
    if worlds.is_empty() {
        return Err(Error::InvalidConfig("no worlds found".into()).into());
    }
    let arms = load_arms(&arms)?;
    let workers = workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let report = run_suite(&worlds, &arms, timeout, workers)?;
    let rendered = aggregate_report(&report);
    fs::create_dir_all(&out).map_err(Error::from)?;
    fs::write(out.join("table.txt"), &rendered.table).map_err(Error::from)?;
    fs::write(out.join("results.csv"), &rendered.csv).map_err(Error::from)?;
    print!("{}", rendered.table);
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::NoPath | Error::Infeasible { .. }) => 3,
        Some(Error::NonFiniteLoss { .. }) => 4,
        Some(_) => 2,
        None => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Explore { seed, duration, preset, out } => explore(seed, duration, preset, out),
        Cmd::Hallucinate { raw, mode, sampling_count, alpha, seed, out } => {
            hallucinate(raw, mode, sampling_count, alpha, seed, out)
        }
        Cmd::Train { data, epochs, lr, batch, seed, no_vel_input, out } => {
            train_cmd(data, epochs, lr, batch, seed, no_vel_input, out)
        }
        Cmd::Genworlds { count, seed, density, out } => genworlds(count, seed, density, out),
        Cmd::Navigate { world, planner, weights, speed_cap, timeout, trace } => {
            navigate(world, planner, weights, speed_cap, timeout, trace)
        }
        Cmd::Bench { worlds, arms, out, timeout, workers } => bench(worlds, arms, out, timeout, workers),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
