//! `seq4d`: synthetic scenes, sequence generation, pre-training, and checks.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use seq4d_core::config::RunConfig;
use seq4d_core::geom::{io, is_object_id, PointCloud};
use seq4d_core::gradcheck::{gradcheck, GradcheckOptions};
use seq4d_core::seqgen::{build_correspondences, format, generate_dataset, SceneInput, Sequence};
use seq4d_core::synth::{free_floor_area, generate_object, generate_room, ObjectKind, RoomParams};
use seq4d_core::trainer::{export_backbone, pretrain, probe, StepLog, Weights};
use seq4d_core::Error;

#[derive(Parser)]
#[command(name = "seq4d", version, about = "4D sequence generation and 3D/4D contrastive pre-training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write procedural rooms and objects as XYZ files under `rooms/` and `objects/`.
    Synth {
        #[arg(long)]
        rooms: usize,
        #[arg(long)]
        objects: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Surface samples per object before per-sequence subsampling.
        #[arg(long, default_value_t = 2000)]
        object_points: usize,
        /// Smaller rooms with lower walls.
        #[arg(long)]
        compact: bool,
    },
    /// Generate and validate sequences from scene and object clouds.
    Gen {
        #[arg(long)]
        scenes: PathBuf,
        #[arg(long)]
        objects: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        per_scene: Option<usize>,
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// `key = value` file; only `gen.*` keys matter here.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Pre-train both encoders on a directory of sequences.
    Pretrain {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Training log; defaults to the checkpoint path with a `.tsv` extension.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Extra `key=value` overrides applied after the config file.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compare analytic and finite-difference gradients of every loss term.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Consecutive seeds to check, starting at `--seed`.
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
    },
    /// Feature similarity of corresponding versus random point pairs.
    Probe {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 2000)]
        pairs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Per-point 3D features of a frame (or of every frame of a sequence).
    Export {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        frame: PathBuf,
        /// `.ply` or `.csv`; sequences produce one file per frame.
        #[arg(long)]
        out: PathBuf,
        /// Also write the 3D backbone weights alone.
        #[arg(long)]
        weights_out: Option<PathBuf>,
    },
    /// Summarize a sequence file.
    Inspect {
        #[arg(long)]
        seq: PathBuf,
        /// Write one provenance-colored PLY per frame here.
        #[arg(long)]
        ply: Option<PathBuf>,
    },
}

struct Failure {
    code: u8,
    kind: &'static str,
    msg: String,
}

impl Failure {
    fn usage(msg: impl Into<String>) -> Self {
        Self { code: 2, kind: "usage", msg: msg.into() }
    }

    fn data(msg: impl Into<String>) -> Self {
        Self { code: 3, kind: "data", msg: msg.into() }
    }

    fn check(msg: impl Into<String>) -> Self {
        Self { code: 4, kind: "check", msg: msg.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Config(_) | Error::InvalidArgument(_) => Failure::usage(msg),
            Error::NonFinite { .. } => Failure::check(msg),
            _ => Failure::data(msg),
        }
    }
}

type CliResult<T = ()> = std::result::Result<T, Failure>;

/// Attaches a path to errors from reading or writing it.
fn at<T>(path: &Path, r: seq4d_core::Result<T>) -> CliResult<T> {
    r.map_err(|e| {
        let mut f = Failure::from(e);
        f.msg = format!("{}: {}", path.display(), f.msg);
        f
    })
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> CliResult {
    at(path, fs::write(path, bytes).map_err(Error::from))
}

fn read_file(path: &Path) -> CliResult<Vec<u8>> {
    at(path, fs::read(path).map_err(Error::from))
}

fn create_dir(path: &Path) -> CliResult {
    at(path, fs::create_dir_all(path).map_err(Error::from))
}

/// `.xyz` and `.ply` files in a directory, sorted by name.
fn cloud_files(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let entries = at(dir, fs::read_dir(dir).map_err(Error::from))?;
    let mut files = Vec::new();
    for e in entries {
        let p = at(dir, e.map_err(Error::from))?.path();
        let ext = p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if matches!(ext.as_deref(), Some("xyz" | "ply")) {
            files.push(p);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(Failure::data(format!("{}: no .xyz or .ply files", dir.display())));
    }
    Ok(files)
}

fn load_clouds(dir: &Path) -> CliResult<Vec<SceneInput>> {
    cloud_files(dir)?
        .iter()
        .enumerate()
        .map(|(i, p)| {
            Ok(SceneInput {
                id: i as u64,
                cloud: at(p, io::read_cloud(p))?,
            })
        })
        .collect()
}

fn load_sequences(dir: &Path) -> CliResult<Vec<Sequence>> {
    let files = at(dir, format::list_dir(dir))?;
    if files.is_empty() {
        return Err(Failure::data(format!("{}: no .4dc sequences", dir.display())));
    }
    files.iter().map(|p| at(p, format::load(p))).collect()
}

fn load_config(path: Option<&Path>) -> CliResult<RunConfig> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = at(p, fs::read_to_string(p).map_err(Error::from))?;
            at(p, RunConfig::from_text(&text))
        }
    }
}

fn cmd_synth(rooms: usize, objects: usize, out: &Path, seed: u64, object_points: usize, compact: bool) -> CliResult {
    if rooms == 0 || objects == 0 {
        return Err(Failure::usage("--rooms and --objects must be at least 1"));
    }
    let (room_dir, object_dir) = (out.join("rooms"), out.join("objects"));
    create_dir(&room_dir)?;
    create_dir(&object_dir)?;
    let params = if compact { RoomParams::compact() } else { RoomParams::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..rooms {
        let room = generate_room(&params, &mut rng);
        let path = room_dir.join(format!("room_{i:03}.xyz"));
        at(&path, io::save_xyz(&path, &room))?;
        log::info!("{}: {} points, free floor {:.1} m2", path.display(), room.len(), free_floor_area(&room, 0.1));
    }
    for j in 0..objects {
        let kind = ObjectKind::ALL[j % ObjectKind::ALL.len()];
        let obj = generate_object(kind, object_points, &mut rng);
        let path = object_dir.join(format!("object_{j:03}_{}.xyz", kind.name()));
        at(&path, io::save_xyz(&path, &obj))?;
    }
    println!("rooms={rooms} objects={objects} out={}", out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_gen(
    scenes: &Path,
    objects: &Path,
    out: &Path,
    per_scene: Option<usize>,
    frames: Option<usize>,
    seed: u64,
    workers: usize,
    config: Option<&Path>,
) -> CliResult {
    let mut params = load_config(config)?.gen;
    if let Some(n) = per_scene {
        params.per_scene = n;
    }
    if let Some(t) = frames {
        params.frames = t;
    }
    let scenes = load_clouds(scenes)?;
    let objects = load_clouds(objects)?;
    let report = at(out, generate_dataset(&scenes, &objects, &params, seed, workers, out))?;
    println!(
        "accepted={} trajectory_failures={} validation_rejects={} no_candidates={} skipped_scenes={}",
        report.accepted,
        report.trajectory_failures,
        report.validation_rejects,
        report.no_candidates,
        report.skipped_scenes.len()
    );
    Ok(())
}

fn cmd_pretrain(
    data: &Path,
    config: Option<&Path>,
    out: &Path,
    log: Option<&Path>,
    overrides: &[String],
    steps: Option<usize>,
    seed: Option<u64>,
) -> CliResult {
    let mut run = load_config(config)?;
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Failure::usage(format!("--set expects KEY=VALUE, got {o:?}")))?;
        run.set(k.trim(), v.trim())?;
    }
    if let Some(s) = steps {
        run.train.steps = s;
    }
    if let Some(s) = seed {
        run.train.seed = s;
    }
    run.train.validate()?;
    let seqs = load_sequences(data)?;
    let log_path = log.map(Path::to_path_buf).unwrap_or_else(|| out.with_extension("tsv"));
    let mut log_file = at(&log_path, fs::File::create(&log_path).map_err(Error::from))?;
    let mut io_err = None;
    let mut write_line = |line: &str| {
        if io_err.is_none() {
            io_err = writeln!(log_file, "{line}").err();
        }
    };
    write_line(StepLog::HEADER);
    let total = run.train.steps;
    let result = pretrain(&seqs, &run.train, |l| {
        write_line(&l.tsv());
        if l.step == 1 || l.step % 50 == 0 || l.step == total {
            log::info!("step {} total {:.4}", l.step, l.report.total);
        }
    });
    if let Some(e) = io_err {
        return Err(Failure::data(format!("{}: {e}", log_path.display())));
    }
    let (mut ckpt, logs) = result?;
    ckpt.config_text = run.to_text();
    write_file(out, ckpt.encode())?;
    write_file(&out.with_extension("cfg"), run.to_text())?;
    let last = logs.last().map_or(f64::NAN, |l| l.report.total);
    let batch = run.train.effective_batch(seqs[0].len())?;
    println!("steps={} batch={batch} final_total={last} out={}", ckpt.step, out.display());
    Ok(())
}

fn cmd_gradcheck(seed: u64, seeds: u64, tol: f64) -> CliResult {
    let opts = GradcheckOptions::default();
    let mut worst = 0.0f64;
    for s in seed..seed + seeds {
        for c in gradcheck(s, &opts, &Default::default())? {
            let ok = c.max_rel <= tol;
            println!(
                "seed={s} term={} checked={} max_rel={:e} {}",
                c.term,
                c.checked,
                c.max_rel,
                if ok { "ok" } else { "FAIL" }
            );
            worst = worst.max(c.max_rel);
        }
    }
    if worst > tol {
        return Err(Failure::check(format!("gradient check failed: max relative error {worst:e} > {tol:e}")));
    }
    Ok(())
}

fn load_weights(path: &Path) -> CliResult<Weights> {
    let buf = read_file(path)?;
    at(path, Weights::decode(&buf))
}

fn cmd_probe(ckpt: &Path, data: &Path, pairs: usize, seed: u64) -> CliResult {
    let w = load_weights(ckpt)?;
    let seqs = load_sequences(data)?;
    let r = probe(|v| w.features(v), w.voxel(), &seqs, pairs, seed)?;
    println!(
        "corresponding={} random={} margin={} pairs={}",
        r.corresponding, r.random, r.margin, r.pairs
    );
    Ok(())
}

fn write_features(path: &Path, cloud: &PointCloud, feats: &[&[f64]]) -> CliResult {
    let c = feats.first().map_or(0, |f| f.len());
    let mut s = String::new();
    let csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if csv {
        s.push_str("x,y,z");
        for k in 0..c {
            let _ = write!(s, ",f{k}");
        }
        s.push('\n');
    } else {
        let _ = write!(s, "ply\nformat ascii 1.0\nelement vertex {}\n", cloud.len());
        s.push_str("property float x\nproperty float y\nproperty float z\n");
        for k in 0..c {
            let _ = writeln!(s, "property float f{k}");
        }
        s.push_str("end_header\n");
    }
    let sep = if csv { "," } else { " " };
    for (p, f) in cloud.points.iter().zip(feats) {
        let _ = write!(s, "{}{sep}{}{sep}{}", p[0] as f32, p[1] as f32, p[2] as f32);
        for v in f.iter() {
            let _ = write!(s, "{sep}{}", *v as f32);
        }
        s.push('\n');
    }
    write_file(path, s)
}

fn cmd_export(ckpt: &Path, frame: &Path, out: &Path, weights_out: Option<&Path>) -> CliResult {
    let w = load_weights(ckpt)?;
    if let Some(p) = weights_out {
        let Weights::Full(c) = &w else {
            return Err(Failure::usage("--weights-out needs a full checkpoint"));
        };
        write_file(p, export_backbone(c))?;
    }
    let is_seq = frame.extension().is_some_and(|e| e == "4dc");
    let views: Vec<PointCloud> = if is_seq {
        at(frame, format::load(frame))?.frames.iter().map(|f| f.view_3d()).collect()
    } else {
        vec![at(frame, io::read_cloud(frame))?]
    };
    let feats = w.features(&views)?;
    let ext = out.extension().and_then(|e| e.to_str()).unwrap_or("ply").to_string();
    for (i, v) in views.iter().enumerate() {
        let rows = seq4d_core::nets::gather_rows(&feats.coords, &v.points, w.voxel(), i as i32, 0)?;
        let f: Vec<&[f64]> = rows.iter().map(|&r| feats.feats.row(r as usize)).collect();
        let path = if is_seq {
            let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("frame");
            out.with_file_name(format!("{stem}_f{i}.{ext}"))
        } else {
            out.to_path_buf()
        };
        write_features(&path, v, &f)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn cmd_inspect(seq_path: &Path, ply: Option<&Path>) -> CliResult {
    let seq = at(seq_path, format::load(seq_path))?;
    let corr = build_correspondences(&seq);
    println!("frames {}", seq.frames.len());
    println!(
        "scene_points {} object_points {}",
        seq.stats.scene_points, seq.stats.object_points
    );
    for (i, f) in seq.frames.iter().enumerate() {
        let objects = f.ids().iter().filter(|&&id| is_object_id(id)).count();
        println!(
            "frame {i} points {} scene {} object {objects} matched {}",
            f.cloud.len(),
            f.cloud.len() - objects,
            corr.per_frame[i].len()
        );
    }
    for (&(i, j), pairs) in &corr.pair_maps {
        println!("pair {i} {j} correspondences {}", pairs.len());
    }
    if let Some(dir) = ply {
        create_dir(dir)?;
        // Object red, scene points seen in every frame gray, other scene points blue.
        let t = seq.frames.len();
        let mut seen = std::collections::HashMap::<u32, usize>::new();
        for f in &seq.frames {
            for &id in f.ids() {
                *seen.entry(id).or_default() += 1;
            }
        }
        for (i, f) in seq.frames.iter().enumerate() {
            let colors: Vec<[u8; 3]> = f
                .ids()
                .iter()
                .map(|id| match () {
                    _ if is_object_id(*id) => [220, 40, 40],
                    _ if seen[id] == t => [160, 160, 160],
                    _ => [60, 90, 220],
                })
                .collect();
            let path = dir.join(format!("frame_{i}.ply"));
            let mut buf = Vec::new();
            at(&path, io::write_ply(&mut buf, &f.cloud, Some(&colors)))?;
            write_file(&path, buf)?;
        }
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Synth {
            rooms,
            objects,
            out,
            seed,
            object_points,
            compact,
        } => cmd_synth(rooms, objects, &out, seed, object_points, compact),
        Command::Gen {
            scenes,
            objects,
            out,
            per_scene,
            frames,
            seed,
            workers,
            config,
        } => cmd_gen(&scenes, &objects, &out, per_scene, frames, seed, workers, config.as_deref()),
        Command::Pretrain {
            data,
            config,
            out,
            log,
            overrides,
            steps,
            seed,
        } => cmd_pretrain(&data, config.as_deref(), &out, log.as_deref(), &overrides, steps, seed),
        Command::Gradcheck { seed, seeds, tol } => cmd_gradcheck(seed, seeds, tol),
        Command::Probe { ckpt, data, pairs, seed } => cmd_probe(&ckpt, &data, pairs, seed),
        Command::Export {
            ckpt,
            frame,
            out,
            weights_out,
        } => cmd_export(&ckpt, &frame, &out, weights_out.as_deref()),
        Command::Inspect { seq, ply } => cmd_inspect(&seq, ply.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("error[usage]: {}", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error[{}]: {}", f.kind, f.msg.replace('\n', " "));
            ExitCode::from(f.code)
        }
    }
}
