//! Subcommand implementations. Every command writes a run manifest next to
//! its outputs; identical invocations reproduce identical bytes.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use isonca_core::graph::{
    build_voronoi_adjacency, graph_nca_step, poisson_disk_sample, seed_irregular, GraphSeed,
};
use isonca_core::loss::{alignment_profile, PolarConfig};
use isonca_core::train::Trainer;
use isonca_core::{
    init_params, init_single_seed, init_structured_seed, make_uniform_circle_seed, nca_step,
    Grid, Numerics, RuleParams, StepMode, StepRng, Stream, StructuredSeed, TargetSpec, D4,
};

use crate::checkpoint;
use crate::config::{
    apply_edits, GraphJson, SeedConfig, SeedEdit, SeedFile, StrategyJson, TargetConfig,
    TrainRunConfig,
};
use crate::error::CliError;
use crate::manifest::{digest_file, RunManifest};
use crate::pngio;

pub struct CommonOpts {
    pub out_dir: PathBuf,
    pub rng_seed: u64,
    pub argv: Vec<String>,
}

fn frame_name(step: usize) -> String {
    format!("frame_{step:06}.png")
}

fn load_target(cfg: &TargetConfig, base_dir: &Path) -> Result<TargetSpec<f32>, CliError> {
    let image_path = if cfg.image.is_relative() {
        base_dir.join(&cfg.image)
    } else {
        cfg.image.clone()
    };
    let bytes = fs::read(&image_path).map_err(|e| {
        CliError::config(format!("cannot read target image {}: {e}", image_path.display()))
    })?;
    pngio::prepare_target(&bytes, cfg.pad, &cfg.aux_kinds()?)
}

fn build_seed_grid(
    seed: &SeedConfig,
    base_dir: &Path,
    height: usize,
    width: usize,
    channels: usize,
) -> Result<(Grid<f32>, Option<StructuredSeed<f32>>), CliError> {
    match seed {
        SeedConfig::Single => Ok((init_single_seed(height, width, channels)?, None)),
        SeedConfig::Circle { n_points, radius } => {
            let s = make_uniform_circle_seed(*n_points, *radius, channels)?;
            Ok((init_structured_seed(height, width, &s, channels)?, Some(s)))
        }
        SeedConfig::File { path } => {
            let path = if path.is_relative() { base_dir.join(path) } else { path.clone() };
            let file = SeedFile::load(&path)?;
            let s: StructuredSeed<f32> = file.to_seed();
            Ok((init_structured_seed(height, width, &s, channels)?, Some(s)))
        }
    }
}

/// `isonca train --config <json>`: checkpoints at a stride plus metrics.csv.
pub fn cmd_train(config_path: &Path, opts: &CommonOpts) -> Result<(), CliError> {
    let cfg = TrainRunConfig::load(config_path)?;
    let base_dir = config_path.parent().unwrap_or(Path::new("."));
    let target = load_target(&cfg.target, base_dir)?;
    let (h, w) = (target.height(), target.width());
    let polar = cfg.target.polar_config(h.max(w));

    if cfg.strategy == StrategyJson::SingleSeed && cfg.target.aux.is_empty() {
        eprintln!(
            "warning: single-seed training without auxiliary channels can fail to break \
             pattern symmetries (e.g. head-tail); consider adding \"binary\" or radial aux"
        );
    }

    let (seed_grid, _) =
        build_seed_grid(&cfg.seed, base_dir, h, w, cfg.model.channels)?;
    let mut stream = Stream::new(cfg.train.rng_seed);
    let mut params: RuleParams<f32> =
        init_params(cfg.model.channels, cfg.model.hidden, &mut stream);
    params.p_upd = cfg.model.p_upd;

    let mut train_config = cfg.train_config();
    train_config.seed = cfg.train.rng_seed;

    fs::create_dir_all(&opts.out_dir)?;
    RunManifest {
        command: "train".into(),
        argv: opts.argv.clone(),
        config_digest: Some(digest_file(config_path)?),
        rng_seed: cfg.train.rng_seed,
        checkpoint: None,
        out_dir: opts.out_dir.clone(),
        frame_stride: None,
    }
    .write(&opts.out_dir)?;

    let total = train_config.total_steps;
    let mut trainer = Trainer::new(train_config, params, target, polar, seed_grid)?;
    checkpoint::save(&opts.out_dir.join("ckpt_000000.bin"), &trainer.params, None)?;

    let metrics_path = opts.out_dir.join("metrics.csv");
    let mut metrics = fs::File::create(&metrics_path)?;
    writeln!(metrics, "step,loss,pool_resets,theta_star_bin")?;

    for _ in 0..total {
        let m = trainer.step()?;
        let theta = m.theta_bin.map(|b| b as i64).unwrap_or(-1);
        writeln!(metrics, "{},{},{},{}", m.step, m.loss, m.pool_resets, theta)?;
        if cfg.log_stride > 0 && m.step % cfg.log_stride == 0 {
            println!("step {:>6}  loss {:.6}", m.step, m.loss);
        }
        let done = m.step + 1;
        if cfg.checkpoint_stride > 0 && done % cfg.checkpoint_stride == 0 {
            checkpoint::save(
                &opts.out_dir.join(format!("ckpt_{done:06}.bin")),
                &trainer.params,
                None,
            )?;
        }
    }
    if total > 0 {
        checkpoint::save(&opts.out_dir.join("ckpt_final.bin"), &trainer.params, None)?;
    }
    Ok(())
}

pub struct RunOpts {
    pub steps: usize,
    pub stride: usize,
    pub synchronous: bool,
    pub fixed_point: bool,
    pub grid_size: usize,
    pub seed_file: Option<PathBuf>,
    /// Rotate the seed by this many degrees (multiples of 90).
    pub rotate: Option<u32>,
    /// Apply the same rotation to the stochastic update masks.
    pub rotate_rng: bool,
    pub dump_final: bool,
}

fn rotation_op(degrees: u32) -> Result<D4, CliError> {
    match degrees % 360 {
        0 => Ok(D4::Identity),
        90 => Ok(D4::Rot90),
        180 => Ok(D4::Rot180),
        270 => Ok(D4::Rot270),
        other => Err(CliError::config(format!(
            "--rotate must be a multiple of 90 degrees, got {other}"
        ))),
    }
}

/// `isonca run`: roll a checkpoint out from a seed, exporting PNG frames.
pub fn cmd_run(ckpt_path: &Path, run: &RunOpts, opts: &CommonOpts) -> Result<(), CliError> {
    let (params, header) = checkpoint::load(ckpt_path)?;
    let n = run.grid_size;
    let (mut grid, seed) = match &run.seed_file {
        None => (init_single_seed::<f32>(n, n, header.channels)?, None),
        Some(path) => {
            let file = SeedFile::load(path)?;
            let s: StructuredSeed<f32> = file.to_seed();
            (init_structured_seed(n, n, &s, header.channels)?, Some(s))
        }
    };
    let mut rng = StepRng::new(opts.rng_seed);
    if let Some(deg) = run.rotate {
        let op = rotation_op(deg)?;
        if let Some(s) = seed {
            grid = init_structured_seed(n, n, &s.transform(op), header.channels)?;
        } else {
            grid = grid.transform(op);
        }
        if run.rotate_rng {
            rng = rng.with_reindex(op, grid.height(), grid.width());
        }
    }

    let mode = if run.synchronous { StepMode::Synchronous } else { StepMode::Stochastic };
    let numerics = if run.fixed_point {
        Numerics::Fixed { frac_bits: header.frac_bits.unwrap_or(Numerics::DEFAULT_FRAC_BITS) }
    } else {
        Numerics::Float
    };

    fs::create_dir_all(&opts.out_dir)?;
    RunManifest {
        command: "run".into(),
        argv: opts.argv.clone(),
        config_digest: None,
        rng_seed: opts.rng_seed,
        checkpoint: Some(ckpt_path.to_path_buf()),
        out_dir: opts.out_dir.clone(),
        frame_stride: Some(run.stride),
    }
    .write(&opts.out_dir)?;

    let mut state = grid;
    if run.stride > 0 {
        pngio::write_grid_png(&opts.out_dir.join(frame_name(0)), &state)?;
    }
    for t in 0..run.steps {
        state = nca_step(&state, &params, rng.offset(t as u64), mode, numerics)?;
        if run.stride > 0 && (t + 1) % run.stride == 0 {
            pngio::write_grid_png(&opts.out_dir.join(frame_name(t + 1)), &state)?;
        }
    }
    if run.dump_final {
        let mut dump = Vec::new();
        dump.extend_from_slice(&(state.height() as u32).to_le_bytes());
        dump.extend_from_slice(&(state.width() as u32).to_le_bytes());
        dump.extend_from_slice(&(state.channels() as u32).to_le_bytes());
        for v in state.data() {
            dump.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(opts.out_dir.join("final_state.bin"), dump)?;
    }
    Ok(())
}

/// `isonca mutate-seed`: apply point edits to a seed file, then run.
pub fn cmd_mutate_seed(
    ckpt_path: &Path,
    seed_path: &Path,
    edits: &[SeedEdit],
    run: &RunOpts,
    opts: &CommonOpts,
) -> Result<(), CliError> {
    let seed = SeedFile::load(seed_path)?;
    let edited = apply_edits(&seed, edits)?;
    fs::create_dir_all(&opts.out_dir)?;
    let edited_path = opts.out_dir.join("seed_edited.json");
    edited.save(&edited_path)?;
    let run = RunOpts { seed_file: Some(edited_path), ..clone_run(run) };
    cmd_run(ckpt_path, &run, opts)
}

fn clone_run(r: &RunOpts) -> RunOpts {
    RunOpts {
        steps: r.steps,
        stride: r.stride,
        synchronous: r.synchronous,
        fixed_point: r.fixed_point,
        grid_size: r.grid_size,
        seed_file: r.seed_file.clone(),
        rotate: r.rotate,
        rotate_rng: r.rotate_rng,
        dump_final: r.dump_final,
    }
}

/// `isonca polar-debug`: rotation-loss profiles of image A against image B
/// and its mirror, as CSV.
pub fn cmd_polar_debug(
    image_a: &Path,
    image_b: &Path,
    n_theta: usize,
    n_r: usize,
    opts: &CommonOpts,
) -> Result<(), CliError> {
    let read = |p: &Path| {
        fs::read(p).map_err(|e| CliError::config(format!("cannot read {}: {e}", p.display())))
    };
    let a = pngio::prepare_target(&read(image_a)?, 0, &[])?;
    let b = pngio::prepare_target(&read(image_b)?, 0, &[])?;
    if (a.height(), a.width()) != (b.height(), b.width()) {
        return Err(CliError::config(format!(
            "image sizes differ: {}x{} vs {}x{}",
            a.height(),
            a.width(),
            b.height(),
            b.width()
        )));
    }
    let mut cfg = PolarConfig::for_size(a.height().max(a.width()));
    cfg.n_theta = n_theta;
    cfg.n_r = n_r.max(2);
    let profile = alignment_profile(&a.compared(), &b, &cfg)?;

    fs::create_dir_all(&opts.out_dir)?;
    RunManifest {
        command: "polar-debug".into(),
        argv: opts.argv.clone(),
        config_digest: None,
        rng_seed: opts.rng_seed,
        checkpoint: None,
        out_dir: opts.out_dir.clone(),
        frame_stride: None,
    }
    .write(&opts.out_dir)?;

    let mut csv = fs::File::create(opts.out_dir.join("profile.csv"))?;
    writeln!(csv, "bin,angle_deg,loss_original,loss_reflected")?;
    for bin in 0..cfg.n_theta {
        writeln!(
            csv,
            "{},{},{},{}",
            bin,
            360.0 * bin as f64 / cfg.n_theta as f64,
            profile.original[bin],
            profile.reflected[bin]
        )?;
    }
    println!(
        "argmin: bin {} ({:.1} deg), {} branch, loss {}",
        profile.argmin_bin,
        360.0 * profile.argmin_bin as f64 / cfg.n_theta as f64,
        if profile.argmin_reflected { "reflected" } else { "original" },
        profile.min_value
    );
    Ok(())
}

pub struct VoronoiOpts {
    pub r_pd: f64,
    pub domain: f64,
    pub steps: usize,
    pub stride: usize,
    pub scale: f64,
    pub seed_file: Option<PathBuf>,
    pub laplacian_gain: Option<f64>,
}

/// `isonca voronoi-run`: build a Poisson/Voronoi graph, seed it, run the
/// rule, render polygon frames.
pub fn cmd_voronoi_run(
    ckpt_path: &Path,
    vopts: &VoronoiOpts,
    opts: &CommonOpts,
) -> Result<(), CliError> {
    let (params, header) = checkpoint::load(ckpt_path)?;
    let mut stream = Stream::new(opts.rng_seed);
    let set = poisson_disk_sample(vopts.domain, vopts.domain, vopts.r_pd, 30, &mut stream)?;
    let mut grid = build_voronoi_adjacency::<f32>(&set, header.channels)?;
    if let Some(gain) = vopts.laplacian_gain {
        grid.laplacian_gain = gain;
    }

    match &vopts.seed_file {
        None => seed_irregular(&mut grid, &GraphSeed::Single)?,
        Some(path) => {
            let file = SeedFile::load(path)?;
            let s: StructuredSeed<f32> = file.to_seed();
            seed_irregular(&mut grid, &GraphSeed::Structured(&s))?;
        }
    }

    fs::create_dir_all(&opts.out_dir)?;
    RunManifest {
        command: "voronoi-run".into(),
        argv: opts.argv.clone(),
        config_digest: None,
        rng_seed: opts.rng_seed,
        checkpoint: Some(ckpt_path.to_path_buf()),
        out_dir: opts.out_dir.clone(),
        frame_stride: Some(vopts.stride),
    }
    .write(&opts.out_dir)?;

    GraphJson::from_grid(&grid).save(&opts.out_dir.join("graph.json"))?;

    let rng = StepRng::new(opts.rng_seed);
    if vopts.stride > 0 {
        crate::render::write_png(&opts.out_dir.join(frame_name(0)), &grid, vopts.scale)?;
    }
    for t in 0..vopts.steps {
        grid = graph_nca_step(&grid, &params, rng.offset(t as u64))?;
        if vopts.stride > 0 && (t + 1) % vopts.stride == 0 {
            crate::render::write_png(
                &opts.out_dir.join(frame_name(t + 1)),
                &grid,
                vopts.scale,
            )?;
        }
    }
    crate::render::write_svg(&opts.out_dir.join("final.svg"), &grid)?;
    Ok(())
}

/// `isonca inspect`: print checkpoint metadata.
pub fn cmd_inspect(ckpt_path: &Path) -> Result<(), CliError> {
    let (params, header) = checkpoint::load(ckpt_path)?;
    println!("{}", serde_json::to_string_pretty(&header)?);
    println!("parameters: {}", params.param_count());
    let mut min = f32::INFINITY;
    let mut max = f32::NEG_INFINITY;
    for v in params.w0.iter().chain(&params.b0).chain(&params.w1) {
        min = min.min(*v);
        max = max.max(*v);
    }
    println!("weight range: [{min}, {max}]");
    Ok(())
}

/// Single-seed grids must be odd-sized for the exact-symmetry regime.
pub fn warn_if_even_symmetric(run: &RunOpts) {
    if run.synchronous && run.fixed_point && run.seed_file.is_none() && run.grid_size % 2 == 0 {
        eprintln!(
            "warning: --synchronous --fixed-point from a single seed is exactly symmetric \
             only on odd grid sizes (the seed must sit on the true center); \
             got {}",
            run.grid_size
        );
    }
}
