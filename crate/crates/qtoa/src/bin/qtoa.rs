//! Command-line front end: reads a TOML experiment description and writes
//! figure-ready CSV plus a JSON summary embedding the resolved config.
//!
//! Exit codes: 0 success, 1 engine/physics error, 2 configuration error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use qtoa::analysis::{self, CoefficientKind};
use qtoa::config::ExperimentConfig;
use qtoa::scattering::{self, Channel, Direction, PiecewiseBarrier, Segment, Selection};
use qtoa::toa::{self, Detector, TimeGrid, ToaDistribution, ToaParams};
use qtoa::wavepacket::GaussianPacket;
use qtoa::{classical, quadrature};

#[derive(Parser)]
#[command(name = "qtoa", version, about = "Arrival-time distributions for 1D wave packets on barriers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Arrival distribution of the transmitted packet (r- channel).
    Transmit(RunArgs),
    /// Arrival distribution of the reflected packet (l- channel).
    Reflect(RunArgs),
    /// Arrival distribution of the still-incoming packet (r+ or l+).
    Incoming(RunArgs),
    /// Peak arrival times over a grid of barrier heights and widths.
    Sweep(RunArgs),
    /// Classical phase-space trajectories and separatrices.
    Portrait(RunArgs),
    /// Run the built-in invariant suite.
    Selfcheck(SelfcheckArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment description (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created on success.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Distribution table format; the summary is always JSON.
    #[arg(long, value_enum, default_value_t = TableFormat::Csv)]
    format: TableFormat,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct SelfcheckArgs {
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum TableFormat {
    Csv,
    Json,
}

const EXIT_ENGINE: u8 = 1;
const EXIT_CONFIG: u8 = 2;

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(e: impl std::fmt::Display) -> Self {
        Failure { code: EXIT_CONFIG, message: format!("config error: {e}") }
    }

    fn engine(e: impl std::fmt::Display) -> Self {
        Failure { code: EXIT_ENGINE, message: format!("engine error: {e}") }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Transmit(args) => with_pool(args.threads, || run_arrival(&args, Mode::Transmit)),
        Command::Reflect(args) => with_pool(args.threads, || run_arrival(&args, Mode::Reflect)),
        Command::Incoming(args) => with_pool(args.threads, || run_arrival(&args, Mode::Incoming)),
        Command::Sweep(args) => with_pool(args.threads, || run_sweep(&args)),
        Command::Portrait(args) => run_portrait(&args),
        Command::Selfcheck(args) => with_pool(args.threads, run_selfcheck),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("qtoa: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn with_pool<T>(threads: Option<usize>, job: impl FnOnce() -> T + Send) -> T
where
    T: Send,
{
    match threads {
        None => job(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("thread pool")
            .install(job),
    }
}

fn load_config(path: &Path) -> Result<ExperimentConfig, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    ExperimentConfig::from_toml_str(&text).map_err(Failure::config)
}

#[derive(Clone, Copy, PartialEq)]
enum Mode {
    Transmit,
    Reflect,
    Incoming,
}

impl Mode {
    fn name(self) -> &'static str {
        match self {
            Mode::Transmit => "transmit",
            Mode::Reflect => "reflect",
            Mode::Incoming => "incoming",
        }
    }
}

#[derive(Serialize)]
struct Summary<'a> {
    command: &'a str,
    config: &'a ExperimentConfig,
    results: ResultsBlock,
}

#[derive(Serialize)]
struct PreparationBlock {
    p0_delta: f64,
    delta_over_q0: Option<f64>,
    negative_tail_weight: f64,
    acceptable: bool,
}

#[derive(Serialize)]
struct TwoBumpBlock {
    n_nearest: u32,
    residual: f64,
    v_star: f64,
}

#[derive(Serialize)]
struct ResultsBlock {
    channel: String,
    detector_position: f64,
    normalization_sq: f64,
    mean_toa: f64,
    most_probable_toa: f64,
    captured_mass: f64,
    momentum_truncation_mass: f64,
    preparation: PreparationBlock,
    #[serde(skip_serializing_if = "Option::is_none")]
    wigner_delay: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    reference_free_toa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    predicted_toa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    phase_time_error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    two_bump: Option<TwoBumpBlock>,
}

fn preparation_block(packet: &GaussianPacket) -> PreparationBlock {
    let q = packet.preparation_quality();
    PreparationBlock {
        p0_delta: q.p0_delta,
        delta_over_q0: q.delta_over_q0,
        negative_tail_weight: q.negative_tail_weight,
        acceptable: q.acceptable,
    }
}

fn run_arrival(args: &RunArgs, mode: Mode) -> Result<(), Failure> {
    let mut config = load_config(&args.config)?;

    // Configuration stage: everything validated before any file is touched.
    let packet = config.build_packet().map_err(Failure::config)?;
    if packet.p0 <= 0.0 {
        return Err(Failure::config("arrival experiments need a right-moving packet (p0 > 0)"));
    }
    let barrier = config.build_barrier().map_err(Failure::config)?;
    let (support_left, _) = barrier.support();
    let channel = match mode {
        Mode::Transmit => Channel::R_MINUS,
        Mode::Reflect => Channel::L_MINUS,
        Mode::Incoming => {
            let c = config.channel().map_err(Failure::config)?;
            if c.selection != Selection::Plus {
                return Err(Failure::config(format!("incoming detection needs r+ or l+, got {c}")));
            }
            c
        }
    };
    let (detector, t_free) = match (mode, channel.direction) {
        (Mode::Transmit, _) => {
            let x = config.detector_x().map_err(Failure::config)?;
            (Detector::right_of_barrier(x), packet.mass * (x - packet.q0) / packet.p0)
        }
        (Mode::Reflect, _) => {
            let y = config.detector_y().map_err(Failure::config)?;
            let path = (support_left - packet.q0) + (support_left - y);
            (Detector::left_of_barrier(y), packet.mass * path / packet.p0)
        }
        (Mode::Incoming, Direction::Right) => {
            let y = config.detector_y().map_err(Failure::config)?;
            (Detector::left_of_barrier(y), packet.mass * (y - packet.q0) / packet.p0)
        }
        (Mode::Incoming, Direction::Left) => {
            let x = config.detector_x().map_err(Failure::config)?;
            (Detector::right_of_barrier(x), packet.mass * (x - packet.q0) / packet.p0)
        }
    };
    detector.validate(&barrier).map_err(Failure::config)?;
    let time_grid = config.resolve_time_window(t_free).map_err(Failure::config)?;
    let (grid, truncation_mass) = config.build_momentum_grid(&packet).map_err(Failure::config)?;
    let params = config.toa_params();

    let preparation = preparation_block(&packet);
    if !preparation.acceptable {
        eprintln!(
            "qtoa: warning: preparation quality is poor (p0*delta = {:.3}, delta/|q0| = {:?}); \
             the single-sided channel weights may not be trustworthy",
            preparation.p0_delta, preparation.delta_over_q0
        );
    }

    // Engine stage.
    let dist =
        toa::toa_distribution(&packet, &barrier, &detector, channel, &time_grid, &grid, &params)
            .map_err(Failure::engine)?;

    let mut wigner_delay = None;
    let mut reference_free_toa = None;
    let mut predicted_toa = None;
    let mut phase_time_error = None;
    if config.flags.emit_phase_time && mode != Mode::Incoming {
        match analysis::phase_time_prediction(&packet, &barrier, &detector, &time_grid, &grid) {
            Ok(report) => {
                wigner_delay = Some(report.wigner_delay);
                reference_free_toa = Some(report.reference_free_toa);
                predicted_toa = Some(report.predicted_toa);
            }
            Err(e) => phase_time_error = Some(e.to_string()),
        }
    }

    let two_bump = match mode {
        Mode::Reflect => analysis::two_bump_condition(&barrier, packet.p0).ok().map(|r| {
            TwoBumpBlock { n_nearest: r.n_nearest, residual: r.residual, v_star: r.v_star }
        }),
        _ => None,
    };

    let profile = if mode == Mode::Reflect && config.flags.emit_approx_profile {
        Some(
            dist.times
                .iter()
                .map(|&t| {
                    analysis::approx_reflection_profile(
                        t,
                        detector.position,
                        packet.q0,
                        &packet,
                        &barrier,
                    )
                    .ok()
                })
                .collect::<Vec<_>>(),
        )
    } else {
        None
    };

    let results = ResultsBlock {
        channel: channel.to_string(),
        detector_position: detector.position,
        normalization_sq: dist.normalization_sq,
        mean_toa: dist.mean_toa,
        most_probable_toa: dist.most_probable_toa,
        captured_mass: dist.captured_mass,
        momentum_truncation_mass: truncation_mass,
        preparation,
        wigner_delay,
        reference_free_toa,
        predicted_toa,
        phase_time_error,
        two_bump,
    };

    // Output stage.
    fs::create_dir_all(&args.out).map_err(Failure::engine)?;
    let base = args.out.join(format!("{}_distribution", mode.name()));
    write_distribution(&base, args.format, &dist, profile.as_deref()).map_err(Failure::engine)?;
    let summary = Summary { command: mode.name(), config: &config, results };
    let summary_path = args.out.join(format!("{}_summary.json", mode.name()));
    write_json(&summary_path, &summary).map_err(Failure::engine)?;
    println!(
        "{}: N^2 = {:.6e}, peak = {}, mean = {}, captured = {:.6}",
        mode.name(),
        dist.normalization_sq,
        dist.most_probable_toa,
        dist.mean_toa,
        dist.captured_mass
    );
    Ok(())
}

fn write_distribution(
    base: &Path,
    format: TableFormat,
    dist: &ToaDistribution,
    profile: Option<&[Option<f64>]>,
) -> std::io::Result<()> {
    match format {
        TableFormat::Csv => {
            let mut text = String::new();
            match profile {
                None => {
                    text.push_str("t,density\n");
                    for (t, d) in dist.times.iter().zip(&dist.density) {
                        text.push_str(&format!("{t},{d}\n"));
                    }
                }
                Some(extra) => {
                    text.push_str("t,density,approx_profile\n");
                    for ((t, d), p) in dist.times.iter().zip(&dist.density).zip(extra) {
                        match p {
                            Some(v) => text.push_str(&format!("{t},{d},{v}\n")),
                            None => text.push_str(&format!("{t},{d},\n")),
                        }
                    }
                }
            }
            fs::write(base.with_extension("csv"), text)
        }
        TableFormat::Json => {
            #[derive(Serialize)]
            struct Table<'a> {
                times: &'a [f64],
                density: &'a [f64],
                #[serde(skip_serializing_if = "Option::is_none")]
                approx_profile: Option<&'a [Option<f64>]>,
            }
            write_json(
                &base.with_extension("json"),
                &Table { times: &dist.times, density: &dist.density, approx_profile: profile },
            )
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    fs::write(path, text)
}

fn csv_field(value: Option<f64>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

fn csv_escape(text: &str) -> String {
    if text.contains([',', '"', '\n']) {
        format!("\"{}\"", text.replace('"', "\"\""))
    } else {
        text.to_string()
    }
}

fn run_sweep(args: &RunArgs) -> Result<(), Failure> {
    let mut config = load_config(&args.config)?;
    let packet = config.build_packet().map_err(Failure::config)?;
    if packet.p0 <= 0.0 {
        return Err(Failure::config("sweeps need a right-moving packet (p0 > 0)"));
    }
    let sweep = config.sweep.clone().unwrap_or_default();
    let heights = sweep.heights.clone();
    if heights.is_empty() || heights.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Failure::config("sweep heights must be a non-empty list of finite V >= 0"));
    }
    let widths = sweep.resolved_widths().map_err(Failure::config)?;
    let x = config.detector_x().map_err(Failure::config)?;
    let offset = config.barrier.offset;
    if x <= offset + widths.iter().cloned().fold(0.0, f64::max) {
        return Err(Failure::config("detector.x must sit right of the widest sweep barrier"));
    }
    let t_free = packet.mass * (x - packet.q0) / packet.p0;
    let time_grid = config.resolve_time_window(t_free).map_err(Failure::config)?;
    let (grid, _) = config.build_momentum_grid(&packet).map_err(Failure::config)?;
    let params = config.toa_params();
    config.sweep = Some(sweep);

    // One free reference peak serves every (V, a) prediction.
    let detector = Detector::right_of_barrier(x);
    let free = PiecewiseBarrier::free(packet.mass);
    let free_peak = toa::toa_distribution(
        &packet,
        &free,
        &detector,
        Channel::R_MINUS,
        &time_grid,
        &grid,
        &params,
    )
    .map_err(Failure::engine)?
    .most_probable_toa;

    let mut rows = String::from("height,width,most_probable_toa,predicted_toa,normalization_sq,error\n");
    for &v in &heights {
        for &a in &widths {
            let row = sweep_point(&packet, &detector, v, a, offset, &time_grid, &grid, &params, free_peak);
            match row {
                Ok((peak, predicted, n_sq)) => {
                    rows.push_str(&format!(
                        "{v},{a},{peak},{},{n_sq},\n",
                        csv_field(predicted)
                    ));
                }
                Err(e) => {
                    rows.push_str(&format!("{v},{a},,,,{}\n", csv_escape(&e.to_string())));
                }
            }
        }
    }

    fs::create_dir_all(&args.out).map_err(Failure::engine)?;
    fs::write(args.out.join("sweep.csv"), rows).map_err(Failure::engine)?;
    #[derive(Serialize)]
    struct SweepSummary<'a> {
        command: &'a str,
        config: &'a ExperimentConfig,
        free_reference_toa: f64,
    }
    write_json(
        &args.out.join("sweep_summary.json"),
        &SweepSummary { command: "sweep", config: &config, free_reference_toa: free_peak },
    )
    .map_err(Failure::engine)?;
    println!("sweep: {} heights x {} widths, free reference peak {free_peak}", heights.len(), widths.len());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn sweep_point(
    packet: &GaussianPacket,
    detector: &Detector,
    v: f64,
    a: f64,
    offset: f64,
    time_grid: &TimeGrid,
    grid: &quadrature::MomentumGrid,
    params: &ToaParams,
    free_peak: f64,
) -> qtoa::Result<(f64, Option<f64>, f64)> {
    let barrier = PiecewiseBarrier::square_at(offset, v, a, packet.mass)?;
    let dist = toa::toa_distribution(
        packet,
        &barrier,
        detector,
        Channel::R_MINUS,
        time_grid,
        grid,
        params,
    )?;
    let predicted = if barrier.is_free() {
        Some(free_peak)
    } else {
        analysis::wigner_delay(&barrier, packet.p0, CoefficientKind::Transmission)
            .ok()
            .map(|d| free_peak + d)
    };
    Ok((dist.most_probable_toa, predicted, dist.normalization_sq))
}

fn run_portrait(args: &RunArgs) -> Result<(), Failure> {
    let config = load_config(&args.config)?;
    let barrier = config.build_smooth_barrier().map_err(Failure::config)?;
    let portrait_cfg = config.portrait.clone().unwrap_or_default();
    if portrait_cfg.energies.is_empty() {
        return Err(Failure::config("portrait.energies must not be empty"));
    }
    let portrait =
        classical::phase_portrait(&barrier, &portrait_cfg.energies, portrait_cfg.samples)
            .map_err(Failure::config)?;

    let mut rows = String::from("trajectory_id,channel_label,q,p\n");
    for (idx, tr) in portrait.trajectories.iter().enumerate() {
        let id = format!("t{idx:02}");
        for &(q, p) in &tr.samples {
            rows.push_str(&format!("{id},{},{q},{p}\n", tr.channel_plus));
        }
        for &(q, p) in &tr.samples {
            rows.push_str(&format!("{id},{},{q},{p}\n", tr.channel_minus));
        }
    }
    for &(q, p) in &portrait.separatrix_plus {
        rows.push_str(&format!("separatrix_plus,separatrix,{q},{p}\n"));
    }
    for &(q, p) in &portrait.separatrix_minus {
        rows.push_str(&format!("separatrix_minus,separatrix,{q},{p}\n"));
    }

    fs::create_dir_all(&args.out).map_err(Failure::engine)?;
    fs::write(args.out.join("portrait.csv"), rows).map_err(Failure::engine)?;
    #[derive(Serialize)]
    struct PortraitSummary<'a> {
        command: &'a str,
        config: &'a ExperimentConfig,
        trajectories: usize,
    }
    write_json(
        &args.out.join("portrait_summary.json"),
        &PortraitSummary {
            command: "portrait",
            config: &config,
            trajectories: portrait.trajectories.len(),
        },
    )
    .map_err(Failure::engine)?;
    println!("portrait: {} trajectories", portrait.trajectories.len());
    Ok(())
}

// ---------------------------------------------------------------------------
// selfcheck: the fast invariant battery, deterministic seeding throughout.

struct CheckReport {
    failures: usize,
}

impl CheckReport {
    fn record(&mut self, name: &str, pass: bool, detail: String) {
        println!("selfcheck {:<44} {} ({detail})", name, if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failures += 1;
        }
    }
}

fn run_selfcheck() -> Result<(), Failure> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x51_70_41);
    let mut report = CheckReport { failures: 0 };

    // Flux unitarity and unimodularity over random square barriers.
    let mut worst_flux = 0.0_f64;
    let mut worst_det = 0.0_f64;
    for _ in 0..300 {
        let v = rng.gen_range(1e-3..10.0);
        let a = rng.gen_range(1e-3..20.0);
        let p = rng.gen_range(1e-2..5.0);
        let b = PiecewiseBarrier::square(v, a, 1.0).expect("valid barrier");
        let c = scattering::scattering_coefficients(&b, p).expect("coefficients");
        worst_flux = worst_flux
            .max((c.transmission.norm_sqr() + c.reflection.norm_sqr() - 1.0).abs());
        let m = scattering::transfer_matrix(&b, p).expect("matrix");
        worst_det = worst_det.max((m.det() - num_complex::Complex64::new(1.0, 0.0)).norm());
    }
    report.record("flux unitarity |T|^2+|R|^2 = 1", worst_flux < 1e-10, format!("worst {worst_flux:.2e}"));
    report.record("transfer-matrix determinant = 1", worst_det < 1e-12, format!("worst {worst_det:.2e}"));

    // Composing two half barriers reproduces the whole barrier.
    let mut worst_split = 0.0_f64;
    for _ in 0..100 {
        let v = rng.gen_range(0.1..8.0);
        let a = rng.gen_range(0.5..15.0);
        let p = rng.gen_range(0.1..4.0);
        let whole = scattering::transfer_matrix(
            &PiecewiseBarrier::square(v, a, 1.0).expect("barrier"),
            p,
        )
        .expect("matrix");
        let left = scattering::transfer_matrix(
            &PiecewiseBarrier::new(vec![Segment::new(0.0, a / 2.0, v)], 1.0).expect("barrier"),
            p,
        )
        .expect("matrix");
        let right = scattering::transfer_matrix(
            &PiecewiseBarrier::new(vec![Segment::new(a / 2.0, a, v)], 1.0).expect("barrier"),
            p,
        )
        .expect("matrix");
        let product = right.compose(&left);
        let err = (product.m11 - whole.m11).norm()
            + (product.m12 - whole.m12).norm()
            + (product.m21 - whole.m21).norm()
            + (product.m22 - whole.m22).norm();
        let scale = whole.m22.norm().max(1.0);
        worst_split = worst_split.max(err / scale);
    }
    report.record("split-and-compose transfer matrices", worst_split < 1e-10, format!("worst {worst_split:.2e}"));

    // Outgoing states are conjugated incoming states of the opposite mover.
    let mut worst_conj = 0.0_f64;
    for _ in 0..50 {
        let v = rng.gen_range(0.1..6.0);
        let a = rng.gen_range(0.5..12.0);
        let e = rng.gen_range(0.05..8.0);
        let q = rng.gen_range(-30.0..30.0);
        let b = PiecewiseBarrier::square(v, a, 1.0).expect("barrier");
        let rm = scattering::eigenstate(&b, e, Channel::R_MINUS, q).expect("state");
        let lp = scattering::eigenstate(&b, e, Channel::L_PLUS, q).expect("state");
        let lm = scattering::eigenstate(&b, e, Channel::L_MINUS, q).expect("state");
        let rp = scattering::eigenstate(&b, e, Channel::R_PLUS, q).expect("state");
        worst_conj = worst_conj.max((rm - lp.conj()).norm()).max((lm - rp.conj()).norm());
    }
    report.record("conjugation pairing of +/- eigenstates", worst_conj < 1e-10, format!("worst {worst_conj:.2e}"));

    // Matching consistency across random multi-segment barriers.
    let mut worst_cont = 0.0_f64;
    for _ in 0..40 {
        let n = rng.gen_range(1..=3);
        let mut edge = rng.gen_range(-5.0..0.0);
        let mut segments = Vec::new();
        for _ in 0..n {
            let width = rng.gen_range(0.3..4.0);
            segments.push(Segment::new(edge, edge + width, rng.gen_range(0.0..5.0)));
            edge += width;
        }
        let b = PiecewiseBarrier::new(segments, 1.0).expect("barrier");
        let e = rng.gen_range(0.1..6.0);
        for channel in Channel::ALL {
            let worst =
                scattering::wavefunction_continuity_check(&b, e, channel).expect("check");
            worst_cont = worst_cont.max(worst);
        }
    }
    report.record("eigenstate continuity at segment edges", worst_cont < 1e-9, format!("worst {worst_cont:.2e}"));

    // Reflection zeros at interior resonances.
    let mut worst_zero = 0.0_f64;
    for n in 1..=5 {
        let (v, a) = (1.0, 10.0);
        let pp = n as f64 * std::f64::consts::PI / a;
        let p = (pp * pp + 2.0 * v).sqrt();
        let b = PiecewiseBarrier::square(v, a, 1.0).expect("barrier");
        let r = scattering::scattering_coefficients(&b, p).expect("coefficients").reflection;
        worst_zero = worst_zero.max(r.norm());
    }
    report.record("reflection zeros at p' a = n pi", worst_zero < 1e-8, format!("worst {worst_zero:.2e}"));

    // Packet normalization in both representations.
    let packet = GaussianPacket::new(-50.0, 2.0, 10.0, 1.0).expect("packet");
    let pos_grid = quadrature::MomentumGrid::simpson(0.0, 200.0, 8001).expect("grid");
    let q_mass: f64 = pos_grid
        .nodes()
        .iter()
        .zip(pos_grid.weights())
        .map(|(&u, &w)| w * packet.position_amplitude(u - 150.0).norm_sqr())
        .sum();
    let p_grid = quadrature::MomentumGrid::simpson(0.0, 4.0, 8001).expect("grid");
    let p_mass: f64 = p_grid
        .nodes()
        .iter()
        .zip(p_grid.weights())
        .map(|(&p, &w)| w * packet.momentum_amplitude(p).norm_sqr())
        .sum();
    report.record(
        "packet normalization (position & momentum)",
        (q_mass - 1.0).abs() < 1e-10 && (p_mass - 1.0).abs() < 1e-10,
        format!("masses {q_mass:.12}, {p_mass:.12}"),
    );

    // Channel budget: transmission and reflection probabilities sum to one.
    let barrier = PiecewiseBarrier::square(1.125, 10.0, 1.0).expect("barrier");
    let (grid, _) = quadrature::build_momentum_grid(&packet, 8.0, 2049).expect("grid");
    let n_t = toa::normalization_sq(&packet, &barrier, &grid, Channel::R_MINUS).expect("N^2");
    let n_r = toa::normalization_sq(&packet, &barrier, &grid, Channel::L_MINUS).expect("N^2");
    report.record(
        "channel budget N^2(r-) + N^2(l-) = 1",
        (n_t + n_r - 1.0).abs() < 1e-8,
        format!("sum {}", n_t + n_r),
    );

    // The V = 0 engine route reproduces the direct free construction.
    let free = PiecewiseBarrier::free(1.0);
    let time_grid = TimeGrid::uniform(12.5, 125.0, 2001).expect("grid");
    let dist = toa::toa_distribution(
        &packet,
        &free,
        &Detector::right_of_barrier(50.0),
        Channel::R_MINUS,
        &time_grid,
        &grid,
        &ToaParams::default(),
    )
    .expect("distribution");
    let peak_density = dist.density.iter().cloned().fold(0.0, f64::max);
    let mut worst_free = 0.0_f64;
    for (i, &t) in dist.times.iter().enumerate().step_by(100) {
        let direct = toa::free_arrival_amplitude(&packet, &grid, 50.0, t).norm_sqr()
            / dist.normalization_sq;
        worst_free = worst_free.max((direct - dist.density[i]).abs() / peak_density);
    }
    report.record("free engine vs direct eigenfunction route", worst_free < 1e-8, format!("worst {worst_free:.2e}"));

    // Conditional normalization of a produced distribution.
    report.record(
        "conditional normalization of the distribution",
        (dist.captured_mass - 1.0).abs() < 1e-3,
        format!("captured {:.6}", dist.captured_mass),
    );

    // Grid refinement stability of N^2 and the peak.
    let (fine, _) = quadrature::build_momentum_grid(&packet, 8.0, 4097).expect("grid");
    let n_fine = toa::normalization_sq(&packet, &barrier, &fine, Channel::R_MINUS).expect("N^2");
    let dist_coarse = toa::toa_distribution(
        &packet,
        &barrier,
        &Detector::right_of_barrier(50.0),
        Channel::R_MINUS,
        &time_grid,
        &grid,
        &ToaParams::default(),
    )
    .expect("distribution");
    let dist_fine = toa::toa_distribution(
        &packet,
        &barrier,
        &Detector::right_of_barrier(50.0),
        Channel::R_MINUS,
        &time_grid,
        &fine,
        &ToaParams::default(),
    )
    .expect("distribution");
    report.record(
        "momentum-grid refinement stability",
        (n_fine - n_t).abs() < 1e-10
            && (dist_fine.most_probable_toa - dist_coarse.most_probable_toa).abs() < 1e-6,
        format!(
            "dN^2 {:.2e}, dpeak {:.2e}",
            (n_fine - n_t).abs(),
            (dist_fine.most_probable_toa - dist_coarse.most_probable_toa).abs()
        ),
    );

    if report.failures == 0 {
        println!("selfcheck: all invariants hold");
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_ENGINE,
            message: format!("{} invariant(s) failed", report.failures),
        })
    }
}
