//! Command-line front end for the dipole separation bound library.
//!
//! Subcommands:
//! * `sweep`: quantum and classical precision bounds versus separation for
//!   fixed or isotropic emitters, written as CSV plus a log-log SVG plot
//!   per emitter.
//! * `polar-map`: the ratio sigma_CRB / sigma_QCRB over the orientation
//!   quarter-sphere at one separation, written as CSV plus one SVG heat
//!   map per modality.
//! * `images`: per-channel detector probability maps at one emitter and
//!   separation, written as PFM floating-point images.
//! * `validate`: the numerical cross-check suite (closed forms, finite
//!   differences, conservation laws, bound ordering).
//!
//! Optical parameters start from a profile (`paper` or `desk`), then an
//! optional flat `key = value` file, then individual flags, in that order
//! of precedence. Requested separations are snapped to the detector pixel
//! lattice before any physics runs, and every output records the snapped
//! value. The `DIPOLE_BOUNDS_THREADS` environment variable caps the
//! worker pool; runs are deterministic at any pool size.

use std::f64::consts::FRAC_PI_2;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use dipole_bounds::{
    bound_curve_csv, bound_curve_svg, polar_grid, polar_map_csv, polar_map_svg, run_polar_map,
    run_sweep, run_validation, write_channel_images, write_text, Channel, DipoleOrientation,
    EmitterModel, Microscope, Modality, OpticalConfig, OutputGuard,
};

/// Environment variable capping the worker pool size.
const THREADS_VAR: &str = "DIPOLE_BOUNDS_THREADS";

/// Separation range used when a sweep names no separations at all.
const DEFAULT_RANGE: &str = "5:250:25";

#[derive(Parser, Debug)]
#[command(
    name = "dipole-bounds",
    version,
    about = "Precision limits for resolving two close dipole emitters"
)]
struct Cli {
    #[command(flatten)]
    params: ParamArgs,

    /// Directory receiving all output files (created if absent).
    #[arg(long, global = true, default_value = ".", value_name = "DIR")]
    out_dir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

/// Optical and discretization parameters. Precedence, lowest to highest:
/// profile, config file, individual flags.
#[derive(Args, Debug)]
struct ParamArgs {
    /// Base parameter set: "paper" (2049-point pupil grid) or "desk" (513).
    #[arg(long, global = true, default_value = "paper", value_name = "NAME")]
    profile: String,

    /// Flat parameter file of `key = value` lines; keys are the parameter
    /// flag names in snake_case, `#` starts a comment.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Numerical aperture of the objective.
    #[arg(long, global = true, value_name = "NA")]
    numerical_aperture: Option<f64>,

    /// Refractive index of the immersion medium.
    #[arg(long, global = true, value_name = "N")]
    immersion_index: Option<f64>,

    /// Vacuum emission wavelength, nm.
    #[arg(long, global = true, value_name = "NM")]
    vacuum_wavelength_nm: Option<f64>,

    /// Lateral magnification of the tube lens image.
    #[arg(long, global = true, value_name = "M")]
    magnification: Option<f64>,

    /// Samples per axis of the square pupil grid (odd).
    #[arg(long, global = true, value_name = "SIDE")]
    pupil_grid_side: Option<usize>,

    /// Fraction of the pupil grid area covered by the aperture disk.
    #[arg(long, global = true, value_name = "FRACTION")]
    support_fill: Option<f64>,

    /// Detector pixel pitch, projected to object space, nm.
    #[arg(long, global = true, value_name = "NM")]
    image_pixel_object_nm: Option<f64>,

    /// Side of the retained image window in object-space nm.
    #[arg(long, global = true, value_name = "NM")]
    image_fov_object_nm: Option<f64>,

    /// Highest Zernike radial order in the modal expansion.
    #[arg(long, global = true, value_name = "ORDER")]
    zernike_n_max: Option<u32>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Bound curves versus separation for one or more emitters.
    Sweep(SweepArgs),
    /// Ratio of classical to quantum bound over the orientation grid.
    PolarMap(PolarMapArgs),
    /// Per-channel detector images at one emitter and separation.
    Images(ImagesArgs),
    /// Run the numerical cross-check suite and report each result.
    Validate,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Polar angle of a fixed emitter pair, radians; repeat together with
    /// --phi to sweep several orientations.
    #[arg(long, value_name = "RAD")]
    theta: Vec<f64>,

    /// Azimuthal angle paired with each --theta, radians.
    #[arg(long, value_name = "RAD")]
    phi: Vec<f64>,

    /// Add the isotropic (freely rotating) emitter model.
    #[arg(long)]
    isotropic: bool,

    /// Comma-separated modality labels (default: all five).
    #[arg(long, value_delimiter = ',', value_name = "LABELS")]
    modalities: Vec<String>,

    /// Comma-separated separations, nm.
    #[arg(long, value_delimiter = ',', value_name = "NM")]
    separations: Vec<f64>,

    /// Log-spaced separations MIN:MAX:COUNT, nm; appended to any explicit
    /// list. With neither flag the sweep covers 5:250:25.
    #[arg(long, value_name = "MIN:MAX:COUNT")]
    separation_range: Option<String>,

    /// Output file stem.
    #[arg(long, default_value = "sweep", value_name = "NAME")]
    stem: String,
}

#[derive(Args, Debug)]
struct PolarMapArgs {
    /// Emitter separation, nm (snapped to the pixel lattice).
    #[arg(long, default_value_t = 10.0, value_name = "NM")]
    separation: f64,

    /// Comma-separated modality labels (default: all five).
    #[arg(long, value_delimiter = ',', value_name = "LABELS")]
    modalities: Vec<String>,

    /// Output file stem.
    #[arg(long, default_value = "polar_map", value_name = "NAME")]
    stem: String,
}

#[derive(Args, Debug)]
struct ImagesArgs {
    /// Polar angle of the fixed emitter pair, radians (default pi/2).
    #[arg(long, value_name = "RAD")]
    theta: Option<f64>,

    /// Azimuthal angle of the fixed emitter pair, radians (default 0).
    #[arg(long, value_name = "RAD")]
    phi: Option<f64>,

    /// Use the isotropic emitter model instead of a fixed orientation.
    #[arg(long, conflicts_with_all = ["theta", "phi"])]
    isotropic: bool,

    /// Emitter separation, nm (snapped to the pixel lattice).
    #[arg(long, default_value_t = 10.0, value_name = "NM")]
    separation: f64,

    /// Comma-separated modality labels selecting the channels to render
    /// (default: all five).
    #[arg(long, value_delimiter = ',', value_name = "LABELS")]
    modalities: Vec<String>,

    /// Output file stem.
    #[arg(long, default_value = "images", value_name = "NAME")]
    stem: String,
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    configure_threads()?;
    // Parameter problems are reported for every subcommand, including
    // `validate`, which otherwise ignores the configuration.
    let cfg = build_config(&cli.params)?;
    match &cli.command {
        Command::Sweep(args) => cmd_sweep(&cli, cfg, args),
        Command::PolarMap(args) => cmd_polar_map(&cli, cfg, args),
        Command::Images(args) => cmd_images(&cli, cfg, args),
        Command::Validate => cmd_validate(),
    }
}

/// Applies the optional worker-count environment variable before any
/// parallel region starts.
fn configure_threads() -> Result<()> {
    let raw = match std::env::var(THREADS_VAR) {
        Ok(raw) => raw,
        Err(std::env::VarError::NotPresent) => return Ok(()),
        Err(err) => return Err(err).context(THREADS_VAR),
    };
    let threads: usize = raw
        .trim()
        .parse()
        .with_context(|| format!("{THREADS_VAR}={raw:?} must be a positive integer"))?;
    if threads == 0 {
        bail!("{THREADS_VAR} must be at least 1");
    }
    if !dipole_bounds::set_worker_threads(threads) {
        eprintln!("warning: {THREADS_VAR} not applied (pool already built or parallelism disabled)");
    }
    Ok(())
}

fn build_config(params: &ParamArgs) -> Result<OpticalConfig> {
    let mut cfg = match params.profile.as_str() {
        "paper" => OpticalConfig::paper(),
        "desk" => OpticalConfig::desk(),
        other => bail!("unknown profile {other:?}; expected \"paper\" or \"desk\""),
    };
    if let Some(path) = &params.config {
        load_config_file(&mut cfg, path)?;
    }
    macro_rules! override_field {
        ($($field:ident),* $(,)?) => {
            $(if let Some(value) = params.$field { cfg.$field = value; })*
        };
    }
    override_field!(
        numerical_aperture,
        immersion_index,
        vacuum_wavelength_nm,
        magnification,
        pupil_grid_side,
        support_fill,
        image_pixel_object_nm,
        image_fov_object_nm,
        zernike_n_max,
    );
    Ok(cfg)
}

fn load_config_file(cfg: &mut OpticalConfig, path: &Path) -> Result<()> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    for (index, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let location = || format!("{}:{}", path.display(), index + 1);
        let (key, value) = line
            .split_once('=')
            .with_context(|| format!("{}: expected `key = value`, got {line:?}", location()))?;
        apply_parameter(cfg, key.trim(), value.trim()).with_context(location)?;
    }
    Ok(())
}

fn apply_parameter(cfg: &mut OpticalConfig, key: &str, value: &str) -> Result<()> {
    fn parse<T>(key: &str, value: &str) -> Result<T>
    where
        T: std::str::FromStr,
        T::Err: std::error::Error + Send + Sync + 'static,
    {
        value
            .parse()
            .with_context(|| format!("parameter {key}: invalid value {value:?}"))
    }
    match key {
        "numerical_aperture" => cfg.numerical_aperture = parse(key, value)?,
        "immersion_index" => cfg.immersion_index = parse(key, value)?,
        "vacuum_wavelength_nm" => cfg.vacuum_wavelength_nm = parse(key, value)?,
        "magnification" => cfg.magnification = parse(key, value)?,
        "pupil_grid_side" => cfg.pupil_grid_side = parse(key, value)?,
        "support_fill" => cfg.support_fill = parse(key, value)?,
        "image_pixel_object_nm" => cfg.image_pixel_object_nm = parse(key, value)?,
        "image_fov_object_nm" => cfg.image_fov_object_nm = parse(key, value)?,
        "zernike_n_max" => cfg.zernike_n_max = parse(key, value)?,
        other => bail!("unknown parameter {other:?}"),
    }
    Ok(())
}

fn parse_modalities(labels: &[String]) -> Result<Vec<Modality>> {
    if labels.is_empty() {
        return Ok(Modality::ALL.to_vec());
    }
    let mut modalities = Vec::new();
    for raw in labels {
        let label = raw.trim();
        let modality = Modality::from_label(label).with_context(|| {
            let valid: Vec<&str> = Modality::ALL.iter().map(|m| m.label()).collect();
            format!("unknown modality {label:?}; valid labels: {}", valid.join(", "))
        })?;
        if !modalities.contains(&modality) {
            modalities.push(modality);
        }
    }
    Ok(modalities)
}

/// Channels used by any selected modality, in detector column order.
fn channel_union(modalities: &[Modality]) -> Vec<Channel> {
    let mut channels: Vec<Channel> = modalities
        .iter()
        .flat_map(|m| m.channels().iter().copied())
        .collect();
    channels.sort_by_key(Channel::index);
    channels.dedup();
    channels
}

fn log_range(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [min, max, count] = parts[..] else {
        bail!("separation range {spec:?} must be MIN:MAX:COUNT");
    };
    let min: f64 = min
        .parse()
        .with_context(|| format!("separation range {spec:?}: bad MIN"))?;
    let max: f64 = max
        .parse()
        .with_context(|| format!("separation range {spec:?}: bad MAX"))?;
    let count: usize = count
        .parse()
        .with_context(|| format!("separation range {spec:?}: bad COUNT"))?;
    if !(min.is_finite() && max.is_finite() && min > 0.0 && max >= min) {
        bail!("separation range {spec:?} needs 0 < MIN <= MAX");
    }
    if count == 0 {
        bail!("separation range {spec:?} needs COUNT >= 1");
    }
    if count == 1 {
        return Ok(vec![min]);
    }
    let ratio = max / min;
    Ok((0..count)
        .map(|i| min * ratio.powf(i as f64 / (count - 1) as f64))
        .collect())
}

fn collect_separations(args: &SweepArgs) -> Result<Vec<f64>> {
    let mut separations = args.separations.clone();
    if let Some(spec) = &args.separation_range {
        separations.extend(log_range(spec)?);
    }
    if separations.is_empty() {
        separations = log_range(DEFAULT_RANGE)?;
    }
    Ok(separations)
}

fn sweep_emitters(args: &SweepArgs) -> Result<Vec<EmitterModel>> {
    if args.theta.len() != args.phi.len() {
        bail!(
            "--theta given {} times but --phi {} times; they pair up",
            args.theta.len(),
            args.phi.len()
        );
    }
    let mut emitters = Vec::new();
    for (&theta, &phi) in args.theta.iter().zip(&args.phi) {
        emitters.push(EmitterModel::Fixed(DipoleOrientation::new(theta, phi)?));
    }
    if args.isotropic {
        emitters.push(EmitterModel::Isotropic);
    }
    if emitters.is_empty() {
        emitters.push(EmitterModel::Fixed(DipoleOrientation::new(
            FRAC_PI_2, 0.0,
        )?));
    }
    Ok(emitters)
}

fn build_microscope(cli: &Cli, cfg: OpticalConfig) -> Result<Microscope> {
    let scope = Microscope::new(cfg)?;
    let cfg = scope.config();
    println!(
        "pupil grid {side} x {side}, image {px} x {px} px at {pitch} nm pitch",
        side = cfg.pupil_grid_side,
        px = cfg.image_side(),
        pitch = cfg.image_pixel_object_nm,
    );
    fs::create_dir_all(&cli.out_dir)
        .with_context(|| format!("creating {}", cli.out_dir.display()))?;
    Ok(scope)
}

/// Separation tag for file names: integers stay bare, anything else keeps
/// two decimals.
fn format_nm(l: f64) -> String {
    if (l - l.round()).abs() < 1e-9 {
        format!("{l:.0}")
    } else {
        format!("{l:.2}")
    }
}

fn cmd_sweep(cli: &Cli, cfg: OpticalConfig, args: &SweepArgs) -> Result<()> {
    let modalities = parse_modalities(&args.modalities)?;
    let emitters = sweep_emitters(args)?;
    let separations = collect_separations(args)?;
    let scope = build_microscope(cli, cfg)?;

    let mut guard = OutputGuard::new();
    let mut written = Vec::new();
    for emitter in emitters {
        let curve = run_sweep(&scope, emitter, &modalities, &separations)?;
        let base = format!("{}_{}", args.stem, emitter.label());
        let csv = cli.out_dir.join(format!("{base}.csv"));
        guard.track(csv.clone());
        write_text(&csv, &bound_curve_csv(&curve))?;
        let svg = cli.out_dir.join(format!("{base}.svg"));
        guard.track(svg.clone());
        write_text(&svg, &bound_curve_svg(&curve))?;
        written.push(csv);
        written.push(svg);
    }
    guard.disarm();
    for path in &written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_polar_map(cli: &Cli, cfg: OpticalConfig, args: &PolarMapArgs) -> Result<()> {
    let modalities = parse_modalities(&args.modalities)?;
    let scope = build_microscope(cli, cfg)?;
    let (thetas, phis) = polar_grid();
    let map = run_polar_map(&scope, &modalities, &thetas, &phis, args.separation)?;
    println!("snapped separation {} nm", map.l_nm);

    let mut guard = OutputGuard::new();
    let mut written = Vec::new();
    let csv = cli.out_dir.join(format!("{}.csv", args.stem));
    guard.track(csv.clone());
    write_text(&csv, &polar_map_csv(&map))?;
    written.push(csv);
    for (index, modality) in map.modalities.iter().enumerate() {
        let svg = cli
            .out_dir
            .join(format!("{}_{}.svg", args.stem, modality.label()));
        guard.track(svg.clone());
        write_text(&svg, &polar_map_svg(&map, index))?;
        written.push(svg);
    }
    guard.disarm();
    for path in &written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_images(cli: &Cli, cfg: OpticalConfig, args: &ImagesArgs) -> Result<()> {
    let modalities = parse_modalities(&args.modalities)?;
    let channels = channel_union(&modalities);
    let emitter = if args.isotropic {
        EmitterModel::Isotropic
    } else {
        EmitterModel::Fixed(DipoleOrientation::new(
            args.theta.unwrap_or(FRAC_PI_2),
            args.phi.unwrap_or(0.0),
        )?)
    };
    let scope = build_microscope(cli, cfg)?;
    let l_nm = scope.snap_separation(args.separation);
    println!("snapped separation {l_nm} nm");
    let images = scope.images(emitter, l_nm)?;

    let stem = format!("{}_{}_l{}", args.stem, emitter.label(), format_nm(l_nm));
    let mut guard = OutputGuard::new();
    for &channel in &channels {
        guard.track(cli.out_dir.join(format!("{stem}_{}.pfm", channel.label())));
    }
    let written = write_channel_images(&cli.out_dir, &stem, &images, &channels)?;
    guard.disarm();
    for path in &written {
        println!("wrote {}", path.display());
    }

    println!("photon share of each channel within its normalization group:");
    for &channel in &channels {
        let share: f64 = images.channel(channel).probability.sum();
        println!("  {:<15} {share:.6e}", channel.label());
    }
    Ok(())
}

fn cmd_validate() -> Result<()> {
    let reports = run_validation();
    let failed = reports.iter().filter(|r| !r.passed).count();
    for report in &reports {
        let tag = if report.passed { "PASS" } else { "FAIL" };
        println!("{tag} {:<44} {}", report.name, report.detail);
    }
    if failed > 0 {
        bail!("{failed} of {} checks failed", reports.len());
    }
    println!("all {} checks passed", reports.len());
    Ok(())
}
