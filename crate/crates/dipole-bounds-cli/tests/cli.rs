//! End-to-end runs of the compiled binary: argument handling, config file
//! precedence, output determinism, and file formats. Physics assertions
//! live in the library's own test suites; these tests run on reduced
//! grids and only exercise the plumbing.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

/// Reduced discretization shared by every test: 33-point pupil grid and a
/// 31-pixel image window at 20 nm pitch.
const TINY: &[&str] = &[
    "--profile",
    "desk",
    "--pupil-grid-side",
    "33",
    "--image-pixel-object-nm",
    "20",
    "--image-fov-object-nm",
    "600",
];

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_dipole-bounds"));
    cmd.env_remove("DIPOLE_BOUNDS_THREADS");
    cmd
}

fn run(args: &[&str], out_dir: &Path) -> Output {
    bin()
        .args(TINY)
        .arg("--out-dir")
        .arg(out_dir)
        .args(args)
        .output()
        .expect("binary should launch")
}

fn run_ok(args: &[&str], out_dir: &Path) -> Output {
    let output = run(args, out_dir);
    assert!(
        output.status.success(),
        "command {args:?} failed:\n{}",
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

fn run_err(args: &[&str], out_dir: &Path) -> String {
    let output = run(args, out_dir);
    assert!(
        !output.status.success(),
        "command {args:?} unexpectedly succeeded"
    );
    String::from_utf8_lossy(&output.stderr).into_owned()
}

#[test]
fn sweep_writes_csv_and_svg_per_emitter() {
    let dir = TempDir::new().unwrap();
    let stdout = run_ok(
        &[
            "sweep",
            "--theta",
            "1.5707963267948966",
            "--phi",
            "0",
            "--isotropic",
            "--separations",
            "20,60",
            "--modalities",
            "direct,unpolarized_iii",
        ],
        dir.path(),
    )
    .stdout;
    let stdout = String::from_utf8(stdout).unwrap();

    for name in [
        "sweep_theta1.5708_phi0.0000.csv",
        "sweep_theta1.5708_phi0.0000.svg",
        "sweep_isotropic.csv",
        "sweep_isotropic.svg",
    ] {
        assert!(dir.path().join(name).is_file(), "missing {name}");
        assert!(stdout.contains(name), "stdout does not mention {name}");
    }

    let csv = fs::read_to_string(dir.path().join("sweep_isotropic.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3, "header plus one row per separation");
    assert!(lines[0].starts_with("l_nm,qcrb_sigma_sqrtN_nm,direct_crb_sigma_sqrtN_nm"));
    // Requested separations sit on the 20 nm pixel lattice already and must
    // come back unchanged, in input order.
    assert!(lines[1].starts_with("2.00000000000e1,"));
    assert!(lines[2].starts_with("6.00000000000e1,"));
}

#[test]
fn reruns_and_thread_counts_leave_output_byte_identical() {
    let first = TempDir::new().unwrap();
    let second = TempDir::new().unwrap();
    let args = [
        "sweep",
        "--separations",
        "20,40,60",
        "--modalities",
        "direct,polarized_iii",
    ];

    let mut with_one = bin();
    with_one.env("DIPOLE_BOUNDS_THREADS", "1");
    let out = with_one
        .args(TINY)
        .arg("--out-dir")
        .arg(first.path())
        .args(args)
        .output()
        .unwrap();
    assert!(out.status.success());

    let mut with_two = bin();
    with_two.env("DIPOLE_BOUNDS_THREADS", "2");
    let out = with_two
        .args(TINY)
        .arg("--out-dir")
        .arg(second.path())
        .args(args)
        .output()
        .unwrap();
    assert!(out.status.success());

    let name = "sweep_theta1.5708_phi0.0000.csv";
    let a = fs::read(first.path().join(name)).unwrap();
    let b = fs::read(second.path().join(name)).unwrap();
    assert_eq!(a, b, "thread count changed the CSV bytes");

    let name = "sweep_theta1.5708_phi0.0000.svg";
    let a = fs::read(first.path().join(name)).unwrap();
    let b = fs::read(second.path().join(name)).unwrap();
    assert_eq!(a, b, "thread count changed the SVG bytes");
}

#[test]
fn polar_map_emits_full_grid_and_per_modality_plots() {
    let dir = TempDir::new().unwrap();
    run_ok(
        &[
            "polar-map",
            "--separation",
            "20",
            "--modalities",
            "direct,unpolarized_iii",
        ],
        dir.path(),
    );

    let csv = fs::read_to_string(dir.path().join("polar_map.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 7 * 7, "header plus 7x7 grid");
    assert!(csv.lines().next().unwrap().starts_with("theta_rad,phi_rad,l_nm"));
    assert!(dir.path().join("polar_map_direct.svg").is_file());
    assert!(dir.path().join("polar_map_unpolarized_iii.svg").is_file());
}

#[test]
fn images_writes_pfm_maps_and_reports_channel_shares() {
    let dir = TempDir::new().unwrap();
    let stdout = run_ok(
        &[
            "images",
            "--theta",
            "0",
            "--phi",
            "0",
            "--separation",
            "20",
            "--modalities",
            "unpolarized_iii",
        ],
        dir.path(),
    )
    .stdout;
    let stdout = String::from_utf8(stdout).unwrap();
    assert!(stdout.contains("snapped separation 20 nm"));
    assert!(stdout.contains("iii_out1"));

    for channel in ["iii_out1", "iii_out2"] {
        let path = dir
            .path()
            .join(format!("images_theta0.0000_phi0.0000_l20_{channel}.pfm"));
        let bytes = fs::read(&path).unwrap();
        assert!(bytes.starts_with(b"Pf\n31 31\n"), "bad PFM header in {path:?}");
        // Header plus one little-endian f32 per pixel.
        let header_len = bytes.iter().enumerate().filter(|(_, &b)| b == b'\n').nth(2).unwrap().0 + 1;
        assert_eq!(bytes.len() - header_len, 31 * 31 * 4);
    }
}

#[test]
fn config_file_is_applied_and_flags_override_it() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("params.cfg");
    fs::write(
        &config,
        "# reduced run\npupil_grid_side = 17\nimage_pixel_object_nm = 20\nimage_fov_object_nm = 600\n",
    )
    .unwrap();

    // File alone: grid 17.
    let out = bin()
        .args(["--profile", "desk", "--config", config.to_str().unwrap(), "--out-dir"])
        .arg(dir.path())
        .args(["sweep", "--separations", "20", "--modalities", "direct"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("pupil grid 17 x 17"));

    // Flag beats file: grid 33.
    let out = bin()
        .args(["--profile", "desk", "--config", config.to_str().unwrap(), "--pupil-grid-side", "33", "--out-dir"])
        .arg(dir.path())
        .args(["sweep", "--separations", "20", "--modalities", "direct"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("pupil grid 33 x 33"));
}

#[test]
fn malformed_inputs_exit_nonzero_with_diagnostics() {
    let dir = TempDir::new().unwrap();

    let stderr = run_err(&["sweep", "--modalities", "sideways_iii"], dir.path());
    assert!(stderr.contains("sideways_iii") && stderr.contains("valid labels"));

    let stderr = run_err(&["sweep", "--separation-range", "50:5:3"], dir.path());
    assert!(stderr.contains("separation range"));

    let stderr = run_err(&["sweep", "--theta", "0.5"], dir.path());
    assert!(stderr.contains("--phi"));

    let config = dir.path().join("bad.cfg");
    fs::write(&config, "pupil_grid_side = 17\nfocal_depth = 3\n").unwrap();
    let stderr = run_err(
        &["--config", config.to_str().unwrap(), "validate"],
        dir.path(),
    );
    // Unknown keys are rejected with the file location even though the
    // validate subcommand never builds a microscope.
    assert!(stderr.contains("focal_depth"), "stderr was: {stderr}");
    assert!(stderr.contains("bad.cfg:2"), "stderr was: {stderr}");

    // Without the shared tiny-grid arguments: those already set --profile.
    let out = bin().args(["--profile", "bench", "validate"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("bench"));
}

#[test]
fn validate_reports_every_check_and_exits_zero() {
    let dir = TempDir::new().unwrap();
    let stdout = run_ok(&["validate"], dir.path()).stdout;
    let stdout = String::from_utf8(stdout).unwrap();
    let passes = stdout.lines().filter(|l| l.starts_with("PASS")).count();
    assert!(passes >= 13, "expected at least 13 PASS lines:\n{stdout}");
    assert!(!stdout.contains("FAIL"));
    assert!(stdout.contains("all") && stdout.contains("checks passed"));
}
