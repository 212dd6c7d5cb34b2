use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn imdd_sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_imdd-sim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

#[test]
fn response_reports_notches_and_writes_csv_and_svg() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(&imdd_sim(&["response", "--out", path(dir.path()), "--svg"]));
    assert!(stdout.contains("baseline notches (10 km): [33.75"), "{stdout}");
    assert!(stdout.contains("38.9 GHz"), "{stdout}");
    let csv = fs::read_to_string(dir.path().join("response_seed1.csv")).unwrap();
    assert!(csv.starts_with("freq_ghz,baseline_db,dual_tap_db,pi_form_db,zero_form_db\n"));
    assert!(dir.path().join("response_seed1.svg").exists());
    let manifest = fs::read_to_string(dir.path().join("run-manifest_response_seed1.txt")).unwrap();
    assert!(manifest.contains(concat!("imdd-sim ", env!("CARGO_PKG_VERSION"))));
    assert!(manifest.contains("fiber.length_km = 10"));
}

#[test]
fn manifest_round_trips_as_a_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path());
    ok(&imdd_sim(&["zeros", "--out", out, "--seed", "9", "--set", "fiber.length_km=12"]));
    let manifest = dir.path().join("run-manifest_zeros_seed9.txt");
    let again = dir.path().join("again");
    ok(&imdd_sim(&["zeros", "--config", path(&manifest), "--out", path(&again)]));
    let a = fs::read_to_string(dir.path().join("zeros_seed9.csv")).unwrap();
    let b = fs::read_to_string(again.join("zeros_seed9.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn sweep_csv_is_identical_for_any_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("rop.conf");
    fs::write(
        &cfg,
        "# short ROP sweep\nsweep.rop_min_dbm = -6\nsweep.rop_max_dbm = -2\nsweep.rop_step_db = 2\n",
    )
    .unwrap();
    let run = |jobs: &str, sub: &str| {
        let out = dir.path().join(sub);
        ok(&imdd_sim(&[
            "sweep-rop", "--smoke", "--config", path(&cfg), "--jobs", jobs, "--seed", "5",
            "--out", path(&out), "--svg",
        ]));
        fs::read(out.join("sweep-rop_seed5.csv")).unwrap()
    };
    let one = run("1", "j1");
    let eight = run("8", "j8");
    assert_eq!(one, eight);
    let text = String::from_utf8(one).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "rop_dbm,variant,snr_db,ber,n_bits,fec_pass,seed,config_hash");
    assert_eq!(lines.len(), 1 + 3 * 3);
    assert!(!text.contains('\r'));
    assert!(dir.path().join("j1/sweep-rop_seed5.svg").exists());
}

#[test]
fn run_prints_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(&imdd_sim(&[
        "run", "--smoke", "--out", path(dir.path()), "--set", "optical.kind=dt", "--set", "tx.sps=8",
    ]));
    assert!(stdout.starts_with("SNR "), "{stdout}");
    let csv = fs::read_to_string(dir.path().join("run_seed1.csv")).unwrap();
    assert!(csv.starts_with("length_km,rop_dbm,optical,dsp,snr_db"));
    assert!(csv.lines().nth(1).unwrap().starts_with("10,-6,dt,ffe,"));
}

#[test]
fn unknown_config_key_is_rejected_with_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.conf");
    fs::write(&cfg, "fiber.length_km = 5\nfiber.colour = blue\n").unwrap();
    let out = imdd_sim(&["response", "--config", path(&cfg), "--out", path(dir.path())]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2") && err.contains("fiber.colour"), "{err}");
}

#[test]
fn invalid_settings_fail_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let out = imdd_sim(&["run", "--set", "rop_dbm=20", "--out", path(dir.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("ROP"));
    let out = imdd_sim(&["run", "--jobs", "0", "--out", path(dir.path())]);
    assert!(!out.status.success());
}
