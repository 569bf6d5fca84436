//! Acceptance suite, determinism criterion: identical configuration and
//! seed must produce byte-identical artifacts on rerun and under
//! varying thread counts — plus an end-to-end perturb/verify round trip
//! through the binary.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_whirlab"))
}

fn read_artifacts(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let entry = entry.unwrap();
        out.insert(
            entry.file_name().to_string_lossy().into_owned(),
            std::fs::read(entry.path()).unwrap(),
        );
    }
    out
}

fn run(args: &[&str], out_dir: &Path) -> std::process::Output {
    let mut cmd = bin();
    cmd.arg("--out").arg(out_dir).args(args);
    cmd.output().expect("binary runs")
}

/// Run the same invocation into two directories and demand identical
/// artifact bytes; returns the artifacts for further checks.
fn assert_identical(
    tmp: &Path,
    label: &str,
    args_a: &[&str],
    args_b: &[&str],
) -> BTreeMap<String, Vec<u8>> {
    let dir_a = tmp.join(format!("{label}-a"));
    let dir_b = tmp.join(format!("{label}-b"));
    let out_a = run(args_a, &dir_a);
    let out_b = run(args_b, &dir_b);
    assert_eq!(
        out_a.status.code(),
        out_b.status.code(),
        "{label}: exit codes differ"
    );
    let arts_a = read_artifacts(&dir_a);
    let arts_b = read_artifacts(&dir_b);
    assert_eq!(
        arts_a.keys().collect::<Vec<_>>(),
        arts_b.keys().collect::<Vec<_>>(),
        "{label}: artifact sets differ"
    );
    for (name, bytes) in &arts_a {
        assert_eq!(
            bytes, &arts_b[name],
            "{label}: artifact {name} is not byte-identical"
        );
    }
    arts_a
}

#[test]
fn criterion_8_byte_identical_artifacts() {
    let tmp = std::env::temp_dir().join(format!("whirlab-accept-{}", std::process::id()));
    std::fs::create_dir_all(&tmp).unwrap();

    let perturb = [
        "perturb",
        "--t0",
        "baker:14",
        "--m",
        "1",
        "--eps",
        "1/32",
        "--a",
        "rand:8192:21",
        "--b",
        "rand:8192:22",
    ];
    assert_identical(&tmp, "perturb", &perturb, &perturb);

    let whirly = [
        "whirly",
        "--t",
        "rot:1/3:10",
        "--a",
        "[0,1/4)",
        "--b",
        "[1/2,3/4)",
        "--m",
        "1",
        "--no-zero",
        "--bound",
        "1024",
    ];
    // rerun and thread-count variation must agree byte for byte
    assert_identical(&tmp, "whirly-rerun", &whirly, &whirly);
    let mut whirly_t1: Vec<&str> = vec!["--threads", "1"];
    whirly_t1.extend_from_slice(&whirly);
    let mut whirly_t4: Vec<&str> = vec!["--threads", "4"];
    whirly_t4.extend_from_slice(&whirly);
    assert_identical(&tmp, "whirly-threads", &whirly_t1, &whirly_t4);

    let scan = [
        "scan",
        "--sampler",
        "rand:8:2",
        "--pairs",
        "4",
        "--m-max",
        "2",
        "--bound",
        "64",
        "--seed",
        "9",
    ];
    assert_identical(&tmp, "scan", &scan, &scan);

    let concentration = [
        "concentration",
        "--space",
        "cube:32",
        "--space",
        "tower:3",
        "--eps",
        "0.05,0.1",
        "--samples",
        "20000",
        "--seed",
        "5",
    ];
    assert_identical(&tmp, "concentration", &concentration, &concentration);

    let urysohn = [
        "urysohn",
        "--group",
        "shift:1:6",
        "--power-bound",
        "64",
        "--target",
        "[0,1/2)",
        "--depth",
        "6",
        "--eps",
        "1/4",
    ];
    assert_identical(&tmp, "urysohn", &urysohn, &urysohn);

    let skew = [
        "skew",
        "--t",
        "shift:1:4",
        "--alpha",
        "1/5",
        "--m",
        "2",
        "--eps",
        "1/10",
        "--bound",
        "200",
    ];
    let arts = assert_identical(&tmp, "skew", &skew, &skew);
    assert!(arts.contains_key("manifest.json"));

    let rigidity = [
        "rigidity",
        "--t",
        "rot:1/3:10",
        "--m",
        "2",
        "--bound",
        "2048",
    ];
    assert_identical(&tmp, "rigidity", &rigidity, &rigidity);

    let vkm = [
        "vkm",
        "--t",
        "rand:8:seed=4",
        "--a",
        "rand:128:5",
        "--b",
        "rand:128:6",
        "--m",
        "1",
        "--bound",
        "64",
    ];
    assert_identical(&tmp, "vkm", &vkm, &vkm);

    let stable = [
        "stable",
        "--group",
        "shift:4:5",
        "--power-bound",
        "8",
        "--set",
        "[0,1/8)u[1/4,3/8)u[1/2,5/8)u[3/4,7/8)",
        "--depth",
        "5",
    ];
    assert_identical(&tmp, "stable", &stable, &stable);

    let separate = [
        "separate",
        "--group",
        "shift:4:5",
        "--power-bound",
        "8",
        "--set",
        "[0,1/8)u[1/4,3/8)u[1/2,5/8)u[3/4,7/8)",
        "--depth",
        "5",
        "--eps",
        "1/10",
    ];
    assert_identical(&tmp, "separate", &separate, &separate);

    let ip = [
        "ip",
        "--t",
        "shift:1:4",
        "--a",
        "full",
        "--b",
        "full",
        "--m",
        "2",
        "--k",
        "3",
        "--bound",
        "200",
    ];
    assert_identical(&tmp, "ip", &ip, &ip);

    let product = [
        "product-whirly",
        "--t",
        "rot:1/3:8",
        "--order",
        "2",
        "--a",
        "[0,1/4);[0,1/4)",
        "--b",
        "[1/2,3/4);[1/2,3/4)",
        "--m",
        "1",
        "--bound",
        "256",
        "--no-zero",
    ];
    assert_identical(&tmp, "product-whirly", &product, &product);

    // verify (re-check of a fixed perturb artifact)
    let pdir = tmp.join("verify-input");
    let out = run(&perturb, &pdir);
    assert_eq!(out.status.code(), Some(0));
    let bundle = pdir.join("certificate.json");
    let verify = ["verify", "--bundle", bundle.to_str().unwrap()];
    assert_identical(&tmp, "verify", &verify, &verify);

    std::fs::remove_dir_all(&tmp).ok();
    println!("[PASS] criterion 8: byte-identical artifacts across reruns and thread counts, all 13 subcommands");
}

#[test]
fn resolution_cap_env_var_gives_resource_exit() {
    let tmp = std::env::temp_dir().join(format!("whirlab-cap-{}", std::process::id()));
    std::fs::create_dir_all(&tmp).unwrap();
    let mut cmd = bin();
    cmd.arg("--out")
        .arg(tmp.join("run"))
        .args(["rigidity", "--t", "shift:1:10", "--m", "1", "--bound", "4"])
        .env("WHIRLAB_RES_CAP", "8");
    let out = cmd.output().unwrap();
    assert_eq!(out.status.code(), Some(3), "{out:?}");
    std::fs::remove_dir_all(&tmp).ok();
}

#[test]
fn perturb_verify_round_trip_through_binary() {
    let tmp = std::env::temp_dir().join(format!("whirlab-e2e-{}", std::process::id()));
    std::fs::create_dir_all(&tmp).unwrap();
    let pdir = tmp.join("perturb");
    for m in ["1", "2"] {
        let out = run(
            &[
                "perturb",
                "--t0",
                "baker:16",
                "--m",
                m,
                "--eps",
                "1/32",
                "--a",
                "rand:32768:31",
                "--b",
                "rand:24576:32",
            ],
            &pdir,
        );
        assert_eq!(out.status.code(), Some(0), "m={m}: {out:?}");
        let bundle = pdir.join("certificate.json");
        let vdir = tmp.join(format!("verify-{m}"));
        let out = run(&["verify", "--bundle", bundle.to_str().unwrap()], &vdir);
        assert_eq!(out.status.code(), Some(0), "verification failed: {out:?}");

        // a tampered certificate must be rejected with the violated
        // inequality named
        let text = std::fs::read_to_string(&bundle).unwrap();
        let mut value: serde_json::Value = serde_json::from_str(&text).unwrap();
        let map = value["s"]["map"].as_array_mut().unwrap();
        map.swap(0, 1);
        let tampered = tmp.join(format!("tampered-{m}.json"));
        std::fs::write(&tampered, serde_json::to_vec(&value).unwrap()).unwrap();
        let tdir = tmp.join(format!("verify-tampered-{m}"));
        let out = run(&["verify", "--bundle", tampered.to_str().unwrap()], &tdir);
        assert_eq!(out.status.code(), Some(1), "tampered bundle accepted");
        let report: serde_json::Value =
            serde_json::from_slice(&std::fs::read(tdir.join("verification.json")).unwrap())
                .unwrap();
        assert_eq!(report["valid"], serde_json::Value::Bool(false));
        assert!(!report["violations"].as_array().unwrap().is_empty());
    }
    std::fs::remove_dir_all(&tmp).ok();
    println!("[PASS] perturb -> verify round trip through the binary, tampering detected");
}

#[test]
fn config_file_dispatch() {
    let tmp = std::env::temp_dir().join(format!("whirlab-cfg-{}", std::process::id()));
    std::fs::create_dir_all(&tmp).unwrap();
    let cfg = tmp.join("job.json");
    std::fs::write(
        &cfg,
        serde_json::to_vec(&serde_json::json!({
            "command": "rigidity",
            "args": { "t": "rot:1/3:10", "m": 2, "bound": 2048 }
        }))
        .unwrap(),
    )
    .unwrap();
    let dir = tmp.join("run");
    let out = run(&["config", cfg.to_str().unwrap()], &dir);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.join("rigidity.json")).unwrap()).unwrap();
    assert_eq!(report["exponent"], serde_json::json!(3));

    // schema violations are rejected
    std::fs::write(
        &cfg,
        serde_json::to_vec(&serde_json::json!({
            "command": "rigidity",
            "args": { "t": "rot:1/3:10", "m": 2, "bogus": true }
        }))
        .unwrap(),
    )
    .unwrap();
    let out = run(&["config", cfg.to_str().unwrap()], &tmp.join("run2"));
    assert_eq!(out.status.code(), Some(2));
    std::fs::remove_dir_all(&tmp).ok();
}
