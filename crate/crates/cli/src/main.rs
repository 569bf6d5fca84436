//! Batch front-end: every laboratory operation as a subcommand with
//! deterministic seeds and JSON/CSV artifacts.
//!
//! Each run writes its artifacts plus a `manifest.json` recording the
//! resolved configuration, seeds and outputs, so a run can be audited
//! or reproduced byte for byte without the original process. Exit
//! codes: 0 success, 1 no witness / certificate (still an artifact),
//! 2 invalid input, 3 resource cap.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use serde::Serialize;
use serde_json::json;

use whirlab::concentration::{concentration_profile, ConcentrationSpace};
use whirlab::exact::{parse_frac, to_frac_string, Rat};
use whirlab::ip::{ip_prefix, skew_rigidity, whirly_all_orders_probe};
use whirlab::perturb::{
    generic_scan, v_km_member, verify_bundle, whirly_perturb, CertificateBundle,
    PerturbationParams, SamplerSpec,
};
use whirlab::stable::{is_stable, separate, urysohn, ActionTruncation};
use whirlab::whirly::{rigidity_witness, whirly_witness_chunked};
use whirlab::{DyadicPermutation, DyadicSet, Error, GroupTruncation, NeighborhoodSpec};

#[derive(Parser)]
#[command(name = "whirlab", version, about = "exact dyadic dynamics laboratory")]
struct Cli {
    /// Directory for artifacts and the run manifest.
    #[arg(long, default_value = "out", global = true)]
    out: PathBuf,
    /// Worker threads for exponent scans (results are independent of
    /// the thread count).
    #[arg(long, default_value_t = 1, global = true)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a perturbation of T0 with a verified whirly certificate.
    Perturb(PerturbArgs),
    /// Re-check a serialized certificate bundle bit-exactly.
    Verify(VerifyArgs),
    /// Scan for a whirly witness of (T, A, B) at grid scale m.
    Whirly(WhirlyArgs),
    /// Scan for the smallest rigidity return time of T at scale m.
    Rigidity(RigidityArgs),
    /// Scan for a V_{k,m} witness (whirly witness with a quantitative
    /// intersection threshold).
    Vkm(VkmArgs),
    /// Pass-rate table of V_{k,m} witnesses over a sampled family.
    Scan(ScanArgs),
    /// Stability test of a set under a truncated group action.
    Stable(StableArgs),
    /// Separation of a stable set from its complement.
    Separate(SeparateArgs),
    /// Urysohn-style construction of a group-continuous step function.
    Urysohn(UrysohnArgs),
    /// IP-prefix search with exhaustive sum verification.
    Ip(IpArgs),
    /// Simultaneous rigidity of T and a circle rotation.
    Skew(SkewArgs),
    /// Whirly witness scan for the diagonal action on a product power.
    ProductWhirly(ProductWhirlyArgs),
    /// Monte-Carlo concentration profile of a product family.
    Concentration(ConcentrationArgs),
    /// Run any subcommand from a JSON config file.
    Config(ConfigArgs),
}

#[derive(Args, Clone, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct PerturbArgs {
    /// Generator spec for T0 (for example baker:16).
    #[arg(long)]
    t0: String,
    #[arg(long)]
    m: u32,
    /// Closeness budget, a fraction like 1/32.
    #[arg(long)]
    eps: String,
    /// Set spec for A (intervals, hex:..., full, rand:<cells>:<seed>).
    #[arg(long)]
    a: String,
    #[arg(long)]
    b: String,
    #[arg(long, default_value = "1/100")]
    #[serde(default = "default_eta")]
    eta: String,
    #[arg(long, default_value_t = 4096)]
    #[serde(default = "default_horizon")]
    horizon: u64,
    /// Skip the mixing-score pre-check on T0.
    #[arg(long, default_value_t = false)]
    #[serde(default)]
    no_mixing_check: bool,
}

fn default_eta() -> String {
    "1/100".into()
}

fn default_horizon() -> u64 {
    4096
}

#[derive(Args, Clone, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct VerifyArgs {
    /// Path to a certificate bundle JSON written by `perturb`.
    #[arg(long)]
    bundle: PathBuf,
}

#[derive(Args, Clone, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct WhirlyArgs {
    #[arg(long)]
    t: String,
    #[arg(long)]
    a: String,
    #[arg(long)]
    b: String,
    #[arg(long)]
    m: u32,
    #[arg(long, default_value_t = 4096)]
    #[serde(default = "default_horizon")]
    bound: u64,
    /// Exclude the exponent n = 0 from the scan.
    #[arg(long, default_value_t = false)]
    #[serde(default)]
    no_zero: bool,
}

#[derive(Args, Clone, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct RigidityArgs {
    #[arg(long)]
    t: String,
    #[arg(long)]
    m: u32,
    #[arg(long, default_value_t = 4096)]
    #[serde(default = "default_horizon")]
    bound: u64,
}

#[derive(Args, Clone, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct VkmArgs {
    #[arg(long)]
    t: String,
    #[arg(long)]
    a: String,
    #[arg(long)]
    b: String,
    #[arg(long)]
    m: u32,
    /// Intersection coefficient; defaults to 2^-2m / 10.
    #[arg(long)]
    #[serde(default)]
    delta: Option<String>,
    #[arg(long, default_value_t = 4096)]
    #[serde(default = "default_horizon")]
    bound: u64,
}

#[derive(Args, Clone, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct ScanArgs {
    /// Sampler spec: id:<n>, baker:<n>, rand:<n>:<count>, rot:<n>:<count>.
    #[arg(long)]
    sampler: String,
    #[arg(long, default_value_t = 8)]
    #[serde(default = "default_pairs")]
    pairs: u32,
    #[arg(long, default_value_t = 2)]
    #[serde(default = "default_m_max")]
    m_max: u32,
    #[arg(long, default_value_t = 256)]
    #[serde(default = "default_bound")]
    bound: u64,
    #[arg(long, default_value_t = 1)]
    #[serde(default = "default_seed")]
    seed: u64,
    /// Draw B inside the complement of A.
    #[arg(long, default_value_t = false)]
    #[serde(default)]
    disjoint_pairs: bool,
    /// Exclude the exponent n = 0.
    #[arg(long, default_value_t = false)]
    #[serde(default)]
    no_zero: bool,
}

fn default_pairs() -> u32 {
    8
}
fn default_m_max() -> u32 {
    2
}
fn default_bound() -> u64 {
    256
}
fn default_seed() -> u64 {
    1
}

#[derive(Args, Clone, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct StableArgs {
    /// Group generator spec.
    #[arg(long)]
    group: String,
    /// Power bound of the truncation.
    #[arg(long, default_value_t = whirlab::perm::DEFAULT_POWER_BOUND)]
    #[serde(default = "default_power_bound")]
    power_bound: u64,
    #[arg(long)]
    set: String,
    #[arg(long)]
    depth: u32,
}

fn default_power_bound() -> u64 {
    whirlab::perm::DEFAULT_POWER_BOUND
}

#[derive(Args, Clone, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct SeparateArgs {
    #[arg(long)]
    group: String,
    #[arg(long, default_value_t = whirlab::perm::DEFAULT_POWER_BOUND)]
    #[serde(default = "default_power_bound")]
    power_bound: u64,
    #[arg(long)]
    set: String,
    #[arg(long)]
    depth: u32,
    #[arg(long)]
    eps: String,
}

#[derive(Args, Clone, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct UrysohnArgs {
    #[arg(long)]
    group: String,
    #[arg(long, default_value_t = whirlab::perm::DEFAULT_POWER_BOUND)]
    #[serde(default = "default_power_bound")]
    power_bound: u64,
    #[arg(long)]
    target: String,
    #[arg(long)]
    depth: u32,
    #[arg(long)]
    eps: String,
}

#[derive(Args, Clone, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct IpArgs {
    #[arg(long)]
    t: String,
    #[arg(long)]
    a: String,
    #[arg(long)]
    b: String,
    #[arg(long)]
    m: u32,
    #[arg(long)]
    k: u32,
    #[arg(long, default_value_t = 4096)]
    #[serde(default = "default_horizon")]
    bound: u64,
}

#[derive(Args, Clone, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct SkewArgs {
    #[arg(long)]
    t: String,
    /// Rotation angle p/q.
    #[arg(long)]
    alpha: String,
    #[arg(long)]
    m: u32,
    #[arg(long)]
    eps: String,
    #[arg(long, default_value_t = 4096)]
    #[serde(default = "default_horizon")]
    bound: u64,
}

#[derive(Args, Clone, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct ProductWhirlyArgs {
    #[arg(long)]
    t: String,
    #[arg(long)]
    order: usize,
    /// Semicolon-joined factor specs for the first box.
    #[arg(long)]
    a: String,
    #[arg(long)]
    b: String,
    #[arg(long)]
    m: u32,
    #[arg(long, default_value_t = 1024)]
    #[serde(default = "default_product_bound")]
    bound: u64,
    #[arg(long, default_value_t = false)]
    #[serde(default)]
    no_zero: bool,
}

fn default_product_bound() -> u64 {
    1024
}

#[derive(Args, Clone, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct ConcentrationArgs {
    /// Space spec: cube:<d>, torus:<d>, sym:<d>, tower:<stage>.
    #[arg(long)]
    space: Vec<String>,
    /// Comma-separated eps grid.
    #[arg(long, default_value = "0.05,0.1,0.2")]
    #[serde(default = "default_eps_grid")]
    eps: String,
    #[arg(long, default_value_t = 100_000)]
    #[serde(default = "default_samples")]
    samples: u64,
    #[arg(long, default_value_t = 1)]
    #[serde(default = "default_seed")]
    seed: u64,
}

fn default_eps_grid() -> String {
    "0.05,0.1,0.2".into()
}
fn default_samples() -> u64 {
    100_000
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// JSON file of the form {"command": "whirly", "args": {...}}.
    path: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.out, cli.threads, &cli.command) {
        Ok(found) => {
            if found {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            let code = match &e {
                Error::ResolutionCap { .. } | Error::ProductCap { .. } => 3,
                Error::Parse(_) | Error::Degenerate(_) | Error::Precision { .. } => 2,
                _ => 1,
            };
            ExitCode::from(code)
        }
    }
}

/// Dispatch; `Ok(false)` means "ran fine, no witness/certificate".
fn run(out: &Path, threads: usize, command: &Command) -> Result<bool, Error> {
    std::fs::create_dir_all(out)
        .map_err(|e| Error::Parse(format!("cannot create {}: {e}", out.display())))?;
    match command {
        Command::Perturb(args) => cmd_perturb(out, args),
        Command::Verify(args) => cmd_verify(out, args),
        Command::Whirly(args) => cmd_whirly(out, threads, args),
        Command::Rigidity(args) => cmd_rigidity(out, args),
        Command::Vkm(args) => cmd_vkm(out, args),
        Command::Scan(args) => cmd_scan(out, args),
        Command::Stable(args) => cmd_stable(out, args),
        Command::Separate(args) => cmd_separate(out, args),
        Command::Urysohn(args) => cmd_urysohn(out, args),
        Command::Ip(args) => cmd_ip(out, args),
        Command::Skew(args) => cmd_skew(out, args),
        Command::ProductWhirly(args) => cmd_product_whirly(out, args),
        Command::Concentration(args) => cmd_concentration(out, args),
        Command::Config(args) => cmd_config(out, threads, args),
    }
}

fn cmd_config(out: &Path, threads: usize, args: &ConfigArgs) -> Result<bool, Error> {
    let text = std::fs::read_to_string(&args.path)
        .map_err(|e| Error::Parse(format!("cannot read config: {e}")))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("bad config JSON: {e}")))?;
    let name = value
        .get("command")
        .and_then(|v| v.as_str())
        .ok_or_else(|| Error::Parse("config needs a \"command\" field".into()))?;
    let body = value
        .get("args")
        .cloned()
        .ok_or_else(|| Error::Parse("config needs an \"args\" object".into()))?;
    macro_rules! dispatch {
        ($ty:ty, $variant:ident) => {{
            let parsed: $ty = serde_json::from_value(body)
                .map_err(|e| Error::Parse(format!("bad args for {name}: {e}")))?;
            run(out, threads, &Command::$variant(parsed))
        }};
    }
    match name {
        "perturb" => dispatch!(PerturbArgs, Perturb),
        "verify" => dispatch!(VerifyArgs, Verify),
        "whirly" => dispatch!(WhirlyArgs, Whirly),
        "rigidity" => dispatch!(RigidityArgs, Rigidity),
        "vkm" => dispatch!(VkmArgs, Vkm),
        "scan" => dispatch!(ScanArgs, Scan),
        "stable" => dispatch!(StableArgs, Stable),
        "separate" => dispatch!(SeparateArgs, Separate),
        "urysohn" => dispatch!(UrysohnArgs, Urysohn),
        "ip" => dispatch!(IpArgs, Ip),
        "skew" => dispatch!(SkewArgs, Skew),
        "product-whirly" => dispatch!(ProductWhirlyArgs, ProductWhirly),
        "concentration" => dispatch!(ConcentrationArgs, Concentration),
        other => Err(Error::Parse(format!("unknown command {other:?}"))),
    }
}

/// Set specs understood by the CLI: everything the library parses plus
/// `rand:<cells>:<seed>` for seeded random sets.
fn parse_set(spec: &str, resolution: u32) -> Result<DyadicSet, Error> {
    if let Some(rest) = spec.strip_prefix("rand:") {
        let (cells, seed) = rest
            .split_once(':')
            .ok_or_else(|| Error::Parse("rand set spec needs rand:<cells>:<seed>".into()))?;
        let cells: usize = cells
            .parse()
            .map_err(|_| Error::Parse(format!("bad cell count {cells:?}")))?;
        let seed: u64 = seed
            .parse()
            .map_err(|_| Error::Parse(format!("bad seed {seed:?}")))?;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        return DyadicSet::random(resolution, cells, &mut rng);
    }
    DyadicSet::parse(spec, resolution)
}

fn write_artifact(out: &Path, name: &str, bytes: &[u8]) -> Result<(), Error> {
    std::fs::write(out.join(name), bytes)
        .map_err(|e| Error::Parse(format!("cannot write {name}: {e}")))
}

fn write_json<T: Serialize>(out: &Path, name: &str, value: &T) -> Result<(), Error> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| Error::Parse(format!("serialize {name}: {e}")))?;
    bytes.push(b'\n');
    write_artifact(out, name, &bytes)
}

fn write_manifest(
    out: &Path,
    command: &str,
    config: serde_json::Value,
    artifacts: &[&str],
    outcome: &str,
) -> Result<(), Error> {
    write_json(
        out,
        "manifest.json",
        &json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "config": config,
            "artifacts": artifacts,
            "outcome": outcome,
        }),
    )
}

fn cmd_perturb(out: &Path, args: &PerturbArgs) -> Result<bool, Error> {
    let t0 = DyadicPermutation::from_spec(&args.t0)?;
    let a = parse_set(&args.a, t0.resolution())?;
    let b = parse_set(&args.b, t0.resolution())?;
    let mut params = PerturbationParams::new(args.m, parse_frac(&args.eps)?);
    params.eta = parse_frac(&args.eta)?;
    params.horizon = args.horizon;
    if args.no_mixing_check {
        params.mixing_threshold = None;
    }
    let config = json!({
        "t0": args.t0, "m": args.m, "eps": args.eps, "a": args.a, "b": args.b,
        "eta": args.eta, "horizon": args.horizon, "no_mixing_check": args.no_mixing_check,
    });
    match whirly_perturb(&t0, &a, &b, &params) {
        Ok(outcome) => {
            let bundle = CertificateBundle {
                t0,
                s: outcome.s,
                a,
                b,
                params,
                certificate: outcome.certificate,
            };
            write_json(out, "certificate.json", &bundle)?;
            write_json(out, "diagnostics.json", &outcome.diagnostics)?;
            write_manifest(
                out,
                "perturb",
                config,
                &["certificate.json", "diagnostics.json"],
                "certificate",
            )?;
            println!(
                "certificate: n0={} N={} closeness={} defect={} lhs={} rhs={}",
                bundle.certificate.n0,
                bundle.certificate.big_n,
                to_frac_string(&bundle.certificate.closeness),
                to_frac_string(&bundle.certificate.um_defect),
                to_frac_string(&bundle.certificate.bound_lhs),
                to_frac_string(&bundle.certificate.bound_rhs),
            );
            Ok(true)
        }
        Err(
            e @ (Error::NoMixing { .. }
            | Error::FrequencyFailure(_)
            | Error::CertificateFailure(_)
            | Error::TowerInfeasible { .. }),
        ) => {
            write_json(out, "failure.json", &json!({ "error": e.to_string() }))?;
            write_manifest(out, "perturb", config, &["failure.json"], "no-certificate")?;
            println!("no certificate: {e}");
            Ok(false)
        }
        Err(e) => Err(e),
    }
}

fn cmd_verify(out: &Path, args: &VerifyArgs) -> Result<bool, Error> {
    let text = std::fs::read_to_string(&args.bundle)
        .map_err(|e| Error::Parse(format!("cannot read bundle: {e}")))?;
    let bundle: CertificateBundle =
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("bad bundle: {e}")))?;
    let violations = verify_bundle(&bundle)?;
    let ok = violations.is_empty();
    write_json(
        out,
        "verification.json",
        &json!({ "valid": ok, "violations": violations }),
    )?;
    write_manifest(
        out,
        "verify",
        json!({ "bundle": args.bundle.display().to_string() }),
        &["verification.json"],
        if ok { "valid" } else { "invalid" },
    )?;
    if ok {
        println!("certificate verifies");
    } else {
        for v in &violations {
            println!("violated: {} ({})", v.inequality, v.detail);
        }
    }
    Ok(ok)
}

fn csv_rat(r: &Rat) -> String {
    to_frac_string(r)
}

fn cmd_whirly(out: &Path, threads: usize, args: &WhirlyArgs) -> Result<bool, Error> {
    let t = DyadicPermutation::from_spec(&args.t)?;
    let a = parse_set(&args.a, t.resolution())?;
    let b = parse_set(&args.b, t.resolution())?;
    let witness = whirly_witness_chunked(&t, &a, &b, args.m, args.bound, !args.no_zero, threads)?;
    let mut csv = String::from("generator,a,b,m,n,defect,intersection\n");
    match &witness {
        Some(w) => csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            args.t,
            args.a,
            args.b,
            args.m,
            w.exponent,
            csv_rat(&w.grid_defect),
            csv_rat(&w.intersection),
        )),
        None => csv.push_str(&format!(
            "{},{},{},{},none,,\n",
            args.t, args.a, args.b, args.m
        )),
    }
    write_artifact(out, "whirly.csv", csv.as_bytes())?;
    write_json(out, "whirly.json", &witness)?;
    write_manifest(
        out,
        "whirly",
        json!({
            "t": args.t, "a": args.a, "b": args.b, "m": args.m,
            "bound": args.bound, "no_zero": args.no_zero,
        }),
        &["whirly.csv", "whirly.json"],
        if witness.is_some() { "witness" } else { "none" },
    )?;
    match &witness {
        Some(w) => println!("witness n = {}", w.exponent),
        None => println!("no witness within |n| <= {}", args.bound),
    }
    Ok(witness.is_some())
}

fn cmd_rigidity(out: &Path, args: &RigidityArgs) -> Result<bool, Error> {
    let t = DyadicPermutation::from_spec(&args.t)?;
    let witness = rigidity_witness(&t, args.m, args.bound)?;
    write_json(out, "rigidity.json", &witness)?;
    write_manifest(
        out,
        "rigidity",
        json!({ "t": args.t, "m": args.m, "bound": args.bound }),
        &["rigidity.json"],
        if witness.is_some() { "witness" } else { "none" },
    )?;
    match &witness {
        Some(w) => println!("rigidity return time n = {}", w.exponent),
        None => println!("no return time within {}", args.bound),
    }
    Ok(witness.is_some())
}

fn cmd_vkm(out: &Path, args: &VkmArgs) -> Result<bool, Error> {
    let t = DyadicPermutation::from_spec(&args.t)?;
    let a = parse_set(&args.a, t.resolution())?;
    let b = parse_set(&args.b, t.resolution())?;
    let delta = match &args.delta {
        Some(d) => parse_frac(d)?,
        None => whirlab::perturb::default_delta(args.m),
    };
    let witness = v_km_member(&t, &a, &b, args.m, &delta, args.bound)?;
    write_json(out, "vkm.json", &witness)?;
    write_manifest(
        out,
        "vkm",
        json!({
            "t": args.t, "a": args.a, "b": args.b, "m": args.m,
            "delta": to_frac_string(&delta), "bound": args.bound,
        }),
        &["vkm.json"],
        if witness.is_some() { "witness" } else { "none" },
    )?;
    match &witness {
        Some(w) => println!("V witness n = {}", w.exponent),
        None => println!("no V witness within |n| <= {}", args.bound),
    }
    Ok(witness.is_some())
}

fn cmd_scan(out: &Path, args: &ScanArgs) -> Result<bool, Error> {
    let sampler = SamplerSpec::parse(&args.sampler)?;
    let table = generic_scan(
        &sampler,
        args.pairs,
        args.m_max,
        args.bound,
        args.seed,
        args.disjoint_pairs,
        !args.no_zero,
    )?;
    let mut csv = String::from("m,attempts,hits\n");
    for row in &table.rows {
        csv.push_str(&format!("{},{},{}\n", row.m, row.attempts, row.hits));
    }
    write_artifact(out, "scan.csv", csv.as_bytes())?;
    write_json(out, "scan.json", &table)?;
    write_manifest(
        out,
        "scan",
        json!({
            "sampler": args.sampler, "pairs": args.pairs, "m_max": args.m_max,
            "bound": args.bound, "seed": args.seed,
            "disjoint_pairs": args.disjoint_pairs, "no_zero": args.no_zero,
        }),
        &["scan.csv", "scan.json"],
        "table",
    )?;
    println!("pass rate {}", to_frac_string(&table.pass_rate));
    Ok(true)
}

fn build_action(
    group_spec: &str,
    power_bound: u64,
    depth: u32,
) -> Result<(ActionTruncation, u32), Error> {
    let generator = DyadicPermutation::from_spec(group_spec)?;
    let resolution = generator.resolution();
    let group = GroupTruncation::cyclic(generator, power_bound);
    Ok((ActionTruncation::build(&group, depth)?, resolution))
}

fn cmd_stable(out: &Path, args: &StableArgs) -> Result<bool, Error> {
    let (action, resolution) = build_action(&args.group, args.power_bound, args.depth)?;
    let set = parse_set(&args.set, resolution)?;
    let report = is_stable(&set, &action, args.depth)?;
    write_json(
        out,
        "stable.json",
        &json!({ "stable": report.stable, "defect": to_frac_string(&report.defect) }),
    )?;
    write_manifest(
        out,
        "stable",
        json!({
            "group": args.group, "power_bound": args.power_bound,
            "set": args.set, "depth": args.depth,
        }),
        &["stable.json"],
        if report.stable { "stable" } else { "unstable" },
    )?;
    println!(
        "{} (defect {})",
        if report.stable { "stable" } else { "unstable" },
        to_frac_string(&report.defect)
    );
    Ok(true)
}

fn cmd_separate(out: &Path, args: &SeparateArgs) -> Result<bool, Error> {
    let (action, resolution) = build_action(&args.group, args.power_bound, args.depth)?;
    let set = parse_set(&args.set, resolution)?;
    let eps = parse_frac(&args.eps)?;
    let config = json!({
        "group": args.group, "power_bound": args.power_bound,
        "set": args.set, "depth": args.depth, "eps": args.eps,
    });
    match separate(&set, &eps, &action, args.depth) {
        Ok(sep) => {
            write_json(
                out,
                "separate.json",
                &json!({ "d": sep.d, "m": sep.m, "k": sep.k }),
            )?;
            write_manifest(out, "separate", config, &["separate.json"], "separated")?;
            println!("separated with m = {}, k = {}", sep.m, sep.k);
            Ok(true)
        }
        Err(e @ Error::SeparationFailed(_)) => {
            write_json(out, "failure.json", &json!({ "error": e.to_string() }))?;
            write_manifest(out, "separate", config, &["failure.json"], "failed")?;
            println!("separation failed: {e}");
            Ok(false)
        }
        Err(e) => Err(e),
    }
}

fn cmd_urysohn(out: &Path, args: &UrysohnArgs) -> Result<bool, Error> {
    let (action, resolution) = build_action(&args.group, args.power_bound, args.depth)?;
    let target = parse_set(&args.target, resolution)?;
    let eps = parse_frac(&args.eps)?;
    let output = urysohn(&target, &eps, &action, args.depth)?;
    write_json(
        out,
        "urysohn.json",
        &json!({
            "f": output.f,
            "coverage": to_frac_string(&output.coverage),
            "l2_error_sq": to_frac_string(&output.l2_error_sq),
            "meets_eps": output.meets(&eps),
            "certificate": output.certificate,
            "degenerate": output.degenerate,
            "termination_log": output.termination_log,
        }),
    )?;
    write_manifest(
        out,
        "urysohn",
        json!({
            "group": args.group, "power_bound": args.power_bound,
            "target": args.target, "depth": args.depth, "eps": args.eps,
        }),
        &["urysohn.json"],
        if output.degenerate.is_some() {
            "degenerate"
        } else {
            "constructed"
        },
    )?;
    match &output.degenerate {
        Some(reason) => println!("degenerate: {reason}"),
        None => println!(
            "constructed; ||f - 1_A||_2^2 = {}",
            to_frac_string(&output.l2_error_sq)
        ),
    }
    Ok(output.meets(&eps))
}

fn cmd_ip(out: &Path, args: &IpArgs) -> Result<bool, Error> {
    let t = DyadicPermutation::from_spec(&args.t)?;
    let a = parse_set(&args.a, t.resolution())?;
    let b = parse_set(&args.b, t.resolution())?;
    let prefix = ip_prefix(
        &t,
        &NeighborhoodSpec::grid(args.m),
        &a,
        &b,
        args.k,
        args.bound,
    )?;
    write_json(out, "ip.json", &prefix)?;
    write_manifest(
        out,
        "ip",
        json!({
            "t": args.t, "a": args.a, "b": args.b, "m": args.m,
            "k": args.k, "bound": args.bound,
        }),
        &["ip.json"],
        if prefix.complete {
            "complete"
        } else {
            "partial"
        },
    )?;
    println!(
        "prefix {:?} ({} sums verified)",
        prefix.generators,
        prefix.table.len()
    );
    Ok(prefix.complete)
}

fn cmd_skew(out: &Path, args: &SkewArgs) -> Result<bool, Error> {
    let t = DyadicPermutation::from_spec(&args.t)?;
    let (p, q) = args
        .alpha
        .split_once('/')
        .ok_or_else(|| Error::Parse("alpha must be p/q".into()))?;
    let p: i64 = p
        .parse()
        .map_err(|_| Error::Parse(format!("bad numerator {p:?}")))?;
    let q: i64 = q
        .parse()
        .map_err(|_| Error::Parse(format!("bad denominator {q:?}")))?;
    let eps = parse_frac(&args.eps)?;
    let witness = skew_rigidity(&t, (p, q), args.m, &eps, args.bound)?;
    write_json(out, "skew.json", &witness)?;
    write_manifest(
        out,
        "skew",
        json!({
            "t": args.t, "alpha": args.alpha, "m": args.m,
            "eps": args.eps, "bound": args.bound,
        }),
        &["skew.json"],
        if witness.is_some() { "witness" } else { "none" },
    )?;
    match &witness {
        Some(w) => println!("simultaneous return n = {}", w.exponent),
        None => println!("no simultaneous return within {}", args.bound),
    }
    Ok(witness.is_some())
}

fn cmd_product_whirly(out: &Path, args: &ProductWhirlyArgs) -> Result<bool, Error> {
    let t = DyadicPermutation::from_spec(&args.t)?;
    let parse_box = |spec: &str| -> Result<Vec<DyadicSet>, Error> {
        spec.split(';')
            .map(|s| parse_set(s.trim(), t.resolution()))
            .collect()
    };
    let a = parse_box(&args.a)?;
    let b = parse_box(&args.b)?;
    if a.len() != args.order || b.len() != args.order {
        return Err(Error::Parse(format!(
            "boxes need {} factors separated by ';'",
            args.order
        )));
    }
    let rows =
        whirly_all_orders_probe(&t, args.order, &[(a, b)], args.m, args.bound, !args.no_zero)?;
    write_json(out, "product-whirly.json", &rows)?;
    write_manifest(
        out,
        "product-whirly",
        json!({
            "t": args.t, "order": args.order, "a": args.a, "b": args.b,
            "m": args.m, "bound": args.bound, "no_zero": args.no_zero,
        }),
        &["product-whirly.json"],
        if rows[0].witness.is_some() {
            "witness"
        } else {
            "none"
        },
    )?;
    match rows[0].witness {
        Some(n) => println!("product witness n = {n}"),
        None => println!("no product witness within |n| <= {}", args.bound),
    }
    Ok(rows[0].witness.is_some())
}

fn cmd_concentration(out: &Path, args: &ConcentrationArgs) -> Result<bool, Error> {
    if args.space.is_empty() {
        return Err(Error::Parse("need at least one --space".into()));
    }
    let eps_grid: Vec<f64> = args
        .eps
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad eps {s:?}")))
        })
        .collect::<Result<_, _>>()?;
    let mut csv = String::from("family,d,eps,alpha,stderr,samples,seed\n");
    let mut tables = Vec::new();
    for spec in &args.space {
        let space = ConcentrationSpace::parse(spec)?;
        let table = concentration_profile(&space, &eps_grid, args.samples, args.seed)?;
        for row in &table.rows {
            csv.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                space.family_name(),
                space.dim(),
                row.eps,
                row.alpha,
                row.stderr,
                args.samples,
                args.seed,
            ));
        }
        tables.push(table);
    }
    write_artifact(out, "concentration.csv", csv.as_bytes())?;
    write_manifest(
        out,
        "concentration",
        json!({
            "space": args.space, "eps": args.eps,
            "samples": args.samples, "seed": args.seed,
        }),
        &["concentration.csv"],
        "profiles",
    )?;
    println!("{} profiles written", tables.len());
    Ok(true)
}
