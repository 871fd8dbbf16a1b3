//! End-to-end acceptance checks. Every criterion runs, in order, and prints
//! one PASS/FAIL line; the test fails if any criterion failed.
//!
//! Run with `cargo test -p coldfaas-cli --test acceptance`.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::sync::Arc;
use std::time::{Duration, Instant};

use coldfaas_client::Client;
use coldfaas_core::driver::{
    ProcessDriverConfig, SimMode, SimulatedDriver, WarmInner, WarmPoolConfig, WasteLedger,
};
use coldfaas_core::sim::VirtualBench;
use coldfaas_core::stats::summarize;
use coldfaas_core::{
    Clock, ClockReading, Dispatcher, DispatcherConfig, DriverSet, FunctionSpec, ManualClock,
    Outcome, ProfileSet, Registry, RuntimeProfile, SampleSet, Summary,
};
use coldfaas_server::{PlatformConfig, ServerHandle};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tokio::runtime::Runtime;

type Verdict = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if $cond {
        } else {
            return Err(format!($($fmt)+));
        }
    };
}

/// Bypasses the harness's output capture so the lines always show.
fn say(line: &str) {
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{line}");
}

struct Ctx {
    rt: Runtime,
    scratch: tempfile::TempDir,
}

struct Gateway {
    server: ServerHandle,
    client: Client,
    registry_dir: PathBuf,
    _dir: tempfile::TempDir,
}

impl Ctx {
    fn gateway(&self, tweak: impl FnOnce(&mut PlatformConfig)) -> Gateway {
        let dir = tempfile::tempdir().unwrap();
        let registry_dir = dir.path().join("registry");
        let mut config = PlatformConfig::default();
        config.gateway.listen = "127.0.0.1:0".parse().unwrap();
        config.drivers.registry_dir = registry_dir.clone();
        tweak(&mut config);
        let server = self.rt.block_on(coldfaas_server::spawn(config)).unwrap();
        let client = Client::new(server.url());
        Gateway {
            server,
            client,
            registry_dir,
            _dir: dir,
        }
    }

    fn stop(&self, gw: Gateway) {
        self.rt.block_on(gw.server.shutdown());
    }

    fn path(&self, name: &str) -> PathBuf {
        self.scratch.path().join(name)
    }
}

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coldfaas"))
        .args(args)
        .stdin(Stdio::null())
        .output()
        .expect("running the coldfaas binary")
}

fn cli_ok(args: &[&str]) -> Result<Output, String> {
    let out = cli(args);
    if out.status.success() {
        Ok(out)
    } else {
        Err(format!(
            "`coldfaas {}` exited with {}: {}",
            args.join(" "),
            out.status,
            String::from_utf8_lossy(&out.stderr).trim()
        ))
    }
}

fn load(path: &Path) -> Result<SampleSet, String> {
    SampleSet::read(path).map_err(|e| e.to_string())
}

fn ms(ns: u64) -> f64 {
    ns as f64 / 1e6
}

fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want
}

fn total_summary(set: &SampleSet) -> Result<Summary, String> {
    summarize(set).map(|r| r.total).map_err(|e| e.to_string())
}

/// Processes that are children of this test, and any process running an
/// image from `registry_dir` (orphans get reparented away from us).
fn leftover_processes(registry_dir: &Path) -> Vec<String> {
    let me = std::process::id();
    let registry_dir = registry_dir
        .canonicalize()
        .unwrap_or_else(|_| registry_dir.to_owned());
    let mut found = Vec::new();
    for entry in std::fs::read_dir("/proc").expect("procfs") {
        let Ok(entry) = entry else { continue };
        let Ok(pid) = entry.file_name().to_string_lossy().parse::<u32>() else {
            continue;
        };
        let Ok(stat) = std::fs::read_to_string(entry.path().join("stat")) else {
            continue;
        };
        // pid (comm) state ppid ...; comm may contain spaces and parens
        let Some(rest) = stat.rfind(')').map(|i| &stat[i + 1..]) else {
            continue;
        };
        let ppid: u32 = rest
            .split_whitespace()
            .nth(1)
            .and_then(|s| s.parse().ok())
            .unwrap_or(0);
        let exe = std::fs::read_link(entry.path().join("exe")).ok();
        let in_registry = exe.as_ref().is_some_and(|e| e.starts_with(&registry_dir));
        if ppid == me || in_registry {
            found.push(format!("pid {pid} ppid {ppid} exe {exe:?}"));
        }
    }
    found
}

fn deploy_echo(ctx: &Ctx, gw: &Gateway, spec: FunctionSpec) {
    ctx.rt
        .block_on(
            gw.client
                .deploy(&spec, Some(coldfaas_testfns::image("echo")), false),
        )
        .unwrap();
}

// 1
fn cold_only_invariant(ctx: &Ctx, gw: &Gateway) -> Verdict {
    deploy_echo(ctx, gw, FunctionSpec::process("echo"));
    let out = ctx.path("cold-echo.jsonl");
    let url = format!("{}/invoke/echo", gw.server.url());
    let started = Instant::now();
    cli_ok(&[
        "bench",
        "--url",
        &url,
        "--n",
        "1000",
        "--c",
        "20",
        "--out",
        out.to_str().unwrap(),
    ])?;
    let secs = started.elapsed().as_secs_f64();
    let set = load(&out)?;
    ensure!(
        set.ok_count() == 1000,
        "{} of 1000 requests succeeded",
        set.ok_count()
    );
    let stats = ctx
        .rt
        .block_on(gw.client.stats())
        .map_err(|e| e.to_string())?;
    let live = stats.live_executors;
    ensure!(
        live.process + live.simulated + live.warmpool == 0,
        "live executors after the run: {live:?}"
    );
    let leftovers = leftover_processes(&gw.registry_dir);
    ensure!(leftovers.is_empty(), "orphaned processes: {leftovers:?}");
    ensure!(secs < 60.0, "run took {secs:.1} s");
    Ok(format!(
        "1000/1000 ok, 0 live executors, 0 orphans, {secs:.1} s"
    ))
}

// 2
fn zero_waste(ctx: &Ctx, cold: &Gateway) -> Verdict {
    let ledger: WasteLedger = ctx
        .rt
        .block_on(cold.client.waste())
        .map_err(|e| e.to_string())?;
    ensure!(
        ledger.idle_executor_seconds == 0.0,
        "cold-only idle_executor_seconds = {}",
        ledger.idle_executor_seconds
    );

    let warm = ctx.gateway(|c| c.warm_pool.idle_timeout_ms = 30_000);
    deploy_echo(ctx, &warm, FunctionSpec::warmpool("echo"));
    let out = ctx.path("warm-echo.jsonl");
    let url = format!("{}/invoke/echo", warm.server.url());
    let run = cli_ok(&[
        "bench",
        "--url",
        &url,
        "--n",
        "1000",
        "--c",
        "20",
        "--out",
        out.to_str().unwrap(),
    ]);
    let ledger = ctx
        .rt
        .block_on(warm.client.waste())
        .map_err(|e| e.to_string());
    ctx.stop(warm);
    run?;
    let ledger = ledger?;
    ensure!(
        ledger.idle_executor_seconds > 0.0 && ledger.warm_hits >= 1,
        "warm pool ledger {ledger:?}"
    );
    Ok(format!(
        "cold-only idle = 0.0; warm pool idle = {:.3} s, warm hits = {}, cold starts = {}",
        ledger.idle_executor_seconds, ledger.warm_hits, ledger.cold_starts
    ))
}

// 3
fn table_reproduction(ctx: &Ctx) -> Verdict {
    let started = Instant::now();
    let targets = [
        ("fn-includeos-cold", 33.4),
        ("fn-docker-cold", 288.3),
        ("lambda-cold", 449.7),
        ("lambda-warm", 78.0),
    ];
    let dir = ctx.path("table");
    std::fs::create_dir_all(&dir).unwrap();
    let mut files = Vec::new();
    let mut detail = Vec::new();
    for (profile, want) in targets {
        let out = dir.join(format!("{profile}.jsonl"));
        cli_ok(&[
            "bench",
            "--virtual",
            "--profile",
            profile,
            "--n",
            "10000",
            "--c",
            "1",
            "--seed",
            "3",
            "--out",
            out.to_str().unwrap(),
        ])?;
        let set = load(&out)?;
        ensure!(
            set.ok_count() == 10_000,
            "{profile}: {} ok samples",
            set.ok_count()
        );
        let p50 = ms(total_summary(&set)?.p50_ns);
        ensure!(
            rel_err(p50, want) <= 0.05,
            "{profile}: p50 {p50:.2} ms vs {want} ms"
        );
        detail.push(format!("{profile} {p50:.1}"));
        files.push(out.to_str().unwrap().to_owned());
    }
    let mut args: Vec<&str> = vec!["compare", "--in"];
    args.extend(files.iter().map(String::as_str));
    for a in [
        "fn-includeos-cold.p50 < fn-docker-cold.p50",
        "fn-docker-cold.p50 < lambda-cold.p50",
        "fn-includeos-cold.p50 + 6.9 < lambda-warm.p50 + 50.1",
    ] {
        args.extend(["--assert", a]);
    }
    let out = cli(&args);
    let stdout = String::from_utf8_lossy(&out.stdout);
    ensure!(
        out.status.success(),
        "compare failed:\n{stdout}{}",
        String::from_utf8_lossy(&out.stderr)
    );
    ensure!(
        stdout.matches("PASS").count() == 3,
        "compare output:\n{stdout}"
    );
    let secs = started.elapsed().as_secs_f64();
    ensure!(secs < 30.0, "took {secs:.1} s");
    Ok(format!(
        "p50 ms: {}; 3 orderings hold; {secs:.1} s",
        detail.join(", ")
    ))
}

// 4
fn overload_knee() -> Verdict {
    let profiles = ProfileSet::defaults();
    let kata = profiles.get("kata").map_err(|e| e.to_string())?.clone();
    let cores = kata.cores as usize;
    let set = VirtualBench::new(kata, 10_000, cores)
        .with_workers(cores)
        .with_seed(4)
        .run()
        .map_err(|e| e.to_string())?;
    let s = total_summary(&set)?;
    let (p50, p99) = (ms(s.p50_ns), ms(s.p99_ns));
    ensure!(rel_err(p50, 2200.0) <= 0.05, "kata p50 {p50:.0} ms vs 2200");
    ensure!(rel_err(p99, 3300.0) <= 0.10, "kata p99 {p99:.0} ms vs 3300");

    let mut checked = 0;
    for profile in profiles.iter() {
        ensure!(
            profile.cores == 24,
            "{} models {} cores",
            profile.name,
            profile.cores
        );
        let p50_at = |parallelism: usize| -> Result<u64, String> {
            let set = VirtualBench::new(profile.clone(), 10_000, parallelism)
                .with_workers(40)
                .with_seed(4)
                .run()
                .map_err(|e| e.to_string())?;
            Ok(total_summary(&set)?.p50_ns)
        };
        let (at20, at40) = (p50_at(20)?, p50_at(40)?);
        ensure!(
            at40 > at20,
            "{}: p50 at 40 = {:.2} ms, at 20 = {:.2} ms",
            profile.name,
            ms(at40),
            ms(at20)
        );
        checked += 1;
    }
    Ok(format!(
        "kata p50 {p50:.0} ms, p99 {p99:.0} ms at in_flight 24; p50(40) > p50(20) for all {checked} profiles"
    ))
}

// 5
fn includeos_band() -> Verdict {
    let profile = ProfileSet::defaults()
        .get("includeos-hvt")
        .map_err(|e| e.to_string())?
        .clone();
    let set = VirtualBench::new(profile, 10_000, 10)
        .with_seed(5)
        .run()
        .map_err(|e| e.to_string())?;
    let p50 = ms(total_summary(&set)?.p50_ns);
    ensure!(
        (8.0..=15.0).contains(&p50),
        "p50 {p50:.2} ms outside [8, 15]"
    );
    Ok(format!("p50 {p50:.2} ms"))
}

/// Sort, then walk to the first position covering `percent` of the data.
fn sorted_oracle(values: &[u64], percent: u64) -> u64 {
    let mut sorted = values.to_vec();
    sorted.sort();
    let n = sorted.len() as u64;
    let mut covered = 0;
    for v in &sorted {
        covered += 1;
        if covered * 100 >= percent * n {
            return *v;
        }
    }
    unreachable!("the last element covers everything")
}

// 6
fn percentile_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for case in 0..1000 {
        let n = rng.random_range(1..=5000);
        // small ranges force ties
        let range = match case % 3 {
            0 => 4,
            1 => 1000,
            _ => u64::MAX,
        };
        let values: Vec<u64> = (0..n)
            .map(|_| {
                if range == u64::MAX {
                    rng.next_u64()
                } else {
                    rng.random_range(0..range)
                }
            })
            .collect();
        let s = Summary::from_values(values.iter().copied()).ok_or("empty summary")?;
        let got = [
            s.min_ns, s.p1_ns, s.p25_ns, s.p50_ns, s.p75_ns, s.p99_ns, s.max_ns,
        ];
        let want = [
            *values.iter().min().unwrap(),
            sorted_oracle(&values, 1),
            sorted_oracle(&values, 25),
            sorted_oracle(&values, 50),
            sorted_oracle(&values, 75),
            sorted_oracle(&values, 99),
            *values.iter().max().unwrap(),
        ];
        ensure!(got == want, "case {case} (n = {n}): {got:?} != {want:?}");
    }
    Ok("1000 sets, sizes 1..=5000, all percentiles equal".into())
}

// 7
fn closed_loop(ctx: &Ctx) -> Verdict {
    let gw = ctx.gateway(|_| {});
    deploy_echo(ctx, &gw, FunctionSpec::process("echo"));
    let out = ctx.path("closed-loop.jsonl");
    let url = format!("{}/invoke/echo", gw.server.url());
    let mut child = Command::new(env!("CARGO_BIN_EXE_coldfaas"))
        .args([
            "bench",
            "--url",
            &url,
            "--n",
            "1000",
            "--c",
            "10",
            "--out",
            out.to_str().unwrap(),
        ])
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| e.to_string())?;
    let (mut polls, mut peak) = (0, 0);
    let sampled = ctx.rt.block_on(async {
        while child.try_wait().map_err(|e| e.to_string())?.is_none() {
            let s = gw.client.stats().await.map_err(|e| e.to_string())?;
            peak = peak.max(s.dispatcher.in_flight);
            polls += 1;
            tokio::time::sleep(Duration::from_millis(2)).await;
        }
        gw.client.stats().await.map_err(|e| e.to_string())
    });
    let status = child.wait().map_err(|e| e.to_string())?;
    ctx.stop(gw);
    let stats = sampled?;
    ensure!(status.success(), "bench exited with {status}");
    let max = stats.dispatcher.max_in_flight;
    ensure!(
        peak <= 10 && max <= 10,
        "in_flight peaked at {peak} (sampled), {max} (server max)"
    );
    ensure!(
        stats.dispatcher.arrivals == 1000,
        "{} arrivals",
        stats.dispatcher.arrivals
    );
    ensure!(polls > 10, "only {polls} polls during the run");
    Ok(format!(
        "{polls} polls, sampled peak {peak}, server max_in_flight {max}"
    ))
}

// 8
fn protocol_end_to_end(ctx: &Ctx) -> Verdict {
    let gw = ctx.gateway(|_| {});
    let spec = ctx.path("echo-spec.json");
    std::fs::write(&spec, r#"{"name": "echo", "driver": "process"}"#).unwrap();
    let image = coldfaas_testfns::path("echo");
    let deployed = cli_ok(&[
        "deploy",
        "--gateway",
        &gw.server.url(),
        "--spec",
        spec.to_str().unwrap(),
        "--image",
        image.to_str().unwrap(),
    ]);
    let mut payload = vec![0u8; 64 * 1024];
    ChaCha8Rng::seed_from_u64(8).fill_bytes(&mut payload);
    let resp = deployed.and_then(|_| {
        ctx.rt
            .block_on(gw.client.invoke("echo", payload.clone()))
            .map_err(|e| e.to_string())
    });
    ctx.stop(gw);
    let resp = resp?;
    ensure!(resp.status == 200, "status {}", resp.status);
    ensure!(
        resp.body[..] == payload[..],
        "response differs ({} bytes back)",
        resp.body.len()
    );
    let t = resp.timing.ok_or("no timing headers")?;
    ensure!(t.decomposes(), "timing does not decompose: {t:?}");
    Ok(format!(
        "64 KiB echoed byte-identical; total {:.3} ms >= {:.3} + {:.3} + {:.3}",
        ms(t.total_ns),
        ms(t.queue_wait_ns),
        ms(t.startup_ns),
        ms(t.execution_ns)
    ))
}

fn bench_noop(url: &str, out: &Path, n: &str, c: &str, conn: &str) -> Result<SampleSet, String> {
    cli_ok(&[
        "bench",
        "--url",
        url,
        "--n",
        n,
        "--c",
        c,
        "--conn",
        conn,
        "--out",
        out.to_str().unwrap(),
    ])?;
    let set = load(out)?;
    ensure!(
        set.failed_count() == 0,
        "{} failed requests",
        set.failed_count()
    );
    Ok(set)
}

// 9
fn connection_decomposition(ctx: &Ctx) -> Verdict {
    let gw = ctx.gateway(|_| {});
    let url = format!("{}/noop", gw.server.url());
    let per = bench_noop(
        &url,
        &ctx.path("noop-per.jsonl"),
        "5000",
        "1",
        "per-request",
    );
    let keep = bench_noop(
        &url,
        &ctx.path("noop-keep.jsonl"),
        "5000",
        "1",
        "keep-alive",
    );
    ctx.stop(gw);
    let (per, keep) = (per?, keep?);
    let per_p50 = total_summary(&per)?.p50_ns as f64;
    let keep_p50 = total_summary(&keep)?.p50_ns as f64;
    let setup = summarize(&per)
        .map_err(|e| e.to_string())?
        .breakdown
        .connection_setup
        .ok_or("no connection setup samples")?
        .p50_ns as f64;
    let diff = per_p50 - keep_p50;
    let msg = format!(
        "per-request p50 {:.1} us, keep-alive p50 {:.1} us, difference {:.1} us vs connect p50 {:.1} us ({:+.0}%)",
        per_p50 / 1e3,
        keep_p50 / 1e3,
        diff / 1e3,
        setup / 1e3,
        (diff / setup - 1.0) * 100.0
    );
    ensure!(diff > 0.0 && rel_err(diff, setup) <= 0.30, "{msg}");
    Ok(msg)
}

// 10
fn noop_shape(ctx: &Ctx) -> Verdict {
    let gw = ctx.gateway(|c| c.dispatcher.workers = 20);
    let url = format!("{}/noop", gw.server.url());
    let runs: Result<Vec<SampleSet>, String> = [("1", 2000), ("10", 5000), ("40", 5000)]
        .into_iter()
        .map(|(c, n)| {
            bench_noop(
                &url,
                &ctx.path(&format!("noop-c{c}.jsonl")),
                &n.to_string(),
                c,
                "keep-alive",
            )
        })
        .collect();
    ctx.stop(gw);
    let runs = runs?;
    let p50: Vec<f64> = runs
        .iter()
        .map(|s| total_summary(s).map(|t| ms(t.p50_ns)))
        .collect::<Result<_, _>>()?;
    let msg = format!(
        "p50 ms at c=1/10/40: {:.3} / {:.3} / {:.3}",
        p50[0], p50[1], p50[2]
    );
    ensure!(p50[0] < 5.0, "{msg}");
    ensure!(p50[2] > p50[1], "{msg}");
    Ok(msg)
}

fn fixed_profiles() -> Arc<ProfileSet> {
    Arc::new(ProfileSet::from_profiles([RuntimeProfile::new("fixed10", 10.0, 10.0)]).unwrap())
}

/// Single invocation through a dispatcher on a hand-driven clock.
fn ledger_manual_clock(ctx: &Ctx) -> Result<WasteLedger, String> {
    let clock = Arc::new(ManualClock::new(ClockReading::ZERO));
    let sim =
        SimulatedDriver::new(fixed_profiles(), SimMode::Virtual, 11, 1).with_clock(clock.clone());
    let warm = WarmPoolConfig {
        idle_timeout: Duration::from_secs(30),
        inner: WarmInner::Simulated {
            profile: "fixed10".into(),
        },
        ..Default::default()
    };
    let drivers = Arc::new(DriverSet::new(
        clock.clone(),
        ProcessDriverConfig::default(),
        sim,
        warm,
    ));
    let dir = tempfile::tempdir().unwrap();
    let registry = Arc::new(Registry::open(dir.path()).unwrap());
    registry
        .put(FunctionSpec::warmpool("fn"), None, false)
        .map_err(|e| e.to_string())?;
    let dispatcher = Dispatcher::new(
        DispatcherConfig::default(),
        registry,
        drivers.clone(),
        clock.clone(),
    )
    .map_err(|e| e.to_string())?;
    ctx.rt.block_on(async {
        let inv = dispatcher
            .dispatch("fn", b"", clock.now())
            .await
            .map_err(|e| e.to_string())?;
        ensure!(inv.record.outcome == Outcome::Ok, "{:?}", inv.record);
        let done = ClockReading(inv.record.total_ns);
        clock.set(done + Duration::from_millis(29_900));
        let early = drivers.warmpool.reap_idle(clock.now()).await;
        ensure!(early == 0, "reaped {early} before the idle timeout");
        clock.set(done + Duration::from_secs(30));
        drivers.warmpool.reap_idle(clock.now()).await;
        Ok(drivers.warmpool.ledger_now())
    })
}

/// Same scenario on a live gateway: one call, then wall-clock idling.
fn start_live_ledger(ctx: &Ctx) -> Gateway {
    let gw = ctx.gateway(|c| {
        c.warm_pool.idle_timeout_ms = 30_000;
        c.warm_pool.inner = WarmInner::Simulated {
            profile: "solo5-spt".into(),
        };
    });
    ctx.rt
        .block_on(gw.client.deploy(&FunctionSpec::warmpool("fn"), None, false))
        .unwrap();
    let resp = ctx.rt.block_on(gw.client.invoke("fn", Vec::new())).unwrap();
    assert_eq!(resp.status, 200);
    gw
}

// 11
fn ledger_arithmetic(ctx: &Ctx, live: Gateway, live_started: Instant) -> Verdict {
    let manual = ledger_manual_clock(ctx);
    let remaining = Duration::from_millis(30_500).saturating_sub(live_started.elapsed());
    std::thread::sleep(remaining);
    let live_ledger = ctx
        .rt
        .block_on(live.client.waste())
        .map_err(|e| e.to_string());
    ctx.stop(live);
    let (manual, live_ledger) = (manual?, live_ledger?);
    for (what, l) in [("manual clock", manual), ("live gateway", live_ledger)] {
        ensure!(
            (l.idle_executor_seconds - 30.0).abs() <= 0.1 && l.reaped == 1,
            "{what}: {l:?}"
        );
    }
    Ok(format!(
        "idle seconds {:.4} (manual clock), {:.4} (live gateway); reaped 1 each",
        manual.idle_executor_seconds, live_ledger.idle_executor_seconds
    ))
}

// 12
fn determinism(ctx: &Ctx) -> Verdict {
    let run = |name: &str| -> Result<(Vec<u8>, String), String> {
        let out = ctx.path(name);
        cli_ok(&[
            "bench",
            "--virtual",
            "--profile",
            "python",
            "--n",
            "5000",
            "--c",
            "40",
            "--workers",
            "20",
            "--seed",
            "12",
            "--out",
            out.to_str().unwrap(),
        ])?;
        let report = cli_ok(&["report", "--in", out.to_str().unwrap(), "--format", "json"])?;
        Ok((
            std::fs::read(&out).unwrap(),
            String::from_utf8_lossy(&report.stdout).into_owned(),
        ))
    };
    let (samples_a, report_a) = run("det-a.jsonl")?;
    let (samples_b, report_b) = run("det-b.jsonl")?;
    ensure!(samples_a == samples_b, "sample files differ");
    ensure!(report_a == report_b, "reports differ");
    let other = VirtualBench::new(
        ProfileSet::defaults().get("python").unwrap().clone(),
        5000,
        40,
    )
    .with_seed(13)
    .run()
    .map_err(|e| e.to_string())?;
    let same = load(&ctx.path("det-a.jsonl"))?;
    ensure!(
        other.samples != same.samples,
        "a different seed gave the same samples"
    );
    Ok(format!(
        "{} identical bytes of samples, identical reports",
        samples_a.len()
    ))
}

#[test]
fn acceptance() {
    let ctx = Ctx {
        rt: tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .unwrap(),
        scratch: tempfile::tempdir().unwrap(),
    };
    // make sure the function binaries exist before anything is timed
    coldfaas_testfns::path("echo");

    // criterion 11 idles for 30 s of wall time; let that overlap the rest
    let live_started = Instant::now();
    let live = start_live_ledger(&ctx);

    let cold = ctx.gateway(|_| {});
    let mut results: Vec<(u32, &str, Verdict)> = Vec::new();
    let mut run = |n: u32, name: &'static str, f: &mut dyn FnMut() -> Verdict| {
        let started = Instant::now();
        let verdict = f();
        let tag = if verdict.is_ok() { "PASS" } else { "FAIL" };
        let detail = match &verdict {
            Ok(d) | Err(d) => d.clone(),
        };
        say(&format!(
            "{tag} [{n:>2}] {name} ({:.1} s): {detail}",
            started.elapsed().as_secs_f64()
        ));
        results.push((n, name, verdict));
    };

    run(1, "cold-only invariant", &mut || {
        cold_only_invariant(&ctx, &cold)
    });
    run(2, "zero-waste ledger", &mut || zero_waste(&ctx, &cold));
    run(3, "median latency table (virtual)", &mut || {
        table_reproduction(&ctx)
    });
    run(4, "overload knee (virtual)", &mut overload_knee);
    run(5, "includeos band (virtual)", &mut includeos_band);
    run(6, "percentile oracle equivalence", &mut percentile_oracle);
    run(7, "closed-loop bound", &mut || closed_loop(&ctx));
    run(8, "protocol end to end", &mut || protocol_end_to_end(&ctx));
    run(9, "connection-mode decomposition", &mut || {
        connection_decomposition(&ctx)
    });
    run(10, "noop overhead shape", &mut || noop_shape(&ctx));
    let mut live = Some(live);
    run(11, "warm-pool ledger arithmetic", &mut || {
        ledger_arithmetic(&ctx, live.take().expect("runs once"), live_started)
    });
    run(12, "determinism", &mut || determinism(&ctx));
    ctx.stop(cold);

    let failed: Vec<String> = results
        .iter()
        .filter(|(_, _, v)| v.is_err())
        .map(|(n, name, _)| format!("{n} ({name})"))
        .collect();
    say(&format!(
        "acceptance: {}/{} criteria passed",
        results.len() - failed.len(),
        results.len()
    ));
    assert!(failed.is_empty(), "failed criteria: {}", failed.join(", "));
}
