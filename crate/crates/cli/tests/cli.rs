use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::Duration;

use netsonify::logging::{parse_event_log, EVENT_LOG, IP_FLOW_LOG, TRAFFIC_FLOW_LOG};

fn netsonify(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_netsonify")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn gen_writes_capture_and_labels() {
    let dir = tempfile::tempdir().unwrap();
    let pcap = dir.path().join("x.pcap");
    let out = netsonify(&["gen", "--scenario", "xmas", "--seed", "3", "--windows", "2", "-o", p(&pcap)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let labels: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("x.pcap.labels.json")).unwrap()).unwrap();
    assert_eq!(labels["scenario"], "XMAS_SCAN");
    assert_eq!(labels["windows"].as_array().unwrap().len(), 2);
    assert!(fs::metadata(&pcap).unwrap().len() > 24);
}

#[test]
fn render_writes_logs_and_audio() {
    let dir = tempfile::tempdir().unwrap();
    let pcap = dir.path().join("n.pcap");
    let logs = dir.path().join("logs");
    let wav = dir.path().join("n.wav");
    assert_eq!(code(&netsonify(&["gen", "--scenario", "NULL_SCAN", "-o", p(&pcap)])), 0);
    let out =
        netsonify(&["render", "--home", "10.0.0.0/24", "--pcap", p(&pcap), "--logs", p(&logs), "--render", p(&wav)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for f in [EVENT_LOG, IP_FLOW_LOG, TRAFFIC_FLOW_LOG] {
        assert!(logs.join(f).exists(), "{f}");
    }
    let events = parse_event_log(&fs::read_to_string(logs.join(EVENT_LOG)).unwrap()).unwrap();
    assert!(events.iter().any(|e| e.sound == "frog"));
    let reader = hound::WavReader::open(&wav).unwrap();
    let spec = reader.spec();
    assert_eq!((spec.channels, spec.sample_rate, spec.bits_per_sample), (2, 44100, 16));
    assert!(reader.duration() >= 44100);
}

#[test]
fn score_counts_table_and_json() {
    let out = netsonify(&["score", "--tp", "30", "--tn", "38", "--fp", "2", "--fn", "0"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("93.75"), "{text}");
    assert!(text.contains("97.14"), "{text}");

    let out = netsonify(&["score", "--tp", "0", "--tn", "0", "--fp", "0", "--fn", "0", "--json"]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["metrics"]["recall"].is_null());
}

#[test]
fn score_from_event_logs() {
    let dir = tempfile::tempdir().unwrap();
    let mut args: Vec<String> = vec!["score".into(), "--json".into()];
    for kind in ["NORMAL", "PING"] {
        let pcap = dir.path().join(format!("{kind}.pcap"));
        let logs = dir.path().join(format!("{kind}-logs"));
        assert_eq!(code(&netsonify(&["gen", "--scenario", kind, "-o", p(&pcap)])), 0);
        assert_eq!(code(&netsonify(&["render", "--home", "10.0.0.0/24", "--pcap", p(&pcap), "--logs", p(&logs)])), 0);
        args.extend(["--events".into(), p(&logs).into(), "--labels".into(), format!("{}.labels.json", p(&pcap))]);
    }
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    let out = netsonify(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["counts"], serde_json::json!({"tp": 1, "tn": 1, "fp": 0, "fn": 0}));
}

#[test]
fn validate_config_reports_every_error() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.toml");
    fs::write(&good, "home_networks = [\"10.0.0.0/24\"]\nwindow_period_s = 2.0\n").unwrap();
    assert_eq!(code(&netsonify(&["validate-config", p(&good)])), 0);

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "home_networks = [\"10.0.0.0/99\"]\nwindow_period_s = 0.0\n[sounds]\nrule1 = \"no_such_sound\"\n")
        .unwrap();
    let out = netsonify(&["validate-config", p(&bad)]);
    assert_eq!(code(&out), 3);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("no_such_sound"), "{err}");
    assert!(err.lines().count() >= 3, "{err}");

    let rules = dir.path().join("extra.rules");
    fs::write(&rules, "mine: SYN-in-IP > 5 and Bogus > 1 -> sound \"rain\"\nother: SYN-in-IP > 3 -> sound \"nope\"\n")
        .unwrap();
    let out = netsonify(&["validate-config", p(&rules)]);
    assert_eq!(code(&out), 3);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("Bogus") && err.contains("nope"), "{err}");

    fs::write(&rules, "ok: SYN-in-IP > 1 -> sound \"rain\"\nbroken: SYN-in-IP >> 3 -> sound \"rain\"\n").unwrap();
    let out = netsonify(&["validate-config", p(&rules)]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&netsonify(&["render", "--bogus"])), 2);
    assert_eq!(code(&netsonify(&["gen", "--scenario", "NOPE", "-o", "x"])), 2);

    let missing = dir.path().join("missing.pcap");
    assert_eq!(code(&netsonify(&["render", "--home", "10.0.0.0/24", "--pcap", p(&missing)])), 4);

    let pcap = dir.path().join("ok.pcap");
    assert_eq!(code(&netsonify(&["gen", "--scenario", "PING", "-o", p(&pcap)])), 0);
    // No home network configured.
    assert_eq!(code(&netsonify(&["render", "--pcap", p(&pcap)])), 3);

    let assets = dir.path().join("assets");
    fs::create_dir(&assets).unwrap();
    fs::write(assets.join("rain.wav"), b"not a wav").unwrap();
    assert_eq!(code(&netsonify(&["render", "--home", "10.0.0.0/24", "--pcap", p(&pcap), "--assets", p(&assets)])), 5);

    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let wav = blocker.join("out.wav");
    assert_eq!(code(&netsonify(&["render", "--home", "10.0.0.0/24", "--pcap", p(&pcap), "--render", p(&wav)])), 6);
}

#[test]
fn exported_assets_load_back() {
    let dir = tempfile::tempdir().unwrap();
    let assets = dir.path().join("assets");
    assert_eq!(code(&netsonify(&["export-assets", p(&assets)])), 0);
    assert!(assets.join("forest_bird.wav").exists());
    assert!(assets.join("woodpecker.wav").exists());
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "home_networks = [\"10.0.0.0/24\"]\n").unwrap();
    assert_eq!(code(&netsonify(&["validate-config", p(&cfg), "--assets", p(&assets)])), 0);
}

#[test]
fn monitor_replays_a_capture_and_exits() {
    let dir = tempfile::tempdir().unwrap();
    let pcap = dir.path().join("p.pcap");
    let logs = dir.path().join("logs");
    assert_eq!(code(&netsonify(&["gen", "--scenario", "PING", "--window", "0.2", "-o", p(&pcap)])), 0);
    let mut child = Command::new(env!("CARGO_BIN_EXE_netsonify"))
        .args([
            "monitor",
            "--home",
            "10.0.0.0/24",
            "--window",
            "0.2",
            "--pcap",
            p(&pcap),
            "--logs",
            p(&logs),
            "--no-audio",
            "--listen",
            "127.0.0.1:0",
        ])
        .spawn()
        .unwrap();
    let deadline = std::time::Instant::now() + Duration::from_secs(20);
    let status = loop {
        if let Some(s) = child.try_wait().unwrap() {
            break s;
        }
        if std::time::Instant::now() > deadline {
            child.kill().unwrap();
            panic!("monitor did not finish");
        }
        std::thread::sleep(Duration::from_millis(50));
    };
    assert!(status.success());
    let events = parse_event_log(&fs::read_to_string(logs.join(EVENT_LOG)).unwrap()).unwrap();
    assert!(events.iter().any(|e| e.sound == "woodpecker"));
}
