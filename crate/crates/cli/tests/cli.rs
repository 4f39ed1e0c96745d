use std::path::Path;
use std::process::{Command, Output};

fn mpg_lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mpg-lab")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn counterexample_without_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ce");
    let o = mpg_lab(&["counterexample", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = std::fs::read_to_string(out.join("report.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert!((v["summary"]["report"]["markov_poa"].as_f64().unwrap() - 0.4375).abs() < 1e-12);
    assert_eq!(v["seed"].as_u64(), Some(1234));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.toml", "[game]\npreset = \"desk-5x5\"\n[spi]\nT_GG = 3\n");
    let o = mpg_lab(&["simulate", "--config", &bad]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("T_GG"));

    assert_eq!(mpg_lab(&["simulate"]).status.code(), Some(1));
    assert_eq!(mpg_lab(&["no-such-command"]).status.code(), Some(1));

    // a game too large for the exact smoothness enumeration fails at run time
    let big = write(dir.path(), "big.toml", "[game]\npreset = \"paper-7x7-us\"\n[eval]\ncap = 1000\n");
    let o = mpg_lab(&["analyze-smoothness", "--config", &big, "--out", dir.path().join("x").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));

    let o = mpg_lab(&["simulate", "--config", &bad.replace("bad", "missing")]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn simulate_is_reproducible_from_the_echo() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "run.toml",
        "[game]\npreset = \"tiny-3x3-us\"\n[spi]\nT_G = 4\nT_J = 50\nT_K = 400\n",
    );
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    for out in [&a, &b] {
        let o = mpg_lab(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", "7", "--plot"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let resolved = a.join("config.resolved.toml");
    let o = mpg_lab(&["simulate", "--config", resolved.to_str().unwrap(), "--out", c.to_str().unwrap(), "--threads", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for name in ["iterations.csv", "report.json", "policy.json", "config.resolved.toml"] {
        let x = std::fs::read(a.join(name)).unwrap();
        assert_eq!(x, std::fs::read(b.join(name)).unwrap(), "{name}");
        assert_eq!(x, std::fs::read(c.join(name)).unwrap(), "{name} from echo");
    }
    let csv = std::fs::read_to_string(a.join("iterations.csv")).unwrap();
    assert!(csv.starts_with("t,eta,ne_gap_total,ne_gap_0,ne_gap_1,welfare,potential,q_err_max\n"));
    assert_eq!(csv.lines().count(), 5);
    assert!(a.join("plot.svg").exists());

    let svg = dir.path().join("again.svg");
    let o = mpg_lab(&["plot", "--input", a.join("iterations.csv").to_str().unwrap(), "--out", svg.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(std::fs::read(&svg).unwrap(), std::fs::read(a.join("plot.svg")).unwrap());
}

#[test]
fn presets_listed() {
    let o = mpg_lab(&["presets"]);
    let text = String::from_utf8_lossy(&o.stdout);
    for name in ["paper-7x7", "desk-5x5", "counterexample", "micro-g1"] {
        assert!(text.contains(name));
    }
}
