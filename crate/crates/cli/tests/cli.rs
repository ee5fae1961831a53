use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cptkit"))
}

struct Scratch(PathBuf);

impl Scratch {
    fn new(tag: &str) -> Self {
        let dir = std::env::temp_dir().join(format!("cptkit-cli-{tag}-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        Self(dir)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.0.join(name)
    }

    fn write(&self, name: &str, text: &str) -> PathBuf {
        let p = self.path(name);
        std::fs::write(&p, text).unwrap();
        p
    }
}

impl Drop for Scratch {
    fn drop(&mut self) {
        std::fs::remove_dir_all(&self.0).ok();
    }
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

const QUICK_FIT: &str = "[fit]\nstarts = 2\nmax_evaluations_per_start = 400\n\n[simulate]\nmethod = \"direct\"\ngrid_points = 41\nomega_c_mhz = 19.3\nomega_d_mhz = 164.0\nt_minus_ps = 31.0\n";

#[test]
fn simulate_writes_a_dip() {
    let s = Scratch::new("sim");
    let cfg = s.write("c.toml", QUICK_FIT);
    let out = bin()
        .args(["--config", cfg.to_str().unwrap(), "--plot", "simulate-cpt", "-o"])
        .arg(s.path("spectrum.csv"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(s.path("spectrum.csv")).unwrap();
    let values: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(values.len(), 41);
    assert!(values[20] < values[0] && values[20] < values[40]);
    assert!(s.path("spectrum.svg").exists());
    assert_eq!(json(&s.path("spectrum.json"))["command"], "simulate-cpt");
}

#[test]
fn omega_d_zero_gives_a_flat_spectrum() {
    let s = Scratch::new("flat");
    let cfg = s.write("c.toml", &QUICK_FIT.replace("omega_d_mhz = 164.0", "omega_d_mhz = 0.0"));
    let out = bin()
        .args(["--config", cfg.to_str().unwrap(), "simulate-cpt", "-o"])
        .arg(s.path("spectrum.csv"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    let text = std::fs::read_to_string(s.path("spectrum.csv")).unwrap();
    let values: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    let spread = values.iter().copied().fold(f64::NEG_INFINITY, f64::max) - values.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(spread < 1e-12 * values[0], "spread {spread}");
}

#[test]
fn malformed_config_exits_2_with_location() {
    let s = Scratch::new("badcfg");
    let cfg = s.write("c.toml", "seed = 1\n[fit]\nstrats = 3\n");
    let out = bin()
        .args(["--config", cfg.to_str().unwrap(), "simulate-cpt", "-o"])
        .arg(s.path("x.csv"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3") && err.contains("strats"), "{err}");
}

#[test]
fn missing_input_exits_2() {
    let s = Scratch::new("missing");
    let out = bin().arg("fit-cpt").arg(s.path("nope.csv")).arg("-o").arg(s.path("f.json")).output().unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn flat_spectrum_fit_exits_3() {
    let s = Scratch::new("flatfit");
    let cfg = s.write("c.toml", QUICK_FIT);
    let mut csv = String::from("detuning_hz,population\n");
    for i in 0..41 {
        csv.push_str(&format!("{},0.05\n", -20e9 + 1e9 * i as f64));
    }
    let spec = s.write("flat.csv", &csv);
    let out = bin()
        .args(["--config", cfg.to_str().unwrap(), "fit-cpt"])
        .arg(&spec)
        .arg("-o")
        .arg(s.path("f.json"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn identical_runs_give_identical_bytes() {
    let s = Scratch::new("determinism");
    let cfg = s.write("c.toml", QUICK_FIT);
    let cfg = cfg.to_str().unwrap();
    let run = |args: &[&str], out: &Path| {
        let o = bin().args(["--config", cfg, "--seed", "7"]).args(args).arg("-o").arg(out).output().unwrap();
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    };
    run(&["simulate-cpt"], &s.path("spectrum.csv"));
    let spec = s.path("spectrum.csv");
    let spec = spec.to_str().unwrap();
    run(&["fit-cpt", spec], &s.path("a.json"));
    run(&["fit-cpt", spec], &s.path("b.json"));
    let a = std::fs::read(s.path("a.json")).unwrap();
    assert_eq!(a, std::fs::read(s.path("b.json")).unwrap());
    let report = json(&s.path("a.json"));
    assert_eq!(report["config"]["seed"], 7);
    assert_eq!(report["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(report["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
    let t = report["result"]["summary"]["t_minus_ps"].as_f64().unwrap();
    assert!((t / 31.0 - 1.0).abs() < 0.02, "T₋ = {t}");
}

#[test]
fn thermal_model_reports_cutoff() {
    let s = Scratch::new("thermal");
    let mut csv = String::from("temperature_K,linewidth_MHz,error_MHz\n");
    let jitter = [0.3, -0.5, 0.4, -0.2, 0.5, -0.4, 0.4, -0.6, 0.2, 0.7, -0.3, 0.1, -0.5, 0.6, -0.1];
    for (i, j) in jitter.iter().enumerate() {
        let t = 4.0 + 2.0 * i as f64;
        let bend = if t > 14.0 { 0.8 * (t.powi(3) - 14f64.powi(3)) - 60.0 * (t - 14.0) } else { 0.0 };
        csv.push_str(&format!("{t},{},10\n", 300.0 + 20.0 * t + bend + 6.0 * j));
    }
    let series = s.write("series.csv", &csv);
    let out = bin()
        .args(["--plot", "thermal-model"])
        .arg(&series)
        .arg("-o")
        .arg(s.path("t.json"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(&s.path("t.json"));
    assert_eq!(r["result"]["cutoff"]["outcome"], "found");
    assert!(r["result"]["cutoff"]["index"].as_u64().unwrap().abs_diff(5) <= 1);
    assert_eq!(r["result"]["fits"].as_array().unwrap().len(), 3);
    assert!(s.path("t.svg").exists());
}

#[test]
fn d_broadening_closure() {
    let s = Scratch::new("broad");
    let inputs = s.write(
        "in.json",
        r#"{"tau_se": 4.55e-9, "p_c": 3e-8, "p_d": 2.5e-6, "p_sat": 1e-7, "gamma_c_measured": 4e8, "gamma_d_measured": 5.406e9}"#,
    );
    let out = bin().arg("d-broadening").arg(&inputs).arg("-o").arg(s.path("b.json")).output().unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let r = &json(&s.path("b.json"))["result"];
    let sum: f64 = ["gamma_d_hom", "gamma_d_pow", "gamma_diff", "gamma_d_phon"]
        .iter()
        .map(|k| r[k].as_f64().unwrap())
        .sum();
    assert!((sum / 5.406e9 - 1.0).abs() < 1e-12);

    let typo = s.write("typo.json", r#"{"tau_se": 4.55e-9, "p_c": 0, "p_d": 0, "p_sat": 1e-7, "gamma_c": 4e8, "gamma_d_measured": 5.4e9}"#);
    let out = bin().arg("d-broadening").arg(&typo).arg("-o").arg(s.path("t.json")).output().unwrap();
    assert_eq!(code(&out), 2);

    let negative = s.write(
        "neg.json",
        r#"{"tau_se": 4.55e-9, "p_c": 0, "p_d": 0, "p_sat": 1e-7, "gamma_c_measured": 4e8, "gamma_d_measured": 3e8}"#,
    );
    let out = bin().arg("d-broadening").arg(&negative).arg("-o").arg(s.path("n.json")).output().unwrap();
    assert_eq!(code(&out), 3);
}

#[test]
fn fit_line_lorentzian() {
    let s = Scratch::new("line");
    let mut csv = String::from("x,y\n");
    for i in 0..81 {
        let x = -4.0 + 0.1 * i as f64;
        csv.push_str(&format!("{x},{}\n", 0.2 + 3.0 / (1.0 + ((x - 0.5) / 0.6).powi(2))));
    }
    let curve = s.write("c.csv", &csv);
    let out = bin()
        .args(["fit-line", "--model", "lorentzian"])
        .arg(&curve)
        .arg("-o")
        .arg(s.path("l.json"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let r = &json(&s.path("l.json"))["result"];
    assert!((r["fwhm"].as_f64().unwrap() - 1.2).abs() < 1e-6);
    let out = bin()
        .args(["fit-line", "--model", "voigt"])
        .arg(&curve)
        .arg("-o")
        .arg(s.path("v.json"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn batch_runs_every_manifest_entry() {
    let s = Scratch::new("batch");
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/dark_scan");
    let scans: Vec<String> = (0..3).map(|k| format!("\"{}\"", fixtures.join(format!("scan_{k}.csv")).display())).collect();
    let log = fixtures.join("wavemeter.csv");
    let manifest = format!(
        "[[dataset]]\nname = \"fixture\"\nscans = [{}]\nlog = \"{}\"\np_c_nw = 30.0\np_d_nw = 2500.0\nout_dir = \"out/fixture\"\n\n\
         [[dataset]]\nname = \"broken\"\nscans = [\"missing.csv\"]\nlog = \"{}\"\nout_dir = \"out/broken\"\n",
        scans.join(", "),
        log.display(),
        log.display()
    );
    let manifest = s.write("manifest.toml", &manifest);
    // The fixture dip is a Lorentzian in counts, not a CPT spectrum, so the
    // fit stage only needs to run, not to succeed.
    let cfg = s.write("c.toml", "[fit]\nstarts = 1\nmax_evaluations_per_start = 50\n\n[scans]\nf_sat = 30000.0\n");
    let out = bin()
        .args(["--config", cfg.to_str().unwrap(), "batch", "--jobs", "2"])
        .arg(&manifest)
        .arg("-o")
        .arg(s.path("summary.json"))
        .output()
        .unwrap();
    let r = json(&s.path("summary.json"));
    let rows = r["result"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["name"], "fixture");
    assert!(s.path("out/fixture/reduced.csv").exists());
    assert!(s.path("out/fixture/reduced.json").exists());
    assert_eq!(rows[1]["exit_code"], 2);
    assert_eq!(code(&out), rows.iter().map(|r| r["exit_code"].as_i64().unwrap()).max().unwrap() as i32);
}
