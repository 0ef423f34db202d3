//! End-to-end runs of the `mattis` binary and of the library entry point.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mattis::config::{RunConfig, SourceFormat};
use mattis::{run, Format, RunOptions};
use tempfile::TempDir;

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn mattis(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mattis")).args(args).output().unwrap()
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, String)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read_to_string(&p).unwrap())
        })
        .collect();
    v.sort();
    v
}

const RBM_ZERO: &str = "[command]\nname = \"rbm\"\nbeta = 0.0\n";

const RS_SOLVE: &str = "preset = \"rbm\"
[command]
name = \"rs-solve\"
t = 0.0
y = [[0.3, 0.1], [0.1, 0.2]]
x = [[0.5, -0.25], [0.0, 0.0]]
";

const PATH_SOLVE: &str = "preset = \"rbm\"
[command]
name = \"path-solve\"
t = 0.03
x = [0.4, -0.2]
mc_samples = 2000
quad_order = 8
seed = 7
path = [
    { s = 0.0, value = [[0.1, 0.0], [0.0, 0.1]] },
    { s = 0.5, value = [[0.4, 0.1], [0.1, 0.3]] },
]
";

#[test]
fn rbm_at_beta_zero_matches_the_closed_form() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "rbm.toml", RBM_ZERO);
    let out = dir.path().join("out");
    let o = mattis(&["rbm", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    let lfe: f64 = stdout
        .lines()
        .find_map(|l| l.strip_prefix("limit_free_energy: "))
        .unwrap()
        .parse()
        .unwrap();
    assert!((lfe + 2.0 * 1f64.cosh().ln()).abs() <= 1e-9);
    assert!(out.join("summary.csv").exists());
    assert!(out.join("j_table.csv").exists());
}

#[test]
fn csv_files_carry_provenance_headers() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "rbm.toml", RBM_ZERO);
    let out = dir.path().join("out");
    let outcome = run(&RunOptions::new(&cfg, &out)).unwrap();
    let text = fs::read_to_string(out.join("j_table.csv")).unwrap();
    for key in ["# tool: mattis", "# command: rbm", "# config_sha256: ", "# quad_order: ", "# generated_unix: "] {
        assert!(text.contains(key), "missing {key}");
    }
    assert_eq!(outcome.files.len(), 2);
}

#[test]
fn no_timestamp_gives_byte_identical_output() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "path.toml", PATH_SOLVE);
    let mut dumps = Vec::new();
    for (k, threads) in [1usize, 3, 1].into_iter().enumerate() {
        let out = dir.path().join(format!("out{k}"));
        let mut opts = RunOptions::new(&cfg, &out);
        opts.timestamp = false;
        opts.threads = Some(threads);
        run(&opts).unwrap();
        dumps.push(read_dir_sorted(&out));
    }
    assert_eq!(dumps[0], dumps[1], "thread count changed the output");
    assert_eq!(dumps[0], dumps[2]);
    let seeds = &dumps[0].iter().find(|(n, _)| n == "points.csv").unwrap().1;
    assert!(seeds.contains("# seeds: 7"));
}

#[test]
fn seed_override_changes_monte_carlo_only() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "path.toml", PATH_SOLVE);
    let a = run(&RunOptions::new(&cfg, dir.path().join("a"))).unwrap().report;
    let mut opts = RunOptions::new(&cfg, dir.path().join("b"));
    opts.seed = Some(8);
    let b = run(&opts).unwrap().report;
    let pa = a.table("points").unwrap();
    let pb = b.table("points").unwrap();
    assert_eq!(pa.f64_at(0, "psi"), pb.f64_at(0, "psi"));
    assert_ne!(pa.f64_at(0, "mc_psi"), pb.f64_at(0, "mc_psi"));
}

#[test]
fn rs_solve_at_time_zero_returns_the_gradient() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "rs.toml", RS_SOLVE);
    let out = dir.path().join("out");
    let report = run(&RunOptions::new(&cfg, &out)).unwrap().report;
    let t = report.table("fixed_points").unwrap();
    assert_eq!(t.rows.len(), 2);
    for row in 0..2 {
        for e in ["1_1", "1_2", "2_2"] {
            let z = t.f64_at(row, &format!("z_{e}")).unwrap();
            let g = t.f64_at(row, &format!("grad_phi_{e}")).unwrap();
            assert!((z - g).abs() <= 1e-12);
        }
    }
}

#[test]
fn json_output_is_one_document() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "rs.toml", RS_SOLVE);
    let out = dir.path().join("out");
    let mut opts = RunOptions::new(&cfg, &out);
    opts.format = Format::Json;
    let files = run(&opts).unwrap().files;
    assert_eq!(files, vec![out.join("rs-solve.json")]);
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&files[0]).unwrap()).unwrap();
    assert_eq!(doc["provenance"]["command"], "rs-solve");
    assert_eq!(doc["tables"]["fixed_points"]["rows"].as_array().unwrap().len(), 2);
    assert!(doc["summary"]["t_star_bound"].is_f64());
}

#[test]
fn json_configs_are_accepted() {
    let text = r#"{"preset": "rbm", "command": {"name": "rs-solve", "t": 0.01, "y": [[0.2, 0.0], [0.0, 0.2]], "x": [0.1, 0.2]}}"#;
    let cfg = RunConfig::parse(text, SourceFormat::Json, Path::new("."), Some("rs-solve")).unwrap();
    assert_eq!(cfg.command.name(), "rs-solve");
    assert_eq!(cfg.config_hash.len(), 64);
}

#[test]
fn model_file_is_resolved_against_the_config_directory() {
    let dir = TempDir::new().unwrap();
    let model = serde_json::to_string(&mattis_core::ModelSpec::rbm()).unwrap();
    write(dir.path(), "model.json", &model);
    let cfg = write(
        dir.path(),
        "run.toml",
        "model_file = \"model.json\"\n[command]\nname = \"rs-solve\"\nt = 0.0\ny = [[0.1, 0.0], [0.0, 0.1]]\nx = [0.0, 0.0]\n",
    );
    let report = run(&RunOptions::new(&cfg, dir.path().join("out"))).unwrap().report;
    assert_eq!(report.command, "rs-solve");
}

fn error_json(args: &[&str]) -> (i32, serde_json::Value) {
    let o = mattis(args);
    let code = o.status.code().unwrap();
    let line = String::from_utf8(o.stderr).unwrap();
    (code, serde_json::from_str(line.trim()).unwrap())
}

#[test]
fn config_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let cases = [
        ("mismatch.toml", RBM_ZERO, Some("rs-solve")),
        ("unknown.toml", "[command]\nname = \"rbm\"\nbeta = 0.0\nbogus = 1\n", None),
        ("nomodel.toml", "[command]\nname = \"rs-solve\"\nt = 0.0\ny = [[0.1]]\nx = [0.0]\n", None),
        ("badt.toml", "preset = \"rbm\"\n[command]\nname = \"rs-solve\"\nt = -1.0\ny = [[0.1, 0.0], [0.0, 0.1]]\nx = [0.0, 0.0]\n", None),
    ];
    for (name, text, cmd) in cases {
        let cfg = write(dir.path(), name, text);
        let mut args = vec!["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--error-json"];
        if let Some(c) = cmd {
            args.insert(0, c);
        }
        let (code, doc) = error_json(&args);
        assert_eq!(code, 2, "{name}: {doc}");
        assert_eq!(doc["exit_code"], 2);
    }
}

#[test]
fn unsupported_requests_exit_with_three() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "oracle.toml",
        "preset = \"rbm-multitype\"\n[command]\nname = \"oracle-compare\"\nbeta = 0.1\ng = \"m1\"\nn = [2]\nsamples = 4\n",
    );
    let out = dir.path().join("out");
    let (code, doc) = error_json(&["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--error-json"]);
    assert_eq!(code, 3, "{doc}");
}

#[test]
fn missing_config_exits_with_one() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nope.toml");
    let o = mattis(&["--config", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}
