use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("bondloc-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(config: &str, dir: &Path) -> Output {
    let path = dir.join("scenario.toml");
    std::fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_bondloc"))
        .args(["run", path.to_str().unwrap(), "--out", dir.join("out").to_str().unwrap()])
        .output()
        .unwrap()
}

fn error_kind(out: &Output) -> String {
    let v: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    v["kind"].as_str().unwrap().to_string()
}

#[test]
fn parse_error_exits_2() {
    let dir = scratch("parse");
    let out = run("experiment = [", &dir);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_kind(&out), "parse");
}

#[test]
fn unknown_field_is_a_parse_error() {
    let dir = scratch("unknown");
    let out = run("experiment = \"checks\"\nbogus = 1\n[checks]\n", &dir);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn validation_error_exits_3_before_running() {
    let dir = scratch("validation");
    let out = run("experiment = \"sawtooth\"\n[sawtooth]\nh_ratio = 4.0\ncases = [{ teeth = 1, delta = 0.01 }]\n", &dir);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_kind(&out), "validation");
    assert!(!dir.join("out").join("summary.json").exists());
}

#[test]
fn missing_block_is_a_validation_error() {
    let dir = scratch("missing");
    let out = run("experiment = \"localize\"\n", &dir);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn identity_density_row() {
    let dir = scratch("density");
    let cfg = "experiment = \"density\"\nm = 2.0\n[potential]\nkind = \"power\"\ncoef = 1.0\np = 2.0\n\
               [density]\nmatrices = [[1.0, 0.0, 0.0, 1.0]]\n";
    let out = run(cfg, &dir);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.join("out").join("density.csv")).unwrap();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr.headers().unwrap().clone();
    let row = rdr.records().next().unwrap().unwrap();
    let get = |k: &str| row.get(header.iter().position(|h| h == k).unwrap()).unwrap().to_string();
    assert_eq!(get("lower").parse::<f64>().unwrap(), 0.0);
    assert!(get("tilde").parse::<f64>().unwrap().abs() < 1e-30);
    assert_eq!(get("zero_set"), "true");
}

#[test]
fn linearize_schema() {
    let dir = scratch("linearize");
    let cfg = "experiment = \"linearize\"\nm = 1.0\n[domain]\ndim = 1\ncells = 100\n\
               [kernel]\nfamily = \"box\"\ndelta = 0.3\n[micro]\ncatalog = \"quartic\"\n\
               [field]\ntype = \"quadratic\"\nscale = 1.0\n[linearize]\neps = [0.2, 0.1, 0.05, 0.025]\n";
    let out = run(cfg, &dir);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.join("out").join("linearize.csv")).unwrap();
    assert!(text.starts_with("eps,E_eps,E0,abs_err"));
    assert_eq!(text.lines().count(), 5);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("out").join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["pass"], true);
}

#[test]
fn failed_contract_exits_1() {
    // cohesive Ψ has vanishing third derivative at 0, so the 1D error is O(ε²)
    let dir = scratch("contract");
    let cfg = "experiment = \"linearize\"\nm = 1.0\n[domain]\ndim = 1\ncells = 200\n\
               [kernel]\nfamily = \"box\"\ndelta = 0.3\n\
               [micro]\ncatalog = \"cohesive\"\nparams = { f_inf = 1.0, a = 1.0, b = 1.0 }\n\
               [field]\ntype = \"quadratic\"\nscale = 1.0\n[linearize]\neps = [0.2, 0.1, 0.05, 0.025]\n";
    let out = run(cfg, &dir);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_kind(&out), "contract");
    assert!(dir.join("out").join("summary.json").exists());
}

#[test]
fn validate_and_catalog_subcommands() {
    let exe = env!("CARGO_BIN_EXE_bondloc");
    let example = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples").join("localize.toml");
    let out = Command::new(exe).args(["validate", example.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let out = Command::new(exe).arg("list-catalog").output().unwrap();
    assert!(String::from_utf8_lossy(&out.stdout).contains("mbm"));
}
