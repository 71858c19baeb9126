use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn run(sub: &str, config: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_permlim")).args([sub, "--config"]).arg(config).output().expect("binary runs")
}

fn write(dir: &TempDir, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn validate_cost_exit_codes() {
    let dir = TempDir::new().unwrap();
    let ok = write(&dir, "ok.ini", "[cost]\nfamily = quadratic\nparams = 1.0\n");
    let o = run("validate-cost", &ok);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("symmetry"));

    // Asymmetric 3x3 table on nodes 0, 1/2, 1.
    write(&dir, "asym.txt", "3\n0 1 2\n0 0 1\n0 0 0\n");
    let bad = write(&dir, "bad.ini", "[cost]\nfamily = tabulated\npath = asym.txt\n");
    let o = run("validate-cost", &bad);
    assert_eq!(o.status.code(), Some(2), "{}", stdout(&o));

    let missing = write(&dir, "missing.ini", "[kernel]\nkind = constant\n");
    let o = run("validate-cost", &missing);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("[cost]"), "{}", stderr(&o));
}

#[test]
fn config_errors_exit_one() {
    let dir = TempDir::new().unwrap();
    let o = run("converge", &dir.path().join("nope.ini"));
    assert_eq!(o.status.code(), Some(1));
    let odd = write(&dir, "odd.ini", "[cost]\nfamily = quadratic\nparams = 1\n[plot]\nx = 1\n");
    assert_eq!(run("converge", &odd).status.code(), Some(1));
    let cap = write(&dir, "cap.ini", "[kernel]\nkind = constant\n[study]\nn_list = 4, 30\n");
    assert_eq!(run("converge", &cap).status.code(), Some(1));
}

#[test]
fn solve_bridge_writes_potential() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "b.ini",
        "[cost]\nfamily = quadratic\nparams = 1.0\n[bridge]\nm = 400\ntol = 1e-10\n[output]\ncsv_path = a.csv\n",
    );
    let o = run("solve-bridge", &cfg);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("gamma0"));
    let csv = std::fs::read_to_string(dir.path().join("a.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("node,a_value"));
    assert_eq!(lines.count(), 400);

    let stuck =
        write(&dir, "stuck.ini", "[cost]\nfamily = quadratic\nparams = 1.0\n[bridge]\nmax_iter = 1\ntol = 1e-14\n");
    assert_eq!(run("solve-bridge", &stuck).status.code(), Some(3));
}

#[test]
fn converge_writes_csv_and_eigen_dump() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "c.ini",
        "[kernel]\nkind = cosine\nepsilon = 0.5\n[study]\nn_list = 4, 8\n[output]\ncsv_path = c.csv\neigen_dump = true\n",
    );
    let o = run("converge", &cfg);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("fredholm limit"));
    let csv = std::fs::read_to_string(dir.path().join("c.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some(permlim::lab::CONVERGE_HEADER));
    assert_eq!(csv.lines().count(), 3);
    let dump = std::fs::read_to_string(dir.path().join("c.eigen.txt")).unwrap();
    assert_eq!(dump.lines().count(), 256);
    assert!(dump.lines().all(|l| l.parse::<f64>().is_ok()));
}

#[test]
fn converge_warns_on_rough_cost_and_closed_gap() {
    let dir = TempDir::new().unwrap();
    let rough = write(&dir, "r.ini", "[cost]\nfamily = absolute\nparams = 1.0\n[study]\nn_list = 3, 4\n");
    let o = run("converge", &rough);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("warning:"), "{}", stderr(&o));

    let tight = write(&dir, "t.ini", "[kernel]\nkind = cosine\nepsilon = 0.999\n[study]\nn_list = 2\n");
    let o = run("converge", &tight);
    assert!(stderr(&o).contains("spectral gap"), "{}", stderr(&o));
}

#[test]
fn balance_study_table() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "s.ini",
        "[cost]\nfamily = quadratic\nparams = 1.0\n[study]\nn_list = 50, 100\n[output]\ncsv_path = s.csv\n",
    );
    let o = run("balance-study", &cfg);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("s.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some(permlim::lab::BALANCE_HEADER));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn balance_failure_exits_four() {
    let dir = TempDir::new().unwrap();
    // A constant table far from stochastic leaves the balancing ball.
    write(&dir, "five.txt", "2\n5 5\n5 5\n");
    let cfg = write(&dir, "f.ini", "[kernel]\nkind = tabulated\npath = five.txt\n[study]\nn_list = 6\n");
    let o = run("balance-study", &cfg);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}
