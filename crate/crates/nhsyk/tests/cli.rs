use std::path::Path;
use std::process::{Command, Output};

fn nhsyk(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nhsyk")).args(args).current_dir(dir).output().unwrap()
}

const SMALL: &str = r#"
[model]
j = 1.0
v = 0.0
zeta = 0.5
mu = 0.5
l = 8
t = 4.0
n = 10.0

[grid]
n_t = 40

[sweep]
phis = [0.0, 0.7853981633974483, 1.5707963267948966, 2.356194490192345, 3.141592653589793]
a_sizes = [2, 4, 6]
"#;

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn saddle_table_without_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = nhsyk(&["saddle", "--zeta", "0.6,2.5", "--v", "0"], dir.path());
    assert!(o.status.success());
    let s = stdout(&o);
    assert!(s.contains("0.3") && s.contains("0.4"), "{s}");
    assert_eq!(s.lines().count(), 3);
}

#[test]
fn bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), SMALL.replace("l = 8", "l = 7")).unwrap();
    let o = nhsyk(&["--config", "bad.toml", "solve", "--phi", "1", "--a-size", "4"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
    let o = nhsyk(&["sweep"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_writes_csv_and_config_then_fits() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), SMALL).unwrap();
    let o = nhsyk(&["--config", "run.toml", "--out", "res", "sweep"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("res/sweep.csv")).unwrap();
    assert!(csv.starts_with("zeta,V,mu,L,T,n_t,phi,A_size,"));
    // 5 phis x 3 sizes plus a second branch at pi for each size
    assert_eq!(csv.lines().count(), 1 + 3 * 6);
    assert!(dir.path().join("res/sweep.config.toml").exists());
    assert!(std::fs::read_dir(dir.path().join("res/cache")).unwrap().count() >= 1);

    let o = nhsyk(&["fit", "res/sweep.csv"], dir.path());
    // three sizes are too few to classify; reported as a domain error
    assert_eq!(o.status.code(), Some(2), "{}", stdout(&o));

    // the cached baseline gives the same numbers
    let o = nhsyk(&["--config", "run.toml", "--out", "res", "solve", "--phi", "1.5707963267948966", "--a-size", "4"], dir.path());
    assert!(o.status.success());
    let line = csv.lines().find(|l| l.contains(",1.5707963267948966,4,")).unwrap().to_string();
    let re = line.split(',').nth(8).unwrap().parse::<f64>().unwrap();
    let s = stdout(&o);
    let printed: f64 = s.lines().find_map(|l| l.strip_prefix("F/N = ")).unwrap().split(' ').next().unwrap().parse().unwrap();
    assert!((printed - re).abs() < 1e-9, "{s} vs {re}");
    let total: f64 = s.lines().find_map(|l| l.strip_prefix("F at N = 10: ")).unwrap().split(' ').next().unwrap().parse().unwrap();
    assert!((total - 10.0 * re).abs() < 1e-8, "{s}");
}

#[test]
fn check_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = nhsyk(&["check", "--only", "1,7"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert_eq!(stdout(&o).lines().filter(|l| l.starts_with("PASS")).count(), 2);
    let o = nhsyk(&["--seed", "3", "check", "--only", "9"], dir.path());
    assert_eq!(o.status.code(), Some(4));
    assert!(stdout(&o).starts_with("FAIL [ 9]"));
    let o = nhsyk(&["check", "--only", "12"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}
