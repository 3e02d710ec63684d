use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn microlocal(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_microlocal"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

/// Every file under `dir` except the manifest, relative and sorted.
fn files_under(dir: &Path) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                if rel != "manifest.json" {
                    out.insert(rel);
                }
            }
        }
    }
    out
}

fn listed(m: &serde_json::Value) -> BTreeSet<String> {
    m["outputs"].as_array().unwrap().iter().map(|f| f["path"].as_str().unwrap().to_string()).collect()
}

#[test]
fn nu_on_grushin_three() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "nu.toml", "grushin_k = 3\nseed = 11\n");
    let o = microlocal(&["nu", "--config", "nu.toml", "--output", "out"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("nu = 3"));
    let out = tmp.path().join("out");
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("nu.json")).unwrap()).unwrap();
    assert_eq!(report["report"]["nu"], 3);
    assert_eq!(report["seed"], 11);
    let m = manifest(&out);
    assert_eq!(m["seed"], 11);
    assert_eq!(m["pipeline"], "nu");
    assert_eq!(m["outputs"][0]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn misspelled_key_is_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "c.toml", "lamda = [4, 64, 8]\n");
    let o = microlocal(&["fbi", "--config", "c.toml", "--output", "out"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("did you mean lambdas"));
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn bad_usage_and_missing_input_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(microlocal(&["frobnicate"], tmp.path()).status.code(), Some(1));
    write(tmp.path(), "c.toml", "input = \"missing.csv\"\n");
    assert_eq!(microlocal(&["fbi", "--config", "c.toml"], tmp.path()).status.code(), Some(1));
    write(tmp.path(), "d.toml", "fields = \"X1 = d1 +\"\n");
    assert_eq!(microlocal(&["nu", "--config", "d.toml"], tmp.path()).status.code(), Some(1));
}

#[test]
fn numerical_failure_exits_two_and_leaves_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    write(
        tmp.path(),
        "blow.toml",
        "generator = \"xi1^2 + 52/100*x1^4\"\nr = 1\nn = 33\nt = 0.1\nlambda = 1\n",
    );
    let o = microlocal(&["deform", "--config", "blow.toml", "--output", "nested/out"], tmp.path());
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("deformation") && err.contains("hint"), "{err}");
    assert!(!tmp.path().join("nested").exists());
}

#[test]
fn counterexample_run_meets_its_targets() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "cx.toml", "k = 2\neigen_index = 0\n");
    let o = microlocal(&["counterexample", "--config", "cx.toml", "--output", "out"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = tmp.path().join("out");
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert!(r["residual"].as_f64().unwrap() <= 1e-4);
    let s = r["smoothness"]["exponent"].as_f64().unwrap();
    assert!((s + 4.0).abs() <= 0.3, "exponent {s}");
    assert!(out.join("u.bin").is_file());
}

#[test]
fn reruns_are_byte_identical_and_fully_listed() {
    let tmp = tempfile::tempdir().unwrap();
    let configs = [
        ("eig", "k = 3\ncount = 3\n"),
        ("gevrey", "function = \"delta\"\nlambdas = [4, 1024, 8]\n"),
        ("deform", "t = 0.05\nsnapshots = 4\n"),
        ("estimate", "modes = [1, 2, 4]\ntheta = 0.5\ncoupling = -1\n"),
    ];
    for (verb, text) in configs {
        write(tmp.path(), &format!("{verb}.toml"), text);
        for (run, threads) in [("a", "1"), ("b", "2")] {
            let o = microlocal(
                &[verb, "--config", &format!("{verb}.toml"), "--output", &format!("{verb}-{run}"), "--seed", "5", "--threads", threads],
                tmp.path(),
            );
            assert_eq!(o.status.code(), Some(0), "{verb}: {}", String::from_utf8_lossy(&o.stderr));
        }
        let (a, b) = (tmp.path().join(format!("{verb}-a")), tmp.path().join(format!("{verb}-b")));
        let (ma, mb) = (manifest(&a), manifest(&b));
        assert_eq!(ma["outputs"], mb["outputs"], "{verb}: output hashes differ");
        assert_eq!(files_under(&a), listed(&ma), "{verb}: orphan or missing files");
        for f in listed(&ma) {
            assert_eq!(fs::read(a.join(&f)).unwrap(), fs::read(b.join(&f)).unwrap(), "{verb}/{f}");
        }
        assert!(listed(&ma).iter().any(|f| f.starts_with("plot/") && f.ends_with(".dat")));
    }
}

#[test]
fn plot_files_carry_provenance() {
    let tmp = tempfile::tempdir().unwrap();
    let o = microlocal(&["deform", "--output", "out", "--seed", "3"], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    let text = fs::read_to_string(tmp.path().join("out/plot/growth.dat")).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# max(Phi_t - Phi_0)"));
    assert_eq!(lines.next().unwrap(), "# columns: t max_gap");
    assert!(lines.next().unwrap().contains("pipeline=deform seed=3"));
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.is_empty())
        .map(|l| l.split_whitespace().map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows[0], vec![0.0, 0.0]);
    assert!(rows.windows(2).all(|w| w[1][1] >= w[0][1]), "growth should be monotone in t");
}

#[test]
fn input_files_are_hashed() {
    let tmp = tempfile::tempdir().unwrap();
    let o = microlocal(&["fbi", "--output", "first", "--config", &write(tmp.path(), "d.toml", "function = \"delta\"\nlambdas = [4, 64, 6]\n").to_string_lossy()], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    fs::copy(tmp.path().join("first/input.bin"), tmp.path().join("delta.bin")).unwrap();
    write(tmp.path(), "f.toml", "input = \"delta.bin\"\nlambdas = [4, 64, 6]\n");
    let o = microlocal(&["fbi", "--config", "f.toml", "--output", "second"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&tmp.path().join("second"));
    assert_eq!(m["inputs"][0]["bytes"].as_u64().unwrap(), fs::metadata(tmp.path().join("delta.bin")).unwrap().len());
    let a = fs::read(tmp.path().join("first/field.csv")).unwrap();
    let b = fs::read(tmp.path().join("second/field.csv")).unwrap();
    assert_eq!(a, b, "file input and built-in delta give the same field");
}
