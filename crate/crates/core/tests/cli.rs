mod common;

use std::path::{Path, PathBuf};
use std::process::Command;

use ivf_rabitq::cli::{parse_fvecs, read_fvecs, read_ivecs, write_fvecs, write_ivecs, IdMatrix, CSV_HEADER};
use ivf_rabitq::VectorMatrix;
use proptest::prelude::*;

struct Scratch(PathBuf);

impl Scratch {
    fn new(name: &str) -> Self {
        let dir = std::env::temp_dir().join(format!("ivrq-cli-{name}-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).unwrap();
        Self(dir)
    }

    fn path(&self, file: &str) -> PathBuf {
        self.0.join(file)
    }
}

impl Drop for Scratch {
    fn drop(&mut self) {
        let _ = std::fs::remove_dir_all(&self.0);
    }
}

fn ivrq(args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_ivrq")).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "ivrq {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn ground_truth_matches_double_loop() {
    let dir = Scratch::new("gt");
    let base = common::gaussian(1000, 16, 1);
    let query = common::gaussian(30, 16, 2);
    write_fvecs(dir.path("base.fvecs"), &base).unwrap();
    write_fvecs(dir.path("query.fvecs"), &query).unwrap();
    let (b, q, prefix) = (dir.path("base.fvecs"), dir.path("query.fvecs"), dir.path("gt"));
    let args = [
        "gt",
        "--base",
        s(&b),
        "--query",
        s(&q),
        "--k",
        "5",
        "--out-prefix",
        s(&prefix),
    ];
    ivrq(&args);
    let first = std::fs::read(dir.path("gt.ivecs")).unwrap();
    ivrq(&args);
    assert_eq!(std::fs::read(dir.path("gt.ivecs")).unwrap(), first);

    let ids = read_ivecs(dir.path("gt.ivecs")).unwrap();
    let dists = read_fvecs(dir.path("gt.fvecs")).unwrap();
    assert_eq!((ids.rows, ids.dims), (30, 5));
    for i in 0..30 {
        let mut d: Vec<(f64, i32)> = (0..1000)
            .map(|j| {
                let s: f64 = (0..16).map(|t| (query.row(i)[t] as f64 - base.row(j)[t] as f64).powi(2)).sum();
                (s, j as i32)
            })
            .collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let want: Vec<i32> = d[..5].iter().map(|e| e.1).collect();
        assert_eq!(ids.row(i), &want[..]);
        for (got, e) in dists.row(i).iter().zip(&d) {
            assert!((*got as f64 - e.0).abs() <= 1e-4 * e.0.max(1.0));
        }
    }
}

#[test]
fn self_ground_truth_is_identity() {
    let dir = Scratch::new("self");
    let base = common::gaussian(200, 8, 3);
    write_fvecs(dir.path("base.fvecs"), &base).unwrap();
    let b = dir.path("base.fvecs");
    ivrq(&["gt", "--base", s(&b), "--query", s(&b), "--k", "1", "--out-prefix", s(&dir.path("gt"))]);
    let ids = read_ivecs(dir.path("gt.ivecs")).unwrap();
    let dists = read_fvecs(dir.path("gt.fvecs")).unwrap();
    for i in 0..200 {
        assert_eq!(ids.row(i), &[i as i32]);
        assert_eq!(dists.row(i), &[0.0]);
    }
}

#[test]
fn build_search_eval_end_to_end() {
    let dir = Scratch::new("e2e");
    let (base, query) = common::mixture(4000, 50, 32, 8, 5);
    write_fvecs(dir.path("base.fvecs"), &base).unwrap();
    write_fvecs(dir.path("query.fvecs"), &query).unwrap();
    let (b, q, idx) = (dir.path("base.fvecs"), dir.path("query.fvecs"), dir.path("index.ivrq"));
    ivrq(&["build", "--base", s(&b), "--out", s(&idx), "--nk", "40", "--bits", "7"]);
    ivrq(&["gt", "--base", s(&b), "--query", s(&q), "--k", "10", "--out-prefix", s(&dir.path("gt"))]);
    let res = dir.path("res.ivecs");
    for mode in ["lut", "bitwise"] {
        ivrq(&[
            "search", "--index", s(&idx), "--query", s(&q), "--k", "10", "--nprobe", "4,40", "--mode", mode, "--batch",
            "16", "--out", s(&res),
        ]);
        ivrq(&[
            "eval",
            "--results",
            s(&dir.path("res_np4.ivecs")),
            "--results",
            s(&dir.path("res_np40.ivecs")),
            "--gt",
            s(&dir.path("gt.ivecs")),
            "--k",
            "10",
            "--csv",
            s(&dir.path("sweep.csv")),
        ]);
    }
    let csv = std::fs::read_to_string(dir.path("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], CSV_HEADER);
    assert_eq!(lines.len(), 5);
    let modes: Vec<&str> = lines[1..].iter().map(|l| l.split(',').nth(3).unwrap()).collect();
    assert_eq!(modes, ["lut", "lut", "bitwise", "bitwise"]);
    for l in &lines[1..] {
        let f: Vec<&str> = l.split(',').collect();
        assert_eq!(f[2], "7");
        let recall: f64 = f[4].parse().unwrap();
        assert!((0.0..=1.0).contains(&recall));
        if f[1] == "40" {
            assert!(recall > 0.95, "{l}");
        }
    }
}

#[test]
fn missing_input_fails() {
    let out = Command::new(env!("CARGO_BIN_EXE_ivrq"))
        .args(["build", "--base", "/nonexistent/base.fvecs", "--out", "/nonexistent/x"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(!out.stderr.is_empty());
}

proptest! {
    #[test]
    fn vecs_round_trip(rows in 1usize..6, dims in 1usize..9, seed in any::<u64>()) {
        let dir = Scratch::new(&format!("rt{seed}"));
        let m = common::gaussian(rows, dims, seed);
        write_fvecs(dir.path("m.fvecs"), &m).unwrap();
        let bytes = std::fs::read(dir.path("m.fvecs")).unwrap();
        prop_assert_eq!(bytes.len(), rows * (4 + 4 * dims));
        prop_assert_eq!(parse_fvecs(&bytes).unwrap(), m);

        let ids = IdMatrix { rows, dims, values: (0..(rows * dims) as i32).map(|v| v - 3).collect() };
        write_ivecs(dir.path("m.ivecs"), &ids).unwrap();
        prop_assert_eq!(read_ivecs(dir.path("m.ivecs")).unwrap(), ids);
    }
}

#[test]
fn one_record_layout() {
    let mut bytes = 2i32.to_le_bytes().to_vec();
    bytes.extend(1.0f32.to_le_bytes());
    bytes.extend(2.0f32.to_le_bytes());
    assert_eq!(parse_fvecs(&bytes).unwrap(), VectorMatrix::from_rows(&[[1.0f32, 2.0]]).unwrap());
    assert!(parse_fvecs(&bytes[..10]).is_err());
}
