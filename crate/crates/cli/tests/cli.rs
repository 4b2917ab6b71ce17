use std::path::Path;
use std::process::{Command, Output};

fn dpq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dpq"))
        .args(args)
        .output()
        .expect("run dpq")
}

fn path(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

fn gen(dir: &Path, name: &str, seed: &str, per_class: &str) -> std::path::PathBuf {
    let out = dir.join(name);
    let o = dpq(&[
        "--seed", seed, "gen", "--classes", "3", "--dim", "8", "--points-per-class", per_class, "--out", path(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn pq_pipeline_and_search_output_format() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "db.dpqv", "1", "20");
    let queries = gen(dir.path(), "q.dpqv", "2", "2");
    let cb = dir.path().join("pq.dpqc");
    let codes = dir.path().join("db.dpqz");
    let o = dpq(&[
        "--seed", "3", "train-pq", "--data", path(&data), "--partitions", "2", "--clusters", "4", "--out", path(&cb),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = dpq(&["encode", "--data", path(&data), "--codebook", path(&cb), "--out", path(&codes)]);
    assert!(o.status.success());

    let args = [
        "search", "--queries", path(&queries), "--database", path(&codes), "--codebook", path(&cb), "--k", "5",
    ];
    let o = dpq(&args);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 6 * 5);
    let mut last = (0usize, f64::NEG_INFINITY);
    for (n, line) in lines.iter().enumerate() {
        let f: Vec<&str> = line.split('\t').collect();
        assert_eq!(f.len(), 4, "{line}");
        let (query, rank): (usize, usize) = (f[0].parse().unwrap(), f[1].parse().unwrap());
        assert_eq!((query, rank), (n / 5, n % 5));
        assert!(f[2].parse::<usize>().unwrap() < 60);
        let dist: f64 = f[3].parse().unwrap();
        if rank > 0 {
            assert!(dist >= last.1);
        }
        last = (query, dist);
    }
    assert_eq!(dpq(&args).stdout, text.as_bytes(), "search output is deterministic");

    let o = dpq(&[
        "--format", "json-lines", "eval", "--queries", path(&queries), "--database", path(&data), "--codebook",
        path(&cb), "--mode", "sym",
    ]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("\"metric\":\"map\"") && text.contains("pq-sym"), "{text}");
}

#[test]
fn dpq_training_is_deterministic_and_classifies() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "train.dpqv", "4", "30");
    let train = |out: &Path| {
        dpq(&[
            "--seed", "5", "--threads", "1", "train-dpq", "--data", path(&data), "--partitions", "2", "--clusters",
            "4", "--hidden", "8", "--epochs", "5", "--out", path(out),
        ])
    };
    let (a, b) = (dir.path().join("a.dpqm"), dir.path().join("b.dpqm"));
    assert!(train(&a).status.success());
    assert!(train(&b).status.success());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let o = dpq(&["classify", "--data", path(&data), "--model", path(&a)]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("top1") && text.contains("top5"), "{text}");
}

#[test]
fn experiment_writes_report_and_model() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.cfg");
    std::fs::write(
        &cfg,
        "data = synthetic\nclasses = 3\ndim = 8\npoints_per_class = 40\nqueries = 20\n\
         partitions = 2\nclusters = 4\nhidden = 8\nepochs = 3\nseed = 2\n",
    )
    .unwrap();
    let (report, model) = (dir.path().join("report.jsonl"), dir.path().join("m.dpqm"));
    let o = dpq(&[
        "--format", "json-lines", "experiment", "--config", path(&cfg), "--report-out", path(&report),
        "--model-out", path(&model),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&report).unwrap();
    assert!(text.lines().count() >= 8);
    assert!(std::fs::read(&model).unwrap().starts_with(b"DPQM"));
}

#[test]
fn exit_codes_distinguish_usage_config_and_stage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(dpq(&["--help"]).status.code(), Some(0));
    assert_eq!(dpq(&["no-such-command"]).status.code(), Some(2));

    let missing = dir.path().join("missing.dpqv");
    let o = dpq(&["classify", "--data", path(&missing), "--model", path(&missing)]);
    assert_eq!(o.status.code(), Some(2));

    let bad_cfg = dir.path().join("bad.cfg");
    std::fs::write(&bad_cfg, "partitions = 3\nbogus = 1\n").unwrap();
    let o = dpq(&["experiment", "--config", path(&bad_cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));

    let data = gen(dir.path(), "tiny.dpqv", "6", "2");
    let o = dpq(&[
        "train-pq", "--data", path(&data), "--partitions", "2", "--clusters", "64", "--out",
        path(&dir.path().join("x.dpqc")),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("train-pq"));

    let o = dpq(&[
        "train-dpq", "--data", path(&data), "--partitions", "2", "--clusters", "2", "--epochs", "2",
        "--learning-rate", "1e300", "--w-weight-decay", "1", "--out", path(&dir.path().join("x.dpqm")),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("train-dpq"));
}
