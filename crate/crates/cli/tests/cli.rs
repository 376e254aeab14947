use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qbc_core::math::{binding_bound, redundant_key_rate, BindingParams, BindingVariant};
use serde_json::{json, Value};

fn qbc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qbc"))
        .args(args)
        .env_remove("QBC_OUT_DIR")
        .output()
        .expect("qbc runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write_json(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_vec_pretty(v).unwrap()).unwrap();
    p
}

fn repo_file(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn load(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn assert_valid(schema_name: &str, instance: &Value) {
    let schema = load(&repo_file(&format!("schemas/{schema_name}.schema.json")));
    let registry = jsonschema::Registry::new()
        .add("urn:qbc:session_config", load(&repo_file("schemas/session_config.schema.json")))
        .unwrap()
        .prepare()
        .unwrap();
    let v = jsonschema::options().with_registry(&registry).build(&schema).unwrap();
    let errors: Vec<String> = v.iter_errors(instance).map(|e| format!("{} at {}", e, e.instance_path())).collect();
    assert!(errors.is_empty(), "{schema_name}: {errors:#?}");
}

fn honest_session(seed: u64) -> Value {
    json!({
        "n_quarter": 8,
        "codebook_size": null,
        "n_tol": 2,
        "e_tol": 0.25,
        "frame_budget": 300,
        "commit_bit": 1,
        "seed": seed
    })
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(code(&qbc(&["--help"])), 0);
    assert_eq!(code(&qbc(&["--version"])), 0);
    assert_eq!(code(&qbc(&[])), 64);
    assert_eq!(code(&qbc(&["frobnicate"])), 64);
    assert_eq!(code(&qbc(&["rates", "--n-quarter", "many"])), 64);
    assert_eq!(code(&qbc(&["simulate", "--config", "/nonexistent.json"])), 64);
}

#[test]
fn rates_default_grid() {
    let o = qbc(&["rates", "--out", "-"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(rdr.headers().unwrap(), vec!["q_tol", "p", "r", "r_prime"]);
    let rows: Vec<[f64; 4]> = rdr
        .records()
        .map(|r| {
            let r = r.unwrap();
            std::array::from_fn(|i| r[i].parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 61 * 11);
    assert_eq!(rows[0], [0.0, 0.0, 1.0, 1.0]);
    for row in &rows {
        assert_eq!(row[3], redundant_key_rate(row[0], row[1], 100).unwrap());
    }
    // rows are q-major with 11 p values each; where r > 0 the surface falls along both axes
    for (i, row) in rows.iter().enumerate() {
        if row[2] <= 0.0 {
            continue;
        }
        if i % 11 != 10 {
            assert!(rows[i + 1][3] <= row[3]);
        }
        if i + 11 < rows.len() {
            assert!(rows[i + 11][3] <= row[3]);
        }
    }
}

#[test]
fn rates_single_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_json(
        dir.path(),
        "r.json",
        &json!({"q_tol": {"start": 0.02, "stop": 0.02, "points": 1}, "p": {"start": 0.001, "stop": 0.001, "points": 1}}),
    );
    let o = qbc(&["rates", "--config", cfg.to_str().unwrap(), "--out", "-"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).lines().count(), 2);

    let bad = write_json(dir.path(), "bad.json", &json!({"q_tol": {"start": 0.6, "stop": 0.7, "points": 2}}));
    let o = qbc(&["rates", "--config", bad.to_str().unwrap(), "--out", "-"]);
    assert_eq!(code(&o), 64);
    assert!(String::from_utf8_lossy(&o.stderr).contains("q_tol"));
    let unknown = write_json(dir.path(), "u.json", &json!({"q_toll": 1}));
    assert_eq!(code(&qbc(&["rates", "--config", unknown.to_str().unwrap()])), 64);
}

#[test]
fn binding_rows_match_library() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_json(
        dir.path(),
        "b.json",
        &json!({"p": [0.1, 0.0], "n_tol": [20, 4], "e_tol": [0.05, 0.25], "variants": ["hoeffding", "literal"], "delta_grid": 500}),
    );
    let o = qbc(&["binding", "--config", cfg.to_str().unwrap(), "--out", "-"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(rdr.headers().unwrap(), vec!["p", "n_tol", "e_tol", "variant", "eps_b"]);
    let mut keys = Vec::new();
    for r in rdr.records() {
        let r = r.unwrap();
        let p: f64 = r[0].parse().unwrap();
        let n: u32 = r[1].parse().unwrap();
        let e: f64 = r[2].parse().unwrap();
        let variant = match &r[3] {
            "literal" => BindingVariant::Literal,
            "hoeffding" => BindingVariant::Hoeffding,
            other => panic!("variant {other}"),
        };
        let eps: f64 = r[4].parse().unwrap();
        let direct = binding_bound(&BindingParams::new(p, n, e).with_variant(variant).with_grid(500)).unwrap();
        assert_eq!(eps.to_bits(), direct.to_bits());
        if p == 0.0 {
            assert_eq!(eps, 0.0);
        }
        keys.push((p.to_bits(), n, e.to_bits(), variant));
    }
    assert_eq!(keys.len(), 16);
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted, "rows sorted by grid coordinates, literal before hoeffding");

    let bad = write_json(dir.path(), "n1.json", &json!({"n_tol": [1]}));
    let o = qbc(&["binding", "--config", bad.to_str().unwrap(), "--out", "-"]);
    assert_eq!(code(&o), 64);
    assert!(String::from_utf8_lossy(&o.stderr).contains("n_tol"));
}

#[test]
fn simulate_accepts_honest_commitment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_json(dir.path(), "s.json", &honest_session(4));
    let out = dir.path().join("t.json");
    let o = qbc(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let t = load(&out);
    assert_eq!(t["verdict"], "accept1");
    assert_eq!(t["commitments"][0]["committed_bit"], 1);
    assert_valid("transcript", &t);
    assert_valid("session_config", &load(&cfg));
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_json(dir.path(), "s.json", &json!({"n_quarter": 2, "codebook_size": 6, "n_tol": 2, "e_tol": 0.25, "frame_budget": 300, "export_frames": true}));
    let run = |seed: &str| {
        let o = qbc(&["simulate", "--config", cfg.to_str().unwrap(), "--seed", seed, "--out", "-"]);
        assert!(matches!(code(&o), 0 | 2 | 3));
        o.stdout
    };
    let a = run("11");
    assert_eq!(a, run("11"));
    assert_ne!(a, run("12"));
    let t: Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(t["config"]["seed"], 11);
    assert_valid("transcript", &t);
}

#[test]
fn simulate_exit_statuses() {
    let dir = tempfile::tempdir().unwrap();
    let tiny = write_json(dir.path(), "tiny.json", &json!({"frame_budget": 1}));
    let o = qbc(&["simulate", "--config", tiny.to_str().unwrap(), "--out", "-"]);
    assert_eq!(code(&o), 3);
    let t: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(t["verdict"], "no_commit_frame");

    let mut tampered = honest_session(4);
    tampered["tamper"] = json!({"relay": 1, "bit": 3});
    let cfg = write_json(dir.path(), "tamper.json", &tampered);
    let o = qbc(&["simulate", "--config", cfg.to_str().unwrap(), "--out", "-"]);
    assert_eq!(code(&o), 2);
    let t: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(t["commitments"][0]["relays_consistent"], false);

    let bad = write_json(dir.path(), "bad.json", &json!({"e_tol": 0.7}));
    let o = qbc(&["simulate", "--config", bad.to_str().unwrap(), "--out", "-"]);
    assert_eq!(code(&o), 64);
    assert!(String::from_utf8_lossy(&o.stderr).contains("e_tol"));
}

#[test]
fn output_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_qbc"))
        .args(["binding"])
        .env("QBC_OUT_DIR", dir.path().join("nested"))
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let csv = std::fs::read_to_string(dir.path().join("nested/binding.csv")).unwrap();
    assert!(csv.starts_with("p,n_tol,e_tol,variant,eps_b\n"));
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn route(args: &[&str]) -> (i32, Value) {
    let o = qbc(args);
    let v = if o.stdout.is_empty() { Value::Null } else { serde_json::from_slice(&o.stdout).unwrap() };
    (code(&o), v)
}

#[test]
fn route_diamond_datagram_and_vc() {
    let net = fixture("diamond.json");
    let net = net.to_str().unwrap();
    assert_valid("network", &load(Path::new(net)));

    // A-B-D: min(120/100,1) * min(300/100,1) = 1; A-C-D: 1 * 0.9
    let (c, dg) = route(&["route", "--config", net, "--out", "-"]);
    assert_eq!(c, 0);
    assert_eq!(dg["chosen"]["nodes"], json!(["A", "B", "D"]));
    assert_eq!(dg["chosen"]["score"], 1.0);
    assert!(dg.get("reservation").is_none());
    assert_valid("route_report", &dg);

    let (c, vc) = route(&["route", "--config", net, "--mode", "vc", "--alpha", "0", "--out", "-"]);
    assert_eq!(c, 0);
    assert_eq!(vc["chosen"]["nodes"], dg["chosen"]["nodes"]);
    let res = &vc["reservation"];
    assert_eq!(res["handles"].as_array().unwrap().len(), 2);
    for e in res["path_edges"].as_array().unwrap() {
        assert!(e["prob_after"].as_f64() >= e["prob_before"].as_f64());
    }
    assert_valid("route_report", &vc);
}

#[test]
fn route_mesh_full_reservation() {
    let net = fixture("mesh.json");
    let net = net.to_str().unwrap();
    assert_valid("network", &load(Path::new(net)));
    let (c, r) = route(&["route", "--config", net, "--mode", "vc", "--reserve", "full", "--seed", "3", "--out", "-"]);
    assert_eq!(c, 0);
    assert_valid("route_report", &r);
    let res = &r["reservation"];
    assert_eq!(res["mode"], "full");
    for h in res["handles"].as_array().unwrap() {
        assert_eq!(h["session_verdict"], "accept1");
    }
    // shared edges carried several candidates' load before reservation
    let released = res["released"].as_array().unwrap();
    assert!(!released.is_empty());
    assert!(res["path_prob_after"].as_f64() >= res["path_prob_before"].as_f64());
    assert_eq!(route(&["route", "--config", net, "--mode", "vc", "--reserve", "full", "--seed", "3", "--out", "-"]).1, r);
}

#[test]
fn route_failures() {
    let dir = tempfile::tempdir().unwrap();
    let empty = write_json(
        dir.path(),
        "empty.json",
        &json!({"nodes": [], "edges": [], "traffic": {"src": "A", "dst": "B", "n_packets": 1, "packet_len": 1}}),
    );
    assert_eq!(route(&["route", "--config", empty.to_str().unwrap()]).0, 64);
    assert_eq!(route(&["route"]).0, 64);

    let split = write_json(
        dir.path(),
        "split.json",
        &json!({
            "nodes": ["A", "B", "C"],
            "edges": [{"a": "A", "b": "B", "buffer_bits": 5}],
            "traffic": {"src": "A", "dst": "C", "n_packets": 1, "packet_len": 1}
        }),
    );
    assert_eq!(route(&["route", "--config", split.to_str().unwrap(), "--out", "-"]).0, 4);

    let dead = write_json(
        dir.path(),
        "dead.json",
        &json!({
            "nodes": ["A", "B"],
            "edges": [{"a": "A", "b": "B", "buffer_bits": 0}],
            "traffic": {"src": "A", "dst": "B", "n_packets": 1, "packet_len": 1},
            "mode": "vc"
        }),
    );
    assert_eq!(route(&["route", "--config", dead.to_str().unwrap(), "--out", "-"]).0, 5);
    let (c, dg) = route(&["route", "--config", dead.to_str().unwrap(), "--mode", "datagram", "--out", "-"]);
    assert_eq!(c, 0);
    assert_eq!(dg["chosen"]["score"], 0.0);

    let selfloop = write_json(
        dir.path(),
        "loop.json",
        &json!({
            "nodes": ["A", "B"],
            "edges": [{"a": "A", "b": "A", "buffer_bits": 3}],
            "traffic": {"src": "A", "dst": "B", "n_packets": 1, "packet_len": 1}
        }),
    );
    assert_eq!(route(&["route", "--config", selfloop.to_str().unwrap()]).0, 64);
}
