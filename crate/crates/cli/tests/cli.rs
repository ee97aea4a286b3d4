use std::path::Path;
use std::process::{Command, Output};

use bsnf_core::parse::{parse_formula, parse_structure};
use bsnf_core::Signature;

fn bsnf(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bsnf")).args(args).current_dir(dir).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(o: &Output) -> Vec<serde_json::Value> {
    stdout(o).lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn normalize_reports_sizes_of_what_it_prints() {
    let dir = tempfile::tempdir().unwrap();
    let o = bsnf(dir.path(), &["normalize", "exists y. (E(x,y) & E(y,y))", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rec = &json(&o)[0];
    assert_eq!(rec["stage"], "bsnf");
    assert_eq!(rec["free"], serde_json::json!(["x"]));
    let f = parse_formula(rec["formula"].as_str().unwrap()).unwrap();
    let sig = Signature::new([("E", 2)]).unwrap();
    assert_eq!(rec["sizes"]["bsnf"].as_u64().unwrap() as usize, f.size_in(&sig));
    assert_eq!(rec["radius"].as_u64().unwrap(), bsnf_core::bsnf::is_bsnf(&f).unwrap().radius as u64);
    assert!(String::from_utf8_lossy(&o.stderr).contains("wall time:"));
}

#[test]
fn normalize_stages_and_text_mode() {
    let dir = tempfile::tempdir().unwrap();
    let o = bsnf(dir.path(), &["normalize", "exists x. E(x,x)", "--stage", "hnf"]);
    let text = stdout(&o);
    let mut lines = text.lines();
    parse_formula(lines.next().unwrap()).unwrap();
    assert!(lines.all(|l| l.starts_with("# ")));
    assert!(text.contains("# stage: hnf"));
    assert!(text.contains("# hanf_radius: 0"));
}

#[test]
fn normalized_output_checks_equivalent() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("phi.fo"), "forall y. (E(x,y) -> E(y,y))\n").unwrap();
    let o = bsnf(dir.path(), &["normalize", "--input", "phi.fo", "--out", "phi.bsnf"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(!stdout(&o).lines().next().unwrap().starts_with("forall"));
    let o = bsnf(dir.path(), &["check", "phi.fo", "phi.bsnf", "--min-size", "2", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert_eq!(json(&o)[0]["verdict"], "agree");
}

#[test]
fn counterexamples_parse_back() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("a.fo"), "E(x,y)").unwrap();
    std::fs::write(dir.path().join("b.fo"), "E(y,x)").unwrap();
    let o = bsnf(dir.path(), &["check", "a.fo", "b.fo", "--out", "w.txt"]);
    assert_eq!(o.status.code(), Some(1));
    let text = stdout(&o);
    assert!(text.contains("# verdict: counterexample"));
    let w = parse_structure(&std::fs::read_to_string(dir.path().join("w.txt")).unwrap()).unwrap();
    assert_eq!(w.size(), 2);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(bsnf(dir.path(), &["normalize", "exists x. (E(x,"]).status.code(), Some(2));
    assert_eq!(bsnf(dir.path(), &["check", "missing.fo", "missing.fo"]).status.code(), Some(2));
    assert_eq!(bsnf(dir.path(), &["normalize", "E(x,x)", "--degree", "unbounded"]).status.code(), Some(2));
    assert_eq!(bsnf(dir.path(), &["stats", "--h-max", "40"]).status.code(), Some(3));
    assert_eq!(bsnf(dir.path(), &["generate", "chain-family", "--height", "20"]).status.code(), Some(3));
    std::fs::write(dir.path().join("bad.cfg"), "colour = blue\n").unwrap();
    assert_eq!(bsnf(dir.path(), &["stats", "--config", "bad.cfg"]).status.code(), Some(2));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.cfg"), "format = json\nh_max = 2\n").unwrap();
    // h-max is not a config key of stats
    assert_eq!(bsnf(dir.path(), &["stats", "--config", "run.cfg"]).status.code(), Some(2));
    std::fs::write(dir.path().join("run.cfg"), "format = json\n").unwrap();
    let o = bsnf(dir.path(), &["stats", "--config", "run.cfg", "--h-max", "2"]);
    assert_eq!(json(&o).len(), 2);
    let o = bsnf(dir.path(), &["stats", "--config", "run.cfg", "--h-max", "2", "--format", "text"]);
    assert!(stdout(&o).starts_with("h\td\t"));
}

#[test]
fn generate_writes_whole_families() {
    let dir = tempfile::tempdir().unwrap();
    let o = bsnf(dir.path(), &["generate", "chain-family", "--height", "2", "--out", "chains"]);
    assert_eq!(o.status.code(), Some(0));
    let mut names: Vec<String> = std::fs::read_dir(dir.path().join("chains")).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names.len(), 8);
    assert_eq!(names[0], "chain-family-h2-000.txt");
    for n in &names {
        let s = parse_structure(&std::fs::read_to_string(dir.path().join("chains").join(n)).unwrap()).unwrap();
        assert_eq!(s.size(), 3);
    }
    let o = bsnf(dir.path(), &["generate", "tree-encoding", "--index", "5", "--out", "t"]);
    assert_eq!(o.status.code(), Some(0));
    let t = parse_structure(&std::fs::read_to_string(dir.path().join("t/tree-encoding-i5.txt")).unwrap()).unwrap();
    assert_eq!(t.size(), 5);
    let o = bsnf(dir.path(), &["generate", "lemma8", "--height", "2", "--out", "s"]);
    assert_eq!(stdout(&o).lines().count(), 2);
    let o = bsnf(dir.path(), &["generate", "phi-h", "--d", "2", "--h", "3", "--out", "f", "--format", "json"]);
    let rec = &json(&o)[0];
    let f = parse_formula(&std::fs::read_to_string(dir.path().join("f/phi-h-d2-h3.fo")).unwrap()).unwrap();
    let sig = bsnf_core::lowerbound::forest_signature(2);
    assert_eq!(rec["size"].as_u64().unwrap() as usize, f.size_in(&sig));
    assert_eq!(bsnf(dir.path(), &["generate", "phi-h", "--d", "2"]).status.code(), Some(2));
}

#[test]
fn stats_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = bsnf(dir.path(), &["stats", "--format", "json"]);
    let rows = json(&o);
    assert_eq!(rows.len(), 6);
    let sizes: Vec<u64> = rows.iter().map(|r| r["phi_h_size"].as_u64().unwrap()).collect();
    assert!(sizes.windows(3).all(|w| w[2] - w[1] == w[1] - w[0]));
    assert_eq!(rows[1]["family_members"], 8);
    assert_eq!(rows[5]["family_status"], "ok");
    assert_eq!(rows[0]["bsnf_status"], "skipped");
    assert_eq!(stdout(&bsnf(dir.path(), &["stats"])), stdout(&bsnf(dir.path(), &["stats"])));
}
