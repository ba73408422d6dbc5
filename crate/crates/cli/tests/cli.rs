use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coded-pir"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn encode_writes_one_file_per_database_deterministically() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        let o = run(&[
            "encode",
            "--N",
            "5",
            "--K",
            "3",
            "--M",
            "2",
            "--seed",
            "9",
            "--out",
            s(dir),
        ]);
        assert!(o.status.success(), "{o:?}");
    }
    for i in 1..=5 {
        let name = format!("db{i}.csv");
        let x = std::fs::read_to_string(a.join(&name)).unwrap();
        let y = std::fs::read_to_string(b.join(&name)).unwrap();
        assert_eq!(x, y);
        assert!(x.starts_with(&format!("5,3,2,257,{i}\n")));
        assert_eq!(x.lines().count(), 1 + 2 * 25);
    }
    assert_eq!(std::fs::read_dir(&a).unwrap().count(), 5);
}

#[test]
fn field_too_small_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&[
        "encode",
        "--N",
        "5",
        "--K",
        "3",
        "--M",
        "2",
        "--q",
        "5",
        "--out",
        s(tmp.path()),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["retrieve", "--N", "3", "--K", "2", "--M", "2", "--q", "9"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&[
        "retrieve",
        "--N",
        "3",
        "--K",
        "2",
        "--M",
        "2",
        "--desired",
        "3",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn retrieve_reports_golden_rates() {
    let o = run(&["retrieve", "--N", "5", "--K", "3", "--M", "2"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "rate 75/120 = 5/8 (= capacity: yes)\n");

    let o = run(&[
        "retrieve",
        "--N",
        "4",
        "--K",
        "2",
        "--M",
        "3",
        "--desired",
        "3",
    ]);
    assert!(o.status.success());
    assert_eq!(
        stdout(&o).lines().next().unwrap(),
        "rate 128/224 = 4/7 (= capacity: yes)"
    );
}

#[test]
fn retrieve_with_failures_matches_source() {
    let tmp = tempfile::tempdir().unwrap();
    let store = tmp.path().join("store");
    let msgs = tmp.path().join("m.csv");
    let o = run(&[
        "encode",
        "--N",
        "5",
        "--K",
        "3",
        "--M",
        "2",
        "--seed",
        "4",
        "--out",
        s(&store),
        "--messages-out",
        s(&msgs),
    ]);
    assert!(o.status.success());

    let report = tmp.path().join("r.json");
    let o = run(&[
        "retrieve",
        "--store",
        s(&store),
        "--messages",
        s(&msgs),
        "--fail",
        "4,5",
        "--out",
        s(&report),
    ]);
    assert!(o.status.success(), "{o:?}");
    assert_eq!(
        stdout(&o),
        "rate 75/120 = 5/8 (= capacity: yes)\nrepaired: [4,5]\n"
    );
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["verified"], true);
    assert_eq!(json["rate"], "5/8");
    assert_eq!(json["repaired"], serde_json::json!([4, 5]));

    std::fs::remove_file(store.join("db2.csv")).unwrap();
    let o = run(&[
        "retrieve",
        "--store",
        s(&store),
        "--messages",
        s(&msgs),
        "--desired",
        "2",
    ]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("repaired: [2]"));

    let o = run(&["retrieve", "--store", s(&store), "--fail", "4,5"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn corrupted_source_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    let store = tmp.path().join("store");
    let msgs = tmp.path().join("m.csv");
    run(&[
        "encode",
        "--N",
        "3",
        "--K",
        "2",
        "--M",
        "2",
        "--out",
        s(&store),
        "--messages-out",
        s(&msgs),
    ]);
    let text = std::fs::read_to_string(&msgs).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let first: Vec<u64> = lines[1].split(',').map(|x| x.parse().unwrap()).collect();
    lines[1] = format!("{},{}", (first[0] + 1) % 257, first[1]);
    std::fs::write(&msgs, lines.join("\n") + "\n").unwrap();
    let o = run(&["retrieve", "--store", s(&store), "--messages", s(&msgs)]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn dump_queries_shapes() {
    let o = run(&["dump-queries", "--N", "2", "--K", "1", "--M", "2"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("h1x1[1]"));
    assert!(text.contains("h1(x1[2]+x2[2])"));

    let o = run(&[
        "dump-queries",
        "--N",
        "5",
        "--K",
        "3",
        "--M",
        "2",
        "--format",
        "json",
        "--public",
    ]);
    assert!(o.status.success());
    let json: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(json.get("desired").is_none());
    let dbs = json["databases"].as_array().unwrap();
    assert_eq!(dbs.len(), 5);
    for db in dbs {
        let eqs = db.as_array().unwrap();
        assert_eq!(eqs.len(), 24);
        let singles = eqs
            .iter()
            .filter(|e| e["terms"].as_array().unwrap().len() == 1)
            .count();
        assert_eq!(singles, 18);
    }

    let o = run(&[
        "dump-queries",
        "--N",
        "3",
        "--K",
        "2",
        "--M",
        "2",
        "--format",
        "json",
    ]);
    let json: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(json["desired"], 1);
}

#[test]
fn capacity_csv() {
    let o = run(&["capacity", "--M", "1,2", "--N", "4"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("Rc_num,Rc_den,M,C_num,C_den,C_decimal"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 8);
    for r in &rows {
        if r[2] == "1" {
            assert_eq!((r[3], r[4]), ("1", "1"));
        }
    }
    assert!(rows.iter().any(|r| r[..5] == ["1", "2", "2", "2", "3"]));
}

#[test]
fn audit_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("audit.json");
    let o = run(&[
        "audit",
        "--N",
        "3",
        "--K",
        "2",
        "--M",
        "2",
        "--trials",
        "2000",
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(json["exact"], "pass");
    assert_eq!(json["trials"], 2000);

    let o = run(&[
        "audit", "--N", "3", "--K", "2", "--M", "2", "--trials", "500", "--leak",
    ]);
    assert_eq!(o.status.code(), Some(5));
}

/// Rows per round for each repetition of a rendered table.
fn table_shape(text: &str) -> Vec<Vec<usize>> {
    let mut reps: Vec<Vec<usize>> = Vec::new();
    for line in text.lines() {
        let t = line.trim_start();
        if t.starts_with("repetition") {
            reps.push(Vec::new());
        } else if t.starts_with("round") {
            reps.last_mut().unwrap().push(0);
        } else if t.starts_with('h') {
            *reps.last_mut().unwrap().last_mut().unwrap() += 1;
        }
    }
    reps
}

#[test]
fn dump_table_grouping() {
    let o = run(&["dump-queries", "--N", "5", "--K", "3", "--M", "2"]);
    let text = stdout(&o);
    assert_eq!(table_shape(&text), vec![vec![6, 2]; 3]);
    assert!(text.lines().any(|l| l.matches('|').count() == 4));

    let o = run(&[
        "dump-queries",
        "--N",
        "3",
        "--K",
        "2",
        "--M",
        "3",
        "--desired",
        "2",
    ]);
    assert_eq!(table_shape(&stdout(&o)), vec![vec![12, 6, 1]; 2]);
}
