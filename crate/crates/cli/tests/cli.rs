use std::path::Path;
use std::process::Command;

use contactdd_cli::{run_experiment, ExperimentConfig};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_contactdd"))
}

fn config(formulation: &str, output: &Path, extra: &str) -> String {
    format!(
        r#"{{
            "name": "small",
            "mesh": {{"n_coarse": 2, "refine": [2, 4]}},
            "material": {{"model": "model1", "stiff": {{"E": 100, "nu": 0.35}}, "matrix": {{"E": 1, "nu": 0.35}}}},
            "source": {{"builtin": "model1"}},
            "formulation": "{formulation}",
            "robin": ["1", "sqrt_h"],
            "max_iter": 60,
            "timing": false,
            {extra}
            "output": {:?}
        }}"#,
        output.display().to_string()
    )
}

fn write_config(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn run_writes_tables_traces_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let cfg = write_config(tmp.path(), "c.json", &config("mixed_fem", out, ""));
        let st = bin().arg("run").arg(&cfg).output().unwrap();
        assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
        let stdout = String::from_utf8_lossy(&st.stdout);
        assert!(stdout.contains("| h | β | Iterations | Residual error | e_σ | e_u |"), "{stdout}");
    }
    let table = std::fs::read_to_string(a.join("table.md")).unwrap();
    assert_eq!(table.lines().count(), 2 + 4, "{table}");
    for rel in [
        "table.csv",
        "table.md",
        "points/model1_0_h8_beta1/iterations.csv",
        "points/model1_0_h8_betasqrth/contact.csv",
        "points/model1_0_h4_beta1/fields.csv",
        "points/model1_0_h4_beta1/summary.json",
        "reference/contact_model1_0_h8.csv",
        "reference/material_model1_0_h8.csv",
        "reference/fields_model1_0_h4.csv",
    ] {
        let (x, y) = (std::fs::read(a.join(rel)).unwrap(), std::fs::read(b.join(rel)).unwrap());
        assert!(x == y, "{rel} differs between identical runs");
    }
    let resolved = std::fs::read_to_string(a.join("config.resolved.json")).unwrap();
    let back = ExperimentConfig::from_json(&resolved, Path::new("resolved")).unwrap();
    assert_eq!(back.output, a);
    assert!(std::fs::read_dir(a.join("cache")).unwrap().count() >= 2);

    // tables re-renders from the summaries
    std::fs::remove_file(a.join("table.md")).unwrap();
    let st = bin().arg("tables").arg(&a).output().unwrap();
    assert!(st.status.success());
    assert_eq!(std::fs::read_to_string(a.join("table.md")).unwrap(), table);

    let st = bin().arg("trace").arg(&a).output().unwrap();
    assert!(st.status.success());
    let traces = std::fs::read_to_string(a.join("contact_traces.csv")).unwrap();
    assert!(traces.starts_with("source,y,u_c,sigma_c\n"));
    for src in ["reference_model1_0_h4,", "model1_0_h8_betasqrth,"] {
        assert!(traces.lines().any(|l| l.starts_with(src)), "missing {src}");
    }
}

#[test]
fn errors_are_json_with_nonzero_exit() {
    let tmp = tempfile::tempdir().unwrap();
    let text = config("mixed_fem", &tmp.path().join("o"), "").replace("\"sqrt_h\"", "\"cube_h\"");
    let cfg = write_config(tmp.path(), "bad.json", &text);
    let out = bin().arg("run").arg(&cfg).output().unwrap();
    assert!(!out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(v["error"]["kind"], "config");
    assert_eq!(v["error"]["field"], "robin[1]");

    let out = bin().arg("run").arg(tmp.path().join("missing.json")).output().unwrap();
    assert!(!out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(v["error"]["kind"], "io");

    let syntax = write_config(tmp.path(), "syntax.json", "{\n  \"mesh\": ,\n}");
    let out = bin().arg("check").arg(&syntax).output().unwrap();
    let v: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(v["error"]["message"].as_str().unwrap().contains("line 2"));

    let out = bin().arg("tables").arg(tmp.path()).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn multiscale_sweep_over_oversampling() {
    let tmp = tempfile::tempdir().unwrap();
    let text = config("primal_cem", &tmp.path().join("o"), "\"osly\": [1, 2], \"n_eig\": 3,")
        .replace("[2, 4]", "4")
        .replace("[\"1\", \"sqrt_h\"]", "\"1\"");
    let cfg = ExperimentConfig::from_json(&text, Path::new("inline.json")).unwrap();
    let res = run_experiment(&cfg).unwrap();
    assert_eq!(res.points.len(), 2);
    assert_eq!(res.points.iter().map(|p| p.osly).collect::<Vec<_>>(), [Some(1), Some(2)]);
    for p in &res.points {
        assert!(p.result.converged);
        assert!(p.result.e_u.unwrap() < 1.0);
        assert_eq!(p.result.seconds, 0.0);
    }
    let md = std::fs::read_to_string(res.output.join("table.md")).unwrap();
    assert!(md.starts_with("| h | β | osly | Iterations |"), "{md}");
}

#[test]
fn several_materials_add_a_column() {
    let tmp = tempfile::tempdir().unwrap();
    let text = config("primal_fem", &tmp.path().join("o"), "\"jobs\": 2,")
        .replace("[2, 4]", "2")
        .replace(
            r#"{"model": "model1", "stiff": {"E": 100, "nu": 0.35}, "matrix": {"E": 1, "nu": 0.35}}"#,
            r#"[{"label": "soft", "model": "model1", "stiff": {"E": 2, "nu": 0.3}, "matrix": {"E": 1, "nu": 0.3}},
                {"label": "stiff", "model": "model2", "stiff": {"E": 1000, "nu": 0.3}, "matrix": {"E": 1, "nu": 0.3}}]"#,
        );
    let cfg = ExperimentConfig::from_json(&text, Path::new("inline.json")).unwrap();
    let res = run_experiment(&cfg).unwrap();
    assert_eq!(res.points.len(), 4);
    assert_eq!(res.points[0].tag, "soft_h4_beta1");
    assert_eq!(res.points[3].tag, "stiff_h4_betasqrth");
    let md = std::fs::read_to_string(res.output.join("table.md")).unwrap();
    assert!(md.starts_with("| material | h |"), "{md}");
    assert!(md.contains("| stiff | 1/4 | sqrt(h) |"), "{md}");
}

#[test]
fn shipped_configs_are_valid() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for e in std::fs::read_dir(&dir).unwrap() {
        let p = e.unwrap().path();
        if p.extension().is_some_and(|x| x == "json") {
            let cfg = ExperimentConfig::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            assert!(!cfg.expand().unwrap().is_empty());
            n += 1;
        }
    }
    assert!(n >= 4);
}
