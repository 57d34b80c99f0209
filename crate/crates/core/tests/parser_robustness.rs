//! Every text parser must reject bad input with an error, never a panic,
//! and canonical outputs must parse back. Runs the checked-in fuzz seeds and
//! random mutations of them on the stable toolchain.

use std::path::PathBuf;

use calderon_core::config::{ConductivitySpec, ExperimentConfig, GoldenRecord};
use calderon_core::expr::Expression;
use calderon_core::geometry::{generate_prefractal, PrefractalSpec};
use calderon_core::mesh::{parse_mesh, write_mesh};
use calderon_core::report::{read_dtn_csv, read_field_csv, ExperimentReport};
use proptest::prelude::*;

fn exercise(target: &str, text: &str) {
    match target {
        "expression" => {
            if let Ok(e) = Expression::parse(text) {
                let _ = e.eval(0.25, 0.75);
                let _ = e.laplacian().eval(0.25, 0.75);
            }
        }
        "mesh_text" => {
            if let Ok(mesh) = parse_mesh(text) {
                parse_mesh(&write_mesh(&mesh)).expect("written mesh parses");
            }
        }
        "config" => {
            if let Ok(cfg) = ExperimentConfig::parse(text) {
                let again = ExperimentConfig::parse(&cfg.to_text()).expect("canonical text parses");
                assert_eq!(again.hash(), cfg.hash());
            }
        }
        "conductivity_spec" => {
            let _ = text.parse::<ConductivitySpec>();
        }
        "golden_record" => {
            if let Ok(g) = GoldenRecord::parse(text) {
                assert_eq!(GoldenRecord::parse(&g.to_text()).unwrap(), g);
            }
        }
        "report_csv" => {
            if let Ok(r) = ExperimentReport::from_csv(text) {
                let _ = r.to_csv();
            }
        }
        "field_csv" => {
            let _ = read_field_csv(text);
        }
        "dtn_csv" => {
            let _ = read_dtn_csv(text);
        }
        "domain_spec" => {
            if let Ok(spec) = text.parse::<PrefractalSpec>() {
                if spec.level <= 3 {
                    let _ = generate_prefractal(&spec);
                }
            }
        }
        other => panic!("unknown fuzz target {other}"),
    }
}

const TARGETS: &[&str] = &[
    "expression",
    "mesh_text",
    "config",
    "conductivity_spec",
    "golden_record",
    "report_csv",
    "field_csv",
    "dtn_csv",
    "domain_spec",
];

fn seeds() -> Vec<(&'static str, String)> {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus");
    let mut out = Vec::new();
    for &t in TARGETS {
        let dir = root.join(t);
        let mut entries: Vec<_> = std::fs::read_dir(&dir)
            .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
            .map(|e| e.unwrap().path())
            .collect();
        entries.sort();
        assert!(!entries.is_empty(), "no seeds for {t}");
        for p in entries {
            out.push((t, std::fs::read_to_string(p).unwrap()));
        }
    }
    out
}

#[test]
fn checked_in_seeds_do_not_panic() {
    for (target, text) in seeds() {
        exercise(target, &text);
    }
}

#[test]
fn valid_seeds_are_accepted() {
    let seeds = seeds();
    let first = |t: &str| seeds.iter().find(|(n, _)| *n == t).map(|(_, s)| s.as_str()).unwrap();
    assert!(parse_mesh(first("mesh_text")).is_ok());
    assert!(read_dtn_csv(first("dtn_csv")).is_ok());
    assert!(ExperimentReport::from_csv(first("report_csv")).is_ok());
    assert!(GoldenRecord::parse(first("golden_record")).is_ok());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1024))]

    #[test]
    fn mutated_seeds_do_not_panic(pick in any::<prop::sample::Index>(), edits in prop::collection::vec((any::<prop::sample::Index>(), any::<u8>(), 0u8..3), 1..8)) {
        let seeds = seeds();
        let (target, text) = &seeds[pick.index(seeds.len())];
        let mut bytes = text.as_bytes().to_vec();
        for (at, byte, op) in edits {
            let i = at.index(bytes.len() + 1);
            match op {
                0 => bytes.insert(i, byte),
                1 if i < bytes.len() => bytes[i] = byte,
                _ if i < bytes.len() => { bytes.remove(i); }
                _ => {}
            }
        }
        if let Ok(s) = std::str::from_utf8(&bytes) {
            exercise(target, s);
        }
    }

    #[test]
    fn arbitrary_strings_do_not_panic(target in prop::sample::select(TARGETS), text in "\\PC{0,64}") {
        exercise(target, &text);
    }
}
