//! Instance files must reload bit-exactly: a run on a reloaded instance has
//! to reproduce the original trace byte for byte, which the audit workflow
//! relies on.

use nalgebra::DVector;
use pcd_core::{
    cd::{run_cd, BlockSchedule, StopRule},
    paper_instance_doc, CommGraph, InstanceDoc, WeightStrategy,
};

#[test]
fn reloaded_instance_reproduces_the_trace_bytes() {
    let graph = CommGraph::erdos_renyi_connected(12, 0.35, 5).unwrap();
    let doc = paper_instance_doc(&graph, 6, &vec![(-30.0, 20.0); 12], 2.0).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("instance.json");
    doc.save(&path).unwrap();
    let reloaded = InstanceDoc::load(&path).unwrap();
    assert_eq!(doc, reloaded, "JSON persistence must not lose bits");

    let run = |doc: &InstanceDoc| {
        let problem = doc.build().unwrap();
        run_cd(
            &problem,
            &DVector::zeros(12),
            &BlockSchedule::Random {
                seed: 7,
                probs: None,
            },
            &WeightStrategy::LipschitzIdentity,
            &StopRule::max_iters(300),
            false,
        )
        .unwrap()
        .to_csv_string()
    };
    assert_eq!(run(&doc), run(&reloaded));
}

#[test]
fn malformed_instance_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.json");
    std::fs::write(&path, "{\"format\": \"qp-box-instance/1\"").unwrap();
    assert!(InstanceDoc::load(&path).is_err());

    let missing = dir.path().join("absent.json");
    assert!(InstanceDoc::load(&missing).is_err());
}
