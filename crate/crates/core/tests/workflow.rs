use std::fs;

use suscept_core::cohort::{load_cohort, synth_cohort, write_raw_csv, SynthConfig};
use suscept_core::pipeline::{self, RunConfig};
use suscept_core::Error;

fn small(root: &std::path::Path, extra: &[&str]) -> RunConfig {
    let mut overrides: Vec<String> = [
        "synth.n=120",
        "folds=3",
        "train.epochs=15",
        "attack.lambdas=[0.001, 0.01, 0.1]",
        "attack.max_iterations=300",
        "model.hidden_dim=8",
        "model.dense_dim=4",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    overrides.extend(extra.iter().map(|s| s.to_string()));
    RunConfig::with_base(root, &overrides).unwrap()
}

#[test]
fn raw_files_preprocess_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path(), &["preprocess.length=12"]);
    pipeline::cmd_synth(&cfg, Some(0.2)).unwrap();
    let msg = pipeline::cmd_preprocess(&cfg).unwrap();
    assert_eq!(msg, "processed cohort: n=120 d=8 T=12");
    let first = fs::read(&cfg.paths.cohort).unwrap();
    pipeline::cmd_preprocess(&cfg).unwrap();
    assert_eq!(first, fs::read(&cfg.paths.cohort).unwrap());

    let (cohort, scaler) = load_cohort(&cfg.paths.cohort).unwrap();
    assert!(scaler.is_some());
    for r in &cohort.records {
        for (j, &m) in r.mask.iter().enumerate() {
            if m {
                assert!(r.values.column(j).iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }
    }
}

#[test]
fn missing_label_file_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path(), &[]);
    let cohort = synth_cohort(&SynthConfig {
        n: 10,
        ..SynthConfig::default()
    })
    .unwrap();
    write_raw_csv(
        &cohort,
        &cfg.paths.observations,
        &dir.path().join("elsewhere.csv"),
        0.0,
        1,
    )
    .unwrap();
    let err = pipeline::cmd_preprocess(&cfg).unwrap_err();
    assert!(matches!(err, Error::Io { .. }), "{err}");
    assert!(!err.is_numerical());
}

#[test]
fn malformed_rows_report_their_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path(), &[]);
    fs::create_dir_all(dir.path().join("data")).unwrap();
    fs::write(
        &cfg.paths.observations,
        "record_id,feature_name,time_index,value\na,hr,0,80\na,hr,1,eighty\n",
    )
    .unwrap();
    fs::write(&cfg.paths.labels, "record_id,label\na,0\n").unwrap();
    match pipeline::cmd_preprocess(&cfg).unwrap_err() {
        Error::Parse { line, .. } => assert_eq!(line, 3),
        other => panic!("unexpected error {other}"),
    }
}

#[test]
fn too_many_folds_for_the_minority_class() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path(), &["synth.n=40", "folds=6"]);
    pipeline::cmd_synth(&cfg, None).unwrap();
    let err = pipeline::cmd_split(&cfg).unwrap_err();
    assert!(
        matches!(
            err,
            Error::InsufficientClass {
                class: 1,
                count: 4,
                required: 6
            }
        ),
        "{err}"
    );
}

#[test]
fn small_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path(), &[]);
    pipeline::cmd_synth(&cfg, None).unwrap();
    pipeline::cmd_split(&cfg).unwrap();
    let train = pipeline::cmd_train(&cfg).unwrap();
    assert_eq!(train.folds.len(), 3);
    let rerun = pipeline::cmd_train(&cfg).unwrap();
    assert_eq!(train, rerun);

    let screen = pipeline::cmd_screen(&cfg).unwrap();
    assert_eq!(screen.directions.len(), 2);
    let out = &cfg.paths.output_dir;
    for tag in ["0to1", "1to0"] {
        assert!(out.join(format!("ranking_{tag}.csv")).exists());
        assert!(out.join(format!("curve_{tag}.csv")).exists());
        assert!(out
            .join(format!("screen/fold0/{tag}_candidates.jsonl"))
            .exists());
    }
    let report = pipeline::cmd_report(&cfg).unwrap();
    assert!(report.contains("| AUC |"));

    let (cohort, _) = load_cohort(&cfg.paths.cohort).unwrap();
    let plan = suscept_core::cohort::FoldPlan::load(&cfg.paths.plan).unwrap();
    let params = suscept_core::model::load_params(&cfg.paths.weights(0)).unwrap();
    let i = plan.splits[0]
        .test
        .iter()
        .copied()
        .find(|&i| {
            suscept_core::model::predict(&params, &cohort.records[i])
                .unwrap()
                .label
                == cohort.labels[i]
        })
        .unwrap();
    let id = cohort.records[i].record_id.clone();
    let attack = pipeline::cmd_attack(&cfg, 0, &id, None).unwrap();
    assert_eq!(attack.candidates.len(), 3);
    assert_eq!(attack.source, cohort.labels[i]);
    assert!(pipeline::cmd_attack(&cfg, 0, "no-such-record", None).is_err());
}

#[test]
fn zero_successes_leave_no_map() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(
        dir.path(),
        &["attack.lambdas=[1000.0]", "directions=[\"0to1\"]"],
    );
    pipeline::cmd_synth(&cfg, None).unwrap();
    pipeline::cmd_split(&cfg).unwrap();
    pipeline::cmd_train(&cfg).unwrap();
    let screen = pipeline::cmd_screen(&cfg).unwrap();
    assert_eq!(screen.failed_directions().len(), 1);
    assert!(screen.directions[0].attacked > 0);
    assert!(!cfg
        .paths
        .output_dir
        .join("screen/fold0/0to1_map.json")
        .exists());
}
