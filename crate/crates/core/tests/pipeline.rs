use std::sync::Arc;

use linkfdr::dataset::{fdr_target, make_windows, split_chronological, DatasetManifest, Split, DEFAULT_FRACTIONS};
use linkfdr::eval::{error_series, metrics_report, MetricsRow, PredictionKind, REPORT_COLUMNS};
use linkfdr::hpo::{search, ChannelData, DataParams, SearchSettings, SearchSpace};
use linkfdr::models::{build_model, fit, Condition, ModelConfig, ModelKind, TrainedModel};
use linkfdr::trace::{load_trace_text, save_trace_text, simulate_trace, GeChannelSpec, OutcomeTrace, PRESET_NAMES};

fn tiny_cnn() -> ModelConfig {
    ModelConfig {
        window: 16,
        filters: 2,
        kernel_size: 3,
        dense_units: vec![4, 1],
        batch_size: 16,
        epochs: 6,
        early_stopping: None,
        ..ModelConfig::desk(ModelKind::Cnn, Condition::Ch)
    }
}

fn channels(n: usize) -> Vec<ChannelData> {
    PRESET_NAMES
        .iter()
        .enumerate()
        .map(|(i, name)| ChannelData {
            label: name.to_string(),
            traces: vec![Arc::new(simulate_trace(&GeChannelSpec::preset(name, i as u64).unwrap(), n).unwrap())],
        })
        .collect()
}

const PARAMS: DataParams = DataParams { horizon: 20, stride: 4, fractions: DEFAULT_FRACTIONS };

#[test]
fn search_is_deterministic_across_job_counts() {
    let space = SearchSpace { lr0: vec![0.02, 0.005], filters: vec![2, 4], ..SearchSpace::fixed(tiny_cnn()) };
    let data = channels(3000);
    let one = search(&space, &data, &PARAMS, SearchSettings { budget: 3, seed: 7, jobs: 1 }).unwrap();
    let two = search(&space, &data, &PARAMS, SearchSettings { budget: 3, seed: 7, jobs: 2 }).unwrap();
    assert_eq!(one, two);
    assert_eq!(one.trials.len(), 12);
    assert_eq!(one.ranking.len(), 3);
    assert!(one.ranking.windows(2).all(|w| w[0].mean_loss <= w[1].mean_loss));
    assert_eq!(one.best, one.ranking[0].config);
    assert!(one.trial_ledger_csv().starts_with("trial_id,channel,epoch,val_loss,lr\n0,synth-ch1,1,"));
    assert_eq!(one.trial_ledger_csv().lines().count(), 1 + 12 * 6);
    assert_eq!(one.boxplots.len(), 12);
}

#[test]
fn search_budget_capped_by_space() {
    let space = SearchSpace { lr0: vec![0.01, 0.02], ..SearchSpace::fixed(tiny_cnn()) };
    let out = search(&space, &channels(2000)[..1], &PARAMS, SearchSettings { budget: 10, seed: 1, jobs: 1 }).unwrap();
    assert_eq!(out.trials.len(), 2);
}

#[test]
fn search_prefers_the_trainable_candidate() {
    // A vanishing learning rate leaves the network at its initialisation,
    // so it cannot beat a candidate that trains.
    let frozen = ModelConfig { lr0: 1e-12, ..tiny_cnn() };
    let space = SearchSpace { lr0: vec![frozen.lr0, 0.01], ..SearchSpace::fixed(tiny_cnn()) };
    let out = search(&space, &channels(4000)[..1], &PARAMS, SearchSettings { budget: 2, seed: 3, jobs: 1 }).unwrap();
    assert_eq!(out.best.lr0, 0.01);
}

#[test]
fn error_series_matches_pointwise_recomputation() {
    let trace = Arc::new(simulate_trace(&GeChannelSpec::calibrated(2), 3000).unwrap());
    let data = split_chronological(&make_windows(trace.clone(), 16, 20, 3).unwrap(), DEFAULT_FRACTIONS).unwrap();
    let model = fit(build_model(&tiny_cnn()).unwrap(), &data).unwrap().model;
    let series = error_series(&model, &data, Split::Test).unwrap();
    let test = data.indices(Split::Test);
    assert_eq!(series.raw.len(), test.len());
    for (k, &idx) in test.iter().enumerate() {
        let e = data.examples()[idx];
        let window: Vec<u8> = trace.outcomes()[e.end + 1 - 16..=e.end].to_vec();
        let p = model.predict_bits(&window).unwrap();
        let t = fdr_target(&trace, e.end, 20).unwrap();
        assert_eq!(series.raw[k], p.raw - t);
        assert_eq!(series.clamped[k], p.clamped - t);
    }
    let row = MetricsRow {
        test_channel: "ch1".into(),
        condition: "ch".into(),
        model: "cnn".into(),
        prediction: PredictionKind::Clamped,
        metrics: metrics_report(&series.clamped).unwrap(),
    };
    let csv = MetricsRow::csv(&[row]);
    assert_eq!(csv.lines().next().unwrap().split(',').skip(4).collect::<Vec<_>>(), REPORT_COLUMNS);
}

#[test]
fn files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let trace = simulate_trace(&GeChannelSpec::calibrated(5).with_channel_id(9), 2500).unwrap();
    let path = dir.path().join("t.csv");
    save_trace_text(&trace, &path).unwrap();
    assert_eq!(load_trace_text(&path).unwrap(), trace);

    let source = Arc::new(trace);
    let data = split_chronological(&make_windows(source.clone(), 16, 20, 2).unwrap(), [0.5, 0.25, 0.25]).unwrap();
    let manifest = DatasetManifest::from_json(&data.manifest().unwrap().to_json().unwrap()).unwrap();
    let other = Arc::new(OutcomeTrace::new(9, 0.5, vec![1; source.len()]).unwrap());
    assert!(manifest.apply(&[other]).is_err());
    assert_eq!(manifest.apply(&[source]).unwrap().examples(), data.examples());

    let trained = fit(build_model(&tiny_cnn()).unwrap(), &data).unwrap();
    let run = dir.path().join("run");
    trained.write_run_dir(&run).unwrap();
    for f in ["config.json", "history.csv", "checkpoint.json"] {
        assert!(run.join(f).is_file(), "{f}");
    }
    assert_eq!(TrainedModel::load_checkpoint(run.join("checkpoint.json")).unwrap(), trained);
}

#[test]
fn parse_errors_name_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "idx,outcome\n0,1\n1,2\n").unwrap();
    let msg = load_trace_text(&path).unwrap_err().to_string();
    assert!(msg.contains("bad.csv") && msg.contains('3'), "{msg}");
}
