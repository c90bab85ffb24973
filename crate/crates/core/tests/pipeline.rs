use std::collections::BTreeMap;

use gridrisk::graphbuild::{build_graph, GraphConfig, MultilayerGraph};
use gridrisk::ingest::{ingest, read_csv, read_substations, IngestConfig, RawIncident};
use gridrisk::labeling::{dataset_end, labels_at, positive_rate, read_labels, write_labels, LabelConfig};
use gridrisk::synthgen::{generate, ScenarioConfig, FEEDERS_FILE, INCIDENTS_FILE, LINES_FILE, SUBSTATIONS_FILE};

fn small() -> ScenarioConfig {
    ScenarioConfig {
        n_substations: 60,
        n_lines: 90,
        n_incidents: 1400,
        seed: 3,
        ..Default::default()
    }
}

#[test]
fn scenario_files_round_trip_through_ingest() {
    let s = generate(&small()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    s.write(dir.path()).unwrap();
    let raw: Vec<RawIncident> = read_csv(&dir.path().join(INCIDENTS_FILE)).unwrap();
    assert_eq!(raw, s.incidents);
    let subs = read_substations(&dir.path().join(SUBSTATIONS_FILE)).unwrap();
    let lines = read_csv(&dir.path().join(LINES_FILE)).unwrap();
    let feeders = read_csv(&dir.path().join(FEEDERS_FILE)).unwrap();
    let from_disk = ingest(&raw, &subs, &lines, &feeders, &IngestConfig::default()).unwrap();
    let in_memory = ingest(&s.incidents, &s.substations, &s.lines, &s.feeders, &IngestConfig::default()).unwrap();
    assert_eq!(from_disk.incidents, in_memory.incidents);
    assert_eq!(from_disk.rejects, in_memory.rejects);

    // Every planted defect is rejected with its planted reason, and nothing else is.
    let planted: BTreeMap<_, _> = s.truth.invalid_records.iter().map(|p| (p.record_id.clone(), p.reason)).collect();
    let rejected: BTreeMap<_, _> = from_disk.rejects.iter().map(|r| (r.record_id.clone(), r.reason)).collect();
    assert_eq!(planted, rejected);
    assert_eq!(from_disk.incidents.len() + from_disk.rejects.len(), raw.len());
}

#[test]
fn graph_survives_json_round_trip() {
    let s = generate(&small()).unwrap();
    let clean = ingest(&s.incidents, &s.substations, &s.lines, &s.feeders, &IngestConfig::default()).unwrap();
    let g = build_graph(&clean, &GraphConfig::default()).unwrap();
    g.validate().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("graph.json");
    g.save_json(&path).unwrap();
    let back = MultilayerGraph::load_json(&path).unwrap();
    assert_eq!(back, g);
}

#[test]
fn labels_round_trip_and_track_the_planted_rate() {
    let cfg = ScenarioConfig {
        n_substations: 300,
        n_lines: 450,
        n_incidents: 6900,
        seed: 11,
        ..Default::default()
    };
    let s = generate(&cfg).unwrap();
    let clean = ingest(&s.incidents, &s.substations, &s.lines, &s.feeders, &IngestConfig::default()).unwrap();
    let fold = labels_at(&clean, dataset_end(&clean).unwrap(), &LabelConfig::default()).unwrap();
    let rate = positive_rate(&fold.labels);
    assert!((rate - s.truth.positive_rate()).abs() <= 0.03, "rate {rate} vs planted {}", s.truth.positive_rate());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("labels.csv");
    write_labels(&path, &fold.labels).unwrap();
    assert_eq!(read_labels(&path).unwrap(), fold.labels);
}
