use std::fs;
use std::path::Path;

use ddq_core::campaign::{run_campaign, run_campaign_with, CampaignConfig, CampaignOptions, MetricSeries};
use ddq_core::Error;

fn small(seed: u64) -> CampaignConfig {
    let text = format!(
        r#"{{
        "seed": {seed},
        "devices": [{{"name": "q1", "preset": "q1"}}, {{"name": "q3", "preset": "q3"}}],
        "repetitions": 3,
        "shots_per_point": 200,
        "delays_us": {{
            "bitflip": [0, 10, 20, 30, 60],
            "hahn_echo": [0, 10, 20, 30, 60],
            "ramsey": [0, 2.8, 5.6, 8.4, 11.2, 14.0, 16.8, 19.6],
            "physical_t1": [0, 40, 80, 120, 200]
        }},
        "training_shots": 600,
        "bootstrap_resamples": 20
    }}"#
    );
    CampaignConfig::from_json(&text).unwrap()
}

fn read(p: &Path) -> String {
    fs::read_to_string(p).unwrap()
}

#[test]
fn archive_layout_and_ordering() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(5);
    let out = run_campaign(&cfg, dir.path()).unwrap();
    assert!(out.finished());
    assert_eq!(out.total, 3 * 2 * 5);
    assert!(dir.path().join("manifest.json").exists());
    assert!(dir.path().join("traces/q1_bitflip_0000.csv").exists());
    assert!(dir.path().join("traces/q3_t1_Q_0002.csv").exists());
    out.series.validate().unwrap();
    // bitflip yields two metrics, echo one, ramsey two, each physical T1 one
    assert_eq!(out.series.records.len(), 3 * 2 * 7);
    let (t, _) = out.series.values("q1", "T1L");
    assert_eq!(t, vec![0.0, 500.0, 1000.0]);
    assert_eq!(MetricSeries::read_csv(&dir.path().join("metrics.csv")).unwrap(), out.series);
}

#[test]
fn same_seed_same_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_campaign(&small(9), a.path()).unwrap();
    run_campaign(&small(9), b.path()).unwrap();
    for f in ["manifest.json", "metrics.csv", "traces/q3_ramsey_0001.csv"] {
        assert_eq!(read(&a.path().join(f)), read(&b.path().join(f)), "{f}");
    }
}

#[test]
fn interrupted_run_resumes_to_identical_output() {
    let full = tempfile::tempdir().unwrap();
    let part = tempfile::tempdir().unwrap();
    let cfg = small(21);
    run_campaign(&cfg, full.path()).unwrap();

    let stop = CampaignOptions {
        stop_after: Some(7),
        ..Default::default()
    };
    let first = run_campaign_with(&cfg, part.path(), &stop).unwrap();
    assert_eq!(first.completed, 7);
    assert!(!first.finished());
    // a torn append past the checkpoint must be discarded
    let metrics = part.path().join("metrics.csv");
    let mut text = read(&metrics);
    text.push_str("4200,q1,T1L,1");
    fs::write(&metrics, text).unwrap();

    let resume = CampaignOptions {
        resume: true,
        stop_after: Some(11),
        ..Default::default()
    };
    assert_eq!(run_campaign_with(&cfg, part.path(), &resume).unwrap().completed, 18);
    let resume = CampaignOptions {
        resume: true,
        ..Default::default()
    };
    assert!(run_campaign_with(&cfg, part.path(), &resume).unwrap().finished());
    assert_eq!(read(&metrics), read(&full.path().join("metrics.csv")));
}

#[test]
fn existing_archive_needs_resume_or_force() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(3);
    let opts = CampaignOptions {
        stop_after: Some(2),
        ..Default::default()
    };
    run_campaign_with(&cfg, dir.path(), &opts).unwrap();
    fs::write(dir.path().join("notes.txt"), "keep").unwrap();
    assert!(matches!(run_campaign_with(&cfg, dir.path(), &opts), Err(Error::Io { .. })));

    let other = small(4);
    let resume = CampaignOptions {
        resume: true,
        ..opts
    };
    assert!(matches!(
        run_campaign_with(&other, dir.path(), &resume),
        Err(Error::InvalidParameter(_))
    ));

    let force = CampaignOptions {
        force: true,
        ..opts
    };
    assert_eq!(run_campaign_with(&other, dir.path(), &force).unwrap().completed, 2);
    assert_eq!(read(&dir.path().join("notes.txt")), "keep");
}

#[test]
fn unresolved_lifetimes_are_infinite_not_missing() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(8);
    cfg.experiments = vec![ddq_core::campaign::LogicalExperiment::Bitflip];
    cfg.physical_references.clear();
    cfg.devices.truncate(1);
    let out = run_campaign(&cfg, dir.path()).unwrap();
    for r in out.series.select("q1", "T1L") {
        assert!(r.estimate > 0.0, "{r:?}");
        if r.estimate.is_infinite() {
            assert_eq!(r.upper, r.lower.map(|_| f64::INFINITY));
        }
    }
}
