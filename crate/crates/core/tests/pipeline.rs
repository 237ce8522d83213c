//! End-to-end pipeline runs and the on-disk formats they read and write.

use dtgnss::correction::{build_database, BuildSettings};
use dtgnss::ephemeris::{load_ephemeris, parse_ephemeris, save_ephemeris};
use dtgnss::eval::{
    gen_constellation, gen_scene, load_track, parse_report_errors, report_csv, run_pipeline, save_track,
    straight_track, Baseline, ConstellationParams, PipelineOptions, SceneParams, ScenePreset,
};
use dtgnss::measurement::{parse_measurement_log, MeasurementLog, NoiseModel};
use dtgnss::scene::{load_scene, parse_scene, save_scene, snap_to_cell};

fn constellation(epochs: u32) -> ConstellationParams {
    ConstellationParams {
        epochs,
        ..Default::default()
    }
}

#[test]
fn open_sky_track_has_no_error() {
    let scene = gen_scene(ScenePreset::OpenSky, &SceneParams::default()).unwrap();
    let table = gen_constellation(scene.origin(), &constellation(20)).unwrap();
    let db = build_database(&scene, &table, &BuildSettings::default()).unwrap();
    let track = straight_track(&scene, [-20.0, -60.0], [25.0, 70.0], 0.0, 30.0, 20).unwrap();
    for baseline in [Baseline::Wls, Baseline::Ols] {
        let options = PipelineOptions {
            baseline,
            ..Default::default()
        };
        let report = run_pipeline(&scene, &table, &track, &db, &options).unwrap();
        assert_eq!(report.records.len(), 20);
        assert_eq!(report.applied_count(), 20);
        assert!(report.raw_stats.unwrap().max < 1e-3);
        assert!(report.corrected_stats.unwrap().max < 1e-3);
    }
}

#[test]
fn epochs_without_a_correction_keep_the_raw_fix() {
    let scene = gen_scene(ScenePreset::Canyon, &SceneParams::default()).unwrap();
    let table = gen_constellation(scene.origin(), &constellation(20)).unwrap();
    // database for the first slot only; the track runs into the second
    let first = dtgnss::ephemeris::EphemerisTable::new(
        table.records().iter().filter(|r| r.epoch < 300.0).cloned().collect(),
    )
    .unwrap();
    let db = build_database(&scene, &first, &BuildSettings::default()).unwrap();
    let track = straight_track(&scene, [-7.0, -50.0], [-7.0, 50.0], 0.0, 30.0, 20).unwrap();
    let report = run_pipeline(&scene, &table, &track, &db, &PipelineOptions::default()).unwrap();
    let late: Vec<_> = report.records.iter().filter(|r| r.epoch >= 300.0 && r.raw.is_some()).collect();
    assert!(late.len() >= 8);
    for r in late {
        assert!(!r.applied && r.support.is_none());
        assert_eq!(r.corrected, r.raw);
        assert_eq!(r.corrected_error(), r.raw_error());
    }
    assert!(report.records.iter().any(|r| r.applied));
}

#[test]
fn noisy_runs_repeat_with_the_same_seed() {
    let scene = gen_scene(ScenePreset::Canyon, &SceneParams::default()).unwrap();
    let table = gen_constellation(scene.origin(), &constellation(10)).unwrap();
    let db = build_database(&scene, &table, &BuildSettings::default()).unwrap();
    let track = straight_track(&scene, [-5.0, -40.0], [-5.0, 40.0], 0.0, 30.0, 10).unwrap();
    let run = |seed| {
        let options = PipelineOptions {
            noise: NoiseModel::gaussian(2.0, seed),
            ..Default::default()
        };
        report_csv(&run_pipeline(&scene, &table, &track, &db, &options).unwrap().records)
    };
    assert_eq!(run(4), run(4));
    assert_ne!(run(4), run(5));
}

#[test]
fn report_errors_parse_back() {
    let scene = gen_scene(ScenePreset::Canyon, &SceneParams::default()).unwrap();
    let table = gen_constellation(scene.origin(), &constellation(10)).unwrap();
    let db = build_database(&scene, &table, &BuildSettings::default()).unwrap();
    let track = straight_track(&scene, [-8.0, -55.0], [-8.0, 55.0], 0.0, 30.0, 10).unwrap();
    let report = run_pipeline(&scene, &table, &track, &db, &PipelineOptions::default()).unwrap();
    let parsed = parse_report_errors(&report_csv(&report.records), "report").unwrap();
    let want: Vec<_> = report
        .records
        .iter()
        .filter_map(|r| Some((r.raw_error()?, r.corrected_error()?)))
        .collect();
    assert_eq!(parsed.len(), want.len());
    for (p, w) in parsed.iter().zip(&want) {
        assert!((p.0 - w.0).abs() <= 5e-7 && (p.1 - w.1).abs() <= 5e-7);
    }
}

#[test]
fn scene_ephemeris_track_and_log_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let params = SceneParams {
        blocks_per_row: 3,
        ..Default::default()
    };
    let scene = gen_scene(ScenePreset::Street, &params).unwrap();
    let path = dir.path().join("scene.json");
    save_scene(&scene, &path).unwrap();
    let loaded = load_scene(&path).unwrap();
    assert_eq!(loaded.file(), scene.file());
    assert_eq!(loaded.content_hash(), scene.content_hash());
    assert_eq!(parse_scene(&scene.to_json(), "s").unwrap().file(), scene.file());

    let table = gen_constellation(scene.origin(), &constellation(6)).unwrap();
    let path = dir.path().join("ephemeris.csv");
    save_ephemeris(&table, &path).unwrap();
    let reloaded = load_ephemeris(&path).unwrap();
    assert_eq!(reloaded.to_csv_string(), table.to_csv_string());
    assert_eq!(parse_ephemeris(&table.to_csv_string(), "e").unwrap().records().len(), 60);
    for (a, b) in reloaded.records().iter().zip(table.records()) {
        assert_eq!(a.sat_id, b.sat_id);
        assert!((a.position.vector() - b.position.vector()).amax() <= 5e-4);
    }

    let track = straight_track(&scene, [-3.0, -20.0], [4.0, 30.0], 0.0, 30.0, 6).unwrap();
    let path = dir.path().join("track.csv");
    save_track(&track, &path).unwrap();
    assert_eq!(load_track(&path).unwrap(), track);

    let meas = dtgnss::eval::simulate_track(&scene, &table, &track, &NoiseModel::gaussian(1.0, 9)).unwrap();
    let mut log = MeasurementLog::new();
    for (p, m) in track.iter().zip(&meas) {
        log.push(p.epoch, snap_to_cell(&p.position, scene.grid()), m);
    }
    let rows = parse_measurement_log(log.as_str(), "log").unwrap();
    assert_eq!(rows.len(), meas.iter().map(Vec::len).sum::<usize>());
    for (row, m) in rows.iter().zip(meas.iter().flatten()) {
        assert_eq!(row.sat_id, m.sat_id);
        assert_eq!(row.kind, m.path.kind);
        assert!((row.pseudorange - m.pseudorange).abs() <= 5e-7);
        assert!((row.extra_delay - m.path.extra_delay).abs() <= 5e-7);
    }
}
