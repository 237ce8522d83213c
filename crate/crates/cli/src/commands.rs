use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use dtgnss::correction::{build_database, load_database, save_database, BuildSettings, CorrectionDatabase};
use dtgnss::ephemeris::{load_ephemeris, save_ephemeris, EphemerisTable};
use dtgnss::eval::{
    correct_epoch, error_stats, format_stats_table, gen_constellation, gen_scene, load_track, parse_report_errors,
    report_csv, run_pipeline, save_track, simulate_track, stats_csv, straight_track, support_map_csv,
    error_series_csv, Baseline, PipelineOptions, PipelineReport, ScenePreset, TrackPoint,
};
use dtgnss::io::{read_to_string, write_atomic};
use dtgnss::measurement::{parse_measurement_log, MeasurementLog, NoiseModel, SimulatedMeasurement};
use dtgnss::raytrace::ReceptionPath;
use dtgnss::scene::{load_scene, save_scene, snap_to_cell, Scene};
use dtgnss::{Error, Result};

use crate::config::Config;
use crate::{
    BuildDbArgs, Cli, Command, CorrectArgs, EvaluateArgs, GenConstellationArgs, GenSceneArgs, SimulateRxArgs,
};

pub fn parse_pair(s: &str) -> std::result::Result<[f64; 2], String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected `east,north`, got `{s}`"))?;
    let num = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}"));
    Ok([num(a)?, num(b)?])
}

pub fn run(cli: &Cli) -> Result<()> {
    let config = Config::load(cli.config.as_deref())?;
    let out = &cli.output_dir;
    match &cli.command {
        Command::GenScene(a) => gen_scene_cmd(a, &config, out),
        Command::GenConstellation(a) => gen_constellation_cmd(a, &config, out),
        Command::BuildDb(a) => build_db_cmd(a, &config, out),
        Command::SimulateRx(a) => simulate_rx_cmd(a, &config, cli.seed, out),
        Command::Correct(a) => correct_cmd(a, &config, out),
        Command::Evaluate(a) => evaluate_cmd(a, &config, cli.seed, out),
    }
}

fn written(path: &Path) -> PathBuf {
    println!("wrote {}", path.display());
    path.to_path_buf()
}

fn noise_model(sigma: f64, seed: u64) -> Result<NoiseModel> {
    let noise = if sigma > 0.0 {
        NoiseModel::gaussian(sigma, seed)
    } else if sigma == 0.0 {
        NoiseModel::none()
    } else {
        return Err(Error::Validation(format!("noise sigma must be non-negative, got {sigma}")));
    };
    noise.validate()?;
    Ok(noise)
}

fn baseline(flag: Option<&str>, config: &Config) -> Result<Baseline> {
    flag.map_or(Ok(config.receiver.solver), str::parse)
}

fn gen_scene_cmd(a: &GenSceneArgs, config: &Config, out: &Path) -> Result<()> {
    let preset = match &a.preset {
        Some(p) => p.parse()?,
        None => config.preset.unwrap_or(ScenePreset::Canyon),
    };
    let mut p = config.scene.clone();
    p.street_width = a.street_width.unwrap_or(p.street_width);
    p.building_height = a.building_height.unwrap_or(p.building_height);
    p.block_length = a.block_length.unwrap_or(p.block_length);
    p.building_depth = a.building_depth.unwrap_or(p.building_depth);
    p.blocks_per_row = a.blocks_per_row.unwrap_or(p.blocks_per_row);
    p.resolution = a.resolution.unwrap_or(p.resolution);
    let scene = gen_scene(preset, &p)?;
    let path = out.join("scene.json");
    save_scene(&scene, &path)?;
    written(&path);
    println!(
        "{} buildings, {} x {} grid cells of {} m",
        scene.buildings().len(),
        scene.grid().cols(),
        scene.grid().rows(),
        scene.grid().resolution
    );
    Ok(())
}

fn gen_constellation_cmd(a: &GenConstellationArgs, config: &Config, out: &Path) -> Result<()> {
    let origin = match &a.scene {
        Some(path) => *load_scene(path)?.origin(),
        None => config.scene.origin,
    };
    let mut p = config.constellation.clone();
    p.count = a.count.unwrap_or(p.count);
    p.epochs = a.epochs.unwrap_or(p.epochs);
    p.step = a.step.unwrap_or(p.step);
    p.start = a.start.unwrap_or(p.start);
    let table = gen_constellation(&origin, &p)?;
    let path = out.join("ephemeris.csv");
    save_ephemeris(&table, &path)?;
    written(&path);
    println!("{} satellites x {} epochs every {} s", p.count, p.epochs, p.step);
    Ok(())
}

fn build_settings(step: Option<f64>, slot_length: Option<f64>, config: &Config) -> BuildSettings {
    BuildSettings {
        slot_length: slot_length.unwrap_or(config.build.slot_length),
        step: step.unwrap_or(config.build.step),
        ..BuildSettings::default()
    }
}

fn build_and_save(scene: &Scene, table: &EphemerisTable, settings: &BuildSettings, out: &Path) -> Result<CorrectionDatabase> {
    let db = build_database(scene, table, settings)?;
    save_database(&db, &written(&out.join("correction.db")))?;
    write_atomic(&out.join("support.csv"), support_map_csv(&db).as_bytes())?;
    written(&out.join("support.csv"));
    let (dropped, skipped) = db
        .slots
        .iter()
        .fold((0, 0), |(d, s), a| (d + a.dropped, s + a.skipped));
    println!(
        "{} entries over {} slots; {} candidate cells; {dropped} fixes outside the grid, {skipped} candidates skipped",
        db.len(),
        db.slots.len(),
        db.metadata.candidate_cells
    );
    Ok(db)
}

fn build_db_cmd(a: &BuildDbArgs, config: &Config, out: &Path) -> Result<()> {
    let scene = load_scene(&a.scene)?;
    let table = load_ephemeris(&a.ephemeris)?;
    build_and_save(&scene, &table, &build_settings(a.step, a.slot_length, config), out)?;
    Ok(())
}

fn simulate_rx_cmd(a: &SimulateRxArgs, config: &Config, seed: u64, out: &Path) -> Result<()> {
    let scene = load_scene(&a.scene)?;
    let table = load_ephemeris(&a.ephemeris)?;
    let track = match &a.track {
        Some(path) => load_track(path)?,
        None => {
            let start = a.start.or(config.receiver.start);
            let end = a.end.or(config.receiver.end);
            let (Some(start), Some(end)) = (start, end) else {
                return Err(Error::Validation(
                    "give either --track or both --start and --end".into(),
                ));
            };
            let epochs: Vec<f64> = table.epochs().collect();
            let track = straight_track(&scene, start, end, epochs[0], table.step(), epochs.len() as u32)?;
            let path = out.join("track.csv");
            save_track(&track, &path)?;
            written(&path);
            track
        }
    };
    let noise = noise_model(a.noise_sigma.unwrap_or(config.receiver.noise_sigma), seed)?;
    let measurements = simulate_track(&scene, &table, &track, &noise)?;
    let mut log = MeasurementLog::new();
    for (p, m) in track.iter().zip(&measurements) {
        log.push(p.epoch, snap_to_cell(&p.position, scene.grid()), m);
    }
    let path = out.join("measurements.csv");
    write_atomic(&path, log.as_str().as_bytes())?;
    written(&path);
    let total: usize = measurements.iter().map(Vec::len).sum();
    println!("{} epochs, {total} measurements", track.len());
    Ok(())
}

fn print_summary(report: &PipelineReport, baseline: Baseline) {
    println!(
        "{} epochs, {} corrected, {} without a correction, {} unsolved",
        report.records.len(),
        report.applied_count(),
        report.records.len() - report.applied_count() - report.unsolved_count(),
        report.unsolved_count()
    );
    let rows = report.stats_rows(baseline);
    if !rows.is_empty() {
        print!("{}", format_stats_table(&rows));
    }
}

fn correct_cmd(a: &CorrectArgs, config: &Config, out: &Path) -> Result<()> {
    let scene = load_scene(&a.scene)?;
    let table = load_ephemeris(&a.ephemeris)?;
    let db = load_database(&a.db)?;
    if db.metadata.scene_hash != scene.content_hash() {
        eprintln!("warning: {} was built for a different scene", a.db.display());
    }
    let source = a.measurements.display().to_string();
    let rows = parse_measurement_log(&read_to_string(&a.measurements)?, &source)?;
    let frame = scene.frame();
    let mut by_epoch: BTreeMap<u64, (f64, Vec<SimulatedMeasurement>)> = BTreeMap::new();
    for row in rows {
        let sats = table.satellites_at(row.epoch)?;
        let sat = sats
            .iter()
            .find(|s| s.sat_id == row.sat_id)
            .ok_or_else(|| Error::Validation(format!("satellite {} not in the ephemeris at {} s", row.sat_id, row.epoch)))?;
        let sat_enu = frame.to_enu(&sat.position);
        let m = SimulatedMeasurement {
            sat_id: row.sat_id,
            sat_position: sat.position,
            sat_enu,
            pseudorange: row.pseudorange,
            path: ReceptionPath {
                kind: row.kind,
                range: row.pseudorange - row.extra_delay,
                extra_delay: row.extra_delay,
                surface_id: None,
                reflection_point: None,
            },
        };
        by_epoch
            .entry(epoch_key(row.epoch))
            .or_insert_with(|| (row.epoch, Vec::new()))
            .1
            .push(m);
    }
    let truth: Option<Vec<TrackPoint>> = a.track.as_deref().map(load_track).transpose()?;
    let epochs: Vec<(f64, Option<TrackPoint>)> = match &truth {
        Some(track) => track.iter().map(|p| (p.epoch, Some(*p))).collect(),
        None => by_epoch.values().map(|(e, _)| (*e, None)).collect(),
    };
    let options = PipelineOptions {
        baseline: baseline(a.solver.as_deref(), config)?,
        ..Default::default()
    };
    let empty = Vec::new();
    let records = epochs
        .iter()
        .map(|(epoch, p)| {
            let meas = by_epoch.get(&epoch_key(*epoch)).map_or(&empty, |(_, m)| m);
            correct_epoch(&scene, &db, *epoch, p.map(|p| p.position), meas, &options)
        })
        .collect();
    let report = PipelineReport::from_records(records);
    let path = out.join("report.csv");
    write_atomic(&path, report_csv(&report.records).as_bytes())?;
    written(&path);
    print_summary(&report, options.baseline);
    Ok(())
}

fn epoch_key(epoch: f64) -> u64 {
    // epochs are non-negative, so the bit pattern orders like the value
    epoch.to_bits()
}

fn evaluate_cmd(a: &EvaluateArgs, config: &Config, seed: u64, out: &Path) -> Result<()> {
    if let Some(report) = &a.report {
        let source = report.display().to_string();
        let errors = parse_report_errors(&read_to_string(report)?, &source)?;
        let raw: Vec<f64> = errors.iter().map(|e| e.0).collect();
        let corrected: Vec<f64> = errors.iter().map(|e| e.1).collect();
        let rows = [("Uncorrected", error_stats(&raw)?), ("DT-aided", error_stats(&corrected)?)];
        let path = out.join("stats.csv");
        write_atomic(&path, stats_csv(&rows).as_bytes())?;
        written(&path);
        print!("{}", format_stats_table(&rows));
        return Ok(());
    }
    let (Some(scene), Some(ephemeris), Some(track)) = (&a.scene, &a.ephemeris, &a.track) else {
        return Err(Error::Validation("evaluate needs --report or --scene, --ephemeris and --track".into()));
    };
    let scene = load_scene(scene)?;
    let table = load_ephemeris(ephemeris)?;
    let track = load_track(track)?;
    let db = match &a.db {
        Some(path) => load_database(path)?,
        None => build_and_save(&scene, &table, &build_settings(None, None, config), out)?,
    };
    let options = PipelineOptions {
        baseline: baseline(a.solver.as_deref(), config)?,
        noise: noise_model(a.noise_sigma.unwrap_or(config.receiver.noise_sigma), seed)?,
        ..Default::default()
    };
    let report = run_pipeline(&scene, &table, &track, &db, &options)?;
    write_atomic(&out.join("report.csv"), report_csv(&report.records).as_bytes())?;
    written(&out.join("report.csv"));
    write_atomic(&out.join("errors.csv"), error_series_csv(&report.records).as_bytes())?;
    written(&out.join("errors.csv"));
    write_atomic(&out.join("stats.csv"), stats_csv(&report.stats_rows(options.baseline)).as_bytes())?;
    written(&out.join("stats.csv"));
    print_summary(&report, options.baseline);
    Ok(())
}
