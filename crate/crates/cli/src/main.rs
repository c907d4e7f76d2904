//! `sonarflow`: each pipeline stage as a subcommand, the end-to-end `run`,
//! and `serve` for the review API.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sonarflow_core::analytics::{
    count_all, estimate_lengths, net_counts, AnalyticsConfig, CountEvent, CountSummary,
};
use sonarflow_core::detector::DetectorConfig;
use sonarflow_core::echogram::{activity_gate, Reduction};
use sonarflow_core::metrics::{dominant_tracks, evaluate, EvaluationInput, MetricsConfig};
use sonarflow_core::mot::{
    parse_masks_jsonl, read_mot_csv, write_masks_jsonl, write_mot_csv, MaskEntry, MotRecord,
};
use sonarflow_core::pipeline::{
    detect_and_track, detect_stream, detection_records, detections_from_mot, echogram_from_source,
    mask_entries, run_pipeline, track_records, tracks_from_records, write_source_sraw, FrameSource,
    RunConfig, SimulatedSource, SrawSource,
};
use sonarflow_core::simulator::{ground_truth_to_mot, GroundTruth, ScenarioConfig, Simulator};
use sonarflow_core::sraw::SrawReader;
use sonarflow_core::tracker::TrackerConfig;
use sonarflow_core::SonarGeometry;
use sonarflow_review::{ingest_inbox, serve, AppState};

const SEED_ENV: &str = "SONARFLOW_SEED_OVERRIDE";

#[derive(Parser)]
#[command(
    name = "sonarflow",
    version,
    about = "Imaging-sonar fish counting and measurement"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReductionArg {
    Max,
    Mean,
}

impl From<ReductionArg> for Reduction {
    fn from(r: ReductionArg) -> Self {
        match r {
            ReductionArg::Max => Reduction::Max,
            ReductionArg::Mean => Reduction::Mean,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Render a scenario to frames.sraw, truth.json and gt.csv.
    Simulate {
        /// Built-in scenario name (single-fish, river-20, length-10, length-10-clean).
        #[arg(long, conflicts_with = "scenario_file")]
        scenario: Option<String>,
        /// Scenario JSON file.
        #[arg(long)]
        scenario_file: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the range-time echogram and the activity gate.
    Echogram {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "max")]
        reduction: ReductionArg,
        #[arg(long, default_value_t = 0.5)]
        background_quantile: f64,
        #[arg(long, default_value_t = 3.0)]
        k_sigma: f64,
    },
    /// Detect fish in every frame (or only the active ones).
    Detect {
        #[arg(long)]
        input: PathBuf,
        /// Detections MOT CSV to write.
        #[arg(long)]
        out: PathBuf,
        /// Detection masks JSONL to write.
        #[arg(long)]
        masks_out: Option<PathBuf>,
        /// DetectorConfig JSON.
        #[arg(long)]
        config: Option<PathBuf>,
        /// JSON list of active frame indices (from `echogram`).
        #[arg(long)]
        active: Option<PathBuf>,
    },
    /// Track detections read from a MOT CSV.
    Track {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        detections: PathBuf,
        /// Detection masks JSONL (from `detect --masks-out`).
        #[arg(long)]
        masks: Option<PathBuf>,
        /// Tracks MOT CSV to write.
        #[arg(long)]
        out: PathBuf,
        /// Track masks JSONL to write.
        #[arg(long)]
        masks_out: Option<PathBuf>,
        /// TrackerConfig JSON.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Count counting-line crossings of tracks.
    Count {
        #[arg(long)]
        tracks: PathBuf,
        /// Recording whose geometry the tracks refer to.
        #[arg(long)]
        input: PathBuf,
        /// AnalyticsConfig JSON.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate per-track fish length from track masks.
    Measure {
        #[arg(long)]
        tracks: PathBuf,
        #[arg(long)]
        masks: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score tracks (and optionally counts and lengths) against ground truth.
    Evaluate {
        /// Ground-truth JSON from `simulate`.
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        tracks: PathBuf,
        /// Detections MOT CSV; the track rows are used when absent.
        #[arg(long)]
        detections: Option<PathBuf>,
        /// Output of `count`; without it the tracks are counted here, which
        /// needs `--input`.
        #[arg(long)]
        counts: Option<PathBuf>,
        /// Recording the tracks refer to (for counting).
        #[arg(long)]
        input: Option<PathBuf>,
        /// Output of `measure`.
        #[arg(long)]
        lengths: Option<PathBuf>,
        /// MetricsConfig JSON.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the whole edge pipeline from a RunConfig JSON.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Forces echogram gating on.
        #[arg(long)]
        gate: bool,
        /// MOT CSV replacing the detector output.
        #[arg(long)]
        inject_detections: Option<PathBuf>,
    },
    /// Serve the review API over a data directory.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        confidence_threshold: f64,
    },
}

fn seed_override() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => {
            Ok(Some(v.trim().parse().with_context(|| {
                format!("{SEED_ENV}={v:?} is not an integer")
            })?))
        }
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(e).context(SEED_ENV),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))
}

fn config_or_default<T: serde::de::DeserializeOwned + Default>(
    path: &Option<PathBuf>,
) -> Result<T> {
    path.as_deref()
        .map(read_json)
        .transpose()
        .map(Option::unwrap_or_default)
}

/// Writes pretty JSON to `out`, or to stdout when absent.
fn emit<T: Serialize>(value: &T, out: &Option<PathBuf>) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    match out {
        Some(p) => fs::write(p, bytes).with_context(|| format!("writing {}", p.display())),
        None => {
            use std::io::Write;
            std::io::stdout().write_all(&bytes)?;
            Ok(())
        }
    }
}

fn read_masks(path: &Path) -> Result<Vec<MaskEntry>> {
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(parse_masks_jsonl(f)?)
}

fn write_masks(path: &Path, entries: &[MaskEntry]) -> Result<()> {
    let f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write_masks_jsonl(std::io::BufWriter::new(f), entries)?;
    Ok(())
}

fn geometry_of(path: &Path) -> Result<SonarGeometry> {
    Ok(SrawReader::open(path)
        .with_context(|| format!("opening {}", path.display()))?
        .header()
        .geom)
}

fn simulate(
    scenario: Option<String>,
    scenario_file: Option<PathBuf>,
    seed: Option<u64>,
    out: &Path,
) -> Result<()> {
    let mut config = match (scenario, scenario_file) {
        (_, Some(p)) => read_json::<ScenarioConfig>(&p)?,
        (Some(name), None) => {
            ScenarioConfig::named(&name).with_context(|| format!("unknown scenario {name:?}"))?
        }
        (None, None) => bail!("one of --scenario or --scenario-file is required"),
    };
    if let Some(s) = seed_override()?.or(seed) {
        config.seed = s;
    }
    let sim = Simulator::new(config)?;
    fs::create_dir_all(out)?;
    let truth = sim.ground_truth();
    write_source_sraw(&SimulatedSource(sim), &out.join("frames.sraw"))?;
    emit(&truth, &Some(out.join("truth.json")))?;
    write_mot_csv(&out.join("gt.csv"), &ground_truth_to_mot(&truth))?;
    eprintln!(
        "{} frames, {} fish, upstream {} downstream {}",
        truth.frames.len(),
        truth.fish.len(),
        truth.upstream_total,
        truth.downstream_total
    );
    Ok(())
}

fn active_mask(path: &Option<PathBuf>, n: usize) -> Result<Vec<bool>> {
    let Some(p) = path else {
        return Ok(vec![true; n]);
    };
    let indices: Vec<usize> = read_json(p)?;
    let mut mask = vec![false; n];
    for t in indices {
        *mask
            .get_mut(t)
            .with_context(|| format!("active frame {t} out of range ({n} frames)"))? = true;
    }
    Ok(mask)
}

#[derive(Serialize)]
struct CountOutput {
    counts: CountSummary,
    events: Vec<CountEvent>,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            scenario,
            scenario_file,
            seed,
            out,
        } => simulate(scenario, scenario_file, seed, &out),
        Command::Echogram {
            input,
            out,
            reduction,
            background_quantile,
            k_sigma,
        } => {
            let src = SrawSource::open(&input)?;
            let e = echogram_from_source(&src, reduction.into())?;
            let active = activity_gate(&e, background_quantile, k_sigma)?;
            fs::create_dir_all(&out)?;
            fs::write(out.join("echogram.pgm"), e.to_pgm())?;
            fs::write(out.join("echogram.csv"), e.to_csv())?;
            emit(&active, &Some(out.join("active_frames.json")))?;
            eprintln!("{} of {} frames active", active.len(), e.frame_count());
            Ok(())
        }
        Command::Detect {
            input,
            out,
            masks_out,
            config,
            active,
        } => {
            let cfg: DetectorConfig = config_or_default(&config)?;
            let src = SrawSource::open(&input)?;
            let active = active_mask(&active, src.frame_count())?;
            let mut dets = Vec::new();
            detect_stream(&src, &active, &cfg, |_, _, d| {
                dets.extend(d);
                Ok(())
            })?;
            let records = detection_records(&dets);
            write_mot_csv(&out, &records)?;
            if let Some(p) = masks_out {
                write_masks(
                    &p,
                    &mask_entries(&records, dets.iter().map(|d| d.mask.as_ref())),
                )?;
            }
            eprintln!("{} detections", records.len());
            Ok(())
        }
        Command::Track {
            input,
            detections,
            masks,
            out,
            masks_out,
            config,
        } => {
            let cfg: TrackerConfig = config_or_default(&config)?;
            let src = SrawSource::open(&input)?;
            let records = read_mot_csv(&detections)?;
            let masks = masks
                .as_deref()
                .map(read_masks)
                .transpose()?
                .unwrap_or_default();
            let injected = detections_from_mot(&records, &masks)?;
            let active = vec![true; src.frame_count()];
            let dt = detect_and_track(
                &src,
                &active,
                &DetectorConfig::default(),
                &cfg,
                Some(&injected),
            )?;
            let rows = track_records(&dt.tracks);
            write_mot_csv(&out, &rows)?;
            if let Some(p) = masks_out {
                write_masks(
                    &p,
                    &mask_entries(&rows, dt.tracks.iter().map(|o| o.mask.as_ref())),
                )?;
            }
            eprintln!("{} track rows", rows.len());
            Ok(())
        }
        Command::Count {
            tracks,
            input,
            config,
            out,
        } => {
            let cfg: AnalyticsConfig = config_or_default(&config)?;
            cfg.validate()?;
            let outputs = tracks_from_records(&read_mot_csv(&tracks)?, &[])?;
            let events = count_all(&outputs, &geometry_of(&input)?, &cfg);
            emit(
                &CountOutput {
                    counts: net_counts(&events),
                    events,
                },
                &out,
            )
        }
        Command::Measure {
            tracks,
            masks,
            input,
            config,
            out,
        } => {
            let cfg: AnalyticsConfig = config_or_default(&config)?;
            cfg.validate()?;
            let outputs = tracks_from_records(&read_mot_csv(&tracks)?, &read_masks(&masks)?)?;
            emit(
                &estimate_lengths(&outputs, &geometry_of(&input)?, &cfg),
                &out,
            )
        }
        Command::Evaluate {
            truth,
            tracks,
            detections,
            counts,
            input,
            lengths,
            config,
            out,
        } => {
            let cfg: MetricsConfig = config_or_default(&config)?;
            let truth: GroundTruth = read_json(&truth)?;
            let gt = ground_truth_to_mot(&truth);
            let tracks = read_mot_csv(&tracks)?;
            let detections: Vec<MotRecord> = match detections {
                Some(p) => read_mot_csv(&p)?,
                None => tracks.clone(),
            };
            let predicted: CountSummary = match (counts, input) {
                (Some(p), _) => {
                    let c: serde_json::Value = read_json(&p)?;
                    serde_json::from_value(c.get("counts").cloned().unwrap_or(c))?
                }
                (None, Some(input)) => {
                    let outputs = tracks_from_records(&tracks, &[])?;
                    net_counts(&count_all(
                        &outputs,
                        &geometry_of(&input)?,
                        &AnalyticsConfig::default(),
                    ))
                }
                (None, None) => bail!("evaluate needs --counts or --input"),
            };
            let count_pairs = [
                (predicted.upstream as f64, truth.upstream_total as f64),
                (predicted.downstream as f64, truth.downstream_total as f64),
            ];
            let length_pairs: Vec<(f64, f64)> = match lengths {
                Some(p) => {
                    let est: Vec<sonarflow_core::analytics::LengthEstimate> = read_json(&p)?;
                    dominant_tracks(&gt, &tracks, cfg.iou_threshold)
                        .into_iter()
                        .filter_map(|(fish, track)| {
                            let e = est.iter().find(|e| e.track_id as i64 == track)?;
                            Some((e.length_m, truth.length_of(fish as u32)?))
                        })
                        .collect()
                }
                None => Vec::new(),
            };
            let report = evaluate(&EvaluationInput {
                gt: &gt,
                detections: &detections,
                tracks: &tracks,
                counts: &count_pairs,
                lengths: &length_pairs,
                config: cfg,
            })?;
            emit(&report, &out)
        }
        Command::Run {
            config,
            out,
            gate,
            inject_detections,
        } => {
            let mut cfg = RunConfig::load(&config)
                .with_context(|| format!("loading {}", config.display()))?;
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            if gate {
                cfg.gate.enabled = true;
            }
            if let Some(p) = inject_detections {
                cfg.inject_detections = Some(p);
            }
            if let Some(s) = seed_override()? {
                cfg.seed_override = Some(s);
            }
            let report = run_pipeline(&cfg)?;
            eprintln!(
                "counts upstream {} downstream {} net {}; {} tracks; outputs in {}",
                report.counts.upstream,
                report.counts.downstream,
                report.counts.net,
                report.track_count,
                cfg.output_dir.display()
            );
            if let Some(m) = &report.metrics {
                let mota = m.mota.map_or("n/a".to_string(), |v| format!("{v:.3}"));
                eprintln!(
                    "mAP50 {:.3} MOTA {mota} HOTA {:.3} IDF1 {:.3} IDSW {}",
                    m.map50, m.hota, m.idf1, m.id_switches
                );
            }
            Ok(())
        }
        Command::Serve {
            port,
            host,
            data_dir,
            confidence_threshold,
        } => {
            let state = Arc::new(AppState::open(&data_dir, confidence_threshold)?);
            let n = ingest_inbox(&state)?;
            if n > 0 {
                eprintln!("ingested {n} uploads from the inbox");
            }
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind((host.as_str(), port))
                    .await
                    .with_context(|| format!("binding {host}:{port}"))?;
                eprintln!("review API on http://{}", listener.local_addr()?);
                serve(listener, state).await?;
                Ok(())
            })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
