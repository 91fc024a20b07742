use crate::{
    DetectArgs, DriveKind, MakeCorpusArgs, ManeuverArg, RecallModelArgs, RunFlags,
    SimulateDriveArgs, SweepArgs, SweepMode, TrainArgs, VarianceArg,
};
use anyhow::{bail, Context, Result};
use drivekws::analysis::{recall_row, write_recall_csv, RecallModelParams};
use drivekws::dsp::wav::read_wav;
use drivekws::dsp::FrontendConfig;
use drivekws::eval::io::{load_corpus, write_corpus};
use drivekws::eval::metrics::{write_summary_csv, write_sweep_csv};
use drivekws::eval::{
    double_grid, pair_with_drive, score_corpus, single_grid, sweep_double, sweep_single,
    synthesize_corpus, train_models, CorpusSpec, SweepSummary, TrainingConfig, UtteranceLabel,
    VarianceKind,
};
use drivekws::fusion::{maneuver_states, run_fused, RunConfig, SensitivityPair};
use drivekws::pipeline::{KwsModels, Pipeline};
use drivekws::scorer::{write_events_jsonl, ScoringConfig, Sensitivity, SmoothingConfig};
use drivekws::telemetry::{
    classify_maneuver, derive_states, generate_trajectory, read_trace_csv, write_states_jsonl,
    write_trace_csv, write_truth_csv, ManeuverThresholds, TrajectoryKind, TrajectoryParams,
};
use drivekws::vad::VadConfig;
use serde::de::DeserializeOwned;
use serde::Serialize;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::process::ExitCode;

const DRIVE_TRACE_FILE: &str = "drive_trace.csv";

fn read_json<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let bytes = std::fs::read(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", p.display()))
        }
    }
}

fn set<T: Copy>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn run_config(flags: &RunFlags) -> Result<RunConfig> {
    let mut c: RunConfig = read_json(flags.config.as_deref())?;
    set(&mut c.sen_1, flags.sen_1);
    set(&mut c.sen_2, flags.sen_2);
    set(&mut c.s_thd, flags.s_thd);
    set(&mut c.d_thd, flags.d_thd);
    set(&mut c.w_s, flags.w_s);
    set(&mut c.w_max, flags.w_max);
    set(&mut c.staleness_limit_s, flags.staleness_limit_s);
    set(&mut c.refractory_frames, flags.refractory_frames);
    Ok(c)
}

fn load_pipeline(models: &Path) -> Result<Pipeline> {
    let models = KwsModels::load(models, VadConfig::default())
        .with_context(|| format!("loading models from {}", models.display()))?;
    Ok(Pipeline::new(FrontendConfig::default(), models)?)
}

fn trajectory_kind(kind: ManeuverArg) -> TrajectoryKind {
    match kind {
        ManeuverArg::Straight => TrajectoryKind::Straight,
        ManeuverArg::Turn => TrajectoryKind::Turn,
        ManeuverArg::UTurn => TrajectoryKind::UTurn,
        ManeuverArg::Roundabout => TrajectoryKind::Roundabout,
    }
}

pub fn make_corpus(a: MakeCorpusArgs) -> Result<ExitCode> {
    let mut spec: CorpusSpec = read_json(a.config.as_deref())?;
    set(&mut spec.n_positive, a.n_positive);
    set(&mut spec.n_negative, a.n_negative);
    set(&mut spec.snr_range_db[0], a.snr_low);
    set(&mut spec.snr_range_db[1], a.snr_high);
    set(&mut spec.seed, a.seed);
    let corpus = synthesize_corpus(&spec)?;

    let kind = match a.drive {
        DriveKind::None => None,
        DriveKind::Straight => Some(TrajectoryKind::Straight),
        DriveKind::Turn => Some(TrajectoryKind::Turn),
        DriveKind::UTurn => Some(TrajectoryKind::UTurn),
        DriveKind::Roundabout => Some(TrajectoryKind::Roundabout),
    };
    let plan = match kind {
        None => None,
        Some(kind) => {
            let labels: Vec<UtteranceLabel> = corpus.utterances.iter().map(|u| u.label).collect();
            let durations: Vec<f64> = corpus
                .utterances
                .iter()
                .map(|u| u.audio.duration_s())
                .collect();
            let run = RunConfig::default();
            Some(pair_with_drive(
                &labels,
                &durations,
                kind,
                &TrajectoryParams::default(),
                &ManeuverThresholds {
                    s_thd: run.s_thd,
                    d_thd: run.d_thd,
                },
                run.staleness_limit_s,
                a.inside_fraction,
                spec.seed,
            )?)
        }
    };
    write_corpus(
        &a.out,
        &corpus,
        plan.as_ref().map(|p| p.start_times.as_slice()),
    )?;
    std::fs::write(
        a.out.join("corpus_spec.json"),
        serde_json::to_vec_pretty(&spec)?,
    )?;
    if let Some(plan) = &plan {
        write_trace_csv(create(&a.out.join(DRIVE_TRACE_FILE))?, &plan.trace)?;
        let inside = plan.inside.iter().filter(|&&b| b).count();
        eprintln!(
            "placed {inside} of {} utterances inside the maneuver",
            corpus.len()
        );
    }
    eprintln!("wrote {} utterances to {}", corpus.len(), a.out.display());
    Ok(ExitCode::SUCCESS)
}

pub fn train(a: TrainArgs) -> Result<ExitCode> {
    let mut cfg: TrainingConfig = read_json(a.config.as_deref())?;
    set(&mut cfg.hidden_layers, a.hidden_layers);
    set(&mut cfg.hidden_nodes, a.hidden_nodes);
    set(&mut cfg.train.epochs, a.epochs);
    set(&mut cfg.train.learning_rate, a.learning_rate);
    set(&mut cfg.train.batch_size, a.batch_size);
    set(&mut cfg.filler_keep_every, a.filler_keep_every);
    set(&mut cfg.vad_components, a.vad_components);
    set(&mut cfg.vad_max_iters, a.vad_iters);
    set(&mut cfg.seed, a.seed);
    let (_, corpus) = load_corpus(&a.manifest)
        .with_context(|| format!("loading corpus {}", a.manifest.display()))?;
    eprintln!("training on {} utterances", corpus.len());
    let trained = train_models(&corpus, &cfg)?;
    trained.models.save(&a.out)?;

    #[derive(Serialize)]
    struct Report<'a> {
        config: &'a TrainingConfig,
        epoch_losses: &'a [f64],
        frame_accuracy: f64,
    }
    let report = Report {
        config: &cfg,
        epoch_losses: &trained.dnn_report.epoch_losses,
        frame_accuracy: trained.frame_accuracy,
    };
    std::fs::write(
        a.out.join("train_report.json"),
        serde_json::to_vec_pretty(&report)?,
    )?;
    let loss = match trained.dnn_report.epoch_losses.last() {
        Some(loss) => format!("{loss:.6}"),
        None => "none".to_string(),
    };
    print_stdout(&format!(
        "final_loss {loss}\nframe_accuracy {:.4}\n",
        trained.frame_accuracy
    ))
}

pub fn detect(a: DetectArgs) -> Result<ExitCode> {
    let run = run_config(&a.run)?;
    let audio = read_wav(&a.audio).with_context(|| format!("reading {}", a.audio.display()))?;
    let pipeline = load_pipeline(&a.models)?;
    let (trace, config) = match &a.trace {
        Some(path) => {
            let trace = read_trace_csv(
                File::open(path).with_context(|| format!("opening {}", path.display()))?,
            )?;
            (trace, run.to_fusion()?)
        }
        None => (Vec::new(), run.to_single()?),
    };
    let events = run_fused(&pipeline, &audio, &trace, &config, a.audio_start_s)?;
    match &a.out {
        Some(path) => write_events_jsonl(create(path)?, &events)?,
        None => write_events_jsonl(std::io::stdout().lock(), &events)?,
    }
    eprintln!("{} detection event(s)", events.len());
    Ok(if events.is_empty() {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    })
}

pub fn simulate_drive(a: SimulateDriveArgs) -> Result<ExitCode> {
    let mut params: TrajectoryParams = read_json(a.config.as_deref())?;
    set(&mut params.cruise_speed_mps, a.cruise_speed_mps);
    set(&mut params.noise_sigma_m, a.noise_sigma_m);
    set(&mut params.lead_in_s, a.lead_in_s);
    set(&mut params.lead_out_s, a.lead_out_s);
    let trajectory = generate_trajectory(trajectory_kind(a.kind), &params, a.seed)?;
    write_trace_csv(create(&a.out_trace)?, &trajectory.samples)?;
    write_truth_csv(create(&a.out_truth)?, &trajectory)?;
    let states = classify_maneuver(
        &derive_states(&trajectory.samples)?,
        &ManeuverThresholds::default(),
    );
    if let Some(path) = &a.out_states {
        write_states_jsonl(create(path)?, &states)?;
    }
    let sensitive = states
        .iter()
        .filter(|s| s.state == drivekws::scorer::ManeuverKind::Sensitive)
        .count();
    eprintln!(
        "{} samples, {sensitive} classified sensitive",
        trajectory.samples.len()
    );
    Ok(ExitCode::SUCCESS)
}

fn parse_pairs(raw: &[String]) -> Result<Vec<SensitivityPair>> {
    raw.iter()
        .map(|p| {
            let (a, b) = p
                .split_once(':')
                .with_context(|| format!("pair {p:?} is not sen_1:sen_2"))?;
            Ok(SensitivityPair::new(a.trim().parse()?, b.trim().parse()?)?)
        })
        .collect()
}

pub fn sweep(a: SweepArgs) -> Result<ExitCode> {
    let run = run_config(&a.run)?;
    let variance = match a.variance {
        VarianceArg::Population => VarianceKind::Population,
        VarianceArg::Sample => VarianceKind::Sample,
    };
    let sensitivities = match &a.grid {
        Some(g) => g
            .iter()
            .map(|&v| Sensitivity::new(v))
            .collect::<drivekws::Result<Vec<_>>>()?,
        None => single_grid(),
    };
    let pairs = match &a.pairs {
        Some(p) => parse_pairs(p)?,
        None => double_grid(),
    };
    if matches!(a.mode, SweepMode::Single) && sensitivities.is_empty()
        || matches!(a.mode, SweepMode::Double) && pairs.is_empty()
    {
        bail!("empty sensitivity grid");
    }

    let (manifest, corpus) = load_corpus(&a.manifest)
        .with_context(|| format!("loading corpus {}", a.manifest.display()))?;
    let pipeline = load_pipeline(&a.models)?;
    let times = manifest.timestamps();
    let scored = score_corpus(
        &pipeline,
        &corpus,
        Some(&times),
        SmoothingConfig { w_s: run.w_s },
        ScoringConfig { w_max: run.w_max },
    )?;
    let (name, summary) = match a.mode {
        SweepMode::Single => ("single", sweep_single(&sensitivities, &scored)?),
        SweepMode::Double => {
            let path = a.trace.clone().unwrap_or_else(|| {
                a.manifest
                    .parent()
                    .unwrap_or(Path::new("."))
                    .join(DRIVE_TRACE_FILE)
            });
            let trace = read_trace_csv(
                File::open(&path).with_context(|| format!("opening {}", path.display()))?,
            )?;
            let states = maneuver_states(
                &trace,
                &ManeuverThresholds {
                    s_thd: run.s_thd,
                    d_thd: run.d_thd,
                },
            )?;
            (
                "fused",
                sweep_double(&pairs, &scored, &states, run.staleness_limit_s)?,
            )
        }
    };
    let summary = SweepSummary::from_rows(summary.rows, variance)?;
    write_sweep_csv(create(&a.out_results)?, &summary)?;
    write_summary_csv(create(&a.out_summary)?, &[(name, &summary)])?;
    eprintln!(
        "{name}: mean precision {:.4}, mean recall {:.4} over {} configurations",
        summary.mean_precision,
        summary.mean_recall,
        summary.rows.len()
    );
    Ok(ExitCode::SUCCESS)
}

pub fn recall_model(a: RecallModelArgs) -> Result<ExitCode> {
    let params = RecallModelParams::new(a.p1, a.p2, a.p3, a.k)?;
    if let Some(w) = params.warning() {
        eprintln!("warning: {w}");
    }
    let row = recall_row(&params, a.trials, a.seed)?;
    let mut buf = Vec::new();
    write_recall_csv(&mut buf, &[row])?;
    print_stdout(&String::from_utf8(buf)?)
}

pub fn config_dump() -> Result<ExitCode> {
    #[derive(Serialize)]
    struct Defaults {
        run: RunConfig,
        corpus: CorpusSpec,
        training: TrainingConfig,
        trajectory: TrajectoryParams,
    }
    let defaults = Defaults {
        run: RunConfig::default(),
        corpus: CorpusSpec::default(),
        training: TrainingConfig::default(),
        trajectory: TrajectoryParams::default(),
    };
    print_stdout(&format!("{}\n", serde_json::to_string_pretty(&defaults)?))
}

/// Writes to standard output; a closed pipe is not an error.
fn print_stdout(text: &str) -> Result<ExitCode> {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(ExitCode::SUCCESS),
    }
}
