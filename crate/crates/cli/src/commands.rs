use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Duration;

use serde_json::{json, Map, Value};
use twinforecast_core::eval::{bench_inference, export_report, rolling_evaluate, BusyWaitStub, InsightDocument};
use twinforecast_core::features::{split_windows, Segment, WindowSample};
use twinforecast_core::forecast::{
    build_model, load_expecting, save, train, ArchConfig, Architecture, ForecastTask, TrainerConfig,
};
use twinforecast_core::series::weather::{fetch_weather, ConnectorConfig};
use twinforecast_core::series::{canonicalize, ingest_csv, ColumnMap, SeriesKind};
use twinforecast_core::synth::{generate, perturbation_report, preset, ClimateScenario};
use twinforecast_core::twin::{EntityClass, SeriesBinding, TwinGraph};

use crate::error::CliError;
use crate::project::{model_name, parse_unit, DatasetArtifact, Project, Target, HORIZON, LOOKBACK};
use crate::{BenchArgs, EvalArgs, GenerateArgs, IngestArgs, ModelArgs, TrainArgs, TwinCommand};

type Out<'a> = &'a mut dyn Write;

fn emit(out: Out<'_>, text: impl AsRef<str>) -> Result<(), CliError> {
    writeln!(out, "{}", text.as_ref()).map_err(|e| CliError::Internal(e.to_string()))
}

pub fn cmd_generate(p: &Project, args: &GenerateArgs, out: Out<'_>) -> Result<(), CliError> {
    let path = Path::new(&args.scenario);
    let mut scenario = if path.extension().is_some_and(|e| e == "json") {
        let text = fs::read_to_string(path).map_err(|e| CliError::User(format!("{}: {e}", path.display())))?;
        ClimateScenario::from_json(&text)?
    } else {
        preset(&args.scenario, args.seed.unwrap_or(7))?
    };
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    let data = generate(&scenario)?;
    let source = format!("synthetic:{}:{}", scenario.name, scenario.seed);
    let series = data.all_series();
    for s in &series {
        p.store_series(s, &source, None)?;
    }
    let events = perturbation_report(&scenario)?;
    p.write_json(&p.config.data_dir.join("events.json"), &events)?;
    p.write_json(&p.config.data_dir.join("scenario.json"), &scenario)?;
    if !p.config.twin.exists() {
        p.save_twin(&TwinGraph::lofstad_instrumented())?;
    }
    emit(
        out,
        format!(
            "generated {} series of {} hours from scenario {} (seed {}), {} occupancy events",
            series.len(),
            scenario.length_hours,
            scenario.name,
            scenario.seed,
            events.len()
        ),
    )
}

pub fn cmd_ingest(p: &Project, args: &IngestArgs, out: Out<'_>) -> Result<(), CliError> {
    let tz = p.config.timezone;
    if args.weather {
        let cfg = match (&args.source, &p.config.weather) {
            (Some(s), base) => ConnectorConfig {
                source: s.clone(),
                ..base.clone().unwrap_or_else(|| ConnectorConfig::new(s.clone()))
            },
            (None, Some(c)) => c.clone(),
            (None, None) => {
                return Err(CliError::User(
                    "no weather source: pass --source or set [weather] in the config".into(),
                ))
            }
        };
        let raws = fetch_weather(&cfg, tz).map_err(|e| CliError::from(e).context(&cfg.source))?;
        let mut summary = Vec::new();
        for raw in &raws {
            let (series, report) = canonicalize(raw, SeriesKind::Weather, tz, args.max_gap)
                .map_err(|e| CliError::from(e).context(raw.series_id()))?;
            p.store_series(&series, &cfg.source, Some(report.clone()))?;
            summary.push(json!({"series": series.series_id(), "hours": series.len(), "cleaning": report}));
        }
        return emit(out, serde_json::to_string_pretty(&json!({"ingested": summary}))?);
    }

    let file = args
        .file
        .as_ref()
        .ok_or_else(|| CliError::User("pass --file <csv> or --weather".into()))?;
    let id = args
        .series_id
        .clone()
        .ok_or_else(|| CliError::User("--series-id is required with --file".into()))?;
    let unit = parse_unit(args.unit.as_deref().unwrap_or("C")).map_err(CliError::User)?;
    let columns = ColumnMap {
        timestamp: args.timestamp_column.clone(),
        value: args.value_column.clone(),
    };
    let ctx = file.display().to_string();
    let reader = fs::File::open(file).map_err(|e| CliError::User(format!("{ctx}: {e}")))?;
    let (raw, ingest) =
        ingest_csv(reader, &columns, tz, id.clone(), unit).map_err(|e| CliError::from(e).context(&ctx))?;
    let kind = if args.kind_weather {
        SeriesKind::Weather
    } else {
        SeriesKind::Indoor
    };
    let (series, cleaning) = canonicalize(&raw, kind, tz, args.max_gap).map_err(|e| CliError::from(e).context(&ctx))?;
    p.store_series(&series, &format!("file:{ctx}"), Some(cleaning.clone()))?;
    emit(
        out,
        serde_json::to_string_pretty(&json!({
            "series": id,
            "hours": series.len(),
            "start": series.start(),
            "ingest": ingest,
            "cleaning": cleaning,
        }))?,
    )
}

pub fn cmd_twin(p: &Project, cmd: &TwinCommand, out: Out<'_>) -> Result<(), CliError> {
    match cmd {
        TwinCommand::Init { force } => {
            if p.config.twin.exists() && !force {
                return Err(CliError::User(format!(
                    "{} already exists; pass --force to overwrite",
                    p.config.twin.display()
                )));
            }
            p.save_twin(&TwinGraph::lofstad_instrumented())?;
            emit(out, format!("wrote {}", p.config.twin.display()))
        }
        TwinCommand::Show => {
            let twin = p.load_twin()?;
            emit(out, twin.to_json())
        }
        TwinCommand::Import { file } => {
            let text = fs::read_to_string(file).map_err(|e| CliError::User(format!("{}: {e}", file.display())))?;
            let twin = TwinGraph::from_json(&text).map_err(|e| CliError::from(e).context(file.display()))?;
            p.save_twin(&twin)?;
            emit(out, format!("imported twin with {} entities", twin.len()))
        }
        TwinCommand::Points { location, class } => {
            let twin = p.load_twin()?;
            let class = class
                .as_deref()
                .map(|c| c.parse::<EntityClass>())
                .transpose()
                .map_err(|e| CliError::User(e.to_string()))?;
            for e in twin.query_points(location, class)? {
                let series: Vec<&str> = twin.bindings_of(&e.id).iter().map(|b| b.series_id.as_str()).collect();
                emit(
                    &mut *out,
                    format!("{}\t{}\t{}", e.id, e.class.as_str(), series.join(",")),
                )?;
            }
            Ok(())
        }
        TwinCommand::Bind { point, series, unit } => {
            let mut twin = p.load_twin()?;
            let unit = parse_unit(unit).map_err(CliError::User)?;
            twin.bind_series(SeriesBinding {
                point_id: point.clone(),
                series_id: series.clone(),
                unit,
            })?;
            p.save_twin(&twin)?;
            emit(out, format!("bound {series} to {point}"))
        }
    }
}

pub fn cmd_preprocess(p: &Project, room: &str, target: Target, out: Out<'_>) -> Result<(), CliError> {
    let (frame, series_id) = p.build_frame(room, target, None)?;
    let manifest = WindowSample::at(&frame, 0, LOOKBACK, HORIZON)?.manifest();
    split_windows(frame.clone(), LOOKBACK, HORIZON, 1)?;
    let artifact = DatasetArtifact {
        room: room.to_string(),
        target,
        target_series: series_id,
        weather_series: twinforecast_core::series::weather::WeatherVariable::ALL
            .iter()
            .map(|v| v.series_id().to_string())
            .collect(),
        manifest_hash: manifest.hash(),
        manifest,
        scalers: frame.scalers().clone(),
        start: frame.start(),
        len: frame.len(),
        boundaries: frame.boundaries(),
        degenerate_columns: frame.degenerate_columns(),
    };
    let path = p.save_dataset(&artifact)?;
    let (a, v) = artifact.boundaries;
    emit(
        out,
        format!(
            "dataset {room}/{target}: {} hours from {} (train {a}, valid {}, test {}), manifest {}, written to {}",
            artifact.len,
            artifact.start.to_rfc3339(),
            v - a,
            artifact.len - v,
            &artifact.manifest_hash[..12],
            path.display()
        ),
    )?;
    if !artifact.degenerate_columns.is_empty() {
        emit(
            out,
            format!(
                "warning: constant training columns: {}",
                artifact.degenerate_columns.join(", ")
            ),
        )?;
    }
    Ok(())
}

fn parse_overrides(hyper: Option<&str>) -> Result<Map<String, Value>, CliError> {
    match hyper {
        None => Ok(Map::new()),
        Some(text) => match serde_json::from_str::<Value>(text) {
            Ok(Value::Object(m)) => Ok(m),
            Ok(_) => Err(CliError::User("--hyper must be a JSON object".into())),
            Err(e) => Err(CliError::User(format!("--hyper: {e}"))),
        },
    }
}

pub fn cmd_train(p: &Project, args: &TrainArgs, out: Out<'_>) -> Result<(), CliError> {
    let m = &args.model;
    let dataset = p.load_dataset(&m.room, m.target)?;
    let frame = p.dataset_frame(&dataset)?;
    let t = &p.config.training;
    let cfg = TrainerConfig {
        max_epochs: args.max_epochs.unwrap_or(t.max_epochs),
        patience: args.patience.unwrap_or(t.patience),
        batch_size: args.batch_size.unwrap_or(t.batch_size),
        learning_rate: args.learning_rate.unwrap_or(t.learning_rate),
        seed: args.seed.unwrap_or(t.seed),
    };
    let stride = args.train_stride.unwrap_or(t.train_stride).max(1);
    let [train_set, _, _] = split_windows(frame.clone(), LOOKBACK, HORIZON, stride)?;
    let [_, valid_set, _] = split_windows(frame.clone(), LOOKBACK, HORIZON, 1)?;
    let task = ForecastTask::new(dataset.manifest.clone());
    let arch_cfg = ArchConfig::default_for(m.arch, &task).with_overrides(&parse_overrides(args.hyper.as_deref())?)?;
    let model = build_model(arch_cfg, task, cfg.seed)?;
    let (model, report) = train(model, &train_set, &valid_set, &cfg)?;
    let name = model_name(&m.room, m.target, m.arch);
    let ckpt = p.checkpoint_path(&name);
    save(&model, &ckpt)?;
    p.write_json(&p.train_report_path(&name), &report)?;
    emit(&mut *out, serde_json::to_string_pretty(&report)?)?;
    emit(
        out,
        format!(
            "trained {name}: {} epochs, best {} (validation MSE {}), checkpoint {}",
            report.epochs_run,
            report.best_epoch,
            report.best_valid_loss.map_or("n/a".into(), |l| format!("{l:.6}")),
            ckpt.display()
        ),
    )
}

fn load_model(
    p: &Project,
    m: &ModelArgs,
) -> Result<
    (
        twinforecast_core::forecast::Forecaster,
        std::sync::Arc<twinforecast_core::features::FeatureFrame>,
        String,
    ),
    CliError,
> {
    let dataset = p.load_dataset(&m.room, m.target)?;
    let name = model_name(&m.room, m.target, m.arch);
    let path = p.checkpoint_path(&name);
    let model = if path.exists() {
        load_expecting(&path, &dataset.manifest)?
    } else if m.arch == Architecture::Sn24 {
        build_model(ArchConfig::Sn24, ForecastTask::new(dataset.manifest.clone()), 0)?
    } else {
        return Err(CliError::User(format!(
            "no checkpoint {}; train {} first",
            path.display(),
            m.arch
        )));
    };
    let scalers = model.scalers().cloned().unwrap_or_else(|| dataset.scalers.clone());
    let (frame, _) = p.build_frame(&m.room, m.target, Some(&scalers))?;
    Ok((model, frame, name))
}

pub fn cmd_evaluate(p: &Project, args: &EvalArgs, out: Out<'_>) -> Result<(), CliError> {
    let (model, frame, name) = load_model(p, &args.model)?;
    let report = rolling_evaluate(&model, &frame, Segment::Test, LOOKBACK, HORIZON, args.stride.max(1))?;
    let (json_path, csv_path) = p.eval_paths(&name);
    let doc = InsightDocument {
        eval: report,
        latency: None,
    };
    export_report(&doc, &json_path, &csv_path)?;
    let r = &doc.eval;
    emit(
        out,
        format!(
            "{name}: CV-RMSE {:.2}% NMBE {:+.2}% over {} origins -> {}{}\nreport {} and {}",
            r.pooled.cv_rmse,
            r.pooled.nmbe,
            r.origins,
            if r.pooled.passes { "PASS" } else { "FAIL" },
            if r.pooled.metric_unstable {
                " (mean near zero, metrics unstable)"
            } else {
                ""
            },
            json_path.display(),
            csv_path.display()
        ),
    )
}

pub fn cmd_bench(p: &Project, args: &BenchArgs, out: Out<'_>) -> Result<(), CliError> {
    let (stats, name) = if let Some(ms) = args.stub_ms {
        let dataset = p.load_dataset(&args.model.room, args.model.target)?;
        let frame = p.dataset_frame(&dataset)?;
        let sample = WindowSample::at(&frame, frame.segment_range(Segment::Test).start, LOOKBACK, HORIZON)?;
        let stub = BusyWaitStub {
            delay: Duration::from_secs_f64(ms / 1e3),
            horizon: HORIZON,
        };
        let stats = bench_inference(&stub, &sample, args.runs, args.warmup, &p.config.hardware)?;
        (stats, format!("stub_{}ms", ms))
    } else {
        let (model, frame, name) = load_model(p, &args.model)?;
        let sample = WindowSample::at(&frame, frame.segment_range(Segment::Test).start, LOOKBACK, HORIZON)?;
        (
            bench_inference(&model, &sample, args.runs, args.warmup, &p.config.hardware)?,
            name,
        )
    };
    p.write_json(&p.latency_path(&name), &stats)?;
    emit(
        out,
        format!(
            "{name}: {:.3} ± {:.3} ms over {} runs ({} warmup) on {}",
            stats.mean_ms, stats.std_ms, stats.runs, stats.warmup, stats.hardware
        ),
    )
}
