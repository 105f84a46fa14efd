use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use serde_json::Value;
use tempfile::TempDir;
use tower::ServiceExt;
use twinforecast_cli::project::Project;
use twinforecast_cli::serve::{router, AppState, ForecastResponse};
use twinforecast_core::eval::LatencyStats;

const WEATHER_FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/tests/fixtures/weather_24h.json");

fn project() -> (TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("twinforecast.toml");
    fs::write(
        &cfg,
        "data_dir = \"data\"\ntwin = \"twin.json\"\ntimezone = \"Europe/Stockholm\"\nregistry = \"registry\"\n",
    )
    .unwrap();
    (dir, cfg)
}

struct Outcome {
    code: i32,
    stdout: String,
    stderr: String,
}

fn cli(cfg: &Path, args: &[&str]) -> Outcome {
    let mut argv = vec!["twinforecast".to_string(), "--config".into(), cfg.display().to_string()];
    argv.extend(args.iter().map(|s| s.to_string()));
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = twinforecast_cli::run(argv, &mut out, &mut err);
    Outcome {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

fn ok(cfg: &Path, args: &[&str]) -> String {
    let o = cli(cfg, args);
    assert_eq!(o.code, 0, "{args:?} failed: {}", o.stderr);
    o.stdout
}

/// Generated lofstad-like project with an R103 temperature dataset.
fn prepared() -> (TempDir, PathBuf) {
    let (dir, cfg) = project();
    ok(&cfg, &["generate"]);
    ok(&cfg, &["preprocess", "--room", "R103", "--target", "temperature"]);
    (dir, cfg)
}

#[test]
fn help_and_version_exit_zero() {
    let (_d, cfg) = project();
    let o = cli(&cfg, &["--help"]);
    assert_eq!(o.code, 0);
    assert!(o.stdout.contains("preprocess"));
    assert_eq!(cli(&cfg, &["--version"]).code, 0);
}

#[test]
fn usage_errors_exit_one() {
    let (_d, cfg) = project();
    let o = cli(
        &cfg,
        &[
            "train",
            "--room",
            "R103",
            "--target",
            "temperature",
            "--arch",
            "prophet",
        ],
    );
    assert_eq!(o.code, 1);
    assert!(o.stderr.contains("prophet"));
    assert_eq!(cli(&cfg, &["frobnicate"]).code, 1);
}

#[test]
fn tft_is_rejected_explicitly() {
    let (_d, cfg) = project();
    let o = cli(
        &cfg,
        &["train", "--room", "R103", "--target", "temperature", "--arch", "tft"],
    );
    assert_eq!(o.code, 1);
    assert!(o.stderr.contains("temporal fusion transformer"), "{}", o.stderr);
}

#[test]
fn missing_config_is_a_user_error() {
    let o = cli(Path::new("/nonexistent/twinforecast.toml"), &["twin", "show"]);
    assert_eq!(o.code, 1);
    assert!(o.stderr.contains("cannot read config"));
}

#[test]
fn ingest_file_adds_one_catalog_entry() {
    let (dir, cfg) = project();
    let csv = dir.path().join("r1.csv");
    let mut text = String::from("timestamp,value\n");
    let t0: chrono::DateTime<chrono::Utc> = "2023-03-01T00:15:00Z".parse().unwrap();
    for h in 0..48 {
        let t = t0 + chrono::Duration::hours(h);
        text.push_str(&format!("{},{}\n", t.to_rfc3339(), 20.0 + (h % 5) as f64 * 0.1));
    }
    fs::write(&csv, text).unwrap();
    let out = ok(
        &cfg,
        &[
            "ingest",
            "--file",
            csv.to_str().unwrap(),
            "--series-id",
            "room1_temp",
            "--unit",
            "C",
        ],
    );
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["hours"], 48);
    let catalog: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("data/catalog.json")).unwrap()).unwrap();
    let series = catalog["series"].as_object().unwrap();
    assert_eq!(series.len(), 1);
    assert_eq!(series["room1_temp"]["unit"], "°C");
    assert!(dir.path().join("data/series/room1_temp.csv").is_file());
}

#[test]
fn bad_row_cites_file_and_row() {
    let (dir, cfg) = project();
    let csv = dir.path().join("bad.csv");
    fs::write(
        &csv,
        "timestamp,value\n2023-03-01T00:00:00Z,20.1\n2023-03-01T01:00:00Z,warm\n2023-03-01T02:00:00Z,20.3\n",
    )
    .unwrap();
    let o = cli(
        &cfg,
        &[
            "ingest",
            "--file",
            csv.to_str().unwrap(),
            "--series-id",
            "x",
            "--unit",
            "C",
        ],
    );
    assert_eq!(o.code, 1);
    assert!(o.stderr.contains("bad.csv"), "{}", o.stderr);
    assert!(o.stderr.contains("row 2"), "{}", o.stderr);
}

#[test]
fn weather_fixture_gives_seven_series() {
    let (dir, cfg) = project();
    let source = format!("file:{WEATHER_FIXTURE}");
    let out = ok(&cfg, &["ingest", "--weather", "--source", &source]);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["ingested"].as_array().unwrap().len(), 7);
    let catalog: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("data/catalog.json")).unwrap()).unwrap();
    assert_eq!(catalog["series"].as_object().unwrap().len(), 7);
}

#[test]
fn twin_commands() {
    let (dir, cfg) = project();
    assert_eq!(cli(&cfg, &["twin", "show"]).code, 1);
    ok(&cfg, &["twin", "init"]);
    assert_eq!(cli(&cfg, &["twin", "init"]).code, 1);
    let shown = ok(&cfg, &["twin", "show"]);
    serde_json::from_str::<Value>(&shown).unwrap();
    let points = ok(&cfg, &["twin", "points", "R103", "--class", "TemperatureSensor"]);
    assert_eq!(points.trim(), "R103_temp\tTemperatureSensor\tR103_temperature");
    ok(
        &cfg,
        &[
            "twin",
            "bind",
            "--point",
            "R103_co2",
            "--series",
            "co2_spare",
            "--unit",
            "ppm",
        ],
    );
    assert!(ok(&cfg, &["twin", "points", "R103"]).contains("co2_spare"));
    let o = cli(&cfg, &["twin", "points", "R999"]);
    assert_eq!(o.code, 1);
    let copy = dir.path().join("copy.json");
    fs::write(&copy, shown).unwrap();
    ok(&cfg, &["twin", "import", copy.to_str().unwrap()]);
}

#[test]
fn sn24_train_evaluate_bench() {
    let (dir, cfg) = prepared();
    let out = ok(
        &cfg,
        &["train", "--room", "R103", "--target", "temperature", "--arch", "sn24"],
    );
    assert!(out.contains("\"epochs_run\": 0"));
    let reg = dir.path().join("registry");
    assert!(reg.join("R103_temperature_sn24.tfwt").is_file());
    assert!(reg.join("R103_temperature_sn24.train.json").is_file());

    let out = ok(
        &cfg,
        &[
            "evaluate",
            "--room",
            "R103",
            "--target",
            "temperature",
            "--arch",
            "sn24",
            "--stride",
            "24",
        ],
    );
    assert!(out.contains("PASS"), "{out}");
    let doc: Value =
        serde_json::from_str(&fs::read_to_string(reg.join("reports/R103_temperature_sn24.json")).unwrap()).unwrap();
    assert_eq!(doc["eval"]["eval_schema"], 1);
    let origins = doc["eval"]["origins"].as_u64().unwrap() as usize;
    let csv = fs::read_to_string(reg.join("reports/R103_temperature_sn24.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + origins * 24);

    ok(
        &cfg,
        &[
            "bench",
            "--room",
            "R103",
            "--target",
            "temperature",
            "--arch",
            "sn24",
            "--runs",
            "40",
            "--warmup",
            "3",
        ],
    );
    let stats: LatencyStats =
        serde_json::from_str(&fs::read_to_string(reg.join("reports/R103_temperature_sn24.latency.json")).unwrap())
            .unwrap();
    assert_eq!(stats.runs, 40);
    assert_eq!(stats.samples_ms.len(), 40);
    assert_eq!(stats.warmup, 3);

    let o = cli(
        &cfg,
        &[
            "bench",
            "--room",
            "R103",
            "--target",
            "temperature",
            "--arch",
            "sn24",
            "--runs",
            "5",
        ],
    );
    assert_eq!(o.code, 1);
}

#[test]
fn evaluate_without_checkpoint_fails() {
    let (_d, cfg) = prepared();
    let o = cli(
        &cfg,
        &["evaluate", "--room", "R103", "--target", "temperature", "--arch", "tcn"],
    );
    assert_eq!(o.code, 1);
    assert!(o.stderr.contains("train"));
}

#[test]
fn hyper_overrides_are_checked() {
    let (_d, cfg) = prepared();
    let base = [
        "train",
        "--room",
        "R103",
        "--target",
        "temperature",
        "--arch",
        "tcn",
        "--max-epochs",
        "1",
    ];
    let mut args = base.to_vec();
    args.extend(["--patience", "0", "--hyper", "{\"bogus\": 1}"]);
    assert_eq!(cli(&cfg, &args).code, 1);
    let mut args = base.to_vec();
    args.extend(["--patience", "0", "--hyper", "[1]"]);
    assert_eq!(cli(&cfg, &args).code, 1);
}

fn tiny_pipeline() -> String {
    let (dir, cfg) = prepared();
    ok(
        &cfg,
        &[
            "train",
            "--room",
            "R103",
            "--target",
            "temperature",
            "--arch",
            "tcn",
            "--seed",
            "7",
            "--max-epochs",
            "2",
            "--patience",
            "1",
            "--train-stride",
            "48",
            "--hyper",
            "{\"channels\": 4, \"dilations\": [1, 2, 4]}",
        ],
    );
    ok(
        &cfg,
        &[
            "evaluate",
            "--room",
            "R103",
            "--target",
            "temperature",
            "--arch",
            "tcn",
            "--stride",
            "24",
        ],
    );
    fs::read_to_string(dir.path().join("registry/reports/R103_temperature_tcn.json")).unwrap()
}

#[test]
fn scripted_pipeline_is_deterministic() {
    let a = tiny_pipeline();
    let b = tiny_pipeline();
    assert_eq!(a, b);
}

async fn call(app: axum::Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let resp = app.oneshot(req).await.unwrap();
    let status = resp.status();
    let body = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    (status, body.to_vec())
}

fn post(body: &str) -> Request<Body> {
    Request::post("/forecast")
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap()
}

fn get(uri: &str) -> Request<Body> {
    Request::get(uri).body(Body::empty()).unwrap()
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn serve_endpoints() {
    let (_dir, cfg) = prepared();
    let state = Arc::new(AppState::open(Project::open(&cfg).unwrap()).unwrap());
    let app = router(state.clone());
    let request = r#"{"room": "R103", "target": "temperature", "origin": "2023-12-20T10:00:00Z"}"#;

    let (status, body) = call(app.clone(), get("/health")).await;
    assert_eq!(status, StatusCode::OK);
    let health: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(health["status"], "loading");
    assert_eq!(health["api_version"], 1);
    assert_eq!(health["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(
        call(app.clone(), post(request)).await.0,
        StatusCode::SERVICE_UNAVAILABLE
    );

    let loader = state.clone();
    tokio::task::spawn_blocking(move || loader.load_registry())
        .await
        .unwrap()
        .unwrap();

    let (status, body) = call(app.clone(), post(request)).await;
    assert_eq!(status, StatusCode::OK, "{}", String::from_utf8_lossy(&body));
    let resp: ForecastResponse = serde_json::from_slice(&body).unwrap();
    assert_eq!(resp.model, "SN24");
    assert_eq!(resp.api_version, 1);
    assert_eq!(resp.steps.len(), 24);
    for (i, s) in resp.steps.iter().enumerate() {
        assert_eq!(s.timestamp, resp.origin + chrono::Duration::hours(i as i64 + 1));
    }
    assert_eq!(call(app.clone(), post(request)).await.1, body);

    let unknown = r#"{"room": "R999", "target": "temperature", "origin": "2023-12-20T10:00:00Z"}"#;
    assert_eq!(call(app.clone(), post(unknown)).await.0, StatusCode::NOT_FOUND);
    let no_model = r#"{"room": "R103", "target": "temperature", "origin": "2023-12-20T10:00:00Z", "model": "tide"}"#;
    assert_eq!(call(app.clone(), post(no_model)).await.0, StatusCode::NOT_FOUND);
    assert_eq!(call(app.clone(), post("{not json")).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(
        call(app.clone(), post(r#"{"room": "R103"}"#)).await.0,
        StatusCode::BAD_REQUEST
    );
    let early = r#"{"room": "R103", "target": "temperature", "origin": "2023-01-02T10:00:00Z"}"#;
    assert_eq!(call(app.clone(), post(early)).await.0, StatusCode::BAD_REQUEST);

    let (status, body) = call(app.clone(), get("/twin")).await;
    assert_eq!(status, StatusCode::OK);
    assert!(String::from_utf8(body).unwrap().contains("R103_temp"));

    assert_eq!(call(app.clone(), get("/insights")).await.0, StatusCode::NOT_FOUND);
    ok(
        &cfg,
        &[
            "evaluate",
            "--room",
            "R103",
            "--target",
            "temperature",
            "--arch",
            "sn24",
            "--stride",
            "48",
        ],
    );
    let (status, body) = call(app.clone(), get("/insights?room=R103&target=temperature")).await;
    assert_eq!(status, StatusCode::OK);
    let v: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(v["insight"]["eval"]["config"]["model"], "SN24");
}
