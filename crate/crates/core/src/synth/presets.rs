use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ClimateScenario, Heating, OccupancyEvent, OutdoorModel, Result, RoomConfig, SynthError};

pub const PRESET_NAMES: [&str; 3] = ["lofstad-like", "basement", "event-heavy"];

pub fn preset(name: &str, seed: u64) -> Result<ClimateScenario> {
    match name {
        "lofstad-like" => Ok(lofstad_like(seed)),
        "basement" => Ok(basement(seed)),
        "event-heavy" => Ok(event_heavy(seed)),
        other => Err(SynthError::InvalidScenario(format!(
            "unknown preset {other:?}; expected one of {PRESET_NAMES:?}"
        ))),
    }
}

fn base(name: &str, seed: u64, rooms: Vec<RoomConfig>) -> ClimateScenario {
    ClimateScenario {
        name: name.to_string(),
        seed,
        length_hours: 8760,
        start_local: "2023-01-01T00:00".to_string(),
        timezone: "Europe/Stockholm".to_string(),
        outdoor: OutdoorModel::default(),
        rooms,
        events: Vec::new(),
        co2_baseline: 480.0,
        co2_decay_hours: 2.0,
        sensor_noise: 0.05,
    }
}

fn room_05() -> RoomConfig {
    RoomConfig {
        id: "R05".into(),
        floor: "BF".into(),
        tau_hours: 240.0,
        temperature_offset: 0.0,
        ground_coupling: 0.75,
        ground_temperature: 8.0,
        daily_gain: 0.15,
        heating: None,
        humidity_source: 1.0,
        moisture_tau_hours: 72.0,
        evaporation: 0.85,
        daily_humidity: 1.5,
    }
}

fn room_3() -> RoomConfig {
    RoomConfig {
        id: "R3".into(),
        floor: "GF".into(),
        tau_hours: 96.0,
        temperature_offset: 1.5,
        ground_coupling: 0.0,
        ground_temperature: 0.0,
        daily_gain: 0.7,
        heating: None,
        humidity_source: 1.0,
        moisture_tau_hours: 48.0,
        evaporation: 0.0,
        daily_humidity: 3.0,
    }
}

fn room_103() -> RoomConfig {
    RoomConfig {
        id: "R103".into(),
        floor: "1F".into(),
        tau_hours: 120.0,
        temperature_offset: 2.0,
        ground_coupling: 0.0,
        ground_temperature: 0.0,
        daily_gain: 0.15,
        heating: Some(Heating {
            setpoint: 17.0,
            schedule_amplitude: 0.3,
            gain: 0.8,
        }),
        humidity_source: 1.0,
        moisture_tau_hours: 36.0,
        evaporation: 0.0,
        daily_humidity: 2.5,
    }
}

fn room_205() -> RoomConfig {
    RoomConfig {
        id: "R205".into(),
        floor: "2F".into(),
        tau_hours: 48.0,
        temperature_offset: -1.0,
        ground_coupling: 0.0,
        ground_temperature: 0.0,
        daily_gain: 1.0,
        heating: None,
        humidity_source: 0.5,
        moisture_tau_hours: 24.0,
        evaporation: 0.0,
        daily_humidity: 4.0,
    }
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Random gatherings: roughly one every `mean_gap_days`, daytime starts.
fn random_events(
    rng: &mut ChaCha8Rng,
    room: &str,
    length_hours: usize,
    mean_gap_days: f64,
    co2: (f64, f64),
    temperature: (f64, f64),
    humidity: (f64, f64),
) -> Vec<OccupancyEvent> {
    let mut out = Vec::new();
    let mut day = rng.random_range(0.0..mean_gap_days);
    loop {
        let start = day.floor() as usize * 24 + rng.random_range(9..15);
        let duration = rng.random_range(2..6);
        if start + duration >= length_hours {
            break;
        }
        out.push(OccupancyEvent {
            room: room.to_string(),
            start_hour: start,
            duration_hours: duration,
            co2_amplitude: rng.random_range(co2.0..co2.1).round(),
            temperature_delta: round2(rng.random_range(temperature.0..temperature.1)),
            humidity_delta: round2(rng.random_range(humidity.0..humidity.1)),
        });
        day += rng.random_range(0.5 * mean_gap_days..1.5 * mean_gap_days).max(1.0);
    }
    out
}

/// Four rooms modeled on the castle's basement, ground, first and second floors.
/// A handful of gatherings, including three large early-December ones.
pub fn lofstad_like(seed: u64) -> ClimateScenario {
    let mut s = base("lofstad-like", seed, vec![room_05(), room_3(), room_103(), room_205()]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x5eed));
    s.events = random_events(
        &mut rng,
        "R103",
        s.length_hours,
        30.0,
        (300.0, 1200.0),
        (0.2, 0.8),
        (1.0, 4.0),
    );
    // Dec 3, 9 and 10, mid-morning.
    for day in [336, 342, 343] {
        s.events.push(OccupancyEvent {
            room: "R103".into(),
            start_hour: day * 24 + 10,
            duration_hours: 5,
            co2_amplitude: 2500.0,
            temperature_delta: 1.5,
            humidity_delta: 8.0,
        });
        s.events.push(OccupancyEvent {
            room: "R3".into(),
            start_hour: day * 24 + 10,
            duration_hours: 5,
            co2_amplitude: 900.0,
            temperature_delta: -1.0,
            humidity_delta: 3.0,
        });
    }
    s.events.sort_by_key(|e| (e.start_hour, e.room.clone()));
    s
}

/// The basement room alone: strong ground coupling, long time constant, damp.
pub fn basement(seed: u64) -> ClimateScenario {
    base("basement", seed, vec![room_05()])
}

/// Heated room with frequent gatherings throughout the year.
pub fn event_heavy(seed: u64) -> ClimateScenario {
    let mut s = base("event-heavy", seed, vec![room_3(), room_103()]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0xe7e7));
    s.events = random_events(
        &mut rng,
        "R103",
        s.length_hours,
        4.0,
        (1200.0, 2600.0),
        (1.0, 2.0),
        (4.0, 9.0),
    );
    s.events.extend(random_events(
        &mut rng,
        "R3",
        s.length_hours,
        6.0,
        (500.0, 1200.0),
        (-1.2, -0.4),
        (1.0, 4.0),
    ));
    s.events.sort_by_key(|e| (e.start_hour, e.room.clone()));
    s
}
