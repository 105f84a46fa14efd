use twinforecast_core::synth::{
    basement, event_heavy, generate, lofstad_like, perturbation_report, preset, saturation_vapor_pressure,
    ClimateScenario, OccupancyEvent, OutdoorModel, RoomConfig, SynthError,
};

fn variance(x: &[f64]) -> f64 {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64
}

fn acf(x: &[f64], lag: usize) -> f64 {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    let num: f64 = (lag..x.len()).map(|i| (x[i] - m) * (x[i - lag] - m)).sum();
    num / (variance(x) * x.len() as f64)
}

fn plain_room(id: &str, tau: f64) -> RoomConfig {
    RoomConfig {
        id: id.into(),
        floor: "GF".into(),
        tau_hours: tau,
        temperature_offset: 0.0,
        ground_coupling: 0.0,
        ground_temperature: 0.0,
        daily_gain: 0.0,
        heating: None,
        humidity_source: 0.0,
        moisture_tau_hours: 12.0,
        evaporation: 0.0,
        daily_humidity: 0.0,
    }
}

fn quiet(rooms: Vec<RoomConfig>, hours: usize) -> ClimateScenario {
    let mut s = lofstad_like(1);
    s.length_hours = hours;
    s.outdoor = OutdoorModel {
        noise_std: 0.0,
        ..OutdoorModel::default()
    };
    s.rooms = rooms;
    s.events.clear();
    s.sensor_noise = 0.0;
    s
}

#[test]
fn magnus_reference_points() {
    assert!((saturation_vapor_pressure(0.0) - 6.112).abs() < 1e-12);
    // Tabulated saturation pressure at 20 °C is 23.39 hPa.
    assert!((saturation_vapor_pressure(20.0) - 23.39).abs() < 0.1);
}

#[test]
fn vanishing_time_constant_tracks_outdoor() {
    let s = quiet(vec![plain_room("X", 1e-9)], 500);
    let d = generate(&s).unwrap();
    let outdoor = d.outdoor[0].values();
    let indoor = d.room("X").unwrap().temperature.values();
    for (a, b) in outdoor.iter().zip(indoor) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn same_seed_same_bits() {
    let a = generate(&lofstad_like(7)).unwrap();
    let b = generate(&lofstad_like(7)).unwrap();
    assert_eq!(a, b);
    let c = generate(&lofstad_like(8)).unwrap();
    assert_ne!(a.outdoor[0].values(), c.outdoor[0].values());
}

#[test]
fn heated_room_holds_setpoint_in_winter() {
    let d = generate(&lofstad_like(7)).unwrap();
    let t = d.room("R103").unwrap().temperature.values();
    // January-February and December are heating months.
    for range in [0..59 * 24, 334 * 24..8760] {
        let seg = &t[range];
        let mean = seg.iter().sum::<f64>() / seg.len() as f64;
        assert!((mean - 17.0).abs() <= 0.5, "mean {mean}");
    }
}

#[test]
fn event_peak_reaches_three_thousand() {
    let mut s = quiet(vec![plain_room("R103", 120.0)], 400);
    s.co2_baseline = 500.0;
    s.events.push(OccupancyEvent {
        room: "R103".into(),
        start_hour: 100,
        duration_hours: 4,
        co2_amplitude: 2500.0,
        temperature_delta: 1.5,
        humidity_delta: 5.0,
    });
    let d = generate(&s).unwrap();
    let co2 = d.room("R103").unwrap().co2.values();
    let peak = co2.iter().cloned().fold(f64::MIN, f64::max);
    assert!((peak - 3000.0).abs() < 1.0, "peak {peak}");
}

#[test]
fn default_scenarios_have_physical_shape() {
    for s in [lofstad_like(7), basement(7), event_heavy(7)] {
        let d = generate(&s).unwrap();
        let outdoor_var = variance(d.outdoor[0].values());
        for (room, cfg) in d.rooms.iter().zip(&s.rooms) {
            let t = room.temperature.values();
            let rh = room.relative_humidity.values();
            assert!(rh.iter().all(|v| (0.0..=100.0).contains(v)));
            if cfg.tau_hours >= 24.0 {
                assert!(variance(t) < outdoor_var, "{} {}", s.name, room.room);
            }
            for x in [t, rh] {
                assert!(acf(x, 24) > acf(x, 13), "{} {}: daily peak missing", s.name, room.room);
            }
        }
    }
}

#[test]
fn basement_stays_damp() {
    let d = generate(&basement(7)).unwrap();
    let rh = d.rooms[0].relative_humidity.values();
    let damp = rh.iter().filter(|v| **v >= 90.0).count() as f64 / rh.len() as f64;
    assert!(damp > 0.75, "only {damp:.2} of hours at or above 90 %");
}

#[test]
fn annotations_match_injected_pulses() {
    assert!(perturbation_report(&basement(7)).unwrap().is_empty());
    let s = event_heavy(7);
    let notes = perturbation_report(&s).unwrap();
    assert_eq!(notes.len(), s.events.len());

    let mut quiet_s = quiet(vec![plain_room("R103", 120.0)], 2000);
    quiet_s.events = s
        .events
        .iter()
        .filter(|e| e.room == "R103" && e.start_hour < 1900)
        .cloned()
        .collect();
    for e in &mut quiet_s.events {
        e.room = "R103".into();
    }
    let d = generate(&quiet_s).unwrap();
    let co2 = d.room("R103").unwrap().co2.values();
    let notes = perturbation_report(&quiet_s).unwrap();
    let mut inside = vec![false; co2.len()];
    for n in &notes {
        for flag in &mut inside[n.start_index..n.end_index] {
            *flag = true;
        }
        assert!(co2[n.start_index] > quiet_s.co2_baseline + 0.9 * n.co2_amplitude);
    }
    for (i, &v) in co2.iter().enumerate() {
        let excess = v - quiet_s.co2_baseline;
        if inside[i] {
            assert!(excess > 0.0);
        } else {
            assert!(excess.abs() < 1e-9, "hour {i} outside annotations has excess {excess}");
        }
    }
}

#[test]
fn scenario_files_round_trip_and_validate() {
    let s = lofstad_like(7);
    assert_eq!(ClimateScenario::from_json(&s.to_json()).unwrap(), s);
    assert!(matches!(preset("attic", 1), Err(SynthError::InvalidScenario(_))));
    let mut bad = s.clone();
    bad.rooms[0].tau_hours = 0.0;
    assert!(matches!(generate(&bad), Err(SynthError::InvalidScenario(_))));
    let mut bad = s.clone();
    bad.events[0].duration_hours = 0;
    assert!(generate(&bad).is_err());
    let mut bad = s;
    bad.events[0].room = "R999".into();
    assert!(generate(&bad).is_err());
}
