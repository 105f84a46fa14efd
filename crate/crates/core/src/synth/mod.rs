//! Deterministic synthetic building climate: outdoor weather, first-order
//! thermal lag per room, heating override, moisture balance, occupancy events.

use std::f64::consts::TAU;

use chrono::{DateTime, Duration, NaiveDateTime, Timelike, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::series::weather::WeatherVariable;
use crate::series::{parse_timezone, RegularSeries};
use crate::twin::Unit;

mod presets;

pub use presets::{basement, event_heavy, lofstad_like, preset, PRESET_NAMES};

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}

pub type Result<T, E = SynthError> = std::result::Result<T, E>;

/// Saturation vapour pressure over water in hPa (Magnus form, Sonntag 1990
/// constants: 6.112 hPa, 17.62, 243.12 °C).
pub fn saturation_vapor_pressure(t_celsius: f64) -> f64 {
    6.112 * (17.62 * t_celsius / (243.12 + t_celsius)).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutdoorModel {
    /// Annual mean dry-bulb temperature, °C.
    pub mean_temperature: f64,
    pub annual_amplitude: f64,
    /// Hour of year with the coldest annual-cycle value.
    pub coldest_hour_of_year: f64,
    pub daily_amplitude: f64,
    /// Local hour of the daily maximum.
    pub warmest_hour: f64,
    /// Marginal standard deviation of the AR(1) weather noise, °C.
    pub noise_std: f64,
    /// Hourly AR(1) coefficient of the weather noise.
    pub noise_persistence: f64,
    /// Mean dew-point depression, °C.
    pub dew_point_depression: f64,
    /// Probability that a rain spell starts in any given dry hour.
    pub rain_start_probability: f64,
    pub rain_mean_hours: f64,
    pub rain_mean_intensity_mm: f64,
    pub wind_mean_speed: f64,
    pub latitude_deg: f64,
    pub clear_sky_irradiance: f64,
}

impl Default for OutdoorModel {
    fn default() -> Self {
        Self {
            mean_temperature: 7.0,
            annual_amplitude: 10.0,
            coldest_hour_of_year: 480.0,
            daily_amplitude: 3.0,
            warmest_hour: 15.0,
            noise_std: 2.5,
            noise_persistence: 0.98,
            dew_point_depression: 3.0,
            rain_start_probability: 0.01,
            rain_mean_hours: 5.0,
            rain_mean_intensity_mm: 0.8,
            wind_mean_speed: 3.5,
            latitude_deg: 58.6,
            clear_sky_irradiance: 900.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Heating {
    pub setpoint: f64,
    /// Peak-to-mean amplitude of the daily setpoint schedule, °C.
    pub schedule_amplitude: f64,
    /// Fraction of the setpoint deficit removed each hour.
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomConfig {
    pub id: String,
    pub floor: String,
    /// Thermal time constant, hours.
    pub tau_hours: f64,
    /// Added to the outdoor temperature to form the free-running equilibrium, °C.
    #[serde(default)]
    pub temperature_offset: f64,
    /// Share of the equilibrium tied to ground temperature instead of outdoor air.
    #[serde(default)]
    pub ground_coupling: f64,
    #[serde(default)]
    pub ground_temperature: f64,
    /// Amplitude of the daily internal-gain swing added to the room temperature, °C.
    #[serde(default)]
    pub daily_gain: f64,
    #[serde(default)]
    pub heating: Option<Heating>,
    /// Moisture added on top of outdoor vapour pressure, hPa.
    #[serde(default)]
    pub humidity_source: f64,
    /// Moisture exchange time constant, hours.
    pub moisture_tau_hours: f64,
    /// Weight in [0, 1] pulling indoor vapour pressure toward saturation at
    /// room temperature, e.g. evaporation from a floor laid on soil.
    #[serde(default)]
    pub evaporation: f64,
    /// Amplitude of the daily relative humidity swing, percentage points.
    /// Peaks at night, opposite to the temperature swing.
    #[serde(default)]
    pub daily_humidity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OccupancyEvent {
    pub room: String,
    /// Hours since scenario start.
    pub start_hour: usize,
    pub duration_hours: usize,
    pub co2_amplitude: f64,
    pub temperature_delta: f64,
    /// Relative humidity added at the plateau, percentage points.
    pub humidity_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClimateScenario {
    pub name: String,
    pub seed: u64,
    pub length_hours: usize,
    /// Local wall-clock start, `YYYY-MM-DDTHH:MM`.
    pub start_local: String,
    pub timezone: String,
    pub outdoor: OutdoorModel,
    pub rooms: Vec<RoomConfig>,
    #[serde(default)]
    pub events: Vec<OccupancyEvent>,
    pub co2_baseline: f64,
    /// Decay time constant after an event ends, hours.
    pub co2_decay_hours: f64,
    /// Gaussian sensor noise on indoor temperature (°C); RH and CO2 scale from it.
    pub sensor_noise: f64,
}

impl ClimateScenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Self = serde_json::from_str(text).map_err(|e| SynthError::InvalidScenario(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn start(&self) -> Result<(DateTime<Utc>, chrono_tz::Tz)> {
        let tz = parse_timezone(&self.timezone).map_err(|e| SynthError::InvalidScenario(e.to_string()))?;
        let naive = NaiveDateTime::parse_from_str(&self.start_local, "%Y-%m-%dT%H:%M")
            .map_err(|e| SynthError::InvalidScenario(format!("start_local: {e}")))?;
        let local = naive
            .and_local_timezone(tz)
            .earliest()
            .ok_or_else(|| SynthError::InvalidScenario("start_local does not exist".into()))?;
        if local.minute() != 0 {
            return Err(SynthError::InvalidScenario("start_local must be on the hour".into()));
        }
        Ok((local.with_timezone(&Utc), tz))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SynthError::InvalidScenario(m));
        if self.length_hours == 0 {
            return bad("length_hours must be positive".into());
        }
        self.start()?;
        let o = &self.outdoor;
        let finite = [
            o.mean_temperature,
            o.annual_amplitude,
            o.daily_amplitude,
            o.noise_std,
            o.dew_point_depression,
            self.co2_baseline,
            self.sensor_noise,
        ];
        if finite.iter().any(|v| !v.is_finite()) || o.noise_std < 0.0 || self.sensor_noise < 0.0 {
            return bad("outdoor parameters must be finite and noise non-negative".into());
        }
        if !(0.0..1.0).contains(&o.noise_persistence) {
            return bad("noise_persistence must be in [0, 1)".into());
        }
        if !(0.0..=1.0).contains(&o.rain_start_probability) || o.rain_mean_hours <= 0.0 {
            return bad("rain parameters out of range".into());
        }
        if !(self.co2_decay_hours > 0.0) {
            return bad("co2_decay_hours must be positive".into());
        }
        let mut ids = std::collections::BTreeSet::new();
        for r in &self.rooms {
            if !ids.insert(r.id.as_str()) {
                return bad(format!("duplicate room {}", r.id));
            }
            if !(r.tau_hours > 0.0) || !(r.moisture_tau_hours > 0.0) {
                return bad(format!("room {}: time constants must be positive", r.id));
            }
            if !(0.0..=1.0).contains(&r.ground_coupling) || !(0.0..=1.0).contains(&r.evaporation) {
                return bad(format!(
                    "room {}: ground_coupling and evaporation must be in [0, 1]",
                    r.id
                ));
            }
            if let Some(h) = &r.heating {
                if !(-40.0..=60.0).contains(&h.setpoint) || !(0.0..=1.0).contains(&h.gain) {
                    return bad(format!("room {}: heating setpoint or gain out of range", r.id));
                }
            }
        }
        for (i, e) in self.events.iter().enumerate() {
            if !ids.contains(e.room.as_str()) {
                return bad(format!("event {i} targets unknown room {}", e.room));
            }
            if e.duration_hours < 1 {
                return bad(format!("event {i}: duration must be at least one hour"));
            }
            let amps = [e.co2_amplitude, e.temperature_delta, e.humidity_delta];
            if amps.iter().any(|v| !v.is_finite()) {
                return bad(format!("event {i}: amplitudes must be finite"));
            }
        }
        Ok(())
    }

    /// Hours after an event ends until its decay falls below 5 % of the plateau.
    pub fn decay_tail_hours(&self) -> usize {
        (self.co2_decay_hours * 20f64.ln()).ceil() as usize
    }
}

/// Per-room output series.
#[derive(Debug, Clone, PartialEq)]
pub struct RoomSeries {
    pub room: String,
    pub temperature: RegularSeries,
    pub relative_humidity: RegularSeries,
    pub co2: RegularSeries,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    /// The seven meteorological variables in connector order.
    pub outdoor: Vec<RegularSeries>,
    pub rooms: Vec<RoomSeries>,
}

impl SyntheticData {
    pub fn room(&self, id: &str) -> Option<&RoomSeries> {
        self.rooms.iter().find(|r| r.room == id)
    }

    pub fn all_series(&self) -> Vec<&RegularSeries> {
        let mut out: Vec<&RegularSeries> = self.outdoor.iter().collect();
        for r in &self.rooms {
            out.extend([&r.temperature, &r.relative_humidity, &r.co2]);
        }
        out
    }
}

/// Ground-truth window of one injected event, tail included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventAnnotation {
    pub room: String,
    pub start_index: usize,
    /// Exclusive.
    pub end_index: usize,
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
    pub co2_amplitude: f64,
    pub temperature_delta: f64,
    pub humidity_delta: f64,
}

pub fn perturbation_report(scenario: &ClimateScenario) -> Result<Vec<EventAnnotation>> {
    scenario.validate()?;
    let (start, _) = scenario.start()?;
    let tail = scenario.decay_tail_hours();
    Ok(scenario
        .events
        .iter()
        .filter(|e| e.start_hour < scenario.length_hours)
        .map(|e| {
            let end = (e.start_hour + e.duration_hours + tail).min(scenario.length_hours);
            EventAnnotation {
                room: e.room.clone(),
                start_index: e.start_hour,
                end_index: end,
                start: start + Duration::hours(e.start_hour as i64),
                end: start + Duration::hours(end as i64),
                co2_amplitude: e.co2_amplitude,
                temperature_delta: e.temperature_delta,
                humidity_delta: e.humidity_delta,
            }
        })
        .collect())
}

/// Plateau of 1 during the event, then `exp(-k / tau)` for k hours after it.
fn event_shape(scenario: &ClimateScenario, e: &OccupancyEvent) -> Vec<(usize, f64)> {
    let tail = scenario.decay_tail_hours();
    let end = e.start_hour + e.duration_hours;
    (e.start_hour..end + tail)
        .filter(|&t| t < scenario.length_hours)
        .map(|t| {
            let w = if t < end {
                1.0
            } else {
                (-((t + 1 - end) as f64) / scenario.co2_decay_hours).exp()
            };
            (t, w)
        })
        .collect()
}

struct Outdoor {
    temperature: Vec<f64>,
    dew_point: Vec<f64>,
    relative_humidity: Vec<f64>,
    precipitation: Vec<f64>,
    wind_speed: Vec<f64>,
    wind_direction: Vec<f64>,
    irradiance: Vec<f64>,
}

fn ar1(rng: &mut ChaCha8Rng, n: usize, phi: f64, std: f64) -> Vec<f64> {
    let innov = (1.0 - phi * phi).sqrt() * std;
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut x = if std > 0.0 { normal.sample(rng) * std } else { 0.0 };
    (0..n)
        .map(|_| {
            let v = x;
            if std > 0.0 {
                x = phi * x + innov * normal.sample(rng);
            }
            v
        })
        .collect()
}

fn simulate_outdoor(
    s: &ClimateScenario,
    local_hours: &[f64],
    hour_of_year: &[f64],
    day_of_year: &[f64],
    rng: &mut ChaCha8Rng,
) -> Outdoor {
    let m = &s.outdoor;
    let n = s.length_hours;
    let quiet = m.noise_std == 0.0;
    let temp_noise = ar1(rng, n, m.noise_persistence, m.noise_std);
    let dep_noise = ar1(rng, n, 0.9, if quiet { 0.0 } else { 1.0 });
    let cloud = ar1(rng, n, 0.95, if quiet { 0.0 } else { 1.0 });
    let wind_noise = ar1(rng, n, 0.9, if quiet { 0.0 } else { 1.2 });
    let dir_noise = ar1(rng, n, 0.97, if quiet { 0.0 } else { 60.0 });

    let mut out = Outdoor {
        temperature: Vec::with_capacity(n),
        dew_point: Vec::with_capacity(n),
        relative_humidity: Vec::with_capacity(n),
        precipitation: Vec::with_capacity(n),
        wind_speed: Vec::with_capacity(n),
        wind_direction: Vec::with_capacity(n),
        irradiance: Vec::with_capacity(n),
    };
    let exp_len = Exp::new(1.0 / m.rain_mean_hours).expect("positive rate");
    let exp_mm = Exp::new(1.0 / m.rain_mean_intensity_mm.max(1e-9)).expect("positive rate");
    let mut rain_left = 0.0f64;
    let mut rain_rate = 0.0;
    let lat = m.latitude_deg.to_radians();
    for t in 0..n {
        let annual = -m.annual_amplitude * (TAU * (hour_of_year[t] - m.coldest_hour_of_year) / 8760.0).cos();
        let daily_phase = (TAU * (local_hours[t] - m.warmest_hour) / 24.0).cos();
        let temperature = m.mean_temperature + annual + m.daily_amplitude * daily_phase + temp_noise[t];

        let depression = (m.dew_point_depression * (1.0 + 0.5 * daily_phase) + dep_noise[t]).max(0.2);
        let dew = temperature - depression;
        let rh = (100.0 * saturation_vapor_pressure(dew) / saturation_vapor_pressure(temperature)).clamp(0.0, 100.0);

        if !quiet && rain_left <= 0.0 && rng.random::<f64>() < m.rain_start_probability {
            rain_left = exp_len.sample(rng).max(1.0);
            rain_rate = exp_mm.sample(rng);
        }
        let precipitation = if rain_left > 0.0 {
            rain_left -= 1.0;
            ((rain_rate * (0.5 + rng.random::<f64>())) * 10.0).round() / 10.0
        } else {
            0.0
        };

        let wind = (m.wind_mean_speed + wind_noise[t] + 0.8 * daily_phase).max(0.0);
        let direction = (225.0 + dir_noise[t]).rem_euclid(360.0);

        let decl = 23.44f64.to_radians() * (TAU * (284.0 + day_of_year[t]) / 365.0).sin();
        let hour_angle = (15.0 * (local_hours[t] + 0.5 - 12.0)).to_radians();
        let sin_elev = lat.sin() * decl.sin() + lat.cos() * decl.cos() * hour_angle.cos();
        let cloudiness = 1.0 / (1.0 + (-cloud[t]).exp());
        let attenuation = if precipitation > 0.0 {
            0.2
        } else {
            1.0 - 0.75 * cloudiness.powi(3)
        };
        let irradiance = (m.clear_sky_irradiance * sin_elev.max(0.0) * attenuation).max(0.0);

        out.temperature.push(temperature);
        out.dew_point.push(dew);
        out.relative_humidity.push(rh);
        out.precipitation.push(precipitation);
        out.wind_speed.push(wind);
        out.wind_direction.push(direction);
        out.irradiance.push(irradiance);
    }
    out
}

struct RoomTraces {
    temperature: Vec<f64>,
    relative_humidity: Vec<f64>,
    co2: Vec<f64>,
}

fn simulate_room(
    s: &ClimateScenario,
    room: &RoomConfig,
    outdoor: &Outdoor,
    local_hours: &[f64],
    rng: &mut ChaCha8Rng,
) -> RoomTraces {
    let n = s.length_hours;
    let alpha = 1.0 - (-1.0 / room.tau_hours).exp();
    let beta = 1.0 - (-1.0 / room.moisture_tau_hours).exp();
    let equilibrium = |t: usize| {
        (1.0 - room.ground_coupling) * (outdoor.temperature[t] + room.temperature_offset)
            + room.ground_coupling * room.ground_temperature
    };

    let mut temp_bump = vec![0.0; n];
    let mut rh_bump = vec![0.0; n];
    let mut co2_bump = vec![0.0; n];
    for e in s.events.iter().filter(|e| e.room == room.id) {
        for (t, w) in event_shape(s, e) {
            temp_bump[t] += w * e.temperature_delta;
            rh_bump[t] += w * e.humidity_delta;
            co2_bump[t] += w * e.co2_amplitude;
        }
    }

    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let mut sample = |scale: f64| if scale > 0.0 { scale * noise.sample(rng) } else { 0.0 };

    let mut state = equilibrium(0);
    let mut vapor = (1.0 - room.evaporation) * (saturation_vapor_pressure(outdoor.dew_point[0]) + room.humidity_source)
        + room.evaporation * saturation_vapor_pressure(state);
    let mut out = RoomTraces {
        temperature: Vec::with_capacity(n),
        relative_humidity: Vec::with_capacity(n),
        co2: Vec::with_capacity(n),
    };
    for t in 0..n {
        if t > 0 {
            state += alpha * (equilibrium(t) - state);
        }
        let day_phase = (TAU * (local_hours[t] - 14.0) / 24.0).cos();
        if let Some(h) = &room.heating {
            let schedule = h.setpoint + h.schedule_amplitude * day_phase;
            if state < h.setpoint {
                state += h.gain * (schedule - state);
            }
        }
        let temperature = state + room.daily_gain * day_phase + temp_bump[t];

        let exchanged = saturation_vapor_pressure(outdoor.dew_point[t]) + room.humidity_source;
        let target_vapor = (1.0 - room.evaporation) * exchanged + room.evaporation * saturation_vapor_pressure(state);
        vapor += beta * (target_vapor - vapor);
        let rh = 100.0 * vapor / saturation_vapor_pressure(temperature) - room.daily_humidity * day_phase + rh_bump[t];

        out.temperature.push(temperature + sample(s.sensor_noise));
        out.relative_humidity
            .push((rh + sample(4.0 * s.sensor_noise)).clamp(0.0, 100.0));
        out.co2
            .push((s.co2_baseline + co2_bump[t] + sample(200.0 * s.sensor_noise)).max(300.0));
    }
    out
}

/// Runs the scenario. Same scenario, same output, bit for bit.
pub fn generate(scenario: &ClimateScenario) -> Result<SyntheticData> {
    scenario.validate()?;
    let (start, tz) = scenario.start()?;
    let n = scenario.length_hours;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);

    let mut local_hours = Vec::with_capacity(n);
    let mut hour_of_year = Vec::with_capacity(n);
    let mut day_of_year = Vec::with_capacity(n);
    for t in 0..n {
        let local = (start + Duration::hours(t as i64)).with_timezone(&tz);
        let hour = local.hour() as f64;
        let doy = chrono::Datelike::ordinal0(&local) as f64;
        local_hours.push(hour);
        hour_of_year.push(doy * 24.0 + hour);
        day_of_year.push(doy);
    }

    let outdoor = simulate_outdoor(scenario, &local_hours, &hour_of_year, &day_of_year, &mut rng);
    let make = |id: &str, unit: Unit, values: Vec<f64>| {
        RegularSeries::new(id, unit, start, tz, values).map_err(|e| SynthError::InvalidScenario(e.to_string()))
    };

    let mut rooms = Vec::with_capacity(scenario.rooms.len());
    for room in &scenario.rooms {
        // Each room draws from its own stream so adding a room never changes the others.
        let mut room_rng = ChaCha8Rng::seed_from_u64(scenario.seed ^ fnv1a(&room.id));
        let traces = simulate_room(scenario, room, &outdoor, &local_hours, &mut room_rng);
        rooms.push(RoomSeries {
            room: room.id.clone(),
            temperature: make(&format!("{}_temperature", room.id), Unit::Celsius, traces.temperature)?,
            relative_humidity: make(
                &format!("{}_relative_humidity", room.id),
                Unit::PercentRh,
                traces.relative_humidity,
            )?,
            co2: make(&format!("{}_co2", room.id), Unit::Ppm, traces.co2)?,
        });
    }

    let columns = [
        outdoor.temperature,
        outdoor.relative_humidity,
        outdoor.dew_point,
        outdoor.precipitation,
        outdoor.wind_speed,
        outdoor.wind_direction,
        outdoor.irradiance,
    ];
    let outdoor = WeatherVariable::ALL
        .iter()
        .zip(columns)
        .map(|(v, values)| make(v.series_id(), v.unit(), values))
        .collect::<Result<_>>()?;
    Ok(SyntheticData { outdoor, rooms })
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}
