use std::sync::Arc;

use chrono::{DateTime, Duration, TimeZone, Utc};
use proptest::prelude::*;
use twinforecast_core::features::{
    build_windows, calendar_features, encode_cyclical, split_windows, FeatureError, FeatureFrame, HolidayCalendar,
    MinMaxScaler, Segment,
};
use twinforecast_core::series::weather::WeatherVariable;
use twinforecast_core::series::{RegularSeries, SplitSpec};
use twinforecast_core::twin::Unit;

fn series(id: &str, unit: Unit, start: DateTime<Utc>, len: usize, f: impl Fn(usize) -> f64) -> RegularSeries {
    RegularSeries::new(id, unit, start, chrono_tz::UTC, (0..len).map(f).collect()).unwrap()
}

fn inputs(len: usize) -> (RegularSeries, Vec<RegularSeries>) {
    let t0 = Utc.with_ymd_and_hms(2023, 1, 2, 0, 0, 0).unwrap();
    let target = series("r103_temperature", Unit::Celsius, t0, len, |i| {
        17.0 + (i as f64 * 0.26).sin()
    });
    let weather = WeatherVariable::ALL
        .iter()
        .enumerate()
        .map(|(k, v)| series(v.series_id(), v.unit(), t0, len, move |i| (k * 10 + i % 37) as f64))
        .collect();
    (target, weather)
}

fn frame(len: usize, split: &SplitSpec) -> Arc<FeatureFrame> {
    let (t, w) = inputs(len);
    Arc::new(FeatureFrame::build(&t, &w, &HolidayCalendar::default(), split).unwrap())
}

/// Days since 1970-01-01 for a proleptic Gregorian date (Hinnant's algorithm).
fn days_from_civil(y: i64, m: i64, d: i64) -> i64 {
    let y = if m <= 2 { y - 1 } else { y };
    let era = y.div_euclid(400);
    let yoe = y - era * 400;
    let mp = (m + 9) % 12;
    let doy = (153 * mp + 2) / 5 + d - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146097 + doe - 719468
}

#[test]
fn saturday_midsummer_noon() {
    let t = Utc.with_ymd_and_hms(2023, 6, 24, 10, 0, 0).unwrap(); // 12:00 CEST
    let f = calendar_features(&[t], "Europe/Stockholm", &HolidayCalendar::swedish()).unwrap()[0];
    assert_eq!((f.is_weekend, f.weekday, f.hour, f.is_holiday), (1, 5, 12, 1));
    assert_eq!((days_from_civil(2023, 6, 24) + 3).rem_euclid(7), 5);
}

#[test]
fn holiday_membership_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("h.txt");
    std::fs::write(&path, "# custom\n2023-03-15 # made up\n").unwrap();
    let cal = HolidayCalendar::from_file(&path).unwrap();
    let t = Utc.with_ymd_and_hms(2023, 3, 15, 8, 0, 0).unwrap();
    let f = calendar_features(&[t, t + Duration::days(1)], "UTC", &cal).unwrap();
    assert_eq!((f[0].is_holiday, f[1].is_holiday), (1, 0));
}

#[test]
fn wind_direction_wraps() {
    let (a, b) = (
        encode_cyclical(360.0, 360.0).unwrap(),
        encode_cyclical(0.0, 360.0).unwrap(),
    );
    assert!((a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12);
}

#[test]
fn window_counts() {
    let f = frame(400, &SplitSpec::default());
    assert_eq!(build_windows(f.clone(), 0..192, 168, 24, 1).unwrap().len(), 1);
    assert_eq!(build_windows(f.clone(), 0..216, 168, 24, 1).unwrap().len(), 25);
    assert!(matches!(
        build_windows(f, 0..191, 168, 24, 1),
        Err(FeatureError::SegmentTooShort { len: 191, needed: 192 })
    ));
}

#[test]
fn window_contents_line_up() {
    let f = frame(400, &SplitSpec::default());
    let ds = build_windows(f.clone(), 10..250, 168, 24, 5).unwrap();
    let s = ds.sample(3);
    let c = f.num_covariates();
    assert_eq!(c, 14);
    assert_eq!(s.start(), 25);
    assert_eq!(s.past_target_raw()[0], f.target_raw()[25]);
    assert_eq!(s.future_target()[0], f.target_raw()[25 + 168]);
    assert_eq!(s.past_covariates().len(), 168 * c);
    assert_eq!(
        s.future_covariates()[..c],
        f.covariates()[(25 + 168) * c..(26 + 168) * c]
    );
    assert_eq!(s.forecast_timestamps()[0], f.timestamp(193));
    assert_eq!(ds.manifest().hash(), ds.manifest().hash());
    assert_eq!(ds.manifest().hash().len(), 64);
}

#[test]
fn scalers_fit_on_train_only() {
    let f = frame(1000, &SplitSpec::default());
    let train = f.segment_range(Segment::Train);
    let raw = &f.target_raw()[train.clone()];
    let lo = raw.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(f.scalers().target.min, lo);
    assert_eq!(f.scalers().target.max, hi);
    assert!(f.target_scaled()[train].iter().all(|v| (0.0..=1.0).contains(v)));
    assert!(f.degenerate_columns().is_empty());
}

#[test]
fn misaligned_and_missing_inputs() {
    let (t, mut w) = inputs(300);
    w.pop();
    assert!(matches!(
        FeatureFrame::build(&t, &w, &HolidayCalendar::default(), &SplitSpec::default()),
        Err(FeatureError::MissingCovariate(_))
    ));
    let (t, mut w) = inputs(300);
    let v = w[0].values()[24..].to_vec();
    w[0] = RegularSeries::new(
        w[0].series_id(),
        w[0].unit(),
        w[0].start() + Duration::hours(24),
        chrono_tz::UTC,
        v,
    )
    .unwrap();
    let f = FeatureFrame::build(&t, &w, &HolidayCalendar::default(), &SplitSpec::default()).unwrap();
    assert_eq!(f.len(), 276);
    assert_eq!(f.target_raw()[0], t.values()[24]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn calendar_matches_civil_oracle(secs in 0i64..3_000_000_000, offset_h in 0i64..12) {
        let t = Utc.timestamp_opt(secs, 0).unwrap();
        // Etc/GMT-N is UTC+N.
        let tz = format!("Etc/GMT-{offset_h}");
        let f = calendar_features(&[t], &tz, &HolidayCalendar::default()).unwrap()[0];
        let local = secs + offset_h * 3600;
        let days = local.div_euclid(86_400);
        let weekday = (days + 3).rem_euclid(7) as u32;
        prop_assert_eq!(f.weekday, weekday);
        prop_assert_eq!(f.hour, (local.rem_euclid(86_400) / 3600) as u32);
        prop_assert_eq!(f.is_weekend, (weekday >= 5) as u8);
    }

    #[test]
    fn cyclical_on_unit_circle(v in -1e6f64..1e6, p in 1e-3f64..1e4) {
        let (s, c) = encode_cyclical(v, p).unwrap();
        prop_assert!((s * s + c * c - 1.0).abs() <= 1e-9);
        let angle = 2.0 * std::f64::consts::PI * v / p;
        prop_assert!((s - angle.sin()).abs() <= 1e-12 && (c - angle.cos()).abs() <= 1e-12);
    }

    #[test]
    fn scaler_round_trip(train in prop::collection::vec(-1e4f64..1e4, 2..50), x in -1e6f64..1e6) {
        let s = MinMaxScaler::fit(&train).unwrap();
        prop_assume!(!s.degenerate);
        let lo = train.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = train.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(s.transform(lo), 0.0);
        prop_assert_eq!(s.transform(hi), 1.0);
        for &t in &train {
            let y = s.transform(t);
            prop_assert!((0.0..=1.0).contains(&y));
        }
        prop_assert!((s.transform(x) - (x - lo) / (hi - lo)).abs() <= 1e-9 * (1.0 + s.transform(x).abs()));
        prop_assert!((s.inverse(s.transform(x)) - x).abs() <= 1e-9 * x.abs().max(1.0));
    }

    #[test]
    fn no_window_leaks_across_splits(
        len in 600usize..1400,
        train in 0.5f64..0.7,
        valid_share in 0.3f64..0.7,
        stride in 1usize..30,
    ) {
        let valid = (1.0 - train) * valid_share;
        let spec = SplitSpec::new(train, valid, 1.0 - train - valid).unwrap();
        let f = frame(len, &spec);
        let (a, b) = f.boundaries();
        let sets = split_windows(f.clone(), 96, 24, stride);
        let segs = [(0, a), (a, b), (b, len)];
        match sets {
            Ok(sets) => {
                for (ds, &(lo, hi)) in sets.iter().zip(&segs) {
                    prop_assert_eq!(ds.len(), (hi - lo - 120) / stride + 1);
                    for s in ds.samples() {
                        prop_assert!(s.start() >= lo && s.start() + 120 <= hi);
                    }
                }
            }
            Err(FeatureError::SegmentTooShort { len: l, .. }) => {
                prop_assert!(segs.iter().any(|&(lo, hi)| hi - lo == l && l < 120));
            }
            Err(e) => prop_assert!(false, "{e}"),
        }
    }
}
