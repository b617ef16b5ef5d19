//! Weather time series: CSV ingestion, stage resampling, and a synthetic
//! tropical-day generator used when no recorded data is available.

use std::io::{Read, Write};
use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime, Timelike};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// One recorded sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeatherSample {
    pub timestamp: NaiveDateTime,
    /// Outdoor temperature, °C.
    pub temp_c: f64,
    /// Outdoor relative humidity, fraction in [0, 1].
    pub rh: f64,
    /// Solar radiation density, W/m², when recorded.
    pub solar_wm2: Option<f64>,
}

/// Samples of a single day, timestamps strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherDay {
    pub date: NaiveDate,
    pub samples: Vec<WeatherSample>,
}

/// A collection of day-indexed weather records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherSeries {
    pub days: Vec<WeatherDay>,
}

/// Per-stage aggregation of one day.
#[derive(Debug, Clone, PartialEq)]
pub struct StageDay {
    pub temp_c: Vec<f64>,
    pub rh: Vec<f64>,
    pub solar_wm2: Vec<f64>,
}

impl WeatherSeries {
    pub fn validate(&self) -> Result<()> {
        if self.days.is_empty() {
            return Err(CoreError::EmptyData("weather series has no days".into()));
        }
        for day in &self.days {
            if day.samples.is_empty() {
                return Err(CoreError::EmptyData(format!("day {} has no samples", day.date)));
            }
            for pair in day.samples.windows(2) {
                if pair[1].timestamp <= pair[0].timestamp {
                    return Err(CoreError::Corrupt(format!(
                        "timestamps not strictly increasing on {}",
                        day.date
                    )));
                }
            }
        }
        Ok(())
    }

    /// Average each day into `stages` equal windows (mean over the window;
    /// empty windows take the nearest sample by window center).
    pub fn resample(&self, stages: usize) -> Result<Vec<StageDay>> {
        self.validate()?;
        let window_s = 86_400.0 / stages as f64;
        let mut out = Vec::with_capacity(self.days.len());
        for day in &self.days {
            let mut temp = vec![0.0; stages];
            let mut rh = vec![0.0; stages];
            let mut solar = vec![0.0; stages];
            let mut counts = vec![0usize; stages];
            for s in &day.samples {
                let sec = s.timestamp.num_seconds_from_midnight() as f64;
                let w = ((sec / window_s) as usize).min(stages - 1);
                temp[w] += s.temp_c;
                rh[w] += s.rh;
                solar[w] += s.solar_wm2.unwrap_or(0.0);
                counts[w] += 1;
            }
            for w in 0..stages {
                if counts[w] > 0 {
                    let n = counts[w] as f64;
                    temp[w] /= n;
                    rh[w] /= n;
                    solar[w] /= n;
                } else {
                    let center = (w as f64 + 0.5) * window_s;
                    let nearest = day
                        .samples
                        .iter()
                        .min_by(|a, b| {
                            let da = (a.timestamp.num_seconds_from_midnight() as f64 - center).abs();
                            let db = (b.timestamp.num_seconds_from_midnight() as f64 - center).abs();
                            da.total_cmp(&db)
                        })
                        .expect("non-empty day");
                    temp[w] = nearest.temp_c;
                    rh[w] = nearest.rh;
                    solar[w] = nearest.solar_wm2.unwrap_or(0.0);
                }
            }
            out.push(StageDay { temp_c: temp, rh, solar_wm2: solar });
        }
        Ok(out)
    }
}

/// Shape parameters of the synthetic generator: a sinusoidal diurnal
/// temperature with anti-phase relative humidity plus seeded noise.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthWeatherProfile {
    pub temp_lo: f64,
    pub temp_hi: f64,
    pub rh_lo: f64,
    pub rh_hi: f64,
    /// Hour of day at which temperature peaks (and RH bottoms out).
    pub peak_hour: f64,
    /// Per-sample temperature noise, °C (one standard deviation).
    pub temp_noise_sd: f64,
    /// Per-sample relative-humidity noise (fraction).
    pub rh_noise_sd: f64,
    /// Whole-day temperature offset, °C (one standard deviation).
    pub day_offset_sd: f64,
    /// Peak solar radiation density on the wall, W/m².
    pub solar_peak_wm2: f64,
    pub stages_per_day: usize,
}

impl Default for SynthWeatherProfile {
    fn default() -> Self {
        Self {
            temp_lo: 22.0,
            temp_hi: 34.0,
            rh_lo: 0.40,
            rh_hi: 1.00,
            peak_hour: 14.0,
            temp_noise_sd: 0.25,
            rh_noise_sd: 0.02,
            day_offset_sd: 0.3,
            solar_peak_wm2: 60.0,
            stages_per_day: 48,
        }
    }
}

impl SynthWeatherProfile {
    /// Deterministic diurnal solar profile: zero at night, a half-sine hump
    /// between 7:00 and 19:00 peaking at `solar_peak_wm2`.
    pub fn solar_at_hour(&self, hour: f64) -> f64 {
        if !(7.0..=19.0).contains(&hour) {
            return 0.0;
        }
        self.solar_peak_wm2 * (std::f64::consts::PI * (hour - 7.0) / 12.0).sin()
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; two uniforms per draw keeps the stream simple.
    let u1: f64 = rng.random::<f64>().max(1e-12);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Generate `n_days` of stage-resolution synthetic weather. Byte-identical
/// output for equal seeds.
pub fn synth_weather(profile: &SynthWeatherProfile, n_days: usize, seed: u64) -> WeatherSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stages = profile.stages_per_day;
    let temp_mid = 0.5 * (profile.temp_lo + profile.temp_hi);
    let temp_amp = 0.5 * (profile.temp_hi - profile.temp_lo);
    let rh_mid = 0.5 * (profile.rh_lo + profile.rh_hi);
    let rh_amp = 0.5 * (profile.rh_hi - profile.rh_lo);
    let start = NaiveDate::from_ymd_opt(2024, 9, 1).expect("valid date");

    let mut days = Vec::with_capacity(n_days);
    for d in 0..n_days {
        let date = start + chrono::Days::new(d as u64);
        let day_offset = profile.day_offset_sd * gaussian(&mut rng);
        let mut samples = Vec::with_capacity(stages);
        for w in 0..stages {
            let hour = 24.0 * w as f64 / stages as f64;
            // +1 at the configured peak hour, -1 twelve hours away.
            let phase = (std::f64::consts::TAU * (hour - profile.peak_hour) / 24.0).cos();
            let temp = (temp_mid + temp_amp * phase + day_offset
                + profile.temp_noise_sd * gaussian(&mut rng))
            .clamp(profile.temp_lo, profile.temp_hi);
            let rh = (rh_mid - rh_amp * phase + profile.rh_noise_sd * gaussian(&mut rng))
                .clamp(profile.rh_lo, profile.rh_hi);
            let secs = (86_400 * w) as u32 / stages as u32;
            samples.push(WeatherSample {
                timestamp: date.and_hms_opt(0, 0, 0).expect("midnight") + chrono::Duration::seconds(secs as i64),
                temp_c: temp,
                rh,
                solar_wm2: Some(profile.solar_at_hour(hour)),
            });
        }
        days.push(WeatherDay { date, samples });
    }
    WeatherSeries { days }
}

const CSV_TIME_FORMATS: [&str; 2] = ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S"];

fn parse_timestamp(s: &str) -> Result<NaiveDateTime> {
    for fmt in CSV_TIME_FORMATS {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(t);
        }
    }
    Err(CoreError::Corrupt(format!("unparseable timestamp {s:?}")))
}

/// Read a weather CSV with header `timestamp,temp_c,rh_pct[,solar_wm2]`.
/// RH is percent on disk, fraction in memory. Rows are grouped into days by
/// calendar date.
pub fn read_weather_csv<R: Read>(reader: R) -> Result<WeatherSeries> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| CoreError::Corrupt(format!("csv header: {e}")))?
        .clone();
    let cols: Vec<&str> = headers.iter().collect();
    if cols.len() < 3 || cols[0] != "timestamp" || cols[1] != "temp_c" || cols[2] != "rh_pct" {
        return Err(CoreError::Corrupt(format!(
            "expected header timestamp,temp_c,rh_pct[,solar_wm2], got {cols:?}"
        )));
    }
    let has_solar = cols.len() > 3 && cols[3] == "solar_wm2";

    let mut days: Vec<WeatherDay> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| CoreError::Corrupt(format!("csv row: {e}")))?;
        let ts = parse_timestamp(&record[0])?;
        let temp: f64 = record[1]
            .parse()
            .map_err(|e| CoreError::Corrupt(format!("temp_c: {e}")))?;
        let rh_pct: f64 = record[2]
            .parse()
            .map_err(|e| CoreError::Corrupt(format!("rh_pct: {e}")))?;
        let solar = if has_solar && record.len() > 3 && !record[3].is_empty() {
            Some(
                record[3]
                    .parse()
                    .map_err(|e| CoreError::Corrupt(format!("solar_wm2: {e}")))?,
            )
        } else {
            None
        };
        let sample = WeatherSample { timestamp: ts, temp_c: temp, rh: rh_pct / 100.0, solar_wm2: solar };
        match days.last_mut() {
            Some(day) if day.date == ts.date() => day.samples.push(sample),
            _ => days.push(WeatherDay { date: ts.date(), samples: vec![sample] }),
        }
    }
    let series = WeatherSeries { days };
    series.validate()?;
    Ok(series)
}

/// Write the CSV format accepted by [`read_weather_csv`].
pub fn write_weather_csv<W: Write>(series: &WeatherSeries, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let has_solar = series
        .days
        .iter()
        .any(|d| d.samples.iter().any(|s| s.solar_wm2.is_some()));
    if has_solar {
        wtr.write_record(["timestamp", "temp_c", "rh_pct", "solar_wm2"])
    } else {
        wtr.write_record(["timestamp", "temp_c", "rh_pct"])
    }
    .map_err(|e| CoreError::Corrupt(format!("csv write: {e}")))?;
    for day in &series.days {
        for s in &day.samples {
            let ts = s.timestamp.format("%Y-%m-%dT%H:%M:%S").to_string();
            let mut row = vec![ts, format!("{}", s.temp_c), format!("{}", s.rh * 100.0)];
            if has_solar {
                row.push(s.solar_wm2.map(|v| format!("{v}")).unwrap_or_default());
            }
            wtr.write_record(&row)
                .map_err(|e| CoreError::Corrupt(format!("csv write: {e}")))?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_weather_csv_path(path: &Path) -> Result<WeatherSeries> {
    read_weather_csv(std::fs::File::open(path)?)
}

pub fn write_weather_csv_path(series: &WeatherSeries, path: &Path) -> Result<()> {
    write_weather_csv(series, std::fs::File::create(path)?)
}
