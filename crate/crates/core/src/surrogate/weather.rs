use chrono::{Datelike, Days, NaiveDate};
use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::grid::{SiteConfig, YearRange};
use super::sim::{RESPONSE_DAYS, WINDOW_DAYS};
use crate::error::{Error, Result};
use crate::seeding::SeedKey;

/// Noise standard deviations of the weather generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeatherNoise {
    /// Daily maximum temperature, °C.
    pub temp_sigma: f64,
    /// Diurnal range, °C.
    pub range_sigma: f64,
    /// Radiation, MJ/m².
    pub radiation_sigma: f64,
    /// Mean diurnal range, °C.
    pub diurnal_range: f64,
}

impl Default for WeatherNoise {
    fn default() -> Self {
        WeatherNoise {
            temp_sigma: 2.0,
            range_sigma: 1.0,
            radiation_sigma: 1.5,
            diurnal_range: 8.0,
        }
    }
}

impl WeatherNoise {
    pub fn zero() -> Self {
        WeatherNoise {
            temp_sigma: 0.0,
            range_sigma: 0.0,
            radiation_sigma: 0.0,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeatherDay {
    pub date: NaiveDate,
    pub tmax: f64,
    pub tmin: f64,
    pub radiation: f64,
    pub rain: f64,
    pub pet: f64,
}

impl WeatherDay {
    pub fn tmean(&self) -> f64 {
        0.5 * (self.tmax + self.tmin)
    }
}

/// Contiguous daily weather for one site.
#[derive(Debug, Clone, PartialEq)]
pub struct WeatherSeries {
    pub site_id: String,
    pub days: Vec<WeatherDay>,
}

impl WeatherSeries {
    pub fn start(&self) -> Option<NaiveDate> {
        self.days.first().map(|d| d.date)
    }

    pub fn get(&self, date: NaiveDate) -> Option<&WeatherDay> {
        let start = self.start()?;
        let offset = (date - start).num_days();
        if offset < 0 {
            return None;
        }
        self.days.get(offset as usize).filter(|d| d.date == date)
    }
}

/// Seasonal shape, 1 at day-of-year 15 (mid-January, southern summer).
fn seasonal(doy: u32) -> f64 {
    (2.0 * PI * (f64::from(doy) - 15.0) / 365.25).cos()
}

/// Weather of a single day. Depends only on `(master_seed, site, date)`.
pub fn weather_day(
    site: &SiteConfig,
    date: NaiveDate,
    master_seed: u64,
    noise: &WeatherNoise,
) -> WeatherDay {
    let mut rng = SeedKey::new(master_seed)
        .with_str("weather")
        .with_str(&site.site_id)
        .with(i64::from(date.num_days_from_ce()) as u64)
        .rng();
    // Fixed draw order keeps every stream aligned regardless of parameters.
    let z_temp: f64 = rng.sample(StandardNormal);
    let z_range: f64 = rng.sample(StandardNormal);
    let z_rad: f64 = rng.sample(StandardNormal);
    let u_rain: f64 = rng.random();
    let e_rain: f64 = Exp::new(1.0).expect("unit rate").sample(&mut rng);

    let season = seasonal(date.ordinal());
    let tmax = site.mean_temp + site.temp_amplitude * season + noise.temp_sigma * z_temp;
    let range = (noise.diurnal_range + noise.range_sigma * z_range).max(0.0);
    let tmin = tmax - range;
    let radiation =
        (site.mean_radiation + site.radiation_amplitude * season + noise.radiation_sigma * z_rad)
            .max(2.0);
    let p_rain = site.rain_prob_winter
        + (site.rain_prob_summer - site.rain_prob_winter) * 0.5 * (1.0 + season);
    let rain = if u_rain < p_rain {
        site.rain_mean_mm * e_rain
    } else {
        0.0
    };
    let tmean = 0.5 * (tmax + tmin);
    let pet = (0.05 * radiation * tmean / 20.0).max(0.0);
    WeatherDay {
        date,
        tmax,
        tmin,
        radiation,
        rain,
        pet,
    }
}

/// Daily weather covering every simulation window whose fertilization date
/// falls inside `years`: from `WINDOW_DAYS` before January 1 of the first
/// year to `RESPONSE_DAYS` after December 31 of the last year.
pub fn synthesize_weather(
    site: &SiteConfig,
    years: YearRange,
    master_seed: u64,
    noise: &WeatherNoise,
) -> Result<WeatherSeries> {
    if years.is_empty() {
        return Err(Error::config(format!(
            "empty year range {}..={}",
            years.first, years.last
        )));
    }
    let first = NaiveDate::from_ymd_opt(years.first, 1, 1)
        .and_then(|d| d.checked_sub_days(Days::new(WINDOW_DAYS as u64)))
        .ok_or_else(|| Error::config("year range out of calendar bounds"))?;
    let last = NaiveDate::from_ymd_opt(years.last, 12, 31)
        .and_then(|d| d.checked_add_days(Days::new(RESPONSE_DAYS as u64)))
        .ok_or_else(|| Error::config("year range out of calendar bounds"))?;
    let days = first
        .iter_days()
        .take_while(|d| *d <= last)
        .map(|d| weather_day(site, d, master_seed, noise))
        .collect();
    Ok(WeatherSeries {
        site_id: site.site_id.clone(),
        days,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_site() -> SiteConfig {
        SiteConfig {
            temp_amplitude: 0.0,
            radiation_amplitude: 0.0,
            ..SiteConfig::waiotu()
        }
    }

    #[test]
    fn degenerate_sinusoid_gives_constant_tmax() {
        let site = flat_site();
        let w = synthesize_weather(&site, YearRange::new(2001, 2001), 5, &WeatherNoise::zero())
            .unwrap();
        assert!(w.days.iter().all(|d| d.tmax == site.mean_temp));
        assert!(w.days.iter().all(|d| d.tmin == site.mean_temp - 8.0));
    }

    #[test]
    fn phase_day_gives_full_amplitude() {
        let site = SiteConfig::mahana();
        let date = NaiveDate::from_ymd_opt(2003, 1, 15).unwrap();
        let d = weather_day(&site, date, 1, &WeatherNoise::zero());
        assert_eq!(d.tmax, site.mean_temp + site.temp_amplitude);
    }

    #[test]
    fn series_is_bit_identical_for_same_inputs() {
        let site = SiteConfig::waiotu();
        let a = synthesize_weather(
            &site,
            YearRange::new(1990, 1991),
            11,
            &WeatherNoise::default(),
        )
        .unwrap();
        let b = synthesize_weather(
            &site,
            YearRange::new(1990, 1991),
            11,
            &WeatherNoise::default(),
        )
        .unwrap();
        assert_eq!(a, b);
        let c = synthesize_weather(
            &site,
            YearRange::new(1990, 1991),
            12,
            &WeatherNoise::default(),
        )
        .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn day_values_do_not_depend_on_range() {
        let site = SiteConfig::waiotu();
        let noise = WeatherNoise::default();
        let a = synthesize_weather(&site, YearRange::new(1990, 1990), 3, &noise).unwrap();
        let b = synthesize_weather(&site, YearRange::new(1989, 1991), 3, &noise).unwrap();
        let date = NaiveDate::from_ymd_opt(1990, 6, 1).unwrap();
        assert_eq!(a.get(date), b.get(date));
    }

    #[test]
    fn coverage_and_invariants() {
        let site = SiteConfig::mahana();
        let w = synthesize_weather(
            &site,
            YearRange::new(2000, 2001),
            9,
            &WeatherNoise::default(),
        )
        .unwrap();
        assert_eq!(w.start(), NaiveDate::from_ymd_opt(1999, 12, 4));
        assert_eq!(
            w.days.last().unwrap().date,
            NaiveDate::from_ymd_opt(2002, 3, 2).unwrap()
        );
        for pair in w.days.windows(2) {
            assert_eq!(pair[1].date, pair[0].date.succ_opt().unwrap());
        }
        for d in &w.days {
            assert!(d.tmax >= d.tmin);
            assert!(d.radiation >= 2.0);
            assert!(d.rain >= 0.0);
            assert!(d.pet >= 0.0);
        }
    }

    #[test]
    fn southern_hemisphere_seasonality() {
        let site = SiteConfig::waiotu();
        let w = synthesize_weather(
            &site,
            YearRange::new(2000, 2009),
            2,
            &WeatherNoise::default(),
        )
        .unwrap();
        let mean_for = |m: u32| {
            let v: Vec<f64> = w
                .days
                .iter()
                .filter(|d| d.date.month() == m)
                .map(|d| d.tmax)
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        assert!(mean_for(1) > mean_for(7) + 5.0);
    }

    #[test]
    fn empty_range_rejected() {
        let r = synthesize_weather(
            &SiteConfig::waiotu(),
            YearRange::new(2001, 2000),
            1,
            &WeatherNoise::default(),
        );
        assert!(matches!(r, Err(Error::Config(_))));
    }
}
