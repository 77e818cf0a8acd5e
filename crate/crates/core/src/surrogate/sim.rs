use chrono::{Datelike, Days, NaiveDate};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::grid::Scenario;
use super::weather::{WeatherNoise, WeatherSeries};
use crate::error::{Error, Result};
use crate::seeding::SeedKey;

/// Days of history kept before the fertilization date.
pub const WINDOW_DAYS: usize = 28;
/// Length of the response window after the fertilization date.
pub const RESPONSE_DAYS: usize = 61;

/// Tunable constants of the surrogate. Defaults reproduce the documented model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateConstants {
    /// Potential growth, kg DM/ha/day, before the soil-carbon scaling.
    pub g_max: f64,
    /// Curvature of the N response, 1/kg N.
    pub response_k: f64,
    /// Response amplitude scale, kg DM/ha.
    pub response_a0: f64,
    /// Log-scale sd of the multiplicative label noise.
    pub response_sigma_log: f64,
    pub weather_noise: WeatherNoise,
    /// Soil water at the start of the series, as a fraction of PAWC.
    pub initial_water_fraction: f64,
    /// Daily rain at which half of the bucket overflow leaves as runoff, mm.
    pub runoff_half_rain_mm: f64,
    /// Months in which irrigation may be applied.
    pub irrigation_months: Vec<u32>,
    pub initial_mineral_n: f64,
    /// Mineralization per % carbon per day at unconstrained conditions, kg N/ha.
    pub mineralization_rate: f64,
    /// N content of new growth, kg N per kg DM.
    pub n_concentration: f64,
    /// Fraction of mineral N leached per unit drainage/PAWC.
    pub leaching_coefficient: f64,
}

impl Default for SurrogateConstants {
    fn default() -> Self {
        SurrogateConstants {
            g_max: 60.0,
            response_k: 0.015,
            response_a0: 900.0,
            response_sigma_log: 0.10,
            weather_noise: WeatherNoise::default(),
            initial_water_fraction: 1.0,
            runoff_half_rain_mm: 30.0,
            irrigation_months: vec![10, 11, 12, 1, 2, 3, 4],
            initial_mineral_n: 25.0,
            mineralization_rate: 0.08,
            n_concentration: 0.03,
            leaching_coefficient: 0.3,
        }
    }
}

impl SurrogateConstants {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("g_max", self.g_max),
            ("response_k", self.response_k),
            ("response_a0", self.response_a0),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("surrogate.{name} must be > 0")));
            }
        }
        let non_negative = [
            ("response_sigma_log", self.response_sigma_log),
            ("runoff_half_rain_mm", self.runoff_half_rain_mm),
            ("initial_mineral_n", self.initial_mineral_n),
            ("mineralization_rate", self.mineralization_rate),
            ("n_concentration", self.n_concentration),
            ("leaching_coefficient", self.leaching_coefficient),
            ("weather_noise.temp_sigma", self.weather_noise.temp_sigma),
            ("weather_noise.range_sigma", self.weather_noise.range_sigma),
            (
                "weather_noise.radiation_sigma",
                self.weather_noise.radiation_sigma,
            ),
            (
                "weather_noise.diurnal_range",
                self.weather_noise.diurnal_range,
            ),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!("surrogate.{name} must be >= 0")));
            }
        }
        if !(0.0..=1.0).contains(&self.initial_water_fraction) {
            return Err(Error::config(
                "surrogate.initial_water_fraction must lie in [0, 1]",
            ));
        }
        if self.irrigation_months.iter().any(|m| !(1..=12).contains(m)) {
            return Err(Error::config(
                "surrogate.irrigation_months must lie in 1..=12",
            ));
        }
        Ok(())
    }
}

/// One simulated day: weather plus the ten biophysical outputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DailyRecord {
    pub date: NaiveDate,
    pub tmax: f64,
    pub tmin: f64,
    pub radiation: f64,
    pub rain: f64,
    pub pet: f64,
    pub soil_water: f64,
    pub mineral_n: f64,
    pub biomass: f64,
    pub growth_rate: f64,
    pub lai: f64,
    pub soil_temp: f64,
    pub drainage: f64,
    pub runoff: f64,
    pub n_uptake: f64,
    pub transpiration: f64,
}

impl DailyRecord {
    pub const CHANNELS: usize = 15;

    pub const CHANNEL_NAMES: [&'static str; 15] = [
        "tmax",
        "tmin",
        "radiation",
        "rain",
        "pet",
        "soil_water",
        "mineral_n",
        "biomass",
        "growth_rate",
        "lai",
        "soil_temp",
        "drainage",
        "runoff",
        "n_uptake",
        "transpiration",
    ];

    /// Weather channels first, then biophysical channels in declaration order.
    pub fn channels(&self) -> [f64; 15] {
        [
            self.tmax,
            self.tmin,
            self.radiation,
            self.rain,
            self.pet,
            self.soil_water,
            self.mineral_n,
            self.biomass,
            self.growth_rate,
            self.lai,
            self.soil_temp,
            self.drainage,
            self.runoff,
            self.n_uptake,
            self.transpiration,
        ]
    }

    pub fn from_channels(date: NaiveDate, c: [f64; 15]) -> Self {
        DailyRecord {
            date,
            tmax: c[0],
            tmin: c[1],
            radiation: c[2],
            rain: c[3],
            pet: c[4],
            soil_water: c[5],
            mineral_n: c[6],
            biomass: c[7],
            growth_rate: c[8],
            lai: c[9],
            soil_temp: c[10],
            drainage: c[11],
            runoff: c[12],
            n_uptake: c[13],
            transpiration: c[14],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    pub scenario: Scenario,
    /// Contiguous days from `fert_date - 28` to `fert_date + 61`, inclusive.
    pub daily: Vec<DailyRecord>,
    /// kg yield/ha/kg N; `None` for unfertilized scenarios.
    pub nrr: Option<f64>,
}

impl SimulationResult {
    /// Biomass on the last simulated day.
    pub fn final_yield(&self) -> f64 {
        self.daily.last().map_or(0.0, |d| d.biomass)
    }
}

/// Per-day limitation factors of the response window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowConditions {
    /// `f_T * f_W` for each of the 61 response days.
    pub weights: Vec<f64>,
}

impl WindowConditions {
    /// Mean of `f_T * f_W` over the response window.
    pub fn efficiency(&self) -> f64 {
        self.weights.iter().sum::<f64>() / self.weights.len() as f64
    }
}

fn temperature_factor(tmean: f64) -> f64 {
    ((tmean - 5.0) / 15.0).clamp(0.0, 1.0)
}

fn radiation_factor(radiation: f64) -> f64 {
    (radiation / 25.0).clamp(0.0, 1.0)
}

fn water_factor(w: f64, pawc: f64) -> f64 {
    (w / (0.5 * pawc)).min(1.0)
}

/// `A (1 - exp(-k N)) / N`.
pub fn response_rate(amplitude: f64, k: f64, n_amount: f64) -> f64 {
    -amplitude * (-k * n_amount).exp_m1() / n_amount
}

fn series_dates(scenario: &Scenario) -> Result<(NaiveDate, NaiveDate)> {
    let fert = scenario.fert_date();
    let start = fert
        .checked_sub_days(Days::new(WINDOW_DAYS as u64))
        .ok_or_else(|| Error::data("series start out of calendar range"))?;
    let end = fert
        .checked_add_days(Days::new(RESPONSE_DAYS as u64))
        .ok_or_else(|| Error::data("series end out of calendar range"))?;
    Ok((start, end))
}

struct Trajectory {
    daily: Vec<DailyRecord>,
    weights: Vec<f64>,
}

/// Runs the bucket and growth model. With `response = Some(dy)`, `dy` kg DM/ha
/// of extra growth is distributed over the response window proportionally to
/// the daily `f_T * f_W`, and the fertilizer enters the mineral N pool.
fn run(
    scenario: &Scenario,
    weather: &WeatherSeries,
    consts: &SurrogateConstants,
    response: Option<f64>,
) -> Result<Trajectory> {
    if weather.site_id != scenario.site_id {
        return Err(Error::data(format!(
            "weather for site {} given to scenario at site {}",
            weather.site_id, scenario.site_id
        )));
    }
    let (start, end) = series_dates(scenario)?;
    let fert = scenario.fert_date();
    let days: Vec<_> = start
        .iter_days()
        .take_while(|d| *d <= end)
        .map(|d| {
            weather.get(d).copied().ok_or_else(|| {
                Error::data(format!(
                    "weather for {} has no record for {d}",
                    weather.site_id
                ))
            })
        })
        .collect::<Result<_>>()?;

    let pawc = scenario.pawc;
    let half = 0.5 * pawc;
    let potential = consts.g_max * (0.7 + 0.1 * scenario.soil_carbon);

    // First pass: water balance and unfertilized growth.
    let mut w = consts.initial_water_fraction * pawc;
    let mut water = Vec::with_capacity(days.len());
    for day in &days {
        let month = day.date.month();
        let irrigation =
            if scenario.irrigated && consts.irrigation_months.contains(&month) && w < half {
                pawc - w
            } else {
                0.0
            };
        let available = w + day.rain + irrigation;
        let aet = (day.pet * water_factor(w, pawc)).min(available);
        let raw = available - aet;
        let (next, excess) = if raw > pawc {
            (pawc, raw - pawc)
        } else {
            (raw.max(0.0), 0.0)
        };
        // Overflow splits between runoff and drainage; heavier rain sheds more.
        let runoff = if excess > 0.0 {
            excess * day.rain / (day.rain + consts.runoff_half_rain_mm)
        } else {
            0.0
        };
        let drainage = excess - runoff;
        w = next;
        water.push((w, aet, drainage, runoff));
    }

    let mut weights = Vec::with_capacity(RESPONSE_DAYS);
    let mut base_growth = Vec::with_capacity(days.len());
    for (day, &(w, ..)) in days.iter().zip(&water) {
        let f_t = temperature_factor(day.tmean());
        let f_w = water_factor(w, pawc);
        base_growth.push(potential * f_t * radiation_factor(day.radiation) * f_w);
        if day.date > fert {
            weights.push(f_t * f_w);
        }
    }
    debug_assert_eq!(weights.len(), RESPONSE_DAYS);
    let weight_sum: f64 = weights.iter().sum();

    let mut daily = Vec::with_capacity(days.len());
    let mut biomass = 0.0;
    let mut mineral_n = consts.initial_mineral_n;
    let mut tmean_hist: Vec<f64> = Vec::with_capacity(days.len());
    let mut response_day = 0;
    for (i, day) in days.iter().enumerate() {
        let (w, aet, drainage, runoff) = water[i];
        let f_t = temperature_factor(day.tmean());
        let f_w = water_factor(w, pawc);
        let mut growth = base_growth[i];
        if day.date > fert {
            if let Some(dy) = response {
                if weight_sum > 0.0 {
                    growth += dy * weights[response_day] / weight_sum;
                }
            }
            response_day += 1;
        }
        if day.date == fert && response.is_some() {
            mineral_n += scenario.n_amount;
        }
        biomass += growth;
        mineral_n += consts.mineralization_rate * scenario.soil_carbon * f_t * f_w;
        let n_uptake = (consts.n_concentration * growth).min(mineral_n);
        mineral_n -= n_uptake;
        mineral_n -= mineral_n * (consts.leaching_coefficient * drainage / pawc).min(1.0);
        mineral_n = mineral_n.max(0.0);

        tmean_hist.push(day.tmean());
        let lo = tmean_hist.len().saturating_sub(7);
        let recent = &tmean_hist[lo..];
        let soil_temp = recent.iter().sum::<f64>() / recent.len() as f64;

        daily.push(DailyRecord {
            date: day.date,
            tmax: day.tmax,
            tmin: day.tmin,
            radiation: day.radiation,
            rain: day.rain,
            pet: day.pet,
            soil_water: w,
            mineral_n,
            biomass,
            growth_rate: growth,
            lai: (biomass / 1500.0).min(6.0),
            soil_temp,
            drainage,
            runoff,
            n_uptake,
            transpiration: aet,
        });
    }
    Ok(Trajectory { daily, weights })
}

/// Limitation factors over the 61-day response window of `scenario`.
pub fn window_conditions(
    scenario: &Scenario,
    weather: &WeatherSeries,
    consts: &SurrogateConstants,
) -> Result<WindowConditions> {
    run(scenario, weather, consts, None).map(|t| WindowConditions { weights: t.weights })
}

fn label_noise(scenario: &Scenario, consts: &SurrogateConstants, master_seed: u64) -> f64 {
    if consts.response_sigma_log == 0.0 {
        return 1.0;
    }
    let mut rng = SeedKey::new(master_seed)
        .with_str("nrr-noise")
        .with_str(&scenario.site_id)
        .with_f64(scenario.pawc)
        .with_f64(scenario.soil_carbon)
        .with(u64::from(scenario.irrigated))
        .with(scenario.fert_date().num_days_from_ce() as u64)
        .with_f64(scenario.n_amount)
        .rng();
    let z: f64 = StandardNormal.sample(&mut rng);
    (consts.response_sigma_log * z).exp()
}

/// Closed-form NRR: `A (1 - exp(-k N)) / N` with
/// `A = a0 * E * (1 - carbon / 10) * S`.
pub fn nrr_label(
    scenario: &Scenario,
    weather: &WeatherSeries,
    consts: &SurrogateConstants,
    master_seed: u64,
) -> Result<f64> {
    if !(scenario.n_amount > 0.0) {
        return Err(Error::LabelUndefined(format!(
            "scenario {} has no fertilizer; NRR is undefined",
            scenario.key()
        )));
    }
    let efficiency = window_conditions(scenario, weather, consts)?.efficiency();
    let amplitude = consts.response_a0
        * efficiency
        * (1.0 - scenario.soil_carbon / 10.0)
        * label_noise(scenario, consts, master_seed);
    Ok(response_rate(
        amplitude,
        consts.response_k,
        scenario.n_amount,
    ))
}

/// Simulates one scenario. Fertilized scenarios carry their NRR label and the
/// corresponding yield response on top of the unfertilized biomass.
pub fn simulate(
    scenario: &Scenario,
    weather: &WeatherSeries,
    consts: &SurrogateConstants,
    master_seed: u64,
) -> Result<SimulationResult> {
    let nrr = if scenario.n_amount > 0.0 {
        Some(nrr_label(scenario, weather, consts, master_seed)?)
    } else {
        None
    };
    let response = nrr.map(|r| r * scenario.n_amount);
    let traj = run(scenario, weather, consts, response)?;
    Ok(SimulationResult {
        scenario: scenario.clone(),
        daily: traj.daily,
        nrr,
    })
}

/// `(Y_N - Y_0) / N` from a fertilized and an unfertilized run.
pub fn paired_run_nrr(
    scenario: &Scenario,
    weather: &WeatherSeries,
    consts: &SurrogateConstants,
    master_seed: u64,
) -> Result<f64> {
    let fertilized = simulate(scenario, weather, consts, master_seed)?;
    let control = simulate(&scenario.with_amount(0.0), weather, consts, master_seed)?;
    if fertilized.nrr.is_none() {
        return Err(Error::LabelUndefined(format!(
            "scenario {} has no fertilizer; NRR is undefined",
            scenario.key()
        )));
    }
    Ok((fertilized.final_yield() - control.final_yield()) / scenario.n_amount)
}
