use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Weather climate of one site. Temperatures are daily maxima.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteConfig {
    pub site_id: String,
    pub mean_temp: f64,
    pub temp_amplitude: f64,
    pub mean_radiation: f64,
    pub radiation_amplitude: f64,
    pub rain_prob_summer: f64,
    pub rain_prob_winter: f64,
    pub rain_mean_mm: f64,
}

impl SiteConfig {
    pub fn waiotu() -> Self {
        SiteConfig {
            site_id: "waiotu".into(),
            mean_temp: 19.5,
            temp_amplitude: 4.0,
            mean_radiation: 15.0,
            radiation_amplitude: 8.0,
            rain_prob_summer: 0.30,
            rain_prob_winter: 0.55,
            rain_mean_mm: 8.0,
        }
    }

    pub fn mahana() -> Self {
        SiteConfig {
            site_id: "mahana".into(),
            mean_temp: 17.0,
            temp_amplitude: 5.5,
            mean_radiation: 15.5,
            radiation_amplitude: 9.0,
            rain_prob_summer: 0.22,
            rain_prob_winter: 0.40,
            rain_mean_mm: 7.0,
        }
    }

    /// Third weather configuration of the factorial; not used for modeling.
    pub fn site_c() -> Self {
        SiteConfig {
            site_id: "site_c".into(),
            mean_temp: 16.0,
            temp_amplitude: 6.0,
            mean_radiation: 14.5,
            radiation_amplitude: 9.5,
            rain_prob_summer: 0.28,
            rain_prob_winter: 0.50,
            rain_mean_mm: 9.0,
        }
    }

    pub fn builtin(site_id: &str) -> Option<Self> {
        match site_id {
            "waiotu" => Some(Self::waiotu()),
            "mahana" => Some(Self::mahana()),
            "site_c" => Some(Self::site_c()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let id = &self.site_id;
        if id.is_empty() || id.contains([',', '/', '\\', '"']) {
            return Err(Error::config(format!("invalid site id {id:?}")));
        }
        if !(self.temp_amplitude >= 0.0) {
            return Err(Error::config(format!(
                "site {id}: temp_amplitude must be >= 0"
            )));
        }
        if !(self.radiation_amplitude >= 0.0) {
            return Err(Error::config(format!(
                "site {id}: radiation_amplitude must be >= 0"
            )));
        }
        for (name, p) in [
            ("rain_prob_summer", self.rain_prob_summer),
            ("rain_prob_winter", self.rain_prob_winter),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(format!(
                    "site {id}: {name} must lie in [0, 1]"
                )));
            }
        }
        if !(self.rain_mean_mm > 0.0) {
            return Err(Error::config(format!(
                "site {id}: rain_mean_mm must be > 0"
            )));
        }
        if !self.mean_temp.is_finite() || !self.mean_radiation.is_finite() {
            return Err(Error::config(format!(
                "site {id}: non-finite climate value"
            )));
        }
        Ok(())
    }
}

/// Inclusive range of fertilization years.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct YearRange {
    pub first: i32,
    pub last: i32,
}

impl YearRange {
    pub fn new(first: i32, last: i32) -> Self {
        YearRange { first, last }
    }

    pub fn len(&self) -> usize {
        if self.last < self.first {
            0
        } else {
            (self.last - self.first + 1) as usize
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = i32> {
        self.first..=self.last
    }

    pub fn contains(&self, year: i32) -> bool {
        (self.first..=self.last).contains(&year)
    }
}

/// Level sets of the full-factorial simulation design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioGrid {
    pub sites: Vec<SiteConfig>,
    /// Plant-available water capacity, mm.
    pub soil_water_levels: Vec<f64>,
    /// Soil carbon, %.
    pub soil_fertility_levels: Vec<f64>,
    pub irrigation_levels: Vec<bool>,
    pub years: YearRange,
    pub months: Vec<u32>,
    pub days: Vec<u32>,
    /// kg N/ha.
    pub n_amounts: Vec<f64>,
}

impl Default for ScenarioGrid {
    fn default() -> Self {
        ScenarioGrid {
            sites: vec![
                SiteConfig::waiotu(),
                SiteConfig::mahana(),
                SiteConfig::site_c(),
            ],
            soil_water_levels: vec![42.0, 67.0, 110.0, 177.0],
            soil_fertility_levels: vec![2.0, 4.0, 6.0],
            irrigation_levels: vec![true, false],
            years: YearRange::new(1979, 2018),
            months: (1..=12).collect(),
            days: vec![5, 15, 25],
            n_amounts: vec![0.0, 20.0, 40.0, 60.0, 80.0, 100.0],
        }
    }
}

impl ScenarioGrid {
    /// Number of scenarios the grid enumerates.
    pub fn cardinality(&self) -> usize {
        self.sites.len()
            * self.soil_water_levels.len()
            * self.soil_fertility_levels.len()
            * self.irrigation_levels.len()
            * self.years.len()
            * self.months.len()
            * self.days.len()
            * self.n_amounts.len()
    }

    pub fn validate(&self) -> Result<()> {
        let empty = [
            ("sites", self.sites.is_empty()),
            ("soil_water_levels", self.soil_water_levels.is_empty()),
            (
                "soil_fertility_levels",
                self.soil_fertility_levels.is_empty(),
            ),
            ("irrigation_levels", self.irrigation_levels.is_empty()),
            ("years", self.years.is_empty()),
            ("months", self.months.is_empty()),
            ("days", self.days.is_empty()),
            ("n_amounts", self.n_amounts.is_empty()),
        ];
        if let Some((name, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(Error::config(format!("grid level set {name} is empty")));
        }
        for site in &self.sites {
            site.validate()?;
        }
        let mut ids: Vec<&str> = self.sites.iter().map(|s| s.site_id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("duplicate site id in grid"));
        }
        if self
            .soil_water_levels
            .iter()
            .any(|&p| !(p > 0.0 && p.is_finite()))
        {
            return Err(Error::config("soil water levels must be positive"));
        }
        if self
            .soil_fertility_levels
            .iter()
            .any(|&c| !(0.0..10.0).contains(&c))
        {
            return Err(Error::config("soil carbon levels must lie in [0, 10)"));
        }
        if self.n_amounts.iter().any(|&n| !(n >= 0.0 && n.is_finite())) {
            return Err(Error::config("fertilizer amounts must be >= 0"));
        }
        for &m in &self.months {
            if !(1..=12).contains(&m) {
                return Err(Error::config(format!("month {m} outside 1..=12")));
            }
            for &d in &self.days {
                for y in self.years.iter() {
                    if NaiveDate::from_ymd_opt(y, m, d).is_none() {
                        return Err(Error::config(format!(
                            "fertilization date {y}-{m:02}-{d:02} is not a calendar date"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn site(&self, site_id: &str) -> Option<&SiteConfig> {
        self.sites.iter().find(|s| s.site_id == site_id)
    }
}

/// One cell of the factorial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// Position in enumeration order.
    pub id: u64,
    pub site_id: String,
    pub pawc: f64,
    pub soil_carbon: f64,
    pub irrigated: bool,
    pub fert_year: i32,
    pub fert_month: u32,
    pub fert_day: u32,
    pub n_amount: f64,
}

impl Scenario {
    pub fn fert_date(&self) -> NaiveDate {
        NaiveDate::from_ymd_opt(self.fert_year, self.fert_month, self.fert_day)
            .expect("scenario dates are validated at enumeration")
    }

    /// Stable human-readable key, unique within a grid.
    pub fn key(&self) -> String {
        format!(
            "{}_w{}_c{}_{}_{:04}{:02}{:02}_n{}",
            self.site_id,
            self.pawc,
            self.soil_carbon,
            if self.irrigated { "irr" } else { "dry" },
            self.fert_year,
            self.fert_month,
            self.fert_day,
            self.n_amount
        )
    }

    /// Same scenario with a different fertilizer amount.
    pub fn with_amount(&self, n_amount: f64) -> Scenario {
        Scenario {
            n_amount,
            ..self.clone()
        }
    }
}

/// Cartesian product of the grid, ordered site, pawc, carbon, irrigation,
/// year, month, day, amount (slowest to fastest).
pub fn enumerate_scenarios(grid: &ScenarioGrid) -> Result<Vec<Scenario>> {
    grid.validate()?;
    let mut out = Vec::with_capacity(grid.cardinality());
    let mut id = 0u64;
    for site in &grid.sites {
        for &pawc in &grid.soil_water_levels {
            for &carbon in &grid.soil_fertility_levels {
                for &irrigated in &grid.irrigation_levels {
                    for year in grid.years.iter() {
                        for &month in &grid.months {
                            for &day in &grid.days {
                                for &n_amount in &grid.n_amounts {
                                    out.push(Scenario {
                                        id,
                                        site_id: site.site_id.clone(),
                                        pawc,
                                        soil_carbon: carbon,
                                        irrigated,
                                        fert_year: year,
                                        fert_month: month,
                                        fert_day: day,
                                        n_amount,
                                    });
                                    id += 1;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn singleton() -> ScenarioGrid {
        ScenarioGrid {
            sites: vec![SiteConfig::waiotu()],
            soil_water_levels: vec![42.0],
            soil_fertility_levels: vec![2.0],
            irrigation_levels: vec![false],
            years: YearRange::new(2000, 2000),
            months: vec![3],
            days: vec![15],
            n_amounts: vec![40.0],
        }
    }

    #[test]
    fn default_grid_matches_simulation_table() {
        let g = ScenarioGrid::default();
        assert_eq!(g.soil_water_levels, vec![42.0, 67.0, 110.0, 177.0]);
        assert_eq!(g.soil_fertility_levels, vec![2.0, 4.0, 6.0]);
        assert_eq!(g.irrigation_levels, vec![true, false]);
        assert_eq!(g.years, YearRange::new(1979, 2018));
        assert_eq!(g.months, (1..=12).collect::<Vec<_>>());
        assert_eq!(g.days, vec![5, 15, 25]);
        assert_eq!(g.n_amounts, vec![0.0, 20.0, 40.0, 60.0, 80.0, 100.0]);
        assert_eq!(g.sites.len(), 3);
    }

    #[test]
    fn full_grid_cardinality() {
        // 3 sites x 4 x 3 x 2 x 40 years x 12 x 3 x 6
        let g = ScenarioGrid::default();
        assert_eq!(g.cardinality(), 622_080);
        assert_eq!(enumerate_scenarios(&g).unwrap().len(), 622_080);
    }

    #[test]
    fn singleton_grid() {
        let s = enumerate_scenarios(&singleton()).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(
            s[0].fert_date(),
            NaiveDate::from_ymd_opt(2000, 3, 15).unwrap()
        );
    }

    #[test]
    fn desk_grid_cardinality() {
        let g = ScenarioGrid {
            sites: vec![SiteConfig::waiotu(), SiteConfig::mahana()],
            soil_water_levels: vec![67.0, 177.0],
            soil_fertility_levels: vec![4.0],
            irrigation_levels: vec![true, false],
            years: YearRange::new(2008, 2011),
            months: (1..=12).collect(),
            days: vec![15],
            n_amounts: vec![0.0, 20.0, 40.0],
        };
        assert_eq!(enumerate_scenarios(&g).unwrap().len(), 1_152);
    }

    #[test]
    fn order_is_slowest_site_fastest_amount() {
        let mut g = singleton();
        g.n_amounts = vec![20.0, 40.0];
        g.sites.push(SiteConfig::mahana());
        g.months = vec![1, 2];
        let s = enumerate_scenarios(&g).unwrap();
        assert_eq!(s.len(), 8);
        assert_eq!(s[0].n_amount, 20.0);
        assert_eq!(s[1].n_amount, 40.0);
        assert_eq!(s[2].fert_month, 2);
        assert_eq!(s[4].site_id, "mahana");
        assert!(s.iter().enumerate().all(|(i, x)| x.id == i as u64));
    }

    #[test]
    fn empty_level_set_is_config_error() {
        let mut g = singleton();
        g.days.clear();
        assert!(matches!(enumerate_scenarios(&g), Err(Error::Config(_))));
        let mut g = singleton();
        g.years = YearRange::new(2001, 2000);
        assert!(matches!(enumerate_scenarios(&g), Err(Error::Config(_))));
    }

    #[test]
    fn invalid_calendar_date_rejected() {
        let mut g = singleton();
        g.months = vec![2];
        g.days = vec![30];
        assert!(matches!(g.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn site_invariants() {
        let mut s = SiteConfig::waiotu();
        s.rain_prob_summer = 1.2;
        assert!(s.validate().is_err());
        let mut s = SiteConfig::waiotu();
        s.temp_amplitude = -1.0;
        assert!(s.validate().is_err());
        let mut s = SiteConfig::waiotu();
        s.rain_mean_mm = 0.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn keys_are_unique() {
        let g = ScenarioGrid {
            years: YearRange::new(2000, 2001),
            ..ScenarioGrid::default()
        };
        let s = enumerate_scenarios(&g).unwrap();
        let mut keys: Vec<String> = s.iter().map(Scenario::key).collect();
        keys.sort();
        keys.dedup();
        assert_eq!(keys.len(), s.len());
    }
}
