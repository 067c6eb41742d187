//! Classical competitors on daily aggregated log prices: AR(1) with drift
//! and calendar effects, and a two-regime Markov switching model.

mod ar;
mod mr;

pub use ar::{fit_ar, forecast_ar, ArConfig, ArModel, MIN_AR_OBS};
pub use mr::{
    fit_mr, forecast_mr, hamilton_filter, kim_smoother, FilterOutput, MrConfig, MrFit, MrModel,
    MIN_MR_OBS,
};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::forecast::aggregate_peak_base;
use crate::ingest::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregate {
    Peak,
    Base,
}

impl Aggregate {
    pub fn as_str(self) -> &'static str {
        match self {
            Aggregate::Peak => "peak",
            Aggregate::Base => "base",
        }
    }
}

impl std::fmt::Display for Aggregate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Daily peakload and baseload log prices of the days with all 24 prices
/// observed and positive aggregate means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateSeries {
    pub day_index: Vec<u32>,
    pub dates: Vec<NaiveDate>,
    pub peak: Vec<f64>,
    pub base: Vec<f64>,
}

impl AggregateSeries {
    pub fn from_dataset(ds: &Dataset) -> Self {
        let mut out = AggregateSeries {
            day_index: Vec::new(),
            dates: Vec::new(),
            peak: Vec::new(),
            base: Vec::new(),
        };
        for day in &ds.days {
            if let Some((p, b)) = day
                .full_prices()
                .and_then(|prices| aggregate_peak_base(&prices).ok())
            {
                out.day_index.push(day.day_index);
                out.dates.push(day.calendar_date);
                out.peak.push(p);
                out.base.push(b);
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.day_index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.day_index.is_empty()
    }

    pub fn values(&self, aggregate: Aggregate) -> &[f64] {
        match aggregate {
            Aggregate::Peak => &self.peak,
            Aggregate::Base => &self.base,
        }
    }

    /// Entries with day index `<= last`.
    pub fn up_to(&self, last: u32) -> Self {
        let n = self.day_index.partition_point(|&d| d <= last);
        AggregateSeries {
            day_index: self.day_index[..n].to_vec(),
            dates: self.dates[..n].to_vec(),
            peak: self.peak[..n].to_vec(),
            base: self.base[..n].to_vec(),
        }
    }

    pub fn value_at(&self, day_index: u32, aggregate: Aggregate) -> Option<f64> {
        self.day_index
            .binary_search(&day_index)
            .ok()
            .map(|i| self.values(aggregate)[i])
    }
}
