//! Participant-facing rendering of option attributes.
//!
//! Rail risk is shown as occupancy, a percentage of a full train. Taxi and
//! walking risk are shown as exposure minutes, risk divided by the mode's
//! risk rate. Cars carry no risk. Raw attributes are always sent alongside.

use fareopt_core::learning::QueryGenerator;
use fareopt_core::{Mode, OptionSet};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderConfig {
    pub currency_symbol: String,
    /// Rail risk shown as 100%; the query generator's full-train risk when absent.
    pub rail_full_risk: Option<f64>,
    pub taxi_risk_rate: Option<f64>,
    pub walk_risk_rate: Option<f64>,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self { currency_symbol: "$".into(), rail_full_risk: None, taxi_risk_rate: None, walk_risk_rate: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RiskView {
    None,
    CapacityPercent { value: f64 },
    ExposureMinutes { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionView {
    pub index: usize,
    pub mode: Mode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub road: Option<usize>,
    pub latency: f64,
    pub cost: f64,
    pub risk: f64,
    pub risk_view: RiskView,
    pub label: String,
}

pub fn render(query: &OptionSet, config: &RenderConfig, generator: &QueryGenerator) -> Vec<OptionView> {
    let rail_full = config.rail_full_risk.unwrap_or(generator.rail_full_risk);
    let taxi_rate = config.taxi_risk_rate.unwrap_or(generator.taxi_risk_rate);
    let walk_rate = config.walk_risk_rate.unwrap_or(generator.walk_risk_rate);
    query
        .options()
        .iter()
        .enumerate()
        .map(|(index, o)| {
            let risk_view = match o.mode {
                Mode::Car => RiskView::None,
                Mode::Rail => RiskView::CapacityPercent { value: 100.0 * o.risk / rail_full },
                Mode::Taxi => RiskView::ExposureMinutes { value: o.risk / taxi_rate },
                Mode::Walk => RiskView::ExposureMinutes { value: o.risk / walk_rate },
            };
            let name = match (o.mode, o.road) {
                (Mode::Car, Some(r)) => format!("Car via road {}", r + 1),
                (Mode::Taxi, Some(r)) => format!("Taxi via road {}", r + 1),
                (Mode::Rail, _) => "Train".to_string(),
                (Mode::Walk, _) => "Walk".to_string(),
                (m, None) => format!("{m:?}"),
            };
            let cost = if o.cost == 0.0 { "free".to_string() } else { format!("{}{:.2}", config.currency_symbol, o.cost) };
            let risk = match risk_view {
                RiskView::None => "no shared exposure".to_string(),
                RiskView::CapacityPercent { value } => format!("{value:.0}% of full train capacity"),
                RiskView::ExposureMinutes { value } => format!("{value:.0} exposure minutes"),
            };
            OptionView {
                index,
                mode: o.mode,
                road: o.road,
                latency: o.latency,
                cost: o.cost,
                risk: o.risk,
                risk_view,
                label: format!("{name}: {:.0} min, {cost}, {risk}", o.latency),
            }
        })
        .collect()
}
