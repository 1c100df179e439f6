//! Synthetic households with known ground truth.
//!
//! Each appliance is a two-level load: a rated power during daily on-windows
//! (with optional start jitter and skip probability) and zero otherwise.
//! Appliances can be linked to a partner so they activate together (lag 0)
//! or a fixed number of hours later (causal lag). The total is base load
//! plus monitored plus unmonitored appliances plus meter noise, floored so
//! the monitored sum never exceeds it.
//!
//! The generated panels are the oracles for selection, grouping, and
//! end-to-end forecasting tests: the planted structure is known exactly.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::math::{population_variance, FloatExt};
use crate::panel::{ApplianceMeta, AppliancePanel};
use crate::rng::Rng;
use crate::series::{LoadSeries, TimeIndex};
use crate::{Error, Result};

/// 2023-01-02 00:00 UTC, a Monday — a convenient deterministic start.
pub const DEFAULT_START: i64 = 1_672_617_600;

/// One daily on-window, in whole hours of the day.
#[derive(Debug, Clone, PartialEq)]
pub struct OnWindow {
    pub start_hour: u32,
    pub len_hours: u32,
}

/// Activation copied from a partner appliance, shifted by a lag.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkSpec {
    pub partner: String,
    /// Positive: this appliance turns on after the partner.
    pub lag_hours: i32,
}

/// Behaviour of one synthetic appliance.
#[derive(Debug, Clone, PartialEq)]
pub struct ApplianceSpec {
    pub name: String,
    /// Rated active power, kW.
    pub power_kw: f64,
    pub windows: Vec<OnWindow>,
    /// Standard deviation of the daily start shift, hours.
    pub jitter_std_hours: f64,
    /// Probability that a given day's window actually happens.
    pub on_prob: f64,
    pub link: Option<LinkSpec>,
    /// Load noise while on, kW.
    pub noise_std_kw: f64,
}

impl ApplianceSpec {
    /// Plain daily appliance with no jitter, no skips, no noise.
    pub fn regular(name: &str, power_kw: f64, start_hour: u32, len_hours: u32) -> Self {
        ApplianceSpec {
            name: String::from(name),
            power_kw,
            windows: vec![OnWindow {
                start_hour,
                len_hours,
            }],
            jitter_std_hours: 0.0,
            on_prob: 1.0,
            link: None,
            noise_std_kw: 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.power_kw.is_nan() || self.power_kw <= 0.0 {
            return Err(Error::InvalidConfig(String::from(
                "appliance power must be positive",
            )));
        }
        if self.jitter_std_hours < 0.0 {
            return Err(Error::InvalidConfig(String::from(
                "jitter must be non-negative",
            )));
        }
        if !(0.0..=1.0).contains(&self.on_prob) {
            return Err(Error::InvalidConfig(String::from(
                "on_prob must be in [0, 1]",
            )));
        }
        if let Some(link) = &self.link {
            if !(-6..=6).contains(&link.lag_hours) {
                return Err(Error::InvalidConfig(String::from(
                    "link lag must be in [-6, 6] hours",
                )));
            }
        }
        Ok(())
    }

    /// Planted regularity: deterministic daily behaviour.
    pub fn is_regular(&self) -> bool {
        self.jitter_std_hours == 0.0 && self.on_prob >= 1.0 && self.link.is_none()
    }
}

/// Full description of one synthetic household.
#[derive(Debug, Clone, PartialEq)]
pub struct HouseholdSpec {
    pub name: String,
    pub appliances: Vec<ApplianceSpec>,
    /// Appliances contributing to the total only.
    pub unmonitored: Vec<ApplianceSpec>,
    /// Constant background load, kW.
    pub base_load_kw: f64,
    /// Stationary std of a slow AR(1) drift added to the base load
    /// (weather-like level wander); 0 disables it.
    pub base_drift_std_kw: f64,
    /// AR(1) coefficient of the base drift; close to 1 means slow.
    pub base_drift_rho: f64,
    /// Meter noise on the total, kW.
    pub meter_noise_std_kw: f64,
    pub days: usize,
    pub seed: u64,
    pub start: i64,
}

impl HouseholdSpec {
    fn validate(&self) -> Result<()> {
        if self.days < 2 {
            return Err(Error::InvalidConfig(String::from("need at least 2 days")));
        }
        if self.appliances.is_empty() {
            return Err(Error::EmptyInput("household appliances"));
        }
        for a in self.appliances.iter().chain(&self.unmonitored) {
            a.validate()?;
        }
        Ok(())
    }
}

/// What was actually planted, for oracle tests.
#[derive(Debug, Clone, PartialEq)]
pub struct ApplianceTruth {
    pub id: u32,
    pub name: String,
    pub power_kw: f64,
    /// Population variance of the generated series, kW^2.
    pub variance_kw2: f64,
    /// This appliance's share of the summed monitored variances.
    pub variance_share: f64,
    /// Deterministic daily behaviour was planted.
    pub regular: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkTruth {
    pub from: String,
    pub to: String,
    pub lag_hours: i32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub appliances: Vec<ApplianceTruth>,
    pub links: Vec<LinkTruth>,
}

/// Activation bits for one appliance over the whole horizon.
fn activation_bits(spec: &ApplianceSpec, days: usize, rng: &mut Rng) -> Vec<bool> {
    let m = days * 24;
    let mut on = vec![false; m];
    for day in 0..days {
        for w in &spec.windows {
            let active = spec.on_prob >= 1.0 || rng.next_f64() < spec.on_prob;
            let shift = if spec.jitter_std_hours > 0.0 {
                libm::round(rng.normal() * spec.jitter_std_hours) as i64
            } else {
                0
            };
            if !active {
                continue;
            }
            let start = day as i64 * 24 + w.start_hour as i64 + shift;
            for h in start..start + w.len_hours as i64 {
                if (0..m as i64).contains(&h) {
                    on[h as usize] = true;
                }
            }
        }
    }
    on
}

fn loads_from_bits(spec: &ApplianceSpec, bits: &[bool], rng: &mut Rng) -> Vec<f64> {
    bits.iter()
        .map(|&on| {
            if on {
                if spec.noise_std_kw > 0.0 {
                    (spec.power_kw + rng.normal() * spec.noise_std_kw).max(0.0)
                } else {
                    spec.power_kw
                }
            } else {
                0.0
            }
        })
        .collect()
}

fn shift_bits(partner: &[bool], lag: i32) -> Vec<bool> {
    let m = partner.len() as i64;
    (0..m)
        .map(|t| {
            let src = t - lag as i64;
            (0..m).contains(&src) && partner[src as usize]
        })
        .collect()
}

/// Generates all appliance bit patterns, resolving links after their
/// partners. RNG streams are per-appliance, so one appliance's draws never
/// perturb another's.
fn generate_bits(
    specs: &[ApplianceSpec],
    days: usize,
    root: &Rng,
    label_base: u64,
) -> Result<Vec<Vec<bool>>> {
    let mut bits: Vec<Option<Vec<bool>>> = vec![None; specs.len()];
    // Non-linked first.
    for (i, spec) in specs.iter().enumerate() {
        if spec.link.is_none() {
            let mut rng = root.derive(label_base + i as u64);
            bits[i] = Some(activation_bits(spec, days, &mut rng));
        }
    }
    // Linked, possibly in chains.
    loop {
        let mut progressed = false;
        let mut unresolved = false;
        for i in 0..specs.len() {
            if bits[i].is_some() {
                continue;
            }
            let link = specs[i].link.as_ref().unwrap();
            let partner_idx = specs
                .iter()
                .position(|s| s.name == link.partner)
                .ok_or_else(|| {
                    Error::InvalidConfig(alloc::format!("unknown link partner '{}'", link.partner))
                })?;
            match &bits[partner_idx] {
                Some(p) => {
                    bits[i] = Some(shift_bits(p, link.lag_hours));
                    progressed = true;
                }
                None => unresolved = true,
            }
        }
        if !unresolved {
            break;
        }
        if !progressed {
            return Err(Error::InvalidConfig(String::from(
                "link cycle in household spec",
            )));
        }
    }
    Ok(bits.into_iter().map(|b| b.unwrap()).collect())
}

/// Generates the hourly panel and its ground truth.
pub fn generate_household(spec: &HouseholdSpec) -> Result<(AppliancePanel, GroundTruth)> {
    spec.validate()?;
    let root = Rng::new(spec.seed);
    let m = spec.days * 24;
    let index = TimeIndex::hourly(spec.start, m);

    let monitored_bits = generate_bits(&spec.appliances, spec.days, &root, 100)?;
    let unmonitored_bits = generate_bits(&spec.unmonitored, spec.days, &root, 500)?;

    let monitored_loads: Vec<Vec<f64>> = spec
        .appliances
        .iter()
        .zip(&monitored_bits)
        .enumerate()
        .map(|(i, (a, bits))| {
            let mut rng = root.derive(700 + i as u64);
            loads_from_bits(a, bits, &mut rng)
        })
        .collect();
    let unmonitored_loads: Vec<Vec<f64>> = spec
        .unmonitored
        .iter()
        .zip(&unmonitored_bits)
        .enumerate()
        .map(|(i, (a, bits))| {
            let mut rng = root.derive(800 + i as u64);
            loads_from_bits(a, bits, &mut rng)
        })
        .collect();

    let mut meter_rng = root.derive(900);
    let mut drift_rng = root.derive(901);
    let mut drift = 0.0f64;
    // Innovation variance scaled so the stationary std hits the configured one.
    let innovation_std = if spec.base_drift_std_kw > 0.0 {
        spec.base_drift_std_kw
            * (1.0 - spec.base_drift_rho * spec.base_drift_rho)
                .max(0.0)
                .sqrt()
    } else {
        0.0
    };
    let mut total = vec![0.0f64; m];
    for t in 0..m {
        let monitored_sum: f64 = monitored_loads.iter().map(|l| l[t]).sum();
        let unmonitored_sum: f64 = unmonitored_loads.iter().map(|l| l[t]).sum();
        let noise = if spec.meter_noise_std_kw > 0.0 {
            meter_rng.normal() * spec.meter_noise_std_kw
        } else {
            0.0
        };
        if innovation_std > 0.0 {
            drift = spec.base_drift_rho * drift + drift_rng.normal() * innovation_std;
        }
        // The meter never reads below what the sub-meters account for.
        total[t] = (spec.base_load_kw + drift + monitored_sum + unmonitored_sum + noise)
            .max(monitored_sum);
    }

    let meta: Vec<ApplianceMeta> = spec
        .appliances
        .iter()
        .enumerate()
        .map(|(i, a)| ApplianceMeta {
            id: i as u32 + 2,
            name: a.name.clone(),
        })
        .collect();
    let appliance_series: Vec<LoadSeries> = monitored_loads
        .iter()
        .map(|v| LoadSeries::from_values(index, v.clone()))
        .collect::<Result<_>>()?;
    let total_series = LoadSeries::from_values(index, total)?;
    let panel = AppliancePanel::new(meta, appliance_series, total_series)?;

    let variances: Vec<f64> = monitored_loads
        .iter()
        .map(|v| population_variance(v))
        .collect();
    let var_sum: f64 = variances.iter().sum();
    let appliances = spec
        .appliances
        .iter()
        .enumerate()
        .map(|(i, a)| ApplianceTruth {
            id: i as u32 + 2,
            name: a.name.clone(),
            power_kw: a.power_kw,
            variance_kw2: variances[i],
            variance_share: if var_sum > 0.0 {
                variances[i] / var_sum
            } else {
                0.0
            },
            regular: a.is_regular(),
        })
        .collect();
    let links = spec
        .appliances
        .iter()
        .filter_map(|a| {
            a.link.as_ref().map(|l| LinkTruth {
                from: l.partner.clone(),
                to: a.name.clone(),
                lag_hours: l.lag_hours,
            })
        })
        .collect();

    Ok((panel, GroundTruth { appliances, links }))
}

/// A named, ready-to-generate scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct PresetScenario {
    pub name: String,
    pub spec: HouseholdSpec,
}

/// Built-in scenarios with planted, verifiable structure.
#[allow(clippy::vec_init_then_push)]
pub fn preset_scenarios() -> Vec<PresetScenario> {
    let mut out = Vec::new();

    // Three dominant appliances carry nearly all the variance; three
    // negligible ones and a small unmonitored load are planted noise.
    out.push(PresetScenario {
        name: String::from("critical-vs-noise"),
        spec: HouseholdSpec {
            name: String::from("critical-vs-noise"),
            appliances: vec![
                ApplianceSpec::regular("oven", 2.0, 18, 4),
                ApplianceSpec::regular("washer", 1.5, 7, 2),
                ApplianceSpec::regular("heater", 1.2, 12, 3),
                ApplianceSpec {
                    name: String::from("lamp"),
                    power_kw: 0.02,
                    windows: vec![OnWindow {
                        start_hour: 19,
                        len_hours: 4,
                    }],
                    jitter_std_hours: 1.0,
                    on_prob: 0.5,
                    link: None,
                    noise_std_kw: 0.002,
                },
                ApplianceSpec {
                    name: String::from("charger"),
                    power_kw: 0.015,
                    windows: vec![OnWindow {
                        start_hour: 8,
                        len_hours: 10,
                    }],
                    jitter_std_hours: 2.0,
                    on_prob: 0.4,
                    link: None,
                    noise_std_kw: 0.002,
                },
                ApplianceSpec {
                    name: String::from("router"),
                    power_kw: 0.01,
                    windows: vec![OnWindow {
                        start_hour: 0,
                        len_hours: 24,
                    }],
                    jitter_std_hours: 0.0,
                    on_prob: 1.0,
                    link: None,
                    noise_std_kw: 0.001,
                },
            ],
            unmonitored: vec![ApplianceSpec {
                name: String::from("boiler"),
                power_kw: 0.1,
                windows: vec![OnWindow {
                    start_hour: 6,
                    len_hours: 1,
                }],
                jitter_std_hours: 0.5,
                on_prob: 0.8,
                link: None,
                noise_std_kw: 0.0,
            }],
            base_load_kw: 0.1,
            base_drift_std_kw: 0.0,
            base_drift_rho: 0.0,
            meter_noise_std_kw: 0.005,
            days: 30,
            seed: 2024,
            start: DEFAULT_START,
        },
    });

    // Two planted pairs (one simultaneous, one 2 h causal) plus two
    // independent stochastic appliances.
    out.push(PresetScenario {
        name: String::from("two-linked-groups"),
        spec: HouseholdSpec {
            name: String::from("two-linked-groups"),
            appliances: vec![
                ApplianceSpec::regular("kitchen-light", 0.5, 7, 2),
                ApplianceSpec {
                    name: String::from("rice-cooker"),
                    power_kw: 0.8,
                    windows: vec![],
                    jitter_std_hours: 0.0,
                    on_prob: 1.0,
                    link: Some(LinkSpec {
                        partner: String::from("kitchen-light"),
                        lag_hours: 0,
                    }),
                    noise_std_kw: 0.0,
                },
                ApplianceSpec::regular("tv", 0.6, 16, 3),
                ApplianceSpec {
                    name: String::from("bedside-lamp"),
                    power_kw: 0.3,
                    windows: vec![],
                    jitter_std_hours: 0.0,
                    on_prob: 1.0,
                    link: Some(LinkSpec {
                        partner: String::from("tv"),
                        lag_hours: 2,
                    }),
                    noise_std_kw: 0.0,
                },
                ApplianceSpec {
                    name: String::from("dishwasher"),
                    power_kw: 0.7,
                    windows: vec![OnWindow {
                        start_hour: 11,
                        len_hours: 2,
                    }],
                    jitter_std_hours: 1.0,
                    on_prob: 0.5,
                    link: None,
                    noise_std_kw: 0.0,
                },
                ApplianceSpec {
                    name: String::from("kettle"),
                    power_kw: 0.9,
                    windows: vec![OnWindow {
                        start_hour: 1,
                        len_hours: 2,
                    }],
                    jitter_std_hours: 1.0,
                    on_prob: 0.5,
                    link: None,
                    noise_std_kw: 0.0,
                },
            ],
            unmonitored: vec![],
            base_load_kw: 0.15,
            base_drift_std_kw: 0.0,
            base_drift_rho: 0.0,
            meter_noise_std_kw: 0.005,
            days: 60,
            seed: 77,
            start: DEFAULT_START,
        },
    });

    // Equal rated power, opposite regularity.
    out.push(PresetScenario {
        name: String::from("periodic-vs-erratic"),
        spec: HouseholdSpec {
            name: String::from("periodic-vs-erratic"),
            appliances: vec![
                ApplianceSpec::regular("cooker", 1.0, 8, 2),
                ApplianceSpec {
                    name: String::from("console"),
                    power_kw: 1.0,
                    windows: vec![OnWindow {
                        start_hour: 14,
                        len_hours: 4,
                    }],
                    jitter_std_hours: 2.5,
                    on_prob: 0.6,
                    link: None,
                    noise_std_kw: 0.0,
                },
            ],
            unmonitored: vec![],
            base_load_kw: 0.1,
            base_drift_std_kw: 0.0,
            base_drift_rho: 0.0,
            meter_noise_std_kw: 0.0,
            days: 30,
            seed: 7,
            start: DEFAULT_START,
        },
    });

    // Forecasting benchmark: dominated by three semi-regular appliances
    // (enough jitter that history genuinely matters), three planted noise
    // appliances, and an unmonitored gap.
    out.push(PresetScenario {
        name: String::from("forecast-bench"),
        spec: HouseholdSpec {
            name: String::from("forecast-bench"),
            appliances: vec![
                ApplianceSpec {
                    name: String::from("oven"),
                    power_kw: 2.0,
                    windows: vec![OnWindow {
                        start_hour: 18,
                        len_hours: 4,
                    }],
                    jitter_std_hours: 0.75,
                    on_prob: 0.9,
                    link: None,
                    noise_std_kw: 0.02,
                },
                ApplianceSpec {
                    name: String::from("washer"),
                    power_kw: 1.5,
                    windows: vec![OnWindow {
                        start_hour: 7,
                        len_hours: 3,
                    }],
                    jitter_std_hours: 0.75,
                    on_prob: 0.85,
                    link: None,
                    noise_std_kw: 0.02,
                },
                ApplianceSpec {
                    name: String::from("dryer"),
                    power_kw: 1.2,
                    windows: vec![],
                    jitter_std_hours: 0.0,
                    on_prob: 1.0,
                    link: Some(LinkSpec {
                        partner: String::from("washer"),
                        lag_hours: 2,
                    }),
                    noise_std_kw: 0.02,
                },
                ApplianceSpec {
                    name: String::from("lamp"),
                    power_kw: 0.03,
                    windows: vec![OnWindow {
                        start_hour: 20,
                        len_hours: 3,
                    }],
                    jitter_std_hours: 1.5,
                    on_prob: 0.5,
                    link: None,
                    noise_std_kw: 0.003,
                },
                ApplianceSpec {
                    name: String::from("charger"),
                    power_kw: 0.02,
                    windows: vec![OnWindow {
                        start_hour: 9,
                        len_hours: 8,
                    }],
                    jitter_std_hours: 2.0,
                    on_prob: 0.4,
                    link: None,
                    noise_std_kw: 0.003,
                },
                ApplianceSpec {
                    name: String::from("fan"),
                    power_kw: 0.025,
                    windows: vec![OnWindow {
                        start_hour: 2,
                        len_hours: 3,
                    }],
                    jitter_std_hours: 2.0,
                    on_prob: 0.5,
                    link: None,
                    noise_std_kw: 0.003,
                },
            ],
            unmonitored: vec![ApplianceSpec {
                name: String::from("boiler"),
                power_kw: 0.12,
                windows: vec![OnWindow {
                    start_hour: 6,
                    len_hours: 2,
                }],
                jitter_std_hours: 1.0,
                on_prob: 0.7,
                link: None,
                noise_std_kw: 0.0,
            }],
            base_load_kw: 0.25,
            base_drift_std_kw: 0.08,
            base_drift_rho: 0.98,
            meter_noise_std_kw: 0.005,
            days: 60,
            seed: 321,
            start: DEFAULT_START,
        },
    });

    out
}

/// Convenience: preset by name.
pub fn preset_by_name(name: &str) -> Option<HouseholdSpec> {
    preset_scenarios()
        .into_iter()
        .find(|p| p.name == name)
        .map(|p| p.spec)
}
