//! Aligned per-appliance loads plus the total load of one household or
//! building.
//!
//! Construction enforces the physical constraint that the monitored
//! appliances cannot sum to more than the total they are part of. Hours that
//! violate it beyond a small per-appliance slack (sub-meter calibration
//! drift) are masked on every series rather than rejected.

use alloc::string::String;
use alloc::vec::Vec;

use crate::series::{LoadSeries, TimeIndex};
use crate::{Error, Result};

/// Absolute slack per appliance, in kW, allowed when checking that appliance
/// loads sum to at most the total.
pub const SUM_SLACK_KW: f64 = 1e-6;

/// Identity of one monitored appliance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApplianceMeta {
    pub id: u32,
    pub name: String,
}

/// Total load plus per-appliance loads on one shared hourly index.
#[derive(Debug, Clone)]
pub struct AppliancePanel {
    meta: Vec<ApplianceMeta>,
    appliance_loads: Vec<LoadSeries>,
    total_load: LoadSeries,
    /// Hours masked at construction because appliance loads exceeded the total.
    violations: usize,
}

impl AppliancePanel {
    /// Builds a panel, checking shared indexing, unique ids, and the
    /// sum-at-most-total constraint. Violating hours are masked on all series
    /// and counted in [`AppliancePanel::violations`].
    pub fn new(
        meta: Vec<ApplianceMeta>,
        appliance_loads: Vec<LoadSeries>,
        total_load: LoadSeries,
    ) -> Result<Self> {
        if meta.len() != appliance_loads.len() {
            return Err(Error::LengthMismatch {
                left: meta.len(),
                right: appliance_loads.len(),
            });
        }
        for (i, a) in meta.iter().enumerate() {
            if meta[..i].iter().any(|b| b.id == a.id) {
                return Err(Error::InvalidConfig(String::from("duplicate appliance id")));
            }
        }
        let index = *total_load.index();
        for s in &appliance_loads {
            if *s.index() != index {
                return Err(Error::IndexMismatch);
            }
        }

        let mut panel = AppliancePanel {
            meta,
            appliance_loads,
            total_load,
            violations: 0,
        };
        panel.mask_sum_violations();
        Ok(panel)
    }

    fn mask_sum_violations(&mut self) {
        let len = self.total_load.len();
        for t in 0..len {
            let Some(total) = self.total_load.get(t) else {
                continue;
            };
            let mut sum = 0.0;
            let mut n_valid = 0usize;
            for s in &self.appliance_loads {
                if let Some(v) = s.get(t) {
                    sum += v;
                    n_valid += 1;
                }
            }
            if sum > total + SUM_SLACK_KW * n_valid.max(1) as f64 {
                self.total_load.invalidate(t);
                for s in &mut self.appliance_loads {
                    s.invalidate(t);
                }
                self.violations += 1;
            }
        }
    }

    pub fn index(&self) -> &TimeIndex {
        self.total_load.index()
    }

    pub fn len(&self) -> usize {
        self.total_load.len()
    }

    pub fn is_empty(&self) -> bool {
        self.total_load.is_empty()
    }

    /// Number of monitored appliances.
    pub fn appliance_count(&self) -> usize {
        self.meta.len()
    }

    pub fn meta(&self) -> &[ApplianceMeta] {
        &self.meta
    }

    pub fn appliance_loads(&self) -> &[LoadSeries] {
        &self.appliance_loads
    }

    pub fn total_load(&self) -> &LoadSeries {
        &self.total_load
    }

    /// Hours masked at construction for violating the sum constraint.
    pub fn violations(&self) -> usize {
        self.violations
    }

    /// Appliance series by id.
    pub fn appliance_by_id(&self, id: u32) -> Option<(&ApplianceMeta, &LoadSeries)> {
        self.meta
            .iter()
            .position(|m| m.id == id)
            .map(|i| (&self.meta[i], &self.appliance_loads[i]))
    }

    /// Name of an appliance id, or its number when unknown.
    pub fn name_of(&self, id: u32) -> String {
        self.appliance_by_id(id)
            .map(|(m, _)| m.name.clone())
            .unwrap_or_else(|| alloc::format!("channel_{id}"))
    }

    /// Panel truncated to timestamps `[start, end)` (epoch-seconds).
    ///
    /// `start` is rounded up and `end` rounded down to the sample grid.
    pub fn align(&self, start: i64, end: i64) -> Result<AppliancePanel> {
        let idx = self.index();
        let step = idx.step();
        let first_ts = idx.start().max(start);
        // Round up to the grid.
        let rel = first_ts - idx.start();
        let from_ts = idx.start() + (rel + step - 1).div_euclid(step) * step;
        let from = ((from_ts - idx.start()) / step) as usize;
        let last_ts = end.min(idx.timestamp(idx.len()));
        if last_ts <= from_ts || from >= idx.len() {
            return Err(Error::EmptyRange);
        }
        let to = from + ((last_ts - from_ts) as u64 / step as u64) as usize;
        if to <= from {
            return Err(Error::EmptyRange);
        }

        let appliance_loads: Vec<LoadSeries> = self
            .appliance_loads
            .iter()
            .map(|s| s.slice(from, to))
            .collect::<Result<_>>()?;
        Ok(AppliancePanel {
            meta: self.meta.clone(),
            appliance_loads,
            total_load: self.total_load.slice(from, to)?,
            violations: self.violations,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn series(values: &[f64]) -> LoadSeries {
        LoadSeries::from_values(TimeIndex::hourly(0, values.len()), values.to_vec()).unwrap()
    }

    fn meta(pairs: &[(u32, &str)]) -> Vec<ApplianceMeta> {
        pairs
            .iter()
            .map(|&(id, name)| ApplianceMeta {
                id,
                name: String::from(name),
            })
            .collect()
    }

    #[test]
    fn valid_panel_keeps_all_hours() {
        let panel = AppliancePanel::new(
            meta(&[(2, "fridge"), (3, "kettle")]),
            vec![series(&[0.1, 0.1, 0.1]), series(&[0.0, 2.0, 0.0])],
            series(&[0.5, 2.5, 0.5]),
        )
        .unwrap();
        assert_eq!(panel.violations(), 0);
        assert_eq!(panel.total_load().valid_count(), 3);
    }

    #[test]
    fn sum_violation_masks_hour_everywhere() {
        let panel = AppliancePanel::new(
            meta(&[(2, "a"), (3, "b")]),
            vec![series(&[0.4, 0.4, 0.4]), series(&[0.4, 0.4, 0.4])],
            series(&[1.0, 0.5, 1.0]),
        )
        .unwrap();
        assert_eq!(panel.violations(), 1);
        assert!(!panel.total_load().is_valid(1));
        assert!(!panel.appliance_loads()[0].is_valid(1));
        assert!(!panel.appliance_loads()[1].is_valid(1));
        assert!(panel.total_load().is_valid(0) && panel.total_load().is_valid(2));
    }

    #[test]
    fn slack_tolerates_calibration_drift() {
        // Sum exceeds total by less than one slack unit per appliance.
        let panel = AppliancePanel::new(
            meta(&[(2, "a")]),
            vec![series(&[1.0 + 0.5e-6])],
            series(&[1.0]),
        )
        .unwrap();
        assert_eq!(panel.violations(), 0);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let err = AppliancePanel::new(
            meta(&[(2, "a"), (2, "b")]),
            vec![series(&[0.0]), series(&[0.0])],
            series(&[1.0]),
        );
        assert!(err.is_err());
    }

    #[test]
    fn align_slices_by_timestamp() {
        let total = series(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let panel = AppliancePanel::new(meta(&[(2, "a")]), vec![series(&[0.0; 6])], total).unwrap();

        let full = panel.align(0, 6 * 3600).unwrap();
        assert_eq!(full.len(), 6);

        let part = panel.align(2 * 3600, 5 * 3600).unwrap();
        assert_eq!(part.len(), 3);
        assert_eq!(part.index().start(), 2 * 3600);
        assert_eq!(part.total_load().values(), &[3.0, 4.0, 5.0]);

        assert_eq!(
            panel.align(100 * 3600, 200 * 3600).unwrap_err(),
            Error::EmptyRange
        );
    }
}
