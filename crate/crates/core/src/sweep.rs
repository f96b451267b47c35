//! Patterning classification over a (receptor, channel-length) grid.
//!
//! Each grid cell is an independent two-compartment scalar analysis, so the
//! sweep is data-parallel. With the `parallel` feature the cells run on the
//! rayon pool; the sequential path is kept both as the fallback build and for
//! benchmarking, and both orderings produce identical grids.

use serde::Serialize;

use crate::channel1d::corrected_edge;
use crate::error::{Error, Result};
use crate::kinetics::ParameterSet;
use crate::patterning::{
    classify_patterning, find_fixed_points, FixedPoint, PatternMap, PatternOutcome,
};
use crate::util::{linspace, log_spaced};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Grid specification; lengths in meters, concentrations in molar.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub receptor_min: f64,
    pub receptor_max: f64,
    pub receptor_points: usize,
    pub length_min: f64,
    pub length_max: f64,
    pub length_points: usize,
    /// Log-spaced length axis instead of linear.
    pub length_log: bool,
    /// Channel width as length / factor.
    pub width_factor: f64,
    pub diffusivity: f64,
    /// Apply the lumped channel-loss correction to the coupling.
    pub channel_loss_correction: bool,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            receptor_min: 1e-10,
            receptor_max: 1e-4,
            receptor_points: 64,
            length_min: 0.1e-3,
            length_max: 6.0e-3,
            length_points: 64,
            length_log: false,
            width_factor: 1.0,
            diffusivity: 4.9e-10,
            channel_loss_correction: false,
        }
    }
}

impl SweepSpec {
    fn validate(&self) -> Result<()> {
        if !(self.receptor_min > 0.0 && self.receptor_max > self.receptor_min) {
            return Err(Error::domain("receptor axis must be positive and increasing"));
        }
        if !(self.length_min > 0.0 && self.length_max > self.length_min) {
            return Err(Error::domain("length axis must be positive and increasing"));
        }
        if self.receptor_points < 2 || self.length_points < 2 {
            return Err(Error::domain("each axis needs at least two points"));
        }
        if !(self.width_factor > 0.0 && self.diffusivity > 0.0) {
            return Err(Error::domain("width factor and diffusivity must be positive"));
        }
        Ok(())
    }

    pub fn receptor_axis(&self) -> Vec<f64> {
        log_spaced(self.receptor_min, self.receptor_max, self.receptor_points)
    }

    pub fn length_axis(&self) -> Vec<f64> {
        if self.length_log {
            log_spaced(self.length_min, self.length_max, self.length_points)
        } else {
            linspace(self.length_min, self.length_max, self.length_points)
        }
    }
}

/// Classification of one grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CellOutcome {
    Homogeneous,
    Patterned,
    /// The near-homogeneous slope sits inside the marginal band.
    Marginal,
}

impl CellOutcome {
    /// Matrix encoding used by the CSV export.
    pub fn code(&self) -> u8 {
        match self {
            CellOutcome::Homogeneous => 0,
            CellOutcome::Patterned => 1,
            CellOutcome::Marginal => 2,
        }
    }
}

/// One evaluated grid cell; failures are recorded, never propagated.
#[derive(Debug, Clone, Serialize)]
pub struct SweepCell {
    pub receptor_total: f64,
    /// Channel length (m).
    pub length: f64,
    pub outcome: Option<CellOutcome>,
    pub near_slope: Option<f64>,
    pub fixed_points: Vec<FixedPoint>,
    pub error: Option<String>,
}

/// The full evaluated grid, row-major in channel length.
#[derive(Debug, Clone, Serialize)]
pub struct SweepGrid {
    pub receptor_axis: Vec<f64>,
    pub length_axis: Vec<f64>,
    pub cells: Vec<Vec<SweepCell>>,
}

impl SweepGrid {
    pub fn cell(&self, length_idx: usize, receptor_idx: usize) -> &SweepCell {
        &self.cells[length_idx][receptor_idx]
    }

    /// Indices of the cell nearest to a query point (log-space distance on
    /// the receptor axis).
    pub fn nearest(&self, receptor_total: f64, length: f64) -> (usize, usize) {
        let li = self
            .length_axis
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| {
                let da = (*a - length).abs();
                let db = (*b - length).abs();
                da.partial_cmp(&db).unwrap()
            })
            .map(|(i, _)| i)
            .unwrap();
        let ri = self
            .receptor_axis
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| {
                let da = (a.ln() - receptor_total.ln()).abs();
                let db = (b.ln() - receptor_total.ln()).abs();
                da.partial_cmp(&db).unwrap()
            })
            .map(|(i, _)| i)
            .unwrap();
        (li, ri)
    }
}

/// How the grid cells are executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    #[cfg(feature = "parallel")]
    Parallel,
}

impl Execution {
    /// Parallel when the build supports it, sequential otherwise.
    pub fn preferred() -> Self {
        #[cfg(feature = "parallel")]
        {
            Execution::Parallel
        }
        #[cfg(not(feature = "parallel"))]
        {
            Execution::Sequential
        }
    }
}

/// Caps the global worker pool; call once, before the first parallel sweep.
#[cfg(feature = "parallel")]
pub fn configure_thread_pool(threads: usize) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Classifies one (receptor, length) point of the two-compartment system.
pub fn classify_cell(
    params_a: &ParameterSet,
    params_b: &ParameterSet,
    spec: &SweepSpec,
    receptor_total: f64,
    length: f64,
) -> SweepCell {
    let mut pa = params_a.clone();
    let mut pb = params_b.clone();
    pa.receptor_total = receptor_total;
    pb.receptor_total = receptor_total;

    let width = length / spec.width_factor;
    let map = if spec.channel_loss_correction {
        let edge_x = corrected_edge(pa.ahl_decay, spec.diffusivity, length, width);
        let edge_y = corrected_edge(pb.ahl_decay, spec.diffusivity, length, width);
        PatternMap::two_compartment_corrected(&pa, &pb, edge_x, edge_y)
    } else {
        let d = spec.diffusivity / (length * width);
        PatternMap::new(&pa, &pb, d, d)
    };

    match find_fixed_points(&map, None) {
        Ok(report) => {
            let outcome = match classify_patterning(&report) {
                PatternOutcome::Patterned => CellOutcome::Patterned,
                PatternOutcome::Homogeneous if report.marginal => CellOutcome::Marginal,
                PatternOutcome::Homogeneous => CellOutcome::Homogeneous,
            };
            let near = report.points[report.near_homogeneous];
            SweepCell {
                receptor_total,
                length,
                outcome: Some(outcome),
                near_slope: Some(near.slope),
                fixed_points: report.points,
                error: None,
            }
        }
        Err(e) => SweepCell {
            receptor_total,
            length,
            outcome: None,
            near_slope: None,
            fixed_points: Vec::new(),
            error: Some(e.to_string()),
        },
    }
}

/// Evaluates the whole grid. Results are ordered by the axes regardless of
/// the execution mode.
pub fn run_sweep(
    params_a: &ParameterSet,
    params_b: &ParameterSet,
    spec: &SweepSpec,
    execution: Execution,
) -> Result<SweepGrid> {
    spec.validate()?;
    params_a.validate()?;
    params_b.validate()?;
    let receptor_axis = spec.receptor_axis();
    let length_axis = spec.length_axis();

    let indices: Vec<(usize, usize)> = (0..length_axis.len())
        .flat_map(|li| (0..receptor_axis.len()).map(move |ri| (li, ri)))
        .collect();

    let eval = |&(li, ri): &(usize, usize)| {
        classify_cell(params_a, params_b, spec, receptor_axis[ri], length_axis[li])
    };

    let flat: Vec<SweepCell> = match execution {
        Execution::Sequential => indices.iter().map(eval).collect(),
        #[cfg(feature = "parallel")]
        Execution::Parallel => indices.par_iter().map(eval).collect(),
    };

    let mut rows = Vec::with_capacity(length_axis.len());
    let mut it = flat.into_iter();
    for _ in 0..length_axis.len() {
        rows.push(it.by_ref().take(receptor_axis.len()).collect());
    }
    Ok(SweepGrid { receptor_axis, length_axis, cells: rows })
}

/// Finds a channel length beyond which the (loss-corrected) two-compartment
/// system stops patterning, by doubling from `start` up to `limit`.
/// Returns the first homogeneous length, or `None` if patterning persists
/// to the limit. A receptor level that never patterns reports `start`.
pub fn patterning_length_cap(
    params: &ParameterSet,
    receptor_total: f64,
    spec: &SweepSpec,
    start: f64,
    limit: f64,
) -> Option<f64> {
    let corrected = SweepSpec { channel_loss_correction: true, ..spec.clone() };
    let mut length = start;
    while length <= limit {
        let cell = classify_cell(params, params, &corrected, receptor_total, length);
        match cell.outcome {
            Some(CellOutcome::Patterned) | Some(CellOutcome::Marginal) => length *= 2.0,
            Some(CellOutcome::Homogeneous) => return Some(length),
            None => return None,
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::assert_rel;

    fn small_spec() -> SweepSpec {
        SweepSpec {
            receptor_min: 1e-9,
            receptor_max: 1e-5,
            receptor_points: 7,
            length_min: 0.2e-3,
            length_max: 4e-3,
            length_points: 5,
            ..SweepSpec::default()
        }
    }

    #[test]
    fn axes_cover_their_ranges() {
        let spec = small_spec();
        let r = spec.receptor_axis();
        let l = spec.length_axis();
        assert_eq!(r.len(), 7);
        assert_eq!(l.len(), 5);
        assert_rel(r[0], 1e-9, 1e-12);
        assert_rel(*r.last().unwrap(), 1e-5, 1e-12);
        assert_rel(l[0], 0.2e-3, 1e-12);
        assert_rel(*l.last().unwrap(), 4e-3, 1e-12);
    }

    #[test]
    fn nominal_cell_is_patterned() {
        let p = ParameterSet::default();
        let cell = classify_cell(&p, &p, &SweepSpec::default(), 5e-7, 500e-6);
        assert_eq!(cell.outcome, Some(CellOutcome::Patterned));
        assert_eq!(cell.fixed_points.len(), 3);
        assert!(cell.near_slope.unwrap() > 1.0);
    }

    #[test]
    fn extreme_receptor_levels_are_homogeneous() {
        let p = ParameterSet::default();
        let spec = SweepSpec::default();
        for receptor in [1e-12, 1e-3] {
            for length in [0.1e-3, 0.5e-3, 3e-3, 6e-3] {
                let cell = classify_cell(&p, &p, &spec, receptor, length);
                assert_eq!(
                    cell.outcome,
                    Some(CellOutcome::Homogeneous),
                    "receptor {receptor:.1e}, length {length:.1e}"
                );
            }
        }
    }

    #[test]
    fn grid_is_complete_and_ordered() {
        let p = ParameterSet::default();
        let grid = run_sweep(&p, &p, &small_spec(), Execution::Sequential).unwrap();
        assert_eq!(grid.cells.len(), 5);
        for (li, row) in grid.cells.iter().enumerate() {
            assert_eq!(row.len(), 7);
            for (ri, cell) in row.iter().enumerate() {
                assert_eq!(cell.length, grid.length_axis[li]);
                assert_eq!(cell.receptor_total, grid.receptor_axis[ri]);
                assert!(cell.outcome.is_some(), "cell ({li},{ri}) failed: {:?}", cell.error);
            }
        }
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn parallel_and_sequential_grids_are_identical() {
        let p = ParameterSet::default();
        let spec = small_spec();
        let a = run_sweep(&p, &p, &spec, Execution::Sequential).unwrap();
        let b = run_sweep(&p, &p, &spec, Execution::Parallel).unwrap();
        let ja = serde_json::to_string(&a).unwrap();
        let jb = serde_json::to_string(&b).unwrap();
        assert_eq!(ja, jb);
    }

    #[test]
    fn nearest_picks_the_closest_cell() {
        let p = ParameterSet::default();
        let grid = run_sweep(&p, &p, &small_spec(), Execution::Sequential).unwrap();
        let (li, ri) = grid.nearest(5e-7, 0.5e-3);
        assert!((grid.length_axis[li] - 0.5e-3).abs() < 1e-3);
        let best: f64 = grid.receptor_axis[ri];
        for r in &grid.receptor_axis {
            assert!((best.ln() - (5e-7f64).ln()).abs() <= (r.ln() - (5e-7f64).ln()).abs() + 1e-12);
        }
    }

    #[test]
    fn length_cap_exists_under_channel_loss() {
        let p = ParameterSet::default();
        let spec = SweepSpec::default();
        // The nominal receptor level patterns at short channels; with the
        // loss correction the patterned band must close at a finite length.
        let cap = patterning_length_cap(&p, 5e-7, &spec, 0.5e-3, 0.2).unwrap();
        assert!(cap > 0.5e-3 && cap < 0.05, "cap {cap:.3e} m");
        // A level that never patterns caps immediately.
        let trivial = patterning_length_cap(&p, 1e-12, &spec, 0.5e-3, 0.2).unwrap();
        assert_rel(trivial, 0.5e-3, 1e-12);
    }

    #[test]
    fn patterned_receptor_band_is_contiguous_at_short_lengths() {
        let p = ParameterSet::default();
        let spec = SweepSpec::default();
        for length in [0.3e-3, 0.5e-3, 1e-3] {
            let mut runs = 0usize;
            let mut inside = false;
            for receptor in crate::util::log_spaced(1e-12, 1e-3, 128) {
                let patterned = classify_cell(&p, &p, &spec, receptor, length).outcome
                    == Some(CellOutcome::Patterned);
                if patterned && !inside {
                    runs += 1;
                }
                inside = patterned;
            }
            assert_eq!(runs, 1, "non-contiguous band at {length:.1e} m");
        }
    }

    #[test]
    fn marginal_band_classification_is_reachable() {
        // Scan a fine slope transect and require the patterned flag to flip
        // without any spurious failures.
        let p = ParameterSet::default();
        let spec = SweepSpec::default();
        let mut saw_patterned = false;
        let mut saw_homogeneous = false;
        for receptor in crate::util::log_spaced(1e-9, 1e-3, 40) {
            let cell = classify_cell(&p, &p, &spec, receptor, 500e-6);
            match cell.outcome.unwrap() {
                CellOutcome::Patterned => saw_patterned = true,
                CellOutcome::Homogeneous => saw_homogeneous = true,
                CellOutcome::Marginal => {}
            }
        }
        assert!(saw_patterned && saw_homogeneous);
    }
}
