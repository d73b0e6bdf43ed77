//! Measurement collection: uniform random placement and momentum random
//! walks over the outdoor cells of a simulated field.
//!
//! Measured values are copied from the field exactly; no measurement noise
//! is modeled.

use rand::seq::index::sample as index_sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Measurement, MeasurementSet, OutdoorMask, SignalField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleMode {
    Uniform,
    Trajectory,
}

impl std::fmt::Display for SampleMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SampleMode::Uniform => write!(f, "uniform"),
            SampleMode::Trajectory => write!(f, "trajectory"),
        }
    }
}

impl std::str::FromStr for SampleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(SampleMode::Uniform),
            "trajectory" => Ok(SampleMode::Trajectory),
            other => Err(Error::InvalidParameter(format!("unknown sample mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub mode: SampleMode,
    /// Number of measurements as a fraction of the total cell count.
    pub fraction: f64,
    /// Probability of repeating the previous move direction.
    pub momentum_p: f64,
    pub seed: u64,
}

impl SamplerConfig {
    pub fn new(mode: SampleMode, fraction: f64, seed: u64) -> Self {
        Self { mode, fraction, momentum_p: 0.9, seed }
    }

    fn validate(&self) -> Result<()> {
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "fraction {} outside (0, 1]",
                self.fraction
            )));
        }
        if !(0.0..=1.0).contains(&self.momentum_p) {
            return Err(Error::InvalidParameter(format!(
                "momentum probability {} outside [0, 1]",
                self.momentum_p
            )));
        }
        Ok(())
    }
}

/// Measurement count: fraction of the cell count, rounded half up.
pub fn measurement_count(fraction: f64, cell_count: usize) -> usize {
    (fraction * cell_count as f64 + 0.5).floor() as usize
}

/// Dispatch on the configured mode.
pub fn sample(field: &SignalField, mask: &OutdoorMask, cfg: &SamplerConfig) -> Result<MeasurementSet> {
    match cfg.mode {
        SampleMode::Uniform => sample_uniform(field, mask, cfg),
        SampleMode::Trajectory => sample_trajectory(field, mask, cfg),
    }
}

/// Uniformly random distinct outdoor cells, without replacement.
pub fn sample_uniform(field: &SignalField, mask: &OutdoorMask, cfg: &SamplerConfig) -> Result<MeasurementSet> {
    cfg.validate()?;
    check_shapes(field, mask)?;
    let n = mask.grid().cells_per_side();
    let m = measurement_count(cfg.fraction, mask.grid().cell_count());
    let outdoor = mask.outdoor_indices();
    if m > outdoor.len() {
        return Err(Error::Capacity(format!(
            "requested {m} measurements but only {} outdoor cells exist",
            outdoor.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut picks: Vec<usize> =
        index_sample(&mut rng, outdoor.len(), m).into_iter().map(|k| outdoor[k]).collect();
    picks.sort_unstable();
    let entries = picks
        .into_iter()
        .map(|idx| Measurement { row: idx / n, col: idx % n, value_dbm: field.as_slice()[idx] })
        .collect();
    MeasurementSet::new(entries)
}

const DIRECTIONS: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];

/// Momentum random walk over outdoor cells. Starting from a uniformly
/// chosen outdoor cell, each step repeats the previous direction with
/// probability `p` when that move stays legal, and otherwise turns into a
/// uniformly chosen different legal direction. The walk runs until `m`
/// distinct cells have been visited; each distinct cell contributes one
/// measurement, in first-visit order.
pub fn sample_trajectory(field: &SignalField, mask: &OutdoorMask, cfg: &SamplerConfig) -> Result<MeasurementSet> {
    cfg.validate()?;
    check_shapes(field, mask)?;
    let grid = mask.grid();
    let n = grid.cells_per_side();
    let m = measurement_count(cfg.fraction, grid.cell_count());
    let outdoor = mask.outdoor_indices();
    if m > outdoor.len() {
        return Err(Error::Capacity(format!(
            "requested {m} measurements but only {} outdoor cells exist",
            outdoor.len()
        )));
    }
    if m == 0 {
        return MeasurementSet::new(Vec::new());
    }

    let path = walk_path(mask, cfg, m)?;
    let mut visited = vec![false; grid.cell_count()];
    let mut entries: Vec<Measurement> = Vec::with_capacity(m);
    for idx in path {
        if !visited[idx] {
            visited[idx] = true;
            entries.push(Measurement { row: idx / n, col: idx % n, value_dbm: field.as_slice()[idx] });
        }
    }
    MeasurementSet::new(entries)
}

/// Raw walk positions (including revisits) until `m` distinct outdoor cells
/// have been touched.
fn walk_path(mask: &OutdoorMask, cfg: &SamplerConfig, m: usize) -> Result<Vec<usize>> {
    let grid = mask.grid();
    let n = grid.cells_per_side();
    let outdoor = mask.outdoor_indices();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let start = outdoor[rng.random_range(0..outdoor.len())];

    // The walk can only ever reach the start cell's 4-connected component.
    let component = component_size(mask, start);
    if component < m {
        return Err(Error::Capacity(format!(
            "walk start is confined to a {component}-cell region, {m} measurements requested"
        )));
    }

    let mut visited = vec![false; grid.cell_count()];
    visited[start] = true;
    let mut distinct = 1usize;
    let mut path = vec![start];
    let mut pos = (start / n, start % n);
    let mut prev_dir: Option<(isize, isize)> = None;
    let step_cap = 10_000usize.saturating_mul(grid.cell_count());
    let mut steps = 0usize;
    while distinct < m {
        steps += 1;
        if steps > step_cap {
            return Err(Error::Numerical(format!(
                "trajectory walk exceeded {step_cap} steps with {distinct}/{m} cells visited"
            )));
        }
        let legal: Vec<(isize, isize)> = DIRECTIONS
            .iter()
            .copied()
            .filter(|(dr, dc)| {
                let r = pos.0 as isize + dr;
                let c = pos.1 as isize + dc;
                r >= 0 && c >= 0 && (r as usize) < n && (c as usize) < n && mask.is_outdoor(r as usize, c as usize)
            })
            .collect();
        if legal.is_empty() {
            // unreachable given the component check; defensive
            return Err(Error::Capacity("walk is stuck on an isolated cell".into()));
        }
        let dir = match prev_dir {
            Some(pd) if legal.contains(&pd) && rng.random::<f64>() < cfg.momentum_p => pd,
            prev => {
                let turns: Vec<(isize, isize)> =
                    legal.iter().copied().filter(|d| Some(*d) != prev).collect();
                if turns.is_empty() {
                    legal[0]
                } else {
                    turns[rng.random_range(0..turns.len())]
                }
            }
        };
        pos = ((pos.0 as isize + dir.0) as usize, (pos.1 as isize + dir.1) as usize);
        prev_dir = Some(dir);
        let idx = pos.0 * n + pos.1;
        if !visited[idx] {
            visited[idx] = true;
            distinct += 1;
        }
        path.push(idx);
    }
    Ok(path)
}

fn check_shapes(field: &SignalField, mask: &OutdoorMask) -> Result<()> {
    if field.grid() != mask.grid() {
        return Err(Error::ShapeMismatch("field and mask grids differ".into()));
    }
    Ok(())
}

fn component_size(mask: &OutdoorMask, start: usize) -> usize {
    let n = mask.grid().cells_per_side();
    let mut seen = vec![false; mask.grid().cell_count()];
    let mut stack = vec![start];
    seen[start] = true;
    let mut count = 0usize;
    while let Some(idx) = stack.pop() {
        count += 1;
        let (r, c) = (idx / n, idx % n);
        for (dr, dc) in DIRECTIONS {
            let rr = r as isize + dr;
            let cc = c as isize + dc;
            if rr < 0 || cc < 0 || rr as usize >= n || cc as usize >= n {
                continue;
            }
            let j = rr as usize * n + cc as usize;
            if !seen[j] && mask.is_outdoor(rr as usize, cc as usize) {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Grid, HeightMap, OutdoorMask, SignalField};

    fn open_scene(n: usize) -> (SignalField, OutdoorMask) {
        let grid = Grid::new(n as f64 * 4.0, 4.0).unwrap();
        let values: Vec<f64> = (0..grid.cell_count()).map(|i| -40.0 - i as f64 * 0.01).collect();
        let field = SignalField::new(grid, values).unwrap();
        let mask = crate::grid::outdoor_mask(&HeightMap::flat(grid), 60.0).unwrap();
        (field, mask)
    }

    #[test]
    fn uniform_count_examples() {
        assert_eq!(measurement_count(0.005, 64 * 64), 20);
        assert_eq!(measurement_count(0.003, 64 * 64), 12);
        assert_eq!(measurement_count(0.03, 64 * 64), 123);
        assert_eq!(measurement_count(1.0, 64 * 64), 4096);
    }

    #[test]
    fn uniform_basic_contract() {
        let (field, mask) = open_scene(64);
        let cfg = SamplerConfig::new(SampleMode::Uniform, 0.005, 3);
        let ms = sample_uniform(&field, &mask, &cfg).unwrap();
        assert_eq!(ms.len(), 20);
        ms.validate_outdoor(&mask).unwrap();
        for m in ms.iter() {
            assert_eq!(m.value_dbm, field.get(m.row, m.col), "values copied exactly");
        }
        // fraction = 1 measures every cell once
        let all = sample_uniform(&field, &mask, &SamplerConfig::new(SampleMode::Uniform, 1.0, 3)).unwrap();
        assert_eq!(all.len(), mask.outdoor_count());
    }

    #[test]
    fn uniform_deterministic() {
        let (field, mask) = open_scene(32);
        let cfg = SamplerConfig::new(SampleMode::Uniform, 0.02, 17);
        assert_eq!(sample_uniform(&field, &mask, &cfg).unwrap(), sample_uniform(&field, &mask, &cfg).unwrap());
    }

    #[test]
    fn uniform_capacity_error() {
        let grid = Grid::new(16.0, 4.0).unwrap();
        let field = SignalField::new(grid, vec![-50.0; 16]).unwrap();
        let mask = OutdoorMask::new(grid, vec![false; 16]).unwrap();
        let cfg = SamplerConfig::new(SampleMode::Uniform, 0.5, 0);
        assert!(matches!(sample_uniform(&field, &mask, &cfg), Err(Error::Capacity(_))));
    }

    /// Chi-square uniformity over a 16-region coarsening of the grid.
    #[test]
    fn uniform_selection_is_uniform() {
        let (field, mask) = open_scene(64);
        let mut counts = [0u64; 16];
        let mut total = 0u64;
        for seed in 0..200 {
            let cfg = SamplerConfig::new(SampleMode::Uniform, 0.02, seed);
            for m in sample_uniform(&field, &mask, &cfg).unwrap().iter() {
                let region = (m.row / 16) * 4 + m.col / 16;
                counts[region] += 1;
                total += 1;
            }
        }
        let expected = total as f64 / 16.0;
        let chi2: f64 = counts.iter().map(|c| (*c as f64 - expected).powi(2) / expected).sum();
        // chi-square critical value, 15 dof, alpha = 0.01
        assert!(chi2 < 30.578, "chi2 = {chi2:.2} rejects uniformity");
    }

    #[test]
    fn trajectory_straight_line_with_p_one() {
        let (field, mask) = open_scene(64);
        let mut cfg = SamplerConfig::new(SampleMode::Trajectory, 0.005, 5);
        cfg.momentum_p = 1.0;
        let ms = sample_trajectory(&field, &mask, &cfg).unwrap();
        assert_eq!(ms.len(), 20);
        // with p = 1 every step repeats while legal: the first-visit cells
        // must form a straight run until a boundary would be crossed
        let e = ms.entries();
        let d0 = (e[1].row as isize - e[0].row as isize, e[1].col as isize - e[0].col as isize);
        let mut straight = true;
        for w in e.windows(2) {
            let d = (w[1].row as isize - w[0].row as isize, w[1].col as isize - w[0].col as isize);
            if d != d0 {
                straight = false;
                break;
            }
        }
        // 20 cells from a mid-grid start rarely hits the wall; allow either
        // a fully straight run or a single turn at the boundary
        if !straight {
            let on_edge = e.iter().any(|m| m.row == 0 || m.row == 63 || m.col == 0 || m.col == 63);
            assert!(on_edge, "direction changed away from the boundary despite p = 1");
        }
    }

    #[test]
    fn trajectory_new_cells_touch_previous_ones() {
        let (field, mask) = open_scene(64);
        let cfg = SamplerConfig::new(SampleMode::Trajectory, 0.01, 12);
        let ms = sample_trajectory(&field, &mask, &cfg).unwrap();
        let e = ms.entries();
        for k in 1..e.len() {
            let adjacent = e[..k].iter().any(|p| {
                (p.row as isize - e[k].row as isize).abs() + (p.col as isize - e[k].col as isize).abs() == 1
            });
            assert!(adjacent, "cell {k} is not 4-adjacent to an earlier visit");
        }
    }

    #[test]
    fn trajectory_momentum_frequency_matches_p() {
        // Monte-Carlo oracle over the raw walk: among steps where repeating
        // the previous direction is legal, the empirical repeat frequency
        // must equal p.
        let (_, mask) = open_scene(64);
        let p = 0.9;
        let mut repeats = 0u64;
        let mut eligible = 0u64;
        for seed in 0..120 {
            let mut cfg = SamplerConfig::new(SampleMode::Trajectory, 0.3, seed);
            cfg.momentum_p = p;
            let path = walk_path(&mask, &cfg, measurement_count(cfg.fraction, 4096)).unwrap();
            for k in 2..path.len() {
                let step = |a: usize, b: usize| {
                    (b as isize / 64 - a as isize / 64, b as isize % 64 - a as isize % 64)
                };
                let pd = step(path[k - 2], path[k - 1]);
                let (r, c) = ((path[k - 1] / 64) as isize, (path[k - 1] % 64) as isize);
                let (tr, tc) = (r + pd.0, c + pd.1);
                if tr < 0 || tc < 0 || tr >= 64 || tc >= 64 {
                    continue;
                }
                eligible += 1;
                if step(path[k - 1], path[k]) == pd {
                    repeats += 1;
                }
            }
        }
        assert!(eligible > 100_000, "need at least 1e5 eligible steps, got {eligible}");
        let freq = repeats as f64 / eligible as f64;
        assert!((freq - p).abs() <= 0.02, "repeat frequency {freq:.4} vs p {p}");
    }

    #[test]
    fn trajectory_trapped_component_errors() {
        // a 2-cell outdoor pocket cannot host 5 measurements
        let grid = Grid::new(16.0, 4.0).unwrap();
        let mut mask = vec![false; 16];
        mask[0] = true;
        mask[1] = true;
        let mask = OutdoorMask::new(grid, mask).unwrap();
        let field = SignalField::new(
            grid,
            (0..16).map(|i| if i < 2 { -50.0 } else { f64::NAN }).collect(),
        )
        .unwrap();
        let cfg = SamplerConfig::new(SampleMode::Trajectory, 5.0 / 16.0, 1);
        assert!(matches!(sample_trajectory(&field, &mask, &cfg), Err(Error::Capacity(_))));
    }

    #[test]
    fn trajectory_deterministic() {
        let (field, mask) = open_scene(32);
        let cfg = SamplerConfig::new(SampleMode::Trajectory, 0.05, 23);
        assert_eq!(
            sample_trajectory(&field, &mask, &cfg).unwrap(),
            sample_trajectory(&field, &mask, &cfg).unwrap()
        );
    }
}
