//! Cross-validated selection of the depth and node budgets.
//!
//! Each fold fits its own baseline on the training part and solves every grid
//! cell in ascending budget order against one shared solver cache. Cells are
//! scored on the held-out part by the per-instance likelihood loss under the
//! training baseline.

use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::sig17;
use crate::loss::instance_loss;
use crate::metrics::harrell_c;
use crate::model::{fit_baseline, Dataset, SurvivalTree};
use crate::solver::{Solver, SolverConfig};
use crate::synth::stream;

const STREAM_FOLDS: u64 = 11;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeBudgets {
    /// Every `n ≤ 2^d − 1`.
    All,
    Explicit(Vec<u32>),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TuneGrid {
    pub depths: Vec<u32>,
    pub node_budgets: NodeBudgets,
    pub folds: usize,
}

impl TuneGrid {
    /// Depths `0..=max_depth` with every node budget, ten folds.
    pub fn up_to(max_depth: u32) -> Self {
        Self { depths: (0..=max_depth).collect(), node_budgets: NodeBudgets::All, folds: 10 }
    }

    /// Grid cells `(d, n)` in ascending order, skipping budgets that exceed
    /// `2^d − 1`.
    pub fn cells(&self) -> Vec<(u32, u32)> {
        let mut depths = self.depths.clone();
        depths.sort_unstable();
        depths.dedup();
        let mut cells = Vec::new();
        for d in depths {
            let full = if d >= 31 { u32::MAX } else { (1u32 << d) - 1 };
            match &self.node_budgets {
                NodeBudgets::All => cells.extend((0..=full).map(|n| (d, n))),
                NodeBudgets::Explicit(ns) => {
                    let mut ns: Vec<u32> = ns.iter().copied().filter(|&n| n <= full).collect();
                    ns.sort_unstable();
                    ns.dedup();
                    cells.extend(ns.into_iter().map(|n| (d, n)));
                }
            }
        }
        cells
    }

    fn validate(&self, len: usize) -> Result<()> {
        if self.depths.is_empty() {
            return Err(Error::Config("tuning grid has no depths".into()));
        }
        if self.folds < 2 || self.folds > len {
            return Err(Error::Config(format!("{} folds for {len} instances", self.folds)));
        }
        if self.cells().is_empty() {
            return Err(Error::Config("tuning grid has no admissible cells".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    /// Lowest mean held-out loss.
    #[default]
    Loss,
    /// Highest mean held-out Harrell's C.
    HarrellC,
}

#[derive(Clone, Debug)]
pub struct TuneConfig {
    pub grid: TuneGrid,
    pub seed: u64,
    /// Template for every solve; its budgets are replaced per cell.
    pub solver: SolverConfig,
    pub criterion: Criterion,
    pub share_cache: bool,
}

impl TuneConfig {
    pub fn new(grid: TuneGrid, seed: u64) -> Self {
        Self { grid, seed, solver: SolverConfig::new(0, 0), criterion: Criterion::Loss, share_cache: true }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoreRow {
    pub fold: usize,
    pub depth: u32,
    pub nodes: u32,
    /// Per-instance training loss.
    pub train_loss: f64,
    /// Per-instance held-out loss.
    pub val_loss: f64,
    pub val_c: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellSummary {
    pub depth: u32,
    pub nodes: u32,
    pub mean_train_loss: f64,
    pub mean_val_loss: f64,
    pub mean_val_c: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TuneResult {
    pub best_depth: u32,
    pub best_nodes: u32,
    pub rows: Vec<ScoreRow>,
    pub cells: Vec<CellSummary>,
    /// Held-out instances that fell before the training baseline's first
    /// event (`Λ̂ = 0`) and contributed zero loss.
    pub zero_hazard: usize,
}

/// Fold of each instance: a seeded shuffle dealt round-robin.
pub fn assign_folds(len: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut stream(seed, STREAM_FOLDS));
    let mut fold = vec![0; len];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % folds;
    }
    fold
}

/// Held-out loss of `tree` on `data` under `baseline`-derived hazards, per
/// instance. Returns the loss and the number of zero-hazard instances.
fn holdout_loss(tree: &SurvivalTree, data: &Dataset) -> Result<(f64, usize)> {
    let mut total = 0.0;
    let mut zero = 0;
    for (i, inst) in data.instances().iter().enumerate() {
        let h = data.hazard(i).ok_or(Error::MissingBaseline)?;
        if h <= 0.0 {
            zero += 1;
            continue;
        }
        total += instance_loss(h, inst.event(), tree.predict_theta(inst.features())?);
    }
    Ok((total / data.len() as f64, zero))
}

fn holdout_c(tree: &SurvivalTree, data: &Dataset) -> Result<Option<f64>> {
    let thetas = data.instances().iter().map(|i| tree.predict_theta(i.features())).collect::<Result<Vec<_>>>()?;
    match harrell_c(&data.times(), &data.events(), &thetas) {
        Ok(c) => Ok(Some(c)),
        Err(Error::UndefinedMetric(..)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// k-fold cross-validation over the grid.
pub fn cross_validate(data: &Dataset, config: &TuneConfig) -> Result<TuneResult> {
    config.grid.validate(data.len())?;
    let k = config.grid.folds;
    let fold_of = assign_folds(data.len(), k, config.seed);
    let cells = config.grid.cells();
    let mut rows = Vec::with_capacity(k * cells.len());
    let mut zero_hazard = 0;

    for fold in 0..k {
        let train_idx: Vec<usize> = (0..data.len()).filter(|&i| fold_of[i] != fold).collect();
        let val_idx: Vec<usize> = (0..data.len()).filter(|&i| fold_of[i] == fold).collect();
        let train = data.subset(&train_idx);
        let val = data.subset(&val_idx);
        if !val.instances().iter().any(|i| i.event()) {
            return Err(Error::FoldWithoutEvents { fold, reason: "held-out part" });
        }
        if !train.instances().iter().any(|i| i.event()) {
            return Err(Error::FoldWithoutEvents { fold, reason: "training part" });
        }
        let baseline = fit_baseline(&train)?;
        let train = train.with_baseline(&baseline);
        let val = val.with_baseline(&baseline);

        let mut shared = Solver::new(&train, config.solver.clone())?;
        for &(d, n) in &cells {
            let cell = SolverConfig { max_depth: d, max_nodes: n, ..config.solver.clone() };
            let (tree, loss) = if config.share_cache {
                shared.set_config(cell);
                shared.solve()?
            } else {
                Solver::new(&train, cell)?.solve()?
            };
            let (val_loss, zero) = holdout_loss(&tree, &val)?;
            if (d, n) == cells[0] {
                zero_hazard += zero;
            }
            let val_c = if config.criterion == Criterion::HarrellC { holdout_c(&tree, &val)? } else { None };
            rows.push(ScoreRow { fold, depth: d, nodes: n, train_loss: loss / train.len() as f64, val_loss, val_c });
        }
    }

    let summaries: Vec<CellSummary> = cells
        .iter()
        .map(|&(d, n)| {
            let cell_rows: Vec<&ScoreRow> = rows.iter().filter(|r| (r.depth, r.nodes) == (d, n)).collect();
            let mean = |f: &dyn Fn(&ScoreRow) -> f64| cell_rows.iter().map(|r| f(r)).sum::<f64>() / cell_rows.len() as f64;
            let cs: Vec<f64> = cell_rows.iter().filter_map(|r| r.val_c).collect();
            CellSummary {
                depth: d,
                nodes: n,
                mean_train_loss: mean(&|r| r.train_loss),
                mean_val_loss: mean(&|r| r.val_loss),
                mean_val_c: (!cs.is_empty()).then(|| cs.iter().sum::<f64>() / cs.len() as f64),
            }
        })
        .collect();

    let mut order: Vec<&CellSummary> = summaries.iter().collect();
    order.sort_by_key(|c| (c.nodes, c.depth));
    let mut best = order[0];
    for c in &order[1..] {
        let better = match config.criterion {
            Criterion::Loss => c.mean_val_loss < best.mean_val_loss,
            Criterion::HarrellC => c.mean_val_c.unwrap_or(f64::NEG_INFINITY) > best.mean_val_c.unwrap_or(f64::NEG_INFINITY),
        };
        if better {
            best = c;
        }
    }
    Ok(TuneResult { best_depth: best.depth, best_nodes: best.nodes, rows, cells: summaries, zero_hazard })
}

/// Solves the full training set at the selected budgets; `data` must carry
/// its baseline.
pub fn refit(data: &Dataset, depth: u32, nodes: u32, solver: &SolverConfig) -> Result<(SurvivalTree, f64)> {
    Solver::new(data, SolverConfig { max_depth: depth, max_nodes: nodes, ..solver.clone() })?.solve()
}

/// Score table as CSV: `fold,depth,nodes,train_loss,val_loss`.
pub fn write_score_table(rows: &[ScoreRow], writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["fold", "depth", "nodes", "train_loss", "val_loss"])?;
    for r in rows {
        w.write_record([r.fold.to_string(), r.depth.to_string(), r.nodes.to_string(), sig17(r.train_loss), sig17(r.val_loss)])?;
    }
    w.flush()?;
    Ok(())
}
