use ndarray::{s, Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fedcore::FedTopology;
use crate::linalg::Basis;
use crate::sparse::{rst_fill_batch, CsConfig};
use crate::stmiss::fill_batch;
use crate::synth::ObservationBatch;

/// How each node estimates its columns from the broadcast basis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum FillMode {
    /// Projected least squares on the missing entries only (no outliers).
    ProjectedLs,
    /// Modified-CS support recovery followed by LS debiasing.
    ModCs { cs: CsConfig },
}

impl FillMode {
    pub fn validate(&self) -> Result<()> {
        match self {
            FillMode::ProjectedLs => Ok(()),
            FillMode::ModCs { cs } => cs.validate(),
        }
    }
}

/// The columns of `batch` that live on each node, in node order.
pub fn split_batch(batch: &ObservationBatch, topology: &FedTopology) -> Result<Vec<ObservationBatch>> {
    if topology.columns() != batch.alpha() {
        return Err(Error::InvalidPartition(format!(
            "topology covers {} columns, batch has {}",
            topology.columns(),
            batch.alpha()
        )));
    }
    Ok(topology
        .ranges
        .iter()
        .map(|range| ObservationBatch {
            index: batch.index,
            start: batch.start + range.start,
            y: batch.y.slice(s![.., range.clone()]).to_owned(),
            missing: batch.missing[range.clone()].to_vec(),
            outlier_support: batch.outlier_support[range.clone()].to_vec(),
        })
        .collect())
}

/// Output of one node's fill.
#[derive(Clone, Debug)]
pub struct NodeFill {
    pub lhat: Array2<f64>,
    /// Estimated outlier support per column; empty in projected-LS mode.
    pub supports: Vec<Vec<usize>>,
    /// Node-local column indices that kept their raw values.
    pub failed_columns: Vec<usize>,
    pub cs_iters: usize,
}

/// Every node fills its own columns with `phat`; no data crosses nodes.
pub fn fed_modcs_fill(phat: &Basis, nodes: &[ObservationBatch], mode: &FillMode) -> Result<Vec<NodeFill>> {
    nodes
        .par_iter()
        .map(|batch| match mode {
            FillMode::ProjectedLs => {
                let (lhat, failed_columns) = fill_batch(phat, batch)?;
                Ok(NodeFill { lhat, supports: vec![Vec::new(); batch.alpha()], failed_columns, cs_iters: 0 })
            }
            FillMode::ModCs { cs } => {
                let fill = rst_fill_batch(phat, batch, cs)?;
                Ok(NodeFill {
                    lhat: fill.lhat,
                    supports: fill.supports,
                    failed_columns: fill.failed_columns,
                    cs_iters: fill.cs_iters,
                })
            }
        })
        .collect()
}

/// Side-by-side concatenation of node blocks, for evaluation only.
pub fn concat_columns(blocks: &[ArrayView2<f64>]) -> Array2<f64> {
    let n = blocks.first().map_or(0, |b| b.nrows());
    let total = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Array2::zeros((n, total));
    let mut c = 0;
    for b in blocks {
        out.slice_mut(s![.., c..c + b.ncols()]).assign(b);
        c += b.ncols();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fedcore::{partition_columns, PartitionMode};
    use crate::sparse::ThresholdMode;
    use crate::synth::{generate, ChangeModel, DataConfig, MaskMode, OutlierConfig};

    fn dataset(rho: f64, outliers: bool) -> crate::synth::Dataset {
        generate(&DataConfig {
            n: 80,
            d: 120,
            r: 3,
            alpha: 40,
            model: ChangeModel::Rotation { delta: 1e-3, generator: Default::default() },
            lambda_minus: 1.0,
            lambda_plus: 1.0,
            lambda_v: 0.0,
            r_v: 0,
            mask: MaskMode::Bernoulli { rho },
            outliers: outliers.then_some(OutlierConfig {
                col_frac: 0.03,
                row_frac: 0.1,
                s_min: 10.0,
                s_max: 20.0,
                first_batch_clean: false,
            }),
            seed: 5,
        })
        .unwrap()
    }

    #[test]
    fn single_node_is_the_centralized_fill() {
        let ds = dataset(0.9, true);
        let b = &ds.batches[1];
        let topo = partition_columns(b.alpha(), 1, &PartitionMode::Even).unwrap();
        let nodes = split_batch(b, &topo).unwrap();
        let p = &ds.truth.subspaces[0];
        let mode = FillMode::ModCs { cs: CsConfig::oracle(10.0) };
        let fed = fed_modcs_fill(p, &nodes, &mode).unwrap();
        let central = rst_fill_batch(p, b, &CsConfig::oracle(10.0)).unwrap();
        assert_eq!(fed[0].lhat, central.lhat);
        assert_eq!(fed[0].supports, central.supports);
    }

    #[test]
    fn clean_full_data_is_unchanged() {
        let ds = dataset(1.0, false);
        let b = &ds.batches[0];
        let topo = partition_columns(b.alpha(), 3, &PartitionMode::Even).unwrap();
        let nodes = split_batch(b, &topo).unwrap();
        let p = &ds.truth.subspaces[0];
        let mode = FillMode::ModCs {
            cs: CsConfig { thresholds: ThresholdMode::Fixed { xi: 1.0, omega_supp: 1.0 }, solver: Default::default() },
        };
        let fills = fed_modcs_fill(p, &nodes, &mode).unwrap();
        let views: Vec<_> = fills.iter().map(|f| f.lhat.view()).collect();
        let joined = concat_columns(&views);
        assert!((&joined - &b.y).iter().all(|d| d.abs() < 1e-12));
    }

    #[test]
    fn federated_fill_matches_centralized_on_concatenation() {
        let ds = dataset(0.9, true);
        let b = &ds.batches[2];
        let topo = partition_columns(b.alpha(), 4, &PartitionMode::Given { sizes: vec![5, 20, 3, 12] }).unwrap();
        let nodes = split_batch(b, &topo).unwrap();
        let p = &ds.truth.subspaces[1];
        let cs = CsConfig::oracle(10.0);
        let fills = fed_modcs_fill(p, &nodes, &FillMode::ModCs { cs: cs.clone() }).unwrap();
        let views: Vec<_> = fills.iter().map(|f| f.lhat.view()).collect();
        let central = rst_fill_batch(p, b, &cs).unwrap();
        assert_eq!(concat_columns(&views), central.lhat);
        let supports: Vec<Vec<usize>> = fills.iter().flat_map(|f| f.supports.clone()).collect();
        assert_eq!(supports, central.supports);
    }

    #[test]
    fn split_rejects_wrong_topology() {
        let ds = dataset(1.0, false);
        let topo = partition_columns(10, 2, &PartitionMode::Even).unwrap();
        assert!(matches!(split_batch(&ds.batches[0], &topo), Err(Error::InvalidPartition(_))));
    }
}
