use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PartitionMode {
    /// Contiguous blocks whose sizes differ by at most one (larger blocks first).
    Even,
    /// Contiguous blocks of the given sizes.
    Given { sizes: Vec<usize> },
}

/// Assignment of the `d` columns to `K` nodes as contiguous, disjoint ranges.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FedTopology {
    pub ranges: Vec<Range<usize>>,
}

impl FedTopology {
    pub fn nodes(&self) -> usize {
        self.ranges.len()
    }

    pub fn columns(&self) -> usize {
        self.ranges.last().map_or(0, |r| r.end)
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.ranges.iter().map(|r| r.len()).collect()
    }
}

pub fn partition_columns(d: usize, k: usize, mode: &PartitionMode) -> Result<FedTopology> {
    if k == 0 || k > d {
        return Err(Error::InvalidPartition(format!("need 1 <= K <= d (K = {k}, d = {d})")));
    }
    let sizes = match mode {
        PartitionMode::Even => (0..k).map(|i| d / k + usize::from(i < d % k)).collect(),
        PartitionMode::Given { sizes } => {
            if sizes.len() != k {
                return Err(Error::InvalidPartition(format!("{} sizes given for K = {k}", sizes.len())));
            }
            if sizes.contains(&0) {
                return Err(Error::InvalidPartition("every node needs at least one column".into()));
            }
            if sizes.iter().sum::<usize>() != d {
                return Err(Error::InvalidPartition(format!("sizes sum to {}, not d = {d}", sizes.iter().sum::<usize>())));
            }
            sizes.clone()
        }
    };
    let mut start = 0;
    let ranges = sizes
        .iter()
        .map(|&s| {
            let r = start..start + s;
            start += s;
            r
        })
        .collect();
    Ok(FedTopology { ranges })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn even_split_of_ten() {
        let t = partition_columns(10, 2, &PartitionMode::Even).unwrap();
        assert_eq!(t.ranges, vec![0..5, 5..10]);
    }

    #[test]
    fn single_node_takes_everything() {
        assert_eq!(partition_columns(7, 1, &PartitionMode::Even).unwrap().ranges, vec![0..7]);
    }

    #[test]
    fn uneven_split_sizes() {
        assert_eq!(partition_columns(7, 3, &PartitionMode::Even).unwrap().sizes(), vec![3, 2, 2]);
    }

    #[test]
    fn given_sizes_validated() {
        let ok = partition_columns(6, 2, &PartitionMode::Given { sizes: vec![1, 5] }).unwrap();
        assert_eq!(ok.ranges, vec![0..1, 1..6]);
        assert!(partition_columns(6, 2, &PartitionMode::Given { sizes: vec![2, 5] }).is_err());
        assert!(partition_columns(6, 2, &PartitionMode::Given { sizes: vec![0, 6] }).is_err());
        assert!(partition_columns(3, 4, &PartitionMode::Even).is_err());
    }
}
