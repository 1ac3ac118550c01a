use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::volgrid::VoxelGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Class {
    Tp = 0,
    Fp = 1,
    Fn = 2,
    Tn = 3,
}

impl Class {
    pub const ALL: [Class; 4] = [Class::Tp, Class::Fp, Class::Fn, Class::Tn];

    #[inline]
    pub fn of(pred: u8, gt: u8) -> Class {
        match (pred, gt) {
            (1, 1) => Class::Tp,
            (1, _) => Class::Fp,
            (_, 1) => Class::Fn,
            _ => Class::Tn,
        }
    }

    #[inline]
    pub fn from_code(code: u8) -> Class {
        Class::ALL[code as usize]
    }

    pub fn is_error(self) -> bool {
        matches!(self, Class::Fp | Class::Fn)
    }

    pub fn name(self) -> &'static str {
        match self {
            Class::Tp => "tp",
            Class::Fp => "fp",
            Class::Fn => "fn",
            Class::Tn => "tn",
        }
    }
}

/// Voxel-wise TP/FP/FN/TN partition stored as one label per voxel.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionSets {
    labels: Vec<u8>,
    counts: [usize; 4],
}

impl ConfusionSets {
    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    #[inline]
    pub fn class(&self, i: usize) -> Class {
        Class::from_code(self.labels[i])
    }

    pub fn count(&self, c: Class) -> usize {
        self.counts[c as usize]
    }

    pub fn counts(&self) -> [usize; 4] {
        self.counts
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// |E| with E = FP ∪ FN.
    pub fn error_count(&self) -> usize {
        self.count(Class::Fp) + self.count(Class::Fn)
    }

    #[inline]
    pub fn is_error(&self, i: usize) -> bool {
        self.class(i).is_error()
    }

    /// Sorted voxel indices of one class.
    pub fn indices(&self, c: Class) -> Vec<usize> {
        let code = c as u8;
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == code)
            .map(|(i, _)| i)
            .collect()
    }
}

pub fn confusion(pred: &VoxelGrid<u8>, gt: &VoxelGrid<u8>) -> Result<ConfusionSets> {
    pred.same_geometry(gt)?;
    pred.expect_channels(1)?;
    gt.expect_channels(1)?;
    pred.ensure_binary()?;
    gt.ensure_binary()?;
    let labels: Vec<u8> = pred
        .data()
        .par_iter()
        .zip(gt.data().par_iter())
        .map(|(&p, &g)| Class::of(p, g) as u8)
        .collect();
    let mut counts = [0usize; 4];
    for l in &labels {
        counts[*l as usize] += 1;
    }
    Ok(ConfusionSets { labels, counts })
}
