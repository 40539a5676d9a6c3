//! Classifiers on SPD features.
//!
//! * [`MdmModel`]: minimum distance to the per-class Kärcher mean, with
//!   softmax-of-negative-distance probabilities.
//! * [`FgdaFilter`] / [`FgmdmModel`]: Fisher geodesic discriminant filtering
//!   in the tangent space before MDM.
//! * [`RidgeModel`]: binary ridge classifier used as the stacking layer.
//! * [`EnsembleModel`]: one FgMDM per estimator, stacked by ridge on
//!   out-of-fold probabilities.
//! * [`CspLdaModel`]: common spatial patterns + LDA baseline.

mod csp;
mod ensemble;
mod fgda;
mod mdm;
mod ridge;

use serde::{Deserialize, Serialize};

pub use csp::{csp_fit, csp_lda_fit, CspFilters, CspLdaModel};
pub use ensemble::{ensemble_fit, ensemble_fit_with_folds, ensemble_predict, EnsembleConfig, EnsembleModel};
pub use fgda::{fgda_apply, fgda_fit, fgmdm_fit, fgmdm_predict_proba, FgdaFilter, FgmdmModel};
pub use mdm::{mdm_fit, mdm_predict_proba, softmax_neg, MdmModel};
pub use ridge::{ridge_fit, ridge_predict, RidgeModel, RidgePrediction};

use crate::connectivity::UNKNOWN_LABEL;
use crate::error::{Error, Result};

/// A predicted label with its per-class probabilities (in model label order).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: i32,
    pub probabilities: Vec<f64>,
}

/// Index of the largest value; the first wins exact ties.
pub fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Sorted distinct labels and the sample indices of each.
pub(crate) fn class_partition(labels: &[i32]) -> Result<(Vec<i32>, Vec<Vec<usize>>)> {
    if labels.contains(&UNKNOWN_LABEL) {
        return Err(Error::invalid("training labels contain unknown (-1) entries"));
    }
    let mut classes: Vec<i32> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::invalid(format!(
            "need at least two classes, found {}",
            classes.len()
        )));
    }
    let members = classes
        .iter()
        .map(|c| labels.iter().enumerate().filter(|(_, l)| *l == c).map(|(i, _)| i).collect())
        .collect();
    Ok((classes, members))
}

pub(crate) fn check_lengths(n_samples: usize, n_labels: usize) -> Result<()> {
    if n_samples != n_labels {
        return Err(Error::invalid(format!("{n_samples} samples but {n_labels} labels")));
    }
    if n_samples == 0 {
        return Err(Error::invalid("no training samples"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_prefers_first_on_ties() {
        assert_eq!(argmax_first(&[0.5, 0.5]), 0);
        assert_eq!(argmax_first(&[0.2, 0.8]), 1);
    }

    #[test]
    fn partition_rejects_single_class_and_unknowns() {
        assert!(class_partition(&[1, 1, 1]).is_err());
        assert!(class_partition(&[0, 1, -1]).is_err());
        let (c, m) = class_partition(&[1, 0, 1]).unwrap();
        assert_eq!(c, vec![0, 1]);
        assert_eq!(m, vec![vec![1], vec![0, 2]]);
    }
}
