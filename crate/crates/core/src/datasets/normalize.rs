use super::Dataset;
use crate::error::{Error, Result};
use crate::math;

/// Column statistics fitted on a training set. Uses the population standard
/// deviation; categorical columns pass through unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    pub categorical: Vec<bool>,
}

impl Standardizer {
    pub fn fit(train: &Dataset) -> Result<Self> {
        let d = train.d();
        let mut means = vec![0.0; d];
        let mut sds = vec![1.0; d];
        for j in 0..d {
            if train.categorical_mask()[j] {
                continue;
            }
            let col = train.column(j);
            let sd = math::population_variance(&col).sqrt();
            if !(sd > 0.0) {
                return Err(Error::DegenerateColumn {
                    column: train.feature_names()[j].clone(),
                });
            }
            means[j] = math::mean(&col);
            sds[j] = sd;
        }
        Ok(Standardizer {
            means,
            sds,
            categorical: train.categorical_mask().to_vec(),
        })
    }

    pub fn transform(&self, ds: &Dataset) -> Result<Dataset> {
        if ds.d() != self.means.len() {
            return Err(Error::Argument(format!(
                "dataset has {} features, standardiser was fitted on {}",
                ds.d(),
                self.means.len()
            )));
        }
        Ok(ds.map_features(|j, v| {
            if self.categorical[j] {
                v
            } else {
                (v - self.means[j]) / self.sds[j]
            }
        }))
    }
}

/// Standardise `train` and apply the same statistics to `test`.
pub fn normalize(train: &Dataset, test: &Dataset) -> Result<(Dataset, Dataset)> {
    if train.feature_names() != test.feature_names() {
        return Err(Error::Argument(
            "train and test must share feature names".into(),
        ));
    }
    let s = Standardizer::fit(train)?;
    Ok((s.transform(train)?, s.transform(test)?))
}
