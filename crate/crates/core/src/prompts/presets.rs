//! Graded expert statements for the synthetic task, from no detail up to the
//! full generating equation. Injected through `{expert_info}`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::datasets::SYNTHETIC_WEIGHTS;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetailPreset {
    LinearRelationship,
    OneFeature,
    TwoFeatures,
    ThreeFeatures,
    FullEquation,
}

impl DetailPreset {
    pub const ALL: [DetailPreset; 5] = [
        DetailPreset::LinearRelationship,
        DetailPreset::OneFeature,
        DetailPreset::TwoFeatures,
        DetailPreset::ThreeFeatures,
        DetailPreset::FullEquation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DetailPreset::LinearRelationship => "linear_relationship",
            DetailPreset::OneFeature => "one_feature",
            DetailPreset::TwoFeatures => "two_features",
            DetailPreset::ThreeFeatures => "three_features",
            DetailPreset::FullEquation => "full_equation",
        }
    }

    /// Statement revealing this much about the synthetic target.
    pub fn statement(self) -> String {
        let effect = |j: usize| {
            let w = SYNTHETIC_WEIGHTS[j];
            let verb = if w >= 0.0 { "rises" } else { "falls" };
            format!("raising 'feature {j}' by one unit {verb} the target by {}", w.abs())
        };
        let described = |k: usize| {
            let parts: Vec<String> = (0..k).map(effect).collect();
            format!(
                "The target depends linearly on the features: {}.",
                parts.join(", and ")
            )
        };
        match self {
            DetailPreset::LinearRelationship => {
                "The target depends linearly on the features.".to_string()
            }
            DetailPreset::OneFeature => described(1),
            DetailPreset::TwoFeatures => described(2),
            DetailPreset::ThreeFeatures => described(3),
            DetailPreset::FullEquation => {
                let terms: Vec<String> = SYNTHETIC_WEIGHTS
                    .iter()
                    .enumerate()
                    .map(|(j, w)| format!("{w} * 'feature {j}'"))
                    .collect();
                format!("'target' = {}", terms.join(" + ").replace("+ -", "- "))
            }
        }
    }
}

impl fmt::Display for DetailPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DetailPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DetailPreset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Configuration(format!("unknown detail preset `{s}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_grow_in_detail() {
        let lens: Vec<usize> = DetailPreset::ALL[..4].iter().map(|p| p.statement().len()).collect();
        assert!(lens.windows(2).all(|w| w[0] < w[1]));
        assert!(DetailPreset::ThreeFeatures.statement().contains("'feature 2'"));
        assert!(!DetailPreset::OneFeature.statement().contains("'feature 1'"));
    }

    #[test]
    fn full_equation_matches_the_generator() {
        assert_eq!(
            DetailPreset::FullEquation.statement(),
            "'target' = 2 * 'feature 0' - 1 * 'feature 1' + 1 * 'feature 2'"
        );
    }

    #[test]
    fn names_round_trip() {
        for p in DetailPreset::ALL {
            assert_eq!(p.name().parse::<DetailPreset>().unwrap(), p);
        }
        assert!("nope".parse::<DetailPreset>().is_err());
    }
}
