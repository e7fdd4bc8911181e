//! Fixed DTU scene and view splits.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DTU_TEST_SCENES: [u32; 15] = [8, 21, 30, 31, 34, 38, 40, 41, 45, 55, 63, 82, 103, 110, 114];

/// Scans left out of pretraining.
pub const DTU_PRETRAIN_EXCLUDED_SCENES: [u32; 21] = [
    1, 2, 7, 25, 26, 27, 29, 39, 51, 54, 56, 57, 58, 73, 83, 111, 112, 113, 115, 116, 117,
];

/// Train views in priority order; the k-view regime takes the first k.
pub const DTU_TRAIN_VIEWS: [u32; 9] = [25, 22, 28, 40, 44, 48, 0, 8, 13];

/// Views dropped for image quality.
pub const DTU_EXCLUDED_VIEWS: [u32; 15] = [3, 4, 5, 6, 7, 16, 17, 18, 19, 20, 21, 36, 37, 38, 39];

pub const DTU_VIEWS_PER_SCAN: u32 = 49;

/// Released scan indices: 1..=128 without 78..=81.
pub fn dtu_scans() -> Vec<u32> {
    (1..=128).filter(|s| !(78..=81).contains(s)).collect()
}

/// Qualitative evaluation views.
pub const EVAL_VIEWS_QUALITATIVE: [u32; 11] = [1, 8, 12, 15, 24, 27, 29, 33, 40, 43, 48];

/// Views used for baseline comparison.
pub const EVAL_VIEWS_BASELINE: [u32; 3] = [1, 45, 22];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ViewRegime {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "3")]
    Three,
    #[serde(rename = "6")]
    Six,
    #[serde(rename = "9")]
    Nine,
    All,
}

impl ViewRegime {
    pub fn view_count(self) -> Option<usize> {
        match self {
            ViewRegime::One => Some(1),
            ViewRegime::Three => Some(3),
            ViewRegime::Six => Some(6),
            ViewRegime::Nine => Some(9),
            ViewRegime::All => None,
        }
    }
}

impl FromStr for ViewRegime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "1" => Ok(ViewRegime::One),
            "3" => Ok(ViewRegime::Three),
            "6" => Ok(ViewRegime::Six),
            "9" => Ok(ViewRegime::Nine),
            "all" => Ok(ViewRegime::All),
            other => Err(Error::InvalidRegime(other.to_string())),
        }
    }
}

impl fmt::Display for ViewRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.view_count() {
            Some(k) => write!(f, "{k}"),
            None => write!(f, "all"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub regime: ViewRegime,
    pub train_scenes: Vec<u32>,
    pub test_scenes: Vec<u32>,
    pub train_views: Vec<u32>,
    pub test_views: Vec<u32>,
    pub excluded_views: Vec<u32>,
}

impl SplitSpec {
    pub fn is_disjoint(&self) -> bool {
        let no_overlap = |a: &[u32], b: &[u32]| a.iter().all(|x| !b.contains(x));
        no_overlap(&self.train_scenes, &self.test_scenes)
            && no_overlap(&self.train_views, &self.test_views)
            && no_overlap(&self.excluded_views, &self.train_views)
            && no_overlap(&self.excluded_views, &self.test_views)
    }
}

/// The `all` regime trains on every non-excluded view and leaves no test views.
pub fn dtu_splits(regime: ViewRegime) -> SplitSpec {
    let usable: Vec<u32> = (0..DTU_VIEWS_PER_SCAN)
        .filter(|v| !DTU_EXCLUDED_VIEWS.contains(v))
        .collect();
    let train_views = match regime.view_count() {
        Some(k) => DTU_TRAIN_VIEWS[..k].to_vec(),
        None => usable.clone(),
    };
    let test_views = usable.into_iter().filter(|v| !train_views.contains(v)).collect();
    let train_scenes = dtu_scans()
        .into_iter()
        .filter(|s| !DTU_TEST_SCENES.contains(s) && !DTU_PRETRAIN_EXCLUDED_SCENES.contains(s))
        .collect();
    SplitSpec {
        regime,
        train_scenes,
        test_scenes: DTU_TEST_SCENES.to_vec(),
        train_views,
        test_views,
        excluded_views: DTU_EXCLUDED_VIEWS.to_vec(),
    }
}

pub fn dtu_splits_for(regime: &str) -> Result<SplitSpec> {
    Ok(dtu_splits(regime.parse()?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regime_prefixes() {
        assert_eq!(dtu_splits(ViewRegime::Three).train_views, vec![25, 22, 28]);
        assert_eq!(dtu_splits(ViewRegime::One).train_views, vec![25]);
        assert_eq!(dtu_splits(ViewRegime::Nine).train_views, DTU_TRAIN_VIEWS.to_vec());
    }

    #[test]
    fn pretraining_scene_count() {
        assert_eq!(dtu_scans().len(), 124);
        assert_eq!(dtu_splits(ViewRegime::All).train_scenes.len(), 88);
    }

    #[test]
    fn splits_are_disjoint() {
        for r in ["1", "3", "6", "9", "all"] {
            let s = dtu_splits_for(r).unwrap();
            assert!(s.is_disjoint(), "{r}");
            let total = s.train_views.len() + s.test_views.len() + s.excluded_views.len();
            assert_eq!(total, DTU_VIEWS_PER_SCAN as usize);
        }
    }

    #[test]
    fn unknown_regime_is_usage_error() {
        let err = dtu_splits_for("4").unwrap_err();
        assert!(matches!(err, Error::InvalidRegime(_)));
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn evaluation_views_are_held_out_in_sparse_regimes() {
        for r in [ViewRegime::One, ViewRegime::Three] {
            let s = dtu_splits(r);
            assert!(EVAL_VIEWS_QUALITATIVE.iter().all(|v| s.test_views.contains(v)), "{r}");
        }
        let one = dtu_splits(ViewRegime::One);
        assert!(EVAL_VIEWS_BASELINE.iter().all(|v| one.test_views.contains(v)));
    }
}
