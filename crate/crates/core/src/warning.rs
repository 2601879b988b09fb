use std::fmt;

use serde::{Deserialize, Serialize};

/// Conditions attached to a computed value that did not stop the computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Warning {
    /// A root sits within 1e-3 of the unit circle.
    NearUnitCircle,
    /// A Gram or covariance matrix had condition estimate above 1e12.
    IllConditioned,
    /// The low-rank identity was abandoned for the dense generator factorization.
    DenseFallback,
    /// The smallest singular value is below the relative accuracy floor.
    Underflow,
    /// Duplicate samples were separated by jitter before a neighbour search.
    TiedSamples,
}

impl Warning {
    pub fn as_str(self) -> &'static str {
        match self {
            Warning::NearUnitCircle => "near_unit_circle",
            Warning::IllConditioned => "ill_conditioned",
            Warning::DenseFallback => "dense_fallback",
            Warning::Underflow => "underflow",
            Warning::TiedSamples => "tied_samples",
        }
    }
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub(crate) fn push_unique(list: &mut Vec<Warning>, w: Warning) {
    if !list.contains(&w) {
        list.push(w);
        list.sort();
    }
}
