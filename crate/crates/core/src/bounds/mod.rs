//! Bound variants, their constants, and the assembled report.

pub mod constants;
pub mod koopman;
pub mod norm_based;
pub mod report;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use constants::{
    activation_opnorm_bound, derive_constants, elementwise_opnorm_bound, g_factor_gaussian,
    gaussian_head_norm, kernel_trace_bound, BoundConstants, DerivedConstants,
};
pub use koopman::{
    bound_combined, bound_combined_best, bound_graph, bound_injective, bound_invertible,
    bound_weighted, class_bound_invertible, density_ratio_bound, density_ratio_grid_sup,
    koopman_layer_factor, CombinedBest, LayerSpectrum, RatioGrid,
};
pub use norm_based::{
    bound_bartlett17, bound_golowich18, bound_neyshabur15, bound_neyshabur18, CompetitorOptions,
};
pub use report::{
    choose_variant, full_report, full_report_with, BoundReport, LayerRecord, ReportMetadata, ReportOptions, Route, Total,
    REPORT_CSV_COLUMNS, TOTALS_CSV_COLUMNS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Invertible,
    Injective,
    Graph,
    Weighted,
    Combined,
    Neyshabur15,
    Neyshabur18,
    Golowich18,
    Bartlett17,
}

impl Variant {
    pub const ALL: [Variant; 9] = [
        Variant::Invertible,
        Variant::Injective,
        Variant::Graph,
        Variant::Weighted,
        Variant::Combined,
        Variant::Neyshabur15,
        Variant::Neyshabur18,
        Variant::Golowich18,
        Variant::Bartlett17,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Invertible => "invertible",
            Variant::Injective => "injective",
            Variant::Graph => "graph",
            Variant::Weighted => "weighted",
            Variant::Combined => "combined",
            Variant::Neyshabur15 => "neyshabur15",
            Variant::Neyshabur18 => "neyshabur18",
            Variant::Golowich18 => "golowich18",
            Variant::Bartlett17 => "bartlett17",
        }
    }

    /// Koopman-type variants, which carry the `B‖g‖/√n` prefactor.
    pub fn is_koopman(self) -> bool {
        matches!(
            self,
            Variant::Invertible | Variant::Injective | Variant::Graph | Variant::Weighted | Variant::Combined
        )
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                let known: Vec<&str> = Variant::ALL.iter().map(|v| v.name()).collect();
                Error::InvalidInput(format!("unknown variant {s:?}; expected one of {}", known.join(", ")))
            })
    }
}
