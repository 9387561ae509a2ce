//! Per-layer breakdown and totals of every bound for one network.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::constants::BoundConstants;
use super::koopman::{
    check_constants, combined_best_from, log_layer_factors, log_matrix_factor, spectra, LayerSpectrum,
};
use super::norm_based::{
    bartlett17_from, golowich18_from, neyshabur15_from, neyshabur18_from, Competitor, CompetitorOptions,
};
use super::Variant;
use crate::error::{Error, Result};
use crate::matcore::condition_from_singular_values;
use crate::network::{LayerSpec, NetworkSpec};
use crate::real::format_real;

/// A bound value or the reason it does not apply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Total {
    Value {
        #[serde(with = "crate::real")]
        value: f64,
    },
    Inapplicable {
        reason: String,
    },
}

impl Total {
    pub fn value(&self) -> Option<f64> {
        match self {
            Total::Value { value } => Some(*value),
            Total::Inapplicable { .. } => None,
        }
    }

    fn from_log(r: Result<f64>) -> Total {
        match r {
            Ok(log) => Total::Value { value: log.exp() },
            Err(e) => Total::Inapplicable {
                reason: inapplicable_reason(e),
            },
        }
    }
}

fn inapplicable_reason(e: Error) -> String {
    match e {
        Error::Inapplicable { layer, reason, .. } => format!("layer {layer}: {reason}"),
        other => other.to_string(),
    }
}

/// Routing decision for one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub variant: Variant,
    pub alternate: Option<Variant>,
    pub reason: String,
}

fn route_from_spectrum(sp: &LayerSpectrum) -> Route {
    if sp.rows == sp.cols && sp.rank == sp.cols {
        return Route {
            variant: Variant::Invertible,
            alternate: Some(Variant::Injective),
            reason: "square and invertible".to_string(),
        };
    }
    match sp.koopman_obstruction(false) {
        None => Route {
            variant: Variant::Injective,
            alternate: None,
            reason: format!("{}x{} with full column rank", sp.rows, sp.cols),
        },
        Some(why) => Route {
            variant: Variant::Graph,
            alternate: Some(Variant::Weighted),
            reason: why,
        },
    }
}

/// Chooses the tightest applicable Koopman variant for one layer.
pub fn choose_variant(layer: &LayerSpec, prev_dim: usize) -> Result<Route> {
    if layer.in_dim() != prev_dim {
        return Err(Error::Shape(format!(
            "layer has {} columns but the previous width is {prev_dim}",
            layer.in_dim()
        )));
    }
    Ok(route_from_spectrum(&LayerSpectrum::of(&layer.weight)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    /// 1-based.
    pub layer: usize,
    pub rows: usize,
    pub cols: usize,
    #[serde(with = "crate::real::vec")]
    pub singular_values: Vec<f64>,
    #[serde(with = "crate::real")]
    pub condition_number: f64,
    pub rank: usize,
    #[serde(with = "crate::real")]
    pub density_ratio_bound: f64,
    /// `det(WᵀW)^{1/4}`, zero when `W` lacks full column rank.
    #[serde(with = "crate::real")]
    pub det_factor: f64,
    pub route: Route,
    pub layer_factors: BTreeMap<Variant, Total>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub n: usize,
    pub constants: BoundConstants,
    #[serde(with = "crate::real")]
    pub prefactor: f64,
    pub flags: Vec<String>,
    pub applicable: BTreeMap<Variant, bool>,
    /// Products of the matrix-only layer factors, without any constant.
    pub matrix_only: BTreeMap<Variant, Total>,
    pub l_star: Option<usize>,
    #[serde(with = "crate::real::vec")]
    pub combined_per_l: Vec<f64>,
    pub weighted_tol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub layers: Vec<LayerRecord>,
    pub totals: BTreeMap<Variant, Total>,
    pub metadata: ReportMetadata,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReportOptions {
    /// Variants to evaluate; every variant when `None`.
    pub variants: Option<Vec<Variant>>,
    /// Fixed restricted-determinant cutoff; each layer's rank tolerance when `None`.
    pub weighted_tol: Option<f64>,
    pub competitors: CompetitorOptions,
    /// Extra flags to record, e.g. from [`super::derive_constants`].
    pub flags: Vec<String>,
}

pub fn full_report(net: &NetworkSpec, c: &BoundConstants) -> Result<BoundReport> {
    full_report_with(net, c, &ReportOptions::default())
}

pub fn full_report_with(net: &NetworkSpec, c: &BoundConstants, opts: &ReportOptions) -> Result<BoundReport> {
    net.validate()?;
    check_constants(net, c)?;
    if let Some(t) = opts.weighted_tol {
        if !(t > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "restricted determinant tolerance must be positive, got {t}"
            )));
        }
    }
    let selected: Vec<Variant> = match &opts.variants {
        Some(v) => Variant::ALL.into_iter().filter(|x| v.contains(x)).collect(),
        None => Variant::ALL.to_vec(),
    };
    let sp = spectra(net)?;
    let log_pre = c.prefactor().ln();
    let mut flags = opts.flags.clone();

    let mut totals = BTreeMap::new();
    let mut matrix_only = BTreeMap::new();
    let mut per_layer: BTreeMap<Variant, Vec<Total>> = BTreeMap::new();
    let mut l_star = None;
    let mut combined_per_l = Vec::new();

    let inapplicable_layers = |reason: &str| {
        vec![
            Total::Inapplicable {
                reason: reason.to_string()
            };
            sp.len()
        ]
    };

    for &v in &selected {
        match v {
            Variant::Invertible | Variant::Injective | Variant::Graph | Variant::Weighted => {
                let full = log_layer_factors(v, net, &sp, c, opts.weighted_tol);
                match full {
                    Ok(logs) => {
                        totals.insert(v, Total::Value {
                            value: (log_pre + logs.iter().sum::<f64>()).exp(),
                        });
                        per_layer.insert(v, logs.iter().map(|l| Total::Value { value: l.exp() }).collect());
                        let m: f64 = sp
                            .iter()
                            .enumerate()
                            .map(|(j, s)| {
                                log_matrix_factor(v, s, net.s_prev(j), opts.weighted_tol).expect("checked above")
                            })
                            .sum();
                        matrix_only.insert(v, Total::Value { value: m.exp() });
                    }
                    Err(e) => {
                        let reason = inapplicable_reason(e);
                        per_layer.insert(v, inapplicable_layers(&reason));
                        matrix_only.insert(v, Total::Inapplicable { reason: reason.clone() });
                        totals.insert(v, Total::Inapplicable { reason });
                    }
                }
                if v == Variant::Graph {
                    flags.push("graph: modulo psi-norm".to_string());
                }
            }
            Variant::Combined => {
                let best = combined_best_from(net, &sp, c);
                let mut factors = Vec::with_capacity(sp.len());
                let mut m = (net.depth() - best.l_star) as f64 * std::f64::consts::LN_2;
                for (j, s) in sp.iter().enumerate() {
                    if j < best.l_star {
                        let lm = log_matrix_factor(Variant::Injective, s, net.s_prev(j), None)
                            .expect("feasible prefix");
                        m += lm;
                        factors.push(Total::Value {
                            value: (lm + c.g_factors[j].ln() + c.sigma_norms[j].ln()).exp(),
                        });
                    } else {
                        m += s.frobenius.ln();
                        factors.push(Total::Value {
                            value: 2.0 * s.frobenius,
                        });
                    }
                }
                totals.insert(v, Total::Value { value: best.value });
                matrix_only.insert(v, Total::Value { value: m.exp() });
                per_layer.insert(v, factors);
                l_star = Some(best.l_star);
                combined_per_l = best.per_l;
            }
            _ => {
                let comp: Result<Competitor> = match v {
                    Variant::Neyshabur15 => Ok(neyshabur15_from(&sp, c.n)),
                    Variant::Neyshabur18 => neyshabur18_from(net, &sp, c.n),
                    Variant::Golowich18 => Ok(golowich18_from(&sp, c.n)),
                    Variant::Bartlett17 => bartlett17_from(net, &sp, c.n, &opts.competitors),
                    _ => unreachable!(),
                };
                match comp {
                    Ok(cp) => {
                        totals.insert(v, Total::from_log(Ok(cp.log_total)));
                        per_layer.insert(v, cp.log_layer.iter().map(|l| Total::Value { value: l.exp() }).collect());
                    }
                    Err(Error::Inapplicable { layer, reason, .. }) => {
                        let reason = format!("layer {layer}: {reason}");
                        per_layer.insert(v, inapplicable_layers(&reason));
                        totals.insert(v, Total::Inapplicable { reason });
                    }
                    Err(e) => return Err(e),
                }
            }
        }
    }

    let layers = sp
        .iter()
        .enumerate()
        .map(|(j, s)| LayerRecord {
            layer: j + 1,
            rows: s.rows,
            cols: s.cols,
            singular_values: s.singular_values.clone(),
            condition_number: condition_from_singular_values(&s.singular_values),
            rank: s.rank,
            density_ratio_bound: (2.0 * net.s_prev(j) * s.sigma_max().ln()).max(0.0).exp(),
            det_factor: s.log_det_factor().map_or(0.0, f64::exp),
            route: route_from_spectrum(s),
            layer_factors: per_layer.iter().map(|(v, f)| (*v, f[j].clone())).collect(),
        })
        .collect();

    let applicable = totals
        .iter()
        .map(|(v, t)| (*v, matches!(t, Total::Value { .. })))
        .collect();

    Ok(BoundReport {
        layers,
        totals,
        metadata: ReportMetadata {
            n: c.n,
            constants: c.clone(),
            prefactor: c.prefactor(),
            flags,
            applicable,
            matrix_only,
            l_star,
            combined_per_l,
            weighted_tol: opts.weighted_tol,
        },
    })
}

/// Column order of [`BoundReport::to_csv`].
pub const TOTALS_CSV_COLUMNS: [&str; 4] = ["variant", "total", "status", "reason"];

pub const REPORT_CSV_COLUMNS: [&str; 14] = [
    "variant",
    "layer",
    "rows",
    "cols",
    "sigma_max",
    "sigma_min",
    "condition_number",
    "rank",
    "density_ratio_bound",
    "det_factor",
    "layer_factor",
    "total",
    "status",
    "reason",
];

impl BoundReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn total(&self, v: Variant) -> Option<f64> {
        self.totals.get(&v).and_then(Total::value)
    }

    /// One row per evaluated variant: `variant,total,status,reason`.
    pub fn to_totals_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(TOTALS_CSV_COLUMNS)?;
        for (v, total) in &self.totals {
            let row = match total {
                Total::Value { value } => [v.name().to_string(), format_real(*value), "value".into(), String::new()],
                Total::Inapplicable { reason } => [v.name().to_string(), "NA".into(), "inapplicable".into(), reason.clone()],
            };
            w.write_record(row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
    }

    /// One row per layer per evaluated variant; non-finite values as `inf`,
    /// inapplicable values as `NA`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(REPORT_CSV_COLUMNS)?;
        let na = || "NA".to_string();
        for (v, total) in &self.totals {
            let (total_s, status, reason) = match total {
                Total::Value { value } => (format_real(*value), "value", String::new()),
                Total::Inapplicable { reason } => (na(), "inapplicable", reason.clone()),
            };
            for rec in &self.layers {
                let factor = rec
                    .layer_factors
                    .get(v)
                    .and_then(Total::value)
                    .map_or_else(na, format_real);
                w.write_record([
                    v.name().to_string(),
                    rec.layer.to_string(),
                    rec.rows.to_string(),
                    rec.cols.to_string(),
                    format_real(rec.singular_values[0]),
                    format_real(*rec.singular_values.last().expect("non-empty")),
                    format_real(rec.condition_number),
                    rec.rank.to_string(),
                    format_real(rec.density_ratio_bound),
                    format_real(rec.det_factor),
                    factor,
                    total_s.clone(),
                    status.to_string(),
                    reason.clone(),
                ])?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
    }
}
