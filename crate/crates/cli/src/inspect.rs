use std::path::{Path, PathBuf};

use koopman_bound::bounds::choose_variant;
use koopman_bound::diagnostics::LayerDiagnostics;
use koopman_bound::io::load_network;
use koopman_bound::NetworkSpec;

use crate::{write_output, Failure};

pub const INSPECT_CSV_COLUMNS: [&str; 9] = [
    "layer",
    "rows",
    "cols",
    "sigma_max",
    "sigma_min",
    "cond",
    "stable_rank",
    "koopman_factor",
    "note",
];

struct Row {
    layer: usize,
    rows: usize,
    cols: usize,
    diag: LayerDiagnostics,
    note: String,
}

/// Shortest round-trip decimal; `inf`/`nan` spelled out.
pub fn real(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x}")
    }
}

fn rows(net: &NetworkSpec) -> Result<Vec<Row>, Failure> {
    let widths = net.widths();
    let mut out = Vec::with_capacity(net.depth());
    for (j, layer) in net.layers.iter().enumerate() {
        let diag = LayerDiagnostics::of(&layer.weight, net.s_prev(j))?;
        let route = choose_variant(layer, widths[j])?;
        let note = if diag.layer_factor.is_some() {
            String::new()
        } else {
            format!("{} only: {}", route.variant, route.reason)
        };
        out.push(Row {
            layer: j + 1,
            rows: layer.weight.rows(),
            cols: layer.weight.cols(),
            diag,
            note,
        });
    }
    Ok(out)
}

fn fields(r: &Row) -> [String; 9] {
    [
        r.layer.to_string(),
        r.rows.to_string(),
        r.cols.to_string(),
        real(r.diag.sigma_max()),
        real(r.diag.sigma_min()),
        real(r.diag.condition_number),
        r.diag.stable_rank.map_or_else(|| "NA".into(), real),
        real(r.diag.layer_factor.unwrap_or(f64::INFINITY)),
        r.note.clone(),
    ]
}

fn to_csv(rows: &[Row]) -> Result<String, Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Failure {
        code: 1,
        message: e.to_string(),
    };
    w.write_record(INSPECT_CSV_COLUMNS).map_err(io)?;
    for r in rows {
        w.write_record(fields(r)).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Failure {
        code: 1,
        message: e.to_string(),
    })?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn table(rows: &[Row]) -> String {
    let cells: Vec<[String; 9]> = rows.iter().map(fields).collect();
    let mut widths: Vec<usize> = INSPECT_CSV_COLUMNS.iter().map(|c| c.len()).collect();
    for c in &cells {
        for (w, s) in widths.iter_mut().zip(c.iter()) {
            *w = (*w).max(s.len());
        }
    }
    let line = |vals: Vec<&str>| {
        let mut s = String::new();
        for (i, (v, w)) in vals.iter().zip(&widths).enumerate() {
            if i + 1 == vals.len() {
                s.push_str(v);
            } else {
                s.push_str(&format!("{v:<w$}  "));
            }
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = line(INSPECT_CSV_COLUMNS.to_vec());
    for c in &cells {
        out.push_str(&line(c.iter().map(String::as_str).collect()));
    }
    out
}

pub fn cmd_inspect(weights: &Path, csv_path: Option<&PathBuf>) -> Result<(), Failure> {
    let net = load_network(weights)?;
    let rows = rows(&net)?;
    print!("{}", table(&rows));
    if let Some(p) = csv_path {
        write_output(Some(p), &to_csv(&rows)?)?;
    }
    Ok(())
}
