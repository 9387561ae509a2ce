//! Weight-file ingestion and emission, plus a minimal byte-stable SVG scatter emitter.
//!
//! A weight file is a JSON document
//!
//! ```json
//! {"version": 1, "s_in": 1.55,
//!  "layers": [{"name": "layer1", "rows": 3, "cols": 3, "weights": [...], "bias": [...],
//!              "activation": {"kind": "smooth_leaky_relu", "params": {"alpha": 0.5, "mu": 0.5}},
//!              "s": 1.55}],
//!  "head": {"kind": "gaussian", "params": {"c": 1.0}}}
//! ```
//!
//! Matrices with more than [`SIDECAR_THRESHOLD`] entries are stored next to the
//! document as raw little-endian `f64` files referenced by relative path and SHA-256.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::matcore::Matrix;
use crate::network::{ActivationKind, Head, LayerSpec, NetworkSpec};

pub const WEIGHT_FILE_VERSION: u32 = 1;
pub const SIDECAR_THRESHOLD: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    /// Relative to the directory of the weight file.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    /// Row-major entries; absent when a sidecar holds them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sidecar: Option<Sidecar>,
    pub bias: Vec<f64>,
    pub activation: ActivationKind,
    pub s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightFile {
    pub version: u32,
    pub layers: Vec<LayerEntry>,
    pub head: Head,
    pub s_in: f64,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(2 * bytes.len()), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

impl WeightFile {
    /// Inline document for `net`; layers are named `layer1`, `layer2`, ….
    pub fn from_network(net: &NetworkSpec) -> Self {
        let layers = net
            .layers
            .iter()
            .enumerate()
            .map(|(j, l)| LayerEntry {
                name: format!("layer{}", j + 1),
                rows: l.out_dim(),
                cols: l.in_dim(),
                weights: Some(l.weight.as_slice().to_vec()),
                sidecar: None,
                bias: l.bias.clone(),
                activation: l.activation.clone(),
                s: l.s_out,
            })
            .collect();
        Self {
            version: WEIGHT_FILE_VERSION,
            layers,
            head: net.head.clone(),
            s_in: net.s_in,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let wf: Self = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if wf.version != WEIGHT_FILE_VERSION {
            return Err(Error::Parse(format!(
                "unsupported weight file version {} (expected {WEIGHT_FILE_VERSION})",
                wf.version
            )));
        }
        Ok(wf)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Validated network; sidecars are resolved against `base_dir`.
    pub fn to_network(&self, base_dir: Option<&Path>) -> Result<NetworkSpec> {
        let first = self
            .layers
            .first()
            .ok_or_else(|| Error::Validation(vec!["weight file has no layers".to_string()]))?;
        let mut layers = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let data = match (&l.weights, &l.sidecar) {
                (Some(w), None) => w.clone(),
                (None, Some(sc)) => read_sidecar(base_dir.unwrap_or(Path::new(".")), sc, l.rows * l.cols)?,
                _ => {
                    return Err(Error::Parse(format!(
                        "layer {}: exactly one of \"weights\" and \"sidecar\" is required",
                        l.name
                    )))
                }
            };
            let w = Matrix::new(l.rows, l.cols, data).map_err(|e| Error::Parse(format!("layer {}: {e}", l.name)))?;
            layers.push(LayerSpec::new(w, l.bias.clone(), l.activation.clone(), l.s));
        }
        let net = NetworkSpec {
            input_dim: first.cols,
            s_in: self.s_in,
            layers,
            head: self.head.clone(),
        };
        net.validate()?;
        Ok(net)
    }
}

fn read_sidecar(base: &Path, sc: &Sidecar, expected: usize) -> Result<Vec<f64>> {
    let path = base.join(&sc.path);
    let bytes = fs::read(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let digest = sha256_hex(&bytes);
    if !digest.eq_ignore_ascii_case(&sc.sha256) {
        return Err(Error::Parse(format!(
            "{}: SHA-256 {digest} does not match the recorded {}",
            path.display(),
            sc.sha256
        )));
    }
    if bytes.len() != 8 * expected {
        return Err(Error::Parse(format!(
            "{}: {} bytes, expected {} for {expected} entries",
            path.display(),
            bytes.len(),
            8 * expected
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

pub fn load_network(path: &Path) -> Result<NetworkSpec> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let wf = WeightFile::parse(&text).map_err(|e| match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        other => other,
    })?;
    wf.to_network(path.parent())
}

/// Writes `net` to `path`, moving matrices above [`SIDECAR_THRESHOLD`] entries
/// into `<stem>.<layer name>.bin` files beside it. Returns every file written.
pub fn save_network(net: &NetworkSpec, path: &Path) -> Result<Vec<PathBuf>> {
    let mut wf = WeightFile::from_network(net);
    let dir = path.parent().unwrap_or(Path::new("."));
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("weights")
        .to_string();
    let mut written = Vec::new();
    for entry in &mut wf.layers {
        if entry.rows * entry.cols <= SIDECAR_THRESHOLD {
            continue;
        }
        let data = entry.weights.take().expect("inline by construction");
        let bytes: Vec<u8> = data.iter().flat_map(|v| v.to_le_bytes()).collect();
        let name = format!("{stem}.{}.bin", entry.name);
        let p = dir.join(&name);
        fs::write(&p, &bytes).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
        entry.sidecar = Some(Sidecar {
            path: name,
            sha256: sha256_hex(&bytes),
        });
        written.push(p);
    }
    fs::write(path, wf.to_json()?).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    written.insert(0, path.to_path_buf());
    Ok(written)
}

/// One scatter point; `shade` in `[0, 1]` runs from light to dark.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatterPoint {
    pub x: f64,
    pub y: f64,
    pub shade: f64,
}

fn axis_range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
        (lo - 0.5, hi + 0.5)
    } else {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

/// Plain SVG scatter with axes, tick labels, and shading. Output depends only on
/// the inputs: no timestamps, fixed numeric precision.
pub fn scatter_svg(points: &[ScatterPoint], x_label: &str, y_label: &str, title: &str) -> String {
    const W: f64 = 640.0;
    const H: f64 = 480.0;
    const M: f64 = 64.0;
    let finite: Vec<&ScatterPoint> = points.iter().filter(|p| p.x.is_finite() && p.y.is_finite()).collect();
    let (x0, x1) = axis_range(finite.iter().map(|p| p.x));
    let (y0, y1) = axis_range(finite.iter().map(|p| p.y));
    let sx = |x: f64| M + (x - x0) / (x1 - x0) * (W - 2.0 * M);
    let sy = |y: f64| H - M - (y - y0) / (y1 - y0) * (H - 2.0 * M);
    let esc = |s: &str| s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;");

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, esc(title));
    let _ = writeln!(
        s,
        r#"<path d="M{M} {M} V{b} H{r}" fill="none" stroke="black"/>"#,
        b = H - M,
        r = W - M
    );
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let xv = x0 + t * (x1 - x0);
        let yv = y0 + t * (y1 - y0);
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{:.3e}</text>"#,
            sx(xv),
            H - M + 18.0,
            xv
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{:.3e}</text>"#,
            M - 6.0,
            sy(yv) + 4.0,
            yv
        );
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 16.0, esc(x_label));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        esc(y_label)
    );
    for p in finite {
        let level = (235.0 - 200.0 * p.shade.clamp(0.0, 1.0)).round() as u8;
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="rgb({level},{level},255)" stroke="rgb(0,0,96)" stroke-width="0.5"/>"#,
            sx(p.x),
            sy(p.y)
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::test_support::{gaussian, rng};

    fn sample_net() -> NetworkSpec {
        let mut r = rng(3);
        NetworkSpec {
            input_dim: 3,
            s_in: 1.55,
            layers: vec![
                LayerSpec::new(gaussian(3, 3, &mut r), vec![0.1, -0.2, 1.0 / 3.0], ActivationKind::smooth_leaky_relu(0.5, 0.5), 1.55),
                LayerSpec::new(gaussian(6, 3, &mut r), vec![0.0; 6], ActivationKind::identity(), 3.05),
            ],
            head: Head::gaussian(1.0),
        }
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let net = sample_net();
        let text = WeightFile::from_network(&net).to_json().unwrap();
        let back = WeightFile::parse(&text).unwrap().to_network(None).unwrap();
        assert_eq!(back, net);
        let again = WeightFile::from_network(&back).to_json().unwrap();
        assert_eq!(again, text);
    }

    #[test]
    fn parse_errors_carry_positions() {
        let bad = "{\n  \"version\": 1,\n  \"layers\": [,\n}";
        match WeightFile::parse(bad) {
            Err(Error::Parse(m)) => assert!(m.contains("line 3"), "{m}"),
            o => panic!("{o:?}"),
        }
        let wrong = WeightFile::from_network(&sample_net()).to_json().unwrap().replace("\"version\": 1", "\"version\": 2");
        assert!(WeightFile::parse(&wrong).is_err());
    }

    #[test]
    fn invalid_networks_rejected_on_load() {
        let mut wf = WeightFile::from_network(&sample_net());
        wf.layers[1].cols = 4;
        wf.layers[1].weights = Some(vec![0.5; 24]);
        assert!(matches!(wf.to_network(None), Err(Error::Validation(_))));
        let mut wf = WeightFile::from_network(&sample_net());
        wf.layers[0].weights = Some(vec![1.0; 8]);
        assert!(matches!(wf.to_network(None), Err(Error::Parse(_))));
    }

    #[test]
    fn sidecar_round_trip_and_tamper_detection() {
        let dir = std::env::temp_dir().join(format!("kb-io-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let net = sample_net();
        let mut wf = WeightFile::from_network(&net);
        let data = wf.layers[1].weights.take().unwrap();
        let bytes: Vec<u8> = data.iter().flat_map(|v| v.to_le_bytes()).collect();
        fs::write(dir.join("w.bin"), &bytes).unwrap();
        wf.layers[1].sidecar = Some(Sidecar {
            path: "w.bin".into(),
            sha256: sha256_hex(&bytes),
        });
        assert_eq!(wf.to_network(Some(&dir)).unwrap(), net);
        fs::write(dir.join("w.bin"), &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(wf.to_network(Some(&dir)), Err(Error::Parse(m)) if m.contains("SHA-256")));
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn svg_is_deterministic() {
        let pts: Vec<ScatterPoint> = (0..10)
            .map(|i| ScatterPoint {
                x: i as f64,
                y: (i as f64).sqrt(),
                shade: i as f64 / 9.0,
            })
            .collect();
        let a = scatter_svg(&pts, "bound", "gen <error>", "t");
        assert_eq!(a, scatter_svg(&pts, "bound", "gen <error>", "t"));
        assert_eq!(a.matches("<circle").count(), 10);
        assert!(a.contains("gen &lt;error&gt;"));
        assert!(scatter_svg(&[], "x", "y", "").ends_with("</svg>\n"));
    }
}
