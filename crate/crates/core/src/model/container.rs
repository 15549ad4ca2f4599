//! Model file layout:
//!
//! ```text
//! VITLMODEL\n                       magic
//! {"format":"vitl-model",...}\n     one line of ASCII JSON: dims, kernel, λ, array table
//! <f64 little-endian payload>       arrays in header order, row-major
//! ```
//!
//! The payload length must match the array table exactly.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{SolverPath, VitlModel};
use crate::data::{EmotionPoint, LandmarkVector};
use crate::error::{Result, VitlError};
use crate::kernel::{KernelSpec, OutputStructure};

pub const MAGIC: &[u8] = b"VITLMODEL\n";
pub const FORMAT_VERSION: u32 = 1;
const FORMAT_NAME: &str = "vitl-model";
const MAX_HEADER: usize = 1 << 16;

fn format_err(msg: impl Into<String>) -> VitlError {
    VitlError::Format(msg.into())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArrayEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    version: u32,
    t: usize,
    m: usize,
    d: usize,
    p: usize,
    n_observed: usize,
    lambda: f64,
    gamma_x: f64,
    gamma_theta: f64,
    output: String,
    rank: usize,
    solver: String,
    arrays: Vec<ArrayEntry>,
}

fn entry(name: &str, rows: usize, cols: usize) -> ArrayEntry {
    ArrayEntry { name: name.to_string(), rows, cols }
}

impl VitlModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let (t, m, d, p) = (self.t(), self.m(), self.d(), self.p());
        let (output, rank, basis) = match self.spec.output() {
            OutputStructure::Identity => ("identity", d, None),
            OutputStructure::LowRank { rank, basis } => ("low_rank", *rank, Some(basis)),
            OutputStructure::Explicit(a) => ("explicit", d, Some(a)),
        };
        let mut arrays = vec![
            entry("coefficients", self.n_observed(), d),
            entry("anchors_x", t, d),
            entry("anchors_theta", t * m, p),
            entry("observed", t, m),
        ];
        if let Some(b) = basis {
            arrays.push(entry("a_matrix", b.nrows(), b.ncols()));
        }
        let header = Header {
            format: FORMAT_NAME.into(),
            version: FORMAT_VERSION,
            t,
            m,
            d,
            p,
            n_observed: self.n_observed(),
            lambda: self.lambda,
            gamma_x: self.spec.gamma_x(),
            gamma_theta: self.spec.gamma_theta(),
            output: output.into(),
            rank,
            solver: self.path.as_str().into(),
            arrays,
        };
        let mut out = MAGIC.to_vec();
        serde_json::to_writer(&mut out, &header).expect("header serializes");
        out.push(b'\n');
        let mut put = |v: f64| out.extend_from_slice(&v.to_le_bytes());
        for r in 0..self.coefficients.nrows() {
            self.coefficients.row(r).iter().for_each(|&v| put(v));
        }
        self.anchors_x.iter().flat_map(|x| x.as_slice()).for_each(|&v| put(v));
        self.anchors_theta.iter().flatten().flat_map(|e| e.coords()).for_each(|&v| put(v));
        self.observed.iter().flatten().for_each(|&b| put(if b { 1.0 } else { 0.0 }));
        if let Some(b) = basis {
            for r in 0..b.nrows() {
                b.row(r).iter().for_each(|&v| put(v));
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let rest = bytes.strip_prefix(MAGIC).ok_or_else(|| format_err("not a model file (bad magic)"))?;
        let newline = rest
            .iter()
            .take(MAX_HEADER)
            .position(|&b| b == b'\n')
            .ok_or_else(|| format_err("model header is unterminated or too long"))?;
        let header_bytes = &rest[..newline];
        if !header_bytes.is_ascii() {
            return Err(format_err("model header is not ASCII"));
        }
        let header: Header =
            serde_json::from_slice(header_bytes).map_err(|e| format_err(format!("model header: {e}")))?;
        if header.format != FORMAT_NAME {
            return Err(format_err(format!("unknown container '{}'", header.format)));
        }
        if header.version != FORMAT_VERSION {
            return Err(format_err(format!(
                "unsupported model version {} (this build reads version {FORMAT_VERSION})",
                header.version
            )));
        }
        let (t, m, d, p, n_obs) = (header.t, header.m, header.d, header.p, header.n_observed);
        if t == 0 || m == 0 || d == 0 || p == 0 || n_obs == 0 {
            return Err(format_err("model dimensions must be positive"));
        }
        let tm = t.checked_mul(m).ok_or_else(|| format_err("dimension overflow"))?;
        let mut expected = vec![("coefficients", n_obs, d), ("anchors_x", t, d), ("anchors_theta", tm, p), ("observed", t, m)];
        match header.output.as_str() {
            "identity" => {}
            "low_rank" => {
                let cols = header.arrays.get(4).map(|e| e.cols).unwrap_or(0);
                expected.push(("a_matrix", d, cols));
            }
            "explicit" => expected.push(("a_matrix", d, d)),
            other => return Err(format_err(format!("unknown output structure '{other}'"))),
        }
        if header.arrays.len() != expected.len() {
            return Err(format_err("array table does not match the output structure"));
        }
        let mut total = 0usize;
        for (e, (name, rows, cols)) in header.arrays.iter().zip(&expected) {
            if e.name != *name || e.rows != *rows || e.cols != *cols {
                return Err(format_err(format!("array '{}' has an inconsistent shape", e.name)));
            }
            let n = rows.checked_mul(*cols).ok_or_else(|| format_err("dimension overflow"))?;
            total = total.checked_add(n).ok_or_else(|| format_err("dimension overflow"))?;
        }
        let payload = &rest[newline + 1..];
        if Some(payload.len()) != total.checked_mul(8) {
            return Err(format_err(format!(
                "payload holds {} bytes but the header describes {total} values (truncated or corrupt file)",
                payload.len()
            )));
        }
        let mut values = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
        let mut take = |rows: usize, cols: usize| -> Result<DMatrix<f64>> {
            let data: Vec<f64> = values.by_ref().take(rows * cols).collect();
            if data.iter().any(|v| !v.is_finite()) {
                return Err(format_err("payload contains non-finite values"));
            }
            Ok(DMatrix::from_row_slice(rows, cols, &data))
        };
        let coefficients = take(n_obs, d)?;
        let ax = take(t, d)?;
        let at = take(tm, p)?;
        let obs = take(t, m)?;
        let output = match header.output.as_str() {
            "low_rank" => OutputStructure::LowRank { rank: header.rank, basis: take(d, expected[4].2)? },
            "explicit" => OutputStructure::Explicit(take(d, d)?),
            _ => OutputStructure::Identity,
        };
        let spec = KernelSpec::new(header.gamma_x, header.gamma_theta, output)
            .map_err(|e| format_err(format!("kernel specification: {e}")))?;
        if !(header.lambda > 0.0 && header.lambda.is_finite()) {
            return Err(format_err("lambda must be positive"));
        }
        let path = SolverPath::parse(&header.solver).ok_or_else(|| format_err("unknown solver path"))?;

        let anchors_x = (0..t)
            .map(|i| LandmarkVector::new(ax.row(i).iter().copied().collect()))
            .collect::<Result<Vec<_>>>()?;
        let anchors_theta = (0..t)
            .map(|i| (0..m).map(|j| EmotionPoint::new(at.row(m * i + j).iter().copied().collect())).collect())
            .collect::<Result<Vec<Vec<_>>>>()?;
        let mut observed = vec![vec![false; m]; t];
        for i in 0..t {
            for j in 0..m {
                observed[i][j] = match obs[(i, j)] {
                    v if v == 1.0 => true,
                    v if v == 0.0 => false,
                    _ => return Err(format_err("observation flags must be 0 or 1")),
                };
            }
        }
        let a = spec.materialize_a(d).map_err(|e| format_err(e.to_string()))?;
        VitlModel::assemble(coefficients, anchors_x, anchors_theta, observed, spec, a, header.lambda, path)
            .map_err(|e| format_err(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        f.sync_all()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
