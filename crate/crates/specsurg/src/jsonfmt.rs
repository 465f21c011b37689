//! JSON output with every float written at 17 significant digits, and the
//! `[re, im]` pair encoding used for complex matrices.

use serde_json::ser::Formatter;
use serde_json::{json, Value};
use std::io;

use crate::error::{Error, Result};
use crate::matops::{c, CMat};

/// Compact formatter that prints floats as `d.dddddddddddddddde±x`.
#[derive(Default)]
pub struct FixedDigits;

impl Formatter for FixedDigits {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }
}

/// Serialize a value with [`FixedDigits`]. Identical values give identical bytes.
pub fn to_string(value: &Value) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FixedDigits);
    serde::Serialize::serialize(value, &mut ser)?;
    Ok(String::from_utf8(buf).expect("json is utf8"))
}

/// Row-major `[[re, im], ...]`.
pub fn mat_to_json(m: &CMat) -> Value {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let z = m[(i, j)];
            out.push(json!([z.re, z.im]));
        }
    }
    Value::Array(out)
}

fn num(v: &Value, what: &str) -> Result<f64> {
    v.as_f64()
        .ok_or_else(|| Error::validation(format!("{what}: expected a number, got {v}")))
}

/// Inverse of [`mat_to_json`] for an `n×n` matrix.
pub fn mat_from_json(v: &Value, n: usize, what: &str) -> Result<CMat> {
    let arr = v
        .as_array()
        .ok_or_else(|| Error::validation(format!("{what}: expected an array of [re, im] pairs")))?;
    if arr.len() != n * n {
        return Err(Error::validation(format!(
            "{what}: expected {} entries for n = {n}, got {}",
            n * n,
            arr.len()
        )));
    }
    let mut m = CMat::zeros(n, n);
    for (idx, e) in arr.iter().enumerate() {
        let pair = e
            .as_array()
            .filter(|p| p.len() == 2)
            .ok_or_else(|| Error::validation(format!("{what}: entry {idx} is not a [re, im] pair")))?;
        let z = c(num(&pair[0], what)?, num(&pair[1], what)?);
        if !(z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::validation(format!("{what}: entry {idx} is not finite")));
        }
        m[(idx / n, idx % n)] = z;
    }
    Ok(m)
}

/// Infer `n` from a flat pair list of length `n²`.
pub fn infer_dim(v: &Value, what: &str) -> Result<usize> {
    let len = v
        .as_array()
        .ok_or_else(|| Error::validation(format!("{what}: expected an array")))?
        .len();
    let n = (len as f64).sqrt().round() as usize;
    if n == 0 || n * n != len {
        return Err(Error::validation(format!("{what}: {len} entries is not a square matrix")));
    }
    Ok(n)
}
