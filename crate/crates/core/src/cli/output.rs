//! Series files. Every float is written with enough digits to parse back
//! exactly at the recorded precision.

use rug::Float;
use serde::{Deserialize, Serialize};

use crate::mp::{float_from_string, float_to_string, Cx};
use crate::predict::{PredictionErrorSeries, Provenance};
use crate::{Error, Result};

#[derive(Serialize, Deserialize)]
struct Row {
    n: usize,
    sigma2: String,
    alpha_re: String,
    alpha_im: String,
}

#[derive(Serialize, Deserialize)]
struct SeriesFile {
    precision_bits: u32,
    r0: String,
    degraded_from: Option<usize>,
    provenance: Provenance,
    rows: Vec<Row>,
}

fn rows(s: &PredictionErrorSeries) -> Vec<Row> {
    s.sigma2()
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let (re, im) = match s.reflection().get(i) {
                Some(c) => (float_to_string(&c.re), float_to_string(&c.im)),
                None => (String::new(), String::new()),
            };
            Row {
                n: i + 1,
                sigma2: float_to_string(v),
                alpha_re: re,
                alpha_im: im,
            }
        })
        .collect()
}

pub fn series_to_json(s: &PredictionErrorSeries) -> String {
    let file = SeriesFile {
        precision_bits: s.precision_bits(),
        r0: float_to_string(s.r0()),
        degraded_from: s.degraded_from(),
        provenance: s.provenance().clone(),
        rows: rows(s),
    };
    format!(
        "{}\n",
        serde_json::to_string_pretty(&file).expect("serializable")
    )
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn series_to_csv(s: &PredictionErrorSeries) -> String {
    let p = s.provenance();
    let mut out = String::new();
    if let Some(d) = &p.density {
        out.push_str(&format!("# density = {d}\n"));
    }
    out.push_str(&format!("# precision_bits = {}\n", s.precision_bits()));
    out.push_str(&format!("# r0 = {}\n", float_to_string(s.r0())));
    if let Some(m) = &p.covariance_method {
        out.push_str(&format!("# covariance_method = {m:?}\n"));
    }
    for c in &p.spot_checks {
        out.push_str(&format!(
            "# spot_check lag = {} batched = {:e} direct = {:e} bound = {:e}\n",
            c.lag, c.batched, c.direct, c.bound
        ));
    }
    for c in &p.oracle_checks {
        out.push_str(&format!(
            "# oracle_check n = {} rel_diff = {:e} passed = {}\n",
            c.n, c.rel_diff, c.passed
        ));
    }
    if !p.escalations.is_empty() {
        out.push_str(&format!("# escalated_from = {:?}\n", p.escalations));
    }
    if p.normalized {
        out.push_str("# normalized = true\n");
    }
    if let Some(d) = s.degraded_from() {
        out.push_str(&format!("# degraded_from = {d}\n"));
    }
    out.push_str("n,sigma2,alpha_re,alpha_im\n");
    for r in rows(s) {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.n, r.sigma2, r.alpha_re, r.alpha_im
        ));
    }
    out
}

fn build(precision_bits: u32, r0: &str, rows: &[Row]) -> Result<PredictionErrorSeries> {
    let r0 = float_from_string(precision_bits, r0)?;
    let mut sigma2 = Vec::with_capacity(rows.len());
    let mut refl = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        if r.n != i + 1 {
            return Err(Error::InvalidSeries(format!(
                "row {} has n = {}",
                i + 1,
                r.n
            )));
        }
        sigma2.push(float_from_string(precision_bits, &r.sigma2)?);
        if !r.alpha_re.is_empty() {
            refl.push(Cx::new(
                float_from_string(precision_bits, &r.alpha_re)?,
                float_from_string(precision_bits, &r.alpha_im)?,
            ));
        }
    }
    PredictionErrorSeries::from_parts(r0, sigma2, refl, precision_bits)
}

/// Reads a file written by `series_to_json` or `series_to_csv`.
pub fn read_series(text: &str) -> Result<PredictionErrorSeries> {
    if text.trim_start().starts_with('{') {
        let file: SeriesFile = serde_json::from_str(text)
            .map_err(|e| Error::InvalidSeries(format!("bad series JSON: {e}")))?;
        let s = build(file.precision_bits, &file.r0, &file.rows)?;
        return Ok(s.with_provenance(file.provenance, file.degraded_from));
    }
    let mut precision_bits = None;
    let mut r0 = None;
    let mut rows = Vec::new();
    for line in text.lines() {
        if let Some(h) = line.strip_prefix('#') {
            if let Some((k, v)) = h.split_once('=') {
                match k.trim() {
                    "precision_bits" => precision_bits = v.trim().parse::<u32>().ok(),
                    "r0" => r0 = Some(v.trim().to_string()),
                    _ => {}
                }
            }
            continue;
        }
        if line.trim().is_empty() || line.starts_with("n,") {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() < 2 {
            return Err(Error::InvalidSeries(format!("bad CSV row {line:?}")));
        }
        rows.push(Row {
            n: cols[0]
                .trim()
                .parse()
                .map_err(|_| Error::InvalidSeries(format!("bad order in {line:?}")))?,
            sigma2: cols[1].trim().to_string(),
            alpha_re: cols
                .get(2)
                .map(|s| s.trim().to_string())
                .unwrap_or_default(),
            alpha_im: cols
                .get(3)
                .map(|s| s.trim().to_string())
                .unwrap_or_default(),
        });
    }
    let bits = precision_bits.unwrap_or(64).max(crate::mp::MIN_PREC);
    let r0 = match r0 {
        Some(r) => r,
        None => Float::with_val(bits, 1).to_string(),
    };
    build(bits, &r0, &rows)
}
