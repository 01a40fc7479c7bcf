//! Plain-text serialization: CSV for vectors and batches, JSON for metadata
//! and diagnostics. Complex numbers in JSON are `[re, im]` pairs.

use std::io::{Read, Write};

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{MrfaError, Result};
use crate::linalg::CMatrix;
use crate::model::{ModelParams, ObservationBatch, Truth};
use crate::recover::RecoveryResult;
use crate::scalar::{czero, lit, to_f64, Real};
use crate::spectral::{StrideCovariance, UEstimate};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchMetadata {
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub lambda: f64,
    pub sigma2: f64,
    pub seed: Option<u64>,
}

impl BatchMetadata {
    pub fn params(&self) -> Result<ModelParams<f64>> {
        ModelParams::new(self.l, self.lambda, self.sigma2)
    }
}

pub fn write_metadata<W: Write>(meta: &BatchMetadata, out: W) -> Result<()> {
    serde_json::to_writer_pretty(out, meta)?;
    Ok(())
}

pub fn read_metadata<R: Read>(input: R) -> Result<BatchMetadata> {
    Ok(serde_json::from_reader(input)?)
}

fn fmt<T: Real>(x: T) -> String {
    format!("{:e}", to_f64(x))
}

#[derive(Deserialize)]
struct SignalRow {
    index: usize,
    re: f64,
    im: f64,
}

#[derive(Deserialize)]
struct BatchRow {
    obs: usize,
    index: usize,
    re: f64,
    im: f64,
}

#[derive(Serialize, Deserialize)]
struct TruthRow {
    obs: usize,
    shift: usize,
    a_re: f64,
    a_im: f64,
}

/// `index,re,im`.
pub fn write_signal_csv<T: Real, W: Write>(v: &[Complex<T>], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["index", "re", "im"])?;
    for (i, z) in v.iter().enumerate() {
        w.write_record([i.to_string(), fmt(z.re), fmt(z.im)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_signal_csv<T: Real, R: Read>(input: R) -> Result<Vec<Complex<T>>> {
    let mut rows: Vec<SignalRow> = csv::Reader::from_reader(input).deserialize().collect::<std::result::Result<_, _>>()?;
    rows.sort_by_key(|r| r.index);
    if rows.iter().enumerate().any(|(i, r)| r.index != i) {
        return Err(MrfaError::Parse("signal indices must be 0..L without gaps".into()));
    }
    Ok(rows.into_iter().map(|r| Complex::new(lit(r.re), lit(r.im))).collect())
}

/// `obs,index,re,im`, time domain.
pub fn write_batch_csv<T: Real, W: Write>(batch: &ObservationBatch<T>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["obs", "index", "re", "im"])?;
    for (j, y) in batch.observations().enumerate() {
        for (i, z) in y.iter().enumerate() {
            w.write_record([j.to_string(), i.to_string(), fmt(z.re), fmt(z.im)])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_batch_csv<T: Real, R: Read>(input: R, params: ModelParams<T>) -> Result<ObservationBatch<T>> {
    let l = params.l;
    let mut data: Vec<Complex<T>> = Vec::new();
    let mut seen = 0usize;
    for row in csv::Reader::from_reader(input).deserialize::<BatchRow>() {
        let row = row?;
        if row.index >= l {
            return Err(MrfaError::Parse(format!("index {} out of range for L = {l}", row.index)));
        }
        let pos = row.obs * l + row.index;
        if pos >= data.len() {
            data.resize((row.obs + 1) * l, czero());
        }
        data[pos] = Complex::new(lit(row.re), lit(row.im));
        seen += 1;
    }
    if seen != data.len() {
        return Err(MrfaError::Parse(format!("expected {} entries, found {seen}", data.len())));
    }
    ObservationBatch::from_observations(data, params)
}

/// `obs,shift,a_re,a_im`.
pub fn write_truth_csv<W: Write>(truth: &[Truth], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (obs, t) in truth.iter().enumerate() {
        w.serialize(TruthRow { obs, shift: t.shift, a_re: t.factor.re, a_im: t.factor.im })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_truth_csv<R: Read>(input: R) -> Result<Vec<Truth>> {
    let mut rows: Vec<TruthRow> = csv::Reader::from_reader(input).deserialize().collect::<std::result::Result<_, _>>()?;
    rows.sort_by_key(|r| r.obs);
    Ok(rows.into_iter().map(|r| Truth { shift: r.shift, factor: Complex::new(r.a_re, r.a_im) }).collect())
}

pub fn complex_pairs<T: Real>(v: &[Complex<T>]) -> Vec<[f64; 2]> {
    v.iter().map(|z| [to_f64(z.re), to_f64(z.im)]).collect()
}

pub fn from_complex_pairs<T: Real>(v: &[[f64; 2]]) -> Vec<Complex<T>> {
    v.iter().map(|p| Complex::new(lit(p[0]), lit(p[1]))).collect()
}

/// Row-major nested `[re, im]` arrays.
pub fn matrix_pairs<T: Real>(m: &CMatrix<T>) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| [to_f64(m[(i, j)].re), to_f64(m[(i, j)].im)]).collect()).collect()
}

pub fn stride_covariance_json<T: Real>(c: &StrideCovariance<T>) -> Value {
    json!({
        "m": c.m,
        "matrix": matrix_pairs(&c.matrix),
        "raw_diagonal": c.raw_diagonal.iter().map(|x| to_f64(*x)).collect::<Vec<_>>(),
    })
}

pub fn u_estimate_json<T: Real>(u: &UEstimate<T>) -> Value {
    json!({
        "m": u.m,
        "u_tilde": complex_pairs(&u.u_tilde),
        "top_eigenvalue": to_f64(u.top_eigenvalue),
        "spectral_gap": to_f64(u.spectral_gap),
        "degenerate_gap": u.degenerate_gap,
    })
}

pub fn recovery_result_json<T: Real>(r: &RecoveryResult<T>) -> Value {
    json!({
        "theta_tilde": complex_pairs(&r.theta_tilde),
        "lambda_tilde": to_f64(r.lambda_tilde),
        "algorithm": r.algorithm,
        "iterations": r.iterations,
        "objective_trace": r.objective_trace.iter().map(|x| to_f64(*x)).collect::<Vec<_>>(),
        "flags": r.flags.iter().map(|f| f.to_string()).collect::<Vec<_>>(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generate_observations, generate_signal, SignalNormalization};
    use crate::recover::recover_fm;
    use crate::rng::rng_from_seed;
    use crate::spectral::{estimate_u, power_spectrum_estimate, stride_covariance};

    type C = Complex<f64>;

    fn sample_batch() -> ObservationBatch<f64> {
        let sig = generate_signal(4, &mut rng_from_seed(1), SignalNormalization::UnitPowerSpectrum).unwrap();
        let params = ModelParams::new(4, 1.0, 0.2).unwrap();
        generate_observations(&sig, &params, 6, &mut rng_from_seed(2)).unwrap()
    }

    #[test]
    fn signal_roundtrip_is_exact() {
        let v = vec![C::new(0.1, -2.5e-17), C::new(-3.0, 1.0 / 3.0)];
        let mut buf = Vec::new();
        write_signal_csv(&v, &mut buf).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().starts_with("index,re,im\n0,"));
        assert_eq!(read_signal_csv::<f64, _>(buf.as_slice()).unwrap(), v);
    }

    #[test]
    fn batch_and_truth_roundtrip() {
        let batch = sample_batch();
        let mut buf = Vec::new();
        write_batch_csv(&batch, &mut buf).unwrap();
        let back = read_batch_csv(buf.as_slice(), batch.params().clone()).unwrap();
        assert_eq!(back.observations_flat(), batch.observations_flat());
        assert_eq!(back.fourier_flat(), batch.fourier_flat());

        let mut tbuf = Vec::new();
        write_truth_csv(batch.truth().unwrap(), &mut tbuf).unwrap();
        assert_eq!(read_truth_csv(tbuf.as_slice()).unwrap(), batch.truth().unwrap());
    }

    #[test]
    fn incomplete_batch_is_rejected() {
        let text = "obs,index,re,im\n0,0,1,0\n0,1,1,0\n1,0,1,0\n";
        let params = ModelParams::new(2, 1.0, 0.1).unwrap();
        assert!(read_batch_csv(text.as_bytes(), params).is_err());
    }

    #[test]
    fn metadata_uses_documented_keys() {
        let meta = BatchMetadata { l: 16, n: 1000, lambda: 1.0, sigma2: 0.0625, seed: Some(7) };
        let mut buf = Vec::new();
        write_metadata(&meta, &mut buf).unwrap();
        let v: Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(v["L"], 16);
        assert_eq!(v["N"], 1000);
        assert_eq!(v["sigma2"], 0.0625);
        assert_eq!(read_metadata(buf.as_slice()).unwrap(), meta);
    }

    #[test]
    fn diagnostics_json_shapes() {
        let batch = sample_batch();
        let p = power_spectrum_estimate(&batch, 0.2);
        let c = stride_covariance(&batch, 1, &p, 0.2).unwrap();
        let v = stride_covariance_json(&c);
        assert_eq!(v["matrix"].as_array().unwrap().len(), 4);
        assert_eq!(v["matrix"][2][3].as_array().unwrap().len(), 2);
        assert_eq!(v["matrix"][2][3][1].as_f64().unwrap(), c.matrix[(2, 3)].im);

        let u = estimate_u(&batch, 1, &p, 0.2).unwrap();
        assert_eq!(
            from_complex_pairs::<f64>(&serde_json::from_value::<Vec<[f64; 2]>>(u_estimate_json(&u)["u_tilde"].clone()).unwrap()),
            u.u_tilde
        );

        let r = recover_fm(&batch, 0.2).unwrap();
        let j = recovery_result_json(&r);
        assert_eq!(j["algorithm"], "FM");
        assert_eq!(j["theta_tilde"].as_array().unwrap().len(), 4);
        assert!(j["flags"].is_array());
    }
}
