//! Torus files (JSON) and run logs (CSV).
//!
//! A torus file stores the periodic part of `K` for the modes `k >= 0` in
//! lexicographic order (first nonzero entry positive, plus `k = 0`); the
//! remaining modes follow from `c_{-k} = conj(c_k)`. Floats are written in
//! shortest round-trip form, so save followed by load is bit-exact.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use log::warn;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::{FourierSeries, TorusEmbedding, Truncation};
use crate::newton::StepReport;

pub const WINDING_CONVENTION: &str = "angle-identity";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoeffEntry {
    pub k: Vec<i64>,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

/// On-disk layout of a torus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TorusFile {
    pub d: usize,
    pub n: usize,
    pub truncation: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    pub winding_convention: String,
    pub coeffs: Vec<CoeffEntry>,
    /// Parameter value the torus is invariant for, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<Vec<f64>>,
}

/// A loaded torus with the optional metadata that travelled with it.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredTorus {
    pub torus: TorusEmbedding,
    pub lambda: Option<Vec<f64>>,
    pub omega: Option<Vec<f64>>,
}

fn is_nonnegative(k: &[i64]) -> bool {
    k.iter().find(|&&v| v != 0).is_none_or(|&v| v > 0)
}

impl TorusFile {
    pub fn from_torus(k: &TorusEmbedding, lambda: Option<&[f64]>, omega: Option<&[f64]>) -> Self {
        let p = k.periodic();
        let trunc = p.truncation();
        let dim = k.state_dim();
        let mut coeffs = Vec::new();
        trunc.for_each_mode(|idx, mode| {
            if !is_nonnegative(mode) {
                return;
            }
            let vals: Vec<Complex64> = (0..dim).map(|c| p.component(c)[idx]).collect();
            coeffs.push(CoeffEntry {
                k: mode.to_vec(),
                re: vals.iter().map(|v| v.re).collect(),
                im: vals.iter().map(|v| v.im).collect(),
            });
        });
        coeffs.sort_by(|a, b| a.k.cmp(&b.k));
        Self {
            d: k.d(),
            n: k.n(),
            truncation: trunc.radii().to_vec(),
            rho: Some(k.rho()),
            winding_convention: WINDING_CONVENTION.into(),
            coeffs,
            lambda: lambda.map(<[f64]>::to_vec),
            omega: omega.map(<[f64]>::to_vec),
        }
    }

    pub fn into_torus(self) -> Result<StoredTorus> {
        if self.winding_convention != WINDING_CONVENTION {
            return Err(Error::schema(
                "winding_convention",
                format!("expected \"{WINDING_CONVENTION}\", found \"{}\"", self.winding_convention),
            ));
        }
        let r = self.d + self.n;
        if self.truncation.len() != r {
            return Err(Error::DimensionMismatch(format!(
                "truncation has {} axes, expected d + n = {r}",
                self.truncation.len()
            )));
        }
        let rho = match self.rho {
            Some(v) => v,
            None => {
                warn!("torus file has no \"rho\"; using 0");
                0.0
            }
        };
        let dim = 2 * self.d + self.n;
        let trunc = Truncation::new(self.truncation.clone());
        let mut series = FourierSeries::zeros(trunc.clone(), dim, 1);
        let mut seen = HashSet::new();
        for (i, entry) in self.coeffs.iter().enumerate() {
            let key = |field: &str| format!("coeffs[{i}].{field}");
            if entry.k.len() != r {
                return Err(Error::DimensionMismatch(format!(
                    "{}: mode has {} entries, expected {r}",
                    key("k"),
                    entry.k.len()
                )));
            }
            if entry.re.len() != dim || entry.im.len() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "{}: expected {dim} values",
                    key("re/im")
                )));
            }
            if !is_nonnegative(&entry.k) {
                return Err(Error::schema(
                    key("k"),
                    format!("mode {:?} is lexicographically negative; it is implied by conjugation", entry.k),
                ));
            }
            if trunc.index(&entry.k).is_none() {
                return Err(Error::schema(key("k"), format!("mode {:?} lies outside the truncation", entry.k)));
            }
            if !seen.insert(entry.k.clone()) {
                return Err(Error::schema(key("k"), format!("mode {:?} listed twice", entry.k)));
            }
            let is_zero = entry.k.iter().all(|&v| v == 0);
            if is_zero && entry.im.iter().any(|&v| v != 0.0) {
                return Err(Error::schema(key("im"), "the constant mode of a real torus must be real"));
            }
            let neg: Vec<i64> = entry.k.iter().map(|v| -v).collect();
            for c in 0..dim {
                let v = Complex64::new(entry.re[c], entry.im[c]);
                series.set_coeff(c, &entry.k, v);
                if !is_zero {
                    series.set_coeff(c, &neg, v.conj());
                }
            }
        }
        Ok(StoredTorus {
            torus: TorusEmbedding::new(self.d, self.n, series, rho)?,
            lambda: self.lambda,
            omega: self.omega,
        })
    }
}

pub fn torus_to_json(k: &TorusEmbedding, lambda: Option<&[f64]>, omega: Option<&[f64]>) -> Result<String> {
    Ok(serde_json::to_string_pretty(&TorusFile::from_torus(k, lambda, omega))?)
}

pub fn torus_from_json(text: &str) -> Result<StoredTorus> {
    serde_json::from_str::<TorusFile>(text)?.into_torus()
}

pub fn save_torus(
    path: &Path,
    k: &TorusEmbedding,
    lambda: Option<&[f64]>,
    omega: Option<&[f64]>,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, &TorusFile::from_torus(k, lambda, omega))?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn load_torus(path: &Path) -> Result<StoredTorus> {
    let mut text = String::new();
    BufReader::new(File::open(path)?).read_to_string(&mut text)?;
    torus_from_json(&text)
}

/// One CSV row of the run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub iter: usize,
    pub err_before: f64,
    pub err_after: f64,
    pub delta_norm: f64,
    pub eps_norm: f64,
    pub divisor_floor: f64,
    #[serde(rename = "condV")]
    pub cond_v: f64,
    pub rank_avg_lambda: usize,
    pub tail_ratio: f64,
    pub accepted: bool,
}

impl From<&StepReport> for LogRow {
    fn from(r: &StepReport) -> Self {
        Self {
            iter: r.iteration,
            err_before: r.err_before,
            err_after: r.err_after,
            delta_norm: r.delta_norm,
            eps_norm: r.eps_norm,
            divisor_floor: r.divisor_floor,
            cond_v: r.cond_v,
            rank_avg_lambda: r.rank_avg_lambda,
            tail_ratio: r.tail_ratio,
            accepted: r.accepted,
        }
    }
}

/// Writes `# `-prefixed header lines followed by the CSV table.
pub fn write_log<W: Write>(mut out: W, header: &[String], reports: &[StepReport]) -> Result<()> {
    for block in header {
        for line in block.lines() {
            writeln!(out, "# {line}")?;
        }
    }
    let mut w = csv::Writer::from_writer(out);
    for r in reports {
        w.serialize(LogRow::from(r)).map_err(csv_error)?;
    }
    if reports.is_empty() {
        w.write_record([
            "iter",
            "err_before",
            "err_after",
            "delta_norm",
            "eps_norm",
            "divisor_floor",
            "condV",
            "rank_avg_lambda",
            "tail_ratio",
            "accepted",
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_log<R: Read>(input: R) -> Result<Vec<LogRow>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    r.deserialize().map(|row| row.map_err(csv_error)).collect()
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::schema("csv", format!("{other:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_torus(seed: u64, radius: usize) -> TorusEmbedding {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let trunc = Truncation::new(vec![radius, radius + 1]);
        let mut p = FourierSeries::zeros(trunc, 3, 1);
        for c in p.coeffs_mut() {
            *c = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        p.symmetrize();
        TorusEmbedding::new(1, 1, p, 0.05).unwrap()
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(seed in any::<u64>(), radius in 0usize..5) {
            let k = random_torus(seed, radius);
            let text = torus_to_json(&k, Some(&[1e-3, -2.5e-7, 0.0]), None).unwrap();
            let back = torus_from_json(&text).unwrap();
            let same = back.torus.periodic().coeffs().iter().zip(k.periodic().coeffs())
                .all(|(a, b)| a.re.to_bits() == b.re.to_bits() && a.im.to_bits() == b.im.to_bits());
            prop_assert!(same);
            prop_assert_eq!(back.torus.rho(), k.rho());
            prop_assert_eq!(back.lambda, Some(vec![1e-3, -2.5e-7, 0.0]));
        }
    }

    #[test]
    fn only_nonnegative_modes_are_written() {
        let k = random_torus(1, 2);
        let file = TorusFile::from_torus(&k, None, None);
        // (5 x 7 - 1) / 2 + 1 modes
        assert_eq!(file.coeffs.len(), 18);
        assert!(file.coeffs.iter().all(|c| is_nonnegative(&c.k)));
        assert!(file.coeffs.windows(2).all(|w| w[0].k < w[1].k));
    }

    #[test]
    fn hermitian_violations_are_schema_errors() {
        let k = random_torus(2, 1);
        let mut file = TorusFile::from_torus(&k, None, None);
        let zero = file.coeffs.iter().position(|c| c.k == vec![0, 0]).unwrap();
        file.coeffs[zero].im[1] = 0.5;
        match file.clone().into_torus() {
            Err(Error::Schema { key, .. }) => assert_eq!(key, format!("coeffs[{zero}].im")),
            other => panic!("expected schema error, got {other:?}"),
        }
        let mut file = TorusFile::from_torus(&k, None, None);
        file.coeffs.push(CoeffEntry {
            k: vec![-1, 0],
            re: vec![0.0; 3],
            im: vec![0.0; 3],
        });
        assert!(matches!(file.into_torus(), Err(Error::Schema { .. })));
    }

    #[test]
    fn missing_rho_defaults_to_zero() {
        let k = random_torus(3, 1);
        let mut file = TorusFile::from_torus(&k, None, None);
        file.rho = None;
        let text = serde_json::to_string(&file).unwrap();
        assert!(!text.contains("\"rho\""));
        assert_eq!(torus_from_json(&text).unwrap().torus.rho(), 0.0);
    }

    #[test]
    fn wrong_shapes_are_rejected() {
        let k = random_torus(4, 1);
        let mut file = TorusFile::from_torus(&k, None, None);
        file.coeffs[0].re.pop();
        assert!(matches!(file.into_torus(), Err(Error::DimensionMismatch(_))));
        let mut file = TorusFile::from_torus(&k, None, None);
        file.winding_convention = "other".into();
        assert!(matches!(file.into_torus(), Err(Error::Schema { .. })));
        let mut file = TorusFile::from_torus(&k, None, None);
        file.coeffs[1].k = vec![9, 9];
        assert!(matches!(file.into_torus(), Err(Error::Schema { .. })));
    }

    #[test]
    fn log_round_trip_skips_comments() {
        let report = StepReport {
            iteration: 1,
            err_before: 0.1,
            err_after: 1e-3,
            sup_before: 0.1,
            delta_norm: 0.2,
            d_delta_norm: 1.0,
            eps_norm: 4e-3,
            divisor_floor: 0.01,
            cond_m: 1.0,
            cond_v: 2.0,
            rank_avg_lambda: 3,
            sigma_min_avg_lambda: 1.0,
            tail_ratio: 0.0,
            accepted: true,
            halvings: 0,
            step_length: 1.0,
            avg_residual: 0.0,
            action_average: 0.0,
            block_residual: 0.0,
            qm_residual: 0.0,
            v_inv_r: 0.0,
            lambda_placement_gap: 0.0,
            lagrangian_norm: 0.0,
            dk_norm: 1.0,
            radii: vec![4, 4],
            wall_seconds: 0.5,
        };
        let mut buf = Vec::new();
        write_log(&mut buf, &["seed = 1\n[solver]".into()], std::slice::from_ref(&report)).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# seed = 1\n# [solver]\niter,err_before,err_after,delta_norm,eps_norm,divisor_floor,condV,rank_avg_lambda,tail_ratio,accepted\n"));
        let rows = read_log(buf.as_slice()).unwrap();
        assert_eq!(rows, vec![LogRow::from(&report)]);
    }
}
