//! JSON problem files.
//!
//! Permutation indices are 1-based. Validation happens once, in
//! [`ProblemFile::validate`]; nothing downstream sees unchecked input.

use mtrate_core::matlib::{BlockPattern, SymMatrix};
use mtrate_core::remote_model::NoisePattern;
use mtrate_core::tightness::Certificate;
use mtrate_core::{Error, MTProblem, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Base {
    #[default]
    Bits,
    Nats,
}

impl Base {
    /// Converts a rate in nats.
    pub fn rate(self, nats: f64) -> f64 {
        match self {
            Base::Bits => nats / std::f64::consts::LN_2,
            Base::Nats => nats,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub perm: Vec<usize>,
    pub k: usize,
    pub sigma_n: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateSpec {
    pub lambda: Vec<Vec<f64>>,
    pub omega: Vec<Vec<f64>>,
    pub thetas: Vec<Vec<Vec<f64>>>,
    pub pi: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Options {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<Base>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub sigma_y: Vec<Vec<f64>>,
    pub d: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<CertificateSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Options>,
}

/// A problem file after validation.
#[derive(Clone, Debug)]
pub struct Validated {
    pub problem: MTProblem,
    pub noise: Option<NoisePattern>,
    pub certificate: Option<Certificate>,
    pub tol: Option<f64>,
    pub base: Option<Base>,
}

fn sym(name: &str, rows: &[Vec<f64>]) -> Result<SymMatrix> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidInput(format!("{name} must be square")));
    }
    for i in 0..n {
        for j in 0..i {
            let (a, b) = (rows[i][j], rows[j][i]);
            if (a - b).abs() > 1e-12 * (1.0 + a.abs().max(b.abs())) {
                return Err(Error::InvalidInput(format!("{name} is not symmetric at ({}, {})", i + 1, j + 1)));
            }
        }
    }
    SymMatrix::from_rows(rows).map_err(|e| Error::InvalidInput(format!("{name}: {e}")))
}

impl ProblemFile {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("problem file: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem files always serialize")
    }

    pub fn validate(&self) -> Result<Validated> {
        let problem = MTProblem::new(sym("sigma_y", &self.sigma_y)?, self.d.clone())?;
        let l = problem.dim();
        let noise = match &self.noise {
            None => None,
            Some(n) => {
                let pattern = BlockPattern::new(n.perm.clone(), n.k)?;
                if pattern.len() != l {
                    return Err(Error::DimensionMismatch { expected: l, found: pattern.len() });
                }
                Some(NoisePattern::new(pattern, sym("sigma_n", &n.sigma_n)?)?)
            }
        };
        let certificate = match &self.certificate {
            None => None,
            Some(c) => {
                let thetas = c
                    .thetas
                    .iter()
                    .enumerate()
                    .map(|(j, t)| sym(&format!("thetas[{j}]"), t))
                    .collect::<Result<Vec<_>>>()?;
                if thetas.iter().any(|t| t.dim() != 2) {
                    return Err(Error::InvalidInput("each theta must be 2x2".into()));
                }
                if c.pi.iter().any(|p| !p.is_finite()) {
                    return Err(Error::InvalidInput("pi must be finite".into()));
                }
                Some(Certificate {
                    lambda: sym("lambda", &c.lambda)?,
                    omega: sym("omega", &c.omega)?,
                    thetas,
                    pi: c.pi.clone(),
                })
            }
        };
        let options = self.options.clone().unwrap_or_default();
        if let Some(t) = options.tol {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::InvalidInput(format!("tol must be positive, got {t}")));
            }
        }
        Ok(Validated { problem, noise, certificate, tol: options.tol, base: options.base })
    }
}

impl NoiseSpec {
    pub fn from_pattern(np: &NoisePattern) -> Self {
        NoiseSpec { perm: np.pattern.perm().to_vec(), k: np.pattern.k(), sigma_n: np.sigma_n.to_rows() }
    }
}

impl CertificateSpec {
    pub fn from_certificate(c: &Certificate) -> Self {
        CertificateSpec {
            lambda: c.lambda.to_rows(),
            omega: c.omega.to_rows(),
            thetas: c.thetas.iter().map(SymMatrix::to_rows).collect(),
            pi: c.pi.clone(),
        }
    }
}
