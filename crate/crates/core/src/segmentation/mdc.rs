//! Mahalanobis distance classifier.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Starting ridge as a fraction of the average per-band variance.
const RIDGE_FRACTION: f64 = 1e-6;
const RIDGE_ESCALATIONS: usize = 40;
/// Smallest acceptable `(min L_ii / max L_ii)^2` of the Cholesky factor.
const MIN_RCOND: f64 = 1e-15;

#[derive(Clone, Copy, Debug, PartialEq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovarianceMode {
    #[default]
    PerClass,
    Pooled,
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum Regularization {
    /// `1e-6 * trace(cov) / bands`, multiplied by 10 until the regularized
    /// covariance factors cleanly.
    #[default]
    Auto,
    /// A fixed ridge, no escalation.
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct MdcOptions {
    pub covariance: CovarianceMode,
    pub regularization: Regularization,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MdcClass {
    pub label: usize,
    pub mean: Vec<f64>,
    /// Unregularized sample covariance.
    pub covariance: DMatrix<f64>,
    pub epsilon: f64,
    /// Lower Cholesky factor of `covariance + epsilon * I`.
    factor: DMatrix<f64>,
}

impl MdcClass {
    fn new(label: usize, mean: Vec<f64>, covariance: DMatrix<f64>, reg: Regularization) -> Result<Self> {
        let bands = mean.len();
        let (epsilon, factor) = match reg {
            Regularization::Fixed(eps) => {
                let f = factorize(&covariance, eps).ok_or_else(|| {
                    Error::Training(format!(
                        "covariance of class {label} is singular with ridge {eps:e}"
                    ))
                })?;
                (eps, f)
            }
            Regularization::Auto => {
                let scale = covariance.trace() / bands as f64;
                let mut eps = RIDGE_FRACTION * if scale > 0.0 { scale } else { 1.0 };
                let mut found = None;
                for _ in 0..RIDGE_ESCALATIONS {
                    if let Some(f) = factorize(&covariance, eps) {
                        found = Some(f);
                        break;
                    }
                    eps *= 10.0;
                }
                let f = found.ok_or_else(|| {
                    Error::Training(format!(
                        "covariance of class {label} could not be regularized"
                    ))
                })?;
                (eps, f)
            }
        };
        Ok(MdcClass {
            label,
            mean,
            covariance,
            epsilon,
            factor,
        })
    }

    pub fn regularized_covariance(&self) -> DMatrix<f64> {
        let n = self.covariance.nrows();
        &self.covariance + DMatrix::identity(n, n) * self.epsilon
    }

    /// Squared Mahalanobis distance `(x - mu)^T (cov + eps I)^-1 (x - mu)`.
    pub fn distance(&self, x: &[f64]) -> f64 {
        let diff = DVector::from_iterator(x.len(), x.iter().zip(&self.mean).map(|(a, b)| a - b));
        match self.factor.solve_lower_triangular(&diff) {
            Some(z) => z.norm_squared(),
            None => f64::INFINITY,
        }
    }
}

fn factorize(cov: &DMatrix<f64>, eps: f64) -> Option<DMatrix<f64>> {
    let n = cov.nrows();
    let reg = cov + DMatrix::identity(n, n) * eps;
    let l = reg.cholesky()?.unpack();
    let diag = l.diagonal();
    let (lo, hi) = (diag.min(), diag.max());
    if !(lo > 0.0) || (lo / hi).powi(2) < MIN_RCOND {
        return None;
    }
    Some(l)
}

/// Per-class Gaussian models, ordered by class label.
#[derive(Clone, Debug, PartialEq)]
pub struct MdcModel {
    classes: Vec<MdcClass>,
}

impl MdcModel {
    /// Builds a model from explicit `(label, mean, covariance)` triples.
    pub fn from_parts(
        parts: Vec<(usize, Vec<f64>, DMatrix<f64>)>,
        regularization: Regularization,
    ) -> Result<Self> {
        if parts.len() < 2 {
            return Err(Error::Training("the classifier needs at least 2 classes".into()));
        }
        let mut classes = parts
            .into_iter()
            .map(|(label, mean, cov)| {
                if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
                    return Err(Error::Dimension(format!(
                        "class {label}: covariance is {}x{} for {} bands",
                        cov.nrows(),
                        cov.ncols(),
                        mean.len()
                    )));
                }
                MdcClass::new(label, mean, cov, regularization)
            })
            .collect::<Result<Vec<_>>>()?;
        classes.sort_by_key(|c| c.label);
        if classes.windows(2).any(|w| w[0].label == w[1].label) {
            return Err(Error::Training("duplicate class label".into()));
        }
        Ok(MdcModel { classes })
    }

    pub fn classes(&self) -> &[MdcClass] {
        &self.classes
    }

    pub fn labels(&self) -> Vec<usize> {
        self.classes.iter().map(|c| c.label).collect()
    }

    /// Label with the smallest Mahalanobis distance; ties go to the lowest
    /// label.
    pub fn classify(&self, x: &[f64]) -> usize {
        let mut best = (self.classes[0].label, f64::INFINITY);
        for c in &self.classes {
            let d = c.distance(x);
            if d < best.1 {
                best = (c.label, d);
            }
        }
        best.0
    }
}

/// Trains per-class means and covariances from labelled spectra.
pub fn mdc_train(spectra: &[Vec<f64>], labels: &[usize]) -> Result<MdcModel> {
    mdc_train_with(spectra, labels, MdcOptions::default())
}

pub fn mdc_train_with(spectra: &[Vec<f64>], labels: &[usize], opts: MdcOptions) -> Result<MdcModel> {
    if spectra.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} spectra but {} labels",
            spectra.len(),
            labels.len()
        )));
    }
    let bands = spectra.first().map_or(0, Vec::len);
    if bands == 0 || spectra.iter().any(|s| s.len() != bands) {
        return Err(Error::Dimension("training spectra are empty or ragged".into()));
    }
    let mut ids: Vec<usize> = labels.to_vec();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() < 2 {
        return Err(Error::Training(format!(
            "training labels contain {} class(es); at least 2 are needed",
            ids.len()
        )));
    }

    let mut stats = Vec::with_capacity(ids.len());
    for &id in &ids {
        let members: Vec<&Vec<f64>> = spectra
            .iter()
            .zip(labels)
            .filter(|(_, &l)| l == id)
            .map(|(s, _)| s)
            .collect();
        if members.len() < 2 {
            return Err(Error::Training(format!(
                "class {id} has {} training sample(s); at least 2 are needed",
                members.len()
            )));
        }
        if members.len() < bands / 4 {
            log::debug!(
                "class {id}: {} samples for {bands} bands; relying on covariance regularization",
                members.len()
            );
        }
        let n = members.len() as f64;
        let mean: Vec<f64> = (0..bands)
            .map(|b| members.iter().map(|s| s[b]).sum::<f64>() / n)
            .collect();
        let mut cov = DMatrix::<f64>::zeros(bands, bands);
        for s in &members {
            let d = DVector::from_iterator(bands, s.iter().zip(&mean).map(|(a, b)| a - b));
            cov.ger(1.0, &d, &d, 1.0);
        }
        cov /= n - 1.0;
        stats.push((id, mean, cov, members.len()));
    }

    if opts.covariance == CovarianceMode::Pooled {
        let total: usize = stats.iter().map(|s| s.3).sum();
        let mut pooled = DMatrix::<f64>::zeros(bands, bands);
        for (_, _, cov, n) in &stats {
            pooled += cov * (*n as f64 - 1.0);
        }
        pooled /= (total - stats.len()) as f64;
        for s in &mut stats {
            s.2 = pooled.clone();
        }
    }

    MdcModel::from_parts(
        stats.into_iter().map(|(id, mean, cov, _)| (id, mean, cov)).collect(),
        opts.regularization,
    )
}

/// Label of `spectrum` under `model`.
pub fn mdc_classify(model: &MdcModel, spectrum: &[f64]) -> usize {
    model.classify(spectrum)
}
