use nalgebra::{Cholesky, DMatrix, Dyn};

use super::kernel::{squared_exp_kernel, KernelParams};
use super::pso::{pso_optimize, PsoConfig};
use crate::error::{Error, Result};

/// Floor added to Q̂ before its log-determinant, so exactly representable
/// data gives a large but finite likelihood.
const Q_FLOOR: f64 = 1e-12;

/// Inputs of one level with the per-group squared differences of every pair
/// cached, so a likelihood evaluation only sums, exponentiates and factors.
#[derive(Debug, Clone)]
pub(crate) struct Design {
    x: Vec<Vec<f64>>,
    groups: Vec<usize>,
    group_count: usize,
    // packed lower triangle, group-fastest
    sq: Vec<f64>,
    h: DMatrix<f64>,
}

impl Design {
    pub(crate) fn new(x: Vec<Vec<f64>>, groups: Vec<usize>) -> Result<Self> {
        let n = x.len();
        let p = groups.len();
        if x.iter().any(|r| r.len() != p) {
            return Err(Error::Shape(format!("every input row needs {p} entries")));
        }
        if n < p + 2 {
            return Err(Error::Domain(format!(
                "{n} rows cannot support a linear mean in {p} inputs (need at least {})",
                p + 2
            )));
        }
        let group_count = groups.iter().max().map_or(0, |g| g + 1);
        let mut sq = Vec::with_capacity(n * (n + 1) / 2 * group_count);
        for i in 0..n {
            for j in 0..=i {
                let start = sq.len();
                sq.resize(start + group_count, 0.0);
                for (k, &g) in groups.iter().enumerate() {
                    let d = x[i][k] - x[j][k];
                    sq[start + g] += d * d;
                }
            }
        }
        let h = basis(&x, p);
        Ok(Self {
            x,
            groups,
            group_count,
            sq,
            h,
        })
    }

    pub(crate) fn len(&self) -> usize {
        self.x.len()
    }

    pub(crate) fn group_count(&self) -> usize {
        self.group_count
    }

    fn sigma(&self, k: &KernelParams) -> DMatrix<f64> {
        let n = self.len();
        let g = self.group_count;
        let mut s = DMatrix::zeros(n, n);
        let mut at = 0;
        for i in 0..n {
            for j in 0..=i {
                let e: f64 = self.sq[at..at + g].iter().zip(&k.b).map(|(d, b)| d * b).sum();
                at += g;
                let v = (-e).exp();
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
            s[(i, i)] += k.jitter;
        }
        s
    }
}

fn basis(x: &[Vec<f64>], p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(x.len(), p + 1, |i, j| if j == 0 { 1.0 } else { x[i][j - 1] })
}

/// Closed-form generalized-least-squares profile of one level at fixed kernel
/// parameters.
#[derive(Debug, Clone)]
pub(crate) struct Profile {
    chol: Cholesky<f64, Dyn>,
    a_chol: Cholesky<f64, Dyn>,
    sinv_h: DMatrix<f64>,
    alpha: DMatrix<f64>,
    beta: DMatrix<f64>,
    q_hat: DMatrix<f64>,
    pub(crate) log_likelihood: f64,
}

pub(crate) fn profile(design: &Design, y: &DMatrix<f64>, kernel: &KernelParams) -> Result<Profile> {
    let (n, d) = (design.len(), y.ncols());
    if y.nrows() != n {
        return Err(Error::Shape(format!("{} output rows for {n} inputs", y.nrows())));
    }
    let chol = Cholesky::new(design.sigma(kernel))
        .ok_or_else(|| Error::Gp("kernel matrix is not positive definite after jitter".into()))?;
    let h = &design.h;
    let sinv_h = chol.solve(h);
    let a = h.transpose() * &sinv_h;
    let a_chol = Cholesky::new(a).ok_or_else(|| Error::Gp("mean basis is rank-deficient".into()))?;
    let sinv_y = chol.solve(y);
    let beta = a_chol.solve(&(h.transpose() * &sinv_y));
    let alpha = sinv_y - &sinv_h * &beta;
    let r = y - h * &beta;
    let mut q_hat = r.transpose() * &alpha / n as f64;
    q_hat = (&q_hat + q_hat.transpose()) * 0.5;
    let log_det_sigma = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let floored = &q_hat + DMatrix::identity(d, d) * Q_FLOOR;
    let log_det_q = match Cholesky::new(floored) {
        Some(c) => 2.0 * c.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>(),
        None => return Err(Error::Gp("residual covariance is not positive semi-definite".into())),
    };
    let log_likelihood = -0.5 * d as f64 * log_det_sigma - 0.5 * n as f64 * log_det_q;
    Ok(Profile {
        chol,
        a_chol,
        sinv_h,
        alpha,
        beta,
        q_hat,
        log_likelihood,
    })
}

/// One fitted level: `y(x) = h(x)ᵀβ + z(x)` with `h(x) = [1, xᵀ]` and
/// `Cov[z(x), z(x')] = Q ⊗ k(x, x')`.
#[derive(Debug, Clone)]
pub struct MrgpLevel {
    design: Design,
    y: DMatrix<f64>,
    kernel: KernelParams,
    fit: Profile,
}

/// Posterior mean rows and the spatial variance factor `s²` per row; the
/// predictive covariance of the responses at row `j` is `s²_j · Q̂`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelPrediction {
    pub mean: DMatrix<f64>,
    pub s2: Vec<f64>,
}

impl MrgpLevel {
    /// Profiles β̂ and Q̂ at fixed kernel parameters.
    pub fn with_kernel(x: Vec<Vec<f64>>, y: DMatrix<f64>, groups: Vec<usize>, kernel: KernelParams) -> Result<Self> {
        kernel.validate()?;
        let design = Design::new(x, groups)?;
        if kernel.b.len() != design.group_count() {
            return Err(Error::Shape(format!(
                "{} roughness entries for {} groups",
                kernel.b.len(),
                design.group_count()
            )));
        }
        let fit = profile(&design, &y, &kernel)?;
        Ok(Self {
            design,
            y,
            kernel,
            fit,
        })
    }

    pub(crate) fn from_design(design: Design, y: DMatrix<f64>, kernel: KernelParams) -> Result<Self> {
        let fit = profile(&design, &y, &kernel)?;
        Ok(Self {
            design,
            y,
            kernel,
            fit,
        })
    }

    /// Searches `log10 b` per group over `log10_bounds` with the swarm.
    pub fn fit(
        x: Vec<Vec<f64>>,
        y: DMatrix<f64>,
        groups: Vec<usize>,
        jitter: f64,
        log10_bounds: (f64, f64),
        pso: &PsoConfig,
        seed: u64,
    ) -> Result<Self> {
        let design = Design::new(x, groups)?;
        let bounds = vec![log10_bounds; design.group_count()];
        let kernel = |z: &[f64]| KernelParams {
            b: z.iter().map(|v| 10f64.powf(*v)).collect(),
            jitter,
        };
        kernel(&[]).validate()?;
        let best = pso_optimize(
            |z| profile(&design, &y, &kernel(z)).map_or(f64::NEG_INFINITY, |p| p.log_likelihood),
            &bounds,
            pso,
            seed,
        )?;
        if !best.value.is_finite() {
            return Err(Error::Gp("no particle produced a finite likelihood".into()));
        }
        Self::from_design(design, y, kernel(&best.position))
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.design.x
    }

    pub fn outputs(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn groups(&self) -> &[usize] {
        &self.design.groups
    }

    pub fn kernel(&self) -> &KernelParams {
        &self.kernel
    }

    /// `(1 + p) × d`.
    pub fn beta(&self) -> &DMatrix<f64> {
        &self.fit.beta
    }

    pub fn q_hat(&self) -> &DMatrix<f64> {
        &self.fit.q_hat
    }

    pub fn log_likelihood(&self) -> f64 {
        self.fit.log_likelihood
    }

    pub fn predict(&self, rows: &[Vec<f64>]) -> Result<LevelPrediction> {
        let p = self.design.groups.len();
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::Shape(format!("prediction rows need {p} entries")));
        }
        let b = self.kernel.per_dimension(&self.design.groups);
        let k = DMatrix::from_fn(self.design.len(), rows.len(), |i, j| {
            squared_exp_kernel(&self.design.x[i], &rows[j], &b)
        });
        let h = basis(rows, p);
        let mean = &h * &self.fit.beta + k.transpose() * &self.fit.alpha;
        let v = self.fit.chol.solve(&k);
        let u = h.transpose() - self.fit.sinv_h.transpose() * &k;
        let w = self.fit.a_chol.solve(&u);
        let s2 = (0..rows.len())
            .map(|j| {
                let kv = k.column(j).dot(&v.column(j));
                let uw = u.column(j).dot(&w.column(j));
                (1.0 - kv + uw).max(0.0)
            })
            .collect();
        Ok(LevelPrediction { mean, s2 })
    }

    /// Predictive cross-response covariance at one input.
    pub fn covariance(&self, row: &[f64]) -> Result<DMatrix<f64>> {
        let s2 = self.predict(&[row.to_vec()])?.s2[0];
        Ok(self.fit.q_hat.clone() * s2)
    }
}
