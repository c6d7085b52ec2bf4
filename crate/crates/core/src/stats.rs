//! Numerical kernel: least squares, t tests, permutation p-values and
//! descriptive statistics. Everything runs in `f64`.

use serde::Serialize;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Descriptive {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (n - 1); absent for a single observation.
    pub sd: Option<f64>,
    pub se: Option<f64>,
}

pub fn mean_sd_se(sample: &[f64]) -> Result<Descriptive> {
    let n = sample.len();
    if n == 0 {
        return Err(Error::InsufficientData("empty sample".into()));
    }
    let mean = sample.iter().sum::<f64>() / n as f64;
    let (sd, se) = if n >= 2 {
        let ss: f64 = sample.iter().map(|x| (x - mean).powi(2)).sum();
        let sd = (ss / (n - 1) as f64).sqrt();
        (Some(sd), Some(sd / (n as f64).sqrt()))
    } else {
        (None, None)
    };
    Ok(Descriptive { n, mean, sd, se })
}

/// Population variance (divides by n).
pub fn population_variance(sample: &[f64]) -> Option<f64> {
    if sample.is_empty() {
        return None;
    }
    let n = sample.len() as f64;
    let mean = sample.iter().sum::<f64>() / n;
    Some(sample.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n)
}

/// Design matrix with a leading intercept column of ones.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    names: Vec<String>,
    rows: Vec<Vec<f64>>,
    response: Vec<f64>,
}

impl DesignMatrix {
    /// `predictors` are (name, column) pairs; the intercept is added here.
    pub fn with_intercept(predictors: &[(&str, &[f64])], response: &[f64]) -> Result<Self> {
        let n = response.len();
        for (name, col) in predictors {
            if col.len() != n {
                return Err(Error::InvalidInput(format!(
                    "predictor `{name}` has {} rows, response has {n}",
                    col.len()
                )));
            }
        }
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                std::iter::once(1.0)
                    .chain(predictors.iter().map(|(_, c)| c[i]))
                    .collect()
            })
            .collect();
        let mut names = vec!["(Intercept)".to_string()];
        names.extend(predictors.iter().map(|(n, _)| n.to_string()));
        let m = Self {
            names,
            rows,
            response: response.to_vec(),
        };
        if m.rows
            .iter()
            .flatten()
            .chain(&m.response)
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidInput(
                "design matrix contains non-finite values".into(),
            ));
        }
        Ok(m)
    }

    pub fn n_obs(&self) -> usize {
        self.rows.len()
    }

    /// Number of columns including the intercept.
    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn response(&self) -> &[f64] {
        &self.response
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub standard_error: f64,
    pub t_value: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OlsFit {
    pub coefficients: Vec<Coefficient>,
    pub r_squared: f64,
    pub adjusted_r_squared: f64,
    pub n_observations: usize,
    pub residual_df: usize,
    #[serde(skip)]
    pub residuals: Vec<f64>,
}

impl OlsFit {
    pub fn coefficient(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }

    pub fn estimates(&self) -> Vec<f64> {
        self.coefficients.iter().map(|c| c.estimate).collect()
    }
}

/// Ordinary least squares through a Householder QR factorization.
pub fn ols(design: &DesignMatrix) -> Result<OlsFit> {
    let n = design.n_obs();
    let m = design.n_cols();
    if n <= m {
        return Err(Error::InsufficientData(format!(
            "{n} observations for {m} coefficients"
        )));
    }
    // Column-major working copy.
    let mut a: Vec<Vec<f64>> = (0..m)
        .map(|j| design.rows.iter().map(|r| r[j]).collect())
        .collect();
    let mut qty = design.response.clone();
    let col_norms: Vec<f64> = a
        .iter()
        .map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();

    for k in 0..m {
        let norm = a[k][k..].iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm <= 1e-10 * col_norms[k].max(f64::MIN_POSITIVE) {
            return Err(Error::RankDeficient);
        }
        let alpha = if a[k][k] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = a[k][k..].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 > 0.0 {
            let reflect = |col: &mut [f64]| {
                let s: f64 =
                    v.iter().zip(col.iter()).map(|(a, b)| a * b).sum::<f64>() * 2.0 / vnorm2;
                for (c, vi) in col.iter_mut().zip(&v) {
                    *c -= s * vi;
                }
            };
            for col in a.iter_mut().skip(k) {
                reflect(&mut col[k..]);
            }
            reflect(&mut qty[k..]);
        }
        if a[k][k].abs() <= 1e-10 * col_norms[k] {
            return Err(Error::RankDeficient);
        }
    }

    // R is a[j][i] for i <= j.
    let r = |i: usize, j: usize| a[j][i];
    let mut beta = vec![0.0; m];
    for i in (0..m).rev() {
        let s: f64 = (i + 1..m).map(|j| r(i, j) * beta[j]).sum();
        beta[i] = (qty[i] - s) / r(i, i);
    }
    // R^{-1}, upper triangular.
    let mut rinv = vec![vec![0.0; m]; m];
    for j in 0..m {
        rinv[j][j] = 1.0 / r(j, j);
        for i in (0..j).rev() {
            let s: f64 = (i + 1..=j).map(|k| r(i, k) * rinv[k][j]).sum();
            rinv[i][j] = -s / r(i, i);
        }
    }

    let residuals: Vec<f64> = design
        .rows
        .iter()
        .zip(&design.response)
        .map(|(row, y)| y - row.iter().zip(&beta).map(|(x, b)| x * b).sum::<f64>())
        .collect();
    let rss: f64 = residuals.iter().map(|e| e * e).sum();
    let ybar = design.response.iter().sum::<f64>() / n as f64;
    let tss: f64 = design.response.iter().map(|y| (y - ybar).powi(2)).sum();
    let df = n - m;
    let sigma2 = rss / df as f64;
    let r_squared = if tss > 0.0 {
        (1.0 - rss / tss).clamp(0.0, 1.0)
    } else {
        1.0
    };
    let adjusted_r_squared = 1.0 - (1.0 - r_squared) * (n - 1) as f64 / df as f64;

    let coefficients = (0..m)
        .map(|j| {
            let var = sigma2 * (j..m).map(|k| rinv[j][k].powi(2)).sum::<f64>();
            let se = var.sqrt();
            let t = if se > 0.0 {
                beta[j] / se
            } else {
                f64::INFINITY.copysign(beta[j])
            };
            let p = if se > 0.0 {
                student_t_two_sided_p(t, df as f64)
            } else {
                0.0
            };
            Coefficient {
                name: design.names[j].clone(),
                estimate: beta[j],
                standard_error: se,
                t_value: t,
                p_value: p,
            }
        })
        .collect();

    Ok(OlsFit {
        coefficients,
        r_squared,
        adjusted_r_squared,
        n_observations: n,
        residual_df: df,
        residuals,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WelchResult {
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
    pub mean_a: f64,
    pub mean_b: f64,
    pub n_a: usize,
    pub n_b: usize,
}

/// Welch's unequal-variance t test, two-sided.
pub fn welch_t(a: &[f64], b: &[f64]) -> Result<WelchResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "welch t needs two observations per sample, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let da = mean_sd_se(a)?;
    let db = mean_sd_se(b)?;
    let va = da.sd.unwrap().powi(2) / a.len() as f64;
    let vb = db.sd.unwrap().powi(2) / b.len() as f64;
    if va + vb == 0.0 {
        return Err(Error::InsufficientData(
            "both samples have zero variance".into(),
        ));
    }
    let t = (da.mean - db.mean) / (va + vb).sqrt();
    let df =
        (va + vb).powi(2) / (va.powi(2) / (a.len() - 1) as f64 + vb.powi(2) / (b.len() - 1) as f64);
    Ok(WelchResult {
        t,
        df,
        p_value: student_t_two_sided_p(t, df),
        mean_a: da.mean,
        mean_b: db.mean,
        n_a: a.len(),
        n_b: b.len(),
    })
}

/// Add-one two-sided permutation p-value.
///
/// A replicate counts as at least as extreme as the observation when its
/// distance from the replicate mean is at least the observation's.
pub fn permutation_p(observed: f64, replicates: &[f64]) -> Result<f64> {
    if replicates.len() < 100 {
        return Err(Error::InsufficientData(format!(
            "permutation test needs at least 100 replicates, got {}",
            replicates.len()
        )));
    }
    let center = replicates.iter().sum::<f64>() / replicates.len() as f64;
    let dev = (observed - center).abs();
    let slack = 1e-12 * dev.max(1.0);
    let extreme = replicates
        .iter()
        .filter(|r| (*r - center).abs() >= dev - slack)
        .count();
    Ok((1 + extreme) as f64 / (1 + replicates.len()) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Spearman {
    pub rho: f64,
    pub p_value: f64,
    pub n: usize,
}

/// Spearman rank correlation; two-sided p from the t approximation.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<Spearman> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput("samples differ in length".into()));
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::InsufficientData(
            "spearman needs at least 3 pairs".into(),
        ));
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let rho = pearson(&rx, &ry).ok_or_else(|| Error::InsufficientData("constant ranks".into()))?;
    let df = (n - 2) as f64;
    let p_value = if rho.abs() >= 1.0 {
        0.0
    } else {
        student_t_two_sided_p(rho * (df / (1.0 - rho * rho)).sqrt(), df)
    };
    Ok(Spearman { rho, p_value, n })
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

/// Average ranks (1-based), ties share their mean rank.
pub fn ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut out = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

/// `P(|T| >= |t|)` for Student's t with `df` degrees of freedom.
pub fn student_t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    regularized_incomplete_beta(df / (df + t * t), df / 2.0, 0.5).clamp(0.0, 1.0)
}

/// Student's t cumulative distribution function.
pub fn student_t_cdf(t: f64, df: f64) -> f64 {
    let tail = 0.5 * student_t_two_sided_p(t, df);
    if t >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Natural log of the gamma function (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized incomplete beta `I_x(a, b)` via Lentz's continued fraction.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(x, a, b) / a
    } else {
        1.0 - front * beta_continued_fraction(1.0 - x, b, a) / b
    }
}

fn beta_continued_fraction(x: f64, a: f64, b: f64) -> f64 {
    const MAX_ITER: usize = 10_000;
    const EPS: f64 = 1e-15;
    const TINY: f64 = 1e-300;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}
