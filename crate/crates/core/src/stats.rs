//! Small statistics helpers: deterministic pairwise summation, sample
//! moments, least-squares slopes, and a two-sample Kolmogorov statistic.

use crate::scalar::{from_usize, Scalar};

/// Pairwise (cascade) summation: deterministic for a fixed element order
/// and more accurate than sequential summation on long vectors.
pub fn pairwise_sum<S: Scalar>(xs: &[S]) -> S {
    if xs.len() <= 8 {
        let mut acc = S::zero();
        for &x in xs {
            acc += x;
        }
        return acc;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Pairwise summation over an iterator (buffers in blocks).
pub fn pairwise_sum_iter<S: Scalar>(iter: impl Iterator<Item = S>) -> S {
    let mut partials: Vec<S> = Vec::new();
    let mut buf: Vec<S> = Vec::with_capacity(1024);
    for x in iter {
        buf.push(x);
        if buf.len() == 1024 {
            partials.push(pairwise_sum(&buf));
            buf.clear();
        }
    }
    if !buf.is_empty() {
        partials.push(pairwise_sum(&buf));
    }
    pairwise_sum(&partials)
}

/// Sample mean and standard error of the mean.
pub fn mean_se<S: Scalar>(xs: &[S]) -> (S, S) {
    let n = from_usize::<S>(xs.len());
    let mean = pairwise_sum(xs) / n;
    if xs.len() < 2 {
        return (mean, S::zero());
    }
    let var = pairwise_sum_iter(xs.iter().map(|&x| (x - mean) * (x - mean)))
        / (n - S::one());
    (mean, (var / n).sqrt())
}

/// Sample variance (unbiased).
pub fn variance<S: Scalar>(xs: &[S]) -> S {
    let n = from_usize::<S>(xs.len());
    let mean = pairwise_sum(xs) / n;
    pairwise_sum_iter(xs.iter().map(|&x| (x - mean) * (x - mean))) / (n - S::one())
}

/// Least-squares slope of y against x with its standard error.
#[derive(Debug, Clone, Copy)]
pub struct SlopeFit<S: Scalar> {
    pub slope: S,
    pub intercept: S,
    pub stderr: S,
}

pub fn linear_fit<S: Scalar>(x: &[S], y: &[S]) -> SlopeFit<S> {
    assert_eq!(x.len(), y.len());
    assert!(x.len() >= 2, "need at least two points for a slope");
    let n = from_usize::<S>(x.len());
    let mx = pairwise_sum(x) / n;
    let my = pairwise_sum(y) / n;
    let mut sxx = S::zero();
    let mut sxy = S::zero();
    for (&a, &b) in x.iter().zip(y.iter()) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let mut sse = S::zero();
    for (&a, &b) in x.iter().zip(y.iter()) {
        let r = b - (intercept + slope * a);
        sse += r * r;
    }
    let dof = if x.len() > 2 {
        from_usize::<S>(x.len() - 2)
    } else {
        S::one()
    };
    let stderr = (sse / dof / sxx).sqrt();
    SlopeFit {
        slope,
        intercept,
        stderr,
    }
}

/// One-sample Kolmogorov statistic of `samples` against a CDF.
pub fn kolmogorov_statistic<S: Scalar>(samples: &mut [S], cdf: impl Fn(S) -> S) -> S {
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = from_usize::<S>(samples.len());
    let mut d = S::zero();
    for (i, &x) in samples.iter().enumerate() {
        let f = cdf(x);
        let lo = from_usize::<S>(i) / n;
        let hi = from_usize::<S>(i + 1) / n;
        d = d.max((f - lo).abs()).max((hi - f).abs());
    }
    d
}

/// Normal CDF via erfc: Phi(x) = erfc(-(x - mean)/(sd sqrt(2))) / 2.
pub fn normal_cdf<S: Scalar>(x: S, mean: S, sd: S) -> S {
    let z = (x - mean) / (sd * crate::scalar::lit::<S>(std::f64::consts::SQRT_2));
    crate::scalar::lit::<S>(0.5) * erfc(-z)
}

/// Complementary error function (Numerical Recipes rational approximation,
/// absolute error < 1.2e-7; adequate for test statistics).
pub fn erfc<S: Scalar>(x: S) -> S {
    let z = x.abs().to_f64().unwrap();
    let t = 1.0 / (1.0 + 0.5 * z);
    let ans = t * (-z * z - 1.26551223
        + t * (1.00002368
            + t * (0.37409196
                + t * (0.09678418
                    + t * (-0.18628806
                        + t * (0.27886807
                            + t * (-1.13520398
                                + t * (1.48851587
                                    + t * (-0.82215223 + t * 0.17087277)))))))))
        .exp();
    let out = if x >= S::zero() { ans } else { 2.0 - ans };
    crate::scalar::lit(out)
}
