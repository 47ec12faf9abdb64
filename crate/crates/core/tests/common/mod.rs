//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use levy_sid::estimate::{bin_counts, EstimationConfig};
use levy_sid::numeric::DenseMatrix;
use levy_sid::simulate::{simulate_pairs, SdeModel};
use levy_sid::stable::{bin_mass, StableParams};

/// 15-point Kronrod nodes on [0, 1] (symmetric half) and weights; the
/// embedded 7-point Gauss rule uses every other node.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let s = f(c - r * XGK[i]) + f(c + r * XGK[i]);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    (k * r, (k - g).abs() * r)
}

/// Adaptive Gauss–Kronrod quadrature on a finite interval. An interval is
/// accepted once its error estimate falls below `max(1e-14, rel·|I|)`;
/// integrable endpoint singularities are resolved by repeated bisection.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, rel: f64) -> f64 {
    fn go(f: &impl Fn(f64) -> f64, a: f64, b: f64, rel: f64, depth: u32) -> f64 {
        let (v, err) = gk15(f, a, b);
        if err <= (rel * v.abs()).max(1e-14) {
            return v;
        }
        assert!(depth < 400, "quadrature failed to converge on [{a}, {b}]");
        let m = 0.5 * (a + b);
        go(f, a, m, rel, depth + 1) + go(f, m, b, rel, depth + 1)
    }
    if a == b {
        return 0.0;
    }
    if a > b {
        return -integrate(f, b, a, rel);
    }
    go(&f, a, b, rel, 0)
}

/// `∫_c^∞ f` through `y = c/t`.
pub fn integrate_to_infinity(f: impl Fn(f64) -> f64, c: f64, rel: f64) -> f64 {
    assert!(c > 0.0);
    integrate(|t| f(c / t) * c / (t * t), 0.0, 1.0, rel)
}

/// Jump kernel written out independently of the library.
pub fn kernel(alpha: f64, beta: f64, xi: f64) -> f64 {
    let k = if alpha == 1.0 {
        2.0 / PI
    } else {
        alpha * (1.0 - alpha) / (libm::tgamma(2.0 - alpha) * (PI * alpha / 2.0).cos())
    };
    let side = if xi > 0.0 { 1.0 + beta } else { 1.0 - beta };
    k * side / (2.0 * xi.abs().powf(1.0 + alpha))
}

/// Scaled jump density `σ⁻¹ W(σ⁻¹ y)`.
pub fn scaled_density(alpha: f64, beta: f64, sigma: f64, y: f64) -> f64 {
    kernel(alpha, beta, y / sigma) / sigma
}

const QUAD_REL: f64 = 1e-12;

/// Drift correction by quadrature of its defining piecewise integral.
pub fn quad_r(alpha: f64, beta: f64, sigma: f64, eps: f64) -> f64 {
    let f = |y: f64| y * scaled_density(alpha, beta, sigma, y);
    if alpha < 1.0 {
        integrate(f, -eps, 0.0, QUAD_REL) + integrate(f, 0.0, eps, QUAD_REL)
    } else if alpha == 1.0 {
        integrate(f, -eps, -1.0, QUAD_REL) + integrate(f, 1.0, eps, QUAD_REL)
    } else {
        let lower = integrate_to_infinity(|y| f(-y), eps, QUAD_REL);
        let upper = integrate_to_infinity(f, eps, QUAD_REL);
        -(lower + upper)
    }
}

/// Diagonal diffusion correction by quadrature.
pub fn quad_s(alpha: f64, beta: f64, sigma: f64, eps: f64) -> f64 {
    let f = |y: f64| y * y * scaled_density(alpha, beta, sigma, y);
    integrate(f, -eps, 0.0, QUAD_REL) + integrate(f, 0.0, eps, QUAD_REL)
}

pub fn relative_error(got: f64, want: f64) -> f64 {
    if want == 0.0 {
        got.abs()
    } else {
        ((got - want) / want).abs()
    }
}

/// One-sample Kolmogorov–Smirnov statistic of `samples` against `cdf`.
pub fn ks_one_sample(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = cdf(x);
            (c - i as f64 / n).abs().max(((i + 1) as f64 / n - c).abs())
        })
        .fold(0.0, f64::max)
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_two_sample(a: &mut [f64], b: &mut [f64]) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

pub fn cauchy_cdf(x: f64) -> f64 {
    0.5 + x.atan() / PI
}

/// Least-squares slope of `ys` on `xs`.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Upper-tail diagnostics of a sample: the log–log slope of the empirical
/// survival function fitted over survival levels `[lo, hi]`, and the share
/// of the two-sided tail beyond the same threshold that is positive.
pub struct TailFit {
    pub slope: f64,
    pub upper_share: f64,
}

pub fn tail_fit(samples: &mut [f64], lo: f64, hi: f64) -> TailFit {
    samples.sort_by(f64::total_cmp);
    let n = samples.len();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    // points on a log-spaced ladder of survival levels
    let steps = 40;
    for s in 0..=steps {
        let level = hi * (lo / hi).powf(s as f64 / steps as f64);
        let rank = (level * n as f64).round() as usize;
        if rank == 0 || rank >= n {
            continue;
        }
        let x = samples[n - rank];
        if x > 0.0 {
            xs.push(x.ln());
            ys.push((rank as f64 / n as f64).ln());
        }
    }
    let threshold = samples[n - (hi * n as f64) as usize].abs();
    let upper = samples.iter().filter(|&&x| x > threshold).count() as f64;
    let lower = samples.iter().filter(|&&x| x < -threshold).count() as f64;
    TailFit { slope: ols_slope(&xs, &ys), upper_share: upper / (upper + lower) }
}

/// CDF of the standard stable law `S_α(1, β, 0)` by inverting its
/// characteristic function (Gil-Pelaez), for `α ≠ 1`.
pub fn stable_cdf(alpha: f64, beta: f64, x: f64) -> f64 {
    assert!(alpha != 1.0);
    let skew = beta * (PI * alpha / 2.0).tan();
    let f = |t: f64| {
        if t == 0.0 {
            return 0.0;
        }
        let ta = t.powf(alpha);
        (-ta).exp() * (ta * skew - t * x).sin() / t
    };
    // e^{-t^α} is below 1e-300 well before the cutoff
    let cutoff = 700f64.powf(1.0 / alpha);
    let pieces = 800;
    let width = cutoff / pieces as f64;
    let tail: f64 = (0..pieces).map(|k| integrate(f, k as f64 * width, (k + 1) as f64 * width, 1e-12)).sum();
    0.5 - tail / PI
}

/// Interval frequencies of pure-jump increments over `h`, against the
/// closed-form masses. The intervals are the estimator bins for
/// `ε = 1, m = 5, N = 2` on both sides, used only when the expected count
/// reaches 1000.
pub fn jump_frequency_check(alpha: f64, beta: f64, rows: usize, seed: u64) -> Vec<(f64, f64, f64, f64)> {
    let sigma = 1.0;
    let h = 1e-3;
    let p = StableParams::new(alpha, beta, sigma).unwrap();
    let model = SdeModel::parse(&["0"], None, Some(vec![p])).unwrap();
    let data = simulate_pairs(&model, DenseMatrix::zeros(rows, 1), h, seed).unwrap();
    let cfg = EstimationConfig::new(1.0, 5.0, 2).unwrap();
    let counts = bin_counts(data.x(), &cfg, h).unwrap();
    let edges = cfg.edges();
    let mut out = Vec::new();
    for k in 0..edges.len() - 1 {
        let (c1, c2) = (edges[k], edges[k + 1]);
        for (side, n) in [(1.0, counts.positive()[k]), (-1.0, counts.negative()[k])] {
            let (a, b) = if side > 0.0 { (c1, c2) } else { (-c2, -c1) };
            let mass = bin_mass(&p, a, b).unwrap();
            if mass * h * rows as f64 >= 1000.0 {
                out.push((a, b, n as f64 / (rows as f64 * h), mass));
            }
        }
    }
    out
}
