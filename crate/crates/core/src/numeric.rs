//! Order-independent floating-point reductions.
//!
//! Estimates feed invariants that must hold exactly (constant preservation,
//! monotonicity of the mean), so sums are accumulated without rounding error
//! and rounded once at the end.

/// Exact accumulator: a non-overlapping expansion of partial sums
/// (Shewchuk). The represented value is the exact real sum of all inputs.
#[derive(Debug, Clone, Default)]
pub struct ExactSum {
    partials: Vec<f64>,
}

impl ExactSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, mut x: f64) {
        let mut i = 0;
        for k in 0..self.partials.len() {
            let mut y = self.partials[k];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                self.partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        self.partials.truncate(i);
        self.partials.push(x);
    }

    /// Correctly rounded value of the exact sum.
    pub fn value(&self) -> f64 {
        let p = &self.partials;
        let Some(mut n) = p.len().checked_sub(1) else {
            return 0.0;
        };
        let mut hi = p[n];
        let mut lo = 0.0;
        while n > 0 {
            n -= 1;
            let x = hi;
            let y = p[n];
            hi = x + y;
            let yr = hi - x;
            lo = y - yr;
            if lo != 0.0 {
                break;
            }
        }
        // Half-way case: nudge towards the sign of the remaining partials.
        if n > 0 && ((lo < 0.0 && p[n - 1] < 0.0) || (lo > 0.0 && p[n - 1] > 0.0)) {
            let y = lo * 2.0;
            let x = hi + y;
            if y == x - hi {
                hi = x;
            }
        }
        hi
    }

    fn with(&self, extra: &[f64]) -> f64 {
        let mut acc = self.clone();
        for &e in extra {
            acc.add(e);
        }
        acc.value()
    }

    /// `sum / divisor` rounded to nearest from the exact sum, so that
    /// averaging `n` copies of `c` returns `c` and the result is monotone in
    /// every input.
    pub fn quotient(&self, divisor: f64) -> f64 {
        let approx = self.value() / divisor;
        if !approx.is_finite() || approx == 0.0 && self.value() == 0.0 {
            return approx;
        }
        // residual(c) = sum - c * divisor, computed exactly through an FMA split.
        let residual = |c: f64| {
            let p = c * divisor;
            let e = c.mul_add(divisor, -p);
            self.with(&[-p, -e])
        };
        let candidates = [next_down(approx), approx, next_up(approx)];
        let mut best = approx;
        let mut best_r = residual(approx).abs();
        for &c in &candidates {
            let r = residual(c).abs();
            let even = c.to_bits() & 1 == 0;
            if r < best_r || (r == best_r && even && best.to_bits() & 1 == 1) {
                best = c;
                best_r = r;
            }
        }
        best
    }
}

pub fn exact_sum(values: &[f64]) -> f64 {
    let mut acc = ExactSum::new();
    values.iter().for_each(|&v| acc.add(v));
    acc.value()
}

/// Correctly rounded arithmetic mean. Empty input gives 0.
pub fn exact_mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut acc = ExactSum::new();
    values.iter().for_each(|&v| acc.add(v));
    acc.quotient(values.len() as f64)
}

/// Sample mean and its standard error (unbiased variance, 0 for one sample).
pub fn mean_and_std_error(values: &[f64]) -> (f64, f64) {
    let mean = exact_mean(values);
    let n = values.len();
    if n < 2 {
        return (mean, 0.0);
    }
    let mut acc = ExactSum::new();
    for &v in values {
        let d = v - mean;
        acc.add(d * d);
    }
    let var = acc.value() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

fn next_up(x: f64) -> f64 {
    if x.is_nan() || x == f64::INFINITY {
        return x;
    }
    if x == 0.0 {
        return f64::from_bits(1);
    }
    let bits = x.to_bits();
    f64::from_bits(if x > 0.0 { bits + 1 } else { bits - 1 })
}

fn next_down(x: f64) -> f64 {
    -next_up(-x)
}

/// Ordinary least squares fit `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
}

impl LineFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

/// Returns `None` with fewer than two points or a degenerate abscissa.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> Option<LineFit> {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    if n < 2 {
        return None;
    }
    let mx = exact_mean(xs);
    let my = exact_mean(ys);
    let mut sxx = ExactSum::new();
    let mut sxy = ExactSum::new();
    for (&x, &y) in xs.iter().zip(ys) {
        sxx.add((x - mx) * (x - mx));
        sxy.add((x - mx) * (y - my));
    }
    let sxx = sxx.value();
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy.value() / sxx;
    Some(LineFit {
        intercept: my - slope * mx,
        slope,
    })
}
