//! Small numeric kernels shared across the crate: compensated summation,
//! factorials, and Gauss quadrature rules computed at startup.

/// Pairwise (cascade) summation. Deterministic for a fixed slice regardless
/// of how the slice was produced, and accurate to O(log n) rounding errors.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 64;
    if xs.len() <= BLOCK {
        let mut acc = 0.0;
        for &x in xs {
            acc += x;
        }
        return acc;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// n! as f64. Exact for n <= 22.
pub fn factorial(n: usize) -> f64 {
    let mut acc = 1.0f64;
    for k in 2..=n {
        acc *= k as f64;
    }
    acc
}

/// n! as u128; panics past 33.
pub fn factorial_u128(n: usize) -> u128 {
    let mut acc = 1u128;
    for k in 2..=n as u128 {
        acc = acc.checked_mul(k).expect("factorial overflow");
    }
    acc
}

/// Binomial coefficient C(n, k) as f64.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0f64;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Double factorial (2l-1)!! with (-1)!! = 1.
pub fn double_factorial_odd(l: usize) -> f64 {
    let mut acc = 1.0f64;
    let mut k = 2 * l as i64 - 1;
    while k > 1 {
        acc *= k as f64;
        k -= 2;
    }
    acc
}

/// Nodes and weights of an n-point Gauss-Legendre rule on [-1, 1], found by
/// Newton iteration on the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev-like initial guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_pair(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_pair(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_pair(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Nodes and weights of an n-point Gauss-Hermite rule for the physicists'
/// weight exp(-x^2). To integrate against the standard normal density use
/// `E[h(Z)] = sum_i w_i h(sqrt(2) x_i) / sqrt(pi)`.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    let mut x = 0.0f64;
    for i in 0..m {
        // Initial guesses follow the classical approximations for the
        // largest roots, then step inward from the previous root.
        x = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => x - 1.14 * nf.powf(0.426) / x,
            2 => 1.86 * x - 0.86 * nodes[0],
            3 => 1.91 * x - 0.91 * nodes[1],
            _ => 2.0 * x - nodes[i - 2],
        };
        for _ in 0..200 {
            let (h, dh) = hermite_pair(n, x);
            let dx = h / dh;
            x -= dx;
            if dx.abs() < 1e-14 * (1.0 + x.abs()) {
                break;
            }
        }
        let w = weight_from_orthonormal(n, x);
        nodes[i] = x;
        nodes[n - 1 - i] = -x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
        weights[n / 2] = weight_from_orthonormal(n, 0.0);
    }
    // Sort ascending for predictable output.
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| nodes[a].total_cmp(&nodes[b]));
    let nodes_sorted: Vec<f64> = idx.iter().map(|&i| nodes[i]).collect();
    let weights_sorted: Vec<f64> = idx.iter().map(|&i| weights[i]).collect();
    (nodes_sorted, weights_sorted)
}

/// Physicists' Hermite polynomial H_n and derivative at x.
fn hermite_pair(n: usize, x: f64) -> (f64, f64) {
    // Work with orthonormal Hermite functions to avoid overflow at n = 64.
    // htilde_0 = pi^{-1/4}, htilde_{k+1} = x sqrt(2/(k+1)) htilde_k
    //            - sqrt(k/(k+1)) htilde_{k-1}
    let mut h0 = std::f64::consts::PI.powf(-0.25);
    let mut h1 = std::f64::consts::SQRT_2 * x * h0;
    if n == 0 {
        return (h0, 0.0);
    }
    for k in 1..n {
        let kf = k as f64;
        let h2 = x * (2.0 / (kf + 1.0)).sqrt() * h1 - (kf / (kf + 1.0)).sqrt() * h0;
        h0 = h1;
        h1 = h2;
    }
    let dh = (2.0 * n as f64).sqrt() * h0;
    (h1, dh)
}

fn weight_from_orthonormal(n: usize, x: f64) -> f64 {
    let (_, dh) = hermite_pair(n, x);
    2.0 / (dh * dh)
}

/// Ordinary least squares fit y = a + b x; returns (slope, intercept,
/// stderr of the slope).
pub fn ols_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    assert!(n >= 3.0, "need at least 3 points");
    let mx = pairwise_sum(xs) / n;
    let my = pairwise_sum(ys) / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let mut sse = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        let r = y - intercept - slope * x;
        sse += r * r;
    }
    let dof = (xs.len() - 2).max(1) as f64;
    let stderr = (sse / dof / sxx).sqrt();
    (slope, intercept, stderr)
}
