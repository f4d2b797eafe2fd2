//! Globally adaptive Gauss–Kronrod (7/15) quadrature with user breakpoints,
//! for integrands carrying narrow Lorentzian peaks.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
// Gauss weights for XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

#[derive(Clone, Copy, Debug)]
pub struct QuadOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions { rel_tol: 1e-10, abs_tol: 0.0, max_intervals: 20_000 }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct QuadResult<const N: usize> {
    pub value: [f64; N],
    pub error: [f64; N],
    pub intervals: usize,
}

fn kronrod<const N: usize, F: Fn(f64) -> [f64; N]>(f: &F, a: f64, b: f64) -> ([f64; N], [f64; N]) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut k = [0.0; N];
    let mut g = [0.0; N];
    let fc = f(c);
    for n in 0..N {
        k[n] = WGK[7] * fc[n];
        g[n] = WG[3] * fc[n];
    }
    for j in 0..7 {
        let x = h * XGK[j];
        let f1 = f(c - x);
        let f2 = f(c + x);
        for n in 0..N {
            let s = f1[n] + f2[n];
            k[n] += WGK[j] * s;
            if j % 2 == 1 {
                g[n] += WG[j / 2] * s;
            }
        }
    }
    let mut err = [0.0; N];
    for n in 0..N {
        k[n] *= h;
        err[n] = (k[n] - g[n] * h).abs();
    }
    (k, err)
}

struct Piece<const N: usize> {
    a: f64,
    b: f64,
    value: [f64; N],
    error: [f64; N],
    key: f64,
}

impl<const N: usize> PartialEq for Piece<N> {
    fn eq(&self, o: &Self) -> bool {
        self.key == o.key
    }
}
impl<const N: usize> Eq for Piece<N> {}
impl<const N: usize> PartialOrd for Piece<N> {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl<const N: usize> Ord for Piece<N> {
    fn cmp(&self, o: &Self) -> Ordering {
        self.key.total_cmp(&o.key)
    }
}

/// Integrate a vector-valued integrand over [points[0], points.last()],
/// treating every interior point as a breakpoint. Convergence requires each
/// component to meet max(abs_tol, rel_tol·|value|).
pub fn integrate_vec<const N: usize, F>(f: F, points: &[f64], opts: QuadOptions) -> Result<QuadResult<N>>
where
    F: Fn(f64) -> [f64; N],
{
    let mut pts: Vec<f64> = points.iter().copied().filter(|x| x.is_finite()).collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    if pts.len() < 2 {
        return Ok(QuadResult { value: [0.0; N], error: [0.0; N], intervals: 0 });
    }
    let mut heap = BinaryHeap::new();
    let mut total = [0.0; N];
    let mut total_err = [0.0; N];
    for w in pts.windows(2) {
        let (v, e) = kronrod(&f, w[0], w[1]);
        for n in 0..N {
            total[n] += v[n];
            total_err[n] += e[n];
        }
        heap.push(Piece { a: w[0], b: w[1], value: v, error: e, key: 0.0 });
    }
    let weigh = |e: &[f64; N], tot: &[f64; N]| -> f64 {
        (0..N).map(|n| e[n] / tot[n].abs().max(opts.abs_tol).max(f64::MIN_POSITIVE)).fold(0.0, f64::max)
    };
    let mut pieces: Vec<Piece<N>> = heap.into_vec();
    for p in pieces.iter_mut() {
        p.key = weigh(&p.error, &total);
    }
    let mut heap: BinaryHeap<Piece<N>> = pieces.into();
    let done = |tot: &[f64; N], err: &[f64; N]| (0..N).all(|n| err[n] <= opts.abs_tol.max(opts.rel_tol * tot[n].abs()));
    while !done(&total, &total_err) {
        if heap.len() >= opts.max_intervals {
            return Err(Error::Convergence(format!(
                "adaptive quadrature did not reach rel_tol {} within {} intervals (error estimate {:?}, value {:?})",
                opts.rel_tol, opts.max_intervals, total_err, total
            )));
        }
        let worst = heap.pop().expect("nonempty");
        let m = 0.5 * (worst.a + worst.b);
        if !(m > worst.a && m < worst.b) {
            // Interval below floating resolution: accept it as is.
            return Ok(QuadResult { value: total, error: total_err, intervals: heap.len() + 1 });
        }
        let (v1, e1) = kronrod(&f, worst.a, m);
        let (v2, e2) = kronrod(&f, m, worst.b);
        for n in 0..N {
            total[n] += v1[n] + v2[n] - worst.value[n];
            total_err[n] += e1[n] + e2[n] - worst.error[n];
        }
        heap.push(Piece { a: worst.a, b: m, value: v1, error: e1, key: weigh(&e1, &total) });
        heap.push(Piece { a: m, b: worst.b, value: v2, error: e2, key: weigh(&e2, &total) });
    }
    // Re-sum to shed accumulated cancellation in the running totals.
    let mut value = [0.0; N];
    let mut error = [0.0; N];
    let intervals = heap.len();
    for p in heap.into_vec() {
        for n in 0..N {
            value[n] += p.value[n];
            error[n] += p.error[n];
        }
    }
    Ok(QuadResult { value, error, intervals })
}

/// Scalar convenience wrapper around [`integrate_vec`].
pub fn integrate<F: Fn(f64) -> f64>(f: F, points: &[f64], opts: QuadOptions) -> Result<f64> {
    integrate_vec(|x| [f(x)], points, opts).map(|r| r.value[0])
}

/// n-point Gauss–Legendre nodes and weights on [−1, 1], ascending, by
/// Newton iteration on P_n.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Composite Gauss–Legendre rule on [a, b] with `panels` equal panels of
/// `order` nodes each.
pub fn gauss_panels(a: f64, b: f64, panels: usize, order: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(order);
    let len = (b - a) / panels as f64;
    let mut t = Vec::with_capacity(panels * order);
    let mut wt = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * len;
        for (xi, wi) in x.iter().zip(&w) {
            t.push(mid + 0.5 * len * xi);
            wt.push(0.5 * len * wi);
        }
    }
    (t, wt)
}
