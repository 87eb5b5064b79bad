//! Test support: cloud generators and a brute-force reference scorer.
//!
//! Nothing here calls into the library's projection, saliency,
//! neighbourhood or metric code; the oracle works on plain arrays with
//! exhaustive scans so it can be checked against the pipeline.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::f64::consts::PI;

use pqsm::{Point, PointCloud};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_color(rng: &mut ChaCha8Rng) -> [u8; 3] {
    [rng.random(), rng.random(), rng.random()]
}

/// `n` points uniform in `[0, scale)^3` with random colors.
pub fn random_cloud(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> PointCloud {
    let points = (0..n)
        .map(|_| {
            let p = [rng.random::<f64>() * scale, rng.random::<f64>() * scale, rng.random::<f64>() * scale];
            Point::new(p, random_color(rng))
        })
        .collect();
    PointCloud::new(points).unwrap()
}

fn banded(t: f64) -> u8 {
    (127.5 + 127.0 * t.sin()).round() as u8
}

/// Fibonacci sphere with a smoothly varying color pattern.
pub fn sphere_cloud(n: usize) -> PointCloud {
    let golden = PI * (3.0 - 5f64.sqrt());
    let points = (0..n)
        .map(|i| {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let rad = (1.0 - y * y).sqrt();
            let th = golden * i as f64;
            let p = [rad * th.cos(), y, rad * th.sin()];
            Point::new(p, [banded(4.0 * p[0]), banded(3.0 * p[1] + 1.0), banded(5.0 * p[2] + 2.0)])
        })
        .collect();
    PointCloud::new(points).unwrap()
}

/// Height-field surface sampled at `n` random locations. Irregular
/// sampling avoids the exact projective coincidences of a lattice.
pub fn wave_cloud(n: usize, seed: u64) -> PointCloud {
    let mut rng = rng(seed);
    let points = (0..n)
        .map(|_| {
            let (x, y): (f64, f64) = (rng.random(), rng.random());
            let z = 0.15 * (2.0 * PI * x).sin() * (3.0 * PI * y).cos();
            Point::new([x, y, z], [banded(9.0 * x), banded(7.0 * y + 0.5), banded(11.0 * (x + y))])
        })
        .collect();
    PointCloud::new(points).unwrap()
}

/// Torus surface with stripes, sampled at `n` random parameter pairs.
pub fn torus_cloud(n: usize, seed: u64) -> PointCloud {
    let mut rng = rng(seed);
    let points = (0..n)
        .map(|_| {
            let (u, v) = (2.0 * PI * rng.random::<f64>(), 2.0 * PI * rng.random::<f64>());
            let p = [(1.0 + 0.35 * v.cos()) * u.cos(), (1.0 + 0.35 * v.cos()) * u.sin(), 0.35 * v.sin()];
            Point::new(p, [banded(6.0 * u), banded(2.0 * v), banded(3.0 * (u - v))])
        })
        .collect();
    PointCloud::new(points).unwrap()
}

pub fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

pub fn luma(c: [u8; 3]) -> f64 {
    0.257 * c[0] as f64 + 0.504 * c[1] as f64 + 0.098 * c[2] as f64 + 16.0
}

/// Brute-force z-buffer for one view. `axis` is the depth axis; `positive`
/// means the view looks from the max side. Returns pixel -> (depth, id),
/// keyed by (first image coordinate, second image coordinate).
pub fn brute_view(
    points: &[[f64; 3]],
    axis: usize,
    positive: bool,
    res: usize,
    offset: f64,
) -> BTreeMap<(usize, usize), (f64, usize)> {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in points {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let side = (0..3).map(|a| hi[a] - lo[a]).fold(0.0, f64::max);
    let others: Vec<usize> = (0..3).filter(|&a| a != axis).collect();
    let size = side / res as f64;
    let cells = |a: usize| -> usize {
        if side == 0.0 {
            1
        } else {
            (((hi[a] - lo[a]) / size).ceil() as usize).max(1).min(res)
        }
    };
    let cell = |a: usize, c: f64| -> usize {
        if side == 0.0 {
            0
        } else {
            (((c - lo[a]) / size).floor() as usize).min(cells(a) - 1)
        }
    };
    let mut map: BTreeMap<(usize, usize), (f64, usize)> = BTreeMap::new();
    for (id, p) in points.iter().enumerate() {
        let depth = offset + if positive { hi[axis] - p[axis] } else { p[axis] - lo[axis] };
        let key = (cell(others[0], p[others[0]]), cell(others[1], p[others[1]]));
        match map.get(&key) {
            Some(&(d, j)) if d < depth || (d == depth && j < id) => {}
            _ => {
                map.insert(key, (depth, id));
            }
        }
    }
    map
}

/// Depth-axis / direction pairs in the library's view order.
pub const VIEWS: [(usize, bool); 6] = [(0, true), (0, false), (1, true), (1, false), (2, true), (2, false)];

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum RawSaliency {
    /// 1 on every occupied pixel.
    Flat,
    /// Luminance of the pixel's color.
    Luma,
}

/// Per-point saliency straight from the definitions: project, normalize the
/// raw 2D map over occupied pixels, weight by exp(-d/σ) normalized per view,
/// average over views, fill occluded points from the nearest visible one.
pub fn oracle_field(cloud: &PointCloud, res: usize, offset: f64, raw: RawSaliency) -> Vec<f64> {
    let pts: Vec<[f64; 3]> = cloud.points().iter().map(|p| p.position).collect();
    let colors: Vec<[u8; 3]> = cloud.points().iter().map(|p| p.color).collect();
    let n = pts.len();
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in &pts {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let side = (0..3).map(|a| hi[a] - lo[a]).fold(0.0, f64::max);
    let sigma = if side > 0.0 { side / 10.0 } else { 1.0 };

    let mut sum = vec![0.0; n];
    let mut count = vec![0usize; n];
    for (axis, positive) in VIEWS {
        let view = brute_view(&pts, axis, positive, res, offset);
        let raw_values: Vec<f64> = view
            .values()
            .map(|&(_, id)| match raw {
                RawSaliency::Flat => 1.0,
                RawSaliency::Luma => luma(colors[id]),
            })
            .collect();
        let mn = raw_values.iter().cloned().fold(f64::INFINITY, f64::min);
        let mx = raw_values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = view.values().map(|&(d, _)| (-d / sigma).exp()).sum();
        for (&(d, id), &r) in view.values().zip(&raw_values) {
            let s = if mx > mn { (r - mn) / (mx - mn) } else { 1.0 };
            sum[id] += (-d / sigma).exp() / z * s;
            count[id] += 1;
        }
    }
    let mut field = vec![0.0; n];
    for i in 0..n {
        if count[i] > 0 {
            field[i] = sum[i] / count[i] as f64;
        }
    }
    for i in 0..n {
        if count[i] == 0 {
            let mut best: Option<(f64, usize)> = None;
            for j in 0..n {
                if count[j] == 0 {
                    continue;
                }
                let d = dist(&pts[i], &pts[j]);
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, j));
                }
            }
            field[i] = field[best.unwrap().1];
        }
    }
    field
}

#[derive(Clone, Copy, Debug)]
pub struct OracleConfig {
    pub t1: f64,
    pub t2: f64,
    pub use_f1: bool,
    pub use_f2: bool,
    pub use_f3: bool,
    pub saliency_weighted: bool,
    pub k: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { t1: 0.001, t2: 1e-14, use_f1: true, use_f2: true, use_f3: true, saliency_weighted: true, k: 10 }
    }
}

pub fn oracle_radius(reference: &PointCloud, distorted: &PointCloud, k: usize) -> f64 {
    let mut total = 0.0;
    for p in reference.points() {
        let mut d: Vec<f64> = distorted.points().iter().map(|q| dist(&p.position, &q.position)).collect();
        d.sort_by(f64::total_cmp);
        total += d[k - 1];
    }
    total / reference.len() as f64
}

fn sim(a: f64, b: f64, t: f64) -> f64 {
    (2.0 * a * b + t) / (a * a + b * b + t)
}

/// (μ_geo, σ_geo, μ_lum, μ_sal) of the ball around `center` in `cloud`,
/// with deviations measured from the given center luminance and saliency.
fn patch(cloud: &PointCloud, field: &[f64], center: &[f64; 3], r: f64, lum: f64, sal: f64) -> [f64; 4] {
    let mut d = Vec::new();
    let mut dl = Vec::new();
    let mut ds = Vec::new();
    for (j, q) in cloud.points().iter().enumerate() {
        let e = dist(&q.position, center);
        if e <= r {
            d.push(e);
            dl.push((luma(q.color) - lum).abs());
            ds.push((field[j] - sal).abs());
        }
    }
    if d.is_empty() {
        return [0.0; 4];
    }
    let m = d.len() as f64;
    let mu = d.iter().sum::<f64>() / m;
    let var = d.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / m;
    [mu, var, dl.iter().sum::<f64>() / m, ds.iter().sum::<f64>() / m]
}

/// Quality score from the definitions with exhaustive neighbour scans.
pub fn oracle_q(
    reference: &PointCloud,
    distorted: &PointCloud,
    ref_field: &[f64],
    dist_field: &[f64],
    cfg: &OracleConfig,
) -> f64 {
    let r = oracle_radius(reference, distorted, cfg.k);
    let mut sims = Vec::with_capacity(reference.len());
    for (i, x) in reference.points().iter().enumerate() {
        let (lum, sal) = (luma(x.color), ref_field[i]);
        let a = patch(reference, ref_field, &x.position, r, lum, sal);
        let b = patch(distorted, dist_field, &x.position, r, lum, sal);
        let mut s = 1.0;
        if cfg.use_f1 {
            s *= sim(a[0], b[0], cfg.t1) * sim(a[1], b[1], cfg.t1);
        }
        if cfg.use_f2 {
            s *= sim(a[2], b[2], cfg.t1);
        }
        if cfg.use_f3 {
            s *= sim(a[3], b[3], cfg.t2);
        }
        sims.push(s);
    }
    if cfg.saliency_weighted {
        let num: f64 = sims.iter().zip(ref_field).map(|(s, w)| s * w).sum();
        num / ref_field.iter().sum::<f64>()
    } else {
        sims.iter().sum::<f64>() / sims.len() as f64
    }
}

/// Pearson correlation, two-pass.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Average ranks (1-based) by counting: rank = #less + (#equal + 1) / 2.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|a| {
            let less = v.iter().filter(|b| *b < a).count() as f64;
            let equal = v.iter().filter(|b| *b == a).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&average_ranks(x), &average_ranks(y))
}
