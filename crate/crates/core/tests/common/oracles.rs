//! Brute-force reference implementations, deliberately sharing no code with
//! the library's metric routines.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Points = Vec<[f64; 3]>;

/// Mean per-joint distance with explicit loops.
pub fn mpjpe_loop(pred: &Points, gt: &Points) -> f64 {
    let mut total = 0.0;
    for k in 0..pred.len() {
        let mut sq = 0.0;
        for a in 0..3 {
            let d = pred[k][a] - gt[k][a];
            sq += d * d;
        }
        total += sq.sqrt();
    }
    total / pred.len() as f64
}

/// Mean velocity error with a frame loop and a joint loop; `scale_to_m`
/// converts coordinates to meters.
pub fn mpjve_loop(pred: &[Points], gt: &[Points], dt: f64, scale_to_m: f64) -> f64 {
    let mut total = 0.0;
    let mut n = 0usize;
    for f in 0..pred.len() - 1 {
        for j in 0..pred[f].len() {
            let mut sq = 0.0;
            for a in 0..3 {
                let vp = (pred[f + 1][j][a] - pred[f][j][a]) * scale_to_m / dt;
                let vg = (gt[f + 1][j][a] - gt[f][j][a]) * scale_to_m / dt;
                sq += (vp - vg) * (vp - vg);
            }
            total += sq.sqrt();
            n += 1;
        }
    }
    total / n as f64
}

type Mat = [[f64; 3]; 3];

fn rodrigues(w: [f64; 3]) -> Mat {
    let theta = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
    if theta < 1e-300 {
        return [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    }
    let k = [w[0] / theta, w[1] / theta, w[2] / theta];
    let (s, c) = theta.sin_cos();
    let v = 1.0 - c;
    [
        [c + k[0] * k[0] * v, k[0] * k[1] * v - k[2] * s, k[0] * k[2] * v + k[1] * s],
        [k[1] * k[0] * v + k[2] * s, c + k[1] * k[1] * v, k[1] * k[2] * v - k[0] * s],
        [k[2] * k[0] * v - k[1] * s, k[2] * k[1] * v + k[0] * s, c + k[2] * k[2] * v],
    ]
}

fn matmul(a: &Mat, b: &Mat) -> Mat {
    let mut out = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            out[r][c] = (0..3).map(|i| a[r][i] * b[i][c]).sum();
        }
    }
    out
}

fn apply(r: &Mat, p: &[f64; 3]) -> [f64; 3] {
    [
        r[0][0] * p[0] + r[0][1] * p[1] + r[0][2] * p[2],
        r[1][0] * p[0] + r[1][1] * p[1] + r[1][2] * p[2],
        r[2][0] * p[0] + r[2][1] * p[1] + r[2][2] * p[2],
    ]
}

struct Problem {
    src: Points,
    dst: Points,
    with_scale: bool,
}

impl Problem {
    fn new(source: &Points, target: &Points, with_scale: bool) -> Self {
        let n = source.len() as f64;
        let mut ms = [0.0; 3];
        let mut mt = [0.0; 3];
        for k in 0..source.len() {
            for a in 0..3 {
                ms[a] += source[k][a] / n;
                mt[a] += target[k][a] / n;
            }
        }
        let center = |p: &Points, m: [f64; 3]| p.iter().map(|q| [q[0] - m[0], q[1] - m[1], q[2] - m[2]]).collect();
        Self {
            src: center(source, ms),
            dst: center(target, mt),
            with_scale,
        }
    }

    /// Least-squares scale for a fixed rotation (translation is absorbed by
    /// centering).
    fn scale_for(&self, r: &Mat) -> f64 {
        if !self.with_scale {
            return 1.0;
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for (x, y) in self.src.iter().zip(&self.dst) {
            let rx = apply(r, x);
            num += rx[0] * y[0] + rx[1] * y[1] + rx[2] * y[2];
            den += x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
        }
        (num / den).max(0.0)
    }

    fn sse(&self, r: &Mat) -> f64 {
        let s = self.scale_for(r);
        let mut total = 0.0;
        for (x, y) in self.src.iter().zip(&self.dst) {
            let rx = apply(r, x);
            for a in 0..3 {
                let d = s * rx[a] - y[a];
                total += d * d;
            }
        }
        total
    }

    fn mean_distance(&self, r: &Mat) -> f64 {
        let s = self.scale_for(r);
        let mut total = 0.0;
        for (x, y) in self.src.iter().zip(&self.dst) {
            let rx = apply(r, x);
            let mut sq = 0.0;
            for a in 0..3 {
                let d = s * rx[a] - y[a];
                sq += d * d;
            }
            total += sq.sqrt();
        }
        total / self.src.len() as f64
    }

    /// Damped Newton in the tangent space at `base`, using central
    /// differences for gradient and Hessian.
    fn refine(&self, mut base: Mat) -> Mat {
        let f = |b: &Mat, d: [f64; 3]| self.sse(&matmul(b, &rodrigues(d)));
        for _ in 0..60 {
            let h = 1e-4;
            let f0 = f(&base, [0.0; 3]);
            let mut grad = [0.0; 3];
            let mut hess = [[0.0; 3]; 3];
            for i in 0..3 {
                let mut e = [0.0; 3];
                e[i] = h;
                let fp = f(&base, e);
                e[i] = -h;
                let fm = f(&base, e);
                grad[i] = (fp - fm) / (2.0 * h);
                hess[i][i] = (fp - 2.0 * f0 + fm) / (h * h);
            }
            for i in 0..3 {
                for j in i + 1..3 {
                    let mut pp = [0.0; 3];
                    pp[i] = h;
                    pp[j] = h;
                    let mut pm = pp;
                    pm[j] = -h;
                    let mut mp = pp;
                    mp[i] = -h;
                    let mut mm = pm;
                    mm[i] = -h;
                    let v = (f(&base, pp) - f(&base, pm) - f(&base, mp) + f(&base, mm)) / (4.0 * h * h);
                    hess[i][j] = v;
                    hess[j][i] = v;
                }
            }
            let mut lambda = 1e-9 * (hess[0][0].abs() + hess[1][1].abs() + hess[2][2].abs() + 1e-30);
            let mut improved = false;
            for _ in 0..40 {
                let mut a = hess;
                for (i, row) in a.iter_mut().enumerate() {
                    row[i] += lambda;
                }
                let step = solve3(a, [-grad[0], -grad[1], -grad[2]]);
                if let Some(step) = step {
                    let cand = matmul(&base, &rodrigues(step));
                    let fc = self.sse(&cand);
                    if fc <= f0 {
                        let tiny = step.iter().map(|v| v.abs()).fold(0.0, f64::max) < 1e-13;
                        base = cand;
                        improved = !tiny;
                        break;
                    }
                }
                lambda = lambda.max(1e-12) * 10.0;
            }
            if !improved {
                break;
            }
        }
        base
    }
}

fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(&a);
    if d.abs() < 1e-300 || !d.is_finite() {
        return None;
    }
    let mut out = [0.0; 3];
    for (c, o) in out.iter_mut().enumerate() {
        let mut m = a;
        for r in 0..3 {
            m[r][c] = b[r];
        }
        *o = det(&m) / d;
    }
    Some(out)
}

/// PA-MPJPE by global search over rotation vectors followed by Newton
/// refinement, with closed-form least-squares scale and translation.
pub fn pa_mpjpe_search(source: &Points, target: &Points, with_scale: bool) -> f64 {
    let problem = Problem::new(source, target, with_scale);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut starts: Vec<(f64, Mat)> = (0..1500)
        .map(|_| {
            // uniform in the ball of radius π
            let w = loop {
                let w = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0f64)];
                if w[0] * w[0] + w[1] * w[1] + w[2] * w[2] <= 1.0 {
                    break [w[0] * std::f64::consts::PI, w[1] * std::f64::consts::PI, w[2] * std::f64::consts::PI];
                }
            };
            let r = rodrigues(w);
            (problem.sse(&r), r)
        })
        .collect();
    starts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let best = starts
        .iter()
        .take(4)
        .map(|(_, r)| problem.refine(*r))
        .map(|r| (problem.sse(&r), r))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .unwrap();
    problem.mean_distance(&best.1)
}

pub fn random_points(rng: &mut impl Rng, k: usize, spread: f64) -> Points {
    (0..k)
        .map(|_| {
            [
                rng.random_range(-spread..spread),
                rng.random_range(-spread..spread),
                rng.random_range(-spread..spread),
            ]
        })
        .collect()
}

/// Uniformly random rotation (via a normalized Gaussian quaternion).
pub fn random_rotation(rng: &mut impl Rng) -> Mat {
    let q: [f64; 4] = loop {
        let q = [
            rng.random_range(-1.0..1.0f64),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ];
        let n = q.iter().map(|v| v * v).sum::<f64>();
        if n > 1e-6 && n <= 1.0 {
            let n = n.sqrt();
            break [q[0] / n, q[1] / n, q[2] / n, q[3] / n];
        }
    };
    let [w, x, y, z] = q;
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

pub fn similarity(points: &Points, s: f64, r: &Mat, t: [f64; 3]) -> Points {
    points
        .iter()
        .map(|p| {
            let q = apply(r, p);
            [s * q[0] + t[0], s * q[1] + t[1], s * q[2] + t[2]]
        })
        .collect()
}

/// A prediction/ground-truth pair: the prediction is a random similarity
/// copy of the ground truth plus noise, or (every fourth case) an unrelated
/// point cloud.
pub fn pose_pair(seed: u64, k: usize) -> (Points, Points) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gt = random_points(&mut rng, k, 100.0);
    if seed % 4 == 3 {
        return (random_points(&mut rng, k, 80.0), gt);
    }
    let r = random_rotation(&mut rng);
    let s = rng.random_range(0.5..2.0);
    let t = [rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0)];
    let noise = rng.random_range(0.0..40.0);
    let pred = similarity(&gt, s, &r, t)
        .into_iter()
        .map(|p| {
            [
                p[0] + rng.random_range(-noise..=noise),
                p[1] + rng.random_range(-noise..=noise),
                p[2] + rng.random_range(-noise..=noise),
            ]
        })
        .collect();
    (pred, gt)
}
