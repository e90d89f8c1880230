//! Linear probes on the synthetic body data: each extra stream must carry
//! pose information the head trajectory lacks.

use egopose::body::MultimodalSample;
use egopose::synth::body::gen_body_dataset;
use egopose::synth::Split;
use nalgebra::{DMatrix, DVector};

type Features = fn(&MultimodalSample) -> Vec<f64>;

fn head(s: &MultimodalSample) -> Vec<f64> {
    s.head_pose.frames().iter().flatten().copied().collect()
}

fn head_depth(s: &MultimodalSample) -> Vec<f64> {
    let d = s.depth.as_ref().unwrap();
    let mut f = head(s);
    f.extend_from_slice(d.frame(d.frames() - 1));
    f
}

/// Raw pixels are far from linear in joint position, so the video probe
/// reads per-channel intensity moments of the last frame instead.
fn head_video(s: &MultimodalSample) -> Vec<f64> {
    let v = s.video.as_ref().unwrap();
    let (h, w) = (v.height(), v.width());
    let frame = v.frame(v.frames() - 1);
    let mut f = head(s);
    for c in 0..3 {
        let (mut m, mut mx, mut my) = (0.0, 0.0, 0.0);
        for y in 0..h {
            for x in 0..w {
                let p = frame[(y * w + x) * 3 + c];
                m += p;
                mx += p * x as f64;
                my += p * y as f64;
            }
        }
        f.extend([m, mx / m.max(1e-9), my / m.max(1e-9)]);
    }
    f
}

fn design(data: &[MultimodalSample], feats: Features) -> DMatrix<f64> {
    let rows: Vec<Vec<f64>> = data.iter().map(feats).collect();
    DMatrix::from_fn(rows.len(), rows[0].len() + 1, |i, j| rows[i].get(j).copied().unwrap_or(1.0))
}

fn targets(data: &[MultimodalSample]) -> DMatrix<f64> {
    let rows: Vec<Vec<f64>> = data.iter().map(|s| s.target.flat()).collect();
    DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
}

/// Standardizes columns with the training statistics; the bias column stays 1.
fn standardize(train: &mut DMatrix<f64>, val: &mut DMatrix<f64>) {
    let n = train.nrows() as f64;
    for j in 0..train.ncols() - 1 {
        let mean = train.column(j).sum() / n;
        let sd = (train.column(j).map(|x| (x - mean).powi(2)).sum() / n).sqrt().max(1e-9);
        for m in [&mut *train, &mut *val] {
            m.column_mut(j).apply(|x| *x = (*x - mean) / sd);
        }
    }
}

/// Validation MPJPE (cm) of a ridge regression from the features to the pose.
fn probe(train: &[MultimodalSample], val: &[MultimodalSample], feats: Features, lambda: f64) -> f64 {
    let (mut x, mut xv) = (design(train, feats), design(val, feats));
    standardize(&mut x, &mut xv);
    let gram = x.transpose() * &x + DMatrix::<f64>::identity(x.ncols(), x.ncols()) * lambda;
    let w = gram.cholesky().expect("ridge system is positive definite").solve(&(x.transpose() * targets(train)));
    let pred = xv * w;
    let gt = targets(val);
    let mut total = 0.0;
    for i in 0..gt.nrows() {
        for j in 0..gt.ncols() / 3 {
            let d = DVector::from_fn(3, |k, _| pred[(i, 3 * j + k)] - gt[(i, 3 * j + k)]);
            total += d.norm();
        }
    }
    total / (gt.nrows() * gt.ncols() / 3) as f64
}

#[test]
fn depth_and_video_add_linear_information() {
    let train = gen_body_dataset(21, Split::Train, 1000);
    let val = gen_body_dataset(21, Split::Val, 300);
    let best = |f: Features| [1.0, 10.0, 100.0, 1000.0].map(|l| probe(&train, &val, f, l)).into_iter().fold(f64::INFINITY, f64::min);
    let (h, d, v) = (best(head), best(head_depth), best(head_video));
    eprintln!("ridge probe MPJPE cm: head {h:.3}, head+depth {d:.3}, head+video {v:.3}");
    assert!(d < 0.95 * h, "depth adds nothing: {d} vs {h}");
    assert!(v < 0.95 * h, "video adds nothing: {v} vs {h}");
}
