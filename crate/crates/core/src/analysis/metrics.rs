use ndarray::Array3;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{invalid, Error, Result};
use crate::volume::{dims_of, Dims};

/// One-sided `z` threshold for an uncorrected `p`.
pub fn z_threshold(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(invalid(format!("p = {p} outside (0, 1)")));
    }
    Ok(Normal::standard().inverse_cdf(1.0 - p))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

#[derive(Debug, Clone)]
pub struct DetectionResult {
    pub positive: Array3<bool>,
    pub counts: Confusion,
    pub p_threshold: f64,
    pub z_threshold: f64,
}

fn check_same(a: Dims, b: Dims, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::Shape(format!("{what}: {a:?} vs {b:?}")));
    }
    Ok(())
}

/// Voxels inside `mask` with binarized ROI membership (`roi >= 0.5`).
fn labelled(z: &Array3<f64>, roi: &Array3<f64>, mask: Option<&Array3<bool>>) -> Result<Vec<(f64, bool)>> {
    check_same(dims_of(z), dims_of(roi), "z map and ROI")?;
    if let Some(m) = mask {
        check_same(dims_of(z), dims_of(m), "z map and mask")?;
    }
    Ok(z
        .indexed_iter()
        .filter(|(i, _)| mask.is_none_or(|m| m[*i]))
        .map(|(i, &v)| (v, roi[i] >= 0.5))
        .collect())
}

/// Positives where `z > z(p)`, counted inside the analysis mask.
pub fn threshold_detect(z: &Array3<f64>, roi: &Array3<f64>, mask: Option<&Array3<bool>>, p: f64) -> Result<DetectionResult> {
    let thr = z_threshold(p)?;
    let positive = z.mapv(|v| v > thr);
    let mut c = Confusion::default();
    for (v, inside) in labelled(z, roi, mask)? {
        match (v > thr, inside) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(DetectionResult {
        positive,
        counts: c,
        p_threshold: p,
        z_threshold: thr,
    })
}

pub fn bacc(c: &Confusion) -> Result<f64> {
    if c.tp + c.fn_ == 0 || c.tn + c.fp == 0 {
        return Err(invalid("balanced accuracy needs both classes present"));
    }
    let tpr = c.tp as f64 / (c.tp + c.fn_) as f64;
    let tnr = c.tn as f64 / (c.tn + c.fp) as f64;
    Ok(0.5 * (tpr + tnr))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub recall: f64,
    pub precision: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    /// Anchored at recall 0 (precision 1) and recall 1 (precision = prevalence).
    pub points: Vec<PrPoint>,
    pub auc: f64,
    pub prevalence: f64,
    pub marker: Option<PrPoint>,
}

impl PrCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("threshold,recall,precision\n");
        for p in &self.points {
            s.push_str(&format!("{},{},{}\n", p.threshold, p.recall, p.precision));
        }
        s
    }
}

/// Sweeps every distinct `z` value as a threshold (`z >= tau` positive).
pub fn precision_recall(z: &Array3<f64>, roi: &Array3<f64>, mask: Option<&Array3<bool>>, marker_p: Option<f64>) -> Result<PrCurve> {
    let mut items = labelled(z, roi, mask)?;
    if items.iter().any(|(v, _)| v.is_nan()) {
        return Err(invalid("z map contains NaN"));
    }
    let pos = items.iter().filter(|(_, r)| *r).count();
    if pos == 0 {
        return Err(invalid("ROI is empty inside the analysis mask"));
    }
    let total = items.len();
    let prevalence = pos as f64 / total as f64;
    items.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut points = vec![PrPoint {
        threshold: f64::INFINITY,
        recall: 0.0,
        precision: 1.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < total {
        let tau = items[i].0;
        while i < total && items[i].0 == tau {
            if items[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(PrPoint {
            threshold: tau,
            recall: tp as f64 / pos as f64,
            precision: tp as f64 / (tp + fp) as f64,
        });
    }
    points.push(PrPoint {
        threshold: f64::NEG_INFINITY,
        recall: 1.0,
        precision: prevalence,
    });
    let auc = points
        .windows(2)
        .map(|w| (w[1].recall - w[0].recall) * 0.5 * (w[0].precision + w[1].precision))
        .sum();
    let marker = match marker_p {
        None => None,
        Some(p) => {
            let thr = z_threshold(p)?;
            let tp = items.iter().filter(|(v, r)| *r && *v > thr).count();
            let all = items.iter().filter(|(v, _)| *v > thr).count();
            Some(PrPoint {
                threshold: thr,
                recall: tp as f64 / pos as f64,
                precision: if all == 0 { 1.0 } else { tp as f64 / all as f64 },
            })
        }
    };
    Ok(PrCurve {
        points,
        auc,
        prevalence,
        marker,
    })
}

/// `20 log10(max|ref| / RMSE)`; infinite for identical images.
pub fn psnr(x: &Array3<f64>, reference: &Array3<f64>) -> Result<f64> {
    check_same(dims_of(x), dims_of(reference), "psnr")?;
    let n = x.len() as f64;
    let mse = x.iter().zip(reference.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n;
    let peak = reference.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(20.0 * (peak / mse.sqrt()).log10())
}

pub const SSIM_WINDOW: usize = 7;

struct Integral {
    data: Vec<f64>,
    d: [usize; 3],
}

impl Integral {
    fn new(dims: Dims, f: impl Fn([usize; 3]) -> f64) -> Self {
        let d = [dims[0] + 1, dims[1] + 1, dims[2] + 1];
        let mut data = vec![0.0; d[0] * d[1] * d[2]];
        let at = |i: usize, j: usize, k: usize| (i * d[1] + j) * d[2] + k;
        for i in 1..d[0] {
            for j in 1..d[1] {
                for k in 1..d[2] {
                    data[at(i, j, k)] = f([i - 1, j - 1, k - 1]) + data[at(i - 1, j, k)] + data[at(i, j - 1, k)] + data[at(i, j, k - 1)]
                        - data[at(i - 1, j - 1, k)]
                        - data[at(i - 1, j, k - 1)]
                        - data[at(i, j - 1, k - 1)]
                        + data[at(i - 1, j - 1, k - 1)];
                }
            }
        }
        Self { data, d }
    }

    fn sum(&self, lo: [usize; 3], hi: [usize; 3]) -> f64 {
        let d = self.d;
        let g = |i: usize, j: usize, k: usize| self.data[(i * d[1] + j) * d[2] + k];
        g(hi[0], hi[1], hi[2]) - g(lo[0], hi[1], hi[2]) - g(hi[0], lo[1], hi[2]) - g(hi[0], hi[1], lo[2]) + g(lo[0], lo[1], hi[2]) + g(lo[0], hi[1], lo[2])
            + g(hi[0], lo[1], lo[2])
            - g(lo[0], lo[1], lo[2])
    }
}

/// Mean SSIM over every full cubic window (edge `min(7, dim)`), with
/// `K1 = 0.01`, `K2 = 0.03` and dynamic range `max|ref|`.
pub fn ssim(x: &Array3<f64>, reference: &Array3<f64>) -> Result<f64> {
    let dims = dims_of(x);
    check_same(dims, dims_of(reference), "ssim")?;
    if dims.contains(&0) {
        return Err(invalid("ssim of an empty volume"));
    }
    let range = reference.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let c1 = (0.01 * range).powi(2);
    let c2 = (0.03 * range).powi(2);
    let w = dims.map(|d| d.min(SSIM_WINDOW));
    let sx = Integral::new(dims, |i| x[i]);
    let sy = Integral::new(dims, |i| reference[i]);
    let sxx = Integral::new(dims, |i| x[i] * x[i]);
    let syy = Integral::new(dims, |i| reference[i] * reference[i]);
    let sxy = Integral::new(dims, |i| x[i] * reference[i]);
    let nw = (w[0] * w[1] * w[2]) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..=dims[0] - w[0] {
        for j in 0..=dims[1] - w[1] {
            for k in 0..=dims[2] - w[2] {
                let lo = [i, j, k];
                let hi = [i + w[0], j + w[1], k + w[2]];
                let mx = sx.sum(lo, hi) / nw;
                let my = sy.sum(lo, hi) / nw;
                let vx = (sxx.sum(lo, hi) / nw - mx * mx).max(0.0);
                let vy = (syy.sum(lo, hi) / nw - my * my).max(0.0);
                let cxy = sxy.sum(lo, hi) / nw - mx * my;
                total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}

#[derive(Debug, Clone)]
pub struct TsnrResult {
    /// Infinite where the temporal standard deviation is zero.
    pub map: Array3<f64>,
    pub n_flagged: usize,
    pub roi_mean: Option<f64>,
}

/// Temporal mean over unbiased temporal standard deviation.
pub fn tsnr(series: &[Array3<f64>], roi: &Array3<f64>) -> Result<TsnrResult> {
    if series.len() < 2 {
        return Err(invalid("tSNR needs at least two frames"));
    }
    let dims = dims_of(&series[0]);
    check_same(dims, dims_of(roi), "tsnr ROI")?;
    if series.iter().any(|s| dims_of(s) != dims) {
        return Err(Error::Shape("series frames differ in shape".into()));
    }
    let n = series.len() as f64;
    let map = Array3::from_shape_fn(dims, |i| {
        let mean = series.iter().map(|s| s[i]).sum::<f64>() / n;
        let var = series.iter().map(|s| (s[i] - mean).powi(2)).sum::<f64>() / (n - 1.0);
        if var == 0.0 {
            f64::INFINITY
        } else {
            mean / var.sqrt()
        }
    });
    let n_flagged = map.iter().filter(|v| v.is_infinite()).count();
    let vals: Vec<f64> = map
        .iter()
        .zip(roi.iter())
        .filter(|(v, r)| **r >= 0.5 && v.is_finite())
        .map(|(v, _)| *v)
        .collect();
    let roi_mean = (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64);
    Ok(TsnrResult { map, n_flagged, roi_mean })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal as RNormal, StandardNormal};

    fn flat(v: &[f64]) -> Array3<f64> {
        Array3::from_shape_vec([v.len(), 1, 1], v.to_vec()).unwrap()
    }

    #[test]
    fn z_threshold_value() {
        assert!((z_threshold(0.001).unwrap() - 3.0902).abs() < 1e-3);
        assert!(z_threshold(0.0).is_err() && z_threshold(1.0).is_err());
    }

    #[test]
    fn detection_extremes() {
        let roi = flat(&[1.0, 0.6, 0.4, 0.0, 0.0]);
        let z = roi.mapv(|r| if r >= 0.5 { 1e3 } else { -1e3 });
        let d = threshold_detect(&z, &roi, None, 0.001).unwrap();
        assert_eq!(d.counts, Confusion { tp: 2, fp: 0, tn: 3, fn_: 0 });
        assert_eq!(bacc(&d.counts).unwrap(), 1.0);
        let d = threshold_detect(&Array3::zeros([5, 1, 1]), &roi, None, 0.001).unwrap();
        assert_eq!(d.counts, Confusion { tp: 0, fp: 0, tn: 3, fn_: 2 });
        assert_eq!(bacc(&d.counts).unwrap(), 0.5);
        let mask = flat(&[1.0, 1.0, 0.0, 1.0, 0.0]).mapv(|v| v > 0.0);
        let d = threshold_detect(&z, &roi, Some(&mask), 0.001).unwrap();
        assert_eq!(d.counts.total(), 3);
    }

    #[test]
    fn bacc_formula() {
        let c = Confusion { tp: 3, fn_: 1, tn: 90, fp: 10 };
        assert!((bacc(&c).unwrap() - 0.825).abs() < 1e-15);
        assert!(bacc(&Confusion { tp: 0, fn_: 0, tn: 1, fp: 0 }).is_err());
    }

    #[test]
    fn pr_hand_case() {
        let z = flat(&[6.0, 5.0, 4.0, 3.0, 2.0, 1.0]);
        let roi = flat(&[1.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
        let c = precision_recall(&z, &roi, None, None).unwrap();
        assert!((c.auc - 55.0 / 72.0).abs() < 1e-15, "{}", c.auc);
        let perfect = flat(&[3.0, 2.0, 1.0, 0.0]);
        let r2 = flat(&[1.0, 1.0, 0.0, 0.0]);
        assert_eq!(precision_recall(&perfect, &r2, None, None).unwrap().auc, 1.0);
        assert!(precision_recall(&z, &Array3::zeros([6, 1, 1]), None, None).is_err());
    }

    #[test]
    fn pr_random_scores_approach_prevalence() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 20000;
        let z = Array3::from_shape_simple_fn([n, 1, 1], || -> f64 { StandardNormal.sample(&mut rng) });
        let roi = Array3::from_shape_simple_fn([n, 1, 1], || if rng.random::<f64>() < 0.2 { 1.0 } else { 0.0 });
        let c = precision_recall(&z, &roi, None, Some(0.001)).unwrap();
        assert!((c.auc - c.prevalence).abs() < 0.02, "{} {}", c.auc, c.prevalence);
        let mono = precision_recall(&z.mapv(|v| v.exp() * 3.0 + 1.0), &roi, None, None).unwrap();
        assert_eq!(mono.auc, c.auc);
        let d = threshold_detect(&z, &roi, None, 0.3).unwrap();
        assert!((bacc(&d.counts).unwrap() - 0.5).abs() < 0.02);
    }

    #[test]
    fn psnr_offset_and_ladder() {
        let r = Array3::from_shape_fn([4, 4, 4], |(i, j, k)| (i + 2 * j + k) as f64);
        assert_eq!(psnr(&r, &r).unwrap(), f64::INFINITY);
        let v = psnr(&r.mapv(|x| x + 0.5), &r).unwrap();
        assert!((v - 20.0 * (12.0f64 / 0.5).log10()).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noise = Array3::from_shape_simple_fn([4, 4, 4], || -> f64 { StandardNormal.sample(&mut rng) });
        let ladder: Vec<f64> = [0.1, 0.2, 0.5, 1.0, 2.0].iter().map(|s| psnr(&(&r + &noise.mapv(|n: f64| n * s)), &r).unwrap()).collect();
        assert!(ladder.windows(2).all(|w| w[1] < w[0]));
    }

    fn naive_ssim(x: &Array3<f64>, y: &Array3<f64>) -> f64 {
        let d = dims_of(x);
        let w = d.map(|v| v.min(7));
        let range = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let (c1, c2) = ((0.01 * range).powi(2), (0.03 * range).powi(2));
        let mut acc = 0.0;
        let mut cnt = 0.0;
        for i in 0..=d[0] - w[0] {
            for j in 0..=d[1] - w[1] {
                for k in 0..=d[2] - w[2] {
                    let mut a = Vec::new();
                    let mut b = Vec::new();
                    for di in 0..w[0] {
                        for dj in 0..w[1] {
                            for dk in 0..w[2] {
                                a.push(x[[i + di, j + dj, k + dk]]);
                                b.push(y[[i + di, j + dj, k + dk]]);
                            }
                        }
                    }
                    let n = a.len() as f64;
                    let ma = a.iter().sum::<f64>() / n;
                    let mb = b.iter().sum::<f64>() / n;
                    let va = a.iter().map(|v| (v - ma).powi(2)).sum::<f64>() / n;
                    let vb = b.iter().map(|v| (v - mb).powi(2)).sum::<f64>() / n;
                    let cab = a.iter().zip(&b).map(|(p, q)| (p - ma) * (q - mb)).sum::<f64>() / n;
                    acc += (2.0 * ma * mb + c1) * (2.0 * cab + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                    cnt += 1.0;
                }
            }
        }
        acc / cnt
    }

    #[test]
    fn ssim_matches_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = Array3::from_shape_simple_fn([8, 8, 8], || rng.random::<f64>());
        let y = Array3::from_shape_simple_fn([8, 8, 8], || rng.random::<f64>());
        assert!((ssim(&x, &y).unwrap() - naive_ssim(&x, &y)).abs() < 1e-9);
        assert!((ssim(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        let small = Array3::from_shape_simple_fn([3, 9, 5], || rng.random::<f64>());
        let s2 = small.mapv(|v| v * 0.9 + 0.05);
        assert!((ssim(&small, &s2).unwrap() - naive_ssim(&small, &s2)).abs() < 1e-9);
    }

    #[test]
    fn tsnr_cases() {
        let roi = Array3::from_elem([2, 2, 1], 1.0);
        let constant: Vec<Array3<f64>> = (0..5).map(|_| Array3::from_elem([2, 2, 1], 3.0)).collect();
        let t = tsnr(&constant, &roi).unwrap();
        assert_eq!(t.n_flagged, 4);
        assert!(t.roi_mean.is_none());
        let two: Vec<Array3<f64>> = [90.0, 110.0].iter().map(|&v| Array3::from_elem([2, 2, 1], v)).collect();
        let t = tsnr(&two, &roi).unwrap();
        // mean 100, unbiased std sqrt(200)
        assert!((t.roi_mean.unwrap() - 100.0 / 200f64.sqrt()).abs() < 1e-12);
        let scaled: Vec<Array3<f64>> = two.iter().map(|s| s * 7.5).collect();
        assert!((tsnr(&scaled, &roi).unwrap().roi_mean.unwrap() / t.roi_mean.unwrap() - 1.0).abs() < 1e-15);
        assert!(tsnr(&two[..1], &roi).is_err());
    }

    #[test]
    fn tsnr_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let g = RNormal::new(50.0, 5.0).unwrap();
        let series: Vec<Array3<f64>> = (0..500).map(|_| Array3::from_shape_simple_fn([4, 4, 4], || g.sample(&mut rng))).collect();
        let t = tsnr(&series, &Array3::from_elem([4, 4, 4], 1.0)).unwrap();
        assert!((t.roi_mean.unwrap() / 10.0 - 1.0).abs() < 0.05);
    }
}
