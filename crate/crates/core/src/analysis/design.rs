use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::phantom::{Hrf, Paradigm};

/// Regressors sampled once per frame; column `task` carries the contrast.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub x: Array2<f64>,
    pub names: Vec<String>,
    pub task: usize,
}

impl DesignMatrix {
    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.x.ncols()
    }

    pub fn task_column(&self) -> Vec<f64> {
        self.x.column(self.task).to_vec()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DesignSpec {
    pub hrf: Hrf,
    pub drift_order: usize,
}

impl Default for DesignSpec {
    fn default() -> Self {
        Self {
            hrf: Hrf::DoubleGamma,
            drift_order: 1,
        }
    }
}

/// Legendre polynomial of degree `n` at `x`.
pub fn legendre(n: usize, x: f64) -> f64 {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return p0;
    }
    for k in 1..n {
        let p2 = ((2 * k + 1) as f64 * x * p1 - k as f64 * p0) / (k + 1) as f64;
        p0 = p1;
        p1 = p2;
    }
    p1
}

/// Task regressor (paradigm convolved with the HRF at frame midpoints,
/// max-normalized), intercept, then Legendre drifts.
pub fn build_design(paradigm: &Paradigm, hrf: Hrf, n_frames: usize, tr_vol: f64, drift_order: usize) -> Result<DesignMatrix> {
    paradigm.validate()?;
    if n_frames < drift_order + 2 {
        return Err(invalid(format!(
            "{n_frames} frames cannot support drift order {drift_order}"
        )));
    }
    if !(tr_vol > 0.0) {
        return Err(invalid("tr_vol must be positive"));
    }
    let mut task: Vec<f64> = (0..n_frames)
        .map(|f| paradigm.response(hrf, (f as f64 + 0.5) * tr_vol))
        .collect();
    let peak = task.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        task.iter_mut().for_each(|v| *v /= peak);
    }
    let p = drift_order + 2;
    let mut x = Array2::zeros((n_frames, p));
    let mut names = vec!["task".to_string(), "intercept".to_string()];
    for d in 1..=drift_order {
        names.push(format!("drift{d}"));
    }
    for f in 0..n_frames {
        let u = if n_frames > 1 {
            2.0 * f as f64 / (n_frames - 1) as f64 - 1.0
        } else {
            0.0
        };
        x[[f, 0]] = task[f];
        x[[f, 1]] = 1.0;
        for d in 1..=drift_order {
            x[[f, d + 1]] = legendre(d, u);
        }
    }
    let design = DesignMatrix { x, names, task: 0 };
    if peak == 0.0 {
        return Err(Error::RankDeficient(
            "task regressor is identically zero and collinear with the intercept".into(),
        ));
    }
    gram_inverse(&design.x)?;
    Ok(design)
}

/// `(X^T X)^-1` through a Cholesky factorization; fails on rank deficiency.
pub fn gram_inverse(x: &Array2<f64>) -> Result<Array2<f64>> {
    let g = x.t().dot(x);
    let p = g.nrows();
    let scale = (0..p).map(|i| g[[i, i]]).fold(0.0f64, f64::max);
    let mut l = Array2::<f64>::zeros((p, p));
    for j in 0..p {
        let mut d = g[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if !(d > 1e-10 * scale) {
            return Err(Error::RankDeficient(format!(
                "design column {j} is linearly dependent on earlier columns"
            )));
        }
        let d = d.sqrt();
        l[[j, j]] = d;
        for i in j + 1..p {
            let mut s = g[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / d;
        }
    }
    let mut inv = Array2::<f64>::zeros((p, p));
    for c in 0..p {
        let mut z = vec![0.0; p];
        for i in 0..p {
            let mut s = if i == c { 1.0 } else { 0.0 };
            for k in 0..i {
                s -= l[[i, k]] * z[k];
            }
            z[i] = s / l[[i, i]];
        }
        for i in (0..p).rev() {
            let mut s = z[i];
            for k in i + 1..p {
                s -= l[[k, i]] * inv[[k, c]];
            }
            inv[[i, c]] = s / l[[i, i]];
        }
    }
    Ok(inv)
}
