//! Three-component full-covariance Gaussian mixture for IQ discrimination.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::Iq;
use crate::device::DimonLevel;
use crate::error::{Error, Result};

pub const MAX_CONDITION: f64 = 1e12;
pub const MIN_SHOTS_PER_LABEL: usize = 100;

type Cov = [[f64; 2]; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmClassifier {
    pub means: [Iq; 3],
    pub covariances: [Cov; 3],
    pub weights: [f64; 3],
    /// Level assigned to each component.
    pub labels: [DimonLevel; 3],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmmOptions {
    /// Initialise from prepared labels; otherwise k-means++ seeding.
    pub supervised: bool,
    pub max_iterations: usize,
    /// Stop once the per-shot log-likelihood gain drops below this.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for GmmOptions {
    fn default() -> Self {
        Self {
            supervised: true,
            max_iterations: 200,
            tolerance: 1e-8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GmmFit {
    pub classifier: GmmClassifier,
    /// Total log-likelihood after each E step.
    pub log_likelihood: Vec<f64>,
    pub iterations: usize,
}

fn det(c: &Cov) -> f64 {
    c[0][0] * c[1][1] - c[0][1] * c[1][0]
}

fn condition(c: &Cov) -> f64 {
    let tr = c[0][0] + c[1][1];
    let d = det(c);
    let disc = ((tr * tr / 4.0) - d).max(0.0).sqrt();
    let hi = tr / 2.0 + disc;
    let lo = tr / 2.0 - disc;
    if lo <= 0.0 || !lo.is_finite() {
        f64::INFINITY
    } else {
        hi / lo
    }
}

fn check_cov(k: usize, c: &Cov) -> Result<()> {
    let cond = condition(c);
    if cond > MAX_CONDITION || !c.iter().flatten().all(|x| x.is_finite()) {
        return Err(Error::DegenerateCovariance {
            component: k,
            condition: cond,
        });
    }
    Ok(())
}

/// log N(x; μ, Σ).
fn log_density(x: &Iq, mu: &Iq, c: &Cov) -> f64 {
    let d = det(c);
    let dx = x[0] - mu[0];
    let dy = x[1] - mu[1];
    let quad = (c[1][1] * dx * dx - 2.0 * c[0][1] * dx * dy + c[0][0] * dy * dy) / d;
    -0.5 * quad - 0.5 * d.ln() - (2.0 * PI).ln()
}

impl GmmClassifier {
    pub fn validate(&self) -> Result<()> {
        let s: f64 = self.weights.iter().sum();
        if self.weights.iter().any(|&w| !(w >= 0.0)) || (s - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("mixture weights must be >= 0 and sum to 1"));
        }
        for (k, c) in self.covariances.iter().enumerate() {
            if (c[0][1] - c[1][0]).abs() > 1e-12 * (c[0][0].abs() + c[1][1].abs()) {
                return Err(Error::invalid(format!("covariance {k} is not symmetric")));
            }
            check_cov(k, c)?;
        }
        let mut seen = self.labels.to_vec();
        seen.sort();
        if seen != DimonLevel::READOUT.to_vec() {
            return Err(Error::invalid("label map must be a bijection onto 00, 01, 10"));
        }
        Ok(())
    }

    fn component_log_joint(&self, x: &Iq) -> [f64; 3] {
        let mut out = [0.0; 3];
        for k in 0..3 {
            out[k] = self.weights[k].ln() + log_density(x, &self.means[k], &self.covariances[k]);
        }
        out
    }

    /// Assigned level and posterior responsibilities ordered as `|00⟩, |01⟩, |10⟩`.
    ///
    /// Exact ties go to the lower-ordered level.
    pub fn classify(&self, x: &Iq) -> (DimonLevel, [f64; 3]) {
        let lj = self.component_log_joint(x);
        let mut by_level = [f64::NEG_INFINITY; 3];
        for k in 0..3 {
            by_level[self.labels[k].index()] = lj[k];
        }
        let max = by_level.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut resp = [0.0; 3];
        let mut total = 0.0;
        for i in 0..3 {
            resp[i] = (by_level[i] - max).exp();
            total += resp[i];
        }
        resp.iter_mut().for_each(|r| *r /= total);
        let mut best = 0;
        for i in 1..3 {
            if by_level[i] > by_level[best] {
                best = i;
            }
        }
        (DimonLevel::READOUT[best], resp)
    }

    pub fn assign(&self, x: &Iq) -> DimonLevel {
        self.classify(x).0
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }
}

pub fn classify(clf: &GmmClassifier, x: &Iq) -> (DimonLevel, [f64; 3]) {
    clf.classify(x)
}

fn readout_slot(level: DimonLevel) -> Result<usize> {
    DimonLevel::READOUT
        .iter()
        .position(|&l| l == level)
        .ok_or_else(|| Error::invalid(format!("label {level} is not a readout level")))
}

fn moments(points: &[Iq], weights: &[f64]) -> (Iq, Cov, f64) {
    let w: f64 = weights.iter().sum();
    let mut mu = [0.0; 2];
    for (p, &r) in points.iter().zip(weights) {
        mu[0] += r * p[0];
        mu[1] += r * p[1];
    }
    mu[0] /= w;
    mu[1] /= w;
    let mut c = [[0.0; 2]; 2];
    for (p, &r) in points.iter().zip(weights) {
        let dx = p[0] - mu[0];
        let dy = p[1] - mu[1];
        c[0][0] += r * dx * dx;
        c[0][1] += r * dx * dy;
        c[1][1] += r * dy * dy;
    }
    c[0][0] /= w;
    c[0][1] /= w;
    c[1][1] /= w;
    c[1][0] = c[0][1];
    (mu, c, w)
}

pub fn fit_gmm(points: &[Iq], labels: &[DimonLevel]) -> Result<GmmClassifier> {
    Ok(fit_gmm_with(points, labels, &GmmOptions::default())?.classifier)
}

pub fn fit_gmm_with(points: &[Iq], labels: &[DimonLevel], opts: &GmmOptions) -> Result<GmmFit> {
    if points.len() != labels.len() {
        return Err(Error::invalid("points and labels differ in length"));
    }
    let mut counts = [0usize; 3];
    for &l in labels {
        counts[readout_slot(l)?] += 1;
    }
    for (i, &c) in counts.iter().enumerate() {
        if c < MIN_SHOTS_PER_LABEL {
            return Err(Error::InsufficientData(format!(
                "label {} has {c} training shots, need {MIN_SHOTS_PER_LABEL}",
                DimonLevel::READOUT[i]
            )));
        }
    }
    let n = points.len();
    let mut means = [[0.0; 2]; 3];
    let mut covs = [[[0.0; 2]; 2]; 3];
    let mut weights = [0.0; 3];
    if opts.supervised {
        for k in 0..3 {
            let member: Vec<f64> = labels
                .iter()
                .map(|&l| if l == DimonLevel::READOUT[k] { 1.0 } else { 0.0 })
                .collect();
            let (mu, c, w) = moments(points, &member);
            means[k] = mu;
            covs[k] = c;
            weights[k] = w / n as f64;
        }
    } else {
        let init = kmeans_pp(points, opts.seed);
        let all = vec![1.0; n];
        let (_, c, _) = moments(points, &all);
        means = init;
        covs = [c; 3];
        weights = [1.0 / 3.0; 3];
    }
    for (k, c) in covs.iter().enumerate() {
        check_cov(k, c)?;
    }
    let mut clf = GmmClassifier {
        means,
        covariances: covs,
        weights,
        labels: DimonLevel::READOUT,
    };

    let mut history = Vec::new();
    let mut resp = vec![[0.0; 3]; n];
    let mut iterations = 0;
    loop {
        // E step
        let mut ll = 0.0;
        for (p, r) in points.iter().zip(resp.iter_mut()) {
            let lj = clf.component_log_joint(p);
            let m = lj.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let s: f64 = lj.iter().map(|v| (v - m).exp()).sum();
            let lse = m + s.ln();
            ll += lse;
            for k in 0..3 {
                r[k] = (lj[k] - lse).exp();
            }
        }
        let done = match history.last() {
            Some(&prev) => (ll - prev) / (n as f64) < opts.tolerance,
            None => false,
        };
        history.push(ll);
        if done || iterations >= opts.max_iterations {
            break;
        }
        // M step
        for k in 0..3 {
            let w: Vec<f64> = resp.iter().map(|r| r[k]).collect();
            let (mu, c, tot) = moments(points, &w);
            if !(tot > 0.0) {
                return Err(Error::DegenerateCovariance {
                    component: k,
                    condition: f64::INFINITY,
                });
            }
            check_cov(k, &c)?;
            clf.means[k] = mu;
            clf.covariances[k] = c;
            clf.weights[k] = tot / n as f64;
        }
        iterations += 1;
    }

    // majority prepared label per component
    let mut tally = [[0usize; 3]; 3];
    for (r, &l) in resp.iter().zip(labels) {
        let mut k = 0;
        for j in 1..3 {
            if r[j] > r[k] {
                k = j;
            }
        }
        tally[k][readout_slot(l)?] += 1;
    }
    for k in 0..3 {
        let mut best = 0;
        for j in 1..3 {
            if tally[k][j] > tally[k][best] {
                best = j;
            }
        }
        clf.labels[k] = DimonLevel::READOUT[best];
    }
    clf.validate()?;
    Ok(GmmFit {
        classifier: clf,
        log_likelihood: history,
        iterations,
    })
}

fn kmeans_pp(points: &[Iq], seed: u64) -> [Iq; 3] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centres = vec![points[rng.random_range(0..points.len())]];
    while centres.len() < 3 {
        let d2: Vec<f64> = points
            .iter()
            .map(|p| {
                centres
                    .iter()
                    .map(|c| (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = d2.iter().sum();
        let mut u = rng.random::<f64>() * total;
        let mut pick = points.len() - 1;
        for (i, d) in d2.iter().enumerate() {
            if u < *d {
                pick = i;
                break;
            }
            u -= d;
        }
        centres.push(points[pick]);
    }
    for _ in 0..10 {
        let mut sums = [[0.0; 3]; 3];
        for p in points {
            let mut k = 0;
            let mut best = f64::INFINITY;
            for (j, c) in centres.iter().enumerate() {
                let d = (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2);
                if d < best {
                    best = d;
                    k = j;
                }
            }
            sums[k][0] += p[0];
            sums[k][1] += p[1];
            sums[k][2] += 1.0;
        }
        for k in 0..3 {
            if sums[k][2] > 0.0 {
                centres[k] = [sums[k][0] / sums[k][2], sums[k][1] / sums[k][2]];
            }
        }
    }
    [centres[0], centres[1], centres[2]]
}

/// Row-stochastic assignment matrix, rows by prepared level `|00⟩, |01⟩, |10⟩`.
pub fn confusion_matrix(clf: &GmmClassifier, points: &[Iq], labels: &[DimonLevel]) -> Result<[[f64; 3]; 3]> {
    if points.len() != labels.len() {
        return Err(Error::invalid("points and labels differ in length"));
    }
    let mut counts = [[0u64; 3]; 3];
    for (p, &l) in points.iter().zip(labels) {
        counts[readout_slot(l)?][clf.assign(p).index()] += 1;
    }
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        let total: u64 = counts[i].iter().sum();
        if total == 0 {
            return Err(Error::InsufficientData(format!(
                "no shots prepared in {}",
                DimonLevel::READOUT[i]
            )));
        }
        for j in 0..3 {
            out[i][j] = counts[i][j] as f64 / total as f64;
        }
    }
    Ok(out)
}
