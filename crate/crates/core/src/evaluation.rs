//! Agreement between objective scores and subjective ratings: Pearson and
//! Spearman correlation, RMSE, and the 5-parameter logistic mapping used to
//! bring objective scores onto the rating scale.

use nalgebra::{Matrix5, Vector5};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const MAX_ITERATIONS: usize = 1000;
const RELATIVE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScorePair {
    pub objective: f64,
    pub subjective: f64,
}

impl ScorePair {
    pub fn new(objective: f64, subjective: f64) -> Self {
        Self { objective, subjective }
    }
}

fn check_finite(pairs: &[ScorePair]) -> Result<()> {
    match pairs.iter().position(|p| !p.objective.is_finite() || !p.subjective.is_finite()) {
        Some(i) => Err(Error::Parameter(format!("score pair {i} is not finite"))),
        None => Ok(()),
    }
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("one side has zero variance".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

fn split(pairs: &[ScorePair]) -> (Vec<f64>, Vec<f64>) {
    pairs.iter().map(|p| (p.objective, p.subjective)).unzip()
}

fn require(pairs: &[ScorePair], n: usize) -> Result<()> {
    check_finite(pairs)?;
    if pairs.len() < n {
        return Err(Error::UndefinedCorrelation(format!("need at least {n} pairs, got {}", pairs.len())));
    }
    Ok(())
}

/// Pearson linear correlation coefficient.
pub fn plcc(pairs: &[ScorePair]) -> Result<f64> {
    require(pairs, 3)?;
    let (x, y) = split(pairs);
    pearson(&x, &y)
}

/// 1-based fractional ranks; tied values share the mean of their ranks.
pub fn fractional_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Spearman rank-order correlation coefficient (Pearson over fractional ranks).
pub fn srocc(pairs: &[ScorePair]) -> Result<f64> {
    require(pairs, 3)?;
    let (x, y) = split(pairs);
    pearson(&fractional_ranks(&x), &fractional_ranks(&y))
}

/// Parameters of `f(q) = β1·(1/2 − 1/(1 + exp(β2·(q − β3)))) + β4·q + β5`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    pub beta: [f64; 5],
}

impl LogisticParams {
    /// The identity mapping.
    pub const IDENTITY: LogisticParams = LogisticParams { beta: [0.0, 1.0, 0.0, 1.0, 0.0] };

    pub fn eval(&self, q: f64) -> f64 {
        let [b1, b2, b3, b4, b5] = self.beta;
        b1 * (0.5 - 1.0 / (1.0 + (b2 * (q - b3)).exp())) + b4 * q + b5
    }

    fn gradient(&self, q: f64) -> Vector5<f64> {
        let [b1, b2, b3, _, _] = self.beta;
        let g = 1.0 / (1.0 + (b2 * (q - b3)).exp());
        let slope = g * (1.0 - g);
        Vector5::new(0.5 - g, b1 * slope * (q - b3), -b1 * slope * b2, q, 1.0)
    }
}

/// Root mean square error between mapped objective scores and ratings.
pub fn rmse(pairs: &[ScorePair], params: &LogisticParams) -> Result<f64> {
    check_finite(pairs)?;
    if pairs.is_empty() {
        return Err(Error::Parameter("rmse needs at least one pair".into()));
    }
    Ok((sse(pairs, params) / pairs.len() as f64).sqrt())
}

fn sse(pairs: &[ScorePair], params: &LogisticParams) -> f64 {
    pairs.iter().map(|p| (params.eval(p.objective) - p.subjective).powi(2)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub params: LogisticParams,
    /// False when the iteration cap was hit; `params` is then the best
    /// point found.
    pub converged: bool,
    pub iterations: usize,
}

struct LmOutcome {
    params: LogisticParams,
    sse: f64,
    converged: bool,
    iterations: usize,
}

/// Damped Gauss-Newton (Levenberg-Marquardt with diagonal scaling).
fn levenberg_marquardt(pairs: &[ScorePair], start: LogisticParams) -> LmOutcome {
    let mut params = start;
    let mut cost = sse(pairs, &params);
    let mut lambda = 1e-3;
    for iteration in 1..=MAX_ITERATIONS {
        if cost == 0.0 {
            return LmOutcome { params, sse: cost, converged: true, iterations: iteration - 1 };
        }
        let mut jtj = Matrix5::<f64>::zeros();
        let mut jtr = Vector5::<f64>::zeros();
        for p in pairs {
            let grad = params.gradient(p.objective);
            let residual = params.eval(p.objective) - p.subjective;
            jtj += grad * grad.transpose();
            jtr += grad * residual;
        }
        let scale = jtj.diagonal().max().max(1e-300);
        loop {
            let mut damped = jtj;
            for d in 0..5 {
                damped[(d, d)] += lambda * jtj[(d, d)].max(1e-12 * scale);
            }
            let step = damped.lu().solve(&(-jtr));
            if let Some(step) = step.filter(|s| s.iter().all(|v| v.is_finite())) {
                let mut beta = params.beta;
                for (b, s) in beta.iter_mut().zip(step.iter()) {
                    *b += s;
                }
                let candidate = LogisticParams { beta };
                let new_cost = sse(pairs, &candidate);
                if new_cost.is_finite() && new_cost < cost {
                    let relative = (cost - new_cost) / cost;
                    params = candidate;
                    cost = new_cost;
                    lambda = (lambda / 10.0).max(1e-12);
                    if relative < RELATIVE_TOLERANCE {
                        return LmOutcome { params, sse: cost, converged: true, iterations: iteration };
                    }
                    break;
                }
            }
            lambda *= 10.0;
            if lambda > 1e16 {
                // no descent direction left: a stationary point
                return LmOutcome { params, sse: cost, converged: true, iterations: iteration };
            }
        }
    }
    LmOutcome { params, sse: cost, converged: false, iterations: MAX_ITERATIONS }
}

fn mean(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count() as f64;
    values.sum::<f64>() / n
}

/// Least-squares fit of the logistic mapping.
///
/// Starts from β1 = range of ratings, β2 = 1/std of objective scores,
/// β3 = mean objective score, β4 = 0, β5 = mean rating. If that run ends
/// worse than the ordinary least-squares line (the β1 = 0 member of the
/// family), a second run starts from the line and the better result wins,
/// so the fit is never worse than linear regression.
pub fn fit_logistic(pairs: &[ScorePair]) -> Result<LogisticFit> {
    check_finite(pairs)?;
    if pairs.len() < 5 {
        return Err(Error::Fit(format!("need at least 5 pairs, got {}", pairs.len())));
    }
    let obj = pairs.iter().map(|p| p.objective);
    let subj = pairs.iter().map(|p| p.subjective);
    let mq = mean(obj.clone());
    let ms = mean(subj.clone());
    let var_q = mean(obj.clone().map(|q| (q - mq) * (q - mq)));
    if var_q == 0.0 {
        return Err(Error::Fit("objective scores are constant".into()));
    }
    let (lo, hi) = subj.clone().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), s| (l.min(s), h.max(s)));
    let start = LogisticParams { beta: [hi - lo, 1.0 / var_q.sqrt(), mq, 0.0, ms] };

    let cov = mean(pairs.iter().map(|p| (p.objective - mq) * (p.subjective - ms)));
    let slope = cov / var_q;
    let linear = LogisticParams { beta: [0.0, 1.0 / var_q.sqrt(), mq, slope, ms - slope * mq] };
    let linear_sse = sse(pairs, &linear);

    let mut best = levenberg_marquardt(pairs, start);
    if best.sse > linear_sse {
        let from_line = levenberg_marquardt(pairs, linear);
        if from_line.sse < best.sse {
            best = from_line;
        }
    }
    if !best.converged {
        log::warn!("logistic fit did not converge within {MAX_ITERATIONS} iterations");
    }
    Ok(LogisticFit { params: best.params, converged: best.converged, iterations: best.iterations })
}

/// PLCC and RMSE after logistic mapping, SROCC on raw scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub n: usize,
    pub plcc: f64,
    pub srocc: f64,
    pub rmse: f64,
    pub fit: LogisticFit,
}

pub fn evaluate(pairs: &[ScorePair]) -> Result<CorrelationReport> {
    let fit = fit_logistic(pairs)?;
    let mapped: Vec<ScorePair> =
        pairs.iter().map(|p| ScorePair::new(fit.params.eval(p.objective), p.subjective)).collect();
    Ok(CorrelationReport {
        n: pairs.len(),
        plcc: plcc(&mapped)?,
        srocc: srocc(pairs)?,
        rmse: rmse(pairs, &fit.params)?,
        fit,
    })
}
