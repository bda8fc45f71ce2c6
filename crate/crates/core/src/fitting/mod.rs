//! Weighted nonlinear least squares with parameter fixing.
//!
//! The engine is a Levenberg–Marquardt iteration with Marquardt's diagonal
//! scaling, box bounds by projection and central-difference Jacobians for
//! models without an analytic gradient.

pub mod models;

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use models::{lookup, ModelDef, ParamDef, MODELS};

pub const MAX_ITERATIONS: usize = 200;
pub const RELATIVE_REDUCTION_TOL: f64 = 1e-10;
pub const GRADIENT_TOL: f64 = 1e-8;
/// A fit counts as converged when the scaled gradient ends below this.
pub const STATIONARY_TOL: f64 = 1e-6;
const LAMBDA_START: f64 = 1e-3;
const LAMBDA_MAX: f64 = 1e16;
const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSeries {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub sigma: Option<Vec<f64>>,
}

impl DataSeries {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        DataSeries { x, y, sigma: None }
    }

    pub fn with_sigma(x: Vec<f64>, y: Vec<f64>, sigma: Vec<f64>) -> Self {
        DataSeries { x, y, sigma: Some(sigma) }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn weighted(&self) -> bool {
        self.sigma.is_some()
    }

    fn sigma_at(&self, i: usize) -> f64 {
        self.sigma.as_ref().map_or(1.0, |s| s[i])
    }

    pub fn validate(&self, min_points: usize) -> Result<()> {
        if self.y.len() != self.x.len() {
            return Err(Error::Data(format!("{} x values but {} y values", self.x.len(), self.y.len())));
        }
        if let Some(s) = &self.sigma {
            if s.len() != self.x.len() {
                return Err(Error::Data(format!("{} points but {} sigma values", self.x.len(), s.len())));
            }
            if let Some(i) = s.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(Error::Data(format!("sigma[{i}] = {} is not a positive number", s[i])));
            }
        }
        if self.len() < min_points {
            return Err(Error::Data(format!("need at least {min_points} points, got {}", self.len())));
        }
        let bad = self.x.iter().chain(&self.y).any(|v| !v.is_finite());
        if bad {
            return Err(Error::Data("non-finite x or y value".into()));
        }
        Ok(())
    }

    /// Reads two or three delimited columns (x, y, optional sigma).
    ///
    /// Lines starting with `#` are skipped, as is a first row that does not
    /// parse as numbers. Commas, tabs and whitespace all work as separators.
    pub fn from_reader<R: Read>(mut reader: R) -> Result<Self> {
        let mut text = String::new();
        reader.read_to_string(&mut text)?;
        let delimiter = if text.contains(',') {
            b','
        } else if text.contains('\t') {
            b'\t'
        } else {
            b' '
        };
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .delimiter(delimiter)
            .comment(Some(b'#'))
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let (mut x, mut y, mut s) = (Vec::new(), Vec::new(), Vec::new());
        let mut columns = None;
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let fields: Vec<&str> = rec.iter().filter(|f| !f.is_empty()).collect();
            if fields.is_empty() {
                continue;
            }
            let parsed: std::result::Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
            let values = match parsed {
                Ok(v) => v,
                Err(_) if row == 0 => continue,
                Err(e) => return Err(Error::Data(format!("row {}: {e}", row + 1))),
            };
            if !(2..=3).contains(&values.len()) {
                return Err(Error::Data(format!("row {}: expected 2 or 3 columns, got {}", row + 1, values.len())));
            }
            match columns {
                None => columns = Some(values.len()),
                Some(c) if c != values.len() => {
                    return Err(Error::Data(format!("row {}: column count changed from {c}", row + 1)))
                }
                _ => {}
            }
            x.push(values[0]);
            y.push(values[1]);
            if values.len() == 3 {
                s.push(values[2]);
            }
        }
        let sigma = (columns == Some(3)).then_some(s);
        Ok(DataSeries { x, y, sigma })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_reader(std::fs::File::open(path)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitProblem {
    pub model: String,
    /// Free parameters, in the order used for the covariance matrix.
    pub free: Vec<String>,
    pub fixed: BTreeMap<String, f64>,
    pub initial: BTreeMap<String, f64>,
    /// Extra bounds, intersected with the model's own domain.
    pub bounds: BTreeMap<String, (f64, f64)>,
}

impl FitProblem {
    pub fn new(model: &str) -> Self {
        FitProblem {
            model: model.to_string(),
            free: Vec::new(),
            fixed: BTreeMap::new(),
            initial: BTreeMap::new(),
            bounds: BTreeMap::new(),
        }
    }

    pub fn free(mut self, name: &str, initial: f64) -> Self {
        self.free.push(name.to_string());
        self.initial.insert(name.to_string(), initial);
        self
    }

    pub fn fix(mut self, name: &str, value: f64) -> Self {
        self.fixed.insert(name.to_string(), value);
        self
    }

    pub fn bound(mut self, name: &str, lo: f64, hi: f64) -> Self {
        self.bounds.insert(name.to_string(), (lo, hi));
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Gradient,
    RelativeReduction,
    ZeroResidual,
    /// No step within the damping range reduced the residual.
    Stalled,
    MaxIterations,
    ClosedForm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub stop: StopReason,
    /// Largest |cosine| between the residual vector and a Jacobian column,
    /// with components blocked by an active bound removed.
    pub gradient_norm: f64,
    pub last_relative_reduction: f64,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    /// Damping parameter after each accepted step.
    pub lambda_trace: Vec<f64>,
    pub weighted: bool,
    /// Free parameters that ended on a bound.
    pub at_bound: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: String,
    /// All model parameters, fixed ones included.
    pub values: BTreeMap<String, f64>,
    /// Free parameters only.
    pub std_errors: BTreeMap<String, f64>,
    pub free: Vec<String>,
    pub covariance: Vec<Vec<f64>>,
    /// sqrt of the weighted sum of squared residuals.
    pub residual_norm: f64,
    pub dof: usize,
    pub converged: bool,
    pub iterations: usize,
    pub diagnostics: FitDiagnostics,
}

impl FitResult {
    pub fn value(&self, name: &str) -> f64 {
        self.values.get(name).copied().unwrap_or(f64::NAN)
    }

    pub fn std_error(&self, name: &str) -> f64 {
        self.std_errors.get(name).copied().unwrap_or(f64::NAN)
    }

    pub fn covariance_of(&self, a: &str, b: &str) -> f64 {
        let i = self.free.iter().position(|n| n == a);
        let j = self.free.iter().position(|n| n == b);
        match (i, j) {
            (Some(i), Some(j)) => self.covariance[i][j],
            _ => f64::NAN,
        }
    }

    pub fn chi2(&self) -> f64 {
        self.residual_norm * self.residual_norm
    }

    /// |value - truth| <= k standard errors.
    pub fn recovers(&self, name: &str, truth: f64, k: f64) -> bool {
        (self.value(name) - truth).abs() <= k * self.std_error(name)
    }
}

struct Setup<'a> {
    model: &'static ModelDef,
    data: &'a DataSeries,
    template: Vec<f64>,
    free_idx: Vec<usize>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    steps: Vec<f64>,
}

impl<'a> Setup<'a> {
    fn new(problem: &FitProblem, data: &'a DataSeries) -> Result<Self> {
        let model = lookup(&problem.model)?;
        for name in problem.free.iter().chain(problem.fixed.keys()).chain(problem.bounds.keys()) {
            if model.index_of(name).is_none() {
                return Err(Error::FitSetup(format!(
                    "{} has no parameter `{name}` (parameters: {})",
                    model.name,
                    model.param_names().join(", ")
                )));
            }
        }
        let mut template = vec![f64::NAN; model.params.len()];
        let mut free_idx = Vec::new();
        let (mut lo, mut hi, mut steps) = (Vec::new(), Vec::new(), Vec::new());
        for name in &problem.free {
            if problem.fixed.contains_key(name) {
                return Err(Error::FitSetup(format!("`{name}` is both free and fixed")));
            }
            let j = model.index_of(name).expect("checked above");
            if free_idx.contains(&j) {
                return Err(Error::FitSetup(format!("`{name}` listed twice as free")));
            }
            let def = &model.params[j];
            let (mut l, mut h) = def.bounds;
            if let Some(&(bl, bh)) = problem.bounds.get(name) {
                l = l.max(bl);
                h = h.min(bh);
            }
            if !(l < h) {
                return Err(Error::FitSetup(format!("empty bounds [{l}, {h}] for `{name}`")));
            }
            let init = *problem
                .initial
                .get(name)
                .ok_or_else(|| Error::FitSetup(format!("no initial value for `{name}`")))?;
            if !(init >= l && init <= h) {
                return Err(Error::FitSetup(format!("initial {name} = {init} outside [{l}, {h}]")));
            }
            template[j] = init;
            free_idx.push(j);
            lo.push(l);
            hi.push(h);
            steps.push(def.scale);
        }
        for (name, &v) in &problem.fixed {
            template[model.index_of(name).expect("checked above")] = v;
        }
        let missing: Vec<&str> = model
            .params
            .iter()
            .zip(&template)
            .filter(|(_, v)| v.is_nan())
            .map(|(p, _)| p.name)
            .collect();
        if !missing.is_empty() {
            return Err(Error::FitSetup(format!(
                "parameters neither free nor fixed: {}",
                missing.join(", ")
            )));
        }
        if free_idx.is_empty() {
            return Err(Error::FitSetup("no free parameters".into()));
        }
        data.validate(free_idx.len() + 1)?;
        Ok(Setup { model, data, template, free_idx, lo, hi, steps })
    }

    fn full(&self, theta: &[f64]) -> Vec<f64> {
        let mut t = self.template.clone();
        for (&j, &v) in self.free_idx.iter().zip(theta) {
            t[j] = v;
        }
        t
    }

    fn residuals(&self, theta: &[f64]) -> Result<DVector<f64>> {
        let t = self.full(theta);
        let d = self.data;
        let mut r = DVector::zeros(d.len());
        for i in 0..d.len() {
            let f = self.model.eval(d.x[i], &t)?;
            if !f.is_finite() {
                return Err(Error::domain("fit", format!("model is not finite at x = {}", d.x[i])));
            }
            r[i] = (d.y[i] - f) / d.sigma_at(i);
        }
        Ok(r)
    }

    /// d r / d theta for the free parameters.
    fn jacobian(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        let t = self.full(theta);
        let d = self.data;
        let mut jac = DMatrix::zeros(d.len(), theta.len());
        let analytic = self.model.analytic_gradient(d.x[0], &t).is_some();
        for i in 0..d.len() {
            let s = d.sigma_at(i);
            if analytic {
                let g = self.model.analytic_gradient(d.x[i], &t).expect("model has a gradient");
                for (k, &j) in self.free_idx.iter().enumerate() {
                    jac[(i, k)] = -g[j] / s;
                }
            } else {
                let mut tt = t.clone();
                for (k, &j) in self.free_idx.iter().enumerate() {
                    let h = 1e-6 * t[j].abs().max(self.steps[k]);
                    tt[j] = t[j] + h;
                    let up = self.model.eval(d.x[i], &tt)?;
                    tt[j] = t[j] - h;
                    let down = self.model.eval(d.x[i], &tt)?;
                    tt[j] = t[j];
                    jac[(i, k)] = -(up - down) / (2.0 * h * s);
                }
            }
        }
        Ok(jac)
    }

    fn project(&self, theta: &mut [f64]) {
        for (k, v) in theta.iter_mut().enumerate() {
            *v = v.clamp(self.lo[k], self.hi[k]);
        }
    }

    fn names(&self) -> Vec<String> {
        self.free_idx.iter().map(|&j| self.model.params[j].name.to_string()).collect()
    }
}

fn scaled_gradient(setup: &Setup, theta: &[f64], jac: &DMatrix<f64>, r: &DVector<f64>) -> f64 {
    let rn = r.norm();
    if rn == 0.0 {
        return 0.0;
    }
    let g = jac.transpose() * r;
    let mut worst: f64 = 0.0;
    for k in 0..theta.len() {
        // descent direction is -g
        let blocked = (theta[k] <= setup.lo[k] && g[k] > 0.0) || (theta[k] >= setup.hi[k] && g[k] < 0.0);
        let cn = jac.column(k).norm();
        if blocked || cn == 0.0 {
            continue;
        }
        worst = worst.max(g[k].abs() / (rn * cn));
    }
    worst
}

/// Describes the normalized eigenvector as a readable linear combination.
fn combination(names: &[String], v: &DVector<f64>) -> String {
    let mut terms: Vec<(usize, f64)> = v.iter().copied().enumerate().filter(|(_, c)| c.abs() > 0.1).collect();
    terms.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()));
    let sign = if terms.first().is_some_and(|t| t.1 < 0.0) { -1.0 } else { 1.0 };
    let mut s = String::new();
    for (i, (k, c)) in terms.iter().enumerate() {
        let c = c * sign;
        if i > 0 {
            s.push_str(if c < 0.0 { " - " } else { " + " });
        } else if c < 0.0 {
            s.push('-');
        }
        s.push_str(&format!("{:.3}*{}", c.abs(), names[*k]));
    }
    s
}

/// Covariance of the free parameters, or the rank-deficiency error.
fn covariance(names: &[String], jac: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let a = jac.transpose() * jac;
    let p = a.nrows();
    for k in 0..p {
        if !(a[(k, k)] > 0.0) {
            return Err(Error::RankDeficient { combination: format!("{} (no effect on the model)", names[k]) });
        }
    }
    let d = DVector::from_iterator(p, (0..p).map(|k| a[(k, k)].sqrt()));
    let an = DMatrix::from_fn(p, p, |i, j| a[(i, j)] / (d[i] * d[j]));
    let eig = SymmetricEigen::new(an.clone());
    let (imin, &emin) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("at least one parameter");
    let emax = eig.eigenvalues.max();
    if !(emin > RANK_TOL * emax) {
        let v = eig.eigenvectors.column(imin).into_owned();
        return Err(Error::RankDeficient { combination: combination(names, &v) });
    }
    let inv = an.cholesky().ok_or_else(|| Error::RankDeficient {
        combination: combination(names, &eig.eigenvectors.column(imin).into_owned()),
    })?;
    let inv = inv.inverse();
    Ok(DMatrix::from_fn(p, p, |i, j| inv[(i, j)] / (d[i] * d[j])))
}

fn solve_damped(a: &DMatrix<f64>, g: &DVector<f64>, lambda: f64) -> Option<DVector<f64>> {
    let mut m = a.clone();
    for k in 0..m.nrows() {
        m[(k, k)] *= 1.0 + lambda;
    }
    m.cholesky().map(|c| -c.solve(g))
}

/// Minimizes sum(((y - f(x; theta)) / sigma)^2) over the free parameters.
///
/// Returns `converged = false` (not an error) when the iteration limit is
/// reached or the gradient did not vanish. Without sigma the covariance is
/// scaled by the residual variance chi^2 / (n - p).
pub fn fit(problem: &FitProblem, data: &DataSeries) -> Result<FitResult> {
    fit_with(problem, data, &FitOptions::default())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iterations: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { max_iterations: MAX_ITERATIONS }
    }
}

pub fn fit_with(problem: &FitProblem, data: &DataSeries, options: &FitOptions) -> Result<FitResult> {
    let setup = Setup::new(problem, data)?;
    let names = setup.names();
    let mut theta: Vec<f64> = setup.free_idx.iter().map(|&j| setup.template[j]).collect();
    let mut r = setup.residuals(&theta)?;
    let mut cost = r.norm_squared();
    let mut lambda = LAMBDA_START;
    let mut diag = FitDiagnostics {
        stop: StopReason::MaxIterations,
        gradient_norm: f64::NAN,
        last_relative_reduction: f64::NAN,
        accepted_steps: 0,
        rejected_steps: 0,
        lambda_trace: Vec::new(),
        weighted: data.weighted(),
        at_bound: Vec::new(),
    };
    let mut iterations = 0;
    let mut pending: Option<StopReason> = None;
    let mut small_reduction = false;

    let jac = loop {
        let jac = setup.jacobian(&theta)?;
        diag.gradient_norm = scaled_gradient(&setup, &theta, &jac, &r);
        if iterations == 0 {
            // a parameter without influence can never be determined
            covariance(&names, &jac).map(|_| ()).or_else(|e| match e {
                Error::RankDeficient { .. } => Err(e),
                _ => Ok(()),
            })?;
        }
        if cost == 0.0 {
            pending = Some(StopReason::ZeroResidual);
        } else if diag.gradient_norm < GRADIENT_TOL {
            pending = Some(StopReason::Gradient);
        } else if small_reduction && diag.gradient_norm <= STATIONARY_TOL {
            // a crawl along a narrow valley is not convergence
            pending = Some(StopReason::RelativeReduction);
        }
        small_reduction = false;
        if let Some(reason) = pending {
            diag.stop = reason;
            break jac;
        }
        if iterations >= options.max_iterations {
            diag.stop = StopReason::MaxIterations;
            break jac;
        }
        iterations += 1;

        let a = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        loop {
            let step = solve_damped(&a, &g, lambda);
            let mut trial = theta.clone();
            if let Some(delta) = &step {
                for (t, d) in trial.iter_mut().zip(delta.iter()) {
                    *t += d;
                }
                setup.project(&mut trial);
            }
            let outcome = if step.is_some() && trial != theta {
                setup.residuals(&trial).ok().map(|rt| {
                    let ct = rt.norm_squared();
                    (rt, ct)
                })
            } else {
                None
            };
            match outcome {
                Some((rt, ct)) if ct < cost => {
                    let reduction = (cost - ct) / cost;
                    diag.last_relative_reduction = reduction;
                    theta = trial;
                    r = rt;
                    cost = ct;
                    lambda = (lambda / 10.0).max(1e-12);
                    diag.accepted_steps += 1;
                    diag.lambda_trace.push(lambda);
                    if reduction < RELATIVE_REDUCTION_TOL {
                        small_reduction = true;
                    }
                    break;
                }
                _ => {
                    diag.rejected_steps += 1;
                    lambda *= 10.0;
                    if lambda > LAMBDA_MAX {
                        pending = Some(StopReason::Stalled);
                        break;
                    }
                }
            }
        }
    };

    diag.at_bound = theta
        .iter()
        .enumerate()
        .filter(|(k, v)| **v <= setup.lo[*k] || **v >= setup.hi[*k])
        .map(|(k, _)| names[k].clone())
        .collect();
    let n = data.len();
    let p = theta.len();
    let dof = n - p;
    let mut cov = covariance(&names, &jac)?;
    if !data.weighted() {
        cov *= cost / dof as f64;
    }
    let converged = diag.gradient_norm <= STATIONARY_TOL;
    if !converged {
        log::warn!(
            "fit of {} stopped ({:?}) with scaled gradient {:.2e}",
            problem.model,
            diag.stop,
            diag.gradient_norm
        );
    }
    Ok(build_result(&problem.model, &setup.full(&theta), setup.model, names, cov, cost, dof, converged, iterations, diag))
}

#[allow(clippy::too_many_arguments)]
fn build_result(
    model: &str,
    full: &[f64],
    def: &ModelDef,
    names: Vec<String>,
    cov: DMatrix<f64>,
    cost: f64,
    dof: usize,
    converged: bool,
    iterations: usize,
    diagnostics: FitDiagnostics,
) -> FitResult {
    let values = def.params.iter().zip(full).map(|(p, v)| (p.name.to_string(), *v)).collect();
    let std_errors = names.iter().enumerate().map(|(k, n)| (n.clone(), cov[(k, k)].sqrt())).collect();
    let covariance = (0..cov.nrows()).map(|i| cov.row(i).iter().copied().collect()).collect();
    FitResult {
        model: model.to_string(),
        values,
        std_errors,
        free: names,
        covariance,
        residual_norm: cost.sqrt(),
        dof,
        converged,
        iterations,
        diagnostics,
    }
}

/// Closed-form weighted straight line y = intercept + slope x.
pub fn fit_linear(data: &DataSeries) -> Result<FitResult> {
    data.validate(2)?;
    let n = data.len();
    let w: Vec<f64> = (0..n).map(|i| data.sigma_at(i).powi(-2)).collect();
    let sw: f64 = w.iter().sum();
    let xm = w.iter().zip(&data.x).map(|(w, x)| w * x).sum::<f64>() / sw;
    let ym = w.iter().zip(&data.y).map(|(w, y)| w * y).sum::<f64>() / sw;
    let sxx: f64 = (0..n).map(|i| w[i] * (data.x[i] - xm).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::RankDeficient {
            combination: "intercept + x*slope (all x equal)".into(),
        });
    }
    let sxy: f64 = (0..n).map(|i| w[i] * (data.x[i] - xm) * (data.y[i] - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let cost: f64 = (0..n)
        .map(|i| w[i] * (data.y[i] - intercept - slope * data.x[i]).powi(2))
        .sum();
    let dof = n - 2;
    let scale = if data.weighted() {
        1.0
    } else if dof > 0 {
        cost / dof as f64
    } else {
        f64::NAN
    };
    let var_slope = scale / sxx;
    let cov_is = -xm * var_slope;
    let var_intercept = scale / sw + xm * xm * var_slope;
    let cov = DMatrix::from_row_slice(2, 2, &[var_intercept, cov_is, cov_is, var_slope]);
    let diag = FitDiagnostics {
        stop: StopReason::ClosedForm,
        gradient_norm: 0.0,
        last_relative_reduction: 0.0,
        accepted_steps: 0,
        rejected_steps: 0,
        lambda_trace: Vec::new(),
        weighted: data.weighted(),
        at_bound: Vec::new(),
    };
    let def = lookup("linear")?;
    let names = vec!["intercept".to_string(), "slope".to_string()];
    Ok(build_result("linear", &[intercept, slope], def, names, cov, cost, dof, true, 0, diag))
}

/// Shapes accepted by [`fit_exponential`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExponentialForm {
    /// y = amplitude e^{-t/tau}
    Decay,
    /// y = n_r0 e^{-rate t}
    Rate,
    /// epsilon = 1 - (1 - eps0) e^{-t/tau_pop}
    Saturating,
}

impl ExponentialForm {
    pub fn model(self) -> &'static str {
        match self {
            ExponentialForm::Decay => "exponential",
            ExponentialForm::Rate => "retrieval_decay",
            ExponentialForm::Saturating => "blockade_decay",
        }
    }
}

/// Exponential fit started from a weighted straight line through log data.
pub fn fit_exponential(data: &DataSeries, form: ExponentialForm) -> Result<FitResult> {
    data.validate(3)?;
    let (mut lx, mut ly, mut ls) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..data.len() {
        let v = match form {
            ExponentialForm::Saturating => 1.0 - data.y[i],
            _ => data.y[i],
        };
        if v > 0.0 {
            lx.push(data.x[i]);
            ly.push(v.ln());
            ls.push(data.sigma_at(i) / v);
        }
    }
    if lx.len() < 2 {
        return Err(Error::FitSetup("fewer than two points usable for the log-domain start".into()));
    }
    let start = fit_linear(&DataSeries::with_sigma(lx, ly, ls))?;
    let (a, s) = (start.value("intercept").exp(), start.value("slope"));
    if !(s < 0.0) {
        return Err(Error::FitSetup(format!("data do not decay (log slope {s:.3e})")));
    }
    let problem = match form {
        ExponentialForm::Decay => FitProblem::new("exponential").free("amplitude", a).free("tau", -1.0 / s),
        ExponentialForm::Rate => FitProblem::new("retrieval_decay").free("n_r0", a).free("rate", -s),
        ExponentialForm::Saturating => {
            FitProblem::new("blockade_decay").free("eps0", (1.0 - a).min(1.0)).free("tau_pop", -1.0 / s)
        }
    };
    fit(&problem, data)
}

/// N_1 from a line rho(N_t) = rho_0 - (rho_0 / N_1) N_t, with its delta-method error.
pub fn depletion_scale(line: &FitResult) -> (f64, f64) {
    let (a, s) = (line.value("intercept"), line.value("slope"));
    let n1 = -a / s;
    let (da, ds) = (-1.0 / s, a / (s * s));
    let var = da * da * line.covariance_of("intercept", "intercept")
        + 2.0 * da * ds * line.covariance_of("intercept", "slope")
        + ds * ds * line.covariance_of("slope", "slope");
    (n1, var.sqrt())
}

/// Noise model for [`synthesize`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Noise {
    Absolute(f64),
    /// Standard deviation as a fraction of the model value.
    Relative(f64),
}

/// Model values at `x` plus seeded Gaussian noise; sigma holds the noise level.
pub fn synthesize(model: &str, params: &[(&str, f64)], x: &[f64], noise: Noise, seed: u64) -> Result<DataSeries> {
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    let def = lookup(model)?;
    let mut theta = vec![f64::NAN; def.params.len()];
    for (name, v) in params {
        let j = def
            .index_of(name)
            .ok_or_else(|| Error::FitSetup(format!("{model} has no parameter `{name}`")))?;
        theta[j] = *v;
    }
    if let Some(j) = theta.iter().position(|v| v.is_nan()) {
        return Err(Error::FitSetup(format!("no value for `{}`", def.params[j].name)));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let (mut y, mut sigma) = (Vec::with_capacity(x.len()), Vec::with_capacity(x.len()));
    for &xi in x {
        let f = def.eval(xi, &theta)?;
        let s = match noise {
            Noise::Absolute(s) => s,
            Noise::Relative(r) => r * f.abs(),
        };
        let z: f64 = StandardNormal.sample(&mut rng);
        y.push(f + s * z);
        sigma.push(s);
    }
    Ok(DataSeries::with_sigma(x.to_vec(), y, sigma))
}

/// n evenly spaced points from `a` to `b` inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    }
}
