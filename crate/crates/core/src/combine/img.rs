//! Independent Metropolis-within-Gibbs (IMG) sampling of the mixture
//! components of a density-product estimate.
//!
//! The product of M Gaussian-kernel density estimates is a mixture of
//! `T_1 x ... x T_M` Gaussians, one per index tuple `t = (t_1, ..., t_M)`.
//! The chain walks over tuples: it redraws one machine's index uniformly and
//! accepts with the ratio of component weights, then emits a draw from the
//! current component. All weights are handled as logarithms.

use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::gaussian::{fit_gaussian, gaussian_product, mvn_log_pdf, GaussianFit};
use super::{check_sets, BandwidthSchedule, CombineResult, Method};
use crate::error::{Error, Result};
use crate::samples::Samples;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// One 0-based sample index per machine.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ComponentIndex(pub Vec<usize>);

impl ComponentIndex {
    pub fn validate(&self, sets: &[Samples]) -> Result<()> {
        if self.0.len() != sets.len() {
            return Err(Error::DimensionMismatch {
                expected: sets.len(),
                got: self.0.len(),
            });
        }
        for (m, (&t, s)) in self.0.iter().zip(sets).enumerate() {
            if t >= s.len() {
                return Err(Error::IndexOutOfRange {
                    machine: m + 1,
                    index: t,
                    len: s.len(),
                });
            }
        }
        Ok(())
    }
}

/// Which component weights drive the semiparametric chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightMode {
    /// The full semiparametric weights `W`.
    Semiparametric,
    /// The nonparametric weights `w`, paired with semiparametric components.
    Nonparametric,
}

/// The bandwidth-independent part of a component: its sample mean, the
/// squared spread of its samples around that mean, and (semiparametric
/// only) the summed log-density of its samples under their machines' fits.
#[derive(Debug, Clone)]
struct Stats {
    mean: Vec<f64>,
    spread: f64,
    fit_ll: f64,
}

impl Stats {
    fn new(d: usize) -> Self {
        Self {
            mean: vec![0.0; d],
            spread: 0.0,
            fit_ll: 0.0,
        }
    }
}

fn nonparametric_log_w(spread: f64, h: f64, m: usize, d: usize) -> f64 {
    let h2 = h * h;
    -0.5 * (m * d) as f64 * (LN_2PI + h2.ln()) - spread / (2.0 * h2)
}

/// `theta_bar` and `log w` for the component `t`.
pub fn log_w(t: &ComponentIndex, sets: &[Samples], h: f64) -> Result<(Vec<f64>, f64)> {
    let d = check_sets(sets)?;
    t.validate(sets)?;
    if h.is_nan() || h <= 0.0 {
        return Err(Error::InvalidArgument(format!("bandwidth must be positive, got {h}")));
    }
    let mut stats = Stats::new(d);
    fill_stats(sets, &t.0, None, &mut stats);
    Ok((stats.mean.clone(), nonparametric_log_w(stats.spread, h, sets.len(), d)))
}

fn fill_stats(sets: &[Samples], idx: &[usize], semi: Option<&SemiState>, out: &mut Stats) {
    let m = sets.len() as f64;
    out.mean.iter_mut().for_each(|v| *v = 0.0);
    for (s, &t) in sets.iter().zip(idx) {
        for (acc, x) in out.mean.iter_mut().zip(s.row(t)) {
            *acc += x;
        }
    }
    out.mean.iter_mut().for_each(|v| *v /= m);
    let mut spread = 0.0;
    for (s, &t) in sets.iter().zip(idx) {
        for (x, c) in s.row(t).iter().zip(&out.mean) {
            spread += (x - c) * (x - c);
        }
    }
    out.spread = spread;
    out.fit_ll = match semi {
        Some(state) => state.fit_log_density(sets, idx),
        None => 0.0,
    };
}

/// Parametric ingredients of the semiparametric estimator plus the
/// bandwidth-dependent matrices for the current `h`.
#[derive(Debug, Clone)]
struct SemiState {
    mode: WeightMode,
    fit_chols: Vec<Cholesky<f64, Dyn>>,
    fit_means: Vec<Vec<f64>>,
    product_mean: DVector<f64>,
    product_cov: DMatrix<f64>,
    product_precision: DMatrix<f64>,
    /// `log N(theta^m_t | mu_m, Sigma_m)` for every stored sample.
    cache: Option<Vec<Vec<f64>>>,
    h: f64,
    gain: DMatrix<f64>,
    offset: DVector<f64>,
    emit_l: DMatrix<f64>,
    component_cov: DMatrix<f64>,
    marginal: Option<Cholesky<f64, Dyn>>,
}

impl SemiState {
    fn new(fits: &[GaussianFit], product: &GaussianFit, mode: WeightMode) -> Result<Self> {
        let d = product.dim();
        let fit_chols = fits
            .iter()
            .enumerate()
            .map(|(m, f)| f.cholesky().ok_or(Error::SingularCovariance { machine: m + 1 }))
            .collect::<Result<Vec<_>>>()?;
        let product_precision = product
            .precision()
            .ok_or(Error::SingularCovariance { machine: 0 })?;
        Ok(Self {
            mode,
            fit_chols,
            fit_means: fits.iter().map(|f| f.mean.clone()).collect(),
            product_mean: DVector::from_column_slice(&product.mean),
            product_cov: product.cov.clone(),
            product_precision,
            cache: None,
            h: f64::NAN,
            gain: DMatrix::zeros(d, d),
            offset: DVector::zeros(d),
            emit_l: DMatrix::zeros(d, d),
            component_cov: DMatrix::zeros(d, d),
            marginal: None,
        })
    }

    fn build_cache(&mut self, sets: &[Samples]) {
        let cache = sets
            .iter()
            .zip(self.fit_chols.iter().zip(&self.fit_means))
            .map(|(s, (c, mu))| s.rows().map(|r| mvn_log_pdf(r, mu, c)).collect())
            .collect();
        self.cache = Some(cache);
    }

    fn fit_log_density(&self, sets: &[Samples], idx: &[usize]) -> f64 {
        match &self.cache {
            Some(cache) => idx.iter().zip(cache).map(|(&t, c)| c[t]).sum(),
            None => sets
                .iter()
                .zip(idx)
                .zip(self.fit_chols.iter().zip(&self.fit_means))
                .map(|((s, &t), (c, mu))| mvn_log_pdf(s.row(t), mu, c))
                .sum(),
        }
    }

    fn set_bandwidth(&mut self, h: f64, machines: usize) -> Result<()> {
        if h == self.h {
            return Ok(());
        }
        let d = self.product_mean.len();
        let m = machines as f64;
        let kernel_precision = m / (h * h);
        let mut k = self.product_precision.clone();
        for i in 0..d {
            k[(i, i)] += kernel_precision;
        }
        let k_chol = Cholesky::new((&k + k.transpose()) * 0.5)
            .ok_or(Error::SingularCovariance { machine: 0 })?;
        let cov = k_chol.inverse();
        let cov = (&cov + cov.transpose()) * 0.5;
        self.gain = &cov * kernel_precision;
        self.offset = &cov * (&self.product_precision * &self.product_mean);
        self.emit_l = Cholesky::new(cov.clone())
            .ok_or(Error::SingularCovariance { machine: 0 })?
            .l();
        self.component_cov = cov;
        let mut marginal = self.product_cov.clone();
        for i in 0..d {
            marginal[(i, i)] += h * h / m;
        }
        self.marginal = Some(
            Cholesky::new(marginal).ok_or(Error::SingularCovariance { machine: 0 })?,
        );
        self.h = h;
        Ok(())
    }

    fn component_mean(&self, theta_bar: &[f64]) -> DVector<f64> {
        &self.gain * DVector::from_column_slice(theta_bar) + &self.offset
    }

    fn log_big_w(&self, stats: &Stats, machines: usize) -> f64 {
        let d = self.product_mean.len();
        let marginal = self.marginal.as_ref().expect("bandwidth set before weighting");
        nonparametric_log_w(stats.spread, self.h, machines, d)
            + mvn_log_pdf(&stats.mean, self.product_mean.as_slice(), marginal)
            - stats.fit_ll
    }
}

/// Mean, covariance and log `W` of one semiparametric mixture component.
#[derive(Debug, Clone, PartialEq)]
pub struct SemiparametricComponent {
    pub mean: Vec<f64>,
    pub cov: DMatrix<f64>,
    pub log_weight: f64,
}

/// Parameters of component `t` of the semiparametric product estimate, given
/// the machines' fits and their parametric product.
pub fn semiparametric_params(
    t: &ComponentIndex,
    sets: &[Samples],
    h: f64,
    fits: &[GaussianFit],
    product: &GaussianFit,
) -> Result<SemiparametricComponent> {
    let d = check_sets(sets)?;
    t.validate(sets)?;
    if h.is_nan() || h <= 0.0 {
        return Err(Error::InvalidArgument(format!("bandwidth must be positive, got {h}")));
    }
    if fits.len() != sets.len() {
        return Err(Error::DimensionMismatch {
            expected: sets.len(),
            got: fits.len(),
        });
    }
    let mut state = SemiState::new(fits, product, WeightMode::Semiparametric)?;
    state.set_bandwidth(h, sets.len())?;
    let mut stats = Stats::new(d);
    fill_stats(sets, &t.0, Some(&state), &mut stats);
    Ok(SemiparametricComponent {
        mean: state.component_mean(&stats.mean).iter().copied().collect(),
        cov: state.component_cov.clone(),
        log_weight: state.log_big_w(&stats, sets.len()),
    })
}

/// The IMG Markov chain over component tuples. Sample sets are passed into
/// every call so that they may grow between calls (online combination).
#[derive(Debug, Clone)]
pub struct ImgChain {
    dim: usize,
    machines: usize,
    semi: Option<SemiState>,
    state: Vec<usize>,
    current: Stats,
    scratch: Stats,
    proposal: Vec<usize>,
    h: f64,
    current_log_weight: f64,
    rng: ChaCha8Rng,
    proposals: u64,
    accepted: u64,
}

impl ImgChain {
    /// Chain on the nonparametric product. The initial tuple is drawn
    /// uniformly and independently per machine.
    pub fn nonparametric(sets: &[Samples], seed: u64) -> Result<Self> {
        Self::build(sets, None, seed)
    }

    /// Chain on the semiparametric product with the given fits.
    pub fn semiparametric(
        sets: &[Samples],
        fits: &[GaussianFit],
        mode: WeightMode,
        seed: u64,
    ) -> Result<Self> {
        if fits.len() != sets.len() {
            return Err(Error::DimensionMismatch {
                expected: sets.len(),
                got: fits.len(),
            });
        }
        let product = gaussian_product(fits)?;
        let semi = SemiState::new(fits, &product, mode)?;
        Self::build(sets, Some(semi), seed)
    }

    fn build(sets: &[Samples], semi: Option<SemiState>, seed: u64) -> Result<Self> {
        let dim = check_sets(sets)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let state: Vec<usize> = sets.iter().map(|s| rng.random_range(0..s.len())).collect();
        let mut current = Stats::new(dim);
        fill_stats(sets, &state, semi.as_ref(), &mut current);
        Ok(Self {
            dim,
            machines: sets.len(),
            semi,
            proposal: state.clone(),
            state,
            current,
            scratch: Stats::new(dim),
            h: f64::NAN,
            current_log_weight: f64::NAN,
            rng,
            proposals: 0,
            accepted: 0,
        })
    }

    /// Precompute the per-sample fit densities (batch use; the sets must not
    /// change afterwards).
    fn cache_fit_densities(&mut self, sets: &[Samples]) {
        if let Some(semi) = self.semi.as_mut() {
            semi.build_cache(sets);
        }
    }

    /// Replace the parametric fits (online use).
    pub fn update_fits(&mut self, sets: &[Samples], fits: &[GaussianFit]) -> Result<()> {
        let Some(old) = self.semi.as_ref() else {
            return Ok(());
        };
        let product = gaussian_product(fits)?;
        let mut semi = SemiState::new(fits, &product, old.mode)?;
        if !self.h.is_nan() {
            semi.set_bandwidth(self.h, self.machines)?;
        }
        self.semi = Some(semi);
        fill_stats(sets, &self.state, self.semi.as_ref(), &mut self.current);
        self.refresh_current();
        Ok(())
    }

    fn log_weight(&self, stats: &Stats) -> f64 {
        match &self.semi {
            Some(s) if s.mode == WeightMode::Semiparametric => s.log_big_w(stats, self.machines),
            _ => nonparametric_log_w(stats.spread, self.h, self.machines, self.dim),
        }
    }

    fn refresh_current(&mut self) {
        if !self.h.is_nan() {
            self.current_log_weight = self.log_weight(&self.current);
        }
    }

    pub fn set_bandwidth(&mut self, h: f64) -> Result<()> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidArgument(format!("bandwidth must be positive, got {h}")));
        }
        if let Some(semi) = self.semi.as_mut() {
            semi.set_bandwidth(h, self.machines)?;
        }
        self.h = h;
        self.refresh_current();
        Ok(())
    }

    /// Redraw machine `m`'s index uniformly and accept by weight ratio.
    /// Costs one weight evaluation.
    pub fn propose(&mut self, sets: &[Samples], m: usize) -> bool {
        debug_assert!(!self.h.is_nan(), "set_bandwidth before proposing");
        self.proposal.copy_from_slice(&self.state);
        self.proposal[m] = self.rng.random_range(0..sets[m].len());
        let u: f64 = self.rng.random();
        fill_stats(sets, &self.proposal, self.semi.as_ref(), &mut self.scratch);
        let lw = self.log_weight(&self.scratch);
        self.proposals += 1;
        let accept = self.current_log_weight == f64::NEG_INFINITY
            || u < (lw - self.current_log_weight).exp();
        if accept {
            std::mem::swap(&mut self.state, &mut self.proposal);
            std::mem::swap(&mut self.current, &mut self.scratch);
            self.current_log_weight = lw;
            self.accepted += 1;
        }
        accept
    }

    /// One systematic scan: a proposal for each machine in order.
    pub fn scan(&mut self, sets: &[Samples]) {
        for m in 0..self.machines {
            self.propose(sets, m);
        }
    }

    /// Draw a point from the current component into `out`.
    pub fn emit(&mut self, out: &mut [f64]) {
        match &self.semi {
            None => {
                let sd = self.h / (self.machines as f64).sqrt();
                for (o, c) in out.iter_mut().zip(&self.current.mean) {
                    let z: f64 = self.rng.sample(StandardNormal);
                    *o = c + sd * z;
                }
            }
            Some(semi) => {
                let z = DVector::from_fn(self.dim, |_, _| self.rng.sample(StandardNormal));
                let x = semi.component_mean(&self.current.mean) + &semi.emit_l * z;
                out.copy_from_slice(x.as_slice());
            }
        }
    }

    pub fn state(&self) -> &[usize] {
        &self.state
    }

    pub fn current_log_weight(&self) -> f64 {
        self.current_log_weight
    }

    pub fn proposals(&self) -> u64 {
        self.proposals
    }

    pub fn accepted(&self) -> u64 {
        self.accepted
    }

    pub fn machines(&self) -> usize {
        self.machines
    }

    fn ops_per_eval(&self) -> u64 {
        let base = 2 * (self.machines * self.dim) as u64;
        match &self.semi {
            Some(s) if s.cache.is_none() => base + (self.machines * self.dim * self.dim) as u64,
            Some(_) => base + (self.machines + self.dim * self.dim) as u64,
            None => base,
        }
    }
}

fn run_chain(
    mut chain: ImgChain,
    sets: &[Samples],
    t_out: usize,
    schedule: &BandwidthSchedule,
    method: Method,
    start: Instant,
) -> Result<CombineResult> {
    let d = chain.dim;
    let t_min = sets.iter().map(Samples::len).min().unwrap_or(1);
    let bw = schedule.resolve(d, t_min, sets);
    let mut out = Samples::with_capacity(d, t_out);
    let mut row = vec![0.0; d];
    for i in 1..=t_out {
        chain.set_bandwidth(bw.at(i))?;
        chain.scan(sets);
        chain.emit(&mut row);
        out.push(&row)?;
    }
    let evals = chain.proposals();
    let emit_ops = match &chain.semi {
        Some(_) => (d * d) as u64,
        None => d as u64,
    };
    Ok(CombineResult {
        samples: out,
        method,
        accept_rate: Some(if evals == 0 {
            0.0
        } else {
            chain.accepted() as f64 / evals as f64
        }),
        weight_evals: evals,
        ops: evals * chain.ops_per_eval() + t_out as u64 * emit_ops,
        wall_time: start.elapsed().as_secs_f64(),
        origins: None,
    })
}

/// Sample `t_out` points from the nonparametric density-product estimate.
pub fn img_combine_nonparametric(
    sets: &[Samples],
    t_out: usize,
    schedule: &BandwidthSchedule,
    seed: u64,
) -> Result<CombineResult> {
    let start = Instant::now();
    schedule.validate()?;
    let chain = ImgChain::nonparametric(sets, seed)?;
    run_chain(chain, sets, t_out, schedule, Method::Nonparametric, start)
}

/// Sample `t_out` points from the semiparametric density-product estimate,
/// weighting components by `W` or by the nonparametric `w`.
pub fn img_combine_semiparametric(
    sets: &[Samples],
    t_out: usize,
    schedule: &BandwidthSchedule,
    seed: u64,
    mode: WeightMode,
) -> Result<CombineResult> {
    let start = Instant::now();
    schedule.validate()?;
    check_sets(sets)?;
    let fits = sets.iter().map(fit_gaussian).collect::<Result<Vec<_>>>()?;
    let mut chain = ImgChain::semiparametric(sets, &fits, mode, seed)?;
    chain.cache_fit_densities(sets);
    let method = match mode {
        WeightMode::Semiparametric => Method::Semiparametric,
        WeightMode::Nonparametric => Method::SemiparametricW,
    };
    run_chain(chain, sets, t_out, schedule, method, start)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn set1(xs: &[f64]) -> Samples {
        Samples::new(1, xs.to_vec()).unwrap()
    }

    fn normal_pdf(x: f64, mu: f64, var: f64) -> f64 {
        (-(x - mu) * (x - mu) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
    }

    #[test]
    fn single_machine_weight_is_kernel_peak() {
        let sets = [Samples::new(2, vec![0.3, -1.0, 5.0, 2.0]).unwrap()];
        for t in 0..2 {
            let (bar, lw) = log_w(&ComponentIndex(vec![t]), &sets, 0.7).unwrap();
            assert_eq!(bar, sets[0].row(t));
            let want = -(2.0 / 2.0) * (2.0 * PI * 0.49f64).ln();
            assert!((lw - want).abs() < 1e-13);
        }
    }

    #[test]
    fn two_machine_weight() {
        let sets = [set1(&[0.0]), set1(&[2.0])];
        let (bar, lw) = log_w(&ComponentIndex(vec![0, 0]), &sets, 1.0).unwrap();
        assert_eq!(bar, vec![1.0]);
        let direct = normal_pdf(0.0, 1.0, 1.0) * normal_pdf(2.0, 1.0, 1.0);
        assert!((lw.exp() - direct).abs() < 1e-15);
        assert!((lw.exp() - (-1.0f64).exp() / (2.0 * PI)).abs() < 1e-15);
        assert!((lw.exp() - 0.05855).abs() < 1e-5);
    }

    #[test]
    fn coincident_samples_maximize_weight() {
        let sets = [set1(&[1.5, 0.0, 3.0]), set1(&[1.5, 2.0, -1.0])];
        let h = 0.8;
        let (_, best) = log_w(&ComponentIndex(vec![0, 0]), &sets, h).unwrap();
        assert!((best.exp() - 1.0 / (2.0 * PI * h * h)).abs() < 1e-14);
        for a in 0..3 {
            for b in 0..3 {
                let (_, lw) = log_w(&ComponentIndex(vec![a, b]), &sets, h).unwrap();
                assert!(lw <= best);
            }
        }
    }

    #[test]
    fn out_of_range_index() {
        let sets = [set1(&[0.0, 1.0]), set1(&[2.0])];
        assert!(matches!(
            log_w(&ComponentIndex(vec![0, 1]), &sets, 1.0),
            Err(Error::IndexOutOfRange { machine: 2, .. })
        ));
    }

    #[test]
    fn log_weights_stay_finite_in_high_dimension() {
        let d = 200;
        let sets: Vec<Samples> = (0..64)
            .map(|m| Samples::new(d, (0..d).map(|j| ((m * d + j) as f64).sin() * 50.0).collect()).unwrap())
            .collect();
        let t = ComponentIndex(vec![0; 64]);
        for h in [1e-3, 1e-1, 1.0, 1e3] {
            let (_, lw) = log_w(&t, &sets, h).unwrap();
            assert!(lw.is_finite(), "h = {h}: {lw}");
        }
    }

    fn unit_fit(mean: f64, var: f64) -> GaussianFit {
        GaussianFit {
            mean: vec![mean],
            cov: DMatrix::from_element(1, 1, var),
            count: 10,
        }
    }

    #[test]
    fn semiparametric_worked_example() {
        let sets = [set1(&[0.5]), set1(&[1.5])];
        let product = unit_fit(1.0, 0.5);
        let fits = [unit_fit(0.0, 1.0), unit_fit(2.0, 1.0)];
        let c = semiparametric_params(&ComponentIndex(vec![0, 0]), &sets, 1.0, &fits, &product)
            .unwrap();
        assert!((c.cov[(0, 0)] - 0.25).abs() < 1e-14);
        assert!((c.mean[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn semiparametric_small_bandwidth_limit() {
        let sets = [set1(&[0.2]), set1(&[0.9])];
        let fits = [unit_fit(0.0, 1.0), unit_fit(1.0, 2.0)];
        let product = gaussian_product(&fits).unwrap();
        let h = 1e-4;
        let c = semiparametric_params(&ComponentIndex(vec![0, 0]), &sets, h, &fits, &product)
            .unwrap();
        let limit_var = h * h / 2.0;
        assert!(((c.cov[(0, 0)] - limit_var) / limit_var).abs() < 1e-3);
        assert!(((c.mean[0] - 0.55) / 0.55).abs() < 1e-3);
    }

    #[test]
    fn flat_fit_reduces_to_nonparametric_weights() {
        let sets = [set1(&[0.2, -0.4, 1.0]), set1(&[0.9, 0.1, -2.0])];
        let fits = [unit_fit(0.0, 2e8), unit_fit(0.0, 2e8)];
        let product = gaussian_product(&fits).unwrap();
        let h = 0.5;
        let mut offsets = Vec::new();
        for a in 0..3 {
            for b in 0..3 {
                let t = ComponentIndex(vec![a, b]);
                let c = semiparametric_params(&t, &sets, h, &fits, &product).unwrap();
                let (bar, lw) = log_w(&t, &sets, h).unwrap();
                assert!((c.mean[0] - bar[0]).abs() < 1e-6);
                offsets.push(c.log_weight - lw);
            }
        }
        let spread = offsets.iter().cloned().fold(f64::MIN, f64::max)
            - offsets.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread < 1e-6, "{spread}");
    }

    /// Expand the product of semiparametric estimators by brute force and
    /// compare with the weighted mixture of components at several points.
    #[test]
    fn semiparametric_mixture_matches_product_of_estimators() {
        let sets = [set1(&[0.1, 0.8, -0.5]), set1(&[1.2, 0.3, 0.0])];
        let fits = [unit_fit(0.1, 0.6), unit_fit(0.5, 0.4)];
        let product = gaussian_product(&fits).unwrap();
        let h = 0.6;
        let estimator = |m: usize, x: f64| -> f64 {
            let (mu, var) = (fits[m].mean[0], fits[m].cov[(0, 0)]);
            sets[m]
                .rows()
                .map(|r| {
                    normal_pdf(x, r[0], h * h) * normal_pdf(x, mu, var) / normal_pdf(r[0], mu, var)
                })
                .sum::<f64>()
                / 3.0
        };
        let mut ratios = Vec::new();
        for x in [-1.0, -0.2, 0.4, 0.9, 1.7] {
            let direct = estimator(0, x) * estimator(1, x);
            let mut mixture = 0.0;
            for a in 0..3 {
                for b in 0..3 {
                    let c = semiparametric_params(&ComponentIndex(vec![a, b]), &sets, h, &fits, &product)
                        .unwrap();
                    mixture += c.log_weight.exp() * normal_pdf(x, c.mean[0], c.cov[(0, 0)]);
                }
            }
            ratios.push(direct / mixture);
        }
        for r in &ratios {
            assert!((r / ratios[0] - 1.0).abs() < 1e-10, "{ratios:?}");
        }
    }

    #[test]
    fn single_machine_accepts_everything() {
        let sets = [set1(&[0.0, 1.0, 2.0, 5.0])];
        let out = img_combine_nonparametric(&sets, 500, &BandwidthSchedule::annealed(), 4).unwrap();
        assert_eq!(out.accept_rate, Some(1.0));
        assert_eq!(out.weight_evals, 500);
    }

    #[test]
    fn weight_evaluations_are_t_out_times_m() {
        let sets: Vec<Samples> = (0..5).map(|m| set1(&[m as f64, 0.5, -0.5])).collect();
        let out = img_combine_nonparametric(&sets, 123, &BandwidthSchedule::annealed(), 1).unwrap();
        assert_eq!(out.weight_evals, 123 * 5);
        assert_eq!(out.samples.len(), 123);
    }

    #[test]
    fn deterministic_given_seed() {
        let sets = [set1(&[0.0, 1.0, 2.0]), set1(&[0.5, 1.5, -1.0])];
        let s = BandwidthSchedule::annealed();
        let a = img_combine_semiparametric(&sets, 200, &s, 7, WeightMode::Semiparametric).unwrap();
        let b = img_combine_semiparametric(&sets, 200, &s, 7, WeightMode::Semiparametric).unwrap();
        assert_eq!(a.samples, b.samples);
        let c = img_combine_nonparametric(&sets, 200, &s, 7).unwrap();
        let d = img_combine_nonparametric(&sets, 200, &s, 7).unwrap();
        assert_eq!(c.samples, d.samples);
    }
}
