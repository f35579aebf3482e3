use super::gaussian::{GaussianFit, RunningMoments};
use super::img::{ImgChain, WeightMode};
use super::{BandwidthSchedule, Method};
use crate::error::{Error, Result};
use crate::samples::Samples;

/// Streaming combiner: machines push draws as they are generated and the
/// combiner interleaves IMG steps against the reservoirs seen so far.
///
/// Once every machine has delivered at least one draw (two for the
/// semiparametric methods), every M-th push emits one combined sample.
#[derive(Debug)]
pub struct OnlineCombiner {
    machines: usize,
    dim: usize,
    schedule: BandwidthSchedule,
    mode: Option<WeightMode>,
    seed: u64,
    reservoirs: Vec<Samples>,
    moments: Vec<RunningMoments>,
    chain: Option<ImgChain>,
    pushes: u64,
    emitted: usize,
    ready: Samples,
    row: Vec<f64>,
}

impl OnlineCombiner {
    pub fn new(
        machines: usize,
        dim: usize,
        schedule: BandwidthSchedule,
        method: Method,
        seed: u64,
    ) -> Result<Self> {
        if machines == 0 || dim == 0 {
            return Err(Error::InvalidArgument("need M >= 1 and d >= 1".into()));
        }
        schedule.validate()?;
        let mode = match method {
            Method::Nonparametric => None,
            Method::Semiparametric => Some(WeightMode::Semiparametric),
            Method::SemiparametricW => Some(WeightMode::Nonparametric),
            other => {
                return Err(Error::InvalidArgument(format!(
                    "online combination supports the IMG methods, not {other}"
                )))
            }
        };
        Ok(Self {
            machines,
            dim,
            schedule,
            mode,
            seed,
            reservoirs: vec![Samples::empty(dim); machines],
            moments: vec![RunningMoments::new(dim); machines],
            chain: None,
            pushes: 0,
            emitted: 0,
            ready: Samples::empty(dim),
            row: vec![0.0; dim],
        })
    }

    /// Deliver the next draw of machine `m` (1-based).
    pub fn push(&mut self, m: usize, theta: &[f64]) -> Result<()> {
        if m == 0 || m > self.machines {
            return Err(Error::InvalidArgument(format!(
                "machine {m} outside 1..={}",
                self.machines
            )));
        }
        if theta.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: theta.len(),
            });
        }
        self.reservoirs[m - 1].push(theta)?;
        self.moments[m - 1].push(theta);
        self.pushes += 1;
        if self.pushes.is_multiple_of(self.machines as u64) && self.warm() {
            self.emit_one()?;
        }
        Ok(())
    }

    fn warm(&self) -> bool {
        let need = if self.mode.is_some() { 2 } else { 1 };
        self.reservoirs.iter().all(|r| r.len() >= need)
    }

    fn emit_one(&mut self) -> Result<()> {
        let fits = match self.mode {
            Some(_) => Some(self.fits()?),
            None => None,
        };
        match (self.chain.as_mut(), fits) {
            (None, None) => self.chain = Some(ImgChain::nonparametric(&self.reservoirs, self.seed)?),
            (None, Some(fits)) => {
                let mode = self.mode.expect("fits imply a mode");
                self.chain = Some(ImgChain::semiparametric(&self.reservoirs, &fits, mode, self.seed)?);
            }
            (Some(chain), Some(fits)) => chain.update_fits(&self.reservoirs, &fits)?,
            (Some(_), None) => {}
        }
        let t_min = self.reservoirs.iter().map(Samples::len).min().unwrap_or(1);
        let bw = self.schedule.resolve(self.dim, t_min, &self.reservoirs);
        let chain = self.chain.as_mut().expect("chain exists");
        self.emitted += 1;
        chain.set_bandwidth(bw.at(self.emitted))?;
        chain.scan(&self.reservoirs);
        chain.emit(&mut self.row);
        self.ready.push(&self.row)
    }

    /// Take every sample emitted since the last call.
    pub fn pop_ready(&mut self) -> Samples {
        std::mem::replace(&mut self.ready, Samples::empty(self.dim))
    }

    /// Keep stepping until the total output reaches the smallest reservoir
    /// size (the batch default), then return everything not yet popped.
    pub fn drain(&mut self) -> Result<Samples> {
        let target = self.reservoirs.iter().map(Samples::len).min().unwrap_or(0);
        if self.warm() {
            while self.emitted < target {
                self.emit_one()?;
            }
        }
        Ok(self.pop_ready())
    }

    /// Current per-machine Gaussian fits (requires two draws per machine).
    pub fn fits(&self) -> Result<Vec<GaussianFit>> {
        self.moments
            .iter()
            .enumerate()
            .map(|(m, mo)| {
                mo.fit().ok_or_else(|| {
                    Error::Empty(format!("machine {} has fewer than two draws", m + 1))
                })
            })
            .collect()
    }

    pub fn reservoirs(&self) -> &[Samples] {
        &self.reservoirs
    }

    pub fn emitted(&self) -> usize {
        self.emitted
    }

    pub fn weight_evals(&self) -> u64 {
        self.chain.as_ref().map_or(0, ImgChain::proposals)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::combine::fit_gaussian;

    fn draws(m: usize, n: usize) -> Samples {
        Samples::new(
            2,
            (0..2 * n)
                .map(|i| ((i * 31 + m * 17) % 23) as f64 * 0.1 - 1.0 + m as f64 * 0.05)
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn push_all_then_drain_matches_batch_count() {
        let sets: Vec<_> = (0..3).map(|m| draws(m, 40)).collect();
        for method in [Method::Nonparametric, Method::Semiparametric] {
            let mut oc = OnlineCombiner::new(3, 2, BandwidthSchedule::annealed(), method, 5).unwrap();
            for (m, s) in sets.iter().enumerate() {
                for r in s.rows() {
                    oc.push(m + 1, r).unwrap();
                }
            }
            let out = oc.drain().unwrap();
            assert_eq!(out.len(), 40);
            assert_eq!(oc.weight_evals(), 40 * 3);
        }
    }

    #[test]
    fn round_robin_emits_once_per_round() {
        let sets: Vec<_> = (0..2).map(|m| draws(m, 10)).collect();
        let mut oc =
            OnlineCombiner::new(2, 2, BandwidthSchedule::annealed(), Method::Nonparametric, 1).unwrap();
        let mut total = 0;
        for i in 0..10 {
            for (m, s) in sets.iter().enumerate() {
                oc.push(m + 1, s.row(i)).unwrap();
            }
            total += oc.pop_ready().len();
            assert_eq!(total, i + 1);
        }
        assert!(oc.drain().unwrap().is_empty());
    }

    #[test]
    fn running_fit_tracks_prefix() {
        let s = draws(0, 30);
        let mut oc =
            OnlineCombiner::new(1, 2, BandwidthSchedule::annealed(), Method::Semiparametric, 0).unwrap();
        for (k, r) in s.rows().enumerate() {
            oc.push(1, r).unwrap();
            if k >= 1 {
                let want = fit_gaussian(&s.head(k + 1)).unwrap();
                let got = &oc.fits().unwrap()[0];
                assert!((&want.cov - &got.cov).abs().max() < 1e-10);
                assert!(want.mean.iter().zip(&got.mean).all(|(a, b)| (a - b).abs() < 1e-10));
            }
        }
    }

    #[test]
    fn push_order_does_not_change_fits() {
        let sets: Vec<_> = (0..3).map(|m| draws(m, 15)).collect();
        let mk = || OnlineCombiner::new(3, 2, BandwidthSchedule::annealed(), Method::Semiparametric, 2).unwrap();
        let mut seq = mk();
        for (m, s) in sets.iter().enumerate() {
            for r in s.rows() {
                seq.push(m + 1, r).unwrap();
            }
        }
        let mut inter = mk();
        for i in 0..15 {
            for (m, s) in sets.iter().enumerate() {
                inter.push(m + 1, s.row(i)).unwrap();
            }
        }
        assert_eq!(seq.fits().unwrap(), inter.fits().unwrap());
        assert_eq!(seq.reservoirs(), inter.reservoirs());
    }

    #[test]
    fn bad_machine_index() {
        let mut oc =
            OnlineCombiner::new(2, 1, BandwidthSchedule::annealed(), Method::Nonparametric, 0).unwrap();
        assert!(oc.push(0, &[1.0]).is_err());
        assert!(oc.push(3, &[1.0]).is_err());
        assert!(oc.push(1, &[1.0, 2.0]).is_err());
        assert!(OnlineCombiner::new(2, 1, BandwidthSchedule::annealed(), Method::Parametric, 0).is_err());
    }
}
