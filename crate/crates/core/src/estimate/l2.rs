//! L2 distance between the densities behind two sample sets.
//!
//! Both sets are smoothed with Silverman-bandwidth Gaussian KDEs. For d <= 2
//! the squared difference is integrated on a grid; otherwise the three
//! mixture inner products are computed in closed form.

use std::cmp::Ordering;
use std::f64::consts::PI;

use rayon::prelude::*;

use super::kde::{linspace, silverman_bandwidths, trapezoid, GridSpec, Kde};
use crate::error::{Error, Result};
use crate::samples::Samples;

/// Grid points per dimension for the quadrature path.
pub const GRID_POINTS: usize = 512;
/// Grid margin beyond the data, in bandwidths.
const GRID_MARGIN: f64 = 3.0;
/// Kernels are truncated at this many bandwidths on the grid.
const KERNEL_RADIUS: f64 = 6.0;
const CHUNK: usize = 1024;

pub fn l2_distance(p: &Samples, q: &Samples, grid: GridSpec) -> Result<f64> {
    if p.is_empty() || q.is_empty() {
        return Err(Error::Empty("L2 distance needs two nonempty sets".into()));
    }
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            got: q.dim(),
        });
    }
    let d = p.dim();
    let kp = Kde::silverman(p.clone())?;
    let kq = Kde::silverman(q.clone())?;
    match grid {
        GridSpec::Auto if d <= 2 => grid_l2(&kp, &kq, GRID_POINTS),
        GridSpec::Grid(n) if d <= 2 => grid_l2(&kp, &kq, n.max(3)),
        GridSpec::Grid(_) => Err(Error::InvalidArgument(format!(
            "grid quadrature is limited to d <= 2 (got d = {d})"
        ))),
        _ => Ok(analytic_l2(&kp, &kq)),
    }
}

/// Silverman bandwidths used for a set, exposed for metadata.
pub fn evaluation_bandwidths(samples: &Samples) -> Vec<f64> {
    silverman_bandwidths(samples)
}

fn grid_l2(kp: &Kde, kq: &Kde, n: usize) -> Result<f64> {
    let d = kp.dim();
    let axes: Vec<Vec<f64>> = (0..d)
        .map(|j| {
            let bounds = |k: &Kde| {
                let h = k.bandwidth()[j];
                k.samples().rows().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                    (lo.min(r[j] - GRID_MARGIN * h), hi.max(r[j] + GRID_MARGIN * h))
                })
            };
            let (a, b) = (bounds(kp), bounds(kq));
            linspace(a.0.min(b.0), a.1.max(b.1), n)
        })
        .collect();
    let fp = grid_density(kp, &axes);
    let fq = grid_density(kq, &axes);
    let sq: Vec<f64> = fp.iter().zip(&fq).map(|(a, b)| (a - b) * (a - b)).collect();
    let step0 = axes[0][1] - axes[0][0];
    let integral = if d == 1 {
        trapezoid(&sq, step0)
    } else {
        let step1 = axes[1][1] - axes[1][0];
        let rows: Vec<f64> = sq.chunks_exact(n).map(|row| trapezoid(row, step1)).collect();
        trapezoid(&rows, step0)
    };
    Ok(integral.max(0.0).sqrt())
}

/// KDE values on the tensor grid (row-major, first axis slowest), with
/// kernels truncated at `KERNEL_RADIUS` bandwidths.
fn grid_density(k: &Kde, axes: &[Vec<f64>]) -> Vec<f64> {
    let d = axes.len();
    let sizes: Vec<usize> = axes.iter().map(Vec::len).collect();
    let total: usize = sizes.iter().product();
    let n = k.samples().len();
    let norm: f64 = k
        .bandwidth()
        .iter()
        .map(|h| 1.0 / ((2.0 * PI).sqrt() * h))
        .product::<f64>()
        / n as f64;

    let window = |axis: &[f64], center: f64, h: f64| -> (usize, Vec<f64>) {
        let lo = axis[0];
        let step = axis[1] - axis[0];
        let first = (((center - KERNEL_RADIUS * h - lo) / step).ceil().max(0.0)) as usize;
        let last = ((((center + KERNEL_RADIUS * h - lo) / step).floor()) as isize)
            .min(axis.len() as isize - 1);
        if last < first as isize {
            return (first, Vec::new());
        }
        let vals = (first..=last as usize)
            .map(|i| {
                let z = (axis[i] - center) / h;
                (-0.5 * z * z).exp()
            })
            .collect();
        (first, vals)
    };

    let rows: Vec<&[f64]> = k.samples().rows().collect();
    let partials: Vec<Vec<f64>> = rows
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = vec![0.0; total];
            for r in chunk {
                let (s0, w0) = window(&axes[0], r[0], k.bandwidth()[0]);
                if d == 1 {
                    for (i, v) in w0.iter().enumerate() {
                        acc[s0 + i] += v;
                    }
                } else {
                    let (s1, w1) = window(&axes[1], r[1], k.bandwidth()[1]);
                    for (i, a) in w0.iter().enumerate() {
                        let base = (s0 + i) * sizes[1] + s1;
                        for (j, b) in w1.iter().enumerate() {
                            acc[base + j] += a * b;
                        }
                    }
                }
            }
            acc
        })
        .collect();
    let mut out = vec![0.0; total];
    for part in partials {
        for (o, v) in out.iter_mut().zip(part) {
            *o += v;
        }
    }
    out.iter_mut().for_each(|v| *v *= norm);
    out
}

/// `integral p q` for two diagonal-bandwidth Gaussian KDEs.
fn mixture_inner(a: &Kde, b: &Kde) -> f64 {
    let var: Vec<f64> = a
        .bandwidth()
        .iter()
        .zip(b.bandwidth())
        .map(|(x, y)| x * x + y * y)
        .collect();
    let norm: f64 = var.iter().map(|v| 1.0 / (2.0 * PI * v).sqrt()).product();
    let rows_a: Vec<&[f64]> = a.samples().rows().collect();
    let partials: Vec<f64> = rows_a
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut s = 0.0;
            for ra in chunk {
                for rb in b.samples().rows() {
                    let mut q = 0.0;
                    for ((x, y), v) in ra.iter().zip(rb).zip(&var) {
                        q += (x - y) * (x - y) / v;
                    }
                    s += (-0.5 * q).exp();
                }
            }
            s
        })
        .collect();
    partials.iter().sum::<f64>() * norm / (a.samples().len() * b.samples().len()) as f64
}

/// Order sets canonically so the cross term is summed identically for
/// `(p, q)` and `(q, p)`.
fn canonical_order(a: &Samples, b: &Samples) -> Ordering {
    a.len().cmp(&b.len()).then_with(|| {
        a.as_slice()
            .iter()
            .zip(b.as_slice())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    })
}

fn analytic_l2(kp: &Kde, kq: &Kde) -> f64 {
    let (a, b) = if canonical_order(kp.samples(), kq.samples()) == Ordering::Greater {
        (kq, kp)
    } else {
        (kp, kq)
    };
    let aa = mixture_inner(a, a);
    let bb = mixture_inner(b, b);
    let ab = mixture_inner(a, b);
    (aa + bb - 2.0 * ab).max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn normal_set(n: usize, mean: f64, seed: u64) -> Samples {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = Normal::new(mean, 1.0).unwrap();
        Samples::new(1, (0..n).map(|_| dist.sample(&mut rng)).collect()).unwrap()
    }

    #[test]
    fn identical_sets_are_exactly_zero() {
        let p = normal_set(500, 0.0, 1);
        assert_eq!(l2_distance(&p, &p, GridSpec::Auto).unwrap(), 0.0);
        assert_eq!(l2_distance(&p, &p, GridSpec::Analytic).unwrap(), 0.0);
    }

    #[test]
    fn symmetric_on_both_paths() {
        let p = normal_set(400, 0.0, 1);
        let q = normal_set(300, 0.5, 2);
        for g in [GridSpec::Auto, GridSpec::Analytic] {
            assert_eq!(l2_distance(&p, &q, g).unwrap(), l2_distance(&q, &p, g).unwrap());
        }
    }

    #[test]
    fn disjoint_unit_normals() {
        let p = normal_set(50_000, 0.0, 3);
        let q = normal_set(50_000, 5.0, 4);
        let want = (2.0 * (1.0 / (2.0 * PI.sqrt()))).sqrt();
        let got = l2_distance(&p, &q, GridSpec::Auto).unwrap();
        assert!(((got - want) / want).abs() < 0.05, "{got} vs {want}");
    }

    #[test]
    fn grid_and_analytic_agree() {
        let p = normal_set(2_000, 0.0, 5);
        let q = normal_set(1_500, 0.7, 6);
        let g = l2_distance(&p, &q, GridSpec::Auto).unwrap();
        let a = l2_distance(&p, &q, GridSpec::Analytic).unwrap();
        assert!((g - a).abs() < 1e-3, "{g} vs {a}");
    }

    #[test]
    fn forced_grid_in_high_dimension_is_an_error() {
        let p = Samples::new(3, vec![0.0; 9]).unwrap();
        assert!(l2_distance(&p, &p, GridSpec::Grid(64)).is_err());
        assert_eq!(l2_distance(&p, &p, GridSpec::Auto).unwrap(), 0.0);
    }
}
