//! The vanilla minimax value on finite sample spaces.
//!
//! Distributions are point masses on finitely many atoms, so every identity
//! (optimal discriminator, Jensen-Shannon form of the value, empirical
//! discriminator for finite samples) can be checked exactly. Terms with zero
//! mass are dropped (`0 · log 0 = 0`), and discriminators score `1/2` off
//! their atoms.

use std::cmp::Ordering;

use crate::error::{Error, Result};

const MASS_TOL: f64 = 1e-12;

fn sorted_unique(mut xs: Vec<f64>) -> Vec<f64> {
    xs.sort_by(f64::total_cmp);
    xs.dedup_by(|a, b| a.total_cmp(b) == Ordering::Equal);
    xs
}

fn find(points: &[f64], x: f64) -> Option<usize> {
    points.binary_search_by(|p| p.total_cmp(&x)).ok()
}

/// Probability masses on a finite ordered support.
#[derive(Clone, Debug, PartialEq)]
pub struct GridDensity {
    points: Vec<f64>,
    mass: Vec<f64>,
}

impl GridDensity {
    pub fn new(points: Vec<f64>, mass: Vec<f64>) -> Result<Self> {
        if points.len() != mass.len() {
            return Err(Error::shape("grid masses", points.len(), mass.len()));
        }
        if points.is_empty() {
            return Err(Error::Empty("support"));
        }
        if points.windows(2).any(|w| w[0].total_cmp(&w[1]) != Ordering::Less) {
            return Err(Error::invalid("support points must be strictly increasing"));
        }
        if mass.iter().any(|&m| !(m >= 0.0) || !m.is_finite()) {
            return Err(Error::invalid("masses must be finite and nonnegative"));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::invalid(format!("masses sum to {total}, not 1")));
        }
        Ok(GridDensity { points, mass })
    }

    /// `(1/n) Σ δ_{x_i}`.
    pub fn empirical(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Empty("sample list"));
        }
        let points = sorted_unique(samples.to_vec());
        let n = samples.len() as f64;
        let mut counts = vec![0usize; points.len()];
        for &s in samples {
            counts[find(&points, s).expect("sample is an atom")] += 1;
        }
        let mass = counts.into_iter().map(|c| c as f64 / n).collect();
        Ok(GridDensity { points, mass })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    pub fn mass_at(&self, x: f64) -> f64 {
        find(&self.points, x).map_or(0.0, |i| self.mass[i])
    }
}

fn union_support(a: &GridDensity, b: &GridDensity) -> Vec<f64> {
    sorted_unique(a.points.iter().chain(&b.points).copied().collect())
}

/// Scores in `[0, 1]` on a finite set of atoms; `1/2` elsewhere.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminatorTable {
    points: Vec<f64>,
    scores: Vec<f64>,
}

impl DiscriminatorTable {
    pub fn new(points: Vec<f64>, scores: Vec<f64>) -> Result<Self> {
        if points.len() != scores.len() {
            return Err(Error::shape("discriminator scores", points.len(), scores.len()));
        }
        if scores.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(Error::invalid("discriminator scores must lie in [0, 1]"));
        }
        let mut pairs: Vec<(f64, f64)> = points.into_iter().zip(scores).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        if pairs.windows(2).any(|w| w[0].0.total_cmp(&w[1].0) == Ordering::Equal) {
            return Err(Error::invalid("duplicate discriminator atom"));
        }
        let (points, scores) = pairs.into_iter().unzip();
        Ok(DiscriminatorTable { points, scores })
    }

    /// The constant discriminator `d ≡ c` on `points`.
    pub fn constant(points: &[f64], c: f64) -> Result<Self> {
        Self::new(points.to_vec(), vec![c; points.len()])
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn score(&self, x: f64) -> f64 {
        find(&self.points, x).map_or(0.5, |i| self.scores[i])
    }
}

/// `Σ p_r(x) log d(x) + Σ p_g(x) log(1 − d(x))`.
pub fn gan_value(d: &DiscriminatorTable, pr: &GridDensity, pg: &GridDensity) -> Result<f64> {
    let mut v = 0.0;
    for (&x, &m) in pr.points.iter().zip(&pr.mass) {
        if m > 0.0 {
            let s = d.score(x);
            if s <= 0.0 {
                return Err(Error::DegenerateScore { score: s });
            }
            v += m * s.ln();
        }
    }
    for (&x, &m) in pg.points.iter().zip(&pg.mass) {
        if m > 0.0 {
            let s = d.score(x);
            if s >= 1.0 {
                return Err(Error::DegenerateScore { score: s });
            }
            v += m * (1.0 - s).ln();
        }
    }
    Ok(v)
}

/// `p_r / (p_r + p_g)` on the union support, `1/2` where both vanish.
pub fn optimal_discriminator(pr: &GridDensity, pg: &GridDensity) -> DiscriminatorTable {
    let points = union_support(pr, pg);
    let scores = points
        .iter()
        .map(|&x| {
            let (a, b) = (pr.mass_at(x), pg.mass_at(x));
            if a + b > 0.0 {
                a / (a + b)
            } else {
                0.5
            }
        })
        .collect();
    DiscriminatorTable { points, scores }
}

/// Jensen-Shannon divergence in nats.
pub fn js_divergence(pr: &GridDensity, pg: &GridDensity) -> f64 {
    let mut js = 0.0;
    for x in union_support(pr, pg) {
        let (a, b) = (pr.mass_at(x), pg.mass_at(x));
        let m = 0.5 * (a + b);
        if a > 0.0 {
            js += 0.5 * a * (a / m).ln();
        }
        if b > 0.0 {
            js += 0.5 * b * (b / m).ln();
        }
    }
    js
}

/// The optimal discriminator between the empirical measures of real samples
/// `xs` and generated samples `gzs`.
pub fn empirical_discriminator(xs: &[f64], gzs: &[f64]) -> Result<DiscriminatorTable> {
    let pr = GridDensity::empirical(xs)?;
    let pg = GridDensity::empirical(gzs)?;
    Ok(optimal_discriminator(&pr, &pg))
}

/// Cost of the finite-sample game: the value at the empirical discriminator.
pub fn nplayer_cost(xs: &[f64], gzs: &[f64]) -> Result<f64> {
    let pr = GridDensity::empirical(xs)?;
    let pg = GridDensity::empirical(gzs)?;
    gan_value(&optimal_discriminator(&pr, &pg), &pr, &pg)
}

#[cfg(test)]
mod tests {
    use super::*;

    const LN4: f64 = std::f64::consts::LN_2 * 2.0;

    fn two_point(a: f64) -> GridDensity {
        GridDensity::new(vec![0.0, 1.0], vec![a, 1.0 - a]).unwrap()
    }

    #[test]
    fn constant_half_discriminator() {
        let (pr, pg) = (two_point(0.7), two_point(0.2));
        let d = DiscriminatorTable::constant(&[0.0, 1.0], 0.5).unwrap();
        assert!((gan_value(&d, &pr, &pg).unwrap() - 0.25f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn equal_densities_give_minus_log_four() {
        let p = two_point(0.35);
        let d = optimal_discriminator(&p, &p);
        assert!(d.scores().iter().all(|&s| s == 0.5));
        assert!((gan_value(&d, &p, &p).unwrap() + LN4).abs() < 1e-15);
        assert_eq!(js_divergence(&p, &p), 0.0);
    }

    #[test]
    fn two_point_optimum_beats_every_grid_score() {
        let (pr, pg) = (two_point(0.7), two_point(0.2));
        let d = optimal_discriminator(&pr, &pg);
        assert!((d.score(0.0) - 7.0 / 9.0).abs() < 1e-15);
        assert!((d.score(1.0) - 3.0 / 11.0).abs() < 1e-15);
        let best = gan_value(&d, &pr, &pg).unwrap();
        // independent JS summation
        let js_direct = {
            let m = [0.45, 0.55];
            0.5 * (0.7 * (0.7f64 / m[0]).ln() + 0.3 * (0.3f64 / m[1]).ln())
                + 0.5 * (0.2 * (0.2f64 / m[0]).ln() + 0.8 * (0.8f64 / m[1]).ln())
        };
        assert!((best - (-LN4 + 2.0 * js_direct)).abs() < 1e-14);
        assert!((js_divergence(&pr, &pg) - (best + LN4) / 2.0).abs() < 1e-14);
        let mut grid_best = f64::NEG_INFINITY;
        for i in 1..1000 {
            for j in 1..1000 {
                let t = DiscriminatorTable::new(vec![0.0, 1.0], vec![i as f64 / 1000.0, j as f64 / 1000.0]).unwrap();
                grid_best = grid_best.max(gan_value(&t, &pr, &pg).unwrap());
            }
        }
        assert!(grid_best <= best + 1e-15);
        assert!(best - grid_best < 1e-5);
    }

    #[test]
    fn limit_cases() {
        let pr = GridDensity::new(vec![0.0, 1.0], vec![1.0, 0.0]).unwrap();
        let pg = GridDensity::new(vec![0.0, 1.0], vec![0.0, 1.0]).unwrap();
        let d = optimal_discriminator(&pr, &pg);
        assert_eq!(d.score(0.0), 1.0);
        assert_eq!(d.score(1.0), 0.0);
        assert!((js_divergence(&pr, &pg) - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(gan_value(&d, &pr, &pg).unwrap(), 0.0);
    }

    #[test]
    fn degenerate_scores_are_rejected() {
        let p = two_point(0.5);
        let d = DiscriminatorTable::new(vec![0.0, 1.0], vec![0.0, 0.5]).unwrap();
        assert!(matches!(gan_value(&d, &p, &p), Err(Error::DegenerateScore { .. })));
    }

    #[test]
    fn empirical_discriminator_examples() {
        let d = empirical_discriminator(&[3.0], &[3.0]).unwrap();
        assert_eq!(d.score(3.0), 0.5);

        let d = empirical_discriminator(&[1.0, 1.0], &[2.0]).unwrap();
        assert_eq!((d.score(1.0), d.score(2.0)), (1.0, 0.0));

        let (a, b) = (1.0, 2.0);
        let d = empirical_discriminator(&[a, a, b], &[a, b]).unwrap();
        assert!((d.score(a) - 4.0 / 7.0).abs() < 1e-15);
        // per-atom 1-D maximization of m_r log s + m_g log(1 - s)
        for (atom, mr, mg) in [(a, 2.0 / 3.0, 0.5), (b, 1.0 / 3.0, 0.5)] {
            let obj = |s: f64| mr * s.ln() + mg * (1.0 - s).ln();
            let best = (1..100_000).map(|i| i as f64 / 100_000.0).max_by(|x, y| obj(*x).total_cmp(&obj(*y))).unwrap();
            assert!((d.score(atom) - best).abs() < 1e-5);
        }
        assert!(empirical_discriminator(&[], &[1.0]).is_err());
    }

    #[test]
    fn nplayer_cost_examples() {
        assert!((nplayer_cost(&[1.0, 2.0, 2.0], &[2.0, 1.0, 2.0]).unwrap() + LN4).abs() < 1e-15);
        assert_eq!(nplayer_cost(&[1.0, 1.0], &[5.0, 6.0]).unwrap(), 0.0);

        let (xs, gzs) = ([1.0, 1.0, 2.0], [1.0, 2.0]);
        let pr = GridDensity::empirical(&xs).unwrap();
        let pg = GridDensity::empirical(&gzs).unwrap();
        let mut best = f64::NEG_INFINITY;
        for i in 1..1000 {
            for j in 1..1000 {
                let t = DiscriminatorTable::new(vec![1.0, 2.0], vec![i as f64 / 1000.0, j as f64 / 1000.0]).unwrap();
                best = best.max(gan_value(&t, &pr, &pg).unwrap());
            }
        }
        assert!((nplayer_cost(&xs, &gzs).unwrap() - best).abs() < 1e-4);
    }
}
