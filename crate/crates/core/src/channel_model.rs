//! Measured highway channel: two-ray large-scale loss with a distance-binned
//! exponent, plus Nakagami-m (near) or Weibull (far) block fading.
//!
//! Fading gains are unit-mean in the power domain, so all mean attenuation
//! comes from the large-scale term.

use std::f64::consts::PI;
use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Gamma, Weibull};

use crate::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Smallest |1 + Γe^{iϕ}| used, so exact interference nulls stay finite.
const MIN_TWO_RAY_MAGNITUDE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoRayParams {
    pub wavelength_m: f64,
    pub gamma_re: f64,
    pub gamma_im: f64,
    /// Height of both antennas.
    pub antenna_height_m: f64,
}

impl TwoRayParams {
    pub fn from_carrier(carrier_hz: f64, antenna_height_m: f64) -> Self {
        TwoRayParams {
            wavelength_m: SPEED_OF_LIGHT / carrier_hz,
            gamma_re: -1.0,
            gamma_im: 0.0,
            antenna_height_m,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mag = self.gamma_re.hypot(self.gamma_im);
        if !(mag <= 1.0) {
            return Err(Error::config(format!(
                "channel reflection coefficient magnitude {mag} exceeds 1"
            )));
        }
        if !(self.wavelength_m > 0.0) || !(self.antenna_height_m >= 0.0) {
            return Err(Error::config(
                "channel wavelength must be positive and antenna height non-negative",
            ));
        }
        Ok(())
    }

    /// Phase difference between the direct and ground-reflected rays.
    pub fn phase(&self, d: f64) -> f64 {
        let h = 2.0 * self.antenna_height_m;
        let path_difference = (d * d + h * h).sqrt() - d;
        2.0 * PI * path_difference / self.wavelength_m
    }

    /// |1 + Γ e^{iϕ}| at ground distance `d`.
    pub fn interference_magnitude(&self, d: f64) -> f64 {
        let phi = self.phase(d);
        let (s, c) = phi.sin_cos();
        let re = 1.0 + self.gamma_re * c - self.gamma_im * s;
        let im = self.gamma_re * s + self.gamma_im * c;
        re.hypot(im).max(MIN_TWO_RAY_MAGNITUDE)
    }
}

impl Default for TwoRayParams {
    fn default() -> Self {
        TwoRayParams::from_carrier(5.86e9, 1.5)
    }
}

/// `10·α·log10(4πd/λ · |1 + Γe^{iϕ}|^{-1})` in dB.
pub fn two_ray_loss_db(d: f64, alpha: f64, params: &TwoRayParams) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::Domain(format!("distance {d} m must be positive")));
    }
    let ratio = 4.0 * PI * d / params.wavelength_m / params.interference_magnitude(d);
    Ok(10.0 * alpha * ratio.log10())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exponent {
    /// Near-field bin whose loss is interpolated (see [`ChannelModel`]).
    Linear,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathLossBin {
    /// Inclusive upper edge; `f64::INFINITY` for the last bin.
    pub d_max_m: f64,
    pub alpha: Exponent,
    pub nakagami_m: Option<f64>,
}

/// Distance bins `(prev.d_max, d_max]` covering `(0, ∞)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathLossTable {
    pub bins: Vec<PathLossBin>,
    pub weibull_k: f64,
}

impl PathLossTable {
    /// Fit from the Fowlerville proving-ground measurements.
    pub fn fowlerville() -> Self {
        let bin = |d_max_m: f64, alpha: Exponent, m: Option<f64>| PathLossBin {
            d_max_m,
            alpha,
            nakagami_m: m,
        };
        PathLossTable {
            bins: vec![
                bin(8.0, Exponent::Linear, Some(2.272)),
                bin(45.0, Exponent::Fixed(1.71), Some(1.340)),
                bin(111.0, Exponent::Fixed(1.77), Some(1.438)),
                bin(400.0, Exponent::Fixed(1.85), Some(1.357)),
                bin(639.0, Exponent::Fixed(1.88), Some(1.000)),
                bin(f64::INFINITY, Exponent::Fixed(1.90), None),
            ],
            weibull_k: 1.4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let Some(last) = self.bins.last() else {
            return Err(Error::config("channel.bins must not be empty"));
        };
        if last.d_max_m != f64::INFINITY {
            return Err(Error::config("the last channel bin must extend to inf"));
        }
        let mut prev_edge = 0.0;
        let mut prev_alpha = f64::NEG_INFINITY;
        for (i, b) in self.bins.iter().enumerate() {
            if !(b.d_max_m > prev_edge) {
                return Err(Error::config(format!(
                    "channel bin {i}: edge {} must exceed the previous edge {prev_edge}",
                    b.d_max_m
                )));
            }
            match b.alpha {
                Exponent::Linear if i != 0 => {
                    return Err(Error::config("only the first channel bin may be linear"));
                }
                Exponent::Linear if self.bins.len() < 2 => {
                    return Err(Error::config("a linear first bin needs a following bin"));
                }
                Exponent::Fixed(a) => {
                    if !(a > 0.0) || a < prev_alpha {
                        return Err(Error::config(format!(
                            "channel bin {i}: exponent {a} must be positive and non-decreasing"
                        )));
                    }
                    prev_alpha = a;
                }
                Exponent::Linear => {}
            }
            match b.nakagami_m {
                Some(m) if !(m >= 0.5) => {
                    return Err(Error::config(format!(
                        "channel bin {i}: Nakagami m {m} must be at least 0.5"
                    )));
                }
                Some(_) if b.d_max_m > 639.0 => {
                    return Err(Error::config(format!(
                        "channel bin {i}: Nakagami fading is only defined up to 639 m"
                    )));
                }
                None if b.d_max_m <= 639.0 => {
                    return Err(Error::config(format!(
                        "channel bin {i}: bins up to 639 m need a Nakagami m"
                    )));
                }
                _ => {}
            }
            prev_edge = b.d_max_m;
        }
        if !(self.weibull_k > 0.0) {
            return Err(Error::config("channel.weibull_k must be positive"));
        }
        Ok(())
    }

    /// Index of the bin containing `d`. Total over positive distances.
    pub fn bin_index(&self, d: f64) -> usize {
        self.bins
            .iter()
            .position(|b| d <= b.d_max_m)
            .unwrap_or(self.bins.len() - 1)
    }

    /// Parses `d_max:alpha:m` triples separated by commas, e.g.
    /// `8:linear:2.272, 45:1.71:1.34, ..., inf:1.90:-`.
    pub fn parse_bins(spec: &str) -> Result<Vec<PathLossBin>> {
        spec.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|triple| {
                let parts: Vec<&str> = triple.split(':').map(str::trim).collect();
                let [d, a, m] = parts[..] else {
                    return Err(Error::config(format!(
                        "channel bin {triple:?} must be d_max:alpha:m"
                    )));
                };
                let bad = |what: &str| Error::config(format!("channel bin {triple:?}: bad {what}"));
                let d_max_m = match d {
                    "inf" => f64::INFINITY,
                    _ => d.parse().map_err(|_| bad("edge"))?,
                };
                let alpha = match a {
                    "linear" => Exponent::Linear,
                    _ => Exponent::Fixed(a.parse().map_err(|_| bad("exponent"))?),
                };
                let nakagami_m = match m {
                    "-" => None,
                    _ => Some(m.parse().map_err(|_| bad("Nakagami m"))?),
                };
                Ok(PathLossBin {
                    d_max_m,
                    alpha,
                    nakagami_m,
                })
            })
            .collect()
    }

    pub fn format_bins(&self) -> String {
        self.bins
            .iter()
            .map(|b| {
                let d = if b.d_max_m.is_infinite() {
                    "inf".to_string()
                } else {
                    b.d_max_m.to_string()
                };
                let a = match b.alpha {
                    Exponent::Linear => "linear".to_string(),
                    Exponent::Fixed(a) => a.to_string(),
                };
                let m = b.nakagami_m.map_or("-".to_string(), |m| m.to_string());
                format!("{d}:{a}:{m}")
            })
            .collect::<Vec<_>>()
            .join(", ")
    }
}

impl Default for PathLossTable {
    fn default() -> Self {
        PathLossTable::fowlerville()
    }
}

/// Unit-mean small-scale power gain distribution.
#[derive(Debug, Clone, Copy)]
pub enum FadingLaw {
    None,
    /// Power of a Nakagami-m amplitude: Gamma(m, 1/m).
    Nakagami {
        m: f64,
        dist: Gamma<f64>,
    },
    Weibull {
        k: f64,
        dist: Weibull<f64>,
    },
}

impl FadingLaw {
    pub fn nakagami(m: f64) -> Result<Self> {
        let dist =
            Gamma::new(m, 1.0 / m).map_err(|e| Error::config(format!("Nakagami m {m}: {e}")))?;
        Ok(FadingLaw::Nakagami { m, dist })
    }

    pub fn weibull(k: f64) -> Result<Self> {
        let scale = 1.0 / statrs::function::gamma::gamma(1.0 + 1.0 / k);
        let dist =
            Weibull::new(scale, k).map_err(|e| Error::config(format!("Weibull k {k}: {e}")))?;
        Ok(FadingLaw::Weibull { k, dist })
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            FadingLaw::None => 1.0,
            FadingLaw::Nakagami { dist, .. } => dist.sample(rng),
            FadingLaw::Weibull { dist, .. } => dist.sample(rng),
        }
    }
}

impl fmt::Display for FadingLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FadingLaw::None => f.write_str("none"),
            FadingLaw::Nakagami { m, .. } => write!(f, "nakagami(m={m})"),
            FadingLaw::Weibull { k, .. } => write!(f, "weibull(k={k})"),
        }
    }
}

/// Path-loss table bound to two-ray geometry.
///
/// The near-field "linear" bin is a straight line in dB against
/// `log10(4πd/λ)`, starting at 0 dB where `4πd/λ = 1` and meeting the next
/// bin's two-ray loss at the bin edge. That makes it a plain log-distance law
/// with a fixed effective exponent, which [`ChannelModel::alpha_for_distance`]
/// reports.
#[derive(Debug, Clone)]
pub struct ChannelModel {
    params: TwoRayParams,
    table: PathLossTable,
    linear_alpha: f64,
    laws: Vec<FadingLaw>,
}

impl ChannelModel {
    pub fn new(params: TwoRayParams, table: PathLossTable, fading: bool) -> Result<Self> {
        params.validate()?;
        table.validate()?;
        let linear_alpha = match table.bins[0].alpha {
            Exponent::Linear => {
                let edge = table.bins[0].d_max_m;
                let Exponent::Fixed(next_alpha) = table.bins[1].alpha else {
                    unreachable!("validated: only the first bin is linear")
                };
                let edge_loss = two_ray_loss_db(edge, next_alpha, &params)?;
                edge_loss / (10.0 * (4.0 * PI * edge / params.wavelength_m).log10())
            }
            Exponent::Fixed(a) => a,
        };
        let laws = table
            .bins
            .iter()
            .map(|b| match (fading, b.nakagami_m) {
                (false, _) => Ok(FadingLaw::None),
                (true, Some(m)) => FadingLaw::nakagami(m),
                (true, None) => FadingLaw::weibull(table.weibull_k),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ChannelModel {
            params,
            table,
            linear_alpha,
            laws,
        })
    }

    pub fn params(&self) -> &TwoRayParams {
        &self.params
    }

    pub fn table(&self) -> &PathLossTable {
        &self.table
    }

    pub fn alpha_for_distance(&self, d: f64) -> f64 {
        match self.table.bins[self.table.bin_index(d)].alpha {
            Exponent::Linear => self.linear_alpha,
            Exponent::Fixed(a) => a,
        }
    }

    pub fn large_scale_loss(&self, d: f64) -> Result<f64> {
        if !(d > 0.0) {
            return Err(Error::Domain(format!("distance {d} m must be positive")));
        }
        match self.table.bins[self.table.bin_index(d)].alpha {
            Exponent::Linear => {
                let log_term = (4.0 * PI * d / self.params.wavelength_m).log10();
                Ok(10.0 * self.linear_alpha * log_term)
            }
            Exponent::Fixed(a) => two_ray_loss_db(d, a, &self.params),
        }
    }

    /// Fading law of each table bin, in bin order.
    pub fn laws(&self) -> &[FadingLaw] {
        &self.laws
    }

    pub fn fading_law(&self, d: f64) -> FadingLaw {
        self.laws[self.table.bin_index(d)]
    }

    pub fn small_scale_gain<R: Rng + ?Sized>(&self, d: f64, rng: &mut R) -> f64 {
        self.fading_law(d).sample(rng)
    }

    /// Large-scale loss minus the fading gain, in dB; one draw per call.
    pub fn link_loss<R: Rng + ?Sized>(&self, d: f64, rng: &mut R) -> Result<f64> {
        let ls = self.large_scale_loss(d)?;
        Ok(ls - 10.0 * self.small_scale_gain(d, rng).log10())
    }
}

impl Default for ChannelModel {
    fn default() -> Self {
        ChannelModel::new(TwoRayParams::default(), PathLossTable::default(), true)
            .expect("default channel is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn no_reflection() -> TwoRayParams {
        TwoRayParams {
            gamma_re: 0.0,
            ..TwoRayParams::default()
        }
    }

    #[test]
    fn wavelength_for_carrier() {
        let p = TwoRayParams::default();
        let expected = 299_792_458.0 / 5.86e9;
        assert!(((p.wavelength_m - expected) / expected).abs() < 1e-4);
    }

    #[test]
    fn alpha_bins() {
        let ch = ChannelModel::default();
        assert_eq!(ch.alpha_for_distance(30.0), 1.71);
        assert_eq!(ch.alpha_for_distance(700.0), 1.90);
        assert_eq!(ch.alpha_for_distance(111.0), 1.77);
        assert_eq!(ch.alpha_for_distance(111.5), 1.85);
        assert_eq!(ch.alpha_for_distance(45.0), 1.71);
        assert_eq!(ch.alpha_for_distance(45.5), 1.77);
        assert_eq!(ch.alpha_for_distance(639.0), 1.88);
        assert_eq!(ch.alpha_for_distance(639.5), 1.90);
        assert_eq!(ch.alpha_for_distance(1e6), 1.90);
        assert!(matches!(ch.fading_law(639.0), FadingLaw::Nakagami { m, .. } if m == 1.0));
        assert!(matches!(ch.fading_law(639.1), FadingLaw::Weibull { k, .. } if k == 1.4));
    }

    #[test]
    fn free_space_identities() {
        let p = no_reflection();
        let d0 = p.wavelength_m / (4.0 * PI);
        assert!(two_ray_loss_db(d0, 2.0, &p).unwrap().abs() < 1e-12);
        assert!((two_ray_loss_db(10.0 * d0, 2.0, &p).unwrap() - 20.0).abs() < 1e-12);
        assert!(matches!(
            two_ray_loss_db(0.0, 2.0, &p),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn no_reflection_is_log_distance() {
        let p = no_reflection();
        for &d in &[1.0, 9.5, 50.0, 300.0, 1234.5] {
            let expected = 10.0 * 1.85 * (4.0 * PI * d / p.wavelength_m).log10();
            assert_eq!(two_ray_loss_db(d, 1.85, &p).unwrap(), expected);
        }
    }

    // Golden values from a separate scripted evaluation of the two-ray
    // formula (Γ = -1, 1.5 m antennas, 5.86 GHz).
    #[test]
    fn golden_two_ray_values() {
        let ch = ChannelModel::default();
        let cases = [
            (100.0, 80.02588991654524),
            (300.0, 86.30839668925753),
            (1000.0, 107.41383723198408),
        ];
        for (d, want) in cases {
            let got = ch.large_scale_loss(d).unwrap();
            assert!((got - want).abs() < 1e-9, "d={d}: {got} vs {want}");
        }
    }

    #[test]
    fn linear_bin_meets_next_bin() {
        let ch = ChannelModel::default();
        assert!((ch.alpha_for_distance(5.0) - 1.5741603292215973).abs() < 1e-12);
        assert!((ch.large_scale_loss(5.0).unwrap() - 48.62985472134674).abs() < 1e-9);
        let edge = ch.large_scale_loss(8.0).unwrap();
        let next = two_ray_loss_db(8.0, 1.71, ch.params()).unwrap();
        assert!((edge - next).abs() < 1e-9);
    }

    #[test]
    fn large_scale_loss_is_deterministic_and_continuous_in_bin() {
        let ch = ChannelModel::default();
        let a = ch.large_scale_loss(250.0).unwrap();
        assert_eq!(a, ch.large_scale_loss(250.0).unwrap());
        let b = ch.large_scale_loss(250.0 + 1e-7).unwrap();
        assert!((a - b).abs() < 1e-4);
    }

    fn moments(law: FadingLaw, n: usize, seed: u64) -> (f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let g = law.sample(&mut rng);
            s += g;
            s2 += g * g;
        }
        let mean = s / n as f64;
        (mean, s2 / n as f64 - mean * mean)
    }

    #[test]
    fn fading_is_unit_mean_per_bin() {
        let ch = ChannelModel::default();
        for (i, d) in [5.0, 30.0, 100.0, 300.0, 500.0, 900.0]
            .into_iter()
            .enumerate()
        {
            let (mean, _) = moments(ch.fading_law(d), 1_000_000, 11 + i as u64);
            assert!((mean - 1.0).abs() < 0.01, "d={d}: mean {mean}");
        }
    }

    #[test]
    fn nakagami_variance_is_inverse_m() {
        let ch = ChannelModel::default();
        let (_, var) = moments(ch.fading_law(5.0), 1_000_000, 3);
        let want = 1.0 / 2.272;
        assert!(((var - want) / want).abs() < 0.02, "{var} vs {want}");
        // m = 1: exponential power, variance 1
        let (_, var) = moments(ch.fading_law(500.0), 1_000_000, 4);
        assert!((var - 1.0).abs() < 0.02, "{var}");
    }

    #[test]
    fn link_loss_composition() {
        let flat =
            ChannelModel::new(TwoRayParams::default(), PathLossTable::default(), false).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(
            flat.link_loss(200.0, &mut rng).unwrap(),
            flat.large_scale_loss(200.0).unwrap()
        );

        let ch = ChannelModel::default();
        let mut r1 = ChaCha8Rng::seed_from_u64(9);
        let mut r2 = ChaCha8Rng::seed_from_u64(9);
        assert_eq!(
            ch.link_loss(321.0, &mut r1).unwrap(),
            ch.link_loss(321.0, &mut r2).unwrap()
        );
        assert!(ch.link_loss(0.0, &mut r1).is_err());
    }

    #[test]
    fn median_link_loss_grows_with_distance() {
        let ch = ChannelModel::default();
        let median = |d: f64| {
            let mut rng = ChaCha8Rng::seed_from_u64(77);
            let mut v: Vec<f64> = (0..10_000)
                .map(|_| ch.link_loss(d, &mut rng).unwrap())
                .collect();
            v.sort_by(f64::total_cmp);
            v[v.len() / 2]
        };
        // sample away from the two-ray nulls
        let ds = [20.0, 60.0, 150.0, 300.0, 600.0, 1000.0];
        let meds: Vec<f64> = ds.iter().map(|&d| median(d)).collect();
        for w in meds.windows(2) {
            assert!(w[1] > w[0], "{meds:?}");
        }
    }

    #[test]
    fn bins_round_trip_through_text() {
        let t = PathLossTable::fowlerville();
        let parsed = PathLossTable::parse_bins(&t.format_bins()).unwrap();
        assert_eq!(parsed, t.bins);
        assert!(PathLossTable::parse_bins("8:linear").is_err());
    }

    #[test]
    fn invalid_tables_rejected() {
        let mut t = PathLossTable::fowlerville();
        t.bins[2].alpha = Exponent::Fixed(1.5);
        assert!(t.validate().is_err());
        let mut t = PathLossTable::fowlerville();
        t.bins[5].d_max_m = 2000.0;
        assert!(t.validate().is_err());
        let mut t = PathLossTable::fowlerville();
        t.bins[4].nakagami_m = None;
        assert!(t.validate().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn every_distance_maps_to_one_bin(d in 1e-3f64..1e5) {
                let ch = ChannelModel::default();
                let i = ch.table().bin_index(d);
                let lo = if i == 0 { 0.0 } else { ch.table().bins[i - 1].d_max_m };
                prop_assert!(d > lo && d <= ch.table().bins[i].d_max_m);
                prop_assert!(ch.large_scale_loss(d).unwrap().is_finite());
            }
        }
    }
}
