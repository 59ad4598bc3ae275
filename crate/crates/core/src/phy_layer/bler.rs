//! SINR to transport-block error rate mapping.

use std::path::Path;

use rand::Rng;

use crate::{Error, Result};

const DEFAULT_CURVE: &str = include_str!("../../assets/bler_qpsk_mcs5_2rx.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decode {
    Decoded,
    Lost,
}

/// Piecewise curve through `(sinr_db, bler)` points. Below the first point
/// the BLER is 1, above the last it is 0; in between it is interpolated
/// linearly in `log10(bler)` (plain linear next to a zero).
#[derive(Debug, Clone, PartialEq)]
pub struct BlerCurve {
    points: Vec<(f64, f64)>,
}

impl BlerCurve {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::config("BLER curve needs at least two points"));
        }
        for (i, &(s, b)) in points.iter().enumerate() {
            if !s.is_finite() || !(0.0..=1.0).contains(&b) {
                return Err(Error::config(format!(
                    "BLER curve point {i} ({s}, {b}) is out of range"
                )));
            }
            if i > 0 {
                let (ps, pb) = points[i - 1];
                if s <= ps {
                    return Err(Error::config(format!(
                        "BLER curve SINR must increase strictly (point {i})"
                    )));
                }
                if b > pb {
                    return Err(Error::config(format!(
                        "BLER curve must be non-increasing (point {i})"
                    )));
                }
            }
        }
        Ok(BlerCurve { points })
    }

    /// Two whitespace-separated columns per line; `#` starts a comment.
    pub fn parse(text: &str, file: &str) -> Result<Self> {
        let mut points = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |msg: String| Error::Parse {
                file: file.to_string(),
                line: i + 1,
                msg,
            };
            let cols: Vec<&str> = line.split_whitespace().collect();
            let [s, b] = cols[..] else {
                return Err(parse_err(format!(
                    "expected 2 columns, found {}",
                    cols.len()
                )));
            };
            let s: f64 = s
                .parse()
                .map_err(|_| parse_err(format!("bad SINR {s:?}")))?;
            let b: f64 = b
                .parse()
                .map_err(|_| parse_err(format!("bad BLER {b:?}")))?;
            points.push((s, b));
        }
        BlerCurve::new(points)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        BlerCurve::parse(&text, &path.display().to_string())
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn bler(&self, sinr_db: f64) -> f64 {
        let pts = &self.points;
        if sinr_db < pts[0].0 {
            return 1.0;
        }
        if sinr_db > pts[pts.len() - 1].0 {
            return 0.0;
        }
        let i = pts.partition_point(|&(s, _)| s <= sinr_db);
        if i == pts.len() {
            return pts[i - 1].1;
        }
        let (s0, b0) = pts[i - 1];
        let (s1, b1) = pts[i];
        let w = (sinr_db - s0) / (s1 - s0);
        if b0 > 0.0 && b1 > 0.0 {
            10f64.powf(b0.log10() + w * (b1.log10() - b0.log10()))
        } else {
            b0 + w * (b1 - b0)
        }
    }
}

impl Default for BlerCurve {
    fn default() -> Self {
        BlerCurve::parse(DEFAULT_CURVE, "bler_qpsk_mcs5_2rx.txt")
            .expect("bundled BLER curve is valid")
    }
}

/// Draws `u ~ U(0,1)`; the block is lost iff `bler(sinr) > u`.
pub fn decode<R: Rng + ?Sized>(sinr_db: f64, curve: &BlerCurve, rng: &mut R) -> Decode {
    decode_with(curve.bler(sinr_db), rng.random::<f64>())
}

#[inline]
pub fn decode_with(bler: f64, u: f64) -> Decode {
    if bler > u {
        Decode::Lost
    } else {
        Decode::Decoded
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bundled_curve_shape() {
        let c = BlerCurve::default();
        assert_eq!(c.bler(-50.0), 1.0);
        assert_eq!(c.bler(50.0), 0.0);
        assert_eq!(c.bler(-6.0), 1.0);
        assert_eq!(c.bler(9.0), 0.0);
        assert!((c.bler(1.0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn decode_extremes() {
        let c = BlerCurve::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            assert_eq!(decode(30.0, &c, &mut rng), Decode::Decoded);
            assert_eq!(decode(-30.0, &c, &mut rng), Decode::Lost);
        }
    }

    #[test]
    fn bernoulli_loss_rate() {
        let c = BlerCurve::new(vec![(0.0, 0.3), (10.0, 0.3)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 100_000;
        let lost = (0..n)
            .filter(|_| decode(5.0, &c, &mut rng) == Decode::Lost)
            .count();
        let rate = lost as f64 / n as f64;
        assert!((rate - 0.3).abs() < 0.01, "{rate}");
    }

    #[test]
    fn log_linear_interpolation() {
        let c = BlerCurve::new(vec![(0.0, 1e-1), (2.0, 1e-3), (3.0, 0.0)]).unwrap();
        assert!((c.bler(1.0) - 1e-2).abs() < 1e-15);
        assert!((c.bler(2.5) - 0.5e-3).abs() < 1e-15);
    }

    #[test]
    fn malformed_curves_rejected() {
        assert!(BlerCurve::new(vec![(0.0, 1.0)]).is_err());
        assert!(BlerCurve::new(vec![(0.0, 0.5), (0.0, 0.4)]).is_err());
        assert!(BlerCurve::new(vec![(0.0, 0.5), (1.0, 0.6)]).is_err());
        assert!(BlerCurve::new(vec![(0.0, 1.5), (1.0, 0.6)]).is_err());
        let err = BlerCurve::parse("# h\n0 1\n1 x\n", "c.txt").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn decode_monotone_in_sinr(a in -10.0f64..12.0, b in -10.0f64..12.0, u in 0.0f64..1.0) {
                let c = BlerCurve::default();
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                prop_assert!(c.bler(hi) <= c.bler(lo));
                if decode_with(c.bler(lo), u) == Decode::Decoded {
                    prop_assert_eq!(decode_with(c.bler(hi), u), Decode::Decoded);
                }
            }
        }
    }
}
