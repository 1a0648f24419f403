//! Additive white Gaussian noise on semantic symbols.
//!
//! Each component has unit peak amplitude, so the per-component noise
//! variance at a peak SNR of `snr_db` is `10^(−snr_db/10)`.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::language::SemanticSymbol;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    snr_db: f64,
}

impl ChannelConfig {
    /// `snr_db` may be `+∞` (noiseless). NaN and `−∞` are rejected.
    pub fn new(snr_db: f64) -> Result<Self> {
        if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
            return Err(Error::InvalidParameter(format!("invalid snr {snr_db} dB")));
        }
        Ok(Self { snr_db })
    }

    pub fn noiseless() -> Self {
        Self {
            snr_db: f64::INFINITY,
        }
    }

    pub fn snr_db(&self) -> f64 {
        self.snr_db
    }

    pub fn noise_variance(&self) -> f64 {
        if self.snr_db == f64::INFINITY {
            0.0
        } else {
            10f64.powf(-self.snr_db / 10.0)
        }
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_variance().sqrt()
    }

    /// `x + n` with independent zero-mean Gaussian components. A noiseless
    /// channel returns `x` untouched and draws nothing from `rng`.
    pub fn transmit<R: rand::Rng + ?Sized>(
        &self,
        x: SemanticSymbol,
        rng: &mut R,
    ) -> SemanticSymbol {
        if self.snr_db == f64::INFINITY {
            return x;
        }
        let sigma = self.noise_std();
        let n1: f64 = StandardNormal.sample(rng);
        let n2: f64 = StandardNormal.sample(rng);
        SemanticSymbol::new(x.x1 + sigma * n1, x.x2 + sigma * n2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding;

    #[test]
    fn variance_examples() {
        assert_eq!(ChannelConfig::noiseless().noise_variance(), 0.0);
        let c10 = ChannelConfig::new(10.0).unwrap();
        assert!((c10.noise_variance() - 0.1).abs() < 1e-15);
        assert!((c10.noise_std() - 0.316_228).abs() < 1e-6);
        assert_eq!(ChannelConfig::new(0.0).unwrap().noise_variance(), 1.0);
        assert!(ChannelConfig::new(f64::NAN).is_err());
        assert!(ChannelConfig::new(f64::NEG_INFINITY).is_err());
    }

    #[test]
    fn noiseless_is_passthrough() {
        let mut rng = seeding::rng(1, &[]);
        let x = SemanticSymbol::new(0.123_456_789, -0.987_654_321);
        let y = ChannelConfig::noiseless().transmit(x, &mut rng);
        assert_eq!(x.x1.to_bits(), y.x1.to_bits());
        assert_eq!(x.x2.to_bits(), y.x2.to_bits());
    }

    #[test]
    fn seeded_noise_replays() {
        let c = ChannelConfig::new(3.0).unwrap();
        let x = SemanticSymbol::new(0.5, 0.5);
        let mut a = seeding::rng(4, &[2]);
        let mut b = seeding::rng(4, &[2]);
        for _ in 0..100 {
            assert_eq!(c.transmit(x, &mut a), c.transmit(x, &mut b));
        }
    }
}
