use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::rng;

/// Additive white Gaussian aggregation channel. Transmission `c` always sees
/// the noise drawn from stream `(seed, "channel", c)`, whatever the order in
/// which the summands were computed.
#[derive(Clone, Debug, PartialEq)]
pub struct Channel {
    pub sigma_c: f64,
    seed: u64,
    counter: u64,
}

impl Channel {
    pub fn new(sigma_c: f64, seed: u64) -> Result<Self> {
        if !(sigma_c >= 0.0 && sigma_c.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma_c must be finite and >= 0, got {sigma_c}")));
        }
        Ok(Channel { sigma_c, seed, counter: 0 })
    }

    /// Number of transmissions so far.
    pub fn transmissions(&self) -> u64 {
        self.counter
    }

    /// Exact sum of the summands plus one fresh noise matrix.
    pub fn transmit(&mut self, summands: &[ArrayView2<f64>]) -> Result<Array2<f64>> {
        let first = summands
            .first()
            .ok_or_else(|| Error::InvalidParameter("nothing to transmit".into()))?;
        let shape = first.dim();
        let mut sum = Array2::<f64>::zeros(shape);
        for s in summands {
            if s.dim() != shape {
                return Err(Error::ShapeMismatch { expected: shape, found: s.dim() });
            }
            sum += s;
        }
        let index = self.counter;
        self.counter += 1;
        if self.sigma_c > 0.0 {
            let mut stream = rng::stream(self.seed, "channel", index);
            sum.scaled_add(self.sigma_c, &rng::gaussian_matrix(&mut stream, shape.0, shape.1));
        }
        Ok(sum)
    }
}

/// Free-function form of [`Channel::transmit`].
pub fn channel_transmit(summands: &[ArrayView2<f64>], channel: &mut Channel) -> Result<Array2<f64>> {
    channel.transmit(summands)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn noiseless_channel_sums_exactly() {
        let mut ch = Channel::new(0.0, 1).unwrap();
        let a = array![[1.0, 2.0], [3.0, 4.0]];
        let b = array![[0.5, 0.5], [0.5, 0.5]];
        assert_eq!(ch.transmit(&[a.view(), b.view()]).unwrap(), &a + &b);
        assert_eq!(ch.transmissions(), 1);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut ch = Channel::new(1.0, 1).unwrap();
        let a = Array2::<f64>::zeros((2, 2));
        let b = Array2::<f64>::zeros((2, 3));
        assert!(matches!(ch.transmit(&[a.view(), b.view()]), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn every_transmission_draws_fresh_noise() {
        let mut ch = Channel::new(1.0, 7).unwrap();
        let z = Array2::<f64>::zeros((3, 2));
        let first = ch.transmit(&[z.view()]).unwrap();
        let second = ch.transmit(&[z.view()]).unwrap();
        assert_ne!(first, second);
        let mut again = Channel::new(1.0, 7).unwrap();
        assert_eq!(again.transmit(&[z.view()]).unwrap(), first);
    }

    #[test]
    fn empirical_variance_matches_sigma() {
        let sigma = 0.3;
        let mut ch = Channel::new(sigma, 11).unwrap();
        let z = Array2::<f64>::zeros((1, 1));
        let trials = 100_000;
        let sum_sq: f64 = (0..trials).map(|_| ch.transmit(&[z.view()]).unwrap()[[0, 0]].powi(2)).sum();
        let var = sum_sq / trials as f64;
        assert!((var / (sigma * sigma) - 1.0).abs() < 0.05, "{var}");
    }
}
