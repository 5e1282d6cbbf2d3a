//! Central finite differences with one Richardson step.

use crate::error::{Error, Result};

/// Relative agreement required between the `δ` and `δ/2` estimates.
pub const AGREEMENT: f64 = 1e-4;

/// Step `max(1e-6, 1e-6 |x|)`.
pub fn step(x: f64) -> f64 {
    1e-6_f64.max(1e-6 * x.abs())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    /// Richardson-extrapolated value `(4 d(δ/2) − d(δ)) / 3`.
    pub value: f64,
    pub coarse: f64,
    pub fine: f64,
}

impl Estimate {
    fn from_pair(coarse: f64, fine: f64) -> Self {
        Estimate {
            value: (4.0 * fine - coarse) / 3.0,
            coarse,
            fine,
        }
    }

    /// `|fine − coarse|` relative to the larger of the two.
    pub fn spread(&self) -> f64 {
        let scale = self.coarse.abs().max(self.fine.abs());
        if scale == 0.0 {
            0.0
        } else {
            (self.fine - self.coarse).abs() / scale
        }
    }

    /// Fails unless the two step sizes agree to [`AGREEMENT`], or both are
    /// below `floor` in magnitude.
    pub fn checked(self, floor: f64) -> Result<f64> {
        let small = self.coarse.abs().max(self.fine.abs()) <= floor;
        if small || self.spread() <= AGREEMENT {
            Ok(self.value)
        } else {
            Err(Error::Derivative(format!(
                "estimates {:e} (step) and {:e} (half step) differ by {:.3e} relative",
                self.coarse,
                self.fine,
                self.spread()
            )))
        }
    }
}

/// First derivative of `f` at `x` using the default step rule.
pub fn first<F>(mut f: F, x: f64) -> Result<Estimate>
where
    F: FnMut(f64) -> Result<f64>,
{
    first_with_step(&mut f, x, step(x))
}

pub fn first_with_step<F>(f: &mut F, x: f64, d: f64) -> Result<Estimate>
where
    F: FnMut(f64) -> Result<f64>,
{
    let coarse = (f(x + d)? - f(x - d)?) / (2.0 * d);
    let h = 0.5 * d;
    let fine = (f(x + h)? - f(x - h)?) / (2.0 * h);
    Ok(Estimate::from_pair(coarse, fine))
}

/// Second derivative with an explicit step.
pub fn second_with_step<F>(mut f: F, x: f64, d: f64) -> Result<Estimate>
where
    F: FnMut(f64) -> Result<f64>,
{
    let f0 = f(x)?;
    let mut at = |h: f64| -> Result<f64> { Ok((f(x + h)? - 2.0 * f0 + f(x - h)?) / (h * h)) };
    let coarse = at(d)?;
    let fine = at(0.5 * d)?;
    Ok(Estimate::from_pair(coarse, fine))
}
