//! Gaussian detection-efficiency noise and the noise moments entering the
//! mean and covariance of measured correlations.
//!
//! Each pixel's efficiency η is an independent Normal(ν, ς²) draw per frame.
//! The moments below are exact for that law; the simulator clamps negative
//! draws, which is immaterial for ς ≪ ν.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Highest raw moment supported: ⟨η^{2n}⟩ for the order cap n = 8.
pub const MAX_MOMENT_ORDER: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    nu: f64,
    sigma: f64,
}

impl NoiseModel {
    pub fn new(nu: f64, sigma: f64) -> Result<Self> {
        if !(nu > 0.0 && nu <= 1.0) {
            return Err(invalid("nu", format!("mean efficiency must lie in (0, 1], got {nu}")));
        }
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(invalid("sigma", format!("must be nonnegative, got {sigma}")));
        }
        Ok(Self { nu, sigma })
    }

    /// Constant loss: every pixel has efficiency exactly `nu`.
    pub fn constant_loss(nu: f64) -> Result<Self> {
        Self::new(nu, 0.0)
    }

    /// Law of η/ν, i.e. unit mean and standard deviation χ. All moments of
    /// the model are νᵏ times the moments of this law.
    pub fn normalized(chi: f64) -> Result<Self> {
        Self::new(1.0, chi)
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// χ = ς/ν.
    pub fn chi(&self) -> f64 {
        self.sigma / self.nu
    }

    /// ⟨ηᵏ⟩ for any k ≥ 0, no range check.
    fn raw(&self, k: u32) -> f64 {
        // Σ_j C(k,2j) ν^{k−2j} ς^{2j} (2j−1)!!
        let mut sum = 0.0;
        let mut binom = 1.0; // C(k, 2j)
        let mut double_fact = 1.0; // (2j−1)!!
        let var = self.sigma * self.sigma;
        let mut var_pow = 1.0;
        let mut j = 0u32;
        while 2 * j <= k {
            sum += binom * double_fact * var_pow * self.nu.powi((k - 2 * j) as i32);
            let (a, b) = ((k - 2 * j) as f64, (k - 2 * j) as f64 - 1.0);
            binom *= a * b / ((2 * j + 1) as f64 * (2 * j + 2) as f64);
            double_fact *= (2 * j + 1) as f64;
            var_pow *= var;
            j += 1;
        }
        sum
    }
}

/// Raw moment ⟨ηᵏ⟩ of Normal(ν, ς²).
pub fn gaussian_raw_moment(order: u32, model: &NoiseModel) -> Result<f64> {
    if order == 0 || order > MAX_MOMENT_ORDER {
        return Err(Error::MomentOrderOutOfRange {
            order,
            max: MAX_MOMENT_ORDER,
        });
    }
    Ok(model.raw(order))
}

/// How the reference pixels s₂…s_n are arranged.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReferencePattern {
    /// One pixel used n−1 times.
    Repeated { pixel: i64, copies: usize },
    /// n−1 pairwise distinct pixels.
    Distinct(Vec<i64>),
}

impl ReferencePattern {
    pub fn classify(refs: &[i64]) -> Result<Self> {
        if refs.is_empty() {
            return Err(invalid("refs", "need at least one reference pixel"));
        }
        if refs.iter().all(|&s| s == refs[0]) {
            return Ok(ReferencePattern::Repeated {
                pixel: refs[0],
                copies: refs.len(),
            });
        }
        let mut sorted = refs.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() == refs.len() {
            Ok(ReferencePattern::Distinct(refs.to_vec()))
        } else {
            Err(Error::MixedReferenceMultiplicity(refs.to_vec()))
        }
    }

    fn contains(&self, x: i64) -> bool {
        match self {
            ReferencePattern::Repeated { pixel, .. } => *pixel == x,
            ReferencePattern::Distinct(s) => s.contains(&x),
        }
    }

    fn copies(&self) -> u32 {
        match self {
            ReferencePattern::Repeated { copies, .. } => *copies as u32,
            ReferencePattern::Distinct(s) => s.len() as u32,
        }
    }
}

/// ⟨η(x_i)η(s₂)…η(s_n)⟩.
pub fn noise_moment_n(xi: i64, refs: &[i64], model: &NoiseModel) -> Result<f64> {
    let pattern = ReferencePattern::classify(refs)?;
    let m = pattern.copies();
    check_order(m + 1)?;
    let nu = model.nu;
    Ok(match pattern {
        ReferencePattern::Repeated { pixel, .. } if pixel == xi => model.raw(m + 1),
        ReferencePattern::Repeated { .. } => nu * model.raw(m),
        ReferencePattern::Distinct(ref s) if s.contains(&xi) => model.raw(2) * nu.powi(m as i32 - 1),
        ReferencePattern::Distinct(_) => nu.powi(m as i32 + 1),
    })
}

/// Which branch of the piecewise 2n-th noise moment applies to a pixel
/// pair. S is the reference set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NoiseCase {
    /// x_i = x_j ∈ S
    A,
    /// x_i = x_j ∉ S
    B,
    /// x_i ≠ x_j, both in S
    C,
    /// x_i ≠ x_j, neither in S
    D,
    /// x_i ≠ x_j, x_i ∈ S, x_j ∉ S
    E,
    /// x_i ≠ x_j, x_i ∉ S, x_j ∈ S
    F,
}

impl NoiseCase {
    pub fn classify(xi: i64, xj: i64, pattern: &ReferencePattern) -> Self {
        let (in_i, in_j) = (pattern.contains(xi), pattern.contains(xj));
        match (xi == xj, in_i, in_j) {
            (true, true, _) => NoiseCase::A,
            (true, false, _) => NoiseCase::B,
            (false, true, true) => NoiseCase::C,
            (false, false, false) => NoiseCase::D,
            (false, true, false) => NoiseCase::E,
            (false, false, true) => NoiseCase::F,
        }
    }

    pub fn label(self) -> char {
        match self {
            NoiseCase::A => 'a',
            NoiseCase::B => 'b',
            NoiseCase::C => 'c',
            NoiseCase::D => 'd',
            NoiseCase::E => 'e',
            NoiseCase::F => 'f',
        }
    }
}

/// ⟨η(x_i)η(x_j)η(s₂)²…η(s_n)²⟩ for a classified case.
pub fn noise_moment_2n_case(case: NoiseCase, pattern: &ReferencePattern, model: &NoiseModel) -> Result<f64> {
    let m = pattern.copies();
    check_order(2 * m + 2)?;
    let raw = |k: u32| model.raw(k);
    let value = match pattern {
        ReferencePattern::Distinct(_) => {
            // J₃ = ⟨η²⟩^{n−1}; the cases containing a reference pixel swap one
            // ⟨η²⟩ factor for a higher moment.
            let rest = raw(2).powi(m as i32 - 1);
            match case {
                NoiseCase::A => raw(4) * rest,
                NoiseCase::B => raw(2) * raw(2) * rest,
                NoiseCase::C => raw(3) * raw(3) * raw(2).powi(m as i32 - 2),
                NoiseCase::D => raw(1) * raw(1) * raw(2) * rest,
                NoiseCase::E | NoiseCase::F => raw(3) * raw(1) * rest,
            }
        }
        ReferencePattern::Repeated { .. } => {
            let j4 = raw(2 * m);
            match case {
                NoiseCase::A => raw(2 * m + 2),
                NoiseCase::B => raw(2) * j4,
                NoiseCase::D => raw(1) * raw(1) * j4,
                NoiseCase::E | NoiseCase::F => raw(1) * raw(2 * m + 1),
                NoiseCase::C => unreachable!("a single reference pixel cannot hold two distinct pixels"),
            }
        }
    };
    Ok(value)
}

/// ⟨η(x_i)η(x_j)η(s₂)²…η(s_n)²⟩.
pub fn noise_moment_2n(xi: i64, xj: i64, refs: &[i64], model: &NoiseModel) -> Result<f64> {
    let pattern = ReferencePattern::classify(refs)?;
    let case = NoiseCase::classify(xi, xj, &pattern);
    noise_moment_2n_case(case, &pattern, model)
}

fn check_order(order: u32) -> Result<()> {
    if order > MAX_MOMENT_ORDER {
        Err(Error::MomentOrderOutOfRange {
            order,
            max: MAX_MOMENT_ORDER,
        })
    } else {
        Ok(())
    }
}
