//! Bidegrees, weights, Chow weight, and the tau-monomial scalars shared by
//! every other module.
//!
//! The whole system works over the coefficient ring F_2[tau] with tau in
//! cohomological bidegree (0,1).  A homogeneous scalar is either zero or a
//! single power of tau, so `TauCoeff` is the only scalar type we ever need.

use std::fmt;
use std::ops::Add;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GradingError {
    /// Adding tau^a and tau^b with a != b would leave the homogeneous world.
    #[error("inhomogeneous sum tau^{0} + tau^{1}")]
    InhomogeneousSum(u32, u32),
    #[error("integer overflow in degree arithmetic")]
    Overflow,
}

/// A cohomological bidegree (p, w): topological degree and motivic weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Bidegree {
    pub p: i32,
    pub w: i32,
}

impl Bidegree {
    pub const ZERO: Bidegree = Bidegree { p: 0, w: 0 };

    pub fn new(p: i32, w: i32) -> Self {
        Bidegree { p, w }
    }

    /// The Chow weight 2w - p.  Additive, and non-positive on Milnor basis
    /// elements (it counts minus the number of odd entries there).
    pub fn chow_weight(self) -> i32 {
        2i32.checked_mul(self.w)
            .and_then(|x| x.checked_sub(self.p))
            .expect("chow weight overflow")
    }
}

impl Add for Bidegree {
    type Output = Bidegree;
    fn add(self, rhs: Bidegree) -> Bidegree {
        Bidegree {
            p: self.p.checked_add(rhs.p).expect("bidegree overflow"),
            w: self.w.checked_add(rhs.w).expect("bidegree overflow"),
        }
    }
}

impl fmt::Display for Bidegree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.p, self.w)
    }
}

/// Degree of an Ext class: Adams filtration s, internal degree t, weight w.
/// The stem t - s is always derived, never stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ExtDegree {
    pub s: u32,
    pub t: i32,
    pub w: i32,
}

impl ExtDegree {
    pub fn new(s: u32, t: i32, w: i32) -> Self {
        ExtDegree { s, t, w }
    }

    pub fn stem(self) -> i32 {
        self.t - self.s as i32
    }
}

/// Quadruple grading of the May spectral sequence: May filtration m, stem s,
/// Adams filtration f, weight w.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MayDegree {
    pub m: i32,
    pub s: i32,
    pub f: i32,
    pub w: i32,
}

impl MayDegree {
    pub fn new(m: i32, s: i32, f: i32, w: i32) -> Self {
        MayDegree { m, s, f, w }
    }
}

impl Add for MayDegree {
    type Output = MayDegree;
    fn add(self, rhs: MayDegree) -> MayDegree {
        MayDegree {
            m: self.m + rhs.m,
            s: self.s + rhs.s,
            f: self.f + rhs.f,
            w: self.w + rhs.w,
        }
    }
}

/// A homogeneous element of F_2[tau]: zero, or a single power tau^k.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum TauCoeff {
    #[default]
    Zero,
    Tau(u32),
}

impl TauCoeff {
    pub const ONE: TauCoeff = TauCoeff::Tau(0);

    pub fn is_zero(self) -> bool {
        matches!(self, TauCoeff::Zero)
    }

    pub fn exponent(self) -> Option<u32> {
        match self {
            TauCoeff::Zero => None,
            TauCoeff::Tau(k) => Some(k),
        }
    }

    pub fn mul(self, rhs: TauCoeff) -> TauCoeff {
        match (self, rhs) {
            (TauCoeff::Tau(a), TauCoeff::Tau(b)) => {
                TauCoeff::Tau(a.checked_add(b).expect("tau exponent overflow"))
            }
            _ => TauCoeff::Zero,
        }
    }

    /// Addition over F_2.  Equal powers cancel; unequal powers are an
    /// inhomogeneous sum and are rejected.
    pub fn checked_add(self, rhs: TauCoeff) -> Result<TauCoeff, GradingError> {
        match (self, rhs) {
            (TauCoeff::Zero, x) | (x, TauCoeff::Zero) => Ok(x),
            (TauCoeff::Tau(a), TauCoeff::Tau(b)) => {
                if a == b {
                    Ok(TauCoeff::Zero)
                } else {
                    Err(GradingError::InhomogeneousSum(a, b))
                }
            }
        }
    }
}

impl fmt::Display for TauCoeff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TauCoeff::Zero => write!(f, "0"),
            TauCoeff::Tau(0) => write!(f, "1"),
            TauCoeff::Tau(1) => write!(f, "tau"),
            TauCoeff::Tau(k) => write!(f, "tau^{k}"),
        }
    }
}

/// Whether the engine runs with the tau-graded coefficients or with tau set
/// to the unit (plain F_2), which recovers the classical algebra.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Motivic,
    Classical,
}

impl Mode {
    pub fn is_classical(self) -> bool {
        matches!(self, Mode::Classical)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Motivic => write!(f, "motivic"),
            Mode::Classical => write!(f, "classical"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chow_weight_basics() {
        assert_eq!(Bidegree::ZERO.chow_weight(), 0);
        assert_eq!(Bidegree::new(2, 1).chow_weight(), 0);
        // bidegree of P^(1,1) is (4,1); two odd entries
        assert_eq!(Bidegree::new(4, 1).chow_weight(), -2);
    }

    #[test]
    fn bidegree_add_identity() {
        assert_eq!(Bidegree::new(2, 1) + Bidegree::new(2, 1), Bidegree::new(4, 2));
        assert_eq!(Bidegree::ZERO + Bidegree::new(3, 1), Bidegree::new(3, 1));
    }

    #[test]
    fn chow_weight_additive_on_grid() {
        for p1 in -6..=6 {
            for w1 in -6..=6 {
                for p2 in -6..=6 {
                    for w2 in -6..=6 {
                        let a = Bidegree::new(p1, w1);
                        let b = Bidegree::new(p2, w2);
                        assert_eq!((a + b).chow_weight(), a.chow_weight() + b.chow_weight());
                    }
                }
            }
        }
    }

    #[test]
    fn tau_mul() {
        assert_eq!(TauCoeff::Tau(1).mul(TauCoeff::Tau(2)), TauCoeff::Tau(3));
        assert_eq!(TauCoeff::Zero.mul(TauCoeff::Tau(5)), TauCoeff::Zero);
        assert_eq!(TauCoeff::Tau(0).mul(TauCoeff::Tau(0)), TauCoeff::Tau(0));
    }

    #[test]
    fn tau_add_rejects_inhomogeneous() {
        assert_eq!(
            TauCoeff::Tau(2).checked_add(TauCoeff::Tau(2)),
            Ok(TauCoeff::Zero)
        );
        assert_eq!(
            TauCoeff::Tau(1).checked_add(TauCoeff::Tau(2)),
            Err(GradingError::InhomogeneousSum(1, 2))
        );
    }

    #[test]
    fn ext_degree_stem() {
        let d = ExtDegree::new(3, 9, 5);
        assert_eq!(d.stem(), 6);
    }
}
