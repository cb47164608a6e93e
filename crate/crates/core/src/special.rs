//! Log-gamma, digamma and trigamma for positive arguments.
//!
//! Arguments below `SHIFT` are pushed up with the recurrence relations and the
//! asymptotic (Stirling) series is evaluated there.

use crate::scalar::Scalar;

const SHIFT: f64 = 10.0;
const HALF_LN_TWO_PI: f64 = 0.918_938_533_204_672_8;

/// `ln Γ(x)` for `x > 0`.
pub fn ln_gamma<T: Scalar>(x: T) -> T {
    debug_assert!(x > T::zero(), "ln_gamma needs a positive argument");
    let shift = T::of(SHIFT);
    let mut z = x;
    let mut prod = T::one();
    let mut acc = T::zero();
    while z < shift {
        prod = prod * z;
        // keep the running product in range for tiny arguments
        if prod < T::of(1e-30) {
            acc = acc + prod.ln();
            prod = T::one();
        }
        z = z + T::one();
    }
    acc = acc + prod.ln();
    let inv = z.recip();
    let inv2 = inv * inv;
    let series = inv
        * (T::of(1.0 / 12.0)
            + inv2
                * (T::of(-1.0 / 360.0)
                    + inv2
                        * (T::of(1.0 / 1260.0)
                            + inv2
                                * (T::of(-1.0 / 1680.0)
                                    + inv2 * (T::of(1.0 / 1188.0) + inv2 * T::of(-691.0 / 360_360.0))))));
    (z - T::of(0.5)) * z.ln() - z + T::of(HALF_LN_TWO_PI) + series - acc
}

/// `ln n!`.
pub fn ln_factorial<T: Scalar>(n: u64) -> T {
    if n < 2 {
        return T::zero();
    }
    ln_gamma(T::of(n as f64 + 1.0))
}

/// Digamma `ψ(x) = d/dx ln Γ(x)` for `x > 0`.
pub fn digamma<T: Scalar>(x: T) -> T {
    debug_assert!(x > T::zero());
    let shift = T::of(SHIFT);
    let mut z = x;
    let mut acc = T::zero();
    while z < shift {
        acc = acc - z.recip();
        z = z + T::one();
    }
    let inv = z.recip();
    let inv2 = inv * inv;
    let series = inv2
        * (T::of(-1.0 / 12.0)
            + inv2
                * (T::of(1.0 / 120.0)
                    + inv2 * (T::of(-1.0 / 252.0) + inv2 * (T::of(1.0 / 240.0) + inv2 * T::of(-1.0 / 132.0)))));
    acc + z.ln() - T::of(0.5) * inv + series
}

/// Trigamma `ψ'(x)` for `x > 0`.
pub fn trigamma<T: Scalar>(x: T) -> T {
    debug_assert!(x > T::zero());
    let shift = T::of(SHIFT);
    let mut z = x;
    let mut acc = T::zero();
    while z < shift {
        acc = acc + (z * z).recip();
        z = z + T::one();
    }
    let inv = z.recip();
    let inv2 = inv * inv;
    let series = inv
        + T::of(0.5) * inv2
        + inv
            * inv2
            * (T::of(1.0 / 6.0)
                + inv2
                    * (T::of(-1.0 / 30.0)
                        + inv2 * (T::of(1.0 / 42.0) + inv2 * (T::of(-1.0 / 30.0) + inv2 * T::of(5.0 / 66.0)))));
    acc + series
}
