//! Lower mechanical words `s(n) = floor((n+1)a) - floor(n a)` with slope
//! given by continued fraction terms, intercept 0.
//!
//! The slope is only known to lie strictly between the last convergent
//! and its mediant with the previous one; every floor is settled by exact
//! rational interval arithmetic or the build fails.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::lattice::{Alphabet, TilingOracle, Window};

/// Open interval of slopes compatible with `[0; terms...]`, as two
/// fractions `lo < hi`.
#[derive(Clone, Debug)]
pub struct SlopeInterval {
    lo: (BigInt, BigInt),
    hi: (BigInt, BigInt),
}

impl SlopeInterval {
    pub fn new(terms: &[u64]) -> Result<Self> {
        if terms.contains(&0) {
            return Err(Error::InvalidConfig(
                "continued fraction terms must be positive".into(),
            ));
        }
        // p_{-1}/q_{-1} = 1/0, p_0/q_0 = 0/1
        let (mut p_prev, mut q_prev) = (BigInt::one(), BigInt::zero());
        let (mut p, mut q) = (BigInt::zero(), BigInt::one());
        for &a in terms {
            let a = BigInt::from(a);
            let p_next = &a * &p + &p_prev;
            let q_next = &a * &q + &q_prev;
            p_prev = std::mem::replace(&mut p, p_next);
            q_prev = std::mem::replace(&mut q, q_next);
        }
        // remaining tail t in (1, inf): alpha = (t p + p_prev) / (t q + q_prev)
        let end = (p.clone(), q.clone());
        let mediant = (&p + &p_prev, &q + &q_prev);
        let (lo, hi) = if &end.0 * &mediant.1 < &mediant.0 * &end.1 {
            (end, mediant)
        } else {
            (mediant, end)
        };
        Ok(SlopeInterval { lo, hi })
    }

    /// `floor(n * alpha)` when it is the same for every slope in the
    /// interval.
    pub fn floor_mul(&self, n: i64) -> Option<BigInt> {
        if n == 0 {
            return Some(BigInt::zero());
        }
        let nb = BigInt::from(n);
        let (a, b) = if n > 0 {
            (&self.lo, &self.hi)
        } else {
            (&self.hi, &self.lo)
        };
        // n*alpha ranges over the open interval (n a.0/a.1, n b.0/b.1)
        let fa = (&nb * &a.0).div_floor(&a.1);
        // settled iff upper end <= fa + 1
        let upper_ok = &nb * &b.0 <= (&fa + 1) * &b.1;
        upper_ok.then_some(fa)
    }

    pub fn approx(&self) -> f64 {
        let f = |x: &(BigInt, BigInt)| {
            x.0.to_string().parse::<f64>().unwrap() / x.1.to_string().parse::<f64>().unwrap()
        };
        (f(&self.lo) + f(&self.hi)) / 2.0
    }
}

pub fn build_sturmian_oracle(cf_terms: &[u64], window: &Window) -> Result<TilingOracle> {
    if window.dim() != 1 {
        return Err(Error::InvalidArgument(
            "sturmian oracles are one-dimensional".into(),
        ));
    }
    let slope = SlopeInterval::new(cf_terms)?;
    let lo = window.lo()[0];
    let hi = window.hi()[0];
    let mut floors = Vec::with_capacity((hi - lo + 2) as usize);
    for n in lo..=hi + 1 {
        floors.push(
            slope
                .floor_mul(n)
                .ok_or(Error::InsufficientPrecision { n })?,
        );
    }
    let labels = floors
        .windows(2)
        .map(|w| if w[1] == w[0] { 0u8 } else { 1u8 })
        .collect();
    let terms: Vec<String> = cf_terms.iter().map(|t| t.to_string()).collect();
    let provenance = format!("sturmian cf=[0;{}] intercept=0", terms.join(","));
    TilingOracle::from_labels(
        Alphabet::new(["a", "b"])?,
        window.clone(),
        provenance,
        labels,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Cell;

    #[test]
    fn golden_mean_is_fibonacci_with_letters_exchanged() {
        let o = build_sturmian_oracle(&[1; 30], &Window::interval(-50, 50).unwrap()).unwrap();
        let swapped: String = o
            .word(1, 13)
            .unwrap()
            .chars()
            .map(|c| if c == 'a' { 'b' } else { 'a' })
            .collect();
        assert_eq!(swapped, "abaababaabaab");
    }

    #[test]
    fn growing_terms_settle_large_window() {
        let terms: Vec<u64> = (1..=12).collect();
        let o = build_sturmian_oracle(&terms, &Window::interval(-2000, 2000).unwrap());
        assert!(o.is_ok());
    }

    #[test]
    fn one_term_is_insufficient() {
        let r = build_sturmian_oracle(&[1], &Window::interval(-1_000_000, 1_000_000).unwrap());
        assert!(matches!(r, Err(Error::InsufficientPrecision { .. })));
    }

    #[test]
    fn floors_match_float_slope() {
        let terms: Vec<u64> = (1..=12).collect();
        let s = SlopeInterval::new(&terms).unwrap();
        let alpha = s.approx();
        for n in -300i64..300 {
            let f = s.floor_mul(n).unwrap();
            assert_eq!(
                f,
                BigInt::from((n as f64 * alpha).floor() as i64),
                "n = {n}"
            );
        }
        let o = build_sturmian_oracle(&terms, &Window::interval(-5, 5).unwrap()).unwrap();
        assert_eq!(o.label_at(&Cell::from(-1)).unwrap(), 1);
    }

    #[test]
    fn zero_term_rejected() {
        assert!(SlopeInterval::new(&[1, 0, 2]).is_err());
    }
}
