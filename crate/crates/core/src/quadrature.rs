//! Trapezoidal integration of sampled signals clipped to an interval.
//!
//! The signal is the piecewise-linear interpolant through the samples, so
//! the integral is additive over adjacent intervals and exact for linear
//! integrands.

use crate::domain::Timestamp;

/// Linear interpolation of the sampled signal at `t`. `None` if `t` lies
/// outside the sampled range.
pub fn interpolate<S>(
    samples: &[S],
    time: impl Fn(&S) -> Timestamp,
    value: impl Fn(&S) -> f64,
    t: Timestamp,
) -> Option<f64> {
    let i = samples.partition_point(|s| time(s) < t);
    let hi = samples.get(i)?;
    if time(hi) == t {
        return Some(value(hi));
    }
    let lo = samples.get(i.checked_sub(1)?)?;
    Some(lerp(time(lo), value(lo), time(hi), value(hi), t))
}

/// Integral over `[start, end]` in value-seconds. `None` if the samples do
/// not bracket the interval.
pub fn integrate<S>(
    samples: &[S],
    time: impl Fn(&S) -> Timestamp,
    value: impl Fn(&S) -> f64,
    start: Timestamp,
    end: Timestamp,
) -> Option<f64> {
    if end < start {
        return None;
    }
    // last sample at or before start, first at or after end
    let first = samples.partition_point(|s| time(s) <= start).checked_sub(1)?;
    let last = samples.partition_point(|s| time(s) < end);
    if last >= samples.len() {
        return None;
    }
    if start == end {
        return Some(0.0);
    }
    let mut acc = 0.0;
    for k in first..last {
        let (a, b) = (&samples[k], &samples[k + 1]);
        let (ta, tb) = (time(a), time(b));
        let (va, vb) = (value(a), value(b));
        let lo = ta.max(start);
        let hi = tb.min(end);
        if hi <= lo {
            continue;
        }
        let v_lo = if lo == ta { va } else { lerp(ta, va, tb, vb, lo) };
        let v_hi = if hi == tb { vb } else { lerp(ta, va, tb, vb, hi) };
        acc += 0.5 * (hi - lo) as f64 * (v_lo + v_hi);
    }
    Some(acc)
}

fn lerp(ta: Timestamp, va: f64, tb: Timestamp, vb: f64, t: Timestamp) -> f64 {
    let w = (t - ta) as f64 / (tb - ta) as f64;
    va + w * (vb - va)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(p: &(i64, f64)) -> i64 {
        p.0
    }
    fn v(p: &(i64, f64)) -> f64 {
        p.1
    }

    #[test]
    fn linear_signal_is_exact() {
        let s = [(0, 0.0), (10, 10.0), (30, 30.0)];
        // integral of x from 5 to 25
        let got = integrate(&s, t, v, 5, 25).unwrap();
        assert!((got - (25.0 * 25.0 - 25.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn requires_bracketing() {
        let s = [(10, 1.0), (20, 1.0)];
        assert!(integrate(&s, t, v, 0, 15).is_none());
        assert!(integrate(&s, t, v, 15, 25).is_none());
        assert_eq!(integrate(&s, t, v, 10, 20), Some(10.0));
        assert_eq!(interpolate(&s, t, v, 15), Some(1.0));
        assert_eq!(interpolate(&s, t, v, 9), None);
        assert_eq!(interpolate(&s, t, v, 21), None);
    }

    proptest! {
        #[test]
        fn additive_over_split(
            vals in proptest::collection::vec(-50.0f64..50.0, 3..30),
            a in 0.0f64..1.0, b in 0.0f64..1.0, c in 0.0f64..1.0,
        ) {
            let s: alloc::vec::Vec<(i64, f64)> =
                vals.iter().enumerate().map(|(i, &x)| (i as i64 * 7, x)).collect();
            let span = s.last().unwrap().0 as f64;
            let mut cut = [a, b, c].map(|x| (x * span) as i64);
            cut.sort();
            let whole = integrate(&s, t, v, cut[0], cut[2]).unwrap();
            let left = integrate(&s, t, v, cut[0], cut[1]).unwrap();
            let right = integrate(&s, t, v, cut[1], cut[2]).unwrap();
            let scale = 1.0 + whole.abs() + left.abs() + right.abs();
            prop_assert!((whole - left - right).abs() <= 1e-9 * scale);
        }
    }
}
