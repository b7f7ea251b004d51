//! Answer checking at 1% relative tolerance.

use std::sync::OnceLock;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use regex::Regex;
use serde::{Deserialize, Serialize};

/// Relative tolerance of the answer metric.
pub const RELATIVE_TOLERANCE: (i64, i64) = (1, 100);
/// Absolute tolerance used when the key is zero.
pub const ZERO_KEY_TOLERANCE: (i64, i64) = (1, 100);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerCheck {
    pub correct: bool,
    /// No number could be extracted from the prediction.
    pub no_number: bool,
}

fn number_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"[-+]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][-+]?\d+)?(?:\s*/\s*(?:\d+(?:\.\d*)?|\.\d+))?",
        )
        .expect("valid regex")
    })
}

fn parse_decimal(text: &str) -> Option<BigRational> {
    let text = text.trim();
    let (neg, body) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text.strip_prefix('+').unwrap_or(text)),
    };
    let (mantissa, exp) = match body.find(['e', 'E']) {
        Some(i) => (&body[..i], body[i + 1..].parse::<i32>().ok()?),
        None => (body, 0),
    };
    let (int, frac) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    let digits: BigInt = format!("0{int}{frac}").parse().ok()?;
    let scale = exp - frac.len() as i32;
    let ten = BigInt::from(10);
    let v = if scale >= 0 {
        BigRational::from_integer(digits * num_traits::pow(ten, scale as usize))
    } else {
        BigRational::new(digits, num_traits::pow(ten, (-scale) as usize))
    };
    Some(if neg { -v } else { v })
}

/// Parses a decimal, scientific or `a/b` number exactly.
pub fn parse_number(text: &str) -> Option<BigRational> {
    match text.split_once('/') {
        Some((n, d)) => {
            let (n, d) = (parse_decimal(n)?, parse_decimal(d)?);
            (!d.is_zero()).then(|| n / d)
        }
        None => parse_decimal(text),
    }
}

/// Last number token in `text`.
pub fn last_number(text: &str) -> Option<BigRational> {
    number_regex()
        .find_iter(text)
        .last()
        .and_then(|m| parse_number(m.as_str()))
}

fn ratio(t: (i64, i64)) -> BigRational {
    BigRational::new(t.0.into(), t.1.into())
}

/// Compares the last number in `predicted` with `key` exactly:
/// correct iff |pred − key| ≤ 0.01·|key|, or |pred| ≤ 0.01 when key is zero.
pub fn check_answer(predicted: &str, key: &BigRational) -> AnswerCheck {
    let Some(pred) = last_number(predicted) else {
        return AnswerCheck {
            correct: false,
            no_number: true,
        };
    };
    let correct = if key.is_zero() {
        pred.abs() <= ratio(ZERO_KEY_TOLERANCE)
    } else {
        (&pred - key).abs() <= key.abs() * ratio(RELATIVE_TOLERANCE)
    };
    AnswerCheck {
        correct,
        no_number: false,
    }
}

/// `check_answer` with the key given as text.
pub fn check_answer_text(predicted: &str, key: &str) -> Option<AnswerCheck> {
    parse_number(key).map(|k| check_answer(predicted, &k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ok(pred: &str, key: &str) -> bool {
        check_answer_text(pred, key).unwrap().correct
    }

    #[test]
    fn examples() {
        assert!(ok("the answer is 5.04", "5"));
        assert!(!ok("5.1", "5"));
        assert!(ok("x = 0.0001", "0"));
        assert!(!ok("x = 0.02", "0"));
    }

    #[test]
    fn last_token_wins() {
        assert!(ok("AB = 3, so CD = 7/2", "3.5"));
        assert!(!ok("3.5 at first, but finally 4", "7/2"));
        assert!(ok("1.2e1", "12"));
    }

    #[test]
    fn no_number_is_flagged() {
        let c = check_answer_text("no idea", "3").unwrap();
        assert!(!c.correct && c.no_number);
        assert_eq!(check_answer_text("3", "abc"), None);
    }

    #[test]
    fn boundary_is_exact() {
        // Binary floating point would reject 0.707 against 0.7.
        assert!(ok("0.707", "0.7"));
        assert!(!ok("0.70701", "0.7"));
        assert!(ok("-2.02", "-2"));
    }

    fn frac(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    proptest! {
        /// pred = key·(1 + e) with e = en/10000 is correct iff |e| ≤ 1/100.
        #[test]
        fn relative_rule(kn in -5000i64..5000, kd in 1i64..200, en in -300i64..300) {
            prop_assume!(kn != 0);
            let key = frac(kn, kd);
            let pred = &key * (frac(1, 1) + frac(en, 10_000));
            let text = format!("answer: {}/{}", pred.numer(), pred.denom());
            let got = check_answer(&text, &key);
            prop_assert_eq!(got.correct, en.abs() <= 100);
        }

        #[test]
        fn zero_key_is_absolute(n in -1000i64..1000) {
            let pred = frac(n, 10_000);
            let got = check_answer(&format!("{}/{}", pred.numer(), pred.denom()), &frac(0, 1));
            prop_assert_eq!(got.correct, n.abs() <= 100);
        }
    }
}
