//! Custom float token codec.
//!
//! A metric value is rendered as sign, significant digits and a power-of-ten
//! exponent, each a single custom token. Three layouts are supported:
//! sign/digits/exponent (default), a merged sign+mantissa token followed by
//! the exponent, and sign/exponent/digits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenScheme {
    SignDigitsExp,
    MergedMantissa,
    ExpBeforeMantissa,
}

/// One custom token of the float alphabet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FloatToken {
    /// `<+>` or `<->`.
    Sign(bool),
    /// `<0>` .. `<9>`.
    Digit(u8),
    /// `<E-3>`, `<E0>`, `<E12>`, ...
    Exp(i32),
    /// Merged sign and mantissa, e.g. `<+1234>`. `digits` always renders
    /// with `num_digits` characters.
    Mantissa { negative: bool, digits: u32 },
}

impl FloatToken {
    pub fn render(&self, num_digits: usize) -> String {
        match self {
            FloatToken::Sign(neg) => if *neg { "<->" } else { "<+>" }.into(),
            FloatToken::Digit(d) => format!("<{d}>"),
            FloatToken::Exp(e) => format!("<E{e}>"),
            FloatToken::Mantissa { negative, digits } => {
                let sign = if *negative { '-' } else { '+' };
                format!("<{sign}{digits:0width$}>", width = num_digits)
            }
        }
    }
}

/// A y-value codec: scheme, mantissa precision and exponent token range.
///
/// The exponent token `<E e>` stores the negated decimal exponent of the
/// leading digit: digits `d1 d2 .. dk` with `<E e>` read as
/// `d1.d2..dk * 10^-e`, so `<+><7><2><5><E-1>` is `7.25 * 10^1 = 72.5` and
/// `<+><1><2><3><4><E-2>` is `123.4`. Magnitudes therefore span
/// `[10^exp_min, 9.99.. * 10^exp_max]` at full precision. Smaller values are
/// stored with leading-zero digits at `e = exp_max` (losing precision) and
/// larger ones saturate to the top of the range; both cases are flagged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FloatTokenization {
    pub scheme: TokenScheme,
    pub num_digits: usize,
    pub exp_min: i32,
    pub exp_max: i32,
}

impl Default for FloatTokenization {
    fn default() -> Self {
        Self {
            scheme: TokenScheme::SignDigitsExp,
            num_digits: 4,
            exp_min: -20,
            exp_max: 20,
        }
    }
}

impl FloatTokenization {
    pub fn with_scheme(scheme: TokenScheme) -> Self {
        Self { scheme, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_digits < 1 {
            return Err(Error::InvalidConfig("num_digits must be >= 1".into()));
        }
        if self.exp_min >= self.exp_max {
            return Err(Error::InvalidConfig("exp_min must be < exp_max".into()));
        }
        Ok(())
    }

    /// Number of tokens in every encoded sequence.
    pub fn seq_len(&self) -> usize {
        match self.scheme {
            TokenScheme::SignDigitsExp | TokenScheme::ExpBeforeMantissa => self.num_digits + 2,
            TokenScheme::MergedMantissa => 2,
        }
    }

    fn exp_tokens(&self) -> impl Iterator<Item = FloatToken> + '_ {
        (self.exp_min..=self.exp_max).map(FloatToken::Exp)
    }

    fn mantissa_tokens(&self) -> Vec<FloatToken> {
        // Zero plus all mantissas with a nonzero leading digit:
        // 2 * 9 * 10^(num_digits-1) tokens, ~18K at four digits.
        let lo = 10u32.pow(self.num_digits as u32 - 1);
        let hi = 10u32.pow(self.num_digits as u32);
        let mut out = vec![FloatToken::Mantissa { negative: false, digits: 0 }];
        for negative in [false, true] {
            for digits in lo..hi {
                out.push(FloatToken::Mantissa { negative, digits });
            }
        }
        out
    }

    /// The full custom-token alphabet of this codec, in stable order.
    pub fn alphabet(&self) -> Vec<FloatToken> {
        let mut out = vec![];
        match self.scheme {
            TokenScheme::SignDigitsExp | TokenScheme::ExpBeforeMantissa => {
                out.push(FloatToken::Sign(false));
                out.push(FloatToken::Sign(true));
                out.extend((0..10).map(|d| FloatToken::Digit(d)));
                out.extend(self.exp_tokens());
            }
            TokenScheme::MergedMantissa => {
                out.extend(self.mantissa_tokens());
                out.extend(self.exp_tokens());
            }
        }
        out
    }

    /// Tokens allowed at `position`; every sequence accepted position by
    /// position detokenizes, and every `tokenize` output is accepted.
    pub fn allowed_tokens(&self, position: usize) -> Vec<FloatToken> {
        let digits = || (0..10).map(FloatToken::Digit).collect::<Vec<_>>();
        let signs = || vec![FloatToken::Sign(false), FloatToken::Sign(true)];
        let exps = || self.exp_tokens().collect::<Vec<_>>();
        match self.scheme {
            TokenScheme::SignDigitsExp => {
                if position == 0 {
                    signs()
                } else if position <= self.num_digits {
                    digits()
                } else if position == self.num_digits + 1 {
                    exps()
                } else {
                    vec![]
                }
            }
            TokenScheme::ExpBeforeMantissa => {
                if position == 0 {
                    signs()
                } else if position == 1 {
                    exps()
                } else if position <= self.num_digits + 1 {
                    digits()
                } else {
                    vec![]
                }
            }
            TokenScheme::MergedMantissa => match position {
                0 => self.mantissa_tokens(),
                1 => exps(),
                _ => vec![],
            },
        }
    }

    /// Encodes a value; the flag reports exponent-range saturation.
    pub fn tokenize_checked(&self, value: f64) -> Result<(Vec<FloatToken>, bool)> {
        if !value.is_finite() {
            return Err(Error::Tokenization(format!("non-finite value {value}")));
        }
        let k = self.num_digits as i32;
        let (negative, mantissa, exp, saturated) = if value == 0.0 {
            (false, 0u64, 0i32, false)
        } else {
            let a = value.abs();
            let negative = value < 0.0;
            let mut p = a.log10().floor() as i32;
            let mut m = round_half_away(a / pow10(p - k + 1));
            if m >= 10u64.pow(k as u32) {
                m /= 10;
                p += 1;
            }
            // Token exponent is -p; big magnitudes hit exp_min, tiny ones
            // exp_max.
            if -p < self.exp_min {
                log::warn!(
                    "float token overflow: {value} saturated to exponent {}",
                    self.exp_min
                );
                (negative, 10u64.pow(k as u32) - 1, self.exp_min, true)
            } else if -p > self.exp_max {
                // Subnormal: clamp to exp_max, allow leading zeros.
                let m = round_half_away(a / pow10(-self.exp_max - k + 1));
                if m == 0 {
                    log::warn!("float token underflow: {value} flushed to zero");
                    (false, 0, 0, true)
                } else {
                    (negative, m, self.exp_max, true)
                }
            } else {
                (negative, m, -p, false)
            }
        };
        let mut tokens = Vec::with_capacity(self.seq_len());
        match self.scheme {
            TokenScheme::SignDigitsExp => {
                tokens.push(FloatToken::Sign(negative));
                tokens.extend(digit_tokens(mantissa, self.num_digits));
                tokens.push(FloatToken::Exp(exp));
            }
            TokenScheme::ExpBeforeMantissa => {
                tokens.push(FloatToken::Sign(negative));
                tokens.push(FloatToken::Exp(exp));
                tokens.extend(digit_tokens(mantissa, self.num_digits));
            }
            TokenScheme::MergedMantissa => {
                // Merged mantissas have no leading-zero forms besides zero;
                // subnormals round up to the smallest normal mantissa.
                let lo = 10u64.pow(self.num_digits as u32 - 1);
                let (negative, mantissa) = if mantissa == 0 {
                    (false, 0)
                } else if mantissa < lo {
                    (negative, lo)
                } else {
                    (negative, mantissa)
                };
                tokens.push(FloatToken::Mantissa { negative, digits: mantissa as u32 });
                tokens.push(FloatToken::Exp(exp));
            }
        }
        Ok((tokens, saturated))
    }

    pub fn tokenize(&self, value: f64) -> Result<Vec<FloatToken>> {
        Ok(self.tokenize_checked(value)?.0)
    }

    /// Inverse of the arithmetic rule `sign * d1.d2..dk * 10^-e`.
    pub fn detokenize(&self, tokens: &[FloatToken]) -> Result<f64> {
        if tokens.len() != self.seq_len() {
            return Err(Error::Tokenization(format!(
                "expected {} tokens, got {}",
                self.seq_len(),
                tokens.len()
            )));
        }
        for (pos, t) in tokens.iter().enumerate() {
            if !self.allowed_tokens(pos).contains(t) {
                return Err(Error::Tokenization(format!(
                    "token {} not grammatical at position {pos}",
                    t.render(self.num_digits)
                )));
            }
        }
        let (negative, mantissa, exp) = match self.scheme {
            TokenScheme::SignDigitsExp => {
                let FloatToken::Sign(neg) = tokens[0] else { unreachable!() };
                let m = digits_value(&tokens[1..=self.num_digits]);
                let FloatToken::Exp(e) = tokens[self.num_digits + 1] else { unreachable!() };
                (neg, m, e)
            }
            TokenScheme::ExpBeforeMantissa => {
                let FloatToken::Sign(neg) = tokens[0] else { unreachable!() };
                let FloatToken::Exp(e) = tokens[1] else { unreachable!() };
                let m = digits_value(&tokens[2..]);
                (neg, m, e)
            }
            TokenScheme::MergedMantissa => {
                let FloatToken::Mantissa { negative, digits } = tokens[0] else { unreachable!() };
                let FloatToken::Exp(e) = tokens[1] else { unreachable!() };
                (negative, digits as u64, e)
            }
        };
        let v = mantissa as f64 * pow10(-exp - self.num_digits as i32 + 1);
        Ok(if negative { -v } else { v })
    }
}

fn pow10(e: i32) -> f64 {
    10f64.powi(e)
}

/// Round half away from zero on a nonnegative scaled value.
fn round_half_away(x: f64) -> u64 {
    (x + 0.5).floor() as u64
}

fn digit_tokens(mantissa: u64, num_digits: usize) -> Vec<FloatToken> {
    let s = format!("{mantissa:0width$}", width = num_digits);
    s.bytes().map(|b| FloatToken::Digit(b - b'0')).collect()
}

fn digits_value(tokens: &[FloatToken]) -> u64 {
    tokens.iter().fold(0u64, |acc, t| {
        let FloatToken::Digit(d) = t else { unreachable!() };
        acc * 10 + *d as u64
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn codec(k: usize) -> FloatTokenization {
        FloatTokenization { num_digits: k, ..Default::default() }
    }

    fn render_seq(c: &FloatTokenization, tokens: &[FloatToken]) -> String {
        tokens.iter().map(|t| t.render(c.num_digits)).collect()
    }

    #[test]
    fn canonical_examples() {
        let c3 = codec(3);
        assert_eq!(render_seq(&c3, &c3.tokenize(72.5).unwrap()), "<+><7><2><5><E-1>");
        let c4 = codec(4);
        assert_eq!(render_seq(&c4, &c4.tokenize(123.4).unwrap()), "<+><1><2><3><4><E-2>");
        assert_eq!(render_seq(&c4, &c4.tokenize(0.0).unwrap()), "<+><0><0><0><0><E0>");
    }

    #[test]
    fn alternate_scheme_layouts() {
        let merged = FloatTokenization::with_scheme(TokenScheme::MergedMantissa);
        assert_eq!(render_seq(&merged, &merged.tokenize(123.4).unwrap()), "<+1234><E-2>");
        let ebm = FloatTokenization::with_scheme(TokenScheme::ExpBeforeMantissa);
        assert_eq!(render_seq(&ebm, &ebm.tokenize(123.4).unwrap()), "<+><E-2><1><2><3><4>");
        assert_eq!(render_seq(&ebm, &ebm.tokenize(-123.4).unwrap()), "<-><E-2><1><2><3><4>");
    }

    #[test]
    fn detokenize_examples() {
        let c3 = codec(3);
        let tokens = vec![
            FloatToken::Sign(false),
            FloatToken::Digit(7),
            FloatToken::Digit(2),
            FloatToken::Digit(5),
            FloatToken::Exp(-1),
        ];
        assert_eq!(c3.detokenize(&tokens).unwrap(), 72.5);
        let c4 = codec(4);
        let tokens = vec![
            FloatToken::Sign(true),
            FloatToken::Digit(1),
            FloatToken::Digit(0),
            FloatToken::Digit(0),
            FloatToken::Digit(0),
            FloatToken::Exp(0),
        ];
        assert_eq!(c4.detokenize(&tokens).unwrap(), -1.0);
    }

    #[test]
    fn round_trip_bound_all_schemes() {
        let mut rng = crate::rng::derive_rng(99, &[]);
        for scheme in [
            TokenScheme::SignDigitsExp,
            TokenScheme::MergedMantissa,
            TokenScheme::ExpBeforeMantissa,
        ] {
            let c = FloatTokenization::with_scheme(scheme);
            for _ in 0..20_000 {
                let mag: f64 = rng.gen_range(-20.0..20.0);
                let sign = if rng.gen_bool(0.5) { -1.0 } else { 1.0 };
                let y = sign * 10f64.powf(mag) * rng.gen_range(1.0..9.9999);
                let (tokens, saturated) = c.tokenize_checked(y).unwrap();
                assert!(!saturated, "{y} should be in range");
                let back = c.detokenize(&tokens).unwrap();
                let tol = 0.5 * 10f64.powi(1 - c.num_digits as i32) * y.abs();
                assert!(
                    (back - y).abs() <= tol,
                    "{y} -> {back} (scheme {scheme:?})"
                );
            }
        }
    }

    #[test]
    fn saturation_flags() {
        let c = codec(4);
        let (tokens, saturated) = c.tokenize_checked(1e40).unwrap();
        assert!(saturated);
        approx::assert_relative_eq!(c.detokenize(&tokens).unwrap(), 9.999e20, max_relative = 1e-12);
        let (tokens, saturated) = c.tokenize_checked(3.0e-22).unwrap();
        assert!(saturated);
        // Subnormal rendering clamps to exp_max with leading zeros.
        assert_eq!(render_seq(&c, &tokens), "<+><0><0><3><0><E20>");
        approx::assert_relative_eq!(c.detokenize(&tokens).unwrap(), 3.0e-22, max_relative = 1e-12);
        let (tokens, saturated) = c.tokenize_checked(1e-30).unwrap();
        assert!(saturated);
        assert_eq!(c.detokenize(&tokens).unwrap(), 0.0);
    }

    #[test]
    fn grammar_positions_default_scheme() {
        let c = codec(4);
        assert_eq!(
            c.allowed_tokens(0),
            vec![FloatToken::Sign(false), FloatToken::Sign(true)]
        );
        for pos in 1..=4 {
            assert_eq!(c.allowed_tokens(pos).len(), 10);
            assert!(matches!(c.allowed_tokens(pos)[0], FloatToken::Digit(0)));
        }
        let exps = c.allowed_tokens(5);
        assert_eq!(exps.len(), 41);
        assert!(exps.contains(&FloatToken::Exp(-20)));
        assert!(exps.contains(&FloatToken::Exp(20)));
        assert!(c.allowed_tokens(6).is_empty());
    }

    #[test]
    fn grammar_soundness_and_completeness() {
        let mut rng = crate::rng::derive_rng(7, &[]);
        for scheme in [
            TokenScheme::SignDigitsExp,
            TokenScheme::MergedMantissa,
            TokenScheme::ExpBeforeMantissa,
        ] {
            let c = FloatTokenization::with_scheme(scheme);
            // Every tokenize output is accepted per position.
            for _ in 0..200 {
                let y: f64 = rng.gen_range(-1e6..1e6);
                let tokens = c.tokenize(y).unwrap();
                for (pos, t) in tokens.iter().enumerate() {
                    assert!(c.allowed_tokens(pos).contains(t));
                }
            }
            // Every grammar-random sequence detokenizes.
            for _ in 0..200 {
                let seq: Vec<FloatToken> = (0..c.seq_len())
                    .map(|pos| {
                        let allowed = c.allowed_tokens(pos);
                        allowed[rng.gen_range(0..allowed.len())]
                    })
                    .collect();
                assert!(c.detokenize(&seq).is_ok());
            }
        }
    }

    #[test]
    fn alphabet_sizes() {
        let c = codec(4);
        assert_eq!(c.alphabet().len(), 2 + 10 + 41);
        let merged = FloatTokenization::with_scheme(TokenScheme::MergedMantissa);
        // Zero token plus 2 * 9 * 10^3 mantissas plus exponents.
        assert_eq!(merged.alphabet().len(), 1 + 18_000 + 41);
    }

    #[test]
    fn invalid_inputs_rejected() {
        let c = codec(4);
        assert!(c.tokenize(f64::NAN).is_err());
        assert!(c.detokenize(&[FloatToken::Sign(false)]).is_err());
        let bad = vec![
            FloatToken::Exp(0),
            FloatToken::Digit(1),
            FloatToken::Digit(1),
            FloatToken::Digit(1),
            FloatToken::Digit(1),
            FloatToken::Exp(0),
        ];
        assert!(c.detokenize(&bad).is_err());
    }
}
