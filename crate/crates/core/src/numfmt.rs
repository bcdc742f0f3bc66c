//! Float formatting shared by every CSV writer.

/// Formats `x` with 9 significant digits, in the style of C's `%.9g`.
///
/// Fixed notation is used for decimal exponents in `[-5, 9)`, scientific
/// otherwise; trailing zeros are stripped in both cases.
pub fn sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.8e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(format!("{:.*}", decimals, x))
    } else {
        format!("{}e{}", trim_zeros(mantissa.to_string()), exp)
    }
}

/// Rounds `x` to the value a CSV reader recovers from [`sig9`].
pub fn round_sig9(x: f64) -> f64 {
    sig9(x).parse().expect("sig9 output parses")
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formats_like_printf_g() {
        assert_eq!(sig9(0.0), "0");
        assert_eq!(sig9(1.0), "1");
        assert_eq!(sig9(0.1), "0.1");
        assert_eq!(sig9(1.0 / 3.0), "0.333333333");
        assert_eq!(sig9(123456789.0), "123456789");
        assert_eq!(sig9(1234567890.0), "1.23456789e9");
        assert_eq!(sig9(-2.5e-7), "-2.5e-7");
        assert_eq!(sig9(0.95 * 0.5 / 6.0), "0.0791666667");
    }

    #[test]
    fn rounding_is_idempotent() {
        for x in [1.0 / 3.0, 2.0f64.sqrt() * 1e6, 7.123456789123e-4] {
            let r = round_sig9(x);
            assert_eq!(round_sig9(r), r);
            assert_eq!(sig9(r), sig9(x));
        }
    }
}
