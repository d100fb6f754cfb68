/// Rounds `x` to 9 significant decimal digits.
///
/// Every stored real goes through this, so a value written to disk reads
/// back bit-identical. Non-finite input passes through unchanged.
pub fn sig9(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.8e}").parse().expect("formatted float parses")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn known_values() {
        assert_eq!(sig9(0.1), 0.1);
        assert_eq!(sig9(1.0 / 3.0), 0.333333333);
        assert_eq!(sig9(123456789.123), 123456789.0);
        assert_eq!(sig9(-2.5e-12), -2.5e-12);
        assert_eq!(sig9(0.0), 0.0);
    }

    proptest! {
        #[test]
        fn idempotent_and_json_stable(x in -1e12f64..1e12) {
            let y = sig9(x);
            prop_assert_eq!(sig9(y), y);
            let text = serde_json::to_string(&y).unwrap();
            let back: f64 = serde_json::from_str(&text).unwrap();
            prop_assert_eq!(back, y);
            prop_assert!((y - x).abs() <= x.abs() * 1e-8);
        }
    }
}
