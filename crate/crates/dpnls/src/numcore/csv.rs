//! Plain CSV output with 17 significant digits.

use super::field::{ComplexField, RealField};
use std::fmt::Write;

/// Format with 17 significant digits (round-trip exact).
pub fn fmt17(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    format!("{x:.16e}")
}

pub fn row(values: &[f64]) -> String {
    values.iter().map(|v| fmt17(*v)).collect::<Vec<_>>().join(",")
}

pub fn real_field_csv(f: &RealField) -> String {
    let mut s = String::from("r,val\n");
    for (r, v) in f.grid().nodes().iter().zip(f.values()) {
        let _ = writeln!(s, "{},{}", fmt17(*r), fmt17(*v));
    }
    s
}

pub fn complex_field_csv(f: &ComplexField) -> String {
    let mut s = String::from("r,re,im\n");
    for (r, v) in f.grid().nodes().iter().zip(f.values()) {
        let _ = writeln!(s, "{},{},{}", fmt17(*r), fmt17(v.re), fmt17(v.im));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        for x in [1.0 / 3.0, -2.5e-300, 6.02e23, std::f64::consts::PI] {
            assert_eq!(fmt17(x).parse::<f64>().unwrap(), x);
        }
    }
}
