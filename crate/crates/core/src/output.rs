//! Number formatting shared by every CSV writer.

/// Scientific notation with 17 significant digits, which round-trips `f64`.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips() {
        for x in [0.1, -1.0 / 3.0, 6.02214076e23, 0.0, 5e-324] {
            assert_eq!(fmt17(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt17(1.5), "1.5000000000000000e0");
    }
}
