//! Gamma function in double precision (Lanczos, g = 7, nine terms) with the
//! reflection formula below 1/2. Relative error stays near 1e-15 on the
//! positive axis.

use std::f64::consts::PI;

const G: f64 = 7.0;
const COEFFS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

pub fn gamma(x: f64) -> f64 {
    if x < 0.5 {
        return PI / ((PI * x).sin() * gamma(1.0 - x));
    }
    let x = x - 1.0;
    let mut acc = COEFFS[0];
    for (i, &c) in COEFFS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + G + 0.5;
    (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_integer_closed_forms() {
        let sp = PI.sqrt();
        let cases = [
            (0.5, sp),
            (1.5, sp / 2.0),
            (2.5, 3.0 * sp / 4.0),
            (3.5, 15.0 * sp / 8.0),
            (5.5, 945.0 * sp / 32.0),
        ];
        for (x, want) in cases {
            assert!((gamma(x) / want - 1.0).abs() < 1e-13, "Γ({x})");
        }
    }

    #[test]
    fn integers_are_factorials() {
        let mut fact = 1.0;
        for n in 1..15 {
            assert!((gamma(n as f64) / fact - 1.0).abs() < 1e-13, "Γ({n})");
            fact *= n as f64;
        }
    }
}
