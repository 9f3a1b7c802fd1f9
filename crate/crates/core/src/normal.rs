//! Univariate and bivariate standard normal distribution functions.
//!
//! The bivariate CDF follows Genz's `BVND` routine (Drezner–Wesolowsky with
//! Gauss–Legendre quadrature on the arcsine representation), which is accurate
//! to roughly 1e-15 across the whole parameter range.

use std::f64::consts::{PI, SQRT_2};

use libm::erfc;

use crate::error::{Error, Result};

const TWO_PI: f64 = 2.0 * PI;

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    if x == f64::INFINITY {
        return 1.0;
    }
    if x == f64::NEG_INFINITY {
        return 0.0;
    }
    0.5 * erfc(-x / SQRT_2)
}

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / TWO_PI.sqrt()
}

/// Inverse of the standard normal CDF (Wichura's AS241, ~1e-16 relative).
pub fn norm_inv(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q
            * (((((((2509.080_928_730_122_7 * r + 33430.575_583_588_128) * r + 67265.770_927_008_700_853) * r
                + 45921.953_931_549_871_457)
                * r
                + 13731.693_765_509_461_125)
                * r
                + 1971.590_950_306_551_442_7)
                * r
                + 133.141_667_891_784_377_02)
                * r
                + 3.387_132_872_796_366_608)
            / (((((((5226.495_278_852_545_925 * r + 28729.085_735_721_942_674) * r + 39307.895_800_092_710_61)
                * r
                + 21213.794_301_586_595_867)
                * r
                + 5394.196_021_424_751_077_1)
                * r
                + 687.187_007_492_057_908_95)
                * r
                + 42.313_330_701_600_911_252)
                * r
                + 1.0);
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        r -= 1.6;
        (((((((7.745_450_142_783_414_076_4e-4 * r + 0.022_723_844_989_269_184_583) * r
            + 0.241_780_725_177_450_611_77)
            * r
            + 1.270_458_252_452_368_382_58)
            * r
            + 3.647_848_324_763_204_605_04)
            * r
            + 5.769_497_221_460_691_405_5)
            * r
            + 4.630_337_846_156_545_295_9)
            * r
            + 1.423_437_110_749_683_577_34)
            / (((((((1.050_750_071_644_416_843_24e-9 * r + 5.475_938_084_995_344_946e-4) * r
                + 0.015_198_666_563_616_457_2)
                * r
                + 0.148_103_976_427_480_074_59)
                * r
                + 0.689_767_334_985_100_004_55)
                * r
                + 1.676_384_830_183_803_849_4)
                * r
                + 2.053_191_626_637_758_821_87)
                * r
                + 1.0)
    } else {
        r -= 5.0;
        (((((((2.010_334_399_292_288_132_65e-7 * r + 2.711_555_568_743_487_578_11e-5) * r
            + 0.001_242_660_947_388_078_438_6)
            * r
            + 0.026_532_189_526_576_123_093)
            * r
            + 0.296_560_571_828_504_891_23)
            * r
            + 1.784_826_539_917_291_335_8)
            * r
            + 5.463_784_911_164_114_369_9)
            * r
            + 6.657_904_643_501_103_777_2)
            / (((((((2.044_263_103_389_939_785_64e-15 * r + 1.421_511_758_316_445_887_88e-7) * r
                + 1.846_318_317_510_054_681_8e-5)
                * r
                + 7.868_691_311_456_132_591e-4)
                * r
                + 0.014_875_361_290_850_614_852)
                * r
                + 0.136_929_880_922_735_805_31)
                * r
                + 0.599_832_206_555_887_937_69)
                * r
                + 1.0)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

// Gauss–Legendre abscissae/weights for 6, 12 and 20 points (one half, negative side).
const GL6: [(f64, f64); 3] = [
    (0.171_324_492_379_170_5, -0.932_469_514_203_152_2),
    (0.360_761_573_048_138_4, -0.661_209_386_466_264_7),
    (0.467_913_934_572_690_4, -0.238_619_186_083_197_0),
];

const GL12: [(f64, f64); 6] = [
    (0.047_175_336_386_511_77, -0.981_560_634_246_719_1),
    (0.106_939_325_995_318_3, -0.904_117_256_370_475_0),
    (0.160_078_328_543_346_4, -0.769_902_674_194_305_0),
    (0.203_167_426_723_065_9, -0.587_317_954_286_617_1),
    (0.233_492_536_538_354_7, -0.367_831_498_998_180_2),
    (0.249_147_045_813_402_9, -0.125_233_408_511_469_2),
];

const GL20: [(f64, f64); 10] = [
    (0.017_614_007_139_152_12, -0.993_128_599_185_094_9),
    (0.040_601_429_800_386_94, -0.963_971_927_277_913_8),
    (0.062_672_048_334_109_06, -0.912_234_428_251_325_9),
    (0.083_276_741_576_704_75, -0.839_116_971_822_218_8),
    (0.101_930_119_817_240_4, -0.746_331_906_460_150_8),
    (0.118_194_531_961_518_4, -0.636_053_680_726_515_0),
    (0.131_688_638_449_176_6, -0.510_867_001_950_827_1),
    (0.142_096_109_318_382_1, -0.373_706_088_715_419_6),
    (0.149_172_986_472_603_7, -0.227_785_851_141_645_1),
    (0.152_753_387_130_725_9, -0.076_526_521_133_497_33),
];

/// Upper-orthant probability `P(X > h, Y > k)` for a standard bivariate normal
/// with correlation `r`, `|r| < 1`, finite `h`, `k`.
fn bvnd(h: f64, k: f64, r: f64) -> f64 {
    let nodes: &[(f64, f64)] = if r.abs() < 0.3 {
        &GL6
    } else if r.abs() < 0.75 {
        &GL12
    } else {
        &GL20
    };
    let mut hk = h * k;
    let mut bvn = 0.0;
    if r.abs() < 0.925 {
        let hs = (h * h + k * k) / 2.0;
        let asr = r.asin();
        for &(w, x) in nodes {
            for sign in [-1.0, 1.0] {
                let sn = (asr * (sign * x + 1.0) / 2.0).sin();
                bvn += w * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
            }
        }
        return bvn * asr / (2.0 * TWO_PI) + norm_cdf(-h) * norm_cdf(-k);
    }
    let mut k = k;
    if r < 0.0 {
        k = -k;
        hk = -hk;
    }
    if r.abs() < 1.0 {
        let as_ = (1.0 - r) * (1.0 + r);
        let mut a = as_.sqrt();
        let bs = (h - k) * (h - k);
        let c = (4.0 - hk) / 8.0;
        let d = (12.0 - hk) / 16.0;
        bvn = a
            * (-(bs / as_ + hk) / 2.0).exp()
            * (1.0 - c * (bs - as_) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as_ * as_ / 5.0);
        if hk > -160.0 {
            let b = bs.sqrt();
            bvn -=
                (-hk / 2.0).exp() * TWO_PI.sqrt() * norm_cdf(-b / a) * b * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
        }
        a /= 2.0;
        for &(w, x) in nodes {
            for sign in [-1.0, 1.0] {
                let xs = (a * (sign * x + 1.0)).powi(2);
                let rs = (1.0 - xs).sqrt();
                let asr = -(bs / xs + hk) / 2.0;
                if asr > -100.0 {
                    bvn += a
                        * w
                        * asr.exp()
                        * ((-hk * (1.0 - rs) / (2.0 * (1.0 + rs))).exp() / rs - (1.0 + c * xs * (1.0 + d * xs)));
                }
            }
        }
        bvn = -bvn / TWO_PI;
    }
    if r > 0.0 {
        bvn + norm_cdf(-h.max(k))
    } else {
        let mut out = -bvn;
        if k > h {
            if h < 0.0 {
                out += norm_cdf(k) - norm_cdf(h);
            } else {
                out += norm_cdf(-h) - norm_cdf(-k);
            }
        }
        out
    }
}

/// `P(X ≤ x, Y ≤ y)` for a standard bivariate normal pair with correlation `rho`.
///
/// Infinite arguments reduce to the univariate marginal; `|rho| = 1` uses the
/// degenerate comonotone / countermonotone closed forms.
pub fn bivariate_normal_cdf(x: f64, y: f64, rho: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&rho) || rho.is_nan() {
        return Err(Error::InvalidParameter(format!("correlation {rho} outside [-1, 1]")));
    }
    if x.is_nan() || y.is_nan() {
        return Err(Error::InvalidParameter("NaN argument".into()));
    }
    if x == f64::NEG_INFINITY || y == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    if x == f64::INFINITY {
        return Ok(norm_cdf(y));
    }
    if y == f64::INFINITY {
        return Ok(norm_cdf(x));
    }
    if rho == 1.0 {
        return Ok(norm_cdf(x.min(y)));
    }
    if rho == -1.0 {
        return Ok((norm_cdf(x) + norm_cdf(y) - 1.0).max(0.0));
    }
    Ok(bvnd(-x, -y, rho).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    // Independent oracle: P(X≤x,Y≤y) = ∫_{-∞}^{x} φ(s) Φ((y-ρs)/√(1-ρ²)) ds,
    // composite Simpson on a truncated range.
    fn quad_oracle(x: f64, y: f64, rho: f64) -> f64 {
        let lo = -12.0;
        let hi = x.min(12.0);
        if hi <= lo {
            return 0.0;
        }
        let n = 200_000;
        let h = (hi - lo) / n as f64;
        let s = (1.0 - rho * rho).sqrt();
        let f = |t: f64| norm_pdf(t) * norm_cdf((y - rho * t) / s);
        let mut acc = f(lo) + f(hi);
        for i in 1..n {
            let t = lo + i as f64 * h;
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(t);
        }
        acc * h / 3.0
    }

    #[test]
    fn independence_at_origin() {
        assert!((bivariate_normal_cdf(0.0, 0.0, 0.0).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn sheppard_formula() {
        for &rho in &[-0.99, -0.95, -0.8, -0.5, -0.2, 0.1, 0.5, 0.8, 0.93, 0.999] {
            let expect = 0.25 + f64::asin(rho) / TWO_PI;
            let got = bivariate_normal_cdf(0.0, 0.0, rho).unwrap();
            assert!((got - expect).abs() < 1e-12, "rho={rho}: {got} vs {expect}");
        }
    }

    #[test]
    fn marginal_limits() {
        for &y in &[-2.0, -0.3, 0.0, 1.7] {
            let v = bivariate_normal_cdf(f64::INFINITY, y, 0.4).unwrap();
            assert_eq!(v, norm_cdf(y));
        }
        assert_eq!(bivariate_normal_cdf(f64::NEG_INFINITY, 1.0, 0.3).unwrap(), 0.0);
    }

    #[test]
    fn matches_quadrature_oracle() {
        let cases = [
            (0.3, -0.7, 0.2),
            (-1.2, 0.4, 0.6),
            (1.5, 1.1, 0.95),
            (-0.5, -0.9, -0.97),
            (2.0, -1.0, -0.4),
            (0.8, 0.8, 0.85),
            (-2.5, 2.5, 0.99),
        ];
        for (x, y, r) in cases {
            let got = bivariate_normal_cdf(x, y, r).unwrap();
            let want = quad_oracle(x, y, r);
            assert!((got - want).abs() < 1e-10, "({x},{y},{r}): {got} vs {want}");
        }
    }

    #[test]
    fn degenerate_correlations() {
        assert!((bivariate_normal_cdf(0.3, -0.2, 1.0).unwrap() - norm_cdf(-0.2)).abs() < 1e-16);
        let w = (norm_cdf(0.3) + norm_cdf(0.5) - 1.0).max(0.0);
        assert!((bivariate_normal_cdf(0.3, 0.5, -1.0).unwrap() - w).abs() < 1e-16);
        assert!(bivariate_normal_cdf(0.0, 0.0, 1.2).is_err());
    }

    #[test]
    fn inverse_roundtrip() {
        for i in 1..1000 {
            let p = i as f64 / 1000.0;
            assert!((norm_cdf(norm_inv(p)) - p).abs() < 1e-15);
        }
        for &p in &[1e-12, 1e-8, 1.0 - 1e-10] {
            assert!(((norm_cdf(norm_inv(p)) - p) / p.min(1.0 - p)).abs() < 1e-9);
        }
    }
}
