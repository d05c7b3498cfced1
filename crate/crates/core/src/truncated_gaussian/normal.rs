//! Univariate and bivariate standard normal primitives.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

use libm::erfc;
use statrs::function::erf::erfc_inv;

pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

pub fn pdf(x: f64) -> f64 {
    if x.is_infinite() {
        return 0.0;
    }
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

/// Standard normal CDF with full relative accuracy in the lower tail.
pub fn cdf(x: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        0.0
    } else if x == f64::INFINITY {
        1.0
    } else {
        0.5 * erfc(-x * FRAC_1_SQRT_2)
    }
}

pub fn inv_cdf(p: f64) -> f64 {
    if p <= 0.0 {
        f64::NEG_INFINITY
    } else if p >= 1.0 {
        f64::INFINITY
    } else {
        -SQRT_2 * erfc_inv(2.0 * p)
    }
}

/// `P(a < Z < b)` for a standard normal `Z`, avoiding cancellation in the tails.
pub fn interval(a: f64, b: f64) -> f64 {
    if a >= b {
        return 0.0;
    }
    if a > 0.0 {
        cdf(-a) - cdf(-b)
    } else {
        cdf(b) - cdf(a)
    }
}

const GL_W6: [f64; 3] = [0.171_324_492_379_170_5, 0.360_761_573_048_138_4, 0.467_913_934_572_690_4];
const GL_X6: [f64; 3] = [0.932_469_514_203_152_2, 0.661_209_386_466_264_7, 0.238_619_186_083_197_0];
const GL_W12: [f64; 6] = [
    0.047_175_336_386_511_77,
    0.106_939_325_995_318_3,
    0.160_078_328_543_346_4,
    0.203_167_426_723_065_9,
    0.233_492_536_538_354_7,
    0.249_147_045_813_402_9,
];
const GL_X12: [f64; 6] = [
    0.981_560_634_246_719_1,
    0.904_117_256_370_475_0,
    0.769_902_674_194_305_0,
    0.587_317_954_286_617_1,
    0.367_831_498_998_180_2,
    0.125_233_408_511_469_2,
];
const GL_W20: [f64; 10] = [
    0.017_614_007_139_152_12,
    0.040_601_429_800_386_94,
    0.062_672_048_334_109_06,
    0.083_276_741_576_704_75,
    0.101_930_119_817_240_4,
    0.118_194_531_961_518_4,
    0.131_688_638_449_176_6,
    0.142_096_109_318_382_1,
    0.149_172_986_472_603_7,
    0.152_753_387_130_725_9,
];
const GL_X20: [f64; 10] = [
    0.993_128_599_185_094_9,
    0.963_971_927_277_913_8,
    0.912_234_428_251_325_9,
    0.839_116_971_822_218_8,
    0.746_331_906_460_150_8,
    0.636_053_680_726_515_0,
    0.510_867_001_950_827_1,
    0.373_706_088_715_419_6,
    0.227_785_851_141_645_1,
    0.076_526_521_133_497_33,
];

/// Upper orthant probability `P(X > h, Y > k)` for standard normals with
/// correlation `r` (Drezner–Wesolowsky with Genz's refinements).
pub fn bvn_upper(h: f64, k: f64, r: f64) -> f64 {
    if h == f64::INFINITY || k == f64::INFINITY {
        return 0.0;
    }
    if h == f64::NEG_INFINITY {
        return cdf(-k);
    }
    if k == f64::NEG_INFINITY {
        return cdf(-h);
    }
    let r = r.clamp(-1.0, 1.0);
    let (w, x): (&[f64], &[f64]) = if r.abs() < 0.3 {
        (&GL_W6, &GL_X6)
    } else if r.abs() < 0.75 {
        (&GL_W12, &GL_X12)
    } else {
        (&GL_W20, &GL_X20)
    };
    let mut k = k;
    let mut hk = h * k;
    let mut bvn = 0.0;
    if r.abs() < 0.925 {
        let hs = 0.5 * (h * h + k * k);
        let asr = 0.5 * r.asin();
        for (&wi, &xi) in w.iter().zip(x) {
            for node in [1.0 - xi, 1.0 + xi] {
                let sn = (asr * node).sin();
                bvn += wi * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
            }
        }
        bvn = bvn * asr / (2.0 * PI) + cdf(-h) * cdf(-k);
    } else {
        if r < 0.0 {
            k = -k;
            hk = -hk;
        }
        if r.abs() < 1.0 {
            let a_s = (1.0 - r) * (1.0 + r);
            let mut a = a_s.sqrt();
            let bs = (h - k) * (h - k);
            let c = (4.0 - hk) / 8.0;
            let d = (12.0 - hk) / 80.0;
            let asr = -0.5 * (bs / a_s + hk);
            if asr > -100.0 {
                bvn = a * asr.exp() * (1.0 - c * (bs - a_s) * (1.0 - d * bs) / 3.0 + c * d * a_s * a_s);
            }
            if hk > -100.0 {
                let b = bs.sqrt();
                let sp = (2.0 * PI).sqrt() * cdf(-b / a);
                bvn -= (-0.5 * hk).exp() * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0);
            }
            a *= 0.5;
            let mut acc = 0.0;
            for (&wi, &xi) in w.iter().zip(x) {
                for node in [1.0 - xi, 1.0 + xi] {
                    let xs = (a * node).powi(2);
                    let asr = -0.5 * (bs / xs + hk);
                    if asr > -100.0 {
                        let sp = 1.0 + c * xs * (1.0 + 5.0 * d * xs);
                        let rs = (1.0 - xs).sqrt();
                        let ep = (-0.5 * hk * xs / (1.0 + rs).powi(2)).exp() / rs;
                        acc += wi * asr.exp() * (sp - ep);
                    }
                }
            }
            bvn = (a * acc - bvn) / (2.0 * PI);
        }
        if r > 0.0 {
            bvn += cdf(-h.max(k));
        } else if h >= k {
            bvn = -bvn;
        } else {
            let l = if h < 0.0 { cdf(k) - cdf(h) } else { cdf(-h) - cdf(-k) };
            bvn = l - bvn;
        }
    }
    bvn.clamp(0.0, 1.0)
}

/// `P(a1 < X < b1, a2 < Y < b2)` for standard normals with correlation `r`.
///
/// Coordinates whose lower bound is infinite are reflected so that the
/// inclusion-exclusion only runs over finite upper bounds.
pub fn bvn_rect(a1: f64, b1: f64, a2: f64, b2: f64, r: f64) -> f64 {
    if a1 >= b1 || a2 >= b2 {
        return 0.0;
    }
    let full1 = a1 == f64::NEG_INFINITY && b1 == f64::INFINITY;
    let full2 = a2 == f64::NEG_INFINITY && b2 == f64::INFINITY;
    if full1 {
        return interval(a2, b2);
    }
    if full2 {
        return interval(a1, b1);
    }
    let mut r = r;
    let (a1, b1) = if a1 == f64::NEG_INFINITY {
        r = -r;
        (-b1, f64::INFINITY)
    } else {
        (a1, b1)
    };
    let (a2, b2) = if a2 == f64::NEG_INFINITY {
        r = -r;
        (-b2, f64::INFINITY)
    } else {
        (a2, b2)
    };
    let mut p = bvn_upper(a1, a2, r);
    if b1.is_finite() {
        p -= bvn_upper(b1, a2, r);
    }
    if b2.is_finite() {
        p -= bvn_upper(a1, b2, r);
    }
    if b1.is_finite() && b2.is_finite() {
        p += bvn_upper(b1, b2, r);
    }
    p.clamp(0.0, 1.0)
}

/// Bivariate normal density at `(x, y)` with covariance `[[s11, s12], [s12, s22]]`.
pub fn bvn_pdf(x: f64, y: f64, s11: f64, s12: f64, s22: f64) -> f64 {
    let det = s11 * s22 - s12 * s12;
    let q = (s22 * x * x - 2.0 * s12 * x * y + s11 * y * y) / det;
    (-0.5 * q).exp() / (2.0 * PI * det.sqrt())
}
