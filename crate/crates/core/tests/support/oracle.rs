// Brute-force reference for the distribution metrics, evaluated term by
// term in MPFR arithmetic straight from raw logits.

use rug::ops::Pow;
use rug::{Assign, Float};

pub const PRECISION: u32 = 160;

#[derive(Clone, Copy, Debug)]
pub struct Reference {
    pub entropy: f64,
    pub varentropy: f64,
    pub skewentropy: f64,
}

fn float(v: f64) -> Float {
    Float::with_val(PRECISION, v)
}

/// Natural-log probabilities and probabilities of `softmax(logits)`.
///
/// The normalizer is `1 + rest` with `rest` summed over every entry but the
/// largest, and its log is taken with `ln_1p` so the dominant entry keeps
/// full relative precision.
pub fn softmax(logits: &[f64]) -> (Vec<Float>, Vec<Float>) {
    let argmax = logits
        .iter()
        .enumerate()
        .fold(0, |best, (i, &z)| if z > logits[best] { i } else { best });
    let max = logits[argmax];
    let mut shifted = Vec::with_capacity(logits.len());
    let mut exps = Vec::with_capacity(logits.len());
    let mut rest = float(0.0);
    for (i, &z) in logits.iter().enumerate() {
        let s = float(z) - max;
        let e = if i == argmax {
            float(1.0)
        } else {
            s.clone().exp()
        };
        if i != argmax {
            rest += &e;
        }
        shifted.push(s);
        exps.push(e);
    }
    let log_total = rest.clone().ln_1p();
    let total = rest + 1u32;
    let log_probs = shifted.into_iter().map(|s| s - &log_total).collect();
    let probs = exps.into_iter().map(|e| e / &total).collect();
    (log_probs, probs)
}

/// H = -Σ p ln p, Var = Σ p (ln p)² - H², Skew = Σ p (ln p + H)³ / Var^{3/2}.
pub fn reference(logits: &[f64]) -> Reference {
    let (log_probs, probs) = softmax(logits);
    reference_from(&log_probs, &probs)
}

pub fn reference_from(log_probs: &[Float], probs: &[Float]) -> Reference {
    let mut entropy = float(0.0);
    let mut second = float(0.0);
    let mut term = float(0.0);
    for (lp, p) in log_probs.iter().zip(probs) {
        term.assign(p * lp);
        entropy -= &term;
        term *= lp;
        second += &term;
    }
    let varentropy = second - Float::with_val(PRECISION, entropy.square_ref());
    let mut third = float(0.0);
    let mut centered = float(0.0);
    for (lp, p) in log_probs.iter().zip(probs) {
        centered.assign(lp + &entropy);
        term.assign(centered.square_ref());
        term *= &centered;
        term *= p;
        third += &term;
    }
    let skewentropy = if varentropy.to_f64() < 1e-12 {
        0.0
    } else {
        let scale = Float::with_val(PRECISION, varentropy.clone().pow(1.5f64));
        (third / scale).to_f64()
    };
    Reference {
        entropy: entropy.to_f64(),
        varentropy: varentropy.to_f64().max(0.0),
        skewentropy,
    }
}

/// `-ln p` of entry `index` of `softmax(logits)`.
pub fn surprisal(logits: &[f64], index: usize) -> f64 {
    let (log_probs, _) = softmax(logits);
    (-log_probs[index].clone()).to_f64()
}

/// Metrics of an explicit probability vector (entries may be zero).
pub fn reference_probs(probs: &[f64]) -> Reference {
    let kept: Vec<Float> = probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| float(p))
        .collect();
    let log_probs: Vec<Float> = kept.iter().map(|p| p.clone().ln()).collect();
    reference_from(&log_probs, &kept)
}

pub fn relative_error(value: f64, reference: f64) -> f64 {
    if reference == 0.0 {
        value.abs()
    } else {
        ((value - reference) / reference).abs()
    }
}

/// Logits with a random spread and a random (possibly large) offset.
pub fn random_logits<R: rand::Rng>(rng: &mut R, size: usize) -> Vec<f64> {
    use rand_distr::{Distribution, Normal};
    const SCALES: [f64; 5] = [0.05, 0.5, 2.0, 8.0, 25.0];
    let scale = SCALES[rng.random_range(0..SCALES.len())];
    let offset = match rng.random_range(0..3) {
        0 => 0.0,
        1 => rng.random_range(-50.0..50.0),
        _ => rng.random_range(-1e4..1e4),
    };
    let normal = Normal::new(offset, scale).expect("positive scale");
    (0..size).map(|_| normal.sample(rng)).collect()
}

/// The same metrics in double-double arithmetic (about 106 significant
/// bits). Per-entry work stays in `f64` pairs; only the normalizer's log and
/// the final skew ratio go through MPFR. Entries below `exp(-708)` relative
/// to the largest are dropped.
pub fn reference_dd(logits: &[f64]) -> Reference {
    use dd::Dd;
    let argmax = logits
        .iter()
        .enumerate()
        .fold(0, |best, (i, &z)| if z > logits[best] { i } else { best });
    let max = logits[argmax];
    let shifted: Vec<Dd> = logits.iter().map(|&z| Dd::diff(z, max)).collect();
    let exps: Vec<Dd> = shifted
        .iter()
        .enumerate()
        .map(|(i, &s)| if i == argmax { Dd::ONE } else { s.exp() })
        .collect();
    let mut rest = Dd::ZERO;
    for (i, &e) in exps.iter().enumerate() {
        if i != argmax {
            rest = rest + e;
        }
    }
    let log_total = Dd::from_float(&rest.to_float().ln_1p());
    let total = rest + Dd::ONE;

    let mut entropy = Dd::ZERO;
    let mut second = Dd::ZERO;
    let mut terms = Vec::with_capacity(logits.len());
    for (&s, &e) in shifted.iter().zip(&exps) {
        if e.is_zero() {
            continue;
        }
        let lp = s - log_total;
        let p = e / total;
        let t = p * lp;
        entropy = entropy - t;
        second = second + t * lp;
        terms.push((lp, p));
    }
    let varentropy = second - entropy * entropy;
    let mut third = Dd::ZERO;
    for (lp, p) in terms {
        let c = lp + entropy;
        third = third + p * c * c * c;
    }
    let var = varentropy.to_float();
    let skewentropy = if var.to_f64() < 1e-12 {
        0.0
    } else {
        let scale = Float::with_val(PRECISION, var.pow(1.5f64));
        (third.to_float() / scale).to_f64()
    };
    Reference {
        entropy: entropy.to_float().to_f64(),
        varentropy: varentropy.to_float().to_f64().max(0.0),
        skewentropy,
    }
}

mod dd {
    use std::ops::{Add, Div, Mul, Sub};

    use rug::Float;

    use super::PRECISION;

    /// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi) / 2`.
    #[derive(Clone, Copy, Debug)]
    pub struct Dd {
        hi: f64,
        lo: f64,
    }

    fn two_sum(a: f64, b: f64) -> (f64, f64) {
        let s = a + b;
        let bb = s - a;
        (s, (a - (s - bb)) + (b - bb))
    }

    fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
        let s = a + b;
        (s, b - (s - a))
    }

    fn two_prod(a: f64, b: f64) -> (f64, f64) {
        let p = a * b;
        (p, a.mul_add(b, -p))
    }

    const LN2: Dd = Dd {
        hi: std::f64::consts::LN_2,
        lo: 2.319_046_813_846_299_6e-17,
    };

    impl Dd {
        pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
        pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

        fn new(hi: f64, lo: f64) -> Dd {
            let (hi, lo) = quick_two_sum(hi, lo);
            Dd { hi, lo }
        }

        /// `a - b` without rounding.
        pub fn diff(a: f64, b: f64) -> Dd {
            let (hi, lo) = two_sum(a, -b);
            Dd { hi, lo }
        }

        pub fn is_zero(self) -> bool {
            self.hi == 0.0
        }

        fn scale(self, k: i32) -> Dd {
            let f = 2f64.powi(k);
            Dd {
                hi: self.hi * f,
                lo: self.lo * f,
            }
        }

        fn mul_f64(self, b: f64) -> Dd {
            let (p, e) = two_prod(self.hi, b);
            Dd::new(p, e + self.lo * b)
        }

        fn div_f64(self, b: f64) -> Dd {
            let q1 = self.hi / b;
            let r = self - Dd::from(b).mul_f64(q1);
            let q2 = r.hi / b;
            Dd::new(q1, q2)
        }

        pub fn exp(self) -> Dd {
            if self.hi < -708.0 {
                return Dd::ZERO;
            }
            let k = (self.hi / LN2.hi).round();
            // |r| <= ln 2 / 2^10 after reduction.
            let r = (self - LN2.mul_f64(k)).scale(-9);
            let mut term = r;
            let mut sum = r;
            for n in 2..=12 {
                term = (term * r).div_f64(n as f64);
                sum = sum + term;
            }
            // expm1(2x) = 2 expm1(x) + expm1(x)^2
            for _ in 0..9 {
                sum = sum.mul_f64(2.0) + sum * sum;
            }
            (sum + Dd::ONE).scale(k as i32)
        }

        pub fn to_float(self) -> Float {
            Float::with_val(PRECISION, self.hi) + self.lo
        }

        pub fn from_float(x: &Float) -> Dd {
            let hi = x.to_f64();
            let lo = Float::with_val(PRECISION, x - hi).to_f64();
            Dd::new(hi, lo)
        }
    }

    impl From<f64> for Dd {
        fn from(hi: f64) -> Dd {
            Dd { hi, lo: 0.0 }
        }
    }

    impl Add for Dd {
        type Output = Dd;
        fn add(self, o: Dd) -> Dd {
            let (s1, s2) = two_sum(self.hi, o.hi);
            let (t1, t2) = two_sum(self.lo, o.lo);
            let (s1, s2) = quick_two_sum(s1, s2 + t1);
            Dd::new(s1, s2 + t2)
        }
    }

    impl Sub for Dd {
        type Output = Dd;
        fn sub(self, o: Dd) -> Dd {
            self + Dd {
                hi: -o.hi,
                lo: -o.lo,
            }
        }
    }

    impl Mul for Dd {
        type Output = Dd;
        fn mul(self, o: Dd) -> Dd {
            let (p, e) = two_prod(self.hi, o.hi);
            Dd::new(p, e + (self.hi * o.lo + self.lo * o.hi))
        }
    }

    impl Div for Dd {
        type Output = Dd;
        fn div(self, o: Dd) -> Dd {
            let q1 = self.hi / o.hi;
            let r = self - o.mul_f64(q1);
            let q2 = r.hi / o.hi;
            let r = r - o.mul_f64(q2);
            let q3 = r.hi / o.hi;
            Dd::new(q1, q2) + Dd::from(q3)
        }
    }
}
