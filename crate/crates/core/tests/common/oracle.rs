//! Double-double (~106-bit) natural logarithm, used as an independent
//! high-precision reference for log-ratio scores.

#[derive(Debug, Clone, Copy)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

const LN2: Dd = Dd {
    hi: std::f64::consts::LN_2,
    lo: 2.319_046_813_846_299_6e-17,
};

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    Dd { hi: s, lo: b - (s - a) }
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl Dd {
    pub fn from(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    pub fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let e = e + t;
        let r = quick_two_sum(s, e);
        quick_two_sum(r.hi, r.lo + f)
    }

    pub fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }

    pub fn sub(self, o: Dd) -> Dd {
        self.add(o.neg())
    }

    pub fn mul(self, o: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, o.hi);
        quick_two_sum(p, e + (self.hi * o.lo + self.lo * o.hi))
    }

    pub fn mul_f(self, k: f64) -> Dd {
        self.mul(Dd::from(k))
    }

    pub fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self.sub(o.mul_f(q1));
        let q2 = r.hi / o.hi;
        let r = r.sub(o.mul_f(q2));
        let q3 = r.hi / o.hi;
        quick_two_sum(q1, q2).add(Dd::from(q3))
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
}

/// `ln(x)` for positive finite `x` in double-double precision.
///
/// `x = m · 2^e` with `m` in `[√½, √2)`, then
/// `ln m = 2·atanh(t)`, `t = (m-1)/(m+1)`, summed as an odd power series.
pub fn ln_dd(x: f64) -> Dd {
    assert!(x > 0.0 && x.is_finite());
    let mut e = x.log2().floor() as i32;
    let mut m = x / 2f64.powi(e);
    while m >= 2.0 {
        m /= 2.0;
        e += 1;
    }
    while m < 1.0 {
        m *= 2.0;
        e -= 1;
    }
    if m > std::f64::consts::SQRT_2 {
        m /= 2.0;
        e += 1;
    }
    let (s, err) = two_sum(m, 1.0);
    let num = Dd::from(m - 1.0);
    let t = num.div(Dd { hi: s, lo: err });
    let t2 = t.mul(t);
    let mut term = t;
    let mut sum = t;
    for k in 1..40 {
        term = term.mul(t2);
        let contrib = term.div(Dd::from((2 * k + 1) as f64));
        sum = sum.add(contrib);
        if contrib.hi.abs() < 1e-40 {
            break;
        }
    }
    sum.mul_f(2.0).add(LN2.mul_f(e as f64))
}

/// High-precision `ln(a / b)` rounded to f64.
pub fn log_ratio(a: f64, b: f64) -> f64 {
    ln_dd(a).sub(ln_dd(b)).to_f64()
}
