//! Extended-precision reference values, computed from decimal parameter
//! strings with 256-bit floats. Nothing here calls into the library's
//! numerics.

#![allow(dead_code)]

use astro_float::{BigFloat, Consts, Radix, RoundingMode};

const P: usize = 256;
const RM: RoundingMode = RoundingMode::ToEven;

/// Decimal inputs: σ enters only through σ².
#[derive(Debug, Clone, Copy)]
pub struct DecParams {
    pub mu: &'static str,
    pub r: &'static str,
    pub sigma2: &'static str,
    pub p: &'static str,
    pub beta: &'static str,
    pub horizon: &'static str,
}

pub const REFERENCE: DecParams =
    DecParams { mu: "0.10", r: "0.05", sigma2: "0.2", p: "0.5", beta: "0.10", horizon: "1" };
pub const STRESS: DecParams = DecParams { beta: "0", p: "-1", ..REFERENCE };

#[derive(Debug, Clone, Copy)]
pub struct OracleConstants {
    pub theta: f64,
    pub a: f64,
    pub gamma2: f64,
    pub nu: f64,
    pub b: f64,
    pub m: f64,
}

pub struct Oracle {
    cc: Consts,
    mu: BigFloat,
    r: BigFloat,
    s2: BigFloat,
    p: BigFloat,
    beta: BigFloat,
    horizon: BigFloat,
    theta: BigFloat,
    a: BigFloat,
    gamma2: BigFloat,
    nu: BigFloat,
    b: BigFloat,
    m: BigFloat,
}

fn f(x: f64) -> BigFloat {
    BigFloat::from_f64(x, P)
}

fn add(a: &BigFloat, b: &BigFloat) -> BigFloat {
    a.add(b, P, RM)
}
fn sub(a: &BigFloat, b: &BigFloat) -> BigFloat {
    a.sub(b, P, RM)
}
fn mul(a: &BigFloat, b: &BigFloat) -> BigFloat {
    a.mul(b, P, RM)
}
fn div(a: &BigFloat, b: &BigFloat) -> BigFloat {
    a.div(b, P, RM)
}

impl Oracle {
    pub fn new(d: DecParams) -> Self {
        let mut cc = Consts::new().expect("constant cache");
        let mut dec = |s: &str| BigFloat::parse(s, Radix::Dec, P, RM, &mut cc);
        let (mu, r, s2, p, beta, horizon) = (dec(d.mu), dec(d.r), dec(d.sigma2), dec(d.p), dec(d.beta), dec(d.horizon));
        let one = f(1.0);
        let one_m_p = sub(&one, &p);
        let excess = sub(&mu, &r);
        let theta = div(&excess, &mul(&one_m_p, &s2));
        // A = r − β/p + ½(μ−r)²/((1−p)σ²)
        let a = add(&sub(&r, &div(&beta, &p)), &div(&mul(&excess, &excess), &mul(&f(2.0), &mul(&one_m_p, &s2))));
        let q = mul(&theta, &sub(&one, &theta));
        let q2 = mul(&q, &q);
        let gamma2 = mul(&mul(&div(&f(9.0), &f(32.0)), &mul(&one_m_p, &mul(&q2, &q2))).cbrt(P, RM), &s2);
        let nu = mul(&div(&f(12.0), &one_m_p), &q2).cbrt(P, RM);
        let two_thirds = div(&f(2.0), &f(3.0));
        let b = add(&mul(&mul(&two_thirds, &p.abs()), &mul(&horizon, &gamma2)), &one);
        // ξ² = ⅔p(T−t)γ₂ + B is affine in t; its maximum sits at t = 0 or T.
        let xi0 = add(&mul(&mul(&two_thirds, &p), &mul(&horizon, &gamma2)), &b).sqrt(P, RM);
        let xi_t = b.sqrt(P, RM);
        let xi_max = if xi0.cmp(&xi_t).unwrap_or(0) > 0 { xi0 } else { xi_t };
        let abs_term = mul(&sub(&one, &theta), &sub(&one, &mul(&f(2.0), &theta))).abs();
        let op1 = add(
            &mul(&div(&mul(&f(6.0), &s2), &nu), &add(&mul(&mul(&f(2.0), &nu), &mul(&theta, &abs_term)), &one)),
            &one,
        );
        let op2 = add(&mul(&mul(&mul(&f(0.5), &s2), &one_m_p), &mul(&mul(&nu, &nu), &xi_max)), &one);
        let mut big = if op1.cmp(&op2).unwrap_or(0) > 0 { op1 } else { op2 };
        if big.cmp(&one).unwrap_or(0) < 0 {
            big = one.clone();
        }
        let neg_pa = mul(&p, &a).neg();
        let m = add(&add(&theta, &one), &mul(&div(&f(2.0), &neg_pa), &big));
        Self { cc, mu, r, s2, p, beta, horizon, theta, a, gamma2, nu, b, m }
    }

    pub fn narrow(&mut self, x: &BigFloat) -> f64 {
        let s = x.format(Radix::Dec, RM, &mut self.cc).expect("format");
        s.parse().unwrap_or_else(|_| panic!("unparseable oracle output {s}"))
    }

    pub fn constants(&mut self) -> OracleConstants {
        let (theta, a, gamma2, nu, b, m) =
            (self.theta.clone(), self.a.clone(), self.gamma2.clone(), self.nu.clone(), self.b.clone(), self.m.clone());
        OracleConstants {
            theta: self.narrow(&theta),
            a: self.narrow(&a),
            gamma2: self.narrow(&gamma2),
            nu: self.narrow(&nu),
            b: self.narrow(&b),
            m: self.narrow(&m),
        }
    }

    /// Frictionless value (1/p)e^{pA(T−t)} at unit wealth.
    pub fn merton_value(&mut self, t: f64) -> f64 {
        let tau = sub(&self.horizon, &f(t));
        let e = mul(&mul(&self.p, &self.a), &tau).exp(P, RM, &mut self.cc);
        let v = div(&e, &self.p);
        self.narrow(&v)
    }

    /// The buy (`sell = false`) or sell smooth-pasting function at `(t, δ)`
    /// for side sign `side` (+1 for w⁺, −1 for w⁻).
    fn pasting(&mut self, sell: bool, side: f64, t: f64, delta: &BigFloat, lambda: &BigFloat) -> BigFloat {
        let p = self.p.clone();
        let tau = sub(&self.horizon, &f(t));
        let decay = mul(&mul(&p, &self.a), &tau).neg().exp(P, RM, &mut self.cc);
        let l13 = lambda.cbrt(P, RM);
        let l23 = mul(&l13, &l13);
        let l43 = mul(lambda, &l13);
        let l53 = mul(lambda, &l23);
        let nu2 = mul(&self.nu, &self.nu);
        let d2 = mul(delta, delta);
        // h and h' from h(δ) = (3/2)δ²λ^{2/3} − δ⁴/ν² + (3/2)Bδ²λ^{4/3}.
        let quad = mul(&f(1.5), &add(&l23, &mul(&self.b, &l43)));
        let h = sub(&mul(&quad, &d2), &div(&mul(&d2, &d2), &nu2));
        let h1 = sub(&mul(&mul(&f(2.0), &quad), delta), &div(&mul(&f(4.0), &mul(&d2, delta)), &nu2));
        let s = f(if sell { -1.0 } else { 1.0 });
        let lead = add(&s, &mul(&add(&self.theta, delta), lambda));
        let growth = mul(&mul(&p, &self.a), &tau).exp(P, RM, &mut self.cc);
        let g2t = mul(&mul(&mul(&self.gamma2, &tau), &growth), &decay);
        let first = mul(&self.nu, lambda);
        let second = mul(&mul(&p, &self.nu), &mul(&g2t, &l53));
        let m_term = mul(&f(side), &mul(&mul(&mul(&p, &self.nu), &mul(&self.m, &decay)), &mul(lambda, lambda)));
        let ph = mul(&mul(&p, &h), lambda);
        add(&sub(&add(&sub(&first, &second), &m_term), &ph), &mul(&lead, &h1))
    }

    /// Every crossing of the pasting function in the correct direction on
    /// the half-interval of width νλ^{1/3}, refined by bisection. Buy
    /// roots are upward crossings on the negative side, sell roots downward
    /// crossings on the positive side.
    pub fn pasting_roots(&mut self, sell: bool, side: f64, t: f64, lambda: f64, scan: usize) -> Vec<f64> {
        let lam = f(lambda);
        let width = self.narrow(&mul(&self.nu.clone(), &lam.cbrt(P, RM)));
        let (lo, hi) = if sell { (0.0, width) } else { (-width, 0.0) };
        let want_up = !sell;
        let xs: Vec<f64> = (0..=scan).map(|k| lo + (hi - lo) * k as f64 / scan as f64).collect();
        let vals: Vec<bool> = xs.iter().map(|x| !self.pasting(sell, side, t, &f(*x), &lam).is_negative()).collect();
        let mut roots = vec![];
        for k in 0..scan {
            let (a_pos, b_pos) = (vals[k], vals[k + 1]);
            let crossing = if want_up { !a_pos && b_pos } else { a_pos && !b_pos };
            if !crossing {
                continue;
            }
            let (mut a, mut b) = (f(xs[k]), f(xs[k + 1]));
            for _ in 0..200 {
                let mid = mul(&add(&a, &b), &f(0.5));
                let pos = !self.pasting(sell, side, t, &mid, &lam).is_negative();
                if pos == a_pos {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            let r = mul(&add(&a, &b), &f(0.5));
            roots.push(self.narrow(&r));
        }
        roots
    }
}

/// `|a − b| / |b|`.
pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}
