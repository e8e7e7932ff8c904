//! Straight-line re-evaluation of the bound formulas, written directly from
//! the displayed expressions and kept free of the library's helpers.

#![allow(dead_code)]

use dml_core::bounds::{Prefactor, Regime, Theorem1Inputs, Theorem2Inputs};
use rand::Rng;

pub fn term_a(t: &Theorem1Inputs, regime: Regime) -> f64 {
    let n = t.n;
    let p = t.p;
    let b = t.b_n;
    let l = t.lambda_min;
    let q = t.q;
    let a1 = b * p.ln().powf(3.0 / 2.0) * n.ln() / (n.sqrt() * l);
    let value = match regime {
        Regime::Bounded => a1,
        Regime::SubGaussian => a1 + b.powi(2) * p.ln().powi(2) / (n * l).sqrt(),
        Regime::HeavyTailQ => {
            let a2 = b.powi(2) * p.ln().powi(2) * n.ln() / (n.powf(1.0 - 2.0 / q) * l);
            let num = b.powf(q) * p.ln().powf(3.0 * q / 2.0 - 4.0) * n.ln() * (p * n).ln();
            let den = n.powf(q / 2.0 - 1.0) * l.powf(q / 2.0);
            a1 + a2 + (num / den).powf(1.0 / (q - 2.0))
        }
    };
    t.constants.c_q * value
}

pub fn delta_1(t: &Theorem1Inputs) -> f64 {
    let s2 = 2f64.sqrt();
    let first = ((2.0 + s2) * t.alpha_bar + s2 * t.q_bar) * t.r_gamma + t.sigma_bar * t.r_alpha;
    let second = 3.0
        * t.v_n
        * t.n.powf(1.0 / (2.0 + t.delta) - 1.0 / 2.0)
        * 5.0
        * t.m_n
        * (3.0 * t.a_n).ln();
    t.constants.k * (first * (3.0 * t.v_n * (3.0 * t.a_n).ln()).sqrt() + second)
}

pub fn delta_2(t: &Theorem1Inputs) -> f64 {
    t.n.sqrt() * t.r_gamma * t.r_alpha
}

pub fn theorem1_total(t: &Theorem1Inputs, regime: Regime) -> f64 {
    let b = 6.0 * t.p.ln().sqrt() / t.sigma_min * (delta_1(t) + delta_2(t));
    term_a(t, regime) + b + t.c / t.n.ln()
}

pub struct T2 {
    pub r_vee: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    pub l_n: f64,
    pub r1: f64,
    pub r2: f64,
    pub total: f64,
}

pub fn theorem2(t: &Theorem2Inputs) -> T2 {
    let k = t.constants.k;
    let n = t.n;
    let root_n = n.sqrt();
    let env = t.v_n * n.powf(1.0 / (2.0 + t.delta) - 0.5) * t.m_n * t.a_n.ln();
    let first = t.epsilon_n / (t.c1 * root_n)
        + (1.0 / t.c1) * (1.0 / root_n) * k * (t.big_c0 * (t.v_n * t.a_n.ln()).sqrt() + env)
        + (1.0 / t.c1) * t.b_1n * t.r_eta;
    let r_vee = if first > t.r_eta { first } else { t.r_eta };
    let inv = match t.constants.prefactor {
        Prefactor::UpperC0 => 1.0 / t.big_c0,
        Prefactor::LowerC0 => 1.0 / t.c0,
    };
    let d1 = inv
        * k
        * (t.big_c0.sqrt() * r_vee.powf(t.omega / 2.0) * (2.0 * t.v_n * (2.0 * t.a_n).ln()).sqrt()
            + 2.0 * t.v_n * n.powf(1.0 / (2.0 + t.delta) - 0.5) * 2.0 * t.m_n * (2.0 * t.a_n).ln());
    let d2 = inv * 0.5 * root_n * t.b_2n * r_vee.powi(2);
    let big_log = (t.big_a_n * t.b_n).ln();
    let l_n = t.constants.d_q * t.big_v_n * if n.ln() > big_log { n.ln() } else { big_log };
    let g = t.gamma;
    let b = t.b_n;
    let d3 = b * l_n / (g.sqrt() * n.powf(0.5 - 1.0 / t.q))
        + b.sqrt() * l_n.powf(0.75) / (g.sqrt() * n.powf(0.25))
        + (b * l_n.powi(2)).powf(1.0 / 3.0) / (g.powf(1.0 / 3.0) * n.powf(1.0 / 6.0));
    let r1 = t.epsilon_n / t.c0 + d1 + d2 + d3;
    let r2 = t.constants.big_d_q * (g + n.ln() / n) + t.c / n.ln();
    let total = if r1 == 0.0 {
        r2
    } else {
        let log_term = (1.0 / r1).ln();
        t.constants.kappa
            * r1
            * (t.constants.chi * (t.big_v_n * big_log).sqrt()
                + (if log_term > 1.0 { log_term } else { 1.0 }).sqrt())
            + r2
    };
    T2 {
        r_vee,
        d1,
        d2,
        d3,
        l_n,
        r1,
        r2,
        total,
    }
}

pub fn maximal(sigma: f64, v: f64, a: f64, m: f64, q: f64, k: f64, n: f64) -> f64 {
    k * (sigma * (v * a.ln()).sqrt() + v * n.powf(1.0 / q - 1.0 / 2.0) * m * a.ln())
}

pub fn anti_concentration(p: f64, eps: f64, sigma: f64) -> f64 {
    12.0 * eps * p.ln().sqrt() / sigma
}

fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

pub fn random_theorem1<R: Rng>(rng: &mut R) -> Theorem1Inputs {
    let mut t = Theorem1Inputs {
        n: log_uniform(rng, 10.0, 1e9),
        p: log_uniform(rng, 2.0, 1e4),
        q: rng.random_range(4.0..12.0),
        b_n: log_uniform(rng, 0.1, 10.0),
        lambda_min: log_uniform(rng, 1e-3, 1.0),
        sigma_min: log_uniform(rng, 0.05, 5.0),
        q_bar: rng.random_range(0.0..5.0),
        alpha_bar: rng.random_range(0.0..20.0),
        sigma_bar: rng.random_range(0.0..5.0),
        delta: rng.random_range(0.0..4.0),
        v_n: log_uniform(rng, 1.0, 100.0),
        a_n: log_uniform(rng, std::f64::consts::E, 1e9),
        m_n: rng.random_range(0.0..10.0),
        r_gamma: rng.random_range(0.0..0.5),
        r_alpha: rng.random_range(0.0..0.5),
        c: log_uniform(rng, 1e-3, 10.0),
        ..Default::default()
    };
    t.constants.c_q = log_uniform(rng, 0.1, 10.0);
    t.constants.k = log_uniform(rng, 0.1, 10.0);
    t
}

pub fn random_theorem2<R: Rng>(rng: &mut R) -> Theorem2Inputs {
    let n = log_uniform(rng, 10.0, 1e9);
    let c0 = log_uniform(rng, 0.05, 2.0);
    let mut t = Theorem2Inputs {
        n,
        q: rng.random_range(4.0..12.0),
        epsilon_n: rng.random_range(0.0..2.0),
        c0,
        c1: log_uniform(rng, 0.05, 2.0),
        big_c0: c0 * log_uniform(rng, 1.0, 10.0),
        b_1n: rng.random_range(0.0..5.0),
        b_2n: rng.random_range(0.0..5.0),
        omega: rng.random_range(0.1..2.0),
        delta: rng.random_range(0.0..4.0),
        v_n: log_uniform(rng, 1.0, 100.0),
        a_n: log_uniform(rng, std::f64::consts::E, 1e9),
        m_n: rng.random_range(0.0..10.0),
        r_eta: rng.random_range(0.0..0.5),
        b_n: log_uniform(rng, 0.5, 10.0),
        big_v_n: log_uniform(rng, 1.0, 50.0),
        big_a_n: n * log_uniform(rng, 1.0, 100.0),
        gamma: rng.random_range(0.01..0.99),
        c: log_uniform(rng, 1e-3, 10.0),
        ..Default::default()
    };
    let k = &mut t.constants;
    k.k = log_uniform(rng, 0.1, 10.0);
    k.d_q = log_uniform(rng, 0.1, 10.0);
    k.big_d_q = log_uniform(rng, 0.1, 10.0);
    k.kappa = log_uniform(rng, 0.1, 10.0);
    k.chi = log_uniform(rng, 0.1, 10.0);
    k.prefactor = if rng.random_bool(0.5) {
        Prefactor::UpperC0
    } else {
        Prefactor::LowerC0
    };
    t
}

pub fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

const REGIMES: [Regime; 3] = [Regime::HeavyTailQ, Regime::SubGaussian, Regime::Bounded];

/// Compares every library formula with the re-evaluation on `count` random
/// inputs; returns the first mismatch.
pub fn check_agreement<R: Rng>(rng: &mut R, count: usize, rel: f64) -> Result<(), String> {
    use dml_core::bounds::*;
    let cmp = |what: &str, lib: f64, want: f64| {
        if close(lib, want, rel) {
            Ok(())
        } else {
            Err(format!("{what}: library {lib:e}, re-evaluation {want:e}"))
        }
    };
    for _ in 0..count {
        let t = random_theorem1(rng);
        for regime in REGIMES {
            let b = theorem1_bound(&t, regime).map_err(|e| e.to_string())?;
            cmp("term_a", b.term_a, term_a(&t, regime))?;
            cmp("delta_1n", b.delta_1n, delta_1(&t))?;
            cmp("delta_2n", b.delta_2n, delta_2(&t))?;
            cmp("theorem 1 total", b.total, theorem1_total(&t, regime))?;
        }
        let t = random_theorem2(rng);
        let lib = theorem2_terms(&t).map_err(|e| e.to_string())?;
        let want = theorem2(&t);
        cmp("r_vee", lib.r_vee, want.r_vee)?;
        cmp("delta_1n", lib.delta_1n, want.d1)?;
        cmp("delta_2n", lib.delta_2n, want.d2)?;
        cmp("delta_3n", lib.delta_3n, want.d3)?;
        cmp("l_n", lib.l_n, want.l_n)?;
        cmp("r_1n", lib.r_1n, want.r1)?;
        cmp("r_2n", lib.r_2n, want.r2)?;
        cmp("theorem 2 total", lib.total, want.total)?;

        let (sigma, v, a, m) = (
            rng.random_range(0.0..3.0),
            rng.random_range(1.0..50.0),
            rng.random_range(3.0..1e6),
            rng.random_range(0.0..5.0),
        );
        let (q, k, n) = (
            rng.random_range(2.0..10.0),
            rng.random_range(0.1..5.0),
            rng.random_range(1.0..1e7),
        );
        let lib = maximal_inequality_bound(sigma, v, a, m, q, k, n).map_err(|e| e.to_string())?;
        cmp("maximal inequality", lib, maximal(sigma, v, a, m, q, k, n))?;
        let (p, eps, s) = (
            rng.random_range(2.0..1e4),
            rng.random_range(0.0..1.0),
            rng.random_range(0.1..3.0),
        );
        cmp(
            "anti-concentration",
            anti_concentration_bound(p, eps, s).map_err(|e| e.to_string())?,
            anti_concentration(p, eps, s),
        )?;
        let (v1, a1, v2, a2) = (
            rng.random_range(1.0..9.0),
            rng.random_range(3.0..99.0),
            rng.random_range(1.0..9.0),
            rng.random_range(3.0..99.0),
        );
        let (v, a) = entropy_sum(v1, a1, v2, a2).map_err(|e| e.to_string())?;
        cmp("entropy v", v, v1 + v2)?;
        cmp("entropy a", a, 2.0 * if a1 > a2 { a1 } else { a2 })?;
    }
    Ok(())
}

/// Randomized monotonicity comparisons; returns the first violation.
pub fn check_monotonicity<R: Rng>(rng: &mut R, count: usize) -> Result<(), String> {
    use dml_core::bounds::*;
    let a = |t: &Theorem1Inputs, r: Regime| theorem1_term_a(t, r).map_err(|e| e.to_string());
    for i in 0..count {
        let base = random_theorem1(rng);
        let regime = REGIMES[i % 3];
        let up = rng.random_range(1.01..10.0);
        let fail =
            |what: &str, lo: f64, hi: f64| Err(format!("{what} ({regime:?}): {lo:e} then {hi:e}"));
        // term A falls in n once log n / sqrt n is past its peak
        let low = Theorem1Inputs {
            n: base.n.max(16.0),
            ..base
        };
        let high = Theorem1Inputs {
            n: low.n * up,
            ..low
        };
        let (x, y) = (a(&low, regime)?, a(&high, regime)?);
        if y > x {
            return fail("term_a in n", x, y);
        }
        let high = Theorem1Inputs {
            p: base.p * up,
            ..base
        };
        let (x, y) = (a(&base, regime)?, a(&high, regime)?);
        if y < x {
            return fail("term_a in p", x, y);
        }
        let high = Theorem1Inputs {
            b_n: base.b_n * up,
            ..base
        };
        let (x, y) = (a(&base, regime)?, a(&high, regime)?);
        if y < x {
            return fail("term_a in b_n", x, y);
        }
        let low = Theorem1Inputs {
            lambda_min: base.lambda_min / up,
            ..base
        };
        let (x, y) = (a(&low, regime)?, a(&base, regime)?);
        if y > x {
            return fail("term_a in lambda_min", x, y);
        }
        let high = Theorem1Inputs {
            r_gamma: base.r_gamma * up + 1e-3,
            r_alpha: base.r_alpha * up + 1e-3,
            ..base
        };
        let (x, y) = (
            theorem1_delta2(&base).map_err(|e| e.to_string())?,
            theorem1_delta2(&high).map_err(|e| e.to_string())?,
        );
        if y <= x {
            return fail("delta_2n in the rates", x, y);
        }
        let base = random_theorem2(rng);
        let r1 = |t: &Theorem2Inputs| theorem2_terms(t).map(|t| t.r_1n).map_err(|e| e.to_string());
        let high = Theorem2Inputs {
            epsilon_n: base.epsilon_n * up + 1e-3,
            ..base
        };
        let (x, y) = (r1(&base)?, r1(&high)?);
        if y <= x {
            return fail("r_1n in epsilon_n", x, y);
        }
        let high = Theorem2Inputs {
            r_eta: base.r_eta * up + 1e-3,
            ..base
        };
        let (x, y) = (r1(&base)?, r1(&high)?);
        if y < x {
            return fail("r_1n in r_eta", x, y);
        }
    }
    Ok(())
}

/// Rates `R = n^{-1/2}`, envelope `n^{-1/4}` and fixed dimension.
pub fn growth_schedule(n: f64) -> Theorem1Inputs {
    Theorem1Inputs {
        n,
        p: 10.0,
        b_n: 1.0,
        lambda_min: 1.0,
        sigma_min: 1.0,
        r_gamma: n.powf(-0.5),
        r_alpha: n.powf(-0.5),
        m_n: n.powf(-0.25),
        delta: 6.0,
        v_n: 1.0,
        a_n: n,
        c: 1e-3,
        ..Default::default()
    }
}
