//! Reference implementations written independently of the library, used
//! to cross-check it.

use rand::Rng;
use trustmdp::{Action, Performance, RewardConfig, TrustParams};

/// `(alpha, beta)` after counting the outcomes.
pub fn closed_form_state(p: &TrustParams, perfs: &[Performance]) -> (f64, f64) {
    let s = perfs.iter().filter(|p| **p == Performance::Success).count() as f64;
    let f = perfs.len() as f64 - s;
    (p.alpha0 + s * p.w_success, p.beta0 + f * p.w_failure)
}

/// Cost paid for executing `action`, positive numbers.
pub fn cost(action: Action, threat: bool, cfg: &RewardConfig) -> f64 {
    match (action, threat) {
        (Action::UseRarv, _) => cfg.w_time * cfg.rarv_time,
        (Action::NoRarv, true) => cfg.w_health * cfg.health_loss,
        (Action::NoRarv, false) => 0.0,
    }
}

fn other(a: Action) -> Action {
    match a {
        Action::UseRarv => Action::NoRarv,
        Action::NoRarv => Action::UseRarv,
    }
}

/// Success iff following costs strictly less than defying.
pub fn brute_performance(rec: Action, threat: bool, cfg: &RewardConfig) -> bool {
    cost(rec, threat, cfg) < cost(other(rec), threat, cfg)
}

/// Central differences of `f` at `x`.
pub fn central_diff(f: impl Fn([f64; 4]) -> f64, x: [f64; 4]) -> [f64; 4] {
    let mut g = [0.0; 4];
    for i in 0..4 {
        let h = 1e-6 * x[i].abs().max(1.0);
        let (mut up, mut dn) = (x, x);
        up[i] += h;
        dn[i] -= h;
        g[i] = (f(up) - f(dn)) / (2.0 * h);
    }
    g
}

/// Optimal expected total reward from `stage` by enumerating every branch
/// of the decision tree: each site branches on the threat and on whether
/// the human complies, with no state merging.
pub fn expectimax(
    p: &TrustParams,
    cfg: &RewardConfig,
    priors: &[f64],
    stage: usize,
    alpha: f64,
    beta: f64,
) -> f64 {
    if stage > cfg.horizon {
        return 0.0;
    }
    let trust = alpha / (alpha + beta);
    let d = priors[stage - 1];
    let gain = cfg.w_trust * ((cfg.horizon - stage) as f64).sqrt();
    let value = |rec: Action| {
        let mut v = 0.0;
        for (threat, pt) in [(true, d), (false, 1.0 - d)] {
            let ok = brute_performance(rec, threat, cfg);
            let (a2, b2) = if ok { (alpha + p.w_success, beta) } else { (alpha, beta + p.w_failure) };
            let future = expectimax(p, cfg, priors, stage + 1, a2, b2);
            for (executed, pc) in [(rec, trust), (other(rec), 1.0 - trust)] {
                let r = -cost(executed, threat, cfg) + if ok { gain } else { 0.0 };
                v += pt * pc * (r + future);
            }
        }
        v
    };
    value(Action::NoRarv).max(value(Action::UseRarv))
}

/// Upper tail of F(2, d): `(1 + 2F/d)^(-d/2)`.
pub fn f_sf_df1_2(f: f64, d: f64) -> f64 {
    (1.0 + 2.0 * f / d).powf(-d / 2.0)
}

/// Upper tail of F(1, 2), equal to the two-sided t tail with 2 degrees of
/// freedom at `sqrt(F)`: `1 - sqrt(F / (F + 2))`.
pub fn f_sf_1_2(f: f64) -> f64 {
    1.0 - (f / (f + 2.0)).sqrt()
}

pub fn random_params<R: Rng>(rng: &mut R) -> TrustParams {
    TrustParams::new(
        rng.random_range(0.1..20.0),
        rng.random_range(0.1..20.0),
        rng.random_range(0.05..5.0),
        rng.random_range(0.05..5.0),
    )
    .unwrap()
}

/// Parameters on a 1/1024 grid below 64, where every partial sum of a
/// few hundred updates is exactly representable.
pub fn grid_params<R: Rng>(rng: &mut R) -> TrustParams {
    let mut g = |hi: u32| f64::from(rng.random_range(1..hi)) / 1024.0;
    TrustParams::new(g(20 * 1024), g(20 * 1024), g(5 * 1024), g(5 * 1024)).unwrap()
}

pub fn random_performances<R: Rng>(rng: &mut R, n: usize) -> Vec<Performance> {
    (0..n)
        .map(|_| if rng.random::<bool>() { Performance::Success } else { Performance::Failure })
        .collect()
}
