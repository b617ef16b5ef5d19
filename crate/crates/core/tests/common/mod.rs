//! Shared test fixtures: an independently coded Fanger reference solver and
//! the small factored MDP used by the validation suite.
//!
//! The reference PMV implementation deliberately takes a different numerical
//! route from the library: the clothing-temperature balance is solved by
//! bisection on its residual (not fixed-point iteration), and the vapor
//! pressure uses the Antoine-style fit rather than the Magnus form. It is
//! pinned to published reference conditions below.

use hvac_mdp::oracle::EnumeratedMdp;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Reference Fanger PMV: bisection on the clothing-surface heat balance.
pub fn reference_pmv(
    met: f64,
    work_w_m2: f64,
    t_air: f64,
    rh: f64,
    t_radiant: f64,
    velocity: f64,
    clo: f64,
) -> f64 {
    let m = met * 58.15;
    let w = work_w_m2;
    let mw = m - w;
    let icl = 0.155 * clo;
    let fcl = if icl <= 0.078 { 1.0 + 1.29 * icl } else { 1.05 + 0.645 * icl };
    // Antoine-style saturation fit (Pa), input RH as a fraction.
    let pa = rh * 100.0 * 10.0 * (16.6536 - 4030.183 / (t_air + 235.0)).exp();
    let hcf = 12.1 * velocity.sqrt();

    let residual = |tcl: f64| {
        let hc = hcf.max(2.38 * (tcl - t_air).abs().powf(0.25));
        let radiation = 3.96e-8 * fcl * ((tcl + 273.0).powi(4) - (t_radiant + 273.0).powi(4));
        let convection = fcl * hc * (tcl - t_air);
        tcl - (35.7 - 0.028 * mw - icl * (radiation + convection))
    };
    let mut lo = t_air.min(t_radiant) - 40.0;
    let mut hi = t_air.max(t_radiant).max(36.0) + 40.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if residual(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let tcl = 0.5 * (lo + hi);

    let hc = hcf.max(2.38 * (tcl - t_air).abs().powf(0.25));
    let hl1 = 3.05e-3 * (5733.0 - 6.99 * mw - pa);
    let hl2 = if mw > 58.15 { 0.42 * (mw - 58.15) } else { 0.0 };
    let hl3 = 1.7e-5 * m * (5867.0 - pa);
    let hl4 = 0.0014 * m * (34.0 - t_air);
    let hl5 = 3.96e-8 * fcl * ((tcl + 273.0).powi(4) - (t_radiant + 273.0).powi(4));
    let hl6 = fcl * hc * (tcl - t_air);
    let ts = 0.303 * (-0.036 * m).exp() + 0.028;
    ts * (mw - hl1 - hl2 - hl3 - hl4 - hl5 - hl6)
}

/// Published reference conditions with tabulated PMV values (air and radiant
/// temperature equal, 60 % RH, 1.2 met, seated office work).
pub const REFERENCE_CASES: [(f64, f64, f64, f64, f64, f64); 3] = [
    // (t_air, t_radiant, velocity, rh, clo, pmv)
    (22.0, 22.0, 0.10, 0.60, 0.5, -0.75),
    (27.0, 27.0, 0.10, 0.60, 0.5, 0.77),
    (27.0, 27.0, 0.30, 0.60, 0.5, 0.44),
];

/// The small validation MDP: a 3 x 3 x 2 factored state space (two
/// weather-like components and one occupancy-like component), horizon 8,
/// six actions. Transitions mix an exogenous product chain with a mild
/// action-dependent kernel. Stage costs carry an action-independent base
/// plus well-separated action-dependent steps (a seeded permutation per
/// state), so action values never come close to ties and the multiplicative
/// update drains suboptimal weight at a healthy exponential rate; the total
/// spread stays below the no-clamp margin of the update.
pub fn tiny_mdp(seed: u64) -> EnumeratedMdp {
    let stages = 8;
    let dims = [3usize, 3, 2];
    let states: usize = dims.iter().product();
    let actions = 6;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // One stochastic matrix per component, shared across stages.
    let component_chain = |rng: &mut ChaCha8Rng, l: usize| -> Vec<f64> {
        let mut m = vec![0.0; l * l];
        for i in 0..l {
            let mut total = 0.0;
            for j in 0..l {
                let w: f64 = rng.random::<f64>() + if i == j { 0.2 } else { 0.1 };
                m[i * l + j] = w;
                total += w;
            }
            for j in 0..l {
                m[i * l + j] /= total;
            }
        }
        m
    };
    let chains: Vec<Vec<f64>> = dims.iter().map(|&l| component_chain(&mut rng, l)).collect();

    let decode = |s: usize| -> [usize; 3] {
        [s / (dims[1] * dims[2]), (s / dims[2]) % dims[1], s % dims[2]]
    };
    let product_prob = |s: usize, sn: usize| -> f64 {
        let a = decode(s);
        let b = decode(sn);
        let mut p = 1.0;
        for c in 0..3 {
            p *= chains[c][a[c] * dims[c] + b[c]];
        }
        p
    };

    // Per-action perturbation kernels.
    let mut kernels = Vec::with_capacity(actions);
    for _ in 0..actions {
        let mut k = vec![0.0; states * states];
        for s in 0..states {
            let mut total = 0.0;
            for sn in 0..states {
                let w: f64 = rng.random::<f64>() + 0.05;
                k[s * states + sn] = w;
                total += w;
            }
            for sn in 0..states {
                k[s * states + sn] /= total;
            }
        }
        kernels.push(k);
    }

    let mut transitions = Vec::with_capacity(stages - 1);
    for _ in 0..stages - 1 {
        let mut tensor = vec![0.0; states * actions * states];
        for s in 0..states {
            for a in 0..actions {
                for sn in 0..states {
                    tensor[(s * actions + a) * states + sn] =
                        0.85 * product_prob(s, sn) + 0.15 * kernels[a][s * states + sn];
                }
            }
        }
        transitions.push(tensor);
    }
    let costs = (0..stages)
        .map(|_| {
            let mut table = vec![0.0; states * actions];
            for s in 0..states {
                // A random permutation of well-separated cost steps.
                let mut ranks: Vec<usize> = (0..actions).collect();
                for i in (1..actions).rev() {
                    ranks.swap(i, rng.random_range(0..=i));
                }
                for a in 0..actions {
                    table[s * actions + a] =
                        0.2 + 0.15 * ranks[a] as f64 + 0.01 * rng.random::<f64>();
                }
            }
            table
        })
        .collect();

    let mdp = EnumeratedMdp {
        stages,
        state_counts: vec![states; stages],
        action_count: actions,
        transitions,
        costs,
        initial_state: 0,
    };
    mdp.validate().expect("tiny mdp is well formed");
    mdp
}
