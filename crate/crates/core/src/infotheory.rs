//! Exact information theory over small discrete joint distributions.
//!
//! Used as an oracle for the identities the MI pruning objective relies on:
//! the chain rule for MI gains, diminishing returns under conditional
//! independence, and the log-sum-exp bounds behind max aggregation. All
//! quantities are in nats with `0 · log 0 = 0`.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{PruneError, Result};

pub const MAX_VARIABLES: usize = 4;
pub const MAX_ALPHABET: usize = 8;
/// Allowed deviation of the total mass from 1.
pub const MASS_TOL: f64 = 1e-12;
/// Tolerance for identities that hold exactly in real arithmetic.
pub const IDENTITY_TOL: f64 = 1e-10;
/// Allowed factorization error when checking conditional independence.
pub const NAIVE_BAYES_TOL: f64 = 1e-9;

/// Dense joint probability table over at most four named finite variables.
/// The last axis varies fastest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteJoint {
    names: Vec<String>,
    sizes: Vec<usize>,
    probs: Vec<f64>,
}

impl DiscreteJoint {
    pub fn new(axes: &[(&str, usize)], probs: Vec<f64>) -> Result<Self> {
        if axes.is_empty() || axes.len() > MAX_VARIABLES {
            return Err(PruneError::Config(format!(
                "joint needs 1..={MAX_VARIABLES} variables, got {}",
                axes.len()
            )));
        }
        let names: Vec<String> = axes.iter().map(|(n, _)| n.to_string()).collect();
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(PruneError::Name(format!("duplicate variable {n:?}")));
            }
        }
        let sizes: Vec<usize> = axes.iter().map(|&(_, s)| s).collect();
        if let Some(&s) = sizes.iter().find(|&&s| s == 0 || s > MAX_ALPHABET) {
            return Err(PruneError::Config(format!(
                "alphabet sizes must lie in 1..={MAX_ALPHABET}, got {s}"
            )));
        }
        let cells: usize = sizes.iter().product();
        if probs.len() != cells {
            return Err(PruneError::Shape(format!(
                "{} probabilities for {cells} cells",
                probs.len()
            )));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(PruneError::Data("probabilities must be finite and ≥ 0".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(PruneError::Data(format!("total mass {total} is not 1")));
        }
        Ok(Self {
            names,
            sizes,
            probs,
        })
    }

    /// Scales non-negative weights to unit mass.
    pub fn from_weights(axes: &[(&str, usize)], weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if total.is_nan() || total <= 0.0 {
            return Err(PruneError::Data("weights must have positive mass".into()));
        }
        Self::new(axes, weights.into_iter().map(|w| w / total).collect())
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    fn axis(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| PruneError::Name(format!("unknown variable {name:?}")))
    }

    fn axes(&self, names: &[&str]) -> Result<Vec<usize>> {
        names.iter().map(|n| self.axis(n)).collect()
    }

    /// Marginal over `axes`, laid out row-major in the given axis order.
    fn marginal(&self, axes: &[usize]) -> Vec<f64> {
        let out_len: usize = axes.iter().map(|&a| self.sizes[a]).product();
        let mut out = vec![0.0; out_len];
        let mut idx = vec![0usize; self.sizes.len()];
        for &p in &self.probs {
            let mut flat = 0;
            for &a in axes {
                flat = flat * self.sizes[a] + idx[a];
            }
            out[flat] += p;
            // advance the mixed-radix counter, last axis fastest
            for a in (0..idx.len()).rev() {
                idx[a] += 1;
                if idx[a] < self.sizes[a] {
                    break;
                }
                idx[a] = 0;
            }
        }
        out
    }

    fn card(&self, axes: &[usize]) -> usize {
        axes.iter().map(|&a| self.sizes[a]).product()
    }

    fn disjoint(groups: &[&[usize]]) -> Result<()> {
        let all: Vec<usize> = groups.iter().flat_map(|g| g.iter().copied()).collect();
        for (i, a) in all.iter().enumerate() {
            if all[..i].contains(a) {
                return Err(PruneError::Precondition(
                    "variable sets must be disjoint".into(),
                ));
            }
        }
        if groups.iter().any(|g| g.is_empty()) {
            return Err(PruneError::Precondition("variable sets must be non-empty".into()));
        }
        Ok(())
    }

    fn entropy_axes(&self, axes: &[usize]) -> f64 {
        -self
            .marginal(axes)
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * p.ln())
            .sum::<f64>()
    }

    /// `-Σ p(x, y) log p(x | y)`, summed directly over the joint cells.
    fn cond_entropy_axes(&self, xs: &[usize], ys: &[usize]) -> f64 {
        let joint = self.marginal(&[xs, ys].concat());
        let py = self.marginal(ys);
        let ny = py.len();
        -joint
            .iter()
            .enumerate()
            .filter(|&(_, &p)| p > 0.0)
            .map(|(f, &p)| p * (p / py[f % ny]).ln())
            .sum::<f64>()
    }

    /// Joint entropy `H(S)` of a set of variables.
    pub fn entropy_of(&self, vars: &[&str]) -> Result<f64> {
        let axes = self.axes(vars)?;
        Self::disjoint(&[&axes])?;
        Ok(self.entropy_axes(&axes))
    }

    pub fn entropy(&self, var: &str) -> Result<f64> {
        self.entropy_of(&[var])
    }

    pub fn conditional_entropy_of(&self, xs: &[&str], ys: &[&str]) -> Result<f64> {
        let (xs, ys) = (self.axes(xs)?, self.axes(ys)?);
        Self::disjoint(&[&xs, &ys])?;
        Ok(self.cond_entropy_axes(&xs, &ys))
    }

    /// `H(X | Y)`.
    pub fn conditional_entropy(&self, x: &str, y: &str) -> Result<f64> {
        self.conditional_entropy_of(&[x], &[y])
    }

    /// `MI(X; Y) = H(X) − H(X | Y)` over variable sets.
    pub fn mutual_information_of(&self, xs: &[&str], ys: &[&str]) -> Result<f64> {
        let (xs, ys) = (self.axes(xs)?, self.axes(ys)?);
        Self::disjoint(&[&xs, &ys])?;
        Ok(self.entropy_axes(&xs) - self.cond_entropy_axes(&xs, &ys))
    }

    pub fn mutual_information(&self, x: &str, y: &str) -> Result<f64> {
        self.mutual_information_of(&[x], &[y])
    }

    /// `MI(X; Y) = Σ p(x, y) · PMI(x; y)`, the pointwise route.
    pub fn mutual_information_pointwise(&self, x: &str, y: &str) -> Result<f64> {
        let (xs, ys) = (self.axes(&[x])?, self.axes(&[y])?);
        Self::disjoint(&[&xs, &ys])?;
        let joint = self.marginal(&[xs.as_slice(), ys.as_slice()].concat());
        let (px, py) = (self.marginal(&xs), self.marginal(&ys));
        let ny = py.len();
        Ok(joint
            .iter()
            .enumerate()
            .filter(|&(_, &p)| p > 0.0)
            .map(|(f, &p)| p * (p / (px[f / ny] * py[f % ny])).ln())
            .sum())
    }

    /// `MI(X; Y | Z) = H(X | Z) − H(X | Y, Z)` over variable sets.
    pub fn conditional_mi_of(&self, xs: &[&str], ys: &[&str], zs: &[&str]) -> Result<f64> {
        let (xs, ys, zs) = (self.axes(xs)?, self.axes(ys)?, self.axes(zs)?);
        Self::disjoint(&[&xs, &ys, &zs])?;
        let yz = [ys.as_slice(), zs.as_slice()].concat();
        Ok(self.cond_entropy_axes(&xs, &zs) - self.cond_entropy_axes(&xs, &yz))
    }

    pub fn conditional_mi(&self, x: &str, y: &str, z: &str) -> Result<f64> {
        self.conditional_mi_of(&[x], &[y], &[z])
    }

    /// `Σ p(x, y, z) log(p(x | y, z) / p(x | z))`, the direct triple sum.
    pub fn conditional_mi_direct(&self, x: &str, y: &str, z: &str) -> Result<f64> {
        let (xs, ys, zs) = (self.axes(&[x])?, self.axes(&[y])?, self.axes(&[z])?);
        Self::disjoint(&[&xs, &ys, &zs])?;
        let (nx, ny, nz) = (self.card(&xs), self.card(&ys), self.card(&zs));
        let xyz = self.marginal(&[xs[0], ys[0], zs[0]]);
        let yz = self.marginal(&[ys[0], zs[0]]);
        let xz = self.marginal(&[xs[0], zs[0]]);
        let pz = self.marginal(&zs);
        let mut total = 0.0;
        for xi in 0..nx {
            for yi in 0..ny {
                for zi in 0..nz {
                    let p = xyz[(xi * ny + yi) * nz + zi];
                    if p > 0.0 {
                        let given_yz = p / yz[yi * nz + zi];
                        let given_z = xz[xi * nz + zi] / pz[zi];
                        total += p * (given_yz / given_z).ln();
                    }
                }
            }
        }
        Ok(total)
    }

    /// Largest deviation of `p(g_1..g_k | t)` from `Π p(g_i | t)`.
    pub fn naive_bayes_error(&self, ground: &[&str], target: &str) -> Result<f64> {
        let g = self.axes(ground)?;
        let t = self.axis(target)?;
        Self::disjoint(&[&g, &[t]])?;
        let order = [&[t][..], &g].concat();
        let joint = self.marginal(&order);
        let pt = self.marginal(&[t]);
        let per_feature: Vec<Vec<f64>> = g.iter().map(|&a| self.marginal(&[t, a])).collect();
        let rest = self.card(&g);
        let mut worst: f64 = 0.0;
        for (f, &p) in joint.iter().enumerate() {
            let ti = f / rest;
            if pt[ti] <= 0.0 {
                continue;
            }
            let mut r = f % rest;
            let mut product = 1.0;
            for (k, &a) in g.iter().enumerate().rev() {
                let gi = r % self.sizes[a];
                r /= self.sizes[a];
                product *= per_feature[k][ti * self.sizes[a] + gi] / pt[ti];
            }
            worst = worst.max((p / pt[ti] - product).abs());
        }
        Ok(worst)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainRuleReport {
    /// `MI({vs, vi}; t) − MI(vs; t)`.
    pub gain: f64,
    /// `MI(vi; t | vs)`.
    pub conditional_gain: f64,
    pub holds: bool,
    /// `MI(vi; vs | t)`, zero under the naive-Bayes assumption.
    pub redundancy_given_target: f64,
    /// `MI(vi; t) − MI(vi; vs)`, the tractable estimate of the gain.
    pub estimate: f64,
    /// `conditional_gain − estimate`.
    pub estimator_gap: f64,
    /// The gap equals `redundancy_given_target` within tolerance.
    pub gap_consistent: bool,
}

pub fn verify_chain_rule(
    j: &DiscreteJoint,
    vs: &str,
    vi: &str,
    t: &str,
) -> Result<ChainRuleReport> {
    let gain = j.mutual_information_of(&[vs, vi], &[t])? - j.mutual_information(vs, t)?;
    let conditional_gain = j.conditional_mi(vi, t, vs)?;
    let redundancy_given_target = j.conditional_mi(vi, vs, t)?;
    let estimate = j.mutual_information(vi, t)? - j.mutual_information(vi, vs)?;
    let estimator_gap = conditional_gain - estimate;
    Ok(ChainRuleReport {
        gain,
        conditional_gain,
        holds: (gain - conditional_gain).abs() <= IDENTITY_TOL,
        redundancy_given_target,
        estimate,
        estimator_gap,
        gap_consistent: (estimator_gap - redundancy_given_target).abs() <= IDENTITY_TOL,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubmodularityReport {
    pub checks: usize,
    pub violations: Vec<String>,
    pub monotone_violations: Vec<String>,
    /// Smallest slack `Δ(i|A) − Δ(i|B)` seen.
    pub min_slack: f64,
    pub passed: bool,
}

/// Checks `Δ(i | A) ≥ Δ(i | B)` for every `A ⊆ B ⊆ ground`, `i ∉ B`, with
/// `f(S) = MI(S; target)`, plus monotonicity of `f`.
pub fn verify_submodularity(
    j: &DiscreteJoint,
    ground: &[&str],
    target: &str,
) -> Result<SubmodularityReport> {
    if ground.is_empty() || ground.len() >= MAX_VARIABLES {
        return Err(PruneError::Config(format!(
            "ground set must hold 1..{MAX_VARIABLES} variables"
        )));
    }
    let err = j.naive_bayes_error(ground, target)?;
    if err > NAIVE_BAYES_TOL {
        return Err(PruneError::Precondition(format!(
            "ground variables are not conditionally independent given {target:?} (error {err:e})"
        )));
    }

    let k = ground.len();
    let f: Vec<f64> = (0..1usize << k)
        .map(|mask| {
            if mask == 0 {
                return Ok(0.0);
            }
            let set: Vec<&str> = (0..k).filter(|b| mask >> b & 1 == 1).map(|b| ground[b]).collect();
            j.mutual_information_of(&set, &[target])
        })
        .collect::<Result<_>>()?;

    let mut report = SubmodularityReport {
        checks: 0,
        violations: Vec::new(),
        monotone_violations: Vec::new(),
        min_slack: f64::INFINITY,
        passed: true,
    };
    let full = (1usize << k) - 1;
    for b in 0..=full {
        // every submask a of b, including 0 and b itself
        let mut a = b;
        loop {
            if f[a] > f[b] + IDENTITY_TOL {
                report
                    .monotone_violations
                    .push(format!("f({a:#b}) = {} > f({b:#b}) = {}", f[a], f[b]));
            }
            for i in (0..k).filter(|i| b >> i & 1 == 0) {
                let gain_a = f[a | 1 << i] - f[a];
                let gain_b = f[b | 1 << i] - f[b];
                let slack = gain_a - gain_b;
                report.checks += 1;
                report.min_slack = report.min_slack.min(slack);
                if slack < -IDENTITY_TOL {
                    report.violations.push(format!(
                        "Δ({} | {a:#b}) = {gain_a} < Δ({} | {b:#b}) = {gain_b}",
                        ground[i], ground[i]
                    ));
                }
            }
            if a == 0 {
                break;
            }
            a = (a - 1) & b;
        }
    }
    report.passed = report.violations.is_empty() && report.monotone_violations.is_empty();
    Ok(report)
}

/// `log Σ exp(z)` with the max shift.
pub fn log_sum_exp(z: &[f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + z.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LseReport {
    pub max: f64,
    pub lse: f64,
    pub upper: f64,
    pub holds: bool,
}

/// Tolerance on the LSE bounds, scaled by the magnitude of the maximum.
pub const LSE_TOL: f64 = 1e-12;

/// Checks `max(z) ≤ LSE(z) ≤ max(z) + ln(len(z))`.
pub fn verify_lse_bounds(z: &[f64]) -> Result<LseReport> {
    if z.is_empty() || z.iter().any(|x| !x.is_finite()) {
        return Err(PruneError::Data("LSE needs a non-empty finite vector".into()));
    }
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = log_sum_exp(z);
    let upper = max + (z.len() as f64).ln();
    let tol = LSE_TOL * max.abs().max(1.0);
    Ok(LseReport {
        max,
        lse,
        upper,
        holds: max <= lse + tol && lse <= upper + tol,
    })
}

/// Checks `max_j p(t_j|v)/p(t_j) ≤ Σ_j p(t_j|v)/p(t_j)` on ratios directly.
pub fn verify_max_ratio_bound(conditional: &[f64], marginal: &[f64]) -> Result<bool> {
    if conditional.len() != marginal.len() || conditional.is_empty() {
        return Err(PruneError::Shape("conditional and marginal lengths differ".into()));
    }
    let ratios: Vec<f64> = conditional.iter().zip(marginal).map(|(p, m)| p / m).collect();
    let max = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(max <= ratios.iter().sum::<f64>())
}

fn random_weights(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    // Occasional exact zeros exercise the 0·log 0 convention.
    (0..n)
        .map(|_| {
            if rng.random_bool(0.05) {
                0.0
            } else {
                -rng.random::<f64>().max(1e-300).ln()
            }
        })
        .collect()
}

/// A random joint over variables `names` with alphabet `sizes`.
pub fn random_joint(rng: &mut impl Rng, axes: &[(&str, usize)]) -> Result<DiscreteJoint> {
    let cells = axes.iter().map(|a| a.1).product();
    loop {
        let w = random_weights(rng, cells);
        if w.iter().any(|&x| x > 0.0) {
            return DiscreteJoint::from_weights(axes, w);
        }
    }
}

/// A joint where every feature is independent of the others given `class`.
/// The class is the first axis.
pub fn naive_bayes_joint(
    rng: &mut impl Rng,
    class: (&str, usize),
    features: &[(&str, usize)],
) -> Result<DiscreteJoint> {
    let normalize = |w: Vec<f64>| {
        let s: f64 = w.iter().sum();
        if s > 0.0 {
            w.into_iter().map(|x| x / s).collect()
        } else {
            let n = w.len();
            vec![1.0 / n as f64; n]
        }
    };
    let prior: Vec<f64> = normalize(random_weights(rng, class.1));
    let likelihoods: Vec<Vec<Vec<f64>>> = features
        .iter()
        .map(|&(_, size)| {
            (0..class.1)
                .map(|_| normalize(random_weights(rng, size)))
                .collect()
        })
        .collect();

    let axes: Vec<(&str, usize)> = std::iter::once(class).chain(features.iter().copied()).collect();
    let feature_cells: usize = features.iter().map(|f| f.1).product();
    let mut probs = Vec::with_capacity(class.1 * feature_cells);
    for (c, &pc) in prior.iter().enumerate() {
        for flat in 0..feature_cells {
            let mut r = flat;
            let mut p = pc;
            for (k, &(_, size)) in features.iter().enumerate().rev() {
                p *= likelihoods[k][c][r % size];
                r /= size;
            }
            probs.push(p);
        }
    }
    DiscreteJoint::from_weights(&axes, probs)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteConfig {
    pub seed: u64,
    /// Chain-rule, symmetry and LSE trials; submodularity runs a tenth as many.
    pub trials: usize,
    /// Corrupts the first chain-rule trial, for negative-control testing.
    pub inject_fault: bool,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            trials: 10_000,
            inject_fault: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteFailure {
    pub suite: String,
    pub trial: usize,
    pub detail: String,
    pub joint: Option<DiscreteJoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub chain_rule_trials: usize,
    pub symmetry_trials: usize,
    pub submodularity_trials: usize,
    pub lse_trials: usize,
    pub failures: Vec<SuiteFailure>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Moves a fixed slice of mass between two cells, keeping a valid joint.
fn perturb(j: &DiscreteJoint) -> DiscreteJoint {
    let mut probs = j.probs.clone();
    let (hi, _) = probs
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .unwrap();
    let lo = (hi + 1) % probs.len();
    let delta = probs[hi] * 0.5;
    probs[hi] -= delta;
    probs[lo] += delta;
    DiscreteJoint {
        probs,
        ..j.clone()
    }
}

/// Runs chain-rule, MI-symmetry, submodularity and LSE checks on seeded
/// random inputs.
pub fn run_verification_suite(cfg: SuiteConfig) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut failures = Vec::new();

    for trial in 0..cfg.trials {
        let axes = [
            ("vs", rng.random_range(1..=4)),
            ("vi", rng.random_range(2..=4)),
            ("t", rng.random_range(2..=4)),
        ];
        let joint = random_joint(&mut rng, &axes)?;
        let mut report = verify_chain_rule(&joint, "vs", "vi", "t")?;
        if cfg.inject_fault && trial == 0 {
            let bad = perturb(&joint);
            report.gain = bad.mutual_information_of(&["vs", "vi"], &["t"])?
                - bad.mutual_information("vs", "t")?;
            report.holds = (report.gain - report.conditional_gain).abs() <= IDENTITY_TOL;
        }
        if !report.holds || !report.gap_consistent {
            failures.push(SuiteFailure {
                suite: "chain_rule".into(),
                trial,
                detail: format!(
                    "gain {} vs conditional gain {}; estimator gap {} vs MI(vi; vs | t) {}",
                    report.gain,
                    report.conditional_gain,
                    report.estimator_gap,
                    report.redundancy_given_target
                ),
                joint: Some(joint.clone()),
            });
        }

        let xy = joint.mutual_information("vi", "t")?;
        let yx = joint.mutual_information("t", "vi")?;
        let pointwise = joint.mutual_information_pointwise("vi", "t")?;
        if (xy - yx).abs() > 1e-12 || (xy - pointwise).abs() > 1e-12 || xy < -1e-12 {
            failures.push(SuiteFailure {
                suite: "mi_symmetry".into(),
                trial,
                detail: format!("MI(vi;t) {xy}, MI(t;vi) {yx}, pointwise {pointwise}"),
                joint: Some(joint),
            });
        }
    }

    let submodularity_trials = cfg.trials / 10;
    for trial in 0..submodularity_trials {
        let k = rng.random_range(1..=3);
        let names = ["a", "b", "c"];
        let features: Vec<(&str, usize)> =
            (0..k).map(|i| (names[i], rng.random_range(2..=3))).collect();
        let classes = rng.random_range(2..=3);
        let joint = naive_bayes_joint(&mut rng, ("class", classes), &features)?;
        let report = verify_submodularity(&joint, &names[..k], "class")?;
        if !report.passed {
            failures.push(SuiteFailure {
                suite: "submodularity".into(),
                trial,
                detail: format!("{:?} {:?}", report.violations, report.monotone_violations),
                joint: Some(joint),
            });
        }
    }

    for trial in 0..cfg.trials {
        let len = rng.random_range(1..=64);
        let scale = [1.0, 10.0, 100.0][rng.random_range(0..3)];
        let z: Vec<f64> = (0..len).map(|_| scale * (2.0 * rng.random::<f64>() - 1.0)).collect();
        let report = verify_lse_bounds(&z)?;
        if !report.holds {
            failures.push(SuiteFailure {
                suite: "lse_bounds".into(),
                trial,
                detail: format!("max {} lse {} upper {} for {z:?}", report.max, report.lse, report.upper),
                joint: None,
            });
        }
    }

    Ok(SuiteReport {
        chain_rule_trials: cfg.trials,
        symmetry_trials: cfg.trials,
        submodularity_trials,
        lse_trials: cfg.trials,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const LN2: f64 = std::f64::consts::LN_2;

    fn two_by_two(p: [f64; 4]) -> DiscreteJoint {
        DiscreteJoint::new(&[("x", 2), ("y", 2)], p.to_vec()).unwrap()
    }

    #[test]
    fn entropy_examples() {
        let j = DiscreteJoint::new(&[("x", 2)], vec![0.5, 0.5]).unwrap();
        assert!((j.entropy("x").unwrap() - LN2).abs() < 1e-15);
        let j = DiscreteJoint::new(&[("x", 3)], vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(j.entropy("x").unwrap(), 0.0);
        let j = DiscreteJoint::new(&[("x", 2)], vec![0.25, 0.75]).unwrap();
        assert!((j.entropy("x").unwrap() - 0.562_335_144_618_808_4).abs() < 1e-15);
        assert!(matches!(j.entropy("nope"), Err(PruneError::Name(_))));
    }

    #[test]
    fn conditional_entropy_examples() {
        let indep = two_by_two([0.12, 0.28, 0.18, 0.42]);
        assert!((indep.conditional_entropy("x", "y").unwrap() - indep.entropy("x").unwrap()).abs() < 1e-15);
        let same = two_by_two([0.5, 0.0, 0.0, 0.5]);
        assert_eq!(same.conditional_entropy("x", "y").unwrap(), 0.0);
        let fixed = two_by_two([0.4, 0.1, 0.2, 0.3]);
        assert!((fixed.conditional_entropy("x", "y").unwrap() - 0.606_842_558_824_411).abs() < 1e-15);
        assert!(fixed.conditional_entropy("x", "x").is_err());
    }

    #[test]
    fn mutual_information_examples() {
        let indep = two_by_two([0.12, 0.28, 0.18, 0.42]);
        assert!(indep.mutual_information("x", "y").unwrap().abs() < 1e-15);
        let same = two_by_two([0.5, 0.0, 0.0, 0.5]);
        assert!((same.mutual_information("x", "y").unwrap() - LN2).abs() < 1e-15);
        let fixed = two_by_two([0.4, 0.1, 0.2, 0.3]);
        let a = fixed.mutual_information("x", "y").unwrap();
        let b = fixed.mutual_information_pointwise("x", "y").unwrap();
        assert!((a - b).abs() < 1e-12);
        assert!((a - 0.086_304_621_735_534_28).abs() < 1e-15);
    }

    #[test]
    fn conditional_mi_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xz = random_joint(&mut rng, &[("x", 2), ("z", 2)]).unwrap();
        // y independent of (x, z)
        let py = [0.3, 0.7];
        let mut probs = Vec::new();
        for x in 0..2 {
            for p_y in py {
                for z in 0..2 {
                    probs.push(xz.probs()[x * 2 + z] * p_y);
                }
            }
        }
        let j = DiscreteJoint::new(&[("x", 2), ("y", 2), ("z", 2)], probs).unwrap();
        assert!(j.conditional_mi("x", "y", "z").unwrap().abs() < 1e-15);

        // z constant
        let xy = random_joint(&mut rng, &[("x", 3), ("y", 2)]).unwrap();
        let j = DiscreteJoint::new(&[("x", 3), ("y", 2), ("z", 1)], xy.probs().to_vec()).unwrap();
        let cmi = j.conditional_mi("x", "y", "z").unwrap();
        assert!((cmi - xy.mutual_information("x", "y").unwrap()).abs() < 1e-14);

        let j = random_joint(&mut rng, &[("x", 2), ("y", 2), ("z", 2)]).unwrap();
        let a = j.conditional_mi("x", "y", "z").unwrap();
        let b = j.conditional_mi_direct("x", "y", "z").unwrap();
        assert!((a - b).abs() < 1e-12 && a >= -1e-12);
    }

    #[test]
    fn chain_rule_on_naive_bayes_has_zero_gap() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let j = naive_bayes_joint(&mut rng, ("t", 3), &[("vs", 2), ("vi", 3)]).unwrap();
        let r = verify_chain_rule(&j, "vs", "vi", "t").unwrap();
        assert!(r.holds && r.gap_consistent);
        assert!(r.redundancy_given_target.abs() < 1e-10);
        assert!(r.estimator_gap.abs() < 1e-10);
    }

    #[test]
    fn chain_rule_on_adversarial_joint_reports_gap() {
        // vi = vs exactly, t independent coin: the gain is 0 but the
        // estimate MI(vi;t) − MI(vi;vs) = −ln 2.
        let mut probs = Vec::new();
        for vs in 0..2 {
            for vi in 0..2 {
                for _t in 0..2 {
                    probs.push(if vs == vi { 0.25 } else { 0.0 });
                }
            }
        }
        let j = DiscreteJoint::new(&[("vs", 2), ("vi", 2), ("t", 2)], probs).unwrap();
        let r = verify_chain_rule(&j, "vs", "vi", "t").unwrap();
        assert!(r.holds && r.gap_consistent);
        assert!((r.redundancy_given_target - LN2).abs() < 1e-12);
        assert!((r.estimator_gap - LN2).abs() < 1e-12);
    }

    #[test]
    fn submodularity_on_symptoms() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let j = naive_bayes_joint(&mut rng, ("class", 2), &[("a", 2), ("b", 2), ("c", 2)]).unwrap();
        let r = verify_submodularity(&j, &["a", "b", "c"], "class").unwrap();
        assert!(r.passed, "{r:?}");
        // A = B gives equal gains, so the tightest slack is zero.
        assert!(r.min_slack.abs() < 1e-12);
    }

    #[test]
    fn submodularity_requires_naive_bayes() {
        // a = b = class xor noise breaks conditional independence
        let mut probs = vec![0.0; 8];
        probs[0b000] = 0.25;
        probs[0b011] = 0.25;
        probs[0b100] = 0.25;
        probs[0b111] = 0.25;
        let j = DiscreteJoint::new(&[("class", 2), ("a", 2), ("b", 2)], probs).unwrap();
        assert!(matches!(
            verify_submodularity(&j, &["a", "b"], "class"),
            Err(PruneError::Precondition(_))
        ));
    }

    #[test]
    fn lse_examples() {
        let r = verify_lse_bounds(&[2.5; 7]).unwrap();
        assert!(r.holds);
        assert!((r.lse - (2.5 + 7f64.ln())).abs() < 1e-12);
        let r = verify_lse_bounds(&[60.0, 0.0, 1.0, 5.0]).unwrap();
        assert!(r.holds);
        assert!((r.lse - 60.0).abs() < 1e-12);
        assert!(verify_lse_bounds(&[]).is_err());
    }

    #[test]
    fn joint_validation() {
        assert!(DiscreteJoint::new(&[("x", 2)], vec![0.5, 0.6]).is_err());
        assert!(DiscreteJoint::new(&[("x", 9)], vec![1.0 / 9.0; 9]).is_err());
        assert!(DiscreteJoint::new(&[("x", 2), ("x", 1)], vec![0.5, 0.5]).is_err());
        let five: Vec<(&str, usize)> = ["a", "b", "c", "d", "e"].iter().map(|n| (*n, 1)).collect();
        assert!(DiscreteJoint::new(&five, vec![1.0]).is_err());
    }

    #[test]
    fn suite_passes_and_fault_is_caught() {
        let ok = run_verification_suite(SuiteConfig {
            trials: 500,
            ..SuiteConfig::default()
        })
        .unwrap();
        assert!(ok.passed(), "{:?}", ok.failures.first());
        let bad = run_verification_suite(SuiteConfig {
            trials: 50,
            inject_fault: true,
            ..SuiteConfig::default()
        })
        .unwrap();
        assert!(!bad.passed());
        assert_eq!(bad.failures[0].suite, "chain_rule");
    }
}
