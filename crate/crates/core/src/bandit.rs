//! Example scheduling over Beta posteriors, one arm per triggering test.
//!
//! Selection draws `θ ~ Beta(α, β)` for every arm and keeps the top N.
//! After a batch, every selected arm is credited with the whole batch's
//! trigger and non-trigger counts, and new triggering tests start from the
//! mean (α, β) of the examples that produced them, taken after that update.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    Thompson,
    /// Uniform choice without replacement, ignoring posteriors.
    Random,
    /// Never use examples; every iteration uses the initial prompt.
    NoFeedback,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BanditError {
    #[error("arm pool is empty")]
    EmptyPool,
    #[error("unknown arm `{0}`")]
    UnknownArm(String),
    #[error("arm `{0}` already exists")]
    DuplicateArm(String),
    #[error("a batch must contain at least one test")]
    EmptyBatch,
    #[error("new arms need at least one parent")]
    NoParents,
    #[error("select needs n >= 1")]
    ZeroSelection,
}

/// Beta posterior of one arm. `alpha = alpha0 + successes`, so credited
/// counts are kept exactly even when the prior is fractional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmPosterior {
    pub test_id: String,
    pub alpha0: f64,
    pub beta0: f64,
    pub successes: u64,
    pub failures: u64,
}

impl ArmPosterior {
    pub fn new(test_id: impl Into<String>, alpha0: f64, beta0: f64) -> Self {
        Self {
            test_id: test_id.into(),
            alpha0,
            beta0,
            successes: 0,
            failures: 0,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha0 + self.successes as f64
    }

    pub fn beta(&self) -> f64 {
        self.beta0 + self.failures as f64
    }

    pub fn mean(&self) -> f64 {
        let (a, b) = (self.alpha(), self.beta());
        a / (a + b)
    }
}

/// `X / (X + Y)` with `X ~ Gamma(α, 1)`, `Y ~ Gamma(β, 1)`.
pub fn sample_beta<R: Rng + ?Sized>(alpha: f64, beta: f64, rng: &mut R) -> f64 {
    let x = Gamma::new(alpha, 1.0).expect("alpha > 0").sample(rng);
    let y = Gamma::new(beta, 1.0).expect("beta > 0").sample(rng);
    if x + y > 0.0 {
        x / (x + y)
    } else {
        alpha / (alpha + beta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum PoolEvent {
    Seed { id: String },
    Select { ids: Vec<String> },
    Update { ids: Vec<String>, triggers: u64, non_triggers: u64 },
    Admit { parents: Vec<String>, new: Vec<String> },
    Evict { ids: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmPool {
    pub arms: BTreeMap<String, ArmPosterior>,
    pub rng_seed: u64,
    rng: ChaCha8Rng,
    /// Evict lowest-mean arms beyond this size. `None` keeps every arm.
    pub cap: Option<usize>,
    pub log: Vec<PoolEvent>,
}

impl ArmPool {
    pub fn new(rng_seed: u64) -> Self {
        Self {
            arms: BTreeMap::new(),
            rng_seed,
            rng: ChaCha8Rng::seed_from_u64(rng_seed),
            cap: None,
            log: Vec::new(),
        }
    }

    pub fn with_cap(mut self, cap: Option<usize>) -> Self {
        self.cap = cap;
        self
    }

    pub fn len(&self) -> usize {
        self.arms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arms.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ArmPosterior> {
        self.arms.get(id)
    }

    /// Adds an arm with the uniform prior Beta(1, 1).
    pub fn seed_arm(&mut self, test_id: &str) -> Result<(), BanditError> {
        if self.arms.contains_key(test_id) {
            return Err(BanditError::DuplicateArm(test_id.into()));
        }
        self.arms.insert(test_id.into(), ArmPosterior::new(test_id, 1.0, 1.0));
        self.log.push(PoolEvent::Seed { id: test_id.into() });
        self.enforce_cap();
        Ok(())
    }

    /// Top `min(n, len)` arms by `score`, highest first; ties go to the
    /// lexicographically smaller id. Scores are computed in id order.
    pub fn rank_by<F: FnMut(&ArmPosterior) -> f64>(&self, n: usize, mut score: F) -> Vec<String> {
        let mut scored: Vec<(f64, &str)> = self
            .arms
            .values()
            .map(|a| (score(a), a.test_id.as_str()))
            .collect();
        scored.sort_by(|x, y| y.0.total_cmp(&x.0).then_with(|| x.1.cmp(y.1)));
        scored.into_iter().take(n).map(|(_, id)| id.into()).collect()
    }

    /// Thompson selection with the pool's own RNG stream.
    pub fn select(&mut self, n: usize) -> Result<Vec<String>, BanditError> {
        self.check_select(n)?;
        let mut rng = self.rng.clone();
        let ids = self.rank_by(n, |a| sample_beta(a.alpha(), a.beta(), &mut rng));
        self.rng = rng;
        self.log.push(PoolEvent::Select { ids: ids.clone() });
        Ok(ids)
    }

    /// Selection with caller-provided draws.
    pub fn select_with<F: FnMut(&ArmPosterior) -> f64>(&mut self, n: usize, sampler: F) -> Result<Vec<String>, BanditError> {
        self.check_select(n)?;
        let ids = self.rank_by(n, sampler);
        self.log.push(PoolEvent::Select { ids: ids.clone() });
        Ok(ids)
    }

    /// Uniform selection without replacement.
    pub fn select_random(&mut self, n: usize) -> Result<Vec<String>, BanditError> {
        self.check_select(n)?;
        let ids: Vec<&String> = self.arms.keys().collect();
        let picked: Vec<String> = ids
            .choose_multiple(&mut self.rng, n.min(ids.len()))
            .map(|s| (*s).clone())
            .collect();
        self.log.push(PoolEvent::Select { ids: picked.clone() });
        Ok(picked)
    }

    pub fn select_by(&mut self, strategy: Strategy, n: usize) -> Result<Vec<String>, BanditError> {
        match strategy {
            Strategy::Thompson => self.select(n),
            Strategy::Random => self.select_random(n),
            Strategy::NoFeedback => Ok(Vec::new()),
        }
    }

    fn check_select(&self, n: usize) -> Result<(), BanditError> {
        if n == 0 {
            return Err(BanditError::ZeroSelection);
        }
        if self.arms.is_empty() {
            return Err(BanditError::EmptyPool);
        }
        Ok(())
    }

    fn check_known(&self, ids: &[String]) -> Result<(), BanditError> {
        match ids.iter().find(|id| !self.arms.contains_key(id.as_str())) {
            Some(id) => Err(BanditError::UnknownArm(id.clone())),
            None => Ok(()),
        }
    }

    /// Credits the whole batch to every selected arm. Repeated ids are
    /// credited once.
    pub fn update(&mut self, example_ids: &[String], num_trigger: u64, num_not_trigger: u64) -> Result<(), BanditError> {
        self.check_known(example_ids)?;
        if num_trigger + num_not_trigger == 0 {
            return Err(BanditError::EmptyBatch);
        }
        let unique: BTreeSet<&String> = example_ids.iter().collect();
        for id in &unique {
            let arm = self.arms.get_mut(id.as_str()).expect("checked");
            arm.successes += num_trigger;
            arm.failures += num_not_trigger;
        }
        self.log.push(PoolEvent::Update {
            ids: unique.into_iter().cloned().collect(),
            triggers: num_trigger,
            non_triggers: num_not_trigger,
        });
        Ok(())
    }

    /// Adds `new_ids` with the parents' mean (α, β). Call after
    /// [`update`](Self::update) for the same batch.
    pub fn admit_new(&mut self, example_ids: &[String], new_ids: &[String]) -> Result<(), BanditError> {
        self.check_known(example_ids)?;
        if new_ids.is_empty() {
            return Ok(());
        }
        let parents: BTreeSet<&String> = example_ids.iter().collect();
        if parents.is_empty() {
            return Err(BanditError::NoParents);
        }
        let mut seen = BTreeSet::new();
        for id in new_ids {
            if self.arms.contains_key(id) || !seen.insert(id) {
                return Err(BanditError::DuplicateArm(id.clone()));
            }
        }
        let k = parents.len() as f64;
        let alpha = parents.iter().map(|p| self.arms[p.as_str()].alpha()).sum::<f64>() / k;
        let beta = parents.iter().map(|p| self.arms[p.as_str()].beta()).sum::<f64>() / k;
        for id in new_ids {
            self.arms.insert(id.clone(), ArmPosterior::new(id.clone(), alpha, beta));
        }
        self.log.push(PoolEvent::Admit {
            parents: parents.into_iter().cloned().collect(),
            new: new_ids.to_vec(),
        });
        self.enforce_cap();
        Ok(())
    }

    fn enforce_cap(&mut self) {
        let Some(cap) = self.cap else { return };
        if self.arms.len() <= cap {
            return;
        }
        let mut by_mean: Vec<(f64, String)> = self
            .arms
            .values()
            .map(|a| (a.mean(), a.test_id.clone()))
            .collect();
        // Lowest mean first; among equals the larger id goes first.
        by_mean.sort_by(|x, y| x.0.total_cmp(&y.0).then_with(|| y.1.cmp(&x.1)));
        let excess = self.arms.len() - cap;
        let evicted: Vec<String> = by_mean.into_iter().take(excess).map(|(_, id)| id).collect();
        for id in &evicted {
            self.arms.remove(id);
        }
        self.log.push(PoolEvent::Evict { ids: evicted });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use proptest::prelude::{any, prop_assert, prop_assert_eq, prop_oneof, proptest, Just, ProptestConfig};
    use proptest::strategy::Strategy as _;

    fn ids(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| String::from(*s)).collect()
    }

    #[test]
    fn select_with_fixed_draws() {
        let mut p = ArmPool::new(0);
        for id in ["a", "b", "c"] {
            p.seed_arm(id).unwrap();
        }
        let theta = |a: &ArmPosterior| match a.test_id.as_str() {
            "a" => 0.9,
            "b" => 0.2,
            _ => 0.5,
        };
        assert_eq!(p.select_with(2, theta).unwrap(), ["a", "c"]);
        assert_eq!(p.select_with(5, |_| 0.3).unwrap(), ["a", "b", "c"]);
    }

    #[test]
    fn select_caps_at_pool_size() {
        let mut p = ArmPool::new(1);
        p.seed_arm("x").unwrap();
        p.seed_arm("y").unwrap();
        let mut got = p.select(5).unwrap();
        got.sort();
        assert_eq!(got, ["x", "y"]);
        assert_eq!(p.select_random(5).unwrap().len(), 2);
    }

    #[test]
    fn select_errors() {
        let mut p = ArmPool::new(0);
        assert_eq!(p.select(1), Err(BanditError::EmptyPool));
        p.seed_arm("a").unwrap();
        assert_eq!(p.select(0), Err(BanditError::ZeroSelection));
        assert_eq!(p.select_by(super::Strategy::NoFeedback, 3).unwrap(), Vec::<String>::new());
    }

    #[test]
    fn update_examples() {
        let mut p = ArmPool::new(0);
        p.seed_arm("a").unwrap();
        p.seed_arm("b").unwrap();
        p.update(&ids(&["a"]), 4, 6).unwrap();
        assert_eq!((p.get("a").unwrap().alpha(), p.get("a").unwrap().beta()), (5.0, 7.0));
        p.update(&ids(&["a", "b"]), 4, 6).unwrap();
        assert_eq!((p.get("a").unwrap().alpha(), p.get("a").unwrap().beta()), (9.0, 13.0));
        assert_eq!((p.get("b").unwrap().alpha(), p.get("b").unwrap().beta()), (5.0, 7.0));
        p.update(&ids(&["b"]), 0, 10).unwrap();
        assert_eq!(p.get("b").unwrap().alpha(), 5.0);
        assert_eq!(p.update(&ids(&["zz"]), 1, 1), Err(BanditError::UnknownArm("zz".into())));
        assert_eq!(p.update(&ids(&["a"]), 0, 0), Err(BanditError::EmptyBatch));
    }

    fn arm_with(p: &mut ArmPool, id: &str, a: u64, b: u64) {
        p.seed_arm(id).unwrap();
        p.update(&ids(&[id]), a - 1, b - 1).unwrap();
    }

    #[test]
    fn admit_examples() {
        let mut p = ArmPool::new(0);
        arm_with(&mut p, "p1", 5, 7);
        arm_with(&mut p, "p2", 3, 9);
        p.admit_new(&ids(&["p1", "p2"]), &ids(&["n1", "n2"])).unwrap();
        for n in ["n1", "n2"] {
            let a = p.get(n).unwrap();
            assert_eq!((a.alpha(), a.beta()), (4.0, 8.0));
        }
        p.admit_new(&ids(&["p1"]), &ids(&["n3"])).unwrap();
        assert_eq!((p.get("n3").unwrap().alpha(), p.get("n3").unwrap().beta()), (5.0, 7.0));
        let before = p.arms.clone();
        p.admit_new(&ids(&["p1"]), &[]).unwrap();
        assert_eq!(p.arms, before);
        assert_eq!(p.admit_new(&ids(&["p1"]), &ids(&["n3"])), Err(BanditError::DuplicateArm("n3".into())));
        assert_eq!(p.admit_new(&ids(&["p1"]), &ids(&["m", "m"])), Err(BanditError::DuplicateArm("m".into())));
        assert_eq!(p.admit_new(&ids(&["ghost"]), &ids(&["m"])), Err(BanditError::UnknownArm("ghost".into())));
        assert_eq!(p.admit_new(&[], &ids(&["m"])), Err(BanditError::NoParents));
    }

    #[test]
    fn seed_examples() {
        let mut p = ArmPool::new(0);
        p.seed_arm("t").unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!((p.get("t").unwrap().alpha(), p.get("t").unwrap().beta()), (1.0, 1.0));
        assert_eq!(p.seed_arm("t"), Err(BanditError::DuplicateArm("t".into())));
        assert_eq!(p.select(1).unwrap(), ["t"]);
    }

    #[test]
    fn cap_evicts_lowest_means() {
        let mut p = ArmPool::new(0).with_cap(Some(2));
        arm_with(&mut p, "good", 9, 1);
        arm_with(&mut p, "bad", 1, 9);
        p.seed_arm("new").unwrap();
        let mut left: Vec<_> = p.arms.keys().cloned().collect();
        left.sort();
        assert_eq!(left, ["good", "new"]);
        assert!(matches!(p.log.last(), Some(PoolEvent::Evict { ids }) if ids == &["bad"]));
    }

    #[test]
    fn uniform_prior_selection_is_uniform() {
        // Four Beta(1,1) arms, n = 1, 10000 draws: each count is
        // Binomial(10000, 0.25), sd = 43.3.
        let mut p = ArmPool::new(20240601);
        for id in ["a", "b", "c", "d"] {
            p.seed_arm(id).unwrap();
        }
        let mut counts = BTreeMap::new();
        for _ in 0..10_000 {
            let id = p.select(1).unwrap().remove(0);
            *counts.entry(id).or_insert(0usize) += 1;
        }
        for (id, c) in counts {
            assert!((c as f64 - 2500.0).abs() < 3.0 * 43.3, "{id}: {c}");
        }
    }

    #[test]
    fn beta_sampler_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (a, b) = (2.0, 5.0);
        let xs: Vec<f64> = (0..20_000).map(|_| sample_beta(a, b, &mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / xs.len() as f64;
        // Beta(2,5): mean 2/7, variance 10/392.
        assert!((mean - 2.0 / 7.0).abs() < 0.005, "{mean}");
        assert!((var - 10.0 / 392.0).abs() < 0.001, "{var}");
        assert!(xs.iter().all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn random_strategy_ignores_posteriors() {
        let mut p = ArmPool::new(3);
        arm_with(&mut p, "strong", 200, 1);
        arm_with(&mut p, "weak", 1, 200);
        let mut weak = 0;
        for _ in 0..2000 {
            if p.select_random(1).unwrap()[0] == "weak" {
                weak += 1;
            }
        }
        // Binomial(2000, 0.5), sd = 22.4.
        assert!((weak as f64 - 1000.0).abs() < 4.0 * 22.4, "{weak}");
    }

    #[derive(Debug, Clone)]
    enum Op {
        Seed,
        Step { n: usize, triggers: u64, batch: u64, new: usize },
    }

    fn op() -> impl proptest::strategy::Strategy<Value = Op> {
        prop_oneof![
            Just(Op::Seed),
            (1usize..4, 0u64..=10, 1u64..=10, 0usize..3).prop_map(|(n, t, b, new)| Op::Step {
                n,
                triggers: t.min(b),
                batch: b,
                new
            }),
        ]
    }

    /// Replays a random event sequence, tracking credited counts per arm on
    /// the side; returns the pool and the side ledger.
    fn drive(seed: u64, ops: &[Op]) -> (ArmPool, BTreeMap<String, (u64, u64)>) {
        let mut p = ArmPool::new(seed);
        let mut ledger: BTreeMap<String, (u64, u64)> = BTreeMap::new();
        let mut next = 0;
        for o in ops {
            match o {
                Op::Seed => {
                    let id = format!("t{next:04}");
                    next += 1;
                    p.seed_arm(&id).unwrap();
                    ledger.insert(id, (0, 0));
                }
                Op::Step { n, triggers, batch, new } => {
                    if p.is_empty() {
                        continue;
                    }
                    let chosen = p.select(*n).unwrap();
                    let (t, f) = (*triggers, batch - triggers);
                    p.update(&chosen, t, f).unwrap();
                    for id in &chosen {
                        let e = ledger.get_mut(id).unwrap();
                        e.0 += t;
                        e.1 += f;
                    }
                    let fresh: Vec<String> = (0..*new)
                        .map(|_| {
                            next += 1;
                            format!("t{:04}", next - 1)
                        })
                        .collect();
                    p.admit_new(&chosen, &fresh).unwrap();
                    for id in fresh {
                        ledger.insert(id, (0, 0));
                    }
                }
            }
        }
        (p, ledger)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn ledger_property(seed in any::<u64>(), ops in proptest::collection::vec(op(), 1..60)) {
            let (p, ledger) = drive(seed, &ops);
            for (id, (t, f)) in &ledger {
                let a = p.get(id).unwrap();
                prop_assert_eq!(a.successes, *t);
                prop_assert_eq!(a.failures, *f);
                prop_assert!(a.alpha0 >= 1.0 && a.beta0 >= 1.0);
                prop_assert!(a.alpha().is_finite() && a.beta().is_finite());
            }
        }

        #[test]
        fn trajectory_is_deterministic(seed in any::<u64>(), ops in proptest::collection::vec(op(), 1..40)) {
            let (a, _) = drive(seed, &ops);
            let (b, _) = drive(seed, &ops);
            prop_assert_eq!(a, b);
        }

        #[test]
        fn well_sampled_posterior_mean_is_within_five_points(truth in 0.05f64..0.95, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut p = ArmPool::new(seed);
            p.seed_arm("a").unwrap();
            for _ in 0..200 {
                let t = (0..10).filter(|_| rng.random_bool(truth)).count() as u64;
                p.update(&ids(&["a"]), t, 10 - t).unwrap();
            }
            let m = p.get("a").unwrap().mean();
            prop_assert!((m - truth).abs() <= 0.05, "{} vs {}", m, truth);
        }

        #[test]
        fn updates_strictly_grow_totals(t in 0u64..10, b in 1u64..10) {
            let mut p = ArmPool::new(0);
            p.seed_arm("a").unwrap();
            let before = p.get("a").unwrap().alpha() + p.get("a").unwrap().beta();
            p.update(&[String::from("a")], t.min(b), b - t.min(b)).unwrap();
            prop_assert!(p.get("a").unwrap().alpha() + p.get("a").unwrap().beta() > before);
        }
    }
}
