//! Simulated annealing over rule sets built from a fixed candidate pool.

use fixedbitset::FixedBitSet;
use ndarray::ArrayView2;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{candidate_conditions, BrsPrior, Condition, Confusion, Rule, RuleSet, DEFAULT_LEVELS, DEFAULT_MAX_LEN};
use crate::dataset::ClassLabel;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SaSchedule {
    pub iterations: usize,
    pub initial_temperature: f64,
    /// Geometric cooling factor applied once per iteration.
    pub cooling: f64,
    pub seed: u64,
}

impl Default for SaSchedule {
    fn default() -> Self {
        SaSchedule {
            iterations: 5000,
            initial_temperature: 1.0,
            cooling: 0.999,
            seed: 0,
        }
    }
}

impl SaSchedule {
    pub fn temperature(&self, iteration: usize) -> f64 {
        self.initial_temperature * self.cooling.powi(iteration as i32)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnConfig {
    pub prior: BrsPrior,
    pub schedule: SaSchedule,
    pub max_len: usize,
    /// Upper bound on the number of rules; unbounded when `None`.
    pub max_rules: Option<usize>,
    /// Quantile levels for candidate thresholds.
    pub levels: Vec<f64>,
    pub positive_class: ClassLabel,
}

impl Default for LearnConfig {
    fn default() -> Self {
        LearnConfig {
            prior: BrsPrior::default(),
            schedule: SaSchedule::default(),
            max_len: DEFAULT_MAX_LEN,
            max_rules: None,
            levels: DEFAULT_LEVELS.to_vec(),
            positive_class: ClassLabel::Class2,
        }
    }
}

impl LearnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_len == 0 {
            return Err(Error::InvalidConfig("max_len must be at least 1".into()));
        }
        if self.max_rules == Some(0) {
            return Err(Error::InvalidConfig("max_rules must be at least 1".into()));
        }
        let s = &self.schedule;
        if !(s.initial_temperature > 0.0 && s.initial_temperature.is_finite()) || !(s.cooling > 0.0 && s.cooling <= 1.0)
        {
            return Err(Error::InvalidConfig(
                "temperature must be positive and cooling in (0, 1]".into(),
            ));
        }
        self.prior.validate(self.max_len)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LearnOutcome<T = f64> {
    pub ruleset: RuleSet<T>,
    pub log_posterior: f64,
    pub initial_log_posterior: f64,
    /// Best score seen after each iteration.
    pub trace: Vec<f64>,
    pub accepted: usize,
    pub candidates: Vec<Condition<T>>,
    pub seed: u64,
}

/// Learns a rule set on rows of `x` labeled `y`.
pub fn learn<T: Scalar>(x: ArrayView2<T>, y: &[ClassLabel], cfg: &LearnConfig) -> Result<LearnOutcome<T>> {
    cfg.validate()?;
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            found: y.len(),
        });
    }
    if x.nrows() < 2 {
        return Err(Error::EmptyTrainingSet);
    }
    let n_pos = y.iter().filter(|&&l| l == cfg.positive_class).count();
    if n_pos == 0 || n_pos == y.len() {
        return Err(Error::DegenerateLabels);
    }
    let candidates = candidate_conditions(x, &cfg.levels)?;
    if candidates.is_empty() {
        return Err(Error::InvalidConfig("no candidate conditions".into()));
    }
    let problem = Problem::new(x, y, &candidates, cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.schedule.seed);

    let mut current = problem.greedy_initial();
    let mut current_score = problem.score(&current);
    let initial_score = current_score;
    let mut best = current.clone();
    let mut best_score = current_score;
    let mut trace = Vec::with_capacity(cfg.schedule.iterations);
    let mut accepted = 0;

    for it in 0..cfg.schedule.iterations {
        let temperature = cfg.schedule.temperature(it);
        if let Some(next) = problem.propose(&current, &mut rng) {
            let next_score = problem.score(&next);
            let delta = next_score - current_score;
            let u: f64 = rng.random();
            if delta >= 0.0 || u < (delta / temperature).exp() {
                current = next;
                current_score = next_score;
                accepted += 1;
                if current_score > best_score {
                    best = current.clone();
                    best_score = current_score;
                }
            }
        }
        trace.push(best_score);
    }

    Ok(LearnOutcome {
        ruleset: problem.to_ruleset(&best),
        log_posterior: best_score,
        initial_log_posterior: initial_score,
        trace,
        accepted,
        candidates,
        seed: cfg.schedule.seed,
    })
}

/// Independent chains, one per seed, run in parallel. The highest score wins;
/// ties go to the earlier seed in `seeds`.
pub fn learn_chains<T: Scalar>(
    x: ArrayView2<T>,
    y: &[ClassLabel],
    cfg: &LearnConfig,
    seeds: &[u64],
) -> Result<LearnOutcome<T>> {
    if seeds.is_empty() {
        return Err(Error::InvalidConfig("at least one seed is required".into()));
    }
    let outcomes = seeds
        .par_iter()
        .map(|&seed| {
            let mut c = cfg.clone();
            c.schedule.seed = seed;
            learn(x, y, &c)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best: Option<LearnOutcome<T>> = None;
    for o in outcomes {
        if best.as_ref().is_none_or(|b| o.log_posterior > b.log_posterior) {
            best = Some(o);
        }
    }
    Ok(best.expect("non-empty seeds"))
}

/// Rules are sorted candidate-index lists.
type State = Vec<Vec<usize>>;

struct Problem<'a, T> {
    candidates: &'a [Condition<T>],
    cover: Vec<FixedBitSet>,
    positive: FixedBitSet,
    n_rows: usize,
    prior: &'a BrsPrior,
    max_len: usize,
    max_rules: usize,
    positive_class: ClassLabel,
}

impl<'a, T: Scalar> Problem<'a, T> {
    fn new(x: ArrayView2<T>, y: &[ClassLabel], candidates: &'a [Condition<T>], cfg: &'a LearnConfig) -> Self {
        let n = x.nrows();
        let cover = candidates
            .iter()
            .map(|c| {
                let mut bits = FixedBitSet::with_capacity(n);
                for i in 0..n {
                    if c.op.holds(x[[i, c.variable]], c.threshold) {
                        bits.insert(i);
                    }
                }
                bits
            })
            .collect();
        let mut positive = FixedBitSet::with_capacity(n);
        for (i, &l) in y.iter().enumerate() {
            if l == cfg.positive_class {
                positive.insert(i);
            }
        }
        Problem {
            candidates,
            cover,
            positive,
            n_rows: n,
            prior: &cfg.prior,
            max_len: cfg.max_len,
            max_rules: cfg.max_rules.unwrap_or(usize::MAX),
            positive_class: cfg.positive_class,
        }
    }

    fn rule_cover(&self, rule: &[usize]) -> FixedBitSet {
        let mut bits = self.cover[rule[0]].clone();
        for &c in &rule[1..] {
            bits.intersect_with(&self.cover[c]);
        }
        bits
    }

    fn coverage(&self, state: &State) -> FixedBitSet {
        let mut bits = FixedBitSet::with_capacity(self.n_rows);
        for r in state {
            bits.union_with(&self.rule_cover(r));
        }
        bits
    }

    fn score(&self, state: &State) -> f64 {
        let cov = self.coverage(state);
        let covered = cov.count_ones(..);
        let tp = cov.intersection_count(&self.positive);
        let n_pos = self.positive.count_ones(..);
        let conf = Confusion {
            tp,
            fp: covered - tp,
            fn_: n_pos - tp,
            tn: self.n_rows - n_pos - (covered - tp),
        };
        self.prior.log_likelihood(&conf) + self.prior.log_prior(state.iter().map(Vec::len), self.candidates.len())
    }

    fn compatible(&self, rule: &[usize], c: usize) -> bool {
        let cand = &self.candidates[c];
        rule.iter().all(|&r| {
            let o = &self.candidates[r];
            !(o.variable == cand.variable && o.op == cand.op)
        })
    }

    /// Best one-condition rule, extended by the best second condition while
    /// that improves the score. Ties go to the lower candidate index.
    fn greedy_initial(&self) -> State {
        let mut best: State = vec![vec![0]];
        let mut best_score = self.score(&best);
        for c in 1..self.candidates.len() {
            let s = vec![vec![c]];
            let score = self.score(&s);
            if score > best_score {
                best = s;
                best_score = score;
            }
        }
        while best[0].len() < self.max_len {
            let mut improved = None;
            for c in 0..self.candidates.len() {
                if best[0].contains(&c) || !self.compatible(&best[0], c) {
                    continue;
                }
                let mut rule = best[0].clone();
                rule.push(c);
                rule.sort_unstable();
                let s = vec![rule];
                let score = self.score(&s);
                if score > best_score {
                    best_score = score;
                    improved = Some(s);
                }
            }
            match improved {
                Some(s) => best = s,
                None => break,
            }
        }
        best
    }

    fn pick_candidate<R: Rng>(&self, rng: &mut R, rule: &[usize], want: impl Fn(usize) -> bool) -> Option<usize> {
        let pool: Vec<usize> = (0..self.candidates.len())
            .filter(|&c| !rule.contains(&c) && self.compatible(rule, c) && want(c))
            .collect();
        pool.choose(rng).copied()
    }

    fn random_rule<R: Rng>(&self, rng: &mut R, want: impl Fn(usize) -> bool) -> Option<Vec<usize>> {
        let len = rng.random_range(1..=self.max_len);
        let mut rule = Vec::with_capacity(len);
        for _ in 0..len {
            match self.pick_candidate(rng, &rule, &want) {
                Some(c) => rule.push(c),
                None => break,
            }
        }
        (!rule.is_empty()).then_some(rule)
    }

    /// Replaces one condition of `rule` with a compatible candidate accepted by `want`.
    fn replace_condition<R: Rng>(
        &self,
        rng: &mut R,
        rule: &mut Vec<usize>,
        want: impl Fn(usize) -> bool,
    ) -> Option<()> {
        let k = rng.random_range(0..rule.len());
        rule.remove(k);
        let c = self.pick_candidate(rng, rule, want)?;
        rule.push(c);
        Some(())
    }

    fn propose<R: Rng>(&self, state: &State, rng: &mut R) -> Option<State> {
        let cov = self.coverage(state);
        let wrong: Vec<usize> = (0..self.n_rows)
            .filter(|&i| cov.contains(i) != self.positive.contains(i))
            .collect();
        let mut next = state.clone();
        match wrong.choose(rng) {
            Some(&i) if self.positive.contains(i) => self.cover_missed(&mut next, i, rng)?,
            Some(&i) => self.drop_false_alarm(&mut next, i, rng)?,
            None => self.random_move(&mut next, rng)?,
        }
        self.canonical(next)
    }

    /// Moves that can start covering positive row `i`.
    fn cover_missed<R: Rng>(&self, state: &mut State, i: usize, rng: &mut R) -> Option<()> {
        let holds = |c: usize| self.cover[c].contains(i);
        if state.len() < self.max_rules && rng.random_bool(0.5) {
            state.push(self.random_rule(rng, holds)?);
            return Some(());
        }
        let r = rng.random_range(0..state.len());
        let rule = &mut state[r];
        if rule.len() > 1 && rng.random_bool(0.5) {
            let k = rng.random_range(0..rule.len());
            rule.remove(k);
            Some(())
        } else {
            self.replace_condition(rng, rule, holds)
        }
    }

    /// Moves that can stop covering negative row `i`.
    fn drop_false_alarm<R: Rng>(&self, state: &mut State, i: usize, rng: &mut R) -> Option<()> {
        let firing: Vec<usize> = (0..state.len())
            .filter(|&r| self.rule_cover(&state[r]).contains(i))
            .collect();
        let r = *firing.choose(rng)?;
        let fails = |c: usize| !self.cover[c].contains(i);
        let u: f64 = rng.random();
        if u < 1.0 / 3.0 && state.len() > 1 {
            state.remove(r);
            Some(())
        } else if u < 2.0 / 3.0 && state[r].len() < self.max_len {
            let c = self.pick_candidate(rng, &state[r], fails)?;
            state[r].push(c);
            Some(())
        } else {
            self.replace_condition(rng, &mut state[r], fails)
        }
    }

    fn random_move<R: Rng>(&self, state: &mut State, rng: &mut R) -> Option<()> {
        match rng.random_range(0..3) {
            0 if state.len() < self.max_rules => state.push(self.random_rule(rng, |_| true)?),
            1 if state.len() > 1 => {
                let r = rng.random_range(0..state.len());
                state.remove(r);
            }
            _ => {
                let r = rng.random_range(0..state.len());
                self.replace_condition(rng, &mut state[r], |_| true)?;
            }
        }
        Some(())
    }

    /// Sorts conditions and rejects empty, oversized or duplicated rule sets.
    fn canonical(&self, mut state: State) -> Option<State> {
        if state.is_empty() || state.len() > self.max_rules {
            return None;
        }
        for rule in state.iter_mut() {
            if rule.is_empty() || rule.len() > self.max_len {
                return None;
            }
            rule.sort_unstable();
        }
        for k in 1..state.len() {
            if state[..k].contains(&state[k]) {
                return None;
            }
        }
        Some(state)
    }

    fn to_ruleset(&self, state: &State) -> RuleSet<T> {
        let rules = state
            .iter()
            .map(|r| Rule::new(r.iter().map(|&c| self.candidates[c]).collect()).expect("compatible conditions"))
            .collect();
        RuleSet::new(rules, self.positive_class)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brs::log_posterior;
    use ndarray::Array2;
    use rand::seq::SliceRandom;

    fn planted(n: usize, seed: u64) -> (Array2<f64>, Vec<ClassLabel>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Array2::from_shape_fn((n, 6), |_| rng.random::<f64>());
        // evenly spread v_3 so exactly half the rows are positive
        let mut grid: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        grid.shuffle(&mut rng);
        x.column_mut(3).assign(&ndarray::Array1::from(grid));
        let y = x
            .rows()
            .into_iter()
            .map(|r| {
                if r[3] > 0.5 {
                    ClassLabel::Class2
                } else {
                    ClassLabel::Class1
                }
            })
            .collect();
        (x, y)
    }

    fn accuracy(rs: &RuleSet, x: &Array2<f64>, y: &[ClassLabel]) -> f64 {
        let hits = x
            .rows()
            .into_iter()
            .zip(y)
            .filter(|(r, &l)| rs.predict(&r.to_vec()).label == l)
            .count();
        hits as f64 / y.len() as f64
    }

    #[test]
    fn recovers_planted_threshold() {
        let (x, y) = planted(200, 4);
        let out = learn(x.view(), &y, &LearnConfig::default()).unwrap();
        assert!(accuracy(&out.ruleset, &x, &y) >= 0.98, "{}", out.ruleset);
        assert!(out.ruleset.len() <= 2);
    }

    #[test]
    fn zero_iterations_returns_greedy_rule() {
        let (x, y) = planted(60, 1);
        let mut cfg = LearnConfig::default();
        cfg.schedule.iterations = 0;
        let out = learn(x.view(), &y, &cfg).unwrap();
        assert_eq!(out.ruleset.len(), 1);
        assert!(out.trace.is_empty());
        assert_eq!(out.log_posterior, out.initial_log_posterior);
        // no single condition beats the greedy starting rule
        for c in &out.candidates {
            let single = RuleSet::new(vec![Rule::new(vec![*c]).unwrap()], ClassLabel::Class2);
            let s = log_posterior(&single, x.view(), &y, &cfg.prior, out.candidates.len()).unwrap();
            assert!(s <= out.log_posterior + 1e-12);
        }
    }

    #[test]
    fn deterministic_for_a_seed() {
        let (x, y) = planted(80, 2);
        let mut cfg = LearnConfig::default();
        cfg.schedule.iterations = 800;
        cfg.schedule.seed = 11;
        let a = learn(x.view(), &y, &cfg).unwrap();
        let b = learn(x.view(), &y, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn learned_rules_come_from_pool_and_trace_is_monotone() {
        let (x, y) = planted(80, 3);
        let mut cfg = LearnConfig::default();
        cfg.schedule.iterations = 1500;
        let out = learn(x.view(), &y, &cfg).unwrap();
        for rule in &out.ruleset.rules {
            assert!((1..=2).contains(&rule.len()));
            for c in rule.conditions() {
                assert!(out.candidates.contains(c));
            }
        }
        assert!(out.trace.windows(2).all(|w| w[1] >= w[0]));
        let direct = log_posterior(&out.ruleset, x.view(), &y, &cfg.prior, out.candidates.len()).unwrap();
        assert!((direct - out.log_posterior).abs() < 1e-9);
    }

    #[test]
    fn degenerate_labels() {
        let x = Array2::from_shape_fn((4, 2), |(i, j)| (i + j) as f64);
        let y = vec![ClassLabel::Class1; 4];
        assert!(matches!(
            learn(x.view(), &y, &LearnConfig::default()),
            Err(Error::DegenerateLabels)
        ));
    }

    #[test]
    fn chains_prefer_best_then_lowest_seed() {
        let (x, y) = planted(60, 5);
        let mut cfg = LearnConfig::default();
        cfg.schedule.iterations = 300;
        let seeds = [7, 3, 9];
        let best = learn_chains(x.view(), &y, &cfg, &seeds).unwrap();
        let scores: Vec<f64> = seeds
            .iter()
            .map(|&s| {
                let mut c = cfg.clone();
                c.schedule.seed = s;
                learn(x.view(), &y, &c).unwrap().log_posterior
            })
            .collect();
        let top = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let first = seeds[scores.iter().position(|&s| s == top).unwrap()];
        assert_eq!(best.log_posterior, top);
        assert_eq!(best.seed, first);
    }

    /// Every rule set of at most two rules over a six-condition pool.
    fn brute_force(x: &Array2<f64>, y: &[ClassLabel], pool: &[Condition<f64>], prior: &BrsPrior) -> f64 {
        let mut rules = Vec::new();
        for a in 0..pool.len() {
            rules.push(vec![pool[a]]);
            for b in (a + 1)..pool.len() {
                if let Ok(r) = Rule::new(vec![pool[a], pool[b]]) {
                    rules.push(r.conditions().to_vec());
                }
            }
        }
        let mut best = f64::NEG_INFINITY;
        for i in 0..rules.len() {
            for j in i..rules.len() {
                let mut set = vec![Rule::new(rules[i].clone()).unwrap()];
                if j > i {
                    set.push(Rule::new(rules[j].clone()).unwrap());
                }
                let rs = RuleSet::new(set, ClassLabel::Class2);
                best = best.max(log_posterior(&rs, x.view(), y, prior, pool.len()).unwrap());
            }
        }
        best
    }

    #[test]
    fn matches_exhaustive_search_on_tiny_pool() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let x = Array2::from_shape_fn((30, 3), |_| rng.random::<f64>());
        let y: Vec<ClassLabel> = x
            .rows()
            .into_iter()
            .map(|r| {
                let pos = (r[0] > 0.5 && r[1] <= 0.5) || r[2] > 0.8;
                if pos {
                    ClassLabel::Class2
                } else {
                    ClassLabel::Class1
                }
            })
            .collect();
        let mut cfg = LearnConfig {
            levels: vec![0.5],
            max_rules: Some(2),
            ..LearnConfig::default()
        };
        let pool = candidate_conditions(x.view(), &cfg.levels).unwrap();
        assert_eq!(pool.len(), 6);
        let optimum = brute_force(&x, &y, &pool, &cfg.prior);
        let mut hits = 0;
        for seed in 0..10 {
            cfg.schedule.seed = seed;
            let out = learn(x.view(), &y, &cfg).unwrap();
            assert!(out.log_posterior <= optimum + 1e-9);
            if (out.log_posterior - optimum).abs() <= 1e-9 {
                hits += 1;
            }
        }
        assert!(hits >= 9, "{hits}/10");
    }
}
