//! Bayesian rule sets: disjunctions of short conjunctive threshold rules over
//! chart variables, scored by a beta-Bernoulli posterior and searched with
//! simulated annealing.

mod anneal;
mod candidates;
mod posterior;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::chart::{parse_variable, variable_name};
use crate::dataset::ClassLabel;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use anneal::{learn, learn_chains, LearnConfig, LearnOutcome, SaSchedule};
pub use candidates::{candidate_conditions, quantile, DEFAULT_LEVELS};
pub use posterior::{log_posterior, BrsPrior, Confusion};

/// Default upper bound on conditions per rule.
pub const DEFAULT_MAX_LEN: usize = 2;

/// Threshold comparison. Learned rules use `Gt` and `Le`; the strict and
/// non-strict mirrors exist for hand-written rules such as `D1 < 0.07`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Operator {
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = ">=")]
    Ge,
}

impl Operator {
    pub fn symbol(self) -> &'static str {
        match self {
            Operator::Gt => ">",
            Operator::Le => "<=",
            Operator::Lt => "<",
            Operator::Ge => ">=",
        }
    }

    #[inline]
    pub fn holds<T: PartialOrd>(self, value: T, threshold: T) -> bool {
        match self {
            Operator::Gt => value > threshold,
            Operator::Le => value <= threshold,
            Operator::Lt => value < threshold,
            Operator::Ge => value >= threshold,
        }
    }
}

impl FromStr for Operator {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            ">" => Ok(Operator::Gt),
            "<=" | "≤" => Ok(Operator::Le),
            "<" => Ok(Operator::Lt),
            ">=" | "≥" => Ok(Operator::Ge),
            other => Err(format!("unknown operator `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Condition<T = f64> {
    #[serde(with = "variable_serde")]
    pub variable: usize,
    pub op: Operator,
    pub threshold: T,
}

impl<T: Scalar> Condition<T> {
    pub fn new(variable: usize, op: Operator, threshold: T) -> Self {
        Condition {
            variable,
            op,
            threshold,
        }
    }

    /// Panics if `x` is shorter than the condition's variable index.
    #[inline]
    pub fn holds(&self, x: &[T]) -> bool {
        self.op.holds(x[self.variable], self.threshold)
    }

    /// Signed distance to the threshold, positive on the satisfied side.
    pub fn slack(&self, x: &[T]) -> T {
        let v = x[self.variable];
        match self.op {
            Operator::Gt | Operator::Ge => v - self.threshold,
            Operator::Le | Operator::Lt => self.threshold - v,
        }
    }
}

impl<T: Scalar> fmt::Display for Condition<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {}",
            variable_name(self.variable),
            self.op.symbol(),
            format_threshold(self.threshold.as_f64())
        )
    }
}

/// Rounded to four significant figures, printed with at least two decimals
/// and no further trailing zeros.
pub fn format_threshold(t: f64) -> String {
    if t == 0.0 || !t.is_finite() {
        return format!("{t:.2}");
    }
    let magnitude = t.abs().log10().floor() as i32;
    let decimals = (3 - magnitude).max(0) as usize;
    let mut s = format!("{t:.decimals$}");
    if decimals < 2 {
        s = format!("{:.2}", s.parse::<f64>().unwrap_or(t));
    }
    while s.ends_with('0') && s.len() - s.find('.').unwrap_or(s.len()) > 3 {
        s.pop();
    }
    s
}

/// Conjunction of one or more conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", try_from = "RuleDoc<T>", into = "RuleDoc<T>")]
pub struct Rule<T = f64> {
    conditions: Vec<Condition<T>>,
}

impl<T: Scalar> Rule<T> {
    pub fn new(conditions: Vec<Condition<T>>) -> Result<Self> {
        if conditions.is_empty() {
            return Err(Error::InvalidConfig("a rule needs at least one condition".into()));
        }
        for (k, a) in conditions.iter().enumerate() {
            if conditions[..k].iter().any(|b| b.variable == a.variable && b.op == a.op) {
                return Err(Error::InvalidConfig(format!(
                    "rule repeats `{} {}`",
                    variable_name(a.variable),
                    a.op.symbol()
                )));
            }
        }
        Ok(Rule { conditions })
    }

    pub fn conditions(&self) -> &[Condition<T>] {
        &self.conditions
    }

    pub fn len(&self) -> usize {
        self.conditions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.conditions.is_empty()
    }

    pub fn holds(&self, x: &[T]) -> bool {
        self.conditions.iter().all(|c| c.holds(x))
    }
}

impl<T: Scalar> fmt::Display for Rule<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, c) in self.conditions.iter().enumerate() {
            if k > 0 {
                f.write_str(" AND ")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

impl<T: Scalar> FromStr for Rule<T> {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let conditions = s.split(" AND ").map(parse_condition).collect::<Result<Vec<_>>>()?;
        Rule::new(conditions)
    }
}

fn parse_condition<T: Scalar>(text: &str) -> Result<Condition<T>> {
    let bad = |msg: String| Error::InvalidConfig(format!("cannot parse condition `{}`: {msg}", text.trim()));
    let tokens: Vec<&str> = text.split_whitespace().collect();
    let [name, op, value] = tokens[..] else {
        return Err(bad("expected `VARIABLE OP THRESHOLD`".into()));
    };
    let variable = parse_variable(name).ok_or_else(|| bad(format!("unknown variable `{name}`")))?;
    let op = op.parse::<Operator>().map_err(bad)?;
    let threshold: f64 = value.parse().map_err(|e| bad(format!("{e}")))?;
    Ok(Condition::new(variable, op, T::lit(threshold)))
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct RuleDoc<T> {
    #[serde(default, skip_deserializing)]
    text: String,
    conditions: Vec<Condition<T>>,
}

impl<T: Scalar> TryFrom<RuleDoc<T>> for Rule<T> {
    type Error = Error;

    fn try_from(doc: RuleDoc<T>) -> Result<Self> {
        Rule::new(doc.conditions)
    }
}

impl<T: Scalar> From<Rule<T>> for RuleDoc<T> {
    fn from(rule: Rule<T>) -> Self {
        RuleDoc {
            text: rule.to_string(),
            conditions: rule.conditions,
        }
    }
}

mod variable_serde {
    use serde::{de, Deserialize, Deserializer, Serializer};

    use crate::chart::{parse_variable, variable_name};

    pub fn serialize<S: Serializer>(v: &usize, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&variable_name(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<usize, D::Error> {
        let name = String::deserialize(d)?;
        parse_variable(&name).ok_or_else(|| de::Error::custom(format!("unknown variable `{name}`")))
    }
}

/// Result of [`RuleSet::evaluate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Evaluation {
    pub positive: bool,
    /// Zero-based indices of every rule whose conditions all hold.
    pub fired: Vec<usize>,
}

/// Result of [`RuleSet::predict`].
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct Prediction<T = f64> {
    pub label: ClassLabel,
    pub fired: Vec<usize>,
    /// `slacks[r][c]` belongs to condition `c` of rule `r`.
    pub slacks: Vec<Vec<T>>,
}

/// OR of rules; a row obeying any rule is assigned `positive_class`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct RuleSet<T = f64> {
    pub rules: Vec<Rule<T>>,
    pub positive_class: ClassLabel,
}

impl<T: Scalar> RuleSet<T> {
    pub fn new(rules: Vec<Rule<T>>, positive_class: ClassLabel) -> Self {
        RuleSet { rules, positive_class }
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn evaluate(&self, x: &[T]) -> Evaluation {
        let fired: Vec<usize> = self
            .rules
            .iter()
            .enumerate()
            .filter(|(_, r)| r.holds(x))
            .map(|(k, _)| k)
            .collect();
        Evaluation {
            positive: !fired.is_empty(),
            fired,
        }
    }

    pub fn covers(&self, x: &[T]) -> bool {
        self.rules.iter().any(|r| r.holds(x))
    }

    pub fn predict(&self, x: &[T]) -> Prediction<T> {
        let eval = self.evaluate(x);
        let label = if eval.positive {
            self.positive_class
        } else {
            self.positive_class.other()
        };
        Prediction {
            label,
            fired: eval.fired,
            slacks: self
                .rules
                .iter()
                .map(|r| r.conditions.iter().map(|c| c.slack(x)).collect())
                .collect(),
        }
    }

    /// One rendered line per rule.
    pub fn render(&self) -> Vec<String> {
        self.rules.iter().map(|r| r.to_string()).collect()
    }

    /// Parses rendered rule lines; blank lines and a leading `OR` are ignored.
    pub fn parse(text: &str, positive_class: ClassLabel) -> Result<Self> {
        let rules = text
            .lines()
            .map(|l| l.trim())
            .map(|l| l.strip_prefix("OR ").unwrap_or(l))
            .filter(|l| !l.is_empty())
            .map(str::parse)
            .collect::<Result<Vec<_>>>()?;
        Ok(RuleSet::new(rules, positive_class))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

impl<T: Scalar> fmt::Display for RuleSet<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, r) in self.rules.iter().enumerate() {
            if k > 0 {
                f.write_str("\nOR ")?;
            }
            write!(f, "{r}")?;
        }
        Ok(())
    }
}
