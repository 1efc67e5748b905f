use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};

use rand::Rng;

use crate::error::{Error, Result};

/// Discretized observation used as a Q-table row index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StateKey(pub u32);

impl fmt::Display for StateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Action values per state. Unseen states read as all zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    num_actions: usize,
    rows: BTreeMap<StateKey, Vec<f64>>,
}

impl QTable {
    pub fn new(num_actions: usize) -> Self {
        assert!(num_actions > 0, "a Q-table needs at least one action");
        QTable {
            num_actions,
            rows: BTreeMap::new(),
        }
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn states(&self) -> impl Iterator<Item = StateKey> + '_ {
        self.rows.keys().copied()
    }

    pub fn value(&self, key: StateKey, action: usize) -> f64 {
        self.rows.get(&key).map_or(0.0, |row| row[action])
    }

    pub fn row(&self, key: StateKey) -> Vec<f64> {
        self.rows
            .get(&key)
            .cloned()
            .unwrap_or_else(|| vec![0.0; self.num_actions])
    }

    pub fn set(&mut self, key: StateKey, action: usize, value: f64) {
        let n = self.num_actions;
        self.rows.entry(key).or_insert_with(|| vec![0.0; n])[action] = value;
    }

    pub fn max_value(&self, key: StateKey) -> f64 {
        self.rows.get(&key).map_or(0.0, |row| {
            row.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        })
    }

    /// Highest-valued action; ties go to the lowest id.
    pub fn best_action(&self, key: StateKey) -> usize {
        self.rows.get(&key).map_or(0, |row| argmax(row))
    }

    pub fn max_abs_value(&self) -> f64 {
        self.rows
            .values()
            .flatten()
            .fold(0.0, |m, v| f64::max(m, v.abs()))
    }

    /// One Q-learning backup:
    /// `Q(s,a) += alpha * (r + gamma * max_a' Q(s',a') - Q(s,a))`,
    /// with the bootstrap term taken as 0 when `terminal`.
    ///
    /// Returns the new value of `Q(s,a)`.
    #[allow(clippy::too_many_arguments)]
    pub fn update(
        &mut self,
        state: StateKey,
        action: usize,
        reward: f64,
        next_state: StateKey,
        terminal: bool,
        alpha: f64,
        gamma: f64,
    ) -> Result<f64> {
        if action >= self.num_actions {
            return Err(Error::Argument(format!(
                "action {action} outside 0..{}",
                self.num_actions
            )));
        }
        if !(reward.is_finite() && alpha.is_finite() && gamma.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite update input (r={reward}, alpha={alpha}, gamma={gamma})"
            )));
        }
        let bootstrap = if terminal { 0.0 } else { self.max_value(next_state) };
        let old = self.value(state, action);
        let new = old + alpha * (reward + gamma * bootstrap - old);
        if !new.is_finite() {
            return Err(Error::Numeric(format!("Q({state}, {action}) became {new}")));
        }
        self.set(state, action, new);
        Ok(new)
    }

    /// Writes the table as text: a header line recording the action count
    /// and `config_hash`, then one `key<TAB>q0 q1 ...` line per state.
    pub fn write_to<W: Write>(&self, mut out: W, config_hash: u64) -> Result<()> {
        writeln!(
            out,
            "# fbenv-qtable actions={} config={config_hash:016x}",
            self.num_actions
        )?;
        for (key, row) in &self.rows {
            let values: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            writeln!(out, "{key}\t{}", values.join(" "))?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads the format written by [`write_to`](Self::write_to); returns the
    /// table and the recorded config hash.
    pub fn read_from<R: BufRead>(input: R) -> Result<(QTable, u64)> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Config("empty Q-table file".into()))??;
        let mut num_actions = None;
        let mut hash = None;
        for field in header.trim_start_matches('#').split_whitespace() {
            if let Some(v) = field.strip_prefix("actions=") {
                num_actions = v.parse::<usize>().ok();
            } else if let Some(v) = field.strip_prefix("config=") {
                hash = u64::from_str_radix(v, 16).ok();
            }
        }
        let (Some(num_actions), Some(hash)) = (num_actions, hash) else {
            return Err(Error::Config(format!("bad Q-table header {header:?}")));
        };
        if num_actions == 0 {
            return Err(Error::Config("Q-table header declares zero actions".into()));
        }
        let mut table = QTable::new(num_actions);
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = || Error::Config(format!("Q-table line {}: {line:?}", n + 2));
            let (key, values) = line.split_once('\t').ok_or_else(bad)?;
            let key = StateKey(key.trim().parse().map_err(|_| bad())?);
            let row: Vec<f64> = values
                .split_whitespace()
                .map(|v| v.parse().map_err(|_| bad()))
                .collect::<Result<_>>()?;
            if row.len() != num_actions || row.iter().any(|v| !v.is_finite()) {
                return Err(bad());
            }
            table.rows.insert(key, row);
        }
        Ok((table, hash))
    }
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Epsilon-greedy: a uniformly random action with probability `epsilon`,
/// otherwise the greedy action (lowest id on ties).
pub fn select_action<R: Rng + ?Sized>(
    q: &QTable,
    key: StateKey,
    epsilon: f64,
    rng: &mut R,
) -> usize {
    if rng.gen::<f64>() < epsilon {
        rng.gen_range(0..q.num_actions())
    } else {
        q.best_action(key)
    }
}

/// Greedy action per state; states never seen map to action 0.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PolicyTable {
    actions: BTreeMap<StateKey, usize>,
}

impl PolicyTable {
    pub fn action(&self, key: StateKey) -> usize {
        self.actions.get(&key).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (StateKey, usize)> + '_ {
        self.actions.iter().map(|(k, a)| (*k, *a))
    }
}

pub fn greedy_policy(q: &QTable) -> PolicyTable {
    PolicyTable {
        actions: q.states().map(|k| (k, q.best_action(k))).collect(),
    }
}
