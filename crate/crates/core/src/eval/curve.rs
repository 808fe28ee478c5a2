//! Cumulative Hits@k curves.
//!
//! A dialogue counts as a hit at turn `t` if its target reached rank
//! `<= k` at any turn `<= t`. Once a dialogue hits it is frozen: later
//! turns are not run for it and it stays counted.

use serde::{Deserialize, Serialize};

/// `h_0 ..= h_T`, fractions of dialogues hit by each turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HitsCurve(Vec<f64>);

impl HitsCurve {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn at(&self, turn: usize) -> f64 {
        self.0[turn]
    }

    pub fn last(&self) -> f64 {
        *self.0.last().expect("curve covers at least turn 0")
    }

    pub fn is_non_decreasing(&self) -> bool {
        self.0.windows(2).all(|w| w[0] <= w[1])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn fraction(count: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        count as f64 / n as f64
    }
}

/// Curve from each dialogue's first hit turn (`None` = never hit).
pub fn hits_at_k_curve(first_hit_turns: &[Option<usize>], turns: usize, n: usize) -> HitsCurve {
    HitsCurve(
        (0..=turns)
            .map(|t| {
                let hits = first_hit_turns
                    .iter()
                    .filter(|f| f.is_some_and(|f| f <= t))
                    .count();
                fraction(hits, n)
            })
            .collect(),
    )
}

/// First turn whose rank is `<= k`.
pub fn first_hit_turn(ranks: &[Option<usize>], k: usize) -> Option<usize> {
    ranks.iter().position(|r| r.is_some_and(|r| r <= k))
}

/// Curve straight from per-turn target ranks, applying the freeze rule
/// turn by turn. `ranks[d][t]` is `None` where turn `t` was not run.
pub fn curve_from_rank_matrix(ranks: &[Vec<Option<usize>>], turns: usize, k: usize) -> HitsCurve {
    let mut frozen = vec![false; ranks.len()];
    let mut values = Vec::with_capacity(turns + 1);
    for t in 0..=turns {
        for (d, row) in ranks.iter().enumerate() {
            if !frozen[d] && row.get(t).copied().flatten().is_some_and(|r| r <= k) {
                frozen[d] = true;
            }
        }
        values.push(fraction(frozen.iter().filter(|&&f| f).count(), ranks.len()));
    }
    HitsCurve(values)
}
