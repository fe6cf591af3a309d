//! Winner-take-all competition and shared-kernel averaging.

use std::cmp::Ordering;

use super::Shape;

/// Inhibition scope around each winner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WtaPolicy {
    /// Chebyshev radius in output-grid cells; 0 restricts competition to one location.
    pub radius: usize,
    /// Whether inhibition reaches every map or only the winner's own.
    pub cross_map: bool,
}

impl WtaPolicy {
    pub fn learning(radius: usize) -> Self {
        WtaPolicy {
            radius,
            cross_map: true,
        }
    }

    /// Neuron-specific competition kept after learning.
    pub fn frozen() -> Self {
        WtaPolicy {
            radius: 0,
            cross_map: true,
        }
    }
}

/// A neuron that crossed threshold this step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub map: usize,
    pub y: usize,
    pub x: usize,
    pub v: f64,
}

impl Candidate {
    fn order(&self, other: &Self) -> Ordering {
        other
            .v
            .total_cmp(&self.v)
            .then((self.map, self.y, self.x).cmp(&(other.map, other.y, other.x)))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WtaOutcome {
    /// Flat `(map, y, x)` indices in selection order.
    pub winners: Vec<usize>,
    /// Every other neuron inside a winner's scope, candidate or not, ascending.
    pub suppressed: Vec<usize>,
}

/// Greedy selection by descending potential, ties by ascending `(map, y, x)`.
///
/// A candidate wins unless an earlier winner's scope covers it; each win
/// suppresses the winner's whole scope.
pub fn wta_resolve(candidates: &[Candidate], grid: Shape, policy: WtaPolicy) -> WtaOutcome {
    let mut order: Vec<&Candidate> = candidates.iter().collect();
    order.sort_by(|a, b| a.order(b));

    let mut covered = vec![false; grid.len()];
    let mut out = WtaOutcome::default();
    let r = policy.radius;
    for c in order {
        let me = grid.index(c.map, c.y, c.x);
        if covered[me] {
            continue;
        }
        out.winners.push(me);
        let maps = if policy.cross_map {
            0..grid.c
        } else {
            c.map..c.map + 1
        };
        for k in maps {
            for y in c.y.saturating_sub(r)..=(c.y + r).min(grid.h - 1) {
                for x in c.x.saturating_sub(r)..=(c.x + r).min(grid.w - 1) {
                    covered[grid.index(k, y, x)] = true;
                }
            }
        }
    }
    for &w in &out.winners {
        covered[w] = false;
    }
    out.suppressed = covered
        .iter()
        .enumerate()
        .filter_map(|(i, &c)| c.then_some(i))
        .collect();
    out
}

/// Elementwise mean of the winners' local updates of one shared kernel.
pub fn shared_kernel_update(contributions: &[Vec<f64>]) -> Vec<f64> {
    let Some(first) = contributions.first() else {
        return Vec::new();
    };
    let mut sum = vec![0.0; first.len()];
    for c in contributions {
        assert_eq!(
            c.len(),
            sum.len(),
            "contributions must share the kernel shape"
        );
        sum.iter_mut().zip(c).for_each(|(s, d)| *s += d);
    }
    let n = contributions.len() as f64;
    sum.iter_mut().for_each(|s| *s /= n);
    sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plasticity::stdp_delta;
    use proptest::prelude::*;

    fn cand(map: usize, y: usize, x: usize, v: f64) -> Candidate {
        Candidate { map, y, x, v }
    }

    #[test]
    fn higher_potential_wins_overlap() {
        let g = Shape::new(2, 8, 8);
        let out = wta_resolve(
            &[cand(0, 3, 3, 0.55), cand(1, 4, 4, 0.6)],
            g,
            WtaPolicy::learning(2),
        );
        assert_eq!(out.winners, vec![g.index(1, 4, 4)]);
        assert!(out.suppressed.contains(&g.index(0, 3, 3)));
    }

    #[test]
    fn single_candidate_always_wins() {
        let g = Shape::new(1, 3, 3);
        let out = wta_resolve(&[cand(0, 1, 1, 0.5)], g, WtaPolicy::learning(5));
        assert_eq!(out.winners, vec![4]);
        assert_eq!(out.suppressed.len(), 8);
    }

    #[test]
    fn ties_break_on_map_then_position() {
        let g = Shape::new(2, 4, 4);
        let out = wta_resolve(
            &[cand(1, 0, 0, 0.7), cand(0, 1, 1, 0.7), cand(0, 1, 0, 0.7)],
            g,
            WtaPolicy::learning(1),
        );
        assert_eq!(out.winners, vec![g.index(0, 1, 0)]);
    }

    #[test]
    fn frozen_policy_only_competes_per_location() {
        let g = Shape::new(3, 4, 4);
        let out = wta_resolve(
            &[cand(0, 0, 0, 0.6), cand(2, 0, 0, 0.9), cand(1, 0, 1, 0.5)],
            g,
            WtaPolicy::frozen(),
        );
        assert_eq!(out.winners, vec![g.index(2, 0, 0), g.index(1, 0, 1)]);
        assert_eq!(
            out.suppressed,
            vec![
                g.index(0, 0, 0),
                g.index(0, 0, 1),
                g.index(1, 0, 0),
                g.index(2, 0, 1)
            ]
        );
    }

    #[test]
    fn shared_update_examples() {
        let d = vec![0.1, -0.2, 0.3];
        assert_eq!(shared_kernel_update(std::slice::from_ref(&d)), d);
        assert_eq!(shared_kernel_update(&[d.clone(), d.clone()]), d);

        let w = 0.5;
        let lo = stdp_delta(w, 0.0, 1e-4, 0.0, 0.5);
        let hi = stdp_delta(w, 1.0, 1e-4, 0.0, 0.5);
        let got = shared_kernel_update(&[vec![hi, lo], vec![lo, hi]]);
        let expect = (hi + lo) / 2.0;
        assert!((got[0] - expect).abs() < 1e-20 && (got[1] - expect).abs() < 1e-20);
        // Opposite traces at the center weight cancel exactly.
        assert!(expect.abs() < 1e-18);
    }

    proptest! {
        #[test]
        fn winners_are_separated(
            raw in prop::collection::vec((0usize..3, 0usize..10, 0usize..10, 0.5..1.0f64), 0..40),
            radius in 0usize..4,
            cross in any::<bool>(),
        ) {
            let g = Shape::new(3, 10, 10);
            let mut seen = std::collections::HashSet::new();
            let cands: Vec<Candidate> = raw
                .into_iter()
                .filter(|&(k, y, x, _)| seen.insert((k, y, x)))
                .map(|(k, y, x, v)| cand(k, y, x, v))
                .collect();
            let policy = WtaPolicy { radius, cross_map: cross };
            let out = wta_resolve(&cands, g, policy);
            for (i, &a) in out.winners.iter().enumerate() {
                let (ka, ya, xa) = g.decode(a);
                prop_assert!(!out.suppressed.contains(&a));
                for &b in &out.winners[i + 1..] {
                    let (kb, yb, xb) = g.decode(b);
                    let dist = ya.abs_diff(yb).max(xa.abs_diff(xb));
                    let same_scope = cross || ka == kb;
                    prop_assert!(!(same_scope && dist <= radius), "winners {a} and {b} share a scope");
                }
            }
            // Every candidate is decided.
            for c in &cands {
                let i = g.index(c.map, c.y, c.x);
                prop_assert!(out.winners.contains(&i) ^ out.suppressed.contains(&i));
            }
        }
    }
}
