use rand::Rng;

use super::mlp::MlpModel;
use crate::error::Result;
use crate::rng::Stream;
use crate::types::BinId;

/// Linearly decaying exploration rate with a floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub floor: f64,
    pub decay_steps: u64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self {
            start: 1.0,
            floor: 0.01,
            decay_steps: 25_000,
        }
    }
}

impl EpsilonSchedule {
    /// `max(floor, start - (start - floor) * t / decay_steps)`
    pub fn value(&self, t: u64) -> f64 {
        if t >= self.decay_steps {
            return self.floor;
        }
        let frac = t as f64 / self.decay_steps.max(1) as f64;
        (self.start - (self.start - self.floor) * frac).max(self.floor)
    }
}

/// Epsilon-greedy choice: a uniform bin with probability `epsilon`, else the model's argmax.
///
/// Always consumes exactly one uniform draw, plus one more when exploring.
pub fn act_with_epsilon(
    model: &MlpModel,
    obs: &[f64],
    epsilon: f64,
    rng: &mut Stream,
) -> Result<BinId> {
    let u: f64 = rng.random();
    if u < epsilon {
        Ok(BinId(rng.random_range(0..model.n_outputs())))
    } else {
        model.greedy(obs)
    }
}

pub fn act(
    model: &MlpModel,
    obs: &[f64],
    schedule: &EpsilonSchedule,
    t: u64,
    rng: &mut Stream,
) -> Result<BinId> {
    act_with_epsilon(model, obs, schedule.value(t), rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bandit::mlp::RmsProp;
    use crate::rng::seeded_rng;
    use proptest::prelude::*;

    #[test]
    fn schedule_fixed_points() {
        let s = EpsilonSchedule::default();
        assert_eq!(s.value(0), 1.0);
        assert_eq!(s.value(12_500), 0.505);
        assert_eq!(s.value(25_000), 0.01);
        assert_eq!(s.value(1_000_000), 0.01);
    }

    fn biased_model(b0: f64, b1: f64) -> MlpModel {
        let mut m = MlpModel::zeros(&[4, 2], RmsProp::default()).unwrap();
        m.layers_mut()[0].biases = vec![b0, b1];
        m
    }

    #[test]
    fn full_exploration_is_uniform() {
        let m = biased_model(0.0, 1.0);
        let mut rng = seeded_rng(0, "explore");
        let n = 10_000;
        let zeros = (0..n)
            .filter(|_| act_with_epsilon(&m, &[0.0; 4], 1.0, &mut rng).unwrap() == BinId(0))
            .count();
        let share = zeros as f64 / n as f64;
        assert!((0.45..=0.55).contains(&share), "share {share}");
    }

    #[test]
    fn greedy_picks_argmax_and_breaks_ties_low() {
        let mut rng = seeded_rng(0, "explore");
        let m = biased_model(0.2, 0.9);
        assert!((0..100).all(|_| act_with_epsilon(&m, &[0.0; 4], 0.0, &mut rng).unwrap() == BinId(1)));
        let m = biased_model(0.4, 0.4);
        assert!((0..100).all(|_| act_with_epsilon(&m, &[0.0; 4], 0.0, &mut rng).unwrap() == BinId(0)));
    }

    proptest! {
        #[test]
        fn schedule_is_monotone_and_bounded(start in 0.0f64..=1.0, floor_frac in 0.0f64..=1.0,
                                             decay in 1u64..100_000, t in 0u64..200_000) {
            let s = EpsilonSchedule { start, floor: start * floor_frac, decay_steps: decay };
            let (a, b) = (s.value(t), s.value(t + 1));
            prop_assert!(b <= a);
            prop_assert!(a >= s.floor && a <= s.start);
        }
    }
}
