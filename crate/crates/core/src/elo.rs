//! Ground-truth simulated student.
//!
//! Each skill has a logistic success curve. A task succeeds with the product
//! of its skills' probabilities, and every attempt moves the involved
//! abilities up by `kappa * (1 - p_skill)`, with a smaller rate on failure.
//! Abilities never decrease.

use rand::Rng;

use crate::scenario::{logistic, Scenario, TaskId};
use crate::seed::{stream, StreamRng};

pub fn skill_success_prob(theta: f64, difficulty: f64, slope: f64) -> f64 {
    logistic(slope * (theta - difficulty))
}

#[derive(Debug, Clone)]
pub struct EloStudent {
    abilities: Vec<f64>,
    seed: u64,
    rng: StreamRng,
}

impl EloStudent {
    /// Fresh student with all abilities at zero.
    pub fn new(scenario: &Scenario, seed: u64) -> Self {
        Self::with_abilities(vec![0.0; scenario.num_skills], seed)
    }

    pub fn with_abilities(abilities: Vec<f64>, seed: u64) -> Self {
        Self {
            abilities,
            seed,
            rng: stream(seed),
        }
    }

    pub fn abilities(&self) -> &[f64] {
        &self.abilities
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn skill_probs(&self, task: TaskId, s: &Scenario) -> Vec<f64> {
        let b = s.difficulty(task);
        s.skills_of(task)
            .iter()
            .map(|k| skill_success_prob(self.abilities[k.0], b, s.slope))
            .collect()
    }

    pub fn task_success_prob(&self, task: TaskId, s: &Scenario) -> f64 {
        self.skill_probs(task, s).iter().product()
    }

    pub fn task_success_probs(&self, s: &Scenario) -> Vec<f64> {
        s.tasks().map(|j| self.task_success_prob(j, s)).collect()
    }

    /// Draws one uniform number from the student's stream.
    pub fn sample_attempt(&mut self, task: TaskId, s: &Scenario) -> bool {
        let p = self.task_success_prob(task, s);
        let u: f64 = self.rng.random();
        u < p
    }

    /// Returns the per-skill ability increments that were applied.
    pub fn apply_update(&mut self, task: TaskId, success: bool, s: &Scenario) -> Vec<f64> {
        let kappa = if success {
            s.kappa_success
        } else {
            s.kappa_failure
        };
        let b = s.difficulty(task);
        s.skills_of(task)
            .iter()
            .map(|k| {
                let p = skill_success_prob(self.abilities[k.0], b, s.slope);
                let delta = kappa * (1.0 - p);
                self.abilities[k.0] += delta;
                delta
            })
            .collect()
    }

    pub fn true_mastery(&self, s: &Scenario) -> bool {
        self.abilities.iter().all(|&a| a >= s.mastery_threshold)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::SkillId;
    use proptest::prelude::*;
    use rand::Rng;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 5e-7
    }

    #[test]
    fn skill_probability_values() {
        assert_eq!(skill_success_prob(0.7, 0.7, 1.0), 0.5);
        assert!(close(skill_success_prob(0.0, 1.0, 1.0), 0.268941));
        assert!(close(skill_success_prob(1.5, 0.0, 1.0), 0.817574));
    }

    #[test]
    fn task_probability_is_product() {
        let s = Scenario::default_scenario();
        let st = EloStudent::new(&s, 0);
        assert!(close(st.task_success_prob(TaskId(2), &s), 0.25));
        assert!(close(st.task_success_prob(TaskId(0), &s), 0.268941));
        let st = EloStudent::with_abilities(vec![0.4, -1.2], 0);
        assert_eq!(
            st.task_success_prob(TaskId(1), &s),
            skill_success_prob(-1.2, 1.0, 1.0)
        );
    }

    #[test]
    fn update_values() {
        let s = Scenario::default_scenario();
        let mut st = EloStudent::new(&s, 0);
        st.apply_update(TaskId(0), true, &s);
        assert!(close(st.abilities()[0], 0.731059));
        assert_eq!(st.abilities()[1], 0.0);

        let mut st = EloStudent::new(&s, 0);
        st.apply_update(TaskId(0), false, &s);
        assert!(close(st.abilities()[0], 0.365529));
        assert_eq!(st.abilities()[1], 0.0);
    }

    #[test]
    fn degenerate_sampling() {
        let s = Scenario::default_scenario();
        let mut hi = EloStudent::with_abilities(vec![1e6, 1e6], 3);
        let mut lo = EloStudent::with_abilities(vec![-1e6, -1e6], 3);
        for _ in 0..200 {
            assert!(hi.sample_attempt(TaskId(3), &s));
            assert!(!lo.sample_attempt(TaskId(3), &s));
        }
    }

    #[test]
    fn mastery_needs_every_skill() {
        let s = Scenario::default_scenario();
        assert!(!EloStudent::new(&s, 0).true_mastery(&s));
        assert!(EloStudent::with_abilities(vec![1.6, 1.6], 0).true_mastery(&s));
        assert!(!EloStudent::with_abilities(vec![1.6, 1.4], 0).true_mastery(&s));
    }

    #[test]
    fn sampling_consumes_one_draw() {
        let s = Scenario::default_scenario();
        let mut a = EloStudent::new(&s, 11);
        let mut b = EloStudent::new(&s, 11);
        a.sample_attempt(TaskId(0), &s);
        a.sample_attempt(TaskId(3), &s);
        b.sample_attempt(TaskId(2), &s);
        b.sample_attempt(TaskId(1), &s);
        let ua: f64 = a.rng.random();
        let ub: f64 = b.rng.random();
        assert_eq!(ua, ub);
    }

    proptest! {
        #[test]
        fn abilities_never_decrease(seed in any::<u64>(), tasks in prop::collection::vec(0usize..4, 1..40)) {
            let s = Scenario::default_scenario();
            let mut st = EloStudent::new(&s, seed);
            for j in tasks {
                let before = st.abilities().to_vec();
                let x = st.sample_attempt(TaskId(j), &s);
                st.apply_update(TaskId(j), x, &s);
                for k in 0..2 {
                    prop_assert!(st.abilities()[k] >= before[k]);
                    if !s.skills_of(TaskId(j)).contains(&SkillId(k)) {
                        prop_assert_eq!(st.abilities()[k], before[k]);
                    }
                }
            }
        }

        #[test]
        fn success_delta_is_twice_failure_delta(t1 in -3.0f64..3.0, t2 in -3.0f64..3.0, j in 0usize..4) {
            let s = Scenario::default_scenario();
            let mut a = EloStudent::with_abilities(vec![t1, t2], 0);
            let mut b = a.clone();
            let da = a.apply_update(TaskId(j), true, &s);
            let db = b.apply_update(TaskId(j), false, &s);
            for (x, y) in da.iter().zip(&db) {
                prop_assert!((x - 2.0 * y).abs() <= 1e-15);
            }
        }

        #[test]
        fn same_seed_same_trace(seed in any::<u64>(), tasks in prop::collection::vec(0usize..4, 1..30)) {
            let s = Scenario::default_scenario();
            let run = || {
                let mut st = EloStudent::new(&s, seed);
                tasks.iter().map(|&j| {
                    let x = st.sample_attempt(TaskId(j), &s);
                    st.apply_update(TaskId(j), x, &s);
                    st.abilities().to_vec()
                }).collect::<Vec<_>>()
            };
            prop_assert_eq!(run(), run());
        }

        #[test]
        fn task_prob_monotone(t1 in -3.0f64..3.0, t2 in -3.0f64..3.0, d in 0.0f64..1.0, j in 0usize..4) {
            let mut s = Scenario::default_scenario();
            let base = EloStudent::with_abilities(vec![t1, t2], 0);
            let up = EloStudent::with_abilities(vec![t1 + d, t2 + d], 0);
            prop_assert!(up.task_success_prob(TaskId(j), &s) >= base.task_success_prob(TaskId(j), &s));
            let p = base.task_success_prob(TaskId(j), &s);
            s.difficulties[j] += d;
            prop_assert!(base.task_success_prob(TaskId(j), &s) <= p);
        }
    }
}
