//! Simulated annealing over k-subsets of the operator set.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::types::OperatorTable;

use super::value::record_value;
use super::OpselError;

/// Annealing schedule and valuation hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SAParams {
    /// Starting temperature.
    pub t0: f64,
    /// Candidate draws per temperature step.
    pub ns: u32,
    /// Cooling factor applied after each temperature step.
    pub gamma: f64,
    /// The search stops once the temperature falls below this.
    pub t_min: f64,
    pub k_min: usize,
    pub k_max: usize,
    pub alpha: f64,
    pub beta: f64,
    /// Draw candidates by swapping one member of the current sequence instead
    /// of drawing a fresh uniform subset.
    pub neighborhood: bool,
}

impl Default for SAParams {
    fn default() -> Self {
        Self {
            t0: 100.0,
            ns: 10,
            gamma: 0.99,
            t_min: 0.01,
            k_min: 1,
            k_max: 3,
            alpha: 0.5,
            beta: 0.5,
            neighborhood: false,
        }
    }
}

impl SAParams {
    pub fn validate(&self) -> Result<(), OpselError> {
        let bad = |msg: &str| Err(OpselError::InvalidParams(msg.to_string()));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie strictly between 0 and 1");
        }
        if !(self.t_min > 0.0 && self.t_min < self.t0) {
            return bad("t_min must satisfy 0 < t_min < t0");
        }
        if self.k_min < 1 || self.k_min > self.k_max {
            return bad("k bounds must satisfy 1 <= k_min <= k_max");
        }
        if self.ns == 0 {
            return bad("ns must be positive");
        }
        if !(self.alpha > 0.0) || !self.beta.is_finite() {
            return bad("alpha must be positive and beta finite");
        }
        Ok(())
    }

    /// Number of temperature steps the schedule runs.
    pub fn temperature_steps(&self) -> u64 {
        let mut t = self.t0;
        let mut steps = 0;
        while t >= self.t_min {
            steps += 1;
            t *= self.gamma;
        }
        steps
    }
}

/// A list of distinct operator names chosen for one iteration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OperatorSequence(pub Vec<String>);

impl OperatorSequence {
    pub fn names(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<String> {
        self.0
    }
}

/// Metropolis rule: always take an improvement or a tie, otherwise take the
/// worse candidate with probability `e^(delta / temperature)`.
pub fn metropolis_accept<R: Rng + ?Sized>(delta: f64, temperature: f64, rng: &mut R) -> bool {
    delta >= 0.0 || rng.random::<f64>() < (delta / temperature).exp()
}

/// Bookkeeping from one annealing run.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnealTrace {
    pub sequence: OperatorSequence,
    pub k: usize,
    pub temperature_steps: u64,
    pub evaluations: u64,
    pub accepted: u64,
    pub initial_fitness: f64,
    pub final_fitness: f64,
}

pub fn simulated_annealing<R: Rng + ?Sized>(
    table: &OperatorTable,
    params: &SAParams,
    rng: &mut R,
) -> Result<OperatorSequence, OpselError> {
    simulated_annealing_traced(table, params, rng).map(|trace| trace.sequence)
}

pub fn simulated_annealing_traced<R: Rng + ?Sized>(
    table: &OperatorTable,
    params: &SAParams,
    rng: &mut R,
) -> Result<AnnealTrace, OpselError> {
    params.validate()?;
    let n = table.len();
    if n < params.k_min {
        return Err(OpselError::TooFewOperators {
            available: n,
            required: params.k_min,
        });
    }
    // Values are fixed for the duration of one search.
    let names: Vec<&str> = table.keys().map(String::as_str).collect();
    let values: Vec<f64> = table
        .values()
        .map(|r| record_value(r, params.alpha, params.beta))
        .collect();
    let fit = |members: &[usize]| -> f64 {
        members.iter().map(|&i| values[i]).sum::<f64>() / members.len() as f64
    };

    let k = rng.random_range(params.k_min..=params.k_max.min(n));
    let mut current = index::sample(rng, n, k).into_vec();
    let mut current_fit = fit(&current);
    let initial_fitness = current_fit;

    let mut temperature = params.t0;
    let mut steps = 0;
    let mut evaluations = 0;
    let mut accepted = 0;
    while temperature >= params.t_min {
        for _ in 0..params.ns {
            let candidate = if params.neighborhood {
                neighbor(&current, n, rng)
            } else {
                index::sample(rng, n, k).into_vec()
            };
            let candidate_fit = fit(&candidate);
            evaluations += 1;
            if metropolis_accept(candidate_fit - current_fit, temperature, rng) {
                current = candidate;
                current_fit = candidate_fit;
                accepted += 1;
            }
        }
        temperature *= params.gamma;
        steps += 1;
    }

    Ok(AnnealTrace {
        sequence: OperatorSequence(current.iter().map(|&i| names[i].to_string()).collect()),
        k,
        temperature_steps: steps,
        evaluations,
        accepted,
        initial_fitness,
        final_fitness: current_fit,
    })
}

/// Replace one member of `current` with an operator outside it.
fn neighbor<R: Rng + ?Sized>(current: &[usize], n: usize, rng: &mut R) -> Vec<usize> {
    let mut next = current.to_vec();
    if current.len() == n {
        return next;
    }
    let slot = rng.random_range(0..next.len());
    loop {
        let pick = rng.random_range(0..n);
        if !current.contains(&pick) {
            next[slot] = pick;
            return next;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::OperatorRecord;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn uniform_table(n: usize) -> OperatorTable {
        (0..n)
            .map(|i| {
                let name = format!("op{i:02}");
                (name.clone(), OperatorRecord::new(name))
            })
            .collect()
    }

    #[test]
    fn default_params_validate() {
        SAParams::default().validate().unwrap();
    }

    #[test]
    fn rejects_bad_params() {
        let cases = [
            SAParams { gamma: 1.0, ..Default::default() },
            SAParams { t_min: 0.0, ..Default::default() },
            SAParams { t_min: 200.0, ..Default::default() },
            SAParams { k_min: 0, ..Default::default() },
            SAParams { k_min: 4, k_max: 3, ..Default::default() },
        ];
        for p in cases {
            assert!(p.validate().is_err(), "{p:?}");
        }
    }

    #[test]
    fn schedule_length_at_unit_floor() {
        // smallest n with 100 * 0.99^n < 1 is 459
        let brute = (0..).find(|&n| 100.0 * 0.99f64.powi(n) < 1.0).unwrap();
        assert_eq!(brute, 459);
        let params = SAParams { t_min: 1.0, ..Default::default() };
        assert_eq!(params.temperature_steps(), 459);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let trace = simulated_annealing_traced(&uniform_table(8), &params, &mut rng).unwrap();
        assert_eq!(trace.temperature_steps, 459);
        assert_eq!(trace.evaluations, 4590);
    }

    #[test]
    fn zero_delta_always_accepted() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!((0..1000).all(|_| metropolis_accept(0.0, 1e-9, &mut rng)));
    }

    #[test]
    fn result_is_distinct_and_bounded() {
        let table = uniform_table(10);
        let params = SAParams::default();
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let seq = simulated_annealing(&table, &params, &mut rng).unwrap();
            assert!((1..=3).contains(&seq.len()));
            let mut sorted = seq.0.clone();
            sorted.sort();
            sorted.dedup();
            assert_eq!(sorted.len(), seq.len());
            assert!(seq.names().iter().all(|n| table.contains_key(n)));
        }
    }

    #[test]
    fn k_clamped_to_table_size() {
        let table = uniform_table(2);
        let params = SAParams::default();
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            assert!(simulated_annealing(&table, &params, &mut rng).unwrap().len() <= 2);
        }
    }

    #[test]
    fn too_few_operators() {
        let params = SAParams { k_min: 2, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = simulated_annealing(&uniform_table(1), &params, &mut rng).unwrap_err();
        assert!(matches!(err, OpselError::TooFewOperators { available: 1, required: 2 }));
    }

    #[test]
    fn neighborhood_variant_keeps_size() {
        let table = uniform_table(6);
        let params = SAParams { neighborhood: true, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let trace = simulated_annealing_traced(&table, &params, &mut rng).unwrap();
        assert_eq!(trace.sequence.len(), trace.k);
    }
}
