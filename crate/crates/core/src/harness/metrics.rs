//! Communication and energy efficiency.

use super::env::RoundRecord;

/// First 1-based round whose accuracy reaches `target`.
pub fn first_reaching(accuracies: &[f64], target: f64) -> Option<usize> {
    accuracies.iter().position(|&a| a >= target).map(|i| i + 1)
}

/// Rounds needed to reach `target` test accuracy.
pub fn comm_efficiency(rounds: &[RoundRecord], target: f64) -> Option<usize> {
    rounds
        .iter()
        .position(|r| r.test_accuracy >= target)
        .map(|i| i + 1)
}

/// Devices that trained locally, summed up to and including the round that
/// first reaches `target`. Lower is better.
pub fn energy_cost(rounds: &[RoundRecord], target: f64) -> Option<usize> {
    let r = comm_efficiency(rounds, target)?;
    Some(rounds[..r].iter().map(|rec| rec.trained_devices).sum())
}

/// Energy efficiency gain of `a` over `b`: `cost_b / cost_a`.
pub fn energy_gain(cost_a: f64, cost_b: f64) -> f64 {
    cost_b / cost_a
}

#[cfg(test)]
mod tests {
    use super::*;

    fn records(acc: &[f64], trained: usize) -> Vec<RoundRecord> {
        acc.iter()
            .enumerate()
            .map(|(i, &a)| RoundRecord {
                round: i + 1,
                scheduled: vec![],
                test_accuracy: a,
                trained_devices: trained,
                per_client_ul_snr: vec![],
                policy_aux: None,
            })
            .collect()
    }

    #[test]
    fn rounds_to_target() {
        let r = records(&[0.5, 0.82, 0.9], 5);
        assert_eq!(comm_efficiency(&r, 0.8), Some(2));
        assert_eq!(comm_efficiency(&r, 0.95), None);
        assert_eq!(comm_efficiency(&r, 0.0), Some(1));
        assert_eq!(first_reaching(&[0.5, 0.82, 0.9], 0.8), Some(2));
    }

    #[test]
    fn energy_is_rounds_times_devices() {
        let mut acc = vec![0.1; 39];
        acc.push(0.8);
        assert_eq!(energy_cost(&records(&acc, 5), 0.8), Some(200));
        let mut acc = vec![0.1; 33];
        acc.push(0.81);
        let l2n = energy_cost(&records(&acc, 50), 0.8).unwrap();
        assert_eq!(l2n, 1700);
        assert_eq!(energy_gain(200.0, l2n as f64), 8.5);
        assert_eq!(energy_cost(&records(&[0.1, 0.2], 5), 0.8), None);
    }
}
