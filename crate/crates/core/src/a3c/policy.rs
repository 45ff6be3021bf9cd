use rand::Rng;

/// One action per agent by inverse-CDF sampling with a single uniform draw
/// per agent.
pub fn sample_actions<R: Rng + ?Sized>(policies: &[Vec<f32>], rng: &mut R) -> Vec<usize> {
    policies
        .iter()
        .map(|p| {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            for (a, &q) in p.iter().enumerate() {
                acc += q as f64;
                if u < acc {
                    return a;
                }
            }
            // Rounding left u above the total mass: take the last action
            // with nonzero probability.
            p.iter().rposition(|&q| q > 0.0).unwrap_or(0)
        })
        .collect()
}

/// Most probable action per agent; ties go to the lowest index.
pub fn greedy_actions(policies: &[Vec<f32>]) -> Vec<usize> {
    policies
        .iter()
        .map(|p| {
            let mut best = 0;
            for (a, &q) in p.iter().enumerate() {
                if q > p[best] {
                    best = a;
                }
            }
            best
        })
        .collect()
}
