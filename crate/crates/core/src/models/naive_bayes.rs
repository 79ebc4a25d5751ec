//! Bernoulli naive Bayes over features binarized at their training medians.

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct BernoulliNb {
    medians: Vec<f64>,
    /// Log prior, index 0 = down, 1 = up.
    log_prior: [f64; 2],
    /// Per class, per feature: log P(bit = 1 | class) and log P(bit = 0 | class).
    log_on: [Vec<f64>; 2],
    log_off: [Vec<f64>; 2],
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

impl BernoulliNb {
    /// `y` holds 1.0 for up and 0.0 for down; both classes must be present.
    pub fn fit(x: &[Vec<f64>], y: &[f64], alpha: f64) -> Self {
        let d = x[0].len();
        let medians: Vec<f64> = (0..d).map(|j| median(x.iter().map(|r| r[j]).collect())).collect();
        let mut counts = [0.0f64; 2];
        let mut on = [vec![0.0f64; d], vec![0.0f64; d]];
        for (row, &t) in x.iter().zip(y) {
            let c = usize::from(t > 0.5);
            counts[c] += 1.0;
            for j in 0..d {
                if row[j] > medians[j] {
                    on[c][j] += 1.0;
                }
            }
        }
        let n = counts[0] + counts[1];
        let log_prior = [(counts[0] / n).ln(), (counts[1] / n).ln()];
        let prob = |c: usize, j: usize| (on[c][j] + alpha) / (counts[c] + 2.0 * alpha);
        let log_on = [0, 1].map(|c| (0..d).map(|j| prob(c, j).ln()).collect::<Vec<_>>());
        let log_off = [0, 1].map(|c| (0..d).map(|j| (1.0 - prob(c, j)).ln()).collect::<Vec<_>>());
        Self { medians, log_prior, log_on, log_off }
    }

    pub fn prob_up(&self, x: &[f64]) -> f64 {
        let joint = |c: usize| {
            self.log_prior[c]
                + x.iter()
                    .enumerate()
                    .map(|(j, v)| if *v > self.medians[j] { self.log_on[c][j] } else { self.log_off[c][j] })
                    .sum::<f64>()
        };
        let diff = joint(0) - joint(1);
        1.0 / (1.0 + diff.exp())
    }
}
