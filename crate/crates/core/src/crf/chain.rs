//! Linear-chain CRF scoring, log-likelihood, marginals, and Viterbi.
//!
//! All chain computations run in log space. Tie-breaking in Viterbi always
//! prefers the lowest tag index, so decoded sequences are reproducible
//! across platforms.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::data::TagScheme;

/// Emission projection plus chain parameters.
///
/// Transition, start, and stop scores initialize to zero so the uniform
/// cases are exact; the emission projection is randomly initialized.
#[derive(Debug, Clone, PartialEq)]
pub struct CrfModel {
    /// `d_model × tags`.
    pub emission_w: Array2<f64>,
    pub emission_b: Array1<f64>,
    /// `transitions[(from, to)]`.
    pub transitions: Array2<f64>,
    pub start: Array1<f64>,
    pub stop: Array1<f64>,
}

impl CrfModel {
    pub fn new(d_model: usize, num_tags: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let limit = (6.0 / (d_model + num_tags) as f64).sqrt();
        let emission_w = Array2::from_shape_fn((d_model, num_tags), |_| {
            rng.gen_range(-limit..limit)
        });
        CrfModel {
            emission_w,
            emission_b: Array1::zeros(num_tags),
            transitions: Array2::zeros((num_tags, num_tags)),
            start: Array1::zeros(num_tags),
            stop: Array1::zeros(num_tags),
        }
    }

    pub fn num_tags(&self) -> usize {
        self.emission_b.len()
    }

    /// Per-position tag scores from encoder states.
    pub fn emissions(&self, hidden: &Array2<f64>) -> Array2<f64> {
        hidden.dot(&self.emission_w) + &self.emission_b
    }
}

fn logsumexp(xs: impl Iterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = xs.collect();
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Unnormalized score of one tag path.
pub fn path_score(emissions: &Array2<f64>, model: &CrfModel, path: &[usize]) -> f64 {
    let n = emissions.nrows();
    assert_eq!(n, path.len());
    assert!(n > 0);
    let mut score = model.start[path[0]] + emissions[(0, path[0])];
    for i in 1..n {
        score += model.transitions[(path[i - 1], path[i])] + emissions[(i, path[i])];
    }
    score + model.stop[path[n - 1]]
}

/// Log partition function by the forward algorithm.
pub fn log_partition(emissions: &Array2<f64>, model: &CrfModel) -> f64 {
    let (n, t) = emissions.dim();
    assert!(n > 0);
    let mut alpha: Vec<f64> = (0..t).map(|y| model.start[y] + emissions[(0, y)]).collect();
    for i in 1..n {
        let prev = alpha.clone();
        for (y, a) in alpha.iter_mut().enumerate() {
            *a = emissions[(i, y)]
                + logsumexp((0..t).map(|p| prev[p] + model.transitions[(p, y)]));
        }
    }
    logsumexp((0..t).map(|y| alpha[y] + model.stop[y]))
}

/// `log p(y | x)`: path score minus the log partition.
pub fn crf_log_likelihood(emissions: &Array2<f64>, model: &CrfModel, path: &[usize]) -> f64 {
    path_score(emissions, model, path) - log_partition(emissions, model)
}

/// Gradients of the negative log-likelihood of one sentence, computed by
/// forward-backward marginals. Returns the NLL; gradient accumulators take
/// `marginal − observed`, scaled by `grad_scale`.
pub(crate) struct NllGrads {
    pub d_emissions: Array2<f64>,
    pub d_transitions: Array2<f64>,
    pub d_start: Array1<f64>,
    pub d_stop: Array1<f64>,
}

pub(crate) fn nll_grad(
    emissions: &Array2<f64>,
    model: &CrfModel,
    path: &[usize],
    grad_scale: f64,
) -> (f64, NllGrads) {
    let (n, t) = emissions.dim();
    assert_eq!(n, path.len());

    // forward
    let mut alpha = Array2::zeros((n, t));
    for y in 0..t {
        alpha[(0, y)] = model.start[y] + emissions[(0, y)];
    }
    for i in 1..n {
        for y in 0..t {
            alpha[(i, y)] = emissions[(i, y)]
                + logsumexp((0..t).map(|p| alpha[(i - 1, p)] + model.transitions[(p, y)]));
        }
    }
    let log_z = logsumexp((0..t).map(|y| alpha[(n - 1, y)] + model.stop[y]));

    // backward
    let mut beta = Array2::zeros((n, t));
    for y in 0..t {
        beta[(n - 1, y)] = model.stop[y];
    }
    for i in (0..n - 1).rev() {
        for y in 0..t {
            beta[(i, y)] = logsumexp(
                (0..t).map(|s| model.transitions[(y, s)] + emissions[(i + 1, s)] + beta[(i + 1, s)]),
            );
        }
    }

    let nll = log_z - path_score(emissions, model, path);

    let mut g = NllGrads {
        d_emissions: Array2::zeros((n, t)),
        d_transitions: Array2::zeros((t, t)),
        d_start: Array1::zeros(t),
        d_stop: Array1::zeros(t),
    };

    // node marginals
    for i in 0..n {
        for y in 0..t {
            let p = (alpha[(i, y)] + beta[(i, y)] - log_z).exp();
            g.d_emissions[(i, y)] = grad_scale * p;
        }
        g.d_emissions[(i, path[i])] -= grad_scale;
    }
    // start/stop share the node marginals of the first/last position
    for y in 0..t {
        g.d_start[y] = g.d_emissions[(0, y)];
        g.d_stop[y] = g.d_emissions[(n - 1, y)];
    }

    // pairwise marginals
    for i in 0..n - 1 {
        for a in 0..t {
            for b in 0..t {
                let lp = alpha[(i, a)]
                    + model.transitions[(a, b)]
                    + emissions[(i + 1, b)]
                    + beta[(i + 1, b)]
                    - log_z;
                g.d_transitions[(a, b)] += grad_scale * lp.exp();
            }
        }
        g.d_transitions[(path[i], path[i + 1])] -= grad_scale;
    }

    (nll, g)
}

/// Highest-scoring tag path; ties break toward the lowest tag index at
/// every backpointer decision and at the final argmax.
pub fn viterbi_decode(emissions: &Array2<f64>, model: &CrfModel) -> Vec<usize> {
    viterbi_decode_with(emissions, model, None)
}

/// Viterbi with optional transition constraints from the scheme's validity
/// table (constrained decoding); illegal moves score `-inf`.
pub fn viterbi_decode_with(
    emissions: &Array2<f64>,
    model: &CrfModel,
    constraints: Option<&TagScheme>,
) -> Vec<usize> {
    let (n, t) = emissions.dim();
    assert!(n > 0);

    let allowed_start = |y: usize| constraints.map_or(true, |s| s.is_valid_start(y));
    let allowed_end = |y: usize| constraints.map_or(true, |s| s.is_valid_end(y));
    let allowed_move =
        |a: usize, b: usize| constraints.map_or(true, |s| s.is_valid_transition(a, b));

    let mut score = vec![f64::NEG_INFINITY; t];
    for (y, s) in score.iter_mut().enumerate() {
        if allowed_start(y) {
            *s = model.start[y] + emissions[(0, y)];
        }
    }
    let mut backptr = Array2::zeros((n, t));

    for i in 1..n {
        let mut next = vec![f64::NEG_INFINITY; t];
        for y in 0..t {
            let mut best = f64::NEG_INFINITY;
            let mut best_prev = 0usize;
            for p in 0..t {
                if !allowed_move(p, y) {
                    continue;
                }
                let cand = score[p] + model.transitions[(p, y)];
                if cand > best {
                    best = cand;
                    best_prev = p;
                }
            }
            next[y] = best + emissions[(i, y)];
            backptr[(i, y)] = best_prev;
        }
        score = next;
    }

    let mut best = f64::NEG_INFINITY;
    let mut last = 0usize;
    for y in 0..t {
        if !allowed_end(y) && constraints.is_some() {
            continue;
        }
        let cand = score[y] + model.stop[y];
        if cand > best {
            best = cand;
            last = y;
        }
    }

    let mut path = vec![0usize; n];
    path[n - 1] = last;
    for i in (1..n).rev() {
        path[i - 1] = backptr[(i, path[i])];
    }
    path
}
