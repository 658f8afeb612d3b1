//! Derivative-free local minimisation (Nelder-Mead simplex).
//!
//! Non-finite objective values are treated as `+inf`, so callers can signal
//! an infeasible point by returning `NaN` or `inf`.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadConfig {
    /// Initial simplex edge length along each coordinate.
    pub step: f64,
    /// Stop when the spread of objective values over the simplex is below
    /// `ftol_abs + ftol_rel * |f_best|` ...
    pub ftol_abs: f64,
    pub ftol_rel: f64,
    /// ... and the simplex diameter (max-norm) is below `xtol`.
    pub xtol: f64,
    pub max_evals: usize,
}

impl Default for NelderMeadConfig {
    fn default() -> Self {
        Self {
            step: 0.1,
            ftol_abs: 1e-9,
            ftol_rel: 1e-10,
            xtol: 1e-5,
            max_evals: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
    pub converged: bool,
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// Minimises `f` starting from `x0`. The returned point is never worse than
/// `x0` because `x0` is a vertex of the initial simplex.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], cfg: &NelderMeadConfig) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let dim = x0.len();
    assert!(dim > 0, "cannot optimise over zero parameters");
    let (reflect, expand, contract, shrink) = (1.0, 2.0, 0.5, 0.5);

    let mut evals = 0;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        sanitize(f(x))
    };

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
    simplex.push(x0.to_vec());
    for i in 0..dim {
        let mut p = x0.to_vec();
        p[i] += cfg.step;
        simplex.push(p);
    }
    let mut values: Vec<f64> = simplex.iter().map(|p| eval(p, &mut evals)).collect();
    let mut converged = false;

    let mut order: Vec<usize> = (0..=dim).collect();
    let mut centroid = vec![0.0; dim];
    let mut trial = vec![0.0; dim];
    let mut trial2 = vec![0.0; dim];

    while evals < cfg.max_evals {
        // stable sort keeps the earlier vertex first on ties
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let best = order[0];
        let worst = order[dim];
        let second_worst = order[dim - 1];

        let spread = values[worst] - values[best];
        let diameter = simplex
            .iter()
            .flat_map(|p| p.iter().zip(&simplex[best]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if values[best].is_finite()
            && spread <= cfg.ftol_abs + cfg.ftol_rel * values[best].abs()
            && diameter <= cfg.xtol
        {
            converged = true;
            break;
        }

        centroid.iter_mut().for_each(|c| *c = 0.0);
        for &idx in &order[..dim] {
            for (c, x) in centroid.iter_mut().zip(&simplex[idx]) {
                *c += x;
            }
        }
        centroid.iter_mut().for_each(|c| *c /= dim as f64);

        for d in 0..dim {
            trial[d] = centroid[d] + reflect * (centroid[d] - simplex[worst][d]);
        }
        let f_r = eval(&trial, &mut evals);

        if f_r < values[best] {
            for d in 0..dim {
                trial2[d] = centroid[d] + expand * (trial[d] - centroid[d]);
            }
            let f_e = eval(&trial2, &mut evals);
            if f_e < f_r {
                simplex[worst].copy_from_slice(&trial2);
                values[worst] = f_e;
            } else {
                simplex[worst].copy_from_slice(&trial);
                values[worst] = f_r;
            }
            continue;
        }
        if f_r < values[second_worst] {
            simplex[worst].copy_from_slice(&trial);
            values[worst] = f_r;
            continue;
        }

        // contraction, outside if the reflected point beat the worst vertex
        let outside = f_r < values[worst];
        for d in 0..dim {
            trial2[d] = if outside {
                centroid[d] + contract * (trial[d] - centroid[d])
            } else {
                centroid[d] + contract * (simplex[worst][d] - centroid[d])
            };
        }
        let f_c = eval(&trial2, &mut evals);
        if f_c < values[worst].min(f_r) {
            simplex[worst].copy_from_slice(&trial2);
            values[worst] = f_c;
            continue;
        }

        let anchor = simplex[best].clone();
        for &idx in &order[1..] {
            for d in 0..dim {
                simplex[idx][d] = anchor[d] + shrink * (simplex[idx][d] - anchor[d]);
            }
            values[idx] = eval(&simplex[idx], &mut evals);
        }
    }

    let best = (0..=dim)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .expect("non-empty simplex");
    Minimum {
        x: simplex[best].clone(),
        value: values[best],
        evals,
        converged,
    }
}
