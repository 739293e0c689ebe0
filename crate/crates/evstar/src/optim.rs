//! Derivative-free minimization (Nelder–Mead simplex).
//!
//! Used for circuit-parameter fitting and centroid refinement. Deterministic:
//! no randomness, ties resolved by index order.

/// Outcome of a simplex run.
#[derive(Debug, Clone)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimize `f` starting from `x0` with initial per-coordinate steps `scale`.
///
/// Runs until the simplex collapses (function spread < `f_tol` and vertex
/// spread < `x_tol`) or `max_iter` iterations elapse. Non-finite objective
/// values are treated as +∞ so unstable regions are walked away from.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    scale: &[f64],
    max_iter: usize,
    f_tol: f64,
    x_tol: f64,
) -> SimplexResult {
    assert_eq!(x0.len(), scale.len());
    let n = x0.len();
    let mut eval = |x: &[f64]| -> f64 {
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::MAX
        }
    };

    // Initial simplex: x0 plus one step along each coordinate.
    let mut verts: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    verts.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += scale[i];
        verts.push(v);
    }
    let mut values: Vec<f64> = verts.iter().map(|v| eval(v)).collect();

    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut iterations = 0;
    let mut converged = false;

    while iterations < max_iter {
        iterations += 1;

        // Order vertices by value (stable: ties keep index order).
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
        let best = order[0];
        let worst = order[n];
        let second_worst = order[n - 1];

        let f_spread = values[worst] - values[best];
        let x_spread = verts
            .iter()
            .flat_map(|v| v.iter().zip(&verts[best]).map(|(a, b)| (a - b).abs()))
            .fold(0.0f64, f64::max);
        if f_spread <= f_tol && x_spread <= x_tol {
            converged = true;
            break;
        }

        // Centroid of all but the worst vertex.
        let mut centroid = vec![0.0; n];
        for (i, v) in verts.iter().enumerate() {
            if i == worst {
                continue;
            }
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / n as f64;
            }
        }

        let lerp = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&verts[worst])
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let reflected = lerp(alpha);
        let f_reflected = eval(&reflected);

        if f_reflected < values[best] {
            let expanded = lerp(gamma);
            let f_expanded = eval(&expanded);
            if f_expanded < f_reflected {
                verts[worst] = expanded;
                values[worst] = f_expanded;
            } else {
                verts[worst] = reflected;
                values[worst] = f_reflected;
            }
        } else if f_reflected < values[second_worst] {
            verts[worst] = reflected;
            values[worst] = f_reflected;
        } else {
            let contracted = lerp(-rho);
            let f_contracted = eval(&contracted);
            if f_contracted < values[worst] {
                verts[worst] = contracted;
                values[worst] = f_contracted;
            } else {
                // Shrink toward the best vertex.
                let best_vertex = verts[best].clone();
                for (i, v) in verts.iter_mut().enumerate() {
                    if i == best {
                        continue;
                    }
                    for (x, b) in v.iter_mut().zip(&best_vertex) {
                        *x = b + sigma * (*x - b);
                    }
                    values[i] = eval(v);
                }
            }
        }
    }

    let mut best = 0;
    for i in 1..=n {
        if values[i] < values[best] {
            best = i;
        }
    }
    SimplexResult { x: verts[best].clone(), value: values[best], iterations, converged }
}
