/// Σ_i |w_{i,t} - w_{i,t-1}| for every bar; the first bar is measured
/// against `initial` (all cash when `None`).
pub fn turnover(weight_history: &[Vec<f64>], initial: Option<&[f64]>) -> Vec<f64> {
    let mut out = Vec::with_capacity(weight_history.len());
    let zeros;
    let mut prev: &[f64] = match initial {
        Some(w) => w,
        None => {
            zeros = vec![0.0; weight_history.first().map_or(0, Vec::len)];
            &zeros
        }
    };
    for w in weight_history {
        let t: f64 = w.iter().zip(prev).map(|(a, b)| (a - b).abs()).sum();
        out.push(t);
        prev = w;
    }
    out
}

/// Proportional transaction costs: r_adj = r - (cost_bp / 10_000) · turnover.
/// With `cost_bp == 0` the input is returned unchanged.
pub fn apply_costs(
    returns: &[f64],
    weight_history: &[Vec<f64>],
    initial: Option<&[f64]>,
    cost_bp: f64,
) -> Vec<f64> {
    assert_eq!(returns.len(), weight_history.len(), "histories must align");
    if cost_bp == 0.0 {
        return returns.to_vec();
    }
    let c = cost_bp / 10_000.0;
    returns
        .iter()
        .zip(turnover(weight_history, initial))
        .map(|(r, t)| r - c * t)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_turnover_unchanged() {
        let w = vec![vec![0.5, 0.5]; 3];
        let r = vec![0.01, -0.02, 0.03];
        let adj = apply_costs(&r, &w, Some(&[0.5, 0.5]), 10.0);
        assert_eq!(adj, r);
    }

    #[test]
    fn ten_bp_half_turnover() {
        let w = vec![vec![0.5, 0.0], vec![0.25, 0.25]];
        let r = vec![0.0, 0.0];
        let adj = apply_costs(&r, &w, Some(&[0.5, 0.0]), 10.0);
        assert_eq!(adj[0], 0.0);
        assert!((adj[1] + 0.0005).abs() < 1e-18);
    }

    #[test]
    fn zero_cost_is_identity() {
        let w = vec![vec![1.0], vec![0.0]];
        let r = vec![0.1, -0.2];
        assert_eq!(apply_costs(&r, &w, None, 0.0), r);
    }

    #[test]
    fn first_bar_from_cash() {
        let w = vec![vec![0.3, 0.6]];
        assert!((turnover(&w, None)[0] - 0.9).abs() < 1e-15);
    }
}
