//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

/// Minimum transport cost between `p` and `q` under the 0/1 ground metric,
/// found by enumerating every basic feasible solution of the transport
/// polytope. Exponential; meant for supports of size <= 4.
pub fn brute_force_w1(p: &[f64], q: &[f64]) -> f64 {
    let n = p.len();
    assert_eq!(n, q.len());
    assert!(n <= 4, "oracle only handles supports up to 4");
    let cells: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let basis = 2 * n - 1;
    let mut best = f64::INFINITY;
    for subset in combinations(cells.len(), basis) {
        let chosen: Vec<(usize, usize)> = subset.iter().map(|&k| cells[k]).collect();
        let Some(x) = solve_marginals(&chosen, p, q) else {
            continue;
        };
        if x.iter().any(|&v| v < -1e-12) {
            continue;
        }
        let cost: f64 = chosen
            .iter()
            .zip(&x)
            .filter(|((i, j), _)| i != j)
            .map(|(_, v)| v.max(0.0))
            .sum();
        best = best.min(cost);
    }
    best
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

/// Solves the marginal constraints restricted to `cells`; `None` when the
/// system is singular or inconsistent.
fn solve_marginals(cells: &[(usize, usize)], p: &[f64], q: &[f64]) -> Option<Vec<f64>> {
    let vars = cells.len();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(p.len() + q.len());
    for (i, &pi) in p.iter().enumerate() {
        let mut r: Vec<f64> = cells.iter().map(|&(a, _)| f64::from(u8::from(a == i))).collect();
        r.push(pi);
        rows.push(r);
    }
    for (j, &qj) in q.iter().enumerate() {
        let mut r: Vec<f64> = cells.iter().map(|&(_, b)| f64::from(u8::from(b == j))).collect();
        r.push(qj);
        rows.push(r);
    }
    let mut pivot_row = 0;
    let mut pivots = Vec::new();
    for col in 0..vars {
        let r = (pivot_row..rows.len()).find(|&r| rows[r][col].abs() > 1e-12)?;
        rows.swap(pivot_row, r);
        let lead = rows[pivot_row][col];
        for v in rows[pivot_row].iter_mut() {
            *v /= lead;
        }
        for r in 0..rows.len() {
            if r != pivot_row && rows[r][col].abs() > 1e-15 {
                let f = rows[r][col];
                let src = rows[pivot_row].clone();
                for (v, s) in rows[r].iter_mut().zip(&src) {
                    *v -= f * s;
                }
            }
        }
        pivots.push(col);
        pivot_row += 1;
    }
    if rows[pivot_row..].iter().any(|r| r[vars].abs() > 1e-9) {
        return None;
    }
    let mut x = vec![0.0; vars];
    for (r, &c) in pivots.iter().enumerate() {
        x[c] = rows[r][vars];
    }
    Some(x)
}

/// Win probability in the advanced combination game, written from the
/// rules: squared scores, and a +60 bonus to the side whose type
/// (score mod 3; rock, paper, scissors) wins the RPS rule.
pub fn advanced_win_probability(sa: u32, sb: u32) -> f64 {
    let beats = |x: u32, y: u32| matches!((x % 3, y % 3), (1, 0) | (2, 1) | (0, 2));
    let (mut ea, mut eb) = (f64::from(sa), f64::from(sb));
    if beats(sa, sb) {
        ea += 60.0;
    } else if beats(sb, sa) {
        eb += 60.0;
    }
    ea * ea / (ea * ea + eb * eb)
}

/// Greedy diverse count over a lower-triangular similarity matrix.
pub fn trace_diverse(sims: &[Vec<f64>], threshold: f64) -> Vec<bool> {
    (0..sims.len())
        .map(|i| (0..i).all(|j| sims[i][j] < threshold))
        .collect()
}
