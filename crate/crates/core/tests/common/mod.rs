//! Shared helpers for the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use mincap::config::RunConfig;
use serde::Deserialize;

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

pub fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/configs").join(name)
}

/// Frozen values for the two-period tree.
#[derive(Debug, Deserialize)]
pub struct TreeExpected {
    pub w0_min: f64,
    pub holdings: Vec<f64>,
    pub gradients: Vec<Vec<f64>>,
    pub c: Vec<f64>,
    pub d_plus: Vec<f64>,
    pub d_minus: Vec<f64>,
    pub aleph: usize,
}

/// The tree fixture as a run configuration plus its frozen values.
pub fn tree_fixture() -> (RunConfig, TreeExpected) {
    let text = std::fs::read_to_string(data_path("tree_fixture.toml")).expect("fixture exists");
    let mut table: toml::Table = toml::from_str(&text).expect("fixture parses");
    let expected = table.remove("expected").expect("expected section");
    let expected: TreeExpected = expected.try_into().expect("expected section parses");
    let cfg = RunConfig::from_toml_str(&toml::to_string(&table).unwrap()).expect("fixture config");
    (cfg, expected)
}

pub fn gbm_config() -> RunConfig {
    RunConfig::from_path(config_path("gbm.toml")).expect("gbm config")
}

/// Minimises `x[0]` over `{x : a x >= c}` by trying every square subsystem
/// of active constraints. Independent of the crate's simplex.
pub fn vertex_minimum(a: &[Vec<f64>], c: &[f64]) -> Option<Vec<f64>> {
    let n = a[0].len();
    let mut best: Option<Vec<f64>> = None;
    let mut pick = Vec::with_capacity(n);
    choose(a.len(), n, 0, &mut pick, &mut |rows| {
        let m: Vec<Vec<f64>> = rows.iter().map(|&r| a[r].clone()).collect();
        let rhs: Vec<f64> = rows.iter().map(|&r| c[r]).collect();
        if let Some(x) = solve(m, rhs) {
            let feasible = a
                .iter()
                .zip(c)
                .all(|(row, &ci)| dot(row, &x) >= ci - 1e-9);
            if feasible && best.as_ref().is_none_or(|b| x[0] < b[0] - 1e-12) {
                best = Some(x);
            }
        }
    });
    best
}

fn choose(total: usize, k: usize, from: usize, pick: &mut Vec<usize>, visit: &mut dyn FnMut(&[usize])) {
    if pick.len() == k {
        visit(pick);
        return;
    }
    for r in from..total {
        pick.push(r);
        choose(total, k, r + 1, pick, visit);
        pick.pop();
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gaussian elimination with partial pivoting; `None` when singular.
fn solve(mut m: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    let n = rhs.len();
    for col in 0..n {
        let p = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[p][col].abs() < 1e-12 {
            return None;
        }
        m.swap(col, p);
        rhs.swap(col, p);
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            let pivot = m[col].clone();
            for (x, p) in m[r][col..].iter_mut().zip(&pivot[col..]) {
                *x -= f * p;
            }
            rhs[r] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| m[r][k] * x[k]).sum();
        x[r] = (rhs[r] - s) / m[r][r];
    }
    Some(x)
}

/// Rows `w0 + sum_node g_{i,node} xi_node >= alpha_i` plus the box on
/// every node, for a tree scenario, built by path enumeration.
pub fn capital_lp_rows(cfg: &RunConfig) -> (Vec<Vec<f64>>, Vec<f64>) {
    let scenario = &cfg.scenario;
    let tree = scenario.as_tree().expect("tree");
    let k = tree.branches.len();
    let offsets: Vec<usize> = (0..tree.horizon)
        .scan(0, |acc, t| {
            let o = *acc;
            *acc += k.pow(t as u32);
            Some(o)
        })
        .collect();
    let nodes: usize = (0..tree.horizon).map(|t| k.pow(t as u32)).sum();
    let mut a = Vec::new();
    let mut c = Vec::new();
    for m in &cfg.spec.measures {
        let mut row = vec![0.0; nodes + 1];
        row[0] = 1.0;
        for (path, p) in scenario.enumerate_paths().unwrap() {
            let f = m.density.eval(scenario, &path);
            for (t, offset) in offsets.iter().enumerate() {
                let node = offset + tree.node_index(path.prefix(t)).unwrap();
                let step = scenario.price(path.prefix(t + 1)).unwrap() - scenario.price(path.prefix(t)).unwrap();
                row[1 + node] += p * f * step;
            }
        }
        a.push(row);
        c.push(m.alpha);
    }
    for t in 0..tree.horizon {
        for n in 0..k.pow(t as u32) {
            let prefix: Vec<f64> = tree.node_branches(t, n).iter().map(|&b| tree.branches[b].driver).collect();
            let (lo, hi) = scenario.bounds_at(t, &prefix);
            let mut up = vec![0.0; nodes + 1];
            up[1 + offsets[t] + n] = 1.0;
            let down: Vec<f64> = up.iter().map(|x| -x).collect();
            a.push(up);
            c.push(lo);
            a.push(down);
            c.push(-hi);
        }
    }
    (a, c)
}
