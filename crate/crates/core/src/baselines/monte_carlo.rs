use std::collections::BTreeMap;

use rayon::prelude::*;

use super::{control_slots, BaselineError};
use crate::algebra::{CompiledSystem, MtpExpr, Scratch, SymbolId};
use crate::augmentation::{moment_basis, SystemSpec};
use crate::distributions::stream_for_chunk;

/// Rollouts per independent random stream.
pub const CHUNK_SIZE: usize = 8192;

/// Sample moments of one order over the targets.
#[derive(Clone, Debug, PartialEq)]
pub struct MonteCarloOrder {
    pub order: u32,
    pub exponents: Vec<Vec<u32>>,
    /// `mean[k][i]` estimates `E[Π x_t(k)^{e_it}]`.
    pub mean: Vec<Vec<f64>>,
    pub std_error: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonteCarloResult {
    pub samples: usize,
    pub seed: u64,
    pub targets: Vec<SymbolId>,
    pub orders: BTreeMap<u32, MonteCarloOrder>,
    /// `variance[k][t]`: sample variance of target `t` and its standard error.
    pub variance: Vec<Vec<(f64, f64)>>,
}

impl MonteCarloResult {
    pub fn moment(&self, exps: &[u32], k: usize) -> Option<(f64, f64)> {
        let alpha = exps.iter().sum();
        let o = self.orders.get(&alpha)?;
        let i = o.exponents.iter().position(|e| e == exps)?;
        Some((o.mean[k][i], o.std_error[k][i]))
    }
}

/// Per-chunk sums, laid out `[k][slot]`.
#[derive(Clone, Debug)]
struct Acc {
    n: usize,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    // raw power sums 1..=4 per target, `[k][t][p - 1]`
    powers: Vec<f64>,
}

impl Acc {
    fn new(steps: usize, monomials: usize, targets: usize) -> Self {
        Acc {
            n: 0,
            sum: vec![0.0; steps * monomials],
            sum_sq: vec![0.0; steps * monomials],
            powers: vec![0.0; steps * targets * 4],
        }
    }

    fn merge(mut self, other: &Acc) -> Acc {
        self.n += other.n;
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        for (a, b) in self.sum_sq.iter_mut().zip(&other.sum_sq) {
            *a += b;
        }
        for (a, b) in self.powers.iter_mut().zip(&other.powers) {
            *a += b;
        }
        self
    }
}

/// Reduces adjacent pairs until one value remains; the tree depends only on
/// the number of chunks.
fn pairwise(mut accs: Vec<Acc>) -> Acc {
    while accs.len() > 1 {
        let mut next = Vec::with_capacity(accs.len().div_ceil(2));
        let mut it = accs.into_iter();
        while let Some(a) = it.next() {
            next.push(match it.next() {
                Some(b) => a.merge(&b),
                None => a,
            });
        }
        accs = next;
    }
    accs.pop().expect("at least one chunk")
}

/// `ns` rollouts of the dynamics with sampled initial states and disturbances.
///
/// Chunk `c` draws from the stream `(seed, c)`, so the output does not depend
/// on the number of worker threads.
pub fn monte_carlo(
    spec: &SystemSpec,
    targets: &[SymbolId],
    orders: &[u32],
    n: usize,
    ns: usize,
    seed: u64,
) -> Result<MonteCarloResult, BaselineError> {
    if ns < 2 {
        return Err(BaselineError::InvalidInput("Monte Carlo needs at least two rollouts".into()));
    }
    if n > spec.horizon {
        return Err(BaselineError::InvalidInput(format!("horizon {n} exceeds the system horizon {}", spec.horizon)));
    }
    spec.validate()?;
    let target_pos: Vec<usize> = targets
        .iter()
        .map(|t| {
            spec.states
                .iter()
                .position(|s| s == t)
                .ok_or_else(|| BaselineError::InvalidInput(format!("target `{}` is not a state", spec.table.name(*t))))
        })
        .collect::<Result<_, _>>()?;
    let mut exps: Vec<(u32, Vec<u32>)> = Vec::new();
    for &alpha in orders {
        for e in moment_basis(targets.len(), alpha)? {
            exps.push((alpha, e));
        }
    }
    let max_pow = orders.iter().copied().max().unwrap_or(1).max(4) as usize;
    let exprs: Vec<MtpExpr> = spec.states.iter().map(|s| spec.dynamics[s].clone()).collect();
    let f = CompiledSystem::new(&exprs);
    let slots: Vec<Vec<f64>> = (0..n).map(|k| control_slots(spec, k)).collect::<Result<_, _>>()?;
    let base_slots = control_slots(spec, 0).unwrap_or_else(|_| vec![0.0; spec.table.len()]);
    let steps = n + 1;
    let (nm, nt) = (exps.len(), targets.len());

    // sums are taken about the trajectory of the means to limit cancellation
    let mut nominal = vec![vec![0.0; spec.states.len()]; steps];
    {
        let mut v = base_slots.clone();
        let mut x: Vec<f64> = spec.states.iter().map(|s| spec.initial[s].mean()).collect();
        let mut scratch = Scratch::default();
        for k in 0..steps {
            nominal[k].copy_from_slice(&x);
            if k == n {
                break;
            }
            v.copy_from_slice(&slots[k]);
            for (i, s) in spec.states.iter().enumerate() {
                v[s.0 as usize] = x[i];
            }
            for (w, law) in &spec.disturbances {
                v[w.0 as usize] = law.mean();
            }
            let mut out = vec![0.0; x.len()];
            f.eval_into(&v, &mut out, &mut scratch);
            x = out;
        }
    }
    let shift: Vec<f64> = (0..steps)
        .flat_map(|k| {
            let nominal = &nominal;
            let target_pos = &target_pos;
            exps.iter().map(move |(_, e)| {
                e.iter().zip(target_pos).map(|(&p, &t)| nominal[k][t].powi(p as i32)).product::<f64>()
            })
        })
        .collect();
    let chunks = ns.div_ceil(CHUNK_SIZE);

    let accs: Vec<Acc> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_for_chunk(seed, c as u64);
            let count = CHUNK_SIZE.min(ns - c * CHUNK_SIZE);
            let mut acc = Acc::new(steps, nm, nt);
            acc.n = count;
            let mut v = base_slots.clone();
            let mut x = vec![0.0; spec.states.len()];
            let mut out = vec![0.0; spec.states.len()];
            let mut scratch = Scratch::default();
            let mut pows = vec![1.0; nt * (max_pow + 1)];
            for _ in 0..count {
                for (i, s) in spec.states.iter().enumerate() {
                    x[i] = spec.initial[s].sample(&mut rng);
                }
                for k in 0..steps {
                    for (t, &p) in target_pos.iter().enumerate() {
                        let row = &mut pows[t * (max_pow + 1)..(t + 1) * (max_pow + 1)];
                        for e in 1..=max_pow {
                            row[e] = row[e - 1] * x[p];
                        }
                        let base = (k * nt + t) * 4;
                        let d = x[p] - nominal[k][p];
                        let mut dp = d;
                        for e in 0..4 {
                            acc.powers[base + e] += dp;
                            dp *= d;
                        }
                    }
                    for (j, (_, e)) in exps.iter().enumerate() {
                        let mut m = 1.0;
                        for (t, &p) in e.iter().enumerate() {
                            m *= pows[t * (max_pow + 1) + p as usize];
                        }
                        let d = m - shift[k * nm + j];
                        acc.sum[k * nm + j] += d;
                        acc.sum_sq[k * nm + j] += d * d;
                    }
                    if k == n {
                        break;
                    }
                    v[..].copy_from_slice(&slots[k]);
                    for (i, s) in spec.states.iter().enumerate() {
                        v[s.0 as usize] = x[i];
                    }
                    for (w, law) in &spec.disturbances {
                        v[w.0 as usize] = law.sample(&mut rng);
                    }
                    f.eval_into(&v, &mut out, &mut scratch);
                    x.copy_from_slice(&out);
                }
            }
            acc
        })
        .collect();
    let acc = pairwise(accs);
    let nsf = ns as f64;

    let mut by_order: BTreeMap<u32, MonteCarloOrder> = BTreeMap::new();
    for (j, (alpha, e)) in exps.iter().enumerate() {
        let o = by_order.entry(*alpha).or_insert_with(|| MonteCarloOrder {
            order: *alpha,
            exponents: Vec::new(),
            mean: vec![Vec::new(); steps],
            std_error: vec![Vec::new(); steps],
        });
        o.exponents.push(e.clone());
        for k in 0..steps {
            let d = acc.sum[k * nm + j] / nsf;
            let var = (acc.sum_sq[k * nm + j] / nsf - d * d).max(0.0) * nsf / (nsf - 1.0);
            o.mean[k].push(shift[k * nm + j] + d);
            o.std_error[k].push((var / nsf).sqrt());
        }
    }
    let variance = (0..steps)
        .map(|k| {
            (0..nt)
                .map(|t| {
                    let base = (k * nt + t) * 4;
                    // moments about the nominal value, converted to central ones
                    let r: Vec<f64> = (0..4).map(|p| acc.powers[base + p] / nsf).collect();
                    let m = r[0];
                    let m2 = (r[1] - m * m).max(0.0);
                    let m4 = r[3] - 4.0 * r[2] * m + 6.0 * r[1] * m * m - 3.0 * m.powi(4);
                    let var = m2 * nsf / (nsf - 1.0);
                    (var, ((m4 - m2 * m2).max(0.0) / nsf).sqrt())
                })
                .collect()
        })
        .collect();
    Ok(MonteCarloResult { samples: ns, seed, targets: targets.to_vec(), orders: by_order, variance })
}
