use std::collections::HashMap;

use super::expr::MtpExpr;

#[derive(Clone, Copy, Debug)]
struct AtomSlot {
    sym: usize,
    scale: f64,
    phase: f64,
}

#[derive(Clone, Copy, Debug)]
struct FactorSlot {
    sym: usize,
    poly: i32,
    atom: Option<(usize, i32, i32)>,
}

/// Numeric evaluator for a fixed list of expressions.
///
/// Every distinct trigonometric argument and every distinct factor is
/// evaluated once per call, then shared by all terms of all outputs.
#[derive(Clone, Debug)]
pub struct CompiledSystem {
    atoms: Vec<AtomSlot>,
    factors: Vec<FactorSlot>,
    // per output: (coefficient, factor indices)
    outputs: Vec<Vec<(f64, Vec<u32>)>>,
    width: usize,
}

/// Reusable buffers for [`CompiledSystem::eval_into`].
#[derive(Clone, Debug, Default)]
pub struct Scratch {
    atoms: Vec<(f64, f64)>,
    factors: Vec<f64>,
}

impl CompiledSystem {
    pub fn new(exprs: &[MtpExpr]) -> Self {
        let mut atom_ids: HashMap<(usize, u64, u64), usize> = HashMap::new();
        let mut factor_ids = HashMap::new();
        let mut atoms = Vec::new();
        let mut factors = Vec::new();
        let mut width = 0;
        let outputs = exprs
            .iter()
            .map(|e| {
                e.terms()
                    .map(|(m, c)| {
                        let idx = m
                            .factors()
                            .iter()
                            .map(|f| {
                                let sym = f.sym.0 as usize;
                                width = width.max(sym + 1);
                                *factor_ids.entry(*f).or_insert_with(|| {
                                    let atom = f.trig.map(|t| {
                                        let key = (sym, t.scale.to_bits(), t.phase.to_bits());
                                        let a = *atom_ids.entry(key).or_insert_with(|| {
                                            atoms.push(AtomSlot { sym, scale: t.scale, phase: t.phase });
                                            atoms.len() - 1
                                        });
                                        (a, t.cos as i32, t.sin as i32)
                                    });
                                    factors.push(FactorSlot { sym, poly: f.poly as i32, atom });
                                    (factors.len() - 1) as u32
                                })
                            })
                            .collect();
                        (c, idx)
                    })
                    .collect()
            })
            .collect();
        CompiledSystem { atoms, factors, outputs, width }
    }

    pub fn outputs(&self) -> usize {
        self.outputs.len()
    }

    /// Smallest length of the value slice accepted by `eval_into`.
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn eval_into(&self, values: &[f64], out: &mut [f64], scratch: &mut Scratch) {
        scratch.atoms.clear();
        scratch.atoms.extend(self.atoms.iter().map(|a| {
            let (s, c) = (a.scale * values[a.sym] + a.phase).sin_cos();
            (c, s)
        }));
        scratch.factors.clear();
        let atoms = &scratch.atoms;
        scratch.factors.extend(self.factors.iter().map(|f| {
            let mut v = if f.poly == 0 { 1.0 } else { values[f.sym].powi(f.poly) };
            if let Some((a, pc, ps)) = f.atom {
                let (c, s) = atoms[a];
                v *= c.powi(pc) * s.powi(ps);
            }
            v
        }));
        for (o, terms) in out.iter_mut().zip(&self.outputs) {
            *o = terms
                .iter()
                .map(|(c, idx)| idx.iter().fold(*c, |acc, &i| acc * scratch.factors[i as usize]))
                .sum();
        }
    }

    pub fn eval(&self, values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.outputs.len()];
        self.eval_into(values, &mut out, &mut Scratch::default());
        out
    }
}
