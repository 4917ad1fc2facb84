//! Forward recurrences, the mean-squared-error loss and its exact gradients.

use super::{CellKind, DirectionParams, ModelError, Sequence, SequenceModelParams};

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Output frames with the hidden states of both directions, all indexed by
/// time.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub y: Vec<Vec<f64>>,
    pub h_forward: Vec<Vec<f64>>,
    pub h_backward: Vec<Vec<f64>>,
}

/// Activations of one step, kept for backpropagation.
struct Step {
    /// Activated gate values, `gate_blocks * hidden` long.
    gates: Vec<f64>,
    /// Cell state (LSTM only).
    c: Vec<f64>,
    h: Vec<f64>,
}

fn check_inputs(params: &SequenceModelParams, x: &[Vec<f64>]) -> Result<(), ModelError> {
    if x.is_empty() {
        return Err(ModelError::EmptySequence);
    }
    if let Some(bad) = x.iter().find(|v| v.len() != params.input_dim) {
        return Err(ModelError::Dimension {
            what: "input frame",
            expected: params.input_dim,
            got: bad.len(),
        });
    }
    Ok(())
}

/// Runs one direction over `order` (time indices in processing order).
fn run_direction(
    kind: CellKind,
    dir: &DirectionParams,
    hidden: usize,
    x: &[Vec<f64>],
    order: &[usize],
) -> Vec<Step> {
    let mut steps: Vec<Step> = Vec::with_capacity(order.len());
    let zeros = vec![0.0; hidden];
    for &t in order {
        let (h_prev, c_prev) = match steps.last() {
            Some(s) => (&s.h, &s.c),
            None => (&zeros, &zeros),
        };
        let mut a = dir.b.clone();
        dir.w_x.mul_add(&x[t], &mut a);
        let step = match kind {
            CellKind::VanillaBidirectional => {
                dir.w_h.mul_add(h_prev, &mut a);
                let h: Vec<f64> = a.iter().map(|v| v.tanh()).collect();
                Step {
                    gates: h.clone(),
                    c: zeros.clone(),
                    h,
                }
            }
            CellKind::Lstm => {
                dir.w_h.mul_add(h_prev, &mut a);
                let gates: Vec<f64> = a
                    .iter()
                    .enumerate()
                    .map(|(k, &v)| if k / hidden == 2 { v.tanh() } else { sigmoid(v) })
                    .collect();
                let (i, f, g, o) = split4(&gates, hidden);
                let c: Vec<f64> = (0..hidden).map(|j| f[j] * c_prev[j] + i[j] * g[j]).collect();
                let h = (0..hidden).map(|j| o[j] * c[j].tanh()).collect();
                Step { gates, c, h }
            }
            CellKind::Gru => {
                dir.w_h.mul_add_rows(0..2 * hidden, h_prev, &mut a[..2 * hidden]);
                let mut gates = vec![0.0; 3 * hidden];
                for k in 0..2 * hidden {
                    gates[k] = sigmoid(a[k]);
                }
                let reset: Vec<f64> = (0..hidden).map(|j| gates[hidden + j] * h_prev[j]).collect();
                dir.w_h.mul_add_rows(2 * hidden..3 * hidden, &reset, &mut a[2 * hidden..]);
                for k in 2 * hidden..3 * hidden {
                    gates[k] = a[k].tanh();
                }
                let h = (0..hidden)
                    .map(|j| {
                        let z = gates[j];
                        (1.0 - z) * gates[2 * hidden + j] + z * h_prev[j]
                    })
                    .collect();
                Step {
                    gates,
                    c: zeros.clone(),
                    h,
                }
            }
        };
        steps.push(step);
    }
    steps
}

fn split4(v: &[f64], h: usize) -> (&[f64], &[f64], &[f64], &[f64]) {
    (&v[..h], &v[h..2 * h], &v[2 * h..3 * h], &v[3 * h..])
}

struct Trace {
    forward: Vec<Step>,
    /// In processing order, i.e. time reversed.
    backward: Vec<Step>,
    y: Vec<Vec<f64>>,
}

fn run(params: &SequenceModelParams, x: &[Vec<f64>]) -> Result<Trace, ModelError> {
    check_inputs(params, x)?;
    let t_len = x.len();
    let h = params.hidden_dim;
    let fwd_order: Vec<usize> = (0..t_len).collect();
    let bwd_order: Vec<usize> = (0..t_len).rev().collect();
    let forward = run_direction(params.cell_kind, &params.forward, h, x, &fwd_order);
    let backward = run_direction(params.cell_kind, &params.backward, h, x, &bwd_order);
    let y = (0..t_len)
        .map(|t| {
            let mut y = params.b_y.clone();
            params.w_fy.mul_add(&forward[t].h, &mut y);
            params.w_by.mul_add(&backward[t_len - 1 - t].h, &mut y);
            y
        })
        .collect();
    Ok(Trace { forward, backward, y })
}

/// Output sequence and hidden states for one input sequence.
pub fn forward(params: &SequenceModelParams, x: &[Vec<f64>]) -> Result<ForwardOutput, ModelError> {
    let trace = run(params, x)?;
    let t_len = x.len();
    Ok(ForwardOutput {
        y: trace.y,
        h_forward: trace.forward.into_iter().map(|s| s.h).collect(),
        h_backward: (0..t_len)
            .map(|t| trace.backward[t_len - 1 - t].h.clone())
            .collect(),
    })
}

/// `(1/n) sum (y - target)^2` over all `n` scalar entries.
pub fn mse_loss(y: &[Vec<f64>], target: &[Vec<f64>]) -> Result<f64, ModelError> {
    if y.len() != target.len() {
        return Err(ModelError::Dimension {
            what: "sequence length",
            expected: target.len(),
            got: y.len(),
        });
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for (a, b) in y.iter().zip(target) {
        if a.len() != b.len() {
            return Err(ModelError::Dimension {
                what: "output frame",
                expected: b.len(),
                got: a.len(),
            });
        }
        sum += a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>();
        n += a.len();
    }
    if n == 0 {
        return Err(ModelError::EmptySequence);
    }
    Ok(sum / n as f64)
}

/// Backpropagates `dh_ext` (per processing step) through one direction.
fn backprop_direction(
    kind: CellKind,
    dir: &DirectionParams,
    grad: &mut DirectionParams,
    hidden: usize,
    x: &[Vec<f64>],
    order: &[usize],
    steps: &[Step],
    dh_ext: &[Vec<f64>],
) -> Result<(), ModelError> {
    let zeros = vec![0.0; hidden];
    let mut dh_next = vec![0.0; hidden];
    let mut dc_next = vec![0.0; hidden];
    for s in (0..steps.len()).rev() {
        let step = &steps[s];
        let (h_prev, c_prev) = if s == 0 {
            (&zeros, &zeros)
        } else {
            (&steps[s - 1].h, &steps[s - 1].c)
        };
        let dh: Vec<f64> = dh_ext[s].iter().zip(&dh_next).map(|(a, b)| a + b).collect();
        let mut dh_prev = vec![0.0; hidden];
        let da: Vec<f64> = match kind {
            CellKind::VanillaBidirectional => {
                let da: Vec<f64> = dh.iter().zip(&step.h).map(|(d, h)| d * (1.0 - h * h)).collect();
                dir.w_h.mul_t_add(&da, &mut dh_prev);
                grad.w_h.add_outer(&da, h_prev);
                da
            }
            CellKind::Lstm => {
                let (i, f, g, o) = split4(&step.gates, hidden);
                let mut da = vec![0.0; 4 * hidden];
                for j in 0..hidden {
                    let tc = step.c[j].tanh();
                    let dc = dc_next[j] + dh[j] * o[j] * (1.0 - tc * tc);
                    da[j] = dc * g[j] * i[j] * (1.0 - i[j]);
                    da[hidden + j] = dc * c_prev[j] * f[j] * (1.0 - f[j]);
                    da[2 * hidden + j] = dc * i[j] * (1.0 - g[j] * g[j]);
                    da[3 * hidden + j] = dh[j] * tc * o[j] * (1.0 - o[j]);
                    dc_next[j] = dc * f[j];
                }
                dir.w_h.mul_t_add(&da, &mut dh_prev);
                grad.w_h.add_outer(&da, h_prev);
                da
            }
            CellKind::Gru => {
                let z = &step.gates[..hidden];
                let r = &step.gates[hidden..2 * hidden];
                let n = &step.gates[2 * hidden..];
                let mut da = vec![0.0; 3 * hidden];
                for j in 0..hidden {
                    da[2 * hidden + j] = dh[j] * (1.0 - z[j]) * (1.0 - n[j] * n[j]);
                    da[j] = dh[j] * (h_prev[j] - n[j]) * z[j] * (1.0 - z[j]);
                    dh_prev[j] += dh[j] * z[j];
                }
                let reset: Vec<f64> = (0..hidden).map(|j| r[j] * h_prev[j]).collect();
                let mut d_reset = vec![0.0; hidden];
                dir.w_h
                    .mul_t_add_rows(2 * hidden..3 * hidden, &da[2 * hidden..], &mut d_reset);
                grad.w_h
                    .add_outer_rows(2 * hidden..3 * hidden, &da[2 * hidden..], &reset);
                for j in 0..hidden {
                    dh_prev[j] += d_reset[j] * r[j];
                    da[hidden + j] = d_reset[j] * h_prev[j] * r[j] * (1.0 - r[j]);
                }
                dir.w_h.mul_t_add_rows(0..2 * hidden, &da[..2 * hidden], &mut dh_prev);
                grad.w_h.add_outer_rows(0..2 * hidden, &da[..2 * hidden], h_prev);
                da
            }
        };
        if da.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite {
                stage: "backpropagation",
                step: order[s],
            });
        }
        grad.w_x.add_outer(&da, &x[order[s]]);
        for (b, d) in grad.b.iter_mut().zip(&da) {
            *b += d;
        }
        dh_next = dh_prev;
    }
    Ok(())
}

/// Exact gradient of the mean squared error over every scalar output entry
/// of every sequence in `batch`.
pub fn gradients(
    params: &SequenceModelParams,
    batch: &[Sequence],
) -> Result<(f64, SequenceModelParams), ModelError> {
    if batch.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let mut total_entries = 0usize;
    for seq in batch {
        if seq.inputs.len() != seq.targets.len() {
            return Err(ModelError::Dimension {
                what: "target sequence length",
                expected: seq.inputs.len(),
                got: seq.targets.len(),
            });
        }
        if let Some(bad) = seq.targets.iter().find(|t| t.len() != params.output_dim) {
            return Err(ModelError::Dimension {
                what: "target frame",
                expected: params.output_dim,
                got: bad.len(),
            });
        }
        total_entries += seq.targets.len() * params.output_dim;
    }
    let scale = 2.0 / total_entries as f64;
    let h = params.hidden_dim;
    let mut grad = params.zeros_like();
    let mut loss_sum = 0.0;

    for seq in batch {
        let trace = run(params, &seq.inputs)?;
        let t_len = seq.inputs.len();
        let mut dh_f = vec![vec![0.0; h]; t_len];
        let mut dh_b = vec![vec![0.0; h]; t_len];
        for t in 0..t_len {
            let dy: Vec<f64> = trace.y[t]
                .iter()
                .zip(&seq.targets[t])
                .map(|(y, target)| scale * (y - target))
                .collect();
            if dy.iter().any(|v| !v.is_finite()) {
                return Err(ModelError::NonFinite {
                    stage: "output",
                    step: t,
                });
            }
            loss_sum += trace.y[t]
                .iter()
                .zip(&seq.targets[t])
                .map(|(y, target)| (y - target) * (y - target))
                .sum::<f64>();
            let hf = &trace.forward[t].h;
            let hb = &trace.backward[t_len - 1 - t].h;
            grad.w_fy.add_outer(&dy, hf);
            grad.w_by.add_outer(&dy, hb);
            for (b, d) in grad.b_y.iter_mut().zip(&dy) {
                *b += d;
            }
            params.w_fy.mul_t_add(&dy, &mut dh_f[t]);
            params.w_by.mul_t_add(&dy, &mut dh_b[t_len - 1 - t]);
        }
        let fwd_order: Vec<usize> = (0..t_len).collect();
        let bwd_order: Vec<usize> = (0..t_len).rev().collect();
        backprop_direction(
            params.cell_kind,
            &params.forward,
            &mut grad.forward,
            h,
            &seq.inputs,
            &fwd_order,
            &trace.forward,
            &dh_f,
        )?;
        backprop_direction(
            params.cell_kind,
            &params.backward,
            &mut grad.backward,
            h,
            &seq.inputs,
            &bwd_order,
            &trace.backward,
            &dh_b,
        )?;
    }
    let loss = loss_sum / total_entries as f64;
    if !loss.is_finite() {
        return Err(ModelError::NonFinite { stage: "loss", step: 0 });
    }
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acoustic_model::Mat;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_batch(rng: &mut ChaCha8Rng, samples: usize, t: usize, i: usize, o: usize) -> Vec<Sequence> {
        (0..samples)
            .map(|_| Sequence {
                inputs: (0..t).map(|_| (0..i).map(|_| rng.random_range(-1.0..1.0)).collect()).collect(),
                targets: (0..t).map(|_| (0..o).map(|_| rng.random_range(-1.0..1.0)).collect()).collect(),
            })
            .collect()
    }

    fn batch_loss(p: &SequenceModelParams, batch: &[Sequence]) -> f64 {
        let mut sum = 0.0;
        let mut n = 0;
        for s in batch {
            let y = forward(p, &s.inputs).unwrap().y;
            let l = mse_loss(&y, &s.targets).unwrap();
            let count = s.targets.len() * p.output_dim;
            sum += l * count as f64;
            n += count;
        }
        sum / n as f64
    }

    #[test]
    fn zero_parameters_give_zero_output() {
        for kind in CellKind::ALL {
            let p = SequenceModelParams::zeros(kind, 3, 4, 2);
            let x = vec![vec![0.3, -0.2, 0.9]; 5];
            let out = forward(&p, &x).unwrap();
            assert!(out.y.iter().flatten().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn scalar_hand_evaluation() {
        let mut p = SequenceModelParams::zeros(CellKind::VanillaBidirectional, 1, 1, 1);
        p.forward.w_x.set(0, 0, 1.0);
        p.backward.w_x.set(0, 0, 1.0);
        p.w_fy.set(0, 0, 1.0);
        p.w_by.set(0, 0, 1.0);
        let out = forward(&p, &[vec![0.5]]).unwrap();
        assert_eq!(out.h_forward[0][0], 0.5f64.tanh());
        assert_eq!(out.h_backward[0][0], 0.5f64.tanh());
        assert!((out.y[0][0] - 0.9242).abs() < 1e-4);
        assert_eq!(out.y[0][0], 2.0 * 0.5f64.tanh());
    }

    #[test]
    fn reversal_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for kind in CellKind::ALL {
            let p = SequenceModelParams::init(kind, 3, 5, 2, 9);
            let mut swapped = p.clone();
            std::mem::swap(&mut swapped.forward, &mut swapped.backward);
            let x: Vec<Vec<f64>> = (0..7).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            let rev: Vec<Vec<f64>> = x.iter().rev().cloned().collect();
            let a = forward(&p, &x).unwrap();
            let b = forward(&swapped, &rev).unwrap();
            let expected: Vec<Vec<f64>> = a.h_backward.iter().rev().cloned().collect();
            assert_eq!(b.h_forward, expected);
        }
    }

    #[test]
    fn vanilla_states_are_bounded() {
        let mut p = SequenceModelParams::init(CellKind::VanillaBidirectional, 2, 3, 1, 4);
        for t in p.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= 50.0);
        }
        let x = vec![vec![10.0, -10.0]; 6];
        let out = forward(&p, &x).unwrap();
        assert!(out.h_forward.iter().chain(&out.h_backward).flatten().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn dimension_errors() {
        let p = SequenceModelParams::zeros(CellKind::Gru, 3, 2, 1);
        assert_eq!(forward(&p, &[]), Err(ModelError::EmptySequence));
        assert!(matches!(forward(&p, &[vec![0.0; 2]]), Err(ModelError::Dimension { .. })));
        assert!(mse_loss(&[vec![0.0]], &[vec![0.0, 1.0]]).is_err());
        assert!(mse_loss(&[vec![0.0]], &[]).is_err());
    }

    #[test]
    fn mse_cases() {
        assert_eq!(mse_loss(&[vec![1.0, 2.0]], &[vec![0.0, 0.0]]).unwrap(), 2.5);
        let y = vec![vec![0.1, -0.4], vec![0.3, 0.3]];
        assert_eq!(mse_loss(&y, &y).unwrap(), 0.0);
    }

    #[test]
    fn zero_problem_has_zero_gradient() {
        for kind in CellKind::ALL {
            let mut p = SequenceModelParams::init(kind, 3, 4, 2, 3);
            for b in [&mut p.forward.b, &mut p.backward.b, &mut p.b_y] {
                b.fill(0.0);
            }
            let batch = vec![Sequence {
                inputs: vec![vec![0.0; 3]; 5],
                targets: vec![vec![0.0; 2]; 5],
            }];
            let (loss, g) = gradients(&p, &batch).unwrap();
            assert_eq!(loss, 0.0);
            assert!(g.flatten().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn output_bias_gradient_is_mean_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = SequenceModelParams::init(CellKind::Lstm, 3, 4, 2, 8);
        let batch = random_batch(&mut rng, 3, 5, 3, 2);
        let (_, g) = gradients(&p, &batch).unwrap();
        let n = (3 * 5 * 2) as f64;
        for o in 0..2 {
            let mut expected = 0.0;
            for s in &batch {
                let y = forward(&p, &s.inputs).unwrap().y;
                for t in 0..5 {
                    expected += 2.0 * (y[t][o] - s.targets[t][o]) / n;
                }
            }
            assert!((g.b_y[o] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for kind in CellKind::ALL {
            for trial in 0..3 {
                let (i, h, o) = (rng.random_range(1..5), rng.random_range(1..5), rng.random_range(1..4));
                let t = rng.random_range(1..5);
                let p = SequenceModelParams::init(kind, i, h, o, trial);
                let batch = random_batch(&mut rng, 2, t, i, o);
                let (loss, g) = gradients(&p, &batch).unwrap();
                assert!((loss - batch_loss(&p, &batch)).abs() < 1e-12);
                let flat = p.flatten();
                let analytic = g.flatten();
                let mut probe = p.clone();
                for k in 0..flat.len() {
                    let mut v = flat.clone();
                    v[k] += 1e-5;
                    probe.unflatten(&v).unwrap();
                    let up = batch_loss(&probe, &batch);
                    v[k] -= 2e-5;
                    probe.unflatten(&v).unwrap();
                    let down = batch_loss(&probe, &batch);
                    let numeric = (up - down) / 2e-5;
                    let err = (numeric - analytic[k]).abs() / numeric.abs().max(analytic[k].abs()).max(1e-6);
                    assert!(err < 1e-4, "{kind} param {k}: {numeric} vs {}", analytic[k]);
                }
            }
        }
    }

    #[test]
    fn nonfinite_weights_are_reported() {
        let mut p = SequenceModelParams::zeros(CellKind::VanillaBidirectional, 1, 1, 1);
        p.w_fy = Mat::from_rows(1, 1, vec![f64::NAN]).unwrap();
        let batch = vec![Sequence {
            inputs: vec![vec![1.0]],
            targets: vec![vec![0.0]],
        }];
        assert!(matches!(gradients(&p, &batch), Err(ModelError::NonFinite { .. })));
    }
}
