use crate::error::{Error, Result};
use crate::numkit::{tanh_inplace, Matrix, Real};

use super::params::{Dense, NetParams, Tower};

/// Inputs and targets for one loss evaluation, one sample per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<T> {
    pub branch: Matrix<T>,
    pub trunk: Matrix<T>,
    pub target: Vec<T>,
}

impl<T: Real> Batch<T> {
    pub fn new(branch: Matrix<T>, trunk: Matrix<T>, target: Vec<T>) -> Result<Self> {
        if branch.rows() != trunk.rows() || branch.rows() != target.len() {
            return Err(Error::invalid(format!(
                "batch rows disagree: branch {}, trunk {}, targets {}",
                branch.rows(),
                trunk.rows(),
                target.len()
            )));
        }
        Ok(Self { branch, trunk, target })
    }

    pub fn len(&self) -> usize {
        self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target.is_empty()
    }
}

/// Gated mix `(1 − z) ⊙ u + z ⊙ v`.
///
/// Evaluated literally so that `z = 0` returns `u` and `z = 1` returns `v`
/// bit for bit.
pub fn gate_mix<T: Real>(z: &Matrix<T>, u: &Matrix<T>, v: &Matrix<T>) -> Matrix<T> {
    assert_eq!(z.shape(), u.shape(), "gate_mix: z and u differ in shape");
    assert_eq!(z.shape(), v.shape(), "gate_mix: z and v differ in shape");
    let data = z
        .as_slice()
        .iter()
        .zip(u.as_slice())
        .zip(v.as_slice())
        .map(|((&z, &u), &v)| (T::one() - z) * u + z * v)
        .collect();
    Matrix::from_vec(z.rows(), z.cols(), data).expect("shape preserved")
}

fn dense_tanh<T: Real>(x: &Matrix<T>, layer: &Dense<T>) -> Matrix<T> {
    let mut z = layer.affine(x);
    tanh_inplace(&mut z);
    z
}

#[derive(Debug, Clone)]
struct TowerTrace<T> {
    /// Hidden states `H(1) .. H(L)`.
    hidden: Vec<Matrix<T>>,
    gates: Vec<Matrix<T>>,
    out: Matrix<T>,
}

/// Every intermediate of a batched forward pass.
#[derive(Debug, Clone)]
struct Trace<T> {
    enc_u: Matrix<T>,
    enc_v: Matrix<T>,
    branch: TowerTrace<T>,
    trunk: TowerTrace<T>,
    output: Vec<T>,
}

fn tower_forward<T: Real>(x: &Matrix<T>, tower: &Tower<T>, u: &Matrix<T>, v: &Matrix<T>) -> TowerTrace<T> {
    let mut hidden = vec![dense_tanh(x, &tower.input)];
    let mut gates = Vec::with_capacity(tower.gates.len());
    for g in &tower.gates {
        let z = dense_tanh(hidden.last().expect("non-empty"), g);
        hidden.push(gate_mix(&z, u, v));
        gates.push(z);
    }
    let out = dense_tanh(hidden.last().expect("non-empty"), &tower.output);
    TowerTrace { hidden, gates, out }
}

fn check_inputs<T: Real>(params: &NetParams<T>, branch: &Matrix<T>, trunk: &Matrix<T>) -> Result<()> {
    let cfg = params.config();
    if branch.cols() != cfg.branch_input_dim {
        return Err(Error::invalid(format!(
            "branch input has {} entries, network expects {}",
            branch.cols(),
            cfg.branch_input_dim
        )));
    }
    if trunk.cols() != cfg.trunk_input_dim {
        return Err(Error::invalid(format!(
            "trunk input has {} entries, network expects {}",
            trunk.cols(),
            cfg.trunk_input_dim
        )));
    }
    if branch.rows() != trunk.rows() {
        return Err(Error::invalid(format!("branch batch has {} rows, trunk batch {}", branch.rows(), trunk.rows())));
    }
    Ok(())
}

fn trace<T: Real>(params: &NetParams<T>, branch: &Matrix<T>, trunk: &Matrix<T>) -> Result<Trace<T>> {
    check_inputs(params, branch, trunk)?;
    let enc_u = dense_tanh(branch, &params.branch_encoder);
    let enc_v = dense_tanh(trunk, &params.trunk_encoder);
    let b = tower_forward(branch, &params.branch, &enc_u, &enc_v);
    let t = tower_forward(trunk, &params.trunk, &enc_u, &enc_v);
    let output = b.out.row_dots(&t.out);
    if let Some(i) = output.iter().position(|o| !o.is_finite()) {
        return Err(Error::Numeric(format!("non-finite network output at row {i}")));
    }
    Ok(Trace { enc_u, enc_v, branch: b, trunk: t, output })
}

/// Network output for every `(branch row, trunk row)` pair.
pub fn forward_batch<T: Real>(params: &NetParams<T>, branch: &Matrix<T>, trunk: &Matrix<T>) -> Result<Vec<T>> {
    Ok(trace(params, branch, trunk)?.output)
}

/// Network output for a single `(u, y)` pair.
pub fn forward<T: Real>(params: &NetParams<T>, u: &[T], y: &[T]) -> Result<T> {
    let out = forward_batch(params, &Matrix::row_vector(u.to_vec()), &Matrix::row_vector(y.to_vec()))?;
    Ok(out[0])
}

/// Mean squared error of the batch, without gradients.
pub fn loss<T: Real>(params: &NetParams<T>, batch: &Batch<T>) -> Result<T> {
    if batch.is_empty() {
        return Err(Error::invalid("loss of an empty batch"));
    }
    let out = forward_batch(params, &batch.branch, &batch.trunk)?;
    Ok(mse(&out, &batch.target))
}

fn mse<T: Real>(out: &[T], target: &[T]) -> T {
    let n = T::from_usize(out.len()).expect("batch size fits");
    out.iter().zip(target).map(|(&o, &t)| (o - t) * (o - t)).sum::<T>() / n
}

/// `d / dx` of `tanh(x)` given the activated value.
fn through_tanh<T: Real>(upstream: &Matrix<T>, activated: &Matrix<T>) -> Matrix<T> {
    upstream.zip_map(activated, |g, y| g * (T::one() - y * y))
}

fn dense_backward<T: Real>(input: &Matrix<T>, d_pre: &Matrix<T>, layer: &Dense<T>, grad: &mut Dense<T>) -> Matrix<T> {
    grad.w = input.t_matmul(d_pre);
    grad.b = d_pre.column_sums();
    d_pre.matmul_t(&layer.w)
}

/// Backpropagates one tower, accumulating into the encoder gradients.
#[allow(clippy::too_many_arguments)]
fn tower_backward<T: Real>(
    x: &Matrix<T>,
    tower: &Tower<T>,
    tr: &TowerTrace<T>,
    d_out: Matrix<T>,
    enc_u: &Matrix<T>,
    enc_v: &Matrix<T>,
    grad: &mut Tower<T>,
    d_enc_u: &mut Matrix<T>,
    d_enc_v: &mut Matrix<T>,
) {
    let depth = tr.hidden.len();
    let d_pre = through_tanh(&d_out, &tr.out);
    let mut d_h = dense_backward(&tr.hidden[depth - 1], &d_pre, &tower.output, &mut grad.output);

    for l in (0..tower.gates.len()).rev() {
        // H(l+1) = (1 − Z) ⊙ U + Z ⊙ V with Z = tanh(H(l) · W + b)
        let z = &tr.gates[l];
        let mut d_z = enc_v.clone();
        for ((dz, &u), &g) in d_z.as_mut_slice().iter_mut().zip(enc_u.as_slice()).zip(d_h.as_slice()) {
            *dz = g * (*dz - u);
        }
        d_enc_u.add_assign(&d_h.zip_map(z, |g, z| g * (T::one() - z)));
        d_enc_v.add_assign(&d_h.hadamard(z));
        let d_pre = through_tanh(&d_z, z);
        d_h = dense_backward(&tr.hidden[l], &d_pre, &tower.gates[l], &mut grad.gates[l]);
    }

    let d_pre = through_tanh(&d_h, &tr.hidden[0]);
    grad.input.w = x.t_matmul(&d_pre);
    grad.input.b = d_pre.column_sums();
}

/// Mean squared error and its exact gradient with respect to every parameter.
pub fn loss_and_grads<T: Real>(params: &NetParams<T>, batch: &Batch<T>) -> Result<(T, NetParams<T>)> {
    if batch.is_empty() {
        return Err(Error::invalid("loss_and_grads needs a non-empty batch"));
    }
    let tr = trace(params, &batch.branch, &batch.trunk)?;
    let n = T::from_usize(batch.len()).expect("batch size fits");
    let loss = mse(&tr.output, &batch.target);

    let two = T::lit(2.0);
    let d_out: Vec<T> = tr.output.iter().zip(&batch.target).map(|(&o, &t)| two * (o - t) / n).collect();
    let width = tr.branch.out.cols();
    let scale_rows = |other: &Matrix<T>| Matrix::from_fn(other.rows(), width, |r, c| d_out[r] * other.get(r, c));
    let d_branch_out = scale_rows(&tr.trunk.out);
    let d_trunk_out = scale_rows(&tr.branch.out);

    let cfg = params.config();
    let mut grad = NetParams::zeros(&cfg)?;
    let mut d_enc_u = Matrix::zeros(batch.len(), width);
    let mut d_enc_v = Matrix::zeros(batch.len(), width);
    tower_backward(
        &batch.branch,
        &params.branch,
        &tr.branch,
        d_branch_out,
        &tr.enc_u,
        &tr.enc_v,
        &mut grad.branch,
        &mut d_enc_u,
        &mut d_enc_v,
    );
    tower_backward(
        &batch.trunk,
        &params.trunk,
        &tr.trunk,
        d_trunk_out,
        &tr.enc_u,
        &tr.enc_v,
        &mut grad.trunk,
        &mut d_enc_u,
        &mut d_enc_v,
    );

    let d_pre_u = through_tanh(&d_enc_u, &tr.enc_u);
    grad.branch_encoder.w = batch.branch.t_matmul(&d_pre_u);
    grad.branch_encoder.b = d_pre_u.column_sums();
    let d_pre_v = through_tanh(&d_enc_v, &tr.enc_v);
    grad.trunk_encoder.w = batch.trunk.t_matmul(&d_pre_v);
    grad.trunk_encoder.b = d_pre_v.column_sums();

    Ok((loss, grad))
}
