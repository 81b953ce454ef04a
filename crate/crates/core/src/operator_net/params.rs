use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{glorot_normal, Matrix, Real, RngStream};

/// Shape of one modified operator network.
///
/// `depth` is the number of hidden states per tower: one input layer, then
/// `depth - 1` gated mixing layers, then the activated output layer that
/// feeds the inner product.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetConfig {
    pub branch_input_dim: usize,
    pub trunk_input_dim: usize,
    pub width: usize,
    pub depth: usize,
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.branch_input_dim == 0 || self.trunk_input_dim == 0 {
            return Err(Error::invalid("network input dimensions must be ≥ 1"));
        }
        if self.width == 0 || self.depth == 0 {
            return Err(Error::invalid(format!("width and depth must be ≥ 1, got {}×{}", self.width, self.depth)));
        }
        Ok(())
    }
}

/// Affine layer `x · w + b` in row-vector convention (`w` is `in × out`).
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub w: Matrix<T>,
    pub b: Matrix<T>,
}

impl<T: Real> Dense<T> {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self { w: Matrix::zeros(fan_in, fan_out), b: Matrix::zeros(1, fan_out) }
    }

    pub fn glorot(fan_in: usize, fan_out: usize, rng: &mut RngStream) -> Result<Self> {
        Ok(Self { w: glorot_normal(fan_in, fan_out, rng)?, b: Matrix::zeros(1, fan_out) })
    }

    pub fn fan_in(&self) -> usize {
        self.w.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.w.cols()
    }

    /// `x · w + b`, without activation.
    pub fn affine(&self, x: &Matrix<T>) -> Matrix<T> {
        let mut z = x.matmul(&self.w);
        z.add_row_broadcast(&self.b);
        z
    }
}

/// One tower (branch or trunk): input layer, gate layers, output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Tower<T> {
    pub input: Dense<T>,
    pub gates: Vec<Dense<T>>,
    pub output: Dense<T>,
}

impl<T: Real> Tower<T> {
    fn build(
        input_dim: usize,
        cfg: &NetConfig,
        mut make: impl FnMut(usize, usize) -> Result<Dense<T>>,
    ) -> Result<Self> {
        let input = make(input_dim, cfg.width)?;
        let gates = (1..cfg.depth).map(|_| make(cfg.width, cfg.width)).collect::<Result<_>>()?;
        let output = make(cfg.width, cfg.width)?;
        Ok(Self { input, gates, output })
    }

    fn layers(&self) -> impl Iterator<Item = &Dense<T>> {
        std::iter::once(&self.input).chain(self.gates.iter()).chain(std::iter::once(&self.output))
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut Dense<T>> {
        std::iter::once(&mut self.input).chain(self.gates.iter_mut()).chain(std::iter::once(&mut self.output))
    }
}

/// All trainable parameters of one network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetParams<T> {
    pub branch_encoder: Dense<T>,
    pub trunk_encoder: Dense<T>,
    pub branch: Tower<T>,
    pub trunk: Tower<T>,
}

impl<T: Real> NetParams<T> {
    pub fn zeros(cfg: &NetConfig) -> Result<Self> {
        cfg.validate()?;
        Self::build(cfg, |i, o| Ok(Dense::zeros(i, o)))
    }

    /// Glorot-normal weights, zero biases.
    pub fn init(cfg: &NetConfig, rng: &mut RngStream) -> Result<Self> {
        cfg.validate()?;
        Self::build(cfg, |i, o| Dense::glorot(i, o, rng))
    }

    fn build(cfg: &NetConfig, mut make: impl FnMut(usize, usize) -> Result<Dense<T>>) -> Result<Self> {
        let branch_encoder = make(cfg.branch_input_dim, cfg.width)?;
        let trunk_encoder = make(cfg.trunk_input_dim, cfg.width)?;
        let branch = Tower::build(cfg.branch_input_dim, cfg, &mut make)?;
        let trunk = Tower::build(cfg.trunk_input_dim, cfg, &mut make)?;
        Ok(Self { branch_encoder, trunk_encoder, branch, trunk })
    }

    pub fn config(&self) -> NetConfig {
        NetConfig {
            branch_input_dim: self.branch_encoder.fan_in(),
            trunk_input_dim: self.trunk_encoder.fan_in(),
            width: self.branch_encoder.fan_out(),
            depth: self.branch.gates.len() + 1,
        }
    }

    fn dense_layers(&self) -> impl Iterator<Item = &Dense<T>> {
        [&self.branch_encoder, &self.trunk_encoder].into_iter().chain(self.branch.layers()).chain(self.trunk.layers())
    }

    /// Every parameter matrix in declaration order (weights before biases).
    pub fn matrices(&self) -> Vec<&Matrix<T>> {
        self.dense_layers().flat_map(|d| [&d.w, &d.b]).collect()
    }

    pub fn matrices_mut(&mut self) -> Vec<&mut Matrix<T>> {
        let Self { branch_encoder, trunk_encoder, branch, trunk } = self;
        [branch_encoder, trunk_encoder]
            .into_iter()
            .chain(branch.layers_mut())
            .chain(trunk.layers_mut())
            .flat_map(|d| [&mut d.w, &mut d.b])
            .collect()
    }

    /// Human-readable names aligned with [`NetParams::matrices`].
    pub fn matrix_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        let mut push = |layer: String| {
            names.push(format!("{layer}.w"));
            names.push(format!("{layer}.b"));
        };
        push("branch_encoder".into());
        push("trunk_encoder".into());
        for (tower, t) in [("branch", &self.branch), ("trunk", &self.trunk)] {
            push(format!("{tower}.input"));
            for i in 0..t.gates.len() {
                push(format!("{tower}.gate[{i}]"));
            }
            push(format!("{tower}.output"));
        }
        names
    }

    pub fn parameter_count(&self) -> usize {
        self.matrices().iter().map(|m| m.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.matrices().iter().all(|m| m.is_finite())
    }

    /// Copy with every parameter mapped through `f`.
    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        let mut out = self.clone();
        for m in out.matrices_mut() {
            m.map_inplace(&f);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> NetConfig {
        NetConfig { branch_input_dim: 6, trunk_input_dim: 2, width: 4, depth: 3 }
    }

    #[test]
    fn shapes_follow_config() {
        let p: NetParams<f64> = NetParams::init(&cfg(), &mut RngStream::new(1)).unwrap();
        assert_eq!(p.config(), cfg());
        assert_eq!(p.branch.input.w.shape(), (6, 4));
        assert_eq!(p.trunk.input.w.shape(), (2, 4));
        assert_eq!(p.branch.gates.len(), 2);
        assert_eq!(p.branch.output.w.shape(), (4, 4));
        assert_eq!(p.matrices().len(), p.matrix_names().len());
        assert_eq!(p.matrices().len(), 2 * (2 + 2 * 4));
        assert!(p.branch.input.b.as_slice().iter().all(|&b| b == 0.0));
    }

    #[test]
    fn invalid_config_rejected() {
        let mut c = cfg();
        c.width = 0;
        assert!(NetParams::<f64>::zeros(&c).is_err());
        c.width = 3;
        c.depth = 0;
        assert!(NetParams::<f64>::zeros(&c).is_err());
    }
}
