use crate::error::{Error, Result};

use super::norm::{Channel, NormStats};

/// Reverse-chronological, zero-padded history vector of length `2 · n_steps`.
///
/// Layout: `[g(t_i), …, g(t_1), 0 × (n_steps − t_i), f(t_i), …, f(t_1), 0 × (n_steps − t_i)]`.
/// Only the first `t_i` entries of each series are read.
pub fn causal_embed(grouting: &[f64], face: &[f64], t_i: usize, n_steps: usize) -> Result<Vec<f64>> {
    if t_i == 0 || t_i > n_steps {
        return Err(Error::invalid(format!("step {t_i} outside 1..={n_steps}")));
    }
    if grouting.len() < t_i || face.len() < t_i {
        return Err(Error::invalid(format!(
            "history too short for step {t_i}: {} grouting and {} face values",
            grouting.len(),
            face.len()
        )));
    }
    let mut out = vec![0.0; 2 * n_steps];
    for k in 0..t_i {
        out[k] = grouting[t_i - 1 - k];
        out[n_steps + k] = face[t_i - 1 - k];
    }
    Ok(out)
}

impl NormStats {
    /// Normalises raw kPa histories, then embeds them causally.
    pub fn embed_branch(&self, grouting_kpa: &[f64], face_kpa: &[f64], t_i: usize) -> Result<Vec<f64>> {
        let take = t_i.min(grouting_kpa.len()).min(face_kpa.len());
        let g: Vec<f64> = grouting_kpa[..take].iter().map(|&v| self.apply(Channel::Grouting, v)).collect();
        let f: Vec<f64> = face_kpa[..take].iter().map(|&v| self.apply(Channel::Face, v)).collect();
        causal_embed(&g, &f, t_i, self.n_steps)
    }
}
