//! Attention feature aggregation: scaled dot-product attention over
//! token-concatenated key/value branches, averaged per the stylization and
//! composition recipes.
//!
//! Branches arrive pre-projected; token counts may differ per branch, only
//! the key width `n_q` and value width `n_h` must agree. The softmax scale
//! is explicit (the conventional default is `1/sqrt(n_q)`), and a head count
//! may split the widths evenly.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Keys and values of one branch; rows are tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionBranch {
    pub keys: DMatrix<f64>,
    pub values: DMatrix<f64>,
}

impl AttentionBranch {
    pub fn new(keys: DMatrix<f64>, values: DMatrix<f64>) -> Result<Self> {
        if keys.nrows() != values.nrows() {
            return Err(Error::invalid(format!(
                "keys have {} tokens but values have {}",
                keys.nrows(),
                values.nrows()
            )));
        }
        if keys.iter().chain(values.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("branch matrices must be finite"));
        }
        Ok(Self { keys, values })
    }

    pub fn token_count(&self) -> usize {
        self.keys.nrows()
    }

    pub fn key_width(&self) -> usize {
        self.keys.ncols()
    }

    pub fn value_width(&self) -> usize {
        self.values.ncols()
    }
}

/// Query rows projected from the latent tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryBlock(pub DMatrix<f64>);

impl QueryBlock {
    pub fn new(q: DMatrix<f64>) -> Result<Self> {
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("query matrix must be finite"));
        }
        Ok(Self(q))
    }

    pub fn token_count(&self) -> usize {
        self.0.nrows()
    }

    pub fn width(&self) -> usize {
        self.0.ncols()
    }
}

/// Conventional softmax scale `1/sqrt(n_q)`.
pub fn default_scale(n_q: usize) -> f64 {
    1.0 / (n_q as f64).sqrt()
}

/// `softmax(Q K^T * scale) V`, softmax applied row-wise with max
/// subtraction; every softmax row sums to one.
pub fn attention(
    q: &QueryBlock,
    keys: &DMatrix<f64>,
    values: &DMatrix<f64>,
    scale: f64,
) -> Result<DMatrix<f64>> {
    if keys.nrows() == 0 {
        return Err(Error::invalid("attention needs at least one key"));
    }
    if keys.nrows() != values.nrows() {
        return Err(Error::invalid("key/value token counts differ"));
    }
    if keys.ncols() != q.width() {
        return Err(Error::invalid(format!(
            "query width {} does not match key width {}",
            q.width(),
            keys.ncols()
        )));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::invalid("scale must be positive and finite"));
    }
    let logits = &q.0 * keys.transpose() * scale;
    let mut out = DMatrix::zeros(q.token_count(), values.ncols());
    for i in 0..logits.nrows() {
        let row = logits.row(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut weights: Vec<f64> = row.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        for (j, w) in weights.iter().enumerate() {
            for c in 0..values.ncols() {
                out[(i, c)] += w * values[(j, c)];
            }
        }
    }
    Ok(out)
}

/// Multi-head variant: key and value widths split evenly across heads, each
/// head attended independently, outputs concatenated. `heads = 1` is plain
/// attention.
pub fn multi_head_attention(
    q: &QueryBlock,
    keys: &DMatrix<f64>,
    values: &DMatrix<f64>,
    scale: f64,
    heads: usize,
) -> Result<DMatrix<f64>> {
    if heads == 0 {
        return Err(Error::invalid("head count must be at least one"));
    }
    if heads == 1 {
        return attention(q, keys, values, scale);
    }
    if !q.width().is_multiple_of(heads) || !values.ncols().is_multiple_of(heads) {
        return Err(Error::invalid(format!(
            "widths ({}, {}) are not divisible by {heads} heads",
            q.width(),
            values.ncols()
        )));
    }
    let qw = q.width() / heads;
    let vw = values.ncols() / heads;
    let mut out = DMatrix::zeros(q.token_count(), values.ncols());
    for h in 0..heads {
        let qh = QueryBlock(q.0.columns(h * qw, qw).into_owned());
        let kh = keys.columns(h * qw, qw).into_owned();
        let vh = values.columns(h * vw, vw).into_owned();
        let oh = attention(&qh, &kh, &vh, scale)?;
        out.view_mut((0, h * vw), (q.token_count(), vw)).copy_from(&oh);
    }
    Ok(out)
}

/// Stack branches along the token dimension, order preserved.
pub fn concat_tokens(branches: &[&AttentionBranch]) -> Result<AttentionBranch> {
    if branches.is_empty() {
        return Err(Error::invalid("concatenation needs at least one branch"));
    }
    let n_q = branches[0].key_width();
    let n_h = branches[0].value_width();
    let total: usize = branches.iter().map(|b| b.token_count()).sum();
    let mut keys = DMatrix::zeros(total, n_q);
    let mut values = DMatrix::zeros(total, n_h);
    let mut row = 0;
    for b in branches {
        if b.key_width() != n_q || b.value_width() != n_h {
            return Err(Error::invalid("branch widths differ"));
        }
        keys.view_mut((row, 0), (b.token_count(), n_q)).copy_from(&b.keys);
        values
            .view_mut((row, 0), (b.token_count(), n_h))
            .copy_from(&b.values);
        row += b.token_count();
    }
    AttentionBranch::new(keys, values)
}

fn branch_attention(
    q: &QueryBlock,
    branches: &[&AttentionBranch],
    scale: f64,
    heads: usize,
) -> Result<DMatrix<f64>> {
    let joined = concat_tokens(branches)?;
    multi_head_attention(q, &joined.keys, &joined.values, scale, heads)
}

/// Stylization aggregate: the mean of exactly three attention outputs,
/// `Avg(A(Q,[K;Kp],[V;Vp]), A(Q,[K;Ks],[V;Vs]), A(Q,[K;Kp;Ks],[V;Vp;Vs]))`.
pub fn afa_stylize(
    q: &QueryBlock,
    base: &AttentionBranch,
    prompt: &AttentionBranch,
    style: &AttentionBranch,
    scale: f64,
    heads: usize,
) -> Result<DMatrix<f64>> {
    let text = branch_attention(q, &[base, prompt], scale, heads)?;
    let styled = branch_attention(q, &[base, style], scale, heads)?;
    let text_style = branch_attention(q, &[base, prompt, style], scale, heads)?;
    Ok((text + styled + text_style) / 3.0)
}

/// Composition aggregate: the mean of exactly four attention outputs,
/// `Avg(A_text, A_style, A_content, A_content+style)`; the text+style branch
/// is deliberately absent, matching the composition recipe.
pub fn afa_compose(
    q: &QueryBlock,
    base: &AttentionBranch,
    prompt: &AttentionBranch,
    style: &AttentionBranch,
    content: &AttentionBranch,
    scale: f64,
    heads: usize,
) -> Result<DMatrix<f64>> {
    let text = branch_attention(q, &[base, prompt], scale, heads)?;
    let styled = branch_attention(q, &[base, style], scale, heads)?;
    let contented = branch_attention(q, &[base, content], scale, heads)?;
    let content_style = branch_attention(q, &[base, style, content], scale, heads)?;
    Ok((text + styled + contented + content_style) / 4.0)
}
