//! Attention feature aggregation: prompt, style and content key/value
//! branches concatenated along the token axis, attended separately, and
//! averaged — three branches for stylization, four for composition.
//!
//! ```bash
//! cargo run --example afa_aggregation
//! ```

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use socdiffuse::afa::{
    afa_compose, afa_stylize, attention, concat_tokens, default_scale, AttentionBranch, QueryBlock,
};

fn main() -> socdiffuse::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut branch = |tokens: usize| {
        AttentionBranch::new(
            DMatrix::from_fn(tokens, 4, |_, _| rng.gen_range(-1.0..1.0)),
            DMatrix::from_fn(tokens, 4, |_, _| rng.gen_range(-1.0..1.0)),
        )
    };

    let base = branch(6)?; // latent self-attention tokens
    let prompt = branch(3)?; // text embedding tokens
    let style = branch(2)?; // reference style tokens
    let content = branch(2)?; // reference content tokens
    let mut rng_q = ChaCha8Rng::seed_from_u64(7);
    let q = QueryBlock::new(DMatrix::from_fn(4, 4, |_, _| rng_q.gen_range(-1.0..1.0)))?;
    let scale = default_scale(4);

    let text_only = {
        let joined = concat_tokens(&[&base, &prompt])?;
        attention(&q, &joined.keys, &joined.values, scale)?
    };
    let stylized = afa_stylize(&q, &base, &prompt, &style, scale, 1)?;
    let composed = afa_compose(&q, &base, &prompt, &style, &content, scale, 1)?;

    println!("token counts: base 6, prompt 3, style 2, content 2; widths 4/4\n");
    println!("first output row of each aggregate:");
    let show = |name: &str, m: &DMatrix<f64>| {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:+.4}", m[(0, j)])).collect();
        println!("  {name:<12} [{}]", row.join(", "));
    };
    show("text only", &text_only);
    show("stylize", &stylized);
    show("compose", &composed);

    // The aggregates are plain means of 3 and 4 branch outputs.
    let a_style = {
        let joined = concat_tokens(&[&base, &style])?;
        attention(&q, &joined.keys, &joined.values, scale)?
    };
    let a_text_style = {
        let joined = concat_tokens(&[&base, &prompt, &style])?;
        attention(&q, &joined.keys, &joined.values, scale)?
    };
    let manual = (&text_only + &a_style + &a_text_style) / 3.0;
    println!(
        "\nstylize equals the mean of its three branches: max dev {:.1e}",
        (&stylized - manual).abs().max()
    );

    // Multi-head shape: widths split evenly across heads.
    let two_heads = socdiffuse::afa::multi_head_attention(&q, &base.keys, &base.values, scale, 2)?;
    println!("two-head attention output shape: {}x{}", two_heads.nrows(), two_heads.ncols());
    Ok(())
}
