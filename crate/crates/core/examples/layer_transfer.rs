//! Warm-start a character model's bottom layers from a deeper word model of
//! the same shape, and what a shape mismatch looks like.

use autocomplete::methods::{transfer_layers, TransferPlan};
use autocomplete::model::{build_model, layer_prefix, ModelConfig};
use autocomplete::tensor::Rng;

fn main() -> autocomplete::Result<()> {
    let target_cfg = ModelConfig {
        n_layer: 4,
        ..ModelConfig::desk_char()
    };
    let source_cfg = ModelConfig {
        n_layer: 8,
        ..ModelConfig::desk_word(500)
    };
    let mut rng = Rng::new(0);
    let source = build_model::<f32>(&source_cfg, &mut rng)?;
    let mut target = build_model(&target_cfg, &mut rng)?;

    for percent in [20, 50] {
        let plan = TransferPlan::new(&source_cfg, &target_cfg, percent, None)?;
        println!("{percent}%: layers {:?}", plan.mapped_layers);
    }
    let plan = TransferPlan::new(&source_cfg, &target_cfg, 50, None)?;
    let copied = transfer_layers(&mut target, &source, &plan)?;
    println!("copied {} tensors", copied.len());
    let probe = format!("{}.ffn.w1", layer_prefix(0));
    if let (Some(a), Some(b)) = (target.param(&probe), source.param(&probe)) {
        println!("{probe} equal after transfer: {}", a == b);
    }

    let wider = ModelConfig {
        d_inner: 128,
        ..source_cfg
    };
    match TransferPlan::new(&wider, &target_cfg, 50, None) {
        Ok(_) => println!("unexpectedly accepted"),
        Err(e) => println!("rejected: {e}"),
    }
    Ok(())
}
