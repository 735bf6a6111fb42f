//! Parameter counts for the reference architectures.

use epnet::network::{count_params, params_per_phase, ModelConfig, Variant};

fn main() -> epnet::Result<()> {
    println!("EP phase, nf=32:  {}", params_per_phase(Variant::Ep, 32));
    println!("EPN phase, nf=32: {}", params_per_phase(Variant::Epn, 32));
    for (variant, phases) in [(Variant::Ep, 9), (Variant::Epn, 7), (Variant::Ep, 3)] {
        let nf = if phases == 3 { 8 } else { 32 };
        let cfg = ModelConfig::new(variant, phases, nf, 33, 33)?;
        println!("{}: {}", cfg.fingerprint(), count_params(&cfg));
    }
    Ok(())
}
