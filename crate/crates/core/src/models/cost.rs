//! Parameter and multiply-accumulate accounting.
//!
//! FLOPs are reported as MACs of the dense products only. Bias additions,
//! nonlinearities, softmax and pooling reductions are not counted.

use super::config::{ModelConfig, Variant};
use super::model::parameter_shapes;

/// Exact parameter count, biases included.
pub fn count_params(config: &ModelConfig) -> usize {
    parameter_shapes(config).iter().map(|(_, r, c)| r * c).sum()
}

/// Multiply-accumulates for one forward pass over a bag of `n_instances`.
pub fn count_flops(config: &ModelConfig, n_instances: usize) -> u64 {
    if n_instances == 0 {
        return 0;
    }
    let n = n_instances as u64;
    let (input, d, k, c) = (
        config.input_dim as u64,
        config.embed_dim as u64,
        config.attn_hidden as u64,
        config.num_classes as u64,
    );
    let embed = n * input * d;
    let attention = if config.variant.has_attention() {
        let heads = config.heads() as u64;
        let dh = config.head_dim() as u64;
        // V and U projections plus the scoring vector, per head.
        heads * n * (2 * dh * k + k)
    } else {
        0
    };
    let per_instance_classifier =
        config.variant.is_instance_level() || (config.variant.has_attention() && config.additive);
    let classifier = if per_instance_classifier {
        n * d * c
    } else {
        d * c
    };
    embed + attention + classifier
}

/// `62.9 M` style rendering.
pub fn format_mega(flops: u64) -> String {
    format!("{:.1} M", flops as f64 / 1e6)
}

/// `525.8 K` style rendering.
pub fn format_kilo(params: usize) -> String {
    format!("{:.1} K", params as f64 / 1e3)
}

/// Variants whose cost rows appear in the standard table.
pub fn standard_variants() -> Vec<ModelConfig> {
    vec![
        ModelConfig::new(Variant::Abmil),
        ModelConfig::new(Variant::Abmil).with_additive(true),
        ModelConfig::new(Variant::MaxPool),
        ModelConfig::new(Variant::MaxPoolIns),
        ModelConfig::new(Variant::MeanPool),
        ModelConfig::new(Variant::MeanPoolIns),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_pool_size() {
        let cfg = ModelConfig::new(Variant::MeanPool);
        assert_eq!(count_params(&cfg), 1024 * 512 + 512 + 512 * 2 + 2);
        assert_eq!(count_params(&cfg), 525_826);
        assert_eq!(format_kilo(count_params(&cfg)), "525.8 K");
    }

    #[test]
    fn abmil_size() {
        let cfg = ModelConfig::new(Variant::Abmil);
        assert_eq!(count_params(&cfg), 788_739);
        assert_eq!(format_kilo(count_params(&cfg)), "788.7 K");
    }

    #[test]
    fn class_count_changes_classifier_only() {
        let two = count_params(&ModelConfig::new(Variant::MeanPool));
        let seven = count_params(&ModelConfig::new(Variant::MeanPool).with_classes(7));
        assert_eq!(seven - two, 5 * (512 + 1));
    }

    #[test]
    fn flops_at_120() {
        let mean = count_flops(&ModelConfig::new(Variant::MeanPool), 120);
        assert_eq!(mean, 120 * 1024 * 512 + 512 * 2);
        assert_eq!(format_mega(mean), "62.9 M");
        let abmil = count_flops(&ModelConfig::new(Variant::Abmil), 120);
        assert_eq!(abmil, mean + 120 * (2 * 512 * 256 + 256));
        assert_eq!(format_mega(abmil), "94.4 M");
        // Instance-level and additive heads apply the classifier per instance.
        let ins = count_flops(&ModelConfig::new(Variant::MeanPoolIns), 120);
        assert_eq!(format_mega(ins), "63.0 M");
        let add = count_flops(&ModelConfig::new(Variant::Abmil).with_additive(true), 120);
        assert_eq!(format_mega(add), "94.5 M");
    }

    #[test]
    fn flops_scale_linearly() {
        for cfg in standard_variants() {
            let a = count_flops(&cfg, 120);
            let b = count_flops(&cfg, 240);
            let fixed = if cfg.variant.is_instance_level() || cfg.additive {
                0
            } else {
                (cfg.embed_dim * cfg.num_classes) as u64
            };
            assert_eq!(b - fixed, 2 * (a - fixed), "{}", cfg.name());
        }
        assert_eq!(format_mega(count_flops(&ModelConfig::new(Variant::MeanPool), 240)), "125.8 M");
        assert_eq!(count_flops(&ModelConfig::new(Variant::Abmil), 0), 0);
    }
}
