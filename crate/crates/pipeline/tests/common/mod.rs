#![allow(dead_code)]

use std::path::Path;

use hsfuse_pipeline::ExperimentConfig;

/// Small, fast settings on a 4-tile toy scene under `root`.
pub fn small_config(root: &Path) -> ExperimentConfig {
    let text = format!(
        r#"{{
        "scene": {scene:?},
        "output_root": {root:?},
        "toy": {{"count": 4, "size": 16}},
        "degrade": {{"patch_size": 16}},
        "dip": {{"noise_channels": 4, "down_widths": [8, 8], "down_kernels": [3, 3], "up_widths": [8, 8],
                 "up_kernels": [3, 3], "skip_widths": [2, 2], "skip_kernels": [1, 1], "iterations": 8, "lr": 0.01}},
        "hyperkite": {{"widths": [4, 4, 4, 4, 4, 4, 0], "epochs": 2}},
        "lambda_sweep": [0.0, 0.8]
    }}"#,
        scene = root.join("scene").display().to_string(),
        root = root.display().to_string(),
    );
    ExperimentConfig::from_json(&text).unwrap()
}
