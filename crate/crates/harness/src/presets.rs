//! Desk-scale experiment batches. Each preset is a list of configs that
//! share a problem and differ in one or two settings.

use crate::config::{ExperimentConfig, InitPolicy, LambdaRule, Method, Modality, Temporal};
use crate::phantom::PhantomKind;
use crate::HarnessError;

pub const PRESETS: [&str; 5] = ["test1-desk", "test2-desk", "test3-desk", "test4-desk", "inner-iters"];

/// Static fan-beam CT with an angular offset, streamed over N blocks.
pub fn test1_base() -> ExperimentConfig {
    ExperimentConfig {
        name: "test1".into(),
        modality: Modality::Ct,
        phantom: PhantomKind::SheppLogan,
        n: 64,
        angles: 60,
        detectors: 91,
        p_true: 0.2421,
        p_init: InitPolicy::Grid,
        grid_lo: -1.0,
        grid_hi: 1.0,
        grid_points: 3,
        grid_basis: 10,
        noise: 0.01,
        method: Method::Altmin,
        high_reg: Some(false),
        inner_iters: 10,
        max_outer: 40,
        max_passes: 40,
        ..Default::default()
    }
}

pub fn test1_desk() -> Vec<ExperimentConfig> {
    let mut runs: Vec<ExperimentConfig> = [1, 2, 4]
        .into_iter()
        .map(|n| ExperimentConfig { name: format!("nl_n{n}"), blocks: n, ..test1_base() })
        .collect();
    runs.push(ExperimentConfig {
        name: "uncalibrated".into(),
        method: Method::Frozen,
        p_init: InitPolicy::Given,
        p0: 0.0,
        ..test1_base()
    });
    runs
}

/// Static PAT with a radial shift; AltMin against VarPro from a near and a
/// far starting point.
pub fn test2_base() -> ExperimentConfig {
    ExperimentConfig {
        name: "test2".into(),
        modality: Modality::Pat,
        phantom: PhantomKind::Tectonic,
        n: 32,
        plates: 8,
        circles: 4,
        sensors_per_circle: 24,
        radii: 24,
        p_true: 0.432,
        p_init: InitPolicy::Offset,
        noise: 0.01,
        lambda_rule: LambdaRule::Gcv,
        blocks: 3,
        inner_iters: 10,
        max_outer: 30,
        max_passes: 20,
        tol_outer: 0.0,
        tol_p: 0.0,
        ..Default::default()
    }
}

pub fn test2_desk() -> Vec<ExperimentConfig> {
    let mut runs = Vec::new();
    for offset in [0.1, 0.6] {
        for method in [Method::Altmin, Method::Varpro] {
            runs.push(ExperimentConfig {
                name: format!("{}_off{offset}", if method == Method::Altmin { "altmin" } else { "varpro" }),
                method,
                p_offset: offset,
                ..test2_base()
            });
        }
    }
    runs
}

/// Dynamic CT of moving shapes, few angles per frame.
pub fn test3_base() -> ExperimentConfig {
    ExperimentConfig {
        name: "test3".into(),
        modality: Modality::Ct,
        phantom: PhantomKind::MovingShapes,
        n: 32,
        frames: 10,
        angles: 10,
        detectors: 45,
        p_true: -0.148,
        p_init: InitPolicy::Given,
        p0: -0.25,
        noise: 0.01,
        method: Method::Altmin,
        high_reg: Some(false),
        inner_iters: 10,
        max_outer: 40,
        ..Default::default()
    }
}

pub fn test3_desk() -> Vec<ExperimentConfig> {
    [Temporal::OpticalFlow, Temporal::AnisoTv]
        .into_iter()
        .map(|temporal| ExperimentConfig {
            name: if temporal == Temporal::OpticalFlow { "of".into() } else { "aniso".into() },
            temporal,
            ..test3_base()
        })
        .collect()
}

/// Dynamic PAT of ramping blocks with a rotating sparse sensor subset.
pub fn test4_base() -> ExperimentConfig {
    ExperimentConfig {
        name: "test4".into(),
        modality: Modality::Pat,
        phantom: PhantomKind::DynamicBlocks,
        n: 32,
        frames: 10,
        circles: 2,
        sensors_per_circle: 32,
        radii: 40,
        sensors_per_frame: 32,
        p_true: 0.1924,
        p_init: InitPolicy::Given,
        p0: 0.25,
        noise: 0.01,
        method: Method::Altmin,
        high_reg: Some(false),
        inner_iters: 10,
        max_outer: 30,
        ..Default::default()
    }
}

pub fn test4_desk() -> Vec<ExperimentConfig> {
    let mut runs = Vec::new();
    for temporal in [Temporal::OpticalFlow, Temporal::AnisoTv] {
        for k_max in [10, 25] {
            let tag = if temporal == Temporal::OpticalFlow { "of" } else { "aniso" };
            runs.push(ExperimentConfig { name: format!("{tag}_kmax{k_max}"), temporal, k_max, ..test4_base() });
        }
    }
    runs
}

/// Inner MM-GKS iterations per block on the streamed CT problem.
pub fn inner_iters() -> Vec<ExperimentConfig> {
    [5, 10, 20]
        .into_iter()
        .map(|m| ExperimentConfig { name: format!("m{m}"), blocks: 2, inner_iters: m, ..test1_base() })
        .collect()
}

pub fn preset(name: &str) -> Result<Vec<ExperimentConfig>, HarnessError> {
    match name {
        "test1-desk" => Ok(test1_desk()),
        "test2-desk" => Ok(test2_desk()),
        "test3-desk" => Ok(test3_desk()),
        "test4-desk" => Ok(test4_desk()),
        "inner-iters" => Ok(inner_iters()),
        other => Err(HarnessError::Config(format!("unknown preset '{other}'; known: {}", PRESETS.join(", ")))),
    }
}
