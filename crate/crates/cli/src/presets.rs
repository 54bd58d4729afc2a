//! Built-in scenarios.
//!
//! All presets use the benchmark market (`T = 10`, `lambda = 0.001`,
//! `alpha = beta = 0.5`, `rho = 0.1`, `sigma^eps = 0.02`, `gamma = 0.001`),
//! `10^4` paths and seed 20240001 unless they say otherwise.

use crate::scenario::{Document, Scenario, Series, SweepAxis, TraderSection};

pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
}

pub const PRESETS: &[Preset] = &[
    Preset { name: "benchmark", description: "symmetric buyers, Q = (1e5, 1e5), benchmark parameters" },
    Preset { name: "fig2", description: "symmetric buyers, sigma_env in {0.01, 1, 10}" },
    Preset { name: "fig3", description: "single-trader proxy Q = (2e5, 0), gamma = (0.001, 1000) against the dual game Q = (1e5, 1e5), sigma_env in {0.01, 1, 10}" },
    Preset { name: "fig4", description: "one buyer, Q = (1e5, 0), sigma_env in {0.01, 1, 10}" },
    Preset { name: "fig5", description: "opposite inventories Q = (1e5, -1e5), sigma_env in {0.01, 1, 10}" },
    Preset { name: "fig6", description: "opposite inventories, a_env = -0.5, b_env = -1, sigma_env in {0.01, 1, 10}" },
    Preset { name: "fig7", description: "opposite inventories, a_env = 0, b_env = -1, sigma_env in {0.01, 1, 10}" },
    Preset { name: "fig8", description: "opposite inventories, a_env = 0.5, b_env = -1, sigma_env in {0.01, 1, 10}" },
    Preset { name: "fig10", description: "opposite inventories, a_env = -0.5, b_env in {-0.5, 0, 1, 1.2}" },
    Preset { name: "fig11", description: "opposite inventories, a_env = 0, b_env in {-0.5, 0, 1, 1.2}" },
    Preset { name: "fig12", description: "opposite inventories, a_env = 1, b_env in {-0.5, 0, 1, 1.2}" },
    Preset { name: "fig13", description: "opposite inventories, b_env = -0.5, a_env in {-0.5, 0, 0.5, 1}" },
    Preset { name: "fig14", description: "opposite inventories, b_env = 0, a_env in {-0.5, 0, 0.5, 1}" },
    Preset { name: "fig15", description: "opposite inventories, b_env = 0.5, a_env in {-0.5, 0, 0.5, 1}" },
    Preset { name: "fig16", description: "opposite inventories, a_env = 1 + b_env in {0.5, 1, 1.5, 2}" },
];

const SIGMA_ENV: &[f64] = &[0.01, 1.0, 10.0];
const B_ENV: &[f64] = &[-0.5, 0.0, 1.0, 1.2];
const A_ENV: &[f64] = &[-0.5, 0.0, 0.5, 1.0];

pub fn names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|p| p.name)
}

/// The preset called `name`, if there is one.
pub fn preset(name: &str) -> Option<Scenario> {
    let mut doc = Document {
        name: name.to_string(),
        ..Document::default()
    };
    let trader = |inventory: f64| TraderSection {
        inventory,
        ..TraderSection::default()
    };
    let opposite = [trader(1e5), trader(-1e5)];
    let sigma_sweep = || vec![SweepAxis::single("environment.sigma_env", SIGMA_ENV)];
    let env = &mut doc.environment;
    match name {
        "benchmark" => {}
        "fig2" => doc.sweep = sigma_sweep(),
        "fig3" => {
            doc.sweep = vec![
                SweepAxis::single("environment.sigma_env", SIGMA_ENV),
                SweepAxis::zipped(
                    &["traders.0.inventory", "traders.1.inventory", "traders.1.risk_aversion"],
                    &[&[2e5, 0.0, 1000.0], &[1e5, 1e5, 0.001]],
                ),
            ]
        }
        "fig4" => {
            doc.traders = [trader(1e5), trader(0.0)];
            doc.sweep = sigma_sweep();
        }
        "fig5" => {
            doc.traders = opposite;
            doc.sweep = sigma_sweep();
        }
        "fig6" | "fig7" | "fig8" => {
            env.a_env = scalar(match name {
                "fig6" => -0.5,
                "fig7" => 0.0,
                _ => 0.5,
            });
            env.b_env = scalar(-1.0);
            doc.traders = opposite;
            doc.sweep = sigma_sweep();
        }
        "fig10" | "fig11" | "fig12" => {
            env.a_env = scalar(match name {
                "fig10" => -0.5,
                "fig11" => 0.0,
                _ => 1.0,
            });
            doc.traders = opposite;
            doc.sweep = vec![SweepAxis::single("environment.b_env", B_ENV)];
        }
        "fig13" | "fig14" | "fig15" => {
            env.b_env = scalar(match name {
                "fig13" => -0.5,
                "fig14" => 0.0,
                _ => 0.5,
            });
            doc.traders = opposite;
            doc.sweep = vec![SweepAxis::single("environment.a_env", A_ENV)];
        }
        "fig16" => {
            doc.traders = opposite;
            doc.sweep = vec![SweepAxis::zipped(
                &["environment.a_env", "environment.b_env"],
                &[&[0.5, -0.5], &[1.0, 0.0], &[1.5, 0.5], &[2.0, 1.0]],
            )];
        }
        _ => return None,
    }
    Some(Scenario::from_document(doc).expect("presets are valid"))
}

fn scalar(x: f64) -> Series {
    Series::Scalar(x)
}
