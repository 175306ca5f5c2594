//! Scenarios shipped with the binary, addressable by name.

/// `(name, TOML source)` in listing order.
pub const SCENARIOS: &[(&str, &str)] = &[
    ("fig1c_spectrum", include_str!("../scenarios/fig1c_spectrum.toml")),
    ("fig1d_winding", include_str!("../scenarios/fig1d_winding.toml")),
    ("fig2a_edge_profile", include_str!("../scenarios/fig2a_edge_profile.toml")),
    ("fig2b_rk_sweep", include_str!("../scenarios/fig2b_rk_sweep.toml")),
    ("fig2cd_excitation", include_str!("../scenarios/fig2cd_excitation.toml")),
    ("fig3_wigner_evolution", include_str!("../scenarios/fig3_wigner_evolution.toml")),
    ("fig3_wigner_evolution_full", include_str!("../scenarios/fig3_wigner_evolution_full.toml")),
    ("fig4_metrics", include_str!("../scenarios/fig4_metrics.toml")),
    ("fig4_metrics_full", include_str!("../scenarios/fig4_metrics_full.toml")),
    ("fig4_metrics_topological", include_str!("../scenarios/fig4_metrics_topological.toml")),
    ("supp_fig2_threecat", include_str!("../scenarios/supp_fig2_threecat.toml")),
    ("supp_fig3_sizes", include_str!("../scenarios/supp_fig3_sizes.toml")),
    ("supp_fig4_crosskerr", include_str!("../scenarios/supp_fig4_crosskerr.toml")),
    ("supp_fig5_transmission", include_str!("../scenarios/supp_fig5_transmission.toml")),
];

pub fn get(name: &str) -> Option<&'static str> {
    SCENARIOS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn names() -> impl Iterator<Item = &'static str> {
    SCENARIOS.iter().map(|(n, _)| *n)
}
