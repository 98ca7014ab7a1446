//! Shipped experiment configs, one per figure of the device study.

pub const PRESETS: [(&str, &str); 7] = [
    ("fig1c", include_str!("../presets/fig1c.json")),
    ("fig1e", include_str!("../presets/fig1e.json")),
    ("fig2", include_str!("../presets/fig2.json")),
    ("fig3", include_str!("../presets/fig3.json")),
    ("fig4a", include_str!("../presets/fig4a.json")),
    ("fig4b", include_str!("../presets/fig4b.json")),
    ("fig4cd", include_str!("../presets/fig4cd.json")),
];

pub fn preset(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

pub fn names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}
