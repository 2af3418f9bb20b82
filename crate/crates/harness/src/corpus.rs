//! The shipped scenario corpus, embedded so `list-scenarios` and bare-name
//! `run` arguments work without a checkout.

pub struct CorpusEntry {
    pub name: &'static str,
    pub text: &'static str,
}

pub const CORPUS: &[CorpusEntry] = &[
    CorpusEntry { name: "case_i_never", text: include_str!("../scenarios/case_i_never.toml") },
    CorpusEntry {
        name: "case_ii_two_crossings",
        text: include_str!("../scenarios/case_ii_two_crossings.toml"),
    },
    CorpusEntry {
        name: "case_iii_stationary",
        text: include_str!("../scenarios/case_iii_stationary.toml"),
    },
    CorpusEntry { name: "case_iv_harmonic", text: include_str!("../scenarios/case_iv_harmonic.toml") },
    CorpusEntry { name: "case_v_gaussian", text: include_str!("../scenarios/case_v_gaussian.toml") },
    CorpusEntry {
        name: "case_vi_interference",
        text: include_str!("../scenarios/case_vi_interference.toml"),
    },
    CorpusEntry {
        name: "case_vi_decohered",
        text: include_str!("../scenarios/case_vi_decohered.toml"),
    },
    CorpusEntry { name: "rabi_spin_up", text: include_str!("../scenarios/rabi_spin_up.toml") },
    CorpusEntry {
        name: "measurement_qubit",
        text: include_str!("../scenarios/measurement_qubit.toml"),
    },
];

pub fn find(name: &str) -> Option<&'static CorpusEntry> {
    CORPUS.iter().find(|e| e.name == name)
}
