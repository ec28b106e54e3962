#![no_main]

use libfuzzer_sys::fuzz_target;

// Edge-list parsing and the Metropolis construction must never panic,
// whatever the agent ids in the file.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(edges) = dqopt::mixing::parse_edge_list_text(text) {
        for n_agents in [1usize, 2, 5, 32] {
            let _ = dqopt::mixing::MixingMatrix::metropolis(&edges, n_agents);
        }
    }
});
