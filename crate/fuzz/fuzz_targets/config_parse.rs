#![no_main]

use libfuzzer_sys::fuzz_target;

// Config loading must never panic, and any accepted config must survive a
// canonical write/reload round trip unchanged.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = dqopt::config::load_config_str(text) {
        let rendered = dqopt::config::write_config(&cfg);
        let reloaded = dqopt::config::load_config_str(&rendered)
            .expect("canonical rendering must reload");
        assert_eq!(cfg, reloaded, "config round trip changed the config");
    }
});
