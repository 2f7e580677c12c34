// Copyright 2026 cqed-chem Contributors
// SPDX-License-Identifier: Apache-2.0

//! Arbitrary text through the TOML loader, with and without a scenario
//! override. Errors are fine; panics are not.

#![no_main]

use cqed_chem::config::parse_config;
use cqed_chem::models::ScenarioId;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Some((&pick, rest)) = data.split_first() else {
        return;
    };
    if let Ok(text) = std::str::from_utf8(rest) {
        let scenario = ScenarioId::ALL.get(pick as usize % 5).copied();
        if let Ok(cfg) = parse_config(text, scenario) {
            // Anything accepted must have passed validation.
            assert!(cfg.validate().is_ok());
        }
    }
});
