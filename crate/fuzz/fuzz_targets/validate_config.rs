// Copyright 2026 cqed-chem Contributors
// SPDX-License-Identifier: Apache-2.0

#![no_main]

use cqed_chem::config::validate_config;
use libfuzzer_sys::fuzz_target;

// Small cap keeps enumeration cheap per input.
const CAP: usize = 256;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(v) = validate_config(text, None, CAP) {
            assert!(v.dim >= 1 && v.dim <= CAP);
        }
    }
});
