// Copyright 2026 cqed-chem Contributors
// SPDX-License-Identifier: Apache-2.0

use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = cqed_chem_cli::Cli::parse();
    std::process::exit(cqed_chem_cli::execute(cli));
}
