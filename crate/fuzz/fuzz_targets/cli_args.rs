#![no_main]

use clap::Parser;
use hproj_cli::{Cli, Scenario, Settings};
use libfuzzer_sys::fuzz_target;

// NUL-separated argument vector
fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    let args = std::iter::once("hproj").chain(s.split('\0'));
    if let Ok(cli) = Cli::try_parse_from(args) {
        let _ = Settings::resolve(Some(Scenario::Curvature), &cli.opts, Vec::new());
    }
});
