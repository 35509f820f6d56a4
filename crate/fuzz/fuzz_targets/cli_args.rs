#![no_main]

use beb_cli::parse::{parse_assignment, parse_bracket, parse_entry, parse_list, parse_mu_range};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(r) = parse_mu_range(text, None) {
        let g = if r.n <= 10_000 { r.grid() } else { vec![r.lo] };
        assert!(!g.is_empty() && g.iter().all(|x| x.is_finite()));
    }
    if let Ok((lo, hi)) = parse_bracket(text) {
        assert!(lo.is_finite() && hi.is_finite());
    }
    let _ = parse_assignment(text);
    let _ = parse_list(text);
    let _ = parse_entry(text);
    // Whole command lines, split on whitespace; parsing only, never dispatch.
    let argv = std::iter::once("beb").chain(text.split_whitespace());
    let _ = beb_cli::parse_cli(argv);
});
