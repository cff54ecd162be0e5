use relfuse::fuzz::{run_verification, FuzzConfig};
fn main() {
    for (seed, nulls, depth) in [(7u64, 0.25, 4usize), (99, 0.0, 4), (2024, 0.15, 3), (5150, 0.08, 5)] {
        let cfg = FuzzConfig {
            cases: 1500,
            seed,
            null_chance: nulls,
            max_depth: depth,
            check_gallop_toggle: true,
            check_lemma4: true,
            ..Default::default()
        };
        match run_verification(&cfg) {
            Ok(s) => println!("seed {seed}: ok, {} cases", s.cases_run),
            Err(c) => {
                println!("seed {seed}: FAIL at case {}: {}", c.case_index, c.detail);
                println!("{}", c.reproducer);
            }
        }
    }
}
