//! Headline criteria. Run with `--nocapture` to see one line per check.

use maemi_core::{SelfTest, VoiceConfig, CHECK_COUNT};

#[test]
fn all_criteria_hold_for_the_default_voice() {
    let mut st = SelfTest::new(VoiceConfig::default()).unwrap();
    let checks = st.run_all().unwrap();
    assert_eq!(checks.len(), CHECK_COUNT as usize);
    println!();
    for c in &checks {
        println!("{c}");
    }
    let failed: Vec<_> = checks.iter().filter(|c| !c.passed).map(|c| c.id).collect();
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
