mod common;

#[test]
fn closed_form_matches_iterated_composition() {
    println!("{}", common::check_forward_statistics(100_000).unwrap());
}

#[test]
fn entropy_and_step_count_spot_values() {
    println!("{}", common::check_cts_properties().unwrap());
}
