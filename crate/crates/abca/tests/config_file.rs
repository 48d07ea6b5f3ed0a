mod common;

use abca::load_config;
use abca_core::AbcaConfig;

#[test]
fn example_config_is_the_default() {
    assert_eq!(load_config(&common::fixture("abca.toml")).unwrap(), AbcaConfig::default());
}
