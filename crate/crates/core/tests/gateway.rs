mod common;

use std::sync::Arc;

use proptest::prelude::*;

use envrepair::interpreter::DEFAULT_SERIES as PY36;
use envrepair::llm::{equal_distance_index, Gateway, GatewayError, GenerationConfig, ScriptedBackend, TemplateId};
use envrepair::ModuleRequirement;

fn numpy() -> ModuleRequirement {
    ModuleRequirement::new("numpy", "numpy")
}

#[test]
fn two_bad_replies_then_a_good_one() {
    let backend = Arc::new(ScriptedBackend::new().script(
        TemplateId::PickVersionRag,
        [
            "sure, numpy 1.16 is fine",
            r#"{"module": "numpy", "version": "9.9.9"}"#,
            r#"{"module": "numpy", "version": "1.14.6"}"#,
        ],
    ));
    let gw = Gateway::new(backend.clone());
    let v = gw
        .pick_version(&numpy(), Some("1.13.3,1.14.6,1.16.6"), &[], PY36, &GenerationConfig::default())
        .unwrap();
    assert_eq!(v, "1.14.6");
    assert_eq!(backend.calls(), 3);
}

#[test]
fn violations_past_the_budget_take_the_equal_distance_pick() {
    let bad = r#"{"module": "numpy", "version": "1.13.3"}"#;
    let backend = Arc::new(ScriptedBackend::new().script(TemplateId::PickVersionRag, [bad, bad, bad, bad]));
    let gw = Gateway::new(backend.clone());
    let previous = vec!["1.13.3".to_string()];
    let v = gw
        .pick_version(&numpy(), Some("1.11.0,1.13.3,1.14.6,1.16.6,1.18.5"), &previous, PY36, &GenerationConfig::default())
        .unwrap();
    let remaining = ["1.11.0", "1.14.6", "1.16.6", "1.18.5"];
    assert_eq!(v, remaining[equal_distance_index(4, 1)]);
    assert_eq!(backend.calls(), 3);
}

#[test]
fn unparseable_replies_exhaust_into_malformed_reply() {
    let backend = Arc::new(ScriptedBackend::new().script(TemplateId::PickVersionRag, ["no", "no", "no"]));
    let gw = Gateway::new(backend);
    let r = gw.pick_version(&numpy(), Some("1.0,2.0"), &[], PY36, &GenerationConfig::default());
    assert!(matches!(r, Err(GatewayError::MalformedReply { attempts: 3, .. })), "{r:?}");
}

#[test]
fn fully_tried_catalog_is_exhausted_without_asking() {
    let backend = Arc::new(ScriptedBackend::new());
    let gw = Gateway::new(backend.clone());
    let prev = vec!["1.0".to_string(), "2.0".to_string()];
    let r = gw.pick_version(&numpy(), Some("1.0,2.0"), &prev, PY36, &GenerationConfig::default());
    assert!(matches!(r, Err(GatewayError::VersionsExhausted { .. })));
    assert_eq!(backend.calls(), 0);
}

fn catalog_strategy() -> impl Strategy<Value = (Vec<String>, Vec<String>)> {
    prop::collection::btree_set((0u32..6, 0u32..20, 0u32..4), 1..15).prop_flat_map(|set| {
        let versions: Vec<String> = set.into_iter().map(|(a, b, c)| format!("{a}.{b}.{c}")).collect();
        let n = versions.len();
        (Just(versions), prop::collection::vec(any::<bool>(), n))
            .prop_map(|(v, mask)| {
                let prev = v.iter().zip(&mask).filter(|(_, m)| **m).map(|(x, _)| x.clone()).collect();
                (v, prev)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn rag_picks_stay_inside_the_untried_catalog((catalog, previous) in catalog_strategy(), seed in any::<u64>()) {
        let gw = Gateway::new(Arc::new(common::adversary::Adversary::new(seed)));
        let text = catalog.join(",");
        match gw.pick_version(&numpy(), Some(&text), &previous, PY36, &GenerationConfig::default()) {
            Ok(v) => {
                prop_assert!(catalog.contains(&v), "{v} not in {text}");
                prop_assert!(!previous.contains(&v), "{v} already tried");
            }
            Err(GatewayError::VersionsExhausted { .. }) => prop_assert_eq!(previous.len(), catalog.len()),
            Err(GatewayError::MalformedReply { .. }) => {}
            Err(e) => prop_assert!(false, "unexpected {e}"),
        }
    }
}
