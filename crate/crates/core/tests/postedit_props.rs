use mtpipe::postedit::*;
use proptest::prelude::*;

fn unit() -> impl Strategy<Value = Option<&'static str>> {
    prop_oneof![
        Just(None),
        Just(Some("tỷ")),
        Just(Some("triệu")),
        Just(Some("nghìn")),
        Just(Some("ngàn")),
        Just(Some("nghìn tỷ"))
    ]
}

fn only_value(text: &str) -> Option<Decimal> {
    match extract_vi_entities(text).as_slice() {
        [e] if e.surface == text => e.number(),
        _ => None,
    }
}

/// A zh number written the way a person might, with its value.
fn zh_number() -> impl Strategy<Value = (String, u128)> {
    prop_oneof![
        (0u128..1_000_000_000_000).prop_map(|v| (v.to_string(), v)),
        (1u128..10_000).prop_map(|x| (format!("{x}万"), x * 10_000)),
        (1u128..10_000, 0u128..10_000).prop_map(|(x, y)| {
            let s = if y == 0 { format!("{x}亿") } else { format!("{x}亿{y}万") };
            (s, x * 100_000_000 + y * 10_000)
        }),
    ]
}

fn vi_number() -> impl Strategy<Value = String> {
    prop_oneof![
        (0u128..1_000_000).prop_map(|v| v.to_string()),
        (1u32..1000, unit()).prop_map(|(c, u)| match u {
            Some(u) => format!("{c} {u}"),
            None => c.to_string(),
        }),
    ]
}

/// Diffs outside the edit spans.
fn untouched_outside_edits(before: &str, after: &str, script: &EditScript) -> bool {
    let b: Vec<char> = before.chars().collect();
    let mut rebuilt = String::new();
    let mut at = 0;
    for e in &script.edits {
        rebuilt.extend(&b[at..e.span.0]);
        rebuilt.push_str(&e.after);
        at = e.span.1;
    }
    rebuilt.extend(&b[at..]);
    rebuilt == after
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn vi_render_parses_back(v in 0u128..1_000_000_000_000, u in unit()) {
        let d = Decimal::from_int(v);
        let s = render_vi_number(d, u);
        prop_assert_eq!(only_value(&s), Some(d), "rendered {:?}", s);
    }

    #[test]
    fn vi_render_parses_back_with_decimals(m in 0u128..100_000_000_000_000, u in unit()) {
        let d = Decimal::new(m, 2);
        let s = render_vi_number(d, u);
        prop_assert_eq!(only_value(&s), Some(d), "rendered {:?}", s);
    }

    #[test]
    fn zh_forms_parse((text, v) in zh_number()) {
        let e = extract_zh_entities(&format!("约{text}元"));
        prop_assert_eq!(e.len(), 1);
        prop_assert_eq!(e[0].number(), Some(Decimal::from_int(v)));
    }

    #[test]
    fn dates_render_and_parse(y in 1900u32..2100, m in 1u8..=12, d in 1u8..=31) {
        let date = DateValue::full(y, m, d);
        match render_vi_date(&date) {
            Ok(s) => {
                let e = extract_vi_entities(&s);
                prop_assert_eq!(e.len(), 1);
                prop_assert_eq!(e[0].date(), Some(date));
            }
            Err(_) => prop_assert!(!date.is_valid()),
        }
    }

    #[test]
    fn correction_is_safe_idempotent_and_monotone(
        src in prop::collection::vec(zh_number(), 0..4),
        tgt in prop::collection::vec(vi_number(), 0..4),
    ) {
        let src_text: String = src.iter().map(|(s, _)| s.as_str()).collect::<Vec<_>>().join("和");
        let tgt_text: String = tgt.iter().map(|s| format!("có {s} người")).collect::<Vec<_>>().join(", ");
        let c = correct_translation(&src_text, &tgt_text);
        prop_assert!(untouched_outside_edits(&tgt_text, &c.text, &c.edits));
        for w in c.edits.edits.windows(2) {
            prop_assert!(w[0].span.1 <= w[1].span.0);
        }
        let again = correct_translation(&src_text, &c.text);
        prop_assert_eq!(&again.text, &c.text);
        prop_assert!(again.edits.is_empty());
    }
}
