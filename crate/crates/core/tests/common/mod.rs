#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::PathBuf;

use closeout_core::harness::{load_scenario, Scenario};
use closeout_core::{Currency, Money};
use rand::seq::SliceRandom;
use rand::Rng;

pub fn scenarios_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

pub fn bundled(name: &str) -> Scenario {
    load_scenario(scenarios_dir().join(format!("{name}.toml"))).unwrap()
}

pub fn usd(s: &str) -> Money {
    Money::parse(s, Currency::USD).unwrap()
}

pub fn cents(c: i64) -> Money {
    Money::from_cents(c, Currency::USD)
}

fn dec(c: i64) -> String {
    let sign = if c < 0 { "-" } else { "" };
    format!("{sign}{}.{:02}", c.abs() / 100, c.abs() % 100)
}

/// A random but valid scenario file. Returns the text and the IM in cents.
pub struct Fuzzed {
    pub toml: String,
    pub im_cents: i64,
    pub vm_cents: i64,
}

pub fn fuzz_scenario<R: Rng>(rng: &mut R, allow_override: bool) -> Fuzzed {
    let im_cents = rng.random_range(0..3000);
    let vm_cents = if rng.random_bool(0.3) { rng.random_range(0..2000) } else { 0 };
    let mut t = String::new();
    let _ = writeln!(t, "schema_version = 1\nname = \"fuzz\"\ncurrency = \"USD\"");
    let _ = writeln!(t, "seed = {}", rng.random::<u64>());
    let _ = writeln!(
        t,
        "[agreement]\nparty_a = {{ id = \"A\", name = \"a\", role = \"end_user\" }}\n\
         party_b = {{ id = \"B\", name = \"b\", role = \"dealer\" }}\n\
         vm_held_by_b = \"{}\"\nim_posted_by_a = \"{}\"",
        dec(vm_cents),
        dec(im_cents)
    );
    let mut missed_by_a = false;
    for i in 0..rng.random_range(1..=3) {
        let _ = writeln!(
            t,
            "[[transactions]]\nid = \"T{i}\"\nscripted_mark = \"{}\"",
            dec(rng.random_range(-20000..20000))
        );
        let mut pays = Vec::new();
        let mut dues: Vec<u64> = (1..=6).collect();
        dues.shuffle(rng);
        for due in dues.into_iter().take(rng.random_range(0..=3)) {
            let payer = if rng.random_bool(0.5) { "A" } else { "B" };
            let paid = rng.random_bool(0.5);
            if payer == "A" && !paid {
                missed_by_a = true;
            }
            pays.push(format!(
                "{{ due = {}, payer = \"{payer}\", amount = \"{}\", paid = {paid} }}",
                due,
                dec(rng.random_range(1..1000))
            ));
        }
        let _ = writeln!(t, "payments = [{}]", pays.join(", "));
    }
    if missed_by_a && rng.random_bool(0.5) {
        let _ = writeln!(t, "[event]\nauto_detect = true");
    } else {
        let _ = writeln!(t, "[event]\ncause = \"bankruptcy\"\noccurred_at = {}", rng.random_range(1..=4));
    }
    let residual = if rng.random_bool(0.5) { "always_revert" } else { "revert_if_payable_to_defaulter" };
    let _ = writeln!(
        t,
        "[auction]\ncommit_deadline = 10\nreveal_deadline = 14\nresidual_policy = \"{residual}\""
    );
    if rng.random_bool(0.2) {
        let _ = writeln!(t, "min_mid_quotes = 1");
    }
    if allow_override && rng.random_bool(0.5) {
        let _ = writeln!(t, "excess_cost_policy = \"trade\"");
    }
    let center: i64 = rng.random_range(-15000..15000);
    for id in 1..=rng.random_range(1..=7) {
        let mid = center + rng.random_range(-1500..1500);
        let trade = if rng.random_bool(0.6) {
            format!(", trade = \"{}\"", dec(mid - rng.random_range(0..1500)))
        } else {
            String::new()
        };
        let roll = rng.random_range(0..10);
        let behavior = match roll {
            0 => format!("{{ kind = \"no_reveal\", mid = \"{}\"{trade} }}", dec(mid)),
            1 => format!("{{ kind = \"tampered_reveal\", mid = \"{}\"{trade} }}", dec(mid)),
            2 => format!(
                "{{ kind = \"stochastic\", true_value = \"{}\", mid_noise_sd = \"3.00\", trade_spread = \"2.00\", participation_probability = 0.9 }}",
                dec(center)
            ),
            _ => format!("{{ kind = \"scripted\", mid = \"{}\"{trade} }}", dec(mid)),
        };
        let _ = writeln!(t, "[[bidders]]\nid = \"{id}\"\nbehavior = {behavior}");
    }
    Fuzzed { toml: t, im_cents, vm_cents }
}
