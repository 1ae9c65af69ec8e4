//! Attack cost against a straight-line recomputation in wide integers.
//!
//! The oracle works from the natural units (dollars per token, watts,
//! seconds, dollars per kWh) scaled to exact rationals, then converts to
//! 1e-8 USD once at the end.

use kvsim_core::attacker::{cost_of, CostParadigm};
use kvsim_core::{Prices, Usd};
use proptest::prelude::*;

const UNITS: u128 = Usd::UNITS_PER_DOLLAR as u128;

/// Tokens at a price quoted in cents per million tokens.
fn token_units(tokens: u64, cents_per_mtok: u64) -> u128 {
    let num = tokens as u128 * cents_per_mtok as u128 * UNITS;
    let den = 100u128 * 1_000_000;
    assert_eq!(num % den, 0, "token charges are exact in 1e-8 USD");
    num / den
}

fn energy_units(t_s: u64, watts: u64, micro_usd_per_kwh: u64) -> u128 {
    let joules = t_s as u128 * watts as u128;
    // kWh = J / 3.6e6, USD = kWh * micro / 1e6
    joules * micro_usd_per_kwh as u128 * UNITS / (3_600_000u128 * 1_000_000)
}

fn paradigm() -> impl Strategy<Value = CostParadigm> {
    let tok = 0u64..5_000_000;
    prop_oneof![
        (tok.clone(), tok.clone()).prop_map(|(h_in, h_out)| CostParadigm::PlainText { h_in, h_out }),
        proptest::collection::vec((tok.clone(), tok), 0..12)
            .prop_map(|iterations| CostParadigm::BlackBox { iterations }),
        (0u64..1_000_000, 0u64..2_000, 0u64..1_000_000).prop_map(|(t, w, p)| CostParadigm::WhiteBox {
            t_opt_s: t,
            p_avg_w: w,
            p_e_micro_usd_per_kwh: p,
        }),
    ]
}

fn oracle(p: &CostParadigm, prices: &Prices) -> u128 {
    match p {
        CostParadigm::PlainText { h_in, h_out } => {
            token_units(*h_in, prices.input_cents_per_mtok) + token_units(*h_out, prices.output_cents_per_mtok)
        }
        CostParadigm::BlackBox { iterations } => iterations
            .iter()
            .map(|(i, o)| token_units(*i, prices.input_cents_per_mtok) + token_units(*o, prices.output_cents_per_mtok))
            .sum(),
        CostParadigm::WhiteBox {
            t_opt_s,
            p_avg_w,
            p_e_micro_usd_per_kwh,
        } => energy_units(*t_opt_s, *p_avg_w, *p_e_micro_usd_per_kwh),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn cost_matches_oracle(p in paradigm(), cin in 0u64..10_000, cout in 0u64..10_000) {
        let prices = Prices { input_cents_per_mtok: cin, output_cents_per_mtok: cout };
        prop_assert_eq!(u128::from(cost_of(&p, &prices).0), oracle(&p, &prices));
    }
}

#[test]
fn hand_example() {
    // 100 in at $0.15/M and 4000 out at $0.60/M
    let c = cost_of(&CostParadigm::PlainText { h_in: 100, h_out: 4000 }, &Prices::default());
    assert_eq!(c, Usd(241_500));
    assert_eq!(c.to_string(), "$0.00241500");
}
