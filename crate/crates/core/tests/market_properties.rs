use depbounds::marginal::{check_convex_order, Lognormal, UnivariateLaw};
use depbounds::market::{
    breeden_litzenberger, clean_quotes, marginal_from_density, marginal_pipeline, read_marginals, synthetic_curve,
    u_quantize, write_marginals, BsModel, Quote, QuoteBook, QuoteCurve, QuoteType,
};
use proptest::prelude::*;

fn model(spot: f64, sigma: f64) -> BsModel {
    BsModel::new(vec![spot], vec![sigma], vec![vec![1.0]], vec![0.5, 1.0]).unwrap()
}

fn strikes(m: &Lognormal, n: usize) -> Vec<f64> {
    let (lo, hi) = (m.quantile(0.001), m.quantile(0.999));
    (0..n).map(|j| lo + (hi - lo) * j as f64 / (n - 1) as f64).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn quantization_keeps_mean_and_order(spot in 20.0f64..200.0, sigma in 0.1f64..0.8, n in 4usize..30) {
        let bs = model(spot, sigma);
        let q1 = u_quantize(&bs.marginal(0, 0), n).unwrap();
        let q2 = u_quantize(&bs.marginal(1, 0), n).unwrap();
        prop_assert!(q1.len() <= n && q2.len() <= n);
        prop_assert!((q1.mean() - spot).abs() < 1e-8 * spot);
        prop_assert!((q2.mean() - spot).abs() < 1e-8 * spot);
        let rep = check_convex_order(&q1, &q2);
        prop_assert!(rep.worst_margin >= -1e-9 * spot, "{rep:?}");
    }

    #[test]
    fn densities_of_model_prices_are_nonnegative(spot in 20.0f64..200.0, sigma in 0.1f64..0.8) {
        let bs = model(spot, sigma);
        let ks = strikes(&bs.marginal(1, 0), 60);
        let curve = synthetic_curve(&bs, QuoteType::Call, 1, &[0], &ks, 0.0).unwrap();
        let dens = breeden_litzenberger(&curve).unwrap();
        prop_assert!(dens.iter().all(|&d| d >= 0.0));
        let m = marginal_from_density(&ks, &dens).unwrap();
        prop_assert!((m.mean() - spot).abs() < 0.01 * spot);
    }

    /// Cleaning leaves a convex, decreasing call curve and keeps clean input intact.
    #[test]
    fn cleaning_restores_no_arbitrage(
        spot in 50.0f64..150.0,
        sigma in 0.15f64..0.5,
        bumps in prop::collection::vec((0usize..40, -2.0f64..2.0), 0..4),
    ) {
        let bs = model(spot, sigma);
        let ks = strikes(&bs.marginal(0, 0), 40);
        let clean = synthetic_curve(&bs, QuoteType::Call, 0, &[0], &ks, 0.01).unwrap();
        prop_assert_eq!(clean_quotes(&clean).unwrap().len(), clean.len());
        let mut quotes = clean.quotes().to_vec();
        for (j, b) in &bumps {
            let q = &mut quotes[*j];
            q.bid = (q.bid + b).max(0.0);
            q.ask = q.bid + 0.01;
        }
        let dirty = QuoteCurve::new(QuoteType::Call, 0, vec![0], quotes).unwrap();
        let out = clean_quotes(&dirty).unwrap();
        prop_assert!(out.len() >= dirty.len() - 2 * bumps.len());
        let (k, c) = (out.strikes(), out.mids());
        for j in 1..k.len() {
            prop_assert!(c[j] <= c[j - 1] + 1e-12);
        }
        for j in 1..k.len() - 1 {
            let s1 = (c[j] - c[j - 1]) / (k[j] - k[j - 1]);
            let s2 = (c[j + 1] - c[j]) / (k[j + 1] - k[j]);
            prop_assert!(s2 >= s1 - 1e-9);
        }
    }
}

#[test]
fn pipeline_from_quote_file() {
    let bs = model(100.0, 0.25);
    let curves: Vec<QuoteCurve> = (0..2)
        .map(|i| synthetic_curve(&bs, QuoteType::Put, i, &[0], &strikes(&bs.marginal(i, 0), 50), 0.02).unwrap())
        .collect();
    let book = QuoteBook {
        assets: vec!["X".into()],
        maturity_days: vec![182.0, 365.0],
        curves,
        dropped_crossed: 0,
    };
    let mut text = Vec::new();
    book.write(&mut text).unwrap();
    let back = QuoteBook::read(text.as_slice(), b',').unwrap();
    assert_eq!(back, book);
    let (ms, rep) = marginal_pipeline(&back.vanilla_curves(0), Some(20)).unwrap();
    assert_eq!(ms.len(), 2);
    for m in &ms {
        assert!(m.len() <= 20);
        assert!((m.mean() - 100.0).abs() < 1.0);
    }
    assert!(rep.convex_order.iter().all(|r| r.passed));
    let mut out = Vec::new();
    write_marginals(&ms, &mut out).unwrap();
    assert_eq!(read_marginals(out.as_slice()).unwrap(), ms);
}

#[test]
fn crossed_quotes_are_dropped() {
    let text = "asset,maturity_days,type,strike,bid,ask\nA,30,C,90,11,11.5\nA,30,C,100,5,4\nA,30,C,110,1,1.2\n";
    let book = QuoteBook::read(text.as_bytes(), b',').unwrap();
    assert_eq!(book.dropped_crossed, 1);
    assert_eq!(book.curves[0].len(), 2);
    let q = Quote {
        strike: 1.0,
        bid: 1.0,
        ask: 2.0,
    };
    assert_eq!(q.mid(), 1.5);
}
