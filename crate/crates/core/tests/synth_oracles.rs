//! Generator-level oracle checks: null plants land on the analytically
//! known values, and planted block structure survives the full
//! panel -> network path.

use mfl_core::behavior;
use mfl_core::herding::{self, HerdingTest};
use mfl_core::network;
use mfl_core::panel::Entity;
use mfl_core::synth::{self, AgentSpec, GenMode, MarketSpec, PlantClass};
use mfl_core::panel::Domicile;

/// Exact herding rate of independent fair-coin members: the summed mass
/// of every count the point-mass rule flags.
fn enumerated_null_rate(n: u64, alpha: f64) -> f64 {
    (0..=n)
        .map(|k| herding::binom_pmf(k, n, 0.5).unwrap())
        .filter(|&p| p <= alpha)
        .sum()
}

/// Zero-coupling, zero-loading agents over 50 seeds: mean trend within
/// 0.05 of zero and mean herding rate within 0.02 of the enumerated
/// null rate.
#[test]
fn null_plants_calibrate() {
    let n_members = 15u64;
    let null_rate = enumerated_null_rate(n_members, 0.05);
    let mut t_sum = 0.0;
    let mut t_count = 0usize;
    let mut fired = 0usize;
    let mut scored = 0usize;
    for seed in 0..50u64 {
        let market = MarketSpec {
            n_stocks: 10,
            n_years: 1,
            days_per_year: 123,
            ..synth::default_market(1000 + seed)
        };
        let agents = synth::null_agents(n_members as usize);
        let panel = synth::generate(&market, &agents).unwrap().into_panel().unwrap();
        for a in &agents {
            if let Ok(t) =
                behavior::trend(&panel, Entity::Member(&a.member_id), 1, 2007, 30)
            {
                t_sum += t;
                t_count += 1;
            }
        }
        let members: Vec<usize> = (0..agents.len()).collect();
        let stocks: Vec<usize> = (0..10).collect();
        for series in herding::herding_panel(
            &panel,
            &members,
            &stocks,
            2007,
            0.05,
            HerdingTest::PmfAtObserved,
            5,
        )
        .unwrap()
        {
            fired += series.days.iter().filter(|d| d.herds).count();
            scored += series.days.len();
        }
    }
    let mean_t = t_sum / t_count as f64;
    assert!(mean_t.abs() < 0.05, "null mean trend {mean_t}");
    let mean_h = fired as f64 / scored as f64;
    assert!(
        (mean_h - null_rate).abs() < 0.02,
        "null herding rate {mean_h} vs enumerated {null_rate}"
    );
}

fn block_agent(id: usize, class: PlantClass, trend: f64) -> AgentSpec {
    AgentSpec {
        member_id: format!("M{:02}", id),
        domicile: if class == PlantClass::Frm {
            Domicile::Foreign
        } else {
            Domicile::Domestic
        },
        class,
        trend_loading: trend,
        directionality_target: 0.5,
        herding_coupling: 0.8,
        volume_scale: 1.0,
        client_mix: match class {
            PlantClass::Frm => [0.0, 0.0, 1.0],
            _ => [0.8, 0.2, 0.0],
        },
    }
}

/// Two planted blocks with opposite return reactions: positive
/// correlations inside each block, negative across. The thresholded
/// network keeps every within-block edge and drops every cross edge,
/// and community detection recovers the blocks exactly.
#[test]
fn two_block_network_recovered() {
    let market = MarketSpec {
        n_stocks: 20,
        n_years: 3,
        days_per_year: 247,
        mood_return_coupling: 0.7,
        ..synth::default_market(77)
    };
    let mut agents: Vec<AgentSpec> = (0..8)
        .map(|i| block_agent(i, PlantClass::Dim, -0.3))
        .collect();
    agents.extend((8..16).map(|i| block_agent(i, PlantClass::Frm, 0.3)));
    let panel = synth::generate(&market, &agents).unwrap().into_panel().unwrap();
    let net = network::build_network(&panel, 1, 0.015, 0.1, 120, 30).unwrap();
    assert_eq!(net.n_nodes(), 16);

    let block = |id: &str| -> usize {
        let idx: usize = id[1..].parse().unwrap();
        usize::from(idx >= 8)
    };
    let mut within = std::collections::HashSet::new();
    for &(a, b, w) in &net.edges {
        let (ba, bb) = (block(&net.nodes[a].member_id), block(&net.nodes[b].member_id));
        assert_eq!(ba, bb, "cross-block edge {a}-{b} with weight {w}");
        within.insert((a.min(b), a.max(b)));
    }
    // every within-block pair is connected
    let mut expected = 0;
    for i in 0..16 {
        for j in (i + 1)..16 {
            if block(&net.nodes[i].member_id) == block(&net.nodes[j].member_id) {
                expected += 1;
            }
        }
    }
    assert_eq!(within.len(), expected, "missing within-block edges");

    let partition = network::detect_communities(&net, 5).unwrap();
    assert_eq!(partition.n_communities, 2);
    let planted: Vec<usize> = net
        .nodes
        .iter()
        .map(|n| block(&n.member_id))
        .collect();
    assert!(network::nmi(&partition.labels, &planted) > 0.999);
}

/// Members never active at the same time get no edge.
#[test]
fn disjoint_periods_have_no_edge() {
    // build two one-year bundles with different members, then splice
    let market = MarketSpec {
        n_stocks: 10,
        n_years: 2,
        days_per_year: 100,
        ..synth::default_market(3)
    };
    let agents: Vec<AgentSpec> = (0..4).map(|i| block_agent(i, PlantClass::Dim, -0.3)).collect();
    let mut bundle = synth::generate(&market, &agents).unwrap();
    // move member M02/M03 trades into year two only, M00/M01 into year one
    bundle.raw.trades.retain(|t| {
        let first_year = t.date.format("%Y").to_string() == "2007";
        match t.member_id.as_str() {
            "M00" | "M01" => first_year,
            _ => !first_year,
        }
    });
    let panel = bundle.into_panel().unwrap();
    let net = network::build_network(&panel, 1, 0.0, 0.0, 1, 10).unwrap();
    for &(a, b, _) in &net.edges {
        let ga = matches!(net.nodes[a].member_id.as_str(), "M00" | "M01");
        let gb = matches!(net.nodes[b].member_id.as_str(), "M00" | "M01");
        assert_eq!(ga, gb, "edge between members with disjoint periods");
    }
}

/// An all-noise market leaves no factor-return structure in any decile.
#[test]
fn all_noise_market_has_no_factor_gradient() {
    let market = MarketSpec {
        n_stocks: 20,
        n_years: 1,
        days_per_year: 247,
        ..synth::default_market(404)
    };
    let agents = synth::null_agents(15);
    let panel = synth::generate(&market, &agents).unwrap().into_panel().unwrap();
    let rows = mfl_core::spectral::decile_spectral_summary(
        &panel,
        2007,
        mfl_core::spectral::FactorMode::Standardized,
        None,
        10,
        60,
    )
    .unwrap();
    assert_eq!(rows.len(), 10);
    for r in rows {
        assert!(
            r.mean_abs_factor_return_corr < 0.15,
            "decile {}: noise factor correlates at {}",
            r.decile,
            r.mean_abs_factor_return_corr
        );
    }
}

/// Herding regressors built from independent coin-flip members add
/// almost nothing on top of the market factor.
#[test]
fn null_herding_regressors_add_nothing() {
    let market = MarketSpec {
        n_stocks: 20,
        n_years: 1,
        days_per_year: 247,
        ..synth::default_market(505)
    };
    let agents = synth::null_agents(18);
    let bundle = synth::generate(&market, &agents).unwrap();
    let market_series: Vec<f64> = bundle.market_index.iter().map(|&(_, r)| r).collect();
    let panel = bundle.into_panel().unwrap();
    let stocks: Vec<usize> = (0..panel.stocks().len()).collect();
    // split the null members into three arbitrary "groups"
    let mut maps = Vec::new();
    for chunk in [(0usize, 6usize), (6, 12), (12, 18)] {
        let members: Vec<usize> = (chunk.0..chunk.1).collect();
        let mut map = mfl_core::regress::HerdingByDay::new();
        for series in herding::herding_panel(
            &panel,
            &members,
            &stocks,
            2007,
            0.05,
            HerdingTest::PmfAtObserved,
            5,
        )
        .unwrap()
        {
            for d in &series.days {
                map.insert((series.stock, d.day), d.signed);
            }
        }
        maps.push(map);
    }
    let rf = vec![0.0; panel.n_days()];
    let assembled = mfl_core::regress::assemble_design(
        &panel, &stocks, &maps[0], &maps[1], &maps[2], &market_series, &rf,
    )
    .unwrap();
    let (r2m, r2f) = mfl_core::regress::r2_delta(&assembled).unwrap();
    assert!(r2f >= r2m);
    assert!(
        r2f - r2m < 0.01,
        "noise herding regressors moved R^2 by {}",
        r2f - r2m
    );
}

/// The regression plant in herding-driven mode is recovered from the
/// panel by recomputing the group herding series.
#[test]
fn herding_driven_returns_embed_plants() {
    let market = MarketSpec {
        n_stocks: 20,
        n_years: 2,
        days_per_year: 150,
        mode: GenMode::HerdingDriven {
            beta_market: 0.9,
            beta_h_dsm: 0.0015,
            beta_h_dim: -0.03,
            beta_h_frm: 0.002,
            noise_sd: 0.004,
        },
        ..synth::default_market(11)
    };
    let agents = synth::default_agents();
    let bundle = synth::generate(&market, &agents).unwrap();
    let manifest_reg = bundle.manifest.regression.clone().unwrap();
    assert_eq!(manifest_reg.beta_market, 0.9);
    let market_series: Vec<f64> = bundle.market_index.iter().map(|&(_, r)| r).collect();
    let panel = bundle.into_panel().unwrap();

    // group members by planted class (ids are ordered DIM, DSM, FRM)
    let class_of = |id: &str| -> PlantClass {
        let n: usize = id[1..].parse().unwrap();
        if n <= 12 {
            PlantClass::Dim
        } else if n <= 26 {
            PlantClass::Dsm
        } else {
            PlantClass::Frm
        }
    };
    let group = |want: PlantClass| -> Vec<usize> {
        (0..panel.members().len())
            .filter(|&m| class_of(&panel.members()[m].id) == want)
            .collect()
    };
    let stocks: Vec<usize> = (0..panel.stocks().len()).collect();
    let mut maps = Vec::new();
    for class in [PlantClass::Dsm, PlantClass::Dim, PlantClass::Frm] {
        let members = group(class);
        let mut map = mfl_core::regress::HerdingByDay::new();
        for slice in panel.years() {
            for series in herding::herding_panel(
                &panel,
                &members,
                &stocks,
                slice.year,
                0.05,
                HerdingTest::PmfAtObserved,
                5,
            )
            .unwrap()
            {
                for d in &series.days {
                    map.insert((series.stock, d.day), d.signed);
                }
            }
        }
        maps.push(map);
    }
    let rf = vec![market.riskfree_annual / 247.0; panel.n_days()];
    let assembled = mfl_core::regress::assemble_design(
        &panel, &stocks, &maps[0], &maps[1], &maps[2], &market_series, &rf,
    )
    .unwrap();
    let result = mfl_core::regress::run_regression(&assembled).unwrap();
    let close = |name: &str, want: f64, tol: f64| {
        let got = result.coef(name).unwrap();
        assert!(
            (got - want).abs() <= tol,
            "{name}: recovered {got}, planted {want}"
        );
    };
    close("market", 0.9, 0.09);
    close("h_dim", -0.03, 0.003);
    close("h_dsm", 0.0015, 0.001);
    close("h_frm", 0.002, 0.001);
    let (r2m, r2f) = mfl_core::regress::r2_delta(&assembled).unwrap();
    assert!(r2f > r2m, "herding must add explanatory power");
}
