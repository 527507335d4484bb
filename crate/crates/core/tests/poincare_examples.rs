use grand_poincare_core::calculus::{NeighborRule, ScalarField};
use grand_poincare_core::gls::{ExponentWeight, PsiSpec};
use grand_poincare_core::poincare::{
    estimate_kl, estimate_kp, estimate_kp_table, sharpness_probe, sup_q_factorization, transfer_nu,
    verify_afe, verify_lip, verify_prop21, Inequality, KpSpec, ProbeGrids, TransferSpec,
};
use grand_poincare_core::search::SearchConfig;
use grand_poincare_core::space::{build_from_edges, MetricMeasureSpace};
use grand_poincare_core::Error;

fn path3() -> MetricMeasureSpace {
    build_from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0)], &[1.0 / 3.0; 3]).unwrap()
}

fn two_point() -> MetricMeasureSpace {
    build_from_edges(2, &[(0, 1, 1.0)], &[0.5, 0.5]).unwrap()
}

fn budget(seed: u64) -> SearchConfig {
    SearchConfig {
        restarts: 24,
        iterations: 400,
        seed,
    }
}

/// Mean-zero unit fields on three equally weighted points, by angle.
fn circle_field(theta: f64) -> [f64; 3] {
    let a = [1.0 / 2f64.sqrt(), -1.0 / 2f64.sqrt(), 0.0];
    let b = [1.0 / 6f64.sqrt(), 1.0 / 6f64.sqrt(), -2.0 / 6f64.sqrt()];
    let (c, s) = (theta.cos(), theta.sin());
    [c * a[0] + s * b[0], c * a[1] + s * b[1], c * a[2] + s * b[2]]
}

fn path_gradient(u: &[f64; 3]) -> [f64; 3] {
    let (d01, d12) = ((u[0] - u[1]).abs(), (u[1] - u[2]).abs());
    [d01, d01.max(d12), d12]
}

fn mean_norm(v: &[f64], p: f64) -> f64 {
    (v.iter().map(|x| x.abs().powf(p)).sum::<f64>() / v.len() as f64).powf(1.0 / p)
}

fn brute_force(ratio: impl Fn(&[f64; 3]) -> f64) -> f64 {
    const DIRECTIONS: usize = 100_000;
    (0..DIRECTIONS)
        .map(|k| ratio(&circle_field(std::f64::consts::TAU * k as f64 / DIRECTIONS as f64)))
        .fold(f64::NEG_INFINITY, f64::max)
}

#[test]
fn kp_matches_angular_oracle_on_path3() {
    let space = path3();
    for (p, q) in [(2.0, 2.0), (1.0, 3.0), (3.0, 1.5)] {
        let oracle = brute_force(|u| mean_norm(u, q) / (2.0 * mean_norm(&path_gradient(u), p)));
        let est = estimate_kp(&space, p, q, &budget(1), NeighborRule::Edges).unwrap();
        assert!(
            (est.estimate - oracle).abs() <= 1e-4 * oracle,
            "p={p} q={q}: {} vs {oracle}",
            est.estimate
        );
    }
}

#[test]
fn kl_matches_angular_oracle_on_path3() {
    let (s, p) = (1.5, 4.0);
    let space = path3();
    let oracle = brute_force(|u| {
        let pairs = [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 2.0f64)];
        let num = pairs
            .iter()
            .map(|&(i, j, d)| (u[i] - u[j]).abs() / d.powf(1.0 - s / p))
            .fold(0.0, f64::max);
        num / mean_norm(&path_gradient(u), p)
    });
    let est = estimate_kl(&space, s, p, &budget(2), NeighborRule::Edges).unwrap();
    assert!((est.estimate - oracle).abs() <= 1e-4 * oracle, "{} vs {oracle}", est.estimate);
}

#[test]
fn transfer_nu_spike_equals_kp_pointwise() {
    let t = TransferSpec::with_kp(
        4.0,
        KpSpec::Table(grand_poincare_core::poincare::KpTable {
            p: vec![1.0, 2.0, 4.0],
            q: vec![1.0, 2.0, 4.0, 8.0],
            values: vec![vec![0.5, 0.6, 0.7, 0.8], vec![0.4, 0.5, 0.6, 0.7], vec![0.3, 0.4, 0.5, 0.6]],
            interp: Default::default(),
        }),
    );
    let psi = PsiSpec::spike(2.0).unwrap();
    for q in [1.0, 1.5, 2.0, 3.0] {
        let nu = transfer_nu(&psi, &t, q).unwrap();
        let kp = t.kp.as_ref().unwrap().eval(2.0, q).unwrap();
        assert_eq!(nu, kp, "q={q}");
    }
}

#[test]
fn kp_spec_json_forms() {
    let c: KpSpec = serde_json::from_str(r#"{"kind": "constant", "value": 0.5}"#).unwrap();
    assert_eq!(c, KpSpec::Constant { value: 0.5 });
    let t: KpSpec =
        serde_json::from_str(r#"{"kind": "table", "p": [1, 2], "q": [1, 4], "values": [[1, 2], [0.5, 1]]}"#).unwrap();
    assert!((t.eval(1.5, 2.0).unwrap() - 2f64.powf(0.5 - (1.5f64).log2() * 1.0)).abs() < 1e-12);
    assert!(matches!(t.eval(3.0, 2.0).unwrap_err(), Error::TableCoverage(_)));
}

#[test]
fn enlarging_kp_never_decreases_nu() {
    let psi = PsiSpec::power_blowup(3.0, 0.8).unwrap();
    for q in [1.0, 2.0, 5.0, 40.0] {
        let small = transfer_nu(&psi, &TransferSpec::with_kp(2.5, KpSpec::Constant { value: 0.3 }), q).unwrap();
        let big = transfer_nu(&psi, &TransferSpec::with_kp(2.5, KpSpec::Constant { value: 0.6 }), q).unwrap();
        assert!(big >= small && (big / small - 2.0).abs() < 1e-9);
    }
}

#[test]
fn sharpness_two_point_exact_and_inflated() {
    let space = two_point();
    let psi = PsiSpec::power_blowup(3.0, 0.5).unwrap();
    let grids = ProbeGrids {
        q: vec![1.0, 2.0, 4.0, 8.0],
        tau: vec![1.0],
    };
    let exact = TransferSpec::with_kp(2.0, KpSpec::Constant { value: 0.5 });
    let out = sharpness_probe(&space, &psi, &exact, Inequality::Prop21, &grids, &budget(3), NeighborRule::Edges).unwrap();
    assert!((out.best_ratio - 1.0).abs() < 1e-9);

    let inflated = TransferSpec::with_kp(2.0, KpSpec::Constant { value: 1.0 });
    let out = sharpness_probe(&space, &psi, &inflated, Inequality::Prop21, &grids, &budget(3), NeighborRule::Edges).unwrap();
    assert!(out.best_ratio <= 0.5 + 1e-9);
}

#[test]
fn sharpness_with_estimated_table_stays_below_one() {
    let space = build_from_edges(
        5,
        &[(0, 1, 1.0), (1, 2, 0.5), (2, 3, 2.0), (3, 4, 1.0), (4, 0, 1.5), (1, 3, 1.2)],
        &[0.1, 0.3, 0.2, 0.25, 0.15],
    )
    .unwrap();
    let s = 3.0;
    let p_grid = [1.0, 1.5, 2.0, 2.5];
    let q_grid = [1.0, 2.0, 4.0, 8.0, 16.0];
    let table = estimate_kp_table(&space, &p_grid, &q_grid, &budget(4), NeighborRule::Edges).unwrap();
    let psi = PsiSpec::power_blowup(s, 1.0).unwrap();
    let t = TransferSpec::with_kp(s, KpSpec::Table(table.clone()));
    let grids = ProbeGrids {
        q: vec![1.0, 2.0, 4.0, 8.0],
        tau: vec![],
    };
    let out = sharpness_probe(&space, &psi, &t, Inequality::Prop21, &grids, &budget(5), NeighborRule::Edges).unwrap();
    assert!(out.best_ratio <= 1.0 + 1e-9, "{}", out.best_ratio);

    let (r, v) = sup_q_factorization(&table, s).unwrap();
    let afe = TransferSpec {
        r_factor: Some(r),
        v_factor: Some(v),
        zeta: Some(PsiSpec::polynomial_growth(1.0).unwrap()),
        ..t
    };
    let heavy = space.with_scaled_measure(3.0).unwrap();
    let out = sharpness_probe(&heavy, &psi, &afe, Inequality::Afe, &grids, &budget(6), NeighborRule::Edges).unwrap();
    assert!(out.best_ratio <= 1.0 + 1e-9, "{}", out.best_ratio);
}

#[test]
fn two_point_reports_are_exact() {
    let space = two_point();
    let kl = PsiSpec::constant(1.0, None).unwrap();
    let t = TransferSpec {
        kl: Some(kl),
        ..TransferSpec::with_kp(1.5, KpSpec::Constant { value: 0.5 })
    };
    let psi = PsiSpec::spike(2.5).unwrap();
    for u in [vec![0.0, 1.0], vec![3.0, -2.0], vec![1e-3, 7.0]] {
        let f = ScalarField::new(&space, u).unwrap();
        let r = verify_lip(&space, &f, &psi, &t, &[1.0], NeighborRule::Edges).unwrap();
        assert!((r.ratio - 1.0).abs() < 1e-9);
        let p = verify_prop21(&space, &f, &PsiSpec::power_blowup(4.0, 1.0).unwrap(), &t, &[1.0, 2.0, 2.9], NeighborRule::Edges, false).unwrap();
        assert!((p.ratio - 1.0).abs() < 1e-9, "{p:?}");
    }
    assert!(psi.upper().is_infinite());
}

#[test]
fn afe_requires_factors_and_infinite_zeta() {
    let space = two_point();
    let f = ScalarField::new(&space, vec![0.0, 1.0]).unwrap();
    let psi = PsiSpec::power_blowup(3.0, 1.0).unwrap();
    let mut t = TransferSpec::with_kp(2.0, KpSpec::Constant { value: 0.5 });
    assert!(matches!(
        verify_afe(&space, &f, &psi, &t, &[1.0], NeighborRule::Edges).unwrap_err(),
        Error::InvalidTransfer(_)
    ));
    t.r_factor = Some(PsiSpec::constant(0.5, None).unwrap());
    t.v_factor = Some(PsiSpec::constant(1.0, None).unwrap());
    t.zeta = Some(PsiSpec::power_blowup(5.0, 1.0).unwrap());
    assert!(matches!(
        verify_afe(&space, &f, &psi, &t, &[1.0], NeighborRule::Edges).unwrap_err(),
        Error::InvalidPsi(_)
    ));
    t.zeta = Some(PsiSpec::constant(1.0, None).unwrap());
    let c = ScalarField::constant(&space, 2.0).unwrap();
    let r = verify_afe(&space, &c, &psi, &t, &[1.0, 2.0], NeighborRule::Edges).unwrap();
    assert!(r.degenerate && r.holds);
}

#[test]
fn lip_rejects_taus_beyond_diameter() {
    let space = two_point();
    let f = ScalarField::new(&space, vec![0.0, 1.0]).unwrap();
    let t = TransferSpec::with_kl(1.5, PsiSpec::constant(1.0, None).unwrap());
    let psi = PsiSpec::spike(3.0).unwrap();
    assert!(matches!(
        verify_lip(&space, &f, &psi, &t, &[0.5, 2.0], NeighborRule::Edges).unwrap_err(),
        Error::InvalidGrid(_)
    ));
}
