
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use reprocs::datagen::*;
use reprocs::linalg::{subspace_error, BasisMatrix};
use reprocs::tracker::estimate_initial_subspace;

fn numerical_rank(m: &DMatrix<f64>) -> usize {
    let sv = m.clone().singular_values();
    let top = sv.max();
    sv.iter().filter(|&&v| v > 1e-10 * top).count()
}

/// Rank of `[S_1 … S_t]`, restricted to rows that are ever nonzero.
fn s_rank(seq: &GeneratedSequence, t: usize) -> usize {
    let block = seq.s.columns(0, t);
    let rows: Vec<usize> = (0..seq.n()).filter(|&i| block.row(i).iter().any(|&v| v != 0.0)).collect();
    numerical_rank(&block.select_rows(rows.iter()))
}

fn tiny_config(t_max: usize, gammas: Vec<f64>) -> DataConfig {
    DataConfig {
        t_max,
        t_train: 10,
        model: SubspaceChangeModel { n: 12, r0: gammas.len(), changes: Vec::new() },
        coefficients: CoefficientSchedule { initial: gammas, epochs: Vec::new() },
        support: SupportSchedule { s: 2, delta: 5, low: 2.0, high: 3.0 },
        training_noise: 0.0,
    }
}

#[test]
fn support_window_follows_the_shift_period() {
    let sched = SupportSchedule { s: 20, delta: 10, low: 2.0, high: 3.0 };
    assert!(sched.support_at(200, 200, 2048).is_empty());
    // q = ⌊(t − t_train − 1)/Δ⌋ moves the window on frames t_train + 1 + kΔ
    assert_eq!(sched.support_at(210, 200, 2048), (0..20).collect::<Vec<_>>());
    for t in 211..=220 {
        assert_eq!(sched.support_at(t, 200, 2048), (1..21).collect::<Vec<_>>());
    }
    // past index n the window wraps
    let wrap = SupportSchedule { s: 3, delta: 1, low: 2.0, high: 3.0 };
    assert_eq!(wrap.support_at(10 + 1 + 4, 10, 6), vec![0, 4, 5]);
}

#[test]
fn paper_sequence_matches_reported_structure() {
    for (delta, ranks) in [(10, [29, 39, 49, 259]), (50, [21, 23, 25, 67])] {
        let mut cfg = DataConfig::paper(delta);
        cfg.t_max = 2600;
        let seq = generate(&cfg, 3).unwrap();
        for (t, r) in [300, 400, 500, 2600].into_iter().zip(ranks) {
            assert_eq!(s_rank(&seq, t), r, "delta {delta}, t {t}");
        }
        if delta == 10 {
            assert!(seq.s.columns(0, 200).iter().all(|&v| v == 0.0));
            let nonzero: Vec<f64> = seq.s.iter().filter(|&&v| v != 0.0).map(|v| v.abs()).collect();
            assert!(nonzero.iter().all(|&v| (2.0..=3.0).contains(&v)));
            assert_eq!(nonzero.len(), 20 * 2400);
            let spectrum = seq.covariance_spectrum(250).unwrap();
            let f = spectrum[0] / spectrum.last().unwrap();
            assert!((f - 1.6e5).abs() < 1e-6 * 1.6e5, "f = {f}");
        }
    }
}

#[test]
fn paper_epoch_ranks() {
    let cfg = DataConfig::paper(10);
    let ranks: Vec<usize> = cfg.model.epoch_columns().unwrap().iter().map(Vec::len).collect();
    assert_eq!(ranks, vec![36, 34, 32]);
    let desk: Vec<usize> = DataConfig::desk(10).model.epoch_columns().unwrap().iter().map(Vec::len).collect();
    assert_eq!(desk, vec![10, 8, 6]);
}

#[test]
fn covariance_spectrum_examples() {
    let seq = generate(&tiny_config(20, vec![1.0, 400.0, 2.0, 30.0]), 0).unwrap();
    let spec = seq.covariance_spectrum(5).unwrap();
    let expected = [160000.0 / 3.0, 300.0, 4.0 / 3.0, 1.0 / 3.0];
    for (a, b) in spec.iter().zip(expected) {
        assert!((a - b).abs() <= 1e-12 * b);
    }
    let flat = generate(&tiny_config(20, vec![2.0; 3]), 0).unwrap();
    let spec = flat.covariance_spectrum(5).unwrap();
    assert_eq!(spec[0] / spec[2], 1.0);
}

#[test]
fn training_block_noise_levels() {
    let seq = generate(&DataConfig::desk(10), 4).unwrap();
    let exact = seq.training_block(0.0);
    assert_eq!(exact, seq.l.columns(0, 100).into_owned());
    let noisy = seq.training_block(1e-3);
    let dev = (&noisy - &exact).amax();
    assert!(dev <= 1e-3 && dev > 0.0);
    let p0 = estimate_initial_subspace(&noisy, 10).unwrap().basis;
    let se = subspace_error(&p0, seq.epoch_basis(0)).unwrap();
    assert!(se > 0.0 && se <= 1e-2, "se {se}");
}

#[test]
fn new_directions_respect_the_slow_change_bound() {
    let cfg = DataConfig::desk(10);
    let seq = generate(&cfg, 5).unwrap();
    for (j, change) in cfg.model.changes.iter().enumerate() {
        let ramp = &cfg.coefficients.epochs[j].ramp;
        let rank = seq.epoch_columns(j + 1).len();
        for t in change.time..change.time + ramp.width {
            let a = seq.coefficients_at(t).unwrap();
            assert!(a[rank - 1].abs() <= ramp.gamma_new);
        }
        let new = seq.new_directions(j + 1);
        assert!(subspace_error(seq.epoch_basis(j), &new).unwrap() > 1.0 - 1e-12, "P_new must be orthogonal to P_(j-1)");
        let old = seq.deleted_directions(j + 1);
        assert_eq!(old.rank(), change.deleted.len());
        assert!(subspace_error(seq.epoch_basis(j + 1), &old).unwrap() > 1.0 - 1e-12);
    }
}

#[test]
fn empirical_covariance_converges() {
    let gammas = vec![5.0, 2.0, 1.0];
    let seq = generate(&tiny_config(100_010, gammas.clone()), 6).unwrap();
    let mut cov = DMatrix::<f64>::zeros(3, 3);
    for t in 11..=100_010 {
        let a = seq.coefficients_at(t).unwrap();
        cov += a * a.transpose();
    }
    cov /= 100_000.0;
    for i in 0..3 {
        let li = gammas[i] * gammas[i] / 3.0;
        assert!((cov[(i, i)] - li).abs() <= 0.05 * li);
        for j in 0..3 {
            if i != j {
                let lj = gammas[j] * gammas[j] / 3.0;
                assert!(cov[(i, j)].abs() <= 0.05 * (li * lj).sqrt());
            }
        }
    }
}

#[test]
fn binary_round_trip() {
    let mut cfg = DataConfig::desk(10);
    cfg.t_max = 400;
    cfg.model.changes.truncate(1);
    cfg.coefficients.epochs.truncate(1);
    let seq = generate(&cfg, 7).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("seq.bin");
    seq.write_binary(&path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[0..4], b"RPCS");
    assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
    assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 256);
    assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 400);
    assert_eq!(bytes.len(), 16 + 3 * 256 * 400 * 8);
    let back = read_binary(&path).unwrap();
    assert_eq!(back.m, seq.m);
    assert_eq!(back.s, seq.s);
    assert_eq!(back.l, seq.l);

    std::fs::write(&path, b"JUNKJUNKJUNKJUNK").unwrap();
    assert!(read_binary(&path).is_err());
}

#[test]
fn inconsistent_schedules_are_rejected() {
    let mut cfg = DataConfig::desk(10);
    cfg.model.changes[0].deleted = vec![2, 2, 9];
    assert!(matches!(generate(&cfg, 0), Err(DataError::Config(_))));
    let mut cfg = DataConfig::desk(10);
    cfg.model.changes[1].deleted = vec![2, 4, 8];
    assert!(matches!(generate(&cfg, 0), Err(DataError::Config(_))));
    let mut cfg = DataConfig::desk(10);
    cfg.coefficients.initial.pop();
    assert!(matches!(generate(&cfg, 0), Err(DataError::Config(_))));
    let mut cfg = DataConfig::desk(10);
    cfg.support.delta = 0;
    assert!(matches!(generate(&cfg, 0), Err(DataError::Config(_))));
}

#[test]
fn roles_use_independent_streams() {
    let base = DataConfig::desk(10);
    let mut other = base.clone();
    other.support.delta = 50;
    let a = generate(&base, 9).unwrap();
    let b = generate(&other, 9).unwrap();
    assert_eq!(a.l, b.l);
    assert_ne!(a.s, b.s);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn generated_sequences_satisfy_the_model(seed in any::<u64>(), delta in 1usize..60) {
        let mut cfg = DataConfig::desk(delta);
        cfg.t_max = 1500;
        let seq = generate(&cfg, seed).unwrap();
        prop_assert_eq!(&seq.m, &(&seq.s + &seq.l));
        let again = generate(&cfg, seed).unwrap();
        prop_assert_eq!(&seq.m, &again.m);

        for t in (1..=cfg.t_max).step_by(7) {
            let col: DVector<f64> = seq.l.column(t - 1).into_owned();
            let basis: &BasisMatrix = seq.basis_at(t).unwrap();
            prop_assert!(basis.project_out(&col).norm() <= 1e-9 * col.norm().max(1.0));
            let a = seq.coefficients_at(t).unwrap();
            let bounds = seq.bounds_at(t).unwrap();
            prop_assert!(a.iter().zip(&bounds).all(|(x, g)| x.abs() <= *g));
            let support = seq.support_at(t).unwrap();
            let nz: Vec<usize> = (0..seq.n()).filter(|&i| seq.s[(i, t - 1)] != 0.0).collect();
            prop_assert_eq!(&nz, &support);
            if t > cfg.t_train {
                prop_assert_eq!(support.len(), cfg.support.s);
                prop_assert!(support.iter().all(|&i| seq.s[(i, t - 1)].abs() >= cfg.support.low));
            } else {
                prop_assert!(support.is_empty());
            }
        }
        for j in 0..=cfg.model.changes.len() {
            prop_assert!(seq.epoch_basis(j).orthonormality_error() <= 1e-10);
        }
    }
}
