use std::collections::BTreeMap;

use chordnet::graph::{maximal_cliques, Graph};
use chordnet::sysmodel::{
    assemble, random_chain, read_system, spectral_abscissa, undirected_pattern, write_system, NetworkedSystem,
    Subsystem,
};
use nalgebra::{Complex, DMatrix};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn uniform(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
}

fn random_system(rng: &mut ChaCha8Rng, n: usize, density: f64) -> NetworkedSystem {
    let dims: Vec<(usize, usize, usize)> = (0..n)
        .map(|_| (rng.gen_range(1..=4), rng.gen_range(1..=3), rng.gen_range(1..=3)))
        .collect();
    let subs = dims
        .iter()
        .map(|&(a, m, d)| {
            Subsystem::new(
                uniform(rng, a, a),
                uniform(rng, a, m),
                uniform(rng, d, a),
                uniform(rng, d, m),
            )
            .unwrap()
        })
        .collect();
    let mut coupling = BTreeMap::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.gen_bool(density) {
                coupling.insert((i, j), uniform(rng, dims[i].0, dims[j].0));
            }
        }
    }
    NetworkedSystem::new(subs, coupling).unwrap()
}

#[test]
fn assembly_matches_index_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let sys = random_system(&mut rng, 4, 0.5);
        let g = assemble(&sys).unwrap();
        let subs = sys.subsystems();
        // scalar row -> (block, local index)
        let locate = |sizes: &[usize], r: usize| {
            let mut acc = 0;
            for (i, &s) in sizes.iter().enumerate() {
                if r < acc + s {
                    return (i, r - acc);
                }
                acc += s;
            }
            unreachable!()
        };
        let al: Vec<usize> = subs.iter().map(|s| s.state_dim()).collect();
        let ms: Vec<usize> = subs.iter().map(|s| s.disturbance_dim()).collect();
        let ds: Vec<usize> = subs.iter().map(|s| s.output_dim()).collect();
        for r in 0..g.a.nrows() {
            for c in 0..g.a.ncols() {
                let ((i, a), (j, b)) = (locate(&al, r), locate(&al, c));
                let want = if i == j {
                    subs[i].a[(a, b)]
                } else {
                    sys.coupling().get(&(i, j)).map_or(0.0, |m| m[(a, b)])
                };
                assert_eq!(g.a[(r, c)], want);
            }
            for c in 0..g.b.ncols() {
                let ((i, a), (j, b)) = (locate(&al, r), locate(&ms, c));
                assert_eq!(g.b[(r, c)], if i == j { subs[i].b[(a, b)] } else { 0.0 });
            }
        }
        for r in 0..g.c.nrows() {
            for c in 0..g.c.ncols() {
                let ((i, a), (j, b)) = (locate(&ds, r), locate(&al, c));
                assert_eq!(g.c[(r, c)], if i == j { subs[i].c[(a, b)] } else { 0.0 });
            }
            for c in 0..g.d.ncols() {
                let ((i, a), (j, b)) = (locate(&ds, r), locate(&ms, c));
                assert_eq!(g.d[(r, c)], if i == j { subs[i].d[(a, b)] } else { 0.0 });
            }
        }
    }
}

#[test]
fn undirected_pattern_is_symmetric_closure() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let n = rng.gen_range(2..8);
        let sys = random_system(&mut rng, n, 0.3);
        let p = undirected_pattern(&sys);
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let directed = sys.coupling().contains_key(&(i, j)) || sys.coupling().contains_key(&(j, i));
                assert_eq!(p.graph().has_edge(i, j), directed);
            }
        }
    }
}

#[test]
fn chain_pattern_is_a_path_with_pair_cliques() {
    let sys = random_chain(20, 5).unwrap();
    let p = undirected_pattern(&sys);
    assert_eq!(p.graph(), &Graph::path(20));
    let cs = maximal_cliques(p.graph()).unwrap();
    assert_eq!(cs.len(), 19);
    assert!(cs.iter().enumerate().all(|(i, c)| c == &vec![i, i + 1]));
    assert_eq!(cs.largest(), 2);
}

#[test]
fn chain_has_no_spurious_blocks() {
    let sys = random_chain(6, 2).unwrap();
    let g = assemble(&sys).unwrap();
    let p = &g.states;
    for i in 0..6 {
        for j in 0..6 {
            let blk = g.a.view((p.offset(i), p.offset(j)), (p.size(i), p.size(j)));
            let nonzero = blk.iter().any(|&v| v != 0.0);
            assert_eq!(nonzero, i.abs_diff(j) <= 1, "block ({i}, {j})");
        }
    }
}

#[test]
fn chain_is_shifted_to_margin_five() {
    for seed in 0..10 {
        let n = 2 + (seed as usize % 7);
        let g = assemble(&random_chain(n, seed).unwrap()).unwrap();
        let abscissa = spectral_abscissa(&g.a).unwrap();
        assert!(abscissa <= -5.0 + 1e-6, "seed {seed}: {abscissa}");
        assert!(abscissa >= -5.0 - 1e-6, "seed {seed}: {abscissa}");
    }
}

/// Characteristic polynomial coefficients (monic, highest degree first) by
/// the Faddeev-LeVerrier recursion.
fn char_poly(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut coeffs = vec![1.0];
    let mut m = DMatrix::<f64>::zeros(n, n);
    let eye = DMatrix::<f64>::identity(n, n);
    let mut c_prev = 1.0;
    for k in 1..=n {
        m = a * &m + &eye * c_prev;
        let c = -(a * &m).trace() / k as f64;
        coeffs.push(c);
        c_prev = c;
    }
    coeffs
}

/// Polynomial roots by Durand-Kerner iteration.
fn roots(coeffs: &[f64]) -> Vec<Complex<f64>> {
    let n = coeffs.len() - 1;
    let eval = |z: Complex<f64>| coeffs.iter().fold(Complex::new(0.0, 0.0), |acc, &c| acc * z + c);
    let seed = Complex::new(0.4, 0.9);
    let mut z: Vec<Complex<f64>> = (0..n).map(|k| seed.powu(k as u32)).collect();
    for _ in 0..5000 {
        let mut delta = 0.0f64;
        for i in 0..n {
            let mut den = Complex::new(1.0, 0.0);
            for j in 0..n {
                if i != j {
                    den *= z[i] - z[j];
                }
            }
            let step = eval(z[i]) / den;
            z[i] -= step;
            delta = delta.max(step.norm());
        }
        if delta < 1e-15 {
            break;
        }
    }
    z
}

#[test]
fn abscissa_matches_polynomial_roots() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for n in [2usize, 3, 4, 5, 6, 8, 10] {
        let a = uniform(&mut rng, n, n);
        let oracle = roots(&char_poly(&a))
            .iter()
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max);
        let got = spectral_abscissa(&a).unwrap();
        assert!((got - oracle).abs() < 1e-6, "n = {n}: {got} vs {oracle}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn json_round_trip(seed in any::<u64>(), n in 1usize..6, density in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sys = random_system(&mut rng, n, density);
        let mut buf = Vec::new();
        write_system(&sys, &mut buf).unwrap();
        prop_assert_eq!(read_system(buf.as_slice()).unwrap(), sys);
    }

    #[test]
    fn round_trip_preserves_extreme_floats(vals in prop::collection::vec(
        prop_oneof![any::<f64>().prop_filter("finite", |v| v.is_finite()), Just(-0.0), Just(f64::MIN_POSITIVE), Just(5e-324)],
        4,
    )) {
        let s = Subsystem::new(
            DMatrix::from_row_slice(1, 1, &vals[..1]),
            DMatrix::from_row_slice(1, 1, &vals[1..2]),
            DMatrix::from_row_slice(1, 1, &vals[2..3]),
            DMatrix::from_row_slice(1, 1, &vals[3..4]),
        ).unwrap();
        let sys = NetworkedSystem::new(vec![s], BTreeMap::new()).unwrap();
        let mut buf = Vec::new();
        write_system(&sys, &mut buf).unwrap();
        let back = read_system(buf.as_slice()).unwrap();
        for (x, y) in back.subsystems()[0].a.iter().chain(back.subsystems()[0].d.iter())
            .zip(sys.subsystems()[0].a.iter().chain(sys.subsystems()[0].d.iter())) {
            prop_assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}
