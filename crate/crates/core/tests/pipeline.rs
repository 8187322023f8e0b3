use std::sync::Arc;

use spde_lab::io::read_field;
use spde_lab::markov::{assemble_covariance, GridPoint};
use spde_lab::simulate::{write_ensemble, NoiseModel};
use spde_lab::{SpaceTimeLattice, SpectralMeasure};

fn model(seed: u64) -> NoiseModel {
    let lat = Arc::new(SpaceTimeLattice::new_1d(8.0, 16, 1.0, 16).unwrap());
    NoiseModel::new(SpectralMeasure::bessel(2.0, 1).unwrap(), lat, seed).unwrap()
}

const PAIRS: [(GridPoint, GridPoint); 6] = [
    (GridPoint { slice: 16, site: 0 }, GridPoint { slice: 16, site: 0 }),
    (GridPoint { slice: 8, site: 3 }, GridPoint { slice: 8, site: 3 }),
    (GridPoint { slice: 8, site: 3 }, GridPoint { slice: 12, site: 3 }),
    (GridPoint { slice: 8, site: 3 }, GridPoint { slice: 8, site: 6 }),
    (GridPoint { slice: 4, site: 1 }, GridPoint { slice: 14, site: 10 }),
    (GridPoint { slice: 16, site: 2 }, GridPoint { slice: 10, site: 15 }),
];

fn product_moments(nm: &NoiseModel, count: usize) -> spde_lab::simulate::EnsembleMoments {
    let n = nm.lattice().n_space_total();
    nm.ensemble_moments(count, PAIRS.len(), |nm, sample, row| {
        let u = nm.solution_field(sample).to_physical();
        for (r, (p, q)) in row.iter_mut().zip(PAIRS) {
            *r = u.values()[p.slice * n + p.site].re * u.values()[q.slice * n + q.site].re;
        }
    })
}

#[test]
fn empirical_covariance_matches_assembled_matrix() {
    let nm = model(11);
    let points: Vec<GridPoint> = PAIRS.iter().flat_map(|(p, q)| [*p, *q]).collect();
    let c = assemble_covariance(nm.measure(), nm.lattice(), &points).unwrap();
    let mc = product_moments(&nm, 6000);
    for i in 0..PAIRS.len() {
        let exact = c.values[(2 * i, 2 * i + 1)];
        let z = (mc.mean[i] - exact) / mc.standard_error(i);
        assert!(z.abs() <= 4.5, "pair {i}: mc {} exact {exact} z {z}", mc.mean[i]);
    }
}

#[test]
fn ensemble_moments_do_not_depend_on_thread_count() {
    let nm = model(3);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| product_moments(&nm, 300))
    };
    let (a, b) = (run(1), run(4));
    assert_eq!(a.mean, b.mean);
    assert_eq!(a.second, b.second);
}

#[test]
fn written_ensemble_reads_back_exactly() {
    let nm = model(5);
    let ens = nm.generate_ensemble(3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_ensemble(dir.path(), &nm, &ens).unwrap();
    assert_eq!(manifest.count, 3);
    assert_eq!(manifest.rng_id, nm.rng_id());
    for (file, u) in manifest.files.iter().zip(&ens.u_samples) {
        let back = read_field(dir.path().join(file)).unwrap();
        assert_eq!(back.values(), u.values());
        assert_eq!(back.lattice().spec(), u.lattice().spec());
    }
    let again = model(5).generate_ensemble(3).unwrap();
    assert_eq!(again.u_samples[2].values(), ens.u_samples[2].values());
}
