use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use matchsim_core::knn::{KdTree, LinearScan, NearestItem};
use matchsim_core::latent::{sample_gaussian_points, GaussianPrior, PopulationSource};
use matchsim_core::matching::match_population;
use matchsim_core::{Covariance, EstimatorPolicy, Model, Points, Population, Role, RngStream};

fn gaussian(dim: usize, count: usize, seed: u64) -> Points {
    let prior = GaussianPrior::new(vec![0.0; dim], Covariance::identity(dim).unwrap()).unwrap();
    sample_gaussian_points(&prior, count, &mut RngStream::new(seed, 0, Role::Aux).rng()).unwrap()
}

fn nearest(c: &mut Criterion) {
    let mut g = c.benchmark_group("nearest");
    for (dim, n) in [(1, 2514), (1, 20_000), (5, 2514)] {
        let items = gaussian(dim, n, 1);
        let queries = gaussian(dim, 300, 2);
        let tree = KdTree::new(&items);
        let scan = LinearScan::new(&items);
        let label = format!("d{dim}_n{n}");
        g.bench_with_input(BenchmarkId::new("kdtree", &label), &queries, |b, q| {
            b.iter(|| q.rows().map(|x| tree.nearest(x).0).sum::<usize>())
        });
        g.bench_with_input(BenchmarkId::new("linear", &label), &queries, |b, q| {
            b.iter(|| q.rows().map(|x| scan.nearest(x).0).sum::<usize>())
        });
        g.bench_with_input(BenchmarkId::new("kdtree_build", &label), &items, |b, items| {
            b.iter(|| black_box(KdTree::new(items)))
        });
    }
    g.finish();
}

fn trial(c: &mut Criterion) {
    let mut g = c.benchmark_group("trial");
    g.sample_size(20);
    for dim in [1, 5] {
        let pop = Population::new(gaussian(dim, 300, 3), gaussian(dim, 2514, 4), PopulationSource::Empirical {
            provenance: "bench".into(),
        })
        .unwrap();
        let noise = Covariance::diagonal(&vec![0.5; dim]).unwrap();
        for model in [Model::Organic, Model::Recommender] {
            g.bench_function(format!("{}_d{dim}_m300_n2514", model.label()), |b| {
                b.iter(|| match_population(&pop, model, &noise, &EstimatorPolicy::Mle, RngStream::new(5, 0, Role::ItemNoise)).unwrap())
            });
        }
    }
    g.finish();
}

criterion_group!(benches, nearest, trial);
criterion_main!(benches);
