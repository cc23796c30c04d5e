use criterion::{criterion_group, criterion_main, BatchSize, Criterion, Throughput};
use idgap_bench::{corpus, splitmix};
use idgap_core::census::{build_observed, census, CensusRange};
use idgap_core::codec::MAX_VALUE;
use idgap_core::community::ols_fit;
use idgap_core::references::{audit_references, audit_references_par};
use idgap_core::synth::{generate, CorpusSink};
use idgap_core::temporal::{burstiness, BurstOperand};
use idgap_core::{decode_base36, encode_base36, IdIntervalSet, RecordKind};
use std::hint::black_box;

fn codec(c: &mut Criterion) {
    let values: Vec<u64> = splitmix(7).take(10_000).map(|v| v % MAX_VALUE).collect();
    let encoded: Vec<String> = values.iter().map(|&v| encode_base36(v).unwrap()).collect();
    let mut g = c.benchmark_group("codec");
    g.throughput(Throughput::Elements(values.len() as u64));
    g.bench_function("encode", |b| b.iter(|| values.iter().map(|&v| encode_base36(black_box(v)).unwrap().len()).sum::<usize>()));
    g.bench_function("decode", |b| b.iter(|| encoded.iter().map(|s| decode_base36(black_box(s)).unwrap()).fold(0, u64::wrapping_add)));
    g.finish();
}

fn intervals(c: &mut Criterion) {
    let (sink, _) = corpus(1_000_000);
    let ids: Vec<u64> = sink.comments.iter().map(|r| r.id.value).collect();
    let mut shuffled = ids.clone();
    shuffled.sort_by_key(|v| v.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let mut g = c.benchmark_group("intervals");
    g.throughput(Throughput::Elements(ids.len() as u64));
    g.bench_function("build_sorted_1e6", |b| b.iter(|| build_observed(ids.iter().copied()).set.runs().len()));
    g.bench_function("build_shuffled_1e6", |b| b.iter(|| build_observed(shuffled.iter().copied()).set.runs().len()));
    let set: IdIntervalSet = ids.iter().copied().collect();
    let probes: Vec<u64> = splitmix(3).take(10_000).map(|v| 1_000 + v % 1_000_000).collect();
    g.throughput(Throughput::Elements(probes.len() as u64));
    g.bench_function("rank_1e4", |b| b.iter(|| probes.iter().map(|&p| set.rank(p)).sum::<u64>()));
    g.finish();
}

fn analyses(c: &mut Criterion) {
    let (sink, m) = corpus(1_000_000);
    let obs_c = build_observed(sink.comments.iter().map(|r| r.id.value));
    let obs_s = build_observed(sink.submissions.iter().map(|r| r.id.value));
    let mut g = c.benchmark_group("analyses");
    g.sample_size(10);
    g.throughput(Throughput::Elements(sink.comments.len() as u64));
    g.bench_function("census_1e6", |b| b.iter(|| census(RecordKind::Comment, &obs_c, CensusRange::Auto, &[]).unwrap().missing_total));
    g.bench_function("dangling_1e6", |b| b.iter(|| audit_references(&sink.comments, &obs_c.set, &obs_s.set).referencing_edges));
    g.bench_function("dangling_par_1e6", |b| b.iter(|| audit_references_par(&sink.comments, &obs_c.set, &obs_s.set).referencing_edges));
    let runs = m.comments.missing.runs().to_vec();
    g.throughput(Throughput::Elements(runs.len() as u64));
    g.bench_function("burstiness_runs", |b| b.iter(|| burstiness(&runs, BurstOperand::RunStart).unwrap().b));
    g.finish();
}

fn regression(c: &mut Criterion) {
    let mut rng = splitmix(11).map(|v| (v >> 11) as f64 / (1u64 << 53) as f64);
    let n = 5_000;
    let x1: Vec<f64> = (0..n).map(|_| rng.next().unwrap() * 6.0).collect();
    let x2: Vec<f64> = (0..n).map(|_| rng.next().unwrap() * 200.0 + 300.0).collect();
    let y: Vec<f64> = (0..n).map(|i| 0.2 * x1[i] - 0.004 * x2[i] + rng.next().unwrap()).collect();
    c.bench_function("ols_fit_5000x2", |b| b.iter(|| ols_fit(&y, &[("a", &x1), ("b", &x2)]).unwrap().r_squared));
}

struct Count(u64);

impl CorpusSink for Count {
    fn submission(&mut self, _: &idgap_core::SubmissionRecord) -> std::io::Result<()> {
        self.0 += 1;
        Ok(())
    }

    fn comment(&mut self, _: &idgap_core::CommentRecord) -> std::io::Result<()> {
        self.0 += 1;
        Ok(())
    }
}

fn synth(c: &mut Criterion) {
    let (_, m) = corpus(10_000);
    let spec = {
        let mut s = m.spec.clone();
        s.comments.hi = s.comments.lo + 1_000_000 - 1;
        s
    };
    let mut g = c.benchmark_group("synth");
    g.sample_size(10);
    g.throughput(Throughput::Elements(1_000_000));
    g.bench_function("generate_1e6", |b| {
        b.iter_batched(|| Count(0), |mut sink| generate(&spec, &mut sink).unwrap().comments.observed, BatchSize::SmallInput)
    });
    g.finish();
}

criterion_group!(benches, codec, intervals, analyses, regression, synth);
criterion_main!(benches);
