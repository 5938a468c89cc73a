use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use assistkit::edit_codec::{apply_rendered, diff, render_edit, EditFormat};
use assistkit_bench::doc_pair;

fn bench_diff(c: &mut Criterion) {
    let mut group = c.benchmark_group("diff");
    for lines in [50, 200, 1000] {
        let (old, new) = doc_pair(1, lines, lines / 20 + 1);
        group.bench_with_input(
            BenchmarkId::from_parameter(lines),
            &(old, new),
            |b, (o, n)| b.iter(|| diff(black_box(o), black_box(n))),
        );
    }
    group.finish();
}

fn bench_formats(c: &mut Criterion) {
    let (old, new) = doc_pair(2, 200, 8);
    let script = diff(&old, &new);
    let mut render = c.benchmark_group("render");
    for format in EditFormat::ALL {
        render.bench_function(format.as_str(), |b| {
            b.iter(|| render_edit(black_box(&script), &old, &new, format).unwrap())
        });
    }
    render.finish();
    let mut apply = c.benchmark_group("apply");
    for format in EditFormat::ALL {
        let rendered = render_edit(&script, &old, &new, format).unwrap();
        apply.bench_function(format.as_str(), |b| {
            b.iter(|| apply_rendered(black_box(&rendered), &old).unwrap())
        });
    }
    apply.finish();
}

criterion_group!(benches, bench_diff, bench_formats);
criterion_main!(benches);
