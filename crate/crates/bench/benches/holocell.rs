use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use holocell::protocol::{BidRequest, EpochTime, ProtocolMsg, ServiceDef};
use holocell::scheduling::compute_bid;
use holocell_bench::{p10_text, run, striped_agenda};
use std::hint::black_box;

fn bidding(c: &mut Criterion) {
    let mut g = c.benchmark_group("compute_bid");
    let def = ServiceDef::placement("S", 35, 0);
    for n in [8u64, 64, 512] {
        let agenda = striped_agenda(n);
        g.bench_with_input(BenchmarkId::from_parameter(n), &agenda, |b, a| {
            b.iter(|| compute_bid(black_box(a), &def, EpochTime(0), false, 120))
        });
    }
    g.finish();
}

fn protocol(c: &mut Criterion) {
    let msg = ProtocolMsg::GetBidForOp(BidRequest {
        id: "15".into(),
        op_id: "Op_30".into(),
        min_start: EpochTime(1308574904),
        sender: "225.0.0.1:2101".parse().unwrap(),
    });
    let text = msg.encode();
    c.bench_function("encode GetBidForOp", |b| {
        b.iter(|| black_box(&msg).encode())
    });
    c.bench_function("decode GetBidForOp", |b| {
        b.iter(|| ProtocolMsg::decode(black_box(&text)).unwrap())
    });
}

fn scenario(c: &mut Criterion) {
    let text = p10_text();
    c.bench_function("P_10 headless run", |b| b.iter(|| run(black_box(&text))));
}

criterion_group!(benches, bidding, protocol, scenario);
criterion_main!(benches);
