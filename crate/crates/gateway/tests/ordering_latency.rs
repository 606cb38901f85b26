mod support;

use std::time::Duration;

use support::load::run_load;

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn ten_dyads_keep_order_within_latency_budget() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = support::config();
    config.data_dir = Some(dir.path().to_path_buf());
    let server = support::server(config).await;
    let report = run_load(&server, 10, 50, Duration::from_millis(5)).await;
    println!("{report:?}");
    assert!(report.order_violations.is_empty(), "{:?}", report.order_violations);
    assert_eq!(report.events, 10 * 100);
    assert_eq!(report.samples, 10 * 100);
    assert!(report.p95_ms <= 200.0, "p95 {} ms", report.p95_ms);
    server.stop().await;
}
