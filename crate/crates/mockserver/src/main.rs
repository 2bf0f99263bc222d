//! Standalone mock inference server for manual pipeline runs:
//!
//! ```text
//! promptdiv-mockserver [--port N] [--fail-first-n N] [--latency LO:HI] [--echo]
//! ```

use promptdiv_mockserver::{MockConfig, MockServer};

fn usage() -> ! {
    eprintln!(
        "usage: promptdiv-mockserver [--port N] [--fail-first-n N] [--latency LO:HI] [--echo]"
    );
    std::process::exit(2);
}

fn main() {
    let mut port: u16 = 0;
    let mut config = MockConfig::default();
    let mut args = std::env::args().skip(1);
    while let Some(arg) = args.next() {
        match arg.as_str() {
            "--port" => {
                port = args.next().and_then(|v| v.parse().ok()).unwrap_or_else(|| usage());
            }
            "--fail-first-n" => {
                config.fail_first_n =
                    args.next().and_then(|v| v.parse().ok()).unwrap_or_else(|| usage());
            }
            "--latency" => {
                let spec = args.next().unwrap_or_else(|| usage());
                let (lo, hi) = spec.split_once(':').unwrap_or_else(|| usage());
                match (lo.parse(), hi.parse()) {
                    (Ok(lo), Ok(hi)) if lo <= hi => config.latency_ms = Some((lo, hi)),
                    _ => usage(),
                }
            }
            "--echo" => config.echo_prompt = true,
            "--help" | "-h" => usage(),
            _ => usage(),
        }
    }

    let server = match MockServer::start_on(config, &format!("127.0.0.1:{port}")) {
        Ok(server) => server,
        Err(e) => {
            eprintln!("failed to bind: {e}");
            std::process::exit(1);
        }
    };
    println!("mock inference server listening on {}", server.url());
    println!("routes: POST /v1/completions, /v1/chat/completions, /v1/embeddings; GET /health");
    loop {
        std::thread::sleep(std::time::Duration::from_secs(3600));
    }
}
