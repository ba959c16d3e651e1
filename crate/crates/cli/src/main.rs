use battery_privacy_cli::{error_json, exit_code, run, RunConfig};
use clap::Parser;
use std::process::ExitCode;

fn main() -> ExitCode {
    let cfg = RunConfig::parse();
    if let Some(n) = std::env::var("BP_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // a pool that is already built keeps its size
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match run(&cfg) {
        Ok(outcome) => {
            let code = outcome.exit_code();
            let mut summary = outcome.summary;
            if let Some(artifact) = summary.as_object_mut().and_then(|m| m.remove("artifact")) {
                println!("{}", artifact.as_str().unwrap_or_default().trim_end());
                eprintln!("{summary}");
            } else {
                println!("{summary}");
            }
            ExitCode::from(code as u8)
        }
        Err(e) => {
            eprintln!("{}", error_json(&e));
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
