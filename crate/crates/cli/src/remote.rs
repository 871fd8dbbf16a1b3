use std::io::Write;
use std::path::Path;
use std::process::ExitCode;

use anyhow::Context;
use coldfaas_client::Client;

fn print_json(value: &impl serde::Serialize) -> anyhow::Result<ExitCode> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(ExitCode::SUCCESS)
}

pub async fn deploy(
    gateway: &str,
    spec: &Path,
    image: Option<&Path>,
    overwrite: bool,
) -> anyhow::Result<ExitCode> {
    let spec_json =
        std::fs::read_to_string(spec).with_context(|| format!("reading {}", spec.display()))?;
    let image = image
        .map(|p| std::fs::read(p).with_context(|| format!("reading {}", p.display())))
        .transpose()?;
    let entry = Client::new(gateway)
        .deploy_json(spec_json, image, overwrite)
        .await?;
    print_json(&entry)
}

pub async fn invoke(gateway: &str, name: &str, payload: Vec<u8>) -> anyhow::Result<ExitCode> {
    let resp = Client::new(gateway).invoke(name, payload).await?;
    if let Some(t) = resp.timing {
        eprintln!(
            "status {}  queue {:.3} ms  startup {:.3} ms  execution {:.3} ms  total {:.3} ms{}",
            resp.status,
            t.queue_wait_ns as f64 / 1e6,
            t.startup_ns as f64 / 1e6,
            t.execution_ns as f64 / 1e6,
            t.total_ns as f64 / 1e6,
            if resp.was_warm { "  (warm)" } else { "" }
        );
    } else {
        eprintln!("status {}", resp.status);
    }
    std::io::stdout().write_all(&resp.body)?;
    Ok(if resp.outcome.is_ok() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

pub async fn stats(gateway: &str) -> anyhow::Result<ExitCode> {
    print_json(&Client::new(gateway).stats().await?)
}

pub async fn waste(gateway: &str) -> anyhow::Result<ExitCode> {
    print_json(&Client::new(gateway).waste().await?)
}

pub async fn sizes(gateway: &str) -> anyhow::Result<ExitCode> {
    let sizes = Client::new(gateway).sizes().await?;
    for s in &sizes {
        println!("{:>12}  {} v{}", s.size_bytes, s.name, s.version);
    }
    Ok(ExitCode::SUCCESS)
}
