use std::path::Path;
use std::process::ExitCode;

use anyhow::{bail, Context};
use coldfaas_core::stats::{self, check_assertion, summarize, summarize_as, ExportFormat};
use coldfaas_core::{BenchReport, SampleSet};

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn read_samples(path: &Path) -> anyhow::Result<SampleSet> {
    let set = SampleSet::read(path)?;
    if let Some(e) = &set.error {
        bail!("{}: run failed: {e}", path.display());
    }
    Ok(set)
}

/// A report JSON document, or a samples file summarized on the fly.
fn load_named(path: &Path) -> anyhow::Result<(String, BenchReport)> {
    let name = stem(path);
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if let Ok(report) = serde_json::from_str::<BenchReport>(&text) {
        return Ok((name, report));
    }
    let set = read_samples(path)?;
    let report = summarize_as(&set, name.clone()).with_context(|| path.display().to_string())?;
    Ok((name, report))
}

pub fn report(
    inputs: &[impl AsRef<Path>],
    format: ExportFormat,
    out: Option<&Path>,
) -> anyhow::Result<ExitCode> {
    let mut reports = Vec::with_capacity(inputs.len());
    for path in inputs {
        let path = path.as_ref();
        let set = read_samples(path)?;
        reports.push(summarize(&set).with_context(|| path.display().to_string())?);
    }
    let text = stats::export(&reports, format);
    match out {
        Some(path) => {
            std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?
        }
        None => print!("{text}"),
    }
    Ok(ExitCode::SUCCESS)
}

pub fn compare(inputs: &[impl AsRef<Path>], assertions: &[String]) -> anyhow::Result<ExitCode> {
    let reports = inputs
        .iter()
        .map(|p| load_named(p.as_ref()))
        .collect::<anyhow::Result<Vec<_>>>()?;
    print!("{}", stats::compare(&reports)?);
    let mut violated = 0;
    for expr in assertions {
        let result = check_assertion(expr, &reports)?;
        println!("{result}");
        if !result.holds {
            violated += 1;
        }
    }
    Ok(if violated == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}
