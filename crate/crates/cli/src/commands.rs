use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use stablepp::characterization::{self, SubCheck, TestReport};
use stablepp::extraction;
use stablepp::functionals;
use stablepp::sampler::{self, Carrier};
use stablepp::transform::{self, ShiftPointMeasure};
use stablepp::{PointMeasure, SeedSpec};

use crate::config::{Direction, Loaded};
use crate::manifest::Manifest;
use crate::{Common, Outcome, TestArgs, TestKind};

const DEFAULT_REPS: u64 = 10_000;

fn reps(common: &Common, default: u64, manifest: &mut Manifest) -> u64 {
    let n = common.reps.unwrap_or(default);
    manifest.reps = Some(n);
    n
}

fn json_bytes<T: serde::Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}

fn lines(items: impl IntoIterator<Item = String>) -> Vec<u8> {
    let mut out = String::new();
    for l in items {
        out.push_str(&l);
        out.push('\n');
    }
    out.into_bytes()
}

pub fn sample(common: &Common, loaded: &Loaded, manifest: &mut Manifest) -> Result<Outcome> {
    let n = reps(common, 1, manifest);
    let spec = &loaded.config.spec;
    let draws: Vec<(String, sampler::Truncation)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (r, t) = sampler::sample_any(spec, SeedSpec::new(common.seed, i))?;
            Ok((r.to_json_line(), t))
        })
        .collect::<stablepp::Result<_>>()?;
    let (text, truncations): (Vec<String>, Vec<_>) = draws.into_iter().unzip();
    manifest.truncations = Some(truncations);
    Ok(Outcome {
        outputs: vec![(common.out.clone(), lines(text))],
        passed: true,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

/// CSV of `(f_id, y, value, std_error, predicted, band_lo, band_hi)`; the band is
/// the estimate +- 3 standard errors, `predicted` is empty without a closed form.
pub fn estimate(common: &Common, loaded: &Loaded, manifest: &mut Manifest) -> Result<Outcome> {
    let n = reps(common, DEFAULT_REPS, manifest);
    let cfg = &loaded.config;
    let spec = &cfg.spec;
    let ys = cfg.y_grid_or(&[1.0, 2.0, 4.0])?;
    let mut rows: Vec<(String, f64, functionals::EstimateWithError, Option<f64>)> = Vec::new();
    match spec.carrier() {
        Carrier::Scale => {
            let named = cfg.scale_battery()?;
            let battery: Vec<_> = named
                .iter()
                .flat_map(|(_, f)| ys.iter().map(move |&y| (f.clone(), y)))
                .collect();
            let est = functionals::estimate_scaled_laplace_battery(spec, &battery, n, common.seed)?;
            for (k, ((id, f), y)) in named.iter().flat_map(|p| ys.iter().map(move |y| (p, *y))).enumerate() {
                rows.push((id.clone(), y, est[k], functionals::predict_for_spec(spec, f, y)?));
            }
        }
        Carrier::Shift => {
            let named = cfg.shift_battery()?;
            let battery: Vec<_> = named
                .iter()
                .flat_map(|(_, f)| ys.iter().map(move |&y| (f.clone(), y)))
                .collect();
            let est = functionals::estimate_shift_laplace_battery(spec, &battery, n, common.seed)?;
            for (k, ((id, f), y)) in named.iter().flat_map(|p| ys.iter().map(move |y| (p, *y))).enumerate() {
                rows.push((id.clone(), y, est[k], functionals::predict_shift_for_spec(spec, f, y)?));
            }
        }
    }
    let mut csv = String::from("f_id,y,value,std_error,predicted,band_lo,band_hi\n");
    for (id, y, e, p) in rows {
        writeln!(
            csv,
            "{id},{y},{:e},{:e},{},{:e},{:e}",
            e.value,
            e.std_error,
            fmt_opt(p),
            e.value - 3.0 * e.std_error,
            e.value + 3.0 * e.std_error
        )?;
    }
    Ok(Outcome {
        outputs: vec![(common.out.clone(), csv.into_bytes())],
        passed: true,
    })
}

pub fn test(kind: &TestKind, loaded: &Loaded, manifest: &mut Manifest) -> Result<Outcome> {
    let (TestKind::Stability(args) | TestKind::Maxlaw(args) | TestKind::Support(args) | TestKind::Tail(args)) = kind;
    let TestArgs { common, level } = args;
    let n = reps(common, DEFAULT_REPS, manifest);
    let cfg = &loaded.config;
    let spec = &cfg.spec;
    let report = match kind {
        TestKind::Stability(_) => {
            let st = cfg.stability.as_ref().context("config has no stability section")?;
            let ys = cfg.y_grid_or(&[1.0])?;
            let battery: Vec<_> = cfg
                .scale_battery()?
                .into_iter()
                .flat_map(|(_, f)| ys.iter().map(move |&y| (f.clone(), y)))
                .collect();
            characterization::stability_test_scaled_rhs(spec, st.b1, st.b2, st.rhs_factor, &battery, n, *level, common.seed)?
        }
        TestKind::Maxlaw(_) => characterization::maxmod_law_test(spec, n, *level, common.seed)?,
        TestKind::Support(_) => {
            let ys = cfg.y_grid_or(&[1.0, 2.0, 4.0, 8.0])?;
            characterization::scale_unique_support_test(spec, &cfg.scale_battery()?, &ys, n, common.seed, None)?
        }
        TestKind::Tail(_) => tail_report(loaded, n, common.seed)?,
    };
    if !report.passed {
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        eprintln!("rejected: {}", failed.join(", "));
    }
    Ok(Outcome {
        outputs: vec![(common.out.clone(), json_bytes(&report)?)],
        passed: report.passed,
    })
}

fn tail_report(loaded: &Loaded, n: u64, seed: u64) -> Result<TestReport> {
    let spec = &loaded.config.spec;
    let alpha = match spec.carrier() {
        Carrier::Scale => spec.index().context("tail test needs a single-family spec")?,
        Carrier::Shift => bail!("tail test runs on scale families"),
    };
    let k = loaded
        .config
        .tail
        .as_ref()
        .and_then(|t| t.k)
        .unwrap_or_else(|| characterization::default_hill_k(n as usize));
    let est = characterization::tail_index_for_spec(spec, n, k, seed)?;
    let diff = (est.alpha_hat - alpha).abs();
    let check = SubCheck {
        name: "alpha_in_ci".into(),
        null_hypothesis: "maxmod tail index equals the spec index".into(),
        statistic: diff,
        p_value: None,
        threshold: est.ci_half_width,
        passed: diff <= est.ci_half_width,
    };
    Ok(TestReport::from_checks(
        "tail",
        n,
        seed,
        serde_json::json!({ "spec": spec, "alpha": alpha, "estimate": est }),
        vec![check],
    ))
}

pub fn extract(common: &Common, loaded: &Loaded, manifest: &mut Manifest) -> Result<Outcome> {
    let cfg = &loaded.config;
    let ex = cfg.extraction.as_ref().context("config has no extraction section")?;
    manifest.reps = Some(ex.n_accepted as u64);
    let report = extraction::extract_decoration(&cfg.spec, ex, common.seed)?;
    let rebuild = match &cfg.rebuild {
        Some(rb) => Some(extraction::rebuild_process(
            &report,
            report.alpha,
            report.c_max_hat,
            rb.reps,
            SeedSpec::new(common.seed, 0).derive(40).master_seed,
        )?),
        None => None,
    };
    let passed = rebuild.as_ref().is_none_or(|r| r.passed);
    let doc = serde_json::json!({ "extraction": report, "rebuild": rebuild });
    Ok(Outcome {
        outputs: vec![(common.out.clone(), json_bytes(&doc)?)],
        passed,
    })
}

pub fn transform(common: &Common, loaded: &Loaded, _manifest: &mut Manifest) -> Result<Outcome> {
    let tc = loaded.config.transform.as_ref().context("config has no transform section")?;
    let input: PathBuf = if tc.input.is_absolute() {
        tc.input.clone()
    } else {
        loaded.dir.join(&tc.input)
    };
    let text = std::fs::read_to_string(&input).with_context(|| format!("reading {}", input.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let ctx = || format!("{} line {}", input.display(), i + 1);
        let mapped = match tc.direction {
            Direction::Exp => {
                let t: ShiftPointMeasure = serde_json::from_str(line).with_context(ctx)?;
                transform::exp_transform(&t).with_context(ctx)?.to_json_line()
            }
            Direction::Log => {
                let m: PointMeasure = serde_json::from_str(line).with_context(ctx)?;
                transform::log_transform(&m).with_context(ctx)?.to_json_line()
            }
        };
        out.push(mapped);
    }
    Ok(Outcome {
        outputs: vec![(common.out.clone(), lines(out))],
        passed: true,
    })
}
