//! Subcommand implementations. Each returns the paths it wrote; nothing is
//! written unless every output was produced.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use spectral_shrinkage::connectivity::{
    band_average, compare_conditions, jackknife_band_stats, partial_coherence, BandTestResult,
};
use spectral_shrinkage::multitaper::{multitaper_estimator, pure_select_ntapers_with};
use spectral_shrinkage::periodogram::PeriodogramSet;
use spectral_shrinkage::shrinkage::{
    pipeline_with_periodograms, OrderSelection, PipelineOptions, ShrinkageDiagnostics, WeightMode,
};
use spectral_shrinkage::simulation::{monte_carlo_compare, simulate_mixture, CompareOptions, Competitor, SimulationConfig};
use spectral_shrinkage::smoothing::{smoothed_from_periodograms, SpanSelection};
use spectral_shrinkage::timeseries::{detrend, standardize, TrendOrder};
use spectral_shrinkage::var::{bic_curve, fit_var_ls, var_spectrum};
use spectral_shrinkage::{MultiTrialSeries, SpectralEstimate};

use crate::cli::{
    CommonArgs, CompareArgs, ConnectivityArgs, Detrend, EstimateArgs, EstimatorName, InputArgs, PipelineArgs,
    SimulateArgs,
};
use crate::config::{parse_band, Method, RunConfig};
use crate::format::{encode, load_trials};
use crate::output::{fmt_num, write_atomic, OutputSet, Table};

fn base_config(common: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn apply_pipeline_flags(cfg: &mut RunConfig, p: &PipelineArgs) {
    if let Some(w) = p.window {
        cfg.window = w;
    }
    if p.span_min.is_some() {
        cfg.span_min = p.span_min;
    }
    if p.span_max.is_some() {
        cfg.span_max = p.span_max;
    }
    if let Some(k) = p.k_max {
        cfg.k_max = k;
    }
}

fn pipeline_options(cfg: &RunConfig, p: &PipelineArgs, n_samples: usize) -> Result<PipelineOptions> {
    Ok(PipelineOptions {
        order: match p.order {
            Some(k) => OrderSelection::Fixed(k),
            None => OrderSelection::Bic { k_max: cfg.k_max },
        },
        spans: Some(match p.span {
            Some(h) => SpanSelection::Fixed(h),
            None => SpanSelection::Pure(cfg.span_grid(n_samples)?),
        }),
        window: cfg.window,
        weight: WeightMode::Estimated,
    })
}

fn load_input(path: &Path, opts: &InputArgs) -> Result<MultiTrialSeries> {
    let mut data = load_trials(path, opts.csv_sampling_rate.unwrap_or(1.0))
        .with_context(|| format!("reading {}", path.display()))?;
    data = match opts.detrend {
        Detrend::None => data,
        Detrend::Linear => detrend(&data, TrendOrder::Linear)?,
        Detrend::Quadratic => detrend(&data, TrendOrder::Quadratic)?,
    };
    if opts.standardize {
        data = standardize(&data)?;
    }
    Ok(data)
}

fn join<T: ToString>(values: &[T]) -> String {
    values.iter().map(ToString::to_string).collect::<Vec<_>>().join(" ")
}

pub fn simulate(args: &SimulateArgs) -> Result<String> {
    let cfg = base_config(&args.common)?;
    let mut sim = SimulationConfig::paper_defaults();
    sim.seed = cfg.seed;
    if let Some(n) = args.trials {
        sim.n_trials = n;
    }
    if let Some(t) = args.samples {
        sim.n_samples = t;
    }
    if let Some(fs) = args.sampling_rate {
        sim.sampling_rate = fs;
    }
    if let Some(w) = args.ma_weight {
        sim.ma_weight = w;
    }
    if let Some(w) = args.ar_weight {
        sim.ar_weight = w;
    }
    let data = simulate_mixture(&sim).context("simulating")?;
    write_atomic(&args.out, &encode(&data))?;
    Ok(format!(
        "N={} P={} T={} fs={} seed={} -> {}",
        data.n_trials(),
        data.n_channels(),
        data.n_samples(),
        data.sampling_rate(),
        sim.seed,
        args.out.display()
    ))
}

fn spectra_tables(est: &SpectralEstimate, labels: &[String]) -> (Table, Table) {
    let grid = est.grid();
    let mut auto = Table::new(["frequency_hz", "channel", "value"]);
    let mut cross = Table::new(["frequency_hz", "channel_a", "channel_b", "real", "imag"]);
    for (j, m) in est.matrices().iter().enumerate() {
        let hz = fmt_num(grid.hz(j));
        for a in 0..est.dim() {
            auto.push(vec![hz.clone(), labels[a].clone(), fmt_num(m[(a, a)].re)]);
            for b in a + 1..est.dim() {
                cross.push(vec![
                    hz.clone(),
                    labels[a].clone(),
                    labels[b].clone(),
                    fmt_num(m[(a, b)].re),
                    fmt_num(m[(a, b)].im),
                ]);
            }
        }
    }
    (auto, cross)
}

fn weights_table(d: &ShrinkageDiagnostics) -> Table {
    let mut t = Table::new(["frequency_hz", "alpha2", "beta2", "delta2", "w_raw", "w"]);
    for j in 0..d.weight.len() {
        t.push(vec![
            fmt_num(d.grid.hz(j)),
            fmt_num(d.alpha2[j]),
            fmt_num(d.beta2[j]),
            fmt_num(d.delta2[j]),
            fmt_num(d.weight_raw[j]),
            fmt_num(d.weight[j]),
        ]);
    }
    t
}

pub fn estimate(args: &EstimateArgs) -> Result<Vec<PathBuf>> {
    let mut cfg = base_config(&args.common)?;
    apply_pipeline_flags(&mut cfg, &args.pipeline);
    if let Some(m) = args.method {
        cfg.method = m;
    }
    if args.taper_max.is_some() {
        cfg.taper_max = args.taper_max;
    }
    if let Some(dir) = &args.out_dir {
        cfg.out_dir = dir.clone();
    }
    if args.fixed && cfg.method != Method::Shrinkage {
        bail!("--fixed applies only to --method shrinkage");
    }

    let data = load_input(&args.input, &args.input_opts)?;
    let t = data.n_samples();
    let periodograms = PeriodogramSet::compute(&data)?;
    let mut report = String::new();
    let _ = writeln!(report, "method: {}", cfg.method.name());
    let _ = writeln!(
        report,
        "trials: {}\nchannels: {}\nsamples: {}\nsampling_rate_hz: {}",
        data.n_trials(),
        data.n_channels(),
        data.n_samples(),
        data.sampling_rate()
    );
    let mut outputs = OutputSet::new();

    let estimate = match cfg.method {
        Method::Raw => periodograms.mean().clone(),
        Method::Smoothed => {
            let opts = pipeline_options(&cfg, &args.pipeline, t)?;
            let (est, smoothing) = smoothed_from_periodograms(&periodograms, opts.spans.as_ref().expect("set"))
                .context("smoothing")?;
            let _ = writeln!(report, "spans: {}", join(&smoothing.selected_spans));
            est
        }
        Method::Var => {
            let (order, bic) = match args.pipeline.order {
                Some(k) => (k, Vec::new()),
                None => {
                    let ic = bic_curve(&data, cfg.k_max).context("var order selection")?;
                    let best = ic
                        .iter()
                        .enumerate()
                        .fold(0, |b, (i, v)| if *v < ic[b] { i } else { b });
                    (best + 1, ic)
                }
            };
            let model = fit_var_ls(&data, order).context("var fit")?;
            let _ = writeln!(report, "var_order: {order}");
            if !bic.is_empty() {
                let _ = writeln!(report, "bic: {}", join(&bic.iter().map(|v| fmt_num(*v)).collect::<Vec<_>>()));
            }
            if let Some(c) = model.gram_condition() {
                let _ = writeln!(report, "gram_condition: {}", fmt_num(c));
            }
            var_spectrum(&model, &data.grid()).context("var spectrum")?
        }
        Method::Multitaper => {
            let m = match args.tapers {
                Some(m) => m,
                None => {
                    let sel = pure_select_ntapers_with(&data, &periodograms, &cfg.taper_grid(t)?)
                        .context("taper selection")?;
                    let _ = writeln!(report, "tapers_per_trial: {}", join(&sel.per_trial));
                    sel.median
                }
            };
            let _ = writeln!(report, "tapers: {m}");
            multitaper_estimator(&data, m).context("multitaper")?
        }
        Method::Shrinkage => {
            let mut opts = pipeline_options(&cfg, &args.pipeline, t)?;
            if args.fixed {
                opts.weight = WeightMode::Fixed(args.weight.unwrap_or(1.0));
            }
            let out = pipeline_with_periodograms(&data, &periodograms, &opts)?;
            let _ = writeln!(report, "var_order: {}", out.var_model.order());
            if !out.bic.is_empty() {
                let _ = writeln!(report, "bic: {}", join(&out.bic.iter().map(|v| fmt_num(*v)).collect::<Vec<_>>()));
            }
            let _ = writeln!(report, "spans: {}", join(&out.smoothing.selected_spans));
            let _ = writeln!(report, "window: {}", out.diagnostics.window);
            let _ = writeln!(
                report,
                "weight: {}",
                match opts.weight {
                    WeightMode::Estimated => "estimated".to_string(),
                    WeightMode::Fixed(w) => format!("fixed {w}"),
                }
            );
            outputs.add_table("weights.csv", &weights_table(&out.diagnostics))?;
            out.estimate
        }
    };

    let (auto, cross) = spectra_tables(&estimate, data.channel_labels());
    outputs.add_table("spectra.csv", &auto)?;
    outputs.add_table("cross_spectra.csv", &cross)?;
    outputs.add("fit_report.txt", report.into_bytes());
    outputs.commit(&cfg.out_dir)
}

fn condition_name(path: &Path, index: usize) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| format!("condition{}", index + 1))
}

fn tests_table(rows: &[BandTestResult], labels: &[String]) -> Table {
    let mut t = Table::new(["pair", "band", "z_left", "z_right", "se_left", "se_right", "t", "p", "rejected"]);
    for r in rows {
        t.push(vec![
            format!("{}-{}", labels[r.pair.0], labels[r.pair.1]),
            r.band.clone(),
            fmt_num(r.left.mean),
            fmt_num(r.right.mean),
            fmt_num(r.left.se),
            fmt_num(r.right.se),
            fmt_num(r.test.t),
            fmt_num(r.test.p),
            r.rejected.to_string(),
        ]);
    }
    t
}

pub fn connectivity(args: &ConnectivityArgs) -> Result<(Vec<PathBuf>, usize)> {
    let mut cfg = base_config(&args.common)?;
    apply_pipeline_flags(&mut cfg, &args.pipeline);
    if !args.bands.is_empty() {
        cfg.bands = args
            .bands
            .iter()
            .map(|b| parse_band(b).map_err(anyhow::Error::msg))
            .collect::<Result<_>>()?;
    }
    if let Some(q) = args.q {
        ensure!(q > 0.0 && q < 1.0, "--q must lie in (0, 1)");
        cfg.q = q;
    }
    if let Some(dir) = &args.out_dir {
        cfg.out_dir = dir.clone();
    }
    ensure!(args.inputs.len() <= 2, "give one or two --input files, got {}", args.inputs.len());

    let conditions = args
        .inputs
        .iter()
        .map(|p| load_input(p, &args.input_opts))
        .collect::<Result<Vec<_>>>()?;
    if let [a, b] = &conditions[..] {
        ensure!(
            a.n_channels() == b.n_channels(),
            "channel mismatch: {} has {} channels, {} has {}",
            args.inputs[0].display(),
            a.n_channels(),
            args.inputs[1].display(),
            b.n_channels()
        );
    }

    let mut outputs = OutputSet::new();
    let mut pcoh = Table::new(["condition", "band", "channel_a", "channel_b", "partial_coherence"]);
    let mut option_sets = Vec::new();
    for (i, data) in conditions.iter().enumerate() {
        let name = condition_name(&args.inputs[i], i);
        let opts = pipeline_options(&cfg, &args.pipeline, data.n_samples())?;
        let periodograms = PeriodogramSet::compute(data)?;
        let fit = pipeline_with_periodograms(data, &periodograms, &opts).with_context(|| format!("condition {name}"))?;
        let pc = partial_coherence(&fit.estimate)?;
        let labels = data.channel_labels();
        for band in &cfg.bands {
            let avg = band_average(&pc, band)?;
            for a in 0..data.n_channels() {
                for b in 0..data.n_channels() {
                    pcoh.push(vec![
                        name.clone(),
                        band.name.clone(),
                        labels[a].clone(),
                        labels[b].clone(),
                        fmt_num(avg.matrix[(a, b)]),
                    ]);
                }
            }
        }
        option_sets.push(opts);
    }
    outputs.add_table("partial_coherence.csv", &pcoh)?;

    let mut rejections = 0;
    if let [a, b] = &conditions[..] {
        let left = jackknife_band_stats(a, &cfg.bands, &option_sets[0]).context("jackknife, first condition")?;
        let right = jackknife_band_stats(b, &cfg.bands, &option_sets[1]).context("jackknife, second condition")?;
        let rows = compare_conditions(&left, &right, cfg.q)?;
        rejections = rows.iter().filter(|r| r.rejected).count();
        outputs.add_table("tests.csv", &tests_table(&rows, a.channel_labels()))?;
    }
    Ok((outputs.commit(&cfg.out_dir)?, rejections))
}

pub fn compare(args: &CompareArgs) -> Result<(Vec<PathBuf>, String)> {
    let mut cfg = base_config(&args.common)?;
    if let Some(k) = args.k_max {
        cfg.k_max = k;
    }
    if args.span_min.is_some() {
        cfg.span_min = args.span_min;
    }
    if args.span_max.is_some() {
        cfg.span_max = args.span_max;
    }
    if args.taper_max.is_some() {
        cfg.taper_max = args.taper_max;
    }
    if let Some(dir) = &args.out_dir {
        cfg.out_dir = dir.clone();
    }
    let mut sim = SimulationConfig::paper_defaults();
    if let Some(n) = args.trials {
        sim.n_trials = n;
    }
    if let Some(t) = args.samples {
        sim.n_samples = t;
    }
    let windows = if args.windows.is_empty() { vec![cfg.window] } else { args.windows.clone() };
    let mut competitors = Vec::new();
    for e in &args.estimators {
        match e {
            EstimatorName::Truth => competitors.push(Competitor::Truth),
            EstimatorName::Raw => competitors.push(Competitor::RawMean),
            EstimatorName::Var => competitors.push(Competitor::Var),
            EstimatorName::Smoothed => competitors.push(Competitor::Smoothed),
            EstimatorName::Multitaper => competitors.push(Competitor::Multitaper),
            EstimatorName::Shrinkage => competitors.extend(windows.iter().map(|&w| Competitor::Shrinkage { window: w })),
        }
    }
    competitors.dedup();
    let span_grid = (cfg.span_min.is_some() || cfg.span_max.is_some())
        .then(|| cfg.span_grid(sim.n_samples))
        .transpose()?;
    let taper_grid = cfg.taper_max.map(|_| cfg.taper_grid(sim.n_samples)).transpose()?;
    let options = CompareOptions {
        competitors,
        reps: args.reps,
        seed: cfg.seed,
        k_max: cfg.k_max,
        span_grid,
        taper_grid,
    };
    let result = monte_carlo_compare(&sim, &options)?;

    let labels: Vec<String> = result.competitors.iter().map(Competitor::label).collect();
    let curve_table = |columns: &[String], curves: &[&Vec<f64>]| {
        let mut t = Table::new(std::iter::once("frequency_hz".to_string()).chain(columns.iter().cloned()));
        for j in 0..result.grid.len() {
            let mut row = vec![fmt_num(result.grid.hz(j))];
            row.extend(curves.iter().map(|c| fmt_num(c[j])));
            t.push(row);
        }
        t
    };
    let mut outputs = OutputSet::new();
    outputs.add_table(
        "mse_spectral.csv",
        &curve_table(&labels, &result.mse_spectral.iter().collect::<Vec<_>>()),
    )?;
    outputs.add_table("mse_pcoh.csv", &curve_table(&labels, &result.mse_pcoh.iter().collect::<Vec<_>>()))?;
    if !result.mean_weight.is_empty() {
        let names: Vec<String> = result.mean_weight.iter().map(|(c, _)| c.label()).collect();
        let curves: Vec<&Vec<f64>> = result.mean_weight.iter().map(|(_, w)| w).collect();
        outputs.add_table("mean_weight.csv", &curve_table(&names, &curves))?;
    }
    let mut integrated = Table::new(["estimator", "mse_spectral", "mse_pcoh"]);
    let mut summary = String::new();
    for (i, label) in labels.iter().enumerate() {
        let s: f64 = result.mse_spectral[i].iter().sum();
        let p: f64 = result.mse_pcoh[i].iter().sum();
        integrated.push(vec![label.clone(), fmt_num(s), fmt_num(p)]);
        let _ = writeln!(summary, "{label:>16}  spectral {}  pcoh {}", fmt_num(s), fmt_num(p));
    }
    outputs.add_table("integrated_mse.csv", &integrated)?;
    Ok((outputs.commit(&cfg.out_dir)?, summary))
}
