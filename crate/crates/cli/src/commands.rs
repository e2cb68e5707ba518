use std::path::{Path, PathBuf};

use aerolink::baselines::{fit_lnspl, fit_single_layer, fspl, predict_lnspl, SingleLayerKind};
use aerolink::config::{parse_kv, parse_optional};
use aerolink::dataset::{
    check_disjoint, clean, filter_serving, load_csv, read_canonical_csv, spatial_split, write_canonical_csv,
    CleaningRules, ColumnMap, DataSplit, Dataset, LocationGrid,
};
use aerolink::geo::{GeoPoint, StationConfig};
use aerolink::metrics::{evaluate as score, EvalReport, REPORT_CSV_HEADER};
use aerolink::pipeline::{
    benchmark_throughput, decode_model, encode_model, evaluate_layers, evaluate_split, train, Profile, StackConfig, TripleLayerModel,
    MIN_BENCH_ROWS,
};
use aerolink::synth::SynthScenario;
use serde::Serialize;

use crate::error::CliError;
use crate::manifest::Run;
use crate::station::{format_station, parse_station};
use crate::{
    plots, BaselineArgs, BaselineKind, BenchArgs, Cli, Command, EvaluateArgs, IngestArgs, KeyValue, PredictArgs,
    SplitArgs, SynthArgs, TrainArgs,
};

/// Progress line on stdout; a closed pipe is not an error.
macro_rules! say {
    ($($t:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

pub fn run(cli: Cli, args: Vec<String>) -> Result<(), CliError> {
    let name = match &cli.command {
        Command::Ingest(_) => "ingest",
        Command::Split(_) => "split",
        Command::Train(_) => "train",
        Command::Evaluate(_) => "evaluate",
        Command::Predict(_) => "predict",
        Command::Bench(_) => "bench",
        Command::Baseline(_) => "baseline",
        Command::Synth(_) => "synth",
    };
    let mut run = Run::new(name, args);
    match &cli.command {
        Command::Ingest(a) => ingest(&mut run, a)?,
        Command::Split(a) => split(&mut run, a)?,
        Command::Train(a) => train_cmd(&mut run, a)?,
        Command::Evaluate(a) => evaluate(&mut run, a)?,
        Command::Predict(a) => predict(&mut run, a)?,
        Command::Bench(a) => bench(&mut run, a)?,
        Command::Baseline(a) => baseline(&mut run, a)?,
        Command::Synth(a) => synth(&mut run, a)?,
    }
    let manifest = run.commit(cli.manifest.as_deref())?;
    say!("manifest: {}", manifest.display());
    Ok(())
}

fn with_suffix(p: &Path, suffix: &str) -> PathBuf {
    let mut name = p.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    p.with_file_name(name)
}

fn csv_bytes(ds: &Dataset) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    write_canonical_csv(ds, &mut buf)?;
    Ok(buf)
}

fn read_dataset(run: &mut Run, path: &Path) -> Result<Dataset, CliError> {
    run.read(path)?;
    Ok(read_canonical_csv(path)?)
}

fn read_station(run: &mut Run, path: &Path) -> Result<StationConfig, CliError> {
    let text = run.read_text(path)?;
    Ok(parse_station(&text)?)
}

fn read_model(run: &mut Run, path: &Path) -> Result<TripleLayerModel, CliError> {
    let bytes = run.read(path)?;
    Ok(decode_model(&bytes)?)
}

fn json_bytes<T: Serialize>(v: &T) -> Vec<u8> {
    let mut b = serde_json::to_vec_pretty(v).expect("report serializes");
    b.push(b'\n');
    b
}

fn ingest(run: &mut Run, a: &IngestArgs) -> Result<(), CliError> {
    let map = match &a.column_map {
        Some(p) => ColumnMap::parse(&run.read_text(p)?)?,
        None => ColumnMap::canonical(),
    };
    let outlier_sigma: Option<f64> = parse_optional("outlier_sigma", &a.outlier_sigma)?;
    if outlier_sigma.is_some_and(|s| !(s > 0.0)) {
        return Err(CliError::usage("--outlier-sigma must be positive or `none`"));
    }
    run.setting("outlier_sigma", &a.outlier_sigma);
    if let Some(c) = &a.cell_id {
        run.setting("cell_id", c);
    }
    run.read(&a.input)?;
    let (raw, load) = load_csv(&a.input, &map)?;
    let served = match &a.cell_id {
        Some(c) => filter_serving(&raw, c),
        None => raw,
    };
    let rules = CleaningRules {
        outlier_sigma,
        ..CleaningRules::default()
    };
    let (ds, report) = clean(&served, &rules);

    let mut text = format!("rows_read={}\nrows_rejected={}\n", load.rows_read, load.rejected.len());
    for r in &load.rejected {
        text.push_str(&format!("rejected line {}: {}\n", r.line, r.reason));
    }
    text.push_str(&format!("serving_rows={}\n", served.len()));
    text.push_str(&report.to_string());
    run.stage(&a.out, csv_bytes(&ds)?);
    run.stage(&a.report.clone().unwrap_or_else(|| with_suffix(&a.out, ".clean.txt")), text.into_bytes());
    say!("ingest: {} rows read, {} kept", load.rows_read, ds.len());
    Ok(())
}

fn split(run: &mut Run, a: &SplitArgs) -> Result<(), CliError> {
    let ds = read_dataset(run, &a.input)?;
    let grid = LocationGrid {
        latlon_decimals: a.latlon_decimals,
        alt_step_m: a.alt_step,
    };
    if !(grid.alt_step_m > 0.0) {
        return Err(CliError::usage("--alt-step must be positive"));
    }
    run.seed("split_seed", a.seed);
    run.setting("ratio", a.ratio);
    run.setting("location.latlon_decimals", a.latlon_decimals);
    run.setting("location.alt_step_m", a.alt_step);
    let s = spatial_split(&ds, a.ratio, a.seed, grid)?;
    let (train, test) = s.apply(&ds);
    check_disjoint(&train, &test, &grid)?;
    run.stage(&a.train, csv_bytes(&train)?);
    run.stage(&a.test, csv_bytes(&test)?);
    if let Some(p) = &a.split_out {
        run.stage(p, json_bytes(&s));
    }
    say!(
        "split: train {} samples / {} keys, test {} samples / {} keys",
        train.len(),
        s.train_keys.len(),
        test.len(),
        s.test_keys.len()
    );
    Ok(())
}

fn resolve_config(run: &mut Run, a: &TrainArgs) -> Result<StackConfig, CliError> {
    let mut layers = Vec::new();
    if let Some(p) = &a.config {
        layers.push(parse_kv(&run.read_text(p)?)?);
    }
    if let Some(p) = a.profile {
        layers.push(vec![("profile".to_string(), p.name().to_string())]);
    }
    layers.push(a.overrides.iter().map(|KeyValue(k, v)| (k.clone(), v.clone())).collect());
    for (k, v) in layers.iter().flatten() {
        run.setting(k, v);
    }
    Ok(StackConfig::from_layers(Profile::Accuracy, &layers)?)
}

fn train_cmd(run: &mut Run, a: &TrainArgs) -> Result<(), CliError> {
    let cfg = resolve_config(run, a)?;
    let station = read_station(run, &a.station)?;
    let ds = read_dataset(run, &a.input)?;
    run.config_digest(cfg.fingerprint());
    run.seed("split_seed", cfg.split_seed);
    run.seed("fold_seed", cfg.fold_seed);
    run.seed("ebt.seed", cfg.ebt.seed);
    run.seed("gpr.seed", cfg.gpr.seed);

    let (model, cv) = train(&ds, &station, a.kpi, &cfg)?;
    run.stage(&a.out, encode_model(&model));
    run.stage(&a.cv_report.clone().unwrap_or_else(|| with_suffix(&a.out, ".cv.json")), json_bytes(&cv));
    let cv_rmse = cv.mean.map(|m| m.rmse.to_string()).unwrap_or_else(|| "n/a".into());
    say!(
        "train: {} {} profile, {} samples, cv rmse {cv_rmse}, ebt {} learners min_leaf {}",
        a.kpi,
        cfg.profile,
        ds.len(),
        model.ebt.config.n_learners,
        model.ebt.config.min_leaf
    );
    Ok(())
}

fn report_csv(kpi: &str, rows: &[(String, EvalReport)]) -> String {
    let mut s = format!("{REPORT_CSV_HEADER}\n");
    for (set, r) in rows {
        s.push_str(&r.csv_row(kpi, set));
        s.push('\n');
    }
    s
}

fn evaluate(run: &mut Run, a: &EvaluateArgs) -> Result<(), CliError> {
    if a.bins == 0 {
        return Err(CliError::usage("--bins must be at least 1"));
    }
    let model = read_model(run, &a.model)?;
    let ds = read_dataset(run, &a.input)?;
    if let Some(p) = &a.split {
        let s: DataSplit = serde_json::from_slice(&run.read(p)?)
            .map_err(|e| CliError::runtime(format!("bad split file {}: {e}", p.display())))?;
        evaluate_split(&model, &ds, &s)?;
    }
    let y = ds.targets(model.kpi)?;
    let x = model.dataset_features(&ds)?;
    let pred = model.predict_features(&x)?;
    let layers = evaluate_layers(&model, &ds)?;
    let full = score(&y, &pred.value).map_err(CliError::runtime)?;

    let kpi = model.kpi.name();
    let report = report_csv(
        kpi,
        &[
            (a.label.clone(), full),
            (format!("{}.stw", a.label), layers.stw),
            (format!("{}.stw_ebt", a.label), layers.stw_ebt),
        ],
    );
    let resid: Vec<f64> = y.iter().zip(&pred.value).map(|(t, p)| t - p).collect();
    let mut residuals = String::from("index,actual,predicted,residual,uncertainty\n");
    let mut scatter = String::from("actual,predicted\n");
    for i in 0..y.len() {
        residuals.push_str(&format!("{i},{},{},{},{}\n", y[i], pred.value[i], resid[i], pred.uncertainty[i]));
        scatter.push_str(&format!("{},{}\n", y[i], pred.value[i]));
    }
    let d = &a.out_dir;
    run.stage(&d.join("report.csv"), report.into_bytes());
    run.stage(&d.join("residuals.csv"), residuals.into_bytes());
    run.stage(&d.join("scatter.csv"), scatter.into_bytes());
    run.stage(&d.join("histogram.csv"), plots::histogram_csv(&resid, a.bins).into_bytes());
    run.stage(&d.join("cdf.csv"), plots::ecdf_csv(&resid).into_bytes());
    say!(
        "evaluate: {kpi} n={} rmse={} r2={} (stw r2={}, stw+ebt r2={})",
        full.n, full.rmse, full.r2, layers.stw.r2, layers.stw_ebt.r2
    );
    Ok(())
}

fn read_points(run: &mut Run, path: &Path) -> Result<Vec<GeoPoint>, CliError> {
    let bytes = run.read(path)?;
    let bad = |e: csv::Error| CliError::runtime(format!("{}: {e}", path.display()));
    let mut r = csv::Reader::from_reader(bytes.as_slice());
    let header = r.headers().map_err(bad)?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| CliError::usage(format!("{} lacks a `{name}` column", path.display())))
    };
    let (ila, ilo, ial) = (col("lat_deg")?, col("lon_deg")?, col("alt_asl_m")?);
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(bad)?;
        let num = |j: usize| -> Result<f64, CliError> {
            let s = rec.get(j).unwrap_or("").trim();
            s.parse()
                .map_err(|_| CliError::runtime(format!("{} line {}: bad number `{s}`", path.display(), i + 2)))
        };
        let p = GeoPoint::new(num(ila)?, num(ilo)?, num(ial)?)
            .map_err(|e| CliError::runtime(format!("{} line {}: {e}", path.display(), i + 2)))?;
        out.push(p);
    }
    Ok(out)
}

fn predict(run: &mut Run, a: &PredictArgs) -> Result<(), CliError> {
    let single = a.lat.is_some() || a.lon.is_some();
    let grid = a.grid_lat.is_some() || a.grid_lon.is_some();
    if [a.points.is_some(), single, grid].iter().filter(|&&b| b).count() != 1 {
        return Err(CliError::usage(
            "give exactly one of --points, --lat/--lon/--alt or --grid-lat/--grid-lon/--alt",
        ));
    }
    let model = read_model(run, &a.model)?;
    let station = match &a.station {
        Some(p) => read_station(run, p)?,
        None => model.station,
    };
    let points = if let Some(p) = &a.points {
        read_points(run, p)?
    } else if single {
        let (Some(lat), Some(lon), Some(alt)) = (a.lat, a.lon, a.alt) else {
            return Err(CliError::usage("--lat, --lon and --alt go together"));
        };
        vec![GeoPoint::new(lat, lon, alt)?]
    } else {
        let (Some(la), Some(lo), Some(alt)) = (a.grid_lat, a.grid_lon, a.alt) else {
            return Err(CliError::usage("--grid-lat, --grid-lon and --alt go together"));
        };
        let mut v = Vec::with_capacity(la.count * lo.count);
        for lat in la.values() {
            for lon in lo.values() {
                v.push(GeoPoint::new(lat, lon, alt)?);
            }
        }
        v
    };
    let x = points
        .iter()
        .map(|p| aerolink::geo::featurize(&station, p, model.config.min_distance).map(|f| f.to_array()))
        .collect::<Result<Vec<_>, _>>()?;
    let pred = model.predict_features(&x)?;
    let k = model.kpi.name().to_ascii_lowercase();
    let mut out = format!("lat_deg,lon_deg,alt_asl_m,{k},{k}_std\n");
    for (p, (v, s)) in points.iter().zip(pred.value.iter().zip(&pred.uncertainty)) {
        out.push_str(&format!("{},{},{},{v},{s}\n", p.latitude, p.longitude, p.altitude_asl));
    }
    run.stage(&a.out, out.into_bytes());
    say!("predict: {} points", points.len());
    Ok(())
}

fn bench(run: &mut Run, a: &BenchArgs) -> Result<(), CliError> {
    if a.reps == 0 {
        return Err(CliError::usage("--reps must be at least 1"));
    }
    let model = read_model(run, &a.model)?;
    let ds = read_dataset(run, &a.input)?;
    let x = model.dataset_features(&ds)?;
    let rows = a.rows.unwrap_or(x.len().max(MIN_BENCH_ROWS));
    if rows < MIN_BENCH_ROWS {
        return Err(CliError::usage(format!("--rows must be at least {MIN_BENCH_ROWS}")));
    }
    let tiled: Vec<[f64; 4]> = x.iter().cycle().take(rows).copied().collect();
    run.setting("rows", rows);
    run.setting("reps", a.reps);
    run.setting("warmup", a.warmup);
    let rep = benchmark_throughput(&model, &tiled, a.warmup, a.reps)?;

    #[derive(Serialize)]
    struct BenchOut<'a> {
        kpi: &'a str,
        profile: &'a str,
        n_learners: usize,
        total_nodes: usize,
        #[serde(flatten)]
        report: &'a aerolink::pipeline::ThroughputReport,
    }
    let out = BenchOut {
        kpi: model.kpi.name(),
        profile: model.config.profile.name(),
        n_learners: model.ebt.config.n_learners,
        total_nodes: model.ebt.total_nodes(),
        report: &rep,
    };
    run.stage(&a.out, json_bytes(&out));
    say!("bench: {} rows, {:.1} obs/sec (median of {})", rep.rows, rep.obs_per_sec, rep.timed_reps);
    Ok(())
}

fn baseline(run: &mut Run, a: &BaselineArgs) -> Result<(), CliError> {
    let station = read_station(run, &a.station)?;
    let train = read_dataset(run, &a.train)?;
    let test = read_dataset(run, &a.test)?;
    let kpi = a.kpi;
    let (ytr, yte) = (train.targets(kpi)?, test.targets(kpi)?);
    let xtr = train.features(&station, a.min_distance)?;
    let xte = test.features(&station, a.min_distance)?;
    let d3d = |x: &[[f64; 4]]| x.iter().map(|r| 10f64.powf(r[0])).collect::<Vec<f64>>();

    let (label, ptr, pte) = match a.kind {
        BaselineKind::PlainLinear | BaselineKind::PlainBaggedTrees => {
            let kind = if a.kind == BaselineKind::PlainLinear {
                SingleLayerKind::PlainLinear
            } else {
                SingleLayerKind::PlainBaggedTrees
            };
            let ebt = a.profile.ebt();
            run.seed("ebt.seed", ebt.seed);
            run.setting("profile", a.profile);
            let m = fit_single_layer(&train, &station, kpi, kind, a.min_distance, &ebt)?;
            (kind.name(), m.predict_features(&xtr), m.predict_features(&xte))
        }
        BaselineKind::Lnspl | BaselineKind::Fspl => {
            if kpi != aerolink::dataset::Kpi::Pl {
                return Err(CliError::usage("lnspl and fspl only predict PL"));
            }
            let (dtr, dte) = (d3d(&xtr), d3d(&xte));
            if a.kind == BaselineKind::Lnspl {
                let fit = fit_lnspl(&dtr, &ytr, 1.0)?;
                let p = |d: &[f64]| d.iter().map(|&v| predict_lnspl(&fit, v)).collect::<Result<Vec<_>, _>>();
                say!("baseline: lnspl pl0={} n={} sigma={}", fit.pl0, fit.exponent, fit.shadow_sigma);
                ("lnspl", p(&dtr)?, p(&dte)?)
            } else {
                let f = station.carrier_frequency;
                let p = |d: &[f64]| d.iter().map(|&v| fspl(v, f)).collect::<Result<Vec<_>, _>>();
                ("fspl", p(&dtr)?, p(&dte)?)
            }
        }
    };
    let rtr = score(&ytr, &ptr).map_err(CliError::runtime)?;
    let rte = score(&yte, &pte).map_err(CliError::runtime)?;
    let k = kpi.name();
    run.stage(
        &a.out,
        report_csv(k, &[(format!("{label}.train"), rtr), (format!("{label}.test"), rte)]).into_bytes(),
    );
    if let Some(p) = &a.predictions {
        let mut s = String::from("index,actual,predicted,residual\n");
        for (i, (y, q)) in yte.iter().zip(&pte).enumerate() {
            s.push_str(&format!("{i},{y},{q},{}\n", y - q));
        }
        run.stage(p, s.into_bytes());
    }
    say!("baseline: {label} {k} train r2={} test r2={}", rtr.r2, rte.r2);
    Ok(())
}

fn synth(run: &mut Run, a: &SynthArgs) -> Result<(), CliError> {
    let mut sc = SynthScenario::default();
    if let Some(p) = &a.scenario {
        for (k, v) in parse_kv(&run.read_text(p)?)? {
            sc.set(&k, &v)?;
            run.setting(&k, v);
        }
    }
    for KeyValue(k, v) in &a.overrides {
        sc.set(k, v)?;
        run.setting(k, v);
    }
    sc.validate()?;
    run.seed("seed", sc.seed);
    let ds = sc.generate()?;
    run.stage(&a.out, csv_bytes(&ds)?);
    if let Some(p) = &a.station_out {
        run.stage(p, format_station(&sc.station).into_bytes());
    }
    say!("synth: {} samples", ds.len());
    Ok(())
}
