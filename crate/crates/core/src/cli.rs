//! The `msb` command line.
//!
//! Exit codes: 0 on success, 1 on data or validation errors, 2 on usage
//! errors. Machine-readable output goes to stdout, diagnostics to stderr as
//! `file:line: message`.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::detect::AttrValue;
use crate::fat::{FeatureActionTable, TableParser};
use crate::importance::MixPolicy;
use crate::render::{render_all, snapshot_name};
use crate::story::{self, CompileError, CompileSettings, StoryDocument, StoryMode};
use crate::timeseries::{
    derive_difference, derive_moving_average, load_cts, load_nts, SeriesSet, TimeSeries, TimeSeriesError,
};

#[derive(Debug, Parser)]
#[command(
    name = "msb",
    version,
    about = "Compile feature-action tables and time series into story documents"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compile a story document (JSON)
    Compile {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, required = true)]
        fat: PathBuf,
        #[command(flatten)]
        story: StoryArgs,
        /// Output file; stdout when omitted (single variant only)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Variants compiled in parallel
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Print detected feature instances as CSV
    Detect {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, required = true)]
        fat: PathBuf,
    },
    /// Print the overall importance curve as CSV
    Curve {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, required = true)]
        fat: PathBuf,
    },
    /// Render one SVG per section
    Snapshot {
        #[command(flatten)]
        inputs: Inputs,
        /// Table to compile; alternative to --story
        #[arg(long, required_unless_present = "story_file", conflicts_with = "story_file")]
        fat: Option<PathBuf>,
        /// Previously compiled story document
        #[arg(long = "story", id = "story_file")]
        story_file: Option<PathBuf>,
        #[command(flatten)]
        story: StoryArgs,
        #[arg(long, required = true)]
        out_dir: PathBuf,
    },
}

#[derive(Debug, Args)]
struct Inputs {
    /// Numerical series, ID=path (header `date,value`)
    #[arg(long, value_name = "ID=PATH")]
    nts: Vec<String>,
    /// Categorical series, ID=path (header `date,category,rank,description`)
    #[arg(long, value_name = "ID=PATH")]
    cts: Vec<String>,
    /// Difference series, ID=A,B (A minus B)
    #[arg(long, value_name = "ID=A,B")]
    derive_diff: Vec<String>,
    /// Trailing moving average, ID=SOURCE,K
    #[arg(long, value_name = "ID=SOURCE,K")]
    derive_ma: Vec<String>,
    /// Story context, KEY=VALUE; repeat a key to compile one story per value
    #[arg(long, value_name = "KEY=VALUE")]
    context: Vec<String>,
    /// TOML settings file
    #[arg(long, env = "MSB_CONFIG")]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct StoryArgs {
    /// Number of sections
    #[arg(long)]
    segments: Option<usize>,
    /// Minimum days between section boundaries
    #[arg(long)]
    min_gap: Option<usize>,
    /// ALL, TOP_N:n or RANK_GTE:r
    #[arg(long)]
    select: Option<String>,
    /// interactive or auto
    #[arg(long)]
    mode: Option<String>,
    /// Record the compile time in the document
    #[arg(long)]
    stamp: bool,
}

/// A failure already formatted as diagnostic lines.
struct Failure(Vec<String>);

impl Failure {
    fn one(message: impl Into<String>) -> Self {
        Self(vec![message.into()])
    }
}

type Outcome<T> = Result<T, Failure>;

fn split_pair<'a>(raw: &'a str, flag: &str) -> Outcome<(&'a str, &'a str)> {
    raw.split_once('=')
        .map(|(k, v)| (k.trim(), v.trim()))
        .filter(|(k, v)| !k.is_empty() && !v.is_empty())
        .ok_or_else(|| Failure::one(format!("msb: --{flag} expects KEY=VALUE, got `{raw}`")))
}

/// `file:line: message`, dropping the `line N: ` the error carries itself.
fn located(path: &str, line: u64, e: &dyn std::fmt::Display) -> Failure {
    let text = e.to_string();
    let prefix = format!("line {line}: ");
    Failure::one(format!(
        "{path}:{line}: {}",
        text.strip_prefix(&prefix).unwrap_or(&text)
    ))
}

fn series_failure(path: &str, e: TimeSeriesError) -> Failure {
    match e.line() {
        Some(line) => located(path, line, &e),
        None => Failure::one(format!("{path}: {e}")),
    }
}

/// Settings gathered from the config file, before flags.
struct Config {
    settings: CompileSettings<f64>,
}

fn read_config(path: Option<&Path>) -> Outcome<Config> {
    let mut settings = CompileSettings::<f64>::default();
    let Some(path) = path else {
        return Ok(Config { settings });
    };
    let shown = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|e| Failure::one(format!("{shown}: {e}")))?;
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
        let line = e.span().map(|s| text[..s.start].matches('\n').count() + 1).unwrap_or(1);
        Failure::one(format!("{shown}:{line}: {}", e.message()))
    })?;
    let mut flat = BTreeMap::new();
    flatten("", &toml::Value::Table(table), &mut flat);

    let mut errors = Vec::new();
    for (key, value) in &flat {
        if let Err(msg) = apply_config(&mut settings, key, value) {
            errors.push(format!("{shown}: {key}: {msg}"));
        }
    }
    if errors.is_empty() {
        Ok(Config { settings })
    } else {
        Err(Failure(errors))
    }
}

fn flatten(prefix: &str, value: &toml::Value, out: &mut BTreeMap<String, toml::Value>) {
    match value {
        toml::Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, v, out);
            }
        }
        v => {
            out.insert(prefix.to_string(), v.clone());
        }
    }
}

fn apply_config(s: &mut CompileSettings<f64>, key: &str, value: &toml::Value) -> Result<(), String> {
    let int = || {
        value
            .as_integer()
            .filter(|i| *i >= 0)
            .map(|i| i as usize)
            .ok_or("expected a non-negative integer")
    };
    let num = || {
        value
            .as_float()
            .or_else(|| value.as_integer().map(|i| i as f64))
            .ok_or("expected a number")
    };
    let text = || value.as_str().map(str::to_string).ok_or("expected a string");
    match key {
        "k" | "segments" => s.k = int()?,
        "min_gap" => s.min_gap = Some(int()?),
        "select" => {
            s.selection = text()?
                .parse()
                .map_err(|e: crate::segmentation::SegmentError| e.to_string())?
        }
        "mode" => s.mode = text()?.parse()?,
        "r_max" => s.r_max = num()?,
        "mix.within" => s.mix_within = text()?.parse::<MixPolicy>().map_err(|e| e.to_string())?,
        "mix.across" => s.mix_across = text()?.parse::<MixPolicy>().map_err(|e| e.to_string())?,
        "text_date_format" => s.text_date_format = Some(text()?),
        "title" => s.title = Some(text()?),
        "unit_section_time" => s.unit_section_time = num()?,
        "slope.value_span" => s.detect.slope.value_span = num()?,
        "slope.day_unit" => s.detect.slope.day_unit = num()?,
        k if k.starts_with("context.") => {
            s.context.insert(k["context.".len()..].to_ascii_uppercase(), text()?);
        }
        _ => return Err("unknown setting".into()),
    }
    Ok(())
}

fn apply_flags(s: &mut CompileSettings<f64>, args: &StoryArgs) -> Outcome<()> {
    if let Some(k) = args.segments {
        s.k = k;
    }
    if let Some(g) = args.min_gap {
        s.min_gap = Some(g);
    }
    if let Some(p) = &args.select {
        s.selection = p
            .parse()
            .map_err(|e: crate::segmentation::SegmentError| Failure::one(format!("msb: {e}")))?;
    }
    if let Some(m) = &args.mode {
        s.mode = m.parse::<StoryMode>().map_err(|e| Failure::one(format!("msb: {e}")))?;
    }
    if args.stamp {
        s.stamp = Some(chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true));
    }
    Ok(())
}

fn load_data(inputs: &Inputs, r_max: f64) -> Outcome<SeriesSet<f64>> {
    let mut set = SeriesSet::new();
    let add = |set: &mut SeriesSet<f64>, series: TimeSeries<f64>, flag: &str| {
        set.insert(series)
            .map_err(|e| Failure::one(format!("msb: --{flag}: {e}")))
    };
    for raw in &inputs.nts {
        let (id, path) = split_pair(raw, "nts")?;
        let s = load_nts::<f64>(path, id).map_err(|e| series_failure(path, e))?;
        add(&mut set, s.into(), "nts")?;
    }
    for raw in &inputs.cts {
        let (id, path) = split_pair(raw, "cts")?;
        let s = load_cts::<f64>(path, id, r_max).map_err(|e| series_failure(path, e))?;
        add(&mut set, s.into(), "cts")?;
    }
    let numerical = |set: &SeriesSet<f64>, id: &str, flag: &str| {
        set.get(id)
            .and_then(TimeSeries::as_numerical)
            .cloned()
            .ok_or_else(|| Failure::one(format!("msb: --{flag}: no numerical series {id}")))
    };
    for raw in &inputs.derive_diff {
        let (id, sources) = split_pair(raw, "derive-diff")?;
        let (a, b) = sources
            .split_once(',')
            .ok_or_else(|| Failure::one(format!("msb: --derive-diff expects ID=A,B, got `{raw}`")))?;
        let a = numerical(&set, a.trim(), "derive-diff")?;
        let b = numerical(&set, b.trim(), "derive-diff")?;
        let d = derive_difference(&a, &b, id).map_err(|e| Failure::one(format!("msb: --derive-diff: {e}")))?;
        add(&mut set, d.into(), "derive-diff")?;
    }
    for raw in &inputs.derive_ma {
        let (id, spec) = split_pair(raw, "derive-ma")?;
        let parsed = spec
            .split_once(',')
            .and_then(|(s, k)| Some((s.trim(), k.trim().parse::<usize>().ok()?)));
        let (source, k) =
            parsed.ok_or_else(|| Failure::one(format!("msb: --derive-ma expects ID=SOURCE,K, got `{raw}`")))?;
        let s = numerical(&set, source, "derive-ma")?;
        let m = derive_moving_average(&s, k, id).map_err(|e| Failure::one(format!("msb: --derive-ma: {e}")))?;
        add(&mut set, m.into(), "derive-ma")?;
    }
    Ok(set)
}

fn load_table(path: &Path, r_max: f64) -> Outcome<FeatureActionTable> {
    let shown = path.display().to_string();
    let table = TableParser::default()
        .with_r_max(r_max)
        .parse_file(path)
        .map_err(|e| match e.line() {
            Some(line) => located(&shown, line, &e),
            None => Failure::one(format!("{shown}: {e}")),
        })?;
    for w in &table.warnings {
        eprintln!("{shown}:{}: warning: {}", w.line, w.message);
    }
    Ok(table)
}

fn compile_failure(fat: &Path, e: CompileError) -> Failure {
    match e {
        CompileError::Rows(rows) => Failure(
            rows.iter()
                .map(|r| format!("{}:{}: {}", fat.display(), r.line, r.message))
                .collect(),
        ),
        other => Failure::one(format!("msb: {other}")),
    }
}

/// Context variants: the cartesian product of repeated keys, in flag order.
fn context_variants(pairs: &[String]) -> Outcome<Vec<BTreeMap<String, String>>> {
    let mut keys: Vec<String> = Vec::new();
    let mut values: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for raw in pairs {
        let (k, v) = split_pair(raw, "context")?;
        let k = k.to_ascii_uppercase();
        if !values.contains_key(&k) {
            keys.push(k.clone());
        }
        values.entry(k).or_default().push(v.to_string());
    }
    let mut variants = vec![BTreeMap::new()];
    for k in &keys {
        variants = variants
            .into_iter()
            .flat_map(|base| {
                values[k].iter().map(move |v| {
                    let mut m = base.clone();
                    m.insert(k.clone(), v.clone());
                    m
                })
            })
            .collect();
    }
    Ok(variants)
}

fn settings_for(inputs: &Inputs, args: Option<&StoryArgs>) -> Outcome<CompileSettings<f64>> {
    let mut s = read_config(inputs.config.as_deref())?.settings;
    if let Some(args) = args {
        apply_flags(&mut s, args)?;
    }
    s.validate().map_err(|e| Failure::one(format!("msb: {e}")))?;
    Ok(s)
}

fn merged(base: &BTreeMap<String, String>, extra: &BTreeMap<String, String>) -> BTreeMap<String, String> {
    let mut m = base.clone();
    m.extend(extra.iter().map(|(k, v)| (k.clone(), v.clone())));
    m
}

fn variant_path(out: Option<&Path>, variant: &BTreeMap<String, String>, repeated: &[String]) -> PathBuf {
    let out = out.unwrap_or(Path::new("story.json"));
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("story");
    let ext = out.extension().and_then(|s| s.to_str()).unwrap_or("json");
    let suffix: Vec<String> = repeated
        .iter()
        .map(|k| {
            variant[k]
                .chars()
                .map(|c| {
                    if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                        c
                    } else {
                        '_'
                    }
                })
                .collect()
        })
        .collect();
    out.with_file_name(format!("{stem}-{}.{ext}", suffix.join("-")))
}

fn write_file(path: &Path, contents: &str) -> Outcome<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::one(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| Failure::one(format!("{}: {e}", path.display())))
}

fn cmd_compile(inputs: &Inputs, fat: &Path, args: &StoryArgs, out: Option<&Path>, jobs: usize) -> Outcome<()> {
    let settings = settings_for(inputs, Some(args))?;
    let data = load_data(inputs, settings.r_max)?;
    let table = load_table(fat, settings.r_max)?;
    let variants = context_variants(&inputs.context)?;

    if variants.len() == 1 {
        let s = CompileSettings {
            context: merged(&settings.context, &variants[0]),
            ..settings
        };
        let doc = story::compile(&table, &data, &s).map_err(|e| compile_failure(fat, e))?;
        let text = story::serialize(&doc);
        return match out {
            Some(path) => write_file(path, &text),
            None => io::stdout()
                .write_all(text.as_bytes())
                .map_err(|e| Failure::one(format!("msb: {e}"))),
        };
    }

    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for raw in &inputs.context {
        if let Some((k, _)) = raw.split_once('=') {
            *counts.entry(k.trim().to_ascii_uppercase()).or_default() += 1;
        }
    }
    let repeated: Vec<String> = counts.into_iter().filter(|(_, n)| *n > 1).map(|(k, _)| k).collect();
    let jobs = jobs.max(1);
    let mut results: Vec<Outcome<(PathBuf, String)>> = Vec::with_capacity(variants.len());
    for chunk in variants.chunks(jobs) {
        let done: Vec<_> = std::thread::scope(|scope| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|variant| {
                    let (table, data, settings) = (&table, &data, &settings);
                    let repeated = &repeated;
                    scope.spawn(move || {
                        let s = CompileSettings {
                            context: merged(&settings.context, variant),
                            ..settings.clone()
                        };
                        let doc = story::compile(table, data, &s).map_err(|e| compile_failure(fat, e))?;
                        Ok((variant_path(out, variant, repeated), story::serialize(&doc)))
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("compile thread panicked"))
                .collect()
        });
        results.extend(done);
    }
    let mut errors = Vec::new();
    for r in results {
        match r {
            Ok((path, text)) => {
                if let Err(Failure(lines)) = write_file(&path, &text) {
                    errors.extend(lines);
                }
            }
            Err(Failure(lines)) => errors.extend(lines),
        }
    }
    if errors.is_empty() {
        Ok(())
    } else {
        Err(Failure(errors))
    }
}

fn single_context(inputs: &Inputs, settings: &mut CompileSettings<f64>) -> Outcome<()> {
    let variants = context_variants(&inputs.context)?;
    if variants.len() > 1 {
        return Err(Failure::one(
            "msb: repeated --context keys are only supported by compile",
        ));
    }
    settings.context = merged(&settings.context, &variants[0]);
    Ok(())
}

fn attr_text(v: &AttrValue<f64>) -> String {
    match v {
        AttrValue::Real(x) => x.to_string(),
        other => other.to_string(),
    }
}

fn cmd_detect(inputs: &Inputs, fat: &Path) -> Outcome<()> {
    let mut settings = settings_for(inputs, None)?;
    single_context(inputs, &mut settings)?;
    let data = load_data(inputs, settings.r_max)?;
    let table = load_table(fat, settings.r_max)?;
    let io_err = |e: csv::Error| Failure::one(format!("msb: {e}"));
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(io::stdout());
    w.write_record(["row", "series", "kind", "start", "anchor", "end", "rank", "attrs"])
        .map_err(io_err)?;
    if table.rows.is_empty() {
        return w.flush().map_err(|e| Failure::one(format!("msb: {e}")));
    }
    let run = story::run_detection(&table, &data, &settings).map_err(|e| compile_failure(fat, e))?;
    for d in &run.detections {
        let inst = &d.instance;
        let attrs: Vec<String> = inst
            .attributes
            .iter()
            .map(|(k, v)| format!("{k}={}", attr_text(v)))
            .collect();
        w.write_record([
            (d.row + 1).to_string(),
            inst.series_id.clone(),
            inst.kind.name().to_string(),
            inst.start.date.to_string(),
            inst.anchor.date.to_string(),
            inst.end.date.to_string(),
            inst.rank.to_string(),
            attrs.join(";"),
        ])
        .map_err(io_err)?;
    }
    w.flush().map_err(|e| Failure::one(format!("msb: {e}")))
}

fn cmd_curve(inputs: &Inputs, fat: &Path) -> Outcome<()> {
    let mut settings = settings_for(inputs, None)?;
    single_context(inputs, &mut settings)?;
    let data = load_data(inputs, settings.r_max)?;
    let table = load_table(fat, settings.r_max)?;
    let run = story::run_detection(&table, &data, &settings).map_err(|e| compile_failure(fat, e))?;
    let curve = run
        .curve(settings.mix_within, settings.mix_across)
        .map_err(|e| Failure::one(format!("msb: {e}")))?;
    let mut out = String::from("date,importance\n");
    for (d, v) in curve.points() {
        out.push_str(&format!("{d},{v}\n"));
    }
    io::stdout()
        .write_all(out.as_bytes())
        .map_err(|e| Failure::one(format!("msb: {e}")))
}

fn cmd_snapshot(
    inputs: &Inputs,
    fat: Option<&Path>,
    story_file: Option<&Path>,
    args: &StoryArgs,
    out_dir: &Path,
) -> Outcome<()> {
    let doc: StoryDocument<f64> = match (story_file, fat) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::one(format!("{}: {e}", path.display())))?;
            story::deserialize(&text).map_err(|e| Failure::one(format!("{}: {e}", path.display())))?
        }
        (None, Some(fat)) => {
            let mut settings = settings_for(inputs, Some(args))?;
            single_context(inputs, &mut settings)?;
            let data = load_data(inputs, settings.r_max)?;
            let table = load_table(fat, settings.r_max)?;
            story::compile(&table, &data, &settings).map_err(|e| compile_failure(fat, e))?
        }
        (None, None) => return Err(Failure::one("msb: snapshot needs --fat or --story")),
    };
    for (i, svg) in render_all(&doc).iter().enumerate() {
        write_file(&out_dir.join(snapshot_name(i)), svg)?;
    }
    Ok(())
}

/// Runs the CLI on `args` (program name first) and returns the exit code.
pub fn run<I, A>(args: I) -> i32
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let outcome = match &cli.command {
        Command::Compile {
            inputs,
            fat,
            story,
            out,
            jobs,
        } => cmd_compile(inputs, fat, story, out.as_deref(), *jobs),
        Command::Detect { inputs, fat } => cmd_detect(inputs, fat),
        Command::Curve { inputs, fat } => cmd_curve(inputs, fat),
        Command::Snapshot {
            inputs,
            fat,
            story_file,
            story,
            out_dir,
        } => cmd_snapshot(inputs, fat.as_deref(), story_file.as_deref(), story, out_dir),
    };
    match outcome {
        Ok(()) => 0,
        Err(Failure(lines)) => {
            for line in lines {
                eprintln!("{line}");
            }
            1
        }
    }
}
