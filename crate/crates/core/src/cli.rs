//! Command-line surface: `ingest`, `synth`, `train`, `evaluate`,
//! `recommend` and `gridsearch`.
//!
//! Settings come from a flat `section.key = value` file (`--config`) with
//! flags layered on top. Every artifact embeds the resolved settings as
//! `# config key=value` lines.
//!
//! | section    | keys                                                    |
//! |------------|---------------------------------------------------------|
//! | `schema`   | column names, `delimiter`, `first_year`, `last_year`    |
//! | `synth`    | generator settings, `seed`                              |
//! | `model`    | hyperparameters (`learning_rate`, `no_components`, ...) |
//! | `features` | `namespaces`, `buckets`                                 |
//! | `trust`    | `normalization`                                         |
//! | `eval`     | `n_list`, `min_train_years`, `seed`, `variants`         |
//! | `router`   | `min_episodes`                                          |

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::eval::{grid_search, run_comparison, ComparisonConfig, Dataset, Grid};
use crate::ingest::synth::{synth_generate, SynthConfig, DOCTORS_FILE, EPISODES_FILE, PATIENTS_FILE};
use crate::ingest::{
    build_features, clean, load_doctors, load_episodes, load_patients, AliasMap, FeatureAssignments, FeatureConfig,
    InteractionLog, Profiles, Schema, Year,
};
use crate::model::{fit_with_stats, HybridModel, Hyperparams, TrustMode};
use crate::router::{HospitalFilter, PatientQuery, Router};
use crate::trust::{trust_matrix_with, Normalization};

pub const LOG_FILE: &str = "log.txt";
pub const FEATURES_FILE: &str = "features.txt";
pub const MODEL_FILE: &str = "model.txt";
pub const TRUST_FILE: &str = "trust.txt";
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const REPORT_TABLE_FILE: &str = "report.txt";
pub const REPORT_RECORDS_FILE: &str = "report.tsv";
pub const GRID_FILE: &str = "grid.tsv";

#[derive(Debug, Parser)]
#[command(name = "carematch", version, about = "Patient to family-doctor recommender")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Settings file of `section.key = value` lines.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed for the generator, the model and the baseline tie-breaks.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// List length for `recommend`; the only cutoff for `evaluate`.
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Comma-separated hospital ids; restricts `recommend` candidates.
    #[arg(long, global = true, value_name = "IDS")]
    pub filter_hospital: Option<String>,
    #[arg(long, global = true, value_enum)]
    pub trust_mode: Option<TrustModeArg>,
    /// Output format on standard output.
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TrustModeArg {
    Off,
    Sample,
    Gradient,
}

impl From<TrustModeArg> for TrustMode {
    fn from(t: TrustModeArg) -> Self {
        match t {
            TrustModeArg::Off => TrustMode::Off,
            TrustModeArg::Sample => TrustMode::SampleWeight,
            TrustModeArg::Gradient => TrustMode::GradientWeight,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Records,
}

/// Raw dataset files: a directory with the standard file names, or explicit paths.
#[derive(Debug, Args, Clone)]
pub struct RawInput {
    /// Directory holding episodes.csv and optionally patients.csv / doctors.csv.
    #[arg(long, value_name = "DIR")]
    pub data: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub episodes: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub patients: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub doctors: Option<PathBuf>,
    /// Two-column `alias,canonical` doctor id file.
    #[arg(long, value_name = "PATH")]
    pub aliases: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Clean raw episodes into an interaction log and feature assignments.
    Ingest {
        #[command(flatten)]
        input: RawInput,
        /// Output directory for log.txt and features.txt.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Generate a synthetic dataset with planted structure.
    Synth {
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Print visit-count histogram data.
        #[arg(long)]
        summary: bool,
    },
    /// Train a model on an ingested directory.
    Train {
        /// Directory written by `ingest`.
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        /// Model artifact path; defaults to <data>/model.txt.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Walk-forward comparison of the five variants on a raw dataset.
    Evaluate {
        #[command(flatten)]
        input: RawInput,
        /// Directory for report.txt and report.tsv.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Top-n doctors for a known patient or a demographic profile.
    Recommend {
        /// Directory written by `ingest`.
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        /// Model artifact; defaults to <data>/model.txt.
        #[arg(long, value_name = "PATH")]
        model: Option<PathBuf>,
        #[arg(long, conflicts_with = "profile", required_unless_present = "profile")]
        patient: Option<String>,
        /// Demographics literal such as `gender=F,age_group=elderly,region=R3`.
        #[arg(long)]
        profile: Option<String>,
        /// Classification year; defaults to the year after the log ends.
        #[arg(long)]
        year: Option<Year>,
    },
    /// Score a hyperparameter lattice by fold-mean HR@10.
    Gridsearch {
        #[command(flatten)]
        input: RawInput,
        /// Lattice file of `key = v1, v2, ...` lines.
        #[arg(long, value_name = "PATH")]
        grid: PathBuf,
        /// Directory for grid.tsv.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
}

const SECTIONS: [&str; 7] = ["schema", "synth", "model", "features", "trust", "eval", "router"];

/// Settings file plus flag overrides.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub kv: KeyValues,
}

impl RunConfig {
    pub fn new(kv: KeyValues) -> Result<Self> {
        kv.reject_unknown(|k| {
            k.split_once('.').is_some_and(|(section, key)| {
                SECTIONS.contains(&section)
                    && match section {
                        "schema" => Schema::KEYS.contains(&key),
                        "synth" => key == "seed" || SynthConfig::KEYS.contains(&key),
                        "model" => Hyperparams::KEYS.contains(&key),
                        _ => ComparisonConfig::KEYS.contains(&k),
                    }
            })
        })?;
        Ok(RunConfig { kv })
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::new(KeyValues::load(p)?),
            None => Ok(Self::default()),
        }
    }

    fn apply_flags(&mut self, g: &GlobalArgs, command: &Command) {
        if let Some(seed) = g.seed {
            self.kv.set("synth.seed", seed.to_string());
            self.kv.set("model.rng_seed", seed.to_string());
            self.kv.set("eval.seed", seed.to_string());
        }
        if let Some(t) = g.trust_mode {
            self.kv.set("model.trust_mode", TrustMode::from(t).to_string());
        }
        if let (Some(n), Command::Evaluate { .. }) = (g.n, command) {
            self.kv.set("eval.n_list", n.to_string());
        }
    }

    pub fn schema(&self) -> Result<Schema> {
        Schema::from_config(&self.kv.section("schema"))
    }

    pub fn synth(&self) -> Result<(SynthConfig, u64)> {
        let mut section = self.kv.section("synth");
        let seed = section.get_or("seed", 42u64)?;
        section.remove("seed");
        let config = SynthConfig::from_config(&section)?;
        config.validate()?;
        Ok((config, seed))
    }

    pub fn hyperparams(&self) -> Result<Hyperparams> {
        Hyperparams::with_overrides(Hyperparams::default(), &self.kv.section("model"))
    }

    pub fn comparison(&self) -> Result<ComparisonConfig> {
        ComparisonConfig::from_config(&self.kv)
    }

    pub fn features(&self) -> Result<FeatureConfig> {
        Ok(self.comparison()?.features)
    }

    pub fn normalization(&self) -> Result<Normalization> {
        self.kv.get_or("trust.normalization", Normalization::default())
    }

    pub fn router(&self) -> Result<Router> {
        Ok(self.comparison()?.router)
    }

    /// Every setting a command depends on, defaults filled in.
    pub fn resolved(&self) -> Result<KeyValues> {
        let mut kv = KeyValues::new();
        let prefixed = |kv: &mut KeyValues, section: &str, values: KeyValues| {
            for (k, v) in values.iter() {
                kv.set(format!("{section}.{k}"), v);
            }
        };
        let (synth, seed) = self.synth()?;
        let mut synth_kv = synth.to_config();
        synth_kv.set("seed", seed.to_string());
        prefixed(&mut kv, "synth", synth_kv);
        prefixed(&mut kv, "model", self.hyperparams()?.to_config());
        kv.merge(&self.comparison()?.to_config());
        kv.merge(&self.kv);
        Ok(kv)
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn stdout_error(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

/// Loaded raw dataset; missing profile files mean empty profiles.
pub fn load_raw(input: &RawInput, schema: &Schema) -> Result<(Vec<crate::ingest::EpisodeRecord>, Profiles)> {
    let pick = |explicit: &Option<PathBuf>, name: &str| -> Option<PathBuf> {
        explicit.clone().or_else(|| input.data.as_ref().map(|d| d.join(name)))
    };
    let episodes =
        pick(&input.episodes, EPISODES_FILE).ok_or_else(|| Error::Config("give --data or --episodes".into()))?;
    let mut records = load_episodes(&episodes, schema)?;
    if let Some(path) = &input.aliases {
        AliasMap::load(path, schema.delimiter)?.apply(&mut records);
    }
    let optional = |explicit: &Option<PathBuf>, name: &str| -> Option<PathBuf> {
        explicit.clone().or_else(|| pick(&None, name).filter(|p| p.exists()))
    };
    let mut profiles = Profiles::default();
    if let Some(p) = optional(&input.patients, PATIENTS_FILE) {
        profiles.patients = load_patients(&p, schema.delimiter)?;
    }
    if let Some(p) = optional(&input.doctors, DOCTORS_FILE) {
        profiles.doctors = load_doctors(&p, schema.delimiter)?;
    }
    Ok((records, profiles))
}

fn load_ingested(dir: &Path) -> Result<(InteractionLog, FeatureAssignments)> {
    let log = InteractionLog::load(&dir.join(LOG_FILE))?;
    let features = FeatureAssignments::load(&dir.join(FEATURES_FILE), &log)?;
    Ok((log, features))
}

/// Parses `args` (program name first) and runs the command, writing
/// human output to `out`.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::Config(e.to_string()))?;
    execute(&cli, out)
}

pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    let mut config = RunConfig::load(cli.global.config.as_deref())?;
    config.apply_flags(&cli.global, &cli.command);
    let resolved = config.resolved()?;
    let g = &cli.global;
    match &cli.command {
        Command::Ingest { input, out: dir } => {
            let schema = config.schema()?;
            let (records, profiles) = load_raw(input, &schema)?;
            let log = clean(&records)?;
            let features = build_features(&records, &profiles, &log, &config.features()?)?;
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            log.save(&dir.join(LOG_FILE), &resolved)?;
            features.save(&dir.join(FEATURES_FILE), &log, &resolved)?;
            writeln!(
                out,
                "ingested {} records: {} patients, {} doctors, {} consultations",
                records.len(),
                log.n_patients(),
                log.n_doctors(),
                log.total_consultations()
            )
            .map_err(stdout_error)?;
        }
        Command::Synth { out: dir, summary } => {
            let (synth, seed) = config.synth()?;
            let data = synth_generate(&synth, seed)?;
            data.write(dir)?;
            let mut manifest = String::from("# carematch-synth v1\n");
            resolved.section("synth").write_provenance(&mut manifest);
            write_file(&dir.join(MANIFEST_FILE), &manifest)?;
            if *summary {
                out.write_all(data.summary().as_bytes()).map_err(stdout_error)?;
            }
        }
        Command::Train { data, out: path } => {
            let (log, features) = load_ingested(data)?;
            let hp = config.hyperparams()?;
            let trust = match hp.trust_mode {
                TrustMode::Off => None,
                _ => {
                    let (_, last) = log.year_span().expect("cleaned log has events");
                    let t = trust_matrix_with(&log, last, hp.lambda, config.normalization()?)?;
                    t.save(&data.join(TRUST_FILE), &log, &resolved)?;
                    Some(t)
                }
            };
            let (model, stats) = fit_with_stats(&log, &features, &hp, trust.as_ref())?;
            let path = path.clone().unwrap_or_else(|| data.join(MODEL_FILE));
            write_file(&path, &model.to_text(&resolved))?;
            if let (Some(first), Some(last)) = (stats.first(), stats.last()) {
                writeln!(
                    out,
                    "trained {} epochs: mean loss {:.6} -> {:.6}",
                    stats.len(),
                    first.mean_loss,
                    last.mean_loss
                )
                .map_err(stdout_error)?;
            }
        }
        Command::Evaluate { input, out: dir } => {
            let (records, profiles) = load_raw(input, &config.schema()?)?;
            let dataset = Dataset::new(records, profiles)?;
            let mut report = run_comparison(&dataset, &config.hyperparams()?, &config.comparison()?)?;
            report.provenance = resolved.clone();
            if let Some(dir) = dir {
                write_file(&dir.join(REPORT_TABLE_FILE), &report.to_table())?;
                write_file(&dir.join(REPORT_RECORDS_FILE), &report.to_records())?;
            }
            let text = match g.format {
                Format::Table => report.to_table(),
                Format::Records => report.to_records(),
            };
            out.write_all(text.as_bytes()).map_err(stdout_error)?;
        }
        Command::Recommend {
            data,
            model,
            patient,
            profile,
            year,
        } => {
            let (log, features) = load_ingested(data)?;
            let model = HybridModel::load(&model.clone().unwrap_or_else(|| data.join(MODEL_FILE)))?;
            let query = match (patient, profile) {
                (Some(id), _) => {
                    let index = log.patients.index_of(id).ok_or_else(|| Error::Unknown {
                        kind: "patient",
                        id: id.clone(),
                    })?;
                    let (_, last) = log.year_span().expect("cleaned log has events");
                    PatientQuery::Known {
                        patient: index,
                        reference_year: year.unwrap_or(last + 1),
                    }
                }
                (None, Some(literal)) => PatientQuery::Profile(features.patient_features_from_literal(literal)?),
                (None, None) => return Err(Error::Config("give --patient or --profile".into())),
            };
            let filter = g
                .filter_hospital
                .as_deref()
                .map(|ids| HospitalFilter::new(ids.split(',').map(str::trim).filter(|s| !s.is_empty())));
            let rec =
                config
                    .router()?
                    .recommend(&query, &model, &log, &features, g.n.unwrap_or(10), filter.as_ref())?;
            let mut text = String::new();
            match g.format {
                Format::Table => {
                    let _ = writeln!(text, "use case {}", rec.use_case);
                    let _ = writeln!(text, "{:>4}  {:<12} {:>10} {:>10}", "rank", "doctor", "score", "raw");
                    for (i, d) in rec.doctors.iter().enumerate() {
                        let _ = writeln!(
                            text,
                            "{:>4}  {:<12} {:>10.6} {:>10.6}",
                            i + 1,
                            log.doctors.id(d.doctor),
                            d.score,
                            d.raw
                        );
                    }
                }
                Format::Records => {
                    let _ = writeln!(text, "use_case\t{}", rec.use_case);
                    text.push_str("rank\tdoctor\tscore\traw\n");
                    for (i, d) in rec.doctors.iter().enumerate() {
                        let _ = writeln!(text, "{}\t{}\t{}\t{}", i + 1, log.doctors.id(d.doctor), d.score, d.raw);
                    }
                }
            }
            out.write_all(text.as_bytes()).map_err(stdout_error)?;
        }
        Command::Gridsearch { input, grid, out: dir } => {
            let (records, profiles) = load_raw(input, &config.schema()?)?;
            let dataset = Dataset::new(records, profiles)?;
            let grid = Grid::load(grid)?;
            let result = grid_search(&dataset, &config.hyperparams()?, &grid, &config.comparison()?)?;
            let mut table = String::from("# carematch-grid v1\n");
            resolved.write_provenance(&mut table);
            table.push_str(&result.to_table());
            if let Some(dir) = dir {
                write_file(&dir.join(GRID_FILE), &table)?;
            }
            out.write_all(table.as_bytes()).map_err(stdout_error)?;
            let mut best = String::from("best");
            for (k, v) in result.best().overrides.iter() {
                let _ = write!(best, " {k}={v}");
            }
            writeln!(out, "{best} hr@10={}", result.best().score).map_err(stdout_error)?;
        }
    }
    Ok(())
}
