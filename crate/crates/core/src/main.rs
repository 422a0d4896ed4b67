use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use salient_adv::attack::{AttackBudget, Method};
use salient_adv::attribution::Norm;
use salient_adv::corpus::{load_dataset, load_synonyms, write_dataset, Split, SynonymLexicon};
use salient_adv::diagnosis::DiagnosisConfig;
use salient_adv::model::{train, Classifier, TrainConfig, Victim};
use salient_adv::pipeline::{
    attack_stage, desk_train_config, diagnose_stage, read_json, report_stage, run_all, AttackJob, CampaignManifest,
    ReportNames, RunConfig, RunDir, DEFAULT_BINS,
};
use salient_adv::synth::{generate, SynthConfig};
use salient_adv::{Error, Result};

#[derive(Parser)]
#[command(
    name = "salient-adv",
    version,
    about = "Entity-aware adversarial attacks and salience diagnosis for relation classifiers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded synthetic train/test/lexicon set.
    Synth(SynthArgs),
    /// Train a classifier.
    Train(TrainArgs),
    /// Attack correctly predicted test instances.
    Attack(AttackArgs),
    /// Diagnose the successful samples of a campaign.
    Diagnose(DiagnoseArgs),
    /// Write tables and figure data for every campaign in a run directory.
    Report(ReportArgs),
    /// Train, attack, diagnose and report in one go.
    All(AllArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Plant this token in place of the cue word of `--trigger-label`.
    #[arg(long, requires = "trigger_label")]
    trigger: Option<String>,
    #[arg(long)]
    trigger_label: Option<String>,
}

#[derive(Args, Clone)]
struct ModelArgs {
    #[arg(long, default_value_t = desk_train_config().dim)]
    dim: usize,
    #[arg(long, default_value_t = desk_train_config().hidden)]
    hidden: usize,
    #[arg(long, default_value_t = desk_train_config().epochs)]
    epochs: usize,
    #[arg(long, default_value_t = desk_train_config().learning_rate)]
    learning_rate: f64,
    #[arg(long, default_value_t = desk_train_config().batch_size)]
    batch_size: usize,
    #[arg(long, default_value_t = desk_train_config().min_freq)]
    min_freq: u64,
    #[arg(long, default_value_t = desk_train_config().l2)]
    l2: f64,
}

impl ModelArgs {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            dim: self.dim,
            hidden: self.hidden,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            min_freq: self.min_freq,
            l2: self.l2,
            ..desk_train_config()
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Training split (JSONL).
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Model file; defaults to `model.json` in the output directory.
    #[arg(long)]
    model: Option<PathBuf>,
    #[command(flatten)]
    params: ModelArgs,
}

#[derive(Args, Clone)]
struct BudgetArgs {
    #[arg(long, default_value_t = AttackBudget::default().epsilon)]
    epsilon: f64,
    #[arg(long, default_value_t = AttackBudget::default().max_perturb)]
    max_perturb: f64,
    #[arg(long, default_value_t = AttackBudget::default().max_queries)]
    max_queries: usize,
    #[arg(long, default_value_t = AttackBudget::default().min_synonym_weight)]
    min_synonym_weight: f64,
}

impl BudgetArgs {
    fn budget(&self) -> AttackBudget {
        AttackBudget {
            epsilon: self.epsilon,
            max_perturb: self.max_perturb,
            max_queries: self.max_queries,
            min_synonym_weight: self.min_synonym_weight,
        }
    }
}

#[derive(Args)]
struct AttackArgs {
    #[arg(long)]
    model: PathBuf,
    /// Test split (JSONL).
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    method: Method,
    /// Synonym lexicon (TSV); required for pwws and textfooler.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Records file; defaults to `records-<method>.jsonl` in the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    budget: BudgetArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum NormArg {
    L2,
    L1,
}

#[derive(Args, Clone)]
struct DiagnosisArgs {
    /// Integrated-gradients steps.
    #[arg(long, default_value_t = DiagnosisConfig::default().steps)]
    steps: usize,
    #[arg(long, default_value_t = DiagnosisConfig::default().top_n)]
    top_n: usize,
    #[arg(long, default_value_t = DiagnosisConfig::default().pmi_threshold)]
    pmi_threshold: f64,
    #[arg(long, value_enum, default_value_t = NormArg::L2)]
    norm: NormArg,
}

impl DiagnosisArgs {
    fn config(&self) -> DiagnosisConfig {
        DiagnosisConfig {
            steps: self.steps,
            top_n: self.top_n,
            pmi_threshold: self.pmi_threshold,
            norm: match self.norm {
                NormArg::L2 => Norm::L2,
                NormArg::L1 => Norm::L1,
            },
        }
    }
}

#[derive(Args)]
struct DiagnoseArgs {
    #[arg(long)]
    model: PathBuf,
    /// Training split, for the co-occurrence table.
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    method: Method,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Records file; defaults to the one named in the campaign summary.
    #[arg(long)]
    records: Option<PathBuf>,
    #[command(flatten)]
    diagnosis: DiagnosisArgs,
}

#[derive(Args, Clone)]
struct NameArgs {
    /// Model name shown in the tables.
    #[arg(long, default_value = "desk")]
    model_name: String,
    /// Dataset name shown in the tables.
    #[arg(long, default_value = "synthetic")]
    dataset_name: String,
}

impl NameArgs {
    fn names(&self) -> ReportNames {
        ReportNames {
            model: self.model_name.clone(),
            dataset: self.dataset_name.clone(),
        }
    }
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    bins: usize,
    #[command(flatten)]
    names: NameArgs,
}

#[derive(Args)]
struct AllArgs {
    /// Training split; generated with `--synth` when absent.
    #[arg(long, required_unless_present = "synth")]
    train: Option<PathBuf>,
    /// Test split.
    #[arg(long, required_unless_present = "synth")]
    data: Option<PathBuf>,
    #[arg(long, required_unless_present = "synth")]
    lexicon: Option<PathBuf>,
    /// Generate the synthetic corpus into the output directory first.
    #[arg(long, conflicts_with_all = ["train", "data", "lexicon"])]
    synth: bool,
    #[arg(long)]
    seed: u64,
    /// Attack methods to run; all three when omitted.
    #[arg(long = "method")]
    methods: Vec<Method>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    bins: usize,
    #[command(flatten)]
    params: ModelArgs,
    #[command(flatten)]
    budget: BudgetArgs,
    #[command(flatten)]
    diagnosis: DiagnosisArgs,
    #[command(flatten)]
    names: NameArgs,
}

fn synth(args: SynthArgs) -> Result<()> {
    let mut config = match (&args.trigger, &args.trigger_label) {
        (Some(t), Some(l)) => SynthConfig::with_trigger(t, l),
        _ => SynthConfig::default(),
    };
    config.seed = args.seed;
    let corpus = generate(&config)?;
    let dir = RunDir::new(&args.out_dir)?;
    write_dataset(dir.root().join("train.jsonl"), &corpus.train)?;
    write_dataset(dir.root().join("test.jsonl"), &corpus.test)?;
    corpus.lexicon.write(dir.root().join("lexicon.tsv"))?;
    println!(
        "wrote {} train and {} test instances to {}",
        corpus.train.len(),
        corpus.test.len(),
        dir.root().display()
    );
    Ok(())
}

fn train_cmd(args: TrainArgs) -> Result<()> {
    let data = load_dataset(&args.data, Split::Train)?;
    let dir = RunDir::new(&args.out_dir)?;
    let model = train(&data, &args.params.config(), args.seed)?;
    let path = args.model.unwrap_or_else(|| dir.model());
    model.save(&path)?;
    let correct = data
        .iter()
        .filter(|i| model.predict_instance(i).label == i.label)
        .count();
    println!(
        "trained on {} instances, training accuracy {:.2}%, model written to {}",
        data.len(),
        100.0 * correct as f64 / data.len() as f64,
        path.display()
    );
    Ok(())
}

fn lexicon_for(method: Method, path: Option<&PathBuf>) -> Result<SynonymLexicon> {
    match (method, path) {
        (_, Some(p)) => load_synonyms(p),
        (Method::HotFlip, None) => Ok(SynonymLexicon::new()),
        (m, None) => Err(Error::Config(format!("{m} needs --lexicon"))),
    }
}

fn attack_cmd(args: AttackArgs) -> Result<()> {
    let model = Classifier::load(&args.model)?;
    let test = load_dataset(&args.data, Split::Test)?;
    let lexicon = lexicon_for(args.method, args.lexicon.as_ref())?;
    let dir = RunDir::new(&args.out_dir)?;
    let out = args.out.unwrap_or_else(|| dir.records(args.method));
    let job = AttackJob {
        test: &test,
        lexicon: &lexicon,
        method: args.method,
        budget: args.budget.budget(),
        seed: args.seed,
    };
    let (_, manifest) = attack_stage(&model, &model.vocab_fingerprint(), &job, &out, &dir)?;
    let s = &manifest.summary;
    println!(
        "{}: {} of {} correct predictions attacked successfully ({:.2}%), records in {}",
        s.method.display_name(),
        s.successes,
        s.correct,
        s.success_rate,
        out.display()
    );
    Ok(())
}

fn diagnose_cmd(args: DiagnoseArgs) -> Result<()> {
    let model = Classifier::load(&args.model)?;
    let train_set = load_dataset(&args.train, Split::Train)?;
    let dir = RunDir::new(&args.out_dir)?;
    let records_path = match args.records {
        Some(p) => p,
        None => {
            let manifest: CampaignManifest = read_json(&dir.summary(args.method))?;
            dir.root().join(manifest.records_file)
        }
    };
    let records = salient_adv::attack::read_records(&records_path)?;
    let diagnosed = diagnose_stage(
        &model,
        &train_set,
        &records,
        args.method,
        &args.diagnosis.config(),
        &dir,
    )?;
    println!(
        "diagnosed {} successful samples, written to {}",
        diagnosed.len(),
        dir.diagnoses(args.method).display()
    );
    Ok(())
}

fn report_cmd(args: ReportArgs) -> Result<()> {
    let dir = RunDir::new(&args.out_dir)?;
    let (report, files) = report_stage(&dir, &args.names.names(), args.bins)?;
    print!("{}", salient_adv::report::markdown(&report.stats));
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn all_cmd(args: AllArgs) -> Result<()> {
    let dir = RunDir::new(&args.out_dir)?;
    let (train_set, test_set, lexicon) = if args.synth {
        let corpus = generate(&SynthConfig::default())?;
        write_dataset(dir.root().join("train.jsonl"), &corpus.train)?;
        write_dataset(dir.root().join("test.jsonl"), &corpus.test)?;
        corpus.lexicon.write(dir.root().join("lexicon.tsv"))?;
        (corpus.train, corpus.test, corpus.lexicon)
    } else {
        let missing = || Error::Config("--train, --data and --lexicon are required without --synth".into());
        (
            load_dataset(args.train.as_ref().ok_or_else(missing)?, Split::Train)?,
            load_dataset(args.data.as_ref().ok_or_else(missing)?, Split::Test)?,
            load_synonyms(args.lexicon.as_ref().ok_or_else(missing)?)?,
        )
    };
    let config = RunConfig {
        train: args.params.config(),
        seed: args.seed,
        methods: if args.methods.is_empty() {
            Method::ALL.to_vec()
        } else {
            args.methods.clone()
        },
        budget: args.budget.budget(),
        diagnosis: args.diagnosis.config(),
        bins: args.bins,
        names: args.names.names(),
    };
    let (_, report) = run_all(&train_set, &test_set, &lexicon, &config, &dir)?;
    print!("{}", salient_adv::report::markdown(&report.stats));
    println!("outputs in {}", dir.root().display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train_cmd(a),
        Command::Attack(a) => attack_cmd(a),
        Command::Diagnose(a) => diagnose_cmd(a),
        Command::Report(a) => report_cmd(a),
        Command::All(a) => all_cmd(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}
