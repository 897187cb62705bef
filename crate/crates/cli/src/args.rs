use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fblrate::normapprox::DEFAULT_SEED;

#[derive(Debug, Parser)]
#[command(
    name = "fblrate",
    version,
    about = "Finite-blocklength rate and error-probability approximations for MIMO block-fading channels"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Normal-approximation rate for one scenario
    Rate(RateArgs),
    /// Packet error probability for a payload of --bits over --n channel uses
    Errprob(ErrprobArgs),
    /// Rate versus coherence length T at fixed blocklength
    #[command(name = "sweep-T")]
    SweepT(SweepTArgs),
    /// Error probability versus SNR at fixed rate
    #[command(name = "sweep-snr")]
    SweepSnr(SweepSnrArgs),
    /// Crossing points between transmit-antenna counts and the best count
    Antennas(AntennasArgs),
    /// Slotted-ALOHA slot count and payload optimisation
    Aloha(AlohaArgs),
    /// Empirical meta-converse rate bound
    Converse(ConverseArgs),
    /// Monte Carlo validation suite
    #[command(name = "mc-validate")]
    McValidate(McValidateArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Rate(_) => "rate",
            Command::Errprob(_) => "errprob",
            Command::SweepT(_) => "sweep-T",
            Command::SweepSnr(_) => "sweep-snr",
            Command::Antennas(_) => "antennas",
            Command::Aloha(_) => "aloha",
            Command::Converse(_) => "converse",
            Command::McValidate(_) => "mc-validate",
        }
    }

    pub fn output(&self) -> &OutputOpts {
        match self {
            Command::Rate(a) => &a.output,
            Command::Errprob(a) => &a.output,
            Command::SweepT(a) => &a.output,
            Command::SweepSnr(a) => &a.output,
            Command::Antennas(a) => &a.output,
            Command::Aloha(a) => &a.output,
            Command::Converse(a) => &a.output,
            Command::McValidate(a) => &a.output,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Channel {
    Noncoherent,
    Coherent,
    Awgn,
}

impl Channel {
    pub fn name(self) -> &'static str {
        match self {
            Channel::Noncoherent => "noncoherent",
            Channel::Coherent => "coherent",
            Channel::Awgn => "awgn",
        }
    }
}

#[derive(Debug, Args)]
pub struct OutputOpts {
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    /// Write the record here instead of standard output
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// key=value file (or a previous JSON record); flags take precedence
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct McOpts {
    /// Monte Carlo sample count (command-specific default)
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long, env = "FBLRATE_SEED", default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct SnrOpts {
    /// SNR in dB
    #[arg(long = "snr-db", allow_negative_numbers = true)]
    pub snr_db: Option<f64>,
    /// Linear SNR
    #[arg(long)]
    pub snr: Option<f64>,
}

impl SnrOpts {
    pub fn linear(&self) -> f64 {
        match (self.snr_db, self.snr) {
            (Some(db), _) => 10f64.powf(db / 10.0),
            (None, Some(x)) => x,
            (None, None) => f64::NAN,
        }
    }
}

#[derive(Debug, Args)]
pub struct RateArgs {
    #[arg(long)]
    pub nt: usize,
    #[arg(long)]
    pub nr: usize,
    /// Coherence interval in channel uses
    #[arg(long = "T")]
    pub coherence: Option<usize>,
    /// Number of coherence blocks (real)
    #[arg(long = "L")]
    pub blocks: Option<f64>,
    /// Blocklength (alternative to --L)
    #[arg(long)]
    pub n: Option<f64>,
    #[command(flatten)]
    pub snr: SnrOpts,
    #[arg(long)]
    pub eps: f64,
    #[arg(long, value_enum, default_value = "noncoherent")]
    pub channel: Channel,
    #[command(flatten)]
    pub mc: McOpts,
    #[command(flatten)]
    pub output: OutputOpts,
}

#[derive(Debug, Args)]
pub struct ErrprobArgs {
    #[arg(long)]
    pub nt: usize,
    #[arg(long)]
    pub nr: usize,
    #[arg(long = "T")]
    pub coherence: Option<usize>,
    #[arg(long = "L")]
    pub blocks: Option<f64>,
    #[arg(long)]
    pub n: Option<f64>,
    #[command(flatten)]
    pub snr: SnrOpts,
    /// Payload in bits
    #[arg(long)]
    pub bits: f64,
    #[arg(long, value_enum, default_value = "noncoherent")]
    pub channel: Channel,
    #[command(flatten)]
    pub mc: McOpts,
    #[command(flatten)]
    pub output: OutputOpts,
}

#[derive(Debug, Args)]
pub struct SweepTArgs {
    /// Transmit antenna counts (comma list, paired with --nr)
    #[arg(long, value_delimiter = ',', required = true)]
    pub nt: Vec<usize>,
    /// Receive antenna counts (comma list, or one value for all)
    #[arg(long, value_delimiter = ',', required = true)]
    pub nr: Vec<usize>,
    #[arg(long)]
    pub n: f64,
    #[command(flatten)]
    pub snr: SnrOpts,
    #[arg(long)]
    pub eps: f64,
    #[arg(long = "t-min", default_value_t = 1)]
    pub t_min: usize,
    #[arg(long = "t-max", default_value_t = 64)]
    pub t_max: usize,
    #[command(flatten)]
    pub output: OutputOpts,
}

#[derive(Debug, Args)]
pub struct SweepSnrArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    pub nt: Vec<usize>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub nr: Vec<usize>,
    #[arg(long = "T")]
    pub coherence: usize,
    #[arg(long = "L")]
    pub blocks: f64,
    /// Rate in nats per channel use
    #[arg(long)]
    pub rate: f64,
    /// Channel families (comma list)
    #[arg(long, value_enum, value_delimiter = ',', default_value = "noncoherent")]
    pub channel: Vec<Channel>,
    #[arg(long = "snr-min-db", default_value_t = 0.0, allow_negative_numbers = true)]
    pub snr_min_db: f64,
    #[arg(long = "snr-max-db", default_value_t = 30.0, allow_negative_numbers = true)]
    pub snr_max_db: f64,
    #[arg(long = "snr-step-db", default_value_t = 1.0)]
    pub snr_step_db: f64,
    #[command(flatten)]
    pub mc: McOpts,
    #[command(flatten)]
    pub output: OutputOpts,
}

#[derive(Debug, Args)]
pub struct AntennasArgs {
    #[arg(long)]
    pub nr: usize,
    #[arg(long)]
    pub n: f64,
    #[command(flatten)]
    pub snr: SnrOpts,
    #[arg(long)]
    pub eps: f64,
    /// Transmit antenna counts to compare (default 1..=nr)
    #[arg(long = "nt-list", value_delimiter = ',')]
    pub nt_list: Option<Vec<usize>>,
    #[arg(long = "t-max", default_value_t = fblrate::sweeps::DEFAULT_T_MAX)]
    pub t_max: usize,
    /// Also report the best transmit-antenna count at this T
    #[arg(long = "T")]
    pub coherence: Option<usize>,
    #[command(flatten)]
    pub output: OutputOpts,
}

#[derive(Debug, Args)]
pub struct AlohaArgs {
    #[arg(long)]
    pub devices: usize,
    /// Channel uses per frame
    #[arg(long)]
    pub n: f64,
    #[command(flatten)]
    pub snr: SnrOpts,
    #[arg(long, value_enum)]
    pub channel: Channel,
    /// Required success probability
    #[arg(long)]
    pub threshold: f64,
    #[arg(long, default_value_t = 1)]
    pub nt: usize,
    #[arg(long, default_value_t = 1)]
    pub nr: usize,
    /// Coherence interval (fading channels)
    #[arg(long = "T")]
    pub coherence: Option<usize>,
    #[command(flatten)]
    pub mc: McOpts,
    #[command(flatten)]
    pub output: OutputOpts,
}

#[derive(Debug, Args)]
pub struct ConverseArgs {
    #[arg(long)]
    pub nt: usize,
    #[arg(long)]
    pub nr: usize,
    #[arg(long = "T")]
    pub coherence: usize,
    #[arg(long = "L")]
    pub blocks: f64,
    #[command(flatten)]
    pub snr: SnrOpts,
    #[arg(long)]
    pub eps: f64,
    #[command(flatten)]
    pub mc: McOpts,
    #[command(flatten)]
    pub output: OutputOpts,
}

#[derive(Debug, Args)]
pub struct McValidateArgs {
    #[command(flatten)]
    pub mc: McOpts,
    #[command(flatten)]
    pub output: OutputOpts,
}
