use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "aidr",
    version,
    about = "Traffic classification, web-log anomaly detection and malware triage"
)]
pub struct Cli {
    /// Seed for every random choice [default: 42]
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// key=value configuration file (also read from AIDR_CONFIG)
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Model file to write (train) or read (everything else)
    #[arg(long, global = true, value_name = "FILE")]
    pub model: Option<PathBuf>,

    /// More log output (-v info, -vv debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Random forest over connection features
    Netclf {
        #[command(subcommand)]
        cmd: NetclfCmd,
    },
    /// Isolation forest over HTTP access logs
    Wids {
        #[command(subcommand)]
        cmd: WidsCmd,
    },
    /// Static PE analysis with the forest/LSTM cascade
    Malware {
        #[command(subcommand)]
        cmd: MalwareCmd,
    },
    /// Stored scan reports
    Report {
        #[command(subcommand)]
        cmd: ReportCmd,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DataFormat {
    /// KDDTrain+/KDDTest+ layout, no header
    NslKdd,
    /// UNSW-NB15 training/testing set CSV with header
    UnswNb15,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Labelled CSV file
    #[arg(long, value_name = "CSV")]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "nsl-kdd")]
    pub format: DataFormat,
    /// Lines of `raw_label,category` to collapse labels
    #[arg(long, value_name = "FILE")]
    pub label_map: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum NetclfCmd {
    /// Fit a forest on a labelled CSV and save it
    Train {
        #[command(flatten)]
        data: DataArgs,
        /// Output file (defaults to --model, then netclf.aidr)
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        /// Number of trees [config forest.n_estimators, default 100]
        #[arg(long)]
        trees: Option<usize>,
        /// Name of the benign class [default: normal / Normal]
        #[arg(long)]
        normal_class: Option<String>,
    },
    /// Accuracy and per-class report on a labelled CSV
    Eval {
        #[command(flatten)]
        data: DataArgs,
        /// Print metrics as JSON
        #[arg(long)]
        json: bool,
    },
    /// Classify the connections in a capture and raise alerts
    Classify {
        #[arg(long, value_name = "PCAP")]
        pcap: PathBuf,
        #[command(flatten)]
        alerts: AlertArgs,
    },
}

#[derive(Debug, Args)]
pub struct AlertArgs {
    /// Also append alerts to this JSON-lines file
    #[arg(long, value_name = "FILE")]
    pub alerts: Option<PathBuf>,
    /// Do not write alerts to standard output
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct WidsTuning {
    /// Window length in seconds [config wids.window_seconds, default 60]
    #[arg(long)]
    pub window_seconds: Option<u64>,
    /// Alert when a window has more than K anomalies [config wids.alert_threshold, default 10]
    #[arg(long, short = 'k')]
    pub threshold: Option<usize>,
    /// Expected outlier fraction [config iso.contamination, default 0.01]
    #[arg(long)]
    pub contamination: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum WidsCmd {
    /// Fit the anomaly model on a (mostly benign) access log
    Train {
        #[arg(long, value_name = "LOG")]
        log: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        #[command(flatten)]
        tuning: WidsTuning,
    },
    /// Score an access log window by window
    Score {
        #[arg(long, value_name = "LOG")]
        log: PathBuf,
        #[command(flatten)]
        alerts: AlertArgs,
    },
    /// Follow a growing access log and score each window as it closes
    Watch {
        #[arg(long, value_name = "LOG")]
        log: PathBuf,
        /// Poll interval in milliseconds
        #[arg(long, default_value_t = 1000)]
        interval_ms: u64,
        /// Stop after this many polls (runs until interrupted otherwise)
        #[arg(long)]
        max_polls: Option<u64>,
        #[command(flatten)]
        alerts: AlertArgs,
    },
}

#[derive(Debug, Subcommand)]
pub enum MalwareCmd {
    /// Train the cascade on DIR/benign and DIR/malicious
    Train {
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        /// Held-out directory with the same layout to report accuracy on
        #[arg(long, value_name = "DIR")]
        test: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Classify a file or every file in a directory
    Scan {
        path: PathBuf,
        /// Write each report as <report_id>.json here
        #[arg(long, value_name = "DIR")]
        reports: Option<PathBuf>,
        /// One JSON object per file instead of text
        #[arg(long)]
        json: bool,
        /// Watch the directory and scan new files as they appear
        #[arg(long)]
        watch: bool,
        #[arg(long, default_value_t = 1000)]
        interval_ms: u64,
        #[arg(long)]
        max_polls: Option<u64>,
    },
    /// HTTP endpoint: POST /scan, GET /reports/{id}
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        #[arg(long, value_name = "DIR")]
        reports: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum ReportCmd {
    /// Print a stored report
    Show {
        /// Report id or path to a report file
        id: String,
        #[arg(long, value_name = "DIR", default_value = "reports")]
        reports: PathBuf,
        #[arg(long)]
        json: bool,
    },
}
