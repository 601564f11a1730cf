mod commands;
mod settings;

use std::fmt;
use std::process::ExitCode;

use clap::{Arg, Command};

use settings::{Group, Key, Settings};

#[derive(Debug)]
pub enum CliError {
    /// Bad invocation, bad configuration or a missing input: exit code 2.
    Usage(String),
    Run(spermtrack::error::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Run(e) => e.fmt(f),
        }
    }
}

impl From<spermtrack::error::Error> for CliError {
    fn from(e: spermtrack::error::Error) -> Self {
        CliError::Run(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Run(e) if e.is_missing_input() => 2,
            CliError::Run(_) => 1,
        }
    }
}

type Handler = fn(&Settings) -> Result<commands::Outcome, CliError>;

struct Sub {
    name: &'static str,
    about: &'static str,
    groups: &'static [Group],
    keys: &'static [&'static str],
    run: Handler,
}

const CAL: &[Group] = &[Group::Calibration];
const DETECT: &[Group] = &[Group::Detector];
const TRACK: &[Group] = &[Group::Calibration, Group::Tracker];
const ALL_STAGES: &[Group] = &[Group::Calibration, Group::Detector, Group::Tracker];

const SUBS: [Sub; 9] = [
    Sub {
        name: "stack",
        about: "Export multi-frame detector inputs as TIFF stacks",
        groups: &[],
        keys: &["frames", "out", "stack_channels", "center"],
        run: commands::stack,
    },
    Sub {
        name: "detect",
        about: "Run the blob detector over a frame sequence",
        groups: DETECT,
        keys: &["frames", "out", "stack_channels"],
        run: commands::detect,
    },
    Sub {
        name: "track",
        about: "Link detections into raw tracks",
        groups: TRACK,
        keys: &["frames", "detections", "out", "tracker", "min_score"],
        run: commands::track,
    },
    Sub {
        name: "join",
        about: "Join track fragments and prune short tracks",
        groups: CAL,
        keys: &["tracks", "out", "decisions", "frames", "width", "height"],
        run: commands::join,
    },
    Sub {
        name: "eval-det",
        about: "Score detections against ground-truth boxes",
        groups: CAL,
        keys: &["detections", "gt", "out", "ap_mode"],
        run: commands::eval_det,
    },
    Sub {
        name: "eval-track",
        about: "Score tracks against ground-truth tracks",
        groups: CAL,
        keys: &["tracks", "gt", "out"],
        run: commands::eval_track,
    },
    Sub {
        name: "motility",
        about: "Per-track motility parameters and categories",
        groups: CAL,
        keys: &["tracks", "out", "summary"],
        run: commands::motility_cmd,
    },
    Sub {
        name: "synth",
        about: "Render a seeded synthetic scenario with ground truth",
        groups: &[Group::Synth],
        keys: &["out", "scenario", "width", "height"],
        run: commands::synth_cmd,
    },
    Sub {
        name: "pipeline",
        about: "detect, track, join and motility in one go",
        groups: ALL_STAGES,
        keys: &["frames", "out", "stack_channels", "tracker", "min_score"],
        run: commands::pipeline,
    },
];

fn cli(keys: &[Key]) -> Command {
    let mut cmd = Command::new("spermtrack")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Sperm detection, tracking and motility analysis")
        .subcommand_required(true)
        .arg_required_else_help(true);
    for sub in &SUBS {
        let mut exposed: Vec<String> = settings::group_keys(keys, sub.groups);
        exposed.extend(sub.keys.iter().map(|k| k.to_string()));
        let exposed: Vec<&str> = exposed.iter().map(String::as_str).collect();
        let multi: &[&str] = if sub.name == "pipeline" { &["frames"] } else { &[] };
        let mut c = Command::new(sub.name).about(sub.about).args(settings::flags(keys, &exposed, multi));
        if sub.name == "pipeline" {
            c = c.arg(
                Arg::new("jobs")
                    .long("jobs")
                    .value_name("N")
                    .value_parser(clap::value_parser!(usize))
                    .help("videos processed in parallel [default: all cores]"),
            );
        }
        cmd = cmd.subcommand(c);
    }
    cmd
}

fn main() -> ExitCode {
    let keys = settings::registry();
    let matches = match cli(&keys).try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let (name, sub_matches) = matches.subcommand().expect("subcommand required");
    let sub = SUBS.iter().find(|s| s.name == name).expect("known subcommand");

    if let Ok(Some(&jobs)) = sub_matches.try_get_one::<usize>("jobs") {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .expect("thread pool is configured once");
    }

    let json = sub_matches.get_flag("json");
    let result = Settings::resolve(keys, sub_matches).and_then(|s| (sub.run)(&s));
    match result {
        Ok(outcome) => {
            if json {
                println!("{}", serde_json::to_string_pretty(&outcome.json).expect("JSON values serialize"));
            } else {
                print!("{}", outcome.text);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
