//! The `selmask` command line: argument handling, config resolution and
//! run manifests around the library workflows.

pub mod commands;
pub mod manifest;
pub mod settings;

use clap::Command;
use selmask::{Error, Result};

use settings::Settings;

pub fn cli() -> Command {
    let mut app = Command::new("selmask")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Selective masked-language-model pre-training and simplification evaluation")
        .subcommand_required(true)
        .arg_required_else_help(true);
    for spec in commands::SPECS {
        app = app.subcommand(settings::add_args(Command::new(spec.name).about(spec.about), &(spec.keys)()));
    }
    app
}

/// 0 success, 2 usage, 3 data or format, 4 numeric.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Usage(_) => 2,
        Error::Io { .. } | Error::Format { .. } => 3,
        Error::Numeric { .. } => 4,
    }
}

pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let matches = cli().try_get_matches_from(args).map_err(|e| {
        if matches!(
            e.kind(),
            clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
        ) {
            let _ = e.print();
            std::process::exit(0);
        }
        let text = e.to_string();
        Error::usage(text.trim_start_matches("error: ").trim_end())
    })?;
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let spec = commands::SPECS.iter().find(|s| s.name == name).expect("registered subcommand");
    let settings = Settings::resolve(name, &(spec.keys)(), sub)?;
    (spec.run)(settings)
}
