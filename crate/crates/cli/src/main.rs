//! `vn-hgcn`: batch experiment runner.
//!
//! Exit codes: 0 success, 1 configuration error, 2 data error,
//! 3 numeric failure during training.

mod args;
mod config;
mod run;

use clap::error::ErrorKind;
use clap::Parser;
use vn_hgcn_core::Error;

use args::{Cli, Command};

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 1,
        Error::Data(_) | Error::Structural(_) | Error::Shape(_) | Error::Eval(_) | Error::Io(_) => 2,
        Error::Numeric(_) => 3,
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            // clap renders help to stdout and errors to stderr itself.
            let _ = e.print();
            std::process::exit(code);
        }
    };

    let result = match &cli.command {
        Command::Train(a) => run::train(a),
        Command::Eval(a) => run::eval(a),
        Command::Perturb(a) => run::perturb(a),
        Command::Sweep(a) => run::sweep_cmd(a),
        Command::AugmentInspect(a) => run::augment_inspect(a),
        Command::ValidateData(a) => run::validate_data(a),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(exit_code(&e));
    }
}
