mod args;
mod commands;

use clap::Parser;

use args::{Cli, Command};

/// Pipeline-level failures exit 1; usage and config problems exit 2.
fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    std::process::exit(0);
                }
                _ => {
                    eprint!("{e}");
                    std::process::exit(2);
                }
            }
        }
    };
    let result = match cli.command {
        Command::TrainColor(a) => commands::train_color(a),
        Command::TrainPatch(a) => commands::train_patch(a),
        Command::Segment(a) => commands::segment(a),
        Command::Peduncle(a) => commands::peduncle(a),
        Command::Grasp(a) => commands::grasp(a),
        Command::Sim(a) => commands::sim(a),
        Command::Eval(a) => commands::eval(a),
    };
    match result {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(e.exit_code());
        }
    }
}
