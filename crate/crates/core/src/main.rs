use clap::Parser;

use ets_nash::cli::{run, threads_from_env, Cli, EXIT_OTHER};

fn main() {
    let cli = Cli::parse();
    let result = threads_from_env().and_then(|threads| {
        if let Some(n) = threads {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| ets_nash::cli::Failure { code: EXIT_OTHER, message: e.to_string() })?;
        }
        run(cli)
    });
    if let Err(f) = result {
        eprintln!("error: {}", f.message);
        std::process::exit(f.code);
    }
}
