fn main() {
    std::process::exit(guidance_cli::dispatch(std::env::args_os()));
}
