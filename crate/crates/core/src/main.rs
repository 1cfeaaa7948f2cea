fn main() {
    env_logger::init();
    std::process::exit(consup::cli::run(std::env::args_os()));
}
