fn main() {
    std::process::exit(rac_intensity_cli::run(std::env::args_os()));
}
