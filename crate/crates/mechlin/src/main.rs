fn main() {
    std::process::exit(mechlin::cli::run() as i32);
}
