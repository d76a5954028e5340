fn main() {
    std::process::exit(ssdcnn_cli::run(std::env::args_os()));
}
