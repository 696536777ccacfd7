fn main() {
    // Filled in once the pipeline crates are in place.
}
