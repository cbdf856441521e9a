fn main() {
    println!("kspectra: placeholder");
}
