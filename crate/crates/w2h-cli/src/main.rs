fn main() {
    println!("w2h");
}
