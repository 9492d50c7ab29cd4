fn main() {
    println!("nldep (under construction)");
}
