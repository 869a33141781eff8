//! LIBSVM parsing with label normalization, a seeded split, standardization
//! fitted on the training part, and a lossless round trip.

use std::io::Cursor;
use vrhmc::{parse_libsvm, split, standardize, LabelPolicy};

const SAMPLE: &str = "\
1 1:0.5 3:1.25
2 2:-1 3:0.75
1 1:2.0
2 1:-0.5 2:3 3:1e-3
1 2:0.25
2 1:1.5 3:-2
";

fn main() -> vrhmc::Result<()> {
    let data = parse_libsvm(Cursor::new(SAMPLE), LabelPolicy::Auto, None)?;
    println!("parsed {} rows, d = {}, labels {:?}", data.n(), data.d(), data.labels());

    let again = parse_libsvm(Cursor::new(data.to_libsvm()), LabelPolicy::PlusMinusOne, Some(data.d()))?;
    println!("round trip preserves rows: {}", again.rows() == data.rows());

    let (train, test) = split(&data, 0.5, 7)?;
    let (train_std, test_std, scaler) = standardize(&train, &test)?;
    println!("train ids {:?}, test ids {:?}", train.ids(), test.ids());
    for row in train_std.dense_rows() {
        println!("standardized {row:.3?} -> original {:.3?}", scaler.invert(&row));
    }
    println!("{} standardized test rows", test_std.n());
    Ok(())
}
