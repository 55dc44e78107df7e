mod common;

use common::*;
use mpcflow::oracle::interpret;
use mpcflow::Fp;

#[test]
fn fixtures_match_the_oracle() {
    let mut r = rng(1);
    for name in FIXTURES {
        let g = graph(name, None);
        for _ in 0..3 {
            let inp = random_inputs(&g, &[], &mut r);
            let want = interpret(&g, &inp.params).unwrap().output;
            let got = run(&g, &inp, 2, 2);
            assert_eq!(got.output().unwrap(), want.as_slice(), "{name}");
        }
    }
}

#[test]
fn loop_sums_one_to_ten() {
    let g = graph("loop.ll", None);
    let inp = inputs(&[("n", vec![10]), ("k", vec![1])]);
    assert_eq!(interpret(&g, &inp.params).unwrap().output, vec![Fp::new(55)]);
    assert_eq!(run(&g, &inp, 2, 1).output().unwrap(), &[Fp::new(55)]);
}

