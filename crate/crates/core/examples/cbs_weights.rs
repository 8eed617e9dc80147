//! Count-based weights on a three-triple graph, for each method.

use kge_subsampling::data::{count_queries, Vocab};
use kge_subsampling::subsampling::build_cbs_weights;
use kge_subsampling::{Dataset, SubsamplingMethod, Triple};

fn main() -> kge_subsampling::Result<()> {
    let mut vocab = Vocab::default();
    for e in ["e1", "e2", "e3"] {
        vocab.entities.intern(e);
    }
    vocab.relations.intern("r1");
    let ds = Dataset {
        train: vec![Triple::new(0, 0, 1), Triple::new(0, 0, 2), Triple::new(1, 0, 2)],
        valid: vec![],
        test: vec![],
        vocab,
    };
    let freq = count_queries(&ds.train, 0.0);
    println!("example  dir   a(base) b(base)  a(freq) b(freq)  a(uniq) b(uniq)");
    let tables: Vec<_> = [SubsamplingMethod::Base, SubsamplingMethod::Freq, SubsamplingMethod::Uniq]
        .into_iter()
        .map(|m| build_cbs_weights(&ds, &freq, m))
        .collect::<Result<_, _>>()?;
    for (i, _, d) in ds.examples() {
        print!("{i:>7}  {:<4}", d.as_str());
        for w in &tables {
            print!("  {:>7.4} {:>7.4}", w.a[i], w.b[i]);
        }
        println!();
    }
    Ok(())
}
