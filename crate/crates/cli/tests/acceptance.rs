//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mlorder_core::{
    brute_force_optimal_order, lattice_counts, load_corpus, order_logprob, ratio_db, rho_vs_causal, spearman_rho,
    viterbi_optimal_order, with_cache, CountingScorer, LogProb, NeighborScorer, OrderPermutation, Sentence,
    TableScorer, UniformScorer,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn words(n: usize) -> Sentence {
    Sentence::from_words("acc", (0..n).map(|i| format!("w{i}"))).unwrap()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut checked = 0;
    for n in 2..=7 {
        let s = words(n);
        for seed in 0..50u64 {
            let table = TableScorer::random(n, seed * 1000 + n as u64);
            let dp = viterbi_optimal_order(&s, &table).map_err(|e| e.to_string())?;
            let bf = brute_force_optimal_order(&s, &table).map_err(|e| e.to_string())?;
            ensure(dp.order == bf.order, || {
                format!("n={n} seed={seed}: {:?} vs {:?}", dp.order.order(), bf.order.order())
            })?;
            let diff = (dp.logp.value() - bf.logp.value()).abs();
            ensure(diff <= 1e-9, || format!("n={n} seed={seed}: logp differs by {diff}"))?;
            checked += 1;
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!("{checked} tables agree in {:.2?}", elapsed))
}

fn neighbor_fixture() -> Outcome {
    let s = Sentence::from_words("fixture", ["la", "casa", "azul"]).unwrap();
    let best = viterbi_optimal_order(&s, &NeighborScorer).map_err(|e| e.to_string())?;
    ensure(best.order.order() == [0, 1, 2], || format!("order {:?}", best.order.order()))?;
    ensure((best.logp.prob() - 1.0 / 16.0).abs() < 1e-15, || format!("prob {}", best.logp.prob()))?;

    let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut best_enum: Option<([usize; 3], LogProb)> = None;
    for p in perms {
        let lp = order_logprob(&s, &OrderPermutation::new(p.to_vec()).unwrap(), &NeighborScorer)
            .map_err(|e| e.to_string())?;
        if best_enum.is_none_or(|(_, b)| lp.value() > b.value()) {
            best_enum = Some((p, lp));
        }
    }
    let (p, lp) = best_enum.unwrap();
    ensure(p == [0, 1, 2] && lp.value() == best.logp.value(), || {
        format!("enumeration best {p:?} at {lp}")
    })?;
    Ok("[0, 1, 2] with p = 1/16, confirmed over all 6 orders".into())
}

fn uniform_degeneracy() -> Outcome {
    for p in [0.5, 0.3, 0.9] {
        let scorer = UniformScorer::new(p).unwrap();
        for n in 2..=10 {
            let best = viterbi_optimal_order(&words(n), &scorer).map_err(|e| e.to_string())?;
            let identity: Vec<usize> = (0..n).collect();
            ensure(best.order.order() == identity, || format!("p={p} n={n}: {:?}", best.order.order()))?;
            let want = n as f64 * p.ln();
            ensure((best.logp.value() - want).abs() <= 1e-12, || {
                format!("p={p} n={n}: logp {} vs {want}", best.logp)
            })?;
            let rho = rho_vs_causal(&best.order).map_err(|e| e.to_string())?;
            ensure(rho == 1.0, || format!("p={p} n={n}: rho {rho}"))?;
        }
    }
    Ok("identity order, N ln p, rho = 1 for N = 2..10".into())
}

fn lattice_counts_and_cache() -> Outcome {
    for (n, want) in [(1, (2, 1)), (3, (8, 12)), (10, (1024, 5120))] {
        let got = lattice_counts(n, 30).map_err(|e| e.to_string())?;
        ensure(got == want, || format!("n={n}: {got:?} vs {want:?}"))?;
    }
    for n in 2..=10 {
        let counting = CountingScorer::new(TableScorer::random(n, 77));
        let cached = with_cache(&counting);
        let s = words(n);
        viterbi_optimal_order(&s, &cached).map_err(|e| e.to_string())?;
        let want = (1u64 << n) - 1;
        ensure(counting.masked_calls() == want, || {
            format!("n={n}: {} masked evaluations, want {want}", counting.masked_calls())
        })?;
        viterbi_optimal_order(&s, &cached).map_err(|e| e.to_string())?;
        ensure(counting.masked_calls() == want, || format!("n={n}: rerun missed the cache"))?;
    }
    Ok("(2,1) (8,12) (1024,5120); 2^N - 1 masked evaluations for N = 2..10".into())
}

fn pearson(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<usize>() as f64 / n;
    let mb = b.iter().sum::<usize>() as f64 / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x as f64 - ma, y as f64 - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    sab / (saa * sbb).sqrt()
}

fn spearman_suite() -> Outcome {
    for n in 2..=10 {
        let id: Vec<usize> = (0..n).collect();
        let rev: Vec<usize> = (0..n).rev().collect();
        let r1 = spearman_rho(&id, &id).map_err(|e| e.to_string())?;
        let r2 = spearman_rho(&rev, &id).map_err(|e| e.to_string())?;
        ensure(r1 == 1.0 && r2 == -1.0, || format!("n={n}: identity {r1}, reversal {r2}"))?;
    }
    let r = spearman_rho(&[1, 0, 2], &[0, 1, 2]).map_err(|e| e.to_string())?;
    ensure(r == 0.5, || format!("[1,0,2] gave {r}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(2..=20);
        let mut a: Vec<usize> = (0..n).collect();
        let mut b = a.clone();
        a.shuffle(&mut rng);
        b.shuffle(&mut rng);
        let rho = spearman_rho(&a, &b).map_err(|e| e.to_string())?;
        worst = worst.max((rho - pearson(&a, &b)).abs());
    }
    ensure(worst <= 1e-9, || format!("max deviation from rank Pearson {worst:e}"))?;
    Ok(format!("identity/reversal exact, [1,0,2] = 0.5, Pearson deviation {worst:.1e}"))
}

fn ratio_db_suite() -> Outcome {
    let ln10 = std::f64::consts::LN_10;
    let hi = LogProb::new(-ln10).unwrap();
    let lo = LogProb::new(-2.0 * ln10).unwrap();
    let db = ratio_db(hi, lo).map_err(|e| e.to_string())?;
    ensure(db == 10.0, || format!("decade gave {db:?}"))?;
    let back = ratio_db(lo, hi).map_err(|e| e.to_string())?;
    ensure(back == -10.0, || format!("reverse decade gave {back:?}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let a = LogProb::new(-rng.random_range(0.0..50.0)).unwrap();
        let b = LogProb::new(-rng.random_range(0.0..50.0)).unwrap();
        let s = ratio_db(a, b).unwrap() + ratio_db(b, a).unwrap();
        worst = worst.max(s.abs());
    }
    ensure(worst <= 1e-12, || format!("antisymmetry error {worst:e}"))?;
    Ok(format!("decade = 10 dB exactly, antisymmetry error {worst:e}"))
}

fn run_analyze(corpus: &Path, out: &Path, workers: usize) -> Result<(), String> {
    let table = fixtures().join("table6.txt");
    let table = format!("table:{}", table.display());
    let status = Command::new(env!("CARGO_BIN_EXE_mlorder"))
        .args(["analyze", "--corpus"])
        .arg(corpus)
        .args(["--scorer", &table, "--causal-scorer", &table, "--workers", &workers.to_string(), "--out"])
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(status.status.success(), || {
        format!("analyze --workers {workers} failed: {}", String::from_utf8_lossy(&status.stderr))
    })
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let path = e.unwrap().path();
            (path.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&path).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn corpus_validation() -> Outcome {
    let path = fixtures().join("corpus.csv");
    let corpus = load_corpus(&path, true).map_err(|e| format!("strict load failed: {e}"))?;
    ensure(corpus.len() == 36, || format!("{} records", corpus.len()))?;

    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let tmp = tempfile::tempdir().unwrap();
    for drop in 1..lines.len() {
        let triplet = lines[drop].split(',').nth(1).unwrap();
        let kept: Vec<&str> = lines.iter().enumerate().filter(|(i, _)| *i != drop).map(|(_, l)| *l).collect();
        let cut = tmp.path().join("cut.csv");
        std::fs::write(&cut, kept.join("\n") + "\n").unwrap();
        match load_corpus(&cut, true) {
            Ok(_) => return Err(format!("deleting line {} was accepted", drop + 1)),
            Err(e) => ensure(e.to_string().contains(triplet), || {
                format!("deleting line {}: error does not name {triplet}: {e}", drop + 1)
            })?,
        }
    }

    let one = tmp.path().join("w1");
    let eight = tmp.path().join("w8");
    run_analyze(&path, &one, 1)?;
    run_analyze(&path, &eight, 8)?;
    let a = read_dir_sorted(&one);
    let b = read_dir_sorted(&eight);
    ensure(!a.is_empty() && a == b, || "reports differ between 1 and 8 workers".into())?;
    Ok(format!("strict pass, all 36 deletions named, {} report files identical", a.len()))
}

fn end_to_end() -> Outcome {
    let corpus = load_corpus(fixtures().join("corpus.csv"), true).map_err(|e| e.to_string())?;
    let table = TableScorer::from_file(fixtures().join("table6.txt")).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst = 0.0f64;
    for s in &corpus.records {
        for scorer in [&table as &dyn mlorder_core::Scorer, &NeighborScorer] {
            let best = viterbi_optimal_order(s, scorer).map_err(|e| e.to_string())?;
            let again = order_logprob(s, &best.order, scorer).map_err(|e| e.to_string())?;
            let diff = (again.value() - best.logp.value()).abs();
            worst = worst.max(diff);
            ensure(diff <= 1e-12, || format!("{}: re-evaluation differs by {diff:e}", s.id()))?;
            for _ in 0..100 {
                let mut order: Vec<usize> = (0..s.len()).collect();
                order.shuffle(&mut rng);
                let lp = order_logprob(s, &OrderPermutation::new(order.clone()).unwrap(), scorer)
                    .map_err(|e| e.to_string())?;
                ensure(lp.value() <= best.logp.value(), || {
                    format!("{}: order {order:?} scores {lp} above {}", s.id(), best.logp)
                })?;
            }
        }
    }
    Ok(format!("{} sentences, max re-evaluation error {worst:e}", corpus.len()))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("oracle equivalence", oracle_equivalence),
        ("neighbor-scorer fixture", neighbor_fixture),
        ("uniform-scorer degeneracy", uniform_degeneracy),
        ("lattice counts and cache", lattice_counts_and_cache),
        ("spearman suite", spearman_suite),
        ("ratio_db", ratio_db_suite),
        ("corpus validation", corpus_validation),
        ("end-to-end consistency", end_to_end),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
