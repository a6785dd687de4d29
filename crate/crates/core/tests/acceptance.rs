//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ptd_core::embed::{build_features, MockDims, MockEmbedder};
use ptd_core::eval::{aggregate_by_stage, format_percent, relative_change, RatingRecord};
use ptd_core::generation::{
    flag_rates_by_word, run_generation, seed_for, FlagSchedule, GenerationConfig, MockBackend,
};
use ptd_core::gray::GrayPlane;
use ptd_core::metrics::{fid, inception_score_from_probs, FeatureStats};
use ptd_core::prompt::{enumerate_prompts, DescriptorTable, PromptRecord, Slots};
use ptd_core::refine::{
    frequency_cutoff, patch_variance, radial_power_spectrum, run_refinement, KeepFractions,
    RefineOptions, Stage,
};
use ptd_core::store::{
    load_features_of, read_jsonl, read_jsonl_or_empty, save_features, DatasetLayout, FeatureKind,
    FeatureMatrix, FlagLedgerEntry, ImageRecord, Survival,
};
use ptd_core::tav::{compute_tav, top_k_associations};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

// ---------------------------------------------------------------- prompts

fn prompt_enumeration() -> Outcome {
    let one = DescriptorTable::default();
    let two = one.clone().with_templates([
        ptd_core::prompt::DEFAULT_TEMPLATE,
        "{artistic} {spatial} {enhancer} {color} texture of {texture}",
    ]);
    let mut details = Vec::new();
    for (table, want) in [(one, 48_384usize), (two, 96_768)] {
        let start = Instant::now();
        let prompts = enumerate_prompts(&table).map_err(err)?;
        let took = start.elapsed();
        check(
            prompts.len() == want,
            format!("{} prompts, want {want}", prompts.len()),
        )?;
        check(
            took < Duration::from_secs(1),
            format!("{want} prompts took {took:.2?}"),
        )?;
        details.push(format!("{} in {took:.0?}", prompts.len()));
    }
    Ok(details.join(", "))
}

// ---------------------------------------------------------------- pipeline

/// Generates `per_class` prompts × `n_keep` images for every default texture
/// class, embeds the CLIP features with the mock and refines at 0.8/0.8/0.8.
fn mock_pipeline(
    root: &Path,
    per_class: usize,
    n_keep: usize,
    schedule: FlagSchedule,
    workers: usize,
) -> Result<Vec<ImageRecord>, String> {
    let prompts = enumerate_prompts(&DescriptorTable::default()).map_err(err)?;
    let mut taken: HashMap<String, usize> = HashMap::new();
    let chosen: Vec<PromptRecord> = prompts
        .into_iter()
        .filter(|p| {
            let n = taken.entry(p.texture_class().to_string()).or_default();
            *n += 1;
            *n <= per_class
        })
        .collect();
    let layout = DatasetLayout::new(root);
    let config = GenerationConfig {
        n_keep,
        width: 64,
        height: 64,
        ..GenerationConfig::default()
    };
    run_generation(
        &chosen,
        &MockBackend::new(schedule),
        &config,
        &layout,
        workers,
    )
    .map_err(err)?;
    let mut records: Vec<ImageRecord> = read_jsonl(&layout.manifest()).map_err(err)?;
    let embedder = MockEmbedder::new(MockDims {
        clip: 16,
        pool: 8,
        logits: 8,
        probs: 8,
    });
    build_features(
        &records,
        &layout,
        &[FeatureKind::ClipImage, FeatureKind::ClipText],
        &embedder,
        64,
    )
    .map_err(err)?;
    let options = RefineOptions {
        fractions: KeepFractions::uniform(0.8),
        patch_size: 16,
        workers,
        ..RefineOptions::default()
    };
    run_refinement(
        &mut records,
        &layout,
        &layout.features_dir(),
        &Stage::ORDER,
        &options,
    )
    .map_err(err)?;
    ptd_core::store::write_jsonl(&layout.manifest(), &records).map_err(err)?;
    Ok(records)
}

fn cascade_retention() -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    let records = mock_pipeline(dir.path(), 20, 5, FlagSchedule::Never, 8)?;
    let mut per_class: BTreeMap<&str, [usize; 4]> = BTreeMap::new();
    for r in &records {
        let c = per_class.entry(r.texture_class()).or_default();
        let s = r.survives;
        c[0] += usize::from(!r.flagged);
        c[1] += usize::from(s.freq == Some(true));
        c[2] += usize::from(s.patchvar == Some(true));
        c[3] += usize::from(s.clip == Some(true));
        let monotone = (s.clip != Some(true) || s.patchvar == Some(true))
            && (s.patchvar != Some(true) || s.freq == Some(true));
        check(
            monotone,
            format!("image {} survival not monotone: {s:?}", r.image_id),
        )?;
    }
    check(
        per_class.len() == 56,
        format!("{} classes", per_class.len()),
    )?;
    for (class, counts) in &per_class {
        check(*counts == [100, 80, 64, 52], format!("{class}: {counts:?}"))?;
    }
    Ok("56 classes × 100 → 80 → 64 → 52, survival monotone".into())
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().map_err(err)?;
    let b = tempfile::tempdir().map_err(err)?;
    let schedule = || "rate:0.3".parse::<FlagSchedule>().unwrap();
    mock_pipeline(a.path(), 2, 5, schedule(), 1)?;
    mock_pipeline(b.path(), 2, 5, schedule(), 8)?;
    let files = [
        "manifest.jsonl",
        "incomplete.jsonl",
        "features/clip_image.ptdf",
        "features/clip_text.ptdf",
    ];
    for f in files {
        let (x, y) = (
            std::fs::read(a.path().join(f)),
            std::fs::read(b.path().join(f)),
        );
        check(
            x.is_ok() && x.ok() == y.ok(),
            format!("{f} differs between 1 and 8 workers"),
        )?;
    }
    // Ledger entries carry wall-clock timestamps; everything else must match.
    let ledger = |root: &Path| -> Result<Vec<FlagLedgerEntry>, String> {
        let mut v: Vec<FlagLedgerEntry> =
            read_jsonl(&DatasetLayout::new(root).ledger()).map_err(err)?;
        v.iter_mut().for_each(|e| e.timestamp = 0);
        Ok(v)
    };
    let (la, lb) = (ledger(a.path())?, ledger(b.path())?);
    check(
        !la.is_empty() && la == lb,
        "flag ledgers differ beyond timestamps",
    )?;
    Ok(format!(
        "{} byte-identical between 1 and 8 workers; {} ledger entries equal up to timestamps",
        files.join(", "),
        la.len()
    ))
}

// ---------------------------------------------------------------- spectra

const N: usize = 64;

/// Direct O(N⁴) DFT binned by rounded radius, corners folded into N/2.
fn naive_radial(img: &GrayPlane) -> Vec<f64> {
    let tw: Vec<(f64, f64)> = (0..N)
        .map(|k| {
            let a = -2.0 * std::f64::consts::PI * k as f64 / N as f64;
            (a.cos(), a.sin())
        })
        .collect();
    let kmax = N / 2;
    let mut bins = vec![0.0; kmax + 1];
    for v in 0..N {
        for u in 0..N {
            let (mut re, mut im) = (0.0, 0.0);
            for y in 0..N {
                for x in 0..N {
                    let (c, s) = tw[(u * x + v * y) % N];
                    let f = img.get(x, y);
                    re += f * c;
                    im += f * s;
                }
            }
            let fu = if u <= N / 2 {
                u as f64
            } else {
                u as f64 - N as f64
            };
            let fv = if v <= N / 2 {
                v as f64
            } else {
                v as f64 - N as f64
            };
            let r = ((fu * fu + fv * fv).sqrt().round() as usize).min(kmax);
            bins[r] += re * re + im * im;
        }
    }
    bins
}

/// Radius at which half of the N×N lattice points other than DC are reached:
/// the expected cutoff of zero-mean white noise.
fn white_noise_expected_fc() -> usize {
    let kmax = N / 2;
    let mut counts = vec![0usize; kmax + 1];
    for v in 0..N {
        for u in 0..N {
            if u == 0 && v == 0 {
                continue;
            }
            let fu = if u <= N / 2 {
                u as f64
            } else {
                u as f64 - N as f64
            };
            let fv = if v <= N / 2 {
                v as f64
            } else {
                v as f64 - N as f64
            };
            counts[((fu * fu + fv * fv).sqrt().round() as usize).min(kmax)] += 1;
        }
    }
    let half = (N * N - 1) as f64 / 2.0;
    let mut acc = 0.0;
    for (k, c) in counts.iter().enumerate() {
        acc += *c as f64;
        if acc >= half {
            return k;
        }
    }
    kmax
}

fn fc_oracle() -> Outcome {
    let start = Instant::now();
    let ring = |k: usize| {
        GrayPlane::from_fn(N, N, move |x, _| {
            (2.0 * std::f64::consts::PI * (k * x) as f64 / N as f64).cos()
        })
    };
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let noise: Vec<f64> = (0..N * N).map(|_| rng.random::<f64>()).collect();
    let mean = noise.iter().sum::<f64>() / noise.len() as f64;
    let noise = GrayPlane::new(N, N, noise.iter().map(|v| v - mean).collect()).map_err(err)?;
    let expected_noise = white_noise_expected_fc();
    let cases: Vec<(&str, GrayPlane, Option<u32>)> = vec![
        ("constant", GrayPlane::constant(N, N, 117.0), Some(0)),
        ("ring 3", ring(3), Some(3)),
        ("ring 8", ring(8), Some(8)),
        ("ring 20", ring(20), Some(20)),
        ("white noise", noise, None),
    ];
    let mut details = Vec::new();
    for (name, img, want) in cases {
        let got = radial_power_spectrum(&img).map_err(err)?;
        let oracle = naive_radial(&img);
        let total: f64 = oracle.iter().sum();
        for (k, (a, b)) in got.bins().iter().zip(&oracle).enumerate() {
            // Relative per bin; bins that are zero analytically are held to
            // 1e-6 of the smallest nonzero scale, the total energy × 1e-12.
            let tol = 1e-6 * b.abs().max(total * 1e-12);
            check(
                (a - b).abs() <= tol,
                format!("{name} bin {k}: {a} vs oracle {b}"),
            )?;
        }
        let fc = frequency_cutoff(&got).map_err(err)?;
        match want {
            Some(w) => check(fc == w, format!("{name}: f_c {fc}, want {w}"))?,
            None => {
                let oracle_fc =
                    frequency_cutoff(&ptd_core::refine::PowerSpectrum::from_bins(oracle))
                        .map_err(err)?;
                check(
                    fc == oracle_fc,
                    format!("{name}: f_c {fc}, oracle {oracle_fc}"),
                )?;
                check(
                    (fc as i64 - expected_noise as i64).abs() <= 1,
                    format!("{name}: f_c {fc} far from expected {expected_noise}"),
                )?;
            }
        }
        details.push(format!("{name} f_c={fc}"));
    }
    let took = start.elapsed();
    check(took < Duration::from_secs(10), format!("took {took:.2?}"))?;
    Ok(format!("{} ({took:.1?})", details.join(", ")))
}

// ---------------------------------------------------------------- patch variance

fn naive_patch_variance(img: &GrayPlane, p: usize) -> f64 {
    let mut means = Vec::new();
    for ty in 0..img.height() / p {
        for tx in 0..img.width() / p {
            let mut s = 0.0;
            for y in ty * p..(ty + 1) * p {
                for x in tx * p..(tx + 1) * p {
                    s += img.get(x, y);
                }
            }
            means.push(s / (p * p) as f64);
        }
    }
    let mu = means.iter().sum::<f64>() / means.len() as f64;
    means.iter().map(|m| (m - mu).powi(2)).sum::<f64>() / means.len() as f64
}

fn patch_variance_cases() -> Outcome {
    let c = patch_variance(&GrayPlane::constant(512, 512, 93.0), 50).map_err(err)?;
    check(c == 0.0, format!("constant image: {c}"))?;
    let checker = GrayPlane::from_fn(512, 512, |x, y| {
        if (x / 50 + y / 50) % 2 == 1 {
            255.0
        } else {
            0.0
        }
    });
    let v = patch_variance(&checker, 50).map_err(err)?;
    check(v == 16256.25, format!("alternating patches: {v}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let (w, h) = (rng.random_range(50..300), rng.random_range(50..300));
        let img = GrayPlane::from_fn(w, h, |_, _| rng.random_range(0.0..255.0));
        let got = patch_variance(&img, 50).map_err(err)?;
        let want = naive_patch_variance(&img, 50);
        let rel = (got - want).abs() / want.abs().max(1.0);
        worst = worst.max(rel);
        check(rel <= 1e-9, format!("{w}x{h}: {got} vs oracle {want}"))?;
    }
    Ok(format!(
        "constant 0, alternating 16256.25, 10 random within {worst:.1e}"
    ))
}

// ---------------------------------------------------------------- FID

fn stats(mean: &[f64], cov: DMatrix<f64>) -> FeatureStats {
    FeatureStats {
        n: 100,
        mean: DVector::from_column_slice(mean),
        cov,
    }
}

/// Denman–Beavers iteration for the principal square root.
fn sqrtm_db(a: &DMatrix<f64>) -> DMatrix<f64> {
    let mut y = a.clone();
    let mut z = DMatrix::identity(a.nrows(), a.ncols());
    for _ in 0..100 {
        let yi = y.clone().try_inverse().expect("invertible");
        let zi = z.clone().try_inverse().expect("invertible");
        let ny = (&y + zi) * 0.5;
        let nz = (&z + yi) * 0.5;
        let done = (&ny - &y).norm() <= 1e-15 * ny.norm();
        y = ny;
        z = nz;
        if done {
            break;
        }
    }
    y
}

fn fid_oracle(a: &FeatureStats, b: &FeatureStats) -> f64 {
    let d = &a.mean - &b.mean;
    let covmean = sqrtm_db(&(&a.cov * &b.cov));
    d.dot(&d) + a.cov.trace() + b.cov.trace() - 2.0 * covmean.trace()
}

fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &m * m.transpose() + DMatrix::identity(n, n) * 0.1
}

fn fid_cases() -> Outcome {
    let one = |m: f64, v: f64| stats(&[m], DMatrix::from_element(1, 1, v));
    let same = fid(&one(0.3, 2.0), &one(0.3, 2.0)).map_err(err)?;
    check(same.abs() <= 1e-8, format!("identical stats: {same}"))?;
    let shift = fid(&one(0.0, 1.0), &one(1.0, 1.0)).map_err(err)?;
    check((shift - 1.0).abs() <= 1e-8, format!("mean shift: {shift}"))?;
    let scale = fid(&one(0.0, 1.0), &one(0.0, 4.0)).map_err(err)?;
    check(
        (scale - 1.0).abs() <= 1e-8,
        format!("variance 1 vs 4: {scale}"),
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (mut worst_rel, mut worst_sym) = (0.0f64, 0.0f64);
    for i in 0..20 {
        let mean = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..3).map(|_| rng.random_range(-2.0..2.0)).collect()
        };
        let a = stats(&mean(&mut rng), random_spd(&mut rng, 3));
        let b = stats(&mean(&mut rng), random_spd(&mut rng, 3));
        let ab = fid(&a, &b).map_err(err)?;
        let ba = fid(&b, &a).map_err(err)?;
        let want = fid_oracle(&a, &b);
        let rel = (ab - want).abs() / want.abs().max(1e-12);
        worst_rel = worst_rel.max(rel);
        worst_sym = worst_sym.max((ab - ba).abs());
        check(rel <= 1e-6, format!("case {i}: {ab} vs oracle {want}"))?;
        check(
            (ab - ba).abs() <= 1e-8,
            format!("case {i}: asymmetric {ab} vs {ba}"),
        )?;
    }
    Ok(format!(
        "closed forms exact to 1e-8; 20 random 3-D within {worst_rel:.1e} rel; |fid(a,b)-fid(b,a)| ≤ {worst_sym:.1e}"
    ))
}

// ---------------------------------------------------------------- IS

fn is_cases() -> Outcome {
    let row = vec![0.1, 0.2, 0.3, 0.4];
    let same = inception_score_from_probs(&vec![row; 40], 4).map_err(err)?;
    check(
        same.split_scores.iter().all(|s| (s - 1.0).abs() <= 1e-9),
        format!("identical rows: {:?}", same.split_scores),
    )?;

    // One-hot through softmax of a large margin, 10 classes cycling so every
    // contiguous split of 10 rows is balanced.
    let logits: Vec<Vec<f32>> = (0..100)
        .map(|i| {
            (0..10)
                .map(|c| if c == i % 10 { 60.0 } else { 0.0 })
                .collect()
        })
        .collect();
    let ids: Vec<u64> = (0..100).collect();
    let m =
        FeatureMatrix::from_rows(FeatureKind::InceptionLogits, 10, &logits, &ids).map_err(err)?;
    let onehot = ptd_core::metrics::inception_score(&m, 10).map_err(err)?;
    check(
        onehot.split_scores.iter().all(|s| (s - 10.0).abs() <= 1e-6),
        format!("balanced one-hot: {:?}", onehot.split_scores),
    )?;

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let probs: Vec<Vec<f64>> = (0..50)
        .map(|_| {
            let raw: Vec<f64> = (0..7).map(|_| rng.random::<f64>() + 1e-3).collect();
            let s: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / s).collect()
        })
        .collect();
    let got = inception_score_from_probs(&probs, 1).map_err(err)?.mean;
    let mut marginal = [0.0; 7];
    for r in &probs {
        for (j, p) in r.iter().enumerate() {
            marginal[j] += p / 50.0;
        }
    }
    let mut kl = 0.0;
    for r in &probs {
        for j in 0..7 {
            kl += r[j] * (r[j].ln() - marginal[j].ln());
        }
    }
    let want = (kl / 50.0).exp();
    check(
        (got - want).abs() <= 1e-9,
        format!("random: {got} vs oracle {want}"),
    )?;
    Ok(format!(
        "identical 1.0, one-hot C=10 {:.9}, random {got:.6} = oracle",
        onehot.mean
    ))
}

// ---------------------------------------------------------------- flags

fn flag_analytics() -> Outcome {
    // Two textures × optional red; "paisley" is flagged on every draw and
    // "red" only on each prompt's first draw. With n_keep 2 and 3 attempts
    // per slot:
    //   paisley, red paisley: 6 attempts, 6 flagged, incomplete
    //   red woven:            3 attempts, 1 flagged
    //   woven:                2 attempts, 0 flagged
    let table = DescriptorTable {
        textures: vec!["paisley".into(), "woven".into()],
        artistic: vec!["".into()],
        spatial: vec!["".into()],
        enhancer: vec!["".into()],
        color: vec!["".into(), "red".into()],
        templates: vec![ptd_core::prompt::DEFAULT_TEMPLATE.into()],
    };
    let prompts = enumerate_prompts(&table).map_err(err)?;
    let mut first_draw = std::collections::HashSet::new();
    for p in &prompts {
        first_draw.insert(seed_for(p.prompt_id, 1));
    }
    let schedule = FlagSchedule::custom(move |text, seed| {
        let words: Vec<&str> = text.split_whitespace().collect();
        words.contains(&"paisley") || (words.contains(&"red") && first_draw.contains(&seed))
    });
    let dir = tempfile::tempdir().map_err(err)?;
    let layout = DatasetLayout::new(dir.path());
    let config = GenerationConfig {
        n_keep: 2,
        max_attempts: 3,
        width: 32,
        height: 32,
        ..GenerationConfig::default()
    };
    run_generation(&prompts, &MockBackend::new(schedule), &config, &layout, 2).map_err(err)?;
    let images: Vec<ImageRecord> = read_jsonl_or_empty(&layout.manifest()).map_err(err)?;
    let ledger: Vec<FlagLedgerEntry> = read_jsonl_or_empty(&layout.ledger()).map_err(err)?;
    let report = flag_rates_by_word(&prompts, &images, &ledger).map_err(err)?;
    let get = |w: &str| report.words.iter().find(|r| r.word == w).cloned();
    let expect = [
        ("paisley", 12, 12, 1.0, 1.0),
        ("woven", 5, 1, 0.2, 0.5),
        ("red", 9, 7, 7.0 / 9.0, 1.0),
    ];
    for (word, attempts, flagged, image_ratio, prompt_ratio) in expect {
        let r = get(word).ok_or(format!("no row for {word}"))?;
        check(
            r.attempts == attempts
                && r.flagged_attempts == flagged
                && r.image_flag_ratio == image_ratio
                && r.prompt_flag_ratio == prompt_ratio,
            format!("{word}: {r:?}"),
        )?;
    }
    check(
        report.total_attempts == 17 && report.flagged_attempts == 13,
        format!(
            "overall {}/{}",
            report.flagged_attempts, report.total_attempts
        ),
    )?;
    check(
        report.overall_image_flag_ratio == ledger.len() as f64 / 17.0,
        "overall ratio differs from ledger size / attempts",
    )?;
    Ok("paisley 12/12 prompt 1.0, woven 1/5 prompt 0.5, red 7/9 prompt 1.0, overall 13/17".into())
}

// ---------------------------------------------------------------- eval

fn rec(id: u64, depth: usize) -> ImageRecord {
    let p = PromptRecord {
        prompt_id: id,
        slots: Slots {
            texture: "woven".into(),
            ..Slots::default()
        },
        template_id: 0,
        text: "woven texture".into(),
    };
    let mut r = ImageRecord::from_prompt(&p, id, id, 1);
    r.survives = Survival {
        freq: Some(depth >= 1),
        patchvar: (depth >= 1).then_some(depth >= 2),
        clip: (depth >= 2).then_some(depth >= 3),
    };
    r
}

fn eval_aggregation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let records: Vec<ImageRecord> = (0..200).map(|i| rec(i, rng.random_range(0..4))).collect();
    let ratings: Vec<RatingRecord> = (0..600)
        .map(|i| RatingRecord {
            session_id: format!("session-{:02}", i / 100 + 1),
            image_id: rng.random_range(0..200),
            quality: rng.random_range(1..=5),
            representativeness: rng.random_range(1..=5),
            comment: None,
            timestamp: i,
        })
        .collect();
    let table = aggregate_by_stage(&ratings, &records).map_err(err)?;
    let depth = |id: u64| {
        let s = records[id as usize].survives;
        [s.freq, s.patchvar, s.clip]
            .iter()
            .take_while(|v| **v == Some(true))
            .count()
    };
    let mut worst = 0.0f64;
    for b in 0..4 {
        let (mut n, mut q, mut r) = (0usize, 0.0, 0.0);
        for rating in &ratings {
            if depth(rating.image_id) >= b {
                n += 1;
                q += f64::from(rating.quality);
                r += f64::from(rating.representativeness);
            }
        }
        let row = &table.rows[b];
        let (mq, mr) = (
            row.quality.unwrap_or(f64::NAN),
            row.representativeness.unwrap_or(f64::NAN),
        );
        let dq = (mq - q / n as f64).abs();
        let dr = (mr - r / n as f64).abs();
        worst = worst.max(dq).max(dr);
        check(
            row.n == n && dq <= 1e-12 && dr <= 1e-12,
            format!("bucket {b}: {row:?}"),
        )?;
    }
    let quality = format_percent(relative_change(3.87, 4.00));
    let repr = format_percent(relative_change(3.56, 3.72));
    check(
        quality == "3.4%" && repr == "4.5%",
        format!("fixture printed {quality} / {repr}"),
    )?;
    Ok(format!("4 buckets within {worst:.1e}; published means → {quality} quality, {repr} representativeness"))
}

// ---------------------------------------------------------------- TAV

fn tav_toy() -> Outcome {
    let classes = ["banded", "braided", "dotted", "spiraled", "wavy"];
    let labels: Vec<String> = ["zebra", "knot", "coil", "apple", "wig", "bead"]
        .map(String::from)
        .to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut records = Vec::new();
    let mut rows: Vec<Vec<f32>> = Vec::new();
    let mut ids = Vec::new();
    for i in 0..60u64 {
        let class = classes[rng.random_range(0..classes.len())];
        let mut r = rec(i, 0);
        r.slots.texture = class.into();
        records.push(r);
        let raw: Vec<f64> = (0..6).map(|_| rng.random::<f64>()).collect();
        let s: f64 = raw.iter().sum();
        rows.push(raw.iter().map(|v| (v / s) as f32).collect());
        ids.push(i);
    }
    // One class whose images all have a uniform row: a full tie.
    for i in 60..63u64 {
        let mut r = rec(i, 0);
        r.slots.texture = "lined".into();
        records.push(r);
        rows.push(vec![1.0 / 6.0; 6]);
        ids.push(i);
    }
    let probs =
        FeatureMatrix::from_rows(FeatureKind::ClassifierProbs, 6, &rows, &ids).map_err(err)?;
    let table = compute_tav(&records, &probs, &labels).map_err(err)?;
    for (t, class) in table.textures.iter().enumerate() {
        let members: Vec<usize> = (0..records.len())
            .filter(|&i| records[i].texture_class() == class)
            .collect();
        for o in 0..6 {
            let mut s = 0.0;
            for &i in &members {
                s += f64::from(rows[i][o]);
            }
            let want = s / members.len() as f64;
            check(
                (table.values[t][o] - want).abs() <= 1e-12,
                format!("{class}/{}", labels[o]),
            )?;
        }
        let sum: f64 = table.values[t].iter().sum();
        check(
            (sum - 1.0).abs() <= 1e-5,
            format!("{class} row sums to {sum}"),
        )?;
    }
    let top = top_k_associations(&table, 3);
    let tie: Vec<&str> = top["lined"].iter().map(|a| a.object.as_str()).collect();
    check(
        tie == ["apple", "bead", "coil"],
        format!("tie order {tie:?}"),
    )?;
    for (t, class) in table.textures.iter().enumerate() {
        let mut order: Vec<usize> = (0..6).collect();
        order.sort_by(|&a, &b| {
            table.values[t][b]
                .total_cmp(&table.values[t][a])
                .then(labels[a].cmp(&labels[b]))
        });
        let want: Vec<&str> = order[..3].iter().map(|&o| labels[o].as_str()).collect();
        let got: Vec<&str> = top[class].iter().map(|a| a.object.as_str()).collect();
        check(got == want, format!("{class}: {got:?} vs {want:?}"))?;
    }
    Ok(format!(
        "{} classes match nested-loop means, rows sum to 1, ties → apple, bead, coil",
        table.textures.len()
    ))
}

// ---------------------------------------------------------------- PTDF

fn ptdf_robustness() -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for kind in FeatureKind::ALL {
        let (n, dim) = (rng.random_range(1..40), rng.random_range(1..20));
        let rows: Vec<Vec<f32>> = (0..n)
            .map(|_| (0..dim).map(|_| rng.random::<f32>() * 1e3 - 5e2).collect())
            .collect();
        let ids: Vec<u64> = (0..n as u64).map(|i| i * 7 + 3).collect();
        let m = FeatureMatrix::from_rows(kind, dim, &rows, &ids).map_err(err)?;
        let path = dir.path().join(kind.file_name());
        save_features(&path, &m).map_err(err)?;
        let back = load_features_of(&path, kind).map_err(err)?;
        let same_bits = back
            .values()
            .iter()
            .zip(m.values())
            .all(|(a, b)| a.to_bits() == b.to_bits());
        check(
            same_bits && back.ids() == m.ids() && back.dim() == dim,
            format!("{kind} round trip"),
        )?;
    }

    let kind = FeatureKind::ClipImage;
    let rows: Vec<Vec<f32>> = (0..8).map(|i| vec![i as f32; 4]).collect();
    let ids: Vec<u64> = (0..8).collect();
    let path = dir.path().join("fuzz.ptdf");
    save_features(
        &path,
        &FeatureMatrix::from_rows(kind, 4, &rows, &ids).map_err(err)?,
    )
    .map_err(err)?;
    let original = std::fs::read(&path).map_err(err)?;
    for case in 0..100 {
        let mut bytes = original.clone();
        let pos = rng.random_range(0..32);
        bytes[pos] ^= rng.random_range(1..=255u8);
        // Every other case re-seals the checksum so field validation, not
        // only the CRC, has to catch the change.
        if case % 2 == 1 && pos < 28 {
            let crc = crc32fast::hash(&bytes[..28]);
            bytes[28..32].copy_from_slice(&crc.to_le_bytes());
        }
        std::fs::write(&path, &bytes).map_err(err)?;
        check(
            load_features_of(&path, kind).is_err(),
            format!("case {case}: header byte {pos} mutated and the file still loaded"),
        )?;
    }
    Ok("5 kinds round-trip bit-exact; 100 header mutations all rejected".into())
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("prompt enumeration", prompt_enumeration),
        ("cascade retention", cascade_retention),
        ("f_c oracle", fc_oracle),
        ("patch variance", patch_variance_cases),
        ("FID closed forms", fid_cases),
        ("Inception Score limits", is_cases),
        ("flag analytics", flag_analytics),
        ("human-eval aggregation", eval_aggregation),
        ("determinism", determinism),
        ("TAV toy", tav_toy),
        ("format robustness", ptdf_robustness),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        match run() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
