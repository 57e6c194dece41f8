use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dtv_core::backend::{Backend, ScriptedBackend, ScriptedFixture};
use dtv_core::controller::{apply_ablation, run_inner, Ablation, InnerCase, InnerConfig, OracleEnv};
use dtv_core::oracle::Toolchain;
use dtv_core::prompt::translation_context;
use dtv_core::scope::Task;
use dtv_core::selftest::{stub_oracle, tokens, SOURCE};

use super::ensure;

const PIECES: &[&str] = &[
    "fn main() {\n    let a = 1;",
    "\n    if a > 0 {\n        let b = 2;",
    "\n        let c = bad;",
    "\n        let c = b;",
    "\n    }",
    "\n}",
    "\n    let s = \"; } {\";",
    "\n    // bad ; }\n",
    "\n    words without any terminator at all here",
    "}",
    "@@ -3,1 +3,1 @@\n-        let c = bad;\n+        let c = b;\n",
];

fn random_stream(rng: &mut ChaCha8Rng) -> ScriptedFixture {
    let calls = rng.random_range(0..40);
    let mut out = Vec::with_capacity(calls);
    for _ in 0..calls {
        let mut text = String::new();
        for _ in 0..rng.random_range(1..4) {
            text.push_str(PIECES[rng.random_range(0..PIECES.len())]);
        }
        out.push(tokens(&text));
    }
    ScriptedFixture::single(out)
}

/// Random scripted streams, budgets, chunk sizes and ablation flags, one per
/// seed.
pub fn check_seeds(seeds: std::ops::Range<u64>) -> Result<(), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let specs = [stub_oracle()];
    let tools = Toolchain::default();
    let env = OracleEnv {
        specs: &specs,
        tools: &tools,
        workdir: dir.path(),
    };
    let context = translation_context(Task::CToRust, SOURCE);
    let case = InnerCase {
        task: Task::CToRust,
        source: SOURCE,
        context: &context,
    };
    for seed in seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let backend = ScriptedBackend::new(random_stream(&mut rng));
        let mut cfg = InnerConfig::new(Task::CToRust, rng.random_range(1..300));
        cfg.chunk_size = rng.random_range(1..12);
        cfg.max_new = rng.random_range(4..80);
        cfg.reply_cap = rng.random_range(4..40);
        cfg.max_steps = 200;
        let flags = Ablation {
            no_feedback: rng.random_bool(0.2),
            no_escalation: rng.random_bool(0.2),
            detect_and_abort: rng.random_bool(0.1),
        };
        let cfg = apply_ablation(&cfg, flags);
        let mut session = backend.session(0, seed);
        let r = run_inner(&case, session.as_mut(), &env, &cfg, seed).map_err(|e| format!("seed {seed}: {e}"))?;

        ensure(r.tokens_used <= cfg.budget + cfg.chunk_size, || {
            format!("seed {seed}: used {} of {} (chunk {})", r.tokens_used, cfg.budget, cfg.chunk_size)
        })?;
        ensure(r.trace.len() <= cfg.max_steps, || format!("seed {seed}: {} steps", r.trace.len()))?;
        let generated: usize = r.trace.iter().map(|m| m.tokens_generated).sum();
        ensure(generated == r.tokens_used, || {
            format!("seed {seed}: generated {generated}, charged {}", r.tokens_used)
        })?;
        let discarded: usize = r.trace.iter().map(|m| m.tokens_discarded).sum();
        ensure(discarded == r.tokens_discarded && discarded <= r.tokens_used, || {
            format!("seed {seed}: discarded {discarded} vs {} of {}", r.tokens_discarded, r.tokens_used)
        })?;
        ensure(r.trace.windows(2).all(|w| w[0].tokens_used <= w[1].tokens_used), || {
            format!("seed {seed}: charge decreased")
        })?;
    }
    Ok(())
}
