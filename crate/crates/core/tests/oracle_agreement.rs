mod oracle;

use cotlab_core::ambiguity::{chain_ambiguity, input_ambiguity};
use cotlab_core::bounds::{proof_quantities, theorem_rhs, verify_instance, PriorMode, VerifyOptions};
use cotlab_core::chain::sample_chain;
use cotlab_core::exact::{
    enumerate_tails, joint_prob, marginal_prob, p_llm_conditional, posterior_latents, prefix_prob_enumerate,
    prefix_prob_given_context, prompt_marginal, q_true_conditional,
};
use cotlab_core::fixtures::{generate_random_model, make_fixture, Fixture, GeneratorParams};
use cotlab_core::model::{ContextId, IntentionId, KernelFamily, MessageId, ModelSpec};
use cotlab_core::{LabeledChain, PromptInstance};
use oracle::rel_close;

fn m(spec: &ModelSpec, names: &[&str]) -> Vec<MessageId> {
    spec.parse_messages(names).unwrap()
}

fn chain(spec: &ModelSpec, msgs: &[&str], c: usize, ts: &[&str], complete: bool) -> LabeledChain {
    LabeledChain {
        messages: m(spec, msgs),
        context: ContextId(c),
        intentions: ts.iter().map(|t| spec.intention_id(t).unwrap()).collect(),
        complete,
    }
}

fn close(a: f64, b: f64) {
    assert!((a - b).abs() < 1e-12, "{a} vs {b}");
}

/// Pins a value after checking it against the oracle.
fn pinned(got: f64, oracle: f64, expected: f64) {
    close(oracle, expected);
    close(got, expected);
}

fn random_models() -> Vec<ModelSpec> {
    let mut out = Vec::new();
    for (i, family) in [KernelFamily::Markov, KernelFamily::Full].into_iter().enumerate() {
        for seed in 0..4u64 {
            let sizes = [(2, 3, 4), (3, 4, 5), (2, 5, 6), (4, 5, 6)][seed as usize];
            let alpha = [0.0, 0.3, 0.6, 0.9][(seed as usize + i) % 4];
            let mut p = GeneratorParams::new(sizes, alpha, family, 100 + seed);
            if alpha == 0.0 {
                p.n_contexts = p.n_contexts.min(p.n_intentions - 1);
            }
            out.push(generate_random_model(&p).unwrap());
        }
    }
    out
}

#[test]
fn joint_prob_examples() {
    let a = make_fixture(Fixture::TinyA);
    let z = chain(&a, &["a", "<END>"], 0, &["t0", "END"], true);
    let o = a.context_prior[0] * oracle::path_prob(&a, 0, &[0, 2], &[0, 2]);
    pinned(joint_prob(&a, &z), o, 0.25);
    let mut wrong = z.clone();
    wrong.context = ContextId(1);
    assert_eq!(joint_prob(&a, &wrong), 0.0);
    let s = make_fixture(Fixture::SingleC);
    for seed in 0..50 {
        assert!(joint_prob(&s, &sample_chain(&s, ContextId(0), seed).unwrap()) > 0.0);
    }
}

#[test]
fn prefix_and_marginal_examples() {
    let a = make_fixture(Fixture::TinyA);
    let b = make_fixture(Fixture::TinyB);
    let c0 = ContextId(0);
    let x = m(&a, &["a"]);
    pinned(prefix_prob_given_context(&a, &x, c0), oracle::prefix(&a, &x, 0), 1.0);
    pinned(prefix_prob_given_context(&b, &x, c0), oracle::prefix(&b, &x, 0), 0.8);
    let z = m(&b, &["a", "<END>"]);
    pinned(prefix_prob_given_context(&b, &z, c0), oracle::prefix(&b, &z, 0), 0.4);
    assert_eq!(prefix_prob_given_context(&a, &m(&a, &["b"]), c0), 0.0);
    pinned(marginal_prob(&a, &z), oracle::marginal(&a, &z), 0.25);
    pinned(marginal_prob(&b, &x), oracle::marginal(&b, &x), 0.5);
}

#[test]
fn complete_chain_mass_grows_to_at_most_one() {
    for spec in [make_fixture(Fixture::TinyB), random_models().remove(1)] {
        let mut last = 0.0;
        for len in 1..=6 {
            let total: f64 = enumerate_tails(&spec, len)
                .iter()
                .filter(|t| spec.is_stop(*t.last().unwrap()))
                .map(|t| marginal_prob(&spec, t))
                .sum();
            assert!(total >= last - 1e-15 && total <= 1.0 + 1e-12, "{total}");
            last = total;
        }
    }
}

#[test]
fn prompt_marginal_examples() {
    let b = make_fixture(Fixture::TinyB);
    let z = vec![m(&b, &["a", "<END>"])];
    let x = m(&b, &["a"]);
    pinned(prompt_marginal(&b, &z, &x).unwrap(), oracle::prompt_marginal(&b, &z, &x), 0.17);
    close(prompt_marginal(&b, &[], &x).unwrap(), marginal_prob(&b, &x));
    let s = make_fixture(Fixture::SingleC);
    let zs = vec![m(&s, &["a", "b", "<END>"]), m(&s, &["b", "<END>"])];
    let expected = oracle::prefix(&s, &zs[0], 0) * oracle::prefix(&s, &zs[1], 0) * oracle::prefix(&s, &x, 0);
    close(prompt_marginal(&s, &zs, &x).unwrap(), expected);
}

#[test]
fn posterior_examples() {
    let a = make_fixture(Fixture::TinyA);
    let z = m(&a, &["a", "<END>"]);
    let post = posterior_latents(&a, &z).unwrap();
    assert_eq!(post.entries.len(), 1);
    close(post.probability(ContextId(0), &[IntentionId(0), IntentionId(2)]), 1.0);

    let b = make_fixture(Fixture::TinyB);
    let post = posterior_latents(&b, &z).unwrap();
    let o = oracle::posterior(&b, &z);
    let get = |c: usize, ts: &[usize]| o.iter().find(|e| e.0 == (c, ts.to_vec())).map_or(0.0, |e| e.1);
    pinned(post.probability(ContextId(0), &[IntentionId(0), IntentionId(2)]), get(0, &[0, 2]), 0.8);
    pinned(post.probability(ContextId(1), &[IntentionId(1), IntentionId(2)]), get(1, &[1, 2]), 0.2);
    close(post.evidence, 0.25);
}

#[test]
fn conditional_examples() {
    let a = make_fixture(Fixture::TinyA);
    let b = make_fixture(Fixture::TinyB);
    let x = m(&b, &["a"]);
    let z = vec![m(&b, &["a", "<END>"])];
    pinned(p_llm_conditional(&b, &x, &x, &z).unwrap(), oracle::p_llm(&b, &x, &x, &z), 6.5 / 17.0);
    pinned(p_llm_conditional(&a, &x, &x, &z).unwrap(), oracle::p_llm(&a, &x, &x, &z), 0.5);
    assert_eq!(p_llm_conditional(&b, &[], &x, &z).unwrap(), 1.0);
    pinned(q_true_conditional(&b, &x, &x, ContextId(0)).unwrap(), oracle::q_true(&b, &x, &x, 0), 0.4);
    let stop = m(&a, &["<END>"]);
    pinned(q_true_conditional(&a, &stop, &x, ContextId(0)).unwrap(), oracle::q_true(&a, &stop, &x, 0), 0.5);
    assert_eq!(q_true_conditional(&b, &[], &x, ContextId(1)).unwrap(), 1.0);
}

#[test]
fn ambiguity_examples() {
    let b = make_fixture(Fixture::TinyB);
    let z = chain(&b, &["a", "<END>"], 0, &["t0", "END"], true);
    pinned(chain_ambiguity(&b, &z).unwrap(), oracle::ambiguity(&b, &z.messages, 0, &z.intentions), 0.2);
    let x = chain(&b, &["a"], 0, &["t0"], false);
    pinned(input_ambiguity(&b, &x).unwrap(), oracle::ambiguity(&b, &x.messages, 0, &x.intentions), 0.2);
    let s = make_fixture(Fixture::SingleC);
    let xs = chain(&s, &["a"], 0, &["t0"], false);
    pinned(input_ambiguity(&s, &xs).unwrap(), oracle::ambiguity(&s, &xs.messages, 0, &xs.intentions), 0.0);
}

#[test]
fn worked_bound_example() {
    let b = make_fixture(Fixture::TinyB);
    let inst = PromptInstance {
        examples: vec![chain(&b, &["a", "<END>"], 0, &["t0", "END"], true)],
        input: chain(&b, &["a"], 0, &["t0"], false),
        true_context: ContextId(0),
    };
    let x = inst.input.messages.clone();
    let zs = inst.example_messages();
    let o_gap = (oracle::p_llm(&b, &x, &x, &zs) - oracle::q_true(&b, &x, &x, 0)).abs();
    let e0 = oracle::ambiguity(&b, &x, 0, &inst.input.intentions);
    let e1 = oracle::ambiguity(&b, &zs[0], 0, &inst.examples[0].intentions);
    let o_rhs = 2.0 * e0 / (1.0 - e0) * e1 / (1.0 - e1);
    let rep = verify_instance(&b, &inst, VerifyOptions::default()).unwrap();
    let t = rep.tails.iter().find(|t| t.tail == x).unwrap();
    pinned(t.gap, o_gap, 0.4 - 6.5 / 17.0);
    pinned(rep.rhs_uniform, o_rhs, 0.125);
    pinned(theorem_rhs(&b, &inst, PriorMode::UniformAsserted).unwrap().rhs, o_rhs, 0.125);

    // Intermediates from the oracle's joint masses.
    let q = |msgs: &[MessageId], c: usize| oracle::prefix(&b, msgs, c);
    let xa = oracle::concat(&x, &x);
    let den = 0.5 * q(&x, 0) * q(&zs[0], 0);
    let pq = proof_quantities(&b, &inst, &x).unwrap();
    close(pq.a, 0.5 * q(&xa, 1) * q(&zs[0], 1) / den);
    close(pq.b, 0.5 * q(&x, 1) * q(&zs[0], 1) / den);
    close(pq.a1, q(&x, 1) / q(&x, 0));
    close(pq.a2[0], q(&zs[0], 1) / q(&zs[0], 0));
}

#[test]
fn tails_match_oracle_set() {
    for spec in [make_fixture(Fixture::TinyA), random_models().remove(3)] {
        for len in 1..=3 {
            let mut mine = enumerate_tails(&spec, len);
            let mut theirs = oracle::tails(&spec, len);
            assert!(mine.windows(2).all(|w| w[0] < w[1]), "lexicographic order");
            mine.sort();
            theirs.sort();
            assert_eq!(mine, theirs);
        }
    }
}

#[test]
fn exhaustive_short_sequences_match() {
    for spec in random_models().into_iter().chain(Fixture::ALL.map(make_fixture)) {
        for len in 1..=3 {
            for seq in enumerate_tails(&spec, len).into_iter().filter(|t| t.len() == len) {
                for c in spec.context_ids() {
                    let want = oracle::prefix(&spec, &seq, c.0);
                    assert!(rel_close(prefix_prob_given_context(&spec, &seq, c), want, 1e-12));
                    assert!(rel_close(prefix_prob_enumerate(&spec, &seq, c), want, 1e-12));
                }
            }
        }
    }
}

#[test]
fn sampled_chains_match_oracle() {
    for (i, spec) in random_models().into_iter().enumerate() {
        for seed in 0..15u64 {
            let c = ContextId(seed as usize % spec.n_contexts());
            let Ok(z) = sample_chain(&spec, c, 1000 * i as u64 + seed) else {
                continue;
            };
            if z.len() > 6 {
                continue;
            }
            let want = oracle::ambiguity(&spec, &z.messages, c.0, &z.intentions);
            let got = chain_ambiguity(&spec, &z).unwrap();
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");

            let post = posterior_latents(&spec, &z.messages).unwrap();
            let o = oracle::posterior(&spec, &z.messages);
            assert_eq!(post.entries.len(), o.len());
            for ((oc, ots), p) in o {
                let ts: Vec<IntentionId> = ots.into_iter().map(IntentionId).collect();
                assert!(rel_close(post.probability(ContextId(oc), &ts), p, 1e-12));
            }

            let x = &z.messages[..1];
            for tail in enumerate_tails(&spec, 2) {
                let zs = vec![z.messages.clone()];
                let got = p_llm_conditional(&spec, &tail, x, &zs).unwrap();
                assert!(rel_close(got, oracle::p_llm(&spec, &tail, x, &zs), 1e-12));
                let got = q_true_conditional(&spec, &tail, x, c).unwrap();
                assert!(rel_close(got, oracle::q_true(&spec, &tail, x, c.0), 1e-12));
            }
        }
    }
}
