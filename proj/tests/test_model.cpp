#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "prnmt/model.hpp"
#include "toy.hpp"

using namespace prnmt;

TEST_CASE("init is deterministic per seed") {
    const auto c = toy::tiny_config(8, 7);
    CHECK(init_params(c, {5}) == init_params(c, {5}));
    CHECK_FALSE(init_params(c, {5}) == init_params(c, {6}));
}

TEST_CASE("init scales weights by fan-in and zeroes biases") {
    ModelConfig c = toy::tiny_config(10, 9, 32, 64);
    const ModelParams p = init_params(c, {1});
    const auto shapes = block_shapes(c);
    for (std::size_t b = 0; b < kNumParamBlocks; ++b) {
        const auto id = static_cast<ParamId>(b);
        CHECK(static_cast<std::size_t>(p.blocks[b].rows()) == shapes[b].first);
        CHECK(static_cast<std::size_t>(p.blocks[b].cols()) == shapes[b].second);
        if (is_bias(id)) {
            CHECK(p.blocks[b].isZero(0.0));
        } else {
            const double fan_in = id == ParamId::kAttV ? static_cast<double>(p.blocks[b].rows())
                                                       : static_cast<double>(p.blocks[b].cols());
            CHECK(p.blocks[b].cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(fan_in));
        }
    }
}

TEST_CASE("large and small model shapes are accepted") {
    ModelConfig big;
    big.src_vocab = 12;
    big.tgt_vocab = 12;
    big.embed_dim = 620;
    big.hidden_dim = 1000;
    CHECK_NOTHROW(big.validate());
    const auto shapes = block_shapes(big);
    CHECK(shapes[static_cast<std::size_t>(ParamId::kDecW)] == std::pair<std::size_t, std::size_t>(3000, 2620));

    ModelConfig desk = toy::tiny_config(40, 40, 32, 64);
    CHECK_NOTHROW(init_params(desk, {3}));

    ModelConfig bad = desk;
    bad.hidden_dim = 0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("forced decoding gives a log-probability and normalized attention rows") {
    std::mt19937_64 rng(11);
    const auto c = toy::tiny_config(9, 8);
    const ModelParams p = toy::sharp_params(c, 4);
    for (int trial = 0; trial < 20; ++trial) {
        const auto x = toy::random_ids(rng, 9, 1 + trial % 5);
        const auto y = toy::random_ids(rng, 8, 1 + (trial * 3) % 5);
        const ForcedResult r = forward_logprob(p, x, y);
        CHECK(r.log_prob <= 0.0);
        REQUIRE(r.attention.rows() == y.size() + 1);
        REQUIRE(r.attention.cols() == x.size());
        for (std::size_t j = 0; j < r.attention.rows(); ++j) {
            double s = 0.0;
            for (double a : r.attention.row(j)) {
                CHECK(a >= 0.0);
                s += a;
            }
            CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
        }
    }
}

TEST_CASE("zero output weights give -log V per step") {
    const auto c = toy::tiny_config(6, 7);
    ModelParams p = init_params(c, {2});
    p[ParamId::kOutW].setZero();
    p[ParamId::kOutB].setZero();
    const TokenIds x{4, 5, 4};
    const TokenIds y{5, 6};
    const double expected = -3.0 * std::log(7.0);
    CHECK(forward_logprob(p, x, y).log_prob == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("step distributions are normalized") {
    std::mt19937_64 rng(3);
    const auto c = toy::tiny_config(9, 8);
    const ModelParams p = toy::sharp_params(c, 9);
    const auto x = toy::random_ids(rng, 9, 4);
    const EncodedSource enc = encode_source(p, x);
    Eigen::VectorXd state = initial_state(p, enc);
    TokenId prev = kBos;
    for (int step = 0; step < 6; ++step) {
        const StepOutput out = decode_step(p, enc, state, prev);
        CHECK(out.log_probs.array().exp().sum() == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(out.attention.sum() == doctest::Approx(1.0).epsilon(1e-9));
        state = out.state;
        prev = static_cast<TokenId>(4 + step % 4);
    }
}

TEST_CASE("incremental and taped forced decoding agree") {
    std::mt19937_64 rng(21);
    const auto c = toy::tiny_config(10, 9);
    const ModelParams p = toy::sharp_params(c, 8);
    for (int trial = 0; trial < 10; ++trial) {
        const auto x = toy::random_ids(rng, 10, 1 + trial % 6);
        auto steps = toy::random_ids(rng, 9, trial % 5);
        steps.push_back(kEos);
        const ForcedResult incremental = score_steps(p, x, steps);
        const ForcedResult taped = forward_logprob(p, x, strip_eos(steps));
        CHECK(std::abs(incremental.log_prob - taped.log_prob) <= 1e-10);
        Gradient g = Gradient::zeros_like(p);
        CHECK(std::abs(accumulate_gradient(p, x, steps, 1.0, g) - taped.log_prob) <= 1e-10);

        // one step at a time
        const EncodedSource enc = encode_source(p, x);
        Eigen::VectorXd state = initial_state(p, enc);
        TokenId prev = kBos;
        double total = 0.0;
        for (TokenId t : steps) {
            const StepOutput out = decode_step(p, enc, state, prev);
            total += out.log_probs[t];
            state = out.state;
            prev = t;
        }
        CHECK(std::abs(total - taped.log_prob) <= 1e-10);
    }
}

TEST_CASE("backpropagation matches central differences in every block") {
    const auto c = toy::tiny_config(7, 8);
    const ModelParams p = toy::sharp_params(c, 12, 1.5);
    const TokenIds x{4, 6, 5};
    const TokenIds y{7, 4, 6};
    const LogProbGradient g = grad_logprob(p, x, y);
    const Gradient n = toy::numeric_gradient(p, [&](const ModelParams& q) { return forward_logprob(q, x, y).log_prob; });
    for (std::size_t b = 0; b < kNumParamBlocks; ++b) {
        Gradient a1 = Gradient::zeros_like(p), n1 = Gradient::zeros_like(p);
        a1.blocks[b] = g.gradient.blocks[b];
        n1.blocks[b] = n.blocks[b];
        const auto cmp = toy::compare_gradients(a1, n1, 1e-4);
        INFO(param_name(static_cast<ParamId>(b)));
        CHECK(cmp.failures == 0);
        CHECK(cmp.norm_relative <= 1e-4);
        CHECK(g.gradient.blocks[b].norm() > 0.0);
    }
}

TEST_CASE("gradients of unused embeddings are exactly zero and calls are deterministic") {
    const auto c = toy::tiny_config(9, 9);
    const ModelParams p = toy::sharp_params(c, 2);
    const TokenIds x{4, 5};
    const TokenIds y{6};
    const LogProbGradient g = grad_logprob(p, x, y);
    const auto& src = g.gradient[ParamId::kSrcEmbed];
    const auto& tgt = g.gradient[ParamId::kTgtEmbed];
    for (int v : {0, 1, 2, 3, 6, 7, 8}) {
        CHECK(src.row(v).isZero(0.0));
    }
    // target embeddings feed the next step: BOS and 6 are read, EOS is only predicted
    for (int v : {0, 2, 3, 4, 5, 7, 8}) {
        CHECK(tgt.row(v).isZero(0.0));
    }
    CHECK_FALSE(tgt.row(kBos).isZero(0.0));
    const LogProbGradient again = grad_logprob(p, x, y);
    for (std::size_t b = 0; b < kNumParamBlocks; ++b) {
        CHECK(g.gradient.blocks[b] == again.gradient.blocks[b]);
    }
}

TEST_CASE("sampling is reproducible, bounded and deduplicated") {
    const auto c = toy::tiny_config(8, 8);
    const ModelParams p = toy::sharp_params(c, 3, 1.0);
    const TokenIds x{4, 5, 6};
    const SampleSet a = sample_translations(p, x, 80, 12, 99);
    const SampleSet b = sample_translations(p, x, 80, 12, 99);
    REQUIRE(a.hypotheses.size() == b.hypotheses.size());
    CHECK(a.hypotheses.size() <= 80);
    CHECK(a.hypotheses.size() > 1);
    std::set<TokenIds> seen;
    for (std::size_t n = 0; n < a.hypotheses.size(); ++n) {
        CHECK(a.hypotheses[n].tokens == b.hypotheses[n].tokens);
        CHECK(a.hypotheses[n].log_prob == b.hypotheses[n].log_prob);
        CHECK(seen.insert(a.hypotheses[n].tokens).second);
        const ForcedResult forced = score_steps(p, x, a.hypotheses[n].tokens);
        CHECK(std::abs(forced.log_prob - a.hypotheses[n].log_prob) <= 1e-10);
        CHECK(forced.attention == a.hypotheses[n].attention);
    }
}

TEST_CASE("a degenerate model yields a single sample") {
    const auto c = toy::tiny_config(6, 6);
    ModelParams p = init_params(c, {1});
    p[ParamId::kOutW].setZero();
    p[ParamId::kOutB].setZero();
    p[ParamId::kOutB](kEos, 0) = 40.0;
    const SampleSet s = sample_translations(p, TokenIds{4, 5}, 80, 10, 7);
    REQUIRE(s.hypotheses.size() == 1);
    CHECK(s.hypotheses[0].tokens == TokenIds{kEos});
}

TEST_CASE("sample frequencies match exact sequence probabilities") {
    // target vocab {0, 1, EOS}: 15 sequences up to length 3
    const auto c = toy::tiny_config(6, 3);
    const ModelParams p = toy::sharp_params(c, 17, 1.0);
    const TokenIds x{4, 5};
    const auto seqs = toy::all_sequences(3, 3);
    REQUIRE(seqs.size() == 15);
    double total = 0.0;
    std::map<TokenIds, double> prob;
    for (const auto& s : seqs) {
        prob[s] = std::exp(score_steps(p, x, s).log_prob);
        total += prob[s];
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));

    const int draws = 100000;
    std::map<TokenIds, int> counts;
    for (int d = 0; d < draws; ++d) {
        const SampleSet s = sample_translations(p, x, 1, 3, 1000 + static_cast<std::uint64_t>(d));
        ++counts[s.hypotheses[0].tokens];
    }
    for (const auto& [seq, pr] : prob) {
        const double freq = static_cast<double>(counts[seq]) / draws;
        const double se = std::sqrt(pr * (1.0 - pr) / draws);
        CHECK(std::abs(freq - pr) <= 3.0 * se + 1e-12);
    }
}

TEST_CASE("beam size one is greedy decoding") {
    std::mt19937_64 rng(5);
    const auto c = toy::tiny_config(9, 7);
    const ModelParams p = toy::sharp_params(c, 6);
    for (int trial = 0; trial < 30; ++trial) {
        const auto x = toy::random_ids(rng, 9, 1 + trial % 5);
        const auto beam = beam_search(p, x, 1, 8);
        const Hypothesis greedy = greedy_decode(p, x, 8);
        REQUIRE(beam.size() == 1);
        CHECK(beam[0].tokens == greedy.tokens);
        CHECK(beam[0].log_prob == greedy.log_prob);
    }
}

TEST_CASE("beam output is sorted, bounded and carries attention") {
    std::mt19937_64 rng(8);
    const auto c = toy::tiny_config(9, 12);
    const ModelParams p = toy::sharp_params(c, 2, 1.0);
    const auto x = toy::random_ids(rng, 9, 4);
    const auto kbest = beam_search(p, x, 10, 12);
    CHECK(kbest.size() <= 10);
    CHECK(kbest.size() >= 1);
    for (std::size_t n = 0; n < kbest.size(); ++n) {
        CHECK(kbest[n].attention.rows() == kbest[n].tokens.size());
        CHECK(std::abs(score_steps(p, x, kbest[n].tokens).log_prob - kbest[n].log_prob) <= 1e-10);
        if (n > 0) {
            CHECK(hypothesis_before(kbest[n - 1].log_prob, kbest[n - 1].tokens, kbest[n].log_prob, kbest[n].tokens));
        }
    }
}

TEST_CASE("wide beam matches exhaustive enumeration") {
    std::mt19937_64 rng(31);
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto c = toy::tiny_config(7, 3);
        const ModelParams p = toy::sharp_params(c, seed, 2.0);
        const auto x = toy::random_ids(rng, 7, 1 + seed % 4);
        std::vector<std::pair<double, TokenIds>> all;
        for (const auto& s : toy::all_sequences(3, 3)) {
            all.emplace_back(score_steps(p, x, s).log_prob, s);
        }
        std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
            return hypothesis_before(a.first, a.second, b.first, b.second);
        });
        for (std::size_t beam : {8u, 12u, 15u}) {
            const auto kbest = beam_search(p, x, beam, 3);
            const std::size_t expect = std::min<std::size_t>(beam, all.size());
            REQUIRE(kbest.size() == expect);
            for (std::size_t n = 0; n < expect; ++n) {
                CHECK(kbest[n].tokens == all[n].second);
                CHECK(std::abs(kbest[n].log_prob - all[n].first) <= 1e-12);
            }
        }
    }
}

TEST_CASE("hypothesis ordering breaks ties lexicographically") {
    CHECK(hypothesis_before(-1.0, {5}, -2.0, {4}));
    CHECK(hypothesis_before(-1.0, {4, 6}, -1.0, {5}));
    CHECK_FALSE(hypothesis_before(-1.0, {5}, -1.0, {5}));
}
