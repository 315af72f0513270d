// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "gradcheck.hpp"
#include "slotfill/model.hpp"

using namespace slotfill;
using slotfill::testing::finite_diff_check;

namespace {

ModelConfig tiny_config(bool use_examples = true, bool use_description = true) {
  ModelConfig cfg;
  cfg.use_examples = use_examples;
  cfg.use_description = use_description;
  cfg.d_w = 6;
  cfg.d_c = 4;
  cfg.d_en = 8;
  cfg.char_emb_dim = 4;
  return cfg;
}

template <typename S>
ModelParams<S> tiny_model(const ModelConfig& cfg, std::uint64_t seed) {
  std::vector<std::string> vocab = {"play", "imagine", "on", "iheart", "radio",
                                    "service", "spotify", "deezer"};
  return make_model(cfg, nn::random_word_table<S>(vocab, cfg.d_w, seed), seed);
}

const SlotSchema kService{"service", {"service"}, {}};
const TokenSeq kUtterance{"Play", "Imagine", "on", "iHeart", "Radio"};
const std::vector<TokenSeq> kExamples{{"spotify"}, {"deezer"}};

}  // namespace

TEST_CASE("forward yields one distribution per token and decodes legally") {
  auto params = tiny_model<double>(tiny_config(), 21);
  auto probs = forward(params, kUtterance, kService, kExamples);
  REQUIRE(probs.cols() == 5);
  REQUIRE(probs.rows() == 3);
  for (int t = 0; t < 5; ++t) {
    CHECK(probs.col(t).minCoeff() > 0.0);
    CHECK(std::abs(probs.col(t).sum() - 1.0) < 1e-6);
  }
  // Legality: decoded spans are within range and non-overlapping.
  auto spans = decode(probs);
  int prev_end = 0;
  for (auto [start, end] : spans) {
    CHECK(start >= prev_end);
    CHECK(start < end);
    CHECK(end <= 5);
    prev_end = end;
  }
}

TEST_CASE("K=1 attention context equals the single example encoding") {
  auto params = tiny_model<double>(tiny_config(), 22);
  ForwardCache<double> cache;
  forward(params, kUtterance, kService, {{"spotify"}}, &cache);
  REQUIRE(cache.ex.cols() == 1);
  for (Eigen::Index t = 0; t < cache.ea.cols(); ++t)
    CHECK((cache.ea.col(t) - cache.ex.col(0)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("forward is bit-exactly invariant to example order") {
  auto params = tiny_model<double>(tiny_config(), 23);
  std::vector<TokenSeq> examples = {{"spotify"}, {"deezer"}, {"iheart", "radio"}};
  auto base = forward(params, kUtterance, kService, examples);
  std::vector<TokenSeq> permuted = {examples[2], examples[0], examples[1]};
  auto swapped = forward(params, kUtterance, kService, permuted);
  CHECK((base - swapped).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("forward is bit-exactly invariant to description token order") {
  auto params = tiny_model<double>(tiny_config(), 24);
  SlotSchema a{"svc", {"music", "service", "name"}, {}};
  SlotSchema b{"svc", {"name", "music", "service"}, {}};
  auto pa = forward(params, kUtterance, a, kExamples);
  auto pb = forward(params, kUtterance, b, kExamples);
  CHECK((pa - pb).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("description-only ablation ignores the examples argument") {
  auto params = tiny_model<double>(tiny_config(/*use_examples=*/false), 25);
  auto pa = forward(params, kUtterance, kService, kExamples);
  auto pb = forward(params, kUtterance, kService, {});
  auto pc = forward(params, kUtterance, kService, {{"anything", "else"}});
  CHECK((pa - pb).cwiseAbs().maxCoeff() == 0.0);
  CHECK((pa - pc).cwiseAbs().maxCoeff() == 0.0);
  CHECK(params.cfg.tagger_input_dim() == params.cfg.d_en + params.cfg.d_wc());
}

TEST_CASE("forward is deterministic") {
  auto params = tiny_model<double>(tiny_config(), 26);
  auto pa = forward(params, kUtterance, kService, kExamples);
  auto pb = forward(params, kUtterance, kService, kExamples);
  CHECK((pa - pb).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("conditioning input errors") {
  auto params = tiny_model<double>(tiny_config(), 27);
  CHECK_THROWS_AS(forward(params, kUtterance, kService, {}), EmptyExamples);
  SlotSchema no_desc{"svc", {}, {}};
  CHECK_THROWS_AS(forward(params, kUtterance, no_desc, kExamples), EmptyDescription);
  CHECK_THROWS_AS(forward(params, {}, kService, kExamples), EmptyInput);
  ModelConfig bad = tiny_config(false, false);
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("loss matches analytic values") {
  nn::Mat<double> probs(3, 2);

  SECTION("perfect predictions") {
    probs.col(0) << 1e-13, 1.0 - 2e-13, 1e-13;  // ~one-hot B
    probs.col(1) << 1.0 - 2e-13, 1e-13, 1e-13;  // ~one-hot O
    double l = loss(probs, {Tag::B, Tag::O});
    CHECK(l >= 0.0);
    CHECK(l <= 1e-6);
  }
  SECTION("uniform predictions give ln 3") {
    probs.setConstant(1.0 / 3);
    CHECK(loss(probs, {Tag::O, Tag::I}) == Catch::Approx(std::log(3.0)).epsilon(1e-12));
  }
  SECTION("zero probability at gold is clamped and counted") {
    probs.setZero();
    probs.col(0) << 0, 1, 0;
    probs.col(1) << 0, 1, 0;
    long clamped = 0;
    double l = loss(probs, {Tag::O, Tag::B}, &clamped);
    CHECK(clamped == 1);  // only column 0 misses its gold entirely
    CHECK(l == Catch::Approx(-std::log(1e-12) / 2));
  }
  SECTION("random case matches a naive per-token oracle") {
    Rng rng(31);
    for (int iter = 0; iter < 20; ++iter) {
      const int t = 1 + static_cast<int>(rng.below(6));
      nn::Mat<double> p(3, t);
      std::vector<Tag> tags;
      for (int j = 0; j < t; ++j) {
        nn::Vec<double> z(3);
        for (int i = 0; i < 3; ++i) z(i) = rng.uniform(-2, 2);
        p.col(j) = nn::softmax(z);
        tags.push_back(static_cast<Tag>(rng.below(3)));
      }
      double naive = 0.0;
      for (int j = 0; j < t; ++j) naive += -std::log(p(static_cast<int>(tags[j]), j));
      naive /= t;
      CHECK(loss(p, tags) == Catch::Approx(naive).epsilon(1e-12));
    }
  }
}

TEST_CASE("decode follows the CoNLL repair convention") {
  auto probs_for = [](const std::vector<Tag>& tags) {
    nn::Mat<double> p = nn::Mat<double>::Constant(3, static_cast<Eigen::Index>(tags.size()), 0.1);
    for (std::size_t i = 0; i < tags.size(); ++i) p(static_cast<int>(tags[i]), i) = 0.8;
    return p;
  };
  using Spans = std::vector<std::pair<int, int>>;
  CHECK(decode(probs_for({Tag::O, Tag::O, Tag::O, Tag::B, Tag::I})) == Spans{{3, 5}});
  CHECK(decode(probs_for({Tag::O, Tag::O, Tag::O, Tag::O, Tag::O})) == Spans{});
  CHECK(decode(probs_for({Tag::I, Tag::O, Tag::B})) == Spans{{0, 1}, {2, 3}});
  CHECK(decode(probs_for({Tag::B, Tag::B, Tag::I})) == Spans{{0, 1}, {1, 3}});
  CHECK(decode(probs_for({Tag::I, Tag::I})) == Spans{{0, 2}});
}

TEST_CASE("end-to-end gradients match finite differences") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    ModelConfig cfg = tiny_config();
    cfg.train_word_embeddings = true;
    auto params = tiny_model<double>(cfg, 500 + seed);
    TokenSeq tokens = {"play", "imagine", "here"};  // includes one OOV token
    std::vector<TokenSeq> examples = {{"spotify"}, {"deezer", "radio"}};
    std::vector<Tag> tags = {Tag::O, Tag::B, Tag::O};

    auto loss_fn = [&]() { return loss(forward(params, tokens, kService, examples), tags); };

    ForwardCache<double> cache;
    forward(params, tokens, kService, examples, &cache);
    auto grads = zeros_like(params);
    backward(params, cache, tags, grads);

    auto res = finite_diff_check(params.trainable_refs(), grads.trainable_refs(), loss_fn);
    CAPTURE(seed, res.worst_array, res.max_rel);
    CHECK(res.ok());
  }
}

TEST_CASE("CT ablation gradients also match finite differences") {
  ModelConfig cfg = tiny_config(/*use_examples=*/false);
  auto params = tiny_model<double>(cfg, 600);
  TokenSeq tokens = {"play", "imagine"};
  std::vector<Tag> tags = {Tag::O, Tag::B};

  auto loss_fn = [&]() { return loss(forward(params, tokens, kService, {}), tags); };
  ForwardCache<double> cache;
  forward(params, tokens, kService, {}, &cache);
  auto grads = zeros_like(params);
  backward(params, cache, tags, grads);
  CHECK(finite_diff_check(params.trainable_refs(), grads.trainable_refs(), loss_fn).ok());
}

TEST_CASE("dropout knob") {
  ModelConfig cfg = tiny_config();
  cfg.dropout = 0.5;
  auto params = tiny_model<double>(cfg, 28);

  // Without an rng the knob is inert (evaluation path).
  auto pa = forward(params, kUtterance, kService, kExamples);
  auto pb = forward(params, kUtterance, kService, kExamples);
  CHECK((pa - pb).cwiseAbs().maxCoeff() == 0.0);

  // With an rng the mask is applied and is reproducible per stream.
  Rng r1(77), r2(77), r3(78);
  ForwardCache<double> c1, c2, c3;
  auto d1 = forward(params, kUtterance, kService, kExamples, &c1, &r1);
  auto d2 = forward(params, kUtterance, kService, kExamples, &c2, &r2);
  auto d3 = forward(params, kUtterance, kService, kExamples, &c3, &r3);
  CHECK((d1 - d2).cwiseAbs().maxCoeff() == 0.0);
  CHECK((d1 - pa).cwiseAbs().maxCoeff() > 0.0);
  CHECK((d1 - d3).cwiseAbs().maxCoeff() > 0.0);
}
