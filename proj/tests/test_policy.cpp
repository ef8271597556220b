#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>
#include <vector>

#include "rlvr/env_tasks.hpp"
#include "rlvr/policy.hpp"
#include "rlvr/rng.hpp"

using namespace rlvr;

namespace {

PolicyParams small_params(int v) {
  PolicyParams p;
  p.context_window = 2;
  p.vocab.tokens.clear();
  for (int i = 0; i < v - 1; ++i) p.vocab.tokens.push_back("t" + std::to_string(i));
  p.vocab.tokens.push_back("EOS");
  p.vocab.eos_id = v - 1;
  return p;
}

}  // namespace

TEST_CASE("context keys pad history on the left") {
  std::vector<int> history = {3, 10, 4};
  auto key = make_context_key(9, history, 2);
  CHECK(key.query_id == 9);
  CHECK(key.window == std::vector<std::int32_t>{10, 4});

  auto shorter = make_context_key(9, std::vector<int>{4}, 2);
  CHECK(shorter.window == std::vector<std::int32_t>{kPadToken, 4});

  auto empty = make_context_key(9, std::vector<int>{}, 2);
  CHECK(empty.window == std::vector<std::int32_t>{kPadToken, kPadToken});

  CHECK(make_context_key(1, history, 2) < make_context_key(2, history, 2));
}

TEST_CASE("absent rows behave as uniform logits") {
  auto p = small_params(4);
  auto key = make_context_key(1, std::vector<int>{0}, 2);
  CHECK(find_row(p, key) == nullptr);
  auto lps = logprobs(p, key);
  REQUIRE(lps.size() == 4);
  for (double lp : lps) CHECK(lp == Catch::Approx(-1.3862943611198906).margin(1e-15));
  CHECK(token_entropy(p, key) == Catch::Approx(1.3862943611198906).margin(1e-15));
}

TEST_CASE("log softmax matches a frozen evaluation and normalizes") {
  auto lps = log_softmax(std::vector<double>{1.0, 0.0});
  CHECK(lps[0] == Catch::Approx(-0.3132616875182228).margin(1e-15));
  CHECK(lps[1] == Catch::Approx(-1.3132616875182228).margin(1e-15));

  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> row(5);
    for (auto& x : row) x = 10.0 * (rng.uniform() - 0.5);
    auto out = log_softmax(row);
    double sum = 0.0;
    for (double lp : out) {
      CHECK(lp <= 0.0);
      sum += std::exp(lp);
    }
    CHECK(sum == Catch::Approx(1.0).margin(1e-12));

    std::vector<double> shifted = row;
    for (auto& x : shifted) x += 123.5;
    auto out2 = log_softmax(shifted);
    for (std::size_t i = 0; i < out.size(); ++i)
      CHECK(out2[i] == Catch::Approx(out[i]).margin(1e-12));
  }
}

TEST_CASE("score is one-hot minus softmax") {
  auto p = small_params(4);
  auto key = make_context_key(1, std::vector<int>{}, 2);
  auto g = score(p, key, 2);
  REQUIRE(g.size() == 4);
  CHECK(g[0] == Catch::Approx(-0.25).margin(1e-15));
  CHECK(g[1] == Catch::Approx(-0.25).margin(1e-15));
  CHECK(g[2] == Catch::Approx(0.75).margin(1e-15));
  CHECK(g[3] == Catch::Approx(-0.25).margin(1e-15));

  auto p2 = small_params(2);
  auto key2 = make_context_key(1, std::vector<int>{}, 2);
  p2.table[key2] = {1.0, 0.0};
  auto g2 = score(p2, key2, 0);
  CHECK(g2[0] == Catch::Approx(0.2689414213699951).margin(1e-15));
  CHECK(g2[1] == Catch::Approx(-0.2689414213699951).margin(1e-15));

  double sum = 0.0;
  for (double x : g2) sum += x;
  CHECK(std::abs(sum) < 1e-15);
}

TEST_CASE("score matches central finite differences of log prob") {
  auto p = small_params(5);
  auto key = make_context_key(3, std::vector<int>{1, 2}, 2);
  Rng rng(11);
  std::vector<double> row(5);
  for (auto& x : row) x = 2.0 * (rng.uniform() - 0.5);
  p.table[key] = row;
  const double h = 1e-6;
  for (int token = 0; token < 5; ++token) {
    auto g = score(p, key, token);
    for (int coord = 0; coord < 5; ++coord) {
      auto plus = row, minus = row;
      plus[coord] += h;
      minus[coord] -= h;
      const double fd =
          (log_softmax(plus)[token] - log_softmax(minus)[token]) / (2.0 * h);
      CHECK(g[coord] == Catch::Approx(fd).margin(1e-6));
    }
  }
}

TEST_CASE("entropy stays within [0, ln V]") {
  auto p = small_params(4);
  auto key = make_context_key(1, std::vector<int>{}, 2);
  p.table[key] = {50.0, 0.0, 0.0, 0.0};
  const double h = token_entropy(p, key);
  CHECK(h >= 0.0);
  CHECK(h < 1e-6);

  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> row(4);
    for (auto& x : row) x = 20.0 * (rng.uniform() - 0.5);
    p.table[key] = row;
    const double ent = token_entropy(p, key);
    CHECK(ent >= 0.0);
    CHECK(ent <= std::log(4.0) + 1e-12);
  }
}

TEST_CASE("uniform sampling is statistically uniform") {
  auto p = small_params(14);
  Query q;
  q.id = 1;
  q.prompt_tokens = {3, 10, 4, 11};
  const int draws = 14000;
  std::vector<int> counts(14, 0);
  Rng rng(derive_seed(99, {stream::kRollouts, 0}));
  for (int i = 0; i < draws; ++i) {
    auto ro = sample_response(p, q, 1, 1.0, rng);
    REQUIRE(ro.tokens.size() == 1);
    ++counts[ro.tokens[0]];
  }
  const double expected = draws / 14.0;
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
  // upper 0.001 quantile of chi-squared with 13 degrees of freedom
  CHECK(chi2 < 34.52817897487089);
}

TEST_CASE("rollouts record temperature-1 logprobs regardless of sampling temperature") {
  auto p = small_params(6);
  auto key0 = make_context_key(4, std::vector<int>{2, 1}, 2);
  Query q;
  q.id = 4;
  q.prompt_tokens = {2, 1};
  Rng rng(7);
  std::vector<double> row = {1.2, -0.3, 0.0, 2.0, -1.0, 0.4};
  p.table[key0] = row;

  auto ro = sample_response(p, q, 5, 2.0, rng);
  REQUIRE_FALSE(ro.tokens.empty());
  std::vector<int> hist = q.prompt_tokens;
  for (std::size_t t = 0; t < ro.tokens.size(); ++t) {
    auto lps = logprobs(p, make_context_key(q.id, hist, p.context_window));
    CHECK(ro.old_logprobs[t] ==
          Catch::Approx(lps[static_cast<std::size_t>(ro.tokens[t])]).margin(1e-15));
    hist.push_back(ro.tokens[t]);
  }
}

TEST_CASE("sampling is deterministic per seed and flags truncation") {
  auto p = small_params(6);
  Query q;
  q.id = 2;
  q.prompt_tokens = {1};
  Rng a(derive_seed(3, {stream::kRollouts, 5}));
  Rng b(derive_seed(3, {stream::kRollouts, 5}));
  auto ra = sample_response(p, q, 8, 1.0, a);
  auto rb = sample_response(p, q, 8, 1.0, b);
  CHECK(ra.tokens == rb.tokens);
  CHECK(ra.old_logprobs == rb.old_logprobs);
  CHECK(ra.truncated == rb.truncated);
  CHECK(ra.truncated == (ra.tokens.back() != p.vocab.eos_id));

  // force non-EOS: a row with all mass on token 0
  auto key = make_context_key(2, std::vector<int>{kPadToken, 1}, 2);
  p.table[key] = {100.0, 0.0, 0.0, 0.0, 0.0, 0.0};
  auto key2 = make_context_key(2, std::vector<int>{1, 0}, 2);
  p.table[key2] = {100.0, 0.0, 0.0, 0.0, 0.0, 0.0};
  Rng c(1);
  auto rc = sample_response(p, q, 1, 1.0, c);
  CHECK(rc.tokens.size() == 1);
  CHECK(rc.truncated);

  CHECK_THROWS_AS(sample_response(p, q, 0, 1.0, c), std::invalid_argument);
  CHECK_THROWS_AS(sample_response(p, q, 4, 0.0, c), std::invalid_argument);
}

TEST_CASE("greedy decode takes the argmax with lowest-id ties") {
  auto p = small_params(14);
  p.vocab = task_vocab();
  Query q;
  q.id = 5;
  q.prompt_tokens = {3, 10, 4, 11};
  q.ground_truth = 7;
  auto ro = greedy_decode(p, q, 6);
  CHECK(ro.tokens[0] == 0);  // uniform row: tie-break picks token id 0

  // teach the two relevant rows the perfect answer
  auto key1 = make_context_key(5, q.prompt_tokens, 2);
  std::vector<double> row1(14, 0.0);
  row1[7] = 10.0;
  p.table[key1] = row1;
  std::vector<int> hist = q.prompt_tokens;
  hist.push_back(7);
  auto key2 = make_context_key(5, hist, 2);
  std::vector<double> row2(14, 0.0);
  row2[kTaskEosId] = 10.0;
  p.table[key2] = row2;
  auto ro2 = greedy_decode(p, q, 6);
  CHECK(ro2.tokens == std::vector<int>{7, kTaskEosId});
  CHECK(ro2.reward == 1.0);
  auto ro3 = greedy_decode(p, q, 6);
  CHECK(ro3.tokens == ro2.tokens);
}

TEST_CASE("row table serialization round-trips exactly") {
  auto p = small_params(3);
  Rng rng(23);
  for (int row = 0; row < 5; ++row) {
    auto key = make_context_key(row, std::vector<int>{row, row + 1}, 2);
    std::vector<double> vals(3);
    for (auto& x : vals) x = 1e3 * (rng.uniform() - 0.5) + 1e-7 * rng.uniform();
    p.table[key] = vals;
  }
  std::stringstream ss;
  write_policy_table(ss, p);
  PolicyParams q = small_params(3);
  read_policy_table(ss, q);
  REQUIRE(q.table.size() == p.table.size());
  for (const auto& [key, row] : p.table) {
    REQUIRE(q.table.count(key) == 1);
    CHECK(q.table.at(key) == row);  // bitwise equality via shortest round-trip text
  }
  CHECK(params_checksum(p) == params_checksum(q));
}
