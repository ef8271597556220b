#pragma once

// Tabular context-windowed softmax policy. A row of logits per (query id,
// last-k tokens) context; absent rows read as zeros, i.e. uniform. This keeps
// log-probabilities, entropies and score vectors exact and cheap.

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <compare>
#include <cstdint>
#include <cstdlib>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <vector>

#include "rlvr/core_types.hpp"
#include "rlvr/env_tasks.hpp"
#include "rlvr/rng.hpp"

namespace rlvr {

inline constexpr std::int32_t kPadToken = -1;

struct ContextKey {
  std::int64_t query_id = 0;
  std::vector<std::int32_t> window;  // length k, left-padded with kPadToken

  auto operator<=>(const ContextKey&) const = default;
};

struct PolicyParams {
  int context_window = 2;
  Vocab vocab;
  std::map<ContextKey, std::vector<double>> table;
};

inline ContextKey make_context_key(std::int64_t query_id, std::span<const int> history, int k) {
  ContextKey key;
  key.query_id = query_id;
  key.window.assign(static_cast<std::size_t>(k), kPadToken);
  const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(k), history.size());
  for (std::size_t i = 0; i < take; ++i)
    key.window[static_cast<std::size_t>(k) - take + i] = history[history.size() - take + i];
  return key;
}

inline const std::vector<double>* find_row(const PolicyParams& params, const ContextKey& key) {
  const auto it = params.table.find(key);
  return it == params.table.end() ? nullptr : &it->second;
}

inline std::vector<double> logits_row(const PolicyParams& params, const ContextKey& key) {
  if (const auto* row = find_row(params, key)) return *row;
  return std::vector<double>(static_cast<std::size_t>(params.vocab.size()), 0.0);
}

inline std::vector<double> log_softmax(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double x : logits) z += std::exp(x - mx);
  const double log_z = mx + std::log(z);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - log_z;
  return out;
}

inline std::vector<double> softmax(std::span<const double> logits) {
  auto out = log_softmax(logits);
  for (double& x : out) x = std::exp(x);
  return out;
}

inline std::vector<double> logprobs(const PolicyParams& params, const ContextKey& key) {
  const auto row = logits_row(params, key);
  return log_softmax(row);
}

inline double token_entropy(const PolicyParams& params, const ContextKey& key) {
  const auto lps = logprobs(params, key);
  double h = 0.0;
  for (double lp : lps) h -= std::exp(lp) * lp;
  return std::max(h, 0.0);
}

// d log pi(token | key) / d logits(key, .) = one_hot(token) - softmax(row).
// All other rows have zero gradient.
inline std::vector<double> score(const PolicyParams& params, const ContextKey& key, int token_id) {
  auto probs = softmax(logits_row(params, key));
  for (double& p : probs) p = -p;
  probs[static_cast<std::size_t>(token_id)] += 1.0;
  return probs;
}

// Samples a response; reward is left 0 for the caller. old_logprobs are
// always the temperature-1.0 values even when sampling at another
// temperature: ratios are defined against the untempered policy.
inline Rollout sample_response(const PolicyParams& params, const Query& query, int max_len,
                               double temperature, Rng& rng) {
  if (max_len < 1) throw std::invalid_argument("sample_response: max_len must be >= 1");
  if (!(temperature > 0.0)) throw std::invalid_argument("sample_response: temperature must be > 0");
  Rollout r;
  r.query_id = query.id;
  std::vector<int> history(query.prompt_tokens);
  const int eos = params.vocab.eos_id;
  for (int t = 0; t < max_len; ++t) {
    const auto key = make_context_key(query.id, history, params.context_window);
    auto row = logits_row(params, key);
    const auto lps = log_softmax(row);
    if (temperature != 1.0)
      for (double& x : row) x /= temperature;
    const auto probs = softmax(row);
    const int tok = rng.categorical(probs);
    r.tokens.push_back(tok);
    r.old_logprobs.push_back(lps[static_cast<std::size_t>(tok)]);
    history.push_back(tok);
    if (tok == eos) break;
  }
  r.truncated = r.tokens.back() != eos;
  return r;
}

inline Rollout sample_rollout(const PolicyParams& params, const Query& query, int max_len,
                              double temperature, Rng& rng) {
  Rollout r = sample_response(params, query, max_len, temperature, rng);
  r.reward = verify(query, r.tokens);
  return r;
}

inline Rollout greedy_decode(const PolicyParams& params, const Query& query, int max_len) {
  if (max_len < 1) throw std::invalid_argument("greedy_decode: max_len must be >= 1");
  Rollout r;
  r.query_id = query.id;
  std::vector<int> history(query.prompt_tokens);
  const int eos = params.vocab.eos_id;
  for (int t = 0; t < max_len; ++t) {
    const auto key = make_context_key(query.id, history, params.context_window);
    const auto lps = logprobs(params, key);
    int tok = 0;  // ties break toward the lowest token id
    for (std::size_t v = 1; v < lps.size(); ++v)
      if (lps[v] > lps[static_cast<std::size_t>(tok)]) tok = static_cast<int>(v);
    r.tokens.push_back(tok);
    r.old_logprobs.push_back(lps[static_cast<std::size_t>(tok)]);
    history.push_back(tok);
    if (tok == eos) break;
  }
  r.truncated = r.tokens.back() != eos;
  r.reward = verify(query, r.tokens);
  return r;
}

// --- checkpoint text form ---
// One line per context key: query id, k window ids, ':', V logits as
// shortest-round-trip decimals. Diff-friendly and loss-free.

inline void write_double_text(std::ostream& os, double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  os.write(buf, res.ptr - buf);
}

inline void write_row_table(std::ostream& os, const std::map<ContextKey, std::vector<double>>& table) {
  os << "rows " << table.size() << "\n";
  for (const auto& [key, row] : table) {
    os << key.query_id;
    for (std::int32_t w : key.window) os << ' ' << w;
    os << " :";
    for (double x : row) {
      os << ' ';
      write_double_text(os, x);
    }
    os << "\n";
  }
}

inline void read_row_table(std::istream& is, std::map<ContextKey, std::vector<double>>& table,
                           int context_window, int vocab_size) {
  std::string tag;
  std::size_t n = 0;
  if (!(is >> tag >> n) || tag != "rows")
    throw std::runtime_error("row table: expected 'rows <count>'");
  table.clear();
  const std::size_t v = static_cast<std::size_t>(vocab_size);
  const std::size_t k = static_cast<std::size_t>(context_window);
  for (std::size_t i = 0; i < n; ++i) {
    ContextKey key;
    if (!(is >> key.query_id)) throw std::runtime_error("row table: truncated row");
    key.window.resize(k);
    for (auto& w : key.window)
      if (!(is >> w)) throw std::runtime_error("row table: truncated window");
    std::string colon;
    if (!(is >> colon) || colon != ":") throw std::runtime_error("row table: missing ':'");
    std::vector<double> row(v);
    for (auto& x : row) {
      std::string word;
      if (!(is >> word)) throw std::runtime_error("row table: truncated logits");
      char* end = nullptr;
      x = std::strtod(word.c_str(), &end);
      if (end != word.c_str() + word.size()) throw std::runtime_error("row table: bad number '" + word + "'");
    }
    table.emplace(std::move(key), std::move(row));
  }
}

inline void write_policy_table(std::ostream& os, const PolicyParams& params) {
  write_row_table(os, params.table);
}

inline void read_policy_table(std::istream& is, PolicyParams& params) {
  read_row_table(is, params.table, params.context_window, params.vocab.size());
}

inline std::uint64_t params_checksum(const PolicyParams& params) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&h](std::uint64_t x) { h = splitmix64(h ^ x); };
  mix(static_cast<std::uint64_t>(params.context_window));
  for (const auto& [key, row] : params.table) {
    mix(static_cast<std::uint64_t>(key.query_id));
    for (std::int32_t w : key.window) mix(static_cast<std::uint64_t>(static_cast<std::uint32_t>(w)));
    for (double x : row) mix(std::bit_cast<std::uint64_t>(x));
  }
  return h;
}

}  // namespace rlvr
