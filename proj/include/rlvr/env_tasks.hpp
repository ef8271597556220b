#pragma once

// Synthetic modular-arithmetic tasks with a rule-based verifier. The answer is
// always a single digit (modulus <= 10), extracted as the digit run adjacent
// to EOS so responses may carry arbitrary filler in front of it.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rlvr/core_types.hpp"
#include "rlvr/rng.hpp"

namespace rlvr {

enum class TaskKind { SumMod, ChainMod };

struct TaskSpec {
  TaskKind kind = TaskKind::SumMod;
  int modulus = 10;
  long long operand_min = 0;
  long long operand_max = 9;
  int chain_length = 3;       // ChainMod only
  int max_response_len = 32;
  std::uint64_t seed = 0;
};

// token ids 0..9 are the digits, then '+', '=', the filler mark, EOS
inline constexpr int kPlusId = 10;
inline constexpr int kEqualsId = 11;
inline constexpr int kFillerId = 12;
inline constexpr int kTaskEosId = 13;

inline const Vocab& task_vocab() {
  static const Vocab v{{"0", "1", "2", "3", "4", "5", "6", "7", "8", "9",
                        "+", "=", "\xc2\xb7", "EOS"},
                       kTaskEosId};
  return v;
}

inline bool is_digit_token(int id) { return id >= 0 && id <= 9; }

inline std::vector<std::string> validate_task(const TaskSpec& s) {
  std::vector<std::string> errs;
  if (s.modulus < 2 || s.modulus > 10)
    errs.push_back("task.modulus: must be in [2, 10] so the answer is a single digit");
  if (s.operand_min < 0) errs.push_back("task.operand_min: must be >= 0");
  if (s.operand_min > s.operand_max) errs.push_back("task.operand_min must not exceed operand_max");
  if (s.kind == TaskKind::ChainMod && s.chain_length < 1)
    errs.push_back("task.chain_length: must be >= 1");
  if (s.max_response_len < 2)
    errs.push_back("task.max_response_len: must be >= 2 (answer digit plus EOS)");
  return errs;
}

inline void append_number_tokens(long long value, std::vector<int>& out) {
  const std::string digits = std::to_string(value);
  for (char c : digits) out.push_back(c - '0');
}

// Query ids are content hashes (FNV-1a over the prompt token ids) so the same
// prompt always maps to the same policy-table rows across steps and runs.
inline std::int64_t query_content_id(std::span<const int> prompt) {
  std::uint64_t h = 1469598103934665603ull;
  for (int t : prompt) {
    h ^= static_cast<std::uint64_t>(static_cast<std::uint32_t>(t));
    h *= 1099511628211ull;
  }
  return static_cast<std::int64_t>(h & 0x7fffffffffffffffull);
}

inline std::vector<Query> generate_queries(const TaskSpec& spec, int n, std::uint64_t rng_seed) {
  if (n < 1) throw std::invalid_argument("generate_queries: n must be >= 1");
  {
    const auto errs = validate_task(spec);
    if (!errs.empty()) throw std::invalid_argument("generate_queries: " + errs.front());
  }
  const int operands = spec.kind == TaskKind::SumMod ? 2 : spec.chain_length;
  std::vector<Query> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Rng rng(derive_seed(rng_seed, {stream::kQueries, static_cast<std::uint64_t>(i)}));
    Query q;
    long long sum = 0;
    for (int j = 0; j < operands; ++j) {
      const long long a = rng.uniform_int(spec.operand_min, spec.operand_max);
      if (j > 0) q.prompt_tokens.push_back(kPlusId);
      append_number_tokens(a, q.prompt_tokens);
      sum += a;
    }
    q.prompt_tokens.push_back(kEqualsId);
    q.ground_truth = sum % spec.modulus;
    q.id = query_content_id(q.prompt_tokens);
    out.push_back(std::move(q));
  }
  return out;
}

// Reward rule: response must end in EOS; the maximal digit run immediately
// before EOS is the claimed answer. Anything earlier is ignored.
inline double verify(const Query& query, std::span<const int> tokens) {
  if (tokens.empty()) throw std::invalid_argument("verify: empty token sequence");
  if (tokens.back() != kTaskEosId) return 0.0;
  std::size_t end = tokens.size() - 1;  // position of EOS
  std::size_t begin = end;
  while (begin > 0 && is_digit_token(tokens[begin - 1])) --begin;
  if (begin == end) return 0.0;  // no digit adjacent to EOS
  if (end - begin > 18) return 0.0;  // longer than any representable answer
  long long value = 0;
  for (std::size_t i = begin; i < end; ++i) value = value * 10 + tokens[i];
  return value == query.ground_truth ? 1.0 : 0.0;
}

}  // namespace rlvr
