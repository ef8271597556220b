#pragma once

// Plain data types shared by every module: vocab, queries, rollouts, grouped
// batches, and the knobs that select an objective (clip ranges, mixing mode).

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace rlvr {

inline constexpr const char* kArtifactVersion = "0.1.0";

struct Vocab {
  std::vector<std::string> tokens;
  int eos_id = -1;

  int size() const { return static_cast<int>(tokens.size()); }
};

inline std::vector<std::string> validate_vocab(const Vocab& v) {
  std::vector<std::string> errs;
  if (v.tokens.empty()) errs.push_back("vocab: token list is empty");
  if (v.eos_id < 0 || v.eos_id >= v.size())
    errs.push_back("vocab: eos_id " + std::to_string(v.eos_id) + " out of range");
  return errs;
}

struct Query {
  std::int64_t id = 0;
  std::vector<int> prompt_tokens;
  long long ground_truth = 0;
};

struct Rollout {
  std::int64_t query_id = 0;
  std::vector<int> tokens;            // includes the final EOS unless truncated
  std::vector<double> old_logprobs;   // one per token, under the behavior policy
  double reward = 0.0;
  bool truncated = false;
};

struct Group {
  Query query;
  std::vector<Rollout> rollouts;
  std::vector<double> advantages;     // filled by group_advantages
};

struct Batch {
  std::vector<Group> groups;
};

enum class ClipMode { BranchSpecific, Unified };

// Defaults are the DHPO settings used throughout: 0.2 below, 0.28 above,
// same range on both branches.
struct ClipConfig {
  double eps_token_low = 0.2;
  double eps_token_high = 0.28;
  double eps_seq_low = 0.2;
  double eps_seq_high = 0.28;
  ClipMode mode = ClipMode::BranchSpecific;
  double eps_unified_low = 0.2;    // only read in Unified mode
  double eps_unified_high = 0.28;
};

enum class MixKind { Averaged, EntropyGuided };

struct MixingMode {
  MixKind kind = MixKind::Averaged;
  double w_min = 0.0;
  double w_max = 1.0;
};

enum class ObjectiveKind { GRPO, GSPO, DHPO_A, DHPO_E, GMPO, CISPO };

inline const char* to_string(ObjectiveKind k) {
  switch (k) {
    case ObjectiveKind::GRPO: return "GRPO";
    case ObjectiveKind::GSPO: return "GSPO";
    case ObjectiveKind::DHPO_A: return "DHPO_A";
    case ObjectiveKind::DHPO_E: return "DHPO_E";
    case ObjectiveKind::GMPO: return "GMPO";
    case ObjectiveKind::CISPO: return "CISPO";
  }
  return "?";
}

inline bool objective_from_string(const std::string& s, ObjectiveKind& out) {
  if (s == "GRPO") out = ObjectiveKind::GRPO;
  else if (s == "GSPO") out = ObjectiveKind::GSPO;
  else if (s == "DHPO_A") out = ObjectiveKind::DHPO_A;
  else if (s == "DHPO_E") out = ObjectiveKind::DHPO_E;
  else if (s == "GMPO") out = ObjectiveKind::GMPO;
  else if (s == "CISPO") out = ObjectiveKind::CISPO;
  else return false;
  return true;
}

// `allow_wide_token_low` lifts the eps_token_low < 1 requirement; CISPO uses
// a large lower epsilon to mean "no lower truncation".
inline std::vector<std::string> validate_clip(const ClipConfig& c, bool allow_wide_token_low = false) {
  std::vector<std::string> errs;
  auto check = [&errs](const char* name, double lo, double hi, bool wide_lo) {
    if (!(lo >= 0.0)) errs.push_back(std::string(name) + "_low: must be >= 0");
    if (!wide_lo && !(lo < 1.0)) errs.push_back(std::string(name) + "_low: must be < 1 so the lower bound stays positive");
    if (!(hi > 0.0)) errs.push_back(std::string(name) + "_high: must be > 0");
  };
  check("eps_token", c.eps_token_low, c.eps_token_high, allow_wide_token_low);
  check("eps_seq", c.eps_seq_low, c.eps_seq_high, false);
  if (c.mode == ClipMode::Unified) check("eps_unified", c.eps_unified_low, c.eps_unified_high, false);
  return errs;
}

inline std::vector<std::string> validate_mixing(const MixingMode& m) {
  std::vector<std::string> errs;
  if (!(m.w_min >= 0.0 && m.w_min <= 1.0)) errs.push_back("w_min: must be in [0, 1]");
  if (!(m.w_max >= 0.0 && m.w_max <= 1.0)) errs.push_back("w_max: must be in [0, 1]");
  if (!(m.w_min <= m.w_max)) errs.push_back("w_min must not exceed w_max");
  return errs;
}

inline std::vector<std::string> validate_rollout(const Rollout& r, int vocab_size, int eos_id) {
  std::vector<std::string> errs;
  if (r.tokens.empty()) errs.push_back("rollout: empty token list");
  if (r.tokens.size() != r.old_logprobs.size())
    errs.push_back("rollout: tokens and old_logprobs differ in length");
  for (int t : r.tokens)
    if (t < 0 || t >= vocab_size) {
      errs.push_back("rollout: token id out of vocab range");
      break;
    }
  for (double lp : r.old_logprobs)
    if (!(lp <= 0.0)) {
      errs.push_back("rollout: old_logprobs must be <= 0");
      break;
    }
  if (!r.tokens.empty() && !r.truncated && r.tokens.back() != eos_id)
    errs.push_back("rollout: non-truncated response must end in EOS");
  return errs;
}

// --- JSON ---

inline void to_json(nlohmann::json& j, const Vocab& v) {
  j = nlohmann::json{{"tokens", v.tokens}, {"eos_id", v.eos_id}};
}
inline void from_json(const nlohmann::json& j, Vocab& v) {
  j.at("tokens").get_to(v.tokens);
  j.at("eos_id").get_to(v.eos_id);
}

inline void to_json(nlohmann::json& j, const Query& q) {
  j = nlohmann::json{{"id", q.id}, {"prompt_tokens", q.prompt_tokens}, {"ground_truth", q.ground_truth}};
}
inline void from_json(const nlohmann::json& j, Query& q) {
  j.at("id").get_to(q.id);
  j.at("prompt_tokens").get_to(q.prompt_tokens);
  j.at("ground_truth").get_to(q.ground_truth);
}

inline void to_json(nlohmann::json& j, const Rollout& r) {
  j = nlohmann::json{{"query_id", r.query_id},
                     {"tokens", r.tokens},
                     {"old_logprobs", r.old_logprobs},
                     {"reward", r.reward},
                     {"truncated", r.truncated}};
}
inline void from_json(const nlohmann::json& j, Rollout& r) {
  j.at("query_id").get_to(r.query_id);
  j.at("tokens").get_to(r.tokens);
  j.at("old_logprobs").get_to(r.old_logprobs);
  j.at("reward").get_to(r.reward);
  j.at("truncated").get_to(r.truncated);
}

inline void to_json(nlohmann::json& j, const Group& g) {
  j = nlohmann::json{{"query", g.query}, {"rollouts", g.rollouts}, {"advantages", g.advantages}};
}
inline void from_json(const nlohmann::json& j, Group& g) {
  j.at("query").get_to(g.query);
  j.at("rollouts").get_to(g.rollouts);
  j.at("advantages").get_to(g.advantages);
}

inline void to_json(nlohmann::json& j, const Batch& b) {
  j = nlohmann::json{{"groups", b.groups}};
}
inline void from_json(const nlohmann::json& j, Batch& b) {
  j.at("groups").get_to(b.groups);
}

inline void to_json(nlohmann::json& j, const ClipConfig& c) {
  j = nlohmann::json{{"eps_token_low", c.eps_token_low},
                     {"eps_token_high", c.eps_token_high},
                     {"eps_seq_low", c.eps_seq_low},
                     {"eps_seq_high", c.eps_seq_high},
                     {"mode", c.mode == ClipMode::Unified ? "unified" : "branch_specific"},
                     {"eps_unified_low", c.eps_unified_low},
                     {"eps_unified_high", c.eps_unified_high}};
}
inline void from_json(const nlohmann::json& j, ClipConfig& c) {
  j.at("eps_token_low").get_to(c.eps_token_low);
  j.at("eps_token_high").get_to(c.eps_token_high);
  j.at("eps_seq_low").get_to(c.eps_seq_low);
  j.at("eps_seq_high").get_to(c.eps_seq_high);
  const std::string mode = j.at("mode").get<std::string>();
  if (mode == "unified") c.mode = ClipMode::Unified;
  else if (mode == "branch_specific") c.mode = ClipMode::BranchSpecific;
  else throw std::invalid_argument("clip mode must be branch_specific or unified");
  j.at("eps_unified_low").get_to(c.eps_unified_low);
  j.at("eps_unified_high").get_to(c.eps_unified_high);
}

inline void to_json(nlohmann::json& j, const MixingMode& m) {
  j = nlohmann::json{{"mode", m.kind == MixKind::EntropyGuided ? "entropy_guided" : "averaged"},
                     {"w_min", m.w_min},
                     {"w_max", m.w_max}};
}
inline void from_json(const nlohmann::json& j, MixingMode& m) {
  const std::string mode = j.at("mode").get<std::string>();
  if (mode == "entropy_guided") m.kind = MixKind::EntropyGuided;
  else if (mode == "averaged") m.kind = MixKind::Averaged;
  else throw std::invalid_argument("mixing mode must be averaged or entropy_guided");
  j.at("w_min").get_to(m.w_min);
  j.at("w_max").get_to(m.w_max);
}

}  // namespace rlvr
