#pragma once

// Trace auditing: read a JSONL dump of rollouts (tokens, behavior and
// current log-probs, rewards, optional entropies), rebuild the ratio
// machinery, and evaluate every objective's value and clip statistics
// without any policy table.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "rlvr/metrics_io.hpp"
#include "rlvr/objectives.hpp"
#include "rlvr/run_config.hpp"

namespace rlvr {

struct TraceRollout {
  std::int64_t query_id = 0;
  std::vector<int> tokens;
  std::vector<double> old_logprobs;
  std::vector<double> new_logprobs;
  std::vector<double> entropies;  // empty when the line omits them
  double reward = 0.0;
};

struct Trace {
  std::vector<TraceRollout> rollouts;
  std::vector<std::pair<std::int64_t, std::vector<std::size_t>>> groups;  // first-appearance order
  bool has_entropies = false;
};

inline Trace read_trace(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError({"cannot open trace " + path});
  std::vector<std::string> errs;
  Trace trace;
  std::string line;
  int line_no = 0;
  int with_entropies = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      errs.push_back(where + "invalid JSON");
      continue;
    }
    if (!j.is_object()) {
      errs.push_back(where + "expected a JSON object");
      continue;
    }
    static const std::set<std::string> allowed = {"query_id", "tokens", "old_logprobs",
                                                 "new_logprobs", "reward", "entropies"};
    bool bad = false;
    for (const auto& [key, value] : j.items()) {
      (void)value;
      if (!allowed.count(key)) {
        errs.push_back(where + "unknown key '" + key + "'");
        bad = true;
      }
    }
    for (const char* key : {"query_id", "tokens", "old_logprobs", "new_logprobs", "reward"})
      if (!j.contains(key)) {
        errs.push_back(where + "missing key '" + std::string(key) + "'");
        bad = true;
      }
    if (bad) continue;

    TraceRollout ro;
    if (j["query_id"].is_number_integer() || j["query_id"].is_number_unsigned()) {
      ro.query_id = j["query_id"].get<std::int64_t>();
    } else {
      errs.push_back(where + "query_id: expected an integer");
      continue;
    }
    auto read_reals = [&](const char* key, std::vector<double>& out, bool require_nonpos) {
      const auto& arr = j[key];
      if (!arr.is_array() || arr.empty()) {
        errs.push_back(where + std::string(key) + ": expected a non-empty array");
        return false;
      }
      for (const auto& x : arr) {
        if (!x.is_number()) {
          errs.push_back(where + std::string(key) + ": expected numbers");
          return false;
        }
        const double v = x.get<double>();
        if (require_nonpos && v > 0.0) {
          errs.push_back(where + std::string(key) + ": log-probabilities must be <= 0");
          return false;
        }
        out.push_back(v);
      }
      return true;
    };
    bool ok = true;
    {
      const auto& arr = j["tokens"];
      if (!arr.is_array() || arr.empty()) {
        errs.push_back(where + "tokens: expected a non-empty array");
        ok = false;
      } else {
        for (const auto& x : arr) {
          if (!x.is_number_integer() || x.get<long long>() < 0) {
            errs.push_back(where + "tokens: expected non-negative integers");
            ok = false;
            break;
          }
          ro.tokens.push_back(x.get<int>());
        }
      }
    }
    ok = read_reals("old_logprobs", ro.old_logprobs, true) && ok;
    ok = read_reals("new_logprobs", ro.new_logprobs, true) && ok;
    if (j.contains("entropies")) {
      if (!read_reals("entropies", ro.entropies, false)) ok = false;
      for (double h : ro.entropies)
        if (h < 0.0) {
          errs.push_back(where + "entropies: must be >= 0");
          ok = false;
          break;
        }
    }
    if (j["reward"].is_number()) {
      ro.reward = j["reward"].get<double>();
      if (ro.reward != 0.0 && ro.reward != 1.0) {
        errs.push_back(where + "reward: expected 0 or 1");
        ok = false;
      }
    } else {
      errs.push_back(where + "reward: expected a number");
      ok = false;
    }
    if (ok && (ro.tokens.size() != ro.old_logprobs.size() ||
               ro.tokens.size() != ro.new_logprobs.size() ||
               (!ro.entropies.empty() && ro.entropies.size() != ro.tokens.size()))) {
      errs.push_back(where + "tokens/old_logprobs/new_logprobs/entropies lengths differ");
      ok = false;
    }
    if (!ok) continue;
    if (!ro.entropies.empty()) ++with_entropies;
    trace.rollouts.push_back(std::move(ro));
  }
  if (errs.empty() && trace.rollouts.empty()) errs.push_back("trace is empty");
  if (!errs.empty()) throw ConfigError(std::move(errs));

  trace.has_entropies = with_entropies == static_cast<int>(trace.rollouts.size());
  for (std::size_t i = 0; i < trace.rollouts.size(); ++i) {
    const auto qid = trace.rollouts[i].query_id;
    auto it = std::find_if(trace.groups.begin(), trace.groups.end(),
                           [qid](const auto& g) { return g.first == qid; });
    if (it == trace.groups.end()) {
      trace.groups.emplace_back(qid, std::vector<std::size_t>{i});
    } else {
      it->second.push_back(i);
    }
  }
  for (const auto& [qid, members] : trace.groups)
    if (members.size() < 2)
      throw ConfigError({"group for query_id " + std::to_string(qid) +
                         " has fewer than 2 rollouts; group advantages need variance"});
  return trace;
}

// Tape construction straight from trace numbers: new_logprobs play the role
// of the base point, and there is no policy to differentiate through.
inline EvalTape trace_tape(const Trace& trace, const std::vector<double>& advantages,
                           const ObjectiveSpec& spec) {
  EvalTape tape;
  const double cw_lo = std::max(0.0, 1.0 - spec.clip.eps_token_low);
  const double cw_hi = 1.0 + spec.clip.eps_token_high;
  double entropy_sum = 0.0;
  for (std::size_t i = 0; i < trace.rollouts.size(); ++i) {
    const TraceRollout& ro = trace.rollouts[i];
    RolloutTape rt;
    rt.advantage = advantages[i];
    double logdiff_sum = 0.0;
    for (std::size_t t = 0; t < ro.tokens.size(); ++t) {
      TokenTape tk;
      tk.key.query_id = ro.query_id;
      tk.token = ro.tokens[t];
      tk.old_lp = ro.old_logprobs[t];
      tk.base_lp = ro.new_logprobs[t];
      tk.entropy = trace.has_entropies ? ro.entropies[t] : 0.0;
      entropy_sum += tk.entropy;
      const double r = std::exp(tk.base_lp - tk.old_lp);
      tk.cispo_weight = clip_to(r, cw_lo, cw_hi);
      tk.cispo_truncated = (r < cw_lo || r > cw_hi);
      logdiff_sum += tk.base_lp - tk.old_lp;
      rt.tokens.push_back(std::move(tk));
    }
    rt.seq_ratio_base = std::exp(logdiff_sum / static_cast<double>(rt.tokens.size()));
    tape.token_count += static_cast<long long>(rt.tokens.size());
    tape.rollouts.push_back(std::move(rt));
  }
  if (spec.kind == ObjectiveKind::DHPO_A || spec.kind == ObjectiveKind::DHPO_E) {
    std::vector<double> entropies;
    for (const auto& rt : tape.rollouts)
      for (const auto& tk : rt.tokens) entropies.push_back(tk.entropy);
    const auto ws = mixing_weights(spec.mixing, entropies);
    std::size_t i = 0;
    for (auto& rt : tape.rollouts)
      for (auto& tk : rt.tokens) tk.weight = ws[i++];
  }
  tape.mean_entropy = tape.token_count > 0 ? entropy_sum / static_cast<double>(tape.token_count) : 0.0;
  return tape;
}

inline nlohmann::ordered_json run_audit(const std::string& trace_path, const RunConfig& rc) {
  const Trace trace = read_trace(trace_path);

  std::vector<double> advantages(trace.rollouts.size(), 0.0);
  for (const auto& [qid, members] : trace.groups) {
    (void)qid;
    std::vector<double> rewards;
    for (auto i : members) rewards.push_back(trace.rollouts[i].reward);
    const auto adv = group_advantages(rewards, rc.train.std_floor);
    for (std::size_t k = 0; k < members.size(); ++k) advantages[members[k]] = adv[k];
  }

  nlohmann::ordered_json report;
  report["trace"] = trace_path;
  report["rollouts"] = trace.rollouts.size();
  report["groups"] = trace.groups.size();
  report["entropies_present"] = trace.has_entropies;

  // DHPO variants honor the configured clip/mixing; the other objectives
  // always use their published settings.
  nlohmann::ordered_json objectives;
  for (ObjectiveKind kind : {ObjectiveKind::GRPO, ObjectiveKind::GSPO, ObjectiveKind::DHPO_A,
                             ObjectiveKind::DHPO_E, ObjectiveKind::GMPO, ObjectiveKind::CISPO}) {
    const bool dhpo = kind == ObjectiveKind::DHPO_A || kind == ObjectiveKind::DHPO_E;
    const ObjectiveSpec spec = make_objective_spec(
        kind, dhpo ? rc.train.clip : default_clip_for(kind), rc.train.mixing);
    const EvalTape tape = trace_tape(trace, advantages, spec);
    const ObjectiveReport rep = evaluate_tape(spec, tape, nullptr);
    nlohmann::ordered_json o;
    o["loss"] = rep.loss;
    o["clip_token_frac"] = rep.clip_stats.token_frac;
    o["clip_seq_frac"] = rep.clip_stats.seq_frac;
    o["min_clipped_frac"] = rep.clip_stats.min_clipped_frac;
    if (!rep.notes.empty()) o["notes"] = rep.notes;
    if (kind == ObjectiveKind::DHPO_E && !trace.has_entropies)
      o["notes"].push_back("trace has no entropies: entropy-guided weights degenerate to the midpoint");
    objectives[to_string(kind)] = std::move(o);
  }
  report["objectives"] = std::move(objectives);

  // per-rollout DHPO decomposition at the configured mixing/clip
  const ObjectiveSpec dhpo_spec = make_objective_spec(
      rc.train.mixing.kind == MixKind::EntropyGuided ? ObjectiveKind::DHPO_E : ObjectiveKind::DHPO_A,
      rc.train.clip, rc.train.mixing);
  const EvalTape dhpo_tape = trace_tape(trace, advantages, dhpo_spec);
  nlohmann::ordered_json ratios = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < trace.rollouts.size(); ++i) {
    const TraceRollout& ro = trace.rollouts[i];
    std::vector<double> weights;
    for (const auto& tk : dhpo_tape.rollouts[i].tokens) weights.push_back(tk.weight);
    const RatioBundle b =
        build_ratio_bundle(ro.new_logprobs, ro.old_logprobs, weights, rc.train.clip);
    nlohmann::ordered_json entry;
    entry["query_id"] = ro.query_id;
    entry["reward"] = ro.reward;
    entry["advantage"] = advantages[i];
    entry["seq_ratio"] = b.seq_ratio_value;
    entry["token_ratios"] = b.token_ratios;
    entry["weights"] = b.weights;
    entry["mixed"] = b.mixed;
    entry["mixed_clipped"] = b.mixed_clipped;
    auto bools = [](const std::vector<std::uint8_t>& flags) {
      nlohmann::ordered_json arr = nlohmann::ordered_json::array();
      for (const auto f : flags) arr.push_back(f != 0);
      return arr;
    };
    entry["token_clip_flags"] = bools(b.token_clip_flags);
    entry["seq_clip_flags"] = bools(b.seq_clip_flags);
    ratios.push_back(std::move(entry));
  }
  report["ratios"] = std::move(ratios);
  return report;
}

}  // namespace rlvr
