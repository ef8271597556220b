#pragma once

// Run configuration: JSON documents layered as defaults <- preset <- config
// file <- --set overrides, parsed strictly (unknown keys rejected, every
// error reported at once) into a TrainConfig plus output paths.

#include <cctype>
#include <cstdint>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rlvr/objectives.hpp"
#include "rlvr/trainer.hpp"

namespace rlvr {

struct ConfigError : std::runtime_error {
  std::vector<std::string> issues;
  explicit ConfigError(std::vector<std::string> iss)
      : std::runtime_error(join(iss)), issues(std::move(iss)) {}

 private:
  static std::string join(const std::vector<std::string>& iss) {
    std::string msg = "config error";
    for (const auto& s : iss) msg += "\n  - " + s;
    return msg;
  }
};

struct RunConfig {
  TrainConfig train;
  std::string run_id;  // defaults to "<objective>-s<seed>", lowercased
  std::string out_dir = "runs";
};

// objects merge key-by-key, everything else replaces
inline void merge_overlay(nlohmann::json& base, const nlohmann::json& overlay) {
  if (!base.is_object() || !overlay.is_object()) {
    base = overlay;
    return;
  }
  for (const auto& [key, value] : overlay.items()) {
    if (value.is_object() && base.contains(key) && base[key].is_object())
      merge_overlay(base[key], value);
    else
      base[key] = value;
  }
}

// "a.b.c=value"; the value text is parsed as JSON when possible, otherwise
// taken as a string (so objective=DHPO_E needs no quoting)
inline void apply_set_override(nlohmann::json& doc, const std::string& kv,
                               std::vector<std::string>& errs) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos || eq == 0) {
    errs.push_back("--set '" + kv + "': expected key=value");
    return;
  }
  const std::string path = kv.substr(0, eq);
  const std::string text = kv.substr(eq + 1);
  nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  nlohmann::json* node = &doc;
  std::size_t begin = 0;
  while (true) {
    const auto dot = path.find('.', begin);
    const std::string part = path.substr(begin, dot == std::string::npos ? dot : dot - begin);
    if (part.empty()) {
      errs.push_back("--set '" + kv + "': empty path segment");
      return;
    }
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    if (!node->contains(part) || !(*node)[part].is_object()) (*node)[part] = nlohmann::json::object();
    node = &(*node)[part];
    begin = dot + 1;
  }
}

inline nlohmann::json preset_json(const std::string& name) {
  nlohmann::json paper = {
      {"prompts_per_step", 512}, {"group_size", 16},      {"inner_epochs", 1},
      {"minibatch_rollouts", 256}, {"max_response_len", 4096}, {"temperature", 1.0},
      {"optimizer", "adam"},     {"learning_rate", 1e-6},
  };
  if (name == "paper-dhpo") {
    paper["objective"] = "DHPO_E";
    paper["clip"] = {{"eps_token_low", 0.2}, {"eps_token_high", 0.28},
                     {"eps_seq_low", 0.2},   {"eps_seq_high", 0.28},
                     {"mode", "branch_specific"}};
  } else if (name == "paper-grpo") {
    paper["objective"] = "GRPO";
    paper["clip"] = {{"eps_token_low", 0.2}, {"eps_token_high", 0.2}};
  } else if (name == "paper-gspo") {
    paper["objective"] = "GSPO";
    paper["clip"] = {{"eps_seq_low", 3e-4}, {"eps_seq_high", 4e-4}};
  } else if (name == "paper-gmpo") {
    paper["objective"] = "GMPO";
    paper["clip"] = {{"eps_seq_low", 0.4}, {"eps_seq_high", 0.4}};
  } else if (name == "paper-cispo") {
    paper["objective"] = "CISPO";
    paper["clip"] = {{"eps_token_low", 10.0}, {"eps_token_high", 0.2}};
  } else {
    throw ConfigError({"unknown preset '" + name +
                       "'; available: paper-dhpo paper-grpo paper-gspo paper-gmpo paper-cispo"});
  }
  return paper;
}

namespace detail {

struct FieldReader {
  const nlohmann::json& obj;
  std::string prefix;
  std::vector<std::string>& errs;
  std::set<std::string> known;

  FieldReader(const nlohmann::json& o, std::string p, std::vector<std::string>& e)
      : obj(o), prefix(std::move(p)), errs(e) {}

  std::string label(const std::string& key) const { return prefix.empty() ? key : prefix + "." + key; }

  const nlohmann::json* field(const std::string& key) {
    known.insert(key);
    const auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
  }

  template <class T>
  void integer(const std::string& key, T& out) {
    if (const auto* f = field(key)) {
      if (f->is_number_integer() || f->is_number_unsigned())
        out = f->get<T>();
      else
        errs.push_back(label(key) + ": expected an integer");
    }
  }

  void uinteger(const std::string& key, std::uint64_t& out) {
    if (const auto* f = field(key)) {
      if (f->is_number_unsigned() || (f->is_number_integer() && f->get<long long>() >= 0))
        out = f->get<std::uint64_t>();
      else
        errs.push_back(label(key) + ": expected a non-negative integer");
    }
  }

  void real(const std::string& key, double& out) {
    if (const auto* f = field(key)) {
      if (f->is_number())
        out = f->get<double>();
      else
        errs.push_back(label(key) + ": expected a number");
    }
  }

  void boolean(const std::string& key, bool& out) {
    if (const auto* f = field(key)) {
      if (f->is_boolean())
        out = f->get<bool>();
      else
        errs.push_back(label(key) + ": expected true or false");
    }
  }

  bool text(const std::string& key, std::string& out) {
    if (const auto* f = field(key)) {
      if (f->is_string()) {
        out = f->get<std::string>();
        return true;
      }
      errs.push_back(label(key) + ": expected a string");
    }
    return false;
  }

  const nlohmann::json* object(const std::string& key) {
    if (const auto* f = field(key)) {
      if (f->is_object()) return f;
      errs.push_back(label(key) + ": expected an object");
    }
    return nullptr;
  }

  void finish() {
    if (!obj.is_object()) {
      errs.push_back(prefix.empty() ? "config root: expected a JSON object"
                                    : prefix + ": expected an object");
      return;
    }
    for (const auto& [key, value] : obj.items()) {
      (void)value;
      if (!known.count(key)) errs.push_back("unknown key '" + label(key) + "'");
    }
  }
};

}  // namespace detail

inline RunConfig parse_run_config(const nlohmann::json& doc) {
  std::vector<std::string> errs;
  RunConfig rc;
  TrainConfig& t = rc.train;
  detail::FieldReader top(doc, "", errs);

  std::string objective_text;
  if (top.text("objective", objective_text) && !objective_from_string(objective_text, t.objective))
    errs.push_back("objective: unknown value '" + objective_text +
                   "' (GRPO, GSPO, DHPO_A, DHPO_E, GMPO, CISPO)");

  // clip and mixing start from the chosen objective's published settings;
  // explicit keys override field by field
  t.clip = default_clip_for(t.objective);
  if (const auto* clip = top.object("clip")) {
    detail::FieldReader cr(*clip, "clip", errs);
    cr.real("eps_token_low", t.clip.eps_token_low);
    cr.real("eps_token_high", t.clip.eps_token_high);
    cr.real("eps_seq_low", t.clip.eps_seq_low);
    cr.real("eps_seq_high", t.clip.eps_seq_high);
    cr.real("eps_unified_low", t.clip.eps_unified_low);
    cr.real("eps_unified_high", t.clip.eps_unified_high);
    std::string mode;
    if (cr.text("mode", mode)) {
      if (mode == "unified") t.clip.mode = ClipMode::Unified;
      else if (mode == "branch_specific") t.clip.mode = ClipMode::BranchSpecific;
      else errs.push_back("clip.mode: expected branch_specific or unified");
    }
    cr.finish();
  }

  t.mixing.kind = t.objective == ObjectiveKind::DHPO_E ? MixKind::EntropyGuided : MixKind::Averaged;
  if (const auto* mixing = top.object("mixing")) {
    detail::FieldReader mr(*mixing, "mixing", errs);
    std::string mode;
    if (mr.text("mode", mode)) {
      if (mode == "entropy_guided") t.mixing.kind = MixKind::EntropyGuided;
      else if (mode == "averaged") t.mixing.kind = MixKind::Averaged;
      else errs.push_back("mixing.mode: expected averaged or entropy_guided");
    }
    mr.real("w_min", t.mixing.w_min);
    mr.real("w_max", t.mixing.w_max);
    mr.finish();
  }

  top.integer("prompts_per_step", t.prompts_per_step);
  top.integer("group_size", t.group_size);
  top.integer("inner_epochs", t.inner_epochs);
  long long minibatch = std::numeric_limits<long long>::min();
  top.integer("minibatch_rollouts", minibatch);
  top.integer("max_response_len", t.max_response_len);
  top.integer("total_steps", t.total_steps);

  std::string optimizer;
  if (top.text("optimizer", optimizer)) {
    if (optimizer == "adam") t.optimizer = OptimizerKind::Adam;
    else if (optimizer == "sgd") t.optimizer = OptimizerKind::SGD;
    else errs.push_back("optimizer: expected adam or sgd");
  }
  top.real("learning_rate", t.learning_rate);
  top.real("beta1", t.beta1);
  top.real("beta2", t.beta2);
  top.real("adam_eps", t.adam_eps);
  top.real("temperature", t.temperature);
  top.uinteger("seed", t.seed);
  top.integer("eval_every", t.eval_every);
  top.integer("eval_queries", t.eval_queries);

  std::string refresh;
  if (top.text("entropy_refresh", refresh)) {
    if (refresh == "minibatch") t.entropy_refresh = EntropyRefresh::Minibatch;
    else if (refresh == "snapshot") t.entropy_refresh = EntropyRefresh::Snapshot;
    else errs.push_back("entropy_refresh: expected minibatch or snapshot");
  }
  top.boolean("record_wall_time", t.record_wall_time);
  top.integer("eval_avg_k", t.eval_avg_k);
  top.integer("checkpoint_every", t.checkpoint_every);
  top.real("std_floor", t.std_floor);

  if (const auto* task = top.object("task")) {
    detail::FieldReader tr(*task, "task", errs);
    std::string kind;
    if (tr.text("kind", kind)) {
      if (kind == "SumMod") t.task.kind = TaskKind::SumMod;
      else if (kind == "ChainMod") t.task.kind = TaskKind::ChainMod;
      else errs.push_back("task.kind: expected SumMod or ChainMod");
    }
    tr.integer("modulus", t.task.modulus);
    tr.integer("operand_min", t.task.operand_min);
    tr.integer("operand_max", t.task.operand_max);
    tr.integer("chain_length", t.task.chain_length);
    tr.integer("max_response_len", t.task.max_response_len);
    tr.uinteger("seed", t.task.seed);
    tr.finish();
  }

  top.text("run_id", rc.run_id);
  top.text("out_dir", rc.out_dir);
  top.finish();

  if (minibatch != std::numeric_limits<long long>::min()) {
    t.minibatch_rollouts = static_cast<int>(minibatch);
  } else {
    const int total = t.prompts_per_step * t.group_size;
    t.minibatch_rollouts = total % 4 == 0 ? total / 4 : total;
  }

  for (auto& e : validate_train(t)) errs.push_back(e);

  if (rc.run_id.empty()) {
    std::string name = to_string(t.objective);
    for (char& c : name) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    rc.run_id = name + "-s" + std::to_string(t.seed);
  }
  for (char c : rc.run_id)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.')) {
      errs.push_back("run_id: only letters, digits, '_', '-', '.' are allowed");
      break;
    }

  if (!errs.empty()) throw ConfigError(std::move(errs));
  return rc;
}

inline nlohmann::ordered_json echo_config(const RunConfig& rc) {
  const TrainConfig& t = rc.train;
  nlohmann::ordered_json j;
  j["run_id"] = rc.run_id;
  j["out_dir"] = rc.out_dir;
  j["objective"] = to_string(t.objective);
  j["clip"] = {{"eps_token_low", t.clip.eps_token_low},
               {"eps_token_high", t.clip.eps_token_high},
               {"eps_seq_low", t.clip.eps_seq_low},
               {"eps_seq_high", t.clip.eps_seq_high},
               {"mode", t.clip.mode == ClipMode::Unified ? "unified" : "branch_specific"},
               {"eps_unified_low", t.clip.eps_unified_low},
               {"eps_unified_high", t.clip.eps_unified_high}};
  j["mixing"] = {{"mode", t.mixing.kind == MixKind::EntropyGuided ? "entropy_guided" : "averaged"},
                 {"w_min", t.mixing.w_min},
                 {"w_max", t.mixing.w_max}};
  j["prompts_per_step"] = t.prompts_per_step;
  j["group_size"] = t.group_size;
  j["inner_epochs"] = t.inner_epochs;
  j["minibatch_rollouts"] = t.minibatch_rollouts;
  j["max_response_len"] = t.max_response_len;
  j["total_steps"] = t.total_steps;
  j["optimizer"] = t.optimizer == OptimizerKind::Adam ? "adam" : "sgd";
  j["learning_rate"] = t.learning_rate;
  j["beta1"] = t.beta1;
  j["beta2"] = t.beta2;
  j["adam_eps"] = t.adam_eps;
  j["temperature"] = t.temperature;
  j["seed"] = t.seed;
  j["eval_every"] = t.eval_every;
  j["eval_queries"] = t.eval_queries;
  j["entropy_refresh"] = t.entropy_refresh == EntropyRefresh::Snapshot ? "snapshot" : "minibatch";
  j["record_wall_time"] = t.record_wall_time;
  j["eval_avg_k"] = t.eval_avg_k;
  j["checkpoint_every"] = t.checkpoint_every;
  j["std_floor"] = t.std_floor;
  j["task"] = {{"kind", t.task.kind == TaskKind::ChainMod ? "ChainMod" : "SumMod"},
               {"modulus", t.task.modulus},
               {"operand_min", t.task.operand_min},
               {"operand_max", t.task.operand_max},
               {"chain_length", t.task.chain_length},
               {"max_response_len", t.task.max_response_len},
               {"seed", t.task.seed}};
  return j;
}

}  // namespace rlvr
