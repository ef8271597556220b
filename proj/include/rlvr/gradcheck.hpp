#pragma once

// Randomized analytic-vs-FD gradient checks. Instances are tiny (V <= 6,
// short rollouts, 1-2 groups) so the full FD sweep stays cheap, and the
// perturbation between behavior and current parameters is large enough to
// land tokens on both sides of every clip range.

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rlvr/objectives.hpp"

namespace rlvr {

struct GradcheckOptions {
  int instances = 100;
  std::uint64_t seed = 2024;
  double tol = 1e-6;
  double h = 1e-6;
  int vocab_max = 6;
  int max_len = 8;
  double row_scale = 0.8;      // behavior-policy logit spread
  double perturb_scale = 0.35; // current-minus-behavior logit noise
};

struct RandomInstance {
  Batch batch;
  PolicyParams params_old;
  PolicyParams params;
};

inline RandomInstance make_random_instance(std::uint64_t seed, const GradcheckOptions& opt) {
  Rng rng(derive_seed(seed, {stream::kInstance}));
  RandomInstance inst;
  const int v_size = static_cast<int>(rng.uniform_int(2, opt.vocab_max));
  Vocab vocab;
  for (int v = 0; v + 1 < v_size; ++v) vocab.tokens.push_back("t" + std::to_string(v));
  vocab.tokens.push_back("EOS");
  vocab.eos_id = v_size - 1;
  const int k = static_cast<int>(rng.uniform_int(1, 2));
  inst.params_old.context_window = k;
  inst.params_old.vocab = vocab;

  const int n_groups = static_cast<int>(rng.uniform_int(1, 2));
  const int group_size = rng.uniform_int(0, 1) == 0 ? 2 : 4;
  for (int gi = 0; gi < n_groups; ++gi) {
    Group g;
    g.query.id = gi + 1;
    const int prompt_len = static_cast<int>(rng.uniform_int(1, 3));
    for (int t = 0; t < prompt_len; ++t)
      g.query.prompt_tokens.push_back(static_cast<int>(rng.uniform_int(0, v_size - 2)));
    for (int j = 0; j < group_size; ++j) {
      Rollout ro;
      ro.query_id = g.query.id;
      const int len = static_cast<int>(rng.uniform_int(1, opt.max_len));
      for (int t = 0; t < len; ++t)
        ro.tokens.push_back(static_cast<int>(rng.uniform_int(0, v_size - 2)));
      if (rng.uniform() < 0.5) ro.tokens.back() = vocab.eos_id;
      ro.truncated = ro.tokens.back() != vocab.eos_id;
      ro.reward = rng.uniform() < 0.5 ? 1.0 : 0.0;
      g.rollouts.push_back(std::move(ro));
    }
    // make sure the group carries signal: a degenerate reward vector would
    // zero every advantage
    bool all_same = true;
    for (const auto& ro : g.rollouts)
      if (ro.reward != g.rollouts.front().reward) all_same = false;
    if (all_same) g.rollouts.front().reward = 1.0 - g.rollouts.front().reward;
    inst.batch.groups.push_back(std::move(g));
  }

  // behavior-policy rows materialize in visit order, then old_logprobs are
  // read back from them so ratios are grounded in a real policy
  for (auto& g : inst.batch.groups) {
    for (auto& ro : g.rollouts) {
      std::vector<int> history(g.query.prompt_tokens);
      for (int tok : ro.tokens) {
        const auto key = make_context_key(g.query.id, history, k);
        if (!inst.params_old.table.count(key)) {
          std::vector<double> row(static_cast<std::size_t>(v_size));
          for (auto& x : row) x = opt.row_scale * rng.normal();
          inst.params_old.table.emplace(key, std::move(row));
        }
        const auto lps = logprobs(inst.params_old, key);
        ro.old_logprobs.push_back(lps[static_cast<std::size_t>(tok)]);
        history.push_back(tok);
      }
    }
  }
  fill_advantages(inst.batch);

  inst.params = inst.params_old;
  for (auto& [key, row] : inst.params.table)
    for (auto& x : row) x += opt.perturb_scale * rng.normal();
  return inst;
}

struct ObjectiveCheck {
  std::string name;
  double max_dev = 0.0;
  long long compared = 0;
  long long skipped = 0;
};

struct GradcheckReport {
  std::vector<ObjectiveCheck> objectives;
  int instances = 0;
  double tol = 0.0;
  double max_dev_overall = 0.0;
  bool pass = false;
};

inline std::vector<std::pair<std::string, ObjectiveSpec>> gradcheck_specs() {
  std::vector<std::pair<std::string, ObjectiveSpec>> specs;
  for (ObjectiveKind kind : {ObjectiveKind::GRPO, ObjectiveKind::GSPO, ObjectiveKind::DHPO_A,
                             ObjectiveKind::DHPO_E, ObjectiveKind::GMPO, ObjectiveKind::CISPO})
    specs.emplace_back(to_string(kind),
                       make_objective_spec(kind, default_clip_for(kind), MixingMode{}));
  ClipConfig unified;
  unified.mode = ClipMode::Unified;
  specs.emplace_back("DHPO_A(unified)",
                     make_objective_spec(ObjectiveKind::DHPO_A, unified, MixingMode{}));
  return specs;
}

inline GradcheckReport run_gradcheck(const GradcheckOptions& opt) {
  GradcheckReport rep;
  rep.instances = opt.instances;
  rep.tol = opt.tol;
  const auto specs = gradcheck_specs();
  for (const auto& [name, spec] : specs) {
    (void)spec;
    rep.objectives.push_back(ObjectiveCheck{name, 0.0, 0, 0});
  }
  for (int i = 0; i < opt.instances; ++i) {
    const auto inst = make_random_instance(derive_seed(opt.seed, {static_cast<std::uint64_t>(i)}), opt);
    const auto views = batch_views(inst.batch);
    for (std::size_t s = 0; s < specs.size(); ++s) {
      const auto& spec = specs[s].second;
      const auto analytic = evaluate_objective(spec, views, inst.params);
      const auto fd = fd_gradient_oracle(spec, views, inst.params, opt.h);
      const auto cmp = compare_gradients(analytic.gradient, fd);
      auto& oc = rep.objectives[s];
      oc.max_dev = std::max(oc.max_dev, cmp.max_abs_dev);
      oc.compared += cmp.compared;
      oc.skipped += cmp.skipped;
    }
  }
  for (const auto& oc : rep.objectives) rep.max_dev_overall = std::max(rep.max_dev_overall, oc.max_dev);
  rep.pass = rep.max_dev_overall <= opt.tol;
  return rep;
}

inline nlohmann::ordered_json gradcheck_report_json(const GradcheckReport& rep) {
  nlohmann::ordered_json j;
  j["instances"] = rep.instances;
  j["tolerance"] = rep.tol;
  j["max_abs_deviation"] = rep.max_dev_overall;
  j["pass"] = rep.pass;
  nlohmann::ordered_json objs = nlohmann::ordered_json::array();
  for (const auto& oc : rep.objectives) {
    nlohmann::ordered_json o;
    o["objective"] = oc.name;
    o["max_abs_deviation"] = oc.max_dev;
    o["coords_checked"] = oc.compared;
    o["coords_skipped_at_kinks"] = oc.skipped;
    objs.push_back(std::move(o));
  }
  j["per_objective"] = std::move(objs);
  j["notes"] = {"GMPO and CISPO are interpreted baselines; see README"};
  return j;
}

}  // namespace rlvr
