#pragma once

// The training loop: sample a batch of grouped rollouts from a frozen
// behavior snapshot, run PPO-style inner epochs over shuffled mini-batches,
// apply ascent updates, evaluate greedily, checkpoint.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "rlvr/advantage.hpp"
#include "rlvr/core_types.hpp"
#include "rlvr/env_tasks.hpp"
#include "rlvr/objectives.hpp"
#include "rlvr/policy.hpp"
#include "rlvr/rng.hpp"

namespace rlvr {

enum class OptimizerKind { SGD, Adam };
enum class EntropyRefresh { Minibatch, Snapshot };

struct TrainConfig {
  ObjectiveKind objective = ObjectiveKind::DHPO_A;
  ClipConfig clip;
  MixingMode mixing;
  int prompts_per_step = 32;
  int group_size = 16;
  int inner_epochs = 4;
  int minibatch_rollouts = 128;  // must divide prompts_per_step * group_size
  int max_response_len = 32;
  int total_steps = 200;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double learning_rate = 5e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double temperature = 1.0;
  std::uint64_t seed = 1;
  int eval_every = 1;
  int eval_queries = 256;
  TaskSpec task;
  // Mixing entropies are recomputed under the current policy each mini-batch
  // by default; Snapshot freezes them once per step at the behavior snapshot.
  EntropyRefresh entropy_refresh = EntropyRefresh::Minibatch;
  bool record_wall_time = false;  // off by default so logs are byte-reproducible
  int eval_avg_k = 0;             // >0 adds a sampled Avg@k evaluation column
  int checkpoint_every = 0;       // 0 = final checkpoint only
  double std_floor = 1e-8;
};

inline std::vector<std::string> validate_train(const TrainConfig& c) {
  std::vector<std::string> errs;
  if (c.prompts_per_step < 1) errs.push_back("prompts_per_step: must be >= 1");
  if (c.group_size < 2) errs.push_back("group_size: must be >= 2 (group advantages need variance)");
  if (c.inner_epochs < 1) errs.push_back("inner_epochs: must be >= 1");
  const long long total = static_cast<long long>(c.prompts_per_step) * c.group_size;
  if (c.minibatch_rollouts < 1) errs.push_back("minibatch_rollouts: must be >= 1");
  else if (total % c.minibatch_rollouts != 0)
    errs.push_back("minibatch_rollouts: must divide prompts_per_step * group_size");
  if (c.max_response_len < 2) errs.push_back("max_response_len: must be >= 2");
  if (c.total_steps < 1) errs.push_back("total_steps: must be >= 1");
  if (!(c.learning_rate > 0.0)) errs.push_back("learning_rate: must be > 0");
  if (!(c.beta1 >= 0.0 && c.beta1 < 1.0)) errs.push_back("beta1: must be in [0, 1)");
  if (!(c.beta2 >= 0.0 && c.beta2 < 1.0)) errs.push_back("beta2: must be in [0, 1)");
  if (!(c.adam_eps > 0.0)) errs.push_back("adam_eps: must be > 0");
  if (!(c.temperature > 0.0)) errs.push_back("temperature: must be > 0");
  if (c.eval_every < 1) errs.push_back("eval_every: must be >= 1");
  if (c.eval_queries < 1) errs.push_back("eval_queries: must be >= 1");
  if (c.eval_avg_k < 0) errs.push_back("eval_avg_k: must be >= 0");
  if (c.checkpoint_every < 0) errs.push_back("checkpoint_every: must be >= 0");
  if (!(c.std_floor > 0.0)) errs.push_back("std_floor: must be > 0");
  for (auto& e : validate_task(c.task)) errs.push_back(e);
  for (auto& e : validate_clip(c.clip, c.objective == ObjectiveKind::CISPO)) errs.push_back("clip." + e);
  for (auto& e : validate_mixing(c.mixing)) errs.push_back("mixing." + e);
  if (c.objective == ObjectiveKind::DHPO_A && c.mixing.kind == MixKind::EntropyGuided)
    errs.push_back("mixing.mode: DHPO_A fixes the averaged mixing mode");
  if (c.objective == ObjectiveKind::DHPO_E && c.mixing.kind == MixKind::Averaged)
    errs.push_back("mixing.mode: DHPO_E fixes the entropy_guided mixing mode");
  return errs;
}

struct StepRecord {
  long long step = 0;
  double mean_reward = 0.0;
  double mean_entropy = 0.0;
  double mean_response_len = 0.0;
  double greedy_accuracy = 0.0;
  double loss = 0.0;
  ClipStats clip_stats;
  long long wall_ms = 0;
  double avg_at_k = -1.0;  // < 0: not evaluated
};

struct AdamState {
  std::map<ContextKey, std::vector<double>> m;
  std::map<ContextKey, std::vector<double>> v;
  long long t = 0;
};

struct TrainState {
  PolicyParams params;
  AdamState adam;
  long long step = 0;  // completed outer steps
  double last_greedy = 0.0;
  double last_avg_k = -1.0;
};

struct TrainerAbort : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline TrainState init_train_state(const TrainConfig& cfg) {
  TrainState st;
  st.params.context_window = 2;
  st.params.vocab = task_vocab();
  (void)cfg;
  return st;
}

// --- optimizers ---

inline void sgd_update(PolicyParams& params, const SparseGrad& grad, double lr) {
  for (const auto& [key, g] : grad) {
    auto it = params.table.find(key);
    if (it == params.table.end())
      it = params.table.emplace(key, std::vector<double>(g.size(), 0.0)).first;
    auto& row = it->second;
    for (std::size_t i = 0; i < g.size(); ++i) row[i] += lr * g[i];
  }
}

// Bias-corrected Adam, ascent direction. Only rows present in the gradient
// map are touched; the timestep is global.
inline void adam_update(PolicyParams& params, const SparseGrad& grad, AdamState& st, double lr,
                        double beta1, double beta2, double eps) {
  st.t += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(st.t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(st.t));
  for (const auto& [key, g] : grad) {
    auto pit = params.table.find(key);
    if (pit == params.table.end())
      pit = params.table.emplace(key, std::vector<double>(g.size(), 0.0)).first;
    auto mit = st.m.find(key);
    if (mit == st.m.end()) mit = st.m.emplace(key, std::vector<double>(g.size(), 0.0)).first;
    auto vit = st.v.find(key);
    if (vit == st.v.end()) vit = st.v.emplace(key, std::vector<double>(g.size(), 0.0)).first;
    auto& row = pit->second;
    auto& m = mit->second;
    auto& v = vit->second;
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
      row[i] += lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
    }
  }
}

// --- sampling and evaluation ---

inline Batch sample_step_batch(const PolicyParams& params_old, const TrainConfig& cfg,
                               long long step) {
  const auto queries = generate_queries(
      cfg.task, cfg.prompts_per_step,
      derive_seed(cfg.seed, {stream::kQueries, static_cast<std::uint64_t>(step)}));
  Batch batch;
  batch.groups.resize(queries.size());
  for (std::size_t p = 0; p < queries.size(); ++p) {
    Group& g = batch.groups[p];
    g.query = queries[p];
    g.rollouts.reserve(static_cast<std::size_t>(cfg.group_size));
    for (int j = 0; j < cfg.group_size; ++j) {
      Rng rng(derive_seed(cfg.seed, {stream::kRollouts, static_cast<std::uint64_t>(step),
                                     static_cast<std::uint64_t>(p), static_cast<std::uint64_t>(j)}));
      g.rollouts.push_back(
          sample_rollout(params_old, g.query, cfg.max_response_len, cfg.temperature, rng));
    }
  }
  fill_advantages(batch, cfg.std_floor);
  return batch;
}

inline double evaluate(const PolicyParams& params, const TaskSpec& task, int n_queries,
                       int max_len, std::uint64_t seed) {
  const auto queries = generate_queries(task, n_queries, seed);
  double correct = 0.0;
  for (const auto& q : queries) correct += greedy_decode(params, q, max_len).reward;
  return correct / static_cast<double>(n_queries);
}

inline double evaluate_avg_k(const PolicyParams& params, const TaskSpec& task, int n_queries,
                             int k, int max_len, double temperature, std::uint64_t seed) {
  const auto queries = generate_queries(task, n_queries, seed);
  double acc = 0.0;
  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    double hit = 0.0;
    for (int j = 0; j < k; ++j) {
      Rng rng(derive_seed(seed, {stream::kEval, static_cast<std::uint64_t>(qi),
                                 static_cast<std::uint64_t>(j)}));
      hit += sample_rollout(params, queries[qi], max_len, temperature, rng).reward;
    }
    acc += hit / static_cast<double>(k);
  }
  return acc / static_cast<double>(n_queries);
}

// --- the step ---

inline ObjectiveSpec objective_spec_from(const TrainConfig& cfg) {
  return make_objective_spec(cfg.objective, cfg.clip, cfg.mixing);
}

inline StepRecord run_step(TrainState& st, const TrainConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  const long long step = st.step + 1;  // 1-based step number being computed
  const PolicyParams params_old = st.params;
  const std::uint64_t snapshot_sum = params_checksum(params_old);

  const Batch batch = sample_step_batch(params_old, cfg, step);
  std::vector<RolloutView> all_views = batch_views(batch);
  const std::size_t n_rollouts = all_views.size();

  // Snapshot mode freezes mixing entropies at the behavior policy for the
  // whole step; default recomputes them under current params per mini-batch.
  std::vector<std::vector<double>> frozen_entropies;
  if (cfg.entropy_refresh == EntropyRefresh::Snapshot) {
    frozen_entropies.resize(n_rollouts);
    for (std::size_t i = 0; i < n_rollouts; ++i) {
      const auto& view = all_views[i];
      std::vector<int> history(view.query->prompt_tokens);
      for (int tok : view.rollout->tokens) {
        const auto key = make_context_key(view.query->id, history, params_old.context_window);
        frozen_entropies[i].push_back(token_entropy(params_old, key));
        history.push_back(tok);
      }
      all_views[i].frozen_entropies = &frozen_entropies[i];
    }
  }

  const ObjectiveSpec spec = objective_spec_from(cfg);
  double loss_acc = 0.0, entropy_acc = 0.0;
  double tok_frac_acc = 0.0, seq_frac_acc = 0.0, min_frac_acc = 0.0;
  long long token_total = 0;
  std::size_t rollouts_evaluated = 0;

  std::vector<std::size_t> order(n_rollouts);
  for (std::size_t i = 0; i < n_rollouts; ++i) order[i] = i;
  const std::size_t mb = static_cast<std::size_t>(cfg.minibatch_rollouts);

  for (int epoch = 0; epoch < cfg.inner_epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(cfg.seed, {stream::kShuffle, static_cast<std::uint64_t>(step),
                                           static_cast<std::uint64_t>(epoch)}));
    for (std::size_t i = n_rollouts; i > 1; --i) {
      const auto j = static_cast<std::size_t>(shuffle_rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(order[i - 1], order[j]);
    }
    for (std::size_t start = 0; start < n_rollouts; start += mb) {
      std::vector<RolloutView> views;
      views.reserve(mb);
      for (std::size_t i = start; i < std::min(start + mb, n_rollouts); ++i)
        views.push_back(all_views[order[i]]);
      const ObjectiveReport rep = evaluate_objective(spec, views, st.params);

      bool finite = std::isfinite(rep.loss);
      for (const auto& [key, row] : rep.gradient) {
        (void)key;
        for (double x : row)
          if (!std::isfinite(x)) finite = false;
      }
      if (!finite) {
        std::ostringstream diag;
        diag << "non-finite loss or gradient at step " << step << ", epoch " << epoch
             << ", minibatch " << start / mb << ", objective " << to_string(cfg.objective)
             << ", loss=" << rep.loss << ", rows=" << rep.gradient.size();
        throw TrainerAbort(diag.str());
      }

      if (cfg.optimizer == OptimizerKind::Adam)
        adam_update(st.params, rep.gradient, st.adam, cfg.learning_rate, cfg.beta1, cfg.beta2,
                    cfg.adam_eps);
      else
        sgd_update(st.params, rep.gradient, cfg.learning_rate);

      loss_acc += rep.loss * static_cast<double>(views.size());
      rollouts_evaluated += views.size();
      entropy_acc += rep.mean_entropy * static_cast<double>(rep.token_count);
      tok_frac_acc += rep.clip_stats.token_frac * static_cast<double>(rep.token_count);
      seq_frac_acc += rep.clip_stats.seq_frac * static_cast<double>(rep.token_count);
      min_frac_acc += rep.clip_stats.min_clipped_frac * static_cast<double>(rep.token_count);
      token_total += rep.token_count;
    }
  }

  if (params_checksum(params_old) != snapshot_sum)
    throw TrainerAbort("behavior snapshot mutated during inner epochs");

  StepRecord rec;
  rec.step = step;
  double reward_sum = 0.0, len_sum = 0.0;
  for (const auto& view : all_views) {
    reward_sum += view.rollout->reward;
    len_sum += static_cast<double>(view.rollout->tokens.size());
  }
  rec.mean_reward = reward_sum / static_cast<double>(n_rollouts);
  rec.mean_response_len = len_sum / static_cast<double>(n_rollouts);
  rec.loss = loss_acc / static_cast<double>(rollouts_evaluated);
  if (token_total > 0) {
    rec.mean_entropy = entropy_acc / static_cast<double>(token_total);
    rec.clip_stats.token_frac = tok_frac_acc / static_cast<double>(token_total);
    rec.clip_stats.seq_frac = seq_frac_acc / static_cast<double>(token_total);
    rec.clip_stats.min_clipped_frac = min_frac_acc / static_cast<double>(token_total);
  }

  if (step % cfg.eval_every == 0) {
    st.last_greedy = evaluate(st.params, cfg.task, cfg.eval_queries, cfg.max_response_len,
                              derive_seed(cfg.seed, {stream::kEval, static_cast<std::uint64_t>(step)}));
    if (cfg.eval_avg_k > 0)
      st.last_avg_k = evaluate_avg_k(
          st.params, cfg.task, cfg.eval_queries, cfg.eval_avg_k, cfg.max_response_len,
          cfg.temperature,
          derive_seed(cfg.seed, {stream::kEval, static_cast<std::uint64_t>(step), 1}));
  }
  rec.greedy_accuracy = st.last_greedy;
  rec.avg_at_k = st.last_avg_k;

  st.step = step;
  if (cfg.record_wall_time) {
    const auto t1 = std::chrono::steady_clock::now();
    rec.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count();
  }
  return rec;
}

// --- checkpoints ---

inline void save_checkpoint(const std::string& path, const TrainState& st, const TrainConfig& cfg) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::trunc);
    if (!os) throw std::runtime_error("save_checkpoint: cannot open " + tmp);
    os << "rlvr-lab-checkpoint 1\n";
    os << "seed " << cfg.seed << "\n";
    os << "step " << st.step << "\n";
    os << "context_window " << st.params.context_window << "\n";
    os << "vocab_size " << st.params.vocab.size() << "\n";
    os << "adam_t " << st.adam.t << "\n";
    os << "last_greedy ";
    write_double_text(os, st.last_greedy);
    os << "\nlast_avg_k ";
    write_double_text(os, st.last_avg_k);
    os << "\nparams\n";
    write_row_table(os, st.params.table);
    os << "adam_m\n";
    write_row_table(os, st.adam.m);
    os << "adam_v\n";
    write_row_table(os, st.adam.v);
    os << "end\n";
    if (!os) throw std::runtime_error("save_checkpoint: write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

inline TrainState load_checkpoint(const std::string& path, const TrainConfig& cfg) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("load_checkpoint: cannot open " + path);
  std::string magic;
  int version = 0;
  is >> magic >> version;
  if (magic != "rlvr-lab-checkpoint" || version != 1)
    throw std::runtime_error("load_checkpoint: unrecognized header in " + path);
  TrainState st = init_train_state(cfg);
  std::string tag;
  std::uint64_t seed = 0;
  int vocab_size = 0;
  auto expect = [&is, &path](const char* want) {
    std::string got;
    if (!(is >> got) || got != want)
      throw std::runtime_error("load_checkpoint: expected '" + std::string(want) + "' in " + path);
  };
  expect("seed");
  is >> seed;
  if (seed != cfg.seed)
    throw std::runtime_error("load_checkpoint: checkpoint seed does not match config seed");
  expect("step");
  is >> st.step;
  expect("context_window");
  is >> st.params.context_window;
  expect("vocab_size");
  is >> vocab_size;
  if (vocab_size != st.params.vocab.size())
    throw std::runtime_error("load_checkpoint: vocab size mismatch");
  expect("adam_t");
  is >> st.adam.t;
  expect("last_greedy");
  {
    std::string word;
    is >> word;
    st.last_greedy = std::strtod(word.c_str(), nullptr);
  }
  expect("last_avg_k");
  {
    std::string word;
    is >> word;
    st.last_avg_k = std::strtod(word.c_str(), nullptr);
  }
  expect("params");
  read_row_table(is, st.params.table, st.params.context_window, vocab_size);
  expect("adam_m");
  read_row_table(is, st.adam.m, st.params.context_window, vocab_size);
  expect("adam_v");
  read_row_table(is, st.adam.v, st.params.context_window, vocab_size);
  expect("end");
  (void)tag;
  return st;
}

// --- whole-run driver ---

struct TrainRunResult {
  TrainState state;
  std::vector<StepRecord> records;
};

inline TrainRunResult run_train(const TrainConfig& cfg,
                                const std::function<void(const StepRecord&)>& on_record = {},
                                const std::string& checkpoint_path = "") {
  TrainRunResult out;
  out.state = init_train_state(cfg);
  out.records.reserve(static_cast<std::size_t>(cfg.total_steps));
  for (int i = 0; i < cfg.total_steps; ++i) {
    StepRecord rec = run_step(out.state, cfg);
    if (on_record) on_record(rec);
    out.records.push_back(rec);
    if (!checkpoint_path.empty() && cfg.checkpoint_every > 0 &&
        out.state.step % cfg.checkpoint_every == 0)
      save_checkpoint(checkpoint_path, out.state, cfg);
  }
  if (!checkpoint_path.empty()) save_checkpoint(checkpoint_path, out.state, cfg);
  return out;
}

}  // namespace rlvr
