#pragma once

// Surrogate losses and analytic gradients for the six objectives, plus the
// finite-difference oracle that checks them.
//
// Everything runs over an EvalTape captured once per evaluation: behavior
// log-probs, current log-probs, entropies, mixing weights, per-sequence
// ratios, and the truncated ratio weights used by the REINFORCE-style
// objective. Quantities on the tape are stop-gradiented: the analytic
// gradient treats them as constants and the FD oracle holds them frozen while
// perturbing parameters, so the two are checking the same function.
//
// Sign convention: larger loss is better; gradients point in the ascent
// direction.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rlvr/advantage.hpp"
#include "rlvr/core_types.hpp"
#include "rlvr/policy.hpp"
#include "rlvr/ratios.hpp"

namespace rlvr {

struct ClipStats {
  double token_frac = 0.0;
  double seq_frac = 0.0;
  double min_clipped_frac = 0.0;
};

using SparseGrad = std::map<ContextKey, std::vector<double>>;

struct ObjectiveReport {
  double loss = 0.0;
  SparseGrad gradient;
  ClipStats clip_stats;
  double mean_entropy = 0.0;
  long long token_count = 0;
  std::vector<std::string> notes;
};

// One rollout as the evaluator sees it. `frozen_entropies`, when set,
// replaces the entropies computed under the evaluation parameters (used by
// the trainer's snapshot mode and by the audit path, which has no policy).
struct RolloutView {
  const Query* query = nullptr;
  const Rollout* rollout = nullptr;
  double advantage = 0.0;
  const std::vector<double>* frozen_entropies = nullptr;
};

struct ObjectiveSpec {
  ObjectiveKind kind = ObjectiveKind::DHPO_A;
  ClipConfig clip;
  MixingMode mixing;
};

inline ObjectiveSpec make_objective_spec(ObjectiveKind kind, const ClipConfig& clip,
                                         const MixingMode& mixing) {
  ObjectiveSpec s{kind, clip, mixing};
  if (kind == ObjectiveKind::DHPO_A) s.mixing.kind = MixKind::Averaged;
  if (kind == ObjectiveKind::DHPO_E) s.mixing.kind = MixKind::EntropyGuided;
  return s;
}

// Published clip settings per objective; DHPO's 0.2/0.28 is the ClipConfig
// default. GMPO uses one symmetric range, CISPO's huge lower epsilon floors
// the truncation at zero.
inline ClipConfig default_clip_for(ObjectiveKind k) {
  ClipConfig c;
  switch (k) {
    case ObjectiveKind::GRPO:
      c.eps_token_low = 0.2;
      c.eps_token_high = 0.2;
      break;
    case ObjectiveKind::GSPO:
      c.eps_seq_low = 3e-4;
      c.eps_seq_high = 4e-4;
      break;
    case ObjectiveKind::GMPO:
      c.eps_seq_low = 0.4;
      c.eps_seq_high = 0.4;
      break;
    case ObjectiveKind::CISPO:
      c.eps_token_low = 10.0;
      c.eps_token_high = 0.2;
      break;
    case ObjectiveKind::DHPO_A:
    case ObjectiveKind::DHPO_E:
      break;
  }
  return c;
}

// --- stop-gradient tape ---

struct TokenTape {
  ContextKey key;
  int token = 0;
  double old_lp = 0.0;
  double base_lp = 0.0;
  double entropy = 0.0;
  double weight = 1.0;         // w_{i,t}, frozen
  double cispo_weight = 1.0;   // clip(r, max(0,1-eps_low), 1+eps_high), frozen
  bool cispo_truncated = false;
};

struct RolloutTape {
  double advantage = 0.0;
  double seq_ratio_base = 1.0;  // sg[s_i]
  std::vector<TokenTape> tokens;
};

struct EvalTape {
  std::vector<RolloutTape> rollouts;
  double mean_entropy = 0.0;
  long long token_count = 0;
};

inline EvalTape capture_tape(std::span<const RolloutView> views, const PolicyParams& params,
                             const ObjectiveSpec& spec) {
  EvalTape tape;
  tape.rollouts.reserve(views.size());
  std::map<ContextKey, std::vector<double>> lp_cache;
  const double cw_lo = std::max(0.0, 1.0 - spec.clip.eps_token_low);
  const double cw_hi = 1.0 + spec.clip.eps_token_high;
  double entropy_sum = 0.0;

  for (const RolloutView& view : views) {
    const Rollout& ro = *view.rollout;
    if (ro.tokens.size() != ro.old_logprobs.size())
      throw std::invalid_argument("capture_tape: rollout tokens/old_logprobs length mismatch");
    if (ro.tokens.empty()) throw std::invalid_argument("capture_tape: empty rollout");
    RolloutTape rt;
    rt.advantage = view.advantage;
    rt.tokens.reserve(ro.tokens.size());
    std::vector<int> history(view.query->prompt_tokens);
    double logdiff_sum = 0.0;
    for (std::size_t t = 0; t < ro.tokens.size(); ++t) {
      TokenTape tk;
      tk.key = make_context_key(view.query->id, history, params.context_window);
      tk.token = ro.tokens[t];
      tk.old_lp = ro.old_logprobs[t];
      auto it = lp_cache.find(tk.key);
      if (it == lp_cache.end()) it = lp_cache.emplace(tk.key, logprobs(params, tk.key)).first;
      tk.base_lp = it->second[static_cast<std::size_t>(tk.token)];
      if (view.frozen_entropies) {
        tk.entropy = (*view.frozen_entropies)[t];
      } else {
        double h = 0.0;
        for (double lp : it->second) h -= std::exp(lp) * lp;
        tk.entropy = std::max(h, 0.0);
      }
      entropy_sum += tk.entropy;
      const double r = std::exp(tk.base_lp - tk.old_lp);
      tk.cispo_weight = clip_to(r, cw_lo, cw_hi);
      tk.cispo_truncated = (r < cw_lo || r > cw_hi);
      logdiff_sum += tk.base_lp - tk.old_lp;
      history.push_back(tk.token);
      rt.tokens.push_back(std::move(tk));
    }
    rt.seq_ratio_base = std::exp(logdiff_sum / static_cast<double>(rt.tokens.size()));
    tape.token_count += static_cast<long long>(rt.tokens.size());
    tape.rollouts.push_back(std::move(rt));
  }

  // Mixing weights normalize over the whole mini-batch token population.
  if (spec.kind == ObjectiveKind::DHPO_A || spec.kind == ObjectiveKind::DHPO_E) {
    std::vector<double> entropies;
    entropies.reserve(static_cast<std::size_t>(tape.token_count));
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

// --- per-token term ---

struct TermEval {
  double value = 0.0;
  double grad_factor = 0.0;  // multiplies score(key, token); valid at the base point
  bool tok_sat = false;
  bool seq_sat = false;
  bool clipped_selected = false;
  double kink_dist = std::numeric_limits<double>::infinity();
};

// The whole surrogate zoo in one switch. r and s are the token and (token-
// wise, sg-constructed) sequence ratios at the evaluation point; lp_minus_old
// feeds the REINFORCE-style arm. kink_dist reports how close this evaluation
// sits to a clip boundary or min() crossover, for the FD oracle's exclusion
// rule.
inline TermEval token_term(const ObjectiveSpec& spec, const TokenTape& tk, double adv, double r,
                           double s, double lp_minus_old) {
  TermEval out;
  const ClipConfig& c = spec.clip;
  auto near_bounds = [](double x, double lo, double hi) { return std::min(std::abs(x - lo), std::abs(x - hi)); };

  switch (spec.kind) {
    case ObjectiveKind::GRPO: {
      const double lo = 1.0 - c.eps_token_low, hi = 1.0 + c.eps_token_high;
      const double rc = clip_to(r, lo, hi);
      const bool sat = (r < lo || r > hi);
      const double v_un = r * adv, v_cl = rc * adv;
      out.tok_sat = sat;
      out.kink_dist = near_bounds(r, lo, hi);
      if (v_cl < v_un) {
        out.value = v_cl;
        out.clipped_selected = true;
        out.grad_factor = sat ? 0.0 : r * adv;
      } else {
        out.value = v_un;
        out.grad_factor = r * adv;
      }
      if (sat && adv != 0.0)
        out.kink_dist = std::min(out.kink_dist, std::abs(v_un - v_cl));
      break;
    }
    case ObjectiveKind::GSPO:
    case ObjectiveKind::GMPO: {
      const double lo = 1.0 - c.eps_seq_low, hi = 1.0 + c.eps_seq_high;
      const double sc = clip_to(s, lo, hi);
      const bool sat = (s < lo || s > hi);
      const double v_un = s * adv, v_cl = sc * adv;
      out.seq_sat = sat;
      out.kink_dist = near_bounds(s, lo, hi);
      if (v_cl < v_un) {
        out.value = v_cl;
        out.clipped_selected = true;
        out.grad_factor = sat ? 0.0 : s * adv;
      } else {
        out.value = v_un;
        out.grad_factor = s * adv;
      }
      if (sat && adv != 0.0)
        out.kink_dist = std::min(out.kink_dist, std::abs(v_un - v_cl));
      break;
    }
    case ObjectiveKind::DHPO_A:
    case ObjectiveKind::DHPO_E: {
      const double w = tk.weight;
      const double m = mixed_ratio(w, r, s);
      const double v_un = m * adv;
      double v_cl;
      double interior_factor;  // gradient of the clipped branch when selected
      if (c.mode == ClipMode::Unified) {
        const double lo = 1.0 - c.eps_unified_low, hi = 1.0 + c.eps_unified_high;
        const bool sat = (m < lo || m > hi);
        v_cl = clip_to(m, lo, hi) * adv;
        out.tok_sat = out.seq_sat = sat;
        interior_factor = sat ? 0.0 : m * adv;
        out.kink_dist = near_bounds(m, lo, hi);
        if (sat && adv != 0.0) out.kink_dist = std::min(out.kink_dist, std::abs(v_un - v_cl));
      } else {
        const double tlo = 1.0 - c.eps_token_low, thi = 1.0 + c.eps_token_high;
        const double slo = 1.0 - c.eps_seq_low, shi = 1.0 + c.eps_seq_high;
        const double rc = clip_to(r, tlo, thi);
        const double sc = clip_to(s, slo, shi);
        const bool sat_r = (r < tlo || r > thi);
        const bool sat_s = (s < slo || s > shi);
        v_cl = (w * rc + (1.0 - w) * sc) * adv;
        out.tok_sat = sat_r;
        out.seq_sat = sat_s;
        interior_factor = (sat_r ? 0.0 : w * r * adv) + (sat_s ? 0.0 : (1.0 - w) * s * adv);
        // A branch with zero weight cannot move the value, so neither its
        // bounds nor its saturation contribute kinks (w hits 0 and 1 exactly
        // under entropy-guided mixing).
        if (w > 0.0) out.kink_dist = std::min(out.kink_dist, near_bounds(r, tlo, thi));
        if (w < 1.0) out.kink_dist = std::min(out.kink_dist, near_bounds(s, slo, shi));
        if (((sat_r && w > 0.0) || (sat_s && w < 1.0)) && adv != 0.0)
          out.kink_dist = std::min(out.kink_dist, std::abs(v_un - v_cl));
      }
      if (v_cl < v_un) {
        out.value = v_cl;
        out.clipped_selected = true;
        out.grad_factor = interior_factor;
      } else {
        out.value = v_un;
        out.grad_factor = m * adv;  // the sg identity: grad of m is m * score
      }
      break;
    }
    case ObjectiveKind::CISPO: {
      out.value = tk.cispo_weight * adv * lp_minus_old;
      out.grad_factor = tk.cispo_weight * adv;
      out.tok_sat = tk.cispo_truncated;
      break;  // weight is frozen: no kinks anywhere
    }
  }
  return out;
}

// --- evaluation ---

using TokenHook = std::function<void(std::size_t rollout, std::size_t t, const TermEval&)>;

// Base-point evaluation over a captured tape. Pass `params_for_grad` to also
// accumulate the analytic gradient (the audit path passes nullptr: it has
// ratios but no policy). Deterministic: rollouts and tokens are walked in
// order, gradient rows live in an ordered map.
inline ObjectiveReport evaluate_tape(const ObjectiveSpec& spec, const EvalTape& tape,
                                     const PolicyParams* params_for_grad,
                                     const TokenHook* hook = nullptr) {
  if (tape.rollouts.empty()) throw std::invalid_argument("evaluate_tape: empty batch");
  ObjectiveReport rep;
  rep.mean_entropy = tape.mean_entropy;
  rep.token_count = tape.token_count;
  const double inv_n = 1.0 / static_cast<double>(tape.rollouts.size());
  long long tok_sat = 0, seq_sat = 0, min_clipped = 0;
  std::map<ContextKey, std::vector<double>> prob_cache;

  for (std::size_t i = 0; i < tape.rollouts.size(); ++i) {
    const RolloutTape& rt = tape.rollouts[i];
    const double inv_len = 1.0 / static_cast<double>(rt.tokens.size());
    for (std::size_t t = 0; t < rt.tokens.size(); ++t) {
      const TokenTape& tk = rt.tokens[t];
      const double r = std::exp(tk.base_lp - tk.old_lp);
      const TermEval te =
          token_term(spec, tk, rt.advantage, r, rt.seq_ratio_base, tk.base_lp - tk.old_lp);
      rep.loss += inv_n * inv_len * te.value;
      tok_sat += te.tok_sat;
      seq_sat += te.seq_sat;
      min_clipped += te.clipped_selected;
      if (hook) (*hook)(i, t, te);
      if (params_for_grad && te.grad_factor != 0.0) {
        auto it = prob_cache.find(tk.key);
        if (it == prob_cache.end())
          it = prob_cache.emplace(tk.key, softmax(logits_row(*params_for_grad, tk.key))).first;
        const auto& probs = it->second;
        auto git = rep.gradient.find(tk.key);
        if (git == rep.gradient.end())
          git = rep.gradient.emplace(tk.key, std::vector<double>(probs.size(), 0.0)).first;
        auto& row = git->second;
        const double scale = inv_n * inv_len * te.grad_factor;
        for (std::size_t v = 0; v < probs.size(); ++v) row[v] -= scale * probs[v];
        row[static_cast<std::size_t>(tk.token)] += scale;
      }
    }
  }

  if (tape.token_count > 0) {
    // plain division so the fractions equal any count/total recomputation bitwise
    const double total = static_cast<double>(tape.token_count);
    rep.clip_stats.token_frac = static_cast<double>(tok_sat) / total;
    rep.clip_stats.seq_frac = static_cast<double>(seq_sat) / total;
    rep.clip_stats.min_clipped_frac = static_cast<double>(min_clipped) / total;
  }
  if (spec.kind == ObjectiveKind::GMPO)
    rep.notes.push_back("interpreted baseline: geometric-mean ratio clipped per sequence");
  if (spec.kind == ObjectiveKind::CISPO)
    rep.notes.push_back("interpreted baseline: frozen truncated-ratio REINFORCE weight");
  return rep;
}

inline ObjectiveReport evaluate_objective(const ObjectiveSpec& spec,
                                          std::span<const RolloutView> views,
                                          const PolicyParams& params,
                                          const TokenHook* hook = nullptr) {
  const EvalTape tape = capture_tape(views, params, spec);
  return evaluate_tape(spec, tape, &params, hook);
}

// --- value-only probes (the FD oracle's view of the loss) ---

struct ValueProbe {
  double loss = 0.0;
  double min_kink_dist = std::numeric_limits<double>::infinity();
  std::vector<std::uint8_t> signatures;  // per token: clip/selection branch bits
};

template <class LpAt>
ValueProbe probe_value(const ObjectiveSpec& spec, const EvalTape& tape, LpAt&& lp_at) {
  ValueProbe probe;
  probe.signatures.reserve(static_cast<std::size_t>(tape.token_count));
  const double inv_n = 1.0 / static_cast<double>(tape.rollouts.size());
  for (std::size_t i = 0; i < tape.rollouts.size(); ++i) {
    const RolloutTape& rt = tape.rollouts[i];
    const double inv_len = 1.0 / static_cast<double>(rt.tokens.size());
    for (std::size_t t = 0; t < rt.tokens.size(); ++t) {
      const TokenTape& tk = rt.tokens[t];
      const double lp = lp_at(i, t);
      const double r = std::exp(lp - tk.old_lp);
      const double s = rt.seq_ratio_base * std::exp(lp - tk.base_lp);
      const TermEval te = token_term(spec, tk, rt.advantage, r, s, lp - tk.old_lp);
      probe.loss += inv_n * inv_len * te.value;
      probe.min_kink_dist = std::min(probe.min_kink_dist, te.kink_dist);
      probe.signatures.push_back(static_cast<std::uint8_t>(
          (te.clipped_selected ? 1 : 0) | (te.tok_sat ? 2 : 0) | (te.seq_sat ? 4 : 0)));
    }
  }
  return probe;
}

// --- finite-difference oracle ---

struct FdOracleResult {
  SparseGrad gradient;
  std::map<ContextKey, std::vector<std::uint8_t>> skipped;  // 1 = kink-excluded coordinate
  long long checked = 0;
  long long skipped_count = 0;
};

// Central differences per touched logit coordinate, with the tape frozen at
// the base point. Coordinates whose perturbed evaluations land within
// kink_tol of a clip boundary or min() crossover, or that straddle a branch
// change between the +h and -h evaluations, are excluded and reported.
inline FdOracleResult fd_gradient_oracle(const ObjectiveSpec& spec,
                                         std::span<const RolloutView> views,
                                         const PolicyParams& params, double h = 1e-6,
                                         double kink_tol = 1e-9) {
  if (!(h > 0.0)) throw std::invalid_argument("fd_gradient_oracle: h must be > 0");
  const EvalTape tape = capture_tape(views, params, spec);
  FdOracleResult out;

  std::map<ContextKey, std::vector<double>> touched;  // base logits per touched row
  for (const auto& rt : tape.rollouts)
    for (const auto& tk : rt.tokens)
      if (!touched.count(tk.key)) touched.emplace(tk.key, logits_row(params, tk.key));

  const std::size_t v_size = static_cast<std::size_t>(params.vocab.size());
  for (auto& [key, logits] : touched) {
    std::vector<double> fd_row(v_size, 0.0);
    std::vector<std::uint8_t> skip_row(v_size, 0);
    for (std::size_t v = 0; v < v_size; ++v) {
      const double orig = logits[v];
      logits[v] = orig + h;
      const auto lps_plus = log_softmax(logits);
      logits[v] = orig - h;
      const auto lps_minus = log_softmax(logits);
      logits[v] = orig;

      auto lp_at = [&](const std::vector<double>& pert_lps) {
        return [&tape, &key = key, &pert_lps](std::size_t i, std::size_t t) {
          const TokenTape& tk = tape.rollouts[i].tokens[t];
          return tk.key == key ? pert_lps[static_cast<std::size_t>(tk.token)] : tk.base_lp;
        };
      };
      const ValueProbe plus = probe_value(spec, tape, lp_at(lps_plus));
      const ValueProbe minus = probe_value(spec, tape, lp_at(lps_minus));

      const bool kink = plus.min_kink_dist < kink_tol || minus.min_kink_dist < kink_tol ||
                        plus.signatures != minus.signatures;
      if (kink) {
        skip_row[v] = 1;
        ++out.skipped_count;
      } else {
        fd_row[v] = (plus.loss - minus.loss) / (2.0 * h);
        ++out.checked;
      }
    }
    out.gradient.emplace(key, std::move(fd_row));
    out.skipped.emplace(key, std::move(skip_row));
  }
  return out;
}

struct GradCompare {
  double max_abs_dev = 0.0;
  long long compared = 0;
  long long skipped = 0;
};

inline double grad_coord(const SparseGrad& g, const ContextKey& key, std::size_t v) {
  const auto it = g.find(key);
  return it == g.end() ? 0.0 : it->second[v];
}

inline GradCompare compare_gradients(const SparseGrad& analytic, const FdOracleResult& fd) {
  GradCompare cmp;
  cmp.skipped = fd.skipped_count;
  for (const auto& [key, row] : fd.gradient) {
    const auto& skip_row = fd.skipped.at(key);
    for (std::size_t v = 0; v < row.size(); ++v) {
      if (skip_row[v]) continue;
      const double dev = std::abs(row[v] - grad_coord(analytic, key, v));
      cmp.max_abs_dev = std::max(cmp.max_abs_dev, dev);
      ++cmp.compared;
    }
  }
  return cmp;
}

// --- batch-level entry points ---

inline void fill_advantages(Batch& batch, double std_floor = 1e-8) {
  for (auto& g : batch.groups) {
    std::vector<double> rewards;
    rewards.reserve(g.rollouts.size());
    for (const auto& r : g.rollouts) rewards.push_back(r.reward);
    g.advantages = group_advantages(rewards, std_floor);
  }
}

inline std::vector<RolloutView> batch_views(const Batch& batch) {
  std::vector<RolloutView> views;
  for (const auto& g : batch.groups) {
    if (g.advantages.size() != g.rollouts.size())
      throw std::invalid_argument("batch_views: advantages not filled for a group");
    for (std::size_t i = 0; i < g.rollouts.size(); ++i)
      views.push_back(RolloutView{&g.query, &g.rollouts[i], g.advantages[i], nullptr});
  }
  return views;
}

// The stored behavior log-probs must actually come from params_old; a silent
// mismatch would make every ratio meaningless.
inline void check_old_logprobs(std::span<const RolloutView> views, const PolicyParams& params_old,
                               double tol = 1e-9) {
  for (const auto& view : views) {
    std::vector<int> history(view.query->prompt_tokens);
    for (std::size_t t = 0; t < view.rollout->tokens.size(); ++t) {
      const auto key = make_context_key(view.query->id, history, params_old.context_window);
      const auto lps = logprobs(params_old, key);
      const int tok = view.rollout->tokens[t];
      if (std::abs(lps[static_cast<std::size_t>(tok)] - view.rollout->old_logprobs[t]) > tol)
        throw std::invalid_argument("old_logprobs do not match params_old");
      history.push_back(tok);
    }
  }
}

inline ObjectiveReport run_batch_objective(const ObjectiveSpec& spec, const Batch& batch,
                                           const PolicyParams& params,
                                           const PolicyParams& params_old) {
  if (batch.groups.empty()) throw std::invalid_argument("objective: empty batch");
  const auto views = batch_views(batch);
  check_old_logprobs(views, params_old);
  return evaluate_objective(spec, views, params);
}

inline ObjectiveReport grpo_loss(const Batch& batch, const PolicyParams& params,
                                 const PolicyParams& params_old, double eps_low = 0.2,
                                 double eps_high = 0.2) {
  ClipConfig c;
  c.eps_token_low = eps_low;
  c.eps_token_high = eps_high;
  return run_batch_objective(make_objective_spec(ObjectiveKind::GRPO, c, MixingMode{}), batch,
                             params, params_old);
}

inline ObjectiveReport gspo_loss(const Batch& batch, const PolicyParams& params,
                                 const PolicyParams& params_old, double eps_low = 3e-4,
                                 double eps_high = 4e-4) {
  ClipConfig c;
  c.eps_seq_low = eps_low;
  c.eps_seq_high = eps_high;
  return run_batch_objective(make_objective_spec(ObjectiveKind::GSPO, c, MixingMode{}), batch,
                             params, params_old);
}

inline ObjectiveReport dhpo_loss(const Batch& batch, const PolicyParams& params,
                                 const PolicyParams& params_old, const MixingMode& mixing,
                                 const ClipConfig& cfg) {
  const auto kind =
      mixing.kind == MixKind::EntropyGuided ? ObjectiveKind::DHPO_E : ObjectiveKind::DHPO_A;
  return run_batch_objective(make_objective_spec(kind, cfg, mixing), batch, params, params_old);
}

inline ObjectiveReport gmpo_loss(const Batch& batch, const PolicyParams& params,
                                 const PolicyParams& params_old, double eps = 0.4) {
  ClipConfig c;
  c.eps_seq_low = eps;
  c.eps_seq_high = eps;
  return run_batch_objective(make_objective_spec(ObjectiveKind::GMPO, c, MixingMode{}), batch,
                             params, params_old);
}

inline ObjectiveReport cispo_loss(const Batch& batch, const PolicyParams& params,
                                  const PolicyParams& params_old, double eps_low = 10.0,
                                  double eps_high = 0.2) {
  ClipConfig c;
  c.eps_token_low = eps_low;
  c.eps_token_high = eps_high;
  return run_batch_objective(make_objective_spec(ObjectiveKind::CISPO, c, MixingMode{}), batch,
                             params, params_old);
}

}  // namespace rlvr
