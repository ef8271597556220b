#pragma once

// Importance-ratio machinery: token ratios, length-normalized sequence
// ratios, entropy-guided mixing weights, the mixed ratio, and both clipping
// schemes. Everything stays in log space until the final exp.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "rlvr/core_types.hpp"

namespace rlvr {

inline double token_ratio(double new_logprob, double old_logprob) {
  return std::exp(new_logprob - old_logprob);
}

// exp of the mean log-diff: the geometric mean of the token ratios.
inline double seq_ratio(std::span<const double> new_logprobs, std::span<const double> old_logprobs) {
  if (new_logprobs.empty() || new_logprobs.size() != old_logprobs.size())
    throw std::invalid_argument("seq_ratio: lengths must match and be non-zero");
  double acc = 0.0;
  for (std::size_t t = 0; t < new_logprobs.size(); ++t) acc += new_logprobs[t] - old_logprobs[t];
  return std::exp(acc / static_cast<double>(new_logprobs.size()));
}

// Weights are a function of stop-gradiented entropies: min-max normalized
// over the whole mini-batch token population, squashed into [w_min, w_max].
// A flat entropy population (and the Averaged mode) maps to the midpoint.
inline std::vector<double> mixing_weights(const MixingMode& mode, std::span<const double> entropies) {
  std::vector<double> out(entropies.size());
  const double mid = 0.5 * (mode.w_min + mode.w_max);
  if (mode.kind == MixKind::Averaged) {
    std::fill(out.begin(), out.end(), mid);
    return out;
  }
  if (entropies.empty()) return out;
  double lo = entropies[0], hi = entropies[0];
  for (double h : entropies) {
    lo = std::min(lo, h);
    hi = std::max(hi, h);
  }
  if (hi - lo < 1e-12) {
    std::fill(out.begin(), out.end(), mid);
    return out;
  }
  // fraction form: (hi-lo)/(hi-lo) divides to exactly 1, so the population
  // extremes land exactly on w_min and w_max
  const double span = hi - lo;
  const double width = mode.w_max - mode.w_min;
  for (std::size_t i = 0; i < entropies.size(); ++i) {
    const double frac = (entropies[i] - lo) / span;
    const double w = mode.w_min + width * frac;
    out[i] = std::min(std::max(w, mode.w_min), mode.w_max);
  }
  return out;
}

inline double mixed_ratio(double w, double r, double s) { return w * r + (1.0 - w) * s; }

inline double clip_to(double x, double lo, double hi) { return std::min(std::max(x, lo), hi); }

struct ClippedMixed {
  double value = 0.0;
  bool token_clipped = false;
  bool seq_clipped = false;
};

inline ClippedMixed clip_mixed(double w, double r, double s, const ClipConfig& cfg) {
  ClippedMixed out;
  if (cfg.mode == ClipMode::Unified) {
    const double m = mixed_ratio(w, r, s);
    const double lo = 1.0 - cfg.eps_unified_low;
    const double hi = 1.0 + cfg.eps_unified_high;
    out.value = clip_to(m, lo, hi);
    out.token_clipped = out.seq_clipped = (m < lo || m > hi);
    return out;
  }
  const double tok_lo = 1.0 - cfg.eps_token_low;
  const double tok_hi = 1.0 + cfg.eps_token_high;
  const double seq_lo = 1.0 - cfg.eps_seq_low;
  const double seq_hi = 1.0 + cfg.eps_seq_high;
  const double rc = clip_to(r, tok_lo, tok_hi);
  const double sc = clip_to(s, seq_lo, seq_hi);
  out.value = w * rc + (1.0 - w) * sc;
  out.token_clipped = (r < tok_lo || r > tok_hi);
  out.seq_clipped = (s < seq_lo || s > seq_hi);
  return out;
}

// Full per-rollout decomposition, mainly for the audit command and tests.
struct RatioBundle {
  std::vector<double> token_ratios;
  double seq_ratio_value = 1.0;
  std::vector<double> seq_ratio_tokenwise;  // numerically all equal to seq_ratio_value
  std::vector<double> weights;
  std::vector<double> mixed;
  std::vector<double> mixed_clipped;
  std::vector<std::uint8_t> token_clip_flags;
  std::vector<std::uint8_t> seq_clip_flags;
};

inline RatioBundle build_ratio_bundle(std::span<const double> new_logprobs,
                                      std::span<const double> old_logprobs,
                                      std::span<const double> weights, const ClipConfig& cfg) {
  if (weights.size() != new_logprobs.size())
    throw std::invalid_argument("build_ratio_bundle: weights length mismatch");
  RatioBundle b;
  const std::size_t n = new_logprobs.size();
  b.seq_ratio_value = seq_ratio(new_logprobs, old_logprobs);
  b.token_ratios.reserve(n);
  b.seq_ratio_tokenwise.assign(n, b.seq_ratio_value);
  b.weights.assign(weights.begin(), weights.end());
  for (std::size_t t = 0; t < n; ++t) {
    const double r = token_ratio(new_logprobs[t], old_logprobs[t]);
    b.token_ratios.push_back(r);
    b.mixed.push_back(mixed_ratio(weights[t], r, b.seq_ratio_value));
    const auto c = clip_mixed(weights[t], r, b.seq_ratio_value, cfg);
    b.mixed_clipped.push_back(c.value);
    b.token_clip_flags.push_back(c.token_clipped ? 1 : 0);
    b.seq_clip_flags.push_back(c.seq_clipped ? 1 : 0);
  }
  return b;
}

}  // namespace rlvr
