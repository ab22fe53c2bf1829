#pragma once

// Independent reference implementations, written as literally as possible
// from the defining formulas. They share no code with the library paths
// they check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <span>
#include <vector>

#include "taper/code/code_embedder.hpp"
#include "taper/numerics/random.hpp"
#include "taper/numerics/tensor.hpp"

namespace taper::testing {

/// Visit-window skip-gram loss by direct summation over (t, j) pairs and
/// codes, averaged per sequence and then over contributing sequences.
inline double skipgram_oracle(const Tensor& probs, const Tensor& codes, std::span<const std::size_t> lengths,
                              std::size_t window, double eps = 1e-7) {
  double total = 0.0;
  std::size_t sequences = 0;
  std::size_t offset = 0;
  const long w = static_cast<long>(window);
  for (std::size_t len : lengths) {
    const long T = static_cast<long>(len);
    double seq = 0.0;
    std::size_t pairs = 0;
    for (long t = 0; t < T; ++t) {
      for (long j = -w; j <= w; ++j) {
        if (j == 0 || t + j < 0 || t + j >= T) continue;
        ++pairs;
        for (std::size_t c = 0; c < codes.cols(); ++c) {
          const double p = std::min(std::max(probs(offset + t, c), eps), 1.0 - eps);
          const double y = codes(offset + t + j, c);
          seq += -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
        }
      }
    }
    if (pairs > 0) {
      total += seq / static_cast<double>(pairs);
      ++sequences;
    }
    offset += len;
  }
  return total / static_cast<double>(sequences);
}

/// Sum over rows of (u - u_hat)^T (u - u_hat).
inline double reconstruction_oracle(const Tensor& u, const Tensor& u_hat) {
  double total = 0.0;
  for (std::size_t i = 0; i < u.rows(); ++i) {
    double row = 0.0;
    for (std::size_t k = 0; k < u.cols(); ++k) row += (u(i, k) - u_hat(i, k)) * (u(i, k) - u_hat(i, k));
    total += row;
  }
  return total;
}

/// Fraction of (positive, negative) pairs ranked correctly, ties counting 1/2.
inline double pairwise_auc_oracle(std::span<const double> scores, std::span<const int> labels) {
  double concordant = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j]) concordant += 1.0;
      else if (scores[i] == scores[j]) concordant += 0.5;
    }
  }
  return concordant / static_cast<double>(pairs);
}

/// Mean over positives of the precision among items scoring at least as high.
inline double average_precision_oracle(std::span<const double> scores, std::span<const int> labels) {
  double total = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    ++positives;
    std::size_t above = 0, hits = 0;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (scores[j] < scores[i]) continue;
      ++above;
      hits += labels[j] == 1;
    }
    total += static_cast<double>(hits) / static_cast<double>(above);
  }
  return total / static_cast<double>(positives);
}

inline double recall_oracle(std::span<const std::size_t> ranked, const std::set<std::size_t>& truth, std::size_t k) {
  std::set<std::size_t> top(ranked.begin(), ranked.begin() + static_cast<long>(std::min(k, ranked.size())));
  std::size_t hit = 0;
  for (std::size_t c : truth) hit += top.count(c);
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

inline code::CodeEmbedderConfig tiny_code_config(std::uint64_t seed = 1) {
  code::CodeEmbedderConfig c;
  c.d_code = 4;
  c.n_layers = 2;
  c.n_head = 2;
  c.d_head = 3;
  c.d_ff = 8;
  c.window = 2;
  c.seed = seed;
  return c;
}

inline Tensor random_multi_hot(std::size_t rows, std::size_t cols, Rng& rng, double density = 0.3) {
  Tensor t = Tensor::zeros(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) t(r, c) = rng.bernoulli(density) ? 1.0 : 0.0;
    t(r, rng.index(cols)) = 1.0;
  }
  return t;
}

/// One causality trial: perturbs every visit after a random position t and
/// checks that representations and probabilities up to t are bitwise equal.
inline bool causality_trial(const code::CodeEmbedderModel& model, Rng& rng, std::size_t max_len = 6) {
  const std::size_t T = 2 + rng.index(max_len - 1);
  const std::size_t t = rng.index(T - 1);
  const Tensor seq = random_multi_hot(T, model.vocab_size(), rng);
  Tensor changed = seq;
  for (std::size_t r = t + 1; r < T; ++r)
    for (std::size_t c = 0; c < changed.cols(); ++c) changed(r, c) = rng.bernoulli(0.5) ? 1.0 : 0.0;
  const Tensor e0 = model.represent(seq), e1 = model.represent(changed);
  const Tensor p0 = model.predict(seq), p1 = model.predict(changed);
  for (std::size_t r = 0; r <= t; ++r) {
    for (std::size_t c = 0; c < e0.cols(); ++c)
      if (std::bit_cast<std::uint64_t>(e0(r, c)) != std::bit_cast<std::uint64_t>(e1(r, c))) return false;
    for (std::size_t c = 0; c < p0.cols(); ++c)
      if (std::bit_cast<std::uint64_t>(p0(r, c)) != std::bit_cast<std::uint64_t>(p1(r, c))) return false;
  }
  return true;
}

}  // namespace taper::testing
