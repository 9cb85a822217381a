#pragma once

// Random small corpora for oracle comparisons. ASCII only, drawn from a small
// vocabulary so n-grams repeat often.

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "divprobe/corpus.hpp"

namespace divprobe::testing {

inline const char* const kVocab[] = {"alpha", "beta", "gamma", "delta", "the", "a", "Beta", "it's"};
inline const char* const kSeparators[] = {" ", " ", " ", ", ", ". ", "! ", "? ", "  "};

/// 2-8 responses of 1-20 tokens each.
inline std::vector<std::string> random_responses(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> count(2, 8), len(1, 20), word(0, 7), sep(0, 7);
  std::vector<std::string> out(static_cast<std::size_t>(count(rng)));
  for (auto& r : out) {
    const int n = len(rng);
    for (int i = 0; i < n; ++i) {
      if (i) r += kSeparators[sep(rng)];
      r += kVocab[word(rng)];
    }
    if (rng() % 2) r += ".";
  }
  return out;
}

/// `steps` steps, each with 1-6 alternatives whose probabilities leave a
/// random residual (sometimes zero).
inline std::vector<StepLogprobs> random_steps(std::mt19937_64& rng, int steps) {
  std::uniform_int_distribution<int> alts(1, 6);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  std::vector<StepLogprobs> out;
  for (int s = 0; s < steps; ++s) {
    const int k = alts(rng);
    std::vector<double> w(static_cast<std::size_t>(k) + 1);
    double sum = 0.0;
    for (auto& x : w) sum += (x = u(rng));
    if (rng() % 4 == 0) {
      w.back() = 0.0;
      sum = 0.0;
      for (double x : w) sum += x;
    }
    StepLogprobs step;
    step.token = "t0";
    std::vector<double> lps;
    for (int a = 0; a < k; ++a) lps.push_back(std::log(w[static_cast<std::size_t>(a)] / sum));
    std::sort(lps.rbegin(), lps.rend());
    for (int a = 0; a < k; ++a) step.top_alternatives.emplace_back("t" + std::to_string(a), lps[static_cast<std::size_t>(a)]);
    step.logprob = lps[0];
    out.push_back(std::move(step));
  }
  return out;
}

}  // namespace divprobe::testing
