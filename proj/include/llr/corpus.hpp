#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace llr {

enum class CorpusKind { MarkovChars, ModularCopy };

struct DataConfig {
  CorpusKind kind = CorpusKind::MarkovChars;
  std::uint64_t seed = 1234;
  std::size_t length = 1 << 18;
  std::size_t vocab = 64;
  // MarkovChars: how sharply each row prefers a few successors.
  double sharpness = 8.0;
  // MarkovChars: weight of the token two back relative to the previous one.
  double skip_weight = 0.35;
  // MarkovChars: probability mass spread uniformly over the vocabulary.
  double smoothing = 0.05;
  // ModularCopy: tokens per block that is copied after the header.
  std::size_t copy_block = 8;
};

using Token = std::uint32_t;

/// Order-2 Markov chain over `vocab` symbols:
///   P(n | a, b) = (1-ε)((1-w) A[b][n] + w B[a][n]) + ε/vocab
/// with a the token two back, b the previous token, and A, B random peaked
/// row-stochastic tables drawn from `seed`.
class MarkovChain {
public:
  MarkovChain(std::size_t vocab, std::uint64_t seed, double sharpness,
              double skip_weight, double smoothing);

  std::size_t vocab() const { return vocab_; }

  /// P(next | prev2, prev1).
  double prob(Token prev2, Token prev1, Token next) const {
    return probs_[(prev2 * vocab_ + prev1) * vocab_ + next];
  }

  std::vector<Token> sample(std::size_t length, std::uint64_t seed) const;

private:
  std::size_t vocab_;
  std::vector<double> probs_;
};

/// Deterministic synthetic token stream.
std::vector<Token> gen_corpus(const DataConfig &cfg);

/// Rebuilds a ModularCopy segment from its header: [offset, b_1 .. b_m].
std::vector<Token> modular_copy_segment(Token offset,
                                        const std::vector<Token> &block,
                                        std::size_t vocab);

} // namespace llr
