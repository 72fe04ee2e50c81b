#include "llr/corpus.hpp"

#include <cmath>
#include <random>

#include "llr/error.hpp"

namespace llr {

MarkovChain::MarkovChain(std::size_t vocab, std::uint64_t seed,
                         double sharpness, double skip_weight, double smoothing)
    : vocab_(vocab), probs_(vocab * vocab * vocab) {
  if (vocab < 2) {
    throw Error(ErrorCode::InvalidConfig, "Markov corpus needs vocab >= 2");
  }
  if (!(skip_weight >= 0.0 && skip_weight <= 1.0) ||
      !(smoothing >= 0.0 && smoothing <= 1.0) || !(sharpness > 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "bad Markov corpus parameters");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto table = [&] {
    std::vector<double> t(vocab * vocab);
    for (std::size_t r = 0; r < vocab; ++r) {
      double total = 0.0;
      for (std::size_t j = 0; j < vocab; ++j) {
        t[r * vocab + j] = std::pow(unit(rng), sharpness);
        total += t[r * vocab + j];
      }
      for (std::size_t j = 0; j < vocab; ++j) {
        t[r * vocab + j] /= total;
      }
    }
    return t;
  };
  const auto prev = table();
  const auto skip = table();
  const double u = smoothing / static_cast<double>(vocab);
  for (std::size_t a = 0; a < vocab; ++a) {
    for (std::size_t b = 0; b < vocab; ++b) {
      double *row = &probs_[(a * vocab + b) * vocab];
      for (std::size_t n = 0; n < vocab; ++n) {
        row[n] = (1.0 - smoothing) * ((1.0 - skip_weight) * prev[b * vocab + n] +
                                      skip_weight * skip[a * vocab + n]) +
                 u;
      }
    }
  }
}

std::vector<Token> MarkovChain::sample(std::size_t length,
                                       std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Token> out;
  out.reserve(length);
  Token a = 0;
  Token b = 0;
  for (std::size_t i = 0; i < length; ++i) {
    const double *row = &probs_[(a * vocab_ + b) * vocab_];
    double u = unit(rng);
    Token next = static_cast<Token>(vocab_ - 1);
    for (std::size_t j = 0; j < vocab_; ++j) {
      u -= row[j];
      if (u < 0.0) {
        next = static_cast<Token>(j);
        break;
      }
    }
    out.push_back(next);
    a = b;
    b = next;
  }
  return out;
}

std::vector<Token> modular_copy_segment(Token offset,
                                        const std::vector<Token> &block,
                                        std::size_t vocab) {
  std::vector<Token> seg;
  seg.reserve(1 + 2 * block.size());
  seg.push_back(offset);
  seg.insert(seg.end(), block.begin(), block.end());
  for (Token b : block) {
    seg.push_back(static_cast<Token>((b + offset) % vocab));
  }
  return seg;
}

std::vector<Token> gen_corpus(const DataConfig &cfg) {
  switch (cfg.kind) {
  case CorpusKind::MarkovChars: {
    // The chain's transition table and the sampling path use distinct streams.
    MarkovChain chain(cfg.vocab, cfg.seed, cfg.sharpness, cfg.skip_weight,
                      cfg.smoothing);
    return chain.sample(cfg.length, cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  }
  case CorpusKind::ModularCopy: {
    if (cfg.copy_block == 0 || cfg.vocab < 2) {
      throw Error(ErrorCode::InvalidConfig, "bad ModularCopy configuration");
    }
    std::mt19937_64 rng(cfg.seed);
    std::uniform_int_distribution<Token> sym(0, static_cast<Token>(cfg.vocab - 1));
    std::vector<Token> out;
    out.reserve(cfg.length + 2 * cfg.copy_block + 1);
    std::vector<Token> block(cfg.copy_block);
    while (out.size() < cfg.length) {
      const Token offset = sym(rng);
      for (auto &b : block) {
        b = sym(rng);
      }
      const auto seg = modular_copy_segment(offset, block, cfg.vocab);
      out.insert(out.end(), seg.begin(), seg.end());
    }
    out.resize(cfg.length);
    return out;
  }
  }
  return {};
}

} // namespace llr
