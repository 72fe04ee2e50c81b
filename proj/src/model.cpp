#include "llr/model.hpp"

#include <cmath>
#include <limits>
#include <random>

#include "llr/error.hpp"

namespace llr {

namespace {

constexpr double kRmsEps = 1e-6;
constexpr double kRopeBase = 10000.0;

template <typename S> using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

// y = x̂ ⊙ g with x̂ = x / rms(x); returns 1/rms per row in inv_rms.
template <typename S>
Mat<S> rms_norm(const Mat<S> &x, const Mat<S> &gain, Vec<S> &inv_rms) {
  const auto n = x.rows();
  const auto d = x.cols();
  inv_rms.resize(n);
  Mat<S> y(n, d);
  for (Eigen::Index r = 0; r < n; ++r) {
    const S ms = x.row(r).squaredNorm() / static_cast<S>(d);
    const S inv = S(1) / std::sqrt(ms + static_cast<S>(kRmsEps));
    inv_rms[r] = inv;
    y.row(r) = (x.row(r) * inv).cwiseProduct(gain.row(0));
  }
  return y;
}

template <typename S>
Mat<S> rms_norm_backward(const Mat<S> &dy, const Mat<S> &x,
                         const Vec<S> &inv_rms, const Mat<S> &gain,
                         Mat<S> &dgain) {
  const auto n = x.rows();
  const auto d = x.cols();
  Mat<S> dx(n, d);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto xhat = (x.row(r) * inv_rms[r]).eval();
    dgain.row(0) += dy.row(r).cwiseProduct(xhat);
    const auto dxhat = dy.row(r).cwiseProduct(gain.row(0)).eval();
    const S mean = dxhat.dot(xhat) / static_cast<S>(d);
    dx.row(r) = (dxhat - xhat * mean) * inv_rms[r];
  }
  return dx;
}

// Rotates each (2i, 2i+1) pair of every head by the position angle;
// `inverse` applies the transpose rotation (the backward map).
template <typename S>
void apply_rope(Mat<S> &x, std::size_t seq_len, std::size_t n_heads,
                std::size_t head_dim, const Mat<S> &cos_t, const Mat<S> &sin_t,
                bool inverse) {
  const std::size_t half = head_dim / 2;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const auto pos = static_cast<Eigen::Index>(static_cast<std::size_t>(r) % seq_len);
    S *row = x.row(r).data();
    for (std::size_t h = 0; h < n_heads; ++h) {
      S *v = row + h * head_dim;
      for (std::size_t i = 0; i < half; ++i) {
        const S c = cos_t(pos, static_cast<Eigen::Index>(i));
        const S s = inverse ? -sin_t(pos, static_cast<Eigen::Index>(i))
                            : sin_t(pos, static_cast<Eigen::Index>(i));
        const S a = v[2 * i];
        const S b = v[2 * i + 1];
        v[2 * i] = a * c - b * s;
        v[2 * i + 1] = a * s + b * c;
      }
    }
  }
}

template <typename S> S silu(S g) { return g / (S(1) + std::exp(-g)); }

} // namespace

void ModelConfig::validate() const {
  if (vocab < 2 || d_model == 0 || n_layers == 0 || n_heads == 0 ||
      context == 0) {
    throw Error(ErrorCode::InvalidConfig, "model dimensions must be positive");
  }
  if (d_model % n_heads != 0) {
    throw Error(ErrorCode::InvalidConfig, "d_model must be divisible by n_heads");
  }
  if (head_dim() % 2 != 0) {
    throw Error(ErrorCode::InvalidConfig, "rotary embedding needs an even head dim");
  }
  if (!(ffn_mult > 0.0) || ffn_hidden() == 0) {
    throw Error(ErrorCode::InvalidConfig, "ffn_mult must be positive");
  }
  if (!(init_std > 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "init_std must be positive");
  }
}

std::size_t ModelConfig::ffn_hidden() const {
  return static_cast<std::size_t>(std::llround(ffn_mult * static_cast<double>(d_model)));
}

Batch make_batch(const std::vector<std::vector<Token>> &sequences) {
  if (sequences.empty() || sequences.front().size() < 2) {
    throw Error(ErrorCode::EmptyInput, "batch needs sequences of length >= 2");
  }
  Batch b;
  b.batch = sequences.size();
  b.seq_len = sequences.front().size() - 1;
  for (const auto &seq : sequences) {
    if (seq.size() != b.seq_len + 1) {
      throw Error(ErrorCode::ShapeMismatch, "sequences differ in length");
    }
    b.inputs.insert(b.inputs.end(), seq.begin(), seq.end() - 1);
    b.targets.insert(b.targets.end(), seq.begin() + 1, seq.end());
  }
  return b;
}

template <typename S>
Transformer<S>::Transformer(const ModelConfig &cfg) : cfg_(cfg) {
  cfg_.validate();
  const auto V = static_cast<Eigen::Index>(cfg_.vocab);
  const auto D = static_cast<Eigen::Index>(cfg_.d_model);
  const auto F = static_cast<Eigen::Index>(cfg_.ffn_hidden());

  std::mt19937_64 rng(cfg_.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double resid_scale = 1.0 / std::sqrt(2.0 * static_cast<double>(cfg_.n_layers));

  auto add_matrix = [&](std::string name, Role role, Eigen::Index rows,
                        Eigen::Index cols, double std_dev) {
    Parameter<S> p{std::move(name), role, Mat<S>(rows, cols), true};
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      p.value.data()[i] = static_cast<S>(std_dev * normal(rng));
    }
    params_.push_back(std::move(p));
    return params_.size() - 1;
  };
  auto add_gain = [&](std::string name) {
    params_.push_back({std::move(name), Role::NonMatrix, Mat<S>::Ones(1, D), false});
    return params_.size() - 1;
  };

  const double sd = cfg_.init_std;
  embed_ = add_matrix("embed", Role::Embedding, V, D, sd);
  for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    Block b{};
    b.attn_norm = add_gain(p + "attn_norm");
    b.wq = add_matrix(p + "att.q", Role::AttQ, D, D, sd);
    b.wk = add_matrix(p + "att.k", Role::AttK, D, D, sd);
    b.wv = add_matrix(p + "att.v", Role::AttV, D, D, sd);
    b.wo = add_matrix(p + "att.o", Role::AttO, D, D, sd * resid_scale);
    b.ffn_norm = add_gain(p + "ffn_norm");
    b.wgate = add_matrix(p + "ffn.gate", Role::FfnGate, F, D, sd);
    b.wup = add_matrix(p + "ffn.up", Role::FfnUp, F, D, sd);
    b.wdown = add_matrix(p + "ffn.down", Role::FfnDown, D, F, sd * resid_scale);
    blocks_.push_back(b);
  }
  final_norm_ = add_gain("final_norm");
  head_ = cfg_.tie_output_head
              ? embed_
              : add_matrix("output_head", Role::OutputHead, V, D, sd);

  const std::size_t half = cfg_.head_dim() / 2;
  rope_cos_.resize(static_cast<Eigen::Index>(cfg_.context), static_cast<Eigen::Index>(half));
  rope_sin_.resizeLike(rope_cos_);
  for (std::size_t pos = 0; pos < cfg_.context; ++pos) {
    for (std::size_t i = 0; i < half; ++i) {
      const double theta =
          static_cast<double>(pos) *
          std::pow(kRopeBase, -2.0 * static_cast<double>(i) /
                                  static_cast<double>(cfg_.head_dim()));
      rope_cos_(static_cast<Eigen::Index>(pos), static_cast<Eigen::Index>(i)) =
          static_cast<S>(std::cos(theta));
      rope_sin_(static_cast<Eigen::Index>(pos), static_cast<Eigen::Index>(i)) =
          static_cast<S>(std::sin(theta));
    }
  }
}

template <typename S> S Transformer<S>::forward_loss(const Batch &batch) const {
  return run(batch, nullptr, S(1));
}

template <typename S>
S Transformer<S>::loss_and_grad(const Batch &batch, std::vector<Mat<S>> &grads,
                                S loss_scale) const {
  grads.resize(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    grads[i].setZero(params_[i].value.rows(), params_[i].value.cols());
  }
  return run(batch, &grads, loss_scale);
}

template <typename S>
std::vector<WeightMatrix> Transformer<S>::weight_matrices() const {
  std::vector<WeightMatrix> out;
  for (const auto &p : params_) {
    if (p.role == Role::NonMatrix) {
      continue;
    }
    std::vector<double> values(static_cast<std::size_t>(p.value.size()));
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      values[static_cast<std::size_t>(i)] = static_cast<double>(p.value.data()[i]);
    }
    out.emplace_back(p.name, p.role, static_cast<std::size_t>(p.value.rows()),
                     static_cast<std::size_t>(p.value.cols()), std::move(values));
  }
  return out;
}

template <typename S>
S Transformer<S>::run(const Batch &batch, std::vector<Mat<S>> *grads,
                      S loss_scale) const {
  const std::size_t B = batch.batch;
  const std::size_t T = batch.seq_len;
  const std::size_t H = cfg_.n_heads;
  const std::size_t hd = cfg_.head_dim();
  const auto N = static_cast<Eigen::Index>(B * T);
  const auto D = static_cast<Eigen::Index>(cfg_.d_model);
  const auto V = static_cast<Eigen::Index>(cfg_.vocab);
  const auto Ti = static_cast<Eigen::Index>(T);
  const auto hdi = static_cast<Eigen::Index>(hd);

  if (T == 0 || T > cfg_.context || batch.inputs.size() != B * T ||
      batch.targets.size() != B * T) {
    throw Error(ErrorCode::ShapeMismatch, "batch shape does not fit the model");
  }
  for (std::size_t i = 0; i < B * T; ++i) {
    if (batch.inputs[i] >= cfg_.vocab || batch.targets[i] >= cfg_.vocab) {
      throw Error(ErrorCode::TokenOutOfRange,
                  "token id " + std::to_string(std::max(batch.inputs[i], batch.targets[i])) +
                      " >= vocab " + std::to_string(cfg_.vocab));
    }
  }

  const bool train = grads != nullptr;
  const S scale = S(1) / std::sqrt(static_cast<S>(hd));
  const Mat<S> &E = params_[embed_].value;

  struct LayerCache {
    Mat<S> x_in, h1, q, k, v, attn, x_mid, h2, g, u, m;
    Vec<S> inv1, inv2;
    std::vector<Mat<S>> probs; // B*H causal softmax tiles
  };
  std::vector<LayerCache> caches(train ? blocks_.size() : 0);

  Mat<S> x(N, D);
  for (Eigen::Index r = 0; r < N; ++r) {
    x.row(r) = E.row(static_cast<Eigen::Index>(batch.inputs[static_cast<std::size_t>(r)]));
  }

  Mat<S> tile(Ti, Ti);
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    const Block &blk = blocks_[l];
    Vec<S> inv1;
    Mat<S> h1 = rms_norm(x, params_[blk.attn_norm].value, inv1);
    Mat<S> q(N, D), k(N, D), v(N, D);
    q.noalias() = h1 * params_[blk.wq].value.transpose();
    k.noalias() = h1 * params_[blk.wk].value.transpose();
    v.noalias() = h1 * params_[blk.wv].value.transpose();
    apply_rope(q, T, H, hd, rope_cos_, rope_sin_, false);
    apply_rope(k, T, H, hd, rope_cos_, rope_sin_, false);

    Mat<S> attn(N, D);
    std::vector<Mat<S>> probs;
    if (train) {
      probs.reserve(B * H);
    }
    for (std::size_t b = 0; b < B; ++b) {
      const auto r0 = static_cast<Eigen::Index>(b * T);
      for (std::size_t h = 0; h < H; ++h) {
        const auto c0 = static_cast<Eigen::Index>(h * hd);
        tile.noalias() = q.block(r0, c0, Ti, hdi) * k.block(r0, c0, Ti, hdi).transpose();
        for (Eigen::Index i = 0; i < Ti; ++i) {
          S mx = -std::numeric_limits<S>::infinity();
          for (Eigen::Index j = 0; j <= i; ++j) {
            tile(i, j) *= scale;
            mx = std::max(mx, tile(i, j));
          }
          S sum = 0;
          for (Eigen::Index j = 0; j <= i; ++j) {
            tile(i, j) = std::exp(tile(i, j) - mx);
            sum += tile(i, j);
          }
          const S inv = S(1) / sum;
          for (Eigen::Index j = 0; j <= i; ++j) {
            tile(i, j) *= inv;
          }
          for (Eigen::Index j = i + 1; j < Ti; ++j) {
            tile(i, j) = 0;
          }
        }
        attn.block(r0, c0, Ti, hdi).noalias() = tile * v.block(r0, c0, Ti, hdi);
        if (train) {
          probs.push_back(tile);
        }
      }
    }

    Mat<S> x_mid = x;
    x_mid.noalias() += attn * params_[blk.wo].value.transpose();

    Vec<S> inv2;
    Mat<S> h2 = rms_norm(x_mid, params_[blk.ffn_norm].value, inv2);
    Mat<S> g(N, params_[blk.wgate].value.rows());
    Mat<S> u(N, params_[blk.wup].value.rows());
    g.noalias() = h2 * params_[blk.wgate].value.transpose();
    u.noalias() = h2 * params_[blk.wup].value.transpose();
    Mat<S> m = g.unaryExpr([](S a) { return silu(a); }).cwiseProduct(u);

    Mat<S> x_out = x_mid;
    x_out.noalias() += m * params_[blk.wdown].value.transpose();

    if (train) {
      LayerCache &c = caches[l];
      c.x_in = std::move(x);
      c.h1 = std::move(h1);
      c.q = std::move(q);
      c.k = std::move(k);
      c.v = std::move(v);
      c.attn = std::move(attn);
      c.x_mid = std::move(x_mid);
      c.h2 = std::move(h2);
      c.g = std::move(g);
      c.u = std::move(u);
      c.m = std::move(m);
      c.inv1 = std::move(inv1);
      c.inv2 = std::move(inv2);
      c.probs = std::move(probs);
    }
    x = std::move(x_out);
  }

  Vec<S> invf;
  Mat<S> hf = rms_norm(x, params_[final_norm_].value, invf);
  const Mat<S> &W_head = params_[head_].value;
  Mat<S> logits(N, V);
  logits.noalias() = hf * W_head.transpose();

  // Loss accumulates in f64 so f32 runs report a stable mean.
  double loss = 0.0;
  for (Eigen::Index r = 0; r < N; ++r) {
    auto row = logits.row(r);
    const S mx = row.maxCoeff();
    row.array() = (row.array() - mx).exp();
    const S sum = row.sum();
    row /= sum;
    const auto target = static_cast<Eigen::Index>(batch.targets[static_cast<std::size_t>(r)]);
    loss -= std::log(static_cast<double>(row(target)));
  }
  loss /= static_cast<double>(N);
  if (!train) {
    return static_cast<S>(loss);
  }

  // Backward. `logits` now holds softmax probabilities.
  std::vector<Mat<S>> &G = *grads;
  Mat<S> dlogits = std::move(logits);
  for (Eigen::Index r = 0; r < N; ++r) {
    dlogits(r, static_cast<Eigen::Index>(batch.targets[static_cast<std::size_t>(r)])) -= S(1);
  }
  dlogits *= loss_scale / static_cast<S>(N);

  G[head_].noalias() += dlogits.transpose() * hf;
  Mat<S> dhf(N, D);
  dhf.noalias() = dlogits * W_head;
  Mat<S> dx = rms_norm_backward(dhf, x, invf, params_[final_norm_].value, G[final_norm_]);

  Mat<S> dtile(Ti, Ti);
  for (std::size_t li = blocks_.size(); li-- > 0;) {
    const Block &blk = blocks_[li];
    LayerCache &c = caches[li];

    // Feed-forward: x_out = x_mid + (silu(g) ⊙ u) Wdᵀ.
    const Mat<S> &Wd = params_[blk.wdown].value;
    G[blk.wdown].noalias() += dx.transpose() * c.m;
    Mat<S> dm(N, Wd.cols());
    dm.noalias() = dx * Wd;
    Mat<S> dg(N, c.g.cols());
    Mat<S> du(N, c.u.cols());
    for (Eigen::Index r = 0; r < N; ++r) {
      for (Eigen::Index j = 0; j < c.g.cols(); ++j) {
        const S gv = c.g(r, j);
        const S sig = S(1) / (S(1) + std::exp(-gv));
        const S act = gv * sig;
        du(r, j) = dm(r, j) * act;
        dg(r, j) = dm(r, j) * c.u(r, j) * sig * (S(1) + gv * (S(1) - sig));
      }
    }
    G[blk.wgate].noalias() += dg.transpose() * c.h2;
    G[blk.wup].noalias() += du.transpose() * c.h2;
    Mat<S> dh2(N, D);
    dh2.noalias() = dg * params_[blk.wgate].value;
    dh2.noalias() += du * params_[blk.wup].value;
    Mat<S> dx_mid = dx;
    dx_mid += rms_norm_backward(dh2, c.x_mid, c.inv2, params_[blk.ffn_norm].value,
                                G[blk.ffn_norm]);

    // Attention: x_mid = x_in + attn Woᵀ.
    G[blk.wo].noalias() += dx_mid.transpose() * c.attn;
    Mat<S> dattn(N, D);
    dattn.noalias() = dx_mid * params_[blk.wo].value;

    Mat<S> dq(N, D), dk(N, D), dv(N, D);
    for (std::size_t b = 0; b < B; ++b) {
      const auto r0 = static_cast<Eigen::Index>(b * T);
      for (std::size_t h = 0; h < H; ++h) {
        const auto c0 = static_cast<Eigen::Index>(h * hd);
        const Mat<S> &P = c.probs[b * H + h];
        const auto dO = dattn.block(r0, c0, Ti, hdi);
        dtile.noalias() = dO * c.v.block(r0, c0, Ti, hdi).transpose();
        dv.block(r0, c0, Ti, hdi).noalias() = P.transpose() * dO;
        for (Eigen::Index i = 0; i < Ti; ++i) {
          S dot = 0;
          for (Eigen::Index j = 0; j <= i; ++j) {
            dot += P(i, j) * dtile(i, j);
          }
          for (Eigen::Index j = 0; j <= i; ++j) {
            dtile(i, j) = P(i, j) * (dtile(i, j) - dot) * scale;
          }
          for (Eigen::Index j = i + 1; j < Ti; ++j) {
            dtile(i, j) = 0;
          }
        }
        dq.block(r0, c0, Ti, hdi).noalias() = dtile * c.k.block(r0, c0, Ti, hdi);
        dk.block(r0, c0, Ti, hdi).noalias() = dtile.transpose() * c.q.block(r0, c0, Ti, hdi);
      }
    }
    apply_rope(dq, T, H, hd, rope_cos_, rope_sin_, true);
    apply_rope(dk, T, H, hd, rope_cos_, rope_sin_, true);

    G[blk.wq].noalias() += dq.transpose() * c.h1;
    G[blk.wk].noalias() += dk.transpose() * c.h1;
    G[blk.wv].noalias() += dv.transpose() * c.h1;
    Mat<S> dh1(N, D);
    dh1.noalias() = dq * params_[blk.wq].value;
    dh1.noalias() += dk * params_[blk.wk].value;
    dh1.noalias() += dv * params_[blk.wv].value;

    dx = std::move(dx_mid);
    dx += rms_norm_backward(dh1, c.x_in, c.inv1, params_[blk.attn_norm].value,
                            G[blk.attn_norm]);
  }

  Mat<S> &dE = G[embed_];
  for (Eigen::Index r = 0; r < N; ++r) {
    dE.row(static_cast<Eigen::Index>(batch.inputs[static_cast<std::size_t>(r)])) += dx.row(r);
  }
  return static_cast<S>(loss);
}

template class Transformer<float>;
template class Transformer<double>;

} // namespace llr
