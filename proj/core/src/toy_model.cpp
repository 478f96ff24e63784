// Copyright (c) 2026 The AdaPM Authors
// SPDX-License-Identifier: Apache-2.0

#include "adapm/toy_model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "adapm/errors.hpp"

namespace adapm::toy {
namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr std::size_t kPerLayer = 10;

// Offsets inside one layer's parameter group.
enum LayerSlot : std::size_t {
  kLn1Gain, kLn1Shift, kWq, kWk, kWv, kWo, kLn2Gain, kLn2Shift, kWin, kWout
};

struct NormCache {
  Matrix xhat;
  std::vector<double> inv_std;
};

struct LayerCache {
  NormCache ln1;
  Matrix a, q, k, v, h;
  std::vector<Matrix> probs;
  NormCache ln2;
  Matrix b, z, g;
};

struct ForwardCache {
  std::vector<LayerCache> layers;
  NormCache ln_f;
  Matrix f;
};

Matrix layer_norm(const Matrix& x, const Matrix& gain, const Matrix& shift, NormCache& cache) {
  const std::size_t n = x.rows(), d = x.cols();
  cache.xhat = Matrix(n, d);
  cache.inv_std.assign(n, 0.0);
  Matrix y(n, d);
  for (std::size_t r = 0; r < n; ++r) {
    auto row = x.row(r);
    double mean = 0.0;
    for (double val : row) mean += val;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (double val : row) var += (val - mean) * (val - mean);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    cache.inv_std[r] = inv;
    for (std::size_t c = 0; c < d; ++c) {
      const double xh = (row[c] - mean) * inv;
      cache.xhat(r, c) = xh;
      y(r, c) = xh * gain(c, 0) + shift(c, 0);
    }
  }
  return y;
}

// Returns dx; accumulates into dgain and dshift.
Matrix layer_norm_backward(const Matrix& dy, const Matrix& gain, const NormCache& cache,
                           Matrix& dgain, Matrix& dshift) {
  const std::size_t n = dy.rows(), d = dy.cols();
  Matrix dx(n, d);
  std::vector<double> dxhat(d);
  for (std::size_t r = 0; r < n; ++r) {
    double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double g = dy(r, c);
      dgain(c, 0) += g * cache.xhat(r, c);
      dshift(c, 0) += g;
      dxhat[c] = g * gain(c, 0);
      mean_dxhat += dxhat[c];
      mean_dxhat_xhat += dxhat[c] * cache.xhat(r, c);
    }
    mean_dxhat /= static_cast<double>(d);
    mean_dxhat_xhat /= static_cast<double>(d);
    for (std::size_t c = 0; c < d; ++c) {
      dx(r, c) = cache.inv_std[r] * (dxhat[c] - mean_dxhat - cache.xhat(r, c) * mean_dxhat_xhat);
    }
  }
  return dx;
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;

double gelu(double z) { return 0.5 * z * (1.0 + std::tanh(kGeluC * (z + kGeluA * z * z * z))); }

double gelu_grad(double z) {
  const double t = std::tanh(kGeluC * (z + kGeluA * z * z * z));
  return 0.5 * (1.0 + t) + 0.5 * z * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * z * z);
}

Matrix rows_of(const Matrix& m, std::size_t start, std::size_t count) {
  Matrix out(count, m.cols());
  std::copy_n(m.values().begin() + static_cast<std::ptrdiff_t>(start * m.cols()),
              count * m.cols(), out.values().begin());
  return out;
}

void put_rows(Matrix& m, std::size_t start, const Matrix& block) {
  std::copy(block.values().begin(), block.values().end(),
            m.values().begin() + static_cast<std::ptrdiff_t>(start * m.cols()));
}

Matrix sinusoidal_positions(std::size_t seq_len, std::size_t dim) {
  Matrix p(seq_len, dim);
  for (std::size_t pos = 0; pos < seq_len; ++pos) {
    for (std::size_t c = 0; c < dim; ++c) {
      const double freq =
          std::pow(10000.0, -static_cast<double>(2 * (c / 2)) / static_cast<double>(dim));
      const double angle = static_cast<double>(pos) * freq;
      p(pos, c) = c % 2 == 0 ? std::sin(angle) : std::cos(angle);
    }
  }
  return p;
}

}  // namespace

std::vector<std::string> ToyTransformerConfig::diagnostics() const {
  std::vector<std::string> out;
  if (vocab < 2) out.emplace_back("vocab must be at least 2");
  if (dim == 0) out.emplace_back("dim must be positive");
  if (layers == 0) out.emplace_back("layers must be positive");
  if (heads != 1) out.emplace_back("only single-head attention is supported (heads = 1)");
  if (heads != 0 && dim % heads != 0) out.emplace_back("dim must be divisible by heads");
  if (mlp_ratio == 0) out.emplace_back("mlp_ratio must be positive");
  if (seq_len == 0) out.emplace_back("seq_len must be positive");
  if (!(init_scale > 0.0)) out.emplace_back("init_scale must be positive");
  return out;
}

void ToyTransformerConfig::validate() const {
  const auto d = diagnostics();
  if (d.empty()) return;
  std::ostringstream msg;
  msg << "invalid toy transformer config:";
  for (const auto& s : d) msg << ' ' << s << ';';
  throw std::invalid_argument(msg.str());
}

void Batch::validate(std::size_t vocab) const {
  if (batch_size == 0 || seq_len == 0) throw std::invalid_argument("batch is empty");
  if (tokens.size() != token_count() || targets.size() != token_count()) {
    throw std::invalid_argument("batch token/target lengths do not match batch_size * seq_len");
  }
  auto bad = [vocab](std::uint32_t id) { return id >= vocab; };
  if (std::any_of(tokens.begin(), tokens.end(), bad) ||
      std::any_of(targets.begin(), targets.end(), bad)) {
    throw std::invalid_argument("batch contains a token id outside the vocabulary");
  }
}

ToyTransformer::ToyTransformer(ToyTransformerConfig config) : config_(config) {
  config_.validate();
  const std::size_t d = config_.dim, hidden = d * config_.mlp_ratio, v = config_.vocab;
  auto add = [this](std::string name, BlockRole role, ParamShape shape) {
    names_.push_back(std::move(name));
    roles_.push_back(role);
    shapes_.push_back(shape);
  };
  add("tok_emb", BlockRole::Embedding, {v, d});
  for (std::size_t l = 0; l < config_.layers; ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    add(p + "ln1.weight", BlockRole::VectorParam, {d, std::nullopt});
    add(p + "ln1.bias", BlockRole::VectorParam, {d, std::nullopt});
    add(p + "attn.wq", BlockRole::Query, {d, d});
    add(p + "attn.wk", BlockRole::Key, {d, d});
    add(p + "attn.wv", BlockRole::Value, {d, d});
    add(p + "attn.wo", BlockRole::AttnOutProj, {d, d});
    add(p + "ln2.weight", BlockRole::VectorParam, {d, std::nullopt});
    add(p + "ln2.bias", BlockRole::VectorParam, {d, std::nullopt});
    add(p + "mlp.w_in", BlockRole::MlpIn, {d, hidden});
    add(p + "mlp.w_out", BlockRole::MlpOut, {hidden, d});
  }
  add("ln_f.weight", BlockRole::VectorParam, {d, std::nullopt});
  add("ln_f.bias", BlockRole::VectorParam, {d, std::nullopt});
  add("head", BlockRole::Head, {d, v});
  positions_ = sinusoidal_positions(config_.seq_len, d);
}

std::vector<NamedParameter> ToyTransformer::build() const {
  std::mt19937_64 rng(config_.seed);
  std::normal_distribution<double> normal(0.0, config_.init_scale);
  std::vector<NamedParameter> params;
  params.reserve(names_.size());
  for (std::size_t i = 0; i < names_.size(); ++i) {
    const ParamShape& s = shapes_[i];
    Matrix value(s.rows, s.matrix_cols());
    if (s.is_vector()) {
      const bool gain = names_[i].ends_with(".weight");
      value.fill(gain ? 1.0 : 0.0);
    } else {
      for (double& x : value.values()) x = normal(rng);
    }
    params.push_back({names_[i], roles_[i], s, std::move(value)});
  }
  return params;
}

namespace {

void check_params(std::span<const NamedParameter> params, const std::vector<std::string>& names,
                  const std::vector<ParamShape>& shapes) {
  if (params.size() != names.size()) {
    throw DimensionError("toy model expects " + std::to_string(names.size()) +
                         " parameters, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix& v = params[i].value;
    if (v.rows() != shapes[i].rows || v.cols() != shapes[i].matrix_cols()) {
      throw DimensionError("toy parameter '" + names[i] + "' has shape " + v.shape_string());
    }
  }
}

}  // namespace

ForwardResult ToyTransformer::run(std::span<const NamedParameter> params, const Batch& batch,
                                  LossReduction reduction, bool with_grads) const {
  check_params(params, names_, shapes_);
  batch.validate(config_.vocab);
  if (batch.seq_len > config_.seq_len) {
    throw std::invalid_argument("batch sequence length exceeds the model's seq_len");
  }
  const std::size_t d = config_.dim, S = batch.seq_len, B = batch.batch_size, N = B * S;
  const std::size_t V = config_.vocab, L = config_.layers;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  auto W = [&](std::size_t layer, std::size_t slot) -> const Matrix& {
    return params[1 + layer * kPerLayer + slot].value;
  };
  const Matrix& emb = params[0].value;
  const std::size_t fbase = 1 + L * kPerLayer;
  const Matrix& gain_f = params[fbase].value;
  const Matrix& shift_f = params[fbase + 1].value;
  const Matrix& head = params[fbase + 2].value;

  // Forward.
  ForwardCache cache;
  cache.layers.resize(L);
  Matrix x(N, d);
  for (std::size_t n = 0; n < N; ++n) {
    auto e = emb.row(batch.tokens[n]);
    auto p = positions_.row(n % S);
    auto out = x.row(n);
    for (std::size_t c = 0; c < d; ++c) out[c] = e[c] + p[c];
  }
  for (std::size_t l = 0; l < L; ++l) {
    LayerCache& lc = cache.layers[l];
    lc.a = layer_norm(x, W(l, kLn1Gain), W(l, kLn1Shift), lc.ln1);
    lc.q = matmul(lc.a, W(l, kWq));
    lc.k = matmul(lc.a, W(l, kWk));
    lc.v = matmul(lc.a, W(l, kWv));
    lc.h = Matrix(N, d);
    lc.probs.resize(B);
    for (std::size_t s = 0; s < B; ++s) {
      const Matrix qs = rows_of(lc.q, s * S, S), ks = rows_of(lc.k, s * S, S);
      Matrix p = matmul_bt(qs, ks);
      for (std::size_t i = 0; i < S; ++i) {
        double mx = -INFINITY;
        for (std::size_t j = 0; j <= i; ++j) mx = std::max(mx, p(i, j) * scale);
        double total = 0.0;
        for (std::size_t j = 0; j < S; ++j) {
          p(i, j) = j <= i ? std::exp(p(i, j) * scale - mx) : 0.0;
          total += p(i, j);
        }
        for (std::size_t j = 0; j <= i; ++j) p(i, j) /= total;
      }
      put_rows(lc.h, s * S, matmul(p, rows_of(lc.v, s * S, S)));
      lc.probs[s] = std::move(p);
    }
    x += matmul(lc.h, W(l, kWo));
    lc.b = layer_norm(x, W(l, kLn2Gain), W(l, kLn2Shift), lc.ln2);
    lc.z = matmul(lc.b, W(l, kWin));
    lc.g = lc.z;
    for (double& val : lc.g.values()) val = gelu(val);
    x += matmul(lc.g, W(l, kWout));
  }
  cache.f = layer_norm(x, gain_f, shift_f, cache.ln_f);
  Matrix logits = matmul(cache.f, head);

  const double weight = reduction == LossReduction::Mean ? 1.0 / static_cast<double>(N) : 1.0;
  double loss = 0.0;
  Matrix dlogits(N, V);
  for (std::size_t n = 0; n < N; ++n) {
    auto row = logits.row(n);
    const double mx = *std::max_element(row.begin(), row.end());
    double total = 0.0;
    for (double val : row) total += std::exp(val - mx);
    const double log_z = mx + std::log(total);
    loss -= row[batch.targets[n]] - log_z;
    auto drow = dlogits.row(n);
    for (std::size_t c = 0; c < V; ++c) drow[c] = std::exp(row[c] - log_z) * weight;
    drow[batch.targets[n]] -= weight;
  }
  loss *= weight;
  if (!std::isfinite(loss)) throw NumericalError("toy model produced a non-finite loss");

  ForwardResult result;
  result.loss = loss;
  if (!with_grads) return result;

  // Backward.
  result.grads.reserve(params.size());
  for (const auto& p : params) result.grads.emplace_back(p.value.rows(), p.value.cols());
  auto G = [&](std::size_t layer, std::size_t slot) -> Matrix& {
    return result.grads[1 + layer * kPerLayer + slot];
  };
  result.grads[fbase + 2] = matmul_at(cache.f, dlogits);
  Matrix dx = layer_norm_backward(matmul_bt(dlogits, head), gain_f, cache.ln_f,
                                  result.grads[fbase], result.grads[fbase + 1]);
  for (std::size_t l = L; l-- > 0;) {
    const LayerCache& lc = cache.layers[l];
    // MLP branch.
    G(l, kWout) = matmul_at(lc.g, dx);
    Matrix dz = matmul_bt(dx, W(l, kWout));
    for (std::size_t i = 0; i < dz.size(); ++i) dz.values()[i] *= gelu_grad(lc.z.values()[i]);
    G(l, kWin) = matmul_at(lc.b, dz);
    dx += layer_norm_backward(matmul_bt(dz, W(l, kWin)), W(l, kLn2Gain), lc.ln2,
                              G(l, kLn2Gain), G(l, kLn2Shift));
    // Attention branch.
    G(l, kWo) = matmul_at(lc.h, dx);
    const Matrix dh = matmul_bt(dx, W(l, kWo));
    Matrix dq(N, d), dk(N, d), dv(N, d);
    for (std::size_t s = 0; s < B; ++s) {
      const Matrix& p = lc.probs[s];
      const Matrix dhs = rows_of(dh, s * S, S);
      Matrix dp = matmul_bt(dhs, rows_of(lc.v, s * S, S));
      put_rows(dv, s * S, matmul_at(p, dhs));
      for (std::size_t i = 0; i < S; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j <= i; ++j) dot += dp(i, j) * p(i, j);
        for (std::size_t j = 0; j < S; ++j) dp(i, j) = p(i, j) * (dp(i, j) - dot) * scale;
      }
      put_rows(dq, s * S, matmul(dp, rows_of(lc.k, s * S, S)));
      put_rows(dk, s * S, matmul_at(dp, rows_of(lc.q, s * S, S)));
    }
    G(l, kWq) = matmul_at(lc.a, dq);
    G(l, kWk) = matmul_at(lc.a, dk);
    G(l, kWv) = matmul_at(lc.a, dv);
    Matrix da = matmul_bt(dq, W(l, kWq));
    da += matmul_bt(dk, W(l, kWk));
    da += matmul_bt(dv, W(l, kWv));
    dx += layer_norm_backward(da, W(l, kLn1Gain), lc.ln1, G(l, kLn1Gain), G(l, kLn1Shift));
  }
  Matrix& demb = result.grads[0];
  for (std::size_t n = 0; n < N; ++n) {
    auto src = dx.row(n);
    auto dst = demb.row(batch.tokens[n]);
    for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
  }
  return result;
}

ForwardResult ToyTransformer::forward_backward(std::span<const NamedParameter> params,
                                               const Batch& batch,
                                               LossReduction reduction) const {
  return run(params, batch, reduction, true);
}

double ToyTransformer::loss(std::span<const NamedParameter> params, const Batch& batch,
                            LossReduction reduction) const {
  return run(params, batch, reduction, false).loss;
}

}  // namespace adapm::toy
