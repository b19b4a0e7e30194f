#pragma once

// Dense numeric core: pooling, normalization, the linear adapter and the two
// contrastive objectives with analytic gradients.
//
// Gradients flow in two stages. The loss functions return dL/dZ for their
// unit-norm inputs; adapter_backward() carries dL/dZ through the row
// normalization and the affine map to dL/dW and dL/db.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "protsent/common.hpp"
#include "protsent/seqio.hpp"

namespace protsent {

/// Mean of the rows of `tokens` (T x d) whose mask entry is true.
inline Vector mean_pool(const Matrix& tokens, const std::vector<bool>& mask) {
  if (static_cast<std::size_t>(tokens.rows()) != mask.size()) throw Error("mean_pool: mask length mismatch");
  Vector sum = Vector::Zero(tokens.cols());
  std::size_t count = 0;
  for (Eigen::Index t = 0; t < tokens.rows(); ++t) {
    if (!mask[static_cast<std::size_t>(t)]) continue;
    sum += tokens.row(t).transpose();
    ++count;
  }
  if (count == 0) throw Error("mean_pool: mask selects no tokens");
  return sum / static_cast<double>(count);
}

inline Vector l2_normalize(const Vector& v) {
  const double n = v.norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw NumericError("l2_normalize: zero or non-finite vector");
  return v / n;
}

/// Row-wise L2 normalization; throws on a zero row.
inline Matrix l2_normalize_rows(const Matrix& m) {
  Matrix out = m;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double n = out.row(r).norm();
    if (!(n > 0.0) || !std::isfinite(n)) throw NumericError("l2_normalize: zero or non-finite row " + std::to_string(r));
    out.row(r) /= n;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Adapter
// ---------------------------------------------------------------------------

struct AdapterParams {
  Matrix weight;  // d_in x d_out
  std::optional<Vector> bias;  // d_out

  std::size_t d_in() const { return static_cast<std::size_t>(weight.rows()); }
  std::size_t d_out() const { return static_cast<std::size_t>(weight.cols()); }

  /// Identity plus N(0, init_scale^2) noise on every entry.
  static AdapterParams identity(std::size_t dim, double init_scale, std::uint64_t seed, bool with_bias = false) {
    if (dim < 2) throw Error("adapter: d_out must be >= 2");
    AdapterParams p;
    p.weight = Matrix::Identity(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
    if (init_scale > 0.0) {
      Rng rng(seed);
      for (Eigen::Index i = 0; i < p.weight.rows(); ++i) {
        for (Eigen::Index j = 0; j < p.weight.cols(); ++j) p.weight(i, j) += init_scale * rng.normal();
      }
    }
    if (with_bias) p.bias = Vector::Zero(static_cast<Eigen::Index>(dim));
    return p;
  }

  bool finite() const { return weight.allFinite() && (!bias || bias->allFinite()); }
};

/// Same shapes as AdapterParams.
struct AdapterGrads {
  Matrix weight;
  std::optional<Vector> bias;

  static AdapterGrads zeros_like(const AdapterParams& p) {
    AdapterGrads g;
    g.weight = Matrix::Zero(p.weight.rows(), p.weight.cols());
    if (p.bias) g.bias = Vector::Zero(p.bias->size());
    return g;
  }

  AdapterGrads& operator+=(const AdapterGrads& o) {
    weight += o.weight;
    if (bias && o.bias) *bias += *o.bias;
    return *this;
  }

  AdapterGrads& operator*=(double s) {
    weight *= s;
    if (bias) *bias *= s;
    return *this;
  }
};

/// Pre-normalization activations and their norms, kept for backward.
struct AdapterActivations {
  Matrix z;         // unit rows
  Vector row_norm;  // ||h W + b|| per row
};

inline AdapterActivations adapter_forward_cached(const AdapterParams& params, const Matrix& h) {
  if (static_cast<std::size_t>(h.cols()) != params.d_in()) throw Error("adapter_forward: input dimension mismatch");
  Matrix u = h * params.weight;
  if (params.bias) u.rowwise() += params.bias->transpose();
  AdapterActivations a;
  a.row_norm.resize(u.rows());
  for (Eigen::Index r = 0; r < u.rows(); ++r) {
    const double n = u.row(r).norm();
    if (!(n > 0.0) || !std::isfinite(n)) throw NumericError("adapter_forward: zero or non-finite row " + std::to_string(r));
    a.row_norm(r) = n;
    u.row(r) /= n;
  }
  a.z = std::move(u);
  return a;
}

/// Z = l2_normalize_rows(H W + b).
inline Matrix adapter_forward(const AdapterParams& params, const Matrix& h) {
  return adapter_forward_cached(params, h).z;
}

/// dL/dW and dL/db from dL/dZ. For z = u / ||u||, dL/du = (g - z (z . g)) / ||u||.
inline AdapterGrads adapter_backward(const AdapterParams& params, const Matrix& h, const AdapterActivations& act,
                                     const Matrix& dz) {
  Matrix du = dz;
  for (Eigen::Index r = 0; r < du.rows(); ++r) {
    const double proj = act.z.row(r).dot(dz.row(r));
    du.row(r) = (dz.row(r) - proj * act.z.row(r)) / act.row_norm(r);
  }
  AdapterGrads g;
  g.weight = h.transpose() * du;
  if (params.bias) g.bias = du.colwise().sum().transpose();
  return g;
}

// ---------------------------------------------------------------------------
// Losses on unit-norm embeddings
// ---------------------------------------------------------------------------

inline constexpr double kDefaultScale = 20.0;

struct EmbeddingLoss {
  double value = 0.0;
  Vector per_row;  // MNRL: per-anchor loss; CoSENT: empty
  Matrix grad_a;   // dL/dZ for the first input (anchors / Z_1)
  Matrix grad_b;   // positives / Z_2
  Matrix grad_hn;  // hard negatives (MNRL only; 0 rows when absent)
};

/// Multiple-negatives ranking loss. Anchor i is scored against the shared
/// candidate pool [Z_p; Z_hn] with logits scale * cos; its target is row i of
/// Z_p. Value is the mean per-anchor cross-entropy.
inline EmbeddingLoss mnrl_loss(const Matrix& za, const Matrix& zp, const Matrix* zhn = nullptr,
                               double scale = kDefaultScale) {
  const Eigen::Index n = za.rows();
  if (n < 1 || zp.rows() != n || zp.cols() != za.cols()) throw Error("mnrl_loss: anchor/positive shape mismatch");
  const Eigen::Index m = zhn ? zhn->rows() : 0;
  if (zhn && zhn->cols() != za.cols()) throw Error("mnrl_loss: hard-negative dimension mismatch");

  Matrix cand(n + m, za.cols());
  cand.topRows(n) = zp;
  if (m > 0) cand.bottomRows(m) = *zhn;

  Matrix logits = scale * (za * cand.transpose());  // n x (n + m)
  if (!logits.allFinite()) throw NumericError("mnrl_loss: non-finite similarity");

  EmbeddingLoss out;
  out.per_row.resize(n);
  Matrix dlogits(n, n + m);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mx = logits.row(i).maxCoeff();
    double z = 0.0;
    for (Eigen::Index j = 0; j < n + m; ++j) z += std::exp(logits(i, j) - mx);
    const double lse = mx + std::log(z);
    out.per_row(i) = lse - logits(i, i);
    for (Eigen::Index j = 0; j < n + m; ++j) dlogits(i, j) = std::exp(logits(i, j) - lse);
    dlogits(i, i) -= 1.0;
  }
  out.value = out.per_row.mean();
  dlogits *= scale / static_cast<double>(n);

  out.grad_a = dlogits * cand;
  Matrix dcand = dlogits.transpose() * za;
  out.grad_b = dcand.topRows(n);
  out.grad_hn = dcand.bottomRows(m);
  return out;
}

/// CoSENT: log(1 + sum over pairs with score_i > score_j of
/// exp(scale * (c_j - c_i))), c_p = cos(Z_1[p], Z_2[p]).
inline EmbeddingLoss cosent_loss(const Matrix& z1, const Matrix& z2, const std::vector<double>& scores,
                                 double scale = kDefaultScale) {
  const Eigen::Index p = z1.rows();
  if (z2.rows() != p || z2.cols() != z1.cols() || scores.size() != static_cast<std::size_t>(p)) {
    throw Error("cosent_loss: shape mismatch");
  }
  EmbeddingLoss out;
  out.grad_a = Matrix::Zero(p, z1.cols());
  out.grad_b = Matrix::Zero(p, z1.cols());
  out.grad_hn = Matrix(0, z1.cols());

  Vector cos(p);
  for (Eigen::Index i = 0; i < p; ++i) cos(i) = z1.row(i).dot(z2.row(i));
  if (!cos.allFinite()) throw NumericError("cosent_loss: non-finite similarity");

  // Terms t_ij = scale * (c_j - c_i) over ordered pairs, plus the implicit 0.
  struct Term {
    Eigen::Index i, j;
    double t;
  };
  std::vector<Term> terms;
  double mx = 0.0;
  for (Eigen::Index i = 0; i < p; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) {
      if (scores[static_cast<std::size_t>(i)] > scores[static_cast<std::size_t>(j)]) {
        const double t = scale * (cos(j) - cos(i));
        terms.push_back({i, j, t});
        mx = std::max(mx, t);
      }
    }
  }
  if (terms.empty()) return out;

  double z = std::exp(-mx);
  for (const auto& t : terms) z += std::exp(t.t - mx);
  const double lse = mx + std::log(z);
  out.value = lse;

  Vector dcos = Vector::Zero(p);
  for (const auto& t : terms) {
    const double w = std::exp(t.t - lse) * scale;
    dcos(t.j) += w;
    dcos(t.i) -= w;
  }
  for (Eigen::Index i = 0; i < p; ++i) {
    out.grad_a.row(i) = dcos(i) * z2.row(i);
    out.grad_b.row(i) = dcos(i) * z1.row(i);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Losses through the adapter
// ---------------------------------------------------------------------------

struct LossOutput {
  double value = 0.0;
  AdapterGrads grads;
  Vector aux;  // per-row losses (MNRL)
};

/// MNRL on raw embeddings mapped through the adapter.
inline LossOutput adapter_mnrl_loss(const AdapterParams& params, const Matrix& ha, const Matrix& hp,
                                    const Matrix* hhn = nullptr, double scale = kDefaultScale) {
  const auto aa = adapter_forward_cached(params, ha);
  const auto ap = adapter_forward_cached(params, hp);
  std::optional<AdapterActivations> an;
  if (hhn && hhn->rows() > 0) an = adapter_forward_cached(params, *hhn);
  const auto loss = mnrl_loss(aa.z, ap.z, an ? &an->z : nullptr, scale);

  LossOutput out;
  out.value = loss.value;
  out.aux = loss.per_row;
  out.grads = adapter_backward(params, ha, aa, loss.grad_a);
  out.grads += adapter_backward(params, hp, ap, loss.grad_b);
  if (an) out.grads += adapter_backward(params, *hhn, *an, loss.grad_hn);
  return out;
}

/// CoSENT on raw embedding pairs mapped through the adapter.
inline LossOutput adapter_cosent_loss(const AdapterParams& params, const Matrix& h1, const Matrix& h2,
                                      const std::vector<double>& scores, double scale = kDefaultScale) {
  const auto a1 = adapter_forward_cached(params, h1);
  const auto a2 = adapter_forward_cached(params, h2);
  const auto loss = cosent_loss(a1.z, a2.z, scores, scale);
  LossOutput out;
  out.value = loss.value;
  out.grads = adapter_backward(params, h1, a1, loss.grad_a);
  out.grads += adapter_backward(params, h2, a2, loss.grad_b);
  return out;
}

// ---------------------------------------------------------------------------
// Adapter checkpoints (PADP1)
// ---------------------------------------------------------------------------

/// "PADP1\0" | u32 version=1 | u32 d_in | u32 d_out | u8 has_bias
/// | d_in x d_out little-endian f32 (row-major) | d_out f32 bias if present
inline std::string encode_adapter(const AdapterParams& p) {
  std::string buf = {'P', 'A', 'D', 'P', '1', '\0'};
  pemb::put_le<std::uint32_t>(buf, 1);
  pemb::put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(p.d_in()));
  pemb::put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(p.d_out()));
  buf.push_back(static_cast<char>(p.bias ? 1 : 0));
  auto put = [&](double v) { pemb::put_le<std::uint32_t>(buf, std::bit_cast<std::uint32_t>(static_cast<float>(v))); };
  for (Eigen::Index i = 0; i < p.weight.rows(); ++i) {
    for (Eigen::Index j = 0; j < p.weight.cols(); ++j) put(p.weight(i, j));
  }
  if (p.bias) {
    for (Eigen::Index j = 0; j < p.bias->size(); ++j) put((*p.bias)(j));
  }
  return buf;
}

inline AdapterParams decode_adapter(std::string_view bytes) {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  constexpr std::size_t kHeader = 6 + 4 + 4 + 4 + 1;
  if (bytes.size() < 6 || bytes.substr(0, 6) != std::string_view("PADP1\0", 6)) throw Error("PADP1: bad magic");
  if (bytes.size() < kHeader) throw Error("PADP1: truncated header");
  if (pemb::get_le<std::uint32_t>(p + 6) != 1) throw Error("PADP1: unsupported version");
  const auto d_in = pemb::get_le<std::uint32_t>(p + 10);
  const auto d_out = pemb::get_le<std::uint32_t>(p + 14);
  const bool has_bias = p[18] != 0;
  const std::size_t expect = kHeader + 4ull * d_in * d_out + (has_bias ? 4ull * d_out : 0);
  if (bytes.size() != expect) throw Error("PADP1: payload size mismatch");
  AdapterParams out;
  out.weight.resize(d_in, d_out);
  std::size_t off = kHeader;
  auto get = [&] {
    const float f = std::bit_cast<float>(pemb::get_le<std::uint32_t>(p + off));
    off += 4;
    return static_cast<double>(f);
  };
  for (std::uint32_t i = 0; i < d_in; ++i) {
    for (std::uint32_t j = 0; j < d_out; ++j) out.weight(i, j) = get();
  }
  if (has_bias) {
    out.bias = Vector(d_out);
    for (std::uint32_t j = 0; j < d_out; ++j) (*out.bias)(j) = get();
  }
  return out;
}

/// Applies the adapter to every row of an embedding set (output unit-norm).
inline EmbeddingSet apply_adapter(const AdapterParams& params, const EmbeddingSet& in) {
  EmbeddingSet out;
  out.ids = in.ids;
  out.matrix = adapter_forward(params, in.matrix);
  out.normalized = true;
  return out;
}

}  // namespace protsent
