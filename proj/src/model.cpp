// Copyright 2026 The isomt Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "isomt/model.hpp"

#include <cmath>
#include <limits>

#include "isomt/error.hpp"
#include "isomt/tokenizer.hpp"

namespace isomt {

void ModelConfig::validate() const {
  if (n_layers < 1 || d_model < 1 || n_heads < 1 || d_ff < 1 || max_len < 2) {
    throw UsageError("model dimensions must be positive");
  }
  if (d_model % n_heads != 0) {
    throw UsageError("d_model (" + std::to_string(d_model) +
                     ") must be divisible by n_heads (" +
                     std::to_string(n_heads) + ")");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) {
    throw UsageError("dropout must lie in [0, 1)");
  }
}

Example make_example(std::vector<int> src, std::vector<int> prefix,
                     const std::vector<int>& target) {
  if (prefix.empty() || prefix.front() != Vocabulary::kBos) {
    throw DataError("decoder prefix must start with <bos>");
  }
  if (target.empty() || target.back() != Vocabulary::kEos) {
    throw DataError("target must end with <eos>");
  }
  Example ex;
  ex.src = std::move(src);
  ex.dec_in = prefix;
  ex.dec_in.insert(ex.dec_in.end(), target.begin(), target.end() - 1);
  ex.dec_out.assign(prefix.begin() + 1, prefix.end());
  ex.dec_out.insert(ex.dec_out.end(), target.begin(), target.end());
  ex.loss_mask.assign(prefix.size() - 1, 0);
  ex.loss_mask.resize(ex.dec_out.size(), 1);
  return ex;
}

namespace {

constexpr double kNormEps = 1e-5;

template <typename T>
using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;

template <typename T>
Mat<T> positional_encoding(int len, int d) {
  Mat<T> pe(len, d);
  for (int pos = 0; pos < len; ++pos) {
    for (int i = 0; i < d; i += 2) {
      const double angle =
          pos / std::pow(10000.0, static_cast<double>(i) / d);
      pe(pos, i) = static_cast<T>(std::sin(angle));
      if (i + 1 < d) pe(pos, i + 1) = static_cast<T>(std::cos(angle));
    }
  }
  return pe;
}

// Segment of packed rows belonging to one sentence.
struct Segment {
  int offset;
  int length;
};

template <typename T>
void add_grad(Gradients<T>* g, int ix, const Mat<T>& delta) {
  if (g) (*g)[ix] += delta;
}

template <typename T>
Mat<T> linear(const ModelParams<T>& p, LinearIx ix, const Mat<T>& x) {
  Mat<T> y = x * p.tensors[ix.w];
  y.rowwise() += p.tensors[ix.b].row(0);
  return y;
}

template <typename T>
Mat<T> linear_backward(const ModelParams<T>& p, LinearIx ix, const Mat<T>& x,
                       const Mat<T>& dy, Gradients<T>* g) {
  if (g) {
    (*g)[ix.w].noalias() += x.transpose() * dy;
    (*g)[ix.b] += dy.colwise().sum();
  }
  return dy * p.tensors[ix.w].transpose();
}

template <typename T>
struct NormCache {
  Mat<T> xhat;
  Eigen::Matrix<T, Eigen::Dynamic, 1> rstd;
};

template <typename T>
Mat<T> layer_norm(const ModelParams<T>& p, NormIx ix, const Mat<T>& x,
                  NormCache<T>* cache) {
  const auto d = static_cast<T>(x.cols());
  Eigen::Matrix<T, Eigen::Dynamic, 1> mean = x.rowwise().sum() / d;
  Mat<T> centered = x.colwise() - mean;
  Eigen::Matrix<T, Eigen::Dynamic, 1> var =
      centered.array().square().rowwise().sum() / d;
  Eigen::Matrix<T, Eigen::Dynamic, 1> rstd =
      (var.array() + static_cast<T>(kNormEps)).rsqrt();
  Mat<T> xhat = centered.array().colwise() * rstd.array();
  Mat<T> y = xhat.array().rowwise() * p.tensors[ix.gain].row(0).array();
  y.rowwise() += p.tensors[ix.bias].row(0);
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->rstd = std::move(rstd);
  }
  return y;
}

template <typename T>
Mat<T> layer_norm_backward(const ModelParams<T>& p, NormIx ix,
                           const NormCache<T>& c, const Mat<T>& dy,
                           Gradients<T>* g) {
  if (g) {
    (*g)[ix.gain] += (dy.array() * c.xhat.array()).colwise().sum().matrix();
    (*g)[ix.bias] += dy.colwise().sum();
  }
  const auto d = static_cast<T>(dy.cols());
  Mat<T> dxhat = dy.array().rowwise() * p.tensors[ix.gain].row(0).array();
  Eigen::Matrix<T, Eigen::Dynamic, 1> m1 = dxhat.rowwise().sum() / d;
  Eigen::Matrix<T, Eigen::Dynamic, 1> m2 =
      (dxhat.array() * c.xhat.array()).rowwise().sum() / d;
  Mat<T> dx = dxhat;
  dx.colwise() -= m1;
  dx.array() -= c.xhat.array().colwise() * m2.array();
  dx.array().colwise() *= c.rstd.array();
  return dx;
}

// tanh approximation of GELU and its derivative.
template <typename T>
T gelu(T x) {
  constexpr T c = static_cast<T>(0.7978845608028654);
  const T u = c * (x + static_cast<T>(0.044715) * x * x * x);
  return static_cast<T>(0.5) * x * (static_cast<T>(1) + std::tanh(u));
}

template <typename T>
T gelu_grad(T x) {
  constexpr T c = static_cast<T>(0.7978845608028654);
  const T u = c * (x + static_cast<T>(0.044715) * x * x * x);
  const T t = std::tanh(u);
  const T du = c * (static_cast<T>(1) + static_cast<T>(3 * 0.044715) * x * x);
  return static_cast<T>(0.5) * (static_cast<T>(1) + t) +
         static_cast<T>(0.5) * x * (static_cast<T>(1) - t * t) * du;
}

template <typename T>
struct FeedForwardCache {
  Mat<T> x, pre, act;
};

template <typename T>
Mat<T> feed_forward(const ModelParams<T>& p, FeedForwardIx ix, const Mat<T>& x,
                    FeedForwardCache<T>* cache) {
  Mat<T> pre = linear(p, ix.in, x);
  Mat<T> act = pre.unaryExpr([](T v) { return gelu(v); });
  Mat<T> y = linear(p, ix.out, act);
  if (cache) {
    cache->x = x;
    cache->pre = std::move(pre);
    cache->act = std::move(act);
  }
  return y;
}

template <typename T>
Mat<T> feed_forward_backward(const ModelParams<T>& p, FeedForwardIx ix,
                             const FeedForwardCache<T>& c, const Mat<T>& dy,
                             Gradients<T>* g) {
  Mat<T> dact = linear_backward(p, ix.out, c.act, dy, g);
  Mat<T> dpre =
      dact.array() * c.pre.unaryExpr([](T v) { return gelu_grad(v); }).array();
  return linear_backward(p, ix.in, c.x, dpre, g);
}

template <typename T>
void softmax_rows_inplace(Mat<T>& s) {
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const T m = s.row(i).maxCoeff();
    s.row(i) = (s.row(i).array() - m).exp();
    s.row(i) /= s.row(i).sum();
  }
}

template <typename T>
struct AttentionCache {
  Mat<T> xq, xkv, q, k, v, ctx;
  std::vector<Mat<T>> probs;  // [segment * heads + head]
};

template <typename T>
Mat<T> attention(const ModelParams<T>& p, AttentionIx ix, const Mat<T>& xq,
                 const Mat<T>& xkv, std::span<const Segment> qseg,
                 std::span<const Segment> kseg, bool causal,
                 AttentionCache<T>* cache) {
  const int d = p.config.d_model;
  const int heads = p.config.n_heads;
  const int dh = d / heads;
  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
  Mat<T> q = linear(p, ix.q, xq);
  Mat<T> k = linear(p, ix.k, xkv);
  Mat<T> v = linear(p, ix.v, xkv);
  Mat<T> ctx = Mat<T>::Zero(xq.rows(), d);
  if (cache) cache->probs.resize(qseg.size() * heads);
  for (std::size_t s = 0; s < qseg.size(); ++s) {
    const auto [qo, ql] = qseg[s];
    const auto [ko, kl] = kseg[s];
    for (int h = 0; h < heads; ++h) {
      Mat<T> scores = q.block(qo, h * dh, ql, dh) *
                      k.block(ko, h * dh, kl, dh).transpose() * scale;
      if (causal) {
        for (int i = 0; i < ql; ++i) {
          for (int j = i + 1; j < kl; ++j) {
            scores(i, j) = -std::numeric_limits<T>::infinity();
          }
        }
      }
      softmax_rows_inplace(scores);
      ctx.block(qo, h * dh, ql, dh).noalias() =
          scores * v.block(ko, h * dh, kl, dh);
      if (cache) cache->probs[s * heads + h] = std::move(scores);
    }
  }
  Mat<T> out = linear(p, ix.o, ctx);
  if (cache) {
    cache->xq = xq;
    cache->xkv = xkv;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->ctx = std::move(ctx);
  }
  return out;
}

// Returns {dxq, dxkv}.
template <typename T>
std::pair<Mat<T>, Mat<T>> attention_backward(const ModelParams<T>& p,
                                             AttentionIx ix,
                                             const AttentionCache<T>& c,
                                             std::span<const Segment> qseg,
                                             std::span<const Segment> kseg,
                                             const Mat<T>& dout,
                                             Gradients<T>* g) {
  const int d = p.config.d_model;
  const int heads = p.config.n_heads;
  const int dh = d / heads;
  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
  Mat<T> dctx = linear_backward(p, ix.o, c.ctx, dout, g);
  Mat<T> dq = Mat<T>::Zero(c.q.rows(), d);
  Mat<T> dk = Mat<T>::Zero(c.k.rows(), d);
  Mat<T> dv = Mat<T>::Zero(c.v.rows(), d);
  for (std::size_t s = 0; s < qseg.size(); ++s) {
    const auto [qo, ql] = qseg[s];
    const auto [ko, kl] = kseg[s];
    for (int h = 0; h < heads; ++h) {
      const Mat<T>& prob = c.probs[s * heads + h];
      auto dctx_blk = dctx.block(qo, h * dh, ql, dh);
      Mat<T> dprob = dctx_blk * c.v.block(ko, h * dh, kl, dh).transpose();
      dv.block(ko, h * dh, kl, dh).noalias() += prob.transpose() * dctx_blk;
      Eigen::Matrix<T, Eigen::Dynamic, 1> row_dot =
          (dprob.array() * prob.array()).rowwise().sum();
      Mat<T> dscores =
          (prob.array() * (dprob.colwise() - row_dot).array()) * scale;
      dq.block(qo, h * dh, ql, dh).noalias() +=
          dscores * c.k.block(ko, h * dh, kl, dh);
      dk.block(ko, h * dh, kl, dh).noalias() +=
          dscores.transpose() * c.q.block(qo, h * dh, ql, dh);
    }
  }
  Mat<T> dxq = linear_backward(p, ix.q, c.xq, dq, g);
  Mat<T> dxkv = linear_backward(p, ix.k, c.xkv, dk, g);
  dxkv += linear_backward(p, ix.v, c.xkv, dv, g);
  return {std::move(dxq), std::move(dxkv)};
}

// Inverted dropout; an empty mask means identity.
template <typename T>
void dropout_forward(Mat<T>& x, double rate, std::mt19937_64* rng,
                     Mat<T>* mask) {
  if (rate <= 0.0) return;
  if (!rng) throw UsageError("dropout requires a random generator");
  std::bernoulli_distribution keep(1.0 - rate);
  const T scale = static_cast<T>(1.0 / (1.0 - rate));
  Mat<T> m(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = keep(*rng) ? scale : static_cast<T>(0);
  }
  x.array() *= m.array();
  if (mask) *mask = std::move(m);
}

template <typename T>
void dropout_backward(Mat<T>& dx, const Mat<T>& mask) {
  if (mask.size() == 0) return;
  dx.array() *= mask.array();
}

template <typename T>
struct EncoderLayerCache {
  NormCache<T> ln_attn;
  AttentionCache<T> attn;
  Mat<T> drop_attn;
  NormCache<T> ln_ff;
  FeedForwardCache<T> ff;
  Mat<T> drop_ff;
};

template <typename T>
struct DecoderLayerCache {
  NormCache<T> ln_self;
  AttentionCache<T> self_attn;
  Mat<T> drop_self;
  NormCache<T> ln_cross;
  AttentionCache<T> cross_attn;
  Mat<T> drop_cross;
  NormCache<T> ln_ff;
  FeedForwardCache<T> ff;
  Mat<T> drop_ff;
};

struct Packed {
  std::vector<int> ids;
  std::vector<int> positions;
  std::vector<Segment> segments;
};

template <typename Seqs>
Packed pack(const Seqs& seqs) {
  Packed p;
  for (const auto& s : seqs) {
    p.segments.push_back({static_cast<int>(p.ids.size()),
                          static_cast<int>(s.size())});
    for (std::size_t i = 0; i < s.size(); ++i) {
      p.ids.push_back(s[i]);
      p.positions.push_back(static_cast<int>(i));
    }
  }
  return p;
}

template <typename T>
Mat<T> embed(const ModelParams<T>& p, const Packed& packed, const Mat<T>& pe) {
  const int d = p.config.d_model;
  const T scale = static_cast<T>(std::sqrt(static_cast<double>(d)));
  const auto& table = p.tensors[p.embedding];
  Mat<T> x(packed.ids.size(), d);
  for (std::size_t i = 0; i < packed.ids.size(); ++i) {
    x.row(i) = table.row(packed.ids[i]) * scale + pe.row(packed.positions[i]);
  }
  return x;
}

template <typename T>
void embed_backward(const ModelParams<T>& p, const Packed& packed,
                    const Mat<T>& dx, Gradients<T>* g) {
  if (!g) return;
  const T scale = static_cast<T>(std::sqrt(static_cast<double>(p.config.d_model)));
  auto& dtable = (*g)[p.embedding];
  for (std::size_t i = 0; i < packed.ids.size(); ++i) {
    dtable.row(packed.ids[i]) += dx.row(i) * scale;
  }
}

template <typename T>
void check_ids(const ModelParams<T>& p, std::span<const int> ids,
               const char* what) {
  if (static_cast<int>(ids.size()) > p.config.max_len) {
    throw SequenceLengthError(std::string(what) + " length " +
                              std::to_string(ids.size()) +
                              " exceeds max_len " +
                              std::to_string(p.config.max_len));
  }
  for (int t : ids) {
    if (t < 0 || t >= p.vocab_size) {
      throw DataError(std::string(what) + " token id " + std::to_string(t) +
                      " out of range");
    }
  }
}

// Full forward pass with caches, shared by training and scoring.
template <typename T>
class Pass {
 public:
  Pass(const ModelParams<T>& p, const ForwardOptions& opt) : p_(p), opt_(opt) {}

  void encode(const Packed& src, const Mat<T>& pe) {
    const double rate = opt_.dropout;
    src_ = &src;
    Mat<T> x = embed(p_, src, pe);
    dropout_forward(x, rate, opt_.rng, &drop_src_);
    enc_.resize(p_.encoder.size());
    for (std::size_t l = 0; l < p_.encoder.size(); ++l) {
      const auto& ix = p_.encoder[l];
      auto& c = enc_[l];
      Mat<T> a = layer_norm(p_, ix.ln_attn, x, &c.ln_attn);
      Mat<T> s = attention(p_, ix.self_attn, a, a, src.segments, src.segments,
                           false, &c.attn);
      dropout_forward(s, rate, opt_.rng, &c.drop_attn);
      x += s;
      Mat<T> b = layer_norm(p_, ix.ln_ff, x, &c.ln_ff);
      Mat<T> f = feed_forward(p_, ix.ff, b, &c.ff);
      dropout_forward(f, rate, opt_.rng, &c.drop_ff);
      x += f;
    }
    memory_ = layer_norm(p_, p_.encoder_norm, x, &enc_norm_);
  }

  // Returns the final decoder states (rows x d_model).
  const Mat<T>& decode(const Packed& dec, const Mat<T>& pe) {
    const double rate = opt_.dropout;
    dec_ = &dec;
    Mat<T> y = embed(p_, dec, pe);
    dropout_forward(y, rate, opt_.rng, &drop_dec_);
    dcache_.resize(p_.decoder.size());
    for (std::size_t l = 0; l < p_.decoder.size(); ++l) {
      const auto& ix = p_.decoder[l];
      auto& c = dcache_[l];
      Mat<T> a = layer_norm(p_, ix.ln_self, y, &c.ln_self);
      Mat<T> s = attention(p_, ix.self_attn, a, a, dec.segments, dec.segments,
                           true, &c.self_attn);
      dropout_forward(s, rate, opt_.rng, &c.drop_self);
      y += s;
      Mat<T> b = layer_norm(p_, ix.ln_cross, y, &c.ln_cross);
      Mat<T> x = attention(p_, ix.cross_attn, b, memory_, dec.segments,
                           src_->segments, false, &c.cross_attn);
      dropout_forward(x, rate, opt_.rng, &c.drop_cross);
      y += x;
      Mat<T> f0 = layer_norm(p_, ix.ln_ff, y, &c.ln_ff);
      Mat<T> f = feed_forward(p_, ix.ff, f0, &c.ff);
      dropout_forward(f, rate, opt_.rng, &c.drop_ff);
      y += f;
    }
    out_ = layer_norm(p_, p_.decoder_norm, y, &dec_norm_);
    return out_;
  }

  Mat<T> logits() const {
    Mat<T> z = out_ * p_.tensors[p_.embedding].transpose();
    z.rowwise() += p_.tensors[p_.output_bias].row(0);
    return z;
  }

  void backward(const Mat<T>& dlogits, Gradients<T>* g) {
    const auto& table = p_.tensors[p_.embedding];
    (*g)[p_.embedding].noalias() += dlogits.transpose() * out_;
    (*g)[p_.output_bias] += dlogits.colwise().sum();
    Mat<T> dy = dlogits * table;
    dy = layer_norm_backward(p_, p_.decoder_norm, dec_norm_, dy, g);
    Mat<T> dmemory = Mat<T>::Zero(memory_.rows(), memory_.cols());
    for (std::size_t l = p_.decoder.size(); l-- > 0;) {
      const auto& ix = p_.decoder[l];
      auto& c = dcache_[l];
      Mat<T> df = dy;
      dropout_backward(df, c.drop_ff);
      dy += layer_norm_backward(
          p_, ix.ln_ff, c.ln_ff, feed_forward_backward(p_, ix.ff, c.ff, df, g),
          g);
      Mat<T> dx = dy;
      dropout_backward(dx, c.drop_cross);
      auto [dq, dkv] = attention_backward(p_, ix.cross_attn, c.cross_attn,
                                          dec_->segments, src_->segments, dx, g);
      dmemory += dkv;
      dy += layer_norm_backward(p_, ix.ln_cross, c.ln_cross, dq, g);
      Mat<T> ds = dy;
      dropout_backward(ds, c.drop_self);
      auto [sq, skv] = attention_backward(p_, ix.self_attn, c.self_attn,
                                          dec_->segments, dec_->segments, ds, g);
      sq += skv;
      dy += layer_norm_backward(p_, ix.ln_self, c.ln_self, sq, g);
    }
    dropout_backward(dy, drop_dec_);
    embed_backward(p_, *dec_, dy, g);

    Mat<T> dx = layer_norm_backward(p_, p_.encoder_norm, enc_norm_, dmemory, g);
    for (std::size_t l = p_.encoder.size(); l-- > 0;) {
      const auto& ix = p_.encoder[l];
      auto& c = enc_[l];
      Mat<T> df = dx;
      dropout_backward(df, c.drop_ff);
      dx += layer_norm_backward(
          p_, ix.ln_ff, c.ln_ff, feed_forward_backward(p_, ix.ff, c.ff, df, g),
          g);
      Mat<T> ds = dx;
      dropout_backward(ds, c.drop_attn);
      auto [sq, skv] = attention_backward(p_, ix.self_attn, c.attn,
                                          src_->segments, src_->segments, ds, g);
      sq += skv;
      dx += layer_norm_backward(p_, ix.ln_attn, c.ln_attn, sq, g);
    }
    dropout_backward(dx, drop_src_);
    embed_backward(p_, *src_, dx, g);
  }

  const Mat<T>& memory() const { return memory_; }
  const std::vector<EncoderLayerCache<T>>& encoder_caches() const { return enc_; }

 private:
  const ModelParams<T>& p_;
  const ForwardOptions& opt_;
  const Packed* src_ = nullptr;
  const Packed* dec_ = nullptr;
  Mat<T> drop_src_, drop_dec_;
  std::vector<EncoderLayerCache<T>> enc_;
  std::vector<DecoderLayerCache<T>> dcache_;
  NormCache<T> enc_norm_, dec_norm_;
  Mat<T> memory_;
  Mat<T> out_;
};

template <typename T>
void log_softmax_rows_inplace(Mat<T>& z) {
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const T m = z.row(i).maxCoeff();
    const T lse = m + std::log((z.row(i).array() - m).exp().sum());
    z.row(i).array() -= lse;
  }
}

template <typename T>
T xavier_limit(Eigen::Index fan_in, Eigen::Index fan_out) {
  return static_cast<T>(std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)));
}

}  // namespace

template <typename T>
ModelParams<T> ModelParams<T>::zeros(const ModelConfig& config,
                                     int vocab_size) {
  config.validate();
  if (vocab_size < 5) throw UsageError("vocabulary too small");
  ModelParams<T> p;
  p.config = config;
  p.vocab_size = vocab_size;
  const int d = config.d_model;
  auto add = [&](const std::string& name, int rows, int cols, T fill) {
    p.names.push_back(name);
    p.tensors.push_back(Mat<T>::Constant(rows, cols, fill));
    return static_cast<int>(p.tensors.size() - 1);
  };
  auto lin = [&](const std::string& name, int in, int out) {
    return LinearIx{add(name + ".w", in, out, 0), add(name + ".b", 1, out, 0)};
  };
  auto norm = [&](const std::string& name) {
    return NormIx{add(name + ".gain", 1, d, 1), add(name + ".bias", 1, d, 0)};
  };
  auto attn = [&](const std::string& name) {
    return AttentionIx{lin(name + ".q", d, d), lin(name + ".k", d, d),
                       lin(name + ".v", d, d), lin(name + ".o", d, d)};
  };
  auto ff = [&](const std::string& name) {
    return FeedForwardIx{lin(name + ".in", d, config.d_ff),
                         lin(name + ".out", config.d_ff, d)};
  };
  p.embedding = add("embedding", vocab_size, d, 0);
  p.output_bias = add("output_bias", 1, vocab_size, 0);
  for (int l = 0; l < config.n_layers; ++l) {
    const std::string pre = "encoder." + std::to_string(l);
    EncoderLayerIx ix;
    ix.ln_attn = norm(pre + ".ln_attn");
    ix.self_attn = attn(pre + ".self_attn");
    ix.ln_ff = norm(pre + ".ln_ff");
    ix.ff = ff(pre + ".ff");
    p.encoder.push_back(ix);
  }
  p.encoder_norm = norm("encoder.norm");
  for (int l = 0; l < config.n_layers; ++l) {
    const std::string pre = "decoder." + std::to_string(l);
    DecoderLayerIx ix;
    ix.ln_self = norm(pre + ".ln_self");
    ix.self_attn = attn(pre + ".self_attn");
    ix.ln_cross = norm(pre + ".ln_cross");
    ix.cross_attn = attn(pre + ".cross_attn");
    ix.ln_ff = norm(pre + ".ln_ff");
    ix.ff = ff(pre + ".ff");
    p.decoder.push_back(ix);
  }
  p.decoder_norm = norm("decoder.norm");
  return p;
}

template <typename T>
ModelParams<T> ModelParams<T>::initialized(const ModelConfig& config,
                                           int vocab_size, std::uint64_t seed) {
  ModelParams<T> p = zeros(config, vocab_size);
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < p.tensors.size(); ++i) {
    const auto& name = p.names[i];
    auto& t = p.tensors[i];
    if (static_cast<int>(i) == p.embedding) {
      std::normal_distribution<double> dist(
          0.0, 1.0 / std::sqrt(static_cast<double>(config.d_model)));
      for (Eigen::Index k = 0; k < t.size(); ++k) {
        t.data()[k] = static_cast<T>(dist(rng));
      }
    } else if (name.size() > 2 && name.compare(name.size() - 2, 2, ".w") == 0) {
      std::uniform_real_distribution<double> dist(
          -xavier_limit<T>(t.rows(), t.cols()),
          xavier_limit<T>(t.rows(), t.cols()));
      for (Eigen::Index k = 0; k < t.size(); ++k) {
        t.data()[k] = static_cast<T>(dist(rng));
      }
    }
  }
  return p;
}

template <typename T>
template <typename U>
ModelParams<U> ModelParams<T>::cast() const {
  ModelParams<U> out;
  out.config = config;
  out.vocab_size = vocab_size;
  out.names = names;
  out.tensors.reserve(tensors.size());
  for (const auto& t : tensors) out.tensors.push_back(t.template cast<U>());
  out.embedding = embedding;
  out.output_bias = output_bias;
  out.encoder = encoder;
  out.encoder_norm = encoder_norm;
  out.decoder = decoder;
  out.decoder_norm = decoder_norm;
  return out;
}

template <typename T>
int ModelParams<T>::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return static_cast<int>(i);
  }
  return -1;
}

template <typename T>
std::size_t ModelParams<T>::num_parameters() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += static_cast<std::size_t>(t.size());
  return n;
}

template <typename T>
bool ModelParams<T>::all_finite() const {
  for (const auto& t : tensors) {
    if (!t.allFinite()) return false;
  }
  return true;
}

template <typename T>
Gradients<T> zeros_like(const ModelParams<T>& params) {
  Gradients<T> g;
  g.reserve(params.tensors.size());
  for (const auto& t : params.tensors) {
    g.push_back(Mat<T>::Zero(t.rows(), t.cols()));
  }
  return g;
}

template <typename T>
LossStats forward_backward(const ModelParams<T>& params,
                           std::span<const Example> batch, Gradients<T>* grads,
                           const ForwardOptions& options) {
  if (batch.empty()) throw DataError("empty batch");
  std::vector<std::span<const int>> srcs, decs;
  int max_len = 0;
  long masked = 0;
  for (const auto& ex : batch) {
    check_ids(params, ex.src, "source");
    check_ids(params, ex.dec_in, "target");
    if (ex.dec_in.size() != ex.dec_out.size() ||
        ex.loss_mask.size() != ex.dec_out.size() || ex.src.empty() ||
        ex.dec_in.empty()) {
      throw DataError("malformed example");
    }
    srcs.emplace_back(ex.src);
    decs.emplace_back(ex.dec_in);
    max_len = std::max<int>(max_len, std::max(ex.src.size(), ex.dec_in.size()));
    for (auto m : ex.loss_mask) masked += m;
  }
  if (masked == 0) throw DataError("batch has no scored positions");
  const Mat<T> pe = positional_encoding<T>(max_len, params.config.d_model);
  Packed src = pack(srcs);
  Packed dec = pack(decs);

  Pass<T> pass(params, options);
  pass.encode(src, pe);
  pass.decode(dec, pe);
  Mat<T> lp = pass.logits();
  log_softmax_rows_inplace(lp);

  const int V = params.vocab_size;
  const double eps = options.label_smoothing;
  LossStats stats;
  stats.tokens = masked;
  Mat<T> dlogits;
  if (grads) dlogits = Mat<T>::Zero(lp.rows(), lp.cols());
  const T inv_tokens = static_cast<T>(1.0 / static_cast<double>(masked));
  std::size_t row = 0;
  for (const auto& ex : batch) {
    for (std::size_t k = 0; k < ex.dec_out.size(); ++k, ++row) {
      if (!ex.loss_mask[k]) continue;
      const int y = ex.dec_out[k];
      double loss = -static_cast<double>(lp(row, y));
      if (eps > 0.0) {
        loss = (1.0 - eps) * loss -
               eps / V * static_cast<double>(lp.row(row).sum());
      }
      stats.loss_sum += loss;
      Eigen::Index arg;
      lp.row(row).maxCoeff(&arg);
      if (arg == y) ++stats.correct;
      if (grads) {
        dlogits.row(row) = lp.row(row).array().exp();
        if (eps > 0.0) {
          dlogits.row(row).array() -= static_cast<T>(eps / V);
          dlogits(row, y) -= static_cast<T>(1.0 - eps);
        } else {
          dlogits(row, y) -= static_cast<T>(1);
        }
        dlogits.row(row) *= inv_tokens;
      }
    }
  }
  if (!std::isfinite(stats.loss_sum)) {
    throw NumericError("non-finite loss in forward pass");
  }
  if (grads) {
    Gradients<T> local = zeros_like(params);
    pass.backward(dlogits, &local);
    for (int f : options.frozen) local[f].setZero();
    for (std::size_t i = 0; i < local.size(); ++i) (*grads)[i] += local[i];
  }
  return stats;
}

template <typename T>
Mat<T> forward_logprobs(const ModelParams<T>& params, std::span<const int> src,
                        std::span<const int> dec_in) {
  check_ids(params, src, "source");
  check_ids(params, dec_in, "target");
  if (src.empty() || dec_in.empty()) throw DataError("empty sequence");
  const int max_len = static_cast<int>(std::max(src.size(), dec_in.size()));
  const Mat<T> pe = positional_encoding<T>(max_len, params.config.d_model);
  std::vector<std::span<const int>> s{src}, d{dec_in};
  Packed ps = pack(s), pd = pack(d);
  ForwardOptions opt;
  Pass<T> pass(params, opt);
  pass.encode(ps, pe);
  pass.decode(pd, pe);
  Mat<T> lp = pass.logits();
  log_softmax_rows_inplace(lp);
  return lp;
}

template <typename T>
double sequence_logprob(const ModelParams<T>& params, std::span<const int> src,
                        std::span<const int> target,
                        std::span<const int> prefix) {
  if (prefix.empty() || prefix.front() != Vocabulary::kBos) {
    throw DataError("decoder prefix must start with <bos>");
  }
  if (target.empty()) throw DataError("empty target");
  std::vector<int> dec_in(prefix.begin(), prefix.end());
  dec_in.insert(dec_in.end(), target.begin(), target.end() - 1);
  const Mat<T> lp = forward_logprobs(params, src, dec_in);
  double total = 0.0;
  const std::size_t first = prefix.size() - 1;
  for (std::size_t k = 0; k < target.size(); ++k) {
    total += static_cast<double>(lp(first + k, target[k]));
  }
  return total;
}

template <typename T>
std::vector<Mat<T>> encoder_attention_weights(const ModelParams<T>& params,
                                              std::span<const int> src) {
  check_ids(params, src, "source");
  const Mat<T> pe =
      positional_encoding<T>(static_cast<int>(src.size()), params.config.d_model);
  std::vector<std::span<const int>> s{src};
  Packed ps = pack(s);
  ForwardOptions opt;
  Pass<T> pass(params, opt);
  pass.encode(ps, pe);
  return pass.encoder_caches().front().attn.probs;
}

template <typename T>
IncrementalDecoder<T>::IncrementalDecoder(const ModelParams<T>& params,
                                          std::span<const int> src,
                                          int capacity)
    : params_(params), capacity_(capacity), src_len_(static_cast<int>(src.size())) {
  check_ids(params, src, "source");
  if (src.empty()) throw DataError("empty source");
  if (capacity < 1 || capacity > params.config.max_len) {
    throw SequenceLengthError("decoder capacity " + std::to_string(capacity) +
                              " outside [1, max_len=" +
                              std::to_string(params.config.max_len) + "]");
  }
  const Mat<T> pe = positional_encoding<T>(src_len_, params.config.d_model);
  std::vector<std::span<const int>> s{src};
  Packed ps = pack(s);
  ForwardOptions opt;
  Pass<T> pass(params, opt);
  pass.encode(ps, pe);
  for (const auto& ix : params.decoder) {
    cross_keys_.push_back(linear(params, ix.cross_attn.k, pass.memory()));
    cross_values_.push_back(linear(params, ix.cross_attn.v, pass.memory()));
  }
}

template <typename T>
typename IncrementalDecoder<T>::State IncrementalDecoder<T>::initial_state()
    const {
  State s;
  const int d = params_.config.d_model;
  for (std::size_t l = 0; l < params_.decoder.size(); ++l) {
    s.keys.push_back(Mat<T>::Zero(capacity_, d));
    s.values.push_back(Mat<T>::Zero(capacity_, d));
  }
  return s;
}

template <typename T>
void IncrementalDecoder<T>::copy_state(const State& from, State& to) const {
  if (to.keys.size() != from.keys.size()) to = initial_state();
  for (std::size_t l = 0; l < from.keys.size(); ++l) {
    to.keys[l].topRows(from.length) = from.keys[l].topRows(from.length);
    to.values[l].topRows(from.length) = from.values[l].topRows(from.length);
  }
  to.length = from.length;
}

template <typename T>
Mat<T> IncrementalDecoder<T>::step(std::span<State* const> states,
                                   std::span<const int> tokens) const {
  const auto& p = params_;
  const int d = p.config.d_model;
  const int heads = p.config.n_heads;
  const int dh = d / heads;
  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
  const int B = static_cast<int>(tokens.size());
  if (static_cast<int>(states.size()) != B) {
    throw DataError("state and token counts differ");
  }
  int max_pos = 0;
  for (const auto* s : states) {
    if (s->length >= capacity_) {
      throw SequenceLengthError("decoder state is full");
    }
    max_pos = std::max(max_pos, s->length);
  }
  const Mat<T> pe = positional_encoding<T>(max_pos + 1, d);
  const T emb_scale = static_cast<T>(std::sqrt(static_cast<double>(d)));
  Mat<T> y(B, d);
  for (int b = 0; b < B; ++b) {
    if (tokens[b] < 0 || tokens[b] >= p.vocab_size) {
      throw DataError("token id out of range");
    }
    y.row(b) = p.tensors[p.embedding].row(tokens[b]) * emb_scale +
               pe.row(states[b]->length);
  }
  for (std::size_t l = 0; l < p.decoder.size(); ++l) {
    const auto& ix = p.decoder[l];
    {
      Mat<T> a = layer_norm<T>(p, ix.ln_self, y, nullptr);
      Mat<T> q = linear(p, ix.self_attn.q, a);
      Mat<T> k = linear(p, ix.self_attn.k, a);
      Mat<T> v = linear(p, ix.self_attn.v, a);
      Mat<T> ctx(B, d);
      for (int b = 0; b < B; ++b) {
        State& st = *states[b];
        st.keys[l].row(st.length) = k.row(b);
        st.values[l].row(st.length) = v.row(b);
        const int len = st.length + 1;
        for (int h = 0; h < heads; ++h) {
          RowVec<T> scores = q.block(b, h * dh, 1, dh) *
                             st.keys[l].block(0, h * dh, len, dh).transpose() *
                             scale;
          const T m = scores.maxCoeff();
          scores = (scores.array() - m).exp();
          scores /= scores.sum();
          ctx.block(b, h * dh, 1, dh).noalias() =
              scores * st.values[l].block(0, h * dh, len, dh);
        }
      }
      y += linear(p, ix.self_attn.o, ctx);
    }
    {
      Mat<T> c = layer_norm<T>(p, ix.ln_cross, y, nullptr);
      Mat<T> q = linear(p, ix.cross_attn.q, c);
      Mat<T> ctx(B, d);
      for (int h = 0; h < heads; ++h) {
        Mat<T> scores = q.block(0, h * dh, B, dh) *
                        cross_keys_[l].block(0, h * dh, src_len_, dh).transpose() *
                        scale;
        softmax_rows_inplace(scores);
        ctx.block(0, h * dh, B, dh).noalias() =
            scores * cross_values_[l].block(0, h * dh, src_len_, dh);
      }
      y += linear(p, ix.cross_attn.o, ctx);
    }
    {
      Mat<T> f = layer_norm<T>(p, ix.ln_ff, y, nullptr);
      y += feed_forward<T>(p, ix.ff, f, nullptr);
    }
  }
  for (auto* s : states) ++s->length;
  Mat<T> out = layer_norm<T>(p, p.decoder_norm, y, nullptr);
  Mat<T> z = out * p.tensors[p.embedding].transpose();
  z.rowwise() += p.tensors[p.output_bias].row(0);
  log_softmax_rows_inplace(z);
  return z;
}

#define ISOMT_INSTANTIATE(T)                                                  \
  template struct ModelParams<T>;                                             \
  template Gradients<T> zeros_like(const ModelParams<T>&);                    \
  template LossStats forward_backward(const ModelParams<T>&,                  \
                                      std::span<const Example>, Gradients<T>*, \
                                      const ForwardOptions&);                 \
  template Mat<T> forward_logprobs(const ModelParams<T>&,                     \
                                   std::span<const int>,                      \
                                   std::span<const int>);                     \
  template double sequence_logprob(const ModelParams<T>&,                     \
                                   std::span<const int>,                      \
                                   std::span<const int>,                      \
                                   std::span<const int>);                     \
  template std::vector<Mat<T>> encoder_attention_weights(                     \
      const ModelParams<T>&, std::span<const int>);                           \
  template class IncrementalDecoder<T>;

ISOMT_INSTANTIATE(float)
ISOMT_INSTANTIATE(double)
#undef ISOMT_INSTANTIATE

template ModelParams<double> ModelParams<float>::cast<double>() const;
template ModelParams<float> ModelParams<double>::cast<float>() const;
template ModelParams<float> ModelParams<float>::cast<float>() const;
template ModelParams<double> ModelParams<double>::cast<double>() const;

}  // namespace isomt
