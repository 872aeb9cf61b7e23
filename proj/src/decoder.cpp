#include "gebd/decoder.hpp"

#include <algorithm>
#include <cmath>

#include "gebd/errors.hpp"
#include "gebd/similarity.hpp"

namespace gebd {

void DecoderConfig::validate() const {
  if (c_decoder < 1) throw ConfigError("c_decoder must be >= 1");
  for (int w : stage_widths)
    if (w < 1) throw ConfigError("decoder stage widths must be >= 1");
  if (blocks_per_stage < 1) throw ConfigError("blocks_per_stage must be >= 1");
  if (stage_widths.back() != c_decoder)
    throw ConfigError("c_decoder must equal the last stage width");
}

TsmDecoder::TsmDecoder(std::string name, const DecoderConfig& cfg) : cfg_(cfg) {
  cfg.validate();
  stem_ = nn::Conv2d(name + ".stem", kNumStreams, cfg.stage_widths[0], 3);
  int cin = cfg.stage_widths[0];
  for (std::size_t s = 0; s < cfg.stage_widths.size(); ++s) {
    for (int b = 0; b < cfg.blocks_per_stage; ++b) {
      const int cout = cfg.stage_widths[s];
      blocks_.emplace_back(name + ".s" + std::to_string(s) + "b" +
                               std::to_string(b),
                           cin, cout);
      cin = cout;
    }
  }
}

void TsmDecoder::init(Rng& rng) {
  stem_.init(rng);
  for (nn::ResBlock2d& b : blocks_) b.init(rng);
}

void TsmDecoder::collect(nn::ParamList& out) {
  stem_.collect(out);
  for (nn::ResBlock2d& b : blocks_) b.collect(out);
}

Ten3 TsmDecoder::forward(const Ten3& stack, TsmDecoderCtx& ctx) const {
  if (stack.c != kNumStreams)
    throw ShapeError("decoder expects " + std::to_string(kNumStreams) +
                     " input channels, got " + std::to_string(stack.c));
  ctx.blocks.assign(blocks_.size(), nn::ResBlock2dCtx{});
  Ten3 h = stem_.forward(stack, ctx.stem);
  ctx.stem_pre = h;
  for (double& v : h.v) v = v > 0.0 ? v : 0.0;
  for (std::size_t i = 0; i < blocks_.size(); ++i)
    h = blocks_[i].forward(h, ctx.blocks[i]);
  return h;
}

Ten3 TsmDecoder::backward(const Ten3& dy, const TsmDecoderCtx& ctx) {
  Ten3 d = dy;
  for (std::size_t i = blocks_.size(); i-- > 0;)
    d = blocks_[i].backward(d, ctx.blocks[i]);
  for (std::size_t i = 0; i < d.v.size(); ++i)
    if (ctx.stem_pre.v[i] <= 0.0) d.v[i] = 0.0;
  return stem_.backward(d, ctx.stem);
}

Mat gather_diagonal(const Ten3& t) {
  if (t.h != t.w)
    throw ShapeError("gather_diagonal needs square planes, got " +
                     std::to_string(t.h) + "x" + std::to_string(t.w));
  Mat out(t.h, t.c);
  for (int k = 0; k < t.h; ++k)
    for (int c = 0; c < t.c; ++c) out.at(k, c) = t.at(c, k, k);
  return out;
}

Ten3 gather_diagonal_backward(const Mat& dout, const Ten3& like) {
  Ten3 d(like.c, like.h, like.w);
  for (int k = 0; k < like.h; ++k)
    for (int c = 0; c < like.c; ++c) d.at(c, k, k) = dout.at(k, c);
  return d;
}

namespace {

inline double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

void apply_logistic(Mat& m) {
  for (double& v : m.v) v = logistic(v);
}

}  // namespace

TsmHead::TsmHead(std::string name, int cin, int hidden)
    : c1_(name + ".c1", cin, hidden, 3), c2_(name + ".c2", hidden, kNumClasses, 1) {}

void TsmHead::init(Rng& rng) {
  c1_.init(rng);
  c2_.init(rng);
}

void TsmHead::collect(nn::ParamList& out) {
  c1_.collect(out);
  c2_.collect(out);
}

Mat TsmHead::forward(const Mat& diag, TsmHeadCtx& ctx) const {
  Mat h = c1_.forward(diag, ctx.c1);
  ctx.pre = h;
  for (double& v : h.v) v = v > 0.0 ? v : 0.0;
  Mat p = c2_.forward(h, ctx.c2);
  apply_logistic(p);
  ctx.probs = p;
  return p;
}

Mat TsmHead::backward(const Mat& dprobs, const TsmHeadCtx& ctx) {
  Mat dz = dprobs;
  for (std::size_t i = 0; i < dz.v.size(); ++i) {
    const double p = ctx.probs.v[i];
    dz.v[i] *= p * (1.0 - p);
  }
  Mat dh = c2_.backward(dz, ctx.c2);
  for (std::size_t i = 0; i < dh.v.size(); ++i)
    if (ctx.pre.v[i] <= 0.0) dh.v[i] = 0.0;
  return c1_.backward(dh, ctx.c1);
}

DirectHead::DirectHead(std::string name, int d_enc, int tf_layers, int tf_heads)
    : d_enc_(d_enc),
      tf_(name + ".tf", kNumStreams * d_enc, kNumStreams * d_enc, tf_layers,
          tf_heads, 2 * kNumStreams * d_enc),
      out_(name + ".out", kNumStreams * d_enc, kNumClasses) {}

void DirectHead::init(Rng& rng) {
  tf_.init(rng);
  out_.init(rng);
}

void DirectHead::collect(nn::ParamList& out) {
  tf_.collect(out);
  out_.collect(out);
}

Mat DirectHead::forward(const std::vector<Mat>& streams,
                        DirectHeadCtx& ctx) const {
  if (static_cast<int>(streams.size()) != kNumStreams)
    throw ShapeError("direct head expects 12 streams");
  const int L = streams[0].rows;
  Mat x(L, kNumStreams * d_enc_);
  for (int s = 0; s < kNumStreams; ++s) {
    const Mat& m = streams[static_cast<std::size_t>(s)];
    if (m.rows != L || m.cols != d_enc_)
      throw ShapeError("direct head stream shape mismatch");
    for (int t = 0; t < L; ++t)
      std::copy(m.row(t), m.row(t) + d_enc_, x.row(t) + s * d_enc_);
  }
  ctx.concat = x;
  Mat h = tf_.forward(x, ctx.tf);
  Mat p = out_.forward(h, ctx.out);
  apply_logistic(p);
  ctx.probs = p;
  return p;
}

std::vector<Mat> DirectHead::backward(const Mat& dprobs,
                                      const DirectHeadCtx& ctx) {
  Mat dz = dprobs;
  for (std::size_t i = 0; i < dz.v.size(); ++i) {
    const double p = ctx.probs.v[i];
    dz.v[i] *= p * (1.0 - p);
  }
  Mat dh = out_.backward(dz, ctx.out);
  Mat dx = tf_.backward(dh, ctx.tf);
  const int L = dx.rows;
  std::vector<Mat> dstreams;
  dstreams.reserve(kNumStreams);
  for (int s = 0; s < kNumStreams; ++s) {
    Mat d(L, d_enc_);
    for (int t = 0; t < L; ++t)
      std::copy(dx.row(t) + s * d_enc_, dx.row(t) + (s + 1) * d_enc_, d.row(t));
    dstreams.push_back(std::move(d));
  }
  return dstreams;
}

PassPredictions combine(const Mat& p_tsm, const Mat& p_direct,
                        const std::array<double, 3>& raw_alpha) {
  if (!p_tsm.same_shape(p_direct))
    throw ShapeError("combine: pass shapes differ");
  if (p_tsm.cols != kNumClasses)
    throw ShapeError("combine expects 3 probability columns");
  PassPredictions out;
  out.p_tsm = p_tsm;
  out.p_direct = p_direct;
  out.p_final = Mat(p_tsm.rows, p_tsm.cols);
  for (int c = 0; c < kNumClasses; ++c)
    out.alpha[static_cast<std::size_t>(c)] =
        logistic(raw_alpha[static_cast<std::size_t>(c)]);
  for (int t = 0; t < p_tsm.rows; ++t)
    for (int c = 0; c < kNumClasses; ++c) {
      const double a = out.alpha[static_cast<std::size_t>(c)];
      out.p_final.at(t, c) =
          a * p_tsm.at(t, c) + (1.0 - a) * p_direct.at(t, c);
    }
  return out;
}

void combine_backward(const PassPredictions& preds, const Mat& dfinal,
                      Mat& dtsm, Mat& ddirect,
                      std::array<double, 3>& draw_alpha) {
  for (int t = 0; t < dfinal.rows; ++t)
    for (int c = 0; c < kNumClasses; ++c) {
      const double a = preds.alpha[static_cast<std::size_t>(c)];
      const double g = dfinal.at(t, c);
      dtsm.at(t, c) += g * a;
      ddirect.at(t, c) += g * (1.0 - a);
      // d(alpha)/d(raw) = alpha*(1-alpha)
      draw_alpha[static_cast<std::size_t>(c)] +=
          g * (preds.p_tsm.at(t, c) - preds.p_direct.at(t, c)) * a * (1.0 - a);
    }
}

namespace {

double weight_of(const LossWeights& w, int c) {
  switch (c) {
    case 0: return w.action;
    case 1: return w.shot;
    case 2: return w.whole;
  }
  throw ConfigError("bad class index");
}

std::array<std::vector<double>, 3> to_targets(const LabelSeries& labels) {
  std::array<std::vector<double>, 3> t;
  for (int c = 0; c < kNumClasses; ++c) {
    const std::vector<uint8_t>& y = labels.y[static_cast<std::size_t>(c)];
    t[static_cast<std::size_t>(c)].assign(y.begin(), y.end());
  }
  return t;
}

}  // namespace

double total_loss_soft(const PassPredictions& preds,
                       const std::array<std::vector<double>, 3>& targets,
                       double l_contra, const LossWeights& w) {
  const int L = preds.p_final.rows;
  for (const std::vector<double>& t : targets)
    if (static_cast<int>(t.size()) != L)
      throw ShapeError("loss targets length mismatch");
  double loss = w.lambda_contra * l_contra;
  for (int c = 0; c < kNumClasses; ++c) {
    const double wc = weight_of(w, c);
    if (wc == 0.0) continue;
    double bce = 0.0;
    for (int t = 0; t < L; ++t) {
      const double y = targets[static_cast<std::size_t>(c)][static_cast<std::size_t>(t)];
      const double p =
          std::clamp(preds.p_final.at(t, c), kBceEps, 1.0 - kBceEps);
      bce -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
    }
    loss += wc * bce / L;
  }
  return loss;
}

Mat total_loss_soft_grad(const PassPredictions& preds,
                         const std::array<std::vector<double>, 3>& targets,
                         const LossWeights& w) {
  const int L = preds.p_final.rows;
  for (const std::vector<double>& t : targets)
    if (static_cast<int>(t.size()) != L)
      throw ShapeError("loss targets length mismatch");
  Mat g(L, kNumClasses);
  for (int c = 0; c < kNumClasses; ++c) {
    const double wc = weight_of(w, c);
    if (wc == 0.0) continue;
    for (int t = 0; t < L; ++t) {
      const double p_raw = preds.p_final.at(t, c);
      // The clamp is part of the loss definition: outside its range the
      // derivative with respect to p is exactly zero.
      if (p_raw < kBceEps || p_raw > 1.0 - kBceEps) continue;
      const double y = targets[static_cast<std::size_t>(c)][static_cast<std::size_t>(t)];
      g.at(t, c) = wc * (p_raw - y) / (p_raw * (1.0 - p_raw)) / L;
    }
  }
  return g;
}

double total_loss(const PassPredictions& preds, const LabelSeries& labels,
                  double l_contra, const LossWeights& w) {
  return total_loss_soft(preds, to_targets(labels), l_contra, w);
}

Mat total_loss_grad(const PassPredictions& preds, const LabelSeries& labels,
                    const LossWeights& w) {
  return total_loss_soft_grad(preds, to_targets(labels), w);
}

}  // namespace gebd
