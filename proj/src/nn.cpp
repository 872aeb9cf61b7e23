#include "gebd/nn.hpp"

#include <cmath>
#include <cstring>
#include <utility>

#include "gebd/errors.hpp"
#include "gebd/kernels.hpp"

namespace gebd::nn {

namespace {

Mat copy_cols(const Mat& src, int col0, int ncols) {
  Mat out(src.rows, ncols);
  for (int r = 0; r < src.rows; ++r)
    std::memcpy(out.row(r), src.row(r) + col0, ncols * sizeof(double));
  return out;
}

void add_into_cols(Mat& dst, const Mat& src, int col0) {
  for (int r = 0; r < src.rows; ++r) {
    double* d = dst.row(r) + col0;
    const double* s = src.row(r);
    for (int c = 0; c < src.cols; ++c) d[c] += s[c];
  }
}

void accumulate(std::vector<double>& dst, const std::vector<double>& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

void PTensor::resize(std::string n, std::vector<int> s) {
  name = std::move(n);
  shape = std::move(s);
  std::size_t total = 1;
  for (int d : shape) total *= static_cast<std::size_t>(d);
  v.assign(total, 0.0);
  g.assign(total, 0.0);
}

std::size_t PTensor::count() const { return v.size(); }

void PTensor::zero_grad() { std::fill(g.begin(), g.end(), 0.0); }

void init_uniform_fanin(PTensor& t, int fan_in, Rng& rng) {
  const double bound = std::sqrt(1.0 / fan_in);
  for (auto& x : t.v) x = rng.uniform(-bound, bound);
}

// --------------------------------------------------------------------------
// Dense
// --------------------------------------------------------------------------

Dense::Dense(std::string name, int din, int dout) : din_(din), dout_(dout) {
  w.resize(name + "/w", {dout, din});
  b.resize(name + "/b", {dout});
}

void Dense::init(Rng& rng) { init_uniform_fanin(w, din_, rng); }

void Dense::collect(ParamList& out) {
  out.push_back(&w);
  out.push_back(&b);
}

Mat Dense::forward(const Mat& x, DenseCtx& ctx) const {
  if (x.cols != din_) throw ShapeError("dense: input width mismatch");
  ctx.x = x;
  Mat y(x.rows, dout_);
  kernels::matmul_nt(x.v.data(), x.rows, din_, w.v.data(), dout_, y.v.data());
  for (int r = 0; r < y.rows; ++r) {
    double* yr = y.row(r);
    for (int c = 0; c < dout_; ++c) yr[c] += b.v[c];
  }
  return y;
}

Mat Dense::backward(const Mat& dy, const DenseCtx& ctx) {
  std::vector<double> dw(w.count());
  kernels::matmul_tn(dy.v.data(), dy.rows, dout_, ctx.x.v.data(), din_, dw.data());
  accumulate(w.g, dw);
  for (int r = 0; r < dy.rows; ++r) {
    const double* dr = dy.row(r);
    for (int c = 0; c < dout_; ++c) b.g[c] += dr[c];
  }
  Mat dx(dy.rows, din_);
  kernels::matmul_nn(dy.v.data(), dy.rows, dout_, w.v.data(), din_, dx.v.data());
  return dx;
}

// --------------------------------------------------------------------------
// Conv1d
// --------------------------------------------------------------------------

Conv1d::Conv1d(std::string name, int cin, int cout, int k)
    : cin_(cin), cout_(cout), k_(k) {
  w.resize(name + "/w", {cout, cin, k});
  b.resize(name + "/b", {cout});
}

void Conv1d::init(Rng& rng) { init_uniform_fanin(w, cin_ * k_, rng); }

void Conv1d::collect(ParamList& out) {
  out.push_back(&w);
  out.push_back(&b);
}

Mat Conv1d::forward(const Mat& x, Conv1dCtx& ctx) const {
  if (x.cols != cin_) throw ShapeError("conv1d: channel mismatch");
  ctx.x = x;
  Mat y(x.rows, cout_);
  kernels::conv1d(x.v.data(), x.rows, cin_, w.v.data(), cout_, k_, b.v.data(),
                  y.v.data());
  return y;
}

Mat Conv1d::backward(const Mat& dy, const Conv1dCtx& ctx) {
  kernels::conv1d_bwd_params(dy.v.data(), ctx.x.v.data(), dy.rows, cin_, cout_, k_,
                             w.g.data(), b.g.data());
  Mat dx(dy.rows, cin_);
  kernels::conv1d_bwd_input(dy.v.data(), dy.rows, cout_, w.v.data(), cin_, k_,
                            dx.v.data());
  return dx;
}

// --------------------------------------------------------------------------
// LayerNorm
// --------------------------------------------------------------------------

LayerNorm::LayerNorm(std::string name, int dim) : dim_(dim) {
  gamma.resize(name + "/gamma", {dim});
  beta.resize(name + "/beta", {dim});
  std::fill(gamma.v.begin(), gamma.v.end(), 1.0);
}

void LayerNorm::init(Rng&) {
  std::fill(gamma.v.begin(), gamma.v.end(), 1.0);
  std::fill(beta.v.begin(), beta.v.end(), 0.0);
}

void LayerNorm::collect(ParamList& out) {
  out.push_back(&gamma);
  out.push_back(&beta);
}

Mat LayerNorm::forward(const Mat& x, LayerNormCtx& ctx) const {
  if (x.cols != dim_) throw ShapeError("layernorm: width mismatch");
  Mat y(x.rows, dim_);
  ctx.xhat = Mat(x.rows, dim_);
  ctx.rstd.assign(x.rows, 0.0);
  for (int r = 0; r < x.rows; ++r) {
    const double* xr = x.row(r);
    double mu = 0.0;
    for (int c = 0; c < dim_; ++c) mu += xr[c];
    mu /= dim_;
    double var = 0.0;
    for (int c = 0; c < dim_; ++c) {
      const double d = xr[c] - mu;
      var += d * d;
    }
    var /= dim_;
    const double rstd = 1.0 / std::sqrt(var + kEps);
    ctx.rstd[r] = rstd;
    double* hr = ctx.xhat.row(r);
    double* yr = y.row(r);
    for (int c = 0; c < dim_; ++c) {
      hr[c] = (xr[c] - mu) * rstd;
      yr[c] = gamma.v[c] * hr[c] + beta.v[c];
    }
  }
  return y;
}

Mat LayerNorm::backward(const Mat& dy, const LayerNormCtx& ctx) {
  Mat dx(dy.rows, dim_);
  for (int r = 0; r < dy.rows; ++r) {
    const double* dr = dy.row(r);
    const double* hr = ctx.xhat.row(r);
    double m1 = 0.0, m2 = 0.0;
    for (int c = 0; c < dim_; ++c) {
      const double dh = dr[c] * gamma.v[c];
      m1 += dh;
      m2 += dh * hr[c];
      gamma.g[c] += dr[c] * hr[c];
      beta.g[c] += dr[c];
    }
    m1 /= dim_;
    m2 /= dim_;
    double* ox = dx.row(r);
    const double rstd = ctx.rstd[r];
    for (int c = 0; c < dim_; ++c) {
      const double dh = dr[c] * gamma.v[c];
      ox[c] = rstd * (dh - m1 - hr[c] * m2);
    }
  }
  return dx;
}

// --------------------------------------------------------------------------
// MultiHeadAttention
// --------------------------------------------------------------------------

MultiHeadAttention::MultiHeadAttention(std::string name, int d, int heads)
    : d_(d), heads_(heads), dh_(d / heads) {
  if (d % heads != 0) throw ConfigError("attention: width not divisible by heads");
  wq_ = Dense(name + "/wq", d, d);
  wk_ = Dense(name + "/wk", d, d);
  wv_ = Dense(name + "/wv", d, d);
  wo_ = Dense(name + "/wo", d, d);
}

void MultiHeadAttention::init(Rng& rng) {
  wq_.init(rng);
  wk_.init(rng);
  wv_.init(rng);
  wo_.init(rng);
}

void MultiHeadAttention::collect(ParamList& out) {
  wq_.collect(out);
  wk_.collect(out);
  wv_.collect(out);
  wo_.collect(out);
}

Mat MultiHeadAttention::forward(const Mat& x, AttentionCtx& ctx) const {
  const int L = x.rows;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh_));
  ctx.qs = wq_.forward(x, ctx.q);
  for (auto& q : ctx.qs.v) q *= scale;
  ctx.kf = wk_.forward(x, ctx.k);
  ctx.vf = wv_.forward(x, ctx.v);
  ctx.probs.assign(heads_, Mat());
  ctx.context = Mat(L, d_);
  for (int a = 0; a < heads_; ++a) {
    const Mat qa = copy_cols(ctx.qs, a * dh_, dh_);
    const Mat ka = copy_cols(ctx.kf, a * dh_, dh_);
    const Mat va = copy_cols(ctx.vf, a * dh_, dh_);
    Mat scores(L, L);
    kernels::matmul_nt(qa.v.data(), L, dh_, ka.v.data(), L, scores.v.data());
    Mat& probs = ctx.probs[a];
    probs = Mat(L, L);
    kernels::softmax_rows(scores.v.data(), L, L, probs.v.data());
    Mat ca(L, dh_);
    kernels::matmul_nn(probs.v.data(), L, L, va.v.data(), dh_, ca.v.data());
    for (int r = 0; r < L; ++r)
      std::memcpy(ctx.context.row(r) + a * dh_, ca.row(r), dh_ * sizeof(double));
  }
  return wo_.forward(ctx.context, ctx.o);
}

Mat MultiHeadAttention::backward(const Mat& dy, const AttentionCtx& ctx) {
  const int L = dy.rows;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh_));
  Mat dctx = wo_.backward(dy, ctx.o);
  Mat dqs(L, d_), dkf(L, d_), dvf(L, d_);
  for (int a = 0; a < heads_; ++a) {
    const Mat dca = copy_cols(dctx, a * dh_, dh_);
    const Mat qa = copy_cols(ctx.qs, a * dh_, dh_);
    const Mat ka = copy_cols(ctx.kf, a * dh_, dh_);
    const Mat va = copy_cols(ctx.vf, a * dh_, dh_);
    const Mat& probs = ctx.probs[a];

    Mat dprobs(L, L);
    kernels::matmul_nt(dca.v.data(), L, dh_, va.v.data(), L, dprobs.v.data());
    Mat dva(L, dh_);
    kernels::matmul_tn(probs.v.data(), L, L, dca.v.data(), dh_, dva.v.data());
    Mat dscores(L, L, 0.0);
    kernels::softmax_rows_bwd(probs.v.data(), dprobs.v.data(), L, L,
                              dscores.v.data());
    Mat dqa(L, dh_);
    kernels::matmul_nn(dscores.v.data(), L, L, ka.v.data(), dh_, dqa.v.data());
    Mat dka(L, dh_);
    kernels::matmul_tn(dscores.v.data(), L, L, qa.v.data(), dh_, dka.v.data());

    add_into_cols(dqs, dqa, a * dh_);
    add_into_cols(dkf, dka, a * dh_);
    add_into_cols(dvf, dva, a * dh_);
  }
  for (auto& g : dqs.v) g *= scale;  // undo the query scaling
  Mat dx = wq_.backward(dqs, ctx.q);
  const Mat dxk = wk_.backward(dkf, ctx.k);
  const Mat dxv = wv_.backward(dvf, ctx.v);
  accumulate(dx.v, dxk.v);
  accumulate(dx.v, dxv.v);
  return dx;
}

// --------------------------------------------------------------------------
// FeedForward
// --------------------------------------------------------------------------

FeedForward::FeedForward(std::string name, int d, int dff)
    : a_(name + "/a", d, dff), b_(name + "/b", dff, d) {}

void FeedForward::init(Rng& rng) {
  a_.init(rng);
  b_.init(rng);
}

void FeedForward::collect(ParamList& out) {
  a_.collect(out);
  b_.collect(out);
}

Mat FeedForward::forward(const Mat& x, FeedForwardCtx& ctx) const {
  ctx.pre = a_.forward(x, ctx.a);
  Mat h = ctx.pre;
  for (auto& e : h.v) e = e > 0.0 ? e : 0.0;
  return b_.forward(h, ctx.b);
}

Mat FeedForward::backward(const Mat& dy, const FeedForwardCtx& ctx) {
  Mat dh = b_.backward(dy, ctx.b);
  for (std::size_t i = 0; i < dh.v.size(); ++i)
    if (ctx.pre.v[i] <= 0.0) dh.v[i] = 0.0;
  return a_.backward(dh, ctx.a);
}

// --------------------------------------------------------------------------
// TransformerLayer / TransformerEncoder
// --------------------------------------------------------------------------

TransformerLayer::TransformerLayer(std::string name, int d, int heads, int dff)
    : ln1_(name + "/ln1", d),
      ln2_(name + "/ln2", d),
      att_(name + "/att", d, heads),
      ff_(name + "/ff", d, dff) {}

void TransformerLayer::init(Rng& rng) {
  ln1_.init(rng);
  att_.init(rng);
  ln2_.init(rng);
  ff_.init(rng);
}

void TransformerLayer::collect(ParamList& out) {
  ln1_.collect(out);
  att_.collect(out);
  ln2_.collect(out);
  ff_.collect(out);
}

Mat TransformerLayer::forward(const Mat& x, TransformerLayerCtx& ctx) const {
  const Mat u = ln1_.forward(x, ctx.ln1);
  Mat x1 = att_.forward(u, ctx.att);
  accumulate(x1.v, x.v);
  const Mat v = ln2_.forward(x1, ctx.ln2);
  Mat out = ff_.forward(v, ctx.ff);
  accumulate(out.v, x1.v);
  return out;
}

Mat TransformerLayer::backward(const Mat& dy, const TransformerLayerCtx& ctx) {
  const Mat dv = ff_.backward(dy, ctx.ff);
  Mat dx1 = ln2_.backward(dv, ctx.ln2);
  accumulate(dx1.v, dy.v);
  const Mat du = att_.backward(dx1, ctx.att);
  Mat dx = ln1_.backward(du, ctx.ln1);
  accumulate(dx.v, dx1.v);
  return dx;
}

Mat sinusoidal_positions(int L, int d) {
  Mat pe(L, d);
  for (int t = 0; t < L; ++t) {
    double* r = pe.row(t);
    for (int i = 0; i < d; i += 2) {
      const double omega = std::pow(10000.0, -static_cast<double>(i) / d);
      r[i] = std::sin(t * omega);
      if (i + 1 < d) r[i + 1] = std::cos(t * omega);
    }
  }
  return pe;
}

TransformerEncoder::TransformerEncoder(std::string name, int din, int d, int depth,
                                       int heads, int dff)
    : din_(din), d_(d), has_proj_(din != d), final_ln_(name + "/ln_out", d) {
  if (has_proj_) proj_ = Dense(name + "/proj", din, d);
  layers_.reserve(depth);
  for (int i = 0; i < depth; ++i)
    layers_.emplace_back(name + "/layer" + std::to_string(i), d, heads, dff);
}

void TransformerEncoder::init(Rng& rng) {
  if (has_proj_) proj_.init(rng);
  for (auto& l : layers_) l.init(rng);
  final_ln_.init(rng);
}

void TransformerEncoder::collect(ParamList& out) {
  if (has_proj_) proj_.collect(out);
  for (auto& l : layers_) l.collect(out);
  final_ln_.collect(out);
}

Mat TransformerEncoder::forward(const Mat& x, TransformerEncoderCtx& ctx) const {
  Mat z = has_proj_ ? proj_.forward(x, ctx.proj) : x;
  const Mat pe = sinusoidal_positions(z.rows, d_);
  accumulate(z.v, pe.v);
  ctx.layers.assign(layers_.size(), TransformerLayerCtx());
  for (std::size_t i = 0; i < layers_.size(); ++i)
    z = layers_[i].forward(z, ctx.layers[i]);
  return final_ln_.forward(z, ctx.final_ln);
}

Mat TransformerEncoder::backward(const Mat& dy, const TransformerEncoderCtx& ctx) {
  Mat dz = final_ln_.backward(dy, ctx.final_ln);
  for (std::size_t i = layers_.size(); i-- > 0;)
    dz = layers_[i].backward(dz, ctx.layers[i]);
  if (has_proj_) return proj_.backward(dz, ctx.proj);
  return dz;
}

// --------------------------------------------------------------------------
// Conv2d / ResBlock2d
// --------------------------------------------------------------------------

Conv2d::Conv2d(std::string name, int cin, int cout, int k)
    : cin_(cin), cout_(cout), k_(k) {
  w.resize(name + "/w", {cout, cin, k, k});
  b.resize(name + "/b", {cout});
}

void Conv2d::init(Rng& rng) { init_uniform_fanin(w, cin_ * k_ * k_, rng); }

void Conv2d::collect(ParamList& out) {
  out.push_back(&w);
  out.push_back(&b);
}

Ten3 Conv2d::forward(const Ten3& x, Conv2dCtx& ctx) const {
  if (x.c != cin_) throw ShapeError("conv2d: channel mismatch");
  ctx.x = x;
  Ten3 y(cout_, x.h, x.w);
  kernels::conv2d(x.v.data(), cin_, x.h, x.w, w.v.data(), cout_, k_, b.v.data(),
                  y.v.data());
  return y;
}

Ten3 Conv2d::backward(const Ten3& dy, const Conv2dCtx& ctx) {
  kernels::conv2d_bwd_params(dy.v.data(), ctx.x.v.data(), cin_, dy.h, dy.w, cout_,
                             k_, w.g.data(), b.g.data());
  Ten3 dx(cin_, dy.h, dy.w);
  kernels::conv2d_bwd_input(dy.v.data(), cout_, dy.h, dy.w, w.v.data(), cin_, k_,
                            dx.v.data());
  return dx;
}

ResBlock2d::ResBlock2d(std::string name, int cin, int cout)
    : has_proj_(cin != cout),
      c1_(name + "/c1", cin, cout, 3),
      c2_(name + "/c2", cout, cout, 3) {
  if (has_proj_) proj_ = Conv2d(name + "/proj", cin, cout, 1);
}

void ResBlock2d::init(Rng& rng) {
  c1_.init(rng);
  c2_.init(rng);
  if (has_proj_) proj_.init(rng);
}

void ResBlock2d::collect(ParamList& out) {
  c1_.collect(out);
  c2_.collect(out);
  if (has_proj_) proj_.collect(out);
}

Ten3 ResBlock2d::forward(const Ten3& x, ResBlock2dCtx& ctx) const {
  ctx.pre1 = c1_.forward(x, ctx.c1);
  Ten3 h1 = ctx.pre1;
  for (auto& e : h1.v) e = e > 0.0 ? e : 0.0;
  Ten3 h2 = c2_.forward(h1, ctx.c2);
  const Ten3 skip = has_proj_ ? proj_.forward(x, ctx.proj) : x;
  ctx.pre2 = h2;
  accumulate(ctx.pre2.v, skip.v);
  Ten3 out = ctx.pre2;
  for (auto& e : out.v) e = e > 0.0 ? e : 0.0;
  return out;
}

Ten3 ResBlock2d::backward(const Ten3& dy, const ResBlock2dCtx& ctx) {
  Ten3 dsum = dy;
  for (std::size_t i = 0; i < dsum.v.size(); ++i)
    if (ctx.pre2.v[i] <= 0.0) dsum.v[i] = 0.0;
  Ten3 dh1 = c2_.backward(dsum, ctx.c2);
  for (std::size_t i = 0; i < dh1.v.size(); ++i)
    if (ctx.pre1.v[i] <= 0.0) dh1.v[i] = 0.0;
  Ten3 dx = c1_.backward(dh1, ctx.c1);
  if (has_proj_) {
    const Ten3 dskip = proj_.backward(dsum, ctx.proj);
    accumulate(dx.v, dskip.v);
  } else {
    accumulate(dx.v, dsum.v);
  }
  return dx;
}

// --------------------------------------------------------------------------
// AdamW
// --------------------------------------------------------------------------

AdamW::AdamW(ParamList params, AdamWConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto* p : params_) {
    m_.emplace_back(p->count(), 0.0);
    v_.emplace_back(p->count(), 0.0);
  }
}

void AdamW::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t pi = 0; pi < params_.size(); ++pi) {
    PTensor& p = *params_[pi];
    auto& m = m_[pi];
    auto& v = v_[pi];
    for (std::size_t i = 0; i < p.v.size(); ++i) {
      const double g = p.g[i];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p.v[i] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) +
                           cfg_.weight_decay * p.v[i]);
    }
  }
}

void AdamW::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

}  // namespace gebd::nn
