#pragma once

#include <string>
#include <vector>

#include "gebd/rng.hpp"
#include "gebd/tensor.hpp"

// Layer primitives with hand-written forward/backward passes. Layers own
// their parameters and gradient accumulators; per-call state lives in the
// caller-provided Ctx structs, so forward passes over distinct inputs are
// safe concurrently as long as parameters are not being updated.

namespace gebd::nn {

struct PTensor {
  std::string name;
  std::vector<int> shape;
  std::vector<double> v;
  std::vector<double> g;

  void resize(std::string n, std::vector<int> s);
  std::size_t count() const;
  void zero_grad();
};

using ParamList = std::vector<PTensor*>;

// Fan-in scaled uniform init, U(-sqrt(1/fan_in), +sqrt(1/fan_in)).
void init_uniform_fanin(PTensor& t, int fan_in, Rng& rng);

// ---------------------------------------------------------------------------

struct DenseCtx {
  Mat x;
};

class Dense {
 public:
  Dense() = default;
  Dense(std::string name, int din, int dout);
  void init(Rng& rng);
  void collect(ParamList& out);

  Mat forward(const Mat& x, DenseCtx& ctx) const;
  Mat backward(const Mat& dy, const DenseCtx& ctx);

  int din() const { return din_; }
  int dout() const { return dout_; }

  PTensor w;  // dout x din
  PTensor b;  // dout

 private:
  int din_ = 0, dout_ = 0;
};

struct Conv1dCtx {
  Mat x;
};

class Conv1d {
 public:
  Conv1d() = default;
  Conv1d(std::string name, int cin, int cout, int k);
  void init(Rng& rng);
  void collect(ParamList& out);

  Mat forward(const Mat& x, Conv1dCtx& ctx) const;
  Mat backward(const Mat& dy, const Conv1dCtx& ctx);

  int cin() const { return cin_; }
  int cout() const { return cout_; }
  int kernel() const { return k_; }

  PTensor w;  // cout x cin x k
  PTensor b;  // cout

 private:
  int cin_ = 0, cout_ = 0, k_ = 1;
};

struct LayerNormCtx {
  Mat xhat;
  std::vector<double> rstd;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(std::string name, int dim);
  void init(Rng& rng);
  void collect(ParamList& out);

  Mat forward(const Mat& x, LayerNormCtx& ctx) const;
  Mat backward(const Mat& dy, const LayerNormCtx& ctx);

  PTensor gamma, beta;

 private:
  int dim_ = 0;
  static constexpr double kEps = 1e-5;
};

struct AttentionCtx {
  DenseCtx q, k, v, o;
  Mat qs;                 // scaled query, L x d
  Mat kf, vf;             // key/value, L x d
  std::vector<Mat> probs; // per-head softmax, L x L
  Mat context;            // L x d
};

class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(std::string name, int d, int heads);
  void init(Rng& rng);
  void collect(ParamList& out);

  Mat forward(const Mat& x, AttentionCtx& ctx) const;
  Mat backward(const Mat& dy, const AttentionCtx& ctx);

 private:
  int d_ = 0, heads_ = 1, dh_ = 0;
  Dense wq_, wk_, wv_, wo_;
};

struct FeedForwardCtx {
  DenseCtx a, b;
  Mat pre;  // hidden pre-activation
};

class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(std::string name, int d, int dff);
  void init(Rng& rng);
  void collect(ParamList& out);

  Mat forward(const Mat& x, FeedForwardCtx& ctx) const;
  Mat backward(const Mat& dy, const FeedForwardCtx& ctx);

 private:
  Dense a_, b_;
};

struct TransformerLayerCtx {
  LayerNormCtx ln1, ln2;
  AttentionCtx att;
  FeedForwardCtx ff;
};

// Pre-LN encoder layer: x + MHA(LN(x)), then x + FFN(LN(x)).
class TransformerLayer {
 public:
  TransformerLayer() = default;
  TransformerLayer(std::string name, int d, int heads, int dff);
  void init(Rng& rng);
  void collect(ParamList& out);

  Mat forward(const Mat& x, TransformerLayerCtx& ctx) const;
  Mat backward(const Mat& dy, const TransformerLayerCtx& ctx);

 private:
  LayerNorm ln1_, ln2_;
  MultiHeadAttention att_;
  FeedForward ff_;
};

struct TransformerEncoderCtx {
  DenseCtx proj;
  std::vector<TransformerLayerCtx> layers;
  LayerNormCtx final_ln;
};

// Input projection (when din != d), sinusoidal positions, pre-LN stack,
// final LayerNorm.
class TransformerEncoder {
 public:
  TransformerEncoder() = default;
  TransformerEncoder(std::string name, int din, int d, int depth, int heads,
                     int dff);
  void init(Rng& rng);
  void collect(ParamList& out);

  Mat forward(const Mat& x, TransformerEncoderCtx& ctx) const;
  Mat backward(const Mat& dy, const TransformerEncoderCtx& ctx);

  int width() const { return d_; }

 private:
  int din_ = 0, d_ = 0;
  bool has_proj_ = false;
  Dense proj_;
  std::vector<TransformerLayer> layers_;
  LayerNorm final_ln_;
};

// pe[t][2i] = sin(t * 10000^(-2i/d)), pe[t][2i+1] = cos(...)
Mat sinusoidal_positions(int L, int d);

struct Conv2dCtx {
  Ten3 x;
};

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::string name, int cin, int cout, int k);
  void init(Rng& rng);
  void collect(ParamList& out);

  Ten3 forward(const Ten3& x, Conv2dCtx& ctx) const;
  Ten3 backward(const Ten3& dy, const Conv2dCtx& ctx);

  int cin() const { return cin_; }
  int cout() const { return cout_; }

  PTensor w;  // cout x cin x k x k
  PTensor b;  // cout

 private:
  int cin_ = 0, cout_ = 0, k_ = 3;
};

struct ResBlock2dCtx {
  Conv2dCtx c1, c2, proj;
  Ten3 pre1;  // conv1 output before ReLU
  Ten3 pre2;  // residual sum before final ReLU
};

// conv3x3 -> ReLU -> conv3x3, identity (or 1x1) skip, ReLU after the sum.
// Stride 1 everywhere; the spatial extent never changes.
class ResBlock2d {
 public:
  ResBlock2d() = default;
  ResBlock2d(std::string name, int cin, int cout);
  void init(Rng& rng);
  void collect(ParamList& out);

  Ten3 forward(const Ten3& x, ResBlock2dCtx& ctx) const;
  Ten3 backward(const Ten3& dy, const ResBlock2dCtx& ctx);

 private:
  bool has_proj_ = false;
  Conv2d c1_, c2_, proj_;
};

// ---------------------------------------------------------------------------

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

// Adam with decoupled weight decay. Fully deterministic.
class AdamW {
 public:
  AdamW(ParamList params, AdamWConfig cfg);

  void step();
  void zero_grad();

 private:
  ParamList params_;
  AdamWConfig cfg_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace gebd::nn
